//! Over-the-air aggregation of local updates on the fading MAC.
//!
//! Each device packs its update into `d/2` complex symbols and pre-inverts
//! its channel on every subchannel whose gain clears the threshold, so the
//! PS receives `y_i = Σ_{m ∈ M_i} γ_m (Δθ_{m,i} + jΔθ_{m,d/2+i}) + z_i` and
//! normalizes by `γ̄ |M_i|`.

use crate::channel::{apply_mac, cdiv, draw_fading_ul, draw_noise, ChannelParams, ComplexVec};
use crate::downlink::{merge_truncated, split_padded};
use crate::error::{Error, Result};
use crate::rng::{Purpose, SeededRng};
use crate::ModelVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UplinkConfig {
    power: f64,
    threshold: f64,
    n_ul: usize,
}

impl UplinkConfig {
    pub fn new(power: f64, threshold: f64, n_ul: usize) -> Result<Self> {
        if !(power.is_finite() && power > 0.0) {
            return Err(Error::invalid("p_ul", format!("must be finite and > 0, got {power}")));
        }
        if !(threshold.is_finite() && threshold >= 0.0) {
            return Err(Error::invalid(
                "lambda_thr",
                format!("must be finite and >= 0, got {threshold}"),
            ));
        }
        if n_ul == 0 {
            return Err(Error::invalid("n_ul", "need at least one subchannel"));
        }
        Ok(Self { power, threshold, n_ul })
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn n_ul(&self) -> usize {
        self.n_ul
    }
}

/// A device's channel input for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoded {
    pub x: ComplexVec,
    /// Power scaling `γ_m`, sent to the PS as metadata; 0 when silent.
    pub gamma: f64,
    /// Whether each subchannel cleared the threshold.
    pub active: Vec<bool>,
}

/// Threshold-gated channel inversion with full-power scaling.
///
/// `x_i = (γ/h_i)·c_i` on subchannels with `|h_i| ≥ λ`, 0 elsewhere, where
/// `γ = sqrt(P / Σ_{active} |c_i|²/|h_i|²)` so that `‖x‖² = P`. A device with
/// no active subchannel or an all-zero active payload stays silent.
pub fn device_precode(delta: &[f64], h: &ComplexVec, cfg: &UplinkConfig) -> Result<Precoded> {
    let packed = split_padded(delta);
    Error::check_len("uplink fading", packed.len(), h.len())?;
    let lambda_sq = cfg.threshold * cfg.threshold;
    let active: Vec<bool> = (0..h.len())
        .map(|i| h.abs_sq(i) >= lambda_sq && h.abs_sq(i) > 0.0)
        .collect();
    let energy: f64 = (0..h.len())
        .filter(|&i| active[i])
        .map(|i| packed.abs_sq(i) / h.abs_sq(i))
        .sum();
    if energy == 0.0 {
        return Ok(Precoded {
            x: ComplexVec::zeros(h.len()),
            gamma: 0.0,
            active,
        });
    }
    let gamma = (cfg.power / energy).sqrt();
    let mut x = ComplexVec::zeros(h.len());
    for i in (0..h.len()).filter(|&i| active[i]) {
        let (r, c) = cdiv(packed.get(i), h.get(i));
        x.set(i, (gamma * r, gamma * c));
    }
    Ok(Precoded { x, gamma, active })
}

/// PS estimate of the update, of length `2·len(y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub delta_hat: ModelVector,
    pub gamma_bar: f64,
    /// Every device was silent; the update is all zeros.
    pub silent: bool,
}

/// `Δθ̂_i = Re{y_i}/(γ̄|M_i|)`, `Δθ̂_{d/2+i} = Im{y_i}/(γ̄|M_i|)`, zero where
/// `|M_i| = 0`. `γ̄` averages over all `M` devices, silent ones included.
pub fn ps_decode(y: &ComplexVec, gammas: &[f64], active_counts: &[usize]) -> Result<Decoded> {
    if gammas.is_empty() {
        return Err(Error::Empty("device gammas"));
    }
    Error::check_len("active counts", y.len(), active_counts.len())?;
    let gamma_bar = gammas.iter().sum::<f64>() / gammas.len() as f64;
    let mut out = ComplexVec::zeros(y.len());
    let silent = gamma_bar == 0.0;
    if !silent {
        for (i, &count) in active_counts.iter().enumerate() {
            if count > 0 {
                let scale = gamma_bar * count as f64;
                let (r, c) = y.get(i);
                out.set(i, (r / scale, c / scale));
            }
        }
    }
    Ok(Decoded {
        delta_hat: merge_truncated(&out, 2 * y.len()),
        gamma_bar,
        silent,
    })
}

/// Uplink fading of every device plus the PS noise for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct UplinkDraw {
    pub fading: Vec<ComplexVec>,
    pub noise: ComplexVec,
}

impl UplinkDraw {
    pub fn sample(params: &ChannelParams, symbols: usize, devices: usize, seed: u64, round: u64) -> Self {
        let fading = (0..devices)
            .map(|m| {
                draw_fading_ul(
                    params,
                    symbols,
                    &mut SeededRng::stream(seed, Purpose::UplinkFading, round, m as u64),
                )
            })
            .collect();
        let noise = draw_noise(symbols, &mut SeededRng::stream(seed, Purpose::UplinkNoise, round, 0));
        Self { fading, noise }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UplinkRoundResult {
    pub delta_hat: ModelVector,
    pub gammas: Vec<f64>,
    pub gamma_bar: f64,
    /// `|M_i|` per complex symbol.
    pub active_counts: Vec<usize>,
    pub slots: usize,
    pub silent: bool,
}

impl UplinkRoundResult {
    /// Fraction of (device, subchannel) pairs that cleared the threshold.
    pub fn active_fraction(&self) -> f64 {
        let total = self.gammas.len() * self.active_counts.len();
        self.active_counts.iter().sum::<usize>() as f64 / total as f64
    }
}

/// Precoding at every device, MAC superposition slot by slot
/// (`⌈(d/2)/n_ul⌉` slots), then decoding at the PS.
pub fn aggregate_round(deltas: &[ModelVector], draw: &UplinkDraw, cfg: &UplinkConfig) -> Result<UplinkRoundResult> {
    if deltas.is_empty() {
        return Err(Error::Empty("local updates"));
    }
    Error::check_len("uplink fading per device", deltas.len(), draw.fading.len())?;
    let d = deltas[0].len();
    for delta in deltas {
        Error::check_len("local update", d, delta.len())?;
    }
    let symbols = split_padded(&deltas[0]).len();
    Error::check_len("uplink noise", symbols, draw.noise.len())?;

    let precoded = deltas
        .iter()
        .zip(&draw.fading)
        .map(|(delta, h)| device_precode(delta, h, cfg))
        .collect::<Result<Vec<_>>>()?;

    let mut y = ComplexVec::zeros(0);
    let mut slots = 0;
    let mut start = 0;
    while start < symbols {
        let end = (start + cfg.n_ul).min(symbols);
        let xs: Vec<ComplexVec> = precoded.iter().map(|p| p.x.slice(start, end)).collect();
        let hs: Vec<ComplexVec> = draw.fading.iter().map(|h| h.slice(start, end)).collect();
        y.extend(&apply_mac(&xs, &hs, &draw.noise.slice(start, end))?);
        slots += 1;
        start = end;
    }

    let active_counts: Vec<usize> = (0..symbols)
        .map(|i| precoded.iter().filter(|p| p.gamma > 0.0 && p.active[i]).count())
        .collect();
    let gammas: Vec<f64> = precoded.iter().map(|p| p.gamma).collect();
    let decoded = ps_decode(&y, &gammas, &active_counts)?;
    let mut delta_hat = decoded.delta_hat;
    delta_hat.truncate(d);
    Ok(UplinkRoundResult {
        delta_hat,
        gammas,
        gamma_bar: decoded.gamma_bar,
        active_counts,
        slots,
        silent: decoded.silent,
    })
}

/// Ideal uplink: the weighted average `Σ_m (B_m/B) Δθ_m`.
pub fn aggregate_error_free(deltas: &[ModelVector], weights: &[f64]) -> Result<ModelVector> {
    if deltas.is_empty() {
        return Err(Error::Empty("local updates"));
    }
    Error::check_len("weights", deltas.len(), weights.len())?;
    let total: f64 = weights.iter().sum();
    if total.is_nan() || total <= 0.0 || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::invalid("weights", "must be nonnegative with a positive sum"));
    }
    let d = deltas[0].len();
    let mut out = vec![0.0; d];
    for (delta, &w) in deltas.iter().zip(weights) {
        Error::check_len("local update", d, delta.len())?;
        for (o, v) in out.iter_mut().zip(delta) {
            *o += (w / total) * v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn cfg(power: f64, threshold: f64, n_ul: usize) -> UplinkConfig {
        UplinkConfig::new(power, threshold, n_ul).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(UplinkConfig::new(0.0, 1e-4, 2).is_err());
        assert!(UplinkConfig::new(1.0, -1.0, 2).is_err());
        assert!(UplinkConfig::new(1.0, f64::NAN, 2).is_err());
        assert!(UplinkConfig::new(1.0, 0.0, 0).is_err());
    }

    #[test]
    fn precode_gamma_by_substitution() {
        // packed = [1+1j, 1-1j] over real h = [1, 1]: Σ|c|²/|h|² = 4
        let delta = [1.0, 1.0, 1.0, -1.0];
        let h = ComplexVec::from_real(vec![1.0, 1.0]);
        let p = device_precode(&delta, &h, &cfg(16.0, 1e-4, 2)).unwrap();
        assert_eq!(p.gamma, 2.0);
        assert_eq!(p.x.norm_sq(), 16.0);
    }

    #[test]
    fn precode_full_truncation_is_silent() {
        let h = ComplexVec::new(vec![0.1, -0.2], vec![0.05, 0.1]).unwrap();
        let p = device_precode(&[1.0, 2.0, 3.0, 4.0], &h, &cfg(10.0, 5.0, 2)).unwrap();
        assert_eq!(p.gamma, 0.0);
        assert_eq!(p.x, ComplexVec::zeros(2));
        assert_eq!(p.active, vec![false, false]);
        let p = device_precode(&[0.0; 4], &h, &cfg(10.0, 0.0, 2)).unwrap();
        assert_eq!(p.gamma, 0.0);
    }

    #[test]
    fn precode_meets_power_budget() {
        let params = ChannelParams::new(1.0, 1.0, 8, 8).unwrap();
        let mut r = SeededRng::stream(4, Purpose::Test, 0, 0);
        for k in 0..200 {
            let d = 2 + 2 * (k % 20);
            let delta: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..2.0)).collect();
            let h = draw_fading_ul(&params, d / 2, &mut r);
            let threshold = r.random_range(0.0..1.2);
            let c = cfg(10.0, threshold, d / 2);
            let p = device_precode(&delta, &h, &c).unwrap();
            // independent recomputation of ‖x‖²
            let energy: f64 = (0..d / 2)
                .map(|i| {
                    let (xr, xi) = p.x.get(i);
                    xr * xr + xi * xi
                })
                .sum();
            if p.active.iter().any(|&a| a) {
                assert!((energy - 10.0).abs() < 1e-9, "{energy}");
            } else {
                assert_eq!(energy, 0.0);
            }
            for i in 0..d / 2 {
                assert_eq!(p.active[i], h.abs_sq(i).sqrt() >= threshold);
            }
        }
    }

    #[test]
    fn decode_examples() {
        // γ = 1 for both devices, noiseless, both active: y = 1 + 3
        let y = ComplexVec::new(vec![4.0], vec![0.0]).unwrap();
        let dec = ps_decode(&y, &[1.0, 1.0], &[2]).unwrap();
        assert_eq!(dec.delta_hat, vec![2.0, 0.0]);
        let dec = ps_decode(&y, &[1.0, 1.0], &[0]).unwrap();
        assert_eq!(dec.delta_hat, vec![0.0, 0.0]);
        let dec = ps_decode(&y, &[0.0, 0.0], &[2]).unwrap();
        assert!(dec.silent);
        assert_eq!(dec.delta_hat, vec![0.0, 0.0]);
        assert!(ps_decode(&y, &[], &[1]).is_err());
        assert!(ps_decode(&y, &[1.0], &[1, 1]).is_err());
    }

    fn noiseless_real_draw(devices: usize, symbols: usize, gain: f64) -> UplinkDraw {
        UplinkDraw {
            fading: vec![ComplexVec::from_real(vec![gain; symbols]); devices],
            noise: ComplexVec::zeros(symbols),
        }
    }

    #[test]
    fn uniform_gamma_noiseless_gives_mean() {
        // identical |h| and identical update norms give identical γ
        let base = [0.5, -1.0, 2.0, 0.25];
        let deltas: Vec<ModelVector> = vec![
            base.to_vec(),
            base.iter().rev().copied().collect(),
            base.iter().map(|v| -v).collect(),
        ];
        let out = aggregate_round(&deltas, &noiseless_real_draw(3, 2, 0.8), &cfg(5.0, 1e-4, 2)).unwrap();
        assert!(out.gammas.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-15));
        for i in 0..4 {
            let mean = deltas.iter().map(|d| d[i]).sum::<f64>() / 3.0;
            assert!((out.delta_hat[i] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn error_free_weighted_mean() {
        let deltas = vec![vec![1.0, 2.0], vec![3.0, 6.0]];
        assert_eq!(aggregate_error_free(&deltas, &[1.0, 1.0]).unwrap(), vec![2.0, 4.0]);
        assert_eq!(aggregate_error_free(&deltas, &[3.0, 1.0]).unwrap(), vec![1.5, 3.0]);
        assert!(aggregate_error_free(&deltas, &[1.0]).is_err());
        assert!(aggregate_error_free(&deltas, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn slotting_is_a_reindexing() {
        let params = ChannelParams::new(1.0, 1.0, 4, 4).unwrap();
        let d = 22;
        let mut r = SeededRng::stream(12, Purpose::Test, 0, 0);
        let deltas: Vec<ModelVector> = (0..4)
            .map(|_| (0..d).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        let draw = UplinkDraw::sample(&params, d / 2, 4, 12, 0);
        let full = aggregate_round(&deltas, &draw, &cfg(10.0, 0.3, d / 2)).unwrap();
        assert_eq!(full.slots, 1);
        for n_ul in [1, 3, 4, 10] {
            let slotted = aggregate_round(&deltas, &draw, &cfg(10.0, 0.3, n_ul)).unwrap();
            assert_eq!(slotted.slots, (d / 2).div_ceil(n_ul));
            assert_eq!(slotted.delta_hat, full.delta_hat);
        }
    }

    #[test]
    fn truncated_entries_decode_to_zero() {
        let draw = UplinkDraw {
            fading: vec![
                ComplexVec::from_real(vec![1.0, 1e-6, 0.5]),
                ComplexVec::from_real(vec![0.3, 1e-7, 2.0]),
            ],
            noise: ComplexVec::new(vec![0.1, 0.2, 0.3], vec![-0.1, 0.4, 0.0]).unwrap(),
        };
        let deltas = vec![vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![-1.0, 0.5, 2.0, 1.0, 1.0, 1.0]];
        let out = aggregate_round(&deltas, &draw, &cfg(10.0, 1e-4, 3)).unwrap();
        assert_eq!(out.active_counts, vec![2, 0, 2]);
        assert_eq!(out.delta_hat[1], 0.0);
        assert_eq!(out.delta_hat[4], 0.0);
        assert!((out.active_fraction() - 4.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn odd_dimension_round_trip() {
        let deltas = vec![vec![1.0, 2.0, 3.0], vec![3.0, 2.0, 1.0]];
        let out = aggregate_round(&deltas, &noiseless_real_draw(2, 2, 1.0), &cfg(1.0, 0.0, 2)).unwrap();
        assert_eq!(out.delta_hat.len(), 3);
    }

    proptest! {
        #[test]
        fn decoder_ignores_device_order(seed in any::<u64>(), m in 2usize..6) {
            let params = ChannelParams::new(1.0, 1.0, 4, 4).unwrap();
            let mut r = SeededRng::stream(seed, Purpose::Test, 0, 0);
            let deltas: Vec<ModelVector> = (0..m).map(|_| (0..8).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
            let draw = UplinkDraw::sample(&params, 4, m, seed, 0);
            let c = cfg(10.0, 0.2, 4);
            let fwd = aggregate_round(&deltas, &draw, &c).unwrap();
            let rev_draw = UplinkDraw {
                fading: draw.fading.iter().rev().cloned().collect(),
                noise: draw.noise.clone(),
            };
            let rev_deltas: Vec<ModelVector> = deltas.iter().rev().cloned().collect();
            let rev = aggregate_round(&rev_deltas, &rev_draw, &c).unwrap();
            for (a, b) in fwd.delta_hat.iter().zip(&rev.delta_hat) {
                prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            }
        }

        #[test]
        fn transmit_power_never_exceeds_budget(seed in any::<u64>(), thr in 0.0..2.0f64) {
            let params = ChannelParams::new(1.0, 1.0, 4, 4).unwrap();
            let mut r = SeededRng::stream(seed, Purpose::Test, 1, 0);
            let delta: Vec<f64> = (0..10).map(|_| r.random_range(-3.0..3.0)).collect();
            let h = draw_fading_ul(&params, 5, &mut r);
            let p = device_precode(&delta, &h, &cfg(4.0, thr, 5)).unwrap();
            prop_assert!(p.x.norm_sq() <= 4.0 * (1.0 + 1e-12));
        }
    }
}
