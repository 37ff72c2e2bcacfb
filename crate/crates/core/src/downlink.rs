//! PS → devices broadcast: digital (compressed drift at the common rate) and
//! analog (uncoded, descaled by each device's own channel inversion).

use rand::Rng;

use crate::capacity::{common_rate, GainProfile};
use crate::channel::{apply_broadcast, cdiv, draw_fading_dl, draw_noise, ChannelParams, ComplexVec};
use crate::compression::{compress, decompress, max_q_for_budget, CompressedUpdate};
use crate::error::{Error, Result};
use crate::rng::{Purpose, SeededRng};
use crate::ModelVector;

/// Floor on `‖θ‖²` when choosing the analog scaling factor.
pub const NORM_FLOOR: f64 = 1e-12;

/// Packs `[θ_re; θ_im]` into `θ_re + jθ_im`. `v` must have even length.
pub fn split_real_imag(v: &[f64]) -> Result<ComplexVec> {
    if !v.len().is_multiple_of(2) {
        return Err(Error::invalid(
            "vector",
            format!("odd length {} cannot be paired into complex symbols", v.len()),
        ));
    }
    let half = v.len() / 2;
    ComplexVec::new(v[..half].to_vec(), v[half..].to_vec())
}

/// Like [`split_real_imag`] but appends one zero to odd-length input.
pub fn split_padded(v: &[f64]) -> ComplexVec {
    if v.len().is_multiple_of(2) {
        split_real_imag(v).expect("even length")
    } else {
        let mut padded = v.to_vec();
        padded.push(0.0);
        split_real_imag(&padded).expect("even length")
    }
}

/// Inverse of [`split_real_imag`]: real parts first, then imaginary parts.
pub fn merge_real_imag(c: &ComplexVec) -> ModelVector {
    let mut out = Vec::with_capacity(2 * c.len());
    out.extend_from_slice(c.re());
    out.extend_from_slice(c.im());
    out
}

/// Inverse of [`split_padded`] for a model of dimension `d`.
pub fn merge_truncated(c: &ComplexVec, d: usize) -> ModelVector {
    let mut out = merge_real_imag(c);
    out.truncate(d);
    out
}

/// Number of complex symbols needed to carry a `d`-dimensional vector.
pub fn symbols_for(d: usize) -> usize {
    d.div_ceil(2)
}

/// PS-side state of the digital scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct PsState {
    /// Global model `θ(t)`.
    pub theta: ModelVector,
    /// Devices' common estimate `θ̂(t−1)`, mirrored at the PS.
    pub theta_hat: ModelVector,
    pub round: usize,
}

impl PsState {
    /// Starts with `θ̂(0) = θ(0)`.
    pub fn new(theta0: ModelVector) -> Self {
        Self {
            theta_hat: theta0.clone(),
            theta: theta0,
            round: 0,
        }
    }

    pub fn d(&self) -> usize {
        self.theta.len()
    }
}

/// Adds a decoded payload to an estimate in place.
pub fn apply_update(estimate: &mut [f64], payload: &CompressedUpdate) -> Result<()> {
    Error::check_len("estimate", payload.d(), estimate.len())?;
    for (e, u) in estimate.iter_mut().zip(decompress(payload)) {
        *e += u;
    }
    Ok(())
}

/// What happened on the digital downlink in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitalRound {
    /// `θ̂(t)`, identical at every device.
    pub estimate: ModelVector,
    pub capacity_bits: f64,
    /// `None` when even `q = 1` does not fit in the capacity.
    pub q: Option<u32>,
    pub bit_cost: Option<f64>,
    pub payload: Option<CompressedUpdate>,
}

/// Compresses `θ(t) − θ̂(t−1)` with `s` entries and the largest `q` that fits
/// the common rate of `profile`, and advances the shared estimate. When no
/// `q` fits, the round carries nothing and the estimate stays frozen.
pub fn digital_broadcast<R: Rng + ?Sized>(
    ps: &mut PsState,
    profile: &GainProfile,
    s: usize,
    ceil_bits: bool,
    rng: &mut R,
) -> Result<DigitalRound> {
    let d = ps.d();
    Error::check_len("theta_hat", d, ps.theta_hat.len())?;
    if s == 0 || s > d {
        return Err(Error::invalid("s", format!("sparsity must be in [1, {d}], got {s}")));
    }
    let capacity_bits = common_rate(profile).bits;
    let q = max_q_for_budget(d, s, capacity_bits, ceil_bits)?;
    let (bit_cost, payload) = match q {
        Some(q) => {
            let drift: Vec<f64> = ps.theta.iter().zip(&ps.theta_hat).map(|(a, b)| a - b).collect();
            let payload = compress(&drift, s, q, rng)?;
            apply_update(&mut ps.theta_hat, &payload)?;
            let cost = payload.bit_cost();
            let cost = if ceil_bits { cost.ceil() } else { cost };
            (Some(cost.bits()), Some(payload))
        }
        None => (None, None),
    };
    ps.round += 1;
    Ok(DigitalRound {
        estimate: ps.theta_hat.clone(),
        capacity_bits,
        q,
        bit_cost,
        payload,
    })
}

/// One device's downlink fading and noise for a round, one entry per
/// complex symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct DownlinkDraw {
    pub fading: ComplexVec,
    pub noise: ComplexVec,
}

impl DownlinkDraw {
    /// Fresh draws from the `(seed, round, device)` streams.
    pub fn sample(params: &ChannelParams, symbols: usize, seed: u64, round: u64, device: u64) -> Self {
        let fading = draw_fading_dl(
            params,
            symbols,
            &mut SeededRng::stream(seed, Purpose::DownlinkFading, round, device),
        );
        let noise = draw_noise(
            symbols,
            &mut SeededRng::stream(seed, Purpose::DownlinkNoise, round, device),
        );
        Self { fading, noise }
    }
}

/// A device's view of the global model.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceEstimate {
    pub theta_hat: ModelVector,
    /// `‖θ̂_m − θ‖²`
    pub mse: f64,
}

/// Outcome of one analog broadcast.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalogBroadcast {
    pub estimates: Vec<DeviceEstimate>,
    /// Scaling factor of each time slot.
    pub alphas: Vec<f64>,
    /// `‖x‖²` spent in each time slot.
    pub slot_energy: Vec<f64>,
}

/// Uncoded broadcast of `θ` over `n_dl` subchannels per slot.
///
/// The model is packed into `d/2` complex symbols (zero-padded for odd `d`)
/// and sent in `⌈(d/2)/n_dl⌉` slots, each scaled to spend the full `power`.
/// Device `m` receives `y = h_m ∘ αθ + z_m` and recovers
/// `θ̂_m = [Re, Im](y ∘ h_m⁻¹ / α)`.
pub fn analog_broadcast(theta: &[f64], power: f64, n_dl: usize, links: &[DownlinkDraw]) -> Result<AnalogBroadcast> {
    if theta.is_empty() {
        return Err(Error::Empty("model vector"));
    }
    if !(power.is_finite() && power > 0.0) {
        return Err(Error::invalid("power", format!("must be finite and > 0, got {power}")));
    }
    if n_dl == 0 {
        return Err(Error::invalid("n_dl", "need at least one subchannel"));
    }
    if links.is_empty() {
        return Err(Error::Empty("devices"));
    }
    let packed = split_padded(theta);
    let symbols = packed.len();
    for link in links {
        Error::check_len("downlink fading", symbols, link.fading.len())?;
        Error::check_len("downlink noise", symbols, link.noise.len())?;
        if (0..symbols).any(|i| link.fading.abs_sq(i) == 0.0) {
            return Err(Error::invalid("fading", "cannot invert a zero channel gain"));
        }
    }

    let mut alphas = Vec::new();
    let mut slot_energy = Vec::new();
    let mut recovered = vec![ComplexVec::zeros(0); links.len()];
    let mut start = 0;
    while start < symbols {
        let end = (start + n_dl).min(symbols);
        let payload = packed.slice(start, end);
        let alpha = (power / payload.norm_sq().max(NORM_FLOOR)).sqrt();
        let (re, im) = payload.into_parts();
        let x = ComplexVec::new(
            re.iter().map(|v| alpha * v).collect(),
            im.iter().map(|v| alpha * v).collect(),
        )?;
        slot_energy.push(x.norm_sq());
        for (link, out) in links.iter().zip(recovered.iter_mut()) {
            let h = link.fading.slice(start, end);
            let y = apply_broadcast(&x, &h, &link.noise.slice(start, end))?;
            let mut descaled = ComplexVec::zeros(y.len());
            for i in 0..y.len() {
                let (r, c) = cdiv(y.get(i), h.get(i));
                descaled.set(i, (r / alpha, c / alpha));
            }
            out.extend(&descaled);
        }
        alphas.push(alpha);
        start = end;
    }

    let estimates = recovered
        .iter()
        .map(|c| {
            let theta_hat = merge_truncated(c, theta.len());
            let mse = theta_hat.iter().zip(theta).map(|(a, b)| (a - b) * (a - b)).sum();
            DeviceEstimate { theta_hat, mse }
        })
        .collect();
    Ok(AnalogBroadcast {
        estimates,
        alphas,
        slot_energy,
    })
}
