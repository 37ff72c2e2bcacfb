//! Common-rate bound of the parallel fading broadcast channel.
//!
//! Each device's power variables appear only in its own rate term, so the
//! max-min problem decouples: water-fill every device independently and take
//! the smallest of the resulting rates.

use crate::error::{Error, Result};

/// Water-filling allocation over parallel unit-noise Gaussian subchannels.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterFill {
    /// Power per subchannel, in input order. Empty when every gain is zero.
    pub allocation: Vec<f64>,
    /// Achieved rate in bits per channel use of the whole block.
    pub rate: f64,
    /// Water level `ν`; `None` for the all-zero-gain case.
    pub level: Option<f64>,
}

impl WaterFill {
    /// No usable subchannel: zero rate, nothing allocated.
    pub fn is_silent(&self) -> bool {
        self.level.is_none()
    }
}

fn validate_gains(gains: &[f64]) -> Result<()> {
    if gains.is_empty() {
        return Err(Error::Empty("subchannel gains"));
    }
    if gains.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
        return Err(Error::invalid("gains", "squared gains must be finite and >= 0"));
    }
    Ok(())
}

fn validate_power(power: f64) -> Result<()> {
    if !(power.is_finite() && power > 0.0) {
        return Err(Error::invalid("power", format!("must be finite and > 0, got {power}")));
    }
    Ok(())
}

/// Maximizes `Σ log₂(1 + P_i g_i)` subject to `Σ P_i = power`.
///
/// Exact sorted breakpoint scan: with inverse gains sorted ascending, the
/// first `k` channels are active iff the level `ν_k = (power + Σ_{i<k} 1/g_i)/k`
/// lies above the `k`-th floor and not above the `(k+1)`-th.
pub fn waterfill(gains: &[f64], power: f64) -> Result<WaterFill> {
    validate_gains(gains)?;
    validate_power(power)?;

    let mut floors: Vec<(f64, usize)> = gains
        .iter()
        .enumerate()
        .filter(|(_, &g)| g > 0.0)
        .map(|(i, &g)| (1.0 / g, i))
        .collect();
    if floors.is_empty() {
        return Ok(WaterFill {
            allocation: Vec::new(),
            rate: 0.0,
            level: None,
        });
    }
    floors.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut prefix = 0.0;
    let mut level = 0.0;
    for k in 0..floors.len() {
        prefix += floors[k].0;
        let nu = (power + prefix) / (k + 1) as f64;
        level = nu;
        match floors.get(k + 1) {
            Some(&(next, _)) if nu > next => continue,
            _ => break,
        }
    }

    let mut allocation = vec![0.0; gains.len()];
    let mut rate = 0.0;
    for &(floor, i) in &floors {
        let p = level - floor;
        if p > 0.0 {
            allocation[i] = p;
            rate += (1.0 + p * gains[i]).log2();
        }
    }
    Ok(WaterFill {
        allocation,
        rate,
        level: Some(level),
    })
}

/// Per-device squared downlink gains `|h_{m,i}|²` and the PS power budget.
#[derive(Debug, Clone, PartialEq)]
pub struct GainProfile {
    gains: Vec<Vec<f64>>,
    power: f64,
}

impl GainProfile {
    pub fn new(gains: Vec<Vec<f64>>, power: f64) -> Result<Self> {
        if gains.is_empty() {
            return Err(Error::Empty("devices in gain profile"));
        }
        let n = gains[0].len();
        for g in &gains {
            Error::check_len("subchannels per device", n, g.len())?;
            validate_gains(g)?;
        }
        validate_power(power)?;
        Ok(Self { gains, power })
    }

    pub fn devices(&self) -> usize {
        self.gains.len()
    }

    pub fn subchannels(&self) -> usize {
        self.gains[0].len()
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn gains(&self, device: usize) -> &[f64] {
        &self.gains[device]
    }
}

/// Result of the common-rate computation.
#[derive(Debug, Clone, PartialEq)]
pub struct CommonRate {
    /// `C^dl`: rate decodable by every device, in bits.
    pub bits: f64,
    /// Water-filled rate of each device on its own.
    pub per_device: Vec<f64>,
    /// Index of the device that limits the common rate.
    pub bottleneck: usize,
}

/// Min over devices of each device's water-filled rate.
pub fn common_rate(profile: &GainProfile) -> CommonRate {
    let per_device: Vec<f64> = profile
        .gains
        .iter()
        .map(|g| waterfill(g, profile.power).map(|w| w.rate).unwrap_or(0.0))
        .collect();
    let (bottleneck, bits) =
        per_device.iter().copied().enumerate().fold(
            (0, f64::INFINITY),
            |best, (i, r)| if r < best.1 { (i, r) } else { best },
        );
    CommonRate {
        bits,
        per_device,
        bottleneck,
    }
}
