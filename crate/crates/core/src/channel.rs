//! Fading and noise generation, plus the broadcast and multiple-access
//! channel equations.
//!
//! All gains are circularly-symmetric complex Gaussian `CN(0, σ)`; noise is
//! `CN(0, 1)`, so SNR is set entirely by transmit power and `σ`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Complex vector stored as separate real and imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVec {
    re: Vec<f64>,
    im: Vec<f64>,
}

impl ComplexVec {
    pub fn new(re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        Error::check_len("imaginary part", re.len(), im.len())?;
        if re.iter().chain(im.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("ComplexVec", "entries must be finite"));
        }
        Ok(Self { re, im })
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            re: vec![0.0; len],
            im: vec![0.0; len],
        }
    }

    /// Real-valued vector with zero imaginary part.
    pub fn from_real(re: Vec<f64>) -> Self {
        let im = vec![0.0; re.len()];
        Self { re, im }
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    pub fn get(&self, i: usize) -> (f64, f64) {
        (self.re[i], self.im[i])
    }

    pub fn set(&mut self, i: usize, value: (f64, f64)) {
        self.re[i] = value.0;
        self.im[i] = value.1;
    }

    /// `|v_i|²`
    pub fn abs_sq(&self, i: usize) -> f64 {
        self.re[i] * self.re[i] + self.im[i] * self.im[i]
    }

    /// Squared magnitudes of every entry.
    pub fn abs_sq_all(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.abs_sq(i)).collect()
    }

    /// `‖v‖²`
    pub fn norm_sq(&self) -> f64 {
        (0..self.len()).map(|i| self.abs_sq(i)).sum()
    }

    /// Contiguous sub-vector `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> ComplexVec {
        ComplexVec {
            re: self.re[start..end].to_vec(),
            im: self.im[start..end].to_vec(),
        }
    }

    /// Appends `other` to the end of `self`.
    pub fn extend(&mut self, other: &ComplexVec) {
        self.re.extend_from_slice(&other.re);
        self.im.extend_from_slice(&other.im);
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<f64>) {
        (self.re, self.im)
    }
}

pub(crate) fn cmul(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}

pub(crate) fn cdiv(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let den = b.0 * b.0 + b.1 * b.1;
    ((a.0 * b.0 + a.1 * b.1) / den, (a.1 * b.0 - a.0 * b.1) / den)
}

/// Link-level channel statistics for one experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    sigma_dl: f64,
    sigma_ul: f64,
    n_dl: usize,
    n_ul: usize,
}

impl ChannelParams {
    pub fn new(sigma_dl: f64, sigma_ul: f64, n_dl: usize, n_ul: usize) -> Result<Self> {
        for (name, v) in [("sigma_dl", sigma_dl), ("sigma_ul", sigma_ul)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(
                    name,
                    format!("variance must be finite and > 0, got {v}"),
                ));
            }
        }
        if n_dl == 0 {
            return Err(Error::invalid("n_dl", "need at least one subchannel"));
        }
        if n_ul == 0 {
            return Err(Error::invalid("n_ul", "need at least one subchannel"));
        }
        Ok(Self {
            sigma_dl,
            sigma_ul,
            n_dl,
            n_ul,
        })
    }

    pub fn sigma_dl(&self) -> f64 {
        self.sigma_dl
    }

    pub fn sigma_ul(&self) -> f64 {
        self.sigma_ul
    }

    pub fn n_dl(&self) -> usize {
        self.n_dl
    }

    pub fn n_ul(&self) -> usize {
        self.n_ul
    }
}

/// Draws `len` iid `CN(0, variance)` entries: real and imaginary parts are
/// independent `N(0, variance/2)`.
pub fn draw_complex_gaussian<R: Rng + ?Sized>(variance: f64, len: usize, rng: &mut R) -> ComplexVec {
    let scale = (variance / 2.0).sqrt();
    let mut re = Vec::with_capacity(len);
    let mut im = Vec::with_capacity(len);
    for _ in 0..len {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        re.push(scale * a);
        im.push(scale * b);
    }
    ComplexVec { re, im }
}

/// Downlink fading vector `h ~ CN(0, σ_dl)`.
pub fn draw_fading_dl<R: Rng + ?Sized>(params: &ChannelParams, len: usize, rng: &mut R) -> ComplexVec {
    draw_complex_gaussian(params.sigma_dl, len, rng)
}

/// Uplink fading vector `h ~ CN(0, σ_ul)`.
pub fn draw_fading_ul<R: Rng + ?Sized>(params: &ChannelParams, len: usize, rng: &mut R) -> ComplexVec {
    draw_complex_gaussian(params.sigma_ul, len, rng)
}

/// Unit-variance receiver noise.
pub fn draw_noise<R: Rng + ?Sized>(len: usize, rng: &mut R) -> ComplexVec {
    draw_complex_gaussian(1.0, len, rng)
}

/// Broadcast channel output at one receiver: `y_i = h_i·x_i + z_i`.
pub fn apply_broadcast(x: &ComplexVec, h: &ComplexVec, z: &ComplexVec) -> Result<ComplexVec> {
    Error::check_len("fading vector", x.len(), h.len())?;
    Error::check_len("noise vector", x.len(), z.len())?;
    let mut y = ComplexVec::zeros(x.len());
    for i in 0..x.len() {
        let (pr, pi) = cmul(h.get(i), x.get(i));
        let (zr, zi) = z.get(i);
        y.set(i, (pr + zr, pi + zi));
    }
    Ok(y)
}

/// Multiple-access channel output: `y = Σ_m h_m ∘ x_m + z`.
pub fn apply_mac(xs: &[ComplexVec], hs: &[ComplexVec], z: &ComplexVec) -> Result<ComplexVec> {
    if xs.is_empty() {
        return Err(Error::Empty("no transmitting devices"));
    }
    Error::check_len("fading vectors per device", xs.len(), hs.len())?;
    let n = z.len();
    for (x, h) in xs.iter().zip(hs) {
        Error::check_len("device input", n, x.len())?;
        Error::check_len("device fading", n, h.len())?;
    }
    let mut y = ComplexVec::zeros(n);
    for i in 0..n {
        let mut acc = (0.0, 0.0);
        for (x, h) in xs.iter().zip(hs) {
            let p = cmul(h.get(i), x.get(i));
            acc.0 += p.0;
            acc.1 += p.1;
        }
        let (zr, zi) = z.get(i);
        y.set(i, (acc.0 + zr, acc.1 + zi));
    }
    Ok(y)
}
