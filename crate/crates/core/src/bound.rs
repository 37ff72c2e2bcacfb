//! Convergence bound of the analog downlink scheme with an error-free uplink.
//!
//! The expected squared distance to the optimum obeys
//! `u(t+1) = A(t) u(t) + B(t)` with `u(0) = ‖θ(0) − θ*‖²`, where
//!
//! * `A(i) = 1 − μη(i)(τ − η(i)(τ − 1 + 1/μ))`
//! * `B(i) = Z²/(Mσ^dl P^dl) + (1 + μ(1−η))η²G²·τ(τ−1)(2τ−1)/6
//!   + (τ − 1 + η²(τ² + τ − 1))G² + 2η(τ−1)Γ`
//!
//! and L-smoothness turns it into the loss-gap bound `(L/2) u(t)`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::learner::EtaSchedule;

/// Relative slack on the step-size precondition, for rounding in `η(t)`.
const ETA_SLACK: f64 = 1e-12;

/// Default horizon for "final" comparisons.
pub const DEFAULT_HORIZON: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub mu: f64,
    pub l: f64,
    pub tau: usize,
    pub g2: f64,
    pub gamma: f64,
    pub z2: f64,
    pub devices: usize,
    pub sigma_dl: f64,
    pub p_dl: f64,
    pub init_gap: f64,
    /// `None` selects [`EtaSchedule::theorem`] for the current `μ` and `τ`.
    pub eta: Option<EtaSchedule>,
}

impl BoundParams {
    /// Non-iid regime of the reference experiments at `P^dl = 10`, `τ = 4`.
    pub fn reference() -> Self {
        Self {
            mu: 0.2,
            l: 10.0,
            tau: 4,
            g2: 100.0,
            gamma: 50.0,
            z2: 2e4,
            devices: 40,
            sigma_dl: 1.0,
            p_dl: 10.0,
            init_gap: 5e3,
            eta: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mu", self.mu),
            ("L", self.l),
            ("sigma_dl", self.sigma_dl),
            ("Pdl", self.p_dl),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        let nonneg = [
            ("G2", self.g2),
            ("Gamma", self.gamma),
            ("Z2", self.z2),
            ("init_gap", self.init_gap),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if self.tau == 0 {
            return Err(Error::invalid("tau", "must be >= 1"));
        }
        if self.devices == 0 {
            return Err(Error::invalid("M", "must be >= 1"));
        }
        Ok(())
    }

    pub fn schedule(&self) -> EtaSchedule {
        self.eta.unwrap_or_else(|| EtaSchedule::theorem(self.mu, self.tau))
    }

    /// `min{μ/(μ+1), 1/(μτ)}`.
    pub fn eta_limit(&self) -> f64 {
        (self.mu / (self.mu + 1.0)).min(1.0 / (self.mu * self.tau as f64))
    }

    /// `η(i)`, rejected when it leaves `(0, min{μ/(μ+1), 1/(μτ)}]`.
    pub fn eta_at(&self, i: usize) -> Result<f64> {
        let eta = self.schedule().eta(i);
        let limit = self.eta_limit();
        if !(eta > 0.0 && eta <= limit * (1.0 + ETA_SLACK)) {
            return Err(Error::StepSize { round: i, eta, limit });
        }
        Ok(eta)
    }

    /// `lim B(t) = Z²/(Mσ^dl P^dl) + (τ−1)G²` as `η(t) → 0`.
    pub fn asymptotic_floor(&self) -> f64 {
        self.noise_term() + (self.tau as f64 - 1.0) * self.g2
    }

    fn noise_term(&self) -> f64 {
        self.z2 / (self.devices as f64 * self.sigma_dl * self.p_dl)
    }
}

fn a_of(p: &BoundParams, eta: f64) -> f64 {
    let tau = p.tau as f64;
    let a = 1.0 - p.mu * eta * (tau - eta * (tau - 1.0 + 1.0 / p.mu));
    assert!(a > 0.0 && a <= 1.0 + 1e-12, "contraction factor {a} outside (0, 1]");
    a
}

fn b_of(p: &BoundParams, eta: f64) -> f64 {
    let tau = p.tau as f64;
    let cubic = tau * (tau - 1.0) * (2.0 * tau - 1.0) / 6.0;
    p.noise_term()
        + (1.0 + p.mu * (1.0 - eta)) * eta * eta * p.g2 * cubic
        + (tau - 1.0 + eta * eta * (tau * tau + tau - 1.0)) * p.g2
        + 2.0 * eta * (tau - 1.0) * p.gamma
}

/// `A(i)`.
pub fn coeff_a(p: &BoundParams, i: usize) -> Result<f64> {
    Ok(a_of(p, p.eta_at(i)?))
}

/// `B(i)`.
pub fn coeff_b(p: &BoundParams, i: usize) -> Result<f64> {
    Ok(b_of(p, p.eta_at(i)?))
}

/// `u(1), …, u(T)` by forward recursion.
pub fn trajectory(p: &BoundParams, horizon: usize) -> Result<Vec<f64>> {
    p.validate()?;
    if horizon == 0 {
        return Err(Error::invalid("T", "horizon must be >= 1"));
    }
    let mut u = p.init_gap;
    let mut out = Vec::with_capacity(horizon);
    for i in 0..horizon {
        let eta = p.eta_at(i)?;
        u = a_of(p, eta) * u + b_of(p, eta);
        if !u.is_finite() {
            return Err(Error::Overflow(format!("bound diverged at round {}", i + 1)));
        }
        out.push(u);
    }
    Ok(out)
}

/// `(L/2) u(t)` for `t = 1..=T`.
pub fn loss_bound(p: &BoundParams, horizon: usize) -> Result<Vec<f64>> {
    let half_l = p.l / 2.0;
    Ok(trajectory(p, horizon)?.into_iter().map(|u| half_l * u).collect())
}

/// Whether the last `tail` fraction of a trajectory changes by less than
/// `tol` relative to its final value.
pub fn plateaued(values: &[f64], tail: f64, tol: f64) -> bool {
    let Some(&last) = values.last() else {
        return false;
    };
    let start = ((values.len() as f64) * (1.0 - tail)).floor() as usize;
    let window = &values[start.min(values.len() - 1)..];
    let (lo, hi) = window.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    (hi - lo) <= tol * last.abs()
}

/// A parameter a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Tau,
    Pdl,
    Devices,
    G2,
    Gamma,
    Z2,
    Mu,
    L,
    SigmaDl,
    InitGap,
}

impl SweepParam {
    pub const ALL: [SweepParam; 10] = [
        SweepParam::Tau,
        SweepParam::Pdl,
        SweepParam::Devices,
        SweepParam::G2,
        SweepParam::Gamma,
        SweepParam::Z2,
        SweepParam::Mu,
        SweepParam::L,
        SweepParam::SigmaDl,
        SweepParam::InitGap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Tau => "tau",
            SweepParam::Pdl => "Pdl",
            SweepParam::Devices => "M",
            SweepParam::G2 => "G2",
            SweepParam::Gamma => "Gamma",
            SweepParam::Z2 => "Z2",
            SweepParam::Mu => "mu",
            SweepParam::L => "L",
            SweepParam::SigmaDl => "sigma_dl",
            SweepParam::InitGap => "init_gap",
        }
    }

    /// A copy of `p` with this parameter set to `value`.
    pub fn apply(self, p: &BoundParams, value: f64) -> Result<BoundParams> {
        let integer = |v: f64| -> Result<usize> {
            if v.is_finite() && v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::invalid(
                    "sweep value",
                    format!("{} needs an integer >= 1, got {v}", self.name()),
                ))
            }
        };
        let mut out = *p;
        match self {
            SweepParam::Tau => out.tau = integer(value)?,
            SweepParam::Devices => out.devices = integer(value)?,
            SweepParam::Pdl => out.p_dl = value,
            SweepParam::G2 => out.g2 = value,
            SweepParam::Gamma => out.gamma = value,
            SweepParam::Z2 => out.z2 = value,
            SweepParam::Mu => out.mu = value,
            SweepParam::L => out.l = value,
            SweepParam::SigmaDl => out.sigma_dl = value,
            SweepParam::InitGap => out.init_gap = value,
        }
        out.validate()?;
        Ok(out)
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepParam::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownParameter(s.to_string()))
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One evaluated trajectory of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCurve {
    pub value: f64,
    pub params: BoundParams,
    pub loss: Vec<f64>,
}

impl SweepCurve {
    pub fn final_loss(&self) -> f64 {
        *self.loss.last().expect("horizon >= 1")
    }

    /// CSV with columns `t,tau,P_dl,bound`, one row per round.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,tau,P_dl,bound")?;
        for (k, b) in self.loss.iter().enumerate() {
            writeln!(w, "{},{},{},{:e}", k + 1, self.params.tau, self.params.p_dl, b)?;
        }
        Ok(())
    }
}

/// Evaluates [`loss_bound`] once per value. Curves are independent and
/// computed in parallel.
pub fn sweep(template: &BoundParams, param: SweepParam, values: &[f64], horizon: usize) -> Result<Vec<SweepCurve>> {
    use rayon::prelude::*;
    values
        .par_iter()
        .map(|&value| {
            let params = param.apply(template, value)?;
            Ok(SweepCurve {
                value,
                params,
                loss: loss_bound(&params, horizon)?,
            })
        })
        .collect()
}

/// Index of the curve with the lowest final value; ties keep the first.
pub fn best_curve(curves: &[SweepCurve]) -> Option<usize> {
    (0..curves.len()).reduce(|best, k| {
        if curves[k].final_loss() < curves[best].final_loss() {
            k
        } else {
            best
        }
    })
}
