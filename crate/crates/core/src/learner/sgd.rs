use rand::seq::index;
use rand::Rng;

use super::{Dataset, Model};
use crate::error::{Error, Result};

/// Learning rate `η(t)` as a function of the global round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaSchedule {
    Constant(f64),
    /// `base / (rate·t + 1)`.
    Decay {
        base: f64,
        rate: f64,
    },
}

impl EtaSchedule {
    /// `min{μ/(μ+1), 1/(μτ)} / (10⁻³ t + 1)`: the largest schedule of this
    /// shape that satisfies the convergence-bound step-size condition.
    pub fn theorem(mu: f64, tau: usize) -> Self {
        EtaSchedule::Decay {
            base: (mu / (mu + 1.0)).min(1.0 / (mu * tau as f64)),
            rate: 1e-3,
        }
    }

    pub fn eta(&self, t: usize) -> f64 {
        match *self {
            EtaSchedule::Constant(eta) => eta,
            EtaSchedule::Decay { base, rate } => base / (rate * t as f64 + 1.0),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            EtaSchedule::Constant(eta) => eta.is_finite() && eta > 0.0,
            EtaSchedule::Decay { base, rate } => base.is_finite() && base > 0.0 && rate.is_finite() && rate >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(
                "eta",
                format!("schedule must stay finite and positive: {self:?}"),
            ))
        }
    }
}

/// Local-update recipe shared by every device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdSchedule {
    tau: usize,
    batch: usize,
    eta: EtaSchedule,
}

impl SgdSchedule {
    /// `batch = 0` (or at least the shard size) means full-batch steps.
    pub fn new(tau: usize, batch: usize, eta: EtaSchedule) -> Result<Self> {
        if tau == 0 {
            return Err(Error::invalid("tau", "need at least one local step"));
        }
        eta.validate()?;
        Ok(Self { tau, batch, eta })
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn eta(&self) -> EtaSchedule {
        self.eta
    }
}

/// Callback receiving `(step, gradient)`.
pub type GradObserver<'a> = &'a mut dyn FnMut(usize, &[f64]);

/// `τ` SGD steps from `theta_start` on one device's shard.
///
/// Returns `Δθ = −η(t) Σ_i ∇F(θ^i, ξ^i)`, the accumulated gradients scaled
/// once, so the telescoping identity holds exactly rather than up to the
/// rounding of `θ^{τ+1} − θ^1`. Each step draws its batch uniformly without
/// replacement from the shard, independently of the other steps.
/// `observer` sees every stochastic gradient in order.
#[allow(clippy::too_many_arguments)]
pub fn local_sgd<R: Rng + ?Sized>(
    theta_start: &[f64],
    model: &dyn Model,
    data: &Dataset,
    shard: &[usize],
    sched: &SgdSchedule,
    t: usize,
    rng: &mut R,
    mut observer: Option<GradObserver<'_>>,
) -> Result<Vec<f64>> {
    if shard.is_empty() {
        return Err(Error::Empty("device shard"));
    }
    Error::check_len("model parameters", model.dim(), theta_start.len())?;
    let eta = sched.eta.eta(t);
    let full = sched.batch == 0 || sched.batch >= shard.len();
    let mut theta = theta_start.to_vec();
    let mut acc = vec![0.0; theta.len()];
    let mut batch = Vec::with_capacity(if full { shard.len() } else { sched.batch });
    for step in 0..sched.tau {
        let g = if full {
            model.grad(&theta, data, shard)
        } else {
            batch.clear();
            batch.extend(index::sample(rng, shard.len(), sched.batch).iter().map(|k| shard[k]));
            model.grad(&theta, data, &batch)
        };
        if let Some(obs) = observer.as_mut() {
            obs(step, &g);
        }
        for ((th, a), gk) in theta.iter_mut().zip(acc.iter_mut()).zip(&g) {
            *th -= eta * gk;
            *a += gk;
        }
    }
    Ok(acc.into_iter().map(|a| -eta * a).collect())
}
