//! End-to-end simulation: downlink, local SGD, uplink, global update.
//!
//! Every random draw comes from a keyed stream of the master seed, and
//! device work runs in parallel with results collected in device order, so a
//! run is reproducible bit for bit regardless of the thread count.

use std::fmt;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::capacity::GainProfile;
use crate::channel::{draw_fading_dl, ChannelParams};
use crate::compression::CompressedUpdate;
use crate::config::{DataSource, DownlinkMode, ModelKind, PartitionKind, SimConfig, UplinkMode};
use crate::downlink::{analog_broadcast, apply_update, digital_broadcast, symbols_for, DownlinkDraw, PsState};
use crate::error::{Error, Result};
use crate::learner::{
    local_sgd, partition_iid, partition_noniid, synthetic_classification, synthetic_regression, Dataset, LeastSquares,
    Model, Partition, SgdSchedule, SoftmaxRegression,
};
use crate::rng::{Purpose, SeededRng};
use crate::uplink::{aggregate_error_free, aggregate_round, UplinkConfig, UplinkDraw};
use crate::ModelVector;

/// Column order of the trace CSV.
pub const TRACE_HEADER: &str =
    "t,train_loss,test_metric,capacity_bits,q,bit_cost,est_mse,active_frac,gamma_bar,uplink_err";

/// A trace field that may not apply to the current mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Value(f64),
    /// The field does not exist in this mode; written as `-`.
    NotApplicable,
    /// No feasible quantization level this round; written as `infeasible`.
    Infeasible,
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Value(v) => write!(f, "{v}"),
            Cell::NotApplicable => f.write_str("-"),
            Cell::Infeasible => f.write_str("infeasible"),
        }
    }
}

/// One row of the trace, recorded after the global update of round `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrace {
    pub t: usize,
    pub train_loss: f64,
    pub test_metric: f64,
    pub capacity_bits: Cell,
    pub q: Cell,
    pub bit_cost: Cell,
    /// Mean `‖θ̂_m − θ‖²` over devices.
    pub est_mse: f64,
    pub active_frac: Cell,
    pub gamma_bar: Cell,
    /// `‖Δθ̂ − Σ (B_m/B) Δθ_m‖²`: distance from the weighted average.
    pub uplink_err: f64,
    /// Digital only: the device mirror matched the PS mirror bit for bit.
    pub mirror_identical: Option<bool>,
}

impl RoundTrace {
    fn write_row<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            self.t,
            self.train_loss,
            self.test_metric,
            self.capacity_bits,
            self.q,
            self.bit_cost,
            self.est_mse,
            self.active_frac,
            self.gamma_bar,
            self.uplink_err
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub rounds: Vec<RoundTrace>,
    pub theta: ModelVector,
}

impl RunReport {
    pub fn final_round(&self) -> &RoundTrace {
        self.rounds.last().expect("at least one round")
    }

    /// Digital rounds whose payload exceeded the common rate.
    pub fn rate_violations(&self) -> usize {
        self.rounds
            .iter()
            .filter(|r| match (r.bit_cost, r.capacity_bits) {
                (Cell::Value(b), Cell::Value(c)) => b > c,
                _ => false,
            })
            .count()
    }

    /// Digital rounds where the device mirror diverged from the PS.
    pub fn mirror_mismatches(&self) -> usize {
        self.rounds.iter().filter(|r| r.mirror_identical == Some(false)).count()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{TRACE_HEADER}")?;
        for r in &self.rounds {
            r.write_row(&mut w)?;
        }
        Ok(())
    }

    /// Writes the trace to a temporary sibling file, then renames it over `path`.
    pub fn write_csv_atomic(&self, path: &Path) -> Result<()> {
        let dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        let name = path
            .file_name()
            .ok_or_else(|| Error::Io(format!("{} is not a file path", path.display())))?;
        let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
        let result = (|| {
            let mut file = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
            self.write_csv(&mut file)?;
            file.into_inner().map_err(|e| Error::Io(e.to_string()))?.sync_all()?;
            std::fs::rename(&tmp, path)?;
            Ok(())
        })();
        if result.is_err() {
            let _ = std::fs::remove_file(&tmp);
        }
        result
    }
}

/// A configured experiment with its data, partition and model in place.
pub struct Simulation {
    config: SimConfig,
    train: Dataset,
    test: Dataset,
    partition: Partition,
    model: Box<dyn Model>,
    sched: SgdSchedule,
}

fn load_file(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Dataset::read_from(std::io::BufReader::new(file))
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self> {
        let seed = config.seed;
        let stream = |k: u64| SeededRng::stream(seed, Purpose::Dataset, k, 0);
        let (train, test) = match &config.data {
            DataSource::Synthetic => match config.model {
                ModelKind::Softmax => {
                    let make = |n, k| {
                        synthetic_classification(
                            n,
                            config.features,
                            config.classes,
                            config.separation,
                            &mut stream(0),
                            &mut stream(k),
                        )
                    };
                    (make(config.samples, 1)?, make(config.test_samples, 2)?)
                }
                ModelKind::LeastSquares => {
                    let make = |n, k| {
                        synthetic_regression(n, config.features, config.label_noise, &mut stream(0), &mut stream(k))
                            .map(|(ds, _)| ds)
                    };
                    (make(config.samples, 1)?, make(config.test_samples, 2)?)
                }
            },
            DataSource::File { train, test } => {
                let tr = load_file(train)?;
                let te = match test {
                    Some(p) => load_file(p)?,
                    None => tr.clone(),
                };
                (tr, te)
            }
        };
        let model: Box<dyn Model> = match config.model {
            ModelKind::Softmax => Box::new(SoftmaxRegression::new(config.features, config.classes, config.l2)?),
            ModelKind::LeastSquares => Box::new(LeastSquares::new(config.features, config.l2)?),
        };
        model.check(&train)?;
        model.check(&test)?;
        let mut prng = SeededRng::stream(seed, Purpose::Partition, 0, 0);
        let partition = match config.partition {
            PartitionKind::Iid => partition_iid(&train, config.devices, &mut prng)?,
            PartitionKind::NonIid => partition_noniid(&train, config.devices, &mut prng)?,
        };
        let sched = SgdSchedule::new(config.tau, config.batch, config.eta)?;
        Ok(Self {
            config,
            train,
            test,
            partition,
            model,
            sched,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn train(&self) -> &Dataset {
        &self.train
    }

    pub fn test(&self) -> &Dataset {
        &self.test
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn model(&self) -> &dyn Model {
        self.model.as_ref()
    }

    /// Runs every round from `θ(0) = 0`.
    pub fn run(&self) -> Result<RunReport> {
        self.run_observed(|_, _| {})
    }

    /// Like [`Simulation::run`], calling `observe(t, θ(t))` after each
    /// global update.
    pub fn run_observed(&self, mut observe: impl FnMut(usize, &[f64])) -> Result<RunReport> {
        let c = &self.config;
        let d = self.model.dim();
        let seed = c.seed;
        let devices = c.devices;
        let symbols = symbols_for(d);
        let params = ChannelParams::new(c.sigma_dl, c.sigma_ul, c.n_dl(), c.n_ul())?;
        let uplink_cfg = UplinkConfig::new(c.p_ul, c.lambda_thr, c.n_ul())?;
        let weights = self.partition.weights();
        let all: Vec<usize> = (0..self.train.len()).collect();
        let test_idx: Vec<usize> = (0..self.test.len()).collect();

        let mut ps = PsState::new(vec![0.0; d]);
        let mut device_mirror = ps.theta_hat.clone();
        let mut rounds = Vec::with_capacity(c.rounds);
        for t in 0..c.rounds {
            let tk = t as u64;
            let mut row = RoundTrace {
                t: t + 1,
                train_loss: 0.0,
                test_metric: 0.0,
                capacity_bits: Cell::NotApplicable,
                q: Cell::NotApplicable,
                bit_cost: Cell::NotApplicable,
                est_mse: 0.0,
                active_frac: Cell::NotApplicable,
                gamma_bar: Cell::NotApplicable,
                uplink_err: 0.0,
                mirror_identical: None,
            };

            let estimates: Vec<ModelVector> = match c.downlink {
                DownlinkMode::Ideal => vec![ps.theta.clone(); devices],
                DownlinkMode::Analog => {
                    let links: Vec<DownlinkDraw> = (0..devices)
                        .into_par_iter()
                        .map(|m| DownlinkDraw::sample(&params, symbols, seed, tk, m as u64))
                        .collect();
                    let out = analog_broadcast(&ps.theta, c.p_dl, c.n_dl(), &links)?;
                    row.est_mse = out.estimates.iter().map(|e| e.mse).sum::<f64>() / devices as f64;
                    out.estimates.into_iter().map(|e| e.theta_hat).collect()
                }
                DownlinkMode::Digital => {
                    let gains: Vec<Vec<f64>> = (0..devices)
                        .map(|m| {
                            let mut r = SeededRng::stream(seed, Purpose::DownlinkFading, tk, m as u64);
                            draw_fading_dl(&params, c.n_dl(), &mut r).abs_sq_all()
                        })
                        .collect();
                    let profile = GainProfile::new(gains, c.p_dl)?;
                    let mut qrng = SeededRng::stream(seed, Purpose::Quantization, tk, 0);
                    let out = digital_broadcast(&mut ps, &profile, c.sparsity(), c.bit_ceiling, &mut qrng)?;
                    row.capacity_bits = Cell::Value(out.capacity_bits);
                    match (&out.payload, out.q, out.bit_cost) {
                        (Some(payload), Some(q), Some(bits)) => {
                            row.q = Cell::Value(q as f64);
                            row.bit_cost = Cell::Value(bits);
                            let received = CompressedUpdate::from_bytes(&payload.to_bytes())?;
                            apply_update(&mut device_mirror, &received)?;
                        }
                        _ => {
                            row.q = Cell::Infeasible;
                            row.bit_cost = Cell::Infeasible;
                        }
                    }
                    let identical = device_mirror
                        .iter()
                        .zip(&ps.theta_hat)
                        .all(|(a, b)| a.to_bits() == b.to_bits());
                    row.mirror_identical = Some(identical);
                    row.est_mse = squared_distance(&out.estimate, &ps.theta);
                    vec![device_mirror.clone(); devices]
                }
            };

            let deltas: Vec<ModelVector> = (0..devices)
                .into_par_iter()
                .map(|m| {
                    let mut r = SeededRng::stream(seed, Purpose::MiniBatch, tk, m as u64);
                    local_sgd(
                        &estimates[m],
                        self.model.as_ref(),
                        &self.train,
                        self.partition.shard(m),
                        &self.sched,
                        t,
                        &mut r,
                        None,
                    )
                })
                .collect::<Result<_>>()?;

            let weighted = aggregate_error_free(&deltas, &weights)?;
            let aggregate = match c.uplink {
                UplinkMode::ErrorFree => weighted,
                UplinkMode::Analog => {
                    let draw = UplinkDraw::sample(&params, symbols, devices, seed, tk);
                    let out = aggregate_round(&deltas, &draw, &uplink_cfg)?;
                    row.active_frac = Cell::Value(out.active_fraction());
                    row.gamma_bar = Cell::Value(out.gamma_bar);
                    row.uplink_err = squared_distance(&out.delta_hat, &weighted);
                    out.delta_hat
                }
            };

            let base = match c.downlink {
                DownlinkMode::Digital => &ps.theta_hat,
                DownlinkMode::Analog | DownlinkMode::Ideal => &ps.theta,
            };
            let next: ModelVector = base.iter().zip(&aggregate).map(|(a, b)| a + b).collect();
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Overflow(format!("model diverged in round {}", t + 1)));
            }
            ps.theta = next;
            observe(t + 1, &ps.theta);

            row.train_loss = self.model.loss(&ps.theta, &self.train, &all);
            row.test_metric = self.model.metric(&ps.theta, &self.test, &test_idx);
            rounds.push(row);
        }
        Ok(RunReport {
            rounds,
            theta: ps.theta,
        })
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Builds and runs a configuration.
pub fn run(config: SimConfig) -> Result<RunReport> {
    Simulation::new(config)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(text: &str) -> SimConfig {
        SimConfig::parse(text).unwrap().config
    }

    #[test]
    fn trace_shape_and_sentinels() {
        let report = run(config("rounds = 5\ndevices = 4\nsamples = 200\nuplink = errorfree\n")).unwrap();
        assert_eq!(report.rounds.len(), 5);
        let mut csv = Vec::new();
        report.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], TRACE_HEADER);
        assert_eq!(lines.len(), 6);
        let cells: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(cells.len(), 10);
        assert_eq!(cells[0], "1");
        assert_eq!(&cells[3..6], &["-", "-", "-"]);
        assert!(!text.contains("NaN") && !text.contains("inf,"));
    }

    #[test]
    fn digital_infeasible_freezes_at_origin() {
        let report = run(config(
            "downlink = digital\np_dl = 1e-6\nrounds = 4\ndevices = 4\nsamples = 200\n",
        ))
        .unwrap();
        for r in &report.rounds {
            assert_eq!(r.q, Cell::Infeasible);
            assert_eq!(r.bit_cost, Cell::Infeasible);
            assert_eq!(r.mirror_identical, Some(true));
        }
        let mut csv = Vec::new();
        report.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().contains(",infeasible,infeasible,"));
    }

    #[test]
    fn digital_bookkeeping_holds() {
        let report = run(config(
            "downlink = digital\np_dl = 1e6\nrounds = 10\ndevices = 5\nsamples = 300\nsparsity = 5\n",
        ))
        .unwrap();
        assert_eq!(report.rate_violations(), 0);
        assert_eq!(report.mirror_mismatches(), 0);
        assert!(report.rounds.iter().all(|r| matches!(r.q, Cell::Value(_))));
    }

    #[test]
    fn atomic_write_replaces_target() {
        let report = run(config("rounds = 2\ndevices = 2\nsamples = 50\n")).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        std::fs::write(&path, "stale").unwrap();
        report.write_csv_atomic(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(TRACE_HEADER));
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let c = config("rounds = 4\ndevices = 6\nsamples = 300\ntau = 2\nbatch = 10\n");
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let many = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| run(c.clone())).unwrap();
        let b = many.install(|| run(c)).unwrap();
        assert_eq!(a, b);
    }
}
