//! Flat `key = value` experiment configuration.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored.
//! Unknown or repeated keys are errors. Every key has a default, so an empty
//! file describes a valid (small) experiment. See [`KEYS`] for the schema.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::bound::BoundParams;
use crate::learner::EtaSchedule;

/// Every accepted key with its default and a one-line description.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("downlink", "analog", "analog | digital | ideal (error-free broadcast)"),
    ("uplink", "analog", "analog | errorfree"),
    ("devices", "10", "number of devices M"),
    ("rounds", "100", "global rounds T"),
    ("tau", "1", "local SGD steps per round"),
    ("batch", "0", "mini-batch size per step; 0 = full shard"),
    (
        "eta",
        "0.05",
        "base learning rate, or `theorem` for min{mu/(mu+1), 1/(mu*tau)} with 1e-3 decay",
    ),
    ("eta_decay", "0", "eta(t) = eta / (eta_decay * t + 1)"),
    ("l2", "0", "ridge penalty"),
    ("p_dl", "100", "downlink power budget"),
    ("p_ul", "10", "uplink power budget per device"),
    ("sigma_dl", "1", "downlink fading variance"),
    ("sigma_ul", "1", "uplink fading variance"),
    ("lambda_thr", "1e-4", "uplink channel-inversion threshold on |h|"),
    ("sparsity", "auto", "digital top-s level; auto = max(1, floor(d/50))"),
    ("n_dl", "auto", "downlink subchannels; auto = ceil(d/2)"),
    ("n_ul", "auto", "uplink subchannels; auto = ceil(d/2)"),
    (
        "bit_ceiling",
        "false",
        "charge digital payloads their integer bit count",
    ),
    ("partition", "iid", "iid | noniid"),
    ("model", "softmax", "softmax | least_squares"),
    ("dataset", "synthetic", "synthetic, or a path to a binary dataset file"),
    (
        "test_dataset",
        "",
        "binary test file; empty = evaluate on the training data",
    ),
    ("samples", "2000", "synthetic training samples"),
    ("test_samples", "500", "synthetic test samples"),
    ("features", "8", "feature dimension"),
    ("classes", "10", "softmax classes"),
    ("separation", "1.5", "synthetic class-center spread"),
    ("label_noise", "0.1", "synthetic regression noise"),
    ("seed", "0", "master seed"),
    ("mu", "", "strong convexity; enables the bound-mode step-size check"),
    ("L", "", "smoothness (bound mode)"),
    ("G2", "", "gradient second-moment bound (bound mode)"),
    ("Gamma", "", "heterogeneity gap (bound mode)"),
    ("Z2", "", "downlink perturbation constant (bound mode)"),
    ("init_gap", "", "initial squared distance to the optimum (bound mode)"),
];

const BOUND_KEYS: &[&str] = &["mu", "L", "G2", "Gamma", "Z2", "init_gap"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DownlinkMode {
    Analog,
    Digital,
    /// Every device receives `θ(t)` exactly.
    Ideal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UplinkMode {
    Analog,
    ErrorFree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionKind {
    Iid,
    NonIid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Softmax,
    LeastSquares,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic,
    File { train: PathBuf, test: Option<PathBuf> },
}

/// A size that defaults to a function of the model dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Auto {
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub downlink: DownlinkMode,
    pub uplink: UplinkMode,
    pub devices: usize,
    pub rounds: usize,
    pub tau: usize,
    pub batch: usize,
    pub eta: EtaSchedule,
    pub l2: f64,
    pub p_dl: f64,
    pub p_ul: f64,
    pub sigma_dl: f64,
    pub sigma_ul: f64,
    pub lambda_thr: f64,
    pub sparsity: Auto,
    pub n_dl: Auto,
    pub n_ul: Auto,
    pub bit_ceiling: bool,
    pub partition: PartitionKind,
    pub model: ModelKind,
    pub data: DataSource,
    pub samples: usize,
    pub test_samples: usize,
    pub features: usize,
    pub classes: usize,
    pub separation: f64,
    pub label_noise: f64,
    pub seed: u64,
    /// Present when any bound-mode key is set.
    pub bound: Option<BoundParams>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig::from_map(&ConfigMap::default())
            .expect("defaults are valid")
            .config
    }
}

impl SimConfig {
    /// Model dimension `d`.
    pub fn dim(&self) -> usize {
        match self.model {
            ModelKind::Softmax => self.classes * (self.features + 1),
            ModelKind::LeastSquares => self.features,
        }
    }

    pub fn sparsity(&self) -> usize {
        match self.sparsity {
            Auto::Fixed(s) => s,
            Auto::Auto => (self.dim() / 50).max(1),
        }
    }

    pub fn n_dl(&self) -> usize {
        match self.n_dl {
            Auto::Fixed(n) => n,
            Auto::Auto => self.dim().div_ceil(2),
        }
    }

    pub fn n_ul(&self) -> usize {
        match self.n_ul {
            Auto::Fixed(n) => n,
            Auto::Auto => self.dim().div_ceil(2),
        }
    }

    /// Parses and validates a config file's text.
    pub fn parse(text: &str) -> Result<Checked, Diagnostics> {
        let map = ConfigMap::parse(text)?;
        SimConfig::from_map(&map)
    }

    pub fn load(path: &Path) -> Result<Checked, Diagnostics> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Diagnostics(vec![Diagnostic::error(
                None,
                format!("cannot read {}: {e}", path.display()),
            )])
        })?;
        let mut checked = SimConfig::parse(&text)?;
        checked.config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(checked)
    }

    /// Makes relative dataset paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let DataSource::File { train, test } = &mut self.data {
            if train.is_relative() {
                *train = base.join(&*train);
            }
            if let Some(t) = test {
                if t.is_relative() {
                    *t = base.join(&*t);
                }
            }
        }
    }

    pub fn from_map(map: &ConfigMap) -> Result<Checked, Diagnostics> {
        Builder::new(map).build()
    }
}

/// A valid configuration plus non-fatal findings.
#[derive(Debug, Clone)]
pub struct Checked {
    pub config: SimConfig,
    pub warnings: Vec<Diagnostic>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    /// 1-based line of the offending entry; `None` for overrides and
    /// cross-key findings.
    pub line: Option<usize>,
    pub message: String,
}

impl Diagnostic {
    fn error(line: Option<usize>, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            line,
            message: message.into(),
        }
    }

    fn warning(line: Option<usize>, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            line,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        match self.line {
            Some(line) => write!(f, "{tag}: line {line}: {}", self.message),
            None => write!(f, "{tag}: {}", self.message),
        }
    }
}

/// All errors found in one pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostics(pub Vec<Diagnostic>);

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, d) in self.0.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for Diagnostics {}

/// Raw entries with the line each came from.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigMap {
    entries: BTreeMap<String, (String, Option<usize>)>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self, Diagnostics> {
        let mut map = ConfigMap::default();
        let mut errors = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                errors.push(Diagnostic::error(
                    Some(line),
                    format!("expected `key = value`, got `{content}`"),
                ));
                continue;
            };
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.iter().any(|(name, _, _)| *name == key) {
                errors.push(Diagnostic::error(Some(line), format!("unknown key `{key}`")));
                continue;
            }
            if let Some((_, Some(first))) = map.entries.get(key) {
                errors.push(Diagnostic::error(
                    Some(line),
                    format!("duplicate key `{key}` (first set on line {first})"),
                ));
                continue;
            }
            map.entries.insert(key.to_string(), (value.to_string(), Some(line)));
        }
        if errors.is_empty() {
            Ok(map)
        } else {
            Err(Diagnostics(errors))
        }
    }

    /// Sets `key` from outside the file, replacing any file entry.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), Diagnostics> {
        if !KEYS.iter().any(|(name, _, _)| *name == key) {
            return Err(Diagnostics(vec![Diagnostic::error(
                None,
                format!("unknown key `{key}`"),
            )]));
        }
        self.entries.insert(key.to_string(), (value.to_string(), None));
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.entries.get(key).and_then(|(_, l)| *l)
    }
}

struct Builder<'a> {
    map: &'a ConfigMap,
    errors: Vec<Diagnostic>,
    warnings: Vec<Diagnostic>,
}

fn default_of(key: &str) -> &'static str {
    KEYS.iter()
        .find(|(k, _, _)| *k == key)
        .map(|(_, d, _)| *d)
        .expect("known key")
}

impl<'a> Builder<'a> {
    fn new(map: &'a ConfigMap) -> Self {
        Self {
            map,
            errors: Vec::new(),
            warnings: Vec::new(),
        }
    }

    fn raw(&self, key: &str) -> &str {
        self.map.get(key).unwrap_or_else(|| default_of(key))
    }

    fn fail(&mut self, key: &str, message: impl fmt::Display) {
        let line = self.map.line(key);
        self.errors.push(Diagnostic::error(line, format!("`{key}`: {message}")));
    }

    fn choice<T: Copy>(&mut self, key: &str, options: &[(&str, T)]) -> T {
        let raw = self.raw(key).to_string();
        match options.iter().find(|(name, _)| *name == raw) {
            Some(&(_, v)) => v,
            None => {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                self.fail(key, format!("expected one of {}, got `{raw}`", names.join(" | ")));
                options[0].1
            }
        }
    }

    fn int(&mut self, key: &str, min: usize) -> usize {
        let raw = self.raw(key).to_string();
        match raw.parse::<usize>() {
            Ok(v) if v >= min => v,
            Ok(v) => {
                self.fail(key, format!("must be >= {min}, got {v}"));
                min
            }
            Err(_) => {
                self.fail(key, format!("expected a non-negative integer, got `{raw}`"));
                min
            }
        }
    }

    fn auto(&mut self, key: &str) -> Auto {
        if self.raw(key) == "auto" {
            Auto::Auto
        } else {
            Auto::Fixed(self.int(key, 1))
        }
    }

    /// A finite real; `positive` excludes zero, otherwise negatives are excluded.
    fn real(&mut self, key: &str, positive: bool) -> f64 {
        let raw = self.raw(key).to_string();
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() && (v > 0.0 || (!positive && v == 0.0)) => v,
            Ok(v) => {
                let need = if positive { "> 0" } else { ">= 0" };
                self.fail(key, format!("must be finite and {need}, got {v}"));
                1.0
            }
            Err(_) => {
                self.fail(key, format!("expected a number, got `{raw}`"));
                1.0
            }
        }
    }

    fn optional_real(&mut self, key: &str, positive: bool) -> Option<f64> {
        self.map.get(key).map(|_| self.real(key, positive))
    }

    fn build(mut self) -> Result<Checked, Diagnostics> {
        let downlink = self.choice(
            "downlink",
            &[
                ("analog", DownlinkMode::Analog),
                ("digital", DownlinkMode::Digital),
                ("ideal", DownlinkMode::Ideal),
            ],
        );
        let uplink = self.choice(
            "uplink",
            &[("analog", UplinkMode::Analog), ("errorfree", UplinkMode::ErrorFree)],
        );
        let devices = self.int("devices", 1);
        let rounds = self.int("rounds", 1);
        let tau = self.int("tau", 1);
        let batch = self.int("batch", 0);
        let l2 = self.real("l2", false);
        let p_dl = self.real("p_dl", true);
        let p_ul = self.real("p_ul", true);
        let sigma_dl = self.real("sigma_dl", true);
        let sigma_ul = self.real("sigma_ul", true);
        let lambda_thr = self.real("lambda_thr", false);
        let sparsity = self.auto("sparsity");
        let n_dl = self.auto("n_dl");
        let n_ul = self.auto("n_ul");
        let bit_ceiling = self.choice("bit_ceiling", &[("false", false), ("true", true)]);
        let partition = self.choice(
            "partition",
            &[("iid", PartitionKind::Iid), ("noniid", PartitionKind::NonIid)],
        );
        let model = self.choice(
            "model",
            &[
                ("softmax", ModelKind::Softmax),
                ("least_squares", ModelKind::LeastSquares),
            ],
        );
        let data = match self.raw("dataset") {
            "synthetic" => DataSource::Synthetic,
            path => DataSource::File {
                train: PathBuf::from(path),
                test: Some(self.raw("test_dataset"))
                    .filter(|t| !t.is_empty())
                    .map(PathBuf::from),
            },
        };
        if data == DataSource::Synthetic && self.map.get("test_dataset").is_some_and(|t| !t.is_empty()) {
            self.fail("test_dataset", "only applies to file datasets");
        }
        let samples = self.int("samples", 1);
        let test_samples = self.int("test_samples", 1);
        let features = self.int("features", 1);
        let classes = self.int("classes", 2);
        let separation = self.real("separation", false);
        let label_noise = self.real("label_noise", false);
        let seed = match self.raw("seed").parse::<u64>() {
            Ok(s) => s,
            Err(_) => {
                let raw = self.raw("seed").to_string();
                self.fail("seed", format!("expected an unsigned 64-bit integer, got `{raw}`"));
                0
            }
        };

        let mu = self.optional_real("mu", true);
        let eta = if self.raw("eta") == "theorem" {
            if self.map.get("eta_decay").is_some() {
                self.fail(
                    "eta_decay",
                    "conflicts with `eta = theorem`, which fixes the decay at 1e-3",
                );
            }
            match mu {
                Some(mu) => EtaSchedule::theorem(mu, tau),
                None => {
                    self.fail("eta", "`theorem` needs `mu`");
                    EtaSchedule::Constant(1.0)
                }
            }
        } else {
            let base = self.real("eta", true);
            let rate = self.real("eta_decay", false);
            if rate == 0.0 {
                EtaSchedule::Constant(base)
            } else {
                EtaSchedule::Decay { base, rate }
            }
        };

        let bound = if BOUND_KEYS.iter().any(|k| self.map.get(k).is_some()) {
            let mut p = BoundParams {
                mu: mu.unwrap_or(1.0),
                tau,
                devices,
                sigma_dl,
                p_dl,
                eta: Some(eta),
                ..BoundParams::reference()
            };
            if mu.is_none() {
                self.fail("mu", "bound-mode keys are set but `mu` is missing");
            }
            p.l = self.optional_real("L", true).unwrap_or(p.l);
            p.g2 = self.optional_real("G2", false).unwrap_or(p.g2);
            p.gamma = self.optional_real("Gamma", false).unwrap_or(p.gamma);
            p.z2 = self.optional_real("Z2", false).unwrap_or(p.z2);
            p.init_gap = self.optional_real("init_gap", false).unwrap_or(p.init_gap);
            Some(p)
        } else {
            None
        };

        let config = SimConfig {
            downlink,
            uplink,
            devices,
            rounds,
            tau,
            batch,
            eta,
            l2,
            p_dl,
            p_ul,
            sigma_dl,
            sigma_ul,
            lambda_thr,
            sparsity,
            n_dl,
            n_ul,
            bit_ceiling,
            partition,
            model,
            data,
            samples,
            test_samples,
            features,
            classes,
            separation,
            label_noise,
            seed,
            bound,
        };
        if self.errors.is_empty() {
            self.cross_checks(&config);
        }
        if self.errors.is_empty() {
            Ok(Checked {
                config,
                warnings: self.warnings,
            })
        } else {
            Err(Diagnostics(self.errors))
        }
    }

    fn cross_checks(&mut self, c: &SimConfig) {
        let d = c.dim();
        if c.downlink == DownlinkMode::Digital && c.sparsity() > d {
            self.fail("sparsity", format!("must be <= d = {d}"));
        }
        if c.partition == PartitionKind::NonIid {
            if c.model != ModelKind::Softmax {
                self.fail("partition", "noniid needs class labels (model = softmax)");
            } else if !(2 * c.devices).is_multiple_of(c.classes) {
                let rule = if c.classes == 10 {
                    "M must be divisible by 5".to_string()
                } else {
                    format!("2M must be divisible by classes = {}", c.classes)
                };
                self.fail(
                    "devices",
                    format!(
                        "noniid splits each class into 2M/classes shards, so {rule}; got M = {}",
                        c.devices
                    ),
                );
            }
        }
        if c.data == DataSource::Synthetic {
            if c.devices > c.samples {
                self.fail(
                    "devices",
                    format!("{} devices but only {} samples", c.devices, c.samples),
                );
            } else if c.partition == PartitionKind::NonIid && c.model == ModelKind::Softmax {
                let per_class = c.samples / c.classes;
                let shards = 2 * c.devices / c.classes;
                if per_class < shards {
                    self.fail(
                        "samples",
                        format!("{per_class} samples per class cannot fill {shards} shards"),
                    );
                }
            }
        }
        if let Some(p) = &c.bound {
            if let Err(e) = p.validate() {
                self.errors.push(Diagnostic::error(None, e.to_string()));
                return;
            }
            let limit = p.eta_limit();
            if let Some(t) = (0..c.rounds).find(|&t| p.eta_at(t).is_err()) {
                let line = self.map.line("eta").or(self.map.line("tau"));
                self.warnings.push(Diagnostic::warning(
                    line,
                    format!(
                        "step size eta({t}) = {} violates the convergence-bound precondition \
                         0 < eta(t) <= min{{mu/(mu+1), 1/(mu*tau)}} = {limit}",
                        c.eta.eta(t)
                    ),
                ));
            }
        }
    }
}
