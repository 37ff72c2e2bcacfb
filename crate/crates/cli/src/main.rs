use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use feelsim::bound::{self, BoundParams, SweepParam, DEFAULT_HORIZON};
use feelsim::config::{ConfigMap, Diagnostics, SimConfig, KEYS};
use feelsim::sim;

const CONFIG_ERROR: u8 = 1;
const RUNTIME_ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "feelsim", version, about = "Federated edge learning over fading channels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its per-round trace as CSV.
    #[command(after_help = keys_help())]
    Run {
        /// Flat `key = value` config file.
        config: PathBuf,
        /// Trace destination; stdout when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Per-key overrides: `--tau 5 --p_dl=10`.
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
        overrides: Vec<String>,
    },
    /// Sweep one parameter of the convergence bound and write one CSV per value.
    Bound {
        /// tau, Pdl, M, G2, Gamma, Z2, mu, L, sigma_dl or init_gap.
        #[arg(long)]
        vary: SweepParam,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        tau: Option<usize>,
        #[arg(long = "Pdl")]
        p_dl: Option<f64>,
        #[arg(long = "M")]
        devices: Option<usize>,
        #[arg(long = "G2")]
        g2: Option<f64>,
        #[arg(long = "Gamma")]
        gamma: Option<f64>,
        #[arg(long = "Z2")]
        z2: Option<f64>,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long = "L")]
        l: Option<f64>,
        #[arg(long)]
        sigma_dl: Option<f64>,
        #[arg(long)]
        init_gap: Option<f64>,
        /// Horizon in rounds.
        #[arg(long = "T", default_value_t = DEFAULT_HORIZON)]
        horizon: usize,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
}

fn keys_help() -> String {
    let mut s = String::from("Config keys (default in brackets):\n");
    for (key, default, doc) in KEYS {
        s.push_str(&format!("  {key:<13} [{default}] {doc}\n"));
    }
    s
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Diagnostics> for Failure {
    fn from(d: Diagnostics) -> Self {
        Failure::Config(d.to_string())
    }
}

impl From<feelsim::Error> for Failure {
    fn from(e: feelsim::Error) -> Self {
        Failure::Runtime(format!("error: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(CONFIG_ERROR)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run { config, out, overrides } => run(&config, out.as_deref(), &overrides),
        Command::Validate { config } => validate(&config),
        Command::Bound {
            vary,
            values,
            tau,
            p_dl,
            devices,
            g2,
            gamma,
            z2,
            mu,
            l,
            sigma_dl,
            init_gap,
            horizon,
            out_dir,
        } => {
            let r = BoundParams::reference();
            let template = BoundParams {
                tau: tau.unwrap_or(r.tau),
                p_dl: p_dl.unwrap_or(r.p_dl),
                devices: devices.unwrap_or(r.devices),
                g2: g2.unwrap_or(r.g2),
                gamma: gamma.unwrap_or(r.gamma),
                z2: z2.unwrap_or(r.z2),
                mu: mu.unwrap_or(r.mu),
                l: l.unwrap_or(r.l),
                sigma_dl: sigma_dl.unwrap_or(r.sigma_dl),
                init_gap: init_gap.unwrap_or(r.init_gap),
                eta: None,
            };
            sweep(&template, vary, &values, horizon, &out_dir)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(CONFIG_ERROR)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(RUNTIME_ERROR)
        }
    }
}

/// Turns `--key value` / `--key=value` tokens into config entries.
fn parse_overrides(tokens: &[String]) -> Result<Vec<(String, String)>, Failure> {
    let mut pairs = Vec::new();
    let mut it = tokens.iter();
    while let Some(tok) = it.next() {
        let Some(flag) = tok.strip_prefix("--") else {
            return Err(Failure::Config(format!("error: expected `--key value`, got `{tok}`")));
        };
        let (key, value) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| Failure::Config(format!("error: `--{flag}` needs a value")))?;
                (flag.to_string(), v.clone())
            }
        };
        pairs.push((key, value));
    }
    Ok(pairs)
}

fn load(path: &Path, overrides: &[(String, String)]) -> Result<feelsim::config::Checked, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::Config(format!("error: cannot read {}: {e}", path.display())))?;
    let mut map = ConfigMap::parse(&text)?;
    for (k, v) in overrides {
        map.set(k, v)?;
    }
    let mut checked = SimConfig::from_map(&map)?;
    checked.config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    Ok(checked)
}

fn run(path: &Path, out: Option<&Path>, overrides: &[String]) -> Result<(), Failure> {
    let checked = load(path, &parse_overrides(overrides)?)?;
    for w in &checked.warnings {
        eprintln!("{w}");
    }
    let report = sim::run(checked.config)?;
    match out {
        Some(p) => report.write_csv_atomic(p)?,
        None => {
            let mut buf = Vec::new();
            report.write_csv(&mut buf)?;
            // a closed pipe (`| head`) is not a failure
            match io::stdout().lock().write_all(&buf) {
                Err(e) if e.kind() != io::ErrorKind::BrokenPipe => {
                    return Err(Failure::Runtime(format!("error: cannot write trace: {e}")));
                }
                _ => {}
            }
        }
    }
    Ok(())
}

fn validate(path: &Path) -> Result<(), Failure> {
    let checked = load(path, &[])?;
    for w in &checked.warnings {
        println!("{w}");
    }
    println!("ok");
    Ok(())
}

fn sweep(template: &BoundParams, vary: SweepParam, values: &[f64], horizon: usize, dir: &Path) -> Result<(), Failure> {
    if horizon == 0 {
        return Err(Failure::Config("error: --T must be at least 1".into()));
    }
    let curves = bound::sweep(template, vary, values, horizon).map_err(|e| Failure::Config(format!("error: {e}")))?;
    fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("error: cannot create {}: {e}", dir.display())))?;
    let best = bound::best_curve(&curves);
    let mut stdout = io::stdout().lock();
    for (k, c) in curves.iter().enumerate() {
        let file = dir.join(format!("bound_{vary}_{}.csv", c.value));
        let mut buf = Vec::new();
        c.write_csv(&mut buf)?;
        fs::write(&file, buf).map_err(|e| Failure::Runtime(format!("error: cannot write {}: {e}", file.display())))?;
        let _ = writeln!(
            stdout,
            "{vary}={}\tfinal={:e}\tplateaued={}\t{}{}",
            c.value,
            c.final_loss(),
            bound::plateaued(&c.loss, 0.1, 1e-6),
            file.display(),
            if best == Some(k) { "\tbest" } else { "" },
        );
    }
    Ok(())
}
