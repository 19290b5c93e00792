//! Configuration schema and the commands behind the `cfsec` binary.
//!
//! Every command computes its outputs in memory first and only then writes
//! them, each through a temporary file renamed into place, so a bad config or
//! a solver failure leaves the output directory untouched.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::channel::estimate_gains;
use crate::experiment::{realization_seed, run_campaign, sweep_re, Campaign, ExperimentResult, OptimizerConfig, SchemeSpec, ATTACKED_USER};
use crate::format::round9;
use crate::optimizer::{apg_solve, round_and_polish, DecisionVars, Problem};
use crate::scenario::{generate_scenario, NetworkConfig};
use crate::validation::{self, CheckReport, Status};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub realizations: usize,
    pub eve_radii_m: Vec<f64>,
    pub output_dir: PathBuf,
    /// Worker threads; `None` defers to `CFSEC_THREADS` or all cores.
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self { realizations: 100, eve_radii_m: vec![50.0, 100.0, 150.0, 200.0], output_dir: PathBuf::from("out"), threads: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub network: NetworkConfig,
    pub schemes: Vec<SchemeSpec>,
    pub optimizer: OptimizerConfig,
    pub experiment: ExperimentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { network: NetworkConfig::default(), schemes: SchemeSpec::all(), optimizer: OptimizerConfig::default(), experiment: ExperimentConfig::default() }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn campaign(&self) -> Campaign {
        Campaign { network: self.network.clone(), schemes: self.schemes.clone(), optimizer: self.optimizer.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        self.campaign().validate()?;
        if self.experiment.realizations == 0 {
            return Err(Error::Config("experiment.realizations must be positive".into()));
        }
        if self.experiment.threads == Some(0) {
            return Err(Error::Config("experiment.threads must be positive".into()));
        }
        if let Some(r) = self.experiment.eve_radii_m.iter().find(|r| !(**r > 0.0 && **r < self.network.side_m)) {
            return Err(Error::Config(format!("eve radius {r} must lie in (0, side_m)")));
        }
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(name = "cfsec", version, about = "Secure cell-free massive MIMO downlink simulator and optimizer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the configured campaign at one eavesdropper radius and write per-realization SSE and CDFs.
    Run(RunArgs),
    /// Average SSE over the configured eavesdropper radii.
    Sweep(RunArgs),
    /// Run the self-checks and print one line per check.
    Validate(ValidateArgs),
    /// Dump the solver trace of one realization.
    Trace(TraceArgs),
}

#[derive(Debug, Args)]
pub struct Overrides {
    #[arg(long)]
    pub realizations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, env = "CFSEC_THREADS")]
    pub threads: Option<usize>,
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        if let Some(n) = self.realizations {
            cfg.experiment.realizations = n;
        }
        if let Some(s) = self.seed {
            cfg.network.seed = s;
        }
        if let Some(d) = &self.output_dir {
            cfg.experiment.output_dir = d.clone();
        }
        if let Some(t) = self.threads {
            cfg.experiment.threads = Some(t);
        }
        cfg.validate()
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub config: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Check {
    Gradient,
    Projection,
    Sinr,
    All,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Config supplying the seed; defaults apply when omitted.
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "all")]
    pub check: Check,
    /// Monte-Carlo draws for the SINR check.
    #[arg(long, default_value_t = 10_000)]
    pub draws: usize,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    pub config: PathBuf,
    /// Realization index within the campaign.
    #[arg(long, default_value_t = 0)]
    pub realization: usize,
    #[command(flatten)]
    pub overrides: Overrides,
}

fn threads(cfg: &RunConfig) -> usize {
    cfg.experiment.threads.unwrap_or(0)
}

/// Writes every file under `dir` through a temporary sibling and a rename.
pub fn write_outputs(dir: &Path, files: &[(&str, Vec<u8>)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut staged = Vec::new();
    for (name, bytes) in files {
        let tmp = dir.join(format!(".{name}.tmp"));
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| Error::io(&tmp, e))?;
        staged.push((tmp, dir.join(name)));
    }
    for (tmp, dest) in staged {
        fs::rename(&tmp, &dest).map_err(|e| Error::io(&dest, e))?;
    }
    Ok(())
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory");
    buf
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

fn print_summary(res: &ExperimentResult) {
    println!("{:<12} {:>10} {:>10} {:>10} {:>10} {:>8}", "scheme", "median", "mean", "se", "gain_%", "qos");
    for s in res.summary() {
        let gain = s.gain_over_epa_pct.map_or("-".to_string(), |g| format!("{g:.1}"));
        println!("{:<12} {:>10.4} {:>10.4} {:>10.4} {:>10} {:>8.3}", s.scheme.label(), s.median_sse, s.mean_sse, s.se_sse, gain, s.qos_fraction);
    }
}

pub fn cmd_run(args: &RunArgs) -> Result<ExitCode> {
    let mut cfg = RunConfig::load(&args.config)?;
    args.overrides.apply(&mut cfg)?;
    let res = run_campaign(&cfg.campaign(), cfg.experiment.realizations, threads(&cfg))?;
    let summary = serde_json::json!({
        "eve_radius_m": round9(res.eve_radius_m),
        "rate_threshold": round9(res.rate_threshold),
        "realizations": res.realizations.len(),
        "schemes": res.summary(),
    });
    write_outputs(
        &cfg.experiment.output_dir,
        &[
            ("results.csv", csv_bytes(|b| res.write_csv(b))),
            ("cdf.csv", csv_bytes(|b| res.write_cdf_csv(b))),
            ("summary.json", json_bytes(&summary)?),
        ],
    )?;
    print_summary(&res);
    Ok(ExitCode::SUCCESS)
}

pub fn cmd_sweep(args: &RunArgs) -> Result<ExitCode> {
    let mut cfg = RunConfig::load(&args.config)?;
    args.overrides.apply(&mut cfg)?;
    let sweep = sweep_re(&cfg.campaign(), &cfg.experiment.eve_radii_m, cfg.experiment.realizations, threads(&cfg))?;
    let per_realization = csv_bytes(|b| {
        for (i, r) in sweep.results.iter().enumerate() {
            let mut part = Vec::new();
            r.write_csv(&mut part)?;
            let skip = if i == 0 { 0 } else { part.iter().position(|&c| c == b'\n').map_or(part.len(), |p| p + 1) };
            b.extend_from_slice(&part[skip..]);
        }
        Ok(())
    });
    let summary: Vec<_> = sweep
        .results
        .iter()
        .map(|r| serde_json::json!({ "eve_radius_m": round9(r.eve_radius_m), "schemes": r.summary() }))
        .collect();
    write_outputs(
        &cfg.experiment.output_dir,
        &[("sweep.csv", csv_bytes(|b| sweep.write_csv(b))), ("sweep_realizations.csv", per_realization), ("sweep_summary.json", json_bytes(&summary)?)],
    )?;
    println!("{:>8} {:<12} {:>10} {:>10}", "r_E", "scheme", "mean", "se");
    for p in &sweep.points {
        println!("{:>8.1} {:<12} {:>10.4} {:>10.4}", p.eve_radius_m, p.scheme.label(), p.mean_sse, p.se_sse);
    }
    Ok(ExitCode::SUCCESS)
}

pub fn cmd_validate(args: &ValidateArgs) -> Result<ExitCode> {
    let cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let seed = args.seed.unwrap_or(cfg.network.seed);
    let run = |c: Check| args.check == Check::All || args.check == c;
    let mut reports: Vec<CheckReport> = Vec::new();
    if run(Check::Gradient) {
        reports.push(validation::check_gradient(seed, 100)?);
    }
    if run(Check::Projection) {
        reports.push(validation::check_projection(seed, 1000)?);
    }
    if run(Check::Sinr) {
        #[cfg(feature = "montecarlo")]
        reports.push(validation::check_sinr(seed, args.draws, 5)?);
        #[cfg(not(feature = "montecarlo"))]
        return Err(Error::Config("the sinr check needs the montecarlo feature".into()));
    }
    for r in &reports {
        println!("{r}");
    }
    let failed = reports.iter().any(|r| r.status == Status::Fail);
    Ok(if failed { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

#[derive(Debug, Serialize)]
struct TraceSummary {
    realization: usize,
    seed: u64,
    converged: bool,
    outer_iterations: usize,
    inner_iterations: usize,
    final_rho_pen: f64,
    lipschitz: Vec<f64>,
    relaxed_rate_e: f64,
    relaxed_min_rate: f64,
    relaxed_z_gap: f64,
    rounded_pre_polish_rate_e: f64,
    rounded_rate_e: f64,
    rounded_min_rate: f64,
    rounded_rate_user: f64,
    polish_accepted: bool,
    forced_users: Vec<usize>,
}

pub fn cmd_trace(args: &TraceArgs) -> Result<ExitCode> {
    let mut cfg = RunConfig::load(&args.config)?;
    args.overrides.apply(&mut cfg)?;
    let seed = realization_seed(cfg.network.seed, args.realization);
    let net = NetworkConfig { seed, ..cfg.network.clone() };
    let scn = generate_scenario(&net)?;
    let stats = estimate_gains(&scn, ATTACKED_USER, &cfg.optimizer.grouping())?;
    let problem = Problem::joint(&stats, net.rate_threshold);
    let sol = apg_solve(&problem, &cfg.optimizer.apg, &cfg.optimizer.penalty, &DecisionVars::initial(net.aps, net.users))?;
    let polished = round_and_polish(&sol.vars, &stats, net.rate_threshold, &cfg.optimizer.apg, &sol.weights)?;
    let summary = TraceSummary {
        realization: args.realization,
        seed,
        converged: sol.converged,
        outer_iterations: sol.outer_iterations,
        inner_iterations: sol.inner_iterations,
        final_rho_pen: round9(sol.weights.rho_pen),
        lipschitz: sol.lipschitz.iter().map(|&x| round9(x)).collect(),
        relaxed_rate_e: round9(sol.eval.rate_e),
        relaxed_min_rate: round9(sol.eval.min_rate()),
        relaxed_z_gap: round9(sol.vars.z.iter().map(|z| (z * z - (z * z).round()).abs()).fold(0.0, f64::max)),
        rounded_pre_polish_rate_e: round9(polished.pre_rate_e),
        rounded_rate_e: round9(polished.rate_e),
        rounded_min_rate: round9(polished.min_rate()),
        rounded_rate_user: round9(polished.rates[ATTACKED_USER]),
        polish_accepted: polished.polish_accepted,
        forced_users: polished.forced.clone(),
    };
    write_outputs(
        &cfg.experiment.output_dir,
        &[("trace.csv", csv_bytes(|b| crate::optimizer::write_trace_csv(&sol.trace, b))), ("trace_summary.json", json_bytes(&summary)?)],
    )?;
    println!(
        "{} iterations over {} outer loops; R_E relaxed {:.4}, rounded {:.4}; min R_k {:.4}",
        sol.inner_iterations, sol.outer_iterations, summary.relaxed_rate_e, summary.rounded_rate_e, summary.rounded_min_rate
    );
    Ok(ExitCode::SUCCESS)
}

pub fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Trace(a) => cmd_trace(a),
    }
}

/// Entry point of the binary: parses arguments, runs, and maps errors to a
/// nonzero exit code.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
