//! Benchmark driver: build an instance, solve it with a chosen KKT strategy
//! and report phase timings.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::distillation::{build_distillation, steady_state, BuildError, DistillationParams};
use crate::ipm::{solve, SolveReport, SolveStatus, SolverOptions};
use crate::kkt::{KktPatterns, StrategyKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NOT_OPTIMAL: i32 = 3;

/// Directory for MatrixMarket dumps of every factorized matrix.
pub const DEBUG_DUMP_ENV: &str = "SOLVER_DEBUG_DUMP";

pub const CSV_HEADER: &str = "N,strategy,iterations,init_s,ad_s,linsolve_s,total_s,time_per_iter_s,cg_iters_mean,status";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Distillation,
}

#[derive(Debug, Parser)]
#[command(name = "condensed-ipm", version, about = "Interior-point benchmarks with condensed KKT strategies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one instance.
    Solve(SolveArgs),
    /// Solve every (N, strategy) combination and write a CSV table.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
struct Common {
    #[arg(long, value_enum, default_value = "distillation")]
    model: ModelKind,
    /// KKT tolerance
    #[arg(long, default_value_t = SolverOptions::default().tol)]
    tol: f64,
    /// HyKKT augmentation parameter
    #[arg(long, default_value_t = SolverOptions::default().gamma)]
    gamma: f64,
    /// half-width of the relaxed equalities (lifted)
    #[arg(long = "tau-relax", default_value_t = SolverOptions::default().tau_relax)]
    tau_relax: f64,
    #[arg(long = "max-iter", default_value_t = SolverOptions::default().max_iter)]
    max_iter: usize,
    /// TOML file overriding model parameters
    #[arg(long)]
    params: Option<PathBuf>,
    /// relative noise added to the initial profile (0 keeps the steady state)
    #[arg(long, default_value_t = 0.0)]
    perturb: f64,
    /// seed of the perturbation
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// solve this many times and keep the fastest run
    #[arg(long, default_value_t = 1)]
    repeat: usize,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    #[arg(short = 'N', long = "N", default_value_t = 10)]
    n: usize,
    #[arg(long = "kkt", value_enum, default_value = "hykkt")]
    kkt: StrategyKind,
    /// JSON report path (`-` for stdout)
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(short = 'N', long = "N", value_delimiter = ',', default_values_t = [10, 100])]
    n: Vec<usize>,
    #[arg(long = "kkt", value_enum, value_delimiter = ',', default_values_t = [StrategyKind::Hykkt])]
    kkt: Vec<StrategyKind>,
    /// CSV output path (stdout when absent)
    #[arg(long)]
    csv: Option<PathBuf>,
    /// run configurations concurrently (timings are then contended)
    #[arg(long)]
    parallel: bool,
}

/// One fully resolved run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub model: ModelKind,
    #[serde(rename = "N")]
    pub n: usize,
    pub strategy: StrategyKind,
    pub tol: f64,
    pub gamma: f64,
    pub tau_relax: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub perturb: f64,
    pub repeat: usize,
    pub params_file: Option<PathBuf>,
    pub dump_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(n: usize, strategy: StrategyKind) -> Self {
        let d = SolverOptions::default();
        Self {
            model: ModelKind::Distillation,
            n,
            strategy,
            tol: d.tol,
            gamma: d.gamma,
            tau_relax: d.tau_relax,
            max_iter: d.max_iter,
            seed: 0,
            perturb: 0.0,
            repeat: 1,
            params_file: None,
            dump_dir: None,
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            gamma: self.gamma,
            tau_relax: self.tau_relax,
            max_iter: self.max_iter,
            strategy: self.strategy,
            dump_dir: self.dump_dir.clone(),
            ..SolverOptions::default()
        }
    }

    fn from_common(c: &Common, n: usize, strategy: StrategyKind) -> Self {
        Self {
            model: c.model,
            n,
            strategy,
            tol: c.tol,
            gamma: c.gamma,
            tau_relax: c.tau_relax,
            max_iter: c.max_iter,
            seed: c.seed,
            perturb: c.perturb,
            repeat: c.repeat,
            params_file: c.params.clone(),
            dump_dir: std::env::var_os(DEBUG_DUMP_ENV).filter(|v| !v.is_empty()).map(PathBuf::from),
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot serialize report: {0}")]
    Json(#[from] serde_json::Error),
}

/// Problem sizes recorded alongside the solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dimensions {
    pub n: usize,
    pub m_e: usize,
    pub m_i: usize,
    pub hessian_nnz: usize,
    pub jacobian_nnz: usize,
}

/// Everything written to the JSON report of one run.
#[derive(Debug, Clone, Serialize)]
pub struct RunOutput {
    pub config: RunConfig,
    pub params: DistillationParams,
    pub options: SolverOptions,
    pub dimensions: Dimensions,
    /// seconds spent building and compiling the model (included in `init_s`)
    pub build_s: f64,
    /// timers were measured while other runs shared the machine
    pub contended: bool,
    pub report: SolveReport,
}

impl RunOutput {
    pub fn status(&self) -> SolveStatus {
        self.report.status
    }

    pub fn csv_row(&self) -> String {
        let r = &self.report;
        let t = &r.timers;
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.config.n,
            self.config.strategy,
            r.iterations,
            t.init_s,
            t.ad_s,
            t.linsolve_s,
            t.total_s,
            t.total_s / r.iterations.max(1) as f64,
            r.cg_iterations_mean,
            r.status
        )
    }

    pub fn table_row(&self) -> String {
        let r = &self.report;
        let t = &r.timers;
        format!(
            "{:>6} {:>10} {:>6} {:>9.3} {:>9.3} {:>11.3} {:>9.3}  {}",
            self.config.n, self.config.strategy.as_str(), r.iterations, t.init_s, t.ad_s, t.linsolve_s, t.total_s, r.status
        )
    }
}

pub fn table_header() -> String {
    format!(
        "{:>6} {:>10} {:>6} {:>9} {:>9} {:>11} {:>9}  status",
        "N", "strategy", "iters", "init(s)", "AD(s)", "linsolve(s)", "total(s)"
    )
}

/// Model parameters for a run: defaults, then the override file, then the
/// seeded perturbation of the initial profile.
pub fn resolve_params(config: &RunConfig) -> Result<DistillationParams, CliError> {
    let mut p = match &config.params_file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.clone(), source })?;
            DistillationParams::from_toml_str(&text)?
        }
        None => DistillationParams::default(),
    };
    if !(config.perturb >= 0.0 && config.perturb.is_finite()) {
        return Err(CliError::Config(format!("perturbation must be non-negative, got {}", config.perturb)));
    }
    if config.perturb > 0.0 {
        let base = match &p.initial_profile {
            Some(v) => v.clone(),
            None => steady_state(&p, p.u_setpoint)?,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let profile =
            base.iter().map(|&x| (x * (1.0 + config.perturb * rng.random_range(-1.0..1.0))).clamp(1e-6, 1.0 - 1e-6)).collect();
        p.initial_profile = Some(profile);
    }
    Ok(p)
}

/// Builds and solves one configuration.
pub fn run(config: &RunConfig) -> Result<RunOutput, CliError> {
    if config.repeat == 0 {
        return Err(CliError::Config("repeat must be at least 1".into()));
    }
    if let Some(dir) = &config.dump_dir {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.clone(), source })?;
    }
    let params = resolve_params(config)?;
    let options = config.solver_options();
    options.validate().map_err(CliError::Config)?;

    let mut best: Option<RunOutput> = None;
    for _ in 0..config.repeat {
        let t = Instant::now();
        let inst = build_distillation(config.n, params.clone())?;
        let build_s = t.elapsed().as_secs_f64();
        let mut report = solve(&inst.model, &options);
        report.timers.init_s += build_s;
        report.timers.total_s += build_s;
        let m = &inst.model;
        let patterns = KktPatterns::from_model(m);
        let out = RunOutput {
            config: config.clone(),
            params: inst.params.clone(),
            options: options.clone(),
            dimensions: Dimensions {
                n: m.n(),
                m_e: m.m_e(),
                m_i: m.m_i(),
                hessian_nnz: patterns.w.nnz(),
                jacobian_nnz: patterns.g.nnz() + patterns.h.nnz(),
            },
            build_s,
            contended: false,
            report,
        };
        if best.as_ref().is_none_or(|b| out.report.timers.total_s < b.report.timers.total_s) {
            best = Some(out);
        }
    }
    Ok(best.expect("repeat >= 1"))
}

fn write_output(path: &Path, text: &str) -> Result<(), CliError> {
    if path == Path::new("-") {
        print!("{text}");
        return Ok(());
    }
    std::fs::write(path, text).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// CSV text for a set of finished runs.
pub fn sweep_csv(rows: &[RunOutput]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{}", r.csv_row());
    }
    s
}

/// Runs the configurations in order, or all at once with `parallel`.
/// Failed builds become rows with status `StrategyFailure`.
pub fn sweep(configs: &[RunConfig], parallel: bool) -> Vec<Result<RunOutput, CliError>> {
    if !parallel || configs.len() < 2 {
        return configs.iter().map(run).collect();
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = configs.iter().map(|c| scope.spawn(move || run(c))).collect();
        handles
            .into_iter()
            .map(|h| {
                h.join().unwrap_or_else(|_| Err(CliError::Config("run panicked".into()))).map(|mut o| {
                    o.contended = true;
                    o
                })
            })
            .collect()
    })
}

fn failure_row(c: &RunConfig) -> String {
    format!("{},{},0,0,0,0,0,0,0,{}", c.n, c.strategy, SolveStatus::StrategyFailure)
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match cli.command {
        Command::Solve(a) => {
            let config = RunConfig::from_common(&a.common, a.n, a.kkt);
            let out = match run(&config) {
                Ok(o) => o,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_USAGE;
                }
            };
            let to_stdout = a.report.as_deref() == Some(Path::new("-"));
            let table = format!("{}\n{}\n", table_header(), out.table_row());
            if to_stdout {
                eprint!("{table}");
            } else {
                print!("{table}");
            }
            if let Some(msg) = &out.report.message {
                eprintln!("{}: {msg}", out.report.status);
            }
            if let Some(path) = &a.report {
                let text = match serde_json::to_string_pretty(&out) {
                    Ok(t) => t + "\n",
                    Err(e) => {
                        eprintln!("error: {e}");
                        return EXIT_USAGE;
                    }
                };
                if let Err(e) = write_output(path, &text) {
                    eprintln!("error: {e}");
                    return EXIT_USAGE;
                }
            }
            if out.status() == SolveStatus::Optimal {
                EXIT_OK
            } else {
                EXIT_NOT_OPTIMAL
            }
        }
        Command::Sweep(a) => {
            let configs: Vec<RunConfig> = a
                .n
                .iter()
                .flat_map(|&n| a.kkt.iter().map(move |&k| (n, k)))
                .map(|(n, k)| RunConfig::from_common(&a.common, n, k))
                .collect();
            let results = sweep(&configs, a.parallel);
            let mut csv = String::from(CSV_HEADER);
            csv.push('\n');
            let mut all_optimal = true;
            let mut table = table_header() + "\n";
            for (c, r) in configs.iter().zip(&results) {
                match r {
                    Ok(o) => {
                        all_optimal &= o.status() == SolveStatus::Optimal;
                        csv += &(o.csv_row() + "\n");
                        table += &(o.table_row() + "\n");
                    }
                    Err(e) => {
                        all_optimal = false;
                        eprintln!("N={} {}: {e}", c.n, c.strategy);
                        csv += &(failure_row(c) + "\n");
                    }
                }
            }
            if a.parallel {
                table += "(timings measured concurrently)\n";
            }
            match &a.csv {
                Some(path) => {
                    print!("{table}");
                    if let Err(e) = write_output(path, &csv) {
                        eprintln!("error: {e}");
                        return EXIT_USAGE;
                    }
                }
                None => {
                    eprint!("{table}");
                    print!("{csv}");
                }
            }
            let _ = std::io::stdout().flush();
            if all_optimal {
                EXIT_OK
            } else {
                EXIT_NOT_OPTIMAL
            }
        }
    }
}
