//! `hybridcond` command-line driver.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 numerical
//! failure, 4 validation failure. Errors go to stderr as one JSON object.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use hybridcond::bounds::{self, BoundReport};
use hybridcond::experiments::config::linspace;
use hybridcond::experiments::presets::{run_panel, CG_TOLERANCES, EIGENCURVE_SEEDS};
use hybridcond::experiments::{
    run_figure, run_sandwich_suite, ConfigOverrides, ExperimentConfig, Family, Panel, Study,
};
use hybridcond::observation::HVariant;
use hybridcond::Error;

const EXIT_OK: i32 = 0;
const EXIT_IO: i32 = 1;
const EXIT_CONFIG: i32 = 2;
const EXIT_NUMERICAL: i32 = 3;
const EXIT_VALIDATION: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "hybridcond", version, about = "Conditioning of hybrid-covariance variational Hessians")]
struct Cli {
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a figure preset end to end.
    Figure {
        /// Preset id, fig1 to fig8.
        id: String,
        #[command(flatten)]
        out: OutArgs,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Condition numbers and bounds over a grid of weights.
    Sweep {
        #[command(flatten)]
        setup: SetupArgs,
        /// Vary this parameter across `--values` instead of running one sweep.
        #[arg(long, requires = "values")]
        family: Option<String>,
        #[arg(long, value_delimiter = ',', requires = "family")]
        values: Option<Vec<f64>>,
    },
    /// CG iteration counts over a grid of weights.
    Cg {
        #[command(flatten)]
        setup: SetupArgs,
        /// Relative residual tolerances.
        #[arg(long, value_delimiter = ',')]
        tol: Option<Vec<f64>>,
    },
    /// Largest eigenvalues of the static and ensemble covariances against length scale.
    Eigencurve {
        #[command(flatten)]
        setup: SetupArgs,
        #[arg(long, value_delimiter = ',')]
        lengths: Option<Vec<f64>>,
        /// Number of ensemble seeds, numbered from 1.
        #[arg(long, default_value_t = EIGENCURVE_SEEDS)]
        seeds: usize,
    },
    /// Randomised check that every bound brackets its exact value.
    Validate {
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Also write the full report as JSON here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Evaluate the bound formulas from scalar eigenvalue inputs.
    Bounds(BoundsArgs),
}

#[derive(Debug, Args)]
struct OutArgs {
    /// Output directory, created if absent.
    #[arg(long, env = "HYBRIDCOND_OUT_DIR", default_value = "runs")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SetupArgs {
    /// TOML experiment config; overrides below apply on top.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    out: OutArgs,
    #[command(flatten)]
    overrides: OverrideArgs,
}

#[derive(Debug, Args)]
struct OverrideArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    l0: Option<f64>,
    #[arg(long)]
    lens: Option<f64>,
    #[arg(long = "sigma2-b0")]
    sigma2_b0: Option<f64>,
    #[arg(long = "sigma2-pf")]
    sigma2_pf: Option<f64>,
    #[arg(long = "sigma2-r")]
    sigma2_r: Option<f64>,
    /// Observation operator: H1..H4.
    #[arg(long = "h-variant")]
    h_variant: Option<String>,
    /// Number of later observation times with identity propagation.
    #[arg(long)]
    window: Option<usize>,
    /// Explicit weights, comma separated.
    #[arg(long, value_delimiter = ',')]
    beta: Option<Vec<f64>>,
    /// Base seed; ensemble, placement and rhs streams use seed, seed+1, seed+2.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    preconditioned: bool,
}

impl OverrideArgs {
    fn to_overrides(&self) -> Result<ConfigOverrides, Error> {
        Ok(ConfigOverrides {
            n: self.n,
            m: self.m,
            p: self.p,
            l0: self.l0,
            lens: self.lens,
            sigma2_b0: self.sigma2_b0,
            sigma2_pf: self.sigma2_pf,
            sigma2_r: self.sigma2_r,
            h_variant: self.h_variant.as_deref().map(str::parse::<HVariant>).transpose()?,
            window: self.window,
            beta: self.beta.clone(),
            seed: self.seed,
            preconditioned: self.preconditioned.then_some(true),
        })
    }
}

#[derive(Debug, Args)]
struct BoundsArgs {
    #[arg(long = "l1B0")]
    l1_b0: f64,
    #[arg(long = "lnB0")]
    ln_b0: f64,
    #[arg(long = "l1Pf")]
    l1_pf: f64,
    #[arg(long = "l1K")]
    l1_k: f64,
    #[arg(long)]
    beta: f64,
    /// Condition number of B0 if not `l1B0 / lnB0`.
    #[arg(long = "kappaB0")]
    kappa_b0: Option<f64>,
    /// Observation variance for the selection-operator bound.
    #[arg(long = "sigma2-r")]
    sigma2_r: Option<f64>,
    /// Exact extreme eigenvalues of B, enabling the exact-spectrum bound.
    #[arg(long = "l1B", requires = "ln_b")]
    l1_b: Option<f64>,
    #[arg(long = "lnB", requires = "l1_b")]
    ln_b: Option<f64>,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => EXIT_IO,
        e if e.is_numerical() => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

fn report_error(kind: &str, message: &str) {
    eprintln!("{}", json!({ "error": kind, "message": message }));
}

fn load_config(setup: &SetupArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &setup.config {
        Some(path) => ExperimentConfig::from_toml(&std::fs::read_to_string(path)?)?,
        None => ExperimentConfig::default(),
    };
    setup.overrides.to_overrides()?.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn panel_name(prefix: &str, cfg: &ExperimentConfig) -> String {
    format!("{prefix}_{}", if cfg.preconditioned { "prec" } else { "unprec" })
}

fn run_single(panel: Panel, out: &Path) -> Result<Vec<PathBuf>, Error> {
    run_panel(&panel, None, out)
}

fn print_written(paths: &[PathBuf]) {
    let files: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
    println!("{}", json!({ "written": files }));
}

fn bound_reports(a: &BoundsArgs) -> Result<serde_json::Value, Error> {
    let kappa_b0 = a.kappa_b0.unwrap_or(a.l1_b0 / a.ln_b0);
    let (top, bottom) = bounds::bounds_lemma1(a.l1_b0, a.ln_b0, a.l1_pf, a.beta)?;
    let mut reports: Vec<BoundReport> = vec![top, bottom, bounds::bounds_kappa_b(a.l1_b0, a.ln_b0, a.l1_pf, a.beta)?];
    if let (Some(l1_b), Some(ln_b)) = (a.l1_b, a.ln_b) {
        reports.push(bounds::bounds_thm3(l1_b / ln_b, l1_b, ln_b, a.l1_k)?);
    }
    reports.push(bounds::bounds_thm4(a.l1_b0, a.ln_b0, kappa_b0, a.l1_pf, a.l1_k, a.beta)?);
    if let Some(s) = a.sigma2_r {
        reports.push(bounds::bounds_coro2(a.l1_b0, a.ln_b0, kappa_b0, a.l1_pf, s, a.beta)?);
    }
    reports.push(bounds::bounds_thm5(a.l1_b0, a.ln_b0, a.l1_pf, a.l1_k, a.beta)?);
    reports.push(bounds::bounds_thm6(a.l1_b0, a.l1_pf, a.l1_k, a.beta)?);
    Ok(json!({
        "switch_point": bounds::switch_point(a.l1_b0, a.l1_pf)?,
        "reports": reports,
    }))
}

fn dispatch(command: Command) -> Result<i32, Error> {
    match command {
        Command::Figure { id, out, overrides } => {
            print_written(&run_figure(&id, &out.out, &overrides.to_overrides()?)?);
        }
        Command::Sweep { setup, family, values } => {
            let config = load_config(&setup)?;
            let panel = match (family, values) {
                (Some(f), Some(values)) => {
                    let family: Family = f.parse()?;
                    Panel {
                        name: panel_name(&format!("family_{}", family.name()), &config),
                        study: Study::Family { config, family, values },
                        notes: vec![],
                    }
                }
                _ => Panel {
                    name: panel_name("sweep", &config),
                    study: Study::Sweep { config },
                    notes: vec![],
                },
            };
            print_written(&run_single(panel, &setup.out.out)?);
        }
        Command::Cg { setup, tol } => {
            let config = load_config(&setup)?;
            let tolerances = tol.unwrap_or_else(|| CG_TOLERANCES.to_vec());
            if let Some(t) = tolerances.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
                return Err(Error::Config(format!("CG tolerance must lie in (0, 1), got {t}")));
            }
            let panel = Panel {
                name: panel_name("cg", &config),
                study: Study::Cg { config, tolerances },
                notes: vec![],
            };
            print_written(&run_single(panel, &setup.out.out)?);
        }
        Command::Eigencurve { setup, lengths, seeds } => {
            let config = load_config(&setup)?;
            let panel = Panel {
                name: "eigencurve".into(),
                study: Study::EigenCurve {
                    config,
                    lengths: lengths.unwrap_or_else(|| linspace(0.05, 1.0, 20)),
                    seeds: (1..=seeds as u64).collect(),
                },
                notes: vec![],
            };
            print_written(&run_single(panel, &setup.out.out)?);
        }
        Command::Validate { trials, seed, report } => {
            let result = run_sandwich_suite(trials, seed);
            if let Some(path) = report {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir)?;
                }
                std::fs::write(&path, serde_json::to_string_pretty(&result)?)?;
            }
            let failed: Vec<usize> = result.failed_trials.iter().map(|t| t.trial).collect();
            println!(
                "{}",
                json!({
                    "trials": result.trials,
                    "seed": result.seed,
                    "checks": result.checks,
                    "violations": result.violation_count(),
                    "failed_trials": failed,
                    "passed": result.passed(),
                })
            );
            if !result.passed() {
                return Ok(EXIT_VALIDATION);
            }
        }
        Command::Bounds(args) => {
            println!("{}", serde_json::to_string_pretty(&bound_reports(&args)?)?);
        }
    }
    Ok(EXIT_OK)
}

/// Parses `argv` (program name first) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        pool = pool.num_threads(t);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            report_error("ConfigError", &e.to_string());
            return EXIT_CONFIG;
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(code) => code,
        Err(e) => {
            report_error(e.kind(), &e.to_string());
            exit_code(&e)
        }
    }
}

fn main() {
    std::process::exit(run(std::env::args_os()));
}
