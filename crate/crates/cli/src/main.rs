use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flexreg_cli::config::{parse_alpha_start, parse_alphas};
use flexreg_cli::{
    run_duality_check, run_experiment, run_irl1_demo, Irl1DemoSettings, PartialConfig, PkSpec, ProblemKind, RunConfig,
    RunError, Solver,
};
use flexreg_core::{AlphaStart, Variant};

/// Exit status for configuration errors (matches clap's usage errors).
const EXIT_CONFIG: u8 = 2;
/// Exit status when a solve fails or misses its stopping criterion.
const EXIT_RUN: u8 = 1;

#[derive(Parser)]
#[command(name = "flexreg", version, about = "Sparse regularization with coefficient-wise nonconvex penalties")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Finite-difference gradient problem on a d x d grid.
    Mmatrix {
        /// Interior grid size.
        #[arg(long, env = "FLEXREG_D")]
        d: Option<usize>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Two-control heat equation problem.
    Control {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Numeric Fenchel-duality self test.
    DualityCheck {
        #[arg(long, default_value_t = 20)]
        points: usize,
        #[arg(long, default_value_t = 1e-2)]
        s_min: f64,
        #[arg(long, default_value_t = 1e2)]
        s_max: f64,
        /// Also write the report as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reweighted l1 sparse recovery on a random Gaussian system.
    Irl1Demo {
        #[arg(long, default_value_t = 40)]
        rows: usize,
        #[arg(long, default_value_t = 100)]
        cols: usize,
        /// Nonzeros in the ground truth.
        #[arg(long, default_value_t = 5)]
        sparsity: usize,
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        #[arg(long, default_value_t = 1e-2)]
        alpha: f64,
        #[arg(long, default_value_t = 1e-4)]
        eps_shift: f64,
        #[arg(long, default_value_t = 1e-3)]
        noise: f64,
        #[arg(long, env = "FLEXREG_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

// an alias so clap parses the whole list as one value
type AlphaList = Vec<f64>;

#[derive(Args)]
struct RunArgs {
    /// JSON file with any subset of the run settings.
    #[arg(long, env = "FLEXREG_CONFIG")]
    config: Option<PathBuf>,
    /// `a..bxF` or a comma list.
    #[arg(long, env = "FLEXREG_ALPHAS", value_parser = parse_alphas)]
    alphas: Option<AlphaList>,
    /// ramp | ramp_mmatrix | ramp_control | fixed:P | random[:SEED] | list:P1,P2,...
    #[arg(long, env = "FLEXREG_PK")]
    pk: Option<PkSpec>,
    /// power | log_power
    #[arg(long, env = "FLEXREG_VARIANT")]
    variant: Option<Variant>,
    /// irls2 | irl1
    #[arg(long, env = "FLEXREG_SOLVER")]
    solver: Option<Solver>,
    #[arg(long, env = "FLEXREG_EPS_INIT")]
    eps_init: Option<f64>,
    #[arg(long, env = "FLEXREG_EPS_FINAL")]
    eps_final: Option<f64>,
    #[arg(long, env = "FLEXREG_EPS_FACTOR")]
    eps_factor: Option<f64>,
    /// Stopping tolerance on the sup-norm residual.
    #[arg(long, env = "FLEXREG_TOL")]
    tol: Option<f64>,
    #[arg(long, env = "FLEXREG_MAX_ITERS")]
    max_iters: Option<usize>,
    /// cold | warm | auto
    #[arg(long, env = "FLEXREG_ALPHA_START", value_parser = parse_alpha_start)]
    alpha_start: Option<AlphaStart>,
    /// Solve the alphas concurrently (cold starts only).
    #[arg(long, env = "FLEXREG_PARALLEL")]
    parallel: bool,
    /// Smoothing shift for the irl1 solver.
    #[arg(long, env = "FLEXREG_EPS_SHIFT")]
    eps_shift: Option<f64>,
    #[arg(long, env = "FLEXREG_OUT")]
    out: Option<PathBuf>,
    /// Write per-iteration traces as JSON lines.
    #[arg(long, env = "FLEXREG_TRACE")]
    trace: bool,
    #[arg(long, env = "FLEXREG_SEED")]
    seed: Option<u64>,
}

impl RunArgs {
    fn overrides(&self, d: Option<usize>) -> PartialConfig {
        PartialConfig {
            problem: None,
            d,
            pk: self.pk.clone(),
            solver: self.solver,
            variant: self.variant,
            alphas: self.alphas.clone(),
            eps_init: self.eps_init,
            eps_final: self.eps_final,
            eps_factor: self.eps_factor,
            tol: self.tol,
            max_iters: self.max_iters,
            alpha_start: self.alpha_start,
            parallel: self.parallel.then_some(true),
            eps_shift: self.eps_shift,
            out: self.out.clone(),
            trace: self.trace.then_some(true),
            seed: self.seed,
        }
    }
}

fn fail(e: RunError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(match e {
        RunError::Config(_) => EXIT_CONFIG,
        _ => EXIT_RUN,
    })
}

fn experiment(kind: ProblemKind, args: &RunArgs, d: Option<usize>) -> ExitCode {
    let file = match args.config.as_deref().map(PartialConfig::from_file).transpose() {
        Ok(f) => f,
        Err(e) => return fail(e.into()),
    };
    let cfg = match RunConfig::resolve(kind, file, args.overrides(d)) {
        Ok(c) => c,
        Err(e) => return fail(e.into()),
    };
    log::info!("running {:?} with {} alpha values", cfg.problem, cfg.alphas.len());
    match run_experiment(&cfg) {
        Ok(out) => {
            print!("{}", out.table);
            println!("reports written to {}", out.run_dir.display());
            if out.success() {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: no convergence for alpha = {:?}", out.failed);
                ExitCode::from(EXIT_RUN)
            }
        }
        Err(e) => fail(e),
    }
}

fn write_json(path: &Option<PathBuf>, value: &impl serde::Serialize) -> Result<(), RunError> {
    if let Some(p) = path {
        let text = serde_json::to_string_pretty(value).expect("report serializes") + "\n";
        if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|source| RunError::Io { path: parent.into(), source })?;
        }
        std::fs::write(p, text).map_err(|source| RunError::Io { path: p.clone(), source })?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FLEXREG_LOG", "warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Mmatrix { d, run } => experiment(ProblemKind::Mmatrix, &run, d),
        Command::Control { run } => experiment(ProblemKind::Control, &run, None),
        Command::DualityCheck { points, s_min, s_max, out } => {
            let report = match run_duality_check(points, s_min, s_max) {
                Ok(r) => r,
                Err(e) => return fail(e),
            };
            print!("{}", report.render());
            if let Err(e) = write_json(&out, &report) {
                return fail(e);
            }
            if report.passed() {
                println!("duality check passed");
                ExitCode::SUCCESS
            } else {
                eprintln!("error: duality check exceeded its tolerances");
                ExitCode::from(EXIT_RUN)
            }
        }
        Command::Irl1Demo { rows, cols, sparsity, p, alpha, eps_shift, noise, seed, out } => {
            let settings = Irl1DemoSettings { rows, cols, sparsity, p, alpha, eps_shift, noise, seed };
            let report = match run_irl1_demo(&settings) {
                Ok(r) => r,
                Err(e) => return fail(e),
            };
            println!(
                "outer iterations {}, objective {:.6e} -> {:.6e}, stationarity {:.2e}",
                report.outer_iters, report.initial_objective, report.final_objective, report.stationarity
            );
            println!("true support      {:?}", report.true_support);
            println!("recovered support {:?}", report.recovered_support);
            println!("max coefficient error {:.3e}", report.max_error);
            if let Err(e) = write_json(&out, &report) {
                return fail(e);
            }
            if report.converged {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: outer iteration cap reached");
                ExitCode::from(EXIT_RUN)
            }
        }
    }
}
