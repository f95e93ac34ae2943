//! Experiment runners behind the subcommands.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use flexreg_core::duality::{
    concave_conjugate_numeric, concave_conjugate_power, default_s_max, double_conjugate_residual, fenchel_gap,
    DEFAULT_TOL,
};
use flexreg_core::metrics_report::{
    grid_csv, irls2_trace, render_csv, render_table, singular_count, solution_csv, write_trace_jsonl, TraceRecord,
};
use flexreg_core::problems::{build_heat_control_problem, build_mmatrix_problem};
use flexreg_core::solver_irl1::irl1_solve;
use flexreg_core::solver_irls2::solve_continuation;
use flexreg_core::{
    CIFunction, Irl1Config, Irl1Report, LinearOperator, NormalSystem, PenaltySequence, PenaltySpec, RunRecord,
    SparsityMetrics,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ConfigError, Problem, RunConfig, Solver};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Solver(#[from] flexreg_core::Error),

    #[error("cannot write {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write(path: &Path, contents: &str) -> Result<(), RunError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

fn write_trace(path: &Path, records: &[TraceRecord]) -> Result<(), RunError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    write_trace_jsonl(records, BufWriter::new(file)).map_err(io_err(path))
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub records: Vec<RunRecord>,
    /// Alpha values whose run missed its stopping criterion.
    pub failed: Vec<f64>,
    pub run_dir: PathBuf,
    pub table: String,
}

impl ExperimentOutcome {
    pub fn success(&self) -> bool {
        self.failed.is_empty()
    }
}

fn build_system(problem: &Problem) -> Result<NormalSystem, RunError> {
    Ok(match problem {
        Problem::Mmatrix { d } => build_mmatrix_problem(*d)?.system(),
        Problem::Control => build_heat_control_problem()?.system(),
    })
}

struct AlphaOutput {
    record: RunRecord,
    x: Vec<f64>,
    trace: Vec<TraceRecord>,
    converged: bool,
}

fn irl1_record(cfg: &RunConfig, pk: &PenaltySequence, r: &Irl1Report) -> Result<RunRecord, RunError> {
    let m = SparsityMetrics::compute(&r.x, &pk.exponents(), r.eps_shift, r.stationarity)?;
    Ok(RunRecord {
        alpha: r.alpha,
        iters: r.outer_iters,
        nnz_c: m.nz_complement,
        lp: m.lp_quasi_norm,
        residual_inf: r.stationarity,
        sp: singular_count(&r.x, r.eps_shift)?,
        eps_final: r.eps_shift,
        variant: cfg.variant,
    })
}

fn irl1_trace(r: &Irl1Report) -> Vec<TraceRecord> {
    r.steps
        .iter()
        .map(|s| TraceRecord {
            solver: "irl1".into(),
            alpha: r.alpha,
            eps: r.eps_shift,
            iter: s.iter,
            objective: s.objective,
            residual: s.step_inf,
        })
        .collect()
}

fn solve(cfg: &RunConfig, sys: &NormalSystem) -> Result<Vec<AlphaOutput>, RunError> {
    let pk = cfg.pk.sequence(&cfg.problem, cfg.seed, cfg.penalty_family())?;
    match cfg.solver {
        Solver::Irls2 => {
            let rep = solve_continuation(sys, &cfg.irls2_config(), &pk)?;
            Ok(rep
                .runs
                .iter()
                .map(|r| AlphaOutput {
                    record: RunRecord::from_irls2(r),
                    x: r.x_final.clone(),
                    trace: irls2_trace(r),
                    converged: r.converged,
                })
                .collect())
        }
        Solver::Irl1 => cfg
            .alphas
            .iter()
            .map(|&alpha| {
                let ic = Irl1Config {
                    alpha,
                    eps_shift: cfg.eps_shift,
                    outer_iters: cfg.max_iters,
                    inner_tol: cfg.tol,
                    ..Irl1Config::default()
                };
                let r = irl1_solve(sys, &pk, &ic)?;
                Ok(AlphaOutput {
                    record: irl1_record(cfg, &pk, &r)?,
                    trace: irl1_trace(&r),
                    converged: r.converged,
                    x: r.x,
                })
            })
            .collect(),
    }
}

/// Runs every alpha of `cfg` and writes
/// `<out>/<problem>/<pk>/<variant>/alpha=<v>/{report.json, solution.csv}`
/// (plus `grid.csv` for the M-matrix problem and `trace.jsonl` on request),
/// `table.csv` in the run directory and at the problem root, and the
/// resolved `config.json`.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentOutcome, RunError> {
    cfg.validate()?;
    let sys = build_system(&cfg.problem)?;
    let start = Instant::now();
    let outputs = solve(cfg, &sys)?;
    log::info!("{} alpha values solved in {:.2?}", outputs.len(), start.elapsed());

    let run_dir = cfg.run_dir();
    let config_json = serde_json::to_string_pretty(cfg).expect("config serializes");
    write(&run_dir.join("config.json"), &(config_json + "\n"))?;
    let mut failed = Vec::new();
    for o in &outputs {
        let dir = run_dir.join(format!("alpha={:e}", o.record.alpha));
        write(&dir.join("report.json"), &(o.record.to_json() + "\n"))?;
        write(&dir.join("solution.csv"), &solution_csv(&o.x))?;
        if let Problem::Mmatrix { d } = cfg.problem {
            write(&dir.join("grid.csv"), &grid_csv(&o.x, d)?)?;
        }
        if cfg.trace {
            write_trace(&dir.join("trace.jsonl"), &o.trace)?;
        }
        if o.record.sp != o.record.nnz_c {
            log::warn!(
                "alpha = {:e}: Sp = {} differs from |x|_0^c = {}",
                o.record.alpha,
                o.record.sp,
                o.record.nnz_c
            );
        }
        if !o.converged {
            log::error!("alpha = {:e} missed its stopping criterion", o.record.alpha);
            failed.push(o.record.alpha);
        }
    }
    let records: Vec<RunRecord> = outputs.into_iter().map(|o| o.record).collect();
    let csv = render_csv(&records);
    write(&run_dir.join("table.csv"), &csv)?;
    write(&cfg.problem_dir().join("table.csv"), &csv)?;
    Ok(ExperimentOutcome {
        table: render_table(&records),
        records,
        failed,
        run_dir,
    })
}

/// A function and its derivative.
type Family = (CIFunction, fn(f64) -> f64);

#[derive(Debug, Clone, Serialize)]
pub struct FamilyCheck {
    pub family: String,
    pub max_fenchel_gap: f64,
    /// Most negative `s t - psi(s) - psi_conj(t)` over the grid pairs.
    pub min_fenchel_young: f64,
    pub double_conjugate_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DualityReport {
    pub grid_points: usize,
    pub families: Vec<FamilyCheck>,
    pub power_closed_form_error: f64,
    pub linear_gap: f64,
}

impl DualityReport {
    pub fn passed(&self) -> bool {
        self.families.iter().all(|f| {
            f.max_fenchel_gap <= 1e-4 && f.double_conjugate_residual <= 1e-4 && f.min_fenchel_young >= -1e-6
        }) && self.power_closed_form_error <= 1e-8
            && self.linear_gap <= 1e-12
    }

    pub fn render(&self) -> String {
        let mut s = format!("{:<10} {:>14} {:>14} {:>16}\n", "family", "fenchel_gap", "fenchel_young", "double_conj");
        for f in &self.families {
            s.push_str(&format!(
                "{:<10} {:>14.3e} {:>14.3e} {:>16.3e}\n",
                f.family, f.max_fenchel_gap, f.min_fenchel_young, f.double_conjugate_residual
            ));
        }
        s.push_str(&format!("power closed form vs numeric: {:.3e}\n", self.power_closed_form_error));
        s.push_str(&format!("linear gap: {:.3e}\n", self.linear_gap));
        s
    }
}

/// Fenchel gaps at supergradient pairs and double-conjugate residuals on a
/// log-spaced grid of `points` values in `[s_min, s_max]`, all conjugates
/// computed numerically.
pub fn run_duality_check(points: usize, s_min: f64, s_max: f64) -> Result<DualityReport, RunError> {
    if points < 2 || !(s_min > 0.0 && s_max > s_min) {
        return Err(ConfigError::Field {
            field: "grid",
            msg: format!("need >= 2 points and 0 < s_min < s_max (got {points}, {s_min}, {s_max})"),
        }
        .into());
    }
    let grid: Vec<f64> = (0..points)
        .map(|i| s_min * (s_max / s_min).powf(i as f64 / (points - 1) as f64))
        .collect();
    let families: Vec<Family> = vec![
        (CIFunction::new("sqrt", f64::sqrt), |s| 0.5 / s.sqrt()),
        (CIFunction::new("s^0.25", |s: f64| s.powf(0.25)), |s| 0.25 * s.powf(-0.75)),
        (CIFunction::new("log(s+1)", f64::ln_1p), |s| 1.0 / (1.0 + s)),
    ];
    let mut checks = Vec::new();
    for (psi, grad) in &families {
        let mut gap = 0.0f64;
        let mut fy = f64::INFINITY;
        for &s in &grid {
            gap = gap.max(fenchel_gap(psi, s, grad(s))?.abs());
            for &s2 in &grid {
                fy = fy.min(fenchel_gap(psi, s, grad(s2))?);
            }
        }
        checks.push(FamilyCheck {
            family: psi.label().to_string(),
            max_fenchel_gap: gap,
            min_fenchel_young: fy,
            double_conjugate_residual: double_conjugate_residual(psi, &grid)?,
        });
    }
    let mut closed = 0.0f64;
    let sqrt = CIFunction::new("sqrt", f64::sqrt);
    for &s in &grid {
        let t = 0.5 / s.sqrt();
        let range = default_s_max(t).max(100.0 * s);
        let numeric = concave_conjugate_numeric(&sqrt, t, range, DEFAULT_TOL)?;
        let exact = concave_conjugate_power(0.5, t)?;
        closed = closed.max((numeric - exact).abs() / exact.abs().max(1.0));
    }
    let linear = CIFunction::linear();
    let linear_gap = grid
        .iter()
        .map(|&s| fenchel_gap(&linear, s, 1.0).map(f64::abs))
        .try_fold(0.0f64, |m, g| g.map(|g| m.max(g)))?;
    Ok(DualityReport {
        grid_points: points,
        families: checks,
        power_closed_form_error: closed,
        linear_gap,
    })
}

#[derive(Debug, Clone)]
pub struct Irl1DemoSettings {
    pub rows: usize,
    pub cols: usize,
    pub sparsity: usize,
    pub p: f64,
    pub alpha: f64,
    pub eps_shift: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for Irl1DemoSettings {
    fn default() -> Self {
        Irl1DemoSettings {
            rows: 40,
            cols: 100,
            sparsity: 5,
            p: 0.5,
            alpha: 1e-2,
            eps_shift: 1e-4,
            noise: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Irl1DemoReport {
    pub outer_iters: usize,
    pub converged: bool,
    pub stationarity: f64,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub min_descent_gap: f64,
    pub true_support: Vec<usize>,
    pub recovered_support: Vec<usize>,
    pub max_error: f64,
}

/// Sparse recovery from Gaussian measurements `y = A x + noise`.
pub fn run_irl1_demo(s: &Irl1DemoSettings) -> Result<Irl1DemoReport, RunError> {
    if s.rows == 0 || s.cols == 0 || s.sparsity > s.cols {
        return Err(ConfigError::Field {
            field: "demo size",
            msg: format!("need rows, cols >= 1 and sparsity <= cols (got {}x{}, k = {})", s.rows, s.cols, s.sparsity),
        }
        .into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let scale = 1.0 / (s.rows as f64).sqrt();
    let a: Vec<f64> = (0..s.rows * s.cols)
        .map(|_| {
            // Box-Muller
            let (u, v): (f64, f64) = (rng.random::<f64>().max(f64::MIN_POSITIVE), rng.random());
            scale * (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
        })
        .collect();
    let mut support: Vec<usize> = rand::seq::index::sample(&mut rng, s.cols, s.sparsity).into_vec();
    support.sort_unstable();
    let mut x_true = vec![0.0; s.cols];
    for &k in &support {
        x_true[k] = if rng.random::<bool>() { 1.0 } else { -1.0 } * rng.random_range(1.0..2.0);
    }
    let op = LinearOperator::from_rows(s.rows, s.cols, &a)?;
    let mut y = op.apply(&x_true)?;
    for v in &mut y {
        *v += s.noise * rng.random_range(-1.0..1.0);
    }
    let sys = NormalSystem::from_data(op, y)?;
    let pk = PenaltySequence::uniform(PenaltySpec::power(s.p)?, s.cols)?;
    let cfg = Irl1Config {
        alpha: s.alpha,
        eps_shift: s.eps_shift,
        ..Irl1Config::default()
    };
    let r = irl1_solve(&sys, &pk, &cfg)?;
    let recovered: Vec<usize> = (0..s.cols).filter(|&k| r.x[k].abs() > 1e-3).collect();
    let max_error = r.x.iter().zip(&x_true).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(Irl1DemoReport {
        outer_iters: r.outer_iters,
        converged: r.converged,
        stationarity: r.stationarity,
        initial_objective: r.initial_objective,
        final_objective: r.objectives().last().copied().unwrap_or(r.initial_objective),
        min_descent_gap: r.steps.iter().map(|st| st.descent_gap).fold(f64::INFINITY, f64::min),
        true_support: support,
        recovered_support: recovered,
        max_error,
    })
}
