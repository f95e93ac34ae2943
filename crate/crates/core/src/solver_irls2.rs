//! Monotone iteratively reweighted least squares for
//! `min 1/2 ||Ax - y||^2 + alpha sum_k phi_k(|x_k|)` with `phi_k(t) = t^{p_k}`
//! (or `log(t^{p_k} + 1)`).
//!
//! Each coefficient penalty is replaced by the smoothed concave function
//! `Psi_{eps,p_k}(x_k^2)`, and each iteration minimizes its tangent quadratic
//! majorant, i.e. solves
//!
//! ```text
//! (A^T A + alpha diag(w(x^i))) x^{i+1} = A^T y,
//! w_k(x) = p_k / max(eps^{2-p_k}, |x_k|^{2-p_k}).
//! ```
//!
//! The smoothed objective `J_eps` decreases monotonically along the iterates.
//! `eps` is driven to its final value through a geometric schedule, warm
//! starting every stage from the previous one.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::duality::CIFunction;
use crate::error::{check_len, Error, Result};
use crate::metrics_report::SparsityMetrics;
use crate::operators::{optimality_residual_inf, NormalSystem};
use crate::penalties::{smoothed_value, PenaltySequence};

/// Which penalty the smoothing is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `phi_k(t) = t^{p_k}`, smoothed as `Psi_{eps,p_k}(t^2)`.
    Power,
    /// `phi_k(t) = log(t^{p_k} + 1)`, smoothed as `log(Psi_{eps,p_k}(t^2) + 1)`.
    LogPower,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Power => "power",
            Variant::LogPower => "log_power",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "power" => Ok(Variant::Power),
            "log_power" | "log" | "logpower" => Ok(Variant::LogPower),
            other => Err(Error::InvalidParameter(format!("unknown variant `{other}`"))),
        }
    }
}

/// Where each `alpha` of a sweep starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AlphaStart {
    /// Always from the ridge initialization `(A^T A + 2 alpha)^{-1} f`.
    Cold,
    /// From the previous alpha's solution.
    Warm,
    /// Cold first; if some stage misses its residual target, redo the alpha
    /// warm-started from the previous alpha's solution.
    #[default]
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Irls2Config {
    /// Regularization strengths, in increasing order.
    pub alpha_list: Vec<f64>,
    pub eps_init: f64,
    pub eps_final: f64,
    pub eps_factor: f64,
    /// Stage stops once the optimality residual (sup norm) drops to this.
    pub inner_tol_inf: f64,
    pub max_inner_iters: usize,
    pub variant: Variant,
    #[serde(default)]
    pub alpha_start: AlphaStart,
    /// Solve independent alphas on separate threads. Only honored with
    /// [`AlphaStart::Cold`], where runs do not depend on each other.
    #[serde(default)]
    pub parallel: bool,
}

impl Default for Irls2Config {
    fn default() -> Self {
        Irls2Config {
            alpha_list: vec![1.0],
            eps_init: 1e-1,
            eps_final: 1e-6,
            eps_factor: 0.1,
            inner_tol_inf: 1e-8,
            max_inner_iters: 5000,
            variant: Variant::Power,
            alpha_start: AlphaStart::Auto,
            parallel: false,
        }
    }
}

impl Irls2Config {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.alpha_list.is_empty() || self.alpha_list.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return bad(format!("alphas must be positive and finite: {:?}", self.alpha_list));
        }
        if self.alpha_list.windows(2).any(|w| w[1] <= w[0]) {
            return bad(format!("alphas must be increasing: {:?}", self.alpha_list));
        }
        if !(self.eps_final > 0.0) || !(self.eps_init >= self.eps_final) {
            return bad(format!(
                "need 0 < eps_final <= eps_init, got {} and {}",
                self.eps_final, self.eps_init
            ));
        }
        if !(self.eps_factor > 0.0 && self.eps_factor < 1.0) {
            return bad(format!("eps_factor must lie in (0, 1), got {}", self.eps_factor));
        }
        if !(self.inner_tol_inf > 0.0) || self.max_inner_iters == 0 {
            return bad("tolerance and iteration cap must be positive".into());
        }
        Ok(())
    }

    /// The decreasing sequence of smoothing levels; the last entry is
    /// exactly `eps_final`.
    pub fn eps_schedule(&self) -> Vec<f64> {
        eps_schedule(self.eps_init, self.eps_final, self.eps_factor)
    }
}

pub fn eps_schedule(init: f64, fin: f64, factor: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut k = 0;
    loop {
        let e = init * factor.powi(k);
        if e <= fin * (1.0 + 1e-9) || k > 10_000 {
            out.push(fin);
            return out;
        }
        out.push(e);
        k += 1;
    }
}

/// `w_k = p_k / max(eps^{2-p_k}, |x_k|^{2-p_k})`, times
/// `1 / (Psi_{eps,p_k}(x_k^2) + 1)` for the log variant. Equals
/// `2 d/dt Psi(t)` (resp. of its logarithm) at `t = x_k^2`.
pub fn weight_vector(pk: &PenaltySequence, eps: f64, x: &[f64], variant: Variant) -> Result<Vec<f64>> {
    check_len(pk.len(), x.len())?;
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be > 0, got {eps}")));
    }
    Ok(pk
        .specs()
        .iter()
        .zip(x)
        .map(|(s, &xk)| {
            let p = s.p();
            let e = 2.0 - p;
            let w = p / eps.powf(e).max(xk.abs().powf(e));
            match variant {
                Variant::Power => w,
                Variant::LogPower => w / (smoothed_value(eps, p, xk * xk) + 1.0),
            }
        })
        .collect())
}

fn penalty_term(pk: &PenaltySequence, eps: f64, x: &[f64], variant: Variant) -> f64 {
    pk.specs()
        .iter()
        .zip(x)
        .map(|(s, &xk)| {
            let v = smoothed_value(eps, s.p(), xk * xk);
            match variant {
                Variant::Power => v,
                Variant::LogPower => v.ln_1p(),
            }
        })
        .sum()
}

/// The smoothed objective `J_eps`. With `y` known this is
/// `1/2 ||Ax - y||^2 + alpha sum_k Psi_k(x_k^2)`; with only `f = A^T y`
/// the data term becomes `1/2 ||Ax||^2 - <x, f>`, which differs by the
/// constant `1/2 ||y||^2`.
pub fn objective_j_eps(
    sys: &NormalSystem,
    alpha: f64,
    eps: f64,
    pk: &PenaltySequence,
    variant: Variant,
    x: &[f64],
) -> Result<f64> {
    check_len(sys.dim(), x.len())?;
    check_len(sys.dim(), pk.len())?;
    Ok(data_term(sys, x) + alpha * penalty_term(pk, eps, x, variant))
}

pub(crate) fn data_term(sys: &NormalSystem, x: &[f64]) -> f64 {
    let ax = sys.op().apply_unchecked(x);
    match sys.y() {
        Some(y) => 0.5 * ax.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(),
        None => {
            0.5 * ax.iter().map(|a| a * a).sum::<f64>()
                - x.iter().zip(sys.f()).map(|(a, b)| a * b).sum::<f64>()
        }
    }
}

/// Ridge initialization `x^0 = (A^T A + 2 alpha I)^{-1} f`.
pub fn init_x0(sys: &NormalSystem, alpha: f64) -> Result<Vec<f64>> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be > 0, got {alpha}")));
    }
    sys.op().gram_solve(&vec![2.0; sys.dim()], alpha, sys.f())
}

/// One iteration of a stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub iter: usize,
    /// `J_eps(x^{i+1})`.
    pub objective: f64,
    /// Optimality residual at `x^{i+1}`.
    pub residual: f64,
    /// `J(x^i) - [J(x^{i+1}) + 1/2 ||A d||^2 + alpha/2 sum_k w_k(x^i) d_k^2]`
    /// with `d = x^{i+1} - x^i`; nonnegative up to rounding.
    pub descent_gap: f64,
    /// `||x^{i+1} - x^i||_inf`.
    pub step_inf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    pub eps: f64,
    pub x: Vec<f64>,
    pub iters: usize,
    pub converged: bool,
    pub residual: f64,
    /// `J_eps` at the stage's starting point.
    pub initial_objective: f64,
    pub trace: Vec<StepRecord>,
}

impl StageResult {
    pub fn objectives(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(self.initial_objective).chain(self.trace.iter().map(|r| r.objective))
    }
}

/// Runs the fixed-`eps` iteration from `x_start` until the optimality
/// residual is at most `tol_inf` or `max_iters` solves were made. A start
/// that already meets the tolerance returns with zero iterations.
#[allow(clippy::too_many_arguments)]
pub fn irls2_stage(
    sys: &NormalSystem,
    alpha: f64,
    eps: f64,
    pk: &PenaltySequence,
    variant: Variant,
    x_start: &[f64],
    tol_inf: f64,
    max_iters: usize,
) -> Result<StageResult> {
    check_len(sys.dim(), x_start.len())?;
    check_len(sys.dim(), pk.len())?;
    if !(tol_inf > 0.0) || !(alpha > 0.0) || !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "stage needs alpha, eps, tol > 0 (alpha = {alpha}, eps = {eps}, tol = {tol_inf})"
        )));
    }
    let mut x = x_start.to_vec();
    let mut objective = objective_j_eps(sys, alpha, eps, pk, variant, &x)?;
    let initial_objective = objective;
    let mut residual = optimality_residual_inf(sys, alpha, eps, pk, variant, &x)?;
    let mut trace = Vec::new();
    let mut iters = 0;
    while residual > tol_inf && iters < max_iters {
        let w = weight_vector(pk, eps, &x, variant)?;
        let next = sys.op().gram_solve(&w, alpha, sys.f())?;
        let d: Vec<f64> = next.iter().zip(&x).map(|(a, b)| a - b).collect();
        let ad = sys.op().apply_unchecked(&d);
        let next_obj = objective_j_eps(sys, alpha, eps, pk, variant, &next)?;
        let quad = 0.5 * ad.iter().map(|v| v * v).sum::<f64>()
            + 0.5 * alpha * w.iter().zip(&d).map(|(wk, dk)| wk * dk * dk).sum::<f64>();
        iters += 1;
        x = next;
        residual = optimality_residual_inf(sys, alpha, eps, pk, variant, &x)?;
        trace.push(StepRecord {
            iter: iters,
            objective: next_obj,
            residual,
            descent_gap: objective - (next_obj + quad),
            step_inf: d.iter().fold(0.0, |m, v| m.max(v.abs())),
        });
        objective = next_obj;
    }
    Ok(StageResult {
        eps,
        x,
        iters,
        converged: residual <= tol_inf,
        residual,
        initial_objective,
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartKind {
    Cold,
    Warm,
}

/// Result of the full `eps` path for one `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Irls2Report {
    pub alpha: f64,
    pub variant: Variant,
    pub start: StartKind,
    pub x_final: Vec<f64>,
    /// Linear solves summed over the `eps` stages of this alpha only.
    pub total_inner_iters: usize,
    pub residual_inf: f64,
    pub eps_final: f64,
    pub converged: bool,
    pub stages: Vec<StageResult>,
    pub metrics: SparsityMetrics,
}

impl Irls2Report {
    /// `J_eps` values per stage, starting point included.
    pub fn objective_trace(&self) -> Vec<Vec<f64>> {
        self.stages.iter().map(|s| s.objectives().collect()).collect()
    }

    pub fn check_converged(&self) -> Result<()> {
        match self.stages.iter().find(|s| !s.converged) {
            None => Ok(()),
            Some(s) => Err(Error::MaxItersExceeded {
                alpha: self.alpha,
                eps: s.eps,
                iters: s.iters,
                residual: s.residual,
            }),
        }
    }
}

/// All alphas of a sweep, in the order of the configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationReport {
    pub runs: Vec<Irls2Report>,
}

impl ContinuationReport {
    pub fn check_converged(&self) -> Result<()> {
        self.runs.iter().try_for_each(Irls2Report::check_converged)
    }

    pub fn get(&self, alpha: f64) -> Option<&Irls2Report> {
        self.runs.iter().find(|r| r.alpha == alpha)
    }
}

/// Runs the `eps` path for one alpha from `x0`.
pub fn solve_eps_path(
    sys: &NormalSystem,
    config: &Irls2Config,
    pk: &PenaltySequence,
    alpha: f64,
    x0: Vec<f64>,
    start: StartKind,
) -> Result<Irls2Report> {
    config.validate()?;
    let mut x = x0;
    let mut stages = Vec::new();
    for eps in config.eps_schedule() {
        let stage = irls2_stage(
            sys,
            alpha,
            eps,
            pk,
            config.variant,
            &x,
            config.inner_tol_inf,
            config.max_inner_iters,
        )?;
        if !stage.converged {
            log::warn!(
                "alpha {alpha:e}, eps {eps:e}: residual {:e} after {} iterations",
                stage.residual,
                stage.iters
            );
        }
        x = stage.x.clone();
        stages.push(stage);
    }
    let last = stages.last().expect("schedule is nonempty");
    let residual_inf = last.residual;
    let metrics = SparsityMetrics::compute(&x, &pk.exponents(), config.eps_final, residual_inf)?;
    Ok(Irls2Report {
        alpha,
        variant: config.variant,
        start,
        total_inner_iters: stages.iter().map(|s| s.iters).sum(),
        residual_inf,
        eps_final: config.eps_final,
        converged: stages.iter().all(|s| s.converged),
        x_final: x,
        stages,
        metrics,
    })
}

/// The full algorithm: for every alpha, an `eps` path warm-started stage to
/// stage; alphas start cold or warm according to `config.alpha_start`.
pub fn solve_continuation(
    sys: &NormalSystem,
    config: &Irls2Config,
    pk: &PenaltySequence,
) -> Result<ContinuationReport> {
    config.validate()?;
    check_len(sys.dim(), pk.len())?;
    let cold = |alpha: f64| -> Result<Irls2Report> {
        solve_eps_path(sys, config, pk, alpha, init_x0(sys, alpha)?, StartKind::Cold)
    };

    if config.alpha_start == AlphaStart::Cold {
        let runs = if config.parallel {
            std::thread::scope(|scope| {
                let handles: Vec<_> = config
                    .alpha_list
                    .iter()
                    .map(|&a| scope.spawn(move || cold(a)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("solver thread panicked"))
                    .collect::<Result<Vec<_>>>()
            })?
        } else {
            config.alpha_list.iter().map(|&a| cold(a)).collect::<Result<Vec<_>>>()?
        };
        return Ok(ContinuationReport { runs });
    }

    let mut runs: Vec<Irls2Report> = Vec::with_capacity(config.alpha_list.len());
    for &alpha in &config.alpha_list {
        let prev = runs.last().map(|r| r.x_final.clone());
        let run = match (config.alpha_start, prev) {
            (AlphaStart::Warm, Some(x)) => solve_eps_path(sys, config, pk, alpha, x, StartKind::Warm)?,
            (AlphaStart::Auto, Some(x)) => {
                let first = cold(alpha)?;
                if first.converged {
                    first
                } else {
                    log::info!("alpha {alpha:e}: cold start missed the tolerance, retrying warm");
                    let warm = solve_eps_path(sys, config, pk, alpha, x, StartKind::Warm)?;
                    if warm.converged || warm.residual_inf <= first.residual_inf {
                        warm
                    } else {
                        first
                    }
                }
            }
            _ => cold(alpha)?,
        };
        runs.push(run);
    }
    Ok(ContinuationReport { runs })
}

/// `F(x) = ||Ax - y||^2 + alpha sum_k psi_k(x_k^2)`, with the unhalved data
/// term. Without `y`, `||Ax||^2 - 2 <x, f>` stands in for the data term.
pub fn generic_objective(sys: &NormalSystem, alpha: f64, psis: &[CIFunction], x: &[f64]) -> Result<f64> {
    check_len(sys.dim(), x.len())?;
    check_len(sys.dim(), psis.len())?;
    let pen: f64 = psis.iter().zip(x).map(|(psi, &xk)| psi.eval(xk * xk)).sum();
    Ok(2.0 * data_term(sys, x) + alpha * pen)
}

/// One step of the general reweighted quadratic scheme: solve
/// `A^T (Ax - y) + alpha diag(s^n) x = 0`, then take
/// `s_k^{n+1} = psi_k'(x_k^2)`.
pub fn generic_irls2_step(
    sys: &NormalSystem,
    alpha: f64,
    psis: &[CIFunction],
    x_n: &[f64],
    s_n: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len(sys.dim(), x_n.len())?;
    check_len(sys.dim(), s_n.len())?;
    check_len(sys.dim(), psis.len())?;
    let x = sys.op().gram_solve(s_n, alpha, sys.f())?;
    let s = psis
        .iter()
        .zip(&x)
        .map(|(psi, &xk)| {
            psi.supergradient(xk * xk).ok_or_else(|| {
                Error::InvalidParameter(format!("{} has no supergradient", psi.label()))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((x, s))
}
