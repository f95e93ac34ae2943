//! Concave conjugates of concave increasing functions on `[0, inf)`.
//!
//! For `psi` concave and increasing, `psi_conj(t) = inf_{s >= 0} (s t - psi(s))`
//! and the Fenchel inequality `psi(s) + psi_conj(s*) <= s s*` holds with
//! equality exactly at supergradient pairs. The numeric routines here back the
//! majorization identities the reweighted solvers rely on.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A concave increasing scalar function with optional closed-form
/// supergradient and conjugate.
#[derive(Clone)]
pub struct CIFunction {
    label: String,
    eval: ScalarFn,
    supergradient: Option<ScalarFn>,
    conjugate: Option<ScalarFn>,
}

impl fmt::Debug for CIFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CIFunction")
            .field("label", &self.label)
            .field("supergradient", &self.supergradient.is_some())
            .field("conjugate", &self.conjugate.is_some())
            .finish()
    }
}

impl CIFunction {
    pub fn new(label: impl Into<String>, eval: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        CIFunction {
            label: label.into(),
            eval: Arc::new(eval),
            supergradient: None,
            conjugate: None,
        }
    }

    pub fn with_supergradient(mut self, g: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.supergradient = Some(Arc::new(g));
        self
    }

    pub fn with_conjugate(mut self, c: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.conjugate = Some(Arc::new(c));
        self
    }

    /// `s^p` with its closed-form derivative and conjugate, `p` in `(0, 1)`.
    pub fn power(p: f64) -> Self {
        CIFunction::new(format!("s^{p}"), move |s: f64| s.powf(p))
            .with_supergradient(move |s: f64| p * s.powf(p - 1.0))
            .with_conjugate(move |t: f64| {
                concave_conjugate_power(p, t).unwrap_or(f64::NEG_INFINITY)
            })
    }

    pub fn sqrt() -> Self {
        CIFunction::power(0.5)
    }

    /// `s`; its conjugate is `0` for `t >= 1` and `-inf` below.
    pub fn linear() -> Self {
        CIFunction::new("s", |s| s)
            .with_supergradient(|_| 1.0)
            .with_conjugate(|t| if t >= 1.0 { 0.0 } else { f64::NEG_INFINITY })
    }

    /// `log(s + 1)`; conjugate `1 - t + log(t)` on `(0, 1]`, `0` beyond.
    pub fn log1p() -> Self {
        CIFunction::new("log(s+1)", |s: f64| s.ln_1p())
            .with_supergradient(|s| 1.0 / (1.0 + s))
            .with_conjugate(|t: f64| {
                if t >= 1.0 {
                    0.0
                } else if t > 0.0 {
                    1.0 - t + t.ln()
                } else {
                    f64::NEG_INFINITY
                }
            })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, s: f64) -> f64 {
        (self.eval)(s)
    }

    pub fn supergradient(&self, s: f64) -> Option<f64> {
        self.supergradient.as_ref().map(|g| g(s))
    }

    pub fn has_closed_form_conjugate(&self) -> bool {
        self.conjugate.is_some()
    }

    /// Closed-form conjugate if present, numeric otherwise.
    pub fn conjugate(&self, t: f64) -> Result<f64> {
        match &self.conjugate {
            Some(c) => Ok(c(t)),
            None => concave_conjugate_numeric(self, t, default_s_max(t), DEFAULT_TOL),
        }
    }

    /// Sampled check of monotonicity and midpoint concavity.
    pub fn check_shape(&self, grid: &[f64]) -> bool {
        let mut pts: Vec<f64> = grid.iter().copied().filter(|s| *s >= 0.0).collect();
        pts.sort_by(f64::total_cmp);
        let vals: Vec<f64> = pts.iter().map(|&s| self.eval(s)).collect();
        let increasing = vals.windows(2).all(|w| w[1] >= w[0] - 1e-12);
        let concave = pts.iter().zip(&vals).all(|(&a, &fa)| {
            pts.iter().zip(&vals).all(|(&b, &fb)| {
                let mid = self.eval(0.5 * (a + b));
                mid >= 0.5 * (fa + fb) - 1e-12 * (1.0 + mid.abs())
            })
        });
        increasing && concave
    }
}

pub const DEFAULT_TOL: f64 = 1e-10;
const COARSE_POINTS: usize = 256;
/// Smallest positive coarse-grid point relative to `s_max`.
const GRID_SPAN: f64 = 1e-16;
const INV_PHI: f64 = 0.618_033_988_749_894_8;

pub fn default_s_max(t: f64) -> f64 {
    1e6 * (1.0 + t.abs())
}

/// Minimizes a unimodal function on `[0, s_max]`: coarse scan of `s = 0`
/// plus a log-spaced grid, then golden-section refinement around the best
/// grid point. Returns `(argmin, min, attained_at_upper_boundary)`.
pub(crate) fn minimize_unimodal(f: impl Fn(f64) -> f64, s_max: f64, tol: f64) -> (f64, f64, bool) {
    let lo = s_max * GRID_SPAN;
    let mut grid = Vec::with_capacity(COARSE_POINTS + 1);
    grid.push(0.0);
    for i in 0..COARSE_POINTS {
        grid.push(lo * (s_max / lo).powf(i as f64 / (COARSE_POINTS - 1) as f64));
    }
    let vals: Vec<f64> = grid.iter().map(|&s| f(s)).collect();
    // first index of the smallest value, so ties resolve toward s = 0
    let mut best = 0;
    for (i, v) in vals.iter().enumerate() {
        if *v < vals[best] {
            best = i;
        }
    }
    let last = grid.len() - 1;
    if best == last {
        return (grid[last], vals[last], vals[last] < vals[last - 1]);
    }
    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[best + 1];
    let (mut s_best, mut v_best) = (grid[best], vals[best]);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..400 {
        if (b - a) <= tol * (1.0 + c.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    for (s, v) in [(c, fc), (d, fd)] {
        if v < v_best {
            s_best = s;
            v_best = v;
        }
    }
    (s_best, v_best, false)
}

/// Numeric concave conjugate `inf_{0 <= s <= s_max} (s t - psi(s))`.
///
/// Fails with [`Error::BoundaryMinimum`] when the infimand is still
/// decreasing at `s_max`, i.e. the true infimum lies beyond the search range
/// (possibly at `-inf`).
pub fn concave_conjugate_numeric(psi: &CIFunction, t: f64, s_max: f64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) || !(s_max > 0.0) || !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "conjugate needs t >= 0, s_max > 0, tol > 0 (t = {t}, s_max = {s_max}, tol = {tol})"
        )));
    }
    let (_, value, at_boundary) = minimize_unimodal(|s| s * t - psi.eval(s), s_max, tol);
    if at_boundary {
        Err(Error::BoundaryMinimum { s_max })
    } else {
        Ok(value)
    }
}

/// Closed-form conjugate of `s^p`:
/// `(p^{-1/(p-1)} - p^{-p/(p-1)}) t^{p/(p-1)}`, attained at `s = (t/p)^{1/(p-1)}`.
pub fn concave_conjugate_power(p: f64, t: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!("power conjugate needs p in (0,1), got {p}")));
    }
    if !(t > 0.0) {
        return Err(Error::Domain {
            what: "concave_conjugate_power",
            value: t,
        });
    }
    let e1 = 1.0 / (p - 1.0);
    let coeff = 1.0 / p.powf(e1) - 1.0 / p.powf(p * e1);
    Ok(coeff * t.powf(p * e1))
}

/// `s s* - psi(s) - psi_conj(s*)`; nonnegative, zero iff `s*` is a
/// supergradient of `psi` at `s`.
pub fn fenchel_gap(psi: &CIFunction, s: f64, s_star: f64) -> Result<f64> {
    let conj = psi.conjugate(s_star)?;
    Ok(s * s_star - psi.eval(s) - conj)
}

/// Maximum over `grid` of `|psi_conj_conj(s) - psi(s)|`, both conjugations
/// done numerically. Inner evaluations that hit the search boundary are read
/// as `psi_conj(t) = -inf` and drop out of the outer infimum.
pub fn double_conjugate_residual(psi: &CIFunction, grid: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty grid".into()));
    }
    let mut worst: f64 = 0.0;
    for &s in grid {
        let t_max = default_s_max(s);
        let outer = |t: f64| match concave_conjugate_numeric(psi, t, default_s_max(t), DEFAULT_TOL) {
            Ok(c) => s * t - c,
            Err(_) => f64::INFINITY,
        };
        let (_, value, at_boundary) = minimize_unimodal(outer, t_max, DEFAULT_TOL);
        if at_boundary {
            return Err(Error::BoundaryMinimum { s_max: t_max });
        }
        worst = worst.max((value - psi.eval(s)).abs());
    }
    Ok(worst)
}
