//! Coefficient-wise penalty functions `phi_k` and the epsilon-smoothed
//! quadratic majorant used by the reweighted least-squares solver.
//!
//! Every family is concave on `[0, inf)` for exponents in `(0, 1)`, vanishes
//! at zero and grows without bound. A [`PenaltySequence`] assigns one
//! [`PenaltySpec`] to every coefficient of the unknown vector.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// The six penalty shapes. `t` denotes the coefficient magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyFamily {
    /// `t^p`
    Power,
    /// `log(t^p + 1)`
    LogPower,
    /// `log(t + 1) + t^p`
    LogPlusPower,
    /// `(t + t^p)^q`
    PowerSumPower,
    /// `t^p log(t + 1)`
    PowerTimesLog,
    /// `t (log(t + 1))^p`
    LinearTimesLogPower,
}

impl PenaltyFamily {
    pub const ALL: [PenaltyFamily; 6] = [
        PenaltyFamily::Power,
        PenaltyFamily::LogPower,
        PenaltyFamily::LogPlusPower,
        PenaltyFamily::PowerSumPower,
        PenaltyFamily::PowerTimesLog,
        PenaltyFamily::LinearTimesLogPower,
    ];
}

/// Upper bound on exponents accepted in permissive mode. Below 2 the smoothed
/// majorant stays concave in `t = x^2`, which is all the solver needs.
pub const PERMISSIVE_MAX_P: f64 = 2.0;

/// One penalty `phi` with its exponent(s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct PenaltySpec {
    family: PenaltyFamily,
    p: f64,
    q: Option<f64>,
    permissive: bool,
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    family: PenaltyFamily,
    p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    permissive: bool,
}

impl TryFrom<RawSpec> for PenaltySpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        PenaltySpec::build(raw.family, raw.p, raw.q, raw.permissive)
    }
}

impl From<PenaltySpec> for RawSpec {
    fn from(spec: PenaltySpec) -> Self {
        RawSpec {
            family: spec.family,
            p: spec.p,
            q: spec.q,
            permissive: spec.permissive,
        }
    }
}

impl PenaltySpec {
    /// Strict constructor: `p` in `(0, 1]`, and `q` in `(0, 1)` exactly when
    /// the family is [`PenaltyFamily::PowerSumPower`].
    pub fn new(family: PenaltyFamily, p: f64, q: Option<f64>) -> Result<Self> {
        Self::build(family, p, q, false)
    }

    /// Like [`PenaltySpec::new`] but admits exponents up to
    /// [`PERMISSIVE_MAX_P`]. Needed for exponent ramps that start above one.
    /// Sparsity of minimizers is not guaranteed for such coefficients.
    pub fn new_permissive(family: PenaltyFamily, p: f64, q: Option<f64>) -> Result<Self> {
        Self::build(family, p, q, true)
    }

    pub fn power(p: f64) -> Result<Self> {
        Self::new(PenaltyFamily::Power, p, None)
    }

    pub fn log_power(p: f64) -> Result<Self> {
        Self::new(PenaltyFamily::LogPower, p, None)
    }

    fn build(family: PenaltyFamily, p: f64, q: Option<f64>, permissive: bool) -> Result<Self> {
        let p_max = if permissive { PERMISSIVE_MAX_P } else { 1.0 };
        let p_ok = p.is_finite() && p > 0.0 && (p < p_max || (!permissive && p == 1.0));
        if !p_ok {
            return Err(Error::InvalidParameter(format!(
                "exponent p = {p} outside (0, {p_max}{}",
                if permissive { ")" } else { "]" }
            )));
        }
        match (family, q) {
            (PenaltyFamily::PowerSumPower, Some(q)) if q > 0.0 && q < 1.0 => {}
            (PenaltyFamily::PowerSumPower, q) => {
                return Err(Error::InvalidParameter(format!(
                    "power_sum_power needs an outer exponent q in (0, 1), got {q:?}"
                )))
            }
            (_, None) => {}
            (family, Some(_)) => {
                return Err(Error::InvalidParameter(format!(
                    "outer exponent q is only used by power_sum_power, not {family:?}"
                )))
            }
        }
        Ok(PenaltySpec {
            family,
            p,
            q,
            permissive,
        })
    }

    pub fn family(&self) -> PenaltyFamily {
        self.family
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> Option<f64> {
        self.q
    }

    /// `phi(t)`; `t` must be nonnegative.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::Domain {
                what: "penalty_eval",
                value: t,
            });
        }
        Ok(self.value(t))
    }

    /// `phi'(t)` for `t > 0`. The derivative is unbounded at the origin for
    /// `p < 1`, so zero is rejected.
    pub fn derivative(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::Domain {
                what: "penalty_derivative",
                value: t,
            });
        }
        Ok(self.slope(t))
    }

    pub(crate) fn value(&self, t: f64) -> f64 {
        let p = self.p;
        match self.family {
            PenaltyFamily::Power => t.powf(p),
            PenaltyFamily::LogPower => t.powf(p).ln_1p(),
            PenaltyFamily::LogPlusPower => t.ln_1p() + t.powf(p),
            PenaltyFamily::PowerSumPower => (t + t.powf(p)).powf(self.q.unwrap_or(1.0)),
            PenaltyFamily::PowerTimesLog => t.powf(p) * t.ln_1p(),
            PenaltyFamily::LinearTimesLogPower => t * t.ln_1p().powf(p),
        }
    }

    pub(crate) fn slope(&self, t: f64) -> f64 {
        let p = self.p;
        match self.family {
            PenaltyFamily::Power => p * t.powf(p - 1.0),
            PenaltyFamily::LogPower => {
                let tp = t.powf(p);
                p * tp / t / (tp + 1.0)
            }
            PenaltyFamily::LogPlusPower => 1.0 / (1.0 + t) + p * t.powf(p - 1.0),
            PenaltyFamily::PowerSumPower => {
                let q = self.q.unwrap_or(1.0);
                let inner = t + t.powf(p);
                q * inner.powf(q - 1.0) * (1.0 + p * t.powf(p - 1.0))
            }
            PenaltyFamily::PowerTimesLog => {
                p * t.powf(p - 1.0) * t.ln_1p() + t.powf(p) / (1.0 + t)
            }
            PenaltyFamily::LinearTimesLogPower => {
                let l = t.ln_1p();
                l.powf(p) + p * t * l.powf(p - 1.0) / (1.0 + t)
            }
        }
    }
}

/// Per-coefficient penalties `phi(u) = sum_k phi_k(|u_k|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<PenaltySpec>", into = "Vec<PenaltySpec>")]
pub struct PenaltySequence {
    specs: Vec<PenaltySpec>,
}

impl TryFrom<Vec<PenaltySpec>> for PenaltySequence {
    type Error = Error;

    fn try_from(specs: Vec<PenaltySpec>) -> Result<Self> {
        PenaltySequence::new(specs)
    }
}

impl From<PenaltySequence> for Vec<PenaltySpec> {
    fn from(seq: PenaltySequence) -> Self {
        seq.specs
    }
}

impl PenaltySequence {
    pub fn new(specs: Vec<PenaltySpec>) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::InvalidParameter("empty penalty sequence".into()));
        }
        let inf_p = specs.iter().map(|s| s.p).fold(f64::INFINITY, f64::min);
        if !(inf_p > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "exponents must be bounded away from zero, inf p_k = {inf_p}"
            )));
        }
        Ok(PenaltySequence { specs })
    }

    /// One family with per-coefficient exponents, strictly validated.
    pub fn from_exponents(family: PenaltyFamily, exponents: &[f64]) -> Result<Self> {
        let specs = exponents
            .iter()
            .map(|&p| PenaltySpec::new(family, p, None))
            .collect::<Result<Vec<_>>>()?;
        Self::new(specs)
    }

    /// Same as [`PenaltySequence::from_exponents`] with exponents up to
    /// [`PERMISSIVE_MAX_P`] allowed.
    pub fn from_exponents_permissive(family: PenaltyFamily, exponents: &[f64]) -> Result<Self> {
        let specs = exponents
            .iter()
            .map(|&p| PenaltySpec::new_permissive(family, p, None))
            .collect::<Result<Vec<_>>>()?;
        Self::new(specs)
    }

    pub fn uniform(spec: PenaltySpec, n: usize) -> Result<Self> {
        Self::new(vec![spec; n])
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn specs(&self) -> &[PenaltySpec] {
        &self.specs
    }

    pub fn exponents(&self) -> Vec<f64> {
        self.specs.iter().map(|s| s.p).collect()
    }

    pub fn inf_p(&self) -> f64 {
        self.specs.iter().map(|s| s.p).fold(f64::INFINITY, f64::min)
    }

    /// `sum_k phi_k(|x_k|)`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_len(self.specs.len(), x.len())?;
        Ok(self
            .specs
            .iter()
            .zip(x)
            .map(|(s, &xk)| s.value(xk.abs()))
            .sum())
    }
}

/// The smoothed function `Psi_{eps,p}(t)`: linear on `[0, eps^2]`, then
/// `t^{p/2}` shifted down so the two pieces join with matching slope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothedPenalty {
    eps: f64,
    p: f64,
}

impl SmoothedPenalty {
    /// `eps > 0`, `p` in `(0, 2)`; concavity of `Psi` holds on that whole range.
    pub fn new(eps: f64, p: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("eps must be > 0, got {eps}")));
        }
        if !(p > 0.0 && p < PERMISSIVE_MAX_P) {
            return Err(Error::InvalidParameter(format!(
                "smoothing exponent p = {p} outside (0, {PERMISSIVE_MAX_P})"
            )));
        }
        Ok(SmoothedPenalty { eps, p })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::Domain {
                what: "smoothed_psi",
                value: t,
            });
        }
        Ok(smoothed_value(self.eps, self.p, t))
    }

    /// `Psi'(t)`; at the kink `t = eps^2` the left branch is used (both
    /// one-sided derivatives agree there).
    pub fn derivative(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::Domain {
                what: "smoothed_psi_derivative",
                value: t,
            });
        }
        Ok(smoothed_slope(self.eps, self.p, t))
    }
}

#[inline]
pub(crate) fn smoothed_value(eps: f64, p: f64, t: f64) -> f64 {
    let eps2 = eps * eps;
    if t <= eps2 {
        0.5 * p * t / eps.powf(2.0 - p)
    } else {
        t.powf(0.5 * p) - (1.0 - 0.5 * p) * eps.powf(p)
    }
}

#[inline]
pub(crate) fn smoothed_slope(eps: f64, p: f64, t: f64) -> f64 {
    if t <= eps * eps {
        0.5 * p / eps.powf(2.0 - p)
    } else {
        0.5 * p * t.powf(0.5 * p - 1.0)
    }
}

/// Constant `c` with `phi_k(t) >= c t / (t + 1)` for all coefficients, when
/// a closed form is known. `p_min` is the smallest exponent in the sequence.
pub fn growth_constant(family: PenaltyFamily, p_min: f64) -> Option<f64> {
    match family {
        PenaltyFamily::Power | PenaltyFamily::PowerSumPower => Some(1.0),
        PenaltyFamily::LogPower => Some(p_min),
        PenaltyFamily::LogPlusPower => Some(2.0),
        PenaltyFamily::PowerTimesLog | PenaltyFamily::LinearTimesLogPower => None,
    }
}

/// Uniform bound `L` on the sublevel sets `{t : phi_k(t) <= m}`, when a
/// closed form is known. `q_min` is only read for `PowerSumPower`.
pub fn sublevel_bound(family: PenaltyFamily, p_min: f64, q_min: Option<f64>, m: f64) -> Option<f64> {
    match family {
        PenaltyFamily::Power => Some(m.powf(1.0 / p_min).max(1.0)),
        PenaltyFamily::LogPower => Some(m.exp_m1().powf(1.0 / p_min).max(1.0)),
        PenaltyFamily::LogPlusPower => {
            Some(m.exp().max(m.exp_m1() + m.powf(1.0 / p_min)))
        }
        PenaltyFamily::PowerSumPower => {
            let q = q_min?;
            Some(m.powf(1.0 / q).max(1.0) + m.powf(1.0 / (p_min * q)).max(1.0))
        }
        PenaltyFamily::PowerTimesLog | PenaltyFamily::LinearTimesLogPower => None,
    }
}

/// Grid check of the growth and sublevel conditions: every coefficient
/// satisfies `phi_k(t) >= c t/(t+1)` on the grid, and `phi_k(t) <= m`
/// implies `t <= l` there.
pub fn verify_assumptions(seq: &PenaltySequence, c: f64, m: f64, l: f64, grid: &[f64]) -> Result<bool> {
    if grid.is_empty() || grid.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::InvalidParameter(
            "assumption grid must be nonempty and strictly positive".into(),
        ));
    }
    for spec in seq.specs() {
        for &t in grid {
            let v = spec.value(t);
            if v < c * t / (t + 1.0) {
                return Ok(false);
            }
            if v <= m && t > l {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
