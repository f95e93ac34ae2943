//! Run configuration: defaults per problem, a JSON config file, and
//! command-line/environment overrides, merged in that order.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use flexreg_core::problems::{pk_ramp_control, pk_ramp_mmatrix, pk_random, HeatSettings};
use flexreg_core::{AlphaStart, Irls2Config, PenaltyFamily, PenaltySequence, Variant};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid {field}: {msg}")]
    Field { field: &'static str, msg: String },

    #[error("cannot read config file {}: {source}", path.display())]
    Read { path: PathBuf, source: std::io::Error },

    #[error("config file {}, line {line}, column {column}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        msg: String,
    },
}

fn field(field: &'static str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Field { field, msg: msg.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Mmatrix,
    Control,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Problem {
    Mmatrix { d: usize },
    Control,
}

impl Problem {
    pub fn kind(&self) -> ProblemKind {
        match self {
            Problem::Mmatrix { .. } => ProblemKind::Mmatrix,
            Problem::Control => ProblemKind::Control,
        }
    }

    /// Number of unknowns.
    pub fn dim(&self) -> usize {
        match self {
            Problem::Mmatrix { d } => d * d,
            Problem::Control => 2 * HeatSettings::default().m,
        }
    }

    /// Directory name under the output root.
    pub fn dir_name(&self) -> String {
        match self {
            Problem::Mmatrix { d } => format!("mmatrix_d{d}"),
            Problem::Control => "control".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Irls2,
    Irl1,
}

impl FromStr for Solver {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "irls2" | "irls" => Ok(Solver::Irls2),
            "irl1" => Ok(Solver::Irl1),
            _ => Err(format!("unknown solver '{s}' (expected irls2 or irl1)")),
        }
    }
}

pub fn parse_alpha_start(s: &str) -> Result<AlphaStart, String> {
    match s.to_ascii_lowercase().as_str() {
        "cold" => Ok(AlphaStart::Cold),
        "warm" => Ok(AlphaStart::Warm),
        "auto" => Ok(AlphaStart::Auto),
        _ => Err(format!("unknown alpha start '{s}' (expected cold, warm or auto)")),
    }
}

/// Exponent sequence descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PkSpec {
    /// The problem's own ramp.
    Ramp,
    RampMmatrix,
    RampControl,
    Fixed(f64),
    /// Seeded uniform draws; without a seed the run's `seed` is used.
    Random(Option<u64>),
    List(Vec<f64>),
}

impl fmt::Display for PkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PkSpec::Ramp => write!(f, "ramp"),
            PkSpec::RampMmatrix => write!(f, "ramp_mmatrix"),
            PkSpec::RampControl => write!(f, "ramp_control"),
            PkSpec::Fixed(p) => write!(f, "fixed:{p}"),
            PkSpec::Random(None) => write!(f, "random"),
            PkSpec::Random(Some(s)) => write!(f, "random:{s}"),
            PkSpec::List(v) => {
                let items: Vec<String> = v.iter().map(|p| p.to_string()).collect();
                write!(f, "list:{}", items.join(","))
            }
        }
    }
}

impl FromStr for PkSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let (head, rest) = match s.split_once(':') {
            Some((h, r)) => (h, Some(r)),
            None => (s, None),
        };
        let float = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("bad exponent '{v}': {e}"));
        match (head.to_ascii_lowercase().replace('-', "_").as_str(), rest) {
            ("ramp", None) => Ok(PkSpec::Ramp),
            ("ramp_mmatrix", None) => Ok(PkSpec::RampMmatrix),
            ("ramp_control", None) => Ok(PkSpec::RampControl),
            ("fixed", Some(p)) => Ok(PkSpec::Fixed(float(p)?)),
            ("random", None) => Ok(PkSpec::Random(None)),
            ("random", Some(seed)) => seed
                .trim()
                .parse()
                .map(|s| PkSpec::Random(Some(s)))
                .map_err(|e| format!("bad seed '{seed}': {e}")),
            ("list", Some(items)) => items.split(',').map(float).collect::<Result<_, _>>().map(PkSpec::List),
            _ if s.contains(',') => s.split(',').map(float).collect::<Result<_, _>>().map(PkSpec::List),
            _ => Err(format!(
                "unknown exponent sequence '{s}' (expected ramp, ramp_mmatrix, ramp_control, fixed:P, random[:SEED] or a list)"
            )),
        }
    }
}

impl TryFrom<String> for PkSpec {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<PkSpec> for String {
    fn from(p: PkSpec) -> String {
        p.to_string()
    }
}

impl PkSpec {
    /// Directory-safe name.
    pub fn label(&self, seed: u64) -> String {
        match self {
            PkSpec::Ramp => "ramp".into(),
            PkSpec::RampMmatrix => "ramp_mmatrix".into(),
            PkSpec::RampControl => "ramp_control".into(),
            PkSpec::Fixed(p) => format!("fixed_{p}"),
            PkSpec::Random(s) => format!("random_{}", s.unwrap_or(seed)),
            PkSpec::List(v) => format!("list_{}", v.len()),
        }
    }

    /// Exponents for a problem with `n` unknowns. Checks only lengths and
    /// ranges, so it can run before any problem is assembled.
    pub fn exponents(&self, problem: &Problem, seed: u64) -> Result<Vec<f64>, ConfigError> {
        let n = problem.dim();
        let core = |e: flexreg_core::Error| field("pk", e.to_string());
        let ramp_control = |n: usize| {
            if n != 100 {
                return Err(field("pk", format!("ramp_control needs N = 100, this problem has N = {n}")));
            }
            pk_ramp_control(n).map_err(core)
        };
        match self {
            PkSpec::Ramp => match problem.kind() {
                ProblemKind::Mmatrix => pk_ramp_mmatrix(n).map_err(core),
                ProblemKind::Control => ramp_control(n),
            },
            PkSpec::RampMmatrix => pk_ramp_mmatrix(n).map_err(core),
            PkSpec::RampControl => ramp_control(n),
            PkSpec::Fixed(p) => Ok(vec![*p; n]),
            PkSpec::Random(s) => pk_random(n, s.unwrap_or(seed)).map_err(core),
            PkSpec::List(v) if v.len() == n => Ok(v.clone()),
            PkSpec::List(v) => Err(field("pk", format!("list has {} exponents, problem has N = {n}", v.len()))),
        }
    }

    /// Penalty sequence of the given family. The M-matrix ramp starts at
    /// p = 1.1 and needs the relaxed exponent range.
    pub fn sequence(&self, problem: &Problem, seed: u64, family: PenaltyFamily) -> Result<PenaltySequence, ConfigError> {
        let ps = self.exponents(problem, seed)?;
        let relaxed = matches!(self, PkSpec::RampMmatrix)
            || (matches!(self, PkSpec::Ramp) && problem.kind() == ProblemKind::Mmatrix);
        let seq = if relaxed {
            PenaltySequence::from_exponents_permissive(family, &ps)
        } else {
            PenaltySequence::from_exponents(family, &ps)
        };
        seq.map_err(|e| field("pk", e.to_string()))
    }
}

/// Alpha list: `a..bxF` (geometric from `a` up to `b` by factor `F`), a
/// comma list, or a single value.
pub fn parse_alphas(s: &str) -> Result<Vec<f64>, String> {
    let s = s.trim();
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("bad alpha '{v}': {e}"));
    if let Some((a, rest)) = s.split_once("..") {
        let (b, factor) = rest
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("range '{s}' needs a factor, e.g. 1e-4..10x10"))?;
        let (a, b, factor) = (num(a)?, num(b)?, num(factor)?);
        if !(a > 0.0 && b >= a && factor > 1.0) {
            return Err(format!("range '{s}' needs 0 < a <= b and factor > 1"));
        }
        let mut out = Vec::new();
        let mut k = 0;
        loop {
            let v = a * factor.powi(k);
            if v > b * (1.0 + 1e-9) {
                break;
            }
            // strip the rounding noise of repeated multiplication
            out.push(format!("{v:.12e}").parse().expect("formatted float parses"));
            k += 1;
        }
        return Ok(out);
    }
    s.split(',').map(num).collect()
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum AlphaField {
    List(Vec<f64>),
    Spec(String),
}

fn deserialize_alphas<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<Vec<f64>>, D::Error> {
    match Option::<AlphaField>::deserialize(d)? {
        None => Ok(None),
        Some(AlphaField::List(v)) => Ok(Some(v)),
        Some(AlphaField::Spec(s)) => parse_alphas(&s).map(Some).map_err(serde::de::Error::custom),
    }
}

/// Every setting optional: the shape of both the config file and the
/// command-line overrides.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub problem: Option<ProblemKind>,
    pub d: Option<usize>,
    pub pk: Option<PkSpec>,
    pub solver: Option<Solver>,
    pub variant: Option<Variant>,
    #[serde(default, deserialize_with = "deserialize_alphas")]
    pub alphas: Option<Vec<f64>>,
    pub eps_init: Option<f64>,
    pub eps_final: Option<f64>,
    pub eps_factor: Option<f64>,
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub alpha_start: Option<AlphaStart>,
    pub parallel: Option<bool>,
    pub eps_shift: Option<f64>,
    pub out: Option<PathBuf>,
    pub trace: Option<bool>,
    pub seed: Option<u64>,
}

impl PartialConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        })
    }

    /// Fields set in `self` win over `lower`.
    pub fn over(self, lower: PartialConfig) -> PartialConfig {
        PartialConfig {
            problem: self.problem.or(lower.problem),
            d: self.d.or(lower.d),
            pk: self.pk.or(lower.pk),
            solver: self.solver.or(lower.solver),
            variant: self.variant.or(lower.variant),
            alphas: self.alphas.or(lower.alphas),
            eps_init: self.eps_init.or(lower.eps_init),
            eps_final: self.eps_final.or(lower.eps_final),
            eps_factor: self.eps_factor.or(lower.eps_factor),
            tol: self.tol.or(lower.tol),
            max_iters: self.max_iters.or(lower.max_iters),
            alpha_start: self.alpha_start.or(lower.alpha_start),
            parallel: self.parallel.or(lower.parallel),
            eps_shift: self.eps_shift.or(lower.eps_shift),
            out: self.out.or(lower.out),
            trace: self.trace.or(lower.trace),
            seed: self.seed.or(lower.seed),
        }
    }
}

/// A fully resolved, validated experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub problem: Problem,
    pub pk: PkSpec,
    pub solver: Solver,
    pub variant: Variant,
    pub alphas: Vec<f64>,
    pub eps_init: f64,
    pub eps_final: f64,
    pub eps_factor: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub alpha_start: AlphaStart,
    pub parallel: bool,
    /// IRL1 only.
    pub eps_shift: f64,
    pub out: PathBuf,
    pub trace: bool,
    pub seed: u64,
}

impl RunConfig {
    /// Reference settings for each problem.
    pub fn defaults(kind: ProblemKind) -> RunConfig {
        let common = |problem, alphas: Vec<f64>, eps_init, eps_final, tol, max_iters| RunConfig {
            problem,
            pk: PkSpec::Ramp,
            solver: Solver::Irls2,
            variant: Variant::Power,
            alphas,
            eps_init,
            eps_final,
            eps_factor: 0.1,
            tol,
            max_iters,
            alpha_start: AlphaStart::Auto,
            parallel: false,
            eps_shift: 1e-4,
            out: PathBuf::from("results"),
            trace: false,
            seed: 0,
        };
        match kind {
            ProblemKind::Mmatrix => common(
                Problem::Mmatrix { d: 63 },
                vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0],
                1e-1,
                1e-6,
                1e-8,
                5000,
            ),
            ProblemKind::Control => common(Problem::Control, vec![1e-2, 1e-1, 1.0], 1e-3, 1e-8, 1e-15, 20_000),
        }
    }

    /// Defaults for `kind`, then `file`, then `cli`.
    pub fn resolve(kind: ProblemKind, file: Option<PartialConfig>, cli: PartialConfig) -> Result<RunConfig, ConfigError> {
        let p = cli.over(file.unwrap_or_default());
        if let Some(k) = p.problem {
            if k != kind {
                return Err(field("problem", format!("config file is for {k:?}, command is for {kind:?}")));
            }
        }
        let base = RunConfig::defaults(kind);
        let problem = match (kind, p.d) {
            (ProblemKind::Mmatrix, d) => Problem::Mmatrix {
                d: d.unwrap_or(match base.problem {
                    Problem::Mmatrix { d } => d,
                    Problem::Control => unreachable!(),
                }),
            },
            (ProblemKind::Control, None) => Problem::Control,
            (ProblemKind::Control, Some(_)) => return Err(field("d", "only the mmatrix problem takes a grid size")),
        };
        let cfg = RunConfig {
            problem,
            pk: p.pk.unwrap_or(base.pk),
            solver: p.solver.unwrap_or(base.solver),
            variant: p.variant.unwrap_or(base.variant),
            alphas: p.alphas.unwrap_or(base.alphas),
            eps_init: p.eps_init.unwrap_or(base.eps_init),
            eps_final: p.eps_final.unwrap_or(base.eps_final),
            eps_factor: p.eps_factor.unwrap_or(base.eps_factor),
            tol: p.tol.unwrap_or(base.tol),
            max_iters: p.max_iters.unwrap_or(base.max_iters),
            alpha_start: p.alpha_start.unwrap_or(base.alpha_start),
            parallel: p.parallel.unwrap_or(base.parallel),
            eps_shift: p.eps_shift.unwrap_or(base.eps_shift),
            out: p.out.unwrap_or(base.out),
            trace: p.trace.unwrap_or(base.trace),
            seed: p.seed.unwrap_or(base.seed),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Problem::Mmatrix { d } = self.problem {
            if d < 2 {
                return Err(field("d", format!("grid size must be >= 2, got {d}")));
            }
        }
        if self.alphas.is_empty() {
            return Err(field("alphas", "empty list"));
        }
        if self.alphas.iter().any(|a| !(*a > 0.0)) || self.alphas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(field("alphas", "values must be positive and strictly increasing"));
        }
        if !(self.tol > 0.0) {
            return Err(field("tol", "must be > 0"));
        }
        if self.max_iters == 0 {
            return Err(field("max_iters", "must be >= 1"));
        }
        match self.solver {
            Solver::Irls2 => self.irls2_config().validate().map_err(|e| field("eps schedule", e.to_string()))?,
            Solver::Irl1 => {
                if !(self.eps_shift > 0.0) {
                    return Err(field("eps_shift", "must be > 0"));
                }
            }
        }
        if self.parallel && self.alpha_start != AlphaStart::Cold {
            return Err(field("parallel", "parallel sweeps need --alpha-start cold"));
        }
        self.pk.sequence(&self.problem, self.seed, self.penalty_family())?;
        Ok(())
    }

    /// The smoothed scheme reads only the exponents and lets the variant
    /// pick the weight; IRL1 evaluates the penalty family itself.
    pub fn penalty_family(&self) -> PenaltyFamily {
        match (self.solver, self.variant) {
            (Solver::Irl1, Variant::LogPower) => PenaltyFamily::LogPower,
            _ => PenaltyFamily::Power,
        }
    }

    pub fn irls2_config(&self) -> Irls2Config {
        Irls2Config {
            alpha_list: self.alphas.clone(),
            eps_init: self.eps_init,
            eps_final: self.eps_final,
            eps_factor: self.eps_factor,
            inner_tol_inf: self.tol,
            max_inner_iters: self.max_iters,
            variant: self.variant,
            alpha_start: self.alpha_start,
            parallel: self.parallel,
        }
    }

    /// `<out>/<problem>/<pk>/<variant>`.
    pub fn run_dir(&self) -> PathBuf {
        self.out
            .join(self.problem.dir_name())
            .join(self.pk.label(self.seed))
            .join(self.variant.as_str())
    }

    pub fn problem_dir(&self) -> PathBuf {
        self.out.join(self.problem.dir_name())
    }
}
