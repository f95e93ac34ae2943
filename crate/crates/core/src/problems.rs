//! Test problems: the finite-difference gradient ("M-matrix") example, the
//! two-control heat equation, and the exponent sequences used with them.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{LinearOperator, NormalSystem, SparseMatrix};

/// The `(d+1) x d` backward difference matrix: ones on the diagonal, minus
/// ones on the first subdiagonal.
pub fn build_bidiagonal_d(d: usize) -> SparseMatrix {
    let mut t = Vec::with_capacity(2 * d);
    for i in 0..d {
        t.push((i, i, 1.0));
        t.push((i + 1, i, -1.0));
    }
    SparseMatrix::from_triplets(d + 1, d, &t).expect("stencil indices are in range")
}

/// Right-hand side of the gradient example, `10 x1 sin(5 x2) cos(7 x1)`.
pub fn mmatrix_source(x1: f64, x2: f64) -> f64 {
    10.0 * x1 * (5.0 * x2).sin() * (7.0 * x1).cos()
}

/// `A = (d+1) [I (x) D; D (x) I]` on the `d x d` interior grid of the unit
/// square, so that `A^T A` is the 5-point Dirichlet Laplacian.
#[derive(Debug, Clone)]
pub struct MMatrixProblem {
    pub d: usize,
    pub op: LinearOperator,
    pub f: Vec<f64>,
}

impl MMatrixProblem {
    pub fn n(&self) -> usize {
        self.d * self.d
    }

    pub fn mesh(&self) -> f64 {
        1.0 / (self.d + 1) as f64
    }

    /// Flat index of grid node `(i, j)`, 1-based in both directions; `i`
    /// (the `x1` direction) varies fastest.
    pub fn index(&self, i: usize, j: usize) -> usize {
        (j - 1) * self.d + (i - 1)
    }

    pub fn system(&self) -> NormalSystem {
        NormalSystem::from_dual(self.op.clone(), self.f.clone()).expect("f has one entry per node")
    }
}

pub fn build_mmatrix_problem(d: usize) -> Result<MMatrixProblem> {
    if d < 2 {
        return Err(Error::InvalidParameter(format!("grid dimension d = {d} must be >= 2")));
    }
    let dm = build_bidiagonal_d(d);
    let id = SparseMatrix::identity(d);
    let g1 = id.kron(&dm);
    let g2 = dm.kron(&id);
    let a = g1.vstack(&g2)?.scale((d + 1) as f64);
    let h = 1.0 / (d + 1) as f64;
    let mut f = vec![0.0; d * d];
    for j in 1..=d {
        for i in 1..=d {
            f[(j - 1) * d + (i - 1)] = mmatrix_source(i as f64 * h, j as f64 * h);
        }
    }
    Ok(MMatrixProblem {
        d,
        op: LinearOperator::sparse(a),
        f,
    })
}

/// An interval on `(0, 1)` whose grid nodes carry a control distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub lo: f64,
    pub hi: f64,
    /// Include nodes that fall exactly on an endpoint.
    #[serde(default)]
    pub closed: bool,
}

impl Support {
    pub const fn open(lo: f64, hi: f64) -> Self {
        Support { lo, hi, closed: false }
    }

    pub fn contains(&self, x: f64) -> bool {
        if self.closed {
            self.lo <= x && x <= self.hi
        } else {
            self.lo < x && x < self.hi
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatSettings {
    /// Interior spatial nodes.
    pub n: usize,
    /// Time steps per control.
    pub m: usize,
    pub horizon: f64,
    pub supports: [Support; 2],
    pub target_peak: f64,
    pub target_width: f64,
    pub target_center: f64,
}

impl Default for HeatSettings {
    fn default() -> Self {
        HeatSettings {
            n: 49,
            m: 50,
            horizon: 1.0,
            supports: [Support::open(0.2, 0.3), Support::open(0.6, 0.7)],
            target_peak: 0.4,
            target_width: 70.0,
            target_center: 0.7,
        }
    }
}

/// Final-state map of the 1-D heat equation driven by two piecewise constant
/// controls, discretized by the midpoint rule in time.
#[derive(Debug, Clone)]
pub struct HeatControlProblem {
    pub settings: HeatSettings,
    pub dt: f64,
    pub dx: f64,
    /// `n x 2m`; column `c * m + k` is control `c` at time step `k`.
    pub op: LinearOperator,
    pub y: Vec<f64>,
    /// 0/1 indicator vectors of the two control supports.
    pub distributions: [Vec<f64>; 2],
    eigen: SymmetricEigen<f64, nalgebra::Dyn>,
}

impl HeatControlProblem {
    pub fn n(&self) -> usize {
        self.settings.n
    }

    pub fn m(&self) -> usize {
        self.settings.m
    }

    /// Interior node coordinates `x_j = j dx`, `j = 1..n`.
    pub fn nodes(&self) -> Vec<f64> {
        (1..=self.settings.n).map(|j| j as f64 * self.dx).collect()
    }

    /// The finite-difference Laplacian `(1/dx^2) tridiag(1, -2, 1)`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        laplacian_1d(self.settings.n, self.dx)
    }

    /// Eigenvalues of the Laplacian as computed by the symmetric eigensolver,
    /// sorted ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.eigen.eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// `exp(L tau) v` through the eigendecomposition.
    pub fn propagate(&self, tau: f64, v: &[f64]) -> Vec<f64> {
        let q = &self.eigen.eigenvectors;
        let mut c = q.tr_mul(&DVector::from_column_slice(v));
        for (ci, lam) in c.iter_mut().zip(self.eigen.eigenvalues.iter()) {
            *ci *= (lam * tau).exp();
        }
        (q * c).data.into()
    }

    pub fn system(&self) -> NormalSystem {
        NormalSystem::from_data(self.op.clone(), self.y.clone()).expect("y has one entry per node")
    }
}

pub fn laplacian_1d(n: usize, dx: f64) -> DMatrix<f64> {
    let s = 1.0 / (dx * dx);
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            -2.0 * s
        } else if i.abs_diff(j) == 1 {
            s
        } else {
            0.0
        }
    })
}

/// Analytic Dirichlet eigenvalues `-(2/dx^2)(1 - cos(j pi/(n+1)))`, ascending.
pub fn laplacian_1d_eigenvalues(n: usize, dx: f64) -> Vec<f64> {
    let mut ev: Vec<f64> = (1..=n)
        .map(|j| -(2.0 / (dx * dx)) * (1.0 - (j as f64 * std::f64::consts::PI / (n + 1) as f64).cos()))
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn build_heat_control_problem() -> Result<HeatControlProblem> {
    build_heat_control_with(HeatSettings::default())
}

pub fn build_heat_control_with(settings: HeatSettings) -> Result<HeatControlProblem> {
    let (n, m) = (settings.n, settings.m);
    if n == 0 || m == 0 || !(settings.horizon > 0.0) {
        return Err(Error::InvalidParameter("heat problem needs n, m >= 1 and T > 0".into()));
    }
    let dx = 1.0 / (n + 1) as f64;
    let dt = settings.horizon / m as f64;
    let lap = laplacian_1d(n, dx);
    let eigen = SymmetricEigen::new(lap);
    let nodes: Vec<f64> = (1..=n).map(|j| j as f64 * dx).collect();
    let distributions = settings
        .supports
        .map(|s| nodes.iter().map(|&x| if s.contains(x) { 1.0 } else { 0.0 }).collect::<Vec<_>>());
    let y = nodes
        .iter()
        .map(|&x| settings.target_peak * (-settings.target_width * (x - settings.target_center).powi(2)).exp())
        .collect();

    let mut problem = HeatControlProblem {
        settings,
        dt,
        dx,
        op: LinearOperator::identity(1),
        y,
        distributions,
        eigen,
    };
    let mut a = DMatrix::zeros(n, 2 * m);
    for (c, dist) in problem.distributions.iter().enumerate() {
        for k in 1..=m {
            // t_k = (k-1) dt, propagated from the interval midpoint to T
            let tau = problem.settings.horizon - (k - 1) as f64 * dt - 0.5 * dt;
            let col = problem.propagate(tau, dist);
            for (i, v) in col.into_iter().enumerate() {
                a[(i, c * m + k - 1)] = v * dt;
            }
        }
    }
    problem.op = LinearOperator::dense(a);
    Ok(problem)
}

/// `p_k = 0.1 + 1/P_k`, `P` evenly spaced on `[1, 100]`: from 1.1 down to 0.11.
pub fn pk_ramp_mmatrix(n: usize) -> Result<Vec<f64>> {
    Ok(linspace(1.0, 100.0, n)?.into_iter().map(|p| 0.1 + 1.0 / p).collect())
}

/// `0.5 + 1/P_k` with `P` evenly spaced on `[2, 100]`, reversed: from 0.51
/// up to 1.
pub fn pk_ramp_control(n: usize) -> Result<Vec<f64>> {
    let mut v: Vec<f64> = linspace(2.0, 100.0, n)?.into_iter().map(|p| 0.5 + 1.0 / p).collect();
    v.reverse();
    Ok(v)
}

/// Exponents drawn uniformly from the open interval `(0, 1)` with a seeded
/// ChaCha8 stream.
pub fn pk_random(n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidParameter("random exponent sequence needs N >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                break u;
            }
        })
        .collect())
}

fn linspace(a: f64, b: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("exponent ramp needs N >= 2, got {n}")));
    }
    let last = (n - 1) as f64;
    Ok((0..n).map(|i| a + (i as f64 / last) * (b - a)).collect())
}
