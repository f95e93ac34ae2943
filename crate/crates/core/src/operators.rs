//! Linear operators `A` and the weighted normal equations
//! `(A^T A + alpha diag(w)) x = f` that every reweighted step solves.
//!
//! Dense operators factor through nalgebra's Cholesky. Sparse operators keep
//! their Gram matrix in symmetric band storage; for the finite-difference
//! gradient the band is the grid width, so a band Cholesky costs
//! `O(N bw^2)` instead of `O(N^3)`.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::penalties::PenaltySequence;
use crate::solver_irls2::{weight_vector, Variant};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Assembles from `(row, col, value)` triplets; duplicates are summed and
    /// explicit zeros dropped.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for &(r, c, v) in triplets {
            if r >= rows || c >= cols {
                return Err(Error::InvalidParameter(format!(
                    "entry ({r}, {c}) outside a {rows}x{cols} matrix"
                )));
            }
            sorted.push((r, c, v));
        }
        sorted.sort_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        let mut m = SparseMatrix {
            rows,
            cols,
            indptr,
            indices,
            values,
        };
        m.prune();
        Ok(m)
    }

    fn prune(&mut self) {
        let mut indptr = vec![0usize; self.rows + 1];
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                if self.values[k] != 0.0 {
                    indices.push(self.indices[k]);
                    values.push(self.values[k]);
                }
            }
            indptr[r + 1] = indices.len();
        }
        self.indptr = indptr;
        self.indices = indices;
        self.values = values;
    }

    pub fn identity(n: usize) -> Self {
        let t: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, n, &t).expect("diagonal entries are in range")
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut t = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                if m[(r, c)] != 0.0 {
                    t.push((r, c, m[(r, c)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), &t).expect("indices come from the matrix shape")
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            (self.indptr[r]..self.indptr[r + 1]).map(move |k| (r, self.indices[k], self.values[k]))
        })
    }

    fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.indptr[r]..self.indptr[r + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    /// Kronecker product `self (x) other`.
    pub fn kron(&self, other: &SparseMatrix) -> SparseMatrix {
        let mut t = Vec::with_capacity(self.nnz() * other.nnz());
        for (r1, c1, v1) in self.triplets() {
            for (r2, c2, v2) in other.triplets() {
                t.push((r1 * other.rows + r2, c1 * other.cols + c2, v1 * v2));
            }
        }
        SparseMatrix::from_triplets(self.rows * other.rows, self.cols * other.cols, &t)
            .expect("kronecker indices stay in range")
    }

    /// Stacks `self` on top of `other`.
    pub fn vstack(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        check_len(self.cols, other.cols)?;
        let t: Vec<_> = self
            .triplets()
            .chain(other.triplets().map(|(r, c, v)| (r + self.rows, c, v)))
            .collect();
        SparseMatrix::from_triplets(self.rows + other.rows, self.cols, &t)
    }

    pub fn scale(mut self, s: f64) -> SparseMatrix {
        self.values.iter_mut().for_each(|v| *v *= s);
        self
    }
}

/// Symmetric positive definite matrix in lower band storage, row-major:
/// entry `(i, j)` with `i - bw <= j <= i` sits at `i * (bw + 1) + j + bw - i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedSym {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSym {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandedSym {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + j + self.bw - i
    }

    /// Entry `(i, j)` of the full symmetric matrix.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let base = i * (self.bw + 1) + self.bw - i;
            let mut acc = 0.0;
            for j in lo..i {
                let a = self.data[base + j];
                acc += a * x[j];
                out[j] += a * x[i];
            }
            out[i] += acc + self.data[base + i] * x[i];
        }
    }

    /// `A^T A` for a sparse `A`, accumulated row by row.
    fn gram_of(a: &SparseMatrix) -> BandedSym {
        let mut bw = 0;
        for r in 0..a.rows {
            let (idx, _) = a.row(r);
            if let (Some(lo), Some(hi)) = (idx.iter().min(), idx.iter().max()) {
                bw = bw.max(hi - lo);
            }
        }
        let mut g = BandedSym::zeros(a.cols, bw);
        for r in 0..a.rows {
            let (idx, val) = a.row(r);
            for (p, (&ci, &vi)) in idx.iter().zip(val).enumerate() {
                for (&cj, &vj) in idx[..=p].iter().zip(&val[..=p]) {
                    g.add(ci, cj, vi * vj);
                }
            }
        }
        g
    }

    /// In-place Cholesky `M = L L^T` restricted to the band.
    fn factor(&mut self) -> Result<()> {
        let bw = self.bw;
        let w = bw + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(bw);
            let row_i = i * w + bw - i;
            for j in lo..=i {
                let row_j = j * w + bw - j;
                let k0 = lo.max(j.saturating_sub(bw));
                let mut s = self.data[row_i + j];
                for k in k0..j {
                    s -= self.data[row_i + k] * self.data[row_j + k];
                }
                if j == i {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::Singular { index: i, pivot: s });
                    }
                    self.data[row_i + i] = s.sqrt();
                } else {
                    self.data[row_i + j] = s / self.data[row_j + j];
                }
            }
        }
        Ok(())
    }

    /// Solves `L L^T x = b` with a factor produced by [`BandedSym::factor`].
    #[allow(clippy::needless_range_loop)]
    fn solve_factored(&self, b: &mut [f64]) {
        let bw = self.bw;
        let w = bw + 1;
        for i in 0..self.n {
            let row_i = i * w + bw - i;
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.data[row_i + k] * b[k];
            }
            b[i] = s / self.data[row_i + i];
        }
        for i in (0..self.n).rev() {
            let row_i = i * w + bw - i;
            b[i] /= self.data[row_i + i];
            let bi = b[i];
            for k in i.saturating_sub(bw)..i {
                b[k] -= self.data[row_i + k] * bi;
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Repr {
    Dense(DMatrix<f64>),
    Sparse(SparseMatrix),
}

#[derive(Debug, Clone)]
enum Gram {
    Dense(DMatrix<f64>),
    Banded(BandedSym),
}

/// A linear map `R^cols -> R^rows` with its Gram matrix precomputed.
#[derive(Debug, Clone)]
pub struct LinearOperator {
    repr: Repr,
    gram: Gram,
}

impl LinearOperator {
    pub fn dense(a: DMatrix<f64>) -> Self {
        let gram = Gram::Dense(a.tr_mul(&a));
        LinearOperator {
            repr: Repr::Dense(a),
            gram,
        }
    }

    pub fn sparse(a: SparseMatrix) -> Self {
        let gram = Gram::Banded(BandedSym::gram_of(&a));
        LinearOperator {
            repr: Repr::Sparse(a),
            gram,
        }
    }

    /// Dense operator from row-major data.
    pub fn from_rows(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        check_len(rows * cols, data.len())?;
        Ok(Self::dense(DMatrix::from_row_slice(rows, cols, data)))
    }

    pub fn identity(n: usize) -> Self {
        Self::dense(DMatrix::identity(n, n))
    }

    pub fn rows(&self) -> usize {
        match &self.repr {
            Repr::Dense(a) => a.nrows(),
            Repr::Sparse(a) => a.rows,
        }
    }

    pub fn cols(&self) -> usize {
        match &self.repr {
            Repr::Dense(a) => a.ncols(),
            Repr::Sparse(a) => a.cols,
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.repr, Repr::Sparse(_))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match &self.repr {
            Repr::Dense(a) => a.clone(),
            Repr::Sparse(a) => a.to_dense(),
        }
    }

    /// Dense copy of `A^T A`.
    pub fn gram_dense(&self) -> DMatrix<f64> {
        match &self.gram {
            Gram::Dense(g) => g.clone(),
            Gram::Banded(g) => g.to_dense(),
        }
    }

    /// `A x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.cols(), x.len())?;
        Ok(self.apply_unchecked(x))
    }

    /// `A^T y`.
    pub fn adjoint_apply(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len(self.rows(), y.len())?;
        Ok(self.adjoint_unchecked(y))
    }

    pub(crate) fn apply_unchecked(&self, x: &[f64]) -> Vec<f64> {
        match &self.repr {
            Repr::Dense(a) => (a * DVector::from_column_slice(x)).data.into(),
            Repr::Sparse(a) => (0..a.rows)
                .map(|r| {
                    let (idx, val) = a.row(r);
                    idx.iter().zip(val).map(|(&c, &v)| v * x[c]).sum()
                })
                .collect(),
        }
    }

    pub(crate) fn adjoint_unchecked(&self, y: &[f64]) -> Vec<f64> {
        match &self.repr {
            Repr::Dense(a) => a.tr_mul(&DVector::from_column_slice(y)).data.into(),
            Repr::Sparse(a) => {
                let mut out = vec![0.0; a.cols];
                for (r, &yr) in y.iter().enumerate() {
                    let (idx, val) = a.row(r);
                    for (&c, &v) in idx.iter().zip(val) {
                        out[c] += v * yr;
                    }
                }
                out
            }
        }
    }

    /// `A^T A x` through the cached Gram matrix.
    pub(crate) fn gram_apply(&self, x: &[f64]) -> Vec<f64> {
        match &self.gram {
            Gram::Dense(g) => (g * DVector::from_column_slice(x)).data.into(),
            Gram::Banded(g) => {
                let mut out = vec![0.0; x.len()];
                g.mul_vec(x, &mut out);
                out
            }
        }
    }

    /// Solves `(A^T A + alpha diag(w)) x = f` by a fresh Cholesky
    /// factorization followed by one step of iterative refinement.
    pub fn gram_solve(&self, w: &[f64], alpha: f64, f: &[f64]) -> Result<Vec<f64>> {
        let n = self.cols();
        check_len(n, w.len())?;
        check_len(n, f.len())?;
        if !(alpha >= 0.0) || w.iter().any(|&wk| !(wk >= 0.0)) {
            return Err(Error::InvalidParameter(
                "gram_solve needs alpha >= 0 and nonnegative weights".into(),
            ));
        }
        match &self.gram {
            Gram::Dense(g) => {
                let mut m = g.clone();
                for k in 0..n {
                    m[(k, k)] += alpha * w[k];
                }
                let chol = nalgebra::Cholesky::new(m.clone()).ok_or_else(|| {
                    let k = (0..n).min_by(|&a, &b| m[(a, a)].total_cmp(&m[(b, b)])).unwrap_or(0);
                    Error::Singular {
                        index: k,
                        pivot: m[(k, k)],
                    }
                })?;
                let rhs = DVector::from_column_slice(f);
                let mut x = chol.solve(&rhs);
                let r = &rhs - &m * &x;
                x += chol.solve(&r);
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Singular { index: 0, pivot: 0.0 });
                }
                Ok(x.data.into())
            }
            Gram::Banded(g) => {
                let mut m = g.clone();
                for (k, wk) in w.iter().enumerate() {
                    m.add(k, k, alpha * wk);
                }
                let mut fac = m.clone();
                fac.factor()?;
                let mut x = f.to_vec();
                fac.solve_factored(&mut x);
                let mut r = vec![0.0; n];
                m.mul_vec(&x, &mut r);
                r.iter_mut().zip(f).for_each(|(ri, fi)| *ri = fi - *ri);
                fac.solve_factored(&mut r);
                x.iter_mut().zip(&r).for_each(|(xi, ri)| *xi += ri);
                Ok(x)
            }
        }
    }

    /// Largest eigenvalue of `A^T A` by power iteration, to relative `tol`.
    pub fn operator_norm_sq(&self, tol: f64) -> Result<f64> {
        const MAX_ITERS: usize = 100_000;
        let n = self.cols();
        // deterministic start with no special alignment to any eigenvector
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 1.618_034 + 0.3).sin()).collect();
        let mut lambda = 0.0;
        for iter in 0..MAX_ITERS {
            let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if nv == 0.0 {
                return Err(Error::InvalidParameter("operator is zero".into()));
            }
            v.iter_mut().for_each(|a| *a /= nv);
            let gv = self.gram_apply(&v);
            let next: f64 = gv.iter().zip(&v).map(|(a, b)| a * b).sum();
            if iter > 0 && (next - lambda).abs() <= tol * next.abs() {
                return Ok(next);
            }
            lambda = next;
            v = gv;
        }
        Err(Error::NoConvergence { iters: MAX_ITERS })
    }

    /// Writes `rows cols nnz` followed by one `row col value` line per stored
    /// entry (0-based).
    pub fn write_coo(&self, mut w: impl Write) -> std::io::Result<()> {
        let sp = match &self.repr {
            Repr::Sparse(a) => a.clone(),
            Repr::Dense(a) => SparseMatrix::from_dense(a),
        };
        writeln!(w, "{} {} {}", sp.rows, sp.cols, sp.nnz())?;
        for (r, c, v) in sp.triplets() {
            writeln!(w, "{r} {c} {v:e}")?;
        }
        Ok(())
    }

    /// Reads the format produced by [`LinearOperator::write_coo`] into a
    /// sparse operator. Lines starting with `%` or `#` are skipped.
    pub fn read_coo(r: impl BufRead) -> Result<Self> {
        let mut lines = r
            .lines()
            .map(|l| l.map_err(|e| Error::InvalidParameter(e.to_string())))
            .filter(|l| {
                l.as_ref()
                    .map(|s| !s.trim().is_empty() && !s.starts_with('%') && !s.starts_with('#'))
                    .unwrap_or(true)
            });
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidParameter("empty coordinate file".into()))??;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::InvalidParameter(format!("bad header `{header}`"))))
            .collect::<Result<_>>()?;
        let [rows, cols, nnz] = dims[..] else {
            return Err(Error::InvalidParameter(format!("bad header `{header}`")));
        };
        let mut t = Vec::with_capacity(nnz);
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            let bad = || Error::InvalidParameter(format!("line {}: `{line}`", lineno + 2));
            let mut it = line.split_whitespace();
            let r: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let c: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let v: f64 = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            t.push((r, c, v));
        }
        check_len(nnz, t.len())?;
        Ok(Self::sparse(SparseMatrix::from_triplets(rows, cols, &t)?))
    }
}

/// Data of the normal equations: the operator, the dual right-hand side
/// `f = A^T y`, and `y` itself when it is known.
#[derive(Debug, Clone)]
pub struct NormalSystem {
    op: LinearOperator,
    f: Vec<f64>,
    y: Option<Vec<f64>>,
}

impl NormalSystem {
    /// From observed data `y`; computes `f = A^T y`.
    pub fn from_data(op: LinearOperator, y: Vec<f64>) -> Result<Self> {
        let f = op.adjoint_apply(&y)?;
        Ok(NormalSystem { op, f, y: Some(y) })
    }

    /// From the dual right-hand side only.
    pub fn from_dual(op: LinearOperator, f: Vec<f64>) -> Result<Self> {
        check_len(op.cols(), f.len())?;
        Ok(NormalSystem { op, f, y: None })
    }

    pub fn op(&self) -> &LinearOperator {
        &self.op
    }

    pub fn f(&self) -> &[f64] {
        &self.f
    }

    pub fn y(&self) -> Option<&[f64]> {
        self.y.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.f.len()
    }
}

/// `|| A^T A x - f + alpha w(x) .* x ||_inf`, the residual of the smoothed
/// optimality condition with weights evaluated at `x` itself.
pub fn optimality_residual_inf(
    sys: &NormalSystem,
    alpha: f64,
    eps: f64,
    pk: &PenaltySequence,
    variant: Variant,
    x: &[f64],
) -> Result<f64> {
    check_len(sys.dim(), x.len())?;
    check_len(sys.dim(), pk.len())?;
    let w = weight_vector(pk, eps, x, variant)?;
    let g = sys.op.gram_apply(x);
    Ok(g.iter()
        .zip(&sys.f)
        .zip(w.iter().zip(x))
        .map(|((gk, fk), (wk, xk))| (gk - fk + alpha * wk * xk).abs())
        .fold(0.0, f64::max))
}
