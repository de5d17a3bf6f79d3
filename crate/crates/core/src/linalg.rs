//! Sparse storage and the linear solvers behind every assembly step.
//!
//! Everything here is real and symmetric: the default iterative solver is
//! conjugate gradients with a Jacobi preconditioner. Reductions run
//! sequentially so results are bit-identical between runs.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Compressed-row matrix with strictly increasing column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|(r, c, _)| *r >= n_rows || *c >= n_cols) {
            return Err(Error::InvalidArgument(format!(
                "triplet ({r}, {c}) outside a {n_rows}×{n_cols} matrix"
            )));
        }
        triplets.sort_unstable_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(CsrMatrix { n_rows, n_cols, row_ptr, col_idx, values, symmetric: false })
    }

    /// Builds from per-row `(col, value)` lists that are already sorted by
    /// column without duplicates.
    pub fn from_sorted_rows(n_cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n_rows = rows.len();
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        row_ptr.push(0);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for (i, row) in rows.into_iter().enumerate() {
            let mut prev = None;
            for (c, v) in row {
                if c >= n_cols || prev.is_some_and(|p| p >= c) {
                    return Err(Error::InvalidArgument(format!("row {i} is not sorted within {n_cols} columns")));
                }
                prev = Some(c);
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(CsrMatrix { n_rows, n_cols, row_ptr, col_idx, values, symmetric: false })
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
            symmetric: true,
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::identity(diag.len());
        m.values.copy_from_slice(diag);
        m
    }

    /// Marks the matrix symmetric after checking entry-wise symmetry to
    /// `1e-14` relative to the largest entry.
    pub fn certify_symmetric(mut self) -> Result<Self> {
        let asym = self.asymmetry();
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        if self.n_rows != self.n_cols || asym > 1e-14 * scale {
            return Err(Error::InvalidArgument(format!(
                "matrix is not symmetric (max |M - Mᵀ| = {asym:e})"
            )));
        }
        self.symmetric = true;
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map(|k| vals[k]).unwrap_or(0.0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |M_ij − M_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let t = if j < self.n_rows { self.get(j, i) } else { 0.0 };
                worst = worst.max((v - t).abs());
            }
        }
        worst
    }

    /// `y = M x`, rows computed in parallel (each row is a fixed sequential sum).
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        let body = |(i, yi): (usize, &mut f64)| {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        };
        if self.n_rows > 20_000 {
            y.par_iter_mut().enumerate().for_each(body);
        } else {
            y.iter_mut().enumerate().for_each(body);
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.matvec(x, &mut y);
        y
    }

    /// `P M Pᵀ` for the permutation sending old index `i` to `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n_rows || self.n_rows != self.n_cols {
            return Err(Error::DimensionMismatch { expected: self.n_rows, got: perm.len() });
        }
        let mut trip = Vec::with_capacity(self.nnz());
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                trip.push((perm[i], perm[j], v));
            }
        }
        let mut m = Self::from_triplets(self.n_rows, self.n_cols, trip)?;
        m.symmetric = self.symmetric;
        Ok(m)
    }

    /// Dense copy, row-major. Intended for small oracle checks.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (i, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                row[j] = v;
            }
        }
        d
    }
}

/// A symmetric operator usable by [`pcg`].
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// Diagonal used by the Jacobi preconditioner.
    fn diagonal(&self) -> Vec<f64>;
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.n_rows
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y)
    }

    fn diagonal(&self) -> Vec<f64> {
        CsrMatrix::diagonal(self)
    }
}

/// `M + c cᵀ`, applied matrix-free.
struct RankOneUpdate<'a> {
    m: &'a CsrMatrix,
    c: &'a [f64],
}

impl LinearOperator for RankOneUpdate<'_> {
    fn dim(&self) -> usize {
        self.m.n_rows
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.m.matvec(x, y);
        let s = dot(self.c, x);
        for (yi, ci) in y.iter_mut().zip(self.c) {
            *yi += s * ci;
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        self.m.diagonal().iter().zip(self.c).map(|(d, c)| d + c * c).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    /// Relative Euclidean residual `‖Mx − b‖ / ‖b‖` of the returned iterate.
    pub residual: f64,
}

impl SolveStats {
    /// Combines the stats of several solves (total iterations, worst residual).
    pub fn merge(self, other: SolveStats) -> SolveStats {
        SolveStats {
            iterations: self.iterations + other.iterations,
            residual: self.residual.max(other.residual),
        }
    }
}

pub const DEFAULT_TOL: f64 = 1e-10;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Jacobi-preconditioned conjugate gradients from the initial guess `x`.
///
/// Convergence is declared on the true residual, recomputed whenever the
/// recursive one drops below the tolerance.
pub fn pcg<Op: LinearOperator + ?Sized>(
    op: &Op,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<SolveStats> {
    let n = op.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: b.len() });
    }
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats { iterations: 0, residual: 0.0 });
    }
    let inv_diag: Vec<f64> = op
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut r = vec![0.0; n];
    let mut q = vec![0.0; n];
    let true_residual = |x: &[f64], r: &mut [f64], q: &mut [f64]| {
        op.apply(x, q);
        for i in 0..n {
            r[i] = b[i] - q[i];
        }
        norm2(r) / bnorm
    };
    let mut rel = true_residual(x, &mut r, &mut q);
    let mut iterations = 0;
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    while rel > tol {
        if iterations >= max_iter {
            return Err(Error::NonConvergence { iterations, residual: rel });
        }
        op.apply(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(Error::NonConvergence { iterations, residual: rel });
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        iterations += 1;
        rel = norm2(&r) / bnorm;
        if rel <= tol {
            // guard against drift of the recursive residual
            rel = true_residual(x, &mut r, &mut q);
            if rel <= tol {
                break;
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            p.copy_from_slice(&z);
            rz = dot(&r, &z);
            continue;
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok(SolveStats { iterations, residual: rel })
}

/// Solves `M x = b` for symmetric positive definite `M`.
pub fn solve_spd(m: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, SolveStats)> {
    check_tol(tol)?;
    if m.n_rows != m.n_cols {
        return Err(Error::DimensionMismatch { expected: m.n_rows, got: m.n_cols });
    }
    let mut x = vec![0.0; m.n_rows];
    let stats = pcg(m, b, &mut x, tol, max_iter)?;
    Ok((x, stats))
}

fn check_tol(tol: f64) -> Result<()> {
    if !(1e-14..=1e-4).contains(&tol) {
        return Err(Error::InvalidArgument(format!("tolerance {tol:e} outside [1e-14, 1e-4]")));
    }
    Ok(())
}

/// Thomas elimination for a tridiagonal system. `sub` and `sup` have
/// length `n − 1`.
pub fn solve_tridiag(sub: &[f64], diag: &[f64], sup: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if b.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: b.len() });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if sub.len() != n - 1 || sup.len() != n - 1 {
        return Err(Error::DimensionMismatch { expected: n - 1, got: sub.len().min(sup.len()) });
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let scale = diag.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut pivot = diag[0];
    if pivot.abs() <= 1e-300 * scale {
        return Err(Error::ZeroPivot { row: 0 });
    }
    if n > 1 {
        c[0] = sup[0] / pivot;
    }
    d[0] = b[0] / pivot;
    for i in 1..n {
        pivot = diag[i] - sub[i - 1] * c[i - 1];
        if pivot.abs() <= 1e-14 * scale {
            return Err(Error::ZeroPivot { row: i });
        }
        if i < n - 1 {
            c[i] = sup[i] / pivot;
        }
        d[i] = (b[i] - sub[i - 1] * d[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

/// Solves the bordered system
///
/// ```text
/// [ M   c ] [x]   [b   ]
/// [ cᵀ  0 ] [λ] = [beta]
/// ```
///
/// for `M` symmetric positive semidefinite with a kernel not orthogonal to
/// `c`. `K = M + ccᵀ` is then positive definite and two CG solves
/// `K y₁ = b`, `K y₂ = c` give `x = y₁ + (beta − λ) y₂` with the Schur
/// complement `λ = beta − (beta − cᵀy₁) / cᵀy₂`.
pub fn solve_saddle(m: &CsrMatrix, c: &[f64], b: &[f64], beta: f64, tol: f64) -> Result<(Vec<f64>, f64, SolveStats)> {
    check_tol(tol)?;
    let n = m.n_rows;
    if m.n_cols != n {
        return Err(Error::DimensionMismatch { expected: n, got: m.n_cols });
    }
    for v in [c, b] {
        if v.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: v.len() });
        }
    }
    let cnorm = norm2(c);
    if cnorm == 0.0 {
        return Err(Error::SingularSystem("constraint vector is zero".into()));
    }
    // The solution is invariant under c → αc (with beta → αbeta, λ → λ/α).
    // Pick α so that the rank-one term is on the scale of M's diagonal.
    let mean_diag = m.diagonal().iter().map(|d| d.abs()).sum::<f64>() / n as f64;
    let alpha = if mean_diag > 0.0 { mean_diag.sqrt() / cnorm } else { 1.0 / cnorm };
    let cs: Vec<f64> = c.iter().map(|v| alpha * v).collect();
    let beta_s = alpha * beta;
    let op = RankOneUpdate { m, c: &cs };
    let max_iter = 20 * n + 100;
    let mut y1 = vec![0.0; n];
    let s1 = pcg(&op, b, &mut y1, tol, max_iter)?;
    let mut y2 = vec![0.0; n];
    let s2 = pcg(&op, &cs, &mut y2, tol, max_iter)?;
    let cy2 = dot(&cs, &y2);
    // cᵀK⁻¹c ≤ 1 with equality iff c ⟂ range(M)
    if !(cy2 > 1e-14) || !cy2.is_finite() {
        return Err(Error::SingularSystem(format!("Schur complement cᵀK⁻¹c = {cy2:e}")));
    }
    let lambda_s = beta_s - (beta_s - dot(&cs, &y1)) / cy2;
    let x: Vec<f64> = y1.iter().zip(&y2).map(|(a, e)| a + (beta_s - lambda_s) * e).collect();
    Ok((x, alpha * lambda_s, s1.merge(s2)))
}

#[cfg(test)]
pub(crate) mod oracle {
    /// Gaussian elimination with partial pivoting on a dense copy.
    pub fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(r, &v)| {
            let mut row = r.clone();
            row.push(v);
            row
        }).collect();
        for k in 0..n {
            let piv = (k..n).max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs())).unwrap();
            m.swap(k, piv);
            for i in k + 1..n {
                let f = m[i][k] / m[k][k];
                for j in k..=n {
                    m[i][j] -= f * m[k][j];
                }
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
            x[i] = (m[i][n] - s) / m[i][i];
        }
        x
    }
}
