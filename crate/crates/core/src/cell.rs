//! Periodic cell problems, effective tensors and their macroscopic tables.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{assemble_global, element_matrices};
use crate::field::{sym_eigenvalues, CoefficientField, Point, Tensor};
use crate::linalg::{self, SolveStats};
use crate::mesh::{gauss_rule, GridFunction, Mesh};
use crate::quad::adaptive_simpson;

/// Relative residual used for cell solves.
pub const CELL_TOL: f64 = 1e-12;

/// Cell functions `N_k = N(x, ·)e_k` at one macroscopic point.
#[derive(Debug, Clone)]
pub struct CellSolution {
    x_anchor: Point,
    columns: Vec<GridFunction>,
    stats: SolveStats,
}

impl CellSolution {
    pub fn x_anchor(&self) -> Point {
        self.x_anchor
    }

    pub fn mesh(&self) -> &Mesh {
        self.columns[0].mesh()
    }

    /// `N_k` as a periodic grid function.
    pub fn column(&self, k: usize) -> &GridFunction {
        &self.columns[k]
    }

    pub fn columns(&self) -> &[GridFunction] {
        &self.columns
    }

    pub fn stats(&self) -> SolveStats {
        self.stats
    }

    /// `N_k(y)` for every direction `k`, `y` taken modulo the lattice.
    pub fn value(&self, y: Point) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (k, c) in self.columns.iter().enumerate() {
            out[k] = c.interpolate(y);
        }
        out
    }

    /// `∂_{y_j} N_k(y)` as `grad[k][j]`.
    pub fn gradient(&self, y: Point) -> [[f64; 2]; 2] {
        let mut out = [[0.0; 2]; 2];
        for (k, c) in self.columns.iter().enumerate() {
            out[k] = c.interpolate_gradient(y);
        }
        out
    }

    /// Largest `|∫_Q N_k|` over the columns.
    pub fn max_mean(&self) -> f64 {
        let mesh = self.mesh();
        let w = mesh.element_volume();
        self.columns
            .iter()
            .map(|c| (c.values().iter().sum::<f64>() * w).abs())
            .fold(0.0, f64::max)
    }
}

fn check_periodic(mesh: &Mesh, field: &CoefficientField) -> Result<()> {
    if !mesh.is_periodic() {
        return Err(Error::InvalidArgument("cell problems need a periodic mesh".into()));
    }
    if mesh.dim() != field.dim() {
        return Err(Error::DimensionMismatch { expected: field.dim(), got: mesh.dim() });
    }
    Ok(())
}

fn quadrature_points(mesh: &Mesh, e: usize) -> impl Iterator<Item = (Point, crate::mesh::QuadPoint)> + '_ {
    let o = mesh.element_origin(e);
    let (h0, h1) = (mesh.h(0), mesh.h(1));
    let dim = mesh.dim();
    gauss_rule(dim).into_iter().map(move |q| {
        let y = [o[0] + q.xi[0] * h0, if dim == 2 { o[1] + q.xi[1] * h1 } else { 0.0 }];
        (y, q)
    })
}

/// Solves `(A(x,·)(∇N_k + e_k), ∇φ) = 0` for all periodic `φ` with
/// `∫_Q N_k = 0`, one column per direction.
pub fn solve_cell(field: &CoefficientField, x: Point, cell_mesh: &Mesh) -> Result<CellSolution> {
    solve_cell_with(|y| field.eval(x, y), field.dim(), x, cell_mesh)
}

/// Cell solve for an arbitrary coefficient `y ↦ A(y)`.
pub fn solve_cell_with<F>(coef: F, dim: usize, x: Point, mesh: &Mesh) -> Result<CellSolution>
where
    F: Fn(Point) -> Tensor + Sync,
{
    if !mesh.is_periodic() {
        return Err(Error::InvalidArgument("cell problems need a periodic mesh".into()));
    }
    if mesh.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: mesh.dim() });
    }
    for e in 0..mesh.element_count() {
        for (y, _) in quadrature_points(mesh, e) {
            let (lo, _) = sym_eigenvalues(&coef(y), dim);
            if !(lo > 0.0) {
                return Err(Error::EllipticityViolation { x, value: lo });
            }
        }
    }
    let locals = element_matrices(mesh, &|y| Ok(coef(y)), 0.0)?;
    let k = assemble_global(mesh, &locals)?.certify_symmetric()?;
    let n = mesh.node_count();
    let nl = mesh.local_nodes();
    let h = [mesh.h(0), mesh.h(1)];
    let vol = mesh.element_volume();

    // ∫ φ_i, identical for every node of a uniform periodic mesh
    let c = vec![vol; n];
    let mut columns = Vec::with_capacity(dim);
    let mut stats = SolveStats::default();
    for dir in 0..dim {
        let mut b = vec![0.0; n];
        for e in 0..mesh.element_count() {
            let nodes = mesh.element_nodes(e);
            for (y, q) in quadrature_points(mesh, e) {
                let a = coef(y);
                let w = q.weight * vol;
                for l in 0..nl {
                    let g = [q.dphi[l][0] / h[0], q.dphi[l][1] / h[1]];
                    let mut flux = 0.0;
                    for r in 0..dim {
                        flux += a[r][dir] * g[r];
                    }
                    b[nodes[l]] -= w * flux;
                }
            }
        }
        let (sol, _lambda, st) = linalg::solve_saddle(&k, &c, &b, 0.0, CELL_TOL)?;
        stats = stats.merge(st);
        columns.push(GridFunction::new(*mesh, sol)?);
    }
    Ok(CellSolution { x_anchor: x, columns, stats })
}

/// `∫_Q A(x,y)(I + ∇N(x,y)) dy` from a computed cell solution.
pub fn effective_from_solution<F>(coef: F, sol: &CellSolution) -> Tensor
where
    F: Fn(Point) -> Tensor,
{
    let mesh = sol.mesh();
    let dim = mesh.dim();
    let nl = mesh.local_nodes();
    let h = [mesh.h(0), mesh.h(1)];
    let vol = mesh.element_volume();
    let mut out = [[0.0; 2]; 2];
    for e in 0..mesh.element_count() {
        let nodes = mesh.element_nodes(e);
        for (y, q) in quadrature_points(mesh, e) {
            let a = coef(y);
            let w = q.weight * vol;
            for k in 0..dim {
                // column k of I + ∇N: e_k + ∇N_k
                let mut grad = [0.0; 2];
                grad[k] = 1.0;
                let vals = sol.columns[k].values();
                for l in 0..nl {
                    for (r, g) in grad.iter_mut().enumerate().take(dim) {
                        *g += vals[nodes[l]] * q.dphi[l][r] / h[r];
                    }
                }
                for j in 0..dim {
                    let mut s = 0.0;
                    for r in 0..dim {
                        s += a[j][r] * grad[r];
                    }
                    out[j][k] += w * s;
                }
            }
        }
    }
    out
}

/// Effective tensor `A⁰(x)`.
pub fn effective_tensor(field: &CoefficientField, x: Point, cell_mesh: &Mesh) -> Result<Tensor> {
    check_periodic(cell_mesh, field)?;
    let sol = solve_cell(field, x, cell_mesh)?;
    Ok(effective_from_solution(|y| field.eval(x, y), &sol))
}

/// `1 / ∫₀¹ a(x,y)⁻¹ dy`, the exact one-dimensional effective coefficient.
pub fn closed_form_1d_effective(field: &CoefficientField, x: Point) -> Result<f64> {
    if field.dim() != 1 {
        return Err(Error::InvalidArgument("closed form exists only for d = 1".into()));
    }
    let inv = adaptive_simpson(|y| 1.0 / field.scalar(x, [y, 0.0]), 0.0, 1.0, 1e-12)?;
    Ok(1.0 / inv)
}

/// Uniform grid of macroscopic sample points covering the domain. Queries
/// up to `reach` outside are answered by the nearest boundary sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XGrid {
    dim: usize,
    lo: [f64; 2],
    hi: [f64; 2],
    cells: [usize; 2],
    reach: f64,
}

impl XGrid {
    pub fn covering(extents: &[(f64, f64)], spacing: f64, reach: f64) -> Result<Self> {
        if !(spacing > 0.0) || !(reach >= 0.0) {
            return Err(Error::InvalidArgument(format!("spacing {spacing}, reach {reach}")));
        }
        let dim = extents.len();
        let mut g = XGrid { dim, lo: [0.0; 2], hi: [0.0; 2], cells: [0; 2], reach };
        for (a, &(l, u)) in extents.iter().enumerate() {
            let ratio = (u - l) / spacing;
            g.lo[a] = l;
            g.hi[a] = u;
            g.cells[a] = (ratio - 1e-9 * ratio.max(1.0)).ceil().max(1.0) as usize;
        }
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn reach(&self) -> f64 {
        self.reach
    }

    pub fn spacing(&self, a: usize) -> f64 {
        (self.hi[a] - self.lo[a]) / self.cells[a] as f64
    }

    pub fn nodes_per_axis(&self, a: usize) -> usize {
        if a < self.dim {
            self.cells[a] + 1
        } else {
            1
        }
    }

    pub fn len(&self) -> usize {
        self.nodes_per_axis(0) * self.nodes_per_axis(1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, t: usize) -> Point {
        let nx = self.nodes_per_axis(0);
        let (i, j) = (t % nx, t / nx);
        let c = |a: usize, k: usize| {
            if a >= self.dim {
                0.0
            } else if k == self.cells[a] {
                self.hi[a]
            } else {
                self.lo[a] + k as f64 * self.spacing(a)
            }
        };
        [c(0, i), c(1, j)]
    }

    /// Multilinear interpolation weights `(sample index, weight)` at `x`.
    pub fn weights(&self, x: Point) -> Result<([(usize, f64); 4], usize)> {
        let (w, n) = self.weights_with_gradient(x)?;
        let mut out = [(0usize, 0.0); 4];
        for (o, &(t, c, _)) in out.iter_mut().zip(&w[..n]) {
            *o = (t, c);
        }
        Ok((out, n))
    }

    /// Interpolation weights together with their gradients in `x`. The
    /// gradient vanishes along axes where `x` is clamped to the grid.
    pub fn weights_with_gradient(&self, x: Point) -> Result<([(usize, f64, [f64; 2]); 4], usize)> {
        let mut base = [0usize; 2];
        let mut frac = [0.0; 2];
        let mut dfrac = [0.0; 2];
        for a in 0..self.dim {
            let slack = self.reach + 1e-12 * (self.hi[a] - self.lo[a]);
            if x[a] < self.lo[a] - slack || x[a] > self.hi[a] + slack || !x[a].is_finite() {
                return Err(Error::TableCoverage(x));
            }
            let raw = (x[a] - self.lo[a]) / self.spacing(a);
            let t = raw.clamp(0.0, self.cells[a] as f64);
            let k = (t.floor() as usize).min(self.cells[a] - 1);
            base[a] = k;
            frac[a] = t - k as f64;
            dfrac[a] = if raw == t { 1.0 / self.spacing(a) } else { 0.0 };
        }
        let nx = self.nodes_per_axis(0);
        let mut out = [(0usize, 0.0, [0.0; 2]); 4];
        if self.dim == 1 {
            out[0] = (base[0], 1.0 - frac[0], [-dfrac[0], 0.0]);
            out[1] = (base[0] + 1, frac[0], [dfrac[0], 0.0]);
            return Ok((out, 2));
        }
        let idx = |i: usize, j: usize| i + nx * j;
        let (fx, fy) = (frac[0], frac[1]);
        let (dx, dy) = (dfrac[0], dfrac[1]);
        out[0] = (idx(base[0], base[1]), (1.0 - fx) * (1.0 - fy), [-dx * (1.0 - fy), -(1.0 - fx) * dy]);
        out[1] = (idx(base[0] + 1, base[1]), fx * (1.0 - fy), [dx * (1.0 - fy), -fx * dy]);
        out[2] = (idx(base[0], base[1] + 1), (1.0 - fx) * fy, [-dx * fy, (1.0 - fx) * dy]);
        out[3] = (idx(base[0] + 1, base[1] + 1), fx * fy, [dx * fy, fx * dy]);
        Ok((out, 4))
    }
}

/// Tabulated `A⁰(x)` and `N(x, ·)`, interpolated linearly in `x`.
#[derive(Debug, Clone)]
pub struct EffectiveField {
    grid: XGrid,
    tensors: Vec<Tensor>,
    cells: Vec<Arc<CellSolution>>,
}

impl EffectiveField {
    pub fn grid(&self) -> &XGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn cells(&self) -> &[Arc<CellSolution>] {
        &self.cells
    }

    pub fn tensor_at(&self, x: Point) -> Result<Tensor> {
        let (w, n) = self.grid.weights(x)?;
        let mut out = [[0.0; 2]; 2];
        for &(t, c) in &w[..n] {
            for r in 0..2 {
                for s in 0..2 {
                    out[r][s] += c * self.tensors[t][r][s];
                }
            }
        }
        Ok(out)
    }

    /// `N(x, y)` for all directions.
    pub fn n_at(&self, x: Point, y: Point) -> Result<[f64; 2]> {
        let (w, n) = self.grid.weights(x)?;
        let mut out = [0.0; 2];
        for &(t, c) in &w[..n] {
            let v = self.cells[t].value(y);
            out[0] += c * v[0];
            out[1] += c * v[1];
        }
        Ok(out)
    }

    /// Discrete Lipschitz constant of `x ↦ A⁰(x)` over neighbouring samples,
    /// measured in the spectral norm.
    pub fn lipschitz(&self) -> f64 {
        let g = &self.grid;
        let nx = g.nodes_per_axis(0);
        let mut best = 0.0f64;
        for t in 0..g.len() {
            let (i, j) = (t % nx, t / nx);
            let mut neighbours = Vec::with_capacity(2);
            if i + 1 < nx {
                neighbours.push((t + 1, g.spacing(0)));
            }
            if g.dim == 2 && j + 1 < g.nodes_per_axis(1) {
                neighbours.push((t + nx, g.spacing(1)));
            }
            for (u, dist) in neighbours {
                let mut d = [[0.0; 2]; 2];
                for r in 0..2 {
                    for s in 0..2 {
                        d[r][s] = self.tensors[u][r][s] - self.tensors[t][r][s];
                    }
                }
                let (lo, hi) = sym_eigenvalues(&d, g.dim);
                best = best.max(lo.abs().max(hi.abs()) / dist);
            }
        }
        best
    }

    /// Largest `|∫_Q N_k|` over all samples.
    pub fn max_cell_mean(&self) -> f64 {
        self.cells.iter().map(|c| c.max_mean()).fold(0.0, f64::max)
    }
}

/// Solves the cell problem at every sample of `grid` (once when the field
/// does not depend on `x`).
pub fn tabulate_effective(field: &CoefficientField, grid: &XGrid, cell_mesh: &Mesh) -> Result<EffectiveField> {
    check_periodic(cell_mesh, field)?;
    if grid.dim != field.dim() {
        return Err(Error::DimensionMismatch { expected: field.dim(), got: grid.dim });
    }
    let solve_at = |x: Point| -> Result<(Tensor, Arc<CellSolution>)> {
        let sol = solve_cell(field, x, cell_mesh)?;
        let t = effective_from_solution(|y| field.eval(x, y), &sol);
        Ok((t, Arc::new(sol)))
    };
    let (tensors, cells): (Vec<Tensor>, Vec<Arc<CellSolution>>) = if field.is_x_independent() {
        let (t, sol) = solve_at(grid.point(0))?;
        (vec![t; grid.len()], vec![sol; grid.len()])
    } else {
        let solved: Vec<(Tensor, Arc<CellSolution>)> =
            (0..grid.len()).into_par_iter().map(|t| solve_at(grid.point(t))).collect::<Result<_>>()?;
        solved.into_iter().unzip()
    };
    Ok(EffectiveField { grid: *grid, tensors, cells })
}
