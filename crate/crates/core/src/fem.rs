//! Finite element assembly and solution of `(𝒜 − μ) u = f` with linear
//! (d = 1) or bilinear (d = 2) elements.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{tau_eps, Point, Tensor};
use crate::linalg::{self, CsrMatrix, SolveStats};
use crate::mesh::{build_domain_mesh, gauss_rule, GridFunction, Mesh, QuadPoint};
use crate::scenario::{BoundarySpec, Edge, Load, Scenario};

/// Local element matrix, indexed by local node.
pub type LocalMatrix = [[f64; 4]; 4];

/// Reduced system matrix together with the bookkeeping needed to scatter a
/// reduced solution back onto the mesh.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    matrix: CsrMatrix,
    mesh: Mesh,
    mu: f64,
    constrained: Vec<usize>,
    free: Vec<usize>,
}

impl AssembledSystem {
    /// Matrix restricted to the free (non-Dirichlet) nodes.
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Sorted Dirichlet node indices.
    pub fn constrained_dofs(&self) -> &[usize] {
        &self.constrained
    }

    /// Global node index of each reduced unknown.
    pub fn free_dofs(&self) -> &[usize] {
        &self.free
    }
}

fn gradients(q: &QuadPoint, h: [f64; 2]) -> [[f64; 2]; 4] {
    let mut g = [[0.0; 2]; 4];
    for (a, ga) in g.iter_mut().enumerate() {
        *ga = [q.dphi[a][0] / h[0], q.dphi[a][1] / h[1]];
    }
    g
}

/// Element matrices of `∫ A∇φ_j·∇φ_i − μ ∫ φ_iφ_j` by two-point Gauss
/// quadrature per axis, computed in parallel over elements.
pub fn element_matrices<S>(mesh: &Mesh, sampler: &S, mu: f64) -> Result<Vec<LocalMatrix>>
where
    S: Fn(Point) -> Result<Tensor> + Sync,
{
    let rule = gauss_rule(mesh.dim());
    let dim = mesh.dim();
    let nl = mesh.local_nodes();
    let h = [mesh.h(0), mesh.h(1)];
    let vol = mesh.element_volume();
    (0..mesh.element_count())
        .into_par_iter()
        .map(|e| {
            let o = mesh.element_origin(e);
            let mut k = [[0.0; 4]; 4];
            for q in &rule {
                let x = [o[0] + q.xi[0] * h[0], if dim == 2 { o[1] + q.xi[1] * h[1] } else { 0.0 }];
                let a = sampler(x).map_err(|err| Error::QuadratureFailure(format!("sampler failed at {x:?}: {err}")))?;
                if a.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::QuadratureFailure(format!("non-finite coefficient at {x:?}")));
                }
                let g = gradients(q, h);
                let w = q.weight * vol;
                for i in 0..nl {
                    for j in 0..nl {
                        let mut s = 0.0;
                        for r in 0..dim {
                            for c in 0..dim {
                                s += a[r][c] * g[j][c] * g[i][r];
                            }
                        }
                        k[i][j] += w * (s - mu * q.phi[i] * q.phi[j]);
                    }
                }
            }
            Ok(k)
        })
        .collect()
}

/// Elements touching node `n`, in increasing element order.
pub(crate) fn adjacent_elements(mesh: &Mesh, n: usize) -> Vec<usize> {
    let (i, j) = mesh.node_ij(n);
    let around = |a: usize, k: usize| -> Vec<usize> {
        if a >= mesh.dim() {
            return vec![0];
        }
        let m = mesh.cells(a);
        let mut v = Vec::with_capacity(2);
        if mesh.is_periodic() {
            v.push((k + m - 1) % m);
            v.push(k);
        } else {
            if k > 0 {
                v.push(k - 1);
            }
            if k < m {
                v.push(k);
            }
        }
        v.sort_unstable();
        v
    };
    let ex = mesh.elements_per_axis(0);
    let mut out = Vec::with_capacity(4);
    for ej in around(1, j) {
        for &ei in &around(0, i) {
            out.push(ei + ex * ej);
        }
    }
    out.sort_unstable();
    out
}

/// Sums local matrices into the global (unreduced) matrix. Rows are built
/// independently from the adjacent elements, so the result is deterministic.
pub fn assemble_global(mesh: &Mesh, locals: &[LocalMatrix]) -> Result<CsrMatrix> {
    if locals.len() != mesh.element_count() {
        return Err(Error::DimensionMismatch { expected: mesh.element_count(), got: locals.len() });
    }
    let nl = mesh.local_nodes();
    let rows: Vec<Vec<(usize, f64)>> = (0..mesh.node_count())
        .into_par_iter()
        .map(|n| {
            let mut entries: Vec<(usize, f64)> = Vec::with_capacity(4 * nl);
            for e in adjacent_elements(mesh, n) {
                let nodes = mesh.element_nodes(e);
                for a in 0..nl {
                    if nodes[a] == n {
                        for b in 0..nl {
                            entries.push((nodes[b], locals[e][a][b]));
                        }
                    }
                }
            }
            entries.sort_by_key(|t| t.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
            for (c, v) in entries {
                match merged.last_mut() {
                    Some(last) if last.0 == c => last.1 += v,
                    _ => merged.push((c, v)),
                }
            }
            merged
        })
        .collect();
    CsrMatrix::from_sorted_rows(mesh.node_count(), rows)
}

/// Nodes lying on the given edges, sorted.
pub fn edge_nodes(mesh: &Mesh, edges: &[Edge]) -> Vec<usize> {
    let mut out: Vec<usize> = (0..mesh.node_count())
        .filter(|&n| {
            let (i, j) = mesh.node_ij(n);
            edges.iter().any(|e| {
                let a = e.axis();
                let k = if a == 0 { i } else { j };
                if e.is_upper() {
                    k == mesh.cells(a)
                } else {
                    k == 0
                }
            })
        })
        .collect();
    out.dedup();
    out
}

/// Assembles `𝒜 − μ` on the subspace selected by `bc`.
pub fn assemble<S>(mesh: &Mesh, sampler: &S, mu: f64, bc: &BoundarySpec) -> Result<AssembledSystem>
where
    S: Fn(Point) -> Result<Tensor> + Sync,
{
    if mesh.is_periodic() {
        return Err(Error::InvalidArgument("boundary value problems need a non-periodic mesh".into()));
    }
    if !(mu <= 0.0) {
        return Err(Error::InvalidArgument(format!("mu = {mu} must be ≤ 0")));
    }
    bc.validate(mesh.dim())?;
    let constrained = edge_nodes(mesh, &bc.dirichlet_edges(mesh.dim()));
    if constrained.is_empty() && mu == 0.0 {
        return Err(Error::SingularOperator("no Dirichlet part and mu = 0: constants lie in the kernel".into()));
    }
    let locals = element_matrices(mesh, sampler, mu)?;
    let global = assemble_global(mesh, &locals)?;
    let mut reduced_index = vec![usize::MAX; mesh.node_count()];
    let mut free = Vec::with_capacity(mesh.node_count() - constrained.len());
    let mut ci = 0;
    for n in 0..mesh.node_count() {
        if ci < constrained.len() && constrained[ci] == n {
            ci += 1;
            continue;
        }
        reduced_index[n] = free.len();
        free.push(n);
    }
    let rows: Vec<Vec<(usize, f64)>> = free
        .par_iter()
        .map(|&n| {
            let (cols, vals) = global.row(n);
            cols.iter()
                .zip(vals)
                .filter(|(c, _)| reduced_index[**c] != usize::MAX)
                .map(|(c, v)| (reduced_index[*c], *v))
                .collect()
        })
        .collect();
    let matrix = CsrMatrix::from_sorted_rows(free.len(), rows)?.certify_symmetric()?;
    Ok(AssembledSystem { matrix, mesh: *mesh, mu, constrained, free })
}

/// Consistent load vector `∫ f_h φ_i` for the nodal interpolant `f_h`.
pub fn load_vector(f: &GridFunction) -> Vec<f64> {
    let mesh = f.mesh();
    let rule = gauss_rule(mesh.dim());
    let nl = mesh.local_nodes();
    let vol = mesh.element_volume();
    let mut mass = [[0.0; 4]; 4];
    for q in &rule {
        for a in 0..nl {
            for b in 0..nl {
                mass[a][b] += q.weight * vol * q.phi[a] * q.phi[b];
            }
        }
    }
    let vals = f.values();
    (0..mesh.node_count())
        .into_par_iter()
        .map(|n| {
            let mut s = 0.0;
            for e in adjacent_elements(mesh, n) {
                let nodes = mesh.element_nodes(e);
                for a in 0..nl {
                    if nodes[a] == n {
                        for b in 0..nl {
                            s += mass[a][b] * vals[nodes[b]];
                        }
                    }
                }
            }
            s
        })
        .collect()
}

/// Solves `(𝒜 − μ) u = f` and returns the nodal solution (zero on the
/// Dirichlet part). One-dimensional systems are tridiagonal and solved
/// directly; two-dimensional ones by preconditioned CG to relative residual
/// `tol`.
pub fn solve_resolvent(system: &AssembledSystem, f: &GridFunction, tol: f64) -> Result<(GridFunction, SolveStats)> {
    if !f.mesh().same_layout(&system.mesh) {
        return Err(Error::MeshMismatch);
    }
    let full = load_vector(f);
    let b: Vec<f64> = system.free.iter().map(|&n| full[n]).collect();
    let m = &system.matrix;
    let (x, stats) = if system.mesh.dim() == 1 {
        let n = m.n_rows();
        let diag = m.diagonal();
        let sub: Vec<f64> = (1..n).map(|i| m.get(i, i - 1)).collect();
        let sup: Vec<f64> = (0..n.saturating_sub(1)).map(|i| m.get(i, i + 1)).collect();
        let x = linalg::solve_tridiag(&sub, &diag, &sup, &b)?;
        let r = m.mul(&x);
        let bn = linalg::norm2(&b);
        let res = if bn > 0.0 {
            linalg::norm2(&r.iter().zip(&b).map(|(p, q)| p - q).collect::<Vec<_>>()) / bn
        } else {
            0.0
        };
        (x, SolveStats { iterations: 1, residual: res })
    } else {
        linalg::solve_spd(m, &b, tol, 50 * m.n_rows() + 1000)?
    };
    let mut u = vec![0.0; system.mesh.node_count()];
    for (k, &n) in system.free.iter().enumerate() {
        u[n] = x[k];
    }
    Ok((GridFunction::new(system.mesh, u)?, stats))
}

/// One solved boundary value problem on a domain mesh.
#[derive(Debug, Clone)]
pub struct Solution {
    pub u: GridFunction,
    pub h: f64,
    pub stats: SolveStats,
}

/// Fine mesh of the scenario domain with spacing `ε/ρ`.
pub fn fine_mesh(scenario: &Scenario, eps: f64) -> Result<Mesh> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps = {eps}")));
    }
    build_domain_mesh(&scenario.extents(), eps / scenario.points_per_period as f64)
}

/// Nodal interpolant of a load on `mesh`.
pub fn load_on(mesh: Mesh, load: Load) -> GridFunction {
    let dim = mesh.dim();
    GridFunction::from_fn(mesh, |x| load.eval(x, dim))
}

/// The reference solution `u_ε` of `−div A(x, x/ε)∇u − μu = f`.
pub fn solve_oscillatory(scenario: &Scenario, eps: f64, load: Load) -> Result<Solution> {
    let mesh = fine_mesh(scenario, eps)?;
    let field = &scenario.field;
    let sampler = |x: Point| Ok(tau_eps(field, eps, x));
    let system = assemble(&mesh, &sampler, scenario.mu, &scenario.bc)?;
    let (u, stats) = solve_resolvent(&system, &load_on(mesh, load), scenario.solver_tol)?;
    Ok(Solution { u, h: mesh.h(0), stats })
}
