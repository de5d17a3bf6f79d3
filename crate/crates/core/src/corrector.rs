//! The smoothed first-order corrector
//! `K f(x) = ∫_Q ⟨N(x + εz, x/ε), ∇(J_δ E u₀)(x + εz)⟩ dz`
//! and the first-order approximation `u₀ + εK f`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::cell::EffectiveField;
use crate::error::{Error, Result};
use crate::field::Point;
use crate::mesh::GridFunction;
use crate::norms::{lp, w1p_semi};
use crate::smoothing::{extend, gradient_ext, mollify_ext, nodes_for, steklov_stencil, ExtendedFunction};

/// The extended effective solution and its (possibly mollified) gradient.
#[derive(Debug, Clone)]
pub struct R0 {
    pub u0_extended: ExtendedFunction,
    /// One component per axis, all on the same extended mesh.
    pub grad: Vec<ExtendedFunction>,
    /// Mollification radius, `None` when the gradient is left unsmoothed.
    pub delta: Option<f64>,
}

/// Extends `u0` past the boundary, differentiates it and, for `s < 1`,
/// mollifies with `δ = ε` first. The extension is wide enough for the
/// Steklov cube of side `ε` around every domain node.
pub fn build_r0(u0: &GridFunction, eps: f64, s: f64) -> Result<R0> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps = {eps}")));
    }
    let mesh = *u0.mesh();
    let mollified = s < 1.0;
    let mut k = 0usize;
    let mut h = 0.0f64;
    for a in 0..mesh.dim() {
        let need = nodes_for(&mesh, a, eps / 2.0) + 1 + if mollified { nodes_for(&mesh, a, eps) } else { 0 };
        k = k.max(need);
        h = h.max(mesh.h(a));
    }
    let u0_extended = extend(u0, k as f64 * h)?;
    let smoothed = if mollified { mollify_ext(&u0_extended, eps)? } else { u0_extended.clone() };
    let grad = gradient_ext(&smoothed)?;
    Ok(R0 { u0_extended, grad, delta: mollified.then_some(eps) })
}

/// Everything the corrector formula reads.
#[derive(Debug, Clone)]
pub struct CorrectorInputs {
    pub r0: R0,
    pub table: Arc<EffectiveField>,
    pub eps: f64,
}

impl CorrectorInputs {
    pub fn new(r0: R0, table: Arc<EffectiveField>, eps: f64) -> Result<Self> {
        let dim = r0.u0_extended.domain().dim();
        if table.dim() != dim || r0.grad.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: table.dim() });
        }
        if let Some(d) = r0.delta {
            if (d - eps).abs() > 1e-12 * eps {
                return Err(Error::InvalidArgument(format!("mollification radius {d} differs from eps {eps}")));
            }
        }
        Ok(CorrectorInputs { r0, table, eps })
    }

    fn dim(&self) -> usize {
        self.r0.grad.len()
    }
}

/// Looks up `N_t(y)` once per table sample for a fixed fast variable.
struct FastCache {
    entries: Vec<(usize, [f64; 2])>,
}

impl FastCache {
    fn get(&mut self, table: &EffectiveField, t: usize, y: Point) -> [f64; 2] {
        if let Some(e) = self.entries.iter().find(|e| e.0 == t) {
            return e.1;
        }
        let v = table.cells()[t].value(y);
        self.entries.push((t, v));
        v
    }
}

/// `K f` at every domain node, with the cube offsets running over the
/// fine grid.
pub fn corrector_apply(inputs: &CorrectorInputs) -> Result<GridFunction> {
    let dim = inputs.dim();
    let grad = &inputs.r0.grad;
    let domain = *grad[0].domain();
    let stencil = steklov_stencil(&domain, inputs.eps);
    let eps = inputs.eps;
    let table = inputs.table.as_ref();
    let vals: Vec<f64> = (0..domain.node_count())
        .into_par_iter()
        .map(|n| -> Result<f64> {
            let (i, j) = domain.node_ij(n);
            let x = domain.node_coords(n);
            let y = [x[0] / eps, x[1] / eps];
            let mut cache = FastCache { entries: Vec::with_capacity(16) };
            let mut acc = 0.0;
            for (off, w) in &stencil {
                let xs = [
                    x[0] + off[0] as f64 * domain.h(0),
                    if dim == 2 { x[1] + off[1] as f64 * domain.h(1) } else { 0.0 },
                ];
                let mut g = [0.0; 2];
                for (a, ga) in g.iter_mut().enumerate().take(dim) {
                    *ga = grad[a].at_offset(i, j, *off);
                }
                if g[0] == 0.0 && g[1] == 0.0 {
                    continue;
                }
                let (tw, cnt) = table.grid().weights(xs)?;
                for &(t, c) in &tw[..cnt] {
                    if c == 0.0 {
                        continue;
                    }
                    let nv = cache.get(table, t, y);
                    acc += w * c * (nv[0] * g[0] + nv[1] * g[1]);
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    GridFunction::new(domain, vals)
}

/// The gradient of the gradient field components at `x`, by interpolation.
fn grad_at(inputs: &CorrectorInputs, x: Point) -> ([f64; 2], [[f64; 2]; 2]) {
    let mut g = [0.0; 2];
    let mut dg = [[0.0; 2]; 2];
    for (a, ga) in inputs.r0.grad.iter().enumerate() {
        g[a] = ga.base().interpolate(x);
        dg[a] = ga.base().interpolate_gradient(x);
    }
    (g, dg)
}

/// `K f(x)` at an arbitrary domain point, the gradient field interpolated
/// between nodes.
pub fn corrector_point(inputs: &CorrectorInputs, x: Point) -> Result<f64> {
    let domain = *inputs.r0.grad[0].domain();
    let eps = inputs.eps;
    let y = [x[0] / eps, x[1] / eps];
    let mut acc = 0.0;
    for (off, w) in steklov_stencil(&domain, eps) {
        let xs = [x[0] + off[0] as f64 * domain.h(0), x[1] + off[1] as f64 * domain.h(1)];
        let (g, _) = grad_at(inputs, xs);
        let (tw, cnt) = inputs.table.grid().weights(xs)?;
        for &(t, c) in &tw[..cnt] {
            let nv = inputs.table.cells()[t].value(y);
            acc += w * c * (nv[0] * g[0] + nv[1] * g[1]);
        }
    }
    Ok(acc)
}

/// `ε∇K f(x) = ε·slow + fast`: `slow` collects derivatives in the slow
/// variable and of the gradient field, `fast` those of `N` in `y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientSplit {
    pub slow: [f64; 2],
    pub fast: [f64; 2],
}

impl GradientSplit {
    pub fn scaled_gradient(&self, eps: f64) -> [f64; 2] {
        [eps * self.slow[0] + self.fast[0], eps * self.slow[1] + self.fast[1]]
    }
}

/// Both parts of `ε∇K f` at `x`, assembled from the table.
pub fn corrector_gradient_split(inputs: &CorrectorInputs, x: Point) -> Result<GradientSplit> {
    let dim = inputs.dim();
    let domain = *inputs.r0.grad[0].domain();
    let eps = inputs.eps;
    let y = [x[0] / eps, x[1] / eps];
    let mut slow = [0.0; 2];
    let mut fast = [0.0; 2];
    for (off, w) in steklov_stencil(&domain, eps) {
        let xs = [x[0] + off[0] as f64 * domain.h(0), x[1] + off[1] as f64 * domain.h(1)];
        let (g, dg) = grad_at(inputs, xs);
        let (tw, cnt) = inputs.table.grid().weights_with_gradient(xs)?;
        for &(t, c, dc) in &tw[..cnt] {
            let cell = &inputs.table.cells()[t];
            let nv = cell.value(y);
            let dn = cell.gradient(y);
            for j in 0..dim {
                let mut sj = dc[j] * (nv[0] * g[0] + nv[1] * g[1]);
                let mut fj = 0.0;
                for k in 0..dim {
                    sj += c * nv[k] * dg[k][j];
                    fj += c * dn[k][j] * g[k];
                }
                slow[j] += w * sj;
                fast[j] += w * fj;
            }
        }
    }
    Ok(GradientSplit { slow, fast })
}

/// `(ε‖∇K‖_p + ‖K‖_p) / ‖f‖_p`; zero for a vanishing corrector.
pub fn corrector_norm_check(k: &GridFunction, f: &GridFunction, eps: f64, p: f64) -> Result<f64> {
    let num = eps * w1p_semi(k, p)? + lp(k, p)?;
    if num == 0.0 {
        return Ok(0.0);
    }
    let den = lp(f, p)?;
    if den == 0.0 {
        return Err(Error::InvalidArgument("load has zero norm".into()));
    }
    Ok(num / den)
}

/// `ε^{1−s}‖K‖_q / ‖f‖_p`.
pub fn corrector_lq_ratio(k: &GridFunction, f: &GridFunction, eps: f64, s: f64, q: f64, p: f64) -> Result<f64> {
    Ok(eps.powf(1.0 - s) * lp(k, q)? / lp(f, p)?)
}

/// Largest over smallest entry of a positive series.
pub fn spread(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else if max > 0.0 {
        f64::INFINITY
    } else {
        1.0
    }
}

/// `u₀ + εK` nodewise.
pub fn first_order(u0: &GridFunction, k: &GridFunction, eps: f64) -> Result<GridFunction> {
    if !u0.mesh().same_layout(k.mesh()) {
        return Err(Error::MeshMismatch);
    }
    u0.combine(1.0, k, eps)
}
