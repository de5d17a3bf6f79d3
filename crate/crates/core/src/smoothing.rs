//! Boundary extension, translation, Steklov averaging and mollification on
//! structured grids, plus an empirical check of their classical estimates.

use std::sync::{Arc, OnceLock};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::Point;
use crate::mesh::{build_domain_mesh, GridFunction, Mesh};
use crate::norms::{besov_seminorm, lp, w1p_semi};
use crate::quad::adaptive_simpson;

/// A grid function on a box that extends a domain mesh by a whole number
/// of cells on every side.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedFunction {
    base: GridFunction,
    domain: Mesh,
    margin_nodes: [usize; 2],
}

/// `domain` enlarged by `k[a]` cells along each active axis.
pub fn grow_mesh(domain: &Mesh, k: [usize; 2]) -> Result<Mesh> {
    let dim = domain.dim();
    let mut lo = domain.lo();
    let mut hi = domain.hi();
    let mut cells = [domain.cells(0), domain.cells(1)];
    for a in 0..dim {
        let h = domain.h(a);
        lo[a] -= k[a] as f64 * h;
        hi[a] += k[a] as f64 * h;
        cells[a] += 2 * k[a];
    }
    Mesh::new(dim, lo, hi, cells, false)
}

impl ExtendedFunction {
    pub fn new(base: GridFunction, domain: Mesh, margin_nodes: [usize; 2]) -> Result<Self> {
        let expect = grow_mesh(&domain, margin_nodes)?;
        let m = base.mesh();
        if (0..domain.dim()).any(|a| m.cells(a) != expect.cells(a)) || domain.is_periodic() {
            return Err(Error::MeshMismatch);
        }
        Ok(ExtendedFunction { base, domain, margin_nodes })
    }

    /// Samples `f` on `domain` grown by `margin_nodes`.
    pub fn from_fn<F: Fn(Point) -> f64>(domain: Mesh, margin_nodes: [usize; 2], f: F) -> Result<Self> {
        let mesh = grow_mesh(&domain, margin_nodes)?;
        Ok(ExtendedFunction { base: GridFunction::from_fn(mesh, f), domain, margin_nodes })
    }

    pub fn base(&self) -> &GridFunction {
        &self.base
    }

    pub fn domain(&self) -> &Mesh {
        &self.domain
    }

    pub fn margin_nodes(&self) -> [usize; 2] {
        self.margin_nodes
    }

    /// Smallest extension width over the active axes.
    pub fn margin(&self) -> f64 {
        (0..self.domain.dim())
            .map(|a| self.margin_nodes[a] as f64 * self.domain.h(a))
            .fold(f64::INFINITY, f64::min)
    }

    /// Value at domain grid position `(i, j)` displaced by `off` nodes.
    #[inline]
    pub fn at_offset(&self, i: usize, j: usize, off: [i64; 2]) -> f64 {
        let ii = (i + self.margin_nodes[0]) as i64 + off[0];
        let jj = (j + self.margin_nodes[1]) as i64 + off[1];
        self.base.at(ii as usize, jj as usize)
    }

    /// The values on the domain mesh.
    pub fn restrict(&self) -> GridFunction {
        let d = self.domain;
        let vals = (0..d.node_count())
            .map(|n| {
                let (i, j) = d.node_ij(n);
                self.at_offset(i, j, [0, 0])
            })
            .collect();
        GridFunction::new(d, vals).expect("node counts agree")
    }

    /// The same function on a narrower extension.
    pub fn shrink_to(&self, k: [usize; 2]) -> Result<ExtendedFunction> {
        let dim = self.domain.dim();
        for a in 0..dim {
            if k[a] > self.margin_nodes[a] {
                return Err(Error::InsufficientMargin { needed: k[a], available: self.margin_nodes[a] });
            }
        }
        let mesh = grow_mesh(&self.domain, k)?;
        let off = [self.margin_nodes[0] - k[0], if dim == 2 { self.margin_nodes[1] - k[1] } else { 0 }];
        let vals = (0..mesh.node_count())
            .map(|n| {
                let (i, j) = mesh.node_ij(n);
                self.base.at(i + off[0], j + off[1])
            })
            .collect();
        Ok(ExtendedFunction { base: GridFunction::new(mesh, vals)?, domain: self.domain, margin_nodes: k })
    }

    fn check_margin(&self, need: [usize; 2]) -> Result<()> {
        for a in 0..self.domain.dim() {
            if need[a] > self.margin_nodes[a] {
                return Err(Error::InsufficientMargin { needed: need[a], available: self.margin_nodes[a] });
            }
        }
        Ok(())
    }
}

/// Cells needed to cover `width` along axis `a`.
pub fn nodes_for(mesh: &Mesh, a: usize, width: f64) -> usize {
    let r = width / mesh.h(a);
    (r - 1e-9 * r.max(1.0)).ceil().max(0.0) as usize
}

/// Second-order reflection `u(x₀ − t) = 3u(x₀ + t) − 2u(x₀ + 2t)` across
/// every face, axis by axis (corners by composition). Reproduces affine
/// functions exactly and keeps the first derivative continuous.
pub fn extend(u: &GridFunction, margin: f64) -> Result<ExtendedFunction> {
    let mesh = *u.mesh();
    if mesh.is_periodic() {
        return Err(Error::InvalidArgument("extension needs a domain mesh".into()));
    }
    if !(margin >= 0.0) {
        return Err(Error::InvalidArgument(format!("margin {margin}")));
    }
    let dim = mesh.dim();
    let mut k = [0usize; 2];
    for a in 0..dim {
        k[a] = nodes_for(&mesh, a, margin);
        if 2 * k[a] > mesh.cells(a) {
            return Err(Error::MarginTooLarge { margin, width: mesh.hi()[a] - mesh.lo()[a] });
        }
    }
    let ext = grow_mesh(&mesh, k)?;
    let (nx, ny) = (mesh.nodes_per_axis(0), mesh.nodes_per_axis(1));
    let (ex, ey) = (ext.nodes_per_axis(0), ext.nodes_per_axis(1));
    let reflect = |line: &dyn Fn(usize) -> f64, n: usize, kk: usize, idx: usize| -> f64 {
        let i = idx as i64 - kk as i64;
        let last = (n - 1) as i64;
        if i < 0 {
            let t = (-i) as usize;
            3.0 * line(t) - 2.0 * line(2 * t)
        } else if i > last {
            let t = (i - last) as usize;
            3.0 * line(n - 1 - t) - 2.0 * line(n - 1 - 2 * t)
        } else {
            line(i as usize)
        }
    };
    // pass along x on the original rows
    let mut rows = vec![0.0; ex * ny];
    for j in 0..ny {
        let line = |i: usize| u.at(i, j);
        for i in 0..ex {
            rows[i + ex * j] = reflect(&line, nx, k[0], i);
        }
    }
    // pass along y on every column
    let mut vals = vec![0.0; ex * ey];
    for i in 0..ex {
        let line = |j: usize| rows[i + ex * j];
        for j in 0..ey {
            vals[i + ex * j] = if dim == 1 { rows[i] } else { reflect(&line, ny, k[1], j) };
        }
    }
    Ok(ExtendedFunction { base: GridFunction::new(ext, vals)?, domain: mesh, margin_nodes: k })
}

/// Weights at integer offsets `−K..=K` for the mean over `[−a, a]` of the
/// piecewise linear interpolant.
pub fn steklov_weights(a: f64) -> Vec<f64> {
    if a <= 1e-12 {
        return vec![1.0];
    }
    let kk = (a - 1e-9 * a.max(1.0)).ceil() as i64;
    let mut w = vec![0.0; (2 * kk + 1) as usize];
    for k in -kk..kk {
        let l = (k as f64).max(-a);
        let r = ((k + 1) as f64).min(a);
        if r <= l {
            continue;
        }
        let (sl, sr) = (l - k as f64, r - k as f64);
        let right = 0.5 * (sr * sr - sl * sl);
        w[(k + kk) as usize] += (r - l) - right;
        w[(k + 1 + kk) as usize] += right;
    }
    let total = 2.0 * a;
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Tensor-product offsets and weights of the centred cube of side `ε`.
pub fn steklov_stencil(mesh: &Mesh, eps: f64) -> Vec<([i64; 2], f64)> {
    let wx = steklov_weights(eps / (2.0 * mesh.h(0)));
    let wy = if mesh.dim() == 2 { steklov_weights(eps / (2.0 * mesh.h(1))) } else { vec![1.0] };
    let (kx, ky) = ((wx.len() / 2) as i64, (wy.len() / 2) as i64);
    let mut out = Vec::with_capacity(wx.len() * wy.len());
    for (j, b) in wy.iter().enumerate() {
        for (i, a) in wx.iter().enumerate() {
            out.push(([i as i64 - kx, j as i64 - ky], a * b));
        }
    }
    out
}

/// Applies `stencil` at every node of the extension narrowed by `reach`.
fn apply_stencil(u: &ExtendedFunction, stencil: &[([i64; 2], f64)], reach: [usize; 2]) -> Result<ExtendedFunction> {
    u.check_margin(reach)?;
    let dim = u.domain.dim();
    let k = [u.margin_nodes[0] - reach[0], if dim == 2 { u.margin_nodes[1] - reach[1] } else { 0 }];
    let out = grow_mesh(&u.domain, k)?;
    let vals: Vec<f64> = (0..out.node_count())
        .into_par_iter()
        .map(|n| {
            let (i, j) = out.node_ij(n);
            let (bi, bj) = ((i + reach[0]) as i64, (j + reach[1]) as i64);
            stencil
                .iter()
                .map(|(o, w)| w * u.base.at((bi + o[0]) as usize, (bj + o[1]) as usize))
                .sum()
        })
        .collect();
    Ok(ExtendedFunction { base: GridFunction::new(out, vals)?, domain: u.domain, margin_nodes: k })
}

fn stencil_reach(stencil: &[([i64; 2], f64)]) -> [usize; 2] {
    let mut r = [0usize; 2];
    for (o, _) in stencil {
        r[0] = r[0].max(o[0].unsigned_abs() as usize);
        r[1] = r[1].max(o[1].unsigned_abs() as usize);
    }
    r
}

/// `S^ε u` on as much of the extension as the cube fits into.
pub fn steklov_ext(u: &ExtendedFunction, eps: f64) -> Result<ExtendedFunction> {
    let stencil = steklov_stencil(&u.domain, eps);
    apply_stencil(u, &stencil, stencil_reach(&stencil))
}

/// `(S^ε u)(x) = ∫_Q u(x + εz) dz` on the domain, `Q` the unit cube centred
/// at the origin.
pub fn steklov(u: &ExtendedFunction, eps: f64) -> Result<GridFunction> {
    Ok(steklov_ext(u, eps)?.restrict())
}

/// `(T^ε u)(x) = u(x + εz)` on the domain, by multilinear interpolation.
pub fn shift_t(u: &ExtendedFunction, eps: f64, z: Point) -> Result<GridFunction> {
    let d = u.domain;
    for a in 0..d.dim() {
        let need = nodes_for(&d, a, (eps * z[a]).abs());
        if need > u.margin_nodes[a] {
            return Err(Error::InsufficientMargin { needed: need, available: u.margin_nodes[a] });
        }
    }
    let vals = (0..d.node_count())
        .into_par_iter()
        .map(|n| {
            let x = d.node_coords(n);
            u.base.interpolate([x[0] + eps * z[0], x[1] + eps * z[1]])
        })
        .collect();
    GridFunction::new(d, vals)
}

fn bump(r2: f64) -> f64 {
    if r2 < 1.0 {
        (-1.0 / (1.0 - r2)).exp()
    } else {
        0.0
    }
}

/// `κ` such that `κ·exp(−1/(1 − |x|²))` integrates to one over the unit ball.
pub fn mollifier_constant(dim: usize) -> f64 {
    static K: [OnceLock<f64>; 2] = [OnceLock::new(), OnceLock::new()];
    *K[dim - 1].get_or_init(|| {
        let integral = if dim == 1 {
            2.0 * adaptive_simpson(|x| bump(x * x), 0.0, 1.0, 1e-13).expect("smooth integrand")
        } else {
            2.0 * std::f64::consts::PI
                * adaptive_simpson(|r| r * bump(r * r), 0.0, 1.0, 1e-13).expect("smooth integrand")
        };
        1.0 / integral
    })
}

/// `J_δ` sampled at grid offsets: `(offset, h^d·J_δ(offset·h))`, not normalised.
pub fn mollifier_stencil_raw(mesh: &Mesh, delta: f64) -> Vec<([i64; 2], f64)> {
    let dim = mesh.dim();
    let kappa = mollifier_constant(dim);
    let h = [mesh.h(0), mesh.h(1)];
    let k = [nodes_for(mesh, 0, delta) as i64, if dim == 2 { nodes_for(mesh, 1, delta) as i64 } else { 0 }];
    let scale = (0..dim).map(|a| h[a] / delta).product::<f64>();
    let mut out = Vec::new();
    for j in -k[1]..=k[1] {
        for i in -k[0]..=k[0] {
            let r2 = (i as f64 * h[0] / delta).powi(2) + (j as f64 * h[1] / delta).powi(2);
            let w = kappa * bump(r2) * scale;
            if w > 0.0 {
                out.push(([i, j], w));
            }
        }
    }
    out
}

/// Discrete mollifier weights: nonnegative and summing to one, so constants
/// are reproduced exactly.
pub fn mollifier_stencil(mesh: &Mesh, delta: f64) -> Vec<([i64; 2], f64)> {
    let mut s = mollifier_stencil_raw(mesh, delta);
    if s.is_empty() {
        return vec![([0, 0], 1.0)];
    }
    let total: f64 = s.iter().map(|t| t.1).sum();
    s.iter_mut().for_each(|t| t.1 /= total);
    s
}

/// `J_δ u` on as much of the extension as the kernel fits into.
pub fn mollify_ext(u: &ExtendedFunction, delta: f64) -> Result<ExtendedFunction> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta = {delta}")));
    }
    let stencil = mollifier_stencil(&u.domain, delta);
    apply_stencil(u, &stencil, stencil_reach(&stencil))
}

/// `(J_δ u)(x) = ∫ J_δ(x − x̂) u(x̂) dx̂` on the domain.
pub fn mollify(u: &ExtendedFunction, delta: f64) -> Result<GridFunction> {
    Ok(mollify_ext(u, delta)?.restrict())
}

/// Central-difference gradient components, one node narrower than `u`.
pub fn gradient_ext(u: &ExtendedFunction) -> Result<Vec<ExtendedFunction>> {
    let dim = u.domain.dim();
    let mut out = Vec::with_capacity(dim);
    for a in 0..dim {
        let h = u.domain.h(a);
        let mut off_p = [0i64; 2];
        off_p[a] = 1;
        let mut off_m = [0i64; 2];
        off_m[a] = -1;
        let stencil = [(off_p, 0.5 / h), (off_m, -0.5 / h)];
        let reach = [1, if dim == 2 { 1 } else { 0 }];
        out.push(apply_stencil(u, &stencil, reach)?);
    }
    Ok(out)
}

/// A test function `u(x)` or a separable two-scale function `u(x)·w(y)`
/// with `w` 1-periodic.
#[derive(Clone)]
pub struct Sample {
    pub label: String,
    pub dim: usize,
    pub u: Arc<dyn Fn(Point) -> f64 + Send + Sync>,
    pub fast: Option<Arc<dyn Fn(Point) -> f64 + Send + Sync>>,
    /// Hölder/Besov order in `x` (1 for Lipschitz functions).
    pub regularity: f64,
}

impl std::fmt::Debug for Sample {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Sample").field("label", &self.label).field("dim", &self.dim).finish()
    }
}

impl Sample {
    pub fn new<F>(label: &str, dim: usize, regularity: f64, u: F) -> Self
    where
        F: Fn(Point) -> f64 + Send + Sync + 'static,
    {
        Sample { label: label.into(), dim, u: Arc::new(u), fast: None, regularity }
    }

    pub fn with_fast<W>(mut self, w: W) -> Self
    where
        W: Fn(Point) -> f64 + Send + Sync + 'static,
    {
        self.fast = Some(Arc::new(w));
        self
    }

    /// `sin 2πx₁ (· sin 2πx₂)`.
    pub fn smooth(dim: usize) -> Self {
        use std::f64::consts::PI;
        Sample::new("smooth", dim, 1.0, move |x| {
            let s = (2.0 * PI * x[0]).sin();
            if dim == 2 {
                s * (2.0 * PI * x[1]).sin()
            } else {
                s
            }
        })
    }

    /// Hat centred in the box: Lipschitz but not C¹.
    pub fn hat(dim: usize) -> Self {
        Sample::new("hat", dim, 1.0, move |x| {
            let h = |t: f64| 1.0 - (2.0 * t - 1.0).abs();
            if dim == 2 {
                h(x[0]) * h(x[1])
            } else {
                h(x[0])
            }
        })
    }

    /// `|x₁ − 1/2|^{1/2}`, Hölder of order 1/2.
    pub fn holder_half(dim: usize) -> Self {
        Sample::new("holder-1/2", dim, 0.5, |x| (x[0] - 0.5).abs().sqrt())
    }

    /// `g(x)·(2 + sin 2πy₁)` with `g` a C¹ bump supported in `[1/4, 3/4]^d`.
    pub fn separable(dim: usize) -> Self {
        use std::f64::consts::PI;
        let g = |t: f64| {
            if (0.25..=0.75).contains(&t) {
                (2.0 * PI * (t - 0.25)).sin().powi(2)
            } else {
                0.0
            }
        };
        Sample::new("separable", dim, 1.0, move |x| if dim == 2 { g(x[0]) * g(x[1]) } else { g(x[0]) })
            .with_fast(|y| 2.0 + (2.0 * PI * y[0]).sin())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LemmaKind {
    /// `‖DJ_δu‖_q ≲ δ^{−(1−r)}[u]_{r,q}`
    MollifierBlowUp,
    /// `‖(J_δ − I)u‖_q ≲ δ^r [u]_{r,q}`
    MollifierConvergence,
    /// `‖τ^εT^εu‖_q = ‖u‖_q`
    TranslationIsometry,
    /// `‖τ^εS^εu‖_{q,Ω} ≤ ‖u‖_{q,Ω_ε×Q}`
    SteklovNormOne,
    /// `‖(T^ε − I)u‖_q ≲ ε‖Du‖_q`
    TranslationConvergence,
    /// `‖(S^ε − I)u‖_q ≲ ε‖Du‖_q`
    SteklovConvergence,
}

/// One estimate checked along a sweep of ε (or δ).
#[derive(Debug, Clone, PartialEq)]
pub struct LemmaSeries {
    pub lemma: LemmaKind,
    pub sample: String,
    pub scales: Vec<f64>,
    /// The quantity on the left of the estimate.
    pub values: Vec<f64>,
    /// `values` divided by the right-hand side.
    pub ratios: Vec<f64>,
    pub sup_ratio: f64,
    /// Largest `ratios[i+1] / ratios[i]`.
    pub max_growth: f64,
    /// Set when a ratio grows by more than 1.5 between consecutive scales.
    pub flagged: bool,
}

impl LemmaSeries {
    fn new(lemma: LemmaKind, sample: &str, scales: Vec<f64>, values: Vec<f64>, ratios: Vec<f64>) -> Self {
        let sup_ratio = ratios.iter().cloned().fold(0.0, f64::max);
        let max_growth = ratios
            .windows(2)
            .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 1.0 })
            .fold(0.0, f64::max);
        LemmaSeries {
            lemma,
            sample: sample.into(),
            scales,
            values,
            ratios,
            sup_ratio,
            max_growth,
            flagged: max_growth > 1.5,
        }
    }

    /// `values[i] / values[i+1]`.
    pub fn value_factors(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[0] / w[1]).collect()
    }

    /// `ratios[i] / ratios[i+1]`.
    pub fn ratio_factors(&self) -> Vec<f64> {
        self.ratios.windows(2).map(|w| w[0] / w[1]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PropertyReport {
    pub series: Vec<LemmaSeries>,
}

impl PropertyReport {
    pub fn find(&self, lemma: LemmaKind, sample: &str) -> Option<&LemmaSeries> {
        self.series.iter().find(|s| s.lemma == lemma && s.sample == sample)
    }

    pub fn flagged(&self) -> Vec<&LemmaSeries> {
        self.series.iter().filter(|s| s.flagged).collect()
    }
}

/// Nodal (trapezoid) `L_q` norm; for these sums the discrete Jensen
/// inequality behind the Steklov bound holds exactly.
fn lumped_lq(mesh: &Mesh, vals: &[f64], q: f64) -> f64 {
    let mut s = 0.0;
    for (n, v) in vals.iter().enumerate() {
        let (i, j) = mesh.node_ij(n);
        let mut w = mesh.element_volume();
        for (a, k) in [(0, i), (1, j)] {
            if a < mesh.dim() && (k == 0 || k == mesh.cells(a)) {
                w *= 0.5;
            }
        }
        s += w * v.abs().powf(q);
    }
    s.powf(1.0 / q)
}

/// `(∫_{[0,1)^d} |w|^q)^{1/q}` by adaptive quadrature (nested in 2D).
fn periodic_lq(w: &(dyn Fn(Point) -> f64 + Send + Sync), dim: usize, q: f64) -> Result<f64> {
    let v = if dim == 1 {
        adaptive_simpson(|y| w([y, 0.0]).abs().powf(q), 0.0, 1.0, 1e-12)?
    } else {
        let inner = |y1: f64| adaptive_simpson(|y0| w([y0, y1]).abs().powf(q), 0.0, 1.0, 1e-12).unwrap_or(f64::NAN);
        adaptive_simpson(inner, 0.0, 1.0, 1e-11)?
    };
    Ok(v.powf(1.0 / q))
}

/// Checks the smoothing estimates on every sample, on a uniform mesh of the
/// unit box with spacing `h`. Two-scale samples are used for the isometry
/// and norm-one statements, the others for the rate statements.
pub fn smoothing_lemma_suite(samples: &[Sample], eps_list: &[f64], delta_list: &[f64], q: f64, h: f64) -> Result<PropertyReport> {
    if !(q > 1.0 && q.is_finite()) {
        return Err(Error::InvalidArgument(format!("q = {q}")));
    }
    let mut report = PropertyReport::default();
    for sample in samples {
        let dim = sample.dim;
        let mesh = build_domain_mesh(&vec![(0.0, 1.0); dim], h)?;
        let max_eps = eps_list.iter().cloned().fold(0.0, f64::max);
        let max_delta = delta_list.iter().cloned().fold(0.0, f64::max);
        let margin = (0.5 * max_eps).max(max_delta) + 2.0 * h;
        let u = GridFunction::from_fn(mesh, |x| (sample.u)(x));
        let ext = extend(&u, margin)?;
        match &sample.fast {
            Some(w) => {
                let wq = periodic_lq(w.as_ref(), dim, q)?;
                let (mut iso_v, mut iso_r, mut one_v, mut one_r) = (vec![], vec![], vec![], vec![]);
                for &eps in eps_list {
                    let stencil = steklov_stencil(&mesh, eps);
                    let fast: Vec<f64> = (0..mesh.node_count())
                        .map(|n| {
                            let x = mesh.node_coords(n);
                            w([x[0] / eps, x[1] / eps])
                        })
                        .collect();
                    // ‖τ^εT^εu‖ with z running over the cube offsets
                    let mut iso = 0.0;
                    for (off, wz) in &stencil {
                        let vals: Vec<f64> = (0..mesh.node_count())
                            .map(|n| {
                                let (i, j) = mesh.node_ij(n);
                                ext.at_offset(i, j, *off) * fast[n]
                            })
                            .collect();
                        iso += wz * lumped_lq(&mesh, &vals, q).powf(q);
                    }
                    let iso = iso.powf(1.0 / q);
                    let g_norm = lumped_lq(&mesh, u.values(), q);
                    iso_v.push(iso);
                    iso_r.push(iso / (g_norm * wq));

                    let s = steklov(&ext, eps)?;
                    let vals: Vec<f64> = s.values().iter().zip(&fast).map(|(a, b)| a * b).collect();
                    let lhs = lumped_lq(&mesh, &vals, q);
                    let k = [nodes_for(&mesh, 0, eps / 2.0), if dim == 2 { nodes_for(&mesh, 1, eps / 2.0) } else { 0 }];
                    let wide = ext.shrink_to(k)?;
                    let rhs = lumped_lq(wide.base().mesh(), wide.base().values(), q) * wq;
                    one_v.push(lhs);
                    one_r.push(lhs / rhs);
                }
                report.series.push(LemmaSeries::new(LemmaKind::TranslationIsometry, &sample.label, eps_list.to_vec(), iso_v, iso_r));
                report.series.push(LemmaSeries::new(LemmaKind::SteklovNormOne, &sample.label, eps_list.to_vec(), one_v, one_r));
            }
            None => {
                let (mut tv, mut tr, mut sv, mut sr) = (vec![], vec![], vec![], vec![]);
                for &eps in eps_list {
                    let k = [nodes_for(&mesh, 0, eps / 2.0), if dim == 2 { nodes_for(&mesh, 1, eps / 2.0) } else { 0 }];
                    let wide = ext.shrink_to(k)?;
                    let du = eps * w1p_semi(wide.base(), q)?;
                    let stencil = steklov_stencil(&mesh, eps);
                    let mut t = 0.0;
                    for (off, wz) in &stencil {
                        let vals: Vec<f64> = (0..mesh.node_count())
                            .map(|n| {
                                let (i, j) = mesh.node_ij(n);
                                ext.at_offset(i, j, *off) - u.values()[n]
                            })
                            .collect();
                        t += wz * lp(&GridFunction::new(mesh, vals)?, q)?.powf(q);
                    }
                    let t = t.powf(1.0 / q);
                    tv.push(t);
                    tr.push(t / du);
                    let s = lp(&steklov(&ext, eps)?.sub(&u)?, q)?;
                    sv.push(s);
                    sr.push(s / du);
                }
                report.series.push(LemmaSeries::new(LemmaKind::TranslationConvergence, &sample.label, eps_list.to_vec(), tv, tr));
                report.series.push(LemmaSeries::new(LemmaKind::SteklovConvergence, &sample.label, eps_list.to_vec(), sv, sr));

                let r = sample.regularity;
                let seminorm = if r < 1.0 { besov_seminorm(ext.base(), r, q)? } else { w1p_semi(ext.base(), q)? };
                let (mut bv, mut br, mut cv, mut cr) = (vec![], vec![], vec![], vec![]);
                for &delta in delta_list {
                    let j = mollify(&ext, delta)?;
                    let b = w1p_semi(&j, q)?;
                    bv.push(b);
                    br.push(b * delta.powf(1.0 - r) / seminorm);
                    let c = lp(&j.sub(&u)?, q)?;
                    cv.push(c);
                    cr.push(c / (delta.powf(r) * seminorm));
                }
                report.series.push(LemmaSeries::new(LemmaKind::MollifierBlowUp, &sample.label, delta_list.to_vec(), bv, br));
                report.series.push(LemmaSeries::new(LemmaKind::MollifierConvergence, &sample.label, delta_list.to_vec(), cv, cr));
            }
        }
    }
    Ok(report)
}
