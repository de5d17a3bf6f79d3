//! Structured meshes of intervals and axis-aligned rectangles, nodal grid
//! functions, element quadrature and element-based region masks.

use crate::error::{Error, Result};
use crate::field::Point;
use crate::quad::GAUSS2;

/// Default cap on the number of mesh nodes.
pub const DEFAULT_NODE_CAP: usize = 4_000_000;

/// Node cap, overridable through `OSCILLE_NODE_CAP`.
pub fn node_cap() -> usize {
    std::env::var("OSCILLE_NODE_CAP")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_NODE_CAP)
}

/// Uniform structured mesh. For `d = 1` the second axis is inert: it has a
/// single node layer and a single (degenerate) element layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mesh {
    dim: usize,
    lo: [f64; 2],
    hi: [f64; 2],
    cells: [usize; 2],
    periodic: bool,
}

impl Mesh {
    /// Mesh with `cells[a]` subdivisions of `[lo[a], hi[a]]` per active axis.
    pub fn new(dim: usize, lo: [f64; 2], hi: [f64; 2], cells: [usize; 2], periodic: bool) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidArgument(format!("mesh dimension {dim}")));
        }
        for a in 0..dim {
            if cells[a] == 0 || !(hi[a] > lo[a]) {
                return Err(Error::InvalidArgument(format!("degenerate axis {a}")));
            }
            if periodic && cells[a] < 2 {
                return Err(Error::InvalidArgument("periodic axes need 2 cells".into()));
            }
        }
        let mut m = Mesh { dim, lo, hi, cells, periodic };
        if dim == 1 {
            m.lo[1] = 0.0;
            m.hi[1] = 0.0;
            m.cells[1] = 0;
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn lo(&self) -> [f64; 2] {
        self.lo
    }

    pub fn hi(&self) -> [f64; 2] {
        self.hi
    }

    /// Subdivisions along axis `a` (0 for the inert axis).
    pub fn cells(&self, a: usize) -> usize {
        self.cells[a]
    }

    pub fn h(&self, a: usize) -> f64 {
        if a >= self.dim {
            1.0
        } else {
            (self.hi[a] - self.lo[a]) / self.cells[a] as f64
        }
    }

    /// Length of the box diagonal.
    pub fn diameter(&self) -> f64 {
        (0..self.dim).map(|a| (self.hi[a] - self.lo[a]).powi(2)).sum::<f64>().sqrt()
    }

    /// Stored node layers along axis `a`.
    pub fn nodes_per_axis(&self, a: usize) -> usize {
        if a >= self.dim {
            1
        } else if self.periodic {
            self.cells[a]
        } else {
            self.cells[a] + 1
        }
    }

    pub fn elements_per_axis(&self, a: usize) -> usize {
        if a >= self.dim {
            1
        } else {
            self.cells[a]
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes_per_axis(0) * self.nodes_per_axis(1)
    }

    pub fn element_count(&self) -> usize {
        self.elements_per_axis(0) * self.elements_per_axis(1)
    }

    /// Element volume (length for `d = 1`).
    pub fn element_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.h(a)).product()
    }

    /// Nodes per element, `2^d`.
    pub fn local_nodes(&self) -> usize {
        1 << self.dim
    }

    #[inline]
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        i + self.nodes_per_axis(0) * j
    }

    #[inline]
    pub fn node_ij(&self, n: usize) -> (usize, usize) {
        let nx = self.nodes_per_axis(0);
        (n % nx, n / nx)
    }

    pub fn node_coords(&self, n: usize) -> Point {
        let (i, j) = self.node_ij(n);
        self.grid_point(i, j)
    }

    /// Coordinates of grid position `(i, j)`; endpoints are reproduced exactly.
    pub fn grid_point(&self, i: usize, j: usize) -> Point {
        let coord = |a: usize, k: usize| {
            if a >= self.dim {
                0.0
            } else if k == self.cells[a] {
                self.hi[a]
            } else {
                self.lo[a] + k as f64 * self.h(a)
            }
        };
        [coord(0, i), coord(1, j)]
    }

    pub fn element_ij(&self, e: usize) -> (usize, usize) {
        let ex = self.elements_per_axis(0);
        (e % ex, e / ex)
    }

    /// Global node indices of element `e`, ordered by local index
    /// `bit0 + 2·bit1` (x-offset, y-offset).
    pub fn element_nodes(&self, e: usize) -> [usize; 4] {
        let (i, j) = self.element_ij(e);
        let wrap = |a: usize, k: usize| {
            if self.periodic && a < self.dim {
                k % self.cells[a]
            } else {
                k
            }
        };
        let i1 = wrap(0, i + 1);
        if self.dim == 1 {
            return [self.node_index(i, 0), self.node_index(i1, 0), 0, 0];
        }
        let j1 = wrap(1, j + 1);
        [
            self.node_index(i, j),
            self.node_index(i1, j),
            self.node_index(i, j1),
            self.node_index(i1, j1),
        ]
    }

    /// Lower corner of element `e`.
    pub fn element_origin(&self, e: usize) -> Point {
        let (i, j) = self.element_ij(e);
        [
            self.lo[0] + i as f64 * self.h(0),
            if self.dim == 2 { self.lo[1] + j as f64 * self.h(1) } else { 0.0 },
        ]
    }

    pub fn element_centroid(&self, e: usize) -> Point {
        let o = self.element_origin(e);
        let mut c = o;
        for (a, v) in c.iter_mut().enumerate().take(self.dim) {
            *v += 0.5 * self.h(a);
        }
        c
    }

    /// Position `x` as (element index along axis, local coordinate in [0,1]).
    /// Periodic axes wrap; others clamp to the mesh.
    pub fn locate(&self, a: usize, x: f64) -> (usize, f64) {
        let n = self.cells[a];
        let mut t = (x - self.lo[a]) / self.h(a);
        if self.periodic {
            t = t.rem_euclid(n as f64);
            let k = (t.floor() as usize).min(n - 1);
            return (k, t - k as f64);
        }
        t = t.clamp(0.0, n as f64);
        let k = (t.floor() as usize).min(n - 1);
        (k, t - k as f64)
    }

    /// Whether `other` has the same node layout (used for mesh matching).
    pub fn same_layout(&self, other: &Mesh) -> bool {
        self == other
    }
}

/// Uniform mesh of the box `extents` with spacing at most `h_target`.
pub fn build_domain_mesh(extents: &[(f64, f64)], h_target: f64) -> Result<Mesh> {
    build_domain_mesh_capped(extents, h_target, node_cap())
}

pub fn build_domain_mesh_capped(extents: &[(f64, f64)], h_target: f64, cap: usize) -> Result<Mesh> {
    if !(h_target > 0.0) {
        return Err(Error::InvalidArgument(format!("h_target = {h_target}")));
    }
    let dim = extents.len();
    if dim != 1 && dim != 2 {
        return Err(Error::InvalidArgument(format!("{dim} axes")));
    }
    let mut lo = [0.0; 2];
    let mut hi = [0.0; 2];
    let mut cells = [0usize; 2];
    let mut nodes = 1usize;
    for (a, &(l, u)) in extents.iter().enumerate() {
        if !(u > l) {
            return Err(Error::InvalidArgument(format!("degenerate extent [{l}, {u}]")));
        }
        let ratio = (u - l) / h_target;
        // tolerate round-off so that e.g. (1/12)/12 still yields 144 cells
        let n = (ratio - 1e-9 * ratio.max(1.0)).ceil().max(1.0);
        if n > cap as f64 {
            return Err(Error::ExcessiveSize { nodes: usize::MAX, cap });
        }
        lo[a] = l;
        hi[a] = u;
        cells[a] = n as usize;
        nodes = nodes.saturating_mul(cells[a] + 1);
    }
    if nodes > cap {
        return Err(Error::ExcessiveSize { nodes, cap });
    }
    Mesh::new(dim, lo, hi, cells, false)
}

/// Periodic mesh of the unit cell `[0,1)^d` with `m` subdivisions per axis.
pub fn build_cell_mesh(m: usize, dim: usize) -> Result<Mesh> {
    if m < 4 {
        return Err(Error::InvalidArgument(format!("cell mesh needs m ≥ 4, got {m}")));
    }
    let nodes = m.checked_pow(dim as u32).unwrap_or(usize::MAX);
    let cap = node_cap();
    if nodes > cap {
        return Err(Error::ExcessiveSize { nodes, cap });
    }
    Mesh::new(dim, [0.0; 2], [1.0, if dim == 2 { 1.0 } else { 0.0 }], [m, m], true)
}

/// Nodal values on a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    mesh: Mesh,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(mesh: Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.node_count() {
            return Err(Error::DimensionMismatch { expected: mesh.node_count(), got: values.len() });
        }
        Ok(GridFunction { mesh, values })
    }

    pub fn zeros(mesh: Mesh) -> Self {
        GridFunction { values: vec![0.0; mesh.node_count()], mesh }
    }

    pub fn from_fn<F: Fn(Point) -> f64>(mesh: Mesh, f: F) -> Self {
        let values = (0..mesh.node_count()).map(|n| f(mesh.node_coords(n))).collect();
        GridFunction { mesh, values }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.mesh.node_index(i, j)]
    }

    fn check(&self, other: &GridFunction) -> Result<()> {
        if self.mesh.same_layout(&other.mesh) {
            Ok(())
        } else {
            Err(Error::MeshMismatch)
        }
    }

    /// `α·self + β·other`.
    pub fn combine(&self, alpha: f64, other: &GridFunction, beta: f64) -> Result<GridFunction> {
        self.check(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| alpha * a + beta * b).collect();
        Ok(GridFunction { mesh: self.mesh, values })
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.combine(1.0, other, -1.0)
    }

    pub fn scaled(&self, alpha: f64) -> GridFunction {
        GridFunction { mesh: self.mesh, values: self.values.iter().map(|v| alpha * v).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Multilinear interpolation at `x` (wrapping on periodic meshes,
    /// clamping otherwise).
    pub fn interpolate(&self, x: Point) -> f64 {
        let m = &self.mesh;
        let (i, s) = m.locate(0, x[0]);
        let (j, t) = if m.dim() == 2 { m.locate(1, x[1]) } else { (0, 0.0) };
        let nodes = m.element_nodes(self.element_index(i, j));
        if m.dim() == 1 {
            return (1.0 - s) * self.values[nodes[0]] + s * self.values[nodes[1]];
        }
        (1.0 - t) * ((1.0 - s) * self.values[nodes[0]] + s * self.values[nodes[1]])
            + t * ((1.0 - s) * self.values[nodes[2]] + s * self.values[nodes[3]])
    }

    /// Gradient of the multilinear interpolant at `x` (one-sided on element faces).
    pub fn interpolate_gradient(&self, x: Point) -> [f64; 2] {
        let m = &self.mesh;
        let (i, s) = m.locate(0, x[0]);
        let (j, t) = if m.dim() == 2 { m.locate(1, x[1]) } else { (0, 0.0) };
        let nodes = m.element_nodes(self.element_index(i, j));
        let v = |k: usize| self.values[nodes[k]];
        if m.dim() == 1 {
            return [(v(1) - v(0)) / m.h(0), 0.0];
        }
        [
            ((1.0 - t) * (v(1) - v(0)) + t * (v(3) - v(2))) / m.h(0),
            ((1.0 - s) * (v(2) - v(0)) + s * (v(3) - v(1))) / m.h(1),
        ]
    }

    fn element_index(&self, i: usize, j: usize) -> usize {
        i + self.mesh.elements_per_axis(0) * j
    }
}

/// Reference-element data at one quadrature point.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    /// Local coordinates in `[0,1]^d`.
    pub xi: [f64; 2],
    /// Weight on the reference element (weights sum to 1).
    pub weight: f64,
    pub phi: [f64; 4],
    /// Derivatives of the shape functions with respect to local coordinates.
    pub dphi: [[f64; 2]; 4],
}

/// Tensor two-point Gauss rule with linear/bilinear shape functions.
pub fn gauss_rule(dim: usize) -> Vec<QuadPoint> {
    let mut pts = Vec::with_capacity(1 << dim);
    let ys: &[f64] = if dim == 2 { &GAUSS2 } else { &[0.0] };
    for &t in ys {
        for &s in &GAUSS2 {
            let mut q = QuadPoint { xi: [s, t], weight: if dim == 2 { 0.25 } else { 0.5 }, phi: [0.0; 4], dphi: [[0.0; 2]; 4] };
            if dim == 1 {
                q.phi[0] = 1.0 - s;
                q.phi[1] = s;
                q.dphi[0] = [-1.0, 0.0];
                q.dphi[1] = [1.0, 0.0];
            } else {
                q.phi = [(1.0 - s) * (1.0 - t), s * (1.0 - t), (1.0 - s) * t, s * t];
                q.dphi = [[-(1.0 - t), -(1.0 - s)], [1.0 - t, -s], [-t, 1.0 - s], [t, s]];
            }
            pts.push(q);
        }
    }
    pts
}

/// Element-wise inclusion flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    mesh: Mesh,
    included: Vec<bool>,
}

impl RegionMask {
    pub fn new(mesh: Mesh, included: Vec<bool>) -> Result<Self> {
        if included.len() != mesh.element_count() {
            return Err(Error::DimensionMismatch { expected: mesh.element_count(), got: included.len() });
        }
        Ok(RegionMask { mesh, included })
    }

    pub fn all(mesh: Mesh) -> Self {
        RegionMask { included: vec![true; mesh.element_count()], mesh }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn contains(&self, e: usize) -> bool {
        self.included[e]
    }

    pub fn count(&self) -> usize {
        self.included.iter().filter(|b| **b).count()
    }

    pub fn complement(&self) -> RegionMask {
        RegionMask { mesh: self.mesh, included: self.included.iter().map(|b| !b).collect() }
    }

    pub fn is_subset_of(&self, other: &RegionMask) -> bool {
        self.mesh == other.mesh && self.included.iter().zip(&other.included).all(|(a, b)| !a || *b)
    }

    pub fn intersects(&self, other: &RegionMask) -> bool {
        self.included.iter().zip(&other.included).any(|(a, b)| *a && *b)
    }
}

const GEOM_TOL: f64 = 1e-12;

/// Elements whose closure lies at distance ≥ `margin` from the boundary.
pub fn interior_mask(mesh: &Mesh, margin: f64) -> Result<RegionMask> {
    if !(margin >= 0.0) {
        return Err(Error::InvalidArgument(format!("margin {margin} must be nonnegative")));
    }
    let included: Vec<bool> = (0..mesh.element_count())
        .map(|e| {
            let o = mesh.element_origin(e);
            (0..mesh.dim()).all(|a| {
                let lo = o[a];
                let hi = o[a] + mesh.h(a);
                lo - mesh.lo()[a] >= margin - GEOM_TOL && mesh.hi()[a] - hi >= margin - GEOM_TOL
            })
        })
        .collect();
    if !included.iter().any(|b| *b) {
        return Err(Error::EmptyRegion);
    }
    RegionMask::new(*mesh, included)
}

/// Half the diameter of the unit cell, `√d / 2`.
pub fn cell_radius(dim: usize) -> f64 {
    0.5 * (dim as f64).sqrt()
}

/// Elements whose centroid lies within `r_cell·ε` of the boundary.
pub fn boundary_strip_mask(mesh: &Mesh, eps: f64) -> Result<RegionMask> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps {eps} must be positive")));
    }
    let width = cell_radius(mesh.dim()) * eps;
    let included = (0..mesh.element_count())
        .map(|e| {
            let c = mesh.element_centroid(e);
            let dist = (0..mesh.dim())
                .map(|a| (c[a] - mesh.lo()[a]).min(mesh.hi()[a] - c[a]))
                .fold(f64::INFINITY, f64::min);
            dist <= width * (1.0 + GEOM_TOL)
        })
        .collect();
    RegionMask::new(*mesh, included)
}
