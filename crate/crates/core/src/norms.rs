//! Discrete Lebesgue, Sobolev, strip and Besov-type norms of grid functions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{boundary_strip_mask, gauss_rule, GridFunction, Mesh, RegionMask};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NormKind {
    /// `‖u‖_p`
    Lp,
    /// `‖∇u‖_p`
    W1pSemi,
    /// `(‖u‖_p^p + ‖∇u‖_p^p)^{1/p}`
    W1pFull,
    /// Grid surrogate of the `Λ^r_p` seminorm.
    BesovSemi(f64),
    /// `‖u‖_p` over the boundary strip of width `r_cell·ε`.
    StripLp(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormRequest {
    pub kind: NormKind,
    pub p: f64,
    pub mask: Option<RegionMask>,
}

impl NormRequest {
    pub fn new(kind: NormKind, p: f64) -> Self {
        NormRequest { kind, p, mask: None }
    }

    pub fn masked(kind: NormKind, p: f64, mask: RegionMask) -> Self {
        NormRequest { kind, p, mask: Some(mask) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0 && self.p.is_finite()) {
            return Err(Error::InvalidArgument(format!("p = {} must lie in (1, ∞)", self.p)));
        }
        match self.kind {
            NormKind::BesovSemi(r) if !(r > 0.0 && r < 1.0) => {
                Err(Error::InvalidArgument(format!("Besov order {r} must lie in (0, 1)")))
            }
            NormKind::StripLp(eps) if !(eps > 0.0) => Err(Error::InvalidArgument(format!("strip eps {eps}"))),
            _ => Ok(()),
        }
    }
}

/// Per-element integrals `∫_e |v|^p` and `∫_e |∇v|^p` of the interpolant of
/// the nodal values `value(node)`, by the two-point Gauss rule.
fn element_powers<F>(mesh: &Mesh, value: F, p: f64, want_value: bool, want_grad: bool, include: &(dyn Fn(usize) -> bool + Sync)) -> (f64, f64)
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let rule = gauss_rule(mesh.dim());
    let nl = mesh.local_nodes();
    let h = [mesh.h(0), mesh.h(1)];
    let dim = mesh.dim();
    let vol = mesh.element_volume();
    let parts: Vec<(f64, f64)> = (0..mesh.element_count())
        .into_par_iter()
        .map(|e| {
            if !include(e) {
                return (0.0, 0.0);
            }
            let nodes = mesh.element_nodes(e);
            let mut vals = [0.0; 4];
            for l in 0..nl {
                vals[l] = value(e, nodes[l]);
            }
            let (mut sv, mut sg) = (0.0, 0.0);
            for q in &rule {
                let w = q.weight * vol;
                if want_value {
                    let v: f64 = (0..nl).map(|l| q.phi[l] * vals[l]).sum();
                    sv += w * v.abs().powf(p);
                }
                if want_grad {
                    let mut g = [0.0; 2];
                    for l in 0..nl {
                        for a in 0..dim {
                            g[a] += vals[l] * q.dphi[l][a] / h[a];
                        }
                    }
                    sg += w * (g[0] * g[0] + g[1] * g[1]).sqrt().powf(p);
                }
            }
            (sv, sg)
        })
        .collect();
    parts.iter().fold((0.0, 0.0), |acc, v| (acc.0 + v.0, acc.1 + v.1))
}

/// Evaluates the requested norm of `u`.
pub fn norm(u: &GridFunction, req: &NormRequest) -> Result<f64> {
    req.validate()?;
    let mesh = u.mesh();
    if let Some(m) = &req.mask {
        if !m.mesh().same_layout(mesh) {
            return Err(Error::MeshMismatch);
        }
    }
    let p = req.p;
    let vals = u.values();
    let mask = req.mask.as_ref();
    let strip = match req.kind {
        NormKind::StripLp(eps) => Some(boundary_strip_mask(mesh, eps)?),
        _ => None,
    };
    let include = |e: usize| mask.is_none_or(|m| m.contains(e)) && strip.as_ref().is_none_or(|s| s.contains(e));
    let nodal = |_e: usize, n: usize| vals[n];
    Ok(match req.kind {
        NormKind::Lp | NormKind::StripLp(_) => element_powers(mesh, nodal, p, true, false, &include).0.powf(1.0 / p),
        NormKind::W1pSemi => element_powers(mesh, nodal, p, false, true, &include).1.powf(1.0 / p),
        NormKind::W1pFull => {
            let (a, b) = element_powers(mesh, nodal, p, true, true, &include);
            (a + b).powf(1.0 / p)
        }
        NormKind::BesovSemi(r) => besov_masked(u, r, p, &include)?,
    })
}

pub fn lp(u: &GridFunction, p: f64) -> Result<f64> {
    norm(u, &NormRequest::new(NormKind::Lp, p))
}

pub fn w1p_semi(u: &GridFunction, p: f64) -> Result<f64> {
    norm(u, &NormRequest::new(NormKind::W1pSemi, p))
}

pub fn w1p_full(u: &GridFunction, p: f64) -> Result<f64> {
    norm(u, &NormRequest::new(NormKind::W1pFull, p))
}

/// Grid-aligned shift directions (in node offsets per axis) at scale `t`.
fn shifts(mesh: &Mesh, t: f64) -> Vec<[i64; 2]> {
    let k = |a: usize, scale: f64| (t / (mesh.h(a) * scale) + 1e-9).floor() as i64;
    let mut out = vec![[k(0, 1.0), 0]];
    if mesh.dim() == 2 {
        out.push([0, k(1, 1.0)]);
        let d = [k(0, std::f64::consts::SQRT_2), k(1, std::f64::consts::SQRT_2)];
        if d[0] > 0 && d[1] > 0 {
            out.push([d[0], d[1]]);
            out.push([d[0], -d[1]]);
        }
    }
    out.retain(|s| s[0] != 0 || s[1] != 0);
    out
}

/// `max_t t^{−r} sup_{|h′| ≤ t} ‖u(· + h′) − u‖_p` over dyadic `t = h·2^j ≤
/// (shortest extent)/4`, with `h′` restricted to grid-aligned shifts along
/// the axes and diagonals. The inner supremum is taken over all scales
/// up to `t`.
pub fn besov_seminorm(u: &GridFunction, r: f64, p: f64) -> Result<f64> {
    norm(u, &NormRequest::new(NormKind::BesovSemi(r), p))
}

fn besov_masked(u: &GridFunction, r: f64, p: f64, include: &(dyn Fn(usize) -> bool + Sync)) -> Result<f64> {
    let mesh = u.mesh();
    let dim = mesh.dim();
    let hmin = (0..dim).map(|a| mesh.h(a)).fold(f64::INFINITY, f64::min);
    let extent = (0..dim).map(|a| mesh.hi()[a] - mesh.lo()[a]).fold(f64::INFINITY, f64::min);
    let vals = u.values();
    let mut best = 0.0f64;
    let mut running = 0.0f64;
    let mut t = hmin;
    while t <= extent / 4.0 * (1.0 + 1e-12) {
        for s in shifts(mesh, t) {
            let shifted = |_e: usize, n: usize| {
                let (i, j) = mesh.node_ij(n);
                let (i2, j2) = (i as i64 + s[0], j as i64 + s[1]);
                vals[mesh.node_index(i2 as usize, j2 as usize)] - vals[n]
            };
            // elements whose shifted copy stays inside the mesh
            let overlap = |e: usize| {
                if !include(e) {
                    return false;
                }
                let (i, j) = mesh.element_ij(e);
                let ok = |k: usize, off: i64, a: usize| {
                    let lo = k as i64 + off;
                    lo >= 0 && lo < mesh.cells(a) as i64
                };
                ok(i, s[0], 0) && (dim == 1 || ok(j, s[1], 1))
            };
            let (sum, _) = element_powers(mesh, shifted, p, true, false, &overlap);
            running = running.max(sum.powf(1.0 / p));
        }
        best = best.max(t.powf(-r) * running);
        t *= 2.0;
    }
    Ok(best)
}

/// One row of a strip-lemma sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StripRow {
    pub eps: f64,
    pub strip: f64,
    pub predictor: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StripTable {
    pub rows: Vec<StripRow>,
    /// `max ratio / min ratio` over the sweep.
    pub spread: f64,
}

/// Compares the strip norm with `ε^{1/q} ‖u‖_{1,q}^{1/q} ‖u‖_q^{1/q⁺}` for
/// each ε.
pub fn strip_lemma_check(u: &GridFunction, q: f64, eps_list: &[f64]) -> Result<StripTable> {
    let full = w1p_full(u, q)?;
    let plain = lp(u, q)?;
    let q_plus = q / (q - 1.0);
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let strip = norm(u, &NormRequest::new(NormKind::StripLp(eps), q))?;
        let predictor = eps.powf(1.0 / q) * full.powf(1.0 / q) * plain.powf(1.0 / q_plus);
        let ratio = if predictor > 0.0 { strip / predictor } else { 0.0 };
        rows.push(StripRow { eps, strip, predictor, ratio });
    }
    let max = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let min = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let spread = if min > 0.0 { max / min } else { f64::INFINITY };
    Ok(StripTable { rows, spread })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_domain_mesh, interior_mask};
    use std::f64::consts::PI;

    fn line(h: f64) -> Mesh {
        build_domain_mesh(&[(0.0, 1.0)], h).unwrap()
    }

    #[test]
    fn constant_has_unit_norm() {
        let u = GridFunction::from_fn(line(0.1), |_| 1.0);
        assert!((lp(&u, 2.0).unwrap() - 1.0).abs() < 1e-14);
        assert!(w1p_semi(&u, 3.0).unwrap() < 1e-14);
        assert!(besov_seminorm(&u, 0.5, 2.0).unwrap() < 1e-14);
    }

    #[test]
    fn sine_norms() {
        let u = GridFunction::from_fn(line(1.0 / 512.0), |x| (2.0 * PI * x[0]).sin());
        assert!((lp(&u, 2.0).unwrap() - 0.5f64.sqrt()).abs() <= 1e-4);
        assert!((w1p_semi(&u, 2.0).unwrap() - 2.0 * PI / 2f64.sqrt()).abs() <= 1e-3);
    }

    #[test]
    fn besov_of_linear_is_mesh_stable() {
        let b1 = besov_seminorm(&GridFunction::from_fn(line(1.0 / 128.0), |x| x[0]), 0.5, 2.0).unwrap();
        let b2 = besov_seminorm(&GridFunction::from_fn(line(1.0 / 256.0), |x| x[0]), 0.5, 2.0).unwrap();
        assert!(b1 > 0.0 && (b1 / b2 - 1.0).abs() <= 0.05, "{b1} {b2}");
    }

    #[test]
    fn besov_of_hat_is_bounded_by_lipschitz_constant() {
        let u = GridFunction::from_fn(line(1.0 / 256.0), |x| 1.0 - (2.0 * x[0] - 1.0).abs());
        // ‖u(·+t) − u‖₂ ≤ 2t, so t^{-r}ω(t) ≤ 2 t^{1−r} ≤ 2·(1/4)^{1−r}
        for r in [0.5, 0.9, 0.99] {
            let b = besov_seminorm(&u, r, 2.0).unwrap();
            assert!(b <= 2.0 * 0.25f64.powf(1.0 - r) + 1e-12, "{r}: {b}");
        }
    }

    #[test]
    fn strip_norm_of_constant_matches_hand_integral() {
        let eps = 0.125;
        let u = GridFunction::from_fn(line(eps / 2.0), |_| 1.0);
        let t = strip_lemma_check(&u, 2.0, &[eps]).unwrap();
        assert!((t.rows[0].strip - eps.sqrt()).abs() < 1e-14);
        assert!((t.rows[0].ratio - 1.0).abs() < 1e-12);
        let big = strip_lemma_check(&u, 2.0, &[5.0]).unwrap();
        assert!(big.rows[0].ratio.is_finite());
    }

    #[test]
    fn mask_rejects_foreign_mesh() {
        let u = GridFunction::from_fn(line(0.1), |_| 1.0);
        let other = line(0.05);
        let r = norm(&u, &NormRequest::masked(NormKind::Lp, 2.0, RegionMask::all(other)));
        assert!(matches!(r, Err(Error::MeshMismatch)));
    }

    #[test]
    fn masks_split_the_integral() {
        let m = build_domain_mesh(&[(0.0, 1.0), (0.0, 1.0)], 1.0 / 32.0).unwrap();
        let u = GridFunction::from_fn(m, |x| (3.0 * x[0]).sin() + x[1] * x[1]);
        let inner = interior_mask(&m, 0.25).unwrap();
        let p = 3.0;
        let a = norm(&u, &NormRequest::masked(NormKind::Lp, p, inner.clone())).unwrap().powf(p);
        let b = norm(&u, &NormRequest::masked(NormKind::Lp, p, inner.complement())).unwrap().powf(p);
        let all = lp(&u, p).unwrap().powf(p);
        assert!((a + b - all).abs() <= 1e-10 * all);
    }
}
