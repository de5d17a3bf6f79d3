//! Coefficient presets `A(x, y)`, the two-scale evaluation map and
//! ellipticity auditing.
//!
//! Presets are analytic in the fast variable `y` (1-periodic, unit cell
//! realized as `[0,1)^d`) and Lipschitz in the slow variable `x`. All
//! presets are isotropic: `A(x, y) = a(x, y) I`. Bounds and Lipschitz
//! constants are certified on the box `[0,1]^d`; outside that box the slow
//! variable is clamped onto it, which keeps both certificates valid
//! everywhere.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in the physical or cell variable. The second component is
/// ignored for `d = 1`.
pub type Point = [f64; 2];

/// A (possibly 1×1) coefficient tensor stored as a 2×2 array.
pub type Tensor = [[f64; 2]; 2];

pub fn scalar_tensor(a: f64, dim: usize) -> Tensor {
    if dim == 1 {
        [[a, 0.0], [0.0, 0.0]]
    } else {
        [[a, 0.0], [0.0, a]]
    }
}

/// Eigenvalues `(min, max)` of the symmetric part of `t`.
pub fn sym_eigenvalues(t: &Tensor, dim: usize) -> (f64, f64) {
    if dim == 1 {
        return (t[0][0], t[0][0]);
    }
    let a = t[0][0];
    let d = t[1][1];
    let b = 0.5 * (t[0][1] + t[1][0]);
    let mean = 0.5 * (a + d);
    let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    (mean - rad, mean + rad)
}

/// Spectral norm of a symmetric tensor difference.
fn sym_norm(t: &Tensor, dim: usize) -> f64 {
    let (lo, hi) = sym_eigenvalues(t, dim);
    lo.abs().max(hi.abs())
}

#[inline]
fn wrap_unit(y: f64) -> f64 {
    let w = y - y.floor();
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preset {
    Constant,
    Sine1D,
    Laminate2D,
    SineProduct2D,
    LocallyPeriodic1D,
    LocallyPeriodic2D,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::Constant,
        Preset::Sine1D,
        Preset::Laminate2D,
        Preset::SineProduct2D,
        Preset::LocallyPeriodic1D,
        Preset::LocallyPeriodic2D,
    ];

    fn name(self) -> &'static str {
        match self {
            Preset::Constant => "Constant",
            Preset::Sine1D => "Sine1D",
            Preset::Laminate2D => "Laminate2D",
            Preset::SineProduct2D => "SineProduct2D",
            Preset::LocallyPeriodic1D => "LocallyPeriodic1D",
            Preset::LocallyPeriodic2D => "LocallyPeriodic2D",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }
}

/// Serialized form of a coefficient field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub preset: String,
    pub params: Vec<f64>,
    pub dim: usize,
}

/// Descriptor of `A(x, y)` with certified bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FieldSpec", into = "FieldSpec")]
pub struct CoefficientField {
    preset: Preset,
    params: Vec<f64>,
    dim: usize,
    lipschitz_x: f64,
    c_a: f64,
    norm_inf: f64,
}

impl TryFrom<FieldSpec> for CoefficientField {
    type Error = Error;

    fn try_from(spec: FieldSpec) -> Result<Self> {
        preset_coefficient(spec.preset.parse()?, &spec.params, spec.dim)
    }
}

impl From<CoefficientField> for FieldSpec {
    fn from(f: CoefficientField) -> Self {
        FieldSpec {
            preset: f.preset.to_string(),
            params: f.params,
            dim: f.dim,
        }
    }
}

/// Builds a preset field and certifies `c_A`, `‖A‖_∞` and the Lipschitz
/// constant in `x` analytically.
pub fn preset_coefficient(preset: Preset, params: &[f64], dim: usize) -> Result<CoefficientField> {
    let bad = |reason: String| Error::InvalidParams {
        preset: preset.to_string(),
        reason,
    };
    let expect = |n: usize| {
        if params.len() != n {
            Err(bad(format!("expected {n} parameters, got {}", params.len())))
        } else if params.iter().any(|p| !p.is_finite()) {
            Err(bad("parameters must be finite".into()))
        } else {
            Ok(())
        }
    };
    let need_dim = |d: usize| {
        if dim != d {
            Err(bad(format!("preset is {d}-dimensional, requested d={dim}")))
        } else {
            Ok(())
        }
    };
    if dim != 1 && dim != 2 {
        return Err(bad(format!("dimension must be 1 or 2, got {dim}")));
    }
    let oscillation = |c: f64, amp: f64| {
        if c <= 0.0 {
            Err(bad(format!("mean {c} must be positive")))
        } else if amp.abs() >= c {
            Err(bad(format!("amplitude {amp} must be smaller than the mean {c}")))
        } else {
            Ok((c - amp.abs(), c + amp.abs()))
        }
    };
    let (c_a, norm_inf, lipschitz_x) = match preset {
        Preset::Constant => {
            expect(1)?;
            let c = params[0];
            if c <= 0.0 {
                return Err(bad(format!("constant {c} must be positive")));
            }
            (c, c, 0.0)
        }
        Preset::Sine1D | Preset::Laminate2D | Preset::SineProduct2D => {
            expect(2)?;
            need_dim(if preset == Preset::Sine1D { 1 } else { 2 })?;
            let (lo, hi) = oscillation(params[0], params[1])?;
            (lo, hi, 0.0)
        }
        Preset::LocallyPeriodic1D | Preset::LocallyPeriodic2D => {
            expect(3)?;
            need_dim(if preset == Preset::LocallyPeriodic1D { 1 } else { 2 })?;
            let (lo, hi) = oscillation(params[0], params[1])?;
            let slope = params[2];
            if slope <= -1.0 {
                return Err(bad(format!("slope {slope} makes 1 + slope·x vanish on [0,1]")));
            }
            let (g_lo, g_hi) = (1.0f64.min(1.0 + slope), 1.0f64.max(1.0 + slope));
            (g_lo * lo, g_hi * hi, slope.abs() * hi)
        }
    };
    Ok(CoefficientField {
        preset,
        params: params.to_vec(),
        dim,
        lipschitz_x,
        c_a,
        norm_inf,
    })
}

impl CoefficientField {
    pub fn preset(&self) -> Preset {
        self.preset
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Certified Lipschitz constant of `x ↦ A(x, y)`.
    pub fn lipschitz_x(&self) -> f64 {
        self.lipschitz_x
    }

    /// Certified lower ellipticity bound `c_A`.
    pub fn c_a(&self) -> f64 {
        self.c_a
    }

    /// Certified upper bound `‖A‖_∞`.
    pub fn norm_inf(&self) -> f64 {
        self.norm_inf
    }

    pub fn is_x_independent(&self) -> bool {
        self.lipschitz_x == 0.0
    }

    /// `a(x, y)`, the scalar multiplying the identity.
    pub fn scalar(&self, x: Point, y: Point) -> f64 {
        let p = &self.params;
        let s0 = (2.0 * PI * wrap_unit(y[0])).sin();
        match self.preset {
            Preset::Constant => p[0],
            Preset::Sine1D | Preset::Laminate2D => p[0] + p[1] * s0,
            Preset::SineProduct2D => p[0] + p[1] * s0 * (2.0 * PI * wrap_unit(y[1])).sin(),
            Preset::LocallyPeriodic1D | Preset::LocallyPeriodic2D => {
                let x0 = x[0].clamp(0.0, 1.0);
                (1.0 + p[2] * x0) * (p[0] + p[1] * s0)
            }
        }
    }

    pub fn eval(&self, x: Point, y: Point) -> Tensor {
        scalar_tensor(self.scalar(x, y), self.dim)
    }
}

/// Two-scale evaluation `A(x, x/ε)`, with `x/ε` wrapped into `[0,1)^d`.
pub fn tau_eps(field: &CoefficientField, eps: f64, x: Point) -> Tensor {
    let y = [wrap_unit(x[0] / eps), wrap_unit(x[1] / eps)];
    field.eval(x, y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub min_eig: f64,
    pub max_eig: f64,
    pub lipschitz_estimate: f64,
    pub samples: usize,
}

/// Slack allowed between sampled values and the certified bounds.
pub const AUDIT_TOL: f64 = 1e-12;

/// Samples `(x, y)` uniformly on `[0,1]^d × [0,1)^d` and checks the
/// certified bounds; pairs `(x, x')` sharing `y` probe the Lipschitz constant.
pub fn audit_ellipticity(field: &CoefficientField, sample_count: usize, seed: u64) -> Result<AuditReport> {
    audit_sampler(
        |x, y| field.eval(x, y),
        field.dim,
        (field.c_a, field.norm_inf, field.lipschitz_x),
        sample_count,
        seed,
    )
}

/// Audit of an arbitrary sampler against claimed `(c_A, ‖A‖_∞, Lipschitz)`.
pub fn audit_sampler<F: Fn(Point, Point) -> Tensor>(
    sampler: F,
    dim: usize,
    claimed: (f64, f64, f64),
    sample_count: usize,
    seed: u64,
) -> Result<AuditReport> {
    if sample_count < 1000 {
        return Err(Error::InvalidArgument(format!(
            "audit needs at least 1000 samples, got {sample_count}"
        )));
    }
    let (c_a, norm_inf, lip) = claimed;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Point {
        let mut p = [0.0; 2];
        for v in p.iter_mut().take(dim) {
            *v = rng.gen::<f64>();
        }
        p
    };
    let mut min_eig = f64::INFINITY;
    let mut max_eig = f64::NEG_INFINITY;
    let mut lip_est: f64 = 0.0;
    for _ in 0..sample_count {
        let x = draw(&mut rng);
        let y = draw(&mut rng);
        let t = sampler(x, y);
        let (lo, hi) = sym_eigenvalues(&t, dim);
        if lo < c_a - AUDIT_TOL {
            return Err(Error::AuditViolation { x, y, quantity: "min eigenvalue", value: lo, bound: c_a });
        }
        if hi > norm_inf + AUDIT_TOL {
            return Err(Error::AuditViolation { x, y, quantity: "max eigenvalue", value: hi, bound: norm_inf });
        }
        min_eig = min_eig.min(lo);
        max_eig = max_eig.max(hi);

        let mut x2 = x;
        for v in x2.iter_mut().take(dim) {
            *v = (*v + 0.2 * (rng.gen::<f64>() - 0.5)).clamp(0.0, 1.0);
        }
        let dist = ((x2[0] - x[0]).powi(2) + (x2[1] - x[1]).powi(2)).sqrt();
        if dist > 1e-9 {
            let t2 = sampler(x2, y);
            let diff = [
                [t2[0][0] - t[0][0], t2[0][1] - t[0][1]],
                [t2[1][0] - t[1][0], t2[1][1] - t[1][1]],
            ];
            let q = sym_norm(&diff, dim) / dist;
            if q > lip + 1e-9 * (1.0 + lip) {
                return Err(Error::AuditViolation { x, y, quantity: "Lipschitz quotient", value: q, bound: lip });
            }
            lip_est = lip_est.max(q);
        }
    }
    Ok(AuditReport {
        min_eig,
        max_eig,
        lipschitz_estimate: lip_est,
        samples: sample_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_preset() {
        let f = preset_coefficient(Preset::Constant, &[2.0], 1).unwrap();
        assert_eq!((f.c_a(), f.norm_inf(), f.lipschitz_x()), (2.0, 2.0, 0.0));
        assert_eq!(f.eval([0.3, 0.0], [0.7, 0.0])[0][0], 2.0);
    }

    #[test]
    fn sine_preset_bounds() {
        let f = preset_coefficient(Preset::Sine1D, &[2.0, 1.0], 1).unwrap();
        assert_eq!((f.c_a(), f.norm_inf()), (1.0, 3.0));
    }

    #[test]
    fn locally_periodic_bounds() {
        // interval arithmetic: (1 + 0.5x) ∈ [1, 1.5], 2 + sin ∈ [1, 3]
        let f = preset_coefficient(Preset::LocallyPeriodic1D, &[2.0, 1.0, 0.5], 1).unwrap();
        assert_eq!(f.c_a(), 1.0);
        assert_eq!(f.norm_inf(), 4.5);
        assert_eq!(f.lipschitz_x(), 1.5);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(
            preset_coefficient(Preset::Sine1D, &[1.0, 1.0], 1),
            Err(Error::InvalidParams { .. })
        ));
        assert!(preset_coefficient(Preset::Sine1D, &[2.0], 1).is_err());
        assert!(preset_coefficient(Preset::Laminate2D, &[2.0, 1.0], 1).is_err());
        assert!(preset_coefficient(Preset::LocallyPeriodic1D, &[2.0, 1.0, -1.0], 1).is_err());
        assert!(matches!("Checkerboard".parse::<Preset>(), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn tau_eps_examples() {
        let c = preset_coefficient(Preset::Constant, &[2.5], 2).unwrap();
        assert_eq!(tau_eps(&c, 0.013, [0.41, 0.77])[1][1], 2.5);
        let f = preset_coefficient(Preset::Sine1D, &[2.0, 1.0], 1).unwrap();
        assert!((tau_eps(&f, 0.5, [0.25, 0.0])[0][0] - 2.0).abs() < 1e-15);
        assert!((tau_eps(&f, 0.1, [0.025, 0.0])[0][0] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn audit_constant_and_sine() {
        let c = preset_coefficient(Preset::Constant, &[2.0], 1).unwrap();
        let r = audit_ellipticity(&c, 1000, 1).unwrap();
        assert_eq!((r.min_eig, r.max_eig, r.lipschitz_estimate), (2.0, 2.0, 0.0));

        let f = preset_coefficient(Preset::Sine1D, &[2.0, 1.0], 1).unwrap();
        let r = audit_ellipticity(&f, 10_000, 7).unwrap();
        assert!((1.0..=1.01).contains(&r.min_eig), "{}", r.min_eig);
        assert!((2.99..=3.0).contains(&r.max_eig), "{}", r.max_eig);

        let l = preset_coefficient(Preset::Laminate2D, &[2.0, 1.0], 2).unwrap();
        let r = audit_ellipticity(&l, 10_000, 7).unwrap();
        assert!(r.min_eig >= 1.0 && r.min_eig < 1.01);
        assert!(r.max_eig <= 3.0 && r.max_eig > 2.99);
    }

    #[test]
    fn audit_flags_overclaimed_bounds() {
        let f = preset_coefficient(Preset::Sine1D, &[2.0, 1.0], 1).unwrap();
        let err = audit_sampler(|x, y| f.eval(x, y), 1, (1.5, 3.0, 0.0), 1000, 3).unwrap_err();
        assert!(matches!(err, Error::AuditViolation { quantity: "min eigenvalue", .. }));
        let g = preset_coefficient(Preset::LocallyPeriodic1D, &[2.0, 1.0, 0.5], 1).unwrap();
        let err = audit_sampler(|x, y| g.eval(x, y), 1, (1.0, 4.5, 0.1), 1000, 3).unwrap_err();
        assert!(matches!(err, Error::AuditViolation { quantity: "Lipschitz quotient", .. }));
        assert!(audit_ellipticity(&f, 999, 0).is_err());
    }

    #[test]
    fn field_round_trips_through_json() {
        let f = preset_coefficient(Preset::LocallyPeriodic2D, &[2.0, 1.0, 0.5], 2).unwrap();
        let s = serde_json::to_string(&f).unwrap();
        let g: CoefficientField = serde_json::from_str(&s).unwrap();
        assert_eq!(f, g);
        assert!(serde_json::from_str::<CoefficientField>(r#"{"preset":"Sine1D","params":[1,2],"dim":1}"#).is_err());
    }
}
