//! Study scenarios: boundary conditions, loads and sweep parameters.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{CoefficientField, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
    Mixed,
}

/// Edges of the rectangle (endpoints of the interval for `d = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Edge {
    Left,
    Right,
    Bottom,
    Top,
}

impl Edge {
    pub fn axis(self) -> usize {
        match self {
            Edge::Left | Edge::Right => 0,
            Edge::Bottom | Edge::Top => 1,
        }
    }

    pub fn is_upper(self) -> bool {
        matches!(self, Edge::Right | Edge::Top)
    }

    pub fn all(dim: usize) -> &'static [Edge] {
        if dim == 1 {
            &[Edge::Left, Edge::Right]
        } else {
            &[Edge::Left, Edge::Right, Edge::Bottom, Edge::Top]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    pub kind: BoundaryKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dirichlet_part: Vec<Edge>,
}

impl BoundarySpec {
    pub fn dirichlet() -> Self {
        BoundarySpec { kind: BoundaryKind::Dirichlet, dirichlet_part: Vec::new() }
    }

    pub fn neumann() -> Self {
        BoundarySpec { kind: BoundaryKind::Neumann, dirichlet_part: Vec::new() }
    }

    /// Dirichlet on the left edge only.
    pub fn mixed_left() -> Self {
        BoundarySpec { kind: BoundaryKind::Mixed, dirichlet_part: vec![Edge::Left] }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.kind != BoundaryKind::Mixed {
            if !self.dirichlet_part.is_empty() {
                return Err(Error::InvalidScenario(
                    "dirichlet_part is only meaningful for Mixed boundary conditions".into(),
                ));
            }
            return Ok(());
        }
        let all = Edge::all(dim);
        if let Some(e) = self.dirichlet_part.iter().find(|e| !all.contains(e)) {
            return Err(Error::InvalidScenario(format!("edge {e:?} does not exist for d={dim}")));
        }
        let mut distinct: Vec<Edge> = self.dirichlet_part.clone();
        distinct.sort_by_key(|e| *e as u8);
        distinct.dedup();
        if distinct.is_empty() || distinct.len() == all.len() {
            return Err(Error::InvalidScenario(
                "Mixed boundary conditions need a nonempty proper subset of edges".into(),
            ));
        }
        Ok(())
    }

    /// Edges carrying homogeneous Dirichlet data.
    pub fn dirichlet_edges(&self, dim: usize) -> Vec<Edge> {
        match self.kind {
            BoundaryKind::Dirichlet => Edge::all(dim).to_vec(),
            BoundaryKind::Neumann => Vec::new(),
            BoundaryKind::Mixed => self.dirichlet_part.clone(),
        }
    }
}

/// Right-hand sides used by the studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Load {
    /// `f ≡ 1`
    Unit,
    /// `f = sin πx₁ (· sin πx₂)`
    Sine,
}

impl Load {
    pub fn eval(self, x: Point, dim: usize) -> f64 {
        match self {
            Load::Unit => 1.0,
            Load::Sine => {
                let s = (PI * x[0]).sin();
                if dim == 2 {
                    s * (PI * x[1]).sin()
                } else {
                    s
                }
            }
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Load::Unit => "unit",
            Load::Sine => "sine",
        }
    }
}

fn default_loads() -> Vec<Load> {
    vec![Load::Unit]
}

fn default_table_spacing() -> f64 {
    1.0 / 16.0
}

fn default_solver_tol() -> f64 {
    1e-10
}

/// Everything that defines one ε-sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub field: CoefficientField,
    /// Axis extents; the unit box when omitted.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub domain: Vec<[f64; 2]>,
    pub bc: BoundarySpec,
    #[serde(default)]
    pub mu: f64,
    pub p: f64,
    pub s: f64,
    pub s_plus: f64,
    pub epsilons: Vec<f64>,
    pub points_per_period: usize,
    #[serde(default)]
    pub interior_margin: f64,
    #[serde(default = "default_loads")]
    pub loads: Vec<Load>,
    /// Cell mesh subdivisions per axis (256 in 1D, 64 in 2D when omitted).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell_subdivisions: Option<usize>,
    /// Spacing of the macroscopic table of cell solutions.
    #[serde(default = "default_table_spacing")]
    pub table_spacing: f64,
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
}

fn is_integral(v: f64) -> bool {
    (v - v.round()).abs() <= 1e-9 * v.abs().max(1.0)
}

impl Scenario {
    /// A scenario with the defaults used throughout the test-suite.
    pub fn new(field: CoefficientField, bc: BoundarySpec, epsilons: Vec<f64>, points_per_period: usize) -> Self {
        Scenario {
            field,
            domain: Vec::new(),
            bc,
            mu: 0.0,
            p: 2.0,
            s: 1.0,
            s_plus: 1.0,
            epsilons,
            points_per_period,
            interior_margin: 0.0,
            loads: default_loads(),
            cell_subdivisions: None,
            table_spacing: default_table_spacing(),
            solver_tol: default_solver_tol(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let sc: Scenario =
            serde_json::from_str(text).map_err(|e| Error::InvalidScenario(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    /// Axis extents, defaulting to the unit box.
    pub fn extents(&self) -> Vec<(f64, f64)> {
        if self.domain.is_empty() {
            vec![(0.0, 1.0); self.dim()]
        } else {
            self.domain.iter().map(|e| (e[0], e[1])).collect()
        }
    }

    pub fn cell_subdivisions(&self) -> usize {
        self.cell_subdivisions
            .unwrap_or(if self.dim() == 1 { 256 } else { 64 })
    }

    /// Conjugate exponent `p⁺` with `1/p⁺ = 1 − 1/p`.
    pub fn p_plus(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    /// Largest ε of the sweep, playing the role of `ε_μ`.
    pub fn eps_max(&self) -> f64 {
        self.epsilons.iter().cloned().fold(0.0, f64::max)
    }

    pub fn wants_interior(&self) -> bool {
        self.interior_margin > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScenario(m));
        let dim = self.dim();
        let extents = self.extents();
        if extents.len() != dim {
            return bad(format!("domain has {} axes but the field is {dim}-dimensional", extents.len()));
        }
        if extents.iter().any(|(a, b)| !(b > a) || !a.is_finite() || !b.is_finite()) {
            return bad("domain extents must be finite nondegenerate intervals".into());
        }
        self.bc.validate(dim)?;
        if !(self.mu <= 0.0) {
            return bad(format!("mu = {} must be ≤ 0", self.mu));
        }
        if self.bc.kind == BoundaryKind::Neumann && self.mu >= 0.0 {
            return bad("pure Neumann problems need mu < 0".into());
        }
        if !(self.p > 1.0 && self.p.is_finite()) {
            return bad(format!("p = {} must lie in (1, ∞)", self.p));
        }
        for (name, v) in [("s", self.s), ("s_plus", self.s_plus)] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("{name} = {v} must lie in (0, 1]"));
            }
        }
        if self.s_plus > self.s {
            return bad("s_plus must not exceed s".into());
        }
        if self.epsilons.len() < 3 {
            return bad(format!("need at least 3 epsilons, got {}", self.epsilons.len()));
        }
        if self.epsilons.iter().any(|&e| !(e > 0.0 && e <= 0.25)) {
            return bad("every epsilon must lie in (0, 1/4]".into());
        }
        if self.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return bad("epsilons must be strictly decreasing".into());
        }
        for &eps in &self.epsilons {
            for &(a, b) in &extents {
                if !is_integral(a / eps) || !is_integral((b - a) / eps) {
                    return bad(format!("epsilon {eps} does not tile the domain [{a}, {b}]"));
                }
            }
        }
        if self.points_per_period < 4 {
            return bad("points_per_period must be at least 4".into());
        }
        if self.cell_subdivisions() < 4 {
            return bad("cell_subdivisions must be at least 4".into());
        }
        if !(self.table_spacing > 0.0) {
            return bad("table_spacing must be positive".into());
        }
        if !(1e-14..=1e-4).contains(&self.solver_tol) {
            return bad("solver_tol must lie in [1e-14, 1e-4]".into());
        }
        if self.loads.is_empty() {
            return bad("at least one load is required".into());
        }
        if self.interior_margin < 0.0 {
            return bad("interior_margin must be nonnegative".into());
        }
        if self.wants_interior() {
            let half = extents.iter().map(|(a, b)| 0.5 * (b - a)).fold(f64::INFINITY, f64::min);
            if self.interior_margin >= half {
                return bad("interior_margin leaves no interior region".into());
            }
            if self.interior_margin < 2.0 * self.eps_max() {
                return bad(format!(
                    "interior_margin {} must be at least twice the largest epsilon",
                    self.interior_margin
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{preset_coefficient, Preset};

    fn base() -> Scenario {
        let f = preset_coefficient(Preset::Sine1D, &[2.0, 1.0], 1).unwrap();
        Scenario::new(f, BoundarySpec::dirichlet(), vec![0.125, 0.0625, 0.03125], 16)
    }

    #[test]
    fn valid_default_passes() {
        base().validate().unwrap();
    }

    #[test]
    fn rejects_invalid_sweeps() {
        let mut s = base();
        s.epsilons = vec![0.125, 0.0625];
        assert!(s.validate().is_err());
        s.epsilons = vec![0.0625, 0.125, 0.03125];
        assert!(s.validate().is_err());
        s.epsilons = vec![0.5, 0.25, 0.125];
        assert!(s.validate().is_err());
        s.epsilons = vec![0.125, 0.08, 0.0625];
        assert!(s.validate().is_err(), "1/0.08 is not an integer");
    }

    #[test]
    fn neumann_needs_negative_mu() {
        let mut s = base();
        s.bc = BoundarySpec::neumann();
        assert!(s.validate().is_err());
        s.mu = -1.0;
        s.validate().unwrap();
        s.mu = 0.5;
        assert!(s.validate().is_err());
    }

    #[test]
    fn mixed_needs_proper_subset() {
        let mut s = base();
        s.bc = BoundarySpec { kind: BoundaryKind::Mixed, dirichlet_part: vec![] };
        assert!(s.validate().is_err());
        s.bc.dirichlet_part = vec![Edge::Left, Edge::Right];
        assert!(s.validate().is_err());
        s.bc.dirichlet_part = vec![Edge::Top];
        assert!(s.validate().is_err());
        s.bc.dirichlet_part = vec![Edge::Left];
        s.validate().unwrap();
    }

    #[test]
    fn json_rejects_unknown_keys() {
        let good = r#"{"field":{"preset":"Sine1D","params":[2,1],"dim":1},
            "bc":{"kind":"Dirichlet"},"p":2,"s":1,"s_plus":1,
            "epsilons":[0.125,0.0625,0.03125],"points_per_period":16}"#;
        let s = Scenario::from_json(good).unwrap();
        assert_eq!(s.loads, vec![Load::Unit]);
        let bad = good.replace("\"p\":2", "\"p\":2,\"q\":3");
        assert!(matches!(Scenario::from_json(&bad), Err(Error::InvalidScenario(_))));
    }
}
