//! ε-sweeps: oscillatory and effective solves, correctors, error norms and
//! fitted convergence rates.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::cell::{tabulate_effective, EffectiveField, XGrid};
use crate::corrector::{build_r0, corrector_apply, corrector_norm_check, first_order, CorrectorInputs};
use crate::error::{Error, Result};
use crate::fem::{assemble, fine_mesh, load_on, solve_resolvent};
use crate::field::{tau_eps, Point};
use crate::linalg::SolveStats;
use crate::mesh::{build_cell_mesh, interior_mask, Mesh};
use crate::norms::{lp, norm, w1p_full, NormKind, NormRequest};
use crate::scenario::Scenario;

/// Largest fit residual a passing target may have.
pub const MAX_FIT_RESIDUAL: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Region {
    Global,
    /// The set of points at least `interior_margin` from the boundary.
    Interior,
    /// The boundary strip of width proportional to ε.
    Strip,
}

/// One measured error quantity and the exponent guaranteed for it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateTarget {
    pub name: String,
    pub guaranteed_exponent: f64,
    pub norm: NormKind,
    pub uses_corrector: bool,
    pub region: Region,
}

impl RateTarget {
    fn request(&self, mesh: &Mesh, scenario: &Scenario, eps: f64) -> Result<NormRequest> {
        Ok(match self.region {
            Region::Global => NormRequest::new(self.norm, scenario.p),
            Region::Interior => NormRequest::masked(self.norm, scenario.p, interior_mask(mesh, scenario.interior_margin)?),
            Region::Strip => NormRequest::new(NormKind::StripLp(eps), scenario.p),
        })
    }
}

/// The targets implied by the scenario's `s`, `s⁺` and `p`.
pub fn targets(scenario: &Scenario) -> Vec<RateTarget> {
    let (p, pp) = (scenario.p, scenario.p_plus());
    let global = scenario.s / p;
    let dual = global + scenario.s_plus / pp;
    let r = 0.5;
    let mut out = vec![
        RateTarget { name: "Lp".into(), guaranteed_exponent: dual, norm: NormKind::Lp, uses_corrector: false, region: Region::Global },
        RateTarget {
            name: "W1p-corrected".into(),
            guaranteed_exponent: global,
            norm: NormKind::W1pFull,
            uses_corrector: true,
            region: Region::Global,
        },
    ];
    if scenario.wants_interior() {
        out.push(RateTarget {
            name: "W1p-interior".into(),
            guaranteed_exponent: dual,
            norm: NormKind::W1pFull,
            uses_corrector: true,
            region: Region::Interior,
        });
    }
    out.push(RateTarget {
        name: "Besov-1/2".into(),
        guaranteed_exponent: global.min(1.0 - r),
        norm: NormKind::BesovSemi(r),
        uses_corrector: false,
        region: Region::Global,
    });
    out.push(RateTarget {
        name: "Lp-strip".into(),
        guaranteed_exponent: dual,
        norm: NormKind::Lp,
        uses_corrector: false,
        region: Region::Strip,
    });
    out
}

/// Measurements at one ε, each normalised by `‖f‖_p` and maximised over
/// the scenario loads.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub eps: f64,
    pub h: f64,
    pub nodes: usize,
    /// One entry per target, in target order.
    pub errors: Vec<f64>,
    /// `‖u_ε − u₀‖_{W¹_p}`, for comparison with the corrected error.
    pub w1_uncorrected: f64,
    /// `(ε‖∇K‖_p + ‖K‖_p)/‖f‖_p`.
    pub corrector_ratio: f64,
    pub stats: SolveStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::NotApplicable => "N/A",
        })
    }
}

/// Least-squares line through `(ln ε, ln error)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root mean square of the residuals in natural-log units.
    pub residual: f64,
    /// Half-width of the 95% confidence interval of the slope.
    pub ci95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetFit {
    pub target: String,
    pub fit: Option<RateFit>,
    /// ε values left out because the error was at solver-noise level.
    pub excluded: Vec<f64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub scenario: Scenario,
    pub targets: Vec<RateTarget>,
    /// Sorted by decreasing ε.
    pub rows: Vec<StudyRow>,
    pub fits: Vec<TargetFit>,
}

impl ConvergenceReport {
    pub fn target_index(&self, name: &str) -> Option<usize> {
        self.targets.iter().position(|t| t.name == name)
    }

    pub fn fit(&self, name: &str) -> Option<&TargetFit> {
        self.fits.iter().find(|f| f.target == name)
    }

    pub fn series(&self, name: &str) -> Option<Vec<(f64, f64)>> {
        let k = self.target_index(name)?;
        Some(self.rows.iter().map(|r| (r.eps, r.errors[k])).collect())
    }

    pub fn all_pass(&self) -> bool {
        self.fits.iter().all(|f| f.verdict != Verdict::Fail)
    }
}

/// Fits `error ≈ C ε^slope` by least squares on logarithms.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::InsufficientData { usable: points.len() });
    }
    if let Some(&(_, e)) = points.iter().find(|p| !(p.1 > 0.0) || !(p.0 > 0.0)) {
        return Err(Error::NonPositiveError(e));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 1e-300 {
        return Err(Error::InsufficientData { usable: 1 });
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let residual = (sse / n).sqrt();
    let dof = n - 2.0;
    let se = (sse / dof / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof).map(|d| d.inverse_cdf(0.975)).unwrap_or(f64::NAN);
    Ok(RateFit { slope, intercept, residual, ci95: t * se })
}

/// PASS iff the slope reaches the guaranteed exponent up to `tolerance`
/// and the fit residual is at most [`MAX_FIT_RESIDUAL`].
pub fn judge(fit: &RateFit, guaranteed: f64, tolerance: f64) -> Verdict {
    if fit.slope >= guaranteed - tolerance && fit.residual <= MAX_FIT_RESIDUAL {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

/// Re-evaluates every target of `report` with the given slope tolerance.
pub fn verdict(report: &ConvergenceReport, tolerance: f64) -> Vec<(String, Verdict)> {
    report
        .targets
        .iter()
        .zip(&report.fits)
        .map(|(t, f)| {
            let v = f.fit.as_ref().map_or(Verdict::NotApplicable, |fit| judge(fit, t.guaranteed_exponent, tolerance));
            (t.name.clone(), v)
        })
        .collect()
}

fn fit_targets(scenario: &Scenario, targets: &[RateTarget], rows: &[StudyRow], tolerance: f64) -> Result<Vec<TargetFit>> {
    let floor = 10.0 * scenario.solver_tol;
    targets
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let (used, excluded): (Vec<_>, Vec<_>) = rows.iter().map(|r| (r.eps, r.errors[k])).partition(|p| p.1 > floor);
            let excluded: Vec<f64> = excluded.into_iter().map(|p| p.0).collect();
            if used.len() < 3 {
                return Ok(TargetFit { target: t.name.clone(), fit: None, excluded, verdict: Verdict::NotApplicable });
            }
            let fit = fit_rate(&used)?;
            let verdict = judge(&fit, t.guaranteed_exponent, tolerance);
            Ok(TargetFit { target: t.name.clone(), fit: Some(fit), excluded, verdict })
        })
        .collect()
}

/// Tabulates `A⁰` and `N` over the scenario domain, reaching far enough
/// outside for every corrector evaluation of the sweep.
pub fn effective_table(scenario: &Scenario) -> Result<EffectiveField> {
    let grid = XGrid::covering(&scenario.extents(), scenario.table_spacing, scenario.eps_max())?;
    let cell_mesh = build_cell_mesh(scenario.cell_subdivisions(), scenario.dim())?;
    tabulate_effective(&scenario.field, &grid, &cell_mesh)
}

/// Runs the sweep with the default slope tolerance of 0.1.
pub fn run_study(scenario: &Scenario) -> Result<ConvergenceReport> {
    run_study_with(scenario, 0.1)
}

pub fn run_study_with(scenario: &Scenario, tolerance: f64) -> Result<ConvergenceReport> {
    scenario.validate()?;
    let table = Arc::new(effective_table(scenario)?);
    let targets = targets(scenario);
    let mut eps_list = scenario.epsilons.clone();
    eps_list.sort_by(|a, b| b.total_cmp(a));
    let rows: Vec<StudyRow> = eps_list
        .par_iter()
        .map(|&eps| study_row(scenario, &targets, &table, eps))
        .collect::<Result<_>>()?;
    let fits = fit_targets(scenario, &targets, &rows, tolerance)?;
    Ok(ConvergenceReport { scenario: scenario.clone(), targets, rows, fits })
}

/// Solves both problems at one ε and measures every target.
pub fn study_row(scenario: &Scenario, targets: &[RateTarget], table: &Arc<EffectiveField>, eps: f64) -> Result<StudyRow> {
    let mesh = fine_mesh(scenario, eps)?;
    let field = &scenario.field;
    let oscillatory = |x: Point| Ok(tau_eps(field, eps, x));
    let effective = |x: Point| table.tensor_at(x);
    let sys_eps = assemble(&mesh, &oscillatory, scenario.mu, &scenario.bc)?;
    let sys_0 = assemble(&mesh, &effective, scenario.mu, &scenario.bc)?;
    let requests: Vec<NormRequest> = targets.iter().map(|t| t.request(&mesh, scenario, eps)).collect::<Result<_>>()?;
    let per_load: Vec<(Vec<f64>, f64, f64, SolveStats)> = scenario
        .loads
        .par_iter()
        .map(|&load| {
            let f = load_on(mesh, load);
            let f_norm = lp(&f, scenario.p)?;
            let (u_eps, s1) = solve_resolvent(&sys_eps, &f, scenario.solver_tol)?;
            let (u0, s2) = solve_resolvent(&sys_0, &f, scenario.solver_tol)?;
            let r0 = build_r0(&u0, eps, scenario.s)?;
            let k = corrector_apply(&CorrectorInputs::new(r0, table.clone(), eps)?)?;
            let plain = u_eps.sub(&u0)?;
            let corrected = u_eps.sub(&first_order(&u0, &k, eps)?)?;
            let errors = targets
                .iter()
                .zip(&requests)
                .map(|(t, req)| Ok(norm(if t.uses_corrector { &corrected } else { &plain }, req)? / f_norm))
                .collect::<Result<Vec<f64>>>()?;
            let uncorrected = w1p_full(&plain, scenario.p)? / f_norm;
            let ratio = corrector_norm_check(&k, &f, eps, scenario.p)?;
            Ok((errors, uncorrected, ratio, s1.merge(s2)))
        })
        .collect::<Result<_>>()?;
    let mut row = StudyRow {
        eps,
        h: mesh.h(0),
        nodes: mesh.node_count(),
        errors: vec![0.0; targets.len()],
        w1_uncorrected: 0.0,
        corrector_ratio: 0.0,
        stats: SolveStats::default(),
    };
    for (errors, unc, ratio, stats) in per_load {
        for (r, e) in row.errors.iter_mut().zip(errors) {
            *r = r.max(e);
        }
        row.w1_uncorrected = row.w1_uncorrected.max(unc);
        row.corrector_ratio = row.corrector_ratio.max(ratio);
        row.stats = row.stats.merge(stats);
    }
    Ok(row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{preset_coefficient, Preset};
    use crate::scenario::BoundarySpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fit_of_exact_power_laws() {
        let lin = fit_rate(&[(0.1, 0.1), (0.05, 0.05), (0.025, 0.025)]).unwrap();
        assert!((lin.slope - 1.0).abs() < 1e-12 && lin.residual < 1e-12);
        let quad: Vec<(f64, f64)> = [0.2, 0.1, 0.05, 0.025].iter().map(|&e| (e, 3.0 * e * e)).collect();
        assert!((fit_rate(&quad).unwrap().slope - 2.0).abs() < 1e-12);
    }

    #[test]
    fn fit_of_noisy_half_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<(f64, f64)> = (3..10)
            .map(|k| {
                let e = 2f64.powi(-k);
                (e, e.sqrt() * (1.0 + 0.05 * rng.gen_range(-1.0..1.0)))
            })
            .collect();
        let fit = fit_rate(&pts).unwrap();
        assert!((fit.slope - 0.5).abs() <= 0.05, "{fit:?}");
        assert!(fit.ci95 > 0.0 && fit.ci95 < 0.1);
    }

    #[test]
    fn fit_errors() {
        assert!(matches!(fit_rate(&[(0.1, 1.0), (0.05, 0.5)]), Err(Error::InsufficientData { usable: 2 })));
        assert!(matches!(fit_rate(&[(0.1, 1.0), (0.05, 0.0), (0.02, 0.1)]), Err(Error::NonPositiveError(_))));
    }

    #[test]
    fn verdict_rule() {
        let fit = |slope| RateFit { slope, intercept: 0.0, residual: 0.01, ci95: 0.0 };
        assert_eq!(judge(&fit(0.97), 1.0, 0.1), Verdict::Pass);
        assert_eq!(judge(&fit(0.55), 0.5, 0.1), Verdict::Pass);
        assert_eq!(judge(&fit(0.3), 0.5, 0.1), Verdict::Fail);
        let rough = RateFit { residual: 0.2, ..fit(1.0) };
        assert_eq!(judge(&rough, 1.0, 0.1), Verdict::Fail);
    }

    #[test]
    fn targets_follow_the_exponents() {
        let field = preset_coefficient(Preset::Sine1D, &[2.0, 1.0], 1).unwrap();
        let mut sc = Scenario::new(field, BoundarySpec::dirichlet(), vec![0.125, 0.0625, 0.03125], 16);
        let t = targets(&sc);
        assert_eq!(t[0].guaranteed_exponent, 1.0);
        assert_eq!(t[1].guaranteed_exponent, 0.5);
        assert!(t.iter().all(|t| t.region != Region::Interior));
        sc.interior_margin = 0.25;
        assert!(targets(&sc).iter().any(|t| t.region == Region::Interior));
    }

    #[test]
    fn constant_coefficients_give_no_homogenization_error() {
        let field = preset_coefficient(Preset::Constant, &[2.0], 1).unwrap();
        let sc = Scenario::new(field, BoundarySpec::dirichlet(), vec![0.125, 0.0625, 0.03125], 16);
        let rep = run_study(&sc).unwrap();
        for row in &rep.rows {
            assert!(row.errors.iter().all(|e| *e <= 1e-8), "{row:?}");
        }
        assert!(rep.fits.iter().all(|f| f.verdict == Verdict::NotApplicable));
    }

    #[test]
    fn small_one_dimensional_sweep_improves_with_the_corrector() {
        let field = preset_coefficient(Preset::Sine1D, &[2.0, 1.0], 1).unwrap();
        let sc = Scenario::new(field, BoundarySpec::dirichlet(), vec![0.125, 0.0625, 0.03125, 0.015625], 16);
        let rep = run_study(&sc).unwrap();
        let w1 = rep.target_index("W1p-corrected").unwrap();
        for row in rep.rows.iter().filter(|r| r.eps <= 0.0625) {
            assert!(row.errors[w1] < row.w1_uncorrected);
        }
        let l2 = rep.fit("Lp").unwrap().fit.unwrap();
        assert!(l2.slope > 0.8, "{l2:?}");
    }
}
