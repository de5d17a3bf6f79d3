//! End-to-end acceptance checks. Each test prints one PASS/FAIL line per
//! criterion and fails when the criterion does.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use oscille_core::cell::{effective_tensor, solve_cell, XGrid};
use oscille_core::corrector::{build_r0, corrector_apply, spread, CorrectorInputs};
use oscille_core::field::{preset_coefficient, Preset};
use oscille_core::mesh::{build_cell_mesh, build_domain_mesh, interior_mask};
use oscille_core::norms::{lp, norm, strip_lemma_check, NormKind, NormRequest};
use oscille_core::quad::adaptive_simpson;
use oscille_core::smoothing::{smoothing_lemma_suite, LemmaKind, Sample};
use oscille_core::study::{run_study, ConvergenceReport};
use oscille_core::{BoundarySpec, GridFunction, Scenario};

fn report(id: u32, pass: bool, detail: &str) -> bool {
    println!("criterion {id}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    pass
}

fn sweep_1d() -> &'static ConvergenceReport {
    static R: OnceLock<ConvergenceReport> = OnceLock::new();
    R.get_or_init(|| {
        let field = preset_coefficient(Preset::Sine1D, &[2.0, 1.0], 1).unwrap();
        let eps = vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0];
        let sc = Scenario::new(field, BoundarySpec::dirichlet(), eps, 32);
        let t = Instant::now();
        let r = run_study(&sc).unwrap();
        println!("1D sweep: {:.1} s", t.elapsed().as_secs_f64());
        r
    })
}

fn sweep_2d() -> &'static ConvergenceReport {
    static R: OnceLock<ConvergenceReport> = OnceLock::new();
    R.get_or_init(|| {
        let field = preset_coefficient(Preset::LocallyPeriodic2D, &[2.0, 1.0, 0.5], 2).unwrap();
        let eps = vec![1.0 / 8.0, 1.0 / 12.0, 1.0 / 16.0, 1.0 / 24.0, 1.0 / 32.0];
        let mut sc = Scenario::new(field, BoundarySpec::dirichlet(), eps, 12);
        sc.mu = -1.0;
        sc.interior_margin = 0.25;
        let t = Instant::now();
        let r = run_study(&sc).unwrap();
        println!("2D sweep: {:.1} s", t.elapsed().as_secs_f64());
        r
    })
}

fn slope(r: &ConvergenceReport, target: &str) -> (f64, f64) {
    let fit = r.fit(target).unwrap().fit.expect("enough rows to fit");
    (fit.slope, fit.residual)
}

#[test]
fn criterion_1_effective_tensor() {
    let t = Instant::now();
    let sine = preset_coefficient(Preset::Sine1D, &[2.0, 1.0], 1).unwrap();
    let a1 = effective_tensor(&sine, [0.5, 0.0], &build_cell_mesh(256, 1).unwrap()).unwrap()[0][0];
    let lam = preset_coefficient(Preset::Laminate2D, &[2.0, 1.0], 2).unwrap();
    let a2 = effective_tensor(&lam, [0.5, 0.5], &build_cell_mesh(128, 2).unwrap()).unwrap();
    let r3 = 3f64.sqrt();
    let err = (a1 - r3)
        .abs()
        .max((a2[0][0] - r3).abs())
        .max((a2[1][1] - 2.0).abs())
        .max(a2[0][1].abs())
        .max(a2[1][0].abs());
    let secs = t.elapsed().as_secs_f64();
    let pass = err <= 1e-4 && secs < 5.0;
    assert!(report(1, pass, &format!("1D {a1:.8}, laminate diag({:.8}, {:.8}), max error {err:.2e}, {secs:.2} s", a2[0][0], a2[1][1])));
}

#[test]
fn criterion_2_cell_solution() {
    let t = Instant::now();
    let sine = preset_coefficient(Preset::Sine1D, &[2.0, 1.0], 1).unwrap();
    let mesh = build_cell_mesh(256, 1).unwrap();
    let sol = solve_cell(&sine, [0.5, 0.0], &mesh).unwrap();
    let a = |y: f64| 2.0 + (2.0 * PI * y).sin();
    let prim = |y: f64| adaptive_simpson(|s| 3f64.sqrt() / a(s) - 1.0, 0.0, y, 1e-13).unwrap();
    let mean = adaptive_simpson(prim, 0.0, 1.0, 1e-12).unwrap();
    let exact = GridFunction::from_fn(mesh, |y| prim(y[0]) - mean);
    let err = lp(&sol.column(0).sub(&exact).unwrap(), 2.0).unwrap();
    let constant = preset_coefficient(Preset::Constant, &[3.0], 2).unwrap();
    let c = solve_cell(&constant, [0.5, 0.5], &build_cell_mesh(32, 2).unwrap()).unwrap();
    let cn = c.columns().iter().map(|n| lp(n, 2.0).unwrap()).fold(0.0, f64::max);
    let secs = t.elapsed().as_secs_f64();
    let pass = err <= 1e-4 && cn <= 1e-10 && secs < 5.0;
    assert!(report(2, pass, &format!("L2 error {err:.2e}, constant-field norm {cn:.2e}, {secs:.2} s")));
}

#[test]
fn criterion_3_one_dimensional_rates() {
    let t = Instant::now();
    let r = sweep_1d();
    let secs = t.elapsed().as_secs_f64();
    let (l2, res_l2) = slope(r, "Lp");
    let (w1, res_w1) = slope(r, "W1p-corrected");
    let pass = l2 >= 0.9 && w1 >= 0.5 && res_l2 <= 0.15 && res_w1 <= 0.15 && secs < 120.0;
    assert!(report(
        3,
        pass,
        &format!("L2 slope {l2:.3} (residual {res_l2:.3}), corrected W1 slope {w1:.3} (residual {res_w1:.3}), {secs:.1} s")
    ));
}

#[test]
fn criterion_4_two_dimensional_rates() {
    let t = Instant::now();
    let r = sweep_2d();
    let secs = t.elapsed().as_secs_f64();
    let (l2, _) = slope(r, "Lp");
    let (w1, _) = slope(r, "W1p-corrected");
    let (inner, _) = slope(r, "W1p-interior");
    for row in &r.rows {
        println!("  eps {:.5}: errors {:?}, uncorrected W1 {:.4e}", row.eps, row.errors, row.w1_uncorrected);
    }
    let pass = l2 >= 0.85 && w1 >= 0.45 && inner >= 0.8 && secs < 1800.0;
    assert!(report(4, pass, &format!("L2 slope {l2:.3}, corrected W1 slope {w1:.3}, interior W1 slope {inner:.3}, {secs:.1} s")));
}

#[test]
fn criterion_5_smoothing_lemmas() {
    let t = Instant::now();
    let eps = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0];
    let samples = [Sample::smooth(1), Sample::holder_half(1), Sample::separable(1), Sample::separable(2)];
    let rep = smoothing_lemma_suite(&samples[..3], &eps, &eps, 2.0, 1.0 / 1024.0).unwrap();
    let rep2 = smoothing_lemma_suite(&samples[3..], &eps[..3], &eps[..3], 2.0, 1.0 / 256.0).unwrap();
    let norm_one = rep
        .find(LemmaKind::SteklovNormOne, "separable")
        .unwrap()
        .sup_ratio
        .max(rep2.find(LemmaKind::SteklovNormOne, "separable").unwrap().sup_ratio);
    let steklov = rep.find(LemmaKind::SteklovConvergence, "smooth").unwrap();
    let st_factors = steklov.ratio_factors();
    let st_raw = steklov.value_factors();
    let moll = rep.find(LemmaKind::MollifierConvergence, "holder-1/2").unwrap().value_factors();
    let blow = rep.find(LemmaKind::MollifierBlowUp, "holder-1/2").unwrap();
    let growth: Vec<f64> = blow.values.windows(2).map(|w| w[1] / w[0]).collect();
    let secs = t.elapsed().as_secs_f64();
    let pass = norm_one <= 1.0 + 1e-8
        && st_factors.iter().all(|f| (1.5..=2.5).contains(f))
        && moll.iter().all(|f| *f >= 1.3)
        && growth.iter().all(|g| *g <= 1.6)
        && secs < 60.0;
    assert!(report(
        5,
        pass,
        &format!(
            "Steklov norm ratio {norm_one:.10}, Steklov ratio halving factors {st_factors:.3?} (raw {st_raw:.3?}), \
             mollifier error factors {moll:.3?}, gradient growth {growth:.3?}, {secs:.1} s"
        )
    ));
}

#[test]
fn criterion_6_translation_isometry() {
    let eps = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0];
    let rep1 = smoothing_lemma_suite(&[Sample::separable(1)], &eps, &[], 2.0, 1.0 / 1024.0).unwrap();
    let rep2 = smoothing_lemma_suite(&[Sample::separable(2)], &eps, &[], 2.0, 1.0 / 256.0).unwrap();
    let dev = rep1
        .series
        .iter()
        .chain(&rep2.series)
        .filter(|s| s.lemma == LemmaKind::TranslationIsometry)
        .flat_map(|s| s.ratios.iter().map(|r| (r - 1.0).abs()))
        .fold(0.0, f64::max);
    assert!(report(6, dev <= 1e-3, &format!("largest relative deviation {dev:.2e}")));
}

#[test]
fn criterion_7_boundary_strip() {
    let eps: Vec<f64> = (3..=7).map(|k| 2f64.powi(-k)).collect();
    let m1 = build_domain_mesh(&[(0.0, 1.0)], 1.0 / 1024.0).unwrap();
    let u1 = GridFunction::from_fn(m1, |x| (PI * x[0]).sin());
    let m2 = build_domain_mesh(&[(0.0, 1.0), (0.0, 1.0)], 1.0 / 256.0).unwrap();
    let u2 = GridFunction::from_fn(m2, |x| (PI * x[0]).sin() * (PI * x[1]).sin());
    let t1 = strip_lemma_check(&u1, 2.0, &eps).unwrap();
    let t2 = strip_lemma_check(&u2, 2.0, &eps).unwrap();
    let r1: Vec<f64> = t1.rows.iter().map(|r| r.ratio).collect();
    let r2: Vec<f64> = t2.rows.iter().map(|r| r.ratio).collect();
    let pass = t1.spread <= 2.0 && t2.spread <= 2.0;
    assert!(report(
        7,
        pass,
        &format!("1D spread {:.3} ratios {r1:.4?}; 2D spread {:.3} ratios {r2:.4?}", t1.spread, t2.spread)
    ));
}

#[test]
fn criterion_8_corrector_boundedness() {
    let r = sweep_1d();
    let ratios: Vec<f64> = r.rows.iter().map(|row| row.corrector_ratio).collect();
    let s = spread(&ratios);
    assert!(report(8, s <= 1.5, &format!("ratios {ratios:.4?}, spread {s:.3}")));
}

#[test]
fn criterion_9_properties() {
    let t = Instant::now();
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };

    let mesh = build_domain_mesh(&[(0.0, 1.0), (0.0, 1.0)], 1.0 / 32.0).unwrap();
    let u = GridFunction::from_fn(mesh, |x| (3.0 * x[0]).sin() + x[1] * x[1]);
    for kind in [NormKind::Lp, NormKind::W1pSemi, NormKind::W1pFull, NormKind::BesovSemi(0.5)] {
        let req = NormRequest::new(kind, 2.0);
        let a = norm(&u, &req).unwrap();
        let b = norm(&u.scaled(-2.5), &req).unwrap();
        check("homogeneity", (b - 2.5 * a).abs() <= 1e-12 * b.max(1.0));
    }
    let inner = interior_mask(&mesh, 0.25).unwrap();
    let split = |m| norm(&u, &NormRequest::masked(NormKind::Lp, 3.0, m)).unwrap().powi(3);
    let whole = lp(&u, 3.0).unwrap().powi(3);
    check("mask additivity", (split(inner.clone()) + split(inner.complement()) - whole).abs() <= 1e-10);

    let lp2 = preset_coefficient(Preset::LocallyPeriodic2D, &[2.0, 1.0, 0.5], 2).unwrap();
    let grid = XGrid::covering(&[(0.0, 1.0), (0.0, 1.0)], 1.0 / 4.0, 0.25).unwrap();
    let table = Arc::new(oscille_core::cell::tabulate_effective(&lp2, &grid, &build_cell_mesh(16, 2).unwrap()).unwrap());
    let fine = build_domain_mesh(&[(0.0, 1.0), (0.0, 1.0)], 1.0 / 64.0).unwrap();
    let a = GridFunction::from_fn(fine, |x| (PI * x[0]).sin() * x[1]);
    let b = GridFunction::from_fn(fine, |x| x[0] * x[0] - x[1]);
    let k = |v: &GridFunction| {
        corrector_apply(&CorrectorInputs::new(build_r0(v, 0.125, 1.0).unwrap(), table.clone(), 0.125).unwrap()).unwrap()
    };
    let lhs = k(&a.combine(1.5, &b, 2.0).unwrap());
    let rhs = k(&a).combine(1.5, &k(&b), 2.0).unwrap();
    check("corrector linearity", lhs.sub(&rhs).unwrap().max_abs() <= 1e-10);

    let sp = preset_coefficient(Preset::SineProduct2D, &[2.0, 1.0], 2).unwrap();
    let a0 = effective_tensor(&sp, [0.0, 0.0], &build_cell_mesh(32, 2).unwrap()).unwrap();
    let arith = 2.0;
    let harm = 1.0 / adaptive_simpson(|y0| adaptive_simpson(|y1| 1.0 / sp.scalar([0.0; 2], [y0, y1]), 0.0, 1.0, 1e-12).unwrap(), 0.0, 1.0, 1e-10).unwrap();
    for d in 0..2 {
        check("Voigt-Reuss bracket", harm - 1e-9 <= a0[d][d] && a0[d][d] <= arith + 1e-9);
    }

    for r in [sweep_1d(), sweep_2d()] {
        let w1 = r.target_index("W1p-corrected").unwrap();
        for row in r.rows.iter().filter(|row| row.eps <= 1.0 / 16.0 + 1e-12) {
            check("corrector improvement", row.errors[w1] < row.w1_uncorrected);
        }
    }
    let r2 = sweep_2d();
    let (g, i) = (r2.target_index("W1p-corrected").unwrap(), r2.target_index("W1p-interior").unwrap());
    check("interior below global", r2.rows.iter().all(|row| row.errors[i] <= row.errors[g]));
    let (besov, _) = slope(sweep_1d(), "Besov-1/2");
    check("Besov surrogate rate", besov >= 0.5 - 0.1);

    let secs = t.elapsed().as_secs_f64();
    let pass = failures.is_empty() && secs < 300.0;
    assert!(report(9, pass, &format!("Besov slope {besov:.3}, failed: {failures:?}, {secs:.1} s")));
}
