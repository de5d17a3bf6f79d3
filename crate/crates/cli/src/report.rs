//! Flat-file output of a convergence report.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use plotters::prelude::*;

use oscille_core::study::{ConvergenceReport, TargetFit};

/// Twelve significant digits, independent of locale.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.11e}")
}

fn file_stem(target: &str) -> String {
    target.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

/// Writes `rates.csv`, `summary.txt`, `report.json` and, when `plot` is set,
/// one `rates_<target>.svg` per fitted target. Returns the written paths.
pub fn write_report(report: &ConvergenceReport, dir: &Path, plot: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();

    let csv_path = dir.join("rates.csv");
    fs::write(&csv_path, rates_csv(report)?).with_context(|| format!("writing {}", csv_path.display()))?;
    written.push(csv_path);

    let summary_path = dir.join("summary.txt");
    fs::write(&summary_path, summary(report)).with_context(|| format!("writing {}", summary_path.display()))?;
    written.push(summary_path);

    let json_path = dir.join("report.json");
    fs::write(&json_path, serde_json::to_string_pretty(report)?).with_context(|| format!("writing {}", json_path.display()))?;
    written.push(json_path);

    if plot {
        for (k, (target, fit)) in report.targets.iter().zip(&report.fits).enumerate() {
            let points: Vec<(f64, f64)> =
                report.rows.iter().map(|r| (r.eps, r.errors[k])).filter(|p| p.1 > 0.0).collect();
            if points.len() < 3 {
                continue;
            }
            let path = dir.join(format!("rates_{}.svg", file_stem(&target.name)));
            plot_target(&path, &target.name, &points, fit)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// One row per target and ε: `target,eps,h,error,slope,verdict`.
pub fn rates_csv(report: &ConvergenceReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["target", "eps", "h", "error", "slope", "verdict"])?;
    for (k, (target, fit)) in report.targets.iter().zip(&report.fits).enumerate() {
        let slope = fit.fit.map(|f| fmt_num(f.slope)).unwrap_or_default();
        let verdict = fit.verdict.to_string();
        for row in &report.rows {
            w.write_record([
                target.name.as_str(),
                &fmt_num(row.eps),
                &fmt_num(row.h),
                &fmt_num(row.errors[k]),
                &slope,
                &verdict,
            ])?;
        }
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn summary(report: &ConvergenceReport) -> String {
    let sc = &report.scenario;
    let mut out = String::new();
    let _ = writeln!(out, "field: {} {:?} (d = {})", sc.field.preset(), sc.field.params(), sc.dim());
    let _ = writeln!(out, "boundary: {:?}, mu = {}, p = {}, s = {}, s+ = {}", sc.bc.kind, sc.mu, sc.p, sc.s, sc.s_plus);
    let _ = writeln!(out, "points per period: {}, loads: {:?}", sc.points_per_period, sc.loads);
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<16} {:>10} {:>8} {:>10} {:>10} {:>8}", "target", "guaranteed", "slope", "ci95", "residual", "verdict");
    for (t, f) in report.targets.iter().zip(&report.fits) {
        let _ = writeln!(out, "{}", fit_line(&t.name, t.guaranteed_exponent, f));
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "{:>12} {:>12} {:>10} {:>14} {:>14} {:>8}", "eps", "h", "nodes", "W1 uncorr.", "corr. ratio", "iters");
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{:>12.6e} {:>12.6e} {:>10} {:>14.6e} {:>14.6e} {:>8}",
            r.eps, r.h, r.nodes, r.w1_uncorrected, r.corrector_ratio, r.stats.iterations
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "overall: {}", if report.all_pass() { "PASS" } else { "FAIL" });
    out
}

fn fit_line(name: &str, guaranteed: f64, f: &TargetFit) -> String {
    let mut line = match f.fit {
        Some(fit) => format!(
            "{:<16} {:>10.4} {:>8.4} {:>10.4} {:>10.4} {:>8}",
            name, guaranteed, fit.slope, fit.ci95, fit.residual, f.verdict
        ),
        None => format!("{:<16} {:>10.4} {:>8} {:>10} {:>10} {:>8}", name, guaranteed, "-", "-", "-", f.verdict),
    };
    if !f.excluded.is_empty() {
        let _ = write!(line, "  (excluded eps {:?})", f.excluded);
    }
    line
}

fn plot_target(path: &Path, name: &str, points: &[(f64, f64)], fit: &TargetFit) -> Result<()> {
    let logs: Vec<(f64, f64)> = points.iter().map(|(e, v)| (e.log10(), v.log10())).collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &logs {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let pad = |a: f64, b: f64| 0.1 * (b - a).max(0.1);
    let (px, py) = (pad(x0, x1), pad(y0, y1));
    let root = SVGBackend::new(path, (640, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| anyhow::anyhow!("{e}"))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(name, ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d((x0 - px)..(x1 + px), (y0 - py)..(y1 + py))
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    chart
        .configure_mesh()
        .x_desc("log10 eps")
        .y_desc("log10 error")
        .draw()
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    chart
        .draw_series(logs.iter().map(|&p| Circle::new(p, 4, BLUE.filled())))
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    if let Some(f) = fit.fit {
        // the fit lives in natural logs; slopes agree, intercepts rescale
        let line = |x: f64| f.slope * x + f.intercept / std::f64::consts::LN_10;
        chart
            .draw_series(LineSeries::new([(x0, line(x0)), (x1, line(x1))], &RED))
            .map_err(|e| anyhow::anyhow!("{e}"))?
            .label(format!("slope {:.3}", f.slope));
    }
    root.present().map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_keep_twelve_digits() {
        assert_eq!(fmt_num(0.125), "1.25000000000e-1");
        assert_eq!(fmt_num(1.0 / 3.0), "3.33333333333e-1");
    }

    #[test]
    fn stems_are_file_safe() {
        assert_eq!(file_stem("Besov-1/2"), "Besov-1_2");
    }
}
