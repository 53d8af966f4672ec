//! Report export: the per-patient CSV and an SVG scatter of truth vs
//! prediction with the 1-to-1 reference line and the fitted line.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::eval::{write_eval_rows, EvalReport};

const PLOT_W: f64 = 640.0;
const PLOT_H: f64 = 480.0;
const MARGIN: f64 = 60.0;

/// Writes `report.csv` and `scatter.svg` under `out_dir`; returns both paths.
pub fn export_report(report: &EvalReport, out_dir: &Path) -> Result<(PathBuf, PathBuf)> {
    if report.rows.is_empty() {
        return Err(Error::Data("refusing to export an empty report".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let csv_path = out_dir.join("report.csv");
    write_eval_rows(&report.rows, &csv_path)?;
    let svg_path = out_dir.join("scatter.svg");
    std::fs::write(&svg_path, render_svg(report)).map_err(|e| Error::io(&svg_path, e))?;
    Ok((csv_path, svg_path))
}

fn render_svg(report: &EvalReport) -> String {
    let vals: Vec<f64> = report
        .rows
        .iter()
        .flat_map(|r| [r.truth, r.prediction])
        .collect();
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let pad = ((hi - lo) * 0.05).max(1.0);
    let (lo, hi) = (lo - pad, hi + pad);
    let span = hi - lo;
    let sx = |v: f64| MARGIN + (v - lo) / span * (PLOT_W - 2.0 * MARGIN);
    let sy = |v: f64| PLOT_H - MARGIN - (v - lo) / span * (PLOT_H - 2.0 * MARGIN);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{PLOT_W}\" height=\"{PLOT_H}\" \
         viewBox=\"0 0 {PLOT_W} {PLOT_H}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    // axes
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        t = MARGIN,
        r = PLOT_W - MARGIN,
        b = PLOT_H - MARGIN,
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"14\">\
         True eGFR (mL/min/1.73m2)</text>\n",
        PLOT_W / 2.0,
        PLOT_H - 15.0
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" font-size=\"14\" \
         transform=\"rotate(-90 18 {})\">Predicted eGFR (mL/min/1.73m2)</text>\n",
        PLOT_H / 2.0,
        PLOT_H / 2.0
    ));
    // 1-to-1 reference line
    svg.push_str(&format!(
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" \
         stroke=\"gray\" stroke-dasharray=\"6 4\"/>\n",
        sx(lo),
        sy(lo),
        sx(hi),
        sy(hi)
    ));
    // fitted line, clipped to the value range
    let fit = |t: f64| report.fit_slope * t + report.fit_intercept;
    svg.push_str(&format!(
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"crimson\"/>\n",
        sx(lo),
        sy(fit(lo).clamp(lo, hi)),
        sx(hi),
        sy(fit(hi).clamp(lo, hi))
    ));
    for row in &report.rows {
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"steelblue\" \
             fill-opacity=\"0.8\"><title>{}</title></circle>\n",
            sx(row.truth),
            sy(row.prediction),
            row.patient_id
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\">MAE {:.2} | baseline {:.2} | reduction {:.1}%</text>\n",
        MARGIN,
        MARGIN - 10.0,
        report.mae,
        report.baseline_mae,
        report.relative_reduction * 100.0
    ));
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::eval::{evaluate, read_eval_rows, EvalRow};

    fn report(n: usize) -> EvalReport {
        let rows: Vec<EvalRow> = (0..n)
            .map(|i| EvalRow {
                patient_id: format!("p{i}"),
                truth: 40.0 + 7.0 * i as f64,
                prediction: 45.0 + 6.0 * i as f64,
                baseline: 50.0 + 7.5 * i as f64,
            })
            .collect();
        evaluate(&rows).unwrap()
    }

    #[test]
    fn svg_has_one_point_per_patient() {
        let dir = tempfile::tempdir().unwrap();
        let (_, svg_path) = export_report(&report(10), dir.path()).unwrap();
        let svg = std::fs::read_to_string(svg_path).unwrap();
        assert_eq!(svg.matches("<circle").count(), 10);
        assert!(svg.contains("True eGFR"));
        assert!(svg.contains("Predicted eGFR"));
    }

    #[test]
    fn csv_reparse_matches_rows() {
        let dir = tempfile::tempdir().unwrap();
        let rep = report(5);
        let (csv_path, _) = export_report(&rep, dir.path()).unwrap();
        assert_eq!(read_eval_rows(&csv_path).unwrap(), rep.rows);
    }

    #[test]
    fn empty_report_guard() {
        let mut rep = report(3);
        rep.rows.clear();
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("sub");
        assert!(export_report(&rep, &out).is_err());
        assert!(!out.exists());
    }
}
