//! Evaluation against the propagate-the-baseline reference: MAE, relative
//! error reduction, and a least-squares fit of predictions on truths
//! compared to the 1-to-1 line.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub patient_id: String,
    pub truth: f64,
    pub prediction: f64,
    pub baseline: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub mae: f64,
    pub baseline_mae: f64,
    /// (baseline_mae - mae) / baseline_mae.
    pub relative_reduction: f64,
    /// OLS fit of prediction on truth.
    pub fit_slope: f64,
    pub fit_intercept: f64,
    /// RMS of (prediction - truth), the residual against the 1-to-1 line.
    pub identity_residual_rms: f64,
}

pub fn evaluate(rows: &[EvalRow]) -> Result<EvalReport> {
    if rows.len() < 2 {
        return Err(Error::Data(format!(
            "evaluation needs >= 2 rows, got {}",
            rows.len()
        )));
    }
    let n = rows.len() as f64;
    let mean_t = rows.iter().map(|r| r.truth).sum::<f64>() / n;
    let var_t = rows.iter().map(|r| (r.truth - mean_t).powi(2)).sum::<f64>();
    if var_t == 0.0 {
        return Err(Error::Data("constant truths: least-squares fit undefined".into()));
    }
    let mae = rows.iter().map(|r| (r.truth - r.prediction).abs()).sum::<f64>() / n;
    let baseline_mae = rows.iter().map(|r| (r.truth - r.baseline).abs()).sum::<f64>() / n;
    if baseline_mae == 0.0 {
        return Err(Error::Data("baseline MAE is zero: reduction undefined".into()));
    }
    let mean_p = rows.iter().map(|r| r.prediction).sum::<f64>() / n;
    let cov_tp = rows
        .iter()
        .map(|r| (r.truth - mean_t) * (r.prediction - mean_p))
        .sum::<f64>();
    let fit_slope = cov_tp / var_t;
    let fit_intercept = mean_p - fit_slope * mean_t;
    let identity_residual_rms = (rows
        .iter()
        .map(|r| (r.prediction - r.truth).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(EvalReport {
        rows: rows.to_vec(),
        mae,
        baseline_mae,
        relative_reduction: (baseline_mae - mae) / baseline_mae,
        fit_slope,
        fit_intercept,
        identity_residual_rms,
    })
}

/// Read rows from a predictions CSV (`patient_id,truth,prediction,baseline`).
pub fn read_eval_rows(path: &Path) -> Result<Vec<EvalRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in reader.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

pub fn write_eval_rows(rows: &[EvalRow], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(id: &str, truth: f64, pred: f64, base: f64) -> EvalRow {
        EvalRow {
            patient_id: id.into(),
            truth,
            prediction: pred,
            baseline: base,
        }
    }

    #[test]
    fn perfect_predictions() {
        let rows = vec![row("a", 40.0, 40.0, 50.0), row("b", 70.0, 70.0, 60.0)];
        let r = evaluate(&rows).unwrap();
        assert_eq!(r.mae, 0.0);
        assert!((r.fit_slope - 1.0).abs() < 1e-12);
        assert!(r.fit_intercept.abs() < 1e-12);
        assert_eq!(r.identity_residual_rms, 0.0);
    }

    #[test]
    fn headline_relative_reduction() {
        // MAE 17.55 vs baseline 30.5 -> about a 42% reduction
        let rows = vec![
            row("a", 100.0, 100.0 - 17.55, 100.0 - 30.5),
            row("b", 50.0, 50.0 + 17.55, 50.0 + 30.5),
        ];
        let r = evaluate(&rows).unwrap();
        assert!((r.mae - 17.55).abs() < 1e-12);
        assert!((r.baseline_mae - 30.5).abs() < 1e-12);
        assert!((r.relative_reduction - (30.5 - 17.55) / 30.5).abs() < 1e-12);
        assert!((r.relative_reduction - 0.42).abs() < 0.005);
    }

    #[test]
    fn hand_computed_ols() {
        let rows = vec![row("a", 40.0, 50.0, 0.1), row("b", 70.0, 60.0, 0.1)];
        let r = evaluate(&rows).unwrap();
        assert_eq!(r.mae, 10.0);
        assert!((r.fit_slope - 1.0 / 3.0).abs() < 1e-9);
        assert!((r.fit_intercept - 110.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn too_few_rows_and_constant_truths_error() {
        assert!(evaluate(&[row("a", 1.0, 1.0, 1.0)]).is_err());
        let rows = vec![row("a", 50.0, 40.0, 60.0), row("b", 50.0, 45.0, 55.0)];
        assert!(evaluate(&rows).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.csv");
        let rows = vec![row("a", 40.0, 50.0, 45.5), row("b", 70.0, 60.0, 72.0)];
        write_eval_rows(&rows, &path).unwrap();
        assert_eq!(read_eval_rows(&path).unwrap(), rows);
    }

    proptest! {
        #[test]
        fn scale_consistency(c in 0.1f64..10.0, seed in any::<u64>()) {
            let mut rng = crate::rng::Stream::new(seed);
            let rows: Vec<EvalRow> = (0..8)
                .map(|i| row(
                    &format!("p{i}"),
                    rng.uniform(20.0, 120.0),
                    rng.uniform(20.0, 120.0),
                    rng.uniform(20.0, 120.0),
                ))
                .collect();
            let base = evaluate(&rows).unwrap();
            let scaled_rows: Vec<EvalRow> = rows
                .iter()
                .map(|r| row(&r.patient_id, r.truth * c, r.prediction * c, r.baseline * c))
                .collect();
            let scaled = evaluate(&scaled_rows).unwrap();
            prop_assert!((scaled.mae - base.mae * c).abs() < 1e-9 * c.max(1.0));
            prop_assert!((scaled.baseline_mae - base.baseline_mae * c).abs() < 1e-9 * c.max(1.0));
            prop_assert!((scaled.fit_intercept - base.fit_intercept * c).abs() < 1e-7 * c.max(1.0));
            prop_assert!((scaled.identity_residual_rms - base.identity_residual_rms * c).abs() < 1e-9 * c.max(1.0));
            prop_assert!((scaled.fit_slope - base.fit_slope).abs() < 1e-9);
            prop_assert!((scaled.relative_reduction - base.relative_reduction).abs() < 1e-9);
        }
    }
}
