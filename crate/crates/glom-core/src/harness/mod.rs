//! Experiment harness: patient-level cross-validation, training, the
//! propagate-the-baseline reference model, evaluation reports, and the
//! synthetic dataset generator.

pub mod eval;
pub mod report;
pub mod split;
pub mod synth;
pub mod train;

pub use eval::{evaluate, read_eval_rows, EvalReport, EvalRow};
pub use report::export_report;
pub use split::{assign_folds, FoldSplit};
pub use synth::{synth_generate, SynthConfig};
pub use train::{predict_patient, run_cv, train_fold, CvOutput, EpochLog, TrainOptions, TrainedFold};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ground-truth targets for one patient, eGFR in mL/min/1.73 m^2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    pub baseline_egfr: f64,
    pub egfr_12mo: f64,
}

impl PatientRecord {
    pub fn validate(&self) -> Result<()> {
        if self.patient_id.is_empty() {
            return Err(Error::Data("empty patient_id".into()));
        }
        for (name, v) in [("baseline_egfr", self.baseline_egfr), ("egfr_12mo", self.egfr_12mo)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Data(format!(
                    "patient {}: {name} = {v} must be finite and > 0",
                    self.patient_id
                )));
            }
        }
        Ok(())
    }
}

/// The reference model: propagate the baseline eGFR forward unchanged.
pub fn baseline_propagation(patient: &PatientRecord) -> f64 {
    patient.baseline_egfr
}

pub fn read_patient_csv(path: &Path) -> Result<Vec<PatientRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in reader.deserialize() {
        let p: PatientRecord = rec?;
        p.validate()?;
        out.push(p);
    }
    Ok(out)
}

pub fn write_patient_csv(patients: &[PatientRecord], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for p in patients {
        writer.serialize(p)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
