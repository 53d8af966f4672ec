//! Fold training and cross-validation. Training consumes chips whose
//! patients fall outside the held-out fold; validation predictions average
//! every chip of a patient through the deterministic center path. The
//! network regresses eGFR / 100 so losses sit near unity at the default
//! learning rate.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use crate::augment::{augment_chip, center_view, AugmentConfig};
use crate::chipper::Manifest;
use crate::error::{Error, Result};
use crate::harness::eval::{evaluate, EvalReport, EvalRow};
use crate::harness::split::{assign_folds, FoldSplit};
use crate::nn::{
    backward_batch, forward_batch, forward_sample, image_to_tensor, mse_loss, AuxScaling,
    NetworkConfig, NetworkParams, Tensor,
};
use crate::optim::{lr_at, rmsprop_step, OptimizerConfig, OptimizerState};
use crate::raster::{load_image, Image};
use crate::rng::Stream;

/// eGFR units per network output unit.
pub const TARGET_SCALE: f64 = 100.0;

const INIT_STREAM_TAG: u64 = 0x10;
const SHUFFLE_STREAM_TAG: u64 = 0x11;
const AUG_STREAM_TAG: u64 = 0x12;

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub net: NetworkConfig,
    pub opt: OptimizerConfig,
    pub aug: AugmentConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_mae: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedFold {
    pub params: NetworkParams,
    pub aux_scaling: Option<AuxScaling>,
    pub log: Vec<EpochLog>,
}

#[derive(Debug)]
pub struct CvOutput {
    pub split: FoldSplit,
    pub fold_reports: Vec<EvalReport>,
    pub pooled: EvalReport,
    pub logs: Vec<Vec<EpochLog>>,
}

struct LoadedChip {
    image: Image,
    patient_id: String,
    baseline_egfr: f64,
    egfr_12mo: f64,
}

fn load_chips(manifest: &Manifest) -> Result<Vec<LoadedChip>> {
    manifest
        .rows
        .par_iter()
        .map(|row| {
            Ok(LoadedChip {
                image: load_image(&row.chip_path)?,
                patient_id: row.patient_id.clone(),
                baseline_egfr: row.baseline_egfr,
                egfr_12mo: row.egfr_12mo,
            })
        })
        .collect()
}

fn aux_for(scaling: Option<&AuxScaling>, baseline_egfr: f64) -> Vec<f64> {
    match scaling {
        Some(s) => s.apply(&[baseline_egfr]),
        None => Vec::new(),
    }
}

/// Average of per-chip predictions through the deterministic center path,
/// rescaled to eGFR units.
pub fn predict_patient(
    net: &NetworkConfig,
    params: &NetworkParams,
    aux_scaling: Option<&AuxScaling>,
    chips: &[&Image],
    baseline_egfr: f64,
    aug: &AugmentConfig,
) -> Result<f64> {
    if chips.is_empty() {
        return Err(Error::Data("predict_patient needs at least one chip".into()));
    }
    let aux = aux_for(aux_scaling, baseline_egfr);
    let preds: Result<Vec<f64>> = chips
        .par_iter()
        .map(|chip| {
            let view = center_view(chip, aug)?;
            let (pred, _) = forward_sample(net, params, &image_to_tensor(&view), &aux)?;
            Ok(pred)
        })
        .collect();
    let preds = preds?;
    Ok(preds.iter().sum::<f64>() / preds.len() as f64 * TARGET_SCALE)
}

fn validation_mae(
    net: &NetworkConfig,
    params: &NetworkParams,
    aux_scaling: Option<&AuxScaling>,
    val_by_patient: &BTreeMap<&str, Vec<&LoadedChip>>,
    aug: &AugmentConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for chips in val_by_patient.values() {
        let images: Vec<&Image> = chips.iter().map(|c| &c.image).collect();
        let pred = predict_patient(
            net,
            params,
            aux_scaling,
            &images,
            chips[0].baseline_egfr,
            aug,
        )?;
        total += (pred - chips[0].egfr_12mo).abs();
    }
    Ok(total / val_by_patient.len() as f64)
}

/// Train one fold: chips of patients assigned to `fold` are held out, aux
/// standardization is fitted on the training chips only, and every epoch's
/// sample order and augmentation draws derive from (seed, fold, epoch,
/// sample index).
pub fn train_fold(
    manifest: &Manifest,
    split: &FoldSplit,
    fold: usize,
    opts: &TrainOptions,
) -> Result<TrainedFold> {
    opts.net.validate()?;
    opts.opt.validate()?;
    opts.aug.validate()?;
    if fold >= split.k {
        return Err(Error::Data(format!("fold {fold} out of range 0..{}", split.k)));
    }
    for row in &manifest.rows {
        if split.fold_of(&row.patient_id).is_none() {
            return Err(Error::Data(format!(
                "manifest patient {} missing from the fold split",
                row.patient_id
            )));
        }
    }
    let chips = load_chips(manifest)?;
    let train_set: Vec<&LoadedChip> = chips
        .iter()
        .filter(|c| split.fold_of(&c.patient_id) != Some(fold))
        .collect();
    let mut val_by_patient: BTreeMap<&str, Vec<&LoadedChip>> = BTreeMap::new();
    for c in chips.iter().filter(|c| split.fold_of(&c.patient_id) == Some(fold)) {
        val_by_patient.entry(c.patient_id.as_str()).or_default().push(c);
    }
    if train_set.is_empty() {
        return Err(Error::Data("empty training partition".into()));
    }
    if val_by_patient.is_empty() {
        return Err(Error::Data("empty validation partition".into()));
    }
    // patient-level leakage is impossible by construction; keep the runtime
    // assertion anyway
    for c in &train_set {
        assert!(!val_by_patient.contains_key(c.patient_id.as_str()));
    }

    let aux_scaling = if opts.net.aux_dim > 0 {
        let rows: Vec<Vec<f64>> = train_set.iter().map(|c| vec![c.baseline_egfr]).collect();
        Some(AuxScaling::fit(&rows)?)
    } else {
        None
    };
    let train_aux: Vec<Vec<f64>> = train_set
        .iter()
        .map(|c| aux_for(aux_scaling.as_ref(), c.baseline_egfr))
        .collect();
    let train_targets: Vec<f64> = train_set
        .iter()
        .map(|c| c.egfr_12mo / TARGET_SCALE)
        .collect();

    let mut params = NetworkParams::init(
        &opts.net,
        &mut Stream::derive(opts.seed, &[INIT_STREAM_TAG, fold as u64]),
    )?;
    let mut state = OptimizerState::new(&params);
    let mut log = Vec::with_capacity(opts.opt.epochs);

    for epoch in 0..opts.opt.epochs {
        let lr = lr_at(epoch, &opts.opt)?;
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        Stream::derive(opts.seed, &[SHUFFLE_STREAM_TAG, fold as u64, epoch as u64])
            .shuffle(&mut order);

        let mut sq_err_sum = 0.0;
        for batch in order.chunks(opts.opt.batch_size) {
            let views: Result<Vec<Tensor>> = batch
                .par_iter()
                .map(|&i| {
                    let mut rng = Stream::derive(
                        opts.seed,
                        &[AUG_STREAM_TAG, fold as u64, epoch as u64, i as u64],
                    );
                    let view = augment_chip(&train_set[i].image, &mut rng, &opts.aug)?;
                    Ok(image_to_tensor(&view))
                })
                .collect();
            let views = views?;
            let aux: Vec<Vec<f64>> = batch.iter().map(|&i| train_aux[i].clone()).collect();
            let targets: Vec<f64> = batch.iter().map(|&i| train_targets[i]).collect();

            let (preds, caches) = forward_batch(&opts.net, &params, &views, &aux)?;
            let (loss, loss_grad) = mse_loss(&preds, &targets)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss at fold {fold}, epoch {epoch}"
                )));
            }
            sq_err_sum += loss * batch.len() as f64;
            let grads = backward_batch(&opts.net, &params, &caches, &loss_grad)?;
            rmsprop_step(&mut params, &grads, &mut state, &opts.opt, lr)?;
        }

        let train_loss = sq_err_sum / train_set.len() as f64;
        let val_mae = validation_mae(
            &opts.net,
            &params,
            aux_scaling.as_ref(),
            &val_by_patient,
            &opts.aug,
        )?;
        log.push(EpochLog {
            epoch,
            lr,
            train_loss,
            val_mae,
        });
    }

    Ok(TrainedFold {
        params,
        aux_scaling,
        log,
    })
}

/// Patient truth table derived from the manifest (first row per patient).
fn patients_of(manifest: &Manifest) -> Result<BTreeMap<String, (f64, f64)>> {
    let mut out: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for row in &manifest.rows {
        let entry = (row.baseline_egfr, row.egfr_12mo);
        if let Some(prev) = out.get(&row.patient_id) {
            if *prev != entry {
                return Err(Error::Data(format!(
                    "patient {} has inconsistent targets in the manifest",
                    row.patient_id
                )));
            }
        } else {
            out.insert(row.patient_id.clone(), entry);
        }
    }
    Ok(out)
}

/// Full k-fold cross-validation: trains every fold (folds run in parallel),
/// predicts each fold's held-out patients, and pools the per-patient rows
/// into one report covering every patient exactly once.
pub fn run_cv(manifest: &Manifest, k: usize, seed: u64, opts: &TrainOptions) -> Result<CvOutput> {
    if manifest.rows.is_empty() {
        return Err(Error::Data("empty manifest".into()));
    }
    let patients = patients_of(manifest)?;
    let ids: Vec<String> = patients.keys().cloned().collect();
    let split = assign_folds(&ids, k, seed)?;

    let fold_results: Result<Vec<(TrainedFold, Vec<EvalRow>)>> = (0..k)
        .into_par_iter()
        .map(|fold| {
            let trained = train_fold(manifest, &split, fold, opts)?;
            let mut chips_by_patient: BTreeMap<&str, Vec<&Path>> = BTreeMap::new();
            for row in &manifest.rows {
                if split.fold_of(&row.patient_id) == Some(fold) {
                    chips_by_patient
                        .entry(row.patient_id.as_str())
                        .or_default()
                        .push(row.chip_path.as_path());
                }
            }
            let mut rows = Vec::new();
            for (pid, chip_paths) in chips_by_patient {
                let images: Result<Vec<Image>> =
                    chip_paths.iter().map(|p| load_image(p)).collect();
                let images = images?;
                let refs: Vec<&Image> = images.iter().collect();
                let (baseline, truth) = patients[pid];
                let prediction = predict_patient(
                    &opts.net,
                    &trained.params,
                    trained.aux_scaling.as_ref(),
                    &refs,
                    baseline,
                    &opts.aug,
                )?;
                rows.push(EvalRow {
                    patient_id: pid.to_string(),
                    truth,
                    prediction,
                    baseline,
                });
            }
            Ok((trained, rows))
        })
        .collect();

    let mut fold_reports = Vec::with_capacity(k);
    let mut logs = Vec::with_capacity(k);
    let mut pooled_rows = Vec::new();
    for (trained, rows) in fold_results? {
        fold_reports.push(evaluate(&rows)?);
        logs.push(trained.log);
        pooled_rows.extend(rows);
    }
    pooled_rows.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
    let pooled = evaluate(&pooled_rows)?;
    Ok(CvOutput {
        split,
        fold_reports,
        pooled,
        logs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chipper::{ChipRow, Stain};
    use crate::nn::ConvGroup;
    use crate::raster::save_image;

    fn tiny_net() -> NetworkConfig {
        NetworkConfig {
            input_side: 8,
            input_channels: 3,
            conv_groups: vec![ConvGroup { filters: 2, convs: 1 }],
            dense_widths: vec![4],
            aux_dim: 1,
            output_dim: 1,
        }
    }

    fn tiny_aug() -> AugmentConfig {
        AugmentConfig {
            crop_px: 8,
            ..AugmentConfig::default()
        }
    }

    fn tiny_opts(seed: u64, epochs: usize, lr0: f64) -> TrainOptions {
        TrainOptions {
            net: tiny_net(),
            opt: OptimizerConfig {
                lr0,
                epochs,
                batch_size: 4,
                ..OptimizerConfig::default()
            },
            aug: tiny_aug(),
            seed,
        }
    }

    /// 6 patients x 2 chips, 32x32 chips whose darkness tracks the target.
    fn tiny_manifest(dir: &Path) -> Manifest {
        let mut rows = Vec::new();
        for p in 0..6 {
            let pid = format!("p{p}");
            let egfr = 100.0 - 10.0 * p as f64;
            let shade = (50 + 30 * p) as u8;
            for c in 0..2 {
                let mut rng = Stream::derive(99, &[p as u64, c as u64]);
                let data: Vec<u8> = (0..32 * 32 * 3)
                    .map(|_| shade.saturating_add(rng.below(20) as u8))
                    .collect();
                let img = Image::new(32, 32, 3, data).unwrap();
                let path = dir.join(format!("{pid}_c{c}.png"));
                save_image(&img, &path).unwrap();
                rows.push(ChipRow {
                    chip_path: path,
                    patient_id: pid.clone(),
                    slide_id: "s".into(),
                    roi_id: format!("r{c}"),
                    offset_x: 0,
                    offset_y: 0,
                    stain: Stain::Tri,
                    baseline_egfr: egfr + 5.0,
                    egfr_12mo: egfr,
                });
            }
        }
        Manifest { rows }
    }

    #[test]
    fn vanishing_lr_leaves_params_at_init() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = tiny_manifest(dir.path());
        let split = assign_folds(
            &manifest.rows.iter().map(|r| r.patient_id.clone()).collect::<Vec<_>>(),
            3,
            1,
        )
        .unwrap();
        let opts = tiny_opts(5, 1, 0.0);
        let trained = train_fold(&manifest, &split, 0, &opts).unwrap();
        let init = NetworkParams::init(
            &opts.net,
            &mut Stream::derive(opts.seed, &[INIT_STREAM_TAG, 0]),
        )
        .unwrap();
        assert_eq!(trained.params, init);
    }

    #[test]
    fn training_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = tiny_manifest(dir.path());
        let ids: Vec<String> = manifest.rows.iter().map(|r| r.patient_id.clone()).collect();
        let split = assign_folds(&ids, 3, 1).unwrap();
        let opts = tiny_opts(7, 2, 1e-3);
        let a = train_fold(&manifest, &split, 1, &opts).unwrap();
        let b = train_fold(&manifest, &split, 1, &opts).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn validation_chips_never_contribute_gradients() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = tiny_manifest(dir.path());
        let ids: Vec<String> = manifest.rows.iter().map(|r| r.patient_id.clone()).collect();
        let split = assign_folds(&ids, 3, 1).unwrap();
        let opts = tiny_opts(7, 2, 1e-3);
        let before = train_fold(&manifest, &split, 0, &opts).unwrap();
        // scribble over a fold-0 (validation) patient's chip
        let victim = manifest
            .rows
            .iter()
            .find(|r| split.fold_of(&r.patient_id) == Some(0))
            .unwrap();
        let mut img = load_image(&victim.chip_path).unwrap();
        for v in img.data.iter_mut() {
            *v = v.wrapping_add(40);
        }
        save_image(&img, &victim.chip_path).unwrap();
        let after = train_fold(&manifest, &split, 0, &opts).unwrap();
        assert_eq!(before.params, after.params);
    }

    #[test]
    fn predict_patient_is_mean_and_permutation_invariant() {
        let opts = tiny_opts(3, 1, 1e-3);
        let params = NetworkParams::init(&opts.net, &mut Stream::new(2)).unwrap();
        let mk = |seed: u64| {
            let mut rng = Stream::new(seed);
            let data: Vec<u8> = (0..32 * 32 * 3).map(|_| rng.next_u64() as u8).collect();
            Image::new(32, 32, 3, data).unwrap()
        };
        let (a, b, c) = (mk(1), mk(2), mk(3));
        let scaling = AuxScaling {
            mean: vec![80.0],
            std: vec![10.0],
        };
        let single = |img: &Image| {
            predict_patient(&opts.net, &params, Some(&scaling), &[img], 75.0, &opts.aug).unwrap()
        };
        let (pa, pb, pc) = (single(&a), single(&b), single(&c));
        let together =
            predict_patient(&opts.net, &params, Some(&scaling), &[&a, &b, &c], 75.0, &opts.aug)
                .unwrap();
        assert!((together - (pa + pb + pc) / 3.0).abs() < 1e-9);
        let permuted =
            predict_patient(&opts.net, &params, Some(&scaling), &[&c, &a, &b], 75.0, &opts.aug)
                .unwrap();
        assert!((together - permuted).abs() < 1e-12);
        // duplicated chip list keeps the same mean
        let doubled = predict_patient(
            &opts.net,
            &params,
            Some(&scaling),
            &[&a, &b, &c, &a, &b, &c],
            75.0,
            &opts.aug,
        )
        .unwrap();
        assert!((together - doubled).abs() < 1e-9);
    }

    #[test]
    fn predict_patient_rejects_zero_chips() {
        let opts = tiny_opts(3, 1, 1e-3);
        let params = NetworkParams::init(&opts.net, &mut Stream::new(2)).unwrap();
        assert!(predict_patient(&opts.net, &params, None, &[], 75.0, &opts.aug).is_err());
    }

    #[test]
    fn cv_pools_each_patient_once() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = tiny_manifest(dir.path());
        let mut opts = tiny_opts(11, 1, 1e-3);
        opts.net.aux_dim = 1;
        let out = run_cv(&manifest, 3, 4, &opts).unwrap();
        assert_eq!(out.pooled.rows.len(), 6);
        let mut ids: Vec<&str> = out.pooled.rows.iter().map(|r| r.patient_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 6);
        assert_eq!(out.fold_reports.len(), 3);
        // validation sets partition the patients
        let total: usize = out.fold_reports.iter().map(|r| r.rows.len()).sum();
        assert_eq!(total, 6);
    }

    #[test]
    fn cv_is_rerun_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = tiny_manifest(dir.path());
        let opts = tiny_opts(11, 1, 1e-3);
        let a = run_cv(&manifest, 3, 4, &opts).unwrap();
        let b = run_cv(&manifest, 3, 4, &opts).unwrap();
        assert_eq!(a.pooled.rows, b.pooled.rows);
    }

    #[test]
    fn inconsistent_targets_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut manifest = tiny_manifest(dir.path());
        manifest.rows[1].egfr_12mo += 1.0;
        let opts = tiny_opts(11, 1, 1e-3);
        assert!(matches!(run_cv(&manifest, 3, 4, &opts), Err(Error::Data(_))));
    }

    #[test]
    fn missing_patient_in_split_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = tiny_manifest(dir.path());
        let split = assign_folds(&["p0".into(), "p1".into()], 2, 1).unwrap();
        let opts = tiny_opts(11, 1, 1e-3);
        assert!(train_fold(&manifest, &split, 0, &opts).is_err());
    }
}
