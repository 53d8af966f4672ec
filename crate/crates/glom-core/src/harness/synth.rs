//! Synthetic dataset generator: a stand-in for the private biopsy data that
//! preserves the claim structure of the real task. A latent per-patient
//! "fibrosis" score drives both the 12-month eGFR target and the visual
//! density of dark blobs in the generated ROI images, and the baseline eGFR
//! is a noisier copy of the target, so baseline propagation is a strong but
//! beatable reference.

use std::path::{Path, PathBuf};

use crate::chipper::{RoiRecord, Stain};
use crate::error::{Error, Result};
use crate::harness::{write_patient_csv, PatientRecord};
use crate::raster::{save_image, Image};
use crate::rng::Stream;

const PATIENT_STREAM_TAG: u64 = 0x51;
const ROI_STREAM_TAG: u64 = 0x52;

#[derive(Debug, Clone, Copy)]
pub struct SynthConfig {
    pub n_patients: usize,
    /// ROI images per patient; each is exactly one chip window wide.
    pub chips_per_patient: usize,
    /// Side of each generated ROI in pixels.
    pub chip_px: usize,
    pub seed: u64,
    pub noise_egfr_sd: f64,
    /// A patient with latent score f gets round(f * blob_count_max) blobs
    /// per ROI.
    pub blob_count_max: usize,
    pub blob_radius_min: f64,
    pub blob_radius_max: f64,
    pub blob_color: [u8; 3],
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_patients: 40,
            chips_per_patient: 16,
            chip_px: 256,
            seed: 42,
            noise_egfr_sd: 5.0,
            blob_count_max: 48,
            blob_radius_min: 6.0,
            blob_radius_max: 12.0,
            blob_color: [110, 60, 100],
        }
    }
}

#[derive(Debug)]
pub struct SynthOutput {
    pub patients_csv: PathBuf,
    pub rois_csv: PathBuf,
    pub patients: Vec<PatientRecord>,
    pub rois: Vec<RoiRecord>,
}

fn clamp_egfr(v: f64) -> f64 {
    v.clamp(5.0, 150.0)
}

fn draw_blob(img: &mut Image, rng: &mut Stream, cfg: &SynthConfig) {
    let side = cfg.chip_px as f64;
    let r = rng.uniform(cfg.blob_radius_min, cfg.blob_radius_max);
    let cx = rng.uniform(r, side - r);
    let cy = rng.uniform(r, side - r);
    let rx = r * rng.uniform(0.7, 1.3);
    let ry = r * rng.uniform(0.7, 1.3);
    let theta = rng.uniform(0.0, std::f64::consts::PI);
    let (cos, sin) = (theta.cos(), theta.sin());
    let reach = rx.max(ry).ceil();
    let x_lo = ((cx - reach).floor().max(0.0)) as usize;
    let x_hi = ((cx + reach).ceil().min(side - 1.0)) as usize;
    let y_lo = ((cy - reach).floor().max(0.0)) as usize;
    let y_hi = ((cy + reach).ceil().min(side - 1.0)) as usize;
    for y in y_lo..=y_hi {
        for x in x_lo..=x_hi {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let u = (dx * cos + dy * sin) / rx;
            let v = (-dx * sin + dy * cos) / ry;
            if u * u + v * v <= 1.0 {
                for c in 0..3 {
                    *img.sample_mut(x, y, c) = cfg.blob_color[c];
                }
            }
        }
    }
}

/// Generate the dataset: a patient table CSV, one PNG per ROI under
/// `out_dir/rois/`, and the ROI provenance CSV. Byte-identical for a fixed
/// config.
pub fn synth_generate(cfg: &SynthConfig, out_dir: &Path) -> Result<SynthOutput> {
    if cfg.n_patients == 0 || cfg.chips_per_patient == 0 || cfg.chip_px == 0 {
        return Err(Error::Config("synth counts must be >= 1".into()));
    }
    if cfg.blob_radius_min <= 0.0 || cfg.blob_radius_max < cfg.blob_radius_min {
        return Err(Error::Config("bad blob radius range".into()));
    }
    if cfg.blob_radius_max * 2.0 >= cfg.chip_px as f64 {
        return Err(Error::Config("blobs larger than the ROI".into()));
    }
    let roi_dir = out_dir.join("rois");
    std::fs::create_dir_all(&roi_dir).map_err(|e| Error::io(&roi_dir, e))?;

    let mut patients = Vec::with_capacity(cfg.n_patients);
    let mut rois = Vec::new();
    for pi in 0..cfg.n_patients {
        let mut prng = Stream::derive(cfg.seed, &[PATIENT_STREAM_TAG, pi as u64]);
        let fibrosis = prng.next_f64();
        let egfr_12mo = clamp_egfr(110.0 - 90.0 * fibrosis + cfg.noise_egfr_sd * prng.normal());
        let baseline_egfr = clamp_egfr(egfr_12mo + 2.0 * cfg.noise_egfr_sd * prng.normal());
        let patient_id = format!("p{pi:03}");
        let blobs = (fibrosis * cfg.blob_count_max as f64).round() as usize;

        for ri in 0..cfg.chips_per_patient {
            let mut rrng = Stream::derive(cfg.seed, &[ROI_STREAM_TAG, pi as u64, ri as u64]);
            let mut img = Image::filled(cfg.chip_px, cfg.chip_px, 3, 255);
            // faint background texture so Otsu never sees a constant image
            for _ in 0..cfg.chip_px {
                let x = rrng.below(cfg.chip_px as u64) as usize;
                let y = rrng.below(cfg.chip_px as u64) as usize;
                for c in 0..3 {
                    *img.sample_mut(x, y, c) = 250;
                }
            }
            for _ in 0..blobs {
                draw_blob(&mut img, &mut rrng, cfg);
            }
            let path = roi_dir.join(format!("{patient_id}_roi{ri:02}.png"));
            save_image(&img, &path)?;
            rois.push(RoiRecord {
                roi_path: path,
                patient_id: patient_id.clone(),
                slide_id: format!("{patient_id}_s0"),
                stain: if ri % 2 == 0 { Stain::Tri } else { Stain::Pasd },
            });
        }
        patients.push(PatientRecord {
            patient_id,
            baseline_egfr,
            egfr_12mo,
        });
    }

    let patients_csv = out_dir.join("patients.csv");
    write_patient_csv(&patients, &patients_csv)?;
    let rois_csv = out_dir.join("rois.csv");
    let mut writer = csv::Writer::from_path(&rois_csv)?;
    for roi in &rois {
        writer.serialize(roi)?;
    }
    writer.flush().map_err(|e| Error::io(&rois_csv, e))?;
    Ok(SynthOutput {
        patients_csv,
        rois_csv,
        patients,
        rois,
    })
}
