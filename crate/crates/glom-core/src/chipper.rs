//! Manifest-driven chip extraction: slide ROIs come in as ordinary raster
//! files plus a CSV of provenance, get tiled by an overlapping sliding
//! window, downsampled, and written out as a reproducible chip database.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::PatientRecord;
use crate::raster::{downsample, load_image, save_image, Image};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stain {
    #[serde(rename = "TRI")]
    Tri,
    #[serde(rename = "PASD")]
    Pasd,
    #[serde(rename = "OTHER")]
    Other,
}

/// One ROI file with its provenance, as read from the ROI input CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoiRecord {
    pub roi_path: PathBuf,
    pub patient_id: String,
    pub slide_id: String,
    pub stain: Stain,
}

impl RoiRecord {
    /// ROI id is the file stem of the source path.
    pub fn roi_id(&self) -> String {
        self.roi_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ChipConfig {
    pub window_px: usize,
    pub overlap_frac: f64,
    pub downsample_factor: usize,
}

impl Default for ChipConfig {
    fn default() -> Self {
        ChipConfig {
            window_px: 2000,
            overlap_frac: 0.5,
            downsample_factor: 2,
        }
    }
}

impl ChipConfig {
    pub fn stride(&self) -> usize {
        (self.window_px as f64 * (1.0 - self.overlap_frac)).round() as usize
    }

    pub fn chip_side(&self) -> usize {
        self.window_px / self.downsample_factor
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_px == 0 || self.downsample_factor == 0 {
            return Err(Error::Config("window and downsample must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.overlap_frac) {
            return Err(Error::Config("overlap_frac must be in [0, 1)".into()));
        }
        if self.window_px % self.downsample_factor != 0 {
            return Err(Error::Config(
                "window_px must be divisible by downsample_factor".into(),
            ));
        }
        let stride_exact = self.window_px as f64 * (1.0 - self.overlap_frac);
        if stride_exact < 1.0 || (stride_exact - stride_exact.round()).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "stride {stride_exact} is not a positive integer"
            )));
        }
        Ok(())
    }
}

/// A downsampled window crop with provenance and training targets.
#[derive(Debug, Clone)]
pub struct Chip {
    pub image: Image,
    pub patient_id: String,
    pub slide_id: String,
    pub roi_id: String,
    pub offset_x: usize,
    pub offset_y: usize,
}

/// One row of the chip manifest CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChipRow {
    pub chip_path: PathBuf,
    pub patient_id: String,
    pub slide_id: String,
    pub roi_id: String,
    pub offset_x: usize,
    pub offset_y: usize,
    pub stain: Stain,
    pub baseline_egfr: f64,
    pub egfr_12mo: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Manifest {
    pub rows: Vec<ChipRow>,
}

#[derive(Debug)]
pub struct BuildOutput {
    pub manifest: Manifest,
    pub warnings: Vec<String>,
}

/// Window start offsets along one axis: 0, stride, ... while the window
/// still fits. Remainders past the last full window are discarded.
pub fn plan_windows(dim: usize, window: usize, stride: usize) -> Vec<usize> {
    assert!(window >= 1 && stride >= 1);
    if dim < window {
        return Vec::new();
    }
    (0..=(dim - window) / stride).map(|i| i * stride).collect()
}

/// Tile one ROI into chips: sliding window over both axes, crop, downsample.
pub fn chip_roi(roi: &Image, meta: &RoiRecord, cfg: &ChipConfig) -> Result<Vec<Chip>> {
    cfg.validate()?;
    if roi.channels != 3 {
        return Err(Error::InvalidImage("ROI must have 3 channels".into()));
    }
    let stride = cfg.stride();
    let xs = plan_windows(roi.width, cfg.window_px, stride);
    let ys = plan_windows(roi.height, cfg.window_px, stride);
    let mut chips = Vec::with_capacity(xs.len() * ys.len());
    for &oy in &ys {
        for &ox in &xs {
            let window = roi.crop(ox, oy, cfg.window_px, cfg.window_px)?;
            chips.push(Chip {
                image: downsample(&window, cfg.downsample_factor)?,
                patient_id: meta.patient_id.clone(),
                slide_id: meta.slide_id.clone(),
                roi_id: meta.roi_id(),
                offset_x: ox,
                offset_y: oy,
            });
        }
    }
    Ok(chips)
}

/// Build the on-disk chip database: every chip as a PNG under
/// `out_dir/chips/`, plus `manifest.csv` joining patient targets. Rows are
/// sorted by (patient_id, slide_id, roi_id, offset_y, offset_x) regardless
/// of per-ROI completion order, so rebuilds are byte-identical.
pub fn build_chip_db(
    rois: &[RoiRecord],
    patients: &[PatientRecord],
    cfg: &ChipConfig,
    out_dir: &Path,
    strict: bool,
) -> Result<BuildOutput> {
    cfg.validate()?;
    let table: BTreeMap<&str, &PatientRecord> = patients
        .iter()
        .map(|p| (p.patient_id.as_str(), p))
        .collect();
    for roi in rois {
        if !table.contains_key(roi.patient_id.as_str()) {
            return Err(Error::UnknownPatient(roi.patient_id.clone()));
        }
    }
    let chips_dir = out_dir.join("chips");
    std::fs::create_dir_all(&chips_dir).map_err(|e| Error::io(&chips_dir, e))?;

    type RoiResult = Result<(Vec<ChipRow>, Vec<String>)>;
    let per_roi: Vec<RoiResult> = rois
        .par_iter()
        .map(|roi| {
            let img = match load_image(&roi.roi_path) {
                Ok(img) => img,
                Err(e) if !strict => {
                    return Ok((Vec::new(), vec![format!("skipping {:?}: {e}", roi.roi_path)]))
                }
                Err(e) => return Err(e),
            };
            let chips = chip_roi(&img, roi, cfg)?;
            let mut warnings = Vec::new();
            if chips.is_empty() {
                warnings.push(format!(
                    "ROI {:?} ({}x{}) smaller than the {} px window; no chips",
                    roi.roi_path, img.width, img.height, cfg.window_px
                ));
            }
            let patient = table[roi.patient_id.as_str()];
            let mut rows = Vec::with_capacity(chips.len());
            for chip in chips {
                let name = format!(
                    "{}_{}_{}_y{:06}_x{:06}.png",
                    chip.patient_id, chip.slide_id, chip.roi_id, chip.offset_y, chip.offset_x
                );
                let path = chips_dir.join(name);
                save_image(&chip.image, &path)?;
                rows.push(ChipRow {
                    chip_path: path,
                    patient_id: chip.patient_id,
                    slide_id: chip.slide_id,
                    roi_id: chip.roi_id,
                    offset_x: chip.offset_x,
                    offset_y: chip.offset_y,
                    stain: roi.stain,
                    baseline_egfr: patient.baseline_egfr,
                    egfr_12mo: patient.egfr_12mo,
                });
            }
            Ok((rows, warnings))
        })
        .collect();

    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for r in per_roi {
        let (rs, ws) = r?;
        rows.extend(rs);
        warnings.extend(ws);
    }
    rows.sort_by(|a, b| {
        (&a.patient_id, &a.slide_id, &a.roi_id, a.offset_y, a.offset_x).cmp(&(
            &b.patient_id,
            &b.slide_id,
            &b.roi_id,
            b.offset_y,
            b.offset_x,
        ))
    });
    let manifest = Manifest { rows };
    write_manifest(&manifest, &out_dir.join("manifest.csv"))?;
    Ok(BuildOutput { manifest, warnings })
}

pub fn read_roi_csv(path: &Path) -> Result<Vec<RoiRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in reader.deserialize() {
        let roi: RoiRecord = rec?;
        if roi.patient_id.is_empty() {
            return Err(Error::Data(format!("empty patient_id in {path:?}")));
        }
        out.push(roi);
    }
    Ok(out)
}

pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in &manifest.rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in reader.deserialize() {
        rows.push(rec?);
    }
    Ok(Manifest { rows })
}
