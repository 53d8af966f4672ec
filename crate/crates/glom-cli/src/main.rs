//! `glom`: one executable covering the whole pipeline, from synthetic data
//! generation through segmentation, chipping, training, cross-validation,
//! and report export.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use glom_core::chipper::{build_chip_db, read_manifest, read_roi_csv, ChipConfig};
use glom_core::config::RunConfig;
use glom_core::harness::{
    evaluate, export_report, read_eval_rows, read_patient_csv, run_cv, synth_generate,
    train_fold, assign_folds, EpochLog, TrainOptions,
};
use glom_core::nn::save_checkpoint;
use glom_core::segment::segment_slide;
use glom_core::{load_image, save_image, Error};

#[derive(Parser)]
#[command(name = "glom", about = "Kidney biopsy chip pipeline", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic ROI dataset with known structure
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Segment one slide image into oriented tissue crops (QA path)
    Segment {
        #[arg(long)]
        slide: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cut ROIs into overlapping downsampled chips and write the manifest
    Chip {
        #[arg(long)]
        rois: PathBuf,
        #[arg(long)]
        patients: PathBuf,
        #[arg(long, default_value_t = 2000)]
        window: usize,
        #[arg(long, default_value_t = 0.5)]
        overlap: f64,
        #[arg(long, default_value_t = 2)]
        downsample: usize,
        /// Skip unreadable ROI files with a warning instead of failing
        #[arg(long)]
        lenient: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a single fold and save its checkpoint
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        fold: usize,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full k-fold cross-validation with pooled report
    Cv {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = AuxMode::BaselineEgfr)]
        aux: AuxMode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score an existing predictions CSV against the baseline reference
    Eval {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AuxMode {
    Off,
    BaselineEgfr,
}

fn load_config(path: Option<&Path>) -> glom_core::Result<RunConfig> {
    match path {
        Some(p) => RunConfig::from_file(p),
        None => Ok(RunConfig::default()),
    }
}

fn ensure_dir(dir: &Path) -> glom_core::Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_epoch_log(log: &[EpochLog], path: &Path) -> glom_core::Result<()> {
    let mut text = String::from("epoch,lr,train_loss,val_mae\n");
    for e in log {
        text.push_str(&format!(
            "{},{},{},{}\n",
            e.epoch, e.lr, e.train_loss, e.val_mae
        ));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run(cli: Cli) -> glom_core::Result<()> {
    match cli.command {
        Command::Synth { config, out } => {
            let cfg = load_config(config.as_deref())?;
            let result = synth_generate(&cfg.synth, &out)?;
            println!(
                "generated {} patients, {} ROIs",
                result.patients.len(),
                result.rois.len()
            );
            println!("patients: {}", result.patients_csv.display());
            println!("rois:     {}", result.rois_csv.display());
        }
        Command::Segment { slide, config, out } => {
            let cfg = load_config(config.as_deref())?;
            let img = load_image(&slide)?;
            let slide_id = slide
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "slide".into());
            let segments = segment_slide(&img, &cfg.seg)?;
            ensure_dir(&out)?;
            let mut csv = String::from(
                "slide_id,component_idx,center_x,center_y,length,width,angle_deg,area_px\n",
            );
            for (idx, seg) in segments.iter().enumerate() {
                let crop_path = out.join(format!("{slide_id}_component{idx:02}.png"));
                save_image(&seg.crop, &crop_path)?;
                csv.push_str(&format!(
                    "{slide_id},{idx},{},{},{},{},{},{}\n",
                    seg.bbox.center_x,
                    seg.bbox.center_y,
                    seg.bbox.length,
                    seg.bbox.width,
                    seg.bbox.angle_deg,
                    seg.area_px
                ));
            }
            let csv_path = out.join("boxes.csv");
            std::fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
            println!("{} components -> {}", segments.len(), out.display());
        }
        Command::Chip {
            rois,
            patients,
            window,
            overlap,
            downsample,
            lenient,
            out,
        } => {
            let roi_records = read_roi_csv(&rois)?;
            let patient_records = read_patient_csv(&patients)?;
            let cfg = ChipConfig {
                window_px: window,
                overlap_frac: overlap,
                downsample_factor: downsample,
            };
            let built = build_chip_db(&roi_records, &patient_records, &cfg, &out, !lenient)?;
            for w in &built.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "{} chips -> {}",
                built.manifest.rows.len(),
                out.join("manifest.csv").display()
            );
        }
        Command::Train {
            manifest,
            fold,
            k,
            seed,
            config,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let manifest = read_manifest(&manifest)?;
            let ids: Vec<String> = manifest
                .rows
                .iter()
                .map(|r| r.patient_id.clone())
                .collect();
            let split = assign_folds(&ids, k, seed)?;
            let opts = TrainOptions {
                net: cfg.net.clone(),
                opt: cfg.opt,
                aug: cfg.aug,
                seed,
            };
            let trained = train_fold(&manifest, &split, fold, &opts)?;
            ensure_dir(&out)?;
            let ckpt = out.join(format!("fold{fold}.glom"));
            save_checkpoint(&cfg.net, &trained.params, &ckpt)?;
            write_epoch_log(&trained.log, &out.join(format!("fold{fold}_log.csv")))?;
            if let Some(last) = trained.log.last() {
                println!(
                    "fold {fold}: train_loss {:.6}, val MAE {:.3}",
                    last.train_loss, last.val_mae
                );
            }
            println!("checkpoint: {}", ckpt.display());
        }
        Command::Cv {
            manifest,
            k,
            seed,
            config,
            aux,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let manifest = read_manifest(&manifest)?;
            let mut net = cfg.net.clone();
            if matches!(aux, AuxMode::Off) {
                net.aux_dim = 0;
            }
            let opts = TrainOptions {
                net,
                opt: cfg.opt,
                aug: cfg.aug,
                seed,
            };
            let cv = run_cv(&manifest, k, seed, &opts)?;
            ensure_dir(&out)?;
            export_report(&cv.pooled, &out)?;
            for (fold, (report, log)) in cv.fold_reports.iter().zip(&cv.logs).enumerate() {
                let fold_dir = out.join(format!("fold{fold}"));
                export_report(report, &fold_dir)?;
                write_epoch_log(log, &fold_dir.join("log.csv"))?;
            }
            println!(
                "pooled MAE {:.3} vs baseline {:.3} ({:.1}% reduction)",
                cv.pooled.mae,
                cv.pooled.baseline_mae,
                cv.pooled.relative_reduction * 100.0
            );
            println!("report: {}", out.join("report.csv").display());
        }
        Command::Eval { predictions, out } => {
            let rows = read_eval_rows(&predictions)?;
            let report = evaluate(&rows)?;
            export_report(&report, &out)?;
            println!(
                "MAE {:.3} vs baseline {:.3} ({:.1}% reduction), fit slope {:.4}, intercept {:.3}",
                report.mae,
                report.baseline_mae,
                report.relative_reduction * 100.0,
                report.fit_slope,
                report.fit_intercept
            );
        }
    }
    Ok(())
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::NonFinite(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are not usage errors
            let code = if e.exit_code() == 0 { 0 } else { 1 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
