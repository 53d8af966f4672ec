//! Core library for the kidney-biopsy eGFR regression pipeline: raster
//! handling, slide segmentation, ROI chipping, on-the-fly augmentation, a
//! from-scratch convolutional regressor with aux-feature injection, RMSProp
//! training, and the patient-level cross-validation harness.

pub mod augment;
pub mod chipper;
pub mod config;
pub mod error;
pub mod harness;
pub mod nn;
pub mod optim;
pub mod raster;
pub mod rng;
pub mod segment;

pub use error::{Error, Result};
pub use raster::{center_crop, downsample, load_image, save_image, Image, Mask};
pub use rng::Stream;
