//! On-the-fly training augmentation: load-time downsample, a randomized
//! flip + rotate-scale-translate affine, and a fixed center crop. All
//! randomness comes from an explicit [`Stream`], so an augmented view is a
//! pure function of (image, seed path, config).

use crate::error::{Error, Result};
use crate::raster::{bilinear, center_crop, downsample, Image};
use crate::rng::Stream;

#[derive(Debug, Clone, Copy)]
pub struct AugmentConfig {
    /// Max rotation magnitude, degrees.
    pub rotation_deg: f64,
    /// Max translation per axis, as a fraction of the post-downsample side.
    pub translate_frac: f64,
    /// Max zoom deviation; scale is drawn from [1 - z, 1 + z].
    pub zoom_frac: f64,
    /// Independent flip probability per axis.
    pub flip_prob: f64,
    /// Output side after the final center crop.
    pub crop_px: usize,
    /// Additional load-time downsample factor (2..4).
    pub load_downsample: usize,
    /// Border fill color; white matches slide margins.
    pub fill: [u8; 3],
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            rotation_deg: 15.0,
            translate_frac: 0.07,
            zoom_frac: 0.05,
            flip_prob: 0.5,
            crop_px: 400,
            load_downsample: 2,
            fill: [255, 255, 255],
        }
    }
}

impl AugmentConfig {
    /// Zero-magnitude copy of this config: the deterministic inference path.
    pub fn identity(&self) -> AugmentConfig {
        AugmentConfig {
            rotation_deg: 0.0,
            translate_frac: 0.0,
            zoom_frac: 0.0,
            flip_prob: 0.0,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rotation_deg < 0.0 || self.translate_frac < 0.0 || self.zoom_frac < 0.0 {
            return Err(Error::Config("augment magnitudes must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::Config("flip_prob must be in [0, 1]".into()));
        }
        if !(2..=4).contains(&self.load_downsample) {
            return Err(Error::Config("load_downsample must be in 2..4".into()));
        }
        if self.zoom_frac >= 1.0 {
            return Err(Error::Config("zoom_frac must be < 1".into()));
        }
        Ok(())
    }
}

/// One sampled realization of the augmentation distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub angle_deg: f64,
    pub dx_px: f64,
    pub dy_px: f64,
    pub scale: f64,
    pub flip_lr: bool,
    pub flip_ud: bool,
}

impl AugmentParams {
    pub const IDENTITY: AugmentParams = AugmentParams {
        angle_deg: 0.0,
        dx_px: 0.0,
        dy_px: 0.0,
        scale: 1.0,
        flip_lr: false,
        flip_ud: false,
    };
}

/// Draw augmentation parameters. Draw order is fixed (angle, dx, dy, scale,
/// flip_lr, flip_ud) so byte-reproducibility survives refactors elsewhere.
pub fn sample_params(rng: &mut Stream, cfg: &AugmentConfig, side_px: usize) -> AugmentParams {
    let t = cfg.translate_frac * side_px as f64;
    AugmentParams {
        angle_deg: rng.uniform(-cfg.rotation_deg, cfg.rotation_deg),
        dx_px: rng.uniform(-t, t),
        dy_px: rng.uniform(-t, t),
        scale: rng.uniform(1.0 - cfg.zoom_frac, 1.0 + cfg.zoom_frac),
        flip_lr: rng.bernoulli(cfg.flip_prob),
        flip_ud: rng.bernoulli(cfg.flip_prob),
    }
}

/// Apply flips, then a single composed rotate-scale-translate about the
/// image center, inverse-mapped with bilinear interpolation. Output has the
/// input's dimensions; out-of-bounds samples take the fill color.
pub fn apply_affine(img: &Image, p: &AugmentParams, fill: [u8; 3]) -> Image {
    let (w, h, c) = (img.width, img.height, img.channels);
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let theta = p.angle_deg.to_radians();
    let (cos, sin) = (theta.cos(), theta.sin());
    let inv_scale = 1.0 / p.scale;
    let mut data = vec![0u8; w * h * c];
    let mut px = [0u8; 3];
    for oy in 0..h {
        for ox in 0..w {
            // invert dest = R(theta) * scale * src + (dx, dy), about center
            let u = ox as f64 - cx - p.dx_px;
            let v = oy as f64 - cy - p.dy_px;
            let mut sx = (u * cos + v * sin) * inv_scale + cx;
            let mut sy = (-u * sin + v * cos) * inv_scale + cy;
            if p.flip_lr {
                sx = w as f64 - 1.0 - sx;
            }
            if p.flip_ud {
                sy = h as f64 - 1.0 - sy;
            }
            bilinear(img, sx, sy, fill, &mut px);
            data[(oy * w + ox) * c..(oy * w + ox) * c + c].copy_from_slice(&px[..c]);
        }
    }
    let mut out = Image::new(w, h, c, data).expect("same dims as input");
    out.pixel_size_um = img.pixel_size_um;
    out
}

/// The full per-sample training view: load-time downsample, random affine,
/// fixed center crop. Output is always crop_px x crop_px x channels.
pub fn augment_chip(img: &Image, rng: &mut Stream, cfg: &AugmentConfig) -> Result<Image> {
    cfg.validate()?;
    let small = downsample(img, cfg.load_downsample)?;
    if small.width < cfg.crop_px || small.height < cfg.crop_px {
        return Err(Error::Config(format!(
            "chip {}x{} smaller than {} px crop after {}x downsample",
            small.width, small.height, cfg.crop_px, cfg.load_downsample
        )));
    }
    let params = sample_params(rng, cfg, small.width);
    let warped = apply_affine(&small, &params, cfg.fill);
    center_crop(&warped, cfg.crop_px, cfg.crop_px)
}

/// Inference-time preprocessing: same geometry, no randomness.
pub fn center_view(img: &Image, cfg: &AugmentConfig) -> Result<Image> {
    let small = downsample(img, cfg.load_downsample)?;
    center_crop(&small, cfg.crop_px, cfg.crop_px)
}
