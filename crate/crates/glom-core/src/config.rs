//! Plain-text `key = value` run configuration with dotted keys and `#`
//! comments. Unknown keys are errors so typos fail loudly.

use std::collections::BTreeMap;
use std::path::Path;

use crate::augment::AugmentConfig;
use crate::error::{Error, Result};
use crate::harness::SynthConfig;
use crate::nn::{ConvGroup, NetworkConfig};
use crate::optim::OptimizerConfig;
use crate::segment::SegmentConfig;

/// Everything a training or generation run can tune from a config file.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub net: NetworkConfig,
    pub opt: OptimizerConfig,
    pub aug: AugmentConfig,
    pub synth: SynthConfig,
    pub seg: SegmentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            net: NetworkConfig::desk(),
            opt: OptimizerConfig::default(),
            aug: AugmentConfig::default(),
            synth: SynthConfig::default(),
            seg: SegmentConfig::default(),
        }
    }
}

fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "line {}: expected `key = value`, got {raw:?}",
                lineno + 1
            )));
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() || value.is_empty() {
            return Err(Error::Config(format!("line {}: empty key or value", lineno + 1)));
        }
        if map.insert(key.clone(), value).is_some() {
            return Err(Error::Config(format!("duplicate key `{key}`")));
        }
    }
    Ok(map)
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("key `{key}`: cannot parse {value:?}")))
}

fn parse_conv_groups(value: &str) -> Result<Vec<ConvGroup>> {
    value
        .split(',')
        .map(|part| {
            let (f, c) = part
                .trim()
                .split_once('x')
                .ok_or_else(|| Error::Config(format!("conv group {part:?}, expected FxC")))?;
            Ok(ConvGroup {
                filters: parse("net.conv_groups", f)?,
                convs: parse("net.conv_groups", c)?,
            })
        })
        .collect()
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(|p| parse(key, p.trim())).collect()
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_str_overrides(&text)
    }

    /// Defaults overridden by the given `key = value` text.
    pub fn from_str_overrides(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (key, value) in parse_pairs(text)? {
            let v = value.as_str();
            match key.as_str() {
                "aug.rotation_deg" => cfg.aug.rotation_deg = parse(&key, v)?,
                "aug.translate_frac" => cfg.aug.translate_frac = parse(&key, v)?,
                "aug.zoom_frac" => cfg.aug.zoom_frac = parse(&key, v)?,
                "aug.flip_prob" => cfg.aug.flip_prob = parse(&key, v)?,
                "aug.crop_px" => cfg.aug.crop_px = parse(&key, v)?,
                "aug.load_downsample" => cfg.aug.load_downsample = parse(&key, v)?,
                "opt.rho" => cfg.opt.rho = parse(&key, v)?,
                "opt.epsilon" => cfg.opt.epsilon = parse(&key, v)?,
                "opt.lr0" => cfg.opt.lr0 = parse(&key, v)?,
                "opt.epochs" => cfg.opt.epochs = parse(&key, v)?,
                "opt.batch_size" => cfg.opt.batch_size = parse(&key, v)?,
                "net.input_side" => cfg.net.input_side = parse(&key, v)?,
                "net.conv_groups" => cfg.net.conv_groups = parse_conv_groups(v)?,
                "net.dense_widths" => cfg.net.dense_widths = parse_list(&key, v)?,
                "synth.n_patients" => cfg.synth.n_patients = parse(&key, v)?,
                "synth.chips_per_patient" => cfg.synth.chips_per_patient = parse(&key, v)?,
                "synth.chip_px" => cfg.synth.chip_px = parse(&key, v)?,
                "synth.seed" => cfg.synth.seed = parse(&key, v)?,
                "synth.noise_egfr_sd" => cfg.synth.noise_egfr_sd = parse(&key, v)?,
                "synth.blob_count_max" => cfg.synth.blob_count_max = parse(&key, v)?,
                "synth.blob_radius_min" => cfg.synth.blob_radius_min = parse(&key, v)?,
                "synth.blob_radius_max" => cfg.synth.blob_radius_max = parse(&key, v)?,
                "synth.blob_color" => {
                    let rgb: Vec<u8> = parse_list(&key, v)?;
                    let [r, g, b] = rgb.as_slice() else {
                        return Err(Error::Config("synth.blob_color needs r,g,b".into()));
                    };
                    cfg.synth.blob_color = [*r, *g, *b];
                }
                "seg.erode_iters" => cfg.seg.erode_iters = parse(&key, v)?,
                "seg.dilate_iters" => cfg.seg.dilate_iters = parse(&key, v)?,
                "seg.min_area_px" => cfg.seg.min_area_px = parse(&key, v)?,
                _ => return Err(Error::Config(format!("unknown key `{key}`"))),
            }
        }
        cfg.net.validate()?;
        cfg.opt.validate()?;
        cfg.aug.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_when_empty() {
        let cfg = RunConfig::from_str_overrides("").unwrap();
        assert_eq!(cfg.opt.batch_size, 32);
        assert_eq!(cfg.aug.crop_px, 400);
    }

    #[test]
    fn overrides_and_comments() {
        let text = "\
# training tweaks
opt.lr0 = 0.001   # bigger steps
aug.crop_px = 64
net.conv_groups = 4x1, 8x2
net.dense_widths = 16,8
net.input_side = 32
";
        let cfg = RunConfig::from_str_overrides(text).unwrap();
        assert_eq!(cfg.opt.lr0, 1e-3);
        assert_eq!(cfg.aug.crop_px, 64);
        assert_eq!(cfg.net.conv_groups.len(), 2);
        assert_eq!(cfg.net.conv_groups[1].filters, 8);
        assert_eq!(cfg.net.dense_widths, vec![16, 8]);
    }

    #[test]
    fn unknown_key_is_error() {
        assert!(RunConfig::from_str_overrides("opt.lr = 0.1").is_err());
    }

    #[test]
    fn malformed_line_is_error() {
        assert!(RunConfig::from_str_overrides("just words").is_err());
    }

    #[test]
    fn duplicate_key_is_error() {
        assert!(RunConfig::from_str_overrides("opt.lr0 = 1e-4\nopt.lr0 = 2e-4").is_err());
    }

    #[test]
    fn invalid_value_is_error() {
        assert!(RunConfig::from_str_overrides("opt.epochs = soon").is_err());
    }
}
