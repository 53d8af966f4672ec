//! Dense 8-bit raster images and binary masks, with the load/save,
//! block-mean downsample, and center-crop primitives the rest of the
//! pipeline is built on.

use std::path::Path;

use crate::error::{Error, Result};

/// A dense row-major 8-bit image, 1 or 3 channels, interleaved samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
    /// Physical pixel pitch in microns, when known. Metadata only.
    pub pixel_size_um: Option<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage("zero dimension".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage(format!("{channels} channels")));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidImage(format!(
                "data length {} != {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
            pixel_size_um: None,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Self {
        Image::new(width, height, channels, vec![value; width * height * channels]).unwrap()
    }

    #[inline]
    pub fn sample(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn sample_mut(&mut self, x: usize, y: usize, c: usize) -> &mut u8 {
        &mut self.data[(y * self.width + x) * self.channels + c]
    }

    /// Rec. 601 luminance, rounded to the nearest integer. For 1-channel
    /// images this is the sample itself.
    #[inline]
    pub fn luminance(&self, x: usize, y: usize) -> u8 {
        if self.channels == 1 {
            self.sample(x, y, 0)
        } else {
            let r = self.sample(x, y, 0) as f64;
            let g = self.sample(x, y, 1) as f64;
            let b = self.sample(x, y, 2) as f64;
            (0.299 * r + 0.587 * g + 0.114 * b).round() as u8
        }
    }

    /// Rectangular crop at an explicit offset.
    pub fn crop(&self, x0: usize, y0: usize, out_w: usize, out_h: usize) -> Result<Image> {
        if x0 + out_w > self.width || y0 + out_h > self.height {
            return Err(Error::CropTooLarge {
                out_h,
                out_w,
                height: self.height,
                width: self.width,
            });
        }
        let c = self.channels;
        let mut data = Vec::with_capacity(out_w * out_h * c);
        for y in y0..y0 + out_h {
            let start = (y * self.width + x0) * c;
            data.extend_from_slice(&self.data[start..start + out_w * c]);
        }
        let mut out = Image::new(out_w, out_h, c, data)?;
        out.pixel_size_um = self.pixel_size_um;
        Ok(out)
    }
}

/// A row-major binary foreground mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), width * height);
        Mask {
            width,
            height,
            bits,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn complement(&self) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|&b| !b).collect(),
        }
    }
}

/// Decode a PNG or TIFF file. Grayscale stays 1-channel; color is promoted
/// to plain 8-bit RGB.
pub fn load_image(path: &Path) -> Result<Image> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    if !matches!(ext.as_str(), "png" | "tif" | "tiff") {
        return Err(Error::UnsupportedFormat(path.to_path_buf()));
    }
    let dynimg = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            reason: format!("decode failure: {e}"),
        })?;
    let (w, h) = (dynimg.width() as usize, dynimg.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::InvalidImage("zero dimension".into()));
    }
    match dynimg {
        image::DynamicImage::ImageLuma8(buf) => Image::new(w, h, 1, buf.into_raw()),
        other => Image::new(w, h, 3, other.into_rgb8().into_raw()),
    }
}

/// Encode losslessly as PNG.
pub fn save_image(img: &Image, path: &Path) -> Result<()> {
    let color = if img.channels == 1 {
        image::ExtendedColorType::L8
    } else {
        image::ExtendedColorType::Rgb8
    };
    image::save_buffer(
        path,
        &img.data,
        img.width as u32,
        img.height as u32,
        color,
    )
    .map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: format!("encode failure: {e}"),
    })
}

/// Block-mean downsample by an integer factor. Each output sample is the
/// arithmetic mean of its factor x factor source block, rounded half-up.
pub fn downsample(img: &Image, factor: usize) -> Result<Image> {
    if factor == 0 {
        return Err(Error::Config("downsample factor must be >= 1".into()));
    }
    if factor == 1 {
        return Ok(img.clone());
    }
    if img.width % factor != 0 || img.height % factor != 0 {
        return Err(Error::NonDivisible {
            width: img.width,
            height: img.height,
            factor,
        });
    }
    let (ow, oh, c) = (img.width / factor, img.height / factor, img.channels);
    let block = (factor * factor) as u32;
    let mut data = vec![0u8; ow * oh * c];
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut acc: u32 = 0;
                for dy in 0..factor {
                    for dx in 0..factor {
                        acc += img.sample(ox * factor + dx, oy * factor + dy, ch) as u32;
                    }
                }
                // mean rounded half-up
                data[(oy * ow + ox) * c + ch] = ((2 * acc + block) / (2 * block)) as u8;
            }
        }
    }
    let mut out = Image::new(ow, oh, c, data)?;
    out.pixel_size_um = img.pixel_size_um.map(|p| p * factor as f64);
    Ok(out)
}

/// Bilinear sample at a fractional source location; taps outside the image
/// read the background color. Writes one rounded 8-bit value per channel.
pub(crate) fn bilinear(img: &Image, x: f64, y: f64, background: [u8; 3], out: &mut [u8]) {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let tap = |ix: f64, iy: f64, c: usize| -> f64 {
        if ix < 0.0 || iy < 0.0 || ix as usize >= img.width || iy as usize >= img.height {
            background[c.min(2)] as f64
        } else {
            img.sample(ix as usize, iy as usize, c) as f64
        }
    };
    for c in 0..img.channels {
        let v = tap(x0, y0, c) * (1.0 - fx) * (1.0 - fy)
            + tap(x0 + 1.0, y0, c) * fx * (1.0 - fy)
            + tap(x0, y0 + 1.0, c) * (1.0 - fx) * fy
            + tap(x0 + 1.0, y0 + 1.0, c) * fx * fy;
        out[c] = v.round().clamp(0.0, 255.0) as u8;
    }
}

/// Centered crop; offset = floor((dim - out) / 2) per axis.
pub fn center_crop(img: &Image, out_h: usize, out_w: usize) -> Result<Image> {
    if out_h > img.height || out_w > img.width {
        return Err(Error::CropTooLarge {
            out_h,
            out_w,
            height: img.height,
            width: img.width,
        });
    }
    let x0 = (img.width - out_w) / 2;
    let y0 = (img.height - out_h) / 2;
    img.crop(x0, y0, out_w, out_h)
}
