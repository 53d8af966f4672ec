//! Foreground segmentation: Otsu histogram thresholding, binary morphology,
//! connected components, and oriented bounding boxes with rectified crops.
//!
//! This is the fully automatic inspection path; training data flows through
//! the manifest-driven chipper instead.

use crate::error::{Error, Result};
use crate::raster::{bilinear, Image, Mask};

/// An oriented rectangle: `length` along the major axis at `angle_deg` from
/// the image x-axis, `width` along the minor axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub center_x: f64,
    pub center_y: f64,
    pub length: f64,
    pub width: f64,
    pub angle_deg: f64,
}

#[derive(Debug, Clone)]
pub struct SegmentConfig {
    pub erode_iters: usize,
    pub dilate_iters: usize,
    /// Row-major 3x3 structuring element.
    pub structuring_element: [bool; 9],
    pub min_area_px: usize,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        SegmentConfig {
            erode_iters: 2,
            dilate_iters: 2,
            structuring_element: [true; 9],
            min_area_px: 50_000,
        }
    }
}

/// Otsu's method over the 256-bin luminance histogram. Foreground is
/// darker-than-threshold (tissue on a white slide background). Ties break
/// to the smallest maximizing threshold.
pub fn otsu_threshold(img: &Image) -> Result<(u8, Mask)> {
    let mut hist = [0u64; 256];
    for y in 0..img.height {
        for x in 0..img.width {
            hist[img.luminance(x, y) as usize] += 1;
        }
    }
    let total = (img.width * img.height) as f64;
    let distinct = hist.iter().filter(|&&c| c > 0).count();
    if distinct < 2 {
        return Err(Error::DegenerateHistogram);
    }
    let sum_all: f64 = hist
        .iter()
        .enumerate()
        .map(|(v, &c)| v as f64 * c as f64)
        .sum();

    let mut best_t = 1u16;
    let mut best_var = f64::NEG_INFINITY;
    let mut w0 = 0.0;
    let mut sum0 = 0.0;
    // threshold t: class 0 = luminance < t, class 1 = luminance >= t
    for t in 1u16..=255 {
        w0 += hist[(t - 1) as usize] as f64;
        sum0 += (t - 1) as f64 * hist[(t - 1) as usize] as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let mu0 = sum0 / w0;
        let mu1 = (sum_all - sum0) / w1;
        let var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if var > best_var {
            best_var = var;
            best_t = t;
        }
    }

    let t = best_t as u8;
    let mut mask = Mask::new(img.width, img.height);
    for y in 0..img.height {
        for x in 0..img.width {
            mask.set(x, y, img.luminance(x, y) < t);
        }
    }
    Ok((t, mask))
}

fn morph_once(mask: &Mask, se: &[bool; 9], erode: bool) -> Mask {
    let (w, h) = (mask.width as isize, mask.height as isize);
    let mut out = Mask::new(mask.width, mask.height);
    for y in 0..h {
        for x in 0..w {
            let mut hit = erode; // erosion: all; dilation: any
            'se: for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if !se[((dy + 1) * 3 + (dx + 1)) as usize] {
                        continue;
                    }
                    // dilation probes with the reflected element
                    let (sx, sy) = if erode { (x + dx, y + dy) } else { (x - dx, y - dy) };
                    let inside = sx >= 0 && sx < w && sy >= 0 && sy < h;
                    let fg = inside && mask.get(sx as usize, sy as usize);
                    if erode && !fg {
                        hit = false;
                        break 'se;
                    }
                    if !erode && fg {
                        hit = true;
                        break 'se;
                    }
                }
            }
            out.set(x as usize, y as usize, hit);
        }
    }
    out
}

/// Binary erosion, out-of-bounds treated as background.
pub fn erode(mask: &Mask, se: &[bool; 9], iters: usize) -> Mask {
    let mut m = mask.clone();
    for _ in 0..iters {
        m = morph_once(&m, se, true);
    }
    m
}

/// Binary dilation, clipped at the image border.
pub fn dilate(mask: &Mask, se: &[bool; 9], iters: usize) -> Mask {
    let mut m = mask.clone();
    for _ in 0..iters {
        m = morph_once(&m, se, false);
    }
    m
}

/// 8-connected component labeling. Components smaller than `min_area_px`
/// are dropped; the rest come back largest-first, ties by the smallest
/// row-major index of their first pixel.
pub fn connected_components(mask: &Mask, min_area_px: usize) -> Vec<Mask> {
    let (w, h) = (mask.width, mask.height);
    let mut label = vec![usize::MAX; w * h];
    let mut comps: Vec<(usize, usize, Mask)> = Vec::new(); // (area, first_idx, mask)
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.bits[start] || label[start] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut comp = Mask::new(w, h);
        let mut area = 0usize;
        stack.push(start);
        label[start] = id;
        while let Some(idx) = stack.pop() {
            comp.bits[idx] = true;
            area += 1;
            let (x, y) = (idx % w, idx / w);
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let nidx = ny as usize * w + nx as usize;
                    if mask.bits[nidx] && label[nidx] == usize::MAX {
                        label[nidx] = id;
                        stack.push(nidx);
                    }
                }
            }
        }
        comps.push((area, start, comp));
    }
    comps.retain(|(area, _, _)| *area >= min_area_px && *area > 0);
    comps.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    comps.into_iter().map(|(_, _, m)| m).collect()
}

/// Principal-axis oriented bounding box of a component's pixel set.
///
/// The orientation comes from PCA of the foreground pixel coordinates; the
/// box is the tight axis-aligned rectangle of the pixels rotated into that
/// frame, widened by one pixel to cover the unit squares.
pub fn oriented_bbox(component: &Mask) -> Result<OrientedBox> {
    let pts: Vec<(f64, f64)> = (0..component.bits.len())
        .filter(|&i| component.bits[i])
        .map(|i| ((i % component.width) as f64, (i / component.width) as f64))
        .collect();
    if pts.is_empty() {
        return Err(Error::EmptyMask);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut cxx, mut cyy, mut cxy) = (0.0, 0.0, 0.0);
    for &(x, y) in &pts {
        cxx += (x - mx) * (x - mx);
        cyy += (y - my) * (y - my);
        cxy += (x - mx) * (y - my);
    }
    let theta = 0.5 * (2.0 * cxy).atan2(cxx - cyy);

    let (cos, sin) = (theta.cos(), theta.sin());
    let (mut umin, mut umax) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &pts {
        let u = (x - mx) * cos + (y - my) * sin;
        let v = -(x - mx) * sin + (y - my) * cos;
        umin = umin.min(u);
        umax = umax.max(u);
        vmin = vmin.min(v);
        vmax = vmax.max(v);
    }
    let eu = umax - umin + 1.0;
    let ev = vmax - vmin + 1.0;
    let (uc, vc) = ((umin + umax) / 2.0, (vmin + vmax) / 2.0);
    let center_x = mx + uc * cos - vc * sin;
    let center_y = my + uc * sin + vc * cos;

    let (length, width, mut angle) = if eu >= ev {
        (eu, ev, theta.to_degrees())
    } else {
        (ev, eu, theta.to_degrees() + 90.0)
    };
    while angle <= -90.0 {
        angle += 180.0;
    }
    while angle > 90.0 {
        angle -= 180.0;
    }
    Ok(OrientedBox {
        center_x,
        center_y,
        length,
        width,
        angle_deg: angle,
    })
}

/// Resample the contents of an oriented box into an upright length x width
/// image. Pixels falling outside the source take the background color.
pub fn extract_rotated(img: &Image, bbox: &OrientedBox, background: [u8; 3]) -> Result<Image> {
    let out_w = bbox.length.round().max(0.0) as usize;
    let out_h = bbox.width.round().max(0.0) as usize;
    if out_w == 0 || out_h == 0 {
        return Err(Error::DegenerateBox);
    }
    let theta = bbox.angle_deg.to_radians();
    let (cos, sin) = (theta.cos(), theta.sin());
    let c = img.channels;
    let mut data = vec![0u8; out_w * out_h * c];
    let mut px = [0u8; 3];
    for oy in 0..out_h {
        for ox in 0..out_w {
            let u = ox as f64 - (out_w as f64 - 1.0) / 2.0;
            let v = oy as f64 - (out_h as f64 - 1.0) / 2.0;
            let sx = bbox.center_x + u * cos - v * sin;
            let sy = bbox.center_y + u * sin + v * cos;
            bilinear(img, sx, sy, background, &mut px);
            data[(oy * out_w + ox) * c..(oy * out_w + ox) * c + c].copy_from_slice(&px[..c]);
        }
    }
    Image::new(out_w, out_h, c, data)
}

/// The full automatic path: threshold, morphology, components, and a
/// rectified crop per surviving component.
/// One tissue component: its oriented box, the rectified crop, and the
/// foreground area of the component mask.
#[derive(Debug, Clone)]
pub struct SlideSegment {
    pub bbox: OrientedBox,
    pub crop: Image,
    pub area_px: usize,
}

pub fn segment_slide(img: &Image, cfg: &SegmentConfig) -> Result<Vec<SlideSegment>> {
    let (_, mask) = otsu_threshold(img)?;
    let mask = erode(&mask, &cfg.structuring_element, cfg.erode_iters);
    let mask = dilate(&mask, &cfg.structuring_element, cfg.dilate_iters);
    let comps = connected_components(&mask, cfg.min_area_px);
    let mut out = Vec::with_capacity(comps.len());
    for comp in &comps {
        let bbox = oriented_bbox(comp)?;
        let crop = extract_rotated(img, &bbox, [255, 255, 255])?;
        out.push(SlideSegment {
            bbox,
            crop,
            area_px: comp.area(),
        });
    }
    Ok(out)
}
