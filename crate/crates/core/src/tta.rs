//! Test-time augmentation: declarative transforms (geometric scale plus
//! HSV photometrics), raster application, and the exact inverse mapping of
//! predicted boxes back to original image coordinates.
//!
//! The transform is described, not procedural, so predictions made on a
//! transformed image can be un-mapped for fusion with predictions made on
//! the original frame. Photometric fields have an identity geometric
//! inverse: they never move a box.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detections::{Detection, PredictionSet};
use crate::geometry::BBox;

#[derive(Debug, Error)]
pub enum TtaError {
    #[error("invalid transform: {0}")]
    InvalidSpec(String),
    #[error("resize produces an empty {width}x{height} output")]
    EmptyOutput { width: u32, height: u32 },
    #[error("pixel buffer holds {got} bytes, expected {expected} (width x height x 3)")]
    BufferSize { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

fn one() -> f64 {
    1.0
}

/// One TTA transform: a geometric scale and HSV photometric parameters.
///
/// `scale_x`/`scale_y` are target-over-source dimension ratios. Omitted
/// fields default to the identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    #[serde(default = "one")]
    pub scale_x: f64,
    #[serde(default = "one")]
    pub scale_y: f64,
    /// Hue rotation in degrees, in `[-180, 180]`.
    #[serde(default)]
    pub hue_shift: f64,
    #[serde(default = "one")]
    pub saturation_gain: f64,
    #[serde(default = "one")]
    pub value_gain: f64,
}

impl Default for TransformSpec {
    fn default() -> Self {
        Self::identity()
    }
}

impl TransformSpec {
    pub fn identity() -> Self {
        Self {
            scale_x: 1.0,
            scale_y: 1.0,
            hue_shift: 0.0,
            saturation_gain: 1.0,
            value_gain: 1.0,
        }
    }

    /// The geometric scale for resizing `(src_w, src_h)` to `(dst_w, dst_h)`,
    /// photometrics left at identity.
    pub fn resize(src: (u32, u32), dst: (u32, u32)) -> Self {
        Self {
            scale_x: f64::from(dst.0) / f64::from(src.0),
            scale_y: f64::from(dst.1) / f64::from(src.1),
            ..Self::identity()
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }

    pub fn validate(&self) -> Result<(), TtaError> {
        if !(self.scale_x.is_finite() && self.scale_x > 0.0)
            || !(self.scale_y.is_finite() && self.scale_y > 0.0)
        {
            return Err(TtaError::InvalidSpec(format!(
                "scales must be positive, got ({}, {})",
                self.scale_x, self.scale_y
            )));
        }
        if !self.hue_shift.is_finite() || !(-180.0..=180.0).contains(&self.hue_shift) {
            return Err(TtaError::InvalidSpec(format!(
                "hue_shift {} outside [-180, 180]",
                self.hue_shift
            )));
        }
        if !(self.saturation_gain.is_finite() && self.saturation_gain >= 0.0)
            || !(self.value_gain.is_finite() && self.value_gain >= 0.0)
        {
            return Err(TtaError::InvalidSpec(format!(
                "gains must be non-negative, got ({}, {})",
                self.saturation_gain, self.value_gain
            )));
        }
        Ok(())
    }
}

/// Maps a box from original coordinates into the transformed frame.
pub fn forward_box(bbox: &BBox, spec: &TransformSpec) -> BBox {
    BBox::new_unchecked(
        bbox.x_min() * spec.scale_x,
        bbox.y_min() * spec.scale_y,
        bbox.x_max() * spec.scale_x,
        bbox.y_max() * spec.scale_y,
    )
}

/// Maps a box predicted on the transformed frame back to original
/// coordinates. Multiplies by the reciprocal scale rather than dividing:
/// for ratio scales like 7/6 this reproduces integer-pixel corners exactly,
/// where plain division can land one ulp short.
pub fn inverse_box(bbox: &BBox, spec: &TransformSpec) -> BBox {
    let rx = 1.0 / spec.scale_x;
    let ry = 1.0 / spec.scale_y;
    BBox::new_unchecked(
        bbox.x_min() * rx,
        bbox.y_min() * ry,
        bbox.x_max() * rx,
        bbox.y_max() * ry,
    )
}

/// Applies [`inverse_box`] to every detection; scores and ids untouched.
pub fn map_predictions(set: &PredictionSet, spec: &TransformSpec) -> PredictionSet {
    let mapped: Vec<Detection> = set
        .detections()
        .iter()
        .map(|det| Detection {
            bbox: inverse_box(&det.bbox, spec),
            ..det.clone()
        })
        .collect();
    PredictionSet::new(set.source_label(), set.categories().clone(), mapped)
        .expect("mapping preserves validity")
}

/// Row-major 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, TtaError> {
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(TtaError::BufferSize {
                expected,
                got: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }
}

/// Standard hexcone RGB→HSV: `h` in degrees `[0, 360)`, `s` and `v` in
/// `[0, 1]`. Achromatic pixels (including black) take `h = 0, s = 0`.
pub fn rgb_to_hsv(rgb: [u8; 3]) -> (f64, f64, f64) {
    let r = f64::from(rgb[0]);
    let g = f64::from(rgb[1]);
    let b = f64::from(rgb[2]);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;

    let v = max / 255.0;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    (h, s, v)
}

/// Hexcone HSV→RGB with round-half-up quantization to 8 bits. Exact
/// inverse of [`rgb_to_hsv`] for every 8-bit triple.
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let chroma = v * s;
    let hp = h.rem_euclid(360.0) / 60.0;
    let x = chroma * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r1, g1, b1) = match hp as u32 {
        0 => (chroma, x, 0.0),
        1 => (x, chroma, 0.0),
        2 => (0.0, chroma, x),
        3 => (0.0, x, chroma),
        4 => (x, 0.0, chroma),
        _ => (chroma, 0.0, x),
    };
    let m = v - chroma;
    [quantize(r1 + m), quantize(g1 + m), quantize(b1 + m)]
}

fn quantize(channel: f64) -> u8 {
    (channel * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Per-pixel HSV adjustment: rotate hue, scale saturation and value (both
/// clamped to `[0, 1]`), reconvert. The identity spec is bit-exact.
pub fn adjust_hsv(img: &RasterImage, spec: &TransformSpec) -> RasterImage {
    let mut out = Vec::with_capacity(img.pixels.len());
    for rgb in img.pixels.chunks_exact(3) {
        let (h, s, v) = rgb_to_hsv([rgb[0], rgb[1], rgb[2]]);
        let h = (h + spec.hue_shift).rem_euclid(360.0);
        let s = (s * spec.saturation_gain).clamp(0.0, 1.0);
        let v = (v * spec.value_gain).clamp(0.0, 1.0);
        out.extend_from_slice(&hsv_to_rgb(h, s, v));
    }
    RasterImage {
        width: img.width,
        height: img.height,
        pixels: out,
    }
}

/// Bilinear resize with half-pixel-center alignment to
/// `round(width · scale_x) x round(height · scale_y)`.
pub fn resize_image(img: &RasterImage, spec: &TransformSpec) -> Result<RasterImage, TtaError> {
    let out_w = (f64::from(img.width) * spec.scale_x).round() as u32;
    let out_h = (f64::from(img.height) * spec.scale_y).round() as u32;
    if out_w == 0 || out_h == 0 {
        return Err(TtaError::EmptyOutput {
            width: out_w,
            height: out_h,
        });
    }

    let ratio_x = f64::from(img.width) / f64::from(out_w);
    let ratio_y = f64::from(img.height) / f64::from(out_h);
    let src_w = img.width as usize;

    let mut out = Vec::with_capacity(out_w as usize * out_h as usize * 3);
    for dy in 0..out_h {
        let sy = ((f64::from(dy) + 0.5) * ratio_y - 0.5).clamp(0.0, f64::from(img.height - 1));
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(img.height as usize - 1);
        let fy = sy - sy.floor();
        for dx in 0..out_w {
            let sx = ((f64::from(dx) + 0.5) * ratio_x - 0.5).clamp(0.0, f64::from(img.width - 1));
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(src_w - 1);
            let fx = sx - sx.floor();
            for ch in 0..3 {
                let v00 = f64::from(img.pixels[(y0 * src_w + x0) * 3 + ch]);
                let v10 = f64::from(img.pixels[(y0 * src_w + x1) * 3 + ch]);
                let v01 = f64::from(img.pixels[(y1 * src_w + x0) * 3 + ch]);
                let v11 = f64::from(img.pixels[(y1 * src_w + x1) * 3 + ch]);
                let top = v00 * (1.0 - fx) + v10 * fx;
                let bottom = v01 * (1.0 - fx) + v11 * fx;
                let value = top * (1.0 - fy) + bottom * fy;
                out.push((value + 0.5).floor().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Ok(RasterImage {
        width: out_w,
        height: out_h,
        pixels: out,
    })
}

/// Decodes a PNG file into an RGB raster.
pub fn read_png(path: &Path) -> Result<RasterImage, TtaError> {
    let img = image::open(path)?.to_rgb8();
    let (width, height) = img.dimensions();
    RasterImage::new(width, height, img.into_raw())
}

/// Encodes the raster as PNG.
pub fn write_png(path: &Path, img: &RasterImage) -> Result<(), TtaError> {
    let buffer = image::RgbImage::from_raw(img.width, img.height, img.pixels.clone())
        .expect("raster invariant guarantees buffer size");
    buffer.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// One line of the manifest written alongside transformed images.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    #[serde(flatten)]
    pub spec: TransformSpec,
}
