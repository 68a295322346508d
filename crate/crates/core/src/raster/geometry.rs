//! Crop-and-resize between source images and the fixed model frame.
//!
//! Coordinates in [`CropTransform`] are continuous with pixel edges at
//! integers, so pixel `i` covers `[i, i + 1)` and has its centre at
//! `i + 0.5`.

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::{BoundaryPair, BoundingBox, Mask};
use crate::error::{Error, Result};

pub const FRAME_WIDTH: u32 = 640;
pub const FRAME_HEIGHT: u32 = 480;

/// Maps a source-image rectangle onto an `out` sized frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropTransform {
    pub source_width: u32,
    pub source_height: u32,
    pub bbox: BoundingBox,
    pub out_width: u32,
    pub out_height: u32,
}

fn lerp_column(y: &[f64], valid: &[bool], xc: f64) -> Option<f64> {
    let n = y.len();
    if n == 0 {
        return None;
    }
    let xc = xc.clamp(0.0, (n - 1) as f64);
    let i0 = xc.floor() as usize;
    let i1 = (i0 + 1).min(n - 1);
    let t = xc - i0 as f64;
    match (valid[i0], valid[i1]) {
        (true, true) => Some(y[i0] * (1.0 - t) + y[i1] * t),
        (true, false) if t <= 0.5 => Some(y[i0]),
        (false, true) if t >= 0.5 => Some(y[i1]),
        _ => None,
    }
}

impl CropTransform {
    /// Whole image resized to `out`.
    pub fn resize(source_width: u32, source_height: u32, out_width: u32, out_height: u32) -> Self {
        Self {
            source_width,
            source_height,
            bbox: BoundingBox {
                x0: 0,
                y0: 0,
                x1: source_width,
                y1: source_height,
            },
            out_width,
            out_height,
        }
    }

    /// Source pixels per output pixel along x and y.
    pub fn scale(&self) -> (f64, f64) {
        (
            self.bbox.width() as f64 / self.out_width as f64,
            self.bbox.height() as f64 / self.out_height as f64,
        )
    }

    pub fn to_source(&self, x: f64, y: f64) -> (f64, f64) {
        let (sx, sy) = self.scale();
        (self.bbox.x0 as f64 + x * sx, self.bbox.y0 as f64 + y * sy)
    }

    pub fn to_output(&self, x: f64, y: f64) -> (f64, f64) {
        let (sx, sy) = self.scale();
        (
            (x - self.bbox.x0 as f64) / sx,
            (y - self.bbox.y0 as f64) / sy,
        )
    }

    /// Bilinear resample of the box into the output frame, clamping at the
    /// source borders.
    pub fn crop_image(&self, img: &RgbImage) -> RgbImage {
        let (w, h) = img.dimensions();
        let mut out = RgbImage::new(self.out_width, self.out_height);
        for oy in 0..self.out_height {
            let (_, sy) = self.to_source(0.0, oy as f64 + 0.5);
            let yc = (sy - 0.5).clamp(0.0, (h - 1) as f64);
            let y0 = yc.floor() as u32;
            let y1 = (y0 + 1).min(h - 1);
            let ty = (yc - y0 as f64) as f32;
            for ox in 0..self.out_width {
                let (sx, _) = self.to_source(ox as f64 + 0.5, 0.0);
                let xc = (sx - 0.5).clamp(0.0, (w - 1) as f64);
                let x0 = xc.floor() as u32;
                let x1 = (x0 + 1).min(w - 1);
                let tx = (xc - x0 as f64) as f32;
                let (a, b, c, d) = (
                    img.get_pixel(x0, y0),
                    img.get_pixel(x1, y0),
                    img.get_pixel(x0, y1),
                    img.get_pixel(x1, y1),
                );
                let mut px = [0u8; 3];
                for k in 0..3 {
                    let top = a[k] as f32 * (1.0 - tx) + b[k] as f32 * tx;
                    let bot = c[k] as f32 * (1.0 - tx) + d[k] as f32 * tx;
                    px[k] = (top * (1.0 - ty) + bot * ty).round().clamp(0.0, 255.0) as u8;
                }
                out.put_pixel(ox, oy, Rgb(px));
            }
        }
        out
    }

    /// Nearest-neighbour resample of the box into the output frame.
    pub fn crop_mask(&self, mask: &Mask) -> Mask {
        let (w, h) = mask.dims();
        let xs: Vec<u32> = (0..self.out_width)
            .map(|ox| (self.to_source(ox as f64 + 0.5, 0.0).0.floor().max(0.0) as u32).min(w - 1))
            .collect();
        Mask::from_fn(self.out_width, self.out_height, |ox, oy| {
            let sy = (self.to_source(0.0, oy as f64 + 0.5).1.floor().max(0.0) as u32).min(h - 1);
            mask.get(xs[ox as usize], sy)
        })
    }

    /// Nearest-neighbour map of an output-frame mask back onto the source;
    /// pixels outside the box are unset.
    pub fn mask_to_source(&self, mask: &Mask) -> Mask {
        let b = self.bbox;
        Mask::from_fn(self.source_width, self.source_height, |x, y| {
            if x < b.x0 || x >= b.x1 || y < b.y0 || y >= b.y1 {
                return false;
            }
            let (ox, oy) = self.to_output(x as f64 + 0.5, y as f64 + 0.5);
            let ox = (ox.floor().max(0.0) as u32).min(self.out_width - 1);
            let oy = (oy.floor().max(0.0) as u32).min(self.out_height - 1);
            mask.get(ox, oy)
        })
    }

    /// Re-expresses source-frame curves (normalized by source height) in the
    /// output frame. Values falling outside the box become invalid.
    pub fn boundaries_to_output(&self, b: &BoundaryPair) -> BoundaryPair {
        let mut out = BoundaryPair::absent(self.out_width as usize);
        let hs = self.source_height as f64;
        for i in 0..2 {
            for j in 0..self.out_width as usize {
                let (sx, _) = self.to_source(j as f64 + 0.5, 0.0);
                if let Some(y) = lerp_column(&b.y[i], &b.valid[i], sx - 0.5) {
                    let (_, oy) = self.to_output(0.0, y * hs);
                    let yn = oy / self.out_height as f64;
                    if (0.0..=1.0).contains(&yn) {
                        out.y[i][j] = yn;
                        out.valid[i][j] = true;
                    }
                }
            }
        }
        out
    }

    /// Inverse of [`CropTransform::boundaries_to_output`]; columns outside
    /// the box are invalid.
    pub fn boundaries_to_source(&self, b: &BoundaryPair) -> BoundaryPair {
        let mut out = BoundaryPair::absent(self.source_width as usize);
        let hs = self.source_height as f64;
        for i in 0..2 {
            for x in self.bbox.x0..self.bbox.x1 {
                let (ox, _) = self.to_output(x as f64 + 0.5, 0.0);
                if let Some(y) = lerp_column(&b.y[i], &b.valid[i], ox - 0.5) {
                    let (_, sy) = self.to_source(0.0, y * self.out_height as f64);
                    out.y[i][x as usize] = (sy / hs).clamp(0.0, 1.0);
                    out.valid[i][x as usize] = true;
                }
            }
        }
        out
    }
}

/// Crops the tight bounding box of `ship` and resizes it to the model frame.
pub fn crop_resize_ship(image: &RgbImage, ship: &Mask) -> Result<(RgbImage, CropTransform)> {
    if image.dimensions() != ship.dims() {
        return Err(Error::Shape(format!(
            "image {:?} vs ship mask {:?}",
            image.dimensions(),
            ship.dims()
        )));
    }
    let bbox = ship
        .bounding_box()
        .ok_or_else(|| Error::NoShip("ship mask is empty".into()))?;
    let t = CropTransform {
        source_width: image.width(),
        source_height: image.height(),
        bbox,
        out_width: FRAME_WIDTH,
        out_height: FRAME_HEIGHT,
    };
    Ok((t.crop_image(image), t))
}

pub fn resize_image(img: &RgbImage, w: u32, h: u32) -> RgbImage {
    CropTransform::resize(img.width(), img.height(), w, h).crop_image(img)
}

pub fn resize_mask(mask: &Mask, w: u32, h: u32) -> Mask {
    CropTransform::resize(mask.width(), mask.height(), w, h).crop_mask(mask)
}
