use image::{Rgb, RgbImage};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::BoundaryPair;
use crate::error::{Error, Result};

/// Rotation about the image centre, then a shift, then an optional RGB to
/// BGR swap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub rotation_deg: f64,
    pub shift: (f64, f64),
    pub channel_flip: bool,
}

impl AugmentParams {
    pub fn identity() -> Self {
        Self {
            rotation_deg: 0.0,
            shift: (0.0, 0.0),
            channel_flip: false,
        }
    }

    pub fn channel_flip() -> Self {
        Self {
            channel_flip: true,
            ..Self::identity()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentRanges {
    pub max_rotation_deg: f64,
    /// Fraction of each image dimension.
    pub max_shift_frac: f64,
}

impl Default for AugmentRanges {
    fn default() -> Self {
        Self {
            max_rotation_deg: 8.0,
            max_shift_frac: 0.05,
        }
    }
}

impl AugmentRanges {
    pub fn validate(&self, p: &AugmentParams, width: u32, height: u32) -> Result<()> {
        if !p.rotation_deg.is_finite() || p.rotation_deg.abs() > self.max_rotation_deg {
            return Err(Error::validation(
                "rotation_deg",
                format!("{} outside ±{}", p.rotation_deg, self.max_rotation_deg),
            ));
        }
        let (mx, my) = (
            self.max_shift_frac * width as f64,
            self.max_shift_frac * height as f64,
        );
        if !p.shift.0.is_finite() || p.shift.0.abs() > mx + 1e-9 {
            return Err(Error::validation(
                "shift.x",
                format!("{} outside ±{mx}", p.shift.0),
            ));
        }
        if !p.shift.1.is_finite() || p.shift.1.abs() > my + 1e-9 {
            return Err(Error::validation(
                "shift.y",
                format!("{} outside ±{my}", p.shift.1),
            ));
        }
        Ok(())
    }

    /// Uniform rotation and integer-pixel shifts; never flips channels.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, width: u32, height: u32) -> AugmentParams {
        let mx = (self.max_shift_frac * width as f64).floor();
        let my = (self.max_shift_frac * height as f64).floor();
        AugmentParams {
            rotation_deg: rng.gen_range(-self.max_rotation_deg..=self.max_rotation_deg),
            shift: (
                rng.gen_range(-mx..=mx).round(),
                rng.gen_range(-my..=my).round(),
            ),
            channel_flip: false,
        }
    }
}

struct Rigid {
    cos: f64,
    sin: f64,
    cx: f64,
    cy: f64,
    dx: f64,
    dy: f64,
}

impl Rigid {
    fn new(p: &AugmentParams, w: u32, h: u32) -> Self {
        let a = p.rotation_deg.to_radians();
        Self {
            cos: a.cos(),
            sin: a.sin(),
            cx: w as f64 / 2.0,
            cy: h as f64 / 2.0,
            dx: p.shift.0,
            dy: p.shift.1,
        }
    }

    fn forward(&self, x: f64, y: f64) -> (f64, f64) {
        let (u, v) = (x - self.cx, y - self.cy);
        (
            self.cos * u - self.sin * v + self.cx + self.dx,
            self.sin * u + self.cos * v + self.cy + self.dy,
        )
    }

    fn inverse(&self, x: f64, y: f64) -> (f64, f64) {
        let (u, v) = (x - self.cx - self.dx, y - self.cy - self.dy);
        (
            self.cos * u + self.sin * v + self.cx,
            -self.sin * u + self.cos * v + self.cy,
        )
    }
}

/// Bilinear read at a pixel-centre coordinate; outside reads black.
fn sample_zero(img: &RgbImage, xc: f64, yc: f64) -> [u8; 3] {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let (x0, y0) = (xc.floor(), yc.floor());
    let (tx, ty) = (xc - x0, yc - y0);
    let mut acc = [0f64; 3];
    for (oy, wy) in [(0i64, 1.0 - ty), (1, ty)] {
        for (ox, wx) in [(0i64, 1.0 - tx), (1, tx)] {
            let wgt = wx * wy;
            if wgt == 0.0 {
                continue;
            }
            let (x, y) = (x0 as i64 + ox, y0 as i64 + oy);
            if x < 0 || y < 0 || x >= w || y >= h {
                continue;
            }
            let p = img.get_pixel(x as u32, y as u32);
            for k in 0..3 {
                acc[k] += wgt * p[k] as f64;
            }
        }
    }
    acc.map(|v| v.round().clamp(0.0, 255.0) as u8)
}

/// Applies `params` to an image and its boundary curves. Curve columns that
/// leave the frame become invalid.
pub fn augment(
    img: &RgbImage,
    b: &BoundaryPair,
    params: &AugmentParams,
    ranges: &AugmentRanges,
) -> Result<(RgbImage, BoundaryPair)> {
    let (w, h) = img.dimensions();
    ranges.validate(params, w, h)?;
    if b.width() != w as usize {
        return Err(Error::Shape(format!(
            "boundaries have {} columns, image {w}",
            b.width()
        )));
    }
    let rigid = Rigid::new(params, w, h);
    let is_identity = params.rotation_deg == 0.0 && params.shift == (0.0, 0.0);
    let mut out = if is_identity {
        img.clone()
    } else {
        RgbImage::from_fn(w, h, |x, y| {
            let (sx, sy) = rigid.inverse(x as f64 + 0.5, y as f64 + 0.5);
            Rgb(sample_zero(img, sx - 0.5, sy - 0.5))
        })
    };
    if params.channel_flip {
        for p in out.pixels_mut() {
            p.0.swap(0, 2);
        }
    }
    let curves = if is_identity {
        b.clone()
    } else {
        transform_curves(b, &rigid, w, h)
    };
    Ok((out, curves))
}

fn transform_curves(b: &BoundaryPair, rigid: &Rigid, w: u32, h: u32) -> BoundaryPair {
    let hf = h as f64;
    let mut out = BoundaryPair::absent(w as usize);
    for i in 0..2 {
        let pts: Vec<Option<(f64, f64)>> = (0..w as usize)
            .map(|j| b.valid[i][j].then(|| rigid.forward(j as f64 + 0.5, b.y[i][j] * hf)))
            .collect();
        let mut ys: Vec<Option<f64>> = vec![None; w as usize];
        for j in 0..pts.len().saturating_sub(1) {
            let (Some(a), Some(c)) = (pts[j], pts[j + 1]) else {
                continue;
            };
            let (lo, hi) = if a.0 <= c.0 { (a, c) } else { (c, a) };
            let k0 = (lo.0 - 0.5).ceil().max(0.0) as i64;
            let k1 = (hi.0 - 0.5).floor().min(w as f64 - 1.0) as i64;
            for k in k0..=k1 {
                let xk = k as f64 + 0.5;
                let t = if hi.0 > lo.0 {
                    (xk - lo.0) / (hi.0 - lo.0)
                } else {
                    0.0
                };
                ys[k as usize].get_or_insert(lo.1 + t * (hi.1 - lo.1));
            }
        }
        // Isolated valid columns have no segment; take them when they land
        // within half a pixel of a column centre.
        for (j, p) in pts.iter().enumerate() {
            let Some((x, y)) = *p else { continue };
            let neighbours =
                (j > 0 && pts[j - 1].is_some()) || (j + 1 < pts.len() && pts[j + 1].is_some());
            if neighbours {
                continue;
            }
            let k = (x - 0.5).round();
            if k >= 0.0 && k < w as f64 && (x - 0.5 - k).abs() <= 0.5 {
                ys[k as usize].get_or_insert(y);
            }
        }
        for (k, y) in ys.into_iter().enumerate() {
            if let Some(y) = y {
                let yn = y / hf;
                if (0.0..=1.0).contains(&yn) {
                    out.y[i][k] = yn;
                    out.valid[i][k] = true;
                }
            }
        }
    }
    for k in 0..w as usize {
        if out.valid[0][k] && out.valid[1][k] && out.y[1][k] < out.y[0][k] {
            out.y[1][k] = out.y[0][k];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn scene(w: u32, h: u32) -> (RgbImage, BoundaryPair) {
        let img = RgbImage::from_fn(w, h, |x, y| {
            Rgb([
                (x * 3 % 256) as u8,
                (y * 5 % 256) as u8,
                ((x + y) % 256) as u8,
            ])
        });
        let y0: Vec<f64> = (0..w).map(|x| 0.3 + 0.1 * (x as f64 / w as f64)).collect();
        let y1: Vec<f64> = (0..w).map(|_| 0.65).collect();
        (
            img,
            BoundaryPair::new([y0, y1], [vec![true; w as usize], vec![true; w as usize]]).unwrap(),
        )
    }

    #[test]
    fn identity_is_noop() {
        let (img, b) = scene(64, 48);
        let (i2, b2) = augment(
            &img,
            &b,
            &AugmentParams::identity(),
            &AugmentRanges::default(),
        )
        .unwrap();
        assert_eq!(i2, img);
        assert_eq!(b2, b);
    }

    #[test]
    fn channel_flip_keeps_targets() {
        let (img, b) = scene(64, 48);
        let (i2, b2) = augment(
            &img,
            &b,
            &AugmentParams::channel_flip(),
            &AugmentRanges::default(),
        )
        .unwrap();
        assert_eq!(b2, b);
        let (p, q) = (img.get_pixel(5, 7), i2.get_pixel(5, 7));
        assert_eq!((q[0], q[1], q[2]), (p[2], p[1], p[0]));
    }

    #[test]
    fn shift_moves_columns_and_invalidates_leading_edge() {
        let (img, b) = scene(640, 480);
        let p = AugmentParams {
            rotation_deg: 0.0,
            shift: (10.0, 0.0),
            channel_flip: false,
        };
        let (i2, b2) = augment(&img, &b, &p, &AugmentRanges::default()).unwrap();
        // Direct re-annotation of the shifted scene.
        for i in 0..2 {
            for k in 0..640 {
                if k < 10 {
                    assert!(!b2.valid[i][k]);
                } else {
                    assert!(b2.valid[i][k]);
                    assert!((b2.y[i][k] - b.y[i][k - 10]).abs() < 1e-12);
                }
            }
        }
        assert_eq!(i2.get_pixel(110, 50), img.get_pixel(100, 50));
        assert_eq!(i2.get_pixel(3, 50), &Rgb([0, 0, 0]));
    }

    #[test]
    fn vertical_shift_moves_curves() {
        let (img, b) = scene(100, 200);
        let p = AugmentParams {
            rotation_deg: 0.0,
            shift: (0.0, -8.0),
            channel_flip: false,
        };
        let (_, b2) = augment(&img, &b, &p, &AugmentRanges::default()).unwrap();
        assert!((b2.y[1][50] - (0.65 - 8.0 / 200.0)).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_params_rejected() {
        let (img, b) = scene(100, 100);
        let bad = AugmentParams {
            rotation_deg: 12.0,
            ..AugmentParams::identity()
        };
        assert!(augment(&img, &b, &bad, &AugmentRanges::default()).is_err());
        let bad = AugmentParams {
            shift: (6.0, 0.0),
            ..AugmentParams::identity()
        };
        assert!(augment(&img, &b, &bad, &AugmentRanges::default()).is_err());
    }

    #[test]
    fn random_augmentations_keep_curve_invariants() {
        let (img, b) = scene(160, 120);
        let ranges = AugmentRanges::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let p = ranges.sample(&mut rng, 160, 120);
            let (_, b2) = augment(&img, &b, &p, &ranges).unwrap();
            b2.validate().unwrap();
            assert!(b2.is_present(0) && b2.is_present(1));
        }
    }
}
