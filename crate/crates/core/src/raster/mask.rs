use std::collections::VecDeque;

use image::GrayImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strictly binary raster, row-major, one byte per pixel holding 0 or 1.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl std::fmt::Debug for Mask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Mask({}x{}, {} set)",
            self.width,
            self.height,
            self.count()
        )
    }
}

/// Inclusive-exclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl BoundingBox {
    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0; width as usize * height as usize],
        }
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![1; width as usize * height as usize],
        }
    }

    /// Builds a mask from 0/1 bytes; any other value is rejected.
    pub fn from_vec(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::Shape(format!(
                "mask data has {} bytes for {width}x{height}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|&&v| v > 1) {
            return Err(Error::validation("mask", format!("non-binary value {v}")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.data[(y * width + x) as usize] = 1;
                }
            }
        }
        m
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[(y * self.width + x) as usize] != 0
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, on: bool) {
        self.data[(y * self.width + x) as usize] = on as u8;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    fn check_same(&self, other: &Mask, op: &str) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::Shape(format!(
                "{op}: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    fn zip(&self, other: &Mask, op: &str, f: impl Fn(u8, u8) -> u8) -> Result<Mask> {
        self.check_same(other, op)?;
        Ok(Mask {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn union(&self, other: &Mask) -> Result<Mask> {
        self.zip(other, "mask union", |a, b| a | b)
    }

    pub fn intersection(&self, other: &Mask) -> Result<Mask> {
        self.zip(other, "mask intersection", |a, b| a & b)
    }

    /// Pixels of `self` not in `other`.
    pub fn difference(&self, other: &Mask) -> Result<Mask> {
        self.zip(other, "mask difference", |a, b| a & (1 - b))
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.dims() == other.dims() && self.data.iter().zip(&other.data).all(|(&a, &b)| a <= b)
    }

    pub fn intersection_count(&self, other: &Mask) -> usize {
        self.data
            .iter()
            .zip(&other.data)
            .filter(|(&a, &b)| a & b != 0)
            .count()
    }

    /// Intersection over union; `None` when both are empty.
    pub fn iou(&self, other: &Mask) -> Result<Option<f64>> {
        self.check_same(other, "iou")?;
        let (mut inter, mut uni) = (0usize, 0usize);
        for (&a, &b) in self.data.iter().zip(&other.data) {
            inter += (a & b) as usize;
            uni += (a | b) as usize;
        }
        Ok((uni > 0).then(|| inter as f64 / uni as f64))
    }

    pub fn bounding_box(&self) -> Option<BoundingBox> {
        let mut bb: Option<BoundingBox> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    let b = bb.get_or_insert(BoundingBox {
                        x0: x,
                        y0: y,
                        x1: x + 1,
                        y1: y + 1,
                    });
                    b.x0 = b.x0.min(x);
                    b.x1 = b.x1.max(x + 1);
                    b.y0 = b.y0.min(y);
                    b.y1 = b.y1.max(y + 1);
                }
            }
        }
        bb
    }

    /// 4-connected component labels (0 = unset) and the pixel count of each
    /// component, indexed by label - 1. Labels follow raster scan order.
    pub fn components(&self) -> (Vec<u32>, Vec<usize>) {
        let (w, h) = (self.width as usize, self.height as usize);
        let mut labels = vec![0u32; w * h];
        let mut sizes = Vec::new();
        let mut queue = VecDeque::new();
        for start in 0..w * h {
            if self.data[start] == 0 || labels[start] != 0 {
                continue;
            }
            let label = sizes.len() as u32 + 1;
            labels[start] = label;
            queue.push_back(start);
            let mut size = 0;
            while let Some(i) = queue.pop_front() {
                size += 1;
                let (x, y) = (i % w, i / w);
                let mut visit = |j: usize| {
                    if self.data[j] != 0 && labels[j] == 0 {
                        labels[j] = label;
                        queue.push_back(j);
                    }
                };
                if x > 0 {
                    visit(i - 1);
                }
                if x + 1 < w {
                    visit(i + 1);
                }
                if y > 0 {
                    visit(i - w);
                }
                if y + 1 < h {
                    visit(i + w);
                }
            }
            sizes.push(size);
        }
        (labels, sizes)
    }

    /// Keeps the largest 4-connected component. Ties go to the component
    /// whose centroid is topmost, then leftmost.
    pub fn largest_component(&self) -> Mask {
        let (labels, sizes) = self.components();
        if sizes.is_empty() {
            return self.clone();
        }
        let w = self.width as usize;
        let mut cy = vec![0f64; sizes.len()];
        let mut cx = vec![0f64; sizes.len()];
        for (i, &l) in labels.iter().enumerate() {
            if l > 0 {
                cx[l as usize - 1] += (i % w) as f64;
                cy[l as usize - 1] += (i / w) as f64;
            }
        }
        let mut best = 0;
        for k in 1..sizes.len() {
            let key = |j: usize| (cy[j] / sizes[j] as f64, cx[j] / sizes[j] as f64);
            if sizes[k] > sizes[best] || (sizes[k] == sizes[best] && key(k) < key(best)) {
                best = k;
            }
        }
        let keep = best as u32 + 1;
        Mask {
            width: self.width,
            height: self.height,
            data: labels.iter().map(|&l| (l == keep) as u8).collect(),
        }
    }

    /// Copies the window at `(x0, y0)` of size `w x h`; pixels outside read
    /// as unset.
    pub fn crop(&self, x0: i64, y0: i64, w: u32, h: u32) -> Mask {
        Mask::from_fn(w, h, |x, y| {
            let (sx, sy) = (x0 + x as i64, y0 + y as i64);
            sx >= 0
                && sy >= 0
                && sx < self.width as i64
                && sy < self.height as i64
                && self.get(sx as u32, sy as u32)
        })
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_raw(
            self.width,
            self.height,
            self.data.iter().map(|&v| v * 255).collect(),
        )
        .expect("dimensions match")
    }

    /// Reads an 8-bit mask image, which must hold only 0 and 255.
    pub fn from_gray(img: &GrayImage) -> Result<Mask> {
        let data = img
            .as_raw()
            .iter()
            .map(|&v| match v {
                0 => Ok(0),
                255 => Ok(1),
                other => Err(Error::validation(
                    "mask png",
                    format!("value {other} is neither 0 nor 255"),
                )),
            })
            .collect::<Result<Vec<u8>>>()?;
        Mask::from_vec(img.width(), img.height(), data)
    }

    pub fn save_png(&self, path: &std::path::Path) -> Result<()> {
        self.to_gray().save(path)?;
        Ok(())
    }

    pub fn load_png(path: &std::path::Path) -> Result<Mask> {
        let img = image::open(path)?.into_luma8();
        Mask::from_gray(&img)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rect(w: u32, h: u32, x0: u32, y0: u32, x1: u32, y1: u32) -> Mask {
        Mask::from_fn(w, h, |x, y| x >= x0 && x < x1 && y >= y0 && y < y1)
    }

    #[test]
    fn union_and_intersection_counts() {
        // 10-px and 15-px blobs, disjoint.
        let a = rect(20, 20, 0, 0, 10, 1);
        let b = rect(20, 20, 0, 5, 15, 6);
        assert_eq!(a.union(&b).unwrap().count(), 25);
        // 15 px sharing 4 with `a`.
        let c2 = rect(20, 20, 6, 0, 20, 1)
            .union(&rect(20, 20, 0, 3, 1, 4))
            .unwrap();
        assert_eq!(c2.count(), 15);
        assert_eq!(a.intersection(&c2).unwrap().count(), 4);
    }

    #[test]
    fn identities() {
        let a = rect(8, 8, 1, 2, 5, 7);
        let zero = Mask::new(8, 8);
        assert_eq!(a.union(&zero).unwrap(), a);
        assert_eq!(a.union(&a).unwrap(), a);
        assert_eq!(a.intersection(&a).unwrap(), a);
        assert_eq!(a.intersection(&zero).unwrap(), zero);
        assert!(a.union(&Mask::new(7, 8)).is_err());
    }

    #[test]
    fn largest_component_keeps_biggest_blob() {
        let a = rect(40, 40, 0, 0, 10, 10)
            .union(&rect(40, 40, 20, 20, 28, 25))
            .unwrap();
        let kept = a.largest_component();
        assert_eq!(kept.count(), 100);
        assert!(kept.get(0, 0));
        assert!(!kept.get(21, 21));
        let (_, sizes) = kept.components();
        assert_eq!(sizes.len(), 1);
    }

    #[test]
    fn largest_component_tie_prefers_top() {
        let a = rect(20, 20, 10, 10, 12, 12)
            .union(&rect(20, 20, 0, 0, 2, 2))
            .unwrap();
        let kept = a.largest_component();
        assert!(kept.get(0, 0) && !kept.get(10, 10));
    }

    #[test]
    fn gray_roundtrip_rejects_grey_levels() {
        let a = rect(5, 4, 1, 1, 3, 3);
        assert_eq!(Mask::from_gray(&a.to_gray()).unwrap(), a);
        let mut g = a.to_gray();
        g.put_pixel(0, 0, image::Luma([7]));
        assert!(Mask::from_gray(&g).is_err());
    }

    fn arb_mask() -> impl Strategy<Value = Mask> {
        prop::collection::vec(0u8..2, 36).prop_map(|d| Mask::from_vec(6, 6, d).unwrap())
    }

    proptest! {
        #[test]
        fn lattice_laws(a in arb_mask(), b in arb_mask(), c in arb_mask()) {
            prop_assert_eq!(a.union(&b).unwrap(), b.union(&a).unwrap());
            prop_assert_eq!(a.intersection(&b).unwrap(), b.intersection(&a).unwrap());
            prop_assert_eq!(a.union(&b).unwrap().union(&c).unwrap(), a.union(&b.union(&c).unwrap()).unwrap());
            prop_assert_eq!(
                a.intersection(&b).unwrap().intersection(&c).unwrap(),
                a.intersection(&b.intersection(&c).unwrap()).unwrap()
            );
            prop_assert_eq!(a.union(&a.intersection(&b).unwrap()).unwrap(), a.clone());
            prop_assert_eq!(a.intersection(&a.union(&b).unwrap()).unwrap(), a);
        }

        #[test]
        fn largest_component_is_connected_subset(a in arb_mask()) {
            let k = a.largest_component();
            prop_assert!(k.is_subset_of(&a));
            let (_, sizes) = k.components();
            prop_assert!(sizes.len() <= 1);
        }
    }
}
