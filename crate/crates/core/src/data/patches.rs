use image::RgbImage;

use super::{DefectClass, ImageRecord, Patch};
use crate::error::{Error, Result};
use crate::raster::Mask;

/// Mirror index into `0..n` without repeating the edge pixel, periodic for
/// offsets larger than the image.
pub fn reflect(i: i64, n: u32) -> u32 {
    let n = n as i64;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - m }) as u32
}

/// Top-left `(row, col)` corners of non-overlapping `size` tiles covering a
/// `width x height` image, row-major.
pub fn tile_origins(width: u32, height: u32, size: u32) -> Vec<(u32, u32)> {
    let rows = height.div_ceil(size).max(1);
    let cols = width.div_ceil(size).max(1);
    let mut out = Vec::with_capacity((rows * cols) as usize);
    for r in 0..rows {
        for c in 0..cols {
            out.push((r * size, c * size));
        }
    }
    out
}

pub fn crop_reflect_image(img: &RgbImage, row: u32, col: u32, size: u32) -> RgbImage {
    let (w, h) = img.dimensions();
    if col + size <= w && row + size <= h {
        return image::imageops::crop_imm(img, col, row, size, size).to_image();
    }
    RgbImage::from_fn(size, size, |x, y| {
        let sx = reflect(col as i64 + x as i64, w);
        let sy = reflect(row as i64 + y as i64, h);
        *img.get_pixel(sx, sy)
    })
}

pub fn crop_reflect_mask(mask: &Mask, row: u32, col: u32, size: u32) -> Mask {
    let (w, h) = mask.dims();
    Mask::from_fn(size, size, |x, y| {
        mask.get(
            reflect(col as i64 + x as i64, w),
            reflect(row as i64 + y as i64, h),
        )
    })
}

/// Pixels of the tile that lie inside the source image.
fn real_extent(w: u32, h: u32, row: u32, col: u32, size: u32) -> (u32, u32) {
    ((w - col).min(size), (h - row).min(size))
}

/// Non-overlapping segmentation tiles, keeping those whose defect pixels
/// make up at least `min_defect_frac` of their in-image area.
pub fn slice_seg_patches(
    record: &ImageRecord,
    size: u32,
    min_defect_frac: f64,
) -> Result<Vec<Patch>> {
    let defects = record.defect_masks.as_ref().ok_or_else(|| {
        Error::validation(
            "defect_masks",
            format!("{}: record has no defect masks", record.id),
        )
    })?;
    if size == 0 {
        return Err(Error::validation("size", "patch size must be positive"));
    }
    let (w, h) = record.dims();
    let any = defects.any();
    let mut out = Vec::new();
    for (row, col) in tile_origins(w, h, size) {
        let (rw, rh) = real_extent(w, h, row, col, size);
        let mut hits = 0usize;
        for y in row..row + rh {
            for x in col..col + rw {
                hits += any.get(x, y) as usize;
            }
        }
        let frac = hits as f64 / (rw * rh) as f64;
        if hits == 0 || frac < min_defect_frac {
            continue;
        }
        let masks = defects.try_map(|_, m| Ok(crop_reflect_mask(m, row, col, size)))?;
        out.push(Patch {
            pixels: crop_reflect_image(&record.pixels, row, col, size),
            labels: DefectClass::ALL.map(|c| !masks.get(c).is_empty()),
            roi_ratio: frac,
            origin: (row, col),
            source_id: record.id.clone(),
            masks: Some(masks),
            roi: None,
        });
    }
    Ok(out)
}

/// Classification tiles whose RoI ratio is strictly above `roi_thresh`.
/// Labels come from the record's defect masks when it has them; a class is
/// set when its mask touches at least one RoI pixel of the tile.
pub fn select_cls_patches(
    record: &ImageRecord,
    roi_mask: &Mask,
    size: u32,
    roi_thresh: f64,
) -> Result<Vec<Patch>> {
    let (w, h) = record.dims();
    if roi_mask.dims() != (w, h) {
        return Err(Error::Shape(format!(
            "roi mask {:?} vs image {:?}",
            roi_mask.dims(),
            (w, h)
        )));
    }
    if size == 0 {
        return Err(Error::validation("size", "patch size must be positive"));
    }
    let area = (size * size) as f64;
    let mut out = Vec::new();
    for (row, col) in tile_origins(w, h, size) {
        let (rw, rh) = real_extent(w, h, row, col, size);
        let roi = Mask::from_fn(size, size, |x, y| {
            x < rw && y < rh && roi_mask.get(col + x, row + y)
        });
        let ratio = roi.count() as f64 / area;
        if ratio <= roi_thresh {
            continue;
        }
        let labels = match &record.defect_masks {
            Some(d) => DefectClass::ALL.map(|c| {
                let m = d.get(c);
                (0..rh).any(|y| (0..rw).any(|x| roi.get(x, y) && m.get(col + x, row + y)))
            }),
            None => [false; 3],
        };
        out.push(Patch {
            pixels: crop_reflect_image(&record.pixels, row, col, size),
            labels,
            roi_ratio: ratio,
            origin: (row, col),
            source_id: record.id.clone(),
            masks: None,
            roi: Some(roi),
        });
    }
    Ok(out)
}

/// Writes `tile` (a `size x size` prediction) back over its in-image area.
pub fn stitch_mask(dst: &mut Mask, tile: &Mask, row: u32, col: u32) {
    let (w, h) = dst.dims();
    let (rw, rh) = real_extent(w, h, row, col, tile.width());
    for y in 0..rh {
        for x in 0..rw {
            dst.set(col + x, row + y, tile.get(x, y));
        }
    }
}

/// Solid-colour test image helper shared by tests in this crate.
#[cfg(test)]
pub(crate) fn flat_record(w: u32, h: u32, defects: super::MaskSet) -> ImageRecord {
    ImageRecord {
        id: "t".into(),
        pixels: RgbImage::from_pixel(w, h, image::Rgb([10, 20, 30])),
        ship_mask: None,
        boundaries: None,
        defect_masks: Some(defects),
        split: super::Split::Train,
        meta: Default::default(),
    }
}
