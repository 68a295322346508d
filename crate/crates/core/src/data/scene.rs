//! Synthetic dry-dock hull scenes with exact annotations.

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DefectClass, ImageRecord, LabelSource, MaskSet, RecordMeta, Split};
use crate::error::{Error, Result};
use crate::raster::{
    boundaries_to_section_map, BoundaryPair, Mask, Section, SectionFallback, SectionMap,
};

/// Hull outline in fractions of the canvas. `top` may be negative and
/// `bottom` above one, in which case the hull leaves the frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HullSpec {
    pub left: f64,
    pub right: f64,
    pub top: f64,
    pub bottom: f64,
    /// Rise of the deck line at the ends, as a fraction of canvas height.
    pub sheer: f64,
    /// How far the bow slants back from deck to keel, as a fraction of
    /// canvas width.
    pub bow_rake: f64,
}

impl HullSpec {
    pub fn full_frame() -> Self {
        Self {
            left: 0.0,
            right: 1.0,
            top: 0.0,
            bottom: 1.0,
            sheer: 0.0,
            bow_rake: 0.0,
        }
    }
}

/// Section bands as fractions of the local hull height, measured down from
/// the deck line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionBands {
    pub ts_frac: f64,
    pub bt_frac: f64,
    /// Linear change of both band edges across the hull, in hull-height
    /// fractions from stern to bow.
    pub tilt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Texture {
    pub color: [u8; 3],
    /// Per-blob uniform colour offset, in 8-bit levels.
    pub jitter: f64,
    /// Per-pixel noise standard deviation, in 8-bit levels.
    pub noise: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub count: u32,
    pub min_radius: f64,
    pub max_radius: f64,
    pub texture: Texture,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlobShape {
    Ellipse {
        cx: f64,
        cy: f64,
        rx: f64,
        ry: f64,
        angle: f64,
    },
    Square {
        x0: f64,
        y0: f64,
        side: f64,
    },
}

impl BlobShape {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            BlobShape::Ellipse {
                cx,
                cy,
                rx,
                ry,
                angle,
            } => {
                let (s, c) = angle.sin_cos();
                let (dx, dy) = (x - cx, y - cy);
                let u = (c * dx + s * dy) / rx;
                let v = (-s * dx + c * dy) / ry;
                u * u + v * v <= 1.0
            }
            BlobShape::Square { x0, y0, side } => {
                x >= x0 && x < x0 + side && y >= y0 && y < y0 + side
            }
        }
    }

    /// `(x0, y0, x1, y1)` bounds in continuous pixel coordinates.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        match *self {
            BlobShape::Ellipse { cx, cy, rx, ry, .. } => {
                let r = rx.max(ry);
                (cx - r, cy - r, cx + r, cy + r)
            }
            BlobShape::Square { x0, y0, side } => (x0, y0, x0 + side, y0 + side),
        }
    }

    pub fn center(&self) -> (f64, f64) {
        let (a, b, c, d) = self.bounds();
        ((a + c) / 2.0, (b + d) / 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub class: DefectClass,
    pub shape: BlobShape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectSpec {
    /// Random blobs per class, in [`DefectClass::ALL`] order.
    pub random: [BlobSpec; 3],
    /// Blobs placed verbatim before the random ones.
    pub explicit: Vec<Blob>,
    /// Random blobs keep at least this many pixels between bounding boxes
    /// along x or y.
    pub min_gap: f64,
    /// Chance that a random blob is placed on top of an earlier blob of a
    /// different class instead of apart from it.
    pub overlap_prob: f64,
}

impl DefectSpec {
    pub fn none() -> Self {
        Self {
            random: DefectClass::ALL.map(|c| BlobSpec {
                count: 0,
                min_radius: 10.0,
                max_radius: 20.0,
                texture: default_texture(c),
            }),
            explicit: Vec::new(),
            min_gap: 0.0,
            overlap_prob: 0.0,
        }
    }

    pub fn texture(&self, c: DefectClass) -> Texture {
        self.random[c.index()].texture
    }
}

pub fn default_texture(c: DefectClass) -> Texture {
    match c {
        DefectClass::Corrosion => Texture {
            color: [196, 104, 38],
            jitter: 12.0,
            noise: 14.0,
        },
        DefectClass::Fouling => Texture {
            color: [72, 138, 58],
            jitter: 10.0,
            noise: 16.0,
        },
        DefectClass::Delamination => Texture {
            color: [196, 196, 184],
            jitter: 8.0,
            noise: 10.0,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "color", rename_all = "snake_case")]
pub enum Background {
    /// Sky above a concrete dock floor.
    SkyDock,
    Plain([u8; 3]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    pub hull: HullSpec,
    pub sections: SectionBands,
    pub defects: DefectSpec,
    /// TS, BT and VS paint; sampled from fixed palettes when absent.
    pub paint: Option<[[u8; 3]; 3]>,
    pub background: Background,
    /// Per-pixel noise standard deviation over the whole image, in 8-bit
    /// levels.
    pub noise: f64,
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width < 8 || self.height < 8 {
            return Err(Error::validation(
                "width/height",
                "canvas must be at least 8x8",
            ));
        }
        let h = &self.hull;
        let finite = [h.left, h.right, h.top, h.bottom, h.sheer, h.bow_rake]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::validation("hull", "non-finite parameter"));
        }
        if h.right <= h.left {
            return Err(Error::validation("hull.right", "must exceed hull.left"));
        }
        if h.bottom <= h.top {
            return Err(Error::validation("hull.bottom", "must exceed hull.top"));
        }
        if h.sheer < 0.0 || h.top - h.sheer >= h.bottom {
            return Err(Error::validation(
                "hull.sheer",
                "must be non-negative and below the keel",
            ));
        }
        if h.bow_rake < 0.0 || h.right - h.bow_rake <= h.left {
            return Err(Error::validation(
                "hull.bow_rake",
                "must leave a positive keel length",
            ));
        }
        let s = &self.sections;
        if !(s.ts_frac > 0.0 && s.ts_frac < 1.0) {
            return Err(Error::validation(
                "sections.ts_frac",
                format!("{} not in (0, 1)", s.ts_frac),
            ));
        }
        if !(s.bt_frac > 0.0 && s.bt_frac < 1.0) {
            return Err(Error::validation(
                "sections.bt_frac",
                format!("{} not in (0, 1)", s.bt_frac),
            ));
        }
        if s.ts_frac + s.bt_frac > 1.0 {
            return Err(Error::validation(
                "sections",
                format!("ts_frac + bt_frac = {} exceeds 1", s.ts_frac + s.bt_frac),
            ));
        }
        if !s.tilt.is_finite()
            || s.ts_frac - s.tilt.abs() / 2.0 <= 0.0
            || s.ts_frac + s.bt_frac + s.tilt.abs() / 2.0 > 1.0
        {
            return Err(Error::validation(
                "sections.tilt",
                "moves a band edge off the hull",
            ));
        }
        for (c, b) in DefectClass::ALL.iter().zip(&self.defects.random) {
            if !(b.min_radius > 0.0 && b.min_radius <= b.max_radius && b.max_radius.is_finite()) {
                return Err(Error::validation(
                    format!("defects.{}.radius", c.name()),
                    "need 0 < min <= max",
                ));
            }
        }
        for (c, b) in DefectClass::ALL.iter().zip(&self.defects.random) {
            let t = &b.texture;
            if !(t.jitter >= 0.0 && t.jitter.is_finite() && t.noise >= 0.0 && t.noise.is_finite()) {
                return Err(Error::validation(
                    format!("defects.{}.texture", c.name()),
                    "jitter and noise must be non-negative",
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.defects.overlap_prob) {
            return Err(Error::validation(
                "defects.overlap_prob",
                "must lie in [0, 1]",
            ));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::validation("noise", "must be non-negative"));
        }
        Ok(())
    }
}

/// Continuous hull geometry in pixel units.
#[derive(Debug, Clone, Copy)]
struct Geometry {
    w: f64,
    h: f64,
    hull: HullSpec,
    bands: SectionBands,
}

impl Geometry {
    fn new(spec: &SceneSpec) -> Self {
        Self {
            w: spec.width as f64,
            h: spec.height as f64,
            hull: spec.hull,
            bands: spec.sections,
        }
    }

    /// Position across the hull in [0, 1], stern to bow.
    fn u(&self, x: f64) -> f64 {
        let xn = x / self.w;
        ((xn - self.hull.left) / (self.hull.right - self.hull.left)).clamp(0.0, 1.0)
    }

    fn deck(&self, x: f64) -> f64 {
        let t = 2.0 * self.u(x) - 1.0;
        (self.hull.top - self.hull.sheer * t * t) * self.h
    }

    fn keel(&self) -> f64 {
        self.hull.bottom * self.h
    }

    /// Lowest hull point in column `x`, accounting for the raked bow.
    fn hull_floor(&self, x: f64) -> Option<f64> {
        let xn = x / self.w;
        let hl = &self.hull;
        if xn < hl.left || xn > hl.right {
            return None;
        }
        if hl.bow_rake == 0.0 || xn <= hl.right - hl.bow_rake {
            return Some(self.keel());
        }
        // Bow edge runs from (right, top) down to (right - rake, bottom).
        let t = (hl.right - xn) / hl.bow_rake;
        Some((hl.top + t * (hl.bottom - hl.top)) * self.h)
    }

    fn in_ship(&self, x: f64, y: f64) -> bool {
        match self.hull_floor(x) {
            Some(f) => y >= self.deck(x) && y <= f,
            None => false,
        }
    }

    /// Both band edges at column `x`, in pixels.
    fn edges(&self, x: f64) -> (f64, f64) {
        let d = self.deck(x);
        let span = self.keel() - d;
        let tilt = self.bands.tilt * (self.u(x) - 0.5);
        let f0 = self.bands.ts_frac + tilt;
        let f1 = self.bands.ts_frac + self.bands.bt_frac + tilt;
        (d + f0 * span, d + f1 * span)
    }

    fn section(&self, x: f64, y: f64) -> Section {
        let (e0, e1) = self.edges(x);
        if y < e0 {
            Section::TopSide
        } else if y >= e1 {
            Section::VerticalSide
        } else {
            Section::BootTop
        }
    }
}

/// A rendered scene with everything the generator knows about it.
#[derive(Debug, Clone)]
pub struct Scene {
    pub record: ImageRecord,
    pub sections: SectionMap,
    pub blobs: Vec<Blob>,
    /// Supersampled coverage percentages, rows TS/BT/VS, columns in
    /// [`DefectClass::ALL`] order; `None` for sections with no area.
    pub analytic_coverage: [[Option<f64>; 3]; 3],
}

const TS_PAINTS: [[u8; 3]; 3] = [[34, 46, 96], [92, 98, 106], [30, 92, 104]];
const BT_PAINTS: [[u8; 3]; 2] = [[26, 26, 30], [40, 38, 42]];
const VS_PAINTS: [[u8; 3]; 2] = [[150, 36, 36], [112, 30, 44]];

fn add_noise(base: [f64; 3], std: f64, normal: &Normal<f64>, rng: &mut ChaCha8Rng) -> [f64; 3] {
    if std == 0.0 {
        return base;
    }
    base.map(|v| v + std * normal.sample(rng))
}

fn to_rgb(v: [f64; 3]) -> Rgb<u8> {
    Rgb(v.map(|c| c.round().clamp(0.0, 255.0) as u8))
}

/// Renders `spec` into a record with exact ship, boundary and defect
/// annotations.
pub fn render_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let g = Geometry::new(spec);
    let (w, h) = (spec.width, spec.height);

    let ship = Mask::from_fn(w, h, |x, y| g.in_ship(x as f64 + 0.5, y as f64 + 0.5));
    let boundaries = boundaries_for(&g, &ship);
    let sections = boundaries_to_section_map(&ship, &boundaries, SectionFallback::default())?;

    let paint = spec.paint.unwrap_or_else(|| {
        [
            TS_PAINTS[rng.gen_range(0..TS_PAINTS.len())],
            BT_PAINTS[rng.gen_range(0..BT_PAINTS.len())],
            VS_PAINTS[rng.gen_range(0..VS_PAINTS.len())],
        ]
    });
    let blobs = place_blobs(spec, &g, &ship, &mut rng);
    let defects = rasterize_defects(&blobs, &ship, &sections)?;

    let mut img = RgbImage::new(w, h);
    let horizon = h as f64 * rng.gen_range(0.3..0.45);
    let shade: f64 = rng.gen_range(-0.12..0.12);
    for y in 0..h {
        for x in 0..w {
            let (xc, yc) = (x as f64 + 0.5, y as f64 + 0.5);
            let base = match sections.get(x, y) {
                Section::Background => match spec.background {
                    Background::Plain(c) => c.map(f64::from),
                    Background::SkyDock if yc < horizon => {
                        let t = yc / horizon;
                        [120.0 + 70.0 * t, 168.0 + 48.0 * t, 222.0 + 14.0 * t]
                    }
                    Background::SkyDock => [112.0, 110.0, 104.0],
                },
                s => {
                    let p = paint[s.hull_index().expect("hull")].map(f64::from);
                    // Gentle lighting change along the hull.
                    let k = 1.0 + shade * (xc / w as f64 - 0.5);
                    p.map(|c| c * k)
                }
            };
            img.put_pixel(x, y, to_rgb(base));
        }
    }

    // Defect textures; where classes overlap, each pixel shows one of them.
    let jitters: Vec<[f64; 3]> = blobs
        .iter()
        .map(|b| {
            let j = spec.defects.texture(b.class).jitter;
            [0; 3].map(|_| rng.gen_range(-j..=j))
        })
        .collect();
    for y in 0..h {
        for x in 0..w {
            let (xc, yc) = (x as f64 + 0.5, y as f64 + 0.5);
            let hits: Vec<usize> = blobs
                .iter()
                .enumerate()
                .filter(|(_, b)| defects.get(b.class).get(x, y) && b.shape.contains(xc, yc))
                .map(|(i, _)| i)
                .collect();
            if hits.is_empty() {
                continue;
            }
            let i = hits[if hits.len() > 1 {
                rng.gen_range(0..hits.len())
            } else {
                0
            }];
            let tex = spec.defects.texture(blobs[i].class);
            let base = [0, 1, 2].map(|k| tex.color[k] as f64 + jitters[i][k]);
            img.put_pixel(x, y, to_rgb(add_noise(base, tex.noise, &normal, &mut rng)));
        }
    }

    if spec.noise > 0.0 {
        for p in img.pixels_mut() {
            let v = add_noise(p.0.map(f64::from), spec.noise, &normal, &mut rng);
            *p = to_rgb(v);
        }
    }

    let analytic_coverage = analytic_coverage(&g, &blobs, w, h);
    let record = ImageRecord {
        id: format!("scene-{:016x}", spec.seed),
        pixels: img,
        ship_mask: Some(ship),
        boundaries: Some(boundaries),
        defect_masks: Some(defects),
        split: Split::Train,
        meta: RecordMeta {
            label_source: LabelSource::Human,
            scene_seed: Some(spec.seed),
            analytic_coverage: Some(analytic_coverage),
            annotations: Vec::new(),
        },
    };
    Ok(Scene {
        record,
        sections,
        blobs,
        analytic_coverage,
    })
}

/// [`render_scene`] without the extras.
pub fn generate_scene(spec: &SceneSpec) -> Result<ImageRecord> {
    render_scene(spec).map(|s| s.record)
}

fn boundaries_for(g: &Geometry, ship: &Mask) -> BoundaryPair {
    let (w, h) = ship.dims();
    let mut b = BoundaryPair::absent(w as usize);
    for x in 0..w {
        if !(0..h).any(|y| ship.get(x, y)) {
            continue;
        }
        let (e0, e1) = g.edges(x as f64 + 0.5);
        for (i, e) in [e0, e1].into_iter().enumerate() {
            b.y[i][x as usize] = (e / g.h).clamp(0.0, 1.0);
            b.valid[i][x as usize] = true;
        }
    }
    b
}

fn gap_ok(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64), gap: f64) -> bool {
    let gx = (b.0 - a.2).max(a.0 - b.2);
    let gy = (b.1 - a.3).max(a.1 - b.3);
    gx >= gap || gy >= gap
}

fn place_blobs(spec: &SceneSpec, g: &Geometry, ship: &Mask, rng: &mut ChaCha8Rng) -> Vec<Blob> {
    let mut blobs = spec.defects.explicit.clone();
    let Some(bbox) = ship.bounding_box() else {
        return blobs;
    };
    let mut order: Vec<DefectClass> = Vec::new();
    for c in DefectClass::ALL {
        for _ in 0..spec.defects.random[c.index()].count {
            order.push(c);
        }
    }
    let placed_before = blobs.len();
    for c in order {
        let bs = spec.defects.random[c.index()];
        let overlap = blobs.len() > placed_before && rng.gen_bool(spec.defects.overlap_prob);
        for _ in 0..200 {
            let r = rng.gen_range(bs.min_radius..=bs.max_radius);
            let (cx, cy) = if overlap {
                let anchor = blobs[rng.gen_range(placed_before..blobs.len())];
                if anchor.class == c {
                    continue;
                }
                let (ax, ay) = anchor.shape.center();
                let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let d = r * rng.gen_range(0.3..0.6);
                (ax + d * a.cos(), ay + d * a.sin())
            } else {
                (
                    rng.gen_range(bbox.x0 as f64..bbox.x1 as f64),
                    rng.gen_range(bbox.y0 as f64..bbox.y1 as f64),
                )
            };
            let shape = if rng.gen_bool(0.7) {
                let aspect = rng.gen_range(0.6..1.0);
                BlobShape::Ellipse {
                    cx,
                    cy,
                    rx: r,
                    ry: r * aspect,
                    angle: rng.gen_range(0.0..std::f64::consts::PI),
                }
            } else {
                let side = 1.6 * r;
                BlobShape::Square {
                    x0: cx - side / 2.0,
                    y0: cy - side / 2.0,
                    side,
                }
            };
            if !g.in_ship(cx, cy) {
                continue;
            }
            // Keep most of the blob on the hull.
            let (x0, y0, x1, y1) = shape.bounds();
            let corners_in = [(x0, y0), (x1, y0), (x0, y1), (x1, y1)]
                .iter()
                .filter(|&&(x, y)| g.in_ship(x, y))
                .count();
            if corners_in < 3 {
                continue;
            }
            if c == DefectClass::Fouling && g.section(cx, y0) == Section::TopSide {
                continue;
            }
            if !overlap
                && !blobs[placed_before..]
                    .iter()
                    .all(|b| gap_ok(b.shape.bounds(), shape.bounds(), spec.defects.min_gap))
            {
                continue;
            }
            blobs.push(Blob { class: c, shape });
            break;
        }
    }
    blobs
}

/// Pixel-centre rasterization of `blobs`, clipped to the ship, with fouling
/// kept off the top side.
pub fn rasterize_defects(blobs: &[Blob], ship: &Mask, sections: &SectionMap) -> Result<MaskSet> {
    let (w, h) = ship.dims();
    let mut set = MaskSet::empty(w, h);
    for b in blobs {
        let (x0, y0, x1, y1) = b.shape.bounds();
        let xs = (x0.floor().max(0.0) as u32)..(x1.ceil().min(w as f64).max(0.0) as u32);
        let ys = (y0.floor().max(0.0) as u32)..(y1.ceil().min(h as f64).max(0.0) as u32);
        let m = set.get_mut(b.class);
        for y in ys.clone() {
            for x in xs.clone() {
                if !ship.get(x, y) || !b.shape.contains(x as f64 + 0.5, y as f64 + 0.5) {
                    continue;
                }
                if b.class == DefectClass::Fouling && sections.get(x, y) == Section::TopSide {
                    continue;
                }
                m.set(x, y, true);
            }
        }
    }
    Ok(set)
}

const SUB: usize = 4;

fn analytic_coverage(g: &Geometry, blobs: &[Blob], w: u32, h: u32) -> [[Option<f64>; 3]; 3] {
    let hf = h as f64;
    // Section areas: exact vertical extent, x supersampled.
    let mut area = [0f64; 3];
    for j in 0..w {
        for k in 0..SUB {
            let x = j as f64 + (k as f64 + 0.5) / SUB as f64;
            let Some(floor) = g.hull_floor(x) else {
                continue;
            };
            let lo = g.deck(x).max(0.0);
            let hi = floor.min(hf);
            if hi <= lo {
                continue;
            }
            let (e0, e1) = g.edges(x);
            let spans = [(lo, e0.min(hi)), (e0.max(lo), e1.min(hi)), (e1.max(lo), hi)];
            for (s, (a, b)) in spans.iter().enumerate() {
                area[s] += (b - a).max(0.0) / SUB as f64;
            }
        }
    }
    let mut hits = [[0f64; 3]; 3];
    let sub_w = 1.0 / (SUB * SUB) as f64;
    for c in DefectClass::ALL {
        let mine: Vec<&Blob> = blobs.iter().filter(|b| b.class == c).collect();
        if mine.is_empty() {
            continue;
        }
        let mut visit = vec![false; (w * h) as usize];
        for b in &mine {
            let (x0, y0, x1, y1) = b.shape.bounds();
            let xs = (x0.floor().max(0.0) as u32)..(x1.ceil().min(w as f64).max(0.0) as u32);
            for y in (y0.floor().max(0.0) as u32)..(y1.ceil().min(hf).max(0.0) as u32) {
                for x in xs.clone() {
                    visit[(y * w + x) as usize] = true;
                }
            }
        }
        for (i, _) in visit.iter().enumerate().filter(|(_, v)| **v) {
            let (px, py) = ((i as u32 % w) as f64, (i as u32 / w) as f64);
            for sy in 0..SUB {
                for sx in 0..SUB {
                    let x = px + (sx as f64 + 0.5) / SUB as f64;
                    let y = py + (sy as f64 + 0.5) / SUB as f64;
                    if !g.in_ship(x, y) || !mine.iter().any(|b| b.shape.contains(x, y)) {
                        continue;
                    }
                    let s = g.section(x, y);
                    if c == DefectClass::Fouling && s == Section::TopSide {
                        continue;
                    }
                    hits[s.hull_index().expect("hull")][c.index()] += sub_w;
                }
            }
        }
    }
    let mut out = [[None; 3]; 3];
    for s in 0..3 {
        if area[s] > 1e-9 {
            out[s] = [0, 1, 2].map(|c| Some(100.0 * hits[s][c] / area[s]));
        }
    }
    out
}

/// Ranges from which corpus scenes are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneRanges {
    pub width: u32,
    pub height: u32,
    pub left: (f64, f64),
    pub right: (f64, f64),
    pub top: (f64, f64),
    pub bottom: (f64, f64),
    pub sheer: (f64, f64),
    pub bow_rake: (f64, f64),
    pub ts_frac: (f64, f64),
    pub bt_frac: (f64, f64),
    pub tilt: (f64, f64),
    /// Inclusive blob count ranges in [`DefectClass::ALL`] order.
    pub blob_counts: [(u32, u32); 3],
    pub radius: (f64, f64),
    pub min_gap: f64,
    pub overlap_prob: f64,
    pub noise: (f64, f64),
    /// Defect appearance in [`DefectClass::ALL`] order.
    pub textures: [Texture; 3],
}

impl Default for SceneRanges {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            left: (0.03, 0.12),
            right: (0.86, 0.97),
            top: (0.16, 0.32),
            bottom: (0.82, 0.95),
            sheer: (0.0, 0.06),
            bow_rake: (0.0, 0.1),
            ts_frac: (0.26, 0.38),
            bt_frac: (0.24, 0.34),
            tilt: (-0.08, 0.08),
            blob_counts: [(1, 4), (1, 3), (1, 3)],
            radius: (14.0, 30.0),
            min_gap: 64.0,
            overlap_prob: 0.0,
            noise: (2.0, 6.0),
            textures: DefectClass::ALL.map(default_texture),
        }
    }
}

impl SceneRanges {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, seed: u64) -> SceneSpec {
        let mut u = |r: (f64, f64)| {
            if r.1 > r.0 {
                rng.gen_range(r.0..r.1)
            } else {
                r.0
            }
        };
        let hull = HullSpec {
            left: u(self.left),
            right: u(self.right),
            top: u(self.top),
            bottom: u(self.bottom),
            sheer: u(self.sheer),
            bow_rake: u(self.bow_rake),
        };
        let sections = SectionBands {
            ts_frac: u(self.ts_frac),
            bt_frac: u(self.bt_frac),
            tilt: u(self.tilt),
        };
        let noise = u(self.noise);
        let mut defects = DefectSpec::none();
        for c in DefectClass::ALL {
            let (lo, hi) = self.blob_counts[c.index()];
            let b = &mut defects.random[c.index()];
            b.count = rng.gen_range(lo..=hi.max(lo));
            b.min_radius = self.radius.0;
            b.max_radius = self.radius.1;
            b.texture = self.textures[c.index()];
        }
        defects.min_gap = self.min_gap;
        defects.overlap_prob = self.overlap_prob;
        SceneSpec {
            width: self.width,
            height: self.height,
            hull,
            sections,
            defects,
            paint: None,
            background: Background::SkyDock,
            noise,
            seed,
        }
    }
}
