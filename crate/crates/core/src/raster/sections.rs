//! Hull sections and the two boundary curves that separate them.

use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Mask;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Background = 0,
    TopSide = 1,
    BootTop = 2,
    VerticalSide = 3,
}

impl Section {
    pub const HULL: [Section; 3] = [Section::TopSide, Section::BootTop, Section::VerticalSide];

    pub fn from_u8(v: u8) -> Option<Section> {
        match v {
            0 => Some(Section::Background),
            1 => Some(Section::TopSide),
            2 => Some(Section::BootTop),
            3 => Some(Section::VerticalSide),
            _ => None,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Section::Background => "BG",
            Section::TopSide => "TS",
            Section::BootTop => "BT",
            Section::VerticalSide => "VS",
        }
    }

    /// Position within [`Section::HULL`].
    pub fn hull_index(self) -> Option<usize> {
        match self {
            Section::Background => None,
            s => Some(s as usize - 1),
        }
    }
}

/// Palette used for section-map PNGs, indexed by `Section as u8`.
pub const SECTION_PALETTE: [[u8; 3]; 4] = [[0, 0, 0], [220, 30, 30], [240, 220, 40], [40, 180, 60]];

/// Two per-column curves in normalized image height (0 = top edge, 1 =
/// bottom edge). Row 0 separates top side from boot top, row 1 boot top from
/// vertical side. `valid` marks the columns where each curve exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPair {
    pub y: [Vec<f64>; 2],
    pub valid: [Vec<bool>; 2],
}

impl BoundaryPair {
    pub fn new(y: [Vec<f64>; 2], valid: [Vec<bool>; 2]) -> Result<Self> {
        let b = Self { y, valid };
        b.validate()?;
        Ok(b)
    }

    /// All columns invalid.
    pub fn absent(width: usize) -> Self {
        Self {
            y: [vec![0.0; width], vec![0.0; width]],
            valid: [vec![false; width], vec![false; width]],
        }
    }

    pub fn width(&self) -> usize {
        self.y[0].len()
    }

    pub fn is_present(&self, i: usize) -> bool {
        self.valid[i].iter().any(|&v| v)
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.y[0].len();
        if self.y[1].len() != w || self.valid[0].len() != w || self.valid[1].len() != w {
            return Err(Error::Shape("boundary rows differ in length".into()));
        }
        for i in 0..2 {
            for j in 0..w {
                if self.valid[i][j]
                    && !(self.y[i][j].is_finite() && (0.0..=1.0).contains(&self.y[i][j]))
                {
                    return Err(Error::validation(
                        "boundaries",
                        format!("curve {i} column {j} holds {} outside [0, 1]", self.y[i][j]),
                    ));
                }
            }
        }
        for j in 0..w {
            if self.valid[0][j] && self.valid[1][j] && self.y[0][j] > self.y[1][j] + 1e-9 {
                return Err(Error::validation(
                    "boundaries",
                    format!(
                        "column {j}: upper curve {} lies below lower curve {}",
                        self.y[0][j], self.y[1][j]
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Columns of curve `i` with invalid entries replaced by the nearest valid
    /// column (left wins ties). `None` when the curve is absent.
    pub fn filled(&self, i: usize) -> Option<Vec<f64>> {
        let w = self.width();
        let valid: Vec<usize> = (0..w).filter(|&j| self.valid[i][j]).collect();
        if valid.is_empty() {
            return None;
        }
        let mut out = vec![0.0; w];
        let mut k = 0;
        for (j, o) in out.iter_mut().enumerate() {
            while k + 1 < valid.len() && valid[k + 1] <= j {
                k += 1;
            }
            let left = valid[k];
            let pick = if left >= j || k + 1 >= valid.len() {
                left
            } else {
                let right = valid[k + 1];
                if j - left <= right - j {
                    left
                } else {
                    right
                }
            };
            *o = self.y[i][pick];
        }
        Some(out)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let b: BoundaryPair = serde_json::from_slice(&std::fs::read(path)?)?;
        b.validate()?;
        Ok(b)
    }
}

/// Per-pixel section labels.
#[derive(Clone, PartialEq, Eq)]
pub struct SectionMap {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl std::fmt::Debug for SectionMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "SectionMap({}x{}, areas {:?})",
            self.width,
            self.height,
            self.areas()
        )
    }
}

impl SectionMap {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0; (width * height) as usize],
        }
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

    pub fn get(&self, x: u32, y: u32) -> Section {
        Section::from_u8(self.data[(y * self.width + x) as usize]).expect("valid label")
    }

    pub fn set(&mut self, x: u32, y: u32, s: Section) {
        self.data[(y * self.width + x) as usize] = s as u8;
    }

    pub fn mask(&self, s: Section) -> Mask {
        Mask::from_vec(
            self.width,
            self.height,
            self.data.iter().map(|&v| (v == s as u8) as u8).collect(),
        )
        .expect("binary by construction")
    }

    /// Pixel counts of TS, BT and VS.
    pub fn areas(&self) -> [usize; 3] {
        let mut a = [0; 3];
        for &v in &self.data {
            if v > 0 {
                a[v as usize - 1] += 1;
            }
        }
        a
    }

    pub fn from_labels(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if data.len() != (width * height) as usize {
            return Err(Error::Shape("section label count".into()));
        }
        if data.iter().any(|&v| v > 3) {
            return Err(Error::validation("section map", "label outside 0..=3"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Writes an indexed-colour PNG using [`SECTION_PALETTE`].
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut enc = png::Encoder::new(BufWriter::new(file), self.width, self.height);
        enc.set_color(png::ColorType::Indexed);
        enc.set_depth(png::BitDepth::Eight);
        enc.set_palette(SECTION_PALETTE.concat());
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::Encode(e.to_string()))?;
        writer
            .write_image_data(&self.data)
            .map_err(|e| Error::Encode(e.to_string()))?;
        Ok(())
    }

    /// Reads back a PNG written by [`SectionMap::save_png`]; palette indices
    /// are taken as labels.
    pub fn load_png(path: &Path) -> Result<Self> {
        let decoder = png::Decoder::new(std::io::BufReader::new(std::fs::File::open(path)?));
        let mut reader = decoder
            .read_info()
            .map_err(|e| Error::Encode(e.to_string()))?;
        let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
        let info = reader
            .next_frame(&mut buf)
            .map_err(|e| Error::Encode(e.to_string()))?;
        if info.color_type != png::ColorType::Indexed || info.bit_depth != png::BitDepth::Eight {
            return Err(Error::validation(
                "section map png",
                "expected 8-bit indexed colour",
            ));
        }
        buf.truncate(info.buffer_size());
        Self::from_labels(info.width, info.height, buf)
    }
}

/// How pixels are labelled when no boundary exists at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionFallback {
    pub no_boundaries: Section,
}

impl Default for SectionFallback {
    fn default() -> Self {
        Self {
            no_boundaries: Section::VerticalSide,
        }
    }
}

/// Labels ship pixels by comparing each pixel-centre row against the two
/// curves of its column.
///
/// Invalid columns take the nearest valid value of the same curve. A curve
/// that is absent everywhere merges the two sections it would separate into
/// boot top; with neither curve present the whole ship gets
/// `fallback.no_boundaries`. The lower curve is clamped to lie on or below
/// the upper one.
pub fn boundaries_to_section_map(
    ship: &Mask,
    b: &BoundaryPair,
    fallback: SectionFallback,
) -> Result<SectionMap> {
    let (w, h) = ship.dims();
    if b.width() != w as usize {
        return Err(Error::Shape(format!(
            "boundaries have {} columns, mask {w}",
            b.width()
        )));
    }
    let upper = b.filled(0);
    let lower = b.filled(1);
    let mut map = SectionMap::new(w, h);
    for x in 0..w {
        let j = x as usize;
        let (u, l) = match (&upper, &lower) {
            (Some(u), Some(l)) => (Some(u[j]), Some(l[j].max(u[j]))),
            (u, l) => (u.as_ref().map(|u| u[j]), l.as_ref().map(|l| l[j])),
        };
        for y in 0..h {
            if !ship.get(x, y) {
                continue;
            }
            let yc = (y as f64 + 0.5) / h as f64;
            let s = match (u, l) {
                (None, None) => fallback.no_boundaries,
                (Some(u), _) if yc < u => Section::TopSide,
                (_, Some(l)) if yc >= l => Section::VerticalSide,
                _ => Section::BootTop,
            };
            map.set(x, y, s);
        }
    }
    Ok(map)
}
