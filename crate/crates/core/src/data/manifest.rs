//! On-disk dataset layout:
//!
//! ```text
//! <root>/manifest.json
//! <root>/<split>/<id>/image.png
//!                     ship.png  corrosion.png  delamination.png  fouling.png
//!                     boundaries.json  meta.json
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DefectClass, ImageRecord, MaskSet, RecordMeta, Split};
use crate::error::{Error, Result};
use crate::raster::{BoundaryPair, Mask};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

const IMAGE: &str = "image.png";
const SHIP: &str = "ship.png";
const BOUNDARIES: &str = "boundaries.json";
const META: &str = "meta.json";

fn defect_file(c: DefectClass) -> String {
    format!("{}.png", c.name())
}

/// Paths are relative to the dataset root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub split: Split,
    pub image: PathBuf,
    pub ship: Option<PathBuf>,
    pub boundaries: Option<PathBuf>,
    /// Corrosion, fouling, delamination masks; all three or none.
    pub defects: Option<[PathBuf; 3]>,
    pub meta: Option<PathBuf>,
}

impl ManifestEntry {
    pub fn has_ship(&self) -> bool {
        self.ship.is_some()
    }

    pub fn has_boundaries(&self) -> bool {
        self.boundaries.is_some()
    }

    pub fn has_defects(&self) -> bool {
        self.defects.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub entries: Vec<ManifestEntry>,
}

impl Default for Manifest {
    fn default() -> Self {
        Self {
            format_version: MANIFEST_FORMAT_VERSION,
            entries: Vec::new(),
        }
    }
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        fs::write(root.join(MANIFEST_FILE), serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(root: &Path) -> Result<Self> {
        let m: Manifest = serde_json::from_slice(&fs::read(root.join(MANIFEST_FILE))?)?;
        if m.format_version != MANIFEST_FORMAT_VERSION {
            return Err(Error::validation(
                "format_version",
                format!(
                    "manifest version {} (expected {MANIFEST_FORMAT_VERSION})",
                    m.format_version
                ),
            ));
        }
        Ok(m)
    }

    /// Reads every record of `split`.
    pub fn load_split(&self, root: &Path, split: Split) -> Result<Vec<ImageRecord>> {
        self.split(split).map(|e| load_record(root, e)).collect()
    }
}

fn sorted_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

/// Indexes every record under `root`. A file listed in a record's
/// `meta.json`, or one of a partial set of defect masks, that does not
/// exist is an error naming the record.
pub fn build_manifest(root: &Path) -> Result<Manifest> {
    let mut manifest = Manifest::default();
    if !root.is_dir() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} is not a directory", root.display()),
        )));
    }
    let mut seen = std::collections::BTreeSet::new();
    for split in Split::ALL {
        let split_dir = root.join(split.as_str());
        if !split_dir.is_dir() {
            continue;
        }
        for dir in sorted_dirs(&split_dir)? {
            let id = dir
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default()
                .to_string();
            if !seen.insert(id.clone()) {
                return Err(Error::validation(
                    "id",
                    format!("duplicate record id `{id}`"),
                ));
            }
            let rel = PathBuf::from(split.as_str()).join(&id);
            let missing = |file: &str| Error::MissingAnnotation {
                id: id.clone(),
                file: rel.join(file),
            };
            let exists = |file: &str| dir.join(file).is_file();
            if !exists(IMAGE) {
                return Err(missing(IMAGE));
            }
            let mut meta_path = None;
            if exists(META) {
                let meta: RecordMeta = serde_json::from_slice(&fs::read(dir.join(META))?)?;
                for a in &meta.annotations {
                    if !exists(a) {
                        return Err(missing(a));
                    }
                }
                meta_path = Some(rel.join(META));
            }
            let defect_files = DefectClass::ALL.map(defect_file);
            let present = defect_files.iter().filter(|f| exists(f)).count();
            let defects = match present {
                0 => None,
                3 => Some(defect_files.clone().map(|f| rel.join(f))),
                _ => {
                    let f = defect_files
                        .iter()
                        .find(|f| !exists(f))
                        .expect("some missing");
                    return Err(missing(f));
                }
            };
            manifest.entries.push(ManifestEntry {
                id: id.clone(),
                split,
                image: rel.join(IMAGE),
                ship: exists(SHIP).then(|| rel.join(SHIP)),
                boundaries: exists(BOUNDARIES).then(|| rel.join(BOUNDARIES)),
                defects,
                meta: meta_path,
            });
        }
    }
    Ok(manifest)
}

pub fn load_record(root: &Path, e: &ManifestEntry) -> Result<ImageRecord> {
    let pixels = image::open(root.join(&e.image))?.to_rgb8();
    let ship_mask = e
        .ship
        .as_ref()
        .map(|p| Mask::load_png(&root.join(p)))
        .transpose()?;
    let boundaries = e
        .boundaries
        .as_ref()
        .map(|p| BoundaryPair::load_json(&root.join(p)))
        .transpose()?;
    let defect_masks = match &e.defects {
        Some(paths) => {
            let [a, b, c] = paths.clone().map(|p| Mask::load_png(&root.join(p)));
            Some(MaskSet::new([a?, b?, c?])?)
        }
        None => None,
    };
    let meta = match &e.meta {
        Some(p) => serde_json::from_slice(&fs::read(root.join(p))?)?,
        None => RecordMeta::default(),
    };
    let rec = ImageRecord {
        id: e.id.clone(),
        pixels,
        ship_mask,
        boundaries,
        defect_masks,
        split: e.split,
        meta,
    };
    rec.validate()?;
    Ok(rec)
}

/// Writes `rec` into its split directory and returns its manifest entry.
pub fn write_record(root: &Path, rec: &ImageRecord) -> Result<ManifestEntry> {
    rec.validate()?;
    let rel = PathBuf::from(rec.split.as_str()).join(&rec.id);
    let dir = root.join(&rel);
    fs::create_dir_all(&dir)?;
    rec.pixels.save(dir.join(IMAGE))?;
    let mut annotations = Vec::new();
    if let Some(s) = &rec.ship_mask {
        s.save_png(&dir.join(SHIP))?;
        annotations.push(SHIP.to_string());
    }
    if let Some(b) = &rec.boundaries {
        b.save_json(&dir.join(BOUNDARIES))?;
        annotations.push(BOUNDARIES.to_string());
    }
    if let Some(d) = &rec.defect_masks {
        for (c, m) in d.iter() {
            m.save_png(&dir.join(defect_file(c)))?;
            annotations.push(defect_file(c));
        }
    }
    let meta = RecordMeta {
        annotations,
        ..rec.meta.clone()
    };
    fs::write(dir.join(META), serde_json::to_vec_pretty(&meta)?)?;
    Ok(ManifestEntry {
        id: rec.id.clone(),
        split: rec.split,
        image: rel.join(IMAGE),
        ship: rec.ship_mask.as_ref().map(|_| rel.join(SHIP)),
        boundaries: rec.boundaries.as_ref().map(|_| rel.join(BOUNDARIES)),
        defects: rec
            .defect_masks
            .as_ref()
            .map(|_| DefectClass::ALL.map(|c| rel.join(defect_file(c)))),
        meta: Some(rel.join(META)),
    })
}

/// Writes all records and the manifest.
pub fn write_dataset(root: &Path, records: &[ImageRecord]) -> Result<Manifest> {
    fs::create_dir_all(root)?;
    let mut m = Manifest::default();
    for r in records {
        m.entries.push(write_record(root, r)?);
    }
    m.save(root)?;
    Ok(m)
}
