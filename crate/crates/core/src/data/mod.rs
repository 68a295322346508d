//! Records, synthetic scenes, on-disk layout and patch extraction.

mod corpus;
mod manifest;
mod patches;
mod scene;
mod types;

pub use corpus::{CorpusScene, CorpusSpec};
pub use manifest::{
    build_manifest, load_record, write_dataset, write_record, Manifest, ManifestEntry,
    MANIFEST_FILE, MANIFEST_FORMAT_VERSION,
};
pub use patches::{
    crop_reflect_image, crop_reflect_mask, reflect, select_cls_patches, slice_seg_patches,
    stitch_mask, tile_origins,
};
pub use scene::{
    default_texture, generate_scene, rasterize_defects, render_scene, Background, Blob, BlobShape,
    BlobSpec, DefectSpec, HullSpec, Scene, SceneRanges, SceneSpec, SectionBands, Texture,
};
pub use types::{DefectClass, ImageRecord, LabelSource, Labels, MaskSet, Patch, RecordMeta, Split};
