//! Mask algebra, section maps, geometry and coverage.

mod augment;
mod coverage;
mod geometry;
mod mask;
mod sections;

pub use augment::{augment, AugmentParams, AugmentRanges};
pub use coverage::{coverage, suppress_ts_fouling, DefectReport, SectionCoverage};
pub use geometry::{
    crop_resize_ship, resize_image, resize_mask, CropTransform, FRAME_HEIGHT, FRAME_WIDTH,
};
pub use mask::{BoundingBox, Mask};
pub use sections::{
    boundaries_to_section_map, BoundaryPair, Section, SectionFallback, SectionMap, SECTION_PALETTE,
};
