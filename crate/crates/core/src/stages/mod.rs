//! Training and inference for the four pipeline stages.

pub mod classify;
pub mod common;
pub mod defects;
pub mod sections;
pub mod ship;

pub use classify::{
    assemble_defect_map, class_pixel_counts, dominant_class, train_classifier, train_multiclass,
    truth_cls_patches, ClsTrainConfig, DefectClassifier, MultiClassifier, PatchPrediction,
};
pub use common::{Schedule, TrainLog};
pub use defects::{
    fuse, fuse_intersection, fuse_labels, fused_records, pseudo_label, train_defect_segmenter,
    DefectSegmentation, DefectSegmenter, DefectTrainConfig, FusionMode, Role,
};
pub use sections::{
    augment_section_dataset, crop_section_map, prepare_section_sample, source_section_map,
    train_section_model, SectionModel, SectionSample, SectionTrainConfig,
};
pub use ship::{keep_prominent, train_ship_segmenter, ShipSegmenter, ShipTrainConfig};
