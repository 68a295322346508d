//! Metrics, IoU suites, report aggregation, the end-to-end pipeline and
//! experiment harnesses.

pub mod experiments;
pub mod iou;
pub mod metrics;
pub mod pipeline;
pub mod report;

pub use iou::{mask_set_iou, mean_over_images, section_iou, ClassIou, Overlap};
pub use metrics::{confusion, mean_defined, ConfusionMatrix, Metric, Metrics};
pub use pipeline::{
    defect_overlay, section_overlay, write_output, Pipeline, PipelineConfig, PipelineOptions,
    PipelineOutput,
};
pub use report::{
    aggregate_reports, read_json, write_json, write_reports_csv, write_table_csv, SectionTable,
};
