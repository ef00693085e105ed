//! Detection metrics, human-study aggregation and template-matching baselines.

pub mod baseline;
pub mod human;
pub mod metrics;
pub mod template;

pub use baseline::{baseline_detections, BaselineMethod, BaselineParams};
pub use human::{human_split_metrics, human_study_aggregate, HumanMetrics, HumanSplitCounts};
pub use metrics::{
    average_precision, average_recall, evaluate, iou, mean_ap, nms, Detection, EvalError, EvalReport, PredictionLine,
};
pub use template::{ncc_match, rasterize_layout, ssd_match, Mask, TemplateError, TemplateMatch};
