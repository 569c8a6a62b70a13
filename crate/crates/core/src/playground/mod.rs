//! Interactive binary segmentation on top of the mixture model: pixels are
//! memory units, hand-crafted color and position features are keys and
//! queries, and per-pixel logits are values. Annotator clicks fix values that
//! are propagated with online EM.

pub mod annotator;
pub mod curve;
pub mod dataset;
pub mod features;
pub mod image;
pub mod metrics;
pub mod session;
pub mod synth;

pub use annotator::{simulate_annotator, AnnotatorAction, ClickEvent, Polarity, DEFAULT_CLICK_RADIUS};
pub use curve::{
    evaluate_curve, perturb_bbox, run_item, suite_config, Curve, CurvePoint, SUITE_CLICK_RADIUS, SUITE_KEY_ITERS,
    SUITE_QUERY_SHIFT, SUITE_VALUE_ITERS,
};
pub use dataset::{load_dataset, DatasetItem, Manifest, ManifestEntry};
pub use features::{extract_features, FeatureConfig, FEATURE_DIM};
pub use image::{BBox, ImageTensor, Mask};
pub use metrics::iou;
pub use session::{init_session, SegmentationSession, SessionConfig, SessionPrior, SessionSnapshot};
pub use synth::{generate_dataset, write_dataset};
