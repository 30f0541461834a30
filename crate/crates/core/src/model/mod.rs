//! Gradient-boosted tree classifiers for traffic roles.

mod dataset;
mod eval;
mod gbdt;
pub mod tree;

pub use dataset::{
    binarize, binarize_target, build_dataset, default_threshold, Dataset, FeatureGroup,
    TopicEncoding, RESISTANCE_THRESHOLD, SEARCHSHARE_THRESHOLD,
};
pub use eval::{
    balance, cross_validate, roc_auc, stratified_folds, write_reports_csv, CvConfig, EvalReport,
};
pub use gbdt::{sigmoid, train_gbdt, GbdtConfig, GbdtModel, MODEL_MAGIC, MODEL_VERSION};
