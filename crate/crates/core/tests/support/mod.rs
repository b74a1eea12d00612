//! Independent reference implementations used by the integration and
//! acceptance tests. Nothing here calls into the code paths it checks.
#![allow(dead_code)]

pub mod eval_instances;
pub mod eval_oracle;
pub mod fixtures;
pub mod hdbscan_oracle;
pub mod kmeans_oracle;
pub mod rect_oracle;
pub mod se2_oracle;
