pub mod appearance;
pub mod box_fitting;
pub mod dataset_io;
pub mod discovery;
pub mod evaluation;
pub mod ground_removal;
pub mod kdtree;
pub mod motion_estimation;
pub mod par;
pub mod pipeline;
pub mod spatial_clustering;
pub mod synthetic;
