//! Subjects, cohorts, node features, synthetic data and file I/O.

mod cohort;
mod io;
mod matrix;
mod synthetic;

pub use cohort::{split_cohort, Cohort, RoiAtlas, Stage, Subject, Task};
pub use io::{load_cohort, matrix_to_csv, save_cohort, MANIFEST_NAME};
pub use matrix::{build_node_features, normalize_adjacency, ConnectivityMatrix, NodeFeatureMatrix};
pub use synthetic::{
    empirical_group_mean, generate_synthetic_cohort, stage_template, PlantedEdges,
};
