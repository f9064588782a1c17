//! Score aggregation, correlation analysis, alignment distances and margin grid search.

mod distances;
mod grid;
mod scores;
mod stats;

pub use distances::{checkpoint_distances, distance_report, recon_proxy, DistanceReport};
pub use grid::{
    cell_seed, grid_search, pcc_report, write_pcc_csv, GridResult, GridRow, PccRow, SeedPolicy, Table, GRID_COLUMNS,
    PCC_TARGETS,
};
pub use scores::{
    overall_score, read_metric_records, round3, score_generation, score_reconstruction, score_record,
    score_understanding, write_scores_csv, MeanKind, MetricRecord, TaskScores,
};
pub use stats::pearson;
