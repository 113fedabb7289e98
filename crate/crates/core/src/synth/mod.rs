//! Synthetic repositories with planted vulnerabilities and known truth.

mod generate;
mod plan;
pub mod repo;
pub mod table1;

pub use generate::{
    generate, read_truth, score, truth_reason, write_truth, GeneratedRepo, Score, TruthRecord,
    VersionScore, CATALOG_FILE, DATASET_FILE, PLAN_FILE, REPO_DIR, TRUTH_FILE,
};
pub use plan::{
    feature_file, official_label, shared_file, FixStyle, GroundTruthPlan, NoiseSpec, PlanConfig,
    PlannedVulnerability, PlantedError, ScheduledEvent, UnlinkedCve,
};
pub use repo::HistoryWriter;
