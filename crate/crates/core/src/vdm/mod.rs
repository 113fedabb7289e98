//! Vulnerability discovery models: fitting, goodness of fit, quality and
//! paired comparisons between datasets.

mod fit;
mod models;
mod quality;

pub use fit::{fit, fit_all, FitJob, FitRecord, MAX_ITERATIONS, MIN_EXPECTED, RESTARTS};
pub use models::{model_registry, VdmModel};
pub use quality::{
    compare_datasets, compare_quality, paired_test, quality, quality_curves, write_fits_csv,
    write_quality_csv, Comparison, PairedOutcome, QualityPoint,
};
