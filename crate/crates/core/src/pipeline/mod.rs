//! Experiment orchestration: teachers with and without smoothing, frozen-teacher
//! distillation, evaluation, and seed matrices.

pub mod config;
pub mod experiment;
pub mod manifest;
pub mod matrix;

use sha2::{Digest, Sha256};

pub use config::{
    AnalysisConfig, DataConfig, ExperimentConfig, MatrixConfig, NetConfig, Split, TeacherConfig,
};
pub use experiment::{
    accuracy, distill_objective_value, distill_student, distill_student_logged, evaluate,
    prepare_data, probabilities, teacher_mean_entropy, train_teacher, train_teacher_logged,
    DistillObjective, EpochRecord, ExperimentLog, GeometrySummary, PreparedData, TeacherAnalysis,
};
pub use manifest::{write_manifest, Manifest};
pub use matrix::{report, run_matrix, summarize, CellRecord, CellRole, MatrixOutcome, MatrixSummary};

/// Independent sub-seed for one purpose (`tag`) of a run seeded with `base`.
pub fn derive_seed(base: u64, tag: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(tag.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}
