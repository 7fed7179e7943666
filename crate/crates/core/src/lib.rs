//! Training-free detection of spliced ("partially fake") speech from the
//! trajectory of frozen speech-model frame embeddings.
//!
//! The pipeline is:
//!
//! 1. [`embedding_io`] loads a frame-embedding matrix from a TEF file.
//! 2. [`dynamics`] projects every frame onto the unit hypersphere and derives
//!    the chord-distance sequence between consecutive frames (F1), its forward
//!    difference (F2), and the turning angles between consecutive
//!    displacement vectors.
//! 3. [`statistics`] summarizes those sequences into named scalars.
//! 4. [`calibration`] fuses a few statistics linearly, choosing weights by
//!    exhaustive grid search on a labeled development set, and fixes the score
//!    orientation and decision threshold.
//! 5. [`metrics`] evaluates EER, AUC and fixed-threshold error rates.
//!
//! [`synth`] generates seeded synthetic trajectories with injected splices so
//! the whole chain can be exercised without any audio or neural model, and
//! [`pipeline`] composes the stages at corpus level (used by the CLI).
//!
//! Corpus-level work is spread over a rayon pool when the `parallel` feature
//! is enabled (the default); see [`exec`].

pub mod calibration;
pub mod dynamics;
pub mod embedding_io;
pub mod error;
pub mod exec;
pub mod metrics;
pub mod pipeline;
pub mod statistics;
pub mod synth;

pub use calibration::{CalibrationProfile, GridConfig, GridSearchOutcome};
pub use dynamics::{DynamicsBundle, UnitTrajectory};
pub use embedding_io::{EmbeddingSequence, Label, ManifestEntry};
pub use error::{Result, TraceError};
pub use exec::Executor;
pub use metrics::{ClassLabel, EvalReport, LabeledScores};
pub use statistics::{StatisticId, StatisticVector};
