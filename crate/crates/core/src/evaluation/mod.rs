//! Linear probes on frozen encoders, learning curves and trial statistics.

mod curve;
mod embed;
mod linear;
mod stats;

pub use curve::{learning_curve, CurvePoint};
pub use embed::{embed_checkpoint, extract_embeddings, CheckpointEmbeddings};
pub use linear::{linear_eval, EvalReport, LinearEvalConfig, LinearProbe};
pub use stats::{aggregate_trials, t_critical, TrialSummary};
