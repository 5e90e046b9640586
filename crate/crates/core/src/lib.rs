//! Merge independently trained networks of one architecture by evolving
//! blends of their flat weight vectors, scored on held-out accuracy.
//!
//! The pipeline is: train parents ([`nn::train`]), flatten them into
//! [`Genome`]s, then either merge a pair ([`ga::run_mega`]) or reduce
//! `2^k` of them pairwise ([`merge::execute_merge_plan`]).

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod fitness;
pub mod ga;
pub mod genome;
pub mod merge;
pub mod nn;
pub mod rng;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use data::{gen_synthetic, load_csv, Dataset, Part, SyntheticKind};
pub use error::{Error, Result};
pub use fitness::AccuracyFitness;
pub use ga::{run_mega, FitnessFn, GaConfig, GenerationRecord, MegaOutcome};
pub use genome::{compatible, flatten, unflatten, Genome, ShapeManifest};
pub use merge::{build_merge_plan, execute_merge_plan, weight_average, MergePlan, MergeReport};
pub use nn::{accuracy, forward, train, LayeredParams, ModelSpec, TrainConfig};
