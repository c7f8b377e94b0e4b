//! Core library for consequence-based validation of candidate math
//! solutions: the shared data model, prompt templates, answer and score
//! parsing, ranking metrics, statistical analyses, and neighborhood
//! curation filters.

pub mod curation;
pub mod metrics;
pub mod model;
pub mod scoring;
pub mod stats;
pub mod template;
pub mod verdict;

pub use model::{
    Candidate, CandidatePool, Label, Method, NeighborhoodCount, NeighborhoodQuestion, Problem,
    Rollout, ScoreRecord, Source,
};
