//! Learned key-frame sampling and query generation for long-video question answering,
//! against a synthetic environment with a stochastic answer oracle.

pub mod error;
pub mod gradsuite;
pub mod harness;
pub mod neuralcore;
pub mod query_policy;
pub mod rl_core;
pub mod rng;
pub mod usampler;
pub mod videoqa_env;

pub use error::{Error, Result};
pub use query_policy::{PolicyParams, QuerySet};
pub use rl_core::RewardBreakdown;
pub use usampler::{DrawOptions, FrameDraw, FrameScores, SamplerParams};
pub use videoqa_env::{EnvConfig, EpisodeSpec, Event, OracleConfig, SimilarityMatrix};
