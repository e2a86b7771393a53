//! Live video rate control over a Rayleigh block-fading link.
//!
//! Each chunk of video has a rate-QP curve. A controller picks the chunk's
//! QP against the channel rate available for that chunk, and the transport
//! delivers the share of container packets the channel can carry. Two
//! families of controllers are provided: per-chunk real-time rate control
//! (exact oracle, or a noisy predictor with a QP safety offset) and a
//! segment-level DASH baseline with a harmonic-mean throughput estimator.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below are what the CLI uses.

pub mod channel;
pub mod config;
pub mod controllers;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod output;
pub mod rng;
pub mod scalar;
pub mod transport;
pub mod video_source;

pub use error::{Error, Result};
pub use scalar::Real;
pub use video_source::Qp;

pub type ChannelParams64 = channel::ChannelParams<f64>;
pub type ChannelTrace64 = channel::ChannelTrace<f64>;
pub type ChunkRateProfile64 = video_source::ChunkRateProfile<f64>;
pub type SyntheticSourceParams64 = video_source::SyntheticSourceParams<f64>;
pub type ControllerDecision64 = controllers::ControllerDecision<f64>;
pub type ChunkOutcome64 = transport::ChunkOutcome<f64>;
pub type TransportParams64 = transport::TransportParams<f64>;
pub type MetricsReport64 = metrics::MetricsReport<f64>;
pub type SimConfig64 = engine::SimConfig<f64>;
pub type RunResult64 = engine::RunResult<f64>;

pub type ChannelParams32 = channel::ChannelParams<f32>;
pub type ChunkRateProfile32 = video_source::ChunkRateProfile<f32>;
pub type SimConfig32 = engine::SimConfig<f32>;
pub type RunResult32 = engine::RunResult<f32>;
