//! Driver drowsiness detection from smartwatch telemetry.
//!
//! The crate is organised along the processing chain:
//!
//! - [`sensor`]: reading taxonomy, validation, replay files, synthetic sessions
//! - [`driving`]: speed/cadence state machine deciding when the wearer drives
//! - [`hrv`]: inter-beat interval cleaning, HRV features, baselines
//! - [`engine`]: drowsiness score and the hysteretic alert loop
//! - [`pipeline`]: wires the above into a single session run
//! - [`store`]: master key, wrapped keysets, encrypted preferences and records
//! - [`link`]: framed, consent-gated watch to phone protocol
//!
//! Analytics and scoring are generic over [`num::Scalar`] (`f32` or `f64`);
//! the aliases below fix the scalar to `f64`.

pub mod driving;
pub mod engine;
pub mod hrv;
pub mod link;
pub mod num;
pub mod pipeline;
pub mod sensor;
pub mod store;

pub use num::Scalar;

/// Scalar used by the pipeline and the command-line tool.
pub type Real = f64;

pub type Features = hrv::HrvFeatures<Real>;
pub type RestingBaseline = hrv::Baseline<Real>;
pub type Engine = engine::DrowsinessEngine<Real>;
pub type EngineSettings = engine::EngineConfig<Real>;
pub type Score = engine::DrowsinessScore<Real>;
pub type Alert = engine::AlertEvent<Real>;
pub type SessionPipeline = pipeline::Pipeline<Real>;
pub type SessionConfig = pipeline::PipelineConfig<Real>;
pub type SessionOutput = pipeline::RunOutput<Real>;
