//! Simulation and verification toolkit for particle systems with
//! inverse-distance repulsion along the roots of A/B/D root systems.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analytics;
pub mod besq;
pub mod drift;
pub mod engine;
pub mod models;
pub mod roots;
pub mod runner;
pub mod seeding;
pub mod sympoly;
pub mod verify;

pub use analytics::{
    CollisionEvent, DimensionEstimate, EstimateStatus, PathAnalysis, PathAnalyzer, ScaleWindow, ScalingRow,
};
pub use besq::BesqSpec;
pub use engine::{EngineError, PathStats, StepPolicy, TrajectoryRecord, WallMode};
pub use models::{CoefficientModel, DimensionBounds, Domain, ModelError, PresetSpec};
pub use roots::{Family, RootError, RootSystem, Weights};
pub use runner::{RunConfig, RunError, RunManifest, RunSummary};
pub use verify::{VerifyOptions, VerifyReport, VerifyScope};
