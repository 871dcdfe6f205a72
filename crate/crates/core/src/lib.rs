//! Multi-IRS integrated sensing and communication (ISAC) joint beamforming.
//!
//! A base station serves several semi-passive reflecting surfaces (IRSs); each
//! surface relays communication signals to its users and estimates one sensing
//! target from echo snapshots captured by its own sensor array. This crate
//! provides:
//!
//! - reproducible scenario generation (geometry, steering vectors, Rician
//!   channels) in [`scenario`],
//! - closed-form Fisher information and Cramér-Rao bounds for point and
//!   extended targets, together with independent numeric oracles, in [`crb`],
//! - a complex-Hermitian semidefinite-program layer over a real conic solver
//!   in [`conic`],
//! - transmit-covariance optimization with optimal rank-one recovery in
//!   [`txbf`] and per-surface reflective beamforming in [`rxbf`],
//! - alternating optimization and benchmark schemes in [`orchestrator`],
//! - Monte-Carlo estimators demonstrating bound attainment in [`validate`].

pub mod conic;
pub mod crb;
pub mod linalg;
pub mod orchestrator;
pub mod rng;
pub mod rxbf;
pub mod scenario;
pub mod synth;
pub mod txbf;
pub mod validate;

pub use crb::{CrbReport, CrbValue, PointFim, TargetModel};
pub use orchestrator::{OrchestratorOpts, Scheme, StopReason, Trajectory, Variant};
pub use rxbf::ReflectSolution;
pub use scenario::{build_scenario, Scenario, SystemConfig, Topology};
pub use txbf::{ReceiverType, TransmitSolution};

