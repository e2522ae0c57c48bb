//! Adjoint Schrödinger Bridge Sampler: energies, networks, base processes,
//! training loops and sample-quality metrics.

pub mod baseproc;
pub mod checkpoint;
pub mod diffnet;
pub mod energy;
pub mod error;
pub mod metrics;
pub mod rng;
pub mod scalar;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default floating-point type.
pub type Real = f64;

pub type EnergyModel = energy::EnergyModel<Real>;
pub type Mlp = diffnet::Mlp<Real>;
pub type BaseProcess = baseproc::BaseProcess<Real>;
pub type NoiseSchedule = baseproc::NoiseSchedule<Real>;
pub type Prior = baseproc::Prior<Real>;
pub type AdamState = diffnet::AdamState<Real>;
pub type Corrector = trainer::Corrector<Real>;
pub type TrainedSampler = trainer::TrainedSampler<Real>;
pub type ReplayBuffer = trainer::ReplayBuffer<Real>;
