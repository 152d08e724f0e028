//! Ride-hailing order dispatch as a many-agent game: a hexagonal-grid
//! simulator, rule and assignment baselines, mean-field actor-critic
//! dispatchers, and a linear mean-field Q-learning testbed.

pub mod agents;
pub mod baselines;
pub mod dispatch;
pub mod error;
pub mod harness;
pub mod hexworld;
pub mod mfqlinear;
pub mod neuralnet;
pub mod rngs;
pub mod scalar;
pub mod simcore;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Mlp32 = neuralnet::Mlp<f32>;
pub type Mlp64 = neuralnet::Mlp<f64>;
pub type AgentNets64 = agents::AgentNets<f64>;
pub type LearningDispatcher64 = agents::LearningDispatcher<f64>;
pub type LinearQ64 = mfqlinear::LinearQ<f64>;
pub type FeatureBasis64 = mfqlinear::FeatureBasis<f64>;
