//! Learning dispatchers over shared actor/critic networks.

pub mod embed;
pub mod learner;
pub mod mean_action;
pub mod nets;
pub mod replay;
pub mod select;
pub mod store;

pub use embed::Candidate;
pub use learner::{LearnConfig, LearningDispatcher, TrainStats};
pub use mean_action::{mean_action, MeanAction};
pub use nets::{AgentNets, NetSizes, Variant};
pub use replay::{Experience, ReplayBuffer};
pub use select::{boltzmann_probs, boltzmann_select, rank, TemperatureSchedule};
pub use store::{load_nets, save_nets};
