//! SimStore: a stochastic e-commerce store subject to order-fraud risk, and a
//! suite of offline reinforcement-learning and classification risk policies
//! trained on logged store data.

pub mod algos;
pub mod config;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod features;
pub mod gbt;
pub mod neural;
pub mod policy;
pub mod rng;
pub mod sim;

pub use config::{Days, SimConfig};
pub use error::{Error, Result};
pub use features::{Observation, NUM_FEATURES};
pub use sim::{Action, SimStore, StepResult};
