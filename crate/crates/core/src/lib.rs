//! Risk-averse least-squares value iteration with mini-batch risk measures.

pub mod assignment;
pub mod augmented;
pub mod bandit;
pub mod error;
pub mod exact_dp;
pub mod experiments;
pub mod lazy;
pub mod linalg;
pub mod lsvi;
pub mod risk;
pub mod scalar;
pub mod tabular;

pub use error::{Error, Result};
pub use risk::{Orientation, RiskConfig, RiskKind};
pub use scalar::Scalar;

pub type Risk = risk::RiskConfig<f64>;
pub type Gram = linalg::GramState<f64>;
pub type Mdp = exact_dp::TabularMdp<f64>;
pub type Config = experiments::RunConfig;
