//! Hybrid-precoded massive MIMO downlink simulation with particle-swarm and
//! learned power allocation.

mod binio;
pub mod channel;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod metrics;
pub mod net;
pub mod precoding;
pub mod pso;
pub mod scenario;

pub use channel::{sample_realization, ChannelRealization};
pub use error::{Error, Result};
pub use metrics::{check_power_constraint, normalize_full_power, sum_rate, LinkGains, PowerAllocation, PowerReport};
pub use precoding::{AbHpDesign, HybridPrecoder};
pub use pso::{equal_power_allocation, pso_optimize, PsoConfig, PsoResult};
pub use scenario::Scenario;
