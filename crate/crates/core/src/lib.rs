//! Simulation core for attacker-defender network encounters: device state
//! algebra, a churning scale-free device graph, workload execution, anomaly
//! detection, zero-day information asymmetry, and the partially observable
//! game environment that ties them together.

pub mod detector;
pub mod env;
pub mod model;
pub mod netgraph;
pub mod seeds;
pub mod traj;
pub mod workloads;
pub mod zeroday;

pub use env::{Env, EnvConfig, EnvError, JointAction, ScenarioData};
pub use model::{DeviceId, DeviceState, Role, Step};
