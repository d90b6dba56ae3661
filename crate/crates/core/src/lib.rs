//! Hunter-and-gatherer mission planning: a deterministic grid simulator in
//! which hunters explore and detect tasks, gatherers complete them, and the
//! two negotiate how to split an extra incentive per task.

pub mod engine;
pub mod lab;
pub mod margins;
pub mod negotiation;
pub mod planning;
pub mod world;

pub use engine::{run_mission, Mission, MissionConfig, MissionLog};
pub use lab::metrics::{compute_metrics, MetricsReport};
