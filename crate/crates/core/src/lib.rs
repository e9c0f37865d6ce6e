//! Timer-free eventually-strong failure detection for mobile ad-hoc networks
//! whose membership is not known in advance.

pub mod experiments;
pub mod fd;
pub mod heartbeat;
pub mod metrics;
pub mod scenario;
pub mod sim;
pub mod topology;

pub use fd::{FdError, FdState, NodeId, QueryMsg, ResponseMsg, RoundStatus, TagSet, TaggedEntry};
pub use heartbeat::{HbError, HbState, HeartbeatMsg};
pub use metrics::{Crash, Timeline};
pub use sim::{run, Injection, Protocol, RunOutput, SimConfig, SimError};
pub use topology::{GenError, GenParams, MoverRequirement, Point, Topology, TopologyError};
