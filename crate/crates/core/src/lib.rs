//! Exact solvers for atomic congestion games with capacitated, arbitrary
//! (possibly non-monotone) latency tables.

pub mod cost;
pub mod decomposition;
pub mod dp_minmax;
pub mod dp_soac;
pub mod error;
pub mod generators;
pub mod kernel;
pub mod model;
pub mod oracle;

pub use cost::Cost;
pub use error::{Result, SoacError};
pub use model::{
    loads_and_cost, total_cost, validate_flow, validate_flow_with_alpha, Agent, AgentId, Arc, ArcId, Digraph,
    FlowAssignment, Instance, LatencyTable, VertexId,
};
