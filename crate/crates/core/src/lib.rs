//! Planning core for agentic AI workloads on heterogeneous accelerators.
//!
//! The crate is `no_std` (with `alloc`) and contains only pure computation:
//!
//! * [`graph`]: task graphs, validation, loop unrolling, hierarchy flattening, critical path.
//! * [`dsl`]: the `.agraph` text frontend and the lowering passes.
//! * [`hw`]: device catalog, operating-cost model, marginal cost analysis.
//! * [`perf`]: roofline prefill/decode models, KV-cache sizing, bandwidth requirements.
//! * [`opt`]: the assignment problem, a two-phase simplex, branch-and-bound, and an
//!   enumeration oracle.
//! * [`planner`]: graph planning and the prefill::decode TCO sweep.
//! * [`sim`]: a deterministic discrete-event simulator for placement plans.
//!
//! Units are fixed across the crate: milliseconds for time, GB = 1e9 bytes,
//! Gb/s for network links, and $/hr for operating cost.
#![cfg_attr(not(test), no_std)]
// NaN must fail range checks, so `!(x > 0.0)` is intended.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod dsl;
pub mod graph;
pub mod hw;
pub mod opt;
pub mod perf;
pub mod planner;
pub mod sim;

pub use graph::{
    AttrValue, Diagnostic, EdgeMode, GraphEdge, GraphError, ResourceVector, SlaMode, SlaScope,
    SlaSpec, TaskGraph, TaskKind, TaskNode,
};

pub use hw::{CostModelParams, DeviceClass, HardwareCatalog};
pub use perf::{ModelCatalog, ModelSpec, ParallelismConfig, PerfEstimate, WorkloadShape};
