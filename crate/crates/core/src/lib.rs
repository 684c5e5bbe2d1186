//! Elastic-kernel scheduling for mixed-criticality DNN inference on a
//! modeled edge GPU: SM residency, workloads, design-space planning, the
//! shard coordinator and a contention simulator.

pub mod coordinator;
pub mod error;
pub mod gpu;
pub mod kv;
pub mod planner;
pub mod sim;
pub mod workload;
