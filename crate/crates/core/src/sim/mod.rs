//! Deterministic discrete-event simulation of a workload under a scheduling
//! policy.

mod engine;
pub mod metrics;
pub mod model;
pub mod trace;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::coordinator::CoordError;
use crate::error::ConfigError;
use crate::gpu::GpuSpec;
use crate::planner::{shrink_design_space, CriticalProfile, ElasticCandidate, PlanError, ShrunkSpace};
use crate::workload::{Workload, WorkloadError};

pub use metrics::{achieved_occupancy, cdf_text, export_latency_cdf, ExportError, LatencyStats, Metrics};
pub use model::{block_service_time, BlockLoad, ContentionModel};
pub use trace::{EventKind, RequestRecord, SimTrace, TaskRef, TraceEvent};

/// Default number of normal kernels per barrier under the IB policy.
pub const DEFAULT_IB_GROUP: u32 = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Policy {
    /// One request at a time owns the GPU; the two queues alternate.
    Sequential,
    /// Both streams launch freely; critical blocks dispatch first.
    MultiStream,
    /// Multi-stream with a barrier before every `group` normal kernels that
    /// waits for the critical stream's kernel in flight.
    InterStreamBarrier { group: u32 },
    /// Normal kernels are dispatched as elastic shards by the coordinator.
    Miriam,
    /// Normal kernel `i` runs as the fixed candidate `i`: its shards launch
    /// back to back. Kernels without an entry run un-sliced.
    StaticElastic(Vec<ElasticCandidate>),
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Sequential => "sequential",
            Policy::MultiStream => "multistream",
            Policy::InterStreamBarrier { .. } => "ib",
            Policy::Miriam => "miriam",
            Policy::StaticElastic(_) => "static",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::InterStreamBarrier { group } if *group != DEFAULT_IB_GROUP => write!(f, "ib:{group}"),
            p => f.write_str(p.name()),
        }
    }
}

impl FromStr for Policy {
    type Err = String;

    /// `sequential`, `multistream`, `ib`, `ib:<group>` or `miriam`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "sequential" => return Ok(Policy::Sequential),
            "multistream" | "multi-stream" => return Ok(Policy::MultiStream),
            "ib" => {
                return Ok(Policy::InterStreamBarrier {
                    group: DEFAULT_IB_GROUP,
                })
            }
            "miriam" => return Ok(Policy::Miriam),
            _ => {}
        }
        if let Some(g) = s.strip_prefix("ib:") {
            let group: u32 = g.trim().parse().map_err(|_| format!("bad barrier group `{g}`"))?;
            if group == 0 {
                return Err("barrier group must be at least 1".into());
            }
            return Ok(Policy::InterStreamBarrier { group });
        }
        Err(format!(
            "unknown policy `{s}` (expected sequential, multistream, ib[:group] or miriam)"
        ))
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid workload: {0}")]
    Workload(#[from] WorkloadError),
    #[error("invalid gpu: {0}")]
    Gpu(ConfigError),
    #[error("invalid contention model: {0}")]
    Model(ConfigError),
    #[error("invalid policy: {0}")]
    Policy(String),
    #[error("miriam policy requires a shrunk candidate set for every normal kernel")]
    MissingPlans,
    #[error("candidate sets cover {got} normal kernels, workload has {expected}")]
    PlanMismatch { expected: usize, got: usize },
    #[error("planning failed: {0}")]
    Plan(#[from] PlanError),
    #[error("coordinator: {0}")]
    Coordinator(#[from] CoordError),
    #[error("simulation stalled at t={time} with requests in flight")]
    Stalled { time: f64 },
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Keep per-block events in the returned trace.
    pub record_trace: bool,
    /// Keep one coordinator log line per decision.
    pub record_decisions: bool,
    /// Shrunk candidate sets, one per normal kernel; required by `Miriam`.
    pub plans: Option<Vec<ShrunkSpace>>,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub trace: SimTrace,
    pub metrics: Metrics,
    pub decisions: Vec<String>,
    /// Largest relative difference between work retired by a block and its
    /// nominal work.
    pub max_work_error: f64,
}

/// Shrinks the design space of every normal kernel against the workload's
/// critical kernels.
pub fn plan_for_workload(
    workload: &Workload,
    gpu: &GpuSpec,
    model: &ContentionModel,
) -> Result<Vec<ShrunkSpace>, PlanError> {
    let profiles: Vec<CriticalProfile> = workload
        .critical
        .task
        .kernels
        .iter()
        .map(CriticalProfile::of_kernel)
        .collect();
    let overhead = model.overhead_params();
    workload
        .normal
        .task
        .kernels
        .iter()
        .map(|k| shrink_design_space(k, &profiles, gpu, &overhead))
        .collect()
}

/// Runs `workload` under `policy`.
///
/// Requests arrive until the workload's duration; requests already started
/// then run to completion, so every dispatched block retires. Throughput
/// counts completions within the duration only.
pub fn run(
    workload: &Workload,
    policy: &Policy,
    gpu: &GpuSpec,
    model: &ContentionModel,
    seed: u64,
    options: &RunOptions,
) -> Result<SimOutput, SimError> {
    gpu.validate().map_err(SimError::Gpu)?;
    model.validate().map_err(SimError::Model)?;
    workload.validate(gpu)?;
    if let Policy::InterStreamBarrier { group: 0 } = policy {
        return Err(SimError::Policy("barrier group must be at least 1".into()));
    }
    let plans = match policy {
        Policy::Miriam => {
            let plans = options.plans.as_deref().ok_or(SimError::MissingPlans)?;
            let expected = workload.normal.task.kernels.len();
            if plans.len() != expected {
                return Err(SimError::PlanMismatch {
                    expected,
                    got: plans.len(),
                });
            }
            if plans.iter().any(|p| p.selected.is_empty()) {
                return Err(SimError::MissingPlans);
            }
            Some(plans)
        }
        _ => None,
    };

    let out = engine::Engine::new(
        workload,
        policy,
        gpu,
        model,
        plans,
        options.record_trace,
        options.record_decisions,
    )
    .run(workload, seed)?;
    let metrics = Metrics::from_requests(&out.requests, workload.duration, out.occupancy);
    Ok(SimOutput {
        trace: SimTrace {
            events: out.events,
            requests: out.requests,
            end_time: out.end_time,
        },
        metrics,
        decisions: out.decisions,
        max_work_error: out.max_work_error,
    })
}
