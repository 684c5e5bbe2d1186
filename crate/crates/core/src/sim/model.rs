use crate::error::ConfigError;
use crate::gpu::GpuSpec;
use crate::planner::OverheadParams;

/// Parameters of the contention law and the fixed scheduling costs.
///
/// This is the calibration surface of the simulator: SM throughput and memory
/// bandwidth set absolute speeds, the two overheads are charged per launch
/// and per coordinator decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContentionModel {
    /// Thread-work units per second per SM.
    pub sm_throughput: f64,
    /// Memory-work units per second shared by all SMs.
    pub mem_bandwidth: f64,
    /// Seconds per kernel or shard launch.
    pub launch_overhead: f64,
    /// Seconds per coordinator decision, charged to the shards it launches.
    pub coordinator_overhead: f64,
}

pub const DEFAULT_SM_THROUGHPUT: f64 = 1.0e9;
pub const DEFAULT_LAUNCH_OVERHEAD: f64 = 15e-6;
pub const DEFAULT_COORDINATOR_OVERHEAD: f64 = 10e-6;

impl ContentionModel {
    pub fn for_gpu(gpu: &GpuSpec) -> Self {
        ContentionModel {
            sm_throughput: DEFAULT_SM_THROUGHPUT,
            mem_bandwidth: gpu.mem_bandwidth,
            launch_overhead: DEFAULT_LAUNCH_OVERHEAD,
            coordinator_overhead: DEFAULT_COORDINATOR_OVERHEAD,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fields = [
            ("sm_throughput", self.sm_throughput),
            ("mem_bandwidth", self.mem_bandwidth),
            ("launch_overhead", self.launch_overhead),
            ("coordinator_overhead", self.coordinator_overhead),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::invalid(name, "must be positive"));
            }
        }
        Ok(())
    }

    /// Planner overhead budget matching this model's launch cost.
    pub fn overhead_params(&self) -> OverheadParams {
        OverheadParams {
            launch_per_shard: self.launch_overhead,
            baseline_launch: self.launch_overhead,
            ..OverheadParams::default()
        }
    }
}

/// Work carried by one resident block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockLoad {
    /// Physical threads occupying the SM.
    pub threads: u32,
    /// Logical threads times per-thread work.
    pub work: f64,
    pub mem_intensity: f64,
}

impl BlockLoad {
    pub fn compute_work(&self) -> f64 {
        self.work * (1.0 - self.mem_intensity)
    }

    pub fn memory_work(&self) -> f64 {
        self.work * self.mem_intensity
    }

    /// Share of the memory system this block asks for.
    pub fn memory_demand(&self) -> f64 {
        self.threads as f64 * self.mem_intensity
    }
}

/// Time for `block` to finish from scratch at the current sharing state.
///
/// The compute channel shares the SM among resident threads, the memory
/// channel shares global bandwidth by memory demand; the slower channel wins.
/// `sm_threads` counts every thread resident on the block's SM (this block
/// included) and `total_demand` the memory demand of every resident block on
/// the GPU.
pub fn block_service_time(block: &BlockLoad, sm_threads: u32, total_demand: f64, model: &ContentionModel) -> f64 {
    let compute = block.compute_work();
    let compute_time = if compute > 0.0 {
        let share = block.threads as f64 / sm_threads as f64;
        compute / (model.sm_throughput * share)
    } else {
        0.0
    };
    let memory = block.memory_work();
    let memory_time = if memory > 0.0 {
        let share = block.memory_demand() / total_demand;
        memory / (model.mem_bandwidth * share)
    } else {
        0.0
    };
    compute_time.max(memory_time)
}
