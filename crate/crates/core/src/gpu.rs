//! Modeled GPU architecture: SM count, per-SM thread and shared-memory
//! capacity, and the residency bookkeeping used by both the planner and the
//! simulator.

use std::fmt;

use crate::error::ConfigError;

/// Static description of a modeled device.
#[derive(Debug, Clone, PartialEq)]
pub struct GpuSpec {
    pub name: String,
    /// Number of streaming multiprocessors.
    pub n_sm: u32,
    /// Maximum concurrently resident threads per SM.
    pub l_threads: u32,
    pub warp_size: u32,
    pub max_warps_per_sm: u32,
    pub shared_mem_per_sm: u32,
    /// Work units per second shared by all SMs.
    pub mem_bandwidth: f64,
}

impl GpuSpec {
    /// Turing-class desktop part with 34 SMs.
    pub fn rtx2060_like() -> Self {
        GpuSpec {
            name: "rtx2060-like".into(),
            n_sm: 34,
            l_threads: 1024,
            warp_size: 32,
            max_warps_per_sm: 32,
            shared_mem_per_sm: 64,
            mem_bandwidth: 3.0e10,
        }
    }

    /// Embedded part with 8 SMs. Thread and warp limits are assumed values.
    pub fn xavier_like() -> Self {
        GpuSpec {
            name: "xavier-like".into(),
            n_sm: 8,
            l_threads: 2048,
            warp_size: 32,
            max_warps_per_sm: 64,
            shared_mem_per_sm: 96,
            mem_bandwidth: 1.2e10,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "rtx2060-like" => Some(Self::rtx2060_like()),
            "xavier-like" => Some(Self::xavier_like()),
            _ => None,
        }
    }

    pub fn preset_names() -> &'static [&'static str] {
        &["rtx2060-like", "xavier-like"]
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("n_sm", self.n_sm),
            ("l_threads", self.l_threads),
            ("warp_size", self.warp_size),
            ("max_warps_per_sm", self.max_warps_per_sm),
            ("shared_mem_per_sm", self.shared_mem_per_sm),
        ];
        for (field, value) in positive {
            if value == 0 {
                return Err(ConfigError::invalid(field, "must be positive"));
            }
        }
        if !(self.mem_bandwidth > 0.0 && self.mem_bandwidth.is_finite()) {
            return Err(ConfigError::invalid("mem_bandwidth", "must be positive"));
        }
        if !self.l_threads.is_multiple_of(self.warp_size) {
            return Err(ConfigError::invalid("l_threads", "must be a multiple of warp_size"));
        }
        Ok(())
    }

    /// Warps occupied by a block of `threads` threads.
    pub fn warps_for(&self, threads: u32) -> u32 {
        threads.div_ceil(self.warp_size)
    }

    pub fn empty_sms(&self) -> Vec<SmState> {
        (0..self.n_sm).map(|_| SmState::new(self)).collect()
    }
}

/// One block resident on an SM.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResidentBlock {
    pub kernel: u64,
    pub block: u32,
    pub threads: u32,
    pub shmem: u32,
}

/// Residency of a single SM. The free counters are kept equal to capacity
/// minus the resident sums.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmState {
    resident: Vec<ResidentBlock>,
    thread_cap: u32,
    warp_cap: u32,
    warp_size: u32,
    shmem_cap: u32,
    free_threads: u32,
    free_warps: u32,
    free_shared_mem: u32,
}

impl SmState {
    pub fn new(gpu: &GpuSpec) -> Self {
        SmState {
            resident: Vec::new(),
            thread_cap: gpu.l_threads,
            warp_cap: gpu.max_warps_per_sm,
            warp_size: gpu.warp_size,
            shmem_cap: gpu.shared_mem_per_sm,
            free_threads: gpu.l_threads,
            free_warps: gpu.max_warps_per_sm,
            free_shared_mem: gpu.shared_mem_per_sm,
        }
    }

    pub fn resident_blocks(&self) -> &[ResidentBlock] {
        &self.resident
    }

    pub fn free_threads(&self) -> u32 {
        self.free_threads
    }

    pub fn free_shared_mem(&self) -> u32 {
        self.free_shared_mem
    }

    pub fn free_warps(&self) -> u32 {
        self.free_warps
    }

    pub fn resident_threads(&self) -> u32 {
        self.thread_cap - self.free_threads
    }

    pub fn resident_warps(&self) -> u32 {
        self.warp_cap - self.free_warps
    }

    pub fn is_idle(&self) -> bool {
        self.resident.is_empty()
    }

    fn fits(&self, threads: u32, shmem: u32) -> bool {
        self.free_threads >= threads
            && self.free_shared_mem >= shmem
            && self.free_warps >= threads.div_ceil(self.warp_size)
    }

    /// Places a block on this SM. Returns false (and changes nothing) when it
    /// does not fit.
    pub fn admit(&mut self, block: ResidentBlock) -> bool {
        if !self.fits(block.threads, block.shmem) {
            return false;
        }
        self.free_threads -= block.threads;
        self.free_shared_mem -= block.shmem;
        self.free_warps -= block.threads.div_ceil(self.warp_size);
        self.resident.push(block);
        true
    }

    /// Removes the block `(kernel, block)`; returns it if it was resident.
    pub fn release(&mut self, kernel: u64, block: u32) -> Option<ResidentBlock> {
        let pos = self
            .resident
            .iter()
            .position(|b| b.kernel == kernel && b.block == block)?;
        let b = self.resident.remove(pos);
        self.free_threads += b.threads;
        self.free_shared_mem += b.shmem;
        self.free_warps += b.threads.div_ceil(self.warp_size);
        Some(b)
    }

    /// Checks that the derived counters match the resident list.
    pub fn is_consistent(&self) -> bool {
        let threads: u64 = self.resident.iter().map(|b| b.threads as u64).sum();
        let shmem: u64 = self.resident.iter().map(|b| b.shmem as u64).sum();
        let warps: u64 = self
            .resident
            .iter()
            .map(|b| b.threads.div_ceil(self.warp_size) as u64)
            .sum();
        threads <= self.thread_cap as u64
            && shmem <= self.shmem_cap as u64
            && warps <= self.warp_cap as u64
            && self.free_threads as u64 == self.thread_cap as u64 - threads
            && self.free_shared_mem as u64 == self.shmem_cap as u64 - shmem
            && self.free_warps as u64 == self.warp_cap as u64 - warps
    }
}

/// Whether `sm` has room for one more block of the given shape.
///
/// The thread and shared-memory checks come straight from the residency
/// counters; the warp-slot cap is enforced as an independent limit.
pub fn can_accommodate(sm: &SmState, threads: u32, shmem: u32, _gpu: &GpuSpec) -> bool {
    debug_assert!(threads >= 1);
    sm.fits(threads, shmem)
}

/// No SM can host the block right now; the block keeps waiting in FIFO order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoCapacity;

impl fmt::Display for NoCapacity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("no SM can accommodate the block")
    }
}

/// Picks the accommodating SM with the most free threads, lowest index on ties.
pub fn select_sm(sms: &[SmState], threads: u32, shmem: u32, gpu: &GpuSpec) -> Result<usize, NoCapacity> {
    let mut best: Option<(usize, u32)> = None;
    for (idx, sm) in sms.iter().enumerate() {
        if !can_accommodate(sm, threads, shmem, gpu) {
            continue;
        }
        match best {
            Some((_, free)) if free >= sm.free_threads() => {}
            _ => best = Some((idx, sm.free_threads())),
        }
    }
    best.map(|(idx, _)| idx).ok_or(NoCapacity)
}
