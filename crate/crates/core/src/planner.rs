//! Offline generation of elastic-kernel candidates.
//!
//! A candidate pairs a shard grid size (blocks per dispatched shard, taken
//! from the dyadic slicing plan of the kernel's grid) with an elastic block
//! size (physical threads per block running the persistent-thread loop).
//! Candidates are filtered by the co-location constraints, scored by the
//! workload-imbalance score times the launch-overhead score, and the top
//! fifth is kept for the runtime coordinator.

use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

use crate::gpu::GpuSpec;
use crate::workload::KernelSpec;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("grid size must be at least 1")]
    EmptyGrid,
    #[error("candidate with {shard_grid} blocks x {block} threads violates the co-location constraints")]
    Infeasible { shard_grid: u32, block: u32 },
    #[error("a shard must contain at least one block and one thread")]
    EmptyShard,
    #[error("at least one critical profile is required")]
    NoCriticalProfiles,
    #[error("critical profile needs at least one block of at least one thread")]
    BadCriticalProfile,
}

/// Dyadic slicing plan of a grid of `m` blocks: `m / 2^n, ..., m / 2, m`
/// where `n` is the largest power of two dividing `m`.
pub fn slicing_plan(m: u32) -> Result<Vec<u32>, PlanError> {
    if m == 0 {
        return Err(PlanError::EmptyGrid);
    }
    let n = m.trailing_zeros();
    Ok((0..=n).rev().map(|i| m >> i).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ElasticCandidate {
    /// Blocks per dispatched shard.
    pub shard_grid: u32,
    /// Physical threads per elastic block.
    pub block: u32,
    /// Shards needed to cover the kernel's grid.
    pub n_shards: u32,
}

impl ElasticCandidate {
    pub fn new(grid: u32, shard_grid: u32, block: u32) -> Self {
        ElasticCandidate {
            shard_grid,
            block,
            n_shards: grid.div_ceil(shard_grid.max(1)),
        }
    }

    /// The un-sliced kernel at its original block size.
    pub fn original(kernel: &KernelSpec) -> Self {
        Self::new(kernel.grid, kernel.grid, kernel.block)
    }
}

/// Shape of the co-running critical kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CriticalProfile {
    /// Blocks in the dispatched critical kernel.
    pub n_blk: u32,
    /// Threads per critical block.
    pub s_blk: u32,
}

impl CriticalProfile {
    pub fn new(n_blk: u32, s_blk: u32) -> Self {
        CriticalProfile { n_blk, s_blk }
    }

    pub fn of_kernel(kernel: &KernelSpec) -> Self {
        CriticalProfile::new(kernel.grid, kernel.block)
    }

    /// Combined profile of several simultaneously resident critical kernels:
    /// their block counts add up, the thread bound uses the widest block.
    pub fn union(profiles: &[CriticalProfile]) -> Option<CriticalProfile> {
        if profiles.is_empty() {
            return None;
        }
        Some(CriticalProfile {
            n_blk: profiles.iter().map(|p| p.n_blk).sum(),
            s_blk: profiles.iter().map(|p| p.s_blk).max().unwrap_or(0),
        })
    }

    /// Maximum shard grid size allowed next to this profile.
    pub fn max_shard_blocks(&self, gpu: &GpuSpec) -> u32 {
        gpu.n_sm - self.n_blk % gpu.n_sm
    }

    /// Maximum elastic block size allowed next to this profile.
    pub fn max_elastic_threads(&self, gpu: &GpuSpec) -> u32 {
        gpu.l_threads.saturating_sub(self.s_blk)
    }
}

/// Co-location constraints: the shard fits into the SMs left over by the
/// critical kernel's last wave and its blocks fit into the thread slots the
/// critical block leaves on an SM.
pub fn feasible(c: &ElasticCandidate, crit: &CriticalProfile, gpu: &GpuSpec) -> bool {
    c.shard_grid <= crit.max_shard_blocks(gpu) && c.block <= crit.max_elastic_threads(gpu)
}

fn wiscore_unchecked(c: &ElasticCandidate, crit: &CriticalProfile, gpu: &GpuSpec) -> f64 {
    let inter = (crit.n_blk % gpu.n_sm + c.shard_grid) as f64 / gpu.n_sm as f64;
    let intra = (crit.s_blk + c.block) as f64 / gpu.l_threads as f64;
    (inter * intra).clamp(0.0, 1.0)
}

/// Workload-imbalance score in `[0, 1]`; 1 means the critical kernel's last
/// wave plus the shard fill every SM and the SM thread slots exactly.
pub fn wiscore(c: &ElasticCandidate, crit: &CriticalProfile, gpu: &GpuSpec) -> Result<f64, PlanError> {
    if c.shard_grid == 0 || c.block == 0 {
        return Err(PlanError::EmptyShard);
    }
    if !feasible(c, crit, gpu) {
        return Err(PlanError::Infeasible {
            shard_grid: c.shard_grid,
            block: c.block,
        });
    }
    Ok(wiscore_unchecked(c, crit, gpu))
}

/// Launch-overhead budget for one kernel, in seconds.
///
/// Two channels are charged: kernel launches (one per shard, minus the single
/// launch the original kernel needed) and persistent-thread loop iterations
/// (each elastic block runs `ceil(original / elastic)` iterations).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverheadParams {
    pub launch_per_shard: f64,
    pub baseline_launch: f64,
    pub max_blk: f64,
    pub pt_per_iteration: f64,
    pub max_pt: f64,
}

impl Default for OverheadParams {
    fn default() -> Self {
        OverheadParams {
            launch_per_shard: 15e-6,
            baseline_launch: 15e-6,
            max_blk: 0.35e-3,
            pt_per_iteration: 1e-6,
            max_pt: 0.35e-3,
        }
    }
}

impl OverheadParams {
    /// Extra launch time of the sliced kernel over the original.
    pub fn launch_overhead(&self, c: &ElasticCandidate) -> f64 {
        c.n_shards as f64 * self.launch_per_shard - self.baseline_launch
    }

    /// Extra persistent-loop time over the original single iteration.
    pub fn pt_overhead(&self, c: &ElasticCandidate, original_block: u32) -> f64 {
        let iterations = original_block.div_ceil(c.block.max(1)) as f64;
        c.n_shards as f64 * iterations * self.pt_per_iteration - self.pt_per_iteration
    }
}

/// 1 when both overhead channels stay under their budgets, else 0.
pub fn oscore(c: &ElasticCandidate, params: &OverheadParams, original_block: u32) -> u8 {
    let blk_ok = params.launch_overhead(c) < params.max_blk;
    let pt_ok = params.pt_overhead(c, original_block) < params.max_pt;
    u8::from(blk_ok && pt_ok)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredCandidate {
    pub candidate: ElasticCandidate,
    pub wiscore: f64,
    pub oscore: u8,
    pub combined: f64,
}

impl ScoredCandidate {
    fn rank(a: &ScoredCandidate, b: &ScoredCandidate) -> Ordering {
        b.combined
            .total_cmp(&a.combined)
            .then(a.candidate.shard_grid.cmp(&b.candidate.shard_grid))
            .then(a.candidate.block.cmp(&b.candidate.block))
    }
}

impl fmt::Display for ScoredCandidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "shard_grid={} block={} wiscore={:.6} oscore={}",
            self.candidate.shard_grid, self.candidate.block, self.wiscore, self.oscore
        )
    }
}

/// Elastic block sizes considered for a kernel: warp multiples up to the
/// original block size, plus the original size itself.
pub fn elastic_block_sizes(original: u32, warp: u32) -> Vec<u32> {
    let mut sizes: Vec<u32> = (1..).map(|k| k * warp).take_while(|&s| s < original).collect();
    sizes.push(original);
    sizes
}

/// Full cross product of slice sizes and elastic block sizes.
pub fn enumerate_candidates(kernel: &KernelSpec, gpu: &GpuSpec) -> Result<Vec<ElasticCandidate>, PlanError> {
    let slices = slicing_plan(kernel.grid)?;
    let blocks = elastic_block_sizes(kernel.block, gpu.warp_size);
    Ok(slices
        .iter()
        .flat_map(|&s| blocks.iter().map(move |&b| ElasticCandidate::new(kernel.grid, s, b)))
        .collect())
}

/// One enumerated candidate with its evaluation, for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateRow {
    pub scored: ScoredCandidate,
    pub feasible: bool,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShrunkSpace {
    /// Top candidates, best first.
    pub selected: Vec<ScoredCandidate>,
    /// Every enumerated candidate in enumeration order.
    pub rows: Vec<CandidateRow>,
    /// Nothing was feasible; `selected` holds the un-sliced original.
    pub fallback: bool,
}

impl ShrunkSpace {
    pub fn raw_count(&self) -> usize {
        self.rows.len()
    }

    pub fn pruned_fraction(&self) -> f64 {
        1.0 - self.selected.len() as f64 / self.rows.len().max(1) as f64
    }

    /// One line per selected candidate.
    pub fn to_text(&self) -> String {
        self.selected.iter().map(|c| format!("{c}\n")).collect()
    }
}

/// Share of the enumerated space kept by [`shrink_design_space`].
pub const KEEP_FRACTION: f64 = 0.2;

/// Scores every candidate for `kernel` against the critical kernels it may
/// co-run with and keeps the best fifth.
///
/// Feasibility is checked against the worst case over `crit_profiles` (largest
/// block count, widest block). Scores are averaged over the profiles, with a
/// profile contributing 0 when the candidate cannot co-run with it.
pub fn shrink_design_space(
    kernel: &KernelSpec,
    crit_profiles: &[CriticalProfile],
    gpu: &GpuSpec,
    overhead: &OverheadParams,
) -> Result<ShrunkSpace, PlanError> {
    if crit_profiles.is_empty() {
        return Err(PlanError::NoCriticalProfiles);
    }
    if crit_profiles.iter().any(|p| p.n_blk == 0 || p.s_blk == 0) {
        return Err(PlanError::BadCriticalProfile);
    }
    let worst = CriticalProfile {
        n_blk: crit_profiles.iter().map(|p| p.n_blk).max().unwrap(),
        s_blk: crit_profiles.iter().map(|p| p.s_blk).max().unwrap(),
    };
    let candidates = enumerate_candidates(kernel, gpu)?;
    let score = |c: &ElasticCandidate| {
        let os = oscore(c, overhead, kernel.block);
        let wi = crit_profiles
            .iter()
            .map(|p| {
                if feasible(c, p, gpu) {
                    wiscore_unchecked(c, p, gpu)
                } else {
                    0.0
                }
            })
            .sum::<f64>()
            / crit_profiles.len() as f64;
        ScoredCandidate {
            candidate: *c,
            wiscore: wi,
            oscore: os,
            combined: wi * os as f64,
        }
    };

    let mut rows: Vec<CandidateRow> = candidates
        .iter()
        .map(|c| CandidateRow {
            scored: score(c),
            feasible: feasible(c, &worst, gpu),
            selected: false,
        })
        .collect();

    let mut ranked: Vec<ScoredCandidate> = rows.iter().filter(|r| r.feasible).map(|r| r.scored).collect();
    ranked.sort_by(ScoredCandidate::rank);

    if ranked.is_empty() {
        let original = ElasticCandidate::original(kernel);
        let scored = score(&original);
        return Ok(ShrunkSpace {
            selected: vec![scored],
            rows,
            fallback: true,
        });
    }

    let keep = ((rows.len() as f64 * KEEP_FRACTION).floor() as usize)
        .max(1)
        .min(ranked.len());
    ranked.truncate(keep);
    for row in &mut rows {
        row.selected = ranked.iter().any(|s| s.candidate == row.scored.candidate);
    }
    Ok(ShrunkSpace {
        selected: ranked,
        rows,
        fallback: false,
    })
}
