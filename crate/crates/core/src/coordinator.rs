//! Runtime coordination of elastic shards.
//!
//! Each queued normal kernel owns a [`ShadedBinaryTree`] whose nodes are
//! dyadic block ranges of the kernel's grid. Frontier (virtual) nodes are
//! split on demand into shards of an admissible size, shaded with an elastic
//! block size and handed to the simulator for launch. While critical kernels
//! are resident, shards only use what the critical kernels leave over; when
//! none are resident the head kernel is dispatched at full width.

use std::collections::VecDeque;

use thiserror::Error;

use crate::gpu::GpuSpec;
use crate::planner::{slicing_plan, CriticalProfile, ScoredCandidate};
use crate::workload::KernelSpec;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoordError {
    #[error("kernel grid must contain at least one block")]
    EmptyGrid,
    #[error("no elastic candidates supplied for kernel {0}")]
    NoCandidates(u32),
    #[error("unknown normal kernel {0}")]
    UnknownKernel(u64),
    #[error("shard {node} of kernel {kernel} is not in flight")]
    NotInFlight { kernel: u64, node: usize },
    #[error("critical kernel {0} is not resident")]
    UnknownCritical(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeStatus {
    /// Potential shard, not selected.
    Virtual,
    /// Selected for dispatch, launch pending.
    Actual,
    /// Launched; its blocks are queued or running.
    Dispatched,
    Retired,
}

pub type NodeId = usize;

#[derive(Debug, Clone)]
struct Node {
    start: u32,
    count: u32,
    level: u32,
    children: Option<[NodeId; 2]>,
    /// Range is delegated to the children.
    expanded: bool,
    status: NodeStatus,
    shading: Option<u32>,
    parent: Option<NodeId>,
    /// Largest frontier node in this subtree, in blocks; 0 if none.
    best: u32,
}

/// A frontier or shard node as seen from outside the tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeView {
    pub id: NodeId,
    pub start: u32,
    pub count: u32,
    pub status: NodeStatus,
    pub shading: Option<u32>,
}

#[derive(Debug, Clone)]
pub struct ShadedBinaryTree {
    grid: u32,
    original_block: u32,
    nodes: Vec<Node>,
    /// Admissible shard sizes, ascending.
    admissible: Vec<u32>,
    candidates: Vec<ScoredCandidate>,
    retired_blocks: u32,
}

/// Builds the tree for `kernel`. Admissible node sizes are the slice sizes
/// that occur among `candidates`.
pub fn build_tree(kernel: &KernelSpec, candidates: &[ScoredCandidate]) -> Result<ShadedBinaryTree, CoordError> {
    if kernel.grid == 0 {
        return Err(CoordError::EmptyGrid);
    }
    if candidates.is_empty() {
        return Err(CoordError::NoCandidates(kernel.id));
    }
    let plan = slicing_plan(kernel.grid).map_err(|_| CoordError::EmptyGrid)?;
    let admissible: Vec<u32> = plan
        .into_iter()
        .filter(|s| candidates.iter().any(|c| c.candidate.shard_grid == *s))
        .collect();
    if admissible.is_empty() {
        return Err(CoordError::NoCandidates(kernel.id));
    }
    let mut candidates = candidates.to_vec();
    candidates.retain(|c| admissible.contains(&c.candidate.shard_grid));
    Ok(ShadedBinaryTree {
        grid: kernel.grid,
        original_block: kernel.block,
        nodes: vec![Node {
            start: 0,
            count: kernel.grid,
            level: 0,
            children: None,
            expanded: false,
            status: NodeStatus::Virtual,
            shading: None,
            parent: None,
            best: kernel.grid,
        }],
        admissible,
        candidates,
        retired_blocks: 0,
    })
}

impl ShadedBinaryTree {
    pub const ROOT: NodeId = 0;

    pub fn grid(&self) -> u32 {
        self.grid
    }

    pub fn admissible_sizes(&self) -> &[u32] {
        &self.admissible
    }

    /// Number of node levels, root included.
    pub fn depth(&self) -> u32 {
        let smallest = self.admissible[0];
        (self.grid / smallest).trailing_zeros() + 1
    }

    /// Levels below the root; never exceeds the power of two dividing the grid.
    pub fn sharding_degree(&self) -> u32 {
        self.depth() - 1
    }

    pub fn leaf_size(&self) -> u32 {
        self.admissible[0]
    }

    pub fn node(&self, id: NodeId) -> NodeView {
        let n = &self.nodes[id];
        NodeView {
            id,
            start: n.start,
            count: n.count,
            status: n.status,
            shading: n.shading,
        }
    }

    /// Non-expanded nodes in block order; together they cover the grid.
    pub fn leaves(&self) -> Vec<NodeView> {
        let mut out = Vec::new();
        let mut stack = vec![Self::ROOT];
        while let Some(id) = stack.pop() {
            let n = &self.nodes[id];
            if n.expanded {
                let [l, r] = n.children.expect("expanded node has children");
                stack.push(r);
                stack.push(l);
            } else {
                out.push(self.node(id));
            }
        }
        out
    }

    pub fn frontier(&self) -> Vec<NodeView> {
        self.leaves()
            .into_iter()
            .filter(|n| n.status == NodeStatus::Virtual)
            .collect()
    }

    pub fn in_flight(&self) -> Vec<NodeView> {
        self.leaves()
            .into_iter()
            .filter(|n| matches!(n.status, NodeStatus::Actual | NodeStatus::Dispatched))
            .collect()
    }

    pub fn in_flight_blocks(&self) -> u32 {
        self.in_flight().iter().map(|n| n.count).sum()
    }

    pub fn is_complete(&self) -> bool {
        self.retired_blocks == self.grid
    }

    /// Size of the largest frontier node.
    pub fn largest_frontier(&self) -> u32 {
        self.nodes[Self::ROOT].best
    }

    fn recompute_best(&mut self, id: NodeId) {
        let n = &self.nodes[id];
        let best = if n.expanded {
            let [l, r] = n.children.expect("expanded node has children");
            self.nodes[l].best.max(self.nodes[r].best)
        } else if n.status == NodeStatus::Virtual {
            n.count
        } else {
            0
        };
        self.nodes[id].best = best;
    }

    /// Recomputes `best` from `id` up to the root.
    fn refresh_from(&mut self, id: NodeId) {
        let mut cur = Some(id);
        while let Some(c) = cur {
            self.recompute_best(c);
            cur = self.nodes[c].parent;
        }
    }

    /// Structural invariants: leaves partition `[0, grid)`, expanded nodes are
    /// virtual and split exactly in half, depth stays within the plan.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut next = 0;
        for leaf in self.leaves() {
            if leaf.start != next {
                return Err(format!("gap or overlap at block {next}, leaf starts at {}", leaf.start));
            }
            next += leaf.count;
        }
        if next != self.grid {
            return Err(format!("leaves cover {next} of {} blocks", self.grid));
        }
        let leaves = self.leaves();
        let largest = leaves
            .iter()
            .filter(|n| n.status == NodeStatus::Virtual)
            .map(|n| n.count)
            .max()
            .unwrap_or(0);
        if largest != self.largest_frontier() {
            return Err(format!(
                "largest frontier is {largest}, cached {}",
                self.largest_frontier()
            ));
        }
        let retired: u32 = leaves
            .iter()
            .filter(|n| n.status == NodeStatus::Retired)
            .map(|n| n.count)
            .sum();
        if retired != self.retired_blocks {
            return Err(format!("{retired} blocks retired, counted {}", self.retired_blocks));
        }
        let max_level = self.grid.trailing_zeros();
        for (id, n) in self.nodes.iter().enumerate() {
            if n.level > max_level {
                return Err(format!("node {id} deeper than the slicing plan allows"));
            }
            if n.expanded {
                if n.status != NodeStatus::Virtual {
                    return Err(format!("expanded node {id} is {:?}", n.status));
                }
                let [l, r] = n.children.ok_or("expanded node without children")?;
                let (l, r) = (&self.nodes[l], &self.nodes[r]);
                if l.start != n.start || r.start != n.start + l.count || l.count != r.count || l.count * 2 != n.count {
                    return Err(format!("node {id} children do not halve its range"));
                }
            }
        }
        Ok(())
    }

    fn children(&mut self, id: NodeId) -> [NodeId; 2] {
        if let Some(c) = self.nodes[id].children {
            return c;
        }
        let parent = self.nodes[id].clone();
        let half = parent.count / 2;
        let mut make = |start| {
            self.nodes.push(Node {
                start,
                count: half,
                level: parent.level + 1,
                children: None,
                expanded: false,
                status: NodeStatus::Virtual,
                shading: None,
                parent: Some(id),
                best: half,
            });
            self.nodes.len() - 1
        };
        let l = make(parent.start);
        let r = make(parent.start + half);
        self.nodes[id].children = Some([l, r]);
        [l, r]
    }

    fn expand(&mut self, id: NodeId) -> [NodeId; 2] {
        let [l, r] = self.children(id);
        for c in [l, r] {
            let n = &mut self.nodes[c];
            n.expanded = false;
            n.status = NodeStatus::Virtual;
            n.shading = None;
            n.best = n.count;
        }
        self.nodes[id].expanded = true;
        self.refresh_from(id);
        [l, r]
    }

    /// Splits the head-most frontier node that can supply `size` blocks down
    /// to a node of exactly `size` blocks and marks it actual.
    fn take(&mut self, size: u32, shading: u32) -> Option<NodeId> {
        // Node sizes are grid / 2^k, so any frontier node at least `size`
        // large splits evenly into `size`-block nodes.
        let mut id = Self::ROOT;
        loop {
            let n = &self.nodes[id];
            if n.best < size {
                return None;
            }
            if !n.expanded {
                break;
            }
            let [l, r] = n.children.expect("expanded node has children");
            id = if self.nodes[l].best >= size { l } else { r };
        }
        while self.nodes[id].count > size {
            id = self.expand(id)[0];
        }
        let n = &mut self.nodes[id];
        n.status = NodeStatus::Actual;
        n.shading = Some(shading);
        self.refresh_from(id);
        Some(id)
    }

    /// Re-merges sibling pairs that are both untouched frontier nodes, and
    /// collapses fully retired pairs into a retired parent.
    fn normalize(&mut self) {
        fn walk(tree: &mut ShadedBinaryTree, id: NodeId) -> Option<NodeStatus> {
            let n = &tree.nodes[id];
            if !n.expanded {
                return Some(n.status);
            }
            let [l, r] = n.children.unwrap();
            let ls = walk(tree, l);
            let rs = walk(tree, r);
            let merged = match (ls, rs) {
                (Some(NodeStatus::Virtual), Some(NodeStatus::Virtual)) => {
                    tree.nodes[id].expanded = false;
                    Some(NodeStatus::Virtual)
                }
                (Some(NodeStatus::Retired), Some(NodeStatus::Retired)) => {
                    let n = &mut tree.nodes[id];
                    n.expanded = false;
                    n.status = NodeStatus::Retired;
                    Some(NodeStatus::Retired)
                }
                _ => None,
            };
            tree.recompute_best(id);
            merged
        }
        walk(self, Self::ROOT);
    }

    pub fn mark_dispatched(&mut self, id: NodeId) -> Result<(), NodeStatus> {
        match self.nodes[id].status {
            NodeStatus::Actual => {
                self.nodes[id].status = NodeStatus::Dispatched;
                Ok(())
            }
            other => Err(other),
        }
    }

    pub fn mark_retired(&mut self, id: NodeId) -> Result<(), NodeStatus> {
        match self.nodes[id].status {
            NodeStatus::Dispatched | NodeStatus::Actual => {
                self.nodes[id].status = NodeStatus::Retired;
                self.retired_blocks += self.nodes[id].count;
                self.refresh_from(id);
                Ok(())
            }
            other => Err(other),
        }
    }

    /// Returns every actual (selected but not launched) node to the frontier.
    fn revert_pending(&mut self) -> Vec<NodeId> {
        let pending: Vec<NodeId> = self
            .leaves()
            .into_iter()
            .filter(|n| n.status == NodeStatus::Actual)
            .map(|n| n.id)
            .collect();
        for &id in &pending {
            self.nodes[id].status = NodeStatus::Virtual;
            self.nodes[id].shading = None;
            self.refresh_from(id);
        }
        self.normalize();
        pending
    }

    /// Best-scoring elastic block size for shards of `size` blocks that does
    /// not exceed `max_threads`.
    fn shading_for(&self, size: u32, max_threads: u32) -> Option<u32> {
        self.candidates
            .iter()
            .find(|c| c.candidate.shard_grid == size && c.candidate.block <= max_threads)
            .map(|c| c.candidate.block)
    }
}

/// Free per-SM resources seen by the coordinator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceSnapshot {
    pub free_threads: Vec<u32>,
    pub free_warps: Vec<u32>,
    pub free_shmem: Vec<u32>,
}

impl ResourceSnapshot {
    pub fn idle(gpu: &GpuSpec) -> Self {
        let n = gpu.n_sm as usize;
        ResourceSnapshot {
            free_threads: vec![gpu.l_threads; n],
            free_warps: vec![gpu.max_warps_per_sm; n],
            free_shmem: vec![gpu.shared_mem_per_sm; n],
        }
    }

    /// Places `count` blocks one at a time on the SM with the most free
    /// threads. Commits and returns true only if all of them fit.
    fn try_place(&mut self, count: u32, threads: u32, shmem: u32, warp: u32) -> bool {
        let mut trial = self.clone();
        let warps = threads.div_ceil(warp);
        for _ in 0..count {
            let mut best: Option<usize> = None;
            for sm in 0..trial.free_threads.len() {
                let fits =
                    trial.free_threads[sm] >= threads && trial.free_warps[sm] >= warps && trial.free_shmem[sm] >= shmem;
                if fits && best.is_none_or(|b| trial.free_threads[sm] > trial.free_threads[b]) {
                    best = Some(sm);
                }
            }
            let Some(sm) = best else { return false };
            trial.free_threads[sm] -= threads;
            trial.free_warps[sm] -= warps;
            trial.free_shmem[sm] -= shmem;
        }
        *self = trial;
        true
    }
}

/// A shard the simulator should launch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShardDecision {
    pub kernel: u64,
    pub node: NodeId,
    pub start: u32,
    pub count: u32,
    pub block: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CoordEvent {
    /// A critical kernel became resident.
    CriticalArrival {
        id: u64,
        profile: CriticalProfile,
    },
    CriticalRetire {
        id: u64,
    },
    ShardRetire {
        kernel: u64,
        node: NodeId,
    },
    /// Resources were released outside the coordinator's shards.
    CapacityChange,
    NormalArrival {
        kernel: u64,
    },
}

impl CoordEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            CoordEvent::CriticalArrival { .. } => "critical_arrival",
            CoordEvent::CriticalRetire { .. } => "critical_retire",
            CoordEvent::ShardRetire { .. } => "shard_retire",
            CoordEvent::CapacityChange => "capacity_change",
            CoordEvent::NormalArrival { .. } => "normal_arrival",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Decisions {
    /// Selected shards whose launch must be abandoned (re-planned).
    pub cancelled: Vec<(u64, NodeId)>,
    pub dispatched: Vec<ShardDecision>,
    /// Normal kernels whose every block has retired.
    pub completed: Vec<u64>,
}

struct QueuedKernel {
    id: u64,
    kernel: KernelSpec,
    tree: ShadedBinaryTree,
}

/// Single-owner coordinator state machine.
pub struct Coordinator {
    gpu: GpuSpec,
    queue: VecDeque<QueuedKernel>,
    critical: Vec<(u64, CriticalProfile)>,
}

impl Coordinator {
    pub fn new(gpu: GpuSpec) -> Self {
        Coordinator {
            gpu,
            queue: VecDeque::new(),
            critical: Vec::new(),
        }
    }

    /// Queues a normal kernel behind those already waiting.
    pub fn enqueue(&mut self, id: u64, kernel: KernelSpec, candidates: &[ScoredCandidate]) -> Result<(), CoordError> {
        let tree = build_tree(&kernel, candidates)?;
        self.queue.push_back(QueuedKernel { id, kernel, tree });
        Ok(())
    }

    /// Union of the resident critical kernels, if any.
    pub fn critical_profile(&self) -> Option<CriticalProfile> {
        let profiles: Vec<CriticalProfile> = self.critical.iter().map(|(_, p)| *p).collect();
        CriticalProfile::union(&profiles)
    }

    pub fn tree(&self, kernel: u64) -> Option<&ShadedBinaryTree> {
        self.queue.iter().find(|q| q.id == kernel).map(|q| &q.tree)
    }

    pub fn queued_kernels(&self) -> Vec<u64> {
        self.queue.iter().map(|q| q.id).collect()
    }

    pub fn head_has_frontier(&self) -> bool {
        self.queue.front().is_some_and(|q| q.tree.largest_frontier() > 0)
    }

    pub fn mark_dispatched(&mut self, kernel: u64, node: NodeId) -> Result<(), CoordError> {
        let q = self
            .queue
            .iter_mut()
            .find(|q| q.id == kernel)
            .ok_or(CoordError::UnknownKernel(kernel))?;
        q.tree
            .mark_dispatched(node)
            .map_err(|_| CoordError::NotInFlight { kernel, node })
    }

    /// Applies `event` and selects shards against `snapshot`.
    pub fn on_event(&mut self, event: CoordEvent, snapshot: &ResourceSnapshot) -> Result<Decisions, CoordError> {
        let mut out = self.apply(event)?;
        out.dispatched = self.select_shards(snapshot);
        Ok(out)
    }

    /// Applies `event` without selecting shards, so that simultaneous events
    /// can share one selection pass.
    pub fn apply(&mut self, event: CoordEvent) -> Result<Decisions, CoordError> {
        let mut out = Decisions::default();
        match event {
            CoordEvent::CriticalArrival { id, profile } => {
                self.critical.push((id, profile));
                if let Some(head) = self.queue.front_mut() {
                    let kernel = head.id;
                    out.cancelled = head.tree.revert_pending().into_iter().map(|n| (kernel, n)).collect();
                }
            }
            CoordEvent::CriticalRetire { id } => {
                let pos = self
                    .critical
                    .iter()
                    .position(|(c, _)| *c == id)
                    .ok_or(CoordError::UnknownCritical(id))?;
                self.critical.remove(pos);
            }
            CoordEvent::ShardRetire { kernel, node } => {
                let q = self
                    .queue
                    .iter_mut()
                    .find(|q| q.id == kernel)
                    .ok_or(CoordError::UnknownKernel(kernel))?;
                q.tree
                    .mark_retired(node)
                    .map_err(|_| CoordError::NotInFlight { kernel, node })?;
                while self.queue.front().is_some_and(|q| q.tree.is_complete()) {
                    out.completed.push(self.queue.pop_front().unwrap().id);
                }
            }
            CoordEvent::CapacityChange | CoordEvent::NormalArrival { .. } => {}
        }
        Ok(out)
    }

    /// Greedy shard selection for the head kernel.
    ///
    /// With critical kernels resident, shards are limited to the SMs and
    /// thread slots the critical kernels leave over and take the best-scoring
    /// elastic block size that fits. Otherwise shards use the original block
    /// size and as much of the GPU as is free.
    pub fn select_shards(&mut self, snapshot: &ResourceSnapshot) -> Vec<ShardDecision> {
        let critical = self.critical_profile();
        let gpu = &self.gpu;
        let Some(head) = self.queue.front_mut() else {
            return Vec::new();
        };
        head.tree.normalize();
        let mut capacity = snapshot.clone();
        let shmem = head.kernel.shmem_per_block;
        let mut picked = Vec::new();
        let in_flight = head.tree.in_flight_blocks();

        match critical {
            Some(profile) => {
                let mut block_budget = profile.max_shard_blocks(gpu).saturating_sub(in_flight);
                let max_threads = profile.max_elastic_threads(gpu);
                loop {
                    let frontier_max = head.tree.largest_frontier();
                    let choice = head.tree.admissible.iter().rev().find_map(|&size| {
                        if size > block_budget || size > frontier_max {
                            return None;
                        }
                        let shading = head.tree.shading_for(size, max_threads)?;
                        let mut trial = capacity.clone();
                        trial
                            .try_place(size, shading, shmem, gpu.warp_size)
                            .then_some((size, shading, trial))
                    });
                    let Some((size, shading, trial)) = choice else { break };
                    let Some(node) = head.tree.take(size, shading) else {
                        break;
                    };
                    capacity = trial;
                    block_budget -= size;
                    picked.push((node, shading));
                }
            }
            None => {
                let shading = head.tree.original_block;
                loop {
                    let frontier_max = head.tree.largest_frontier();
                    let choice = head.tree.admissible.iter().rev().find_map(|&size| {
                        if size > frontier_max {
                            return None;
                        }
                        let mut trial = capacity.clone();
                        trial
                            .try_place(size, shading, shmem, gpu.warp_size)
                            .then_some((size, trial))
                    });
                    let Some((size, trial)) = choice else { break };
                    let Some(node) = head.tree.take(size, shading) else {
                        break;
                    };
                    capacity = trial;
                    picked.push((node, shading));
                }
                // Nothing of ours is running and even the smallest shard does
                // not fit: launch it anyway so its blocks queue for capacity.
                if picked.is_empty() && in_flight == 0 && head.tree.largest_frontier() > 0 {
                    let size = head.tree.leaf_size();
                    if let Some(node) = head.tree.take(size, shading) {
                        picked.push((node, shading));
                    }
                }
            }
        }

        let kernel = head.id;
        picked
            .into_iter()
            .map(|(node, block)| {
                let n = head.tree.node(node);
                ShardDecision {
                    kernel,
                    node,
                    start: n.start,
                    count: n.count,
                    block,
                }
            })
            .collect()
    }
}

/// Formats one decision-log line.
pub fn decision_log_line(time: f64, event: &str, shards: &[ShardDecision]) -> String {
    let list: Vec<String> = shards
        .iter()
        .map(|s| format!("({},{},{})", s.start, s.count, s.block))
        .collect();
    format!("t={time:.9} event={event} dispatched=[{}]", list.join(","))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::ElasticCandidate;

    fn cands(grid: u32, pairs: &[(u32, u32, f64)]) -> Vec<ScoredCandidate> {
        pairs
            .iter()
            .map(|&(s, b, score)| ScoredCandidate {
                candidate: ElasticCandidate::new(grid, s, b),
                wiscore: score,
                oscore: 1,
                combined: score,
            })
            .collect()
    }

    fn gpu(n_sm: u32, l_threads: u32) -> GpuSpec {
        GpuSpec {
            name: "t".into(),
            n_sm,
            l_threads,
            warp_size: 32,
            max_warps_per_sm: l_threads / 32,
            shared_mem_per_sm: 64,
            mem_bandwidth: 1.0,
        }
    }

    #[test]
    fn tree_depth_from_admissible_sizes() {
        let k = KernelSpec::new(0, 16, 256, 1.0, 0.0);
        let t = build_tree(&k, &cands(16, &[(4, 64, 0.9), (8, 64, 0.5), (16, 64, 0.1)])).unwrap();
        assert_eq!(t.depth(), 3);
        assert_eq!(t.leaf_size(), 4);
        assert_eq!(t.admissible_sizes(), &[4, 8, 16]);
        assert_eq!(t.node(ShadedBinaryTree::ROOT).status, NodeStatus::Virtual);

        let one = build_tree(&KernelSpec::new(0, 1, 32, 1.0, 0.0), &cands(1, &[(1, 32, 1.0)])).unwrap();
        assert_eq!(one.depth(), 1);

        let root_only = build_tree(&k, &cands(16, &[(16, 128, 1.0)])).unwrap();
        assert_eq!(root_only.depth(), 1);
        assert_eq!(root_only.sharding_degree(), 0);
    }

    #[test]
    fn build_rejects_bad_input() {
        let k = KernelSpec::new(0, 0, 32, 1.0, 0.0);
        assert_eq!(
            build_tree(&k, &cands(1, &[(1, 32, 1.0)])).unwrap_err(),
            CoordError::EmptyGrid
        );
        let k = KernelSpec::new(3, 8, 32, 1.0, 0.0);
        assert_eq!(build_tree(&k, &[]).unwrap_err(), CoordError::NoCandidates(3));
    }

    #[test]
    fn solo_dispatches_root_whole() {
        let g = gpu(8, 1024);
        let k = KernelSpec::new(0, 16, 256, 1.0, 0.0);
        let mut c = Coordinator::new(g.clone());
        c.enqueue(1, k, &cands(16, &[(4, 64, 0.9), (8, 64, 0.5), (16, 64, 0.1)]))
            .unwrap();
        let d = c
            .on_event(CoordEvent::NormalArrival { kernel: 1 }, &ResourceSnapshot::idle(&g))
            .unwrap();
        assert_eq!(
            d.dispatched,
            vec![ShardDecision {
                kernel: 1,
                node: 0,
                start: 0,
                count: 16,
                block: 256
            }]
        );
    }

    #[test]
    fn leftover_sm_gets_one_leaf_shard() {
        // 15 critical blocks on 8 SMs leave exactly one SM in the last wave.
        let g = gpu(8, 1024);
        let k = KernelSpec::new(0, 16, 256, 1.0, 0.0);
        let mut c = Coordinator::new(g.clone());
        c.enqueue(
            1,
            k,
            &cands(16, &[(1, 512, 0.9), (1, 256, 0.8), (2, 256, 0.7), (16, 256, 0.1)]),
        )
        .unwrap();
        let mut snap = ResourceSnapshot::idle(&g);
        for sm in 0..7 {
            snap.free_threads[sm] = 0;
            snap.free_warps[sm] = 0;
        }
        snap.free_threads[7] = 512;
        snap.free_warps[7] = 16;
        let d = c
            .on_event(
                CoordEvent::CriticalArrival {
                    id: 9,
                    profile: CriticalProfile::new(15, 512),
                },
                &snap,
            )
            .unwrap();
        assert_eq!(d.dispatched.len(), 1);
        assert_eq!(d.dispatched[0].count, 1);
        assert!(d.dispatched[0].block <= 512);
        assert_eq!(d.dispatched[0].block, 512);
    }

    #[test]
    fn critical_arrival_shrinks_pending_shard() {
        let g = gpu(8, 1024);
        let k = KernelSpec::new(0, 16, 256, 1.0, 0.0);
        let mut c = Coordinator::new(g.clone());
        c.enqueue(1, k, &cands(16, &[(2, 128, 0.9), (16, 256, 0.2)])).unwrap();
        let idle = ResourceSnapshot::idle(&g);
        let d = c.on_event(CoordEvent::NormalArrival { kernel: 1 }, &idle).unwrap();
        assert_eq!(d.dispatched[0].count, 16);
        // Launch still pending when the critical kernel shows up.
        let d = c
            .on_event(
                CoordEvent::CriticalArrival {
                    id: 2,
                    profile: CriticalProfile::new(6, 256),
                },
                &idle,
            )
            .unwrap();
        assert_eq!(d.cancelled, vec![(1, 0)]);
        assert_eq!(d.dispatched.len(), 1);
        assert_eq!((d.dispatched[0].count, d.dispatched[0].block), (2, 128));
        c.tree(1).unwrap().check_invariants().unwrap();
    }

    #[test]
    fn frontier_re_expands_after_critical_retires() {
        let g = gpu(8, 1024);
        let k = KernelSpec::new(0, 16, 256, 1.0, 0.0);
        let mut c = Coordinator::new(g.clone());
        let idle = ResourceSnapshot::idle(&g);
        let d = c
            .on_event(
                CoordEvent::CriticalArrival {
                    id: 5,
                    profile: CriticalProfile::new(4, 256),
                },
                &idle,
            )
            .unwrap();
        assert!(d.dispatched.is_empty(), "no normal kernel queued yet");
        c.enqueue(1, k, &cands(16, &[(4, 128, 0.9), (8, 128, 0.5), (16, 128, 0.1)]))
            .unwrap();
        let d = c.on_event(CoordEvent::NormalArrival { kernel: 1 }, &idle).unwrap();
        // Four spare SMs: one shard of four blocks.
        assert_eq!(d.dispatched.iter().map(|s| s.count).collect::<Vec<_>>(), vec![4]);
        let first = d.dispatched[0];
        c.mark_dispatched(1, first.node).unwrap();
        let d = c
            .on_event(
                CoordEvent::ShardRetire {
                    kernel: 1,
                    node: first.node,
                },
                &idle,
            )
            .unwrap();
        assert_eq!(
            d.dispatched.iter().map(|s| (s.start, s.count)).collect::<Vec<_>>(),
            vec![(4, 4)]
        );
        c.mark_dispatched(1, d.dispatched[0].node).unwrap();
        let node = d.dispatched[0].node;
        let d = c.on_event(CoordEvent::ShardRetire { kernel: 1, node }, &idle).unwrap();
        c.mark_dispatched(1, d.dispatched[0].node).unwrap();
        // Critical leaves with half the grid retired and a quarter in flight.
        let d = c.on_event(CoordEvent::CriticalRetire { id: 5 }, &idle).unwrap();
        assert_eq!(
            d.dispatched.iter().map(|s| (s.start, s.count)).collect::<Vec<_>>(),
            vec![(12, 4)]
        );
        assert_eq!(d.dispatched[0].block, 256);
        c.tree(1).unwrap().check_invariants().unwrap();
    }

    #[test]
    fn merged_frontier_uses_larger_shard() {
        let g = gpu(8, 1024);
        let k = KernelSpec::new(0, 16, 256, 1.0, 0.0);
        let mut c = Coordinator::new(g.clone());
        let idle = ResourceSnapshot::idle(&g);
        c.on_event(
            CoordEvent::CriticalArrival {
                id: 5,
                profile: CriticalProfile::new(4, 256),
            },
            &idle,
        )
        .unwrap();
        c.enqueue(1, k, &cands(16, &[(4, 128, 0.9), (8, 128, 0.5), (16, 128, 0.1)]))
            .unwrap();
        let d = c.on_event(CoordEvent::NormalArrival { kernel: 1 }, &idle).unwrap();
        let first = d.dispatched[0];
        c.mark_dispatched(1, first.node).unwrap();
        let d = c.on_event(CoordEvent::CriticalRetire { id: 5 }, &idle).unwrap();
        // Blocks 4..16 are untouched: an 4-block sibling and an 8-block uncle.
        let got: Vec<(u32, u32)> = d.dispatched.iter().map(|s| (s.start, s.count)).collect();
        assert_eq!(got, vec![(8, 8), (4, 4)]);
    }

    #[test]
    fn shard_retire_on_idle_queue_is_noop() {
        let g = gpu(8, 1024);
        let k = KernelSpec::new(0, 4, 64, 1.0, 0.0);
        let mut c = Coordinator::new(g.clone());
        c.enqueue(1, k, &cands(4, &[(4, 64, 1.0)])).unwrap();
        let idle = ResourceSnapshot::idle(&g);
        let d = c.on_event(CoordEvent::NormalArrival { kernel: 1 }, &idle).unwrap();
        c.mark_dispatched(1, d.dispatched[0].node).unwrap();
        let d = c
            .on_event(CoordEvent::ShardRetire { kernel: 1, node: 0 }, &idle)
            .unwrap();
        assert_eq!(d.completed, vec![1]);
        assert!(d.dispatched.is_empty());
        assert!(c.queued_kernels().is_empty());
        let d = c.on_event(CoordEvent::CapacityChange, &idle).unwrap();
        assert_eq!(d, Decisions::default());
    }

    #[test]
    fn kernels_are_served_fifo() {
        let g = gpu(8, 1024);
        let mut c = Coordinator::new(g.clone());
        let idle = ResourceSnapshot::idle(&g);
        c.enqueue(1, KernelSpec::new(0, 4, 64, 1.0, 0.0), &cands(4, &[(4, 64, 1.0)]))
            .unwrap();
        c.enqueue(2, KernelSpec::new(1, 4, 64, 1.0, 0.0), &cands(4, &[(4, 64, 1.0)]))
            .unwrap();
        let d = c.on_event(CoordEvent::NormalArrival { kernel: 2 }, &idle).unwrap();
        assert_eq!(d.dispatched.len(), 1);
        assert_eq!(d.dispatched[0].kernel, 1);
        c.mark_dispatched(1, 0).unwrap();
        let d = c
            .on_event(CoordEvent::ShardRetire { kernel: 1, node: 0 }, &idle)
            .unwrap();
        assert_eq!(d.completed, vec![1]);
        assert_eq!(d.dispatched[0].kernel, 2);
    }

    #[test]
    fn oversized_kernel_still_progresses() {
        // 64 blocks of 1024 threads on 8 SMs: at most 8 resident at a time.
        let g = gpu(8, 1024);
        let mut c = Coordinator::new(g.clone());
        c.enqueue(
            1,
            KernelSpec::new(0, 64, 1024, 1.0, 0.0),
            &cands(64, &[(64, 1024, 1.0)]),
        )
        .unwrap();
        let d = c
            .on_event(CoordEvent::NormalArrival { kernel: 1 }, &ResourceSnapshot::idle(&g))
            .unwrap();
        assert_eq!(d.dispatched.len(), 1);
        assert_eq!(d.dispatched[0].count, 64);
    }

    #[test]
    fn unknown_events_are_errors() {
        let g = gpu(8, 1024);
        let mut c = Coordinator::new(g.clone());
        let idle = ResourceSnapshot::idle(&g);
        assert_eq!(
            c.on_event(CoordEvent::CriticalRetire { id: 3 }, &idle).unwrap_err(),
            CoordError::UnknownCritical(3)
        );
        assert_eq!(
            c.on_event(CoordEvent::ShardRetire { kernel: 3, node: 0 }, &idle)
                .unwrap_err(),
            CoordError::UnknownKernel(3)
        );
    }

    #[test]
    fn decision_log_format() {
        let line = decision_log_line(
            0.5,
            "shard_retire",
            &[ShardDecision {
                kernel: 1,
                node: 2,
                start: 8,
                count: 4,
                block: 64,
            }],
        );
        assert_eq!(line, "t=0.500000000 event=shard_retire dispatched=[(8,4,64)]");
    }
}
