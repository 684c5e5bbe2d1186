//! Random event driver for the coordinator. Checks tree invariants,
//! priority safety and exactly-once block coverage after every step and
//! panics on the first violation.

use std::collections::HashMap;

use elastic_core::coordinator::{CoordEvent, Coordinator, NodeId, ResourceSnapshot};
use elastic_core::gpu::GpuSpec;
use elastic_core::planner::{shrink_design_space, CriticalProfile, OverheadParams};
use elastic_core::workload::KernelSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Harness {
    gpu: GpuSpec,
    coord: Coordinator,
    rng: ChaCha8Rng,
    /// Selected shards not yet launched: (kernel, node, start, count).
    pending: Vec<(u64, NodeId, u32, u32)>,
    launched: Vec<(u64, NodeId, u32, u32)>,
    /// Per kernel, how often each logical block was launched and retired.
    launches: HashMap<u64, Vec<u32>>,
    retires: HashMap<u64, Vec<u32>>,
    grids: HashMap<u64, u32>,
    critical: Vec<u64>,
    pub next_kernel: u64,
    next_critical: u64,
    pub completed: Vec<u64>,
    pub steps: usize,
}

impl Harness {
    pub fn new(seed: u64, gpu: GpuSpec) -> Self {
        Harness {
            coord: Coordinator::new(gpu.clone()),
            gpu,
            rng: ChaCha8Rng::seed_from_u64(seed),
            pending: Vec::new(),
            launched: Vec::new(),
            launches: HashMap::new(),
            retires: HashMap::new(),
            grids: HashMap::new(),
            critical: Vec::new(),
            next_kernel: 0,
            next_critical: 0,
            completed: Vec::new(),
            steps: 0,
        }
    }

    fn random_profile(&mut self) -> CriticalProfile {
        let blocks = self.rng.gen_range(1..=3 * self.gpu.n_sm);
        let threads = 32 * self.rng.gen_range(1..=self.gpu.l_threads / 64);
        CriticalProfile::new(blocks, threads)
    }

    fn random_snapshot(&mut self) -> ResourceSnapshot {
        let mut s = ResourceSnapshot::idle(&self.gpu);
        if self.rng.gen_bool(0.3) {
            return s;
        }
        for sm in 0..self.gpu.n_sm as usize {
            let used = 32 * self.rng.gen_range(0..=self.gpu.l_threads / 32);
            s.free_threads[sm] -= used;
            s.free_warps[sm] -= used / 32;
        }
        s
    }

    fn enqueue(&mut self) {
        let grid = self.rng.gen_range(1..=8) << self.rng.gen_range(0..6);
        let block = 32 * self.rng.gen_range(1..=8);
        let kernel = KernelSpec::new(0, grid, block, 1.0, 0.3);
        let profiles: Vec<CriticalProfile> = (0..self.rng.gen_range(1..3)).map(|_| self.random_profile()).collect();
        let plan = shrink_design_space(&kernel, &profiles, &self.gpu, &OverheadParams::default()).unwrap();
        let id = self.next_kernel;
        self.next_kernel += 1;
        self.coord.enqueue(id, kernel, &plan.selected).unwrap();
        self.grids.insert(id, grid);
        self.launches.insert(id, vec![0; grid as usize]);
        self.retires.insert(id, vec![0; grid as usize]);
        self.step(CoordEvent::NormalArrival { kernel: id });
    }

    fn step(&mut self, event: CoordEvent) {
        let snapshot = self.random_snapshot();
        let d = self.coord.on_event(event, &snapshot).unwrap();
        self.steps += 1;
        for (k, n) in &d.cancelled {
            let pos = self
                .pending
                .iter()
                .position(|p| p.0 == *k && p.1 == *n)
                .expect("cancelled shard was pending");
            self.pending.remove(pos);
        }
        self.completed.extend(&d.completed);

        let profile = self.coord.critical_profile();
        let free: u64 = snapshot.free_threads.iter().map(|&t| t as u64).sum();
        let claimed: u64 = d.dispatched.iter().map(|s| s.count as u64 * s.block as u64).sum();
        assert!(claimed <= free || d.dispatched.len() == 1, "shards exceed the snapshot");
        for s in &d.dispatched {
            assert!(s.count >= 1 && s.block >= 1);
            if let Some(p) = profile {
                assert!(
                    s.block <= p.max_elastic_threads(&self.gpu),
                    "shading violates thread constraint"
                );
            }
            self.pending.push((s.kernel, s.node, s.start, s.count));
        }
        if let (Some(p), Some(head)) = (profile, self.coord.queued_kernels().first()) {
            if !d.dispatched.is_empty() {
                let in_flight = self.coord.tree(*head).unwrap().in_flight_blocks();
                assert!(
                    in_flight <= p.max_shard_blocks(&self.gpu),
                    "{in_flight} blocks next to {p:?}"
                );
            }
        }
        // Only the head kernel's tree changes after it was enqueued.
        for id in self.coord.queued_kernels().into_iter().take(2) {
            let t = self.coord.tree(id).unwrap();
            t.check_invariants().unwrap_or_else(|e| panic!("kernel {id}: {e}"));
            assert!(t.sharding_degree() <= t.grid().trailing_zeros());
        }
    }

    fn launch_one(&mut self) {
        if self.pending.is_empty() {
            return;
        }
        let i = self.rng.gen_range(0..self.pending.len());
        let p = self.pending.remove(i);
        self.coord.mark_dispatched(p.0, p.1).unwrap();
        let counts = self.launches.get_mut(&p.0).unwrap();
        for b in p.2..p.2 + p.3 {
            counts[b as usize] += 1;
        }
        self.launched.push(p);
    }

    fn retire_one(&mut self) {
        if self.launched.is_empty() {
            return;
        }
        let i = self.rng.gen_range(0..self.launched.len());
        let p = self.launched.remove(i);
        let counts = self.retires.get_mut(&p.0).unwrap();
        for b in p.2..p.2 + p.3 {
            counts[b as usize] += 1;
        }
        self.step(CoordEvent::ShardRetire { kernel: p.0, node: p.1 });
    }

    pub fn random_event(&mut self) {
        match self.rng.gen_range(0..100) {
            0..=9 => self.enqueue(),
            10..=19 => {
                let id = self.next_critical;
                self.next_critical += 1;
                self.critical.push(id);
                let profile = self.random_profile();
                self.step(CoordEvent::CriticalArrival { id, profile });
            }
            20..=29 => {
                if !self.critical.is_empty() {
                    let i = self.rng.gen_range(0..self.critical.len());
                    let id = self.critical.remove(i);
                    self.step(CoordEvent::CriticalRetire { id });
                }
            }
            30..=59 => self.launch_one(),
            60..=89 => self.retire_one(),
            _ => self.step(CoordEvent::CapacityChange),
        }
    }

    /// Launches and retires everything left, with critical kernels gone.
    pub fn drain(&mut self) {
        while let Some(id) = self.critical.pop() {
            self.step(CoordEvent::CriticalRetire { id });
        }
        let mut guard = 0;
        while !self.coord.queued_kernels().is_empty() {
            guard += 1;
            assert!(guard < 1_000_000, "drain does not progress");
            if self.pending.is_empty() && self.launched.is_empty() {
                self.step(CoordEvent::CapacityChange);
            }
            while !self.pending.is_empty() {
                self.launch_one();
            }
            self.retire_one();
        }
    }

    pub fn check_exactly_once(&self) {
        for id in &self.completed {
            let grid = self.grids[id] as usize;
            assert_eq!(self.launches[id], vec![1; grid], "kernel {id} launch coverage");
            assert_eq!(self.retires[id], vec![1; grid], "kernel {id} retire coverage");
        }
    }
}

/// Runs `steps` random events per (seed, gpu), drains, and checks
/// completion and FIFO order. Returns the number of events driven.
pub fn run_sequences(runs: &[(u64, GpuSpec)], steps: usize) -> usize {
    let mut total = 0;
    for (seed, gpu) in runs {
        let mut h = Harness::new(*seed, gpu.clone());
        while h.steps < steps {
            h.random_event();
            h.check_exactly_once();
        }
        h.drain();
        h.check_exactly_once();
        assert_eq!(h.completed.len() as u64, h.next_kernel, "every queued kernel completes");
        assert!(
            h.completed.windows(2).all(|w| w[0] < w[1]),
            "kernels complete in FIFO order"
        );
        total += h.steps;
    }
    total
}
