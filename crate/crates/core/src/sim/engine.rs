//! Discrete-event engine.
//!
//! Time advances from event to event. Between events every resident block
//! progresses at the rate given by the contention law for the current
//! residency; rates are recomputed after every batch of events sharing a
//! timestamp. Events at one timestamp are handled retires first, then
//! launches reaching the GPU, then request arrivals, and block dispatch runs
//! once all of them are processed.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, VecDeque};

use crate::coordinator::{decision_log_line, CoordEvent, Coordinator, NodeId, ResourceSnapshot};
use crate::gpu::{select_sm, GpuSpec, ResidentBlock, SmState};
use crate::planner::{CriticalProfile, ElasticCandidate, ShrunkSpace};
use crate::workload::{generate_arrivals, Criticality, KernelSpec, Workload};

use super::model::{block_service_time, BlockLoad, ContentionModel};
use super::trace::{EventKind, RequestRecord, TaskRef, TraceEvent};
use super::{Policy, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ev {
    LaunchReady(u64),
    Arrival(Criticality),
}

impl Ev {
    fn priority(self) -> u8 {
        match self {
            Ev::LaunchReady(_) => 1,
            Ev::Arrival(_) => 2,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    time: f64,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    // Reversed so the max-heap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.ev.priority().cmp(&self.ev.priority()))
            .then(other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone, Copy)]
struct ShardTag {
    coord_kernel: u64,
    node: NodeId,
}

#[derive(Debug, Clone)]
struct Launch {
    task: TaskRef,
    kernel_idx: u32,
    start: u32,
    count: u32,
    dispatched: u32,
    retired: u32,
    /// Physical threads per block.
    threads: u32,
    block_work: f64,
    mem_intensity: f64,
    shmem: u32,
    shard: Option<ShardTag>,
    cancelled: bool,
}

#[derive(Debug, Clone, Copy)]
struct Resident {
    launch: u64,
    block: u32,
    sm: usize,
    load: BlockLoad,
    /// Fraction of the block's work still to do.
    rem: f64,
    dur: f64,
    finish: f64,
    done_work: f64,
}

struct Stream {
    kernels: Vec<KernelSpec>,
    reissue: bool,
    /// Arrived requests not yet started.
    waiting: VecDeque<u32>,
    current: Option<u32>,
    kernel: u32,
    in_flight: bool,
    /// Next shard of the current kernel (static elastic policy).
    shard: u32,
    /// Kernels left in the current barrier group (IB policy).
    group_left: u32,
    barrier_wait: bool,
    coord_kernel: Option<u64>,
    records: Vec<RequestRecord>,
}

impl Stream {
    fn new(kernels: Vec<KernelSpec>, reissue: bool) -> Self {
        Stream {
            kernels,
            reissue,
            waiting: VecDeque::new(),
            current: None,
            kernel: 0,
            in_flight: false,
            shard: 0,
            group_left: 0,
            barrier_wait: false,
            coord_kernel: None,
            records: Vec::new(),
        }
    }

    fn busy(&self) -> bool {
        self.current.is_some()
    }
}

fn slot(class: Criticality) -> usize {
    match class {
        Criticality::Critical => 0,
        Criticality::Normal => 1,
    }
}

pub(crate) struct EngineOutput {
    pub events: Vec<TraceEvent>,
    pub requests: Vec<RequestRecord>,
    pub end_time: f64,
    pub occupancy: f64,
    pub decisions: Vec<String>,
    pub max_work_error: f64,
}

pub(crate) struct Engine<'a> {
    gpu: &'a GpuSpec,
    model: &'a ContentionModel,
    policy: &'a Policy,
    plans: Option<&'a [ShrunkSpace]>,
    horizon: f64,
    now: f64,
    heap: BinaryHeap<Pending>,
    seq: u64,
    sms: Vec<SmState>,
    resident: Vec<Resident>,
    launches: Vec<Launch>,
    queue_critical: VecDeque<u64>,
    queue_normal: VecDeque<u64>,
    streams: [Stream; 2],
    seq_owner: Option<Criticality>,
    seq_last: Option<Criticality>,
    coord: Option<Coordinator>,
    coord_events: VecDeque<CoordEvent>,
    coord_seq: u64,
    pending_shards: HashMap<(u64, NodeId), u64>,
    record_trace: bool,
    record_decisions: bool,
    events: Vec<TraceEvent>,
    decisions: Vec<String>,
    sm_warp_time: Vec<f64>,
    sm_active_time: Vec<f64>,
    max_work_error: f64,
}

impl<'a> Engine<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        workload: &Workload,
        policy: &'a Policy,
        gpu: &'a GpuSpec,
        model: &'a ContentionModel,
        plans: Option<&'a [ShrunkSpace]>,
        record_trace: bool,
        record_decisions: bool,
    ) -> Self {
        let n = gpu.n_sm as usize;
        let critical = Stream::new(
            workload.critical.task.kernels.clone(),
            workload.critical.pattern.is_closed_loop(),
        );
        let normal = Stream::new(
            workload.normal.task.kernels.clone(),
            workload.normal.pattern.is_closed_loop(),
        );
        Engine {
            gpu,
            model,
            policy,
            plans,
            horizon: workload.duration,
            now: 0.0,
            heap: BinaryHeap::new(),
            seq: 0,
            sms: gpu.empty_sms(),
            resident: Vec::new(),
            launches: Vec::new(),
            queue_critical: VecDeque::new(),
            queue_normal: VecDeque::new(),
            streams: [critical, normal],
            seq_owner: None,
            seq_last: None,
            coord: matches!(policy, Policy::Miriam).then(|| Coordinator::new(gpu.clone())),
            coord_events: VecDeque::new(),
            coord_seq: 0,
            pending_shards: HashMap::new(),
            record_trace,
            record_decisions,
            events: Vec::new(),
            decisions: Vec::new(),
            sm_warp_time: vec![0.0; n],
            sm_active_time: vec![0.0; n],
            max_work_error: 0.0,
        }
    }

    pub fn run(mut self, workload: &Workload, seed: u64) -> Result<EngineOutput, SimError> {
        for (class, load, salt) in [
            (Criticality::Critical, &workload.critical, 0u64),
            (Criticality::Normal, &workload.normal, 0x9e37_79b9_7f4a_7c15),
        ] {
            let arrivals = generate_arrivals(&load.pattern, self.horizon, seed ^ salt)?;
            if arrivals.reissue {
                self.push(0.0, Ev::Arrival(class));
            }
            let horizon = self.horizon;
            for t in arrivals.times.into_iter().filter(|t| *t < horizon) {
                self.push(t, Ev::Arrival(class));
            }
        }

        while let Some(t) = self.next_time() {
            self.advance(t);
            self.retire_due(t)?;
            while self.heap.peek().is_some_and(|p| p.time <= t) {
                let p = self.heap.pop().unwrap();
                match p.ev {
                    Ev::LaunchReady(id) => self.launch_ready(id)?,
                    Ev::Arrival(class) => self.arrival(class)?,
                }
                self.pump()?;
            }
            self.dispatch();
            self.recompute();
        }

        if self.streams.iter().any(|s| s.busy()) {
            return Err(SimError::Stalled { time: self.now });
        }

        let occupancy = self.occupancy();
        let [critical, normal] = self.streams;
        let mut requests = critical.records;
        requests.extend(normal.records);
        Ok(EngineOutput {
            events: self.events,
            requests,
            end_time: self.now,
            occupancy,
            decisions: self.decisions,
            max_work_error: self.max_work_error,
        })
    }

    fn push(&mut self, time: f64, ev: Ev) {
        self.seq += 1;
        self.heap.push(Pending {
            time,
            seq: self.seq,
            ev,
        });
    }

    fn next_time(&self) -> Option<f64> {
        let retire = self.resident.iter().map(|r| r.finish).min_by(f64::total_cmp);
        let event = self.heap.peek().map(|p| p.time);
        match (retire, event) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    fn advance(&mut self, t: f64) {
        let dt = t - self.now;
        if dt > 0.0 {
            for r in &mut self.resident {
                let frac = dt / r.dur;
                r.rem -= frac;
                r.done_work += r.load.work * frac;
            }
            let warp = self.gpu.warp_size as f64;
            for (i, sm) in self.sms.iter().enumerate() {
                if !sm.is_idle() {
                    self.sm_active_time[i] += dt;
                    self.sm_warp_time[i] += sm.resident_threads() as f64 / warp * dt;
                }
            }
        }
        self.now = t;
    }

    fn recompute(&mut self) {
        let total_demand: f64 = self.resident.iter().map(|r| r.load.memory_demand()).sum();
        for r in &mut self.resident {
            let sm_threads = self.sms[r.sm].resident_threads();
            r.dur = block_service_time(&r.load, sm_threads, total_demand, self.model);
            r.finish = self.now + r.rem * r.dur;
        }
    }

    fn occupancy(&self) -> f64 {
        let max = self.gpu.max_warps_per_sm as f64;
        let (sum, n) = self
            .sm_warp_time
            .iter()
            .zip(&self.sm_active_time)
            .filter(|(_, a)| **a > 0.0)
            .fold((0.0, 0usize), |(s, n), (w, a)| (s + w / (a * max), n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    fn trace(
        &mut self,
        kind: EventKind,
        launch: Option<u64>,
        task: TaskRef,
        blocks: Option<(u32, u32)>,
        sm: Option<usize>,
        threads: u32,
    ) {
        if !self.record_trace {
            return;
        }
        let kernel = launch.map(|l| self.launches[l as usize].kernel_idx);
        self.events.push(TraceEvent {
            time: self.now,
            kind,
            task,
            kernel,
            launch,
            blocks,
            sm: sm.map(|s| s as u32),
            threads,
        });
    }

    // ---- blocks --------------------------------------------------------

    fn retire_due(&mut self, t: f64) -> Result<(), SimError> {
        let mut due: Vec<Resident> = Vec::new();
        let mut i = 0;
        while i < self.resident.len() {
            if self.resident[i].finish <= t {
                due.push(self.resident.swap_remove(i));
            } else {
                i += 1;
            }
        }
        if due.is_empty() {
            return Ok(());
        }
        due.sort_by_key(|r| (r.launch, r.block));
        let coord_events_before = self.coord_events.len();
        for r in due {
            let total = r.load.work;
            let err = ((r.done_work - total) / total).abs();
            self.max_work_error = self.max_work_error.max(err);
            self.sms[r.sm].release(r.launch, r.block);
            let task = self.launches[r.launch as usize].task;
            self.trace(
                EventKind::Retire,
                Some(r.launch),
                task,
                Some((r.block, r.block + 1)),
                Some(r.sm),
                r.load.threads,
            );
            let l = &mut self.launches[r.launch as usize];
            l.retired += 1;
            if l.retired == l.count {
                self.launch_complete(r.launch)?;
            }
        }
        if let Some(coord) = &self.coord {
            if self.coord_events.len() == coord_events_before && coord.head_has_frontier() {
                self.coord_events.push_back(CoordEvent::CapacityChange);
            }
        }
        self.pump()
    }

    /// Strict FIFO: critical launches ahead of normal ones; the head block
    /// waits for capacity and nothing behind it may pass.
    fn dispatch(&mut self) {
        loop {
            let Some(&id) = self.queue_critical.front().or(self.queue_normal.front()) else {
                return;
            };
            let l = &self.launches[id as usize];
            let Ok(sm) = select_sm(&self.sms, l.threads, l.shmem, self.gpu) else {
                return;
            };
            let block = l.start + l.dispatched;
            let admitted = self.sms[sm].admit(ResidentBlock {
                kernel: id,
                block,
                threads: l.threads,
                shmem: l.shmem,
            });
            debug_assert!(admitted);
            let load = BlockLoad {
                threads: l.threads,
                work: l.block_work,
                mem_intensity: l.mem_intensity,
            };
            let (task, threads) = (l.task, l.threads);
            self.resident.push(Resident {
                launch: id,
                block,
                sm,
                load,
                rem: 1.0,
                dur: f64::INFINITY,
                finish: f64::INFINITY,
                done_work: 0.0,
            });
            self.trace(
                EventKind::Dispatch,
                Some(id),
                task,
                Some((block, block + 1)),
                Some(sm),
                threads,
            );
            let l = &mut self.launches[id as usize];
            l.dispatched += 1;
            if l.dispatched == l.count {
                match l.task.class {
                    Criticality::Critical => self.queue_critical.pop_front(),
                    Criticality::Normal => self.queue_normal.pop_front(),
                };
            }
        }
    }

    // ---- launches ------------------------------------------------------

    fn new_launch(
        &mut self,
        class: Criticality,
        kernel_idx: u32,
        start: u32,
        count: u32,
        threads: u32,
        shard: Option<ShardTag>,
    ) -> u64 {
        let s = &self.streams[slot(class)];
        let k = &s.kernels[kernel_idx as usize];
        let task = TaskRef {
            class,
            request: s.current.expect("launch outside a request"),
        };
        let launch = Launch {
            task,
            kernel_idx,
            start,
            count,
            dispatched: 0,
            retired: 0,
            threads,
            block_work: k.block_work(),
            mem_intensity: k.mem_intensity,
            shmem: k.shmem_per_block,
            shard,
            cancelled: false,
        };
        self.launches.push(launch);
        (self.launches.len() - 1) as u64
    }

    fn launch_ready(&mut self, id: u64) -> Result<(), SimError> {
        let l = &self.launches[id as usize];
        if l.cancelled {
            return Ok(());
        }
        if let Some(tag) = l.shard {
            self.pending_shards.remove(&(tag.coord_kernel, tag.node));
            if let Some(coord) = &mut self.coord {
                coord.mark_dispatched(tag.coord_kernel, tag.node)?;
            }
        }
        match self.launches[id as usize].task.class {
            Criticality::Critical => self.queue_critical.push_back(id),
            Criticality::Normal => self.queue_normal.push_back(id),
        }
        Ok(())
    }

    fn launch_complete(&mut self, id: u64) -> Result<(), SimError> {
        let l = &self.launches[id as usize];
        let (task, range, shard) = (l.task, (l.start, l.start + l.count), l.shard);
        self.trace(EventKind::KernelRetire, Some(id), task, Some(range), None, 0);
        match (task.class, shard) {
            (Criticality::Critical, _) => {
                self.kernel_done(Criticality::Critical)?;
                if self.coord.is_some() {
                    self.coord_events.push_back(CoordEvent::CriticalRetire { id });
                }
            }
            (Criticality::Normal, Some(tag)) => {
                self.coord_events.push_back(CoordEvent::ShardRetire {
                    kernel: tag.coord_kernel,
                    node: tag.node,
                });
            }
            (Criticality::Normal, None) => {
                if let Policy::StaticElastic(_) = self.policy {
                    self.streams[1].shard += 1;
                    let c = self.static_candidate(self.streams[1].kernel);
                    if self.streams[1].shard < c.n_shards {
                        self.submit_static_shard();
                        return Ok(());
                    }
                }
                self.kernel_done(Criticality::Normal)?;
            }
        }
        Ok(())
    }

    // ---- streams and requests ------------------------------------------

    fn arrival(&mut self, class: Criticality) -> Result<(), SimError> {
        self.new_request(class);
        self.schedule(class)
    }

    fn new_request(&mut self, class: Criticality) {
        let s = &mut self.streams[slot(class)];
        let request = s.records.len() as u32;
        let task = TaskRef { class, request };
        s.records.push(RequestRecord {
            task,
            arrival: self.now,
            start: None,
            completion: None,
        });
        s.waiting.push_back(request);
        self.trace(EventKind::Arrival, None, task, None, None, 0);
    }

    /// Starts waiting requests where the policy allows it.
    fn schedule(&mut self, class: Criticality) -> Result<(), SimError> {
        if self.now >= self.horizon {
            return Ok(());
        }
        if let Policy::Sequential = self.policy {
            if self.seq_owner.is_some() {
                return Ok(());
            }
            let preferred = match self.seq_last {
                Some(Criticality::Critical) => [Criticality::Normal, Criticality::Critical],
                _ => [Criticality::Critical, Criticality::Normal],
            };
            if let Some(c) = preferred
                .into_iter()
                .find(|c| !self.streams[slot(*c)].waiting.is_empty())
            {
                self.seq_owner = Some(c);
                self.seq_last = Some(c);
                self.start_request(c)?;
            }
            return Ok(());
        }
        let s = &self.streams[slot(class)];
        if !s.busy() && !s.waiting.is_empty() {
            self.start_request(class)?;
        }
        Ok(())
    }

    fn start_request(&mut self, class: Criticality) -> Result<(), SimError> {
        let now = self.now;
        let s = &mut self.streams[slot(class)];
        let req = s.waiting.pop_front().expect("no waiting request");
        s.records[req as usize].start = Some(now);
        s.current = Some(req);
        s.kernel = 0;
        self.submit_kernel(class)
    }

    fn submit_kernel(&mut self, class: Criticality) -> Result<(), SimError> {
        let lo = self.model.launch_overhead;
        let k = self.streams[slot(class)].kernel;
        let kernel = self.streams[slot(class)].kernels[k as usize].clone();
        match class {
            Criticality::Critical => {
                let id = self.new_launch(class, k, 0, kernel.grid, kernel.block, None);
                self.streams[0].in_flight = true;
                self.push(self.now + lo, Ev::LaunchReady(id));
                if self.coord.is_some() {
                    self.coord_events.push_back(CoordEvent::CriticalArrival {
                        id,
                        profile: CriticalProfile::of_kernel(&kernel),
                    });
                }
            }
            Criticality::Normal => match self.policy {
                Policy::Sequential | Policy::MultiStream => {
                    let id = self.new_launch(class, k, 0, kernel.grid, kernel.block, None);
                    self.streams[1].in_flight = true;
                    self.push(self.now + lo, Ev::LaunchReady(id));
                }
                Policy::InterStreamBarrier { group } => {
                    let group = *group;
                    let s = &mut self.streams[1];
                    s.in_flight = true;
                    if s.group_left == 0 {
                        if self.streams[0].in_flight {
                            self.streams[1].barrier_wait = true;
                            return Ok(());
                        }
                        self.streams[1].group_left = group;
                        self.launch_normal_full(lo + lo);
                    } else {
                        self.launch_normal_full(lo);
                    }
                }
                Policy::Miriam => {
                    let plans = self.plans.ok_or(SimError::MissingPlans)?;
                    let cid = self.coord_seq;
                    self.coord_seq += 1;
                    let coord = self.coord.as_mut().expect("miriam without coordinator");
                    coord.enqueue(cid, kernel, &plans[k as usize].selected)?;
                    let s = &mut self.streams[1];
                    s.in_flight = true;
                    s.coord_kernel = Some(cid);
                    self.coord_events.push_back(CoordEvent::NormalArrival { kernel: cid });
                }
                Policy::StaticElastic(_) => {
                    self.streams[1].in_flight = true;
                    self.streams[1].shard = 0;
                    self.submit_static_shard();
                }
            },
        }
        Ok(())
    }

    /// Launches the current normal kernel un-sliced after `delay`; used by the
    /// barrier policy, which counts the kernel against its group.
    fn launch_normal_full(&mut self, delay: f64) {
        let s = &mut self.streams[1];
        s.group_left -= 1;
        let k = s.kernel;
        let (grid, block) = {
            let kernel = &s.kernels[k as usize];
            (kernel.grid, kernel.block)
        };
        let id = self.new_launch(Criticality::Normal, k, 0, grid, block, None);
        self.push(self.now + delay, Ev::LaunchReady(id));
    }

    fn static_candidate(&self, k: u32) -> ElasticCandidate {
        let kernel = &self.streams[1].kernels[k as usize];
        match self.policy {
            Policy::StaticElastic(c) => c
                .get(k as usize)
                .copied()
                .unwrap_or_else(|| ElasticCandidate::original(kernel)),
            _ => ElasticCandidate::original(kernel),
        }
    }

    fn submit_static_shard(&mut self) {
        let s = &self.streams[1];
        let (k, shard) = (s.kernel, s.shard);
        let grid = s.kernels[k as usize].grid;
        let c = self.static_candidate(k);
        let start = shard * c.shard_grid;
        let count = c.shard_grid.min(grid - start);
        let id = self.new_launch(Criticality::Normal, k, start, count, c.block, None);
        self.push(self.now + self.model.launch_overhead, Ev::LaunchReady(id));
    }

    /// The current kernel of `class` has retired all of its blocks.
    fn kernel_done(&mut self, class: Criticality) -> Result<(), SimError> {
        let now = self.now;
        let s = &mut self.streams[slot(class)];
        s.in_flight = false;
        s.coord_kernel = None;
        s.kernel += 1;
        if class == Criticality::Critical && self.streams[1].barrier_wait {
            let lo = self.model.launch_overhead;
            let group = match self.policy {
                Policy::InterStreamBarrier { group } => *group,
                _ => 1,
            };
            let n = &mut self.streams[1];
            n.barrier_wait = false;
            n.group_left = group;
            self.launch_normal_full(lo + lo);
        }
        let s = &mut self.streams[slot(class)];
        if (s.kernel as usize) < s.kernels.len() {
            return self.submit_kernel(class);
        }
        let req = s.current.take().expect("kernel done outside a request");
        s.records[req as usize].completion = Some(now);
        let reissue = s.reissue && now < self.horizon;
        if reissue {
            self.new_request(class);
        }
        if let Policy::Sequential = self.policy {
            self.seq_owner = None;
        }
        self.schedule(class)
    }

    // ---- coordinator ---------------------------------------------------

    /// Feeds pending events to the coordinator and launches what it picks.
    /// Events raised at one instant share a single selection pass.
    fn pump(&mut self) -> Result<(), SimError> {
        if self.coord_events.is_empty() {
            return Ok(());
        }
        let mut kinds: Vec<&'static str> = Vec::new();
        let mut replanned = false;
        while let Some(event) = self.coord_events.pop_front() {
            kinds.push(event.kind());
            replanned |= matches!(
                event,
                CoordEvent::CriticalArrival { .. } | CoordEvent::CriticalRetire { .. }
            );
            let coord = self.coord.as_mut().expect("coordinator event without coordinator");
            let applied = coord.apply(event)?;
            for key in applied.cancelled {
                if let Some(id) = self.pending_shards.remove(&key) {
                    self.launches[id as usize].cancelled = true;
                }
            }
            for done in applied.completed {
                debug_assert_eq!(self.streams[1].coord_kernel, Some(done));
                self.kernel_done(Criticality::Normal)?;
            }
        }
        // Decisions see the GPU after every queued block that fits has been
        // placed.
        self.dispatch();
        let snapshot = self.snapshot();
        let coord = self.coord.as_mut().expect("coordinator event without coordinator");
        let picked = coord.select_shards(&snapshot);
        if self.record_decisions {
            self.decisions
                .push(decision_log_line(self.now, &kinds.join("+"), &picked));
        }
        // Re-planning for a critical kernel sits on the dispatch path; other
        // decisions are taken while earlier work is still running.
        let delay = if replanned {
            self.model.coordinator_overhead + self.model.launch_overhead
        } else {
            self.model.launch_overhead
        };
        for d in picked {
            let k = self.streams[1].kernel;
            let tag = ShardTag {
                coord_kernel: d.kernel,
                node: d.node,
            };
            let id = self.new_launch(Criticality::Normal, k, d.start, d.count, d.block, Some(tag));
            self.pending_shards.insert((d.kernel, d.node), id);
            self.push(self.now + delay, Ev::LaunchReady(id));
        }
        Ok(())
    }

    /// Free resources per SM, less what queued and pending launches will
    /// claim once they dispatch. Nothing is free while a claimed block cannot
    /// be placed.
    fn snapshot(&self) -> ResourceSnapshot {
        let mut snap = ResourceSnapshot {
            free_threads: self.sms.iter().map(|s| s.free_threads()).collect(),
            free_warps: self.sms.iter().map(|s| s.free_warps()).collect(),
            free_shmem: self.sms.iter().map(|s| s.free_shared_mem()).collect(),
        };
        let queued = self.queue_critical.iter().chain(&self.queue_normal).copied();
        let pending = self.pending_shards.values().copied();
        let mut claims: Vec<u64> = queued.chain(pending).collect();
        claims.sort_unstable();
        claims.dedup();
        for id in claims {
            let l = &self.launches[id as usize];
            if l.cancelled {
                continue;
            }
            let warps = self.gpu.warps_for(l.threads);
            for _ in l.dispatched..l.count {
                let best = (0..snap.free_threads.len())
                    .filter(|&sm| {
                        snap.free_threads[sm] >= l.threads
                            && snap.free_warps[sm] >= warps
                            && snap.free_shmem[sm] >= l.shmem
                    })
                    .max_by(|&a, &b| snap.free_threads[a].cmp(&snap.free_threads[b]).then(b.cmp(&a)));
                // Strict FIFO: anything launched now waits behind this block.
                let Some(sm) = best else {
                    return ResourceSnapshot {
                        free_threads: vec![0; snap.free_threads.len()],
                        free_warps: vec![0; snap.free_warps.len()],
                        free_shmem: vec![0; snap.free_shmem.len()],
                    };
                };
                snap.free_threads[sm] -= l.threads;
                snap.free_warps[sm] -= warps;
                snap.free_shmem[sm] -= l.shmem;
            }
        }
        snap
    }
}
