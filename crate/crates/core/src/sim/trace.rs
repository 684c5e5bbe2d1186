use std::fmt;

use crate::workload::Criticality;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Arrival,
    Dispatch,
    Retire,
    KernelRetire,
}

impl EventKind {
    pub fn tag(self) -> &'static str {
        match self {
            EventKind::Arrival => "arr",
            EventKind::Dispatch => "disp",
            EventKind::Retire => "ret",
            EventKind::KernelRetire => "kret",
        }
    }
}

/// Identifies one request of one task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TaskRef {
    pub class: Criticality,
    pub request: u32,
}

impl fmt::Display for TaskRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.class {
            Criticality::Critical => 'c',
            Criticality::Normal => 'n',
        };
        write!(f, "{prefix}{}", self.request)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEvent {
    pub time: f64,
    pub kind: EventKind,
    pub task: TaskRef,
    /// Kernel index within the task's model; absent for arrivals.
    pub kernel: Option<u32>,
    /// Launch (kernel or shard) the blocks belong to.
    pub launch: Option<u64>,
    /// Half-open logical block range.
    pub blocks: Option<(u32, u32)>,
    pub sm: Option<u32>,
    /// Physical threads per block for dispatch and retire events.
    pub threads: u32,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={:.9} kind={} task={}", self.time, self.kind.tag(), self.task)?;
        match self.kernel {
            Some(k) => write!(f, " kernel={k}")?,
            None => f.write_str(" kernel=-")?,
        }
        match self.blocks {
            Some((s, e)) => write!(f, " blocks={s}..{e}")?,
            None => f.write_str(" blocks=-")?,
        }
        match self.sm {
            Some(sm) => write!(f, " sm={sm}"),
            None => f.write_str(" sm=-"),
        }
    }
}

/// Per-request timing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RequestRecord {
    pub task: TaskRef,
    pub arrival: f64,
    /// When the request's first kernel was submitted to the GPU.
    pub start: Option<f64>,
    pub completion: Option<f64>,
}

impl RequestRecord {
    pub fn class(&self) -> Criticality {
        self.task.class
    }

    /// Service latency, from submission to completion.
    pub fn latency(&self) -> Option<f64> {
        Some(self.completion? - self.start?)
    }

    /// Response time, from arrival to completion.
    pub fn response(&self) -> Option<f64> {
        Some(self.completion? - self.arrival)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimTrace {
    pub events: Vec<TraceEvent>,
    pub requests: Vec<RequestRecord>,
    /// Time at which the simulation stopped; blocks without a retire event
    /// are resident until then.
    pub end_time: f64,
}

impl SimTrace {
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.events.len() * 64);
        for e in &self.events {
            out.push_str(&e.to_string());
            out.push('\n');
        }
        out
    }
}
