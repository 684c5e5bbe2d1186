use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::gpu::GpuSpec;
use crate::workload::Criticality;

use super::trace::{EventKind, RequestRecord, SimTrace};

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyStats {
    pub count: usize,
    pub mean: f64,
    pub p50: f64,
    pub p99: f64,
    pub max: f64,
}

impl LatencyStats {
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(LatencyStats {
            count: sorted.len(),
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
            p50: nearest_rank(&sorted, 0.50),
            p99: nearest_rank(&sorted, 0.99),
            max: *sorted.last().unwrap(),
        })
    }
}

fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub critical_latency: Option<LatencyStats>,
    pub critical_response: Option<LatencyStats>,
    pub normal_latency: Option<LatencyStats>,
    /// Critical service latencies in request order, for CDF export.
    pub critical_samples: Vec<f64>,
    pub completed_critical: usize,
    pub completed_normal: usize,
    pub arrived: usize,
    /// Requests of both queues completed within the horizon, per second.
    pub throughput: f64,
    pub achieved_occupancy: f64,
    pub duration: f64,
}

impl Metrics {
    pub fn from_requests(requests: &[RequestRecord], duration: f64, achieved_occupancy: f64) -> Self {
        let done = |class: Criticality| {
            requests
                .iter()
                .filter(move |r| r.class() == class && r.completion.is_some())
        };
        let critical_samples: Vec<f64> = done(Criticality::Critical).filter_map(|r| r.latency()).collect();
        let responses: Vec<f64> = done(Criticality::Critical).filter_map(|r| r.response()).collect();
        let normal: Vec<f64> = done(Criticality::Normal).filter_map(|r| r.latency()).collect();
        let completed_critical = critical_samples.len();
        let completed_normal = normal.len();
        let in_horizon = requests
            .iter()
            .filter(|r| r.completion.is_some_and(|c| c <= duration))
            .count();
        Metrics {
            critical_latency: LatencyStats::from_samples(&critical_samples),
            critical_response: LatencyStats::from_samples(&responses),
            normal_latency: LatencyStats::from_samples(&normal),
            critical_samples,
            completed_critical,
            completed_normal,
            arrived: requests.len(),
            throughput: in_horizon as f64 / duration,
            achieved_occupancy,
            duration,
        }
    }

    pub fn critical_mean(&self) -> f64 {
        self.critical_latency.as_ref().map_or(f64::NAN, |s| s.mean)
    }

    /// `key = value` export.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let stat = |out: &mut String, prefix: &str, s: &Option<LatencyStats>| {
            if let Some(s) = s {
                let _ = writeln!(out, "{prefix}_count = {}", s.count);
                let _ = writeln!(out, "{prefix}_mean = {:.9}", s.mean);
                let _ = writeln!(out, "{prefix}_p50 = {:.9}", s.p50);
                let _ = writeln!(out, "{prefix}_p99 = {:.9}", s.p99);
                let _ = writeln!(out, "{prefix}_max = {:.9}", s.max);
            } else {
                let _ = writeln!(out, "{prefix}_count = 0");
            }
        };
        let _ = writeln!(out, "duration = {:.6}", self.duration);
        let _ = writeln!(out, "arrived = {}", self.arrived);
        let _ = writeln!(out, "completed_critical = {}", self.completed_critical);
        let _ = writeln!(out, "completed_normal = {}", self.completed_normal);
        let _ = writeln!(out, "throughput = {:.9}", self.throughput);
        let _ = writeln!(out, "achieved_occupancy = {:.9}", self.achieved_occupancy);
        stat(&mut out, "critical_latency", &self.critical_latency);
        stat(&mut out, "critical_response", &self.critical_response);
        stat(&mut out, "normal_latency", &self.normal_latency);
        out
    }

    /// Empirical CDF of critical latency: `(latency, fraction)` with one
    /// point per distinct latency.
    pub fn latency_cdf(&self) -> Vec<(f64, f64)> {
        let mut sorted = self.critical_samples.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (i, v) in sorted.iter().enumerate() {
            let frac = (i + 1) as f64 / n;
            match out.last_mut() {
                Some(last) if last.0 == *v => last.1 = frac,
                _ => out.push((*v, frac)),
            }
        }
        out
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("no completed critical requests to export")]
    NoSamples,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub fn cdf_text(metrics: &Metrics) -> Result<String, ExportError> {
    let cdf = metrics.latency_cdf();
    if cdf.is_empty() {
        return Err(ExportError::NoSamples);
    }
    let mut out = String::new();
    for (lat, frac) in cdf {
        let _ = writeln!(out, "{lat:.9} {frac}");
    }
    Ok(out)
}

pub fn export_latency_cdf(metrics: &Metrics, path: &Path) -> Result<(), ExportError> {
    let text = cdf_text(metrics)?;
    std::fs::write(path, text).map_err(|source| ExportError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Achieved occupancy from a trace by a sweep over dispatch and retire events.
///
/// Per SM: time integral of resident warps (resident threads over the warp
/// size) divided by the time the SM had at least one resident block, over the
/// warp-slot limit. Averaged over SMs that were ever active. Blocks still resident at the end of the trace count up
/// to `trace.end_time`.
pub fn achieved_occupancy(trace: &SimTrace, gpu: &GpuSpec) -> f64 {
    // (time, sm, delta threads, delta blocks)
    let mut changes: Vec<(f64, u32, i64, i64)> = Vec::new();
    for e in &trace.events {
        let Some(sm) = e.sm else { continue };
        let threads = e.threads as i64;
        match e.kind {
            EventKind::Dispatch => changes.push((e.time, sm, threads, 1)),
            EventKind::Retire => changes.push((e.time, sm, -threads, -1)),
            _ => {}
        }
    }
    if changes.is_empty() {
        return 0.0;
    }
    changes.sort_by(|a, b| a.0.total_cmp(&b.0));
    #[derive(Default)]
    struct Acc {
        threads: i64,
        blocks: i64,
        since: f64,
        warp_time: f64,
        active_time: f64,
    }
    let warp = gpu.warp_size as f64;
    let mut per_sm: BTreeMap<u32, Acc> = BTreeMap::new();
    for (t, sm, dw, db) in changes {
        let acc = per_sm.entry(sm).or_default();
        if acc.blocks > 0 {
            let dt = t - acc.since;
            acc.warp_time += acc.threads as f64 / warp * dt;
            acc.active_time += dt;
        }
        acc.threads += dw;
        acc.blocks += db;
        acc.since = t;
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for acc in per_sm.values_mut() {
        if acc.blocks > 0 {
            let dt = trace.end_time - acc.since;
            acc.warp_time += acc.threads as f64 / warp * dt;
            acc.active_time += dt;
        }
        if acc.active_time > 0.0 {
            sum += acc.warp_time / (acc.active_time * gpu.max_warps_per_sm as f64);
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}
