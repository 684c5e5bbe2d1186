//! `run` and `compare`: simulate every (workload, policy) cell of a config.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{Context, Result};
use elastic_core::sim::{self, cdf_text, Metrics, Policy, RunOptions, SimOutput};
use elastic_core::workload::Workload;

use crate::config::ExperimentConfig;

/// One simulated cell.
pub struct Cell {
    pub workload: usize,
    pub label: String,
    pub output: SimOutput,
}

/// Policy labels, unique within a run: a repeated policy gets a `-2`,
/// `-3`, ... suffix.
pub fn policy_labels(policies: &[Policy]) -> Vec<String> {
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    policies
        .iter()
        .map(|p| {
            let base = p.to_string().replace(':', "-");
            let n = seen.entry(base.clone()).or_insert(0);
            *n += 1;
            if *n == 1 {
                base
            } else {
                format!("{base}-{n}")
            }
        })
        .collect()
}

/// Policies to simulate: the configured list, with sequential prepended
/// when absent so every report has its baseline.
pub fn with_baseline(policies: &[Policy]) -> (Vec<Policy>, bool) {
    if policies.contains(&Policy::Sequential) {
        (policies.to_vec(), false)
    } else {
        let mut all = vec![Policy::Sequential];
        all.extend_from_slice(policies);
        (all, true)
    }
}

fn simulate(config: &ExperimentConfig, workload: &Workload, policy: &Policy) -> Result<SimOutput> {
    let plans = match policy {
        Policy::Miriam => Some(
            sim::plan_for_workload(workload, &config.gpu, &config.model)
                .with_context(|| format!("planning `{}`", workload.name))?,
        ),
        _ => None,
    };
    let options = RunOptions {
        record_trace: config.write_trace,
        record_decisions: config.write_decisions,
        plans,
    };
    sim::run(workload, policy, &config.gpu, &config.model, config.seed, &options)
        .with_context(|| format!("simulating `{}` under {policy}", workload.name))
}

/// Runs every cell, `parallel` at a time. Results come back in
/// (workload, policy) order regardless of scheduling.
pub fn run_cells(config: &ExperimentConfig, policies: &[Policy], parallel: usize) -> Result<Vec<Cell>> {
    let labels = policy_labels(policies);
    let jobs: Vec<(usize, usize)> = (0..config.workloads.len())
        .flat_map(|w| (0..policies.len()).map(move |p| (w, p)))
        .collect();
    let slots: Vec<Mutex<Option<Result<SimOutput>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(&(w, p)) = jobs.get(i) else { break };
        let result = simulate(config, &config.workloads[w], &policies[p]);
        *slots[i].lock().unwrap() = Some(result);
    };
    let threads = parallel.clamp(1, jobs.len().max(1));
    if threads == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(worker);
            }
        });
    }
    jobs.iter()
        .zip(slots)
        .map(|(&(w, p), slot)| {
            let output = slot.into_inner().unwrap().expect("every job ran")?;
            Ok(Cell {
                workload: w,
                label: labels[p].clone(),
                output,
            })
        })
        .collect()
}

/// File-system safe form of a workload name.
pub fn dir_name(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn write_cells(config: &ExperimentConfig, cells: &[Cell], out: &Path) -> Result<()> {
    for cell in cells {
        let dir = out.join(dir_name(&config.workloads[cell.workload].name));
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let write = |ext: &str, text: String| {
            let path = dir.join(format!("{}.{ext}", cell.label));
            fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
        };
        write("metrics", cell.output.metrics.to_text())?;
        if cell.output.metrics.critical_samples.is_empty() {
            write("cdf", String::new())?;
        } else {
            write("cdf", cdf_text(&cell.output.metrics)?)?;
        }
        if config.write_trace {
            write("trace", cell.output.trace.to_text())?;
        }
        if config.write_decisions {
            write(
                "decisions",
                cell.output.decisions.iter().map(|d| format!("{d}\n")).collect(),
            )?;
        }
    }
    Ok(())
}

/// Ratios of a policy's metrics to the sequential baseline.
#[derive(Debug, Clone, Copy)]
pub struct Ratios {
    pub latency: f64,
    pub p99: f64,
    pub throughput: f64,
}

impl Ratios {
    pub fn of(m: &Metrics, base: &Metrics) -> Self {
        let p99 = |m: &Metrics| m.critical_latency.as_ref().map_or(f64::NAN, |s| s.p99);
        Ratios {
            latency: m.critical_mean() / base.critical_mean(),
            p99: p99(m) / p99(base),
            throughput: m.throughput / base.throughput,
        }
    }

    /// Throughput gained per unit of critical-latency overhead.
    pub fn score(&self) -> f64 {
        self.throughput / self.latency
    }
}

/// The sequential cell of a workload.
fn baseline(cells: &[Cell], workload: usize) -> &Metrics {
    &cells
        .iter()
        .find(|c| c.workload == workload && c.label == "sequential")
        .expect("sequential baseline is always simulated")
        .output
        .metrics
}

/// Summary table printed by `run` and written to `summary.txt`.
pub fn summary(config: &ExperimentConfig, cells: &[Cell]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "gpu = {}  seed = {}", config.gpu.name, config.seed);
    for (w, workload) in config.workloads.iter().enumerate() {
        let base = baseline(cells, w);
        let _ = writeln!(out, "\n[{}] duration = {} s", workload.name, workload.duration);
        let _ = writeln!(
            out,
            "{:<14} {:>12} {:>12} {:>12} {:>10} {:>9} {:>9} {:>9}",
            "policy", "crit_mean_ms", "crit_p99_ms", "thr_req_s", "occupancy", "lat_x", "p99_x", "thr_x"
        );
        for cell in cells.iter().filter(|c| c.workload == w) {
            let m = &cell.output.metrics;
            let r = Ratios::of(m, base);
            let p99 = m.critical_latency.as_ref().map_or(f64::NAN, |s| s.p99);
            let _ = writeln!(
                out,
                "{:<14} {:>12.4} {:>12.4} {:>12.3} {:>10.4} {:>9.4} {:>9.4} {:>9.4}",
                cell.label,
                m.critical_mean() * 1e3,
                p99 * 1e3,
                m.throughput,
                m.achieved_occupancy,
                r.latency,
                r.p99,
                r.throughput
            );
        }
    }
    out
}

/// Flat comparison report: one row per (workload, policy).
pub fn comparison(config: &ExperimentConfig, cells: &[Cell], labels: &[String]) -> String {
    let mut out = String::from("workload policy latency_ratio p99_ratio throughput_ratio occupancy score\n");
    for (w, workload) in config.workloads.iter().enumerate() {
        let base = baseline(cells, w);
        for cell in cells.iter().filter(|c| c.workload == w && labels.contains(&c.label)) {
            let r = Ratios::of(&cell.output.metrics, base);
            let _ = writeln!(
                out,
                "{} {} {:.6} {:.6} {:.6} {:.6} {:.6}",
                dir_name(&workload.name),
                cell.label,
                r.latency,
                r.p99,
                r.throughput,
                cell.output.metrics.achieved_occupancy,
                r.score()
            );
        }
    }
    out
}

/// Gnuplot columns: one block per policy, one row per workload, separated
/// by blank lines so `index` selects a policy.
pub fn gnuplot(config: &ExperimentConfig, cells: &[Cell], labels: &[String]) -> String {
    let mut out = String::new();
    for label in labels {
        let _ = writeln!(
            out,
            "# policy {label}\n# idx workload latency_ratio throughput_ratio occupancy"
        );
        for (w, workload) in config.workloads.iter().enumerate() {
            let base = baseline(cells, w);
            if let Some(cell) = cells.iter().find(|c| c.workload == w && &c.label == label) {
                let r = Ratios::of(&cell.output.metrics, base);
                let _ = writeln!(
                    out,
                    "{w} {} {:.6} {:.6} {:.6}",
                    dir_name(&workload.name),
                    r.latency,
                    r.throughput,
                    cell.output.metrics.achieved_occupancy
                );
            }
        }
        out.push_str("\n\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_are_unique() {
        let p = vec![
            Policy::Sequential,
            Policy::Sequential,
            Policy::InterStreamBarrier { group: 3 },
        ];
        assert_eq!(policy_labels(&p), vec!["sequential", "sequential-2", "ib-3"]);
    }

    #[test]
    fn baseline_is_prepended_once() {
        let (all, added) = with_baseline(&[Policy::Miriam]);
        assert!(added);
        assert_eq!(all, vec![Policy::Sequential, Policy::Miriam]);
        let (all, added) = with_baseline(&[Policy::Miriam, Policy::Sequential]);
        assert!(!added);
        assert_eq!(all.len(), 2);
    }

    #[test]
    fn dir_names_are_sanitized() {
        assert_eq!(dir_name("MDTB-A"), "MDTB-A");
        assert_eq!(dir_name("a b/c"), "a_b_c");
    }
}
