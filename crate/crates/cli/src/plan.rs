//! `plan`: score and shrink the elastic design space of a model's kernels.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Result};
use elastic_core::gpu::GpuSpec;
use elastic_core::planner::{shrink_design_space, CriticalProfile};
use elastic_core::sim::ContentionModel;

use crate::config::load_model;

/// `<blocks>x<threads>`, e.g. `68x256`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CriticalShape(pub CriticalProfile);

impl FromStr for CriticalShape {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (n, t) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected <blocks>x<threads>, got `{s}`"))?;
        let n: u32 = n.trim().parse().map_err(|_| format!("bad block count `{n}`"))?;
        let t: u32 = t.trim().parse().map_err(|_| format!("bad thread count `{t}`"))?;
        if n == 0 || t == 0 {
            return Err("critical shape needs at least one block of one thread".into());
        }
        Ok(CriticalShape(CriticalProfile::new(n, t)))
    }
}

/// Builds the report for every kernel of `model` against `critical`.
pub fn report(
    model: &str,
    critical: &[CriticalProfile],
    critical_model: Option<&str>,
    gpu: &GpuSpec,
) -> Result<String> {
    let base = Path::new(".");
    let profile = load_model(base, model)?;
    let mut profiles = critical.to_vec();
    if let Some(name) = critical_model {
        profiles.extend(load_model(base, name)?.kernels.iter().map(CriticalProfile::of_kernel));
    }
    if profiles.is_empty() {
        bail!("give at least one --critical <blocks>x<threads> or --critical-model");
    }
    let overhead = ContentionModel::for_gpu(gpu).overhead_params();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "model = {}  gpu = {}  critical profiles = {}",
        profile.name,
        gpu.name,
        profiles.len()
    );
    for k in &profile.kernels {
        k.validate(gpu).map_err(|e| anyhow!("kernel {}: {e}", k.id))?;
        let space = shrink_design_space(k, &profiles, gpu, &overhead)?;
        let _ = writeln!(
            out,
            "\nkernel {} grid={} block={}: candidates={} selected={} pruned={:.3}{}",
            k.id,
            k.grid,
            k.block,
            space.raw_count(),
            space.selected.len(),
            space.pruned_fraction(),
            if space.fallback {
                " FALLBACK (no feasible candidate, original kept)"
            } else {
                ""
            }
        );
        let _ = writeln!(
            out,
            "{:>10} {:>6} {:>7} {:>8} {:>10} {:>6} {:>10} {:>3}",
            "shard_grid", "block", "shards", "feasible", "wiscore", "oscore", "combined", "sel"
        );
        for row in &space.rows {
            let s = &row.scored;
            let _ = writeln!(
                out,
                "{:>10} {:>6} {:>7} {:>8} {:>10.6} {:>6} {:>10.6} {:>3}",
                s.candidate.shard_grid,
                s.candidate.block,
                s.candidate.n_shards,
                if row.feasible { "yes" } else { "no" },
                s.wiscore,
                s.oscore,
                s.combined,
                if row.selected { "*" } else { "" }
            );
        }
        if space.fallback {
            let s = &space.selected[0];
            let _ = writeln!(
                out,
                "{:>10} {:>6} {:>7} {:>8} {:>10.6} {:>6} {:>10.6} {:>3}",
                s.candidate.shard_grid,
                s.candidate.block,
                s.candidate.n_shards,
                "orig",
                s.wiscore,
                s.oscore,
                s.combined,
                "*"
            );
        }
    }
    Ok(out)
}
