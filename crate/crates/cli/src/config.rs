//! Experiment configuration: `key = value` lines with `[section]` headers.
//!
//! ```text
//! seed = 1                  # required
//! out = results/mdtb-a      # output directory (or --out)
//!
//! [gpu]
//! preset = rtx2060-like     # or xavier-like; fields below override
//! mem_bandwidth = 3.0e10
//!
//! [workload]                # repeatable
//! mdtb = A                  # or: trace = <file>, lgsvl = <jitter s>, or inline
//! duration = 10
//!
//! [policies]
//! list = sequential, multistream, ib, miriam
//!
//! [model]
//! launch_overhead = 15e-6
//!
//! [output]
//! trace = false           # per-block events; large (tens of MB per simulated s)
//! decisions = false
//! ```
//!
//! An inline workload names its models and arrival patterns:
//! `critical_model`, `critical_arrival`, `normal_model`, `normal_arrival`
//! and an optional `name`. Models are shipped profile names or profile
//! file paths; relative paths resolve against the config file.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use elastic_core::gpu::GpuSpec;
use elastic_core::kv::{self, Section};
use elastic_core::sim::{ContentionModel, Policy};
use elastic_core::workload::{
    build_mdtb, lgsvl_trace, load_trace, parse_trace, workload_from_trace, ArrivalPattern, Criticality, MdtbId,
    ModelProfile, TaskLoad, TaskSpec, Workload, DEFAULT_DURATION, TRACE_CRITICAL_MODEL, TRACE_NORMAL_MODEL,
};

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub gpu: GpuSpec,
    pub model: ContentionModel,
    pub workloads: Vec<Workload>,
    pub policies: Vec<Policy>,
    pub write_trace: bool,
    pub write_decisions: bool,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub gpu: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

pub fn gpu_preset(name: &str) -> Result<GpuSpec> {
    GpuSpec::preset(name).ok_or_else(|| {
        anyhow!(
            "unknown gpu preset `{name}` (available: {})",
            GpuSpec::preset_names().join(", ")
        )
    })
}

fn gpu_from(section: Option<&Section>, preset_override: Option<&str>) -> Result<GpuSpec> {
    let preset = preset_override
        .or_else(|| section.and_then(|s| s.value("preset")))
        .unwrap_or("rtx2060-like");
    let mut gpu = gpu_preset(preset)?;
    if let Some(s) = section {
        s.expect_keys(&[
            "preset",
            "n_sm",
            "l_threads",
            "warp_size",
            "max_warps_per_sm",
            "shared_mem_per_sm",
            "mem_bandwidth",
        ])?;
        gpu.n_sm = s.parse_opt("n_sm")?.unwrap_or(gpu.n_sm);
        gpu.l_threads = s.parse_opt("l_threads")?.unwrap_or(gpu.l_threads);
        gpu.warp_size = s.parse_opt("warp_size")?.unwrap_or(gpu.warp_size);
        gpu.max_warps_per_sm = s.parse_opt("max_warps_per_sm")?.unwrap_or(gpu.max_warps_per_sm);
        gpu.shared_mem_per_sm = s.parse_opt("shared_mem_per_sm")?.unwrap_or(gpu.shared_mem_per_sm);
        gpu.mem_bandwidth = s.parse_opt("mem_bandwidth")?.unwrap_or(gpu.mem_bandwidth);
    }
    gpu.validate().context("invalid [gpu]")?;
    Ok(gpu)
}

fn model_from(section: Option<&Section>, gpu: &GpuSpec) -> Result<ContentionModel> {
    let mut m = ContentionModel::for_gpu(gpu);
    if let Some(s) = section {
        s.expect_keys(&[
            "sm_throughput",
            "mem_bandwidth",
            "launch_overhead",
            "coordinator_overhead",
        ])?;
        m.sm_throughput = s.parse_opt("sm_throughput")?.unwrap_or(m.sm_throughput);
        m.mem_bandwidth = s.parse_opt("mem_bandwidth")?.unwrap_or(m.mem_bandwidth);
        m.launch_overhead = s.parse_opt("launch_overhead")?.unwrap_or(m.launch_overhead);
        m.coordinator_overhead = s.parse_opt("coordinator_overhead")?.unwrap_or(m.coordinator_overhead);
    }
    m.validate().context("invalid [model]")?;
    Ok(m)
}

fn resolve(base: &Path, value: &str) -> PathBuf {
    let p = Path::new(value);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// A shipped profile name or a profile file.
pub fn load_model(base: &Path, value: &str) -> Result<ModelProfile> {
    if ModelProfile::builtin_names().any(|n| n == value) {
        return Ok(ModelProfile::builtin(value)?);
    }
    let path = resolve(base, value);
    ModelProfile::load(&path).with_context(|| format!("loading model `{value}`"))
}

fn workload_from(s: &Section, base: &Path) -> Result<Workload> {
    s.expect_keys(&[
        "mdtb",
        "trace",
        "lgsvl",
        "duration",
        "name",
        "critical_model",
        "critical_arrival",
        "normal_model",
        "normal_arrival",
    ])?;
    let duration: Option<f64> = s.parse_opt("duration")?;
    let kinds = ["mdtb", "trace", "lgsvl"]
        .iter()
        .filter(|k| s.value(k).is_some())
        .count();
    if kinds > 1 {
        bail!("line {}: [workload] takes only one of mdtb, trace and lgsvl", s.line);
    }
    let model_override =
        |key: &str, default: &str| -> Result<ModelProfile> { load_model(base, s.value(key).unwrap_or(default)) };
    let mut w = if let Some(id) = s.value("mdtb") {
        let id: MdtbId = id.parse()?;
        build_mdtb(id)
    } else if let Some(path) = s.value("trace") {
        let mut w = load_trace(&resolve(base, path))?;
        w.critical.task = TaskSpec::new(
            model_override("critical_model", TRACE_CRITICAL_MODEL)?,
            Criticality::Critical,
        );
        w.normal.task = TaskSpec::new(model_override("normal_model", TRACE_NORMAL_MODEL)?, Criticality::Normal);
        w
    } else if let Some(jitter) = s.value("lgsvl") {
        let jitter: f64 = jitter
            .parse()
            .map_err(|_| anyhow!("line {}: `lgsvl` takes a jitter in seconds", s.line))?;
        let text = lgsvl_trace(duration.unwrap_or(DEFAULT_DURATION), jitter, 0);
        let requests = parse_trace(&text)?;
        workload_from_trace(
            "lgsvl",
            &requests,
            model_override("critical_model", TRACE_CRITICAL_MODEL)?,
            model_override("normal_model", TRACE_NORMAL_MODEL)?,
        )
    } else {
        let arrival = |key: &str| -> Result<ArrivalPattern> {
            let v = s
                .value(key)
                .ok_or_else(|| anyhow!("line {}: [workload] is missing `{key}`", s.line))?;
            v.parse().map_err(|e: String| anyhow!("line {}: {e}", s.line))
        };
        let need = |key: &str| {
            s.value(key)
                .ok_or_else(|| anyhow!("line {}: [workload] is missing `{key}`", s.line))
        };
        Workload {
            name: s.value("name").unwrap_or("inline").to_string(),
            critical: TaskLoad {
                task: TaskSpec::new(load_model(base, need("critical_model")?)?, Criticality::Critical),
                pattern: arrival("critical_arrival")?,
            },
            normal: TaskLoad {
                task: TaskSpec::new(load_model(base, need("normal_model")?)?, Criticality::Normal),
                pattern: arrival("normal_arrival")?,
            },
            duration: DEFAULT_DURATION,
            seed: 0,
        }
    };
    if let Some(d) = duration {
        w.duration = d;
    }
    if let Some(name) = s.value("name") {
        w.name = name.to_string();
    }
    Ok(w)
}

impl ExperimentConfig {
    pub fn parse(text: &str, base: &Path, overrides: &Overrides) -> Result<Self> {
        let doc = kv::parse(text)?;
        let root = doc.root();
        root.expect_keys(&["seed", "out"])?;
        for s in &doc.sections[1..] {
            if !["gpu", "workload", "policies", "model", "output"].contains(&s.name.as_str()) {
                bail!("line {}: unknown section [{}]", s.line, s.name);
            }
        }
        let seed = match overrides.seed {
            Some(s) => s,
            None => root
                .parse_opt::<u64>("seed")?
                .ok_or_else(|| anyhow!("`seed` is required (there is no clock-based default)"))?,
        };
        let out = overrides
            .out
            .clone()
            .or_else(|| root.value("out").map(|o| resolve(base, o)));
        let gpu = gpu_from(doc.section("gpu"), overrides.gpu.as_deref())?;
        let model = model_from(doc.section("model"), &gpu)?;
        let workloads = doc
            .sections_named("workload")
            .map(|s| workload_from(s, base))
            .collect::<Result<Vec<_>>>()?;
        if workloads.is_empty() {
            bail!("at least one [workload] section is required");
        }
        for w in &workloads {
            w.validate(&gpu).with_context(|| format!("workload `{}`", w.name))?;
        }
        let policies = match doc.section("policies") {
            Some(s) => {
                s.expect_keys(&["list"])?;
                s.list("list")
                    .unwrap_or_default()
                    .iter()
                    .map(|p| p.parse::<Policy>().map_err(|e| anyhow!("line {}: {e}", s.line)))
                    .collect::<Result<Vec<_>>>()?
            }
            None => Vec::new(),
        };
        if policies.is_empty() {
            bail!("[policies] must list at least one policy");
        }
        let (mut write_trace, mut write_decisions) = (false, false);
        if let Some(s) = doc.section("output") {
            s.expect_keys(&["trace", "decisions"])?;
            write_trace = s.parse_opt("trace")?.unwrap_or(write_trace);
            write_decisions = s.parse_opt("decisions")?.unwrap_or(write_decisions);
        }
        Ok(ExperimentConfig {
            seed,
            out,
            gpu,
            model,
            workloads,
            policies,
            write_trace,
            write_decisions,
        })
    }

    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, overrides).with_context(|| format!("in {}", path.display()))
    }
}
