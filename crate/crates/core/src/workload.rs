//! Kernels, tasks, arrival processes, the MDTB benchmark pairings and trace
//! ingestion.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

use crate::error::ConfigError;
use crate::gpu::GpuSpec;
use crate::kv;

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("arrival rate must be positive, got {0}")]
    InvalidRate(f64),
    #[error("duration must be positive, got {0}")]
    InvalidDuration(f64),
    #[error("unknown MDTB workload `{0}` (expected A, B, C or D)")]
    UnknownMdtb(String),
    #[error("unknown model profile `{0}`")]
    UnknownModel(String),
    #[error("trace line {line}: {message}")]
    Trace { line: usize, message: String },
    #[error("trace contains no requests")]
    EmptyTrace,
    #[error("profile: {0}")]
    Profile(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: Box<WorkloadError>,
    },
}

impl WorkloadError {
    fn in_file(self, path: &Path) -> Self {
        WorkloadError::File {
            path: path.display().to_string(),
            source: Box::new(self),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Criticality {
    Critical,
    Normal,
}

impl Criticality {
    pub fn as_str(self) -> &'static str {
        match self {
            Criticality::Critical => "critical",
            Criticality::Normal => "normal",
        }
    }
}

impl fmt::Display for Criticality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Criticality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "critical" => Ok(Criticality::Critical),
            "normal" => Ok(Criticality::Normal),
            other => Err(format!("expected `critical` or `normal`, got `{other}`")),
        }
    }
}

/// One GPU kernel as an abstract workload.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    /// Position of the kernel within its model.
    pub id: u32,
    /// Number of thread blocks `M`.
    pub grid: u32,
    /// Threads per block in the original launch.
    pub block: u32,
    /// Abstract work units performed by each logical thread.
    pub work_per_thread: f64,
    /// Fraction of the work that is memory bound.
    pub mem_intensity: f64,
    pub shmem_per_block: u32,
}

impl KernelSpec {
    pub fn new(id: u32, grid: u32, block: u32, work_per_thread: f64, mem_intensity: f64) -> Self {
        KernelSpec {
            id,
            grid,
            block,
            work_per_thread,
            mem_intensity,
            shmem_per_block: 0,
        }
    }

    pub fn validate(&self, gpu: &GpuSpec) -> Result<(), ConfigError> {
        if self.grid == 0 {
            return Err(ConfigError::invalid("grid", "must be at least 1"));
        }
        if self.block == 0 || self.block > gpu.l_threads {
            return Err(ConfigError::invalid(
                "block",
                format!("must lie in 1..={}, got {}", gpu.l_threads, self.block),
            ));
        }
        if !(0.0..=1.0).contains(&self.mem_intensity) {
            return Err(ConfigError::invalid("mem_intensity", "must lie in [0, 1]"));
        }
        if !(self.work_per_thread >= 0.0 && self.work_per_thread.is_finite()) {
            return Err(ConfigError::invalid("work", "must be finite and non-negative"));
        }
        if self.shmem_per_block > gpu.shared_mem_per_sm {
            return Err(ConfigError::invalid("shmem", "exceeds per-SM shared memory"));
        }
        Ok(())
    }

    /// Work carried by one logical block, independent of how many physical
    /// threads execute it.
    pub fn block_work(&self) -> f64 {
        self.block as f64 * self.work_per_thread
    }
}

/// An ordered kernel sequence, e.g. one DNN inference.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelProfile {
    pub name: String,
    pub kernels: Vec<KernelSpec>,
}

impl ModelProfile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let doc = kv::parse(text)?;
        let root = doc.root();
        root.expect_keys(&["name"])?;
        let name = root
            .value("name")
            .ok_or_else(|| ConfigError::Missing("name".into()))?
            .to_string();
        let mut kernels = Vec::new();
        for section in &doc.sections[1..] {
            if section.name != "kernel" {
                return Err(ConfigError::parse(
                    section.line,
                    format!("unexpected section [{}]", section.name),
                ));
            }
            section.expect_keys(&["grid", "block", "work", "mem_intensity", "shmem"])?;
            kernels.push(KernelSpec {
                id: kernels.len() as u32,
                grid: section.parse_req("grid")?,
                block: section.parse_req("block")?,
                work_per_thread: section.parse_req("work")?,
                mem_intensity: section.parse_opt("mem_intensity")?.unwrap_or(0.0),
                shmem_per_block: section.parse_opt("shmem")?.unwrap_or(0),
            });
        }
        if kernels.is_empty() {
            return Err(ConfigError::Missing("[kernel] section".into()));
        }
        Ok(ModelProfile { name, kernels })
    }

    pub fn load(path: &Path) -> Result<Self, WorkloadError> {
        let text = std::fs::read_to_string(path).map_err(|source| WorkloadError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text).map_err(|e| WorkloadError::Profile(e).in_file(path))
    }

    /// Looks up one of the shipped synthetic model profiles.
    pub fn builtin(name: &str) -> Result<Self, WorkloadError> {
        let text = BUILTIN_PROFILES
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| WorkloadError::UnknownModel(name.to_string()))?;
        Ok(Self::parse(text).expect("shipped profiles parse"))
    }

    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTIN_PROFILES.iter().map(|(n, _)| *n)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("name = {}\n", self.name);
        for k in &self.kernels {
            out.push_str(&format!(
                "\n[kernel]\ngrid = {}\nblock = {}\nwork = {}\nmem_intensity = {}\nshmem = {}\n",
                k.grid, k.block, k.work_per_thread, k.mem_intensity, k.shmem_per_block
            ));
        }
        out
    }
}

const BUILTIN_PROFILES: &[(&str, &str)] = &[
    ("alexnet-like", include_str!("../profiles/alexnet-like.prof")),
    ("cifarnet-like", include_str!("../profiles/cifarnet-like.prof")),
    ("squeezenet-like", include_str!("../profiles/squeezenet-like.prof")),
    ("gru-like", include_str!("../profiles/gru-like.prof")),
    ("lstm-like", include_str!("../profiles/lstm-like.prof")),
    ("resnet-like", include_str!("../profiles/resnet-like.prof")),
];

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub name: String,
    pub kernels: Vec<KernelSpec>,
    pub criticality: Criticality,
}

impl TaskSpec {
    pub fn new(profile: ModelProfile, criticality: Criticality) -> Self {
        TaskSpec {
            name: profile.name,
            kernels: profile.kernels,
            criticality,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArrivalPattern {
    /// Fixed-frequency requests, `rate` per second.
    Uniform { rate: f64 },
    /// Exponential inter-arrival times with mean `1 / rate`.
    Poisson { rate: f64 },
    /// A new request is issued as soon as the previous one completes.
    ClosedLoop,
    /// Explicit arrival timestamps in seconds.
    Trace(Vec<f64>),
}

impl ArrivalPattern {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        match self {
            ArrivalPattern::Uniform { rate } | ArrivalPattern::Poisson { rate } => {
                if *rate > 0.0 && rate.is_finite() {
                    Ok(())
                } else {
                    Err(WorkloadError::InvalidRate(*rate))
                }
            }
            ArrivalPattern::ClosedLoop => Ok(()),
            ArrivalPattern::Trace(times) => {
                if times.windows(2).all(|w| w[0] <= w[1]) {
                    Ok(())
                } else {
                    Err(WorkloadError::Trace {
                        line: 0,
                        message: "timestamps must be non-decreasing".into(),
                    })
                }
            }
        }
    }

    pub fn is_closed_loop(&self) -> bool {
        matches!(self, ArrivalPattern::ClosedLoop)
    }
}

impl fmt::Display for ArrivalPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArrivalPattern::Uniform { rate } => write!(f, "uniform:{rate}"),
            ArrivalPattern::Poisson { rate } => write!(f, "poisson:{rate}"),
            ArrivalPattern::ClosedLoop => f.write_str("closed"),
            ArrivalPattern::Trace(t) => write!(f, "trace({} requests)", t.len()),
        }
    }
}

impl FromStr for ArrivalPattern {
    type Err = String;

    /// `closed`, `uniform:<rate>` or `poisson:<rate>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "closed" || s == "closed-loop" || s == "closed_loop" {
            return Ok(ArrivalPattern::ClosedLoop);
        }
        let (kind, rate) = s
            .split_once(':')
            .ok_or_else(|| format!("expected `closed`, `uniform:<rate>` or `poisson:<rate>`, got `{s}`"))?;
        let rate: f64 = rate.trim().parse().map_err(|_| format!("bad rate `{rate}`"))?;
        match kind.trim() {
            "uniform" => Ok(ArrivalPattern::Uniform { rate }),
            "poisson" => Ok(ArrivalPattern::Poisson { rate }),
            other => Err(format!("unknown arrival kind `{other}`")),
        }
    }
}

/// Output of [`generate_arrivals`].
#[derive(Debug, Clone, PartialEq)]
pub struct Arrivals {
    pub times: Vec<f64>,
    /// Requests are re-issued on completion instead of following `times`.
    pub reissue: bool,
}

pub fn generate_arrivals(pattern: &ArrivalPattern, duration: f64, seed: u64) -> Result<Arrivals, WorkloadError> {
    pattern.validate()?;
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(WorkloadError::InvalidDuration(duration));
    }
    let times = match pattern {
        ArrivalPattern::Uniform { rate } => {
            // Guard against 0.9999.. from the product of exact decimals.
            let count = (duration * rate + 1e-9).floor() as u64;
            (0..count).map(|k| k as f64 / rate).collect()
        }
        ArrivalPattern::Poisson { rate } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let exp = Exp::new(*rate).map_err(|_| WorkloadError::InvalidRate(*rate))?;
            let mut t = 0.0;
            let mut out = Vec::new();
            loop {
                t += exp.sample(&mut rng);
                if t >= duration {
                    break;
                }
                out.push(t);
            }
            out
        }
        ArrivalPattern::ClosedLoop => {
            return Ok(Arrivals {
                times: Vec::new(),
                reissue: true,
            })
        }
        ArrivalPattern::Trace(times) => times.clone(),
    };
    Ok(Arrivals { times, reissue: false })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskLoad {
    pub task: TaskSpec,
    pub pattern: ArrivalPattern,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    pub name: String,
    pub critical: TaskLoad,
    pub normal: TaskLoad,
    /// Simulated seconds.
    pub duration: f64,
    pub seed: u64,
}

pub const DEFAULT_DURATION: f64 = 10.0;

impl Workload {
    pub fn validate(&self, gpu: &GpuSpec) -> Result<(), WorkloadError> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(WorkloadError::InvalidDuration(self.duration));
        }
        for load in [&self.critical, &self.normal] {
            load.pattern.validate()?;
            if load.task.kernels.is_empty() {
                return Err(WorkloadError::Profile(ConfigError::Missing(format!(
                    "kernels for task `{}`",
                    load.task.name
                ))));
            }
            for k in &load.task.kernels {
                k.validate(gpu)?;
            }
        }
        Ok(())
    }

    pub fn task(&self, class: Criticality) -> &TaskLoad {
        match class {
            Criticality::Critical => &self.critical,
            Criticality::Normal => &self.normal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MdtbId {
    A,
    B,
    C,
    D,
}

impl MdtbId {
    pub const ALL: [MdtbId; 4] = [MdtbId::A, MdtbId::B, MdtbId::C, MdtbId::D];
}

impl fmt::Display for MdtbId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MdtbId::A => "A",
            MdtbId::B => "B",
            MdtbId::C => "C",
            MdtbId::D => "D",
        };
        f.write_str(s)
    }
}

impl FromStr for MdtbId {
    type Err = WorkloadError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().trim_start_matches("mdtb-").trim_start_matches("MDTB-") {
            "A" | "a" => Ok(MdtbId::A),
            "B" | "b" => Ok(MdtbId::B),
            "C" | "c" => Ok(MdtbId::C),
            "D" | "d" => Ok(MdtbId::D),
            other => Err(WorkloadError::UnknownMdtb(other.to_string())),
        }
    }
}

/// The four benchmark pairings of a critical and a normal task.
pub fn build_mdtb(id: MdtbId) -> Workload {
    let (crit, crit_pattern, normal) = match id {
        MdtbId::A => ("alexnet-like", ArrivalPattern::ClosedLoop, "cifarnet-like"),
        MdtbId::B => (
            "squeezenet-like",
            ArrivalPattern::Uniform { rate: 10.0 },
            "alexnet-like",
        ),
        MdtbId::C => ("gru-like", ArrivalPattern::Poisson { rate: 10.0 }, "resnet-like"),
        MdtbId::D => ("lstm-like", ArrivalPattern::Uniform { rate: 10.0 }, "squeezenet-like"),
    };
    let builtin = |name| ModelProfile::builtin(name).expect("MDTB models are shipped");
    Workload {
        name: format!("MDTB-{id}"),
        critical: TaskLoad {
            task: TaskSpec::new(builtin(crit), Criticality::Critical),
            pattern: crit_pattern,
        },
        normal: TaskLoad {
            task: TaskSpec::new(builtin(normal), Criticality::Normal),
            pattern: ArrivalPattern::ClosedLoop,
        },
        duration: DEFAULT_DURATION,
        seed: 0,
    }
}

/// Parses `<arrival_seconds> <critical|normal>` lines.
pub fn parse_trace(text: &str) -> Result<Vec<(f64, Criticality)>, WorkloadError> {
    let mut out = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut fields = content.split_whitespace();
        let (Some(t), Some(class), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(WorkloadError::Trace {
                line,
                message: format!("expected `<seconds> <critical|normal>`, got `{content}`"),
            });
        };
        let t: f64 = t.parse().map_err(|_| WorkloadError::Trace {
            line,
            message: format!("bad timestamp `{t}`"),
        })?;
        if !(t >= 0.0 && t.is_finite()) {
            return Err(WorkloadError::Trace {
                line,
                message: format!("timestamp must be finite and non-negative, got {t}"),
            });
        }
        if t < last {
            return Err(WorkloadError::Trace {
                line,
                message: format!("timestamp {t} precedes previous {last}"),
            });
        }
        last = t;
        let class = class
            .parse::<Criticality>()
            .map_err(|message| WorkloadError::Trace { line, message })?;
        out.push((t, class));
    }
    if out.is_empty() {
        return Err(WorkloadError::EmptyTrace);
    }
    Ok(out)
}

/// Models used for trace workloads unless the caller overrides them:
/// obstacle detection (critical) and pose estimation (normal).
pub const TRACE_CRITICAL_MODEL: &str = "resnet-like";
pub const TRACE_NORMAL_MODEL: &str = "squeezenet-like";

/// Builds a workload from parsed trace requests.
pub fn workload_from_trace(
    name: &str,
    requests: &[(f64, Criticality)],
    critical: ModelProfile,
    normal: ModelProfile,
) -> Workload {
    let times = |class| {
        requests
            .iter()
            .filter(|(_, c)| *c == class)
            .map(|(t, _)| *t)
            .collect::<Vec<_>>()
    };
    let last = requests.last().map(|(t, _)| *t).unwrap_or(0.0);
    Workload {
        name: name.to_string(),
        critical: TaskLoad {
            task: TaskSpec::new(critical, Criticality::Critical),
            pattern: ArrivalPattern::Trace(times(Criticality::Critical)),
        },
        normal: TaskLoad {
            task: TaskSpec::new(normal, Criticality::Normal),
            pattern: ArrivalPattern::Trace(times(Criticality::Normal)),
        },
        duration: last.floor() + 1.0,
        seed: 0,
    }
}

pub fn load_trace(path: &Path) -> Result<Workload, WorkloadError> {
    let text = std::fs::read_to_string(path).map_err(|source| WorkloadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let requests = parse_trace(&text).map_err(|e| e.in_file(path))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trace".into());
    Ok(workload_from_trace(
        &name,
        &requests,
        ModelProfile::builtin(TRACE_CRITICAL_MODEL)?,
        ModelProfile::builtin(TRACE_NORMAL_MODEL)?,
    ))
}

/// Frequencies of the autonomous-driving case: camera obstacle detection at
/// 10 Hz (critical), lidar pose estimation at 12.5 Hz (normal).
pub const LGSVL_CRITICAL_HZ: f64 = 10.0;
pub const LGSVL_NORMAL_HZ: f64 = 12.5;

/// Generates an LGSVL-style trace in the text trace format. `jitter` adds a
/// seeded uniform offset in `[0, jitter)` seconds to every request while
/// keeping each stream's period.
pub fn lgsvl_trace(duration: f64, jitter: f64, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reqs: Vec<(f64, Criticality)> = Vec::new();
    for (hz, class) in [
        (LGSVL_CRITICAL_HZ, Criticality::Critical),
        (LGSVL_NORMAL_HZ, Criticality::Normal),
    ] {
        let n = (duration * hz + 1e-9).floor() as u64;
        for k in 0..n {
            let offset = if jitter > 0.0 { rng.gen_range(0.0..jitter) } else { 0.0 };
            reqs.push((k as f64 / hz + offset, class));
        }
    }
    reqs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut out = String::from("# LGSVL-style trace: critical 10 Hz, normal 12.5 Hz\n");
    for (t, class) in reqs {
        out.push_str(&format!("{t:.6} {class}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_ten_per_second() {
        let a = generate_arrivals(&ArrivalPattern::Uniform { rate: 10.0 }, 1.0, 0).unwrap();
        assert_eq!(a.times.len(), 10);
        assert!(!a.reissue);
        for (k, t) in a.times.iter().enumerate() {
            assert!((t - k as f64 * 0.1).abs() < 1e-12);
        }
        assert_eq!(a.times[0], 0.0);
    }

    #[test]
    fn closed_loop_is_event_driven() {
        let a = generate_arrivals(&ArrivalPattern::ClosedLoop, 1.0, 0).unwrap();
        assert!(a.times.is_empty());
        assert!(a.reissue);
    }

    #[test]
    fn poisson_count_within_three_sigma() {
        let a = generate_arrivals(&ArrivalPattern::Poisson { rate: 10.0 }, 1000.0, 7).unwrap();
        let n = a.times.len() as f64;
        assert!((n - 10000.0).abs() <= 300.0, "count {n}");
    }

    #[test]
    fn rejects_non_positive_rate() {
        for rate in [0.0, -1.0, f64::NAN] {
            assert!(matches!(
                generate_arrivals(&ArrivalPattern::Uniform { rate }, 1.0, 0),
                Err(WorkloadError::InvalidRate(_))
            ));
            assert!(generate_arrivals(&ArrivalPattern::Poisson { rate }, 1.0, 0).is_err());
        }
    }

    #[test]
    fn mdtb_pairings() {
        let a = build_mdtb(MdtbId::A);
        assert_eq!(a.critical.task.name, "alexnet-like");
        assert_eq!(a.critical.pattern, ArrivalPattern::ClosedLoop);
        assert_eq!(a.normal.task.name, "cifarnet-like");
        assert_eq!(a.normal.pattern, ArrivalPattern::ClosedLoop);

        let b = build_mdtb(MdtbId::B);
        assert_eq!(b.critical.task.name, "squeezenet-like");
        assert_eq!(b.critical.pattern, ArrivalPattern::Uniform { rate: 10.0 });
        assert_eq!(b.normal.task.name, "alexnet-like");

        let c = build_mdtb(MdtbId::C);
        assert_eq!(c.critical.task.name, "gru-like");
        assert_eq!(c.critical.pattern, ArrivalPattern::Poisson { rate: 10.0 });
        assert_eq!(c.normal.task.name, "resnet-like");

        let d = build_mdtb(MdtbId::D);
        assert_eq!(d.critical.task.name, "lstm-like");
        assert_eq!(d.critical.pattern, ArrivalPattern::Uniform { rate: 10.0 });
        assert_eq!(d.normal.task.name, "squeezenet-like");
        assert_eq!(d.duration, DEFAULT_DURATION);
    }

    #[test]
    fn mdtb_ids_parse() {
        assert_eq!("C".parse::<MdtbId>().unwrap(), MdtbId::C);
        assert_eq!("mdtb-b".parse::<MdtbId>().unwrap(), MdtbId::B);
        assert!(matches!("E".parse::<MdtbId>(), Err(WorkloadError::UnknownMdtb(_))));
    }

    #[test]
    fn builtin_profiles_are_valid() {
        let gpus = [GpuSpec::rtx2060_like(), GpuSpec::xavier_like()];
        for name in ModelProfile::builtin_names() {
            let p = ModelProfile::builtin(name).unwrap();
            assert_eq!(p.name, name);
            for g in &gpus {
                for k in &p.kernels {
                    k.validate(g).unwrap();
                }
            }
        }
        let alex = ModelProfile::builtin("alexnet-like").unwrap();
        assert_eq!(alex.kernels.len(), 8);
        let grids: Vec<u32> = alex.kernels.iter().map(|k| k.grid).collect();
        assert_eq!(*grids.iter().min().unwrap(), 4);
        assert_eq!(*grids.iter().max().unwrap(), 512);
    }

    #[test]
    fn profile_text_round_trips() {
        let p = ModelProfile::builtin("squeezenet-like").unwrap();
        assert_eq!(ModelProfile::parse(&p.to_text()).unwrap(), p);
    }

    #[test]
    fn profile_errors_carry_lines() {
        let err = ModelProfile::parse("name = x\n[kernel]\ngrid = 4\nblock = 32\nwork = abc\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 5, .. }), "{err}");
        assert!(ModelProfile::parse("name = x\n").is_err());
    }

    #[test]
    fn two_line_trace() {
        let reqs = parse_trace("0.0 critical\n0.08 normal\n").unwrap();
        assert_eq!(reqs, vec![(0.0, Criticality::Critical), (0.08, Criticality::Normal)]);
    }

    #[test]
    fn trace_comments_and_errors() {
        let reqs = parse_trace("# header\n\n0.5 normal # inline\n").unwrap();
        assert_eq!(reqs.len(), 1);
        assert!(matches!(parse_trace(""), Err(WorkloadError::EmptyTrace)));
        assert!(matches!(
            parse_trace("# only comments\n"),
            Err(WorkloadError::EmptyTrace)
        ));
        assert!(matches!(
            parse_trace("0.2 critical\n0.1 normal\n"),
            Err(WorkloadError::Trace { line: 2, .. })
        ));
        assert!(matches!(
            parse_trace("0.2 urgent\n"),
            Err(WorkloadError::Trace { line: 1, .. })
        ));
        assert!(matches!(
            parse_trace("abc normal\n"),
            Err(WorkloadError::Trace { line: 1, .. })
        ));
    }

    #[test]
    fn lgsvl_counts() {
        let text = lgsvl_trace(10.0, 0.0, 0);
        let reqs = parse_trace(&text).unwrap();
        let crit = reqs.iter().filter(|r| r.1 == Criticality::Critical).count();
        let normal = reqs.iter().filter(|r| r.1 == Criticality::Normal).count();
        assert_eq!((crit, normal), (100, 125));
        let w = workload_from_trace(
            "lgsvl",
            &reqs,
            ModelProfile::builtin("resnet-like").unwrap(),
            ModelProfile::builtin("squeezenet-like").unwrap(),
        );
        assert_eq!(w.duration, 10.0);
        let jittered = parse_trace(&lgsvl_trace(10.0, 0.005, 3)).unwrap();
        assert_eq!(jittered.len(), 225);
    }

    #[test]
    fn pattern_strings() {
        assert_eq!("closed".parse::<ArrivalPattern>().unwrap(), ArrivalPattern::ClosedLoop);
        assert_eq!(
            "poisson:10".parse::<ArrivalPattern>().unwrap(),
            ArrivalPattern::Poisson { rate: 10.0 }
        );
        assert!("burst:3".parse::<ArrivalPattern>().is_err());
    }
}
