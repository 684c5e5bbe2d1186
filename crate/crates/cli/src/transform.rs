//! `transform`: elasticize a kernel source file and optionally verify it.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use elastic_core::planner::slicing_plan;
use elastic_dsl::{
    elasticize, launch_header, parse_kernel, print_kernel, random_inputs, trials, uniform_plan,
    verification_block_sizes, verify_equivalence, IndexMode, Trial,
};

/// Warp width used to pick elastic block sizes when none is given.
const WARP: u32 = 32;

pub struct TransformArgs {
    pub grid: Option<u32>,
    pub block: Option<u32>,
    pub shard: Option<u32>,
    pub elastic_block: Option<u32>,
    pub mode: IndexMode,
    pub verify: bool,
    pub seed: u64,
}

pub struct TransformOutput {
    pub text: String,
    /// `Some(passed)` when verification ran.
    pub verified: Option<bool>,
}

/// Errors in the source come back as `path:line:col: message`.
pub fn transform(path: &Path, args: &TransformArgs) -> Result<TransformOutput> {
    let source = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let kernel = parse_kernel(&source).map_err(|e| anyhow!("{}:{e}", path.display()))?;
    let elastic = elasticize(&kernel, args.mode)?;
    let mut text = print_kernel(&elastic);
    if !args.verify {
        return Ok(TransformOutput { text, verified: None });
    }
    let header = launch_header(&source);
    let m = args
        .grid
        .or(header.map(|h| h.0))
        .ok_or_else(|| anyhow!("--verify needs --grid or an `// @launch grid= block=` header"))?;
    let b = args
        .block
        .or(header.map(|h| h.1))
        .ok_or_else(|| anyhow!("--verify needs --block or an `// @launch grid= block=` header"))?;
    let shards = match args.shard {
        Some(s) => vec![s],
        None => slicing_plan(m)?,
    };
    let blocks = match args.elastic_block {
        Some(e) => vec![e],
        None => verification_block_sizes(b, WARP),
    };
    let plan: Vec<Trial> = match (args.shard, args.elastic_block) {
        (Some(s), Some(e)) => vec![Trial {
            plan: uniform_plan(m, s),
            block: e,
        }],
        _ => trials(m, &shards, &blocks),
    };
    let inputs = random_inputs(&kernel, args.seed);
    let report = verify_equivalence(&kernel, &elastic, m, b, &plan, &inputs, args.seed)?;
    let passed = report.passed();
    let _ = writeln!(
        text,
        "\n// verify grid={m} block={b} mode={} trials={} seed={}",
        mode_name(args.mode),
        report.results.len(),
        args.seed
    );
    for f in report.failures() {
        let t = &f.trial;
        let _ = writeln!(
            text,
            "// FAIL shard={} block={}: {}",
            t.plan.first().map_or(0, |p| p.1),
            t.block,
            f.failure.as_deref().unwrap_or("")
        );
    }
    let _ = writeln!(text, "{}", if passed { "PASS" } else { "FAIL" });
    Ok(TransformOutput {
        text,
        verified: Some(passed),
    })
}

fn mode_name(mode: IndexMode) -> &'static str {
    match mode {
        IndexMode::Computation => "computation",
        IndexMode::Memory => "memory",
    }
}
