//! Source-to-source elastic transformation and the equivalence check.
//!
//! The transformed kernel decouples its launch shape from its logical shape:
//! a physical block runs logical block `blockIdx.x + shardStart`, and each
//! physical thread loops over the logical threads `threadIdx.x`,
//! `threadIdx.x + blockDim.x`, ... below `logicalBlockDim`. Inside the loop
//! every physical identifier is replaced by its logical counterpart.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ast::{BinOp, Builtin, Expr, IndexMode, Kernel, Stmt, INDEX_TABLE};
use crate::interp::{interpret, Arrays, LaunchConfig, RuntimeError};
use crate::parser::taken_names;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ElasticizeError {
    #[error("kernel `{0}` is already elastic")]
    AlreadyElastic(String),
}

/// Transformer settings. `skip_rewrite` leaves one physical identifier
/// untouched and exists only to check that the oracle catches a broken
/// transformation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ElasticOptions {
    pub mode: IndexMode,
    pub skip_rewrite: Option<Builtin>,
}

fn fresh(taken: &mut std::collections::HashSet<String>, base: &str) -> String {
    let mut name = base.to_string();
    let mut k = 1;
    while taken.contains(&name) {
        name = format!("{base}_{k}");
        k += 1;
    }
    taken.insert(name.clone());
    name
}

fn rewrite_expr(e: &Expr, map: &dyn Fn(Builtin) -> Option<Expr>) -> Expr {
    match e {
        Expr::Builtin(b) => map(*b).unwrap_or_else(|| e.clone()),
        Expr::Int(_) | Expr::Var(_) => e.clone(),
        Expr::Index(a, i) => Expr::Index(a.clone(), Box::new(rewrite_expr(i, map))),
        Expr::Unary(op, x) => Expr::Unary(*op, Box::new(rewrite_expr(x, map))),
        Expr::Binary(op, l, r) => Expr::bin(*op, rewrite_expr(l, map), rewrite_expr(r, map)),
    }
}

fn rewrite_stmt(s: &Stmt, map: &dyn Fn(Builtin) -> Option<Expr>) -> Stmt {
    let block = |b: &[Stmt]| b.iter().map(|s| rewrite_stmt(s, map)).collect::<Vec<_>>();
    match s {
        Stmt::Let { name, value } => Stmt::Let {
            name: name.clone(),
            value: rewrite_expr(value, map),
        },
        Stmt::Assign { name, value } => Stmt::Assign {
            name: name.clone(),
            value: rewrite_expr(value, map),
        },
        Stmt::Store { array, index, value } => Stmt::Store {
            array: array.clone(),
            index: rewrite_expr(index, map),
            value: rewrite_expr(value, map),
        },
        Stmt::If { cond, then, otherwise } => Stmt::If {
            cond: rewrite_expr(cond, map),
            then: block(then),
            otherwise: block(otherwise),
        },
        Stmt::For {
            var,
            start,
            end,
            step,
            body,
        } => Stmt::For {
            var: var.clone(),
            start: rewrite_expr(start, map),
            end: rewrite_expr(end, map),
            step: step.as_ref().map(|e| rewrite_expr(e, map)),
            body: block(body),
        },
    }
}

/// Elasticizes `kernel` with default options.
pub fn elasticize(kernel: &Kernel, mode: IndexMode) -> Result<Kernel, ElasticizeError> {
    elasticize_with(
        kernel,
        ElasticOptions {
            mode,
            skip_rewrite: None,
        },
    )
}

pub fn elasticize_with(kernel: &Kernel, opts: ElasticOptions) -> Result<Kernel, ElasticizeError> {
    if kernel.elastic.is_some() {
        return Err(ElasticizeError::AlreadyElastic(kernel.name.clone()));
    }
    let mut taken = taken_names(kernel);
    let lt = fresh(&mut taken, "lt");
    let lblock = fresh(&mut taken, "logicalBlock");
    let lt_var = Expr::var(&lt);
    let lblock_var = Expr::var(&lblock);
    let map = |b: Builtin| -> Option<Expr> {
        if opts.skip_rewrite == Some(b) {
            return None;
        }
        Some(match b {
            Builtin::ThreadIdx => lt_var.clone(),
            Builtin::BlockIdx => lblock_var.clone(),
            Builtin::BlockDim => Expr::Builtin(Builtin::LogicalBlockDim),
            Builtin::GridDim => Expr::Builtin(Builtin::LogicalGridDim),
            _ => return None,
        })
    };
    let user: Vec<Stmt> = kernel.body.iter().map(|s| rewrite_stmt(s, &map)).collect();

    let thread = Expr::Builtin(Builtin::ThreadIdx);
    let logical_dim = Expr::Builtin(Builtin::LogicalBlockDim);
    let stride = Some(Expr::Builtin(Builtin::BlockDim));
    let body = match opts.mode {
        IndexMode::Computation => vec![
            Stmt::Let {
                name: lblock,
                value: Expr::bin(
                    BinOp::Add,
                    Expr::Builtin(Builtin::BlockIdx),
                    Expr::Builtin(Builtin::ShardStart),
                ),
            },
            Stmt::For {
                var: lt,
                start: thread,
                end: logical_dim,
                step: stride,
                body: user,
            },
        ],
        IndexMode::Memory => {
            let slot = fresh(&mut taken, "slot");
            // Entry `2 * (blockIdx.x * logicalBlockDim + slot)` holds the
            // logical block, the next one the logical thread.
            let base = Expr::bin(
                BinOp::Mul,
                Expr::Int(2),
                Expr::bin(
                    BinOp::Add,
                    Expr::bin(BinOp::Mul, Expr::Builtin(Builtin::BlockIdx), logical_dim.clone()),
                    Expr::var(&slot),
                ),
            );
            let mut inner = vec![
                Stmt::Let {
                    name: lblock,
                    value: Expr::Index(INDEX_TABLE.into(), Box::new(base.clone())),
                },
                Stmt::Let {
                    name: lt,
                    value: Expr::Index(INDEX_TABLE.into(), Box::new(Expr::bin(BinOp::Add, base, Expr::Int(1)))),
                },
            ];
            inner.extend(user);
            vec![Stmt::For {
                var: slot,
                start: thread,
                end: logical_dim,
                step: stride,
                body: inner,
            }]
        }
    };
    Ok(Kernel {
        name: kernel.name.clone(),
        params: kernel.params.clone(),
        body,
        elastic: Some(opts.mode),
    })
}

/// The rewritten user statements inside an elastic kernel's persistent
/// loop, i.e. everything but the injected prologue.
pub fn user_body(elastic: &Kernel) -> Option<&[Stmt]> {
    let mode = elastic.elastic?;
    let loop_stmt = match mode {
        IndexMode::Computation => elastic.body.get(1)?,
        IndexMode::Memory => elastic.body.first()?,
    };
    let Stmt::For { body, .. } = loop_stmt else { return None };
    match mode {
        IndexMode::Computation => Some(body),
        IndexMode::Memory => body.get(2..),
    }
}

/// Shards covering `[0, m)` as `(start, count)` pairs.
pub type ShardPlan = Vec<(u32, u32)>;

/// Equal shards of `size` blocks.
pub fn uniform_plan(m: u32, size: u32) -> ShardPlan {
    (0..m.div_ceil(size.max(1)))
        .map(|i| (i * size, size.min(m - i * size)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifyError {
    #[error("shard plan {0} is empty")]
    EmptyPlan(usize),
    #[error("shard plan {0} does not partition the grid")]
    NotPartition(usize),
    #[error("elastic block size must be at least 1")]
    ZeroBlock,
    #[error("original launch failed: {0}")]
    Original(RuntimeError),
}

/// One (shard plan, elastic block size) configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    pub plan: ShardPlan,
    pub block: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialResult {
    pub trial: Trial,
    /// `None` on a bit-exact match, otherwise what differed.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquivalenceReport {
    pub kernel: String,
    pub results: Vec<TrialResult>,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.failure.is_none())
    }

    pub fn failures(&self) -> impl Iterator<Item = &TrialResult> {
        self.results.iter().filter(|r| r.failure.is_some())
    }
}

fn first_difference(expected: &Arrays, got: &Arrays) -> Option<String> {
    for (name, want) in expected {
        let Some(have) = got.get(name) else {
            return Some(format!("missing output `{name}`"));
        };
        if let Some(i) = (0..want.len()).find(|&i| want.get(i) != have.get(i)) {
            return Some(format!("{name}[{i}]: expected {}, got {:?}", want[i], have.get(i)));
        }
    }
    None
}

/// Runs every trial of `elastic` and compares the outputs bit-exactly with
/// one full launch of `original` (`m` blocks of `b` threads).
///
/// Shards of one trial share memory and run in an order shuffled by `seed`,
/// as a GPU gives no ordering between independent launches.
pub fn verify_equivalence(
    original: &Kernel,
    elastic: &Kernel,
    m: u32,
    b: u32,
    trials: &[Trial],
    inputs: &Arrays,
    seed: u64,
) -> Result<EquivalenceReport, VerifyError> {
    for (i, t) in trials.iter().enumerate() {
        if t.plan.is_empty() {
            return Err(VerifyError::EmptyPlan(i));
        }
        if t.block == 0 {
            return Err(VerifyError::ZeroBlock);
        }
        let mut sorted = t.plan.clone();
        sorted.sort_unstable();
        let mut next = 0;
        for (start, count) in sorted {
            if start != next || count == 0 {
                return Err(VerifyError::NotPartition(i));
            }
            next += count;
        }
        if next != m {
            return Err(VerifyError::NotPartition(i));
        }
    }
    let expected = interpret(original, &LaunchConfig::plain(m, b), inputs)
        .map_err(VerifyError::Original)?
        .outputs;
    let mode = elastic.elastic.unwrap_or_default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut results = Vec::with_capacity(trials.len());
    for t in trials {
        let mut order = t.plan.clone();
        order.shuffle(&mut rng);
        let mut memory = inputs.clone();
        let mut failure = None;
        for (start, count) in order {
            let cfg = LaunchConfig::shard(start, count, t.block, m, b, mode);
            match interpret(elastic, &cfg, &memory) {
                Ok(run) => memory.extend(run.outputs),
                Err(e) => {
                    failure = Some(format!("shard {start}+{count}: {e}"));
                    break;
                }
            }
        }
        let failure = failure.or_else(|| first_difference(&expected, &memory));
        results.push(TrialResult {
            trial: t.clone(),
            failure,
        });
    }
    Ok(EquivalenceReport {
        kernel: original.name.clone(),
        results,
    })
}

/// Random inputs for every array the kernel reads, values in `-1000..1000`.
pub fn random_inputs(kernel: &Kernel, seed: u64) -> Arrays {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    kernel
        .params
        .iter()
        .filter(|p| p.direction.is_read_from_input())
        .map(|p| (p.name.clone(), (0..p.len).map(|_| rng.gen_range(-1000..1000)).collect()))
        .collect()
}

/// Outcome of resizing a launch without transforming the kernel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NaiveResize {
    pub grid: u32,
    pub block: u32,
    /// `None` if the resized launch still matches the original.
    pub difference: Option<String>,
}

/// Launches the untransformed kernel with the same total thread count but a
/// different block size (`block / 2`, grid doubled) and compares against the
/// original launch.
pub fn naive_resize(kernel: &Kernel, m: u32, b: u32, inputs: &Arrays) -> Result<NaiveResize, RuntimeError> {
    let expected = interpret(kernel, &LaunchConfig::plain(m, b), inputs)?.outputs;
    let (grid, block) = if b >= 2 {
        (m * 2, b / 2)
    } else {
        (m.div_ceil(2).max(1), 2)
    };
    let difference = match interpret(kernel, &LaunchConfig::plain(grid, block), inputs) {
        Ok(run) => first_difference(&expected, &run.outputs),
        Err(e) => Some(e.to_string()),
    };
    Ok(NaiveResize {
        grid,
        block,
        difference,
    })
}
