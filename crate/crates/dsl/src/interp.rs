//! Reference interpreter: runs every (block, thread) pair of a launch one
//! after another, blocks in order and threads in order within a block.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::ast::{BinOp, Builtin, Direction, Expr, IndexMode, Kernel, Stmt, UnOp, INDEX_TABLE};

/// Named integer arrays.
pub type Arrays = BTreeMap<String, Vec<i64>>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuntimeError {
    #[error("out-of-bounds access {array}[{index}] (length {len}) in block {block}, thread {thread}")]
    OutOfBounds {
        array: String,
        index: i64,
        len: usize,
        block: u32,
        thread: u32,
    },
    #[error("division by zero in block {block}, thread {thread}")]
    DivisionByZero { block: u32, thread: u32 },
    #[error("integer overflow in block {block}, thread {thread}")]
    Overflow { block: u32, thread: u32 },
    #[error("loop step must be positive, got {step}")]
    BadStep { step: i64 },
    #[error("missing input array `{0}`")]
    MissingInput(String),
    #[error("array `{name}` has {got} elements, declared {expected}")]
    InputLength { name: String, expected: usize, got: usize },
    #[error("invalid launch: {0}")]
    Launch(String),
}

/// Launch parameters. Plain kernels only read `grid_size` and `block_size`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LaunchConfig {
    pub grid_size: u32,
    pub block_size: u32,
    /// Logical block offset of this shard; 0 for un-sliced launches.
    pub shard_start: u32,
    pub logical_grid_size: u32,
    pub logical_block_size: u32,
    pub index_mode: IndexMode,
    /// `(logical block, logical thread)` pairs, flattened, per shard-local
    /// slot `block * logical_block_size + i`. Required in memory mode.
    pub index_table: Option<Vec<i64>>,
}

impl LaunchConfig {
    /// An ordinary launch of `grid` blocks of `block` threads.
    pub fn plain(grid: u32, block: u32) -> Self {
        LaunchConfig {
            grid_size: grid,
            block_size: block,
            shard_start: 0,
            logical_grid_size: grid,
            logical_block_size: block,
            index_mode: IndexMode::Computation,
            index_table: None,
        }
    }

    /// One shard of an elastic launch: logical blocks
    /// `start..start + count` of a `logical_grid` x `logical_block` kernel,
    /// run by `count` blocks of `block` physical threads.
    pub fn shard(start: u32, count: u32, block: u32, logical_grid: u32, logical_block: u32, mode: IndexMode) -> Self {
        let index_table = (mode == IndexMode::Memory).then(|| index_table(start, count, logical_block));
        LaunchConfig {
            grid_size: count,
            block_size: block,
            shard_start: start,
            logical_grid_size: logical_grid,
            logical_block_size: logical_block,
            index_mode: mode,
            index_table,
        }
    }

    pub fn validate_elastic(&self) -> Result<(), RuntimeError> {
        if self.logical_block_size == 0 || self.logical_grid_size == 0 {
            return Err(RuntimeError::Launch("logical sizes must be at least 1".into()));
        }
        if self.shard_start as u64 + self.grid_size as u64 > self.logical_grid_size as u64 {
            return Err(RuntimeError::Launch(format!(
                "shard {}..{} exceeds logical grid {}",
                self.shard_start,
                self.shard_start as u64 + self.grid_size as u64,
                self.logical_grid_size
            )));
        }
        if self.index_mode == IndexMode::Memory {
            let need = 2 * self.grid_size as usize * self.logical_block_size as usize;
            match &self.index_table {
                Some(t) if t.len() == need => {}
                Some(t) => {
                    return Err(RuntimeError::Launch(format!(
                        "index table has {} entries, need {need}",
                        t.len()
                    )))
                }
                None => return Err(RuntimeError::Launch("memory index mode requires an index table".into())),
            }
        }
        Ok(())
    }
}

/// Host-side index table for one shard.
pub fn index_table(start: u32, count: u32, logical_block: u32) -> Vec<i64> {
    let mut t = Vec::with_capacity(2 * count as usize * logical_block as usize);
    for b in 0..count {
        for lt in 0..logical_block {
            t.push((start + b) as i64);
            t.push(lt as i64);
        }
    }
    t
}

/// Two different threads wrote the same cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WriteConflict {
    pub array: String,
    pub index: usize,
    /// `(block, thread)` of the first and the conflicting writer.
    pub first: (u32, u32),
    pub second: (u32, u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Execution {
    /// Final contents of the `out` and `inout` arrays.
    pub outputs: Arrays,
    pub conflicts: Vec<WriteConflict>,
}

struct Machine<'a> {
    arrays: HashMap<&'a str, Vec<i64>>,
    table: Option<&'a [i64]>,
    cfg: &'a LaunchConfig,
    block: u32,
    thread: u32,
    locals: Vec<(&'a str, i64)>,
    writers: HashMap<(&'a str, usize), (u32, u32)>,
    conflicts: Vec<WriteConflict>,
}

impl<'a> Machine<'a> {
    fn builtin(&self, b: Builtin) -> i64 {
        match b {
            Builtin::ThreadIdx => self.thread as i64,
            Builtin::BlockIdx => self.block as i64,
            Builtin::BlockDim => self.cfg.block_size as i64,
            Builtin::GridDim => self.cfg.grid_size as i64,
            Builtin::ShardStart => self.cfg.shard_start as i64,
            Builtin::LogicalGridDim => self.cfg.logical_grid_size as i64,
            Builtin::LogicalBlockDim => self.cfg.logical_block_size as i64,
        }
    }

    fn overflow(&self) -> RuntimeError {
        RuntimeError::Overflow {
            block: self.block,
            thread: self.thread,
        }
    }

    fn slot(&self, array: &str, index: i64, len: usize) -> Result<usize, RuntimeError> {
        if index < 0 || index as usize >= len {
            return Err(RuntimeError::OutOfBounds {
                array: array.to_string(),
                index,
                len,
                block: self.block,
                thread: self.thread,
            });
        }
        Ok(index as usize)
    }

    fn eval(&self, e: &'a Expr) -> Result<i64, RuntimeError> {
        Ok(match e {
            Expr::Int(v) => *v,
            Expr::Var(n) => {
                self.locals
                    .iter()
                    .rev()
                    .find(|(name, _)| name == n)
                    .expect("names are resolved by the parser")
                    .1
            }
            Expr::Builtin(b) => self.builtin(*b),
            Expr::Index(a, i) => {
                let i = self.eval(i)?;
                let data: &[i64] = if a == INDEX_TABLE {
                    self.table.expect("validated launch has a table")
                } else {
                    &self.arrays[a.as_str()]
                };
                data[self.slot(a, i, data.len())?]
            }
            Expr::Unary(UnOp::Neg, x) => self.eval(x)?.checked_neg().ok_or_else(|| self.overflow())?,
            Expr::Unary(UnOp::Not, x) => (self.eval(x)? == 0) as i64,
            Expr::Binary(BinOp::And, l, r) => (self.eval(l)? != 0 && self.eval(r)? != 0) as i64,
            Expr::Binary(BinOp::Or, l, r) => (self.eval(l)? != 0 || self.eval(r)? != 0) as i64,
            Expr::Binary(op, l, r) => {
                let (a, b) = (self.eval(l)?, self.eval(r)?);
                let div0 = || RuntimeError::DivisionByZero {
                    block: self.block,
                    thread: self.thread,
                };
                match op {
                    BinOp::Add => a.checked_add(b).ok_or_else(|| self.overflow())?,
                    BinOp::Sub => a.checked_sub(b).ok_or_else(|| self.overflow())?,
                    BinOp::Mul => a.checked_mul(b).ok_or_else(|| self.overflow())?,
                    BinOp::Div if b == 0 => return Err(div0()),
                    BinOp::Rem if b == 0 => return Err(div0()),
                    BinOp::Div => a.checked_div(b).ok_or_else(|| self.overflow())?,
                    BinOp::Rem => a.checked_rem(b).ok_or_else(|| self.overflow())?,
                    BinOp::Eq => (a == b) as i64,
                    BinOp::Ne => (a != b) as i64,
                    BinOp::Lt => (a < b) as i64,
                    BinOp::Le => (a <= b) as i64,
                    BinOp::Gt => (a > b) as i64,
                    BinOp::Ge => (a >= b) as i64,
                    BinOp::And | BinOp::Or => unreachable!(),
                }
            }
        })
    }

    fn run_block(&mut self, body: &'a [Stmt]) -> Result<(), RuntimeError> {
        let mark = self.locals.len();
        for s in body {
            self.exec(s)?;
        }
        self.locals.truncate(mark);
        Ok(())
    }

    fn exec(&mut self, s: &'a Stmt) -> Result<(), RuntimeError> {
        match s {
            Stmt::Let { name, value } => {
                let v = self.eval(value)?;
                self.locals.push((name, v));
            }
            Stmt::Assign { name, value } => {
                let v = self.eval(value)?;
                let slot = self.locals.iter_mut().rev().find(|(n, _)| n == name).expect("resolved");
                slot.1 = v;
            }
            Stmt::Store { array, index, value } => {
                let i = self.eval(index)?;
                let v = self.eval(value)?;
                let len = self.arrays[array.as_str()].len();
                let i = self.slot(array, i, len)?;
                self.arrays.get_mut(array.as_str()).unwrap()[i] = v;
                let me = (self.block, self.thread);
                if let Some(first) = self.writers.insert((array, i), me) {
                    if first != me {
                        self.conflicts.push(WriteConflict {
                            array: array.clone(),
                            index: i,
                            first,
                            second: me,
                        });
                    }
                }
            }
            Stmt::If { cond, then, otherwise } => {
                if self.eval(cond)? != 0 {
                    self.run_block(then)?;
                } else {
                    self.run_block(otherwise)?;
                }
            }
            Stmt::For {
                var,
                start,
                end,
                step,
                body,
            } => {
                let start = self.eval(start)?;
                let end = self.eval(end)?;
                let step = match step {
                    Some(s) => self.eval(s)?,
                    None => 1,
                };
                if step <= 0 {
                    return Err(RuntimeError::BadStep { step });
                }
                let mut i = start;
                while i < end {
                    self.locals.push((var, i));
                    let r = self.run_block(body);
                    self.locals.pop();
                    r?;
                    i = match i.checked_add(step) {
                        Some(n) => n,
                        None => break,
                    };
                }
            }
        }
        Ok(())
    }
}

/// Runs `kernel` under `cfg`. `inputs` must hold every `in` and `inout`
/// array; `out` arrays start zeroed unless given.
pub fn interpret(kernel: &Kernel, cfg: &LaunchConfig, inputs: &Arrays) -> Result<Execution, RuntimeError> {
    if cfg.grid_size == 0 || cfg.block_size == 0 {
        return Err(RuntimeError::Launch("grid and block sizes must be at least 1".into()));
    }
    if let Some(mode) = kernel.elastic {
        if mode != cfg.index_mode {
            return Err(RuntimeError::Launch(format!(
                "kernel uses {} indexing, launch provides {}",
                mode.as_str(),
                cfg.index_mode.as_str()
            )));
        }
        cfg.validate_elastic()?;
    }
    let mut arrays = HashMap::new();
    for p in &kernel.params {
        let data = match (inputs.get(&p.name), p.direction) {
            (Some(d), _) => d.clone(),
            (None, Direction::Out) => vec![0; p.len],
            (None, _) => return Err(RuntimeError::MissingInput(p.name.clone())),
        };
        if data.len() != p.len {
            return Err(RuntimeError::InputLength {
                name: p.name.clone(),
                expected: p.len,
                got: data.len(),
            });
        }
        arrays.insert(p.name.as_str(), data);
    }
    let mut m = Machine {
        arrays,
        table: cfg.index_table.as_deref(),
        cfg,
        block: 0,
        thread: 0,
        locals: Vec::new(),
        writers: HashMap::new(),
        conflicts: Vec::new(),
    };
    for block in 0..cfg.grid_size {
        for thread in 0..cfg.block_size {
            m.block = block;
            m.thread = thread;
            m.run_block(&kernel.body)?;
        }
    }
    let outputs = kernel
        .params
        .iter()
        .filter(|p| p.direction.is_written())
        .map(|p| (p.name.clone(), m.arrays.remove(p.name.as_str()).unwrap()))
        .collect();
    Ok(Execution {
        outputs,
        conflicts: m.conflicts,
    })
}
