//! Kernel syntax tree and its canonical printer.

use std::fmt::{self, Write as _};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    In,
    Out,
    InOut,
}

impl Direction {
    pub fn keyword(self) -> &'static str {
        match self {
            Direction::In => "in",
            Direction::Out => "out",
            Direction::InOut => "inout",
        }
    }

    pub fn is_written(self) -> bool {
        !matches!(self, Direction::In)
    }

    pub fn is_read_from_input(self) -> bool {
        !matches!(self, Direction::Out)
    }
}

/// A named global-memory array with a static element count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub direction: Direction,
    pub len: usize,
}

/// How an elastic kernel recovers logical thread identities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum IndexMode {
    /// Computed from the physical indices and the launch parameters.
    #[default]
    Computation,
    /// Read from a table precomputed on the host.
    Memory,
}

impl IndexMode {
    pub fn as_str(self) -> &'static str {
        match self {
            IndexMode::Computation => "computation",
            IndexMode::Memory => "memory",
        }
    }
}

impl std::str::FromStr for IndexMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "computation" | "compute" => Ok(IndexMode::Computation),
            "memory" => Ok(IndexMode::Memory),
            other => Err(format!("unknown index mode `{other}` (expected computation or memory)")),
        }
    }
}

/// Launch-dependent values readable by kernel code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Builtin {
    ThreadIdx,
    BlockIdx,
    BlockDim,
    GridDim,
    /// First logical block of an elastic shard.
    ShardStart,
    LogicalGridDim,
    LogicalBlockDim,
}

impl Builtin {
    pub const PHYSICAL: [Builtin; 4] = [
        Builtin::ThreadIdx,
        Builtin::BlockIdx,
        Builtin::BlockDim,
        Builtin::GridDim,
    ];

    pub fn spelling(self) -> &'static str {
        match self {
            Builtin::ThreadIdx => "threadIdx.x",
            Builtin::BlockIdx => "blockIdx.x",
            Builtin::BlockDim => "blockDim.x",
            Builtin::GridDim => "gridDim.x",
            Builtin::ShardStart => "shardStart",
            Builtin::LogicalGridDim => "logicalGridDim",
            Builtin::LogicalBlockDim => "logicalBlockDim",
        }
    }

    pub fn is_elastic(self) -> bool {
        matches!(
            self,
            Builtin::ShardStart | Builtin::LogicalGridDim | Builtin::LogicalBlockDim
        )
    }
}

/// Name of the host-computed table read by memory-mode elastic kernels.
pub const INDEX_TABLE: &str = "indexTable";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Or,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
    Div,
    Rem,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Or => "||",
            BinOp::And => "&&",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
        }
    }

    /// Binding strength; all binary operators are left-associative.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne => 3,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div | BinOp::Rem => 6,
        }
    }
}

const UNARY_PREC: u8 = 7;
const ATOM_PREC: u8 = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Int(i64),
    Var(String),
    Builtin(Builtin),
    Index(String, Box<Expr>),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn bin(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(op, ..) => op.precedence(),
            // A negative literal prints with a leading minus.
            Expr::Int(v) if *v < 0 => UNARY_PREC,
            Expr::Unary(..) => UNARY_PREC,
            _ => ATOM_PREC,
        }
    }

    /// Calls `f` on this expression and every sub-expression.
    pub fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Index(_, i) => i.visit(f),
            Expr::Unary(_, e) => e.visit(f),
            Expr::Binary(_, l, r) => {
                l.visit(f);
                r.visit(f);
            }
            Expr::Int(_) | Expr::Var(_) | Expr::Builtin(_) => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    Let {
        name: String,
        value: Expr,
    },
    Assign {
        name: String,
        value: Expr,
    },
    Store {
        array: String,
        index: Expr,
        value: Expr,
    },
    If {
        cond: Expr,
        then: Vec<Stmt>,
        otherwise: Vec<Stmt>,
    },
    /// `for var in start..end step step { body }`; bounds and step are
    /// evaluated once on entry.
    For {
        var: String,
        start: Expr,
        end: Expr,
        step: Option<Expr>,
        body: Vec<Stmt>,
    },
}

impl Stmt {
    /// Calls `f` on every expression in this statement, nested ones included.
    pub fn visit_exprs(&self, f: &mut impl FnMut(&Expr)) {
        match self {
            Stmt::Let { value, .. } | Stmt::Assign { value, .. } => value.visit(f),
            Stmt::Store { index, value, .. } => {
                index.visit(f);
                value.visit(f);
            }
            Stmt::If { cond, then, otherwise } => {
                cond.visit(f);
                for s in then.iter().chain(otherwise) {
                    s.visit_exprs(f);
                }
            }
            Stmt::For {
                start, end, step, body, ..
            } => {
                start.visit(f);
                end.visit(f);
                if let Some(s) = step {
                    s.visit(f);
                }
                for s in body {
                    s.visit_exprs(f);
                }
            }
        }
    }

    /// Calls `f` on this statement and every nested statement.
    pub fn visit_stmts(&self, f: &mut impl FnMut(&Stmt)) {
        f(self);
        match self {
            Stmt::If { then, otherwise, .. } => {
                for s in then.iter().chain(otherwise) {
                    s.visit_stmts(f);
                }
            }
            Stmt::For { body, .. } => {
                for s in body {
                    s.visit_stmts(f);
                }
            }
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Kernel {
    pub name: String,
    pub params: Vec<Param>,
    pub body: Vec<Stmt>,
    /// Set on kernels produced by the elastic transformer.
    pub elastic: Option<IndexMode>,
}

impl Kernel {
    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Every name bound anywhere in the kernel: parameters, locals and loop
    /// variables.
    pub fn bound_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.params.iter().map(|p| p.name.clone()).collect();
        for s in &self.body {
            s.visit_stmts(&mut |s| match s {
                Stmt::Let { name, .. } => names.push(name.clone()),
                Stmt::For { var, .. } => names.push(var.clone()),
                _ => {}
            });
        }
        names
    }

    /// Whether any expression reads `b`.
    pub fn uses_builtin(&self, b: Builtin) -> bool {
        let mut found = false;
        for s in &self.body {
            s.visit_exprs(&mut |e| found |= *e == Expr::Builtin(b));
        }
        found
    }
}

fn write_expr(out: &mut String, e: &Expr) {
    match e {
        Expr::Int(v) => {
            let _ = write!(out, "{v}");
        }
        Expr::Var(n) => out.push_str(n),
        Expr::Builtin(b) => out.push_str(b.spelling()),
        Expr::Index(a, i) => {
            out.push_str(a);
            out.push('[');
            write_expr(out, i);
            out.push(']');
        }
        Expr::Unary(op, inner) => {
            out.push(match op {
                UnOp::Neg => '-',
                UnOp::Not => '!',
            });
            // `- -x` would lex fine, but `--x` and `-5` as an operand of
            // negation must stay distinguishable from a literal.
            let wrap = inner.precedence() < ATOM_PREC;
            write_wrapped(out, inner, wrap);
        }
        Expr::Binary(op, l, r) => {
            let p = op.precedence();
            write_wrapped(out, l, l.precedence() < p);
            let _ = write!(out, " {} ", op.symbol());
            write_wrapped(out, r, r.precedence() <= p);
        }
    }
}

fn write_wrapped(out: &mut String, e: &Expr, wrap: bool) {
    if wrap {
        out.push('(');
        write_expr(out, e);
        out.push(')');
    } else {
        write_expr(out, e);
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        write_expr(&mut s, self);
        f.write_str(&s)
    }
}

fn write_block(out: &mut String, body: &[Stmt], depth: usize) {
    for s in body {
        write_stmt(out, s, depth);
    }
}

fn write_stmt(out: &mut String, s: &Stmt, depth: usize) {
    let pad = "    ".repeat(depth);
    match s {
        Stmt::Let { name, value } => {
            let _ = writeln!(out, "{pad}let {name} = {value};");
        }
        Stmt::Assign { name, value } => {
            let _ = writeln!(out, "{pad}{name} = {value};");
        }
        Stmt::Store { array, index, value } => {
            let _ = writeln!(out, "{pad}{array}[{index}] = {value};");
        }
        Stmt::If { cond, then, otherwise } => {
            let _ = writeln!(out, "{pad}if ({cond}) {{");
            write_block(out, then, depth + 1);
            if otherwise.is_empty() {
                let _ = writeln!(out, "{pad}}}");
            } else {
                let _ = writeln!(out, "{pad}}} else {{");
                write_block(out, otherwise, depth + 1);
                let _ = writeln!(out, "{pad}}}");
            }
        }
        Stmt::For {
            var,
            start,
            end,
            step,
            body,
        } => {
            let _ = write!(out, "{pad}for {var} in {start}..{end}");
            if let Some(step) = step {
                let _ = write!(out, " step {step}");
            }
            out.push_str(" {\n");
            write_block(out, body, depth + 1);
            let _ = writeln!(out, "{pad}}}");
        }
    }
}

/// Canonical source text; parsing it yields the same kernel.
pub fn print_kernel(k: &Kernel) -> String {
    let mut out = String::new();
    if let Some(mode) = k.elastic {
        let _ = write!(out, "elastic({}) ", mode.as_str());
    }
    let params: Vec<String> = k
        .params
        .iter()
        .map(|p| format!("{} {}[{}]", p.direction.keyword(), p.name, p.len))
        .collect();
    let _ = writeln!(out, "kernel {}({}) {{", k.name, params.join(", "));
    write_block(&mut out, &k.body, 1);
    out.push_str("}\n");
    out
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_kernel(self))
    }
}
