//! Lexer and recursive-descent parser with name resolution.
//!
//! Grammar (1-D launches only):
//!
//! ```text
//! kernel   := [ "elastic" "(" mode ")" ] "kernel" ident "(" params ")" block
//! params   := [ param { "," param } ]
//! param    := ("in" | "out" | "inout") ident "[" int "]"
//! block    := "{" { stmt } "}"
//! stmt     := "let" ident "=" expr ";"
//!           | ident "=" expr ";"
//!           | ident "[" expr "]" "=" expr ";"
//!           | "if" "(" expr ")" block [ "else" ( block | if-stmt ) ]
//!           | "for" ident "in" expr ".." expr [ "step" expr ] block
//! expr     := binary expression over || && == != < <= > >= + - * / %
//!             with unary - and !, array reads a[e], integer literals,
//!             locals and the builtins threadIdx.x blockIdx.x blockDim.x
//!             gridDim.x (elastic kernels also see shardStart,
//!             logicalGridDim, logicalBlockDim and indexTable[...])
//! ```
//!
//! `//` starts a line comment. Loops always have bounds fixed on entry, so
//! `while` is rejected.

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

use crate::ast::{BinOp, Builtin, Direction, Expr, IndexMode, Kernel, Param, Stmt, UnOp, INDEX_TABLE};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(i64),
    Builtin(Builtin),
    Sym(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(v) => write!(f, "`{v}`"),
            Tok::Builtin(b) => write!(f, "`{}`", b.spelling()),
            Tok::Sym(s) => write!(f, "`{s}`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

const SYMBOLS: [&str; 27] = [
    "..", "==", "!=", "<=", ">=", "&&", "||", "(", ")", "{", "}", "[", "]", ",", ";", "=", "<", ">", "+", "-", "*",
    "/", "%", "!", ".", ":", "#",
];

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, col, message: String| ParseError { line, col, message };
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let (start_line, start_col) = (line, col);
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let v = text
                .parse::<i64>()
                .map_err(|_| err(start_line, start_col, format!("integer literal `{text}` out of range")))?;
            col += i - start;
            out.push(Token {
                tok: Tok::Int(v),
                line: start_line,
                col: start_col,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            let dim = match word.as_str() {
                "threadIdx" => Some(Builtin::ThreadIdx),
                "blockIdx" => Some(Builtin::BlockIdx),
                "blockDim" => Some(Builtin::BlockDim),
                "gridDim" => Some(Builtin::GridDim),
                _ => None,
            };
            let tok = match dim {
                Some(b) => {
                    let rest: String = chars[i..].iter().take(2).collect();
                    if rest != ".x" {
                        return Err(err(
                            start_line,
                            start_col,
                            format!("only `{word}.x` is supported (1-D launches)"),
                        ));
                    }
                    i += 2;
                    Tok::Builtin(b)
                }
                None => Tok::Ident(word),
            };
            col += i - start;
            out.push(Token {
                tok,
                line: start_line,
                col: start_col,
            });
            continue;
        }
        let rest: String = chars[i..].iter().take(2).collect();
        let sym = SYMBOLS
            .iter()
            .find(|s| rest.starts_with(**s))
            .ok_or_else(|| err(start_line, start_col, format!("unexpected character `{c}`")))?;
        i += sym.len();
        col += sym.len();
        out.push(Token {
            tok: Tok::Sym(sym),
            line: start_line,
            col: start_col,
        });
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

#[derive(Clone, Copy, PartialEq)]
enum Local {
    Mutable,
    LoopVar,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    params: Vec<Param>,
    scopes: Vec<Vec<(String, Local)>>,
    elastic: Option<IndexMode>,
}

const KEYWORDS: [&str; 12] = [
    "kernel", "elastic", "let", "if", "else", "for", "in", "out", "inout", "step", "while", "loop",
];

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_at(t: &Token, message: impl Into<String>) -> ParseError {
        ParseError {
            line: t.line,
            col: t.col,
            message: message.into(),
        }
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(&self.peek().tok, Tok::Sym(x) if *x == s)
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(x) if x == w)
    }

    fn expect_sym(&mut self, s: &str) -> Result<Token, ParseError> {
        if self.is_sym(s) {
            Ok(self.bump())
        } else {
            Err(Self::error_at(
                self.peek(),
                format!("expected `{s}`, found {}", self.peek().tok),
            ))
        }
    }

    fn expect_word(&mut self, w: &str) -> Result<Token, ParseError> {
        if self.is_word(w) {
            Ok(self.bump())
        } else {
            Err(Self::error_at(
                self.peek(),
                format!("expected `{w}`, found {}", self.peek().tok),
            ))
        }
    }

    fn ident(&mut self) -> Result<(String, Token), ParseError> {
        let t = self.bump();
        match &t.tok {
            Tok::Ident(s) if KEYWORDS.contains(&s.as_str()) => Err(Self::error_at(&t, format!("`{s}` is a keyword"))),
            Tok::Ident(s) => Ok((s.clone(), t.clone())),
            other => Err(Self::error_at(&t, format!("expected identifier, found {other}"))),
        }
    }

    fn int(&mut self) -> Result<i64, ParseError> {
        let t = self.bump();
        match t.tok {
            Tok::Int(v) => Ok(v),
            ref other => Err(Self::error_at(&t, format!("expected integer, found {other}"))),
        }
    }

    fn lookup_local(&self, name: &str) -> Option<Local> {
        self.scopes
            .iter()
            .rev()
            .flat_map(|s| s.iter().rev())
            .find(|(n, _)| n == name)
            .map(|(_, k)| *k)
    }

    fn is_array(&self, name: &str) -> bool {
        self.params.iter().any(|p| p.name == name) || (self.elastic == Some(IndexMode::Memory) && name == INDEX_TABLE)
    }

    fn elastic_builtin(&self, name: &str) -> Option<Builtin> {
        self.elastic?;
        match name {
            "shardStart" => Some(Builtin::ShardStart),
            "logicalGridDim" => Some(Builtin::LogicalGridDim),
            "logicalBlockDim" => Some(Builtin::LogicalBlockDim),
            _ => None,
        }
    }

    fn check_new_name(&self, name: &str, at: &Token) -> Result<(), ParseError> {
        if self.is_array(name) || self.elastic_builtin(name).is_some() {
            return Err(Self::error_at(at, format!("`{name}` shadows an array or builtin")));
        }
        if self.scopes.last().is_some_and(|s| s.iter().any(|(n, _)| n == name)) {
            return Err(Self::error_at(
                at,
                format!("`{name}` is already declared in this block"),
            ));
        }
        Ok(())
    }

    fn kernel(&mut self) -> Result<Kernel, ParseError> {
        if self.is_word("elastic") {
            self.bump();
            self.expect_sym("(")?;
            let (mode, at) = self.ident()?;
            self.elastic = Some(mode.parse().map_err(|e: String| Self::error_at(&at, e))?);
            self.expect_sym(")")?;
        }
        self.expect_word("kernel")?;
        let (name, _) = self.ident()?;
        self.expect_sym("(")?;
        let mut params: Vec<Param> = Vec::new();
        if !self.is_sym(")") {
            loop {
                let t = self.bump();
                let direction = match &t.tok {
                    Tok::Ident(w) if w == "in" => Direction::In,
                    Tok::Ident(w) if w == "out" => Direction::Out,
                    Tok::Ident(w) if w == "inout" => Direction::InOut,
                    other => return Err(Self::error_at(&t, format!("expected in, out or inout, found {other}"))),
                };
                let (pname, at) = self.ident()?;
                if params.iter().any(|p| p.name == pname) || pname == INDEX_TABLE {
                    return Err(Self::error_at(
                        &at,
                        format!("duplicate or reserved array name `{pname}`"),
                    ));
                }
                self.expect_sym("[")?;
                let len_tok = self.peek().clone();
                let len = self.int()?;
                if len < 1 {
                    return Err(Self::error_at(&len_tok, "array length must be at least 1"));
                }
                self.expect_sym("]")?;
                params.push(Param {
                    name: pname,
                    direction,
                    len: len as usize,
                });
                if self.is_sym(",") {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect_sym(")")?;
        self.params = params;
        let body = self.block()?;
        let end = self.peek().clone();
        if end.tok != Tok::Eof {
            return Err(Self::error_at(
                &end,
                format!("unexpected {} after kernel body", end.tok),
            ));
        }
        Ok(Kernel {
            name,
            params: std::mem::take(&mut self.params),
            body,
            elastic: self.elastic,
        })
    }

    fn block(&mut self) -> Result<Vec<Stmt>, ParseError> {
        self.expect_sym("{")?;
        self.scopes.push(Vec::new());
        let mut body = Vec::new();
        while !self.is_sym("}") {
            if self.peek().tok == Tok::Eof {
                return Err(Self::error_at(self.peek(), "unclosed block"));
            }
            body.push(self.stmt()?);
        }
        self.bump();
        self.scopes.pop();
        Ok(body)
    }

    fn stmt(&mut self) -> Result<Stmt, ParseError> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Ident(w) if w == "while" || w == "loop" => Err(Self::error_at(
                &t,
                format!("unbounded loop: `{w}` is not supported, use a bounded `for`"),
            )),
            Tok::Ident(w) if w == "let" => {
                self.bump();
                let (name, at) = self.ident()?;
                self.check_new_name(&name, &at)?;
                self.expect_sym("=")?;
                let value = self.expr()?;
                self.expect_sym(";")?;
                self.scopes.last_mut().unwrap().push((name.clone(), Local::Mutable));
                Ok(Stmt::Let { name, value })
            }
            Tok::Ident(w) if w == "if" => self.if_stmt(),
            Tok::Ident(w) if w == "for" => {
                self.bump();
                let (var, at) = self.ident()?;
                self.expect_word("in")?;
                let start = self.expr()?;
                self.expect_sym("..")?;
                let end = self.expr()?;
                let step = if self.is_word("step") {
                    self.bump();
                    Some(self.expr()?)
                } else {
                    None
                };
                self.scopes.push(Vec::new());
                self.check_new_name(&var, &at)?;
                self.scopes.last_mut().unwrap().push((var.clone(), Local::LoopVar));
                let body = self.block();
                self.scopes.pop();
                Ok(Stmt::For {
                    var,
                    start,
                    end,
                    step,
                    body: body?,
                })
            }
            Tok::Ident(_) => {
                let (name, at) = self.ident()?;
                if self.is_sym("[") {
                    self.bump();
                    let param = self.params.iter().find(|p| p.name == name);
                    match param {
                        None if self.lookup_local(&name).is_some() => {
                            return Err(Self::error_at(&at, format!("`{name}` is not an array")))
                        }
                        None => return Err(Self::error_at(&at, format!("undeclared array `{name}`"))),
                        Some(p) if !p.direction.is_written() => {
                            return Err(Self::error_at(&at, format!("cannot write to input array `{name}`")))
                        }
                        Some(_) => {}
                    }
                    let index = self.expr()?;
                    self.expect_sym("]")?;
                    self.expect_sym("=")?;
                    let value = self.expr()?;
                    self.expect_sym(";")?;
                    return Ok(Stmt::Store {
                        array: name,
                        index,
                        value,
                    });
                }
                match self.lookup_local(&name) {
                    Some(Local::Mutable) => {}
                    Some(Local::LoopVar) => {
                        return Err(Self::error_at(&at, format!("cannot assign to loop variable `{name}`")))
                    }
                    None => return Err(Self::error_at(&at, format!("unknown identifier `{name}`"))),
                }
                self.expect_sym("=")?;
                let value = self.expr()?;
                self.expect_sym(";")?;
                Ok(Stmt::Assign { name, value })
            }
            other => Err(Self::error_at(&t, format!("expected statement, found {other}"))),
        }
    }

    fn if_stmt(&mut self) -> Result<Stmt, ParseError> {
        self.expect_word("if")?;
        self.expect_sym("(")?;
        let cond = self.expr()?;
        self.expect_sym(")")?;
        let then = self.block()?;
        let otherwise = if self.is_word("else") {
            self.bump();
            if self.is_word("if") {
                vec![self.if_stmt()?]
            } else {
                self.block()?
            }
        } else {
            Vec::new()
        };
        Ok(Stmt::If { cond, then, otherwise })
    }

    fn binop(&self) -> Option<BinOp> {
        let Tok::Sym(s) = self.peek().tok else { return None };
        Some(match s {
            "||" => BinOp::Or,
            "&&" => BinOp::And,
            "==" => BinOp::Eq,
            "!=" => BinOp::Ne,
            "<" => BinOp::Lt,
            "<=" => BinOp::Le,
            ">" => BinOp::Gt,
            ">=" => BinOp::Ge,
            "+" => BinOp::Add,
            "-" => BinOp::Sub,
            "*" => BinOp::Mul,
            "/" => BinOp::Div,
            "%" => BinOp::Rem,
            _ => return None,
        })
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.binary(1)
    }

    /// Precedence climbing; every operator is left-associative.
    fn binary(&mut self, min: u8) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binop() {
            if op.precedence() < min {
                break;
            }
            self.bump();
            let rhs = self.binary(op.precedence() + 1)?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.is_sym("-") {
            self.bump();
            return Ok(Expr::Unary(UnOp::Neg, Box::new(self.unary()?)));
        }
        if self.is_sym("!") {
            self.bump();
            return Ok(Expr::Unary(UnOp::Not, Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Int(v) => {
                self.bump();
                Ok(Expr::Int(*v))
            }
            Tok::Builtin(b) => {
                self.bump();
                Ok(Expr::Builtin(*b))
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(_) => {
                let (name, at) = self.ident()?;
                if self.is_sym("[") {
                    if !self.is_array(&name) {
                        return Err(Self::error_at(&at, format!("undeclared array `{name}`")));
                    }
                    self.bump();
                    let index = self.expr()?;
                    self.expect_sym("]")?;
                    return Ok(Expr::Index(name, Box::new(index)));
                }
                if self.lookup_local(&name).is_some() {
                    return Ok(Expr::Var(name));
                }
                if let Some(b) = self.elastic_builtin(&name) {
                    return Ok(Expr::Builtin(b));
                }
                if self.is_array(&name) {
                    return Err(Self::error_at(&at, format!("array `{name}` used without an index")));
                }
                Err(Self::error_at(&at, format!("unknown identifier `{name}`")))
            }
            other => Err(Self::error_at(&t, format!("expected expression, found {other}"))),
        }
    }
}

/// Parses one kernel.
pub fn parse_kernel(source: &str) -> Result<Kernel, ParseError> {
    let toks = lex(source)?;
    let mut p = Parser {
        toks,
        pos: 0,
        params: Vec::new(),
        scopes: Vec::new(),
        elastic: None,
    };
    p.kernel()
}

/// Launch shape from a `// @launch grid=<n> block=<n>` header line.
pub fn launch_header(source: &str) -> Option<(u32, u32)> {
    for line in source.lines() {
        let Some(rest) = line.trim().strip_prefix("//") else {
            continue;
        };
        let Some(rest) = rest.trim().strip_prefix("@launch") else {
            continue;
        };
        let mut grid = None;
        let mut block = None;
        for kv in rest.split_whitespace() {
            match kv.split_once('=') {
                Some(("grid", v)) => grid = v.parse().ok(),
                Some(("block", v)) => block = v.parse().ok(),
                _ => {}
            }
        }
        return Some((grid?, block?));
    }
    None
}

/// Names declared anywhere in `kernel`, for picking fresh identifiers.
pub(crate) fn taken_names(kernel: &Kernel) -> HashSet<String> {
    kernel.bound_names().into_iter().collect()
}
