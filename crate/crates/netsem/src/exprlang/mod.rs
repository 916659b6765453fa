//! Node-formula DSL: friend indexing with `[[...]]`, reserved variables
//! `nF` and `Kmax`, a fixed function whitelist and the `replaceNAw0` /
//! `na.rm` missing-value escape hatches.
//!
//! Grammar (EBNF):
//! ```text
//! expr        := cmp
//! cmp         := addsub { ("<" | ">" | "<=" | ">=" | "==" | "!=") addsub }
//! addsub      := muldiv { ("+" | "-") muldiv }
//! muldiv      := unary { ("*" | "/") unary }
//! unary       := ["-" | "+"] postfix
//! postfix     := primary [ "[[" indices "]]" ]
//! primary     := number | ident | call | "(" expr ")"
//! call        := ident "(" expr { "," expr } [ "," "na.rm" "=" "TRUE" ] ")"
//! indices     := item { "," item }
//! item        := bound [ ":" bound ]
//! bound       := integer | "Kmax"
//! ```

mod eval;
mod parser;

pub use eval::{evaluate, friend_lookup, EvalContext, Value};
pub use parser::parse;

use std::collections::BTreeSet;
use std::fmt;

pub const RESERVED_NF: &str = "nF";
pub const RESERVED_KMAX: &str = "Kmax";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
    Ne,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Lt => "<",
            BinOp::Gt => ">",
            BinOp::Le => "<=",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sum,
    Mean,
    Plogis,
    Log,
    Exp,
    Ifelse,
    Abs,
    Min,
    Max,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sum" => Func::Sum,
            "mean" => Func::Mean,
            "plogis" => Func::Plogis,
            "log" => Func::Log,
            "exp" => Func::Exp,
            "ifelse" => Func::Ifelse,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sum => "sum",
            Func::Mean => "mean",
            Func::Plogis => "plogis",
            Func::Log => "log",
            Func::Exp => "exp",
            Func::Ifelse => "ifelse",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn arity(self) -> std::ops::RangeInclusive<usize> {
        match self {
            Func::Sum | Func::Mean => 1..=1,
            Func::Plogis | Func::Log | Func::Exp | Func::Abs => 1..=1,
            Func::Ifelse => 3..=3,
            Func::Min | Func::Max => 2..=usize::MAX,
        }
    }

    fn allows_na_rm(self) -> bool {
        matches!(self, Func::Sum | Func::Mean)
    }
}

/// One bound of a friend index, either a literal or the reserved `Kmax`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexBound {
    Lit(u32),
    Kmax,
}

impl fmt::Display for IndexBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IndexBound::Lit(v) => write!(f, "{v}"),
            IndexBound::Kmax => write!(f, "Kmax"),
        }
    }
}

/// A friend-index item: single index or inclusive range `lo:hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexItem {
    Single(IndexBound),
    Range(IndexBound, IndexBound),
}

impl fmt::Display for IndexItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IndexItem::Single(b) => write!(f, "{b}"),
            IndexItem::Range(lo, hi) => write!(f, "{lo}:{hi}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    FriendRef {
        var: String,
        indices: Vec<IndexItem>,
    },
    Call {
        func: Func,
        args: Vec<Expr>,
        na_rm: bool,
    },
    Unary {
        negate: bool,
        expr: Box<Expr>,
    },
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
}

impl Expr {
    /// All node names referenced, directly or via friend indexing.
    /// Reserved names (`nF`, `Kmax`) are excluded; action parameters are
    /// filtered out by the model layer, which knows which are in scope.
    pub fn dependencies(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_deps(&mut out);
        out
    }

    fn collect_deps(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(name) => {
                if name != RESERVED_NF && name != RESERVED_KMAX {
                    out.insert(name.clone());
                }
            }
            Expr::FriendRef { var, .. } => {
                out.insert(var.clone());
            }
            Expr::Call { args, .. } => {
                for a in args {
                    a.collect_deps(out);
                }
            }
            Expr::Unary { expr, .. } => expr.collect_deps(out),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.collect_deps(out);
                rhs.collect_deps(out);
            }
        }
    }

    /// True if the expression uses the network in any way.
    pub fn uses_network(&self) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(name) => name == RESERVED_NF || name == RESERVED_KMAX,
            Expr::FriendRef { .. } => true,
            Expr::Call { args, .. } => args.iter().any(Expr::uses_network),
            Expr::Unary { expr, .. } => expr.uses_network(),
            Expr::Binary { lhs, rhs, .. } => lhs.uses_network() || rhs.uses_network(),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(name) => write!(f, "{name}"),
            Expr::FriendRef { var, indices } => {
                write!(f, "{var}[[")?;
                for (i, item) in indices.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{item}")?;
                }
                write!(f, "]]")
            }
            Expr::Call { func, args, na_rm } => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                if *na_rm {
                    write!(f, ", na.rm=TRUE")?;
                }
                write!(f, ")")
            }
            Expr::Unary { negate, expr } => {
                write!(f, "{}({expr})", if *negate { "-" } else { "+" })
            }
            Expr::Binary { op, lhs, rhs } => {
                write!(f, "({lhs} {} {rhs})", op.symbol())
            }
        }
    }
}
