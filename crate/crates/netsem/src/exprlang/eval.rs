//! Vectorized evaluation of node formulas over `n` units.
//!
//! Missing values are carried as NaN and propagate strictly through
//! arithmetic; only `replaceNAw0` (applied to friend-lookup output) and
//! `na.rm=TRUE` (inside row-wise sum/mean) remove them.

use super::{BinOp, Expr, Func, IndexBound, IndexItem, RESERVED_KMAX, RESERVED_NF};
use crate::error::{Error, Result};
use crate::netgraph::NetworkMatrix;
use std::collections::BTreeMap;

pub const MISSING: f64 = f64::NAN;

/// Evaluation result: a scalar, or a set of length-`n` columns
/// (a single column is a one-column matrix).
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

impl Value {
    pub fn column(col: Vec<f64>) -> Value {
        Value::Matrix(vec![col])
    }

    pub fn ncols(&self) -> usize {
        match self {
            Value::Scalar(_) => 1,
            Value::Matrix(cols) => cols.len(),
        }
    }

    /// Materialize as a single length-`n` column, broadcasting scalars.
    pub fn into_column(self, n: usize) -> Result<Vec<f64>> {
        match self {
            Value::Scalar(v) => Ok(vec![v; n]),
            Value::Matrix(mut cols) => {
                if cols.len() != 1 {
                    return Err(Error::eval(format!(
                        "expected a single column, got {} columns",
                        cols.len()
                    )));
                }
                Ok(cols.pop().unwrap())
            }
        }
    }

    /// Materialize as columns, broadcasting scalars to one column.
    pub fn into_columns(self, n: usize) -> Vec<Vec<f64>> {
        match self {
            Value::Scalar(v) => vec![vec![v; n]],
            Value::Matrix(cols) => cols,
        }
    }
}

/// Everything a formula may reference: previously defined columns, the
/// network, and scalar bindings (Kmax, action parameters).
pub struct EvalContext<'a> {
    pub n: usize,
    pub columns: BTreeMap<String, &'a [f64]>,
    pub scalars: BTreeMap<String, f64>,
    pub net: Option<&'a NetworkMatrix>,
    pub replace_na_w0: bool,
}

impl<'a> EvalContext<'a> {
    pub fn new(n: usize) -> Self {
        EvalContext {
            n,
            columns: BTreeMap::new(),
            scalars: BTreeMap::new(),
            net: None,
            replace_na_w0: false,
        }
    }

    fn kmax(&self) -> Result<usize> {
        self.net
            .map(|m| m.kmax())
            .ok_or_else(|| Error::eval("Kmax referenced but no network attached"))
    }
}

/// Row-wise friend lookup: for each unit, the requested own/friend values of
/// `column`, one output column per requested index. Index 0 is the unit's own
/// value; index j >= 1 is its j-th friend (MISSING when it has fewer).
pub fn friend_lookup(
    column: &[f64],
    net: &NetworkMatrix,
    indices: &[u32],
) -> Result<Vec<Vec<f64>>> {
    let n = net.n();
    let mut out = Vec::with_capacity(indices.len());
    for &j in indices {
        if j as usize > net.kmax() {
            return Err(Error::eval(format!(
                "friend index {j} exceeds Kmax = {}",
                net.kmax()
            )));
        }
        let mut col = Vec::with_capacity(n);
        for i in 0..n {
            if j == 0 {
                col.push(column[i]);
            } else {
                let row = net.row(i);
                if row.len() >= j as usize {
                    col.push(column[(row[j as usize - 1] - 1) as usize]);
                } else {
                    col.push(MISSING);
                }
            }
        }
        out.push(col);
    }
    Ok(out)
}

fn resolve_indices(items: &[IndexItem], ctx: &EvalContext) -> Result<Vec<u32>> {
    let mut out = Vec::new();
    for item in items {
        let bound = |b: IndexBound| -> Result<u32> {
            match b {
                IndexBound::Lit(v) => Ok(v),
                IndexBound::Kmax => Ok(ctx.kmax()? as u32),
            }
        };
        match item {
            IndexItem::Single(b) => out.push(bound(*b)?),
            IndexItem::Range(lo, hi) => {
                let lo = bound(*lo)?;
                let hi = bound(*hi)?;
                if lo > hi {
                    return Err(Error::eval(format!(
                        "friend index range {lo}:{hi} is empty (network kmax may be 0)"
                    )));
                }
                out.extend(lo..=hi);
            }
        }
    }
    Ok(out)
}

fn plogis(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn apply_unary(f: impl Fn(f64) -> f64, v: Value) -> Value {
    match v {
        Value::Scalar(x) => Value::Scalar(f(x)),
        Value::Matrix(cols) => Value::Matrix(
            cols.into_iter()
                .map(|c| c.into_iter().map(&f).collect())
                .collect(),
        ),
    }
}

/// Elementwise combine with scalar/column broadcasting. Single-column values
/// broadcast across a multi-column partner.
fn zip_values(a: Value, b: Value, f: impl Fn(f64, f64) -> f64) -> Result<Value> {
    match (a, b) {
        (Value::Scalar(x), Value::Scalar(y)) => Ok(Value::Scalar(f(x, y))),
        (Value::Scalar(x), Value::Matrix(cols)) => Ok(Value::Matrix(
            cols.into_iter()
                .map(|c| c.into_iter().map(|y| f(x, y)).collect())
                .collect(),
        )),
        (Value::Matrix(cols), Value::Scalar(y)) => Ok(Value::Matrix(
            cols.into_iter()
                .map(|c| c.into_iter().map(|x| f(x, y)).collect())
                .collect(),
        )),
        (Value::Matrix(ca), Value::Matrix(cb)) => {
            let (ca, cb) = match (ca.len(), cb.len()) {
                (x, y) if x == y => (ca, cb),
                (1, y) => (vec![ca.into_iter().next().unwrap(); y], cb),
                (_, 1) => {
                    let first = cb.into_iter().next().unwrap();
                    let y = ca.len();
                    (ca, vec![first; y])
                }
                (x, y) => {
                    return Err(Error::eval(format!(
                        "column-count mismatch: {x} vs {y}"
                    )))
                }
            };
            Ok(Value::Matrix(
                ca.into_iter()
                    .zip(cb)
                    .map(|(a, b)| a.into_iter().zip(b).map(|(x, y)| f(x, y)).collect())
                    .collect(),
            ))
        }
    }
}

fn cmp_op(x: f64, y: f64, f: impl Fn(f64, f64) -> bool) -> f64 {
    if x.is_nan() || y.is_nan() {
        MISSING
    } else if f(x, y) {
        1.0
    } else {
        0.0
    }
}

fn row_reduce(v: Value, n: usize, na_rm: bool, mean: bool) -> Value {
    let cols = match v {
        Value::Scalar(x) => return Value::Scalar(x),
        Value::Matrix(cols) => cols,
    };
    let mut out = vec![0.0; n];
    for (i, slot) in out.iter_mut().enumerate() {
        let mut total = 0.0;
        let mut count = 0usize;
        let mut missing = false;
        for col in &cols {
            let x = col[i];
            if x.is_nan() {
                if !na_rm {
                    missing = true;
                    break;
                }
            } else {
                total += x;
                count += 1;
            }
        }
        *slot = if missing {
            MISSING
        } else if mean {
            if count == 0 {
                MISSING
            } else {
                total / count as f64
            }
        } else {
            total
        };
    }
    Value::column(out)
}

/// Evaluate an expression over all units.
pub fn evaluate(expr: &Expr, ctx: &EvalContext) -> Result<Value> {
    match expr {
        Expr::Num(v) => Ok(Value::Scalar(*v)),
        Expr::Var(name) => {
            if name == RESERVED_NF {
                let net = ctx
                    .net
                    .ok_or_else(|| Error::eval("nF referenced but no network attached"))?;
                return Ok(Value::column(net.n_friends_vec()));
            }
            if name == RESERVED_KMAX {
                return Ok(Value::Scalar(ctx.kmax()? as f64));
            }
            if let Some(col) = ctx.columns.get(name) {
                return Ok(Value::column(col.to_vec()));
            }
            if let Some(v) = ctx.scalars.get(name) {
                return Ok(Value::Scalar(*v));
            }
            Err(Error::eval(format!("undefined variable {name:?}")))
        }
        Expr::FriendRef { var, indices } => {
            let net = ctx.net.ok_or_else(|| {
                Error::eval(format!("friend reference {var}[[..]] but no network attached"))
            })?;
            let col = ctx
                .columns
                .get(var)
                .ok_or_else(|| {
                    if ctx.scalars.contains_key(var) {
                        Error::eval(format!(
                            "friend reference on scalar binding {var:?}"
                        ))
                    } else {
                        Error::eval(format!("undefined column {var:?}"))
                    }
                })?;
            let idx = resolve_indices(indices, ctx)?;
            let mut cols = friend_lookup(col, net, &idx)?;
            if ctx.replace_na_w0 {
                for c in &mut cols {
                    for x in c {
                        if x.is_nan() {
                            *x = 0.0;
                        }
                    }
                }
            }
            Ok(Value::Matrix(cols))
        }
        Expr::Unary { negate, expr } => {
            let v = evaluate(expr, ctx)?;
            Ok(if *negate { apply_unary(|x| -x, v) } else { v })
        }
        Expr::Binary { op, lhs, rhs } => {
            let a = evaluate(lhs, ctx)?;
            let b = evaluate(rhs, ctx)?;
            match op {
                BinOp::Add => zip_values(a, b, |x, y| x + y),
                BinOp::Sub => zip_values(a, b, |x, y| x - y),
                BinOp::Mul => zip_values(a, b, |x, y| x * y),
                BinOp::Div => zip_values(a, b, |x, y| x / y),
                BinOp::Lt => zip_values(a, b, |x, y| cmp_op(x, y, |x, y| x < y)),
                BinOp::Gt => zip_values(a, b, |x, y| cmp_op(x, y, |x, y| x > y)),
                BinOp::Le => zip_values(a, b, |x, y| cmp_op(x, y, |x, y| x <= y)),
                BinOp::Ge => zip_values(a, b, |x, y| cmp_op(x, y, |x, y| x >= y)),
                BinOp::Eq => zip_values(a, b, |x, y| cmp_op(x, y, |x, y| x == y)),
                BinOp::Ne => zip_values(a, b, |x, y| cmp_op(x, y, |x, y| x != y)),
            }
        }
        Expr::Call { func, args, na_rm } => {
            let mut vals: Vec<Value> = args
                .iter()
                .map(|a| evaluate(a, ctx))
                .collect::<Result<_>>()?;
            match func {
                Func::Sum => Ok(row_reduce(vals.pop().unwrap(), ctx.n, *na_rm, false)),
                Func::Mean => Ok(row_reduce(vals.pop().unwrap(), ctx.n, *na_rm, true)),
                Func::Plogis => Ok(apply_unary(plogis, vals.pop().unwrap())),
                Func::Log => Ok(apply_unary(f64::ln, vals.pop().unwrap())),
                Func::Exp => Ok(apply_unary(f64::exp, vals.pop().unwrap())),
                Func::Abs => Ok(apply_unary(f64::abs, vals.pop().unwrap())),
                Func::Min => {
                    let mut it = vals.into_iter();
                    let first = it.next().unwrap();
                    it.try_fold(first, |acc, v| {
                        zip_values(acc, v, |x, y| if x.is_nan() || y.is_nan() {
                            MISSING
                        } else {
                            x.min(y)
                        })
                    })
                }
                Func::Max => {
                    let mut it = vals.into_iter();
                    let first = it.next().unwrap();
                    it.try_fold(first, |acc, v| {
                        zip_values(acc, v, |x, y| if x.is_nan() || y.is_nan() {
                            MISSING
                        } else {
                            x.max(y)
                        })
                    })
                }
                Func::Ifelse => {
                    let b = vals.pop().unwrap();
                    let a = vals.pop().unwrap();
                    let c = vals.pop().unwrap();
                    zip3_values(c, a, b, ctx.n, |c, a, b| {
                        if c.is_nan() {
                            MISSING
                        } else if c != 0.0 {
                            a
                        } else {
                            b
                        }
                    })
                }
            }
        }
    }
}

/// Ternary elementwise combine with the same broadcasting rules as
/// [`zip_values`]. All-scalar input stays scalar.
fn zip3_values(
    a: Value,
    b: Value,
    c: Value,
    n: usize,
    f: impl Fn(f64, f64, f64) -> f64,
) -> Result<Value> {
    if let (Value::Scalar(x), Value::Scalar(y), Value::Scalar(z)) = (&a, &b, &c) {
        return Ok(Value::Scalar(f(*x, *y, *z)));
    }
    let k = [&a, &b, &c]
        .iter()
        .map(|v| v.ncols())
        .max()
        .unwrap_or(1);
    let expand = |v: Value| -> Result<Vec<Vec<f64>>> {
        let cols = v.into_columns(n);
        match cols.len() {
            len if len == k => Ok(cols),
            1 => Ok(vec![cols.into_iter().next().unwrap(); k]),
            len => Err(Error::eval(format!("column-count mismatch: {len} vs {k}"))),
        }
    };
    let (ca, cb, cc) = (expand(a)?, expand(b)?, expand(c)?);
    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        let col = (0..n)
            .map(|i| f(ca[j][i], cb[j][i], cc[j][i]))
            .collect();
        out.push(col);
    }
    Ok(Value::Matrix(out))
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    fn three_unit_ctx<'a>(
        net: &'a NetworkMatrix,
        var: &'a [f64],
    ) -> EvalContext<'a> {
        let mut ctx = EvalContext::new(3);
        ctx.columns.insert("Var".into(), var);
        ctx.net = Some(net);
        ctx
    }

    fn net3() -> NetworkMatrix {
        NetworkMatrix::from_edges(3, &[(1, 2), (2, 3)]).unwrap()
    }

    #[test]
    fn friend_lookup_enumeration() {
        let net = net3();
        let col = [5.0, 7.0, 9.0];
        let out = friend_lookup(&col, &net, &[0]).unwrap();
        assert_eq!(out, vec![vec![5.0, 7.0, 9.0]]);
        let out = friend_lookup(&col, &net, &[1]).unwrap();
        assert_eq!(out, vec![vec![7.0, 5.0, 7.0]]);
        let out = friend_lookup(&col, &net, &[2]).unwrap();
        assert!(out[0][0].is_nan());
        assert_eq!(out[0][1], 9.0);
        assert!(out[0][2].is_nan());
    }

    #[test]
    fn friend_lookup_rejects_index_beyond_kmax() {
        let net = net3();
        assert!(friend_lookup(&[1.0, 2.0, 3.0], &net, &[3]).is_err());
    }

    #[test]
    fn mean_with_na_rm() {
        let net = net3();
        let var = [5.0, 7.0, 9.0];
        let ctx = three_unit_ctx(&net, &var);
        // Kmax is 2 here, so restrict the range to the valid 1:2.
        let v = evaluate(&parse("mean(Var[[1:2]], na.rm=TRUE)").unwrap(), &ctx).unwrap();
        assert_eq!(v.into_column(3).unwrap(), vec![7.0, 7.0, 7.0]);
    }

    #[test]
    fn index_zero_is_identity() {
        let net = net3();
        let var = [5.0, 7.0, 9.0];
        let ctx = three_unit_ctx(&net, &var);
        let direct = evaluate(&parse("Var").unwrap(), &ctx).unwrap();
        let via_zero = evaluate(&parse("Var[[0]]").unwrap(), &ctx).unwrap();
        assert_eq!(direct, via_zero);
    }

    #[test]
    fn nf_is_friend_count() {
        let net = net3();
        let var = [0.0; 3];
        let ctx = three_unit_ctx(&net, &var);
        let v = evaluate(&parse("nF").unwrap(), &ctx).unwrap();
        assert_eq!(v.into_column(3).unwrap(), vec![1.0, 2.0, 1.0]);
    }

    #[test]
    fn replace_na_w0_matches_adjacency_product() {
        let net = net3();
        let var = [5.0, 7.0, 9.0];
        let mut ctx = three_unit_ctx(&net, &var);
        ctx.replace_na_w0 = true;
        let v = evaluate(&parse("sum(Var[[1:Kmax]])").unwrap(), &ctx).unwrap();
        // adjacency * var = (7, 5+9, 7)
        assert_eq!(v.into_column(3).unwrap(), vec![7.0, 14.0, 7.0]);
    }

    #[test]
    fn missing_propagates_through_arithmetic() {
        let net = net3();
        let var = [5.0, 7.0, 9.0];
        let ctx = three_unit_ctx(&net, &var);
        let v = evaluate(&parse("Var[[2]] + 1").unwrap(), &ctx).unwrap();
        let col = v.into_column(3).unwrap();
        assert!(col[0].is_nan() && col[2].is_nan());
        assert_eq!(col[1], 10.0);
    }

    #[test]
    fn comparisons_and_ifelse() {
        let mut ctx = EvalContext::new(3);
        let a = [1.0, 2.0, 3.0];
        ctx.columns.insert("A".into(), &a);
        let v = evaluate(&parse("ifelse(A > 1.5, 10, A)").unwrap(), &ctx).unwrap();
        assert_eq!(v.into_column(3).unwrap(), vec![1.0, 10.0, 10.0]);
    }

    #[test]
    fn scalar_bindings_resolve() {
        let mut ctx = EvalContext::new(2);
        let a = [0.0, 1.0];
        ctx.columns.insert("A".into(), &a);
        ctx.scalars.insert("shift".into(), 0.5);
        let v = evaluate(&parse("A + shift").unwrap(), &ctx).unwrap();
        assert_eq!(v.into_column(2).unwrap(), vec![0.5, 1.5]);
    }

    #[test]
    fn kmax_zero_range_rejected() {
        let net = NetworkMatrix::from_edges(3, &[]).unwrap();
        let var = [1.0, 2.0, 3.0];
        let mut ctx = EvalContext::new(3);
        ctx.columns.insert("Var".into(), &var[..]);
        ctx.net = Some(&net);
        assert!(evaluate(&parse("sum(Var[[1:Kmax]])").unwrap(), &ctx).is_err());
    }

    #[test]
    fn friend_ref_of_scalar_binding_is_an_error() {
        let net = net3();
        let mut ctx = EvalContext::new(3);
        ctx.scalars.insert("s".into(), 1.0);
        ctx.net = Some(&net);
        assert!(evaluate(&parse("s[[1]]").unwrap(), &ctx).is_err());
    }

    #[test]
    fn multivariate_friend_range() {
        let net = net3();
        let var = [5.0, 7.0, 9.0];
        let ctx = three_unit_ctx(&net, &var);
        match evaluate(&parse("Var[[1:2]]").unwrap(), &ctx).unwrap() {
            Value::Matrix(cols) => {
                assert_eq!(cols.len(), 2);
                assert_eq!(cols[0], vec![7.0, 5.0, 7.0]);
            }
            other => panic!("expected matrix, got {other:?}"),
        }
    }
}
