//! Mechanism expression trees.
//!
//! Sums accumulate left to right starting from `0.0` and products from
//! `1.0`, so a neuron written as `relu(add(mul(w1, x1), ..))` computes exactly
//! what a row-vector times matrix loop computes.

use std::collections::HashMap;
use std::sync::Arc;

use crate::value::{Value, VarId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Min,
    Max,
    Abs,
    Relu,
    Indicator,
    Eq,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Op {
    pub const ALL: [Op; 15] = [
        Op::Add,
        Op::Sub,
        Op::Mul,
        Op::Div,
        Op::Neg,
        Op::Min,
        Op::Max,
        Op::Abs,
        Op::Relu,
        Op::Indicator,
        Op::Eq,
        Op::Lt,
        Op::Le,
        Op::Gt,
        Op::Ge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Neg => "neg",
            Op::Min => "min",
            Op::Max => "max",
            Op::Abs => "abs",
            Op::Relu => "relu",
            Op::Indicator => "indicator",
            Op::Eq => "eq",
            Op::Lt => "lt",
            Op::Le => "le",
            Op::Gt => "gt",
            Op::Ge => "ge",
        }
    }

    pub fn from_name(s: &str) -> Option<Op> {
        Op::ALL.iter().copied().find(|op| op.name() == s)
    }

    pub fn is_unary(self) -> bool {
        matches!(self, Op::Neg | Op::Abs | Op::Relu | Op::Indicator)
    }

    pub fn is_binary(self) -> bool {
        matches!(self, Op::Sub | Op::Div | Op::Eq | Op::Lt | Op::Le | Op::Gt | Op::Ge)
    }
}

/// Lookup table: the first row whose key agrees with the setting wins.
#[derive(Debug)]
pub struct Table {
    pub rows: Vec<(Vec<(VarId, Value)>, Value)>,
    pub default: Value,
    index: Option<(Vec<VarId>, HashMap<Vec<Value>, usize>)>,
}

impl PartialEq for Table {
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows && self.default == other.default
    }
}

impl Table {
    pub fn new(rows: Vec<(Vec<(VarId, Value)>, Value)>, default: Value) -> Table {
        let index = Self::build_index(&rows);
        Table { rows, default, index }
    }

    fn build_index(rows: &[(Vec<(VarId, Value)>, Value)]) -> Option<(Vec<VarId>, HashMap<Vec<Value>, usize>)> {
        let first = rows.first()?;
        let keys: Vec<VarId> = first.0.iter().map(|(v, _)| *v).collect();
        let mut map = HashMap::with_capacity(rows.len());
        for (i, (key, _)) in rows.iter().enumerate() {
            if key.len() != keys.len() || key.iter().zip(&keys).any(|((v, _), k)| v != k) {
                return None;
            }
            map.entry(key.iter().map(|(_, x)| x.clone()).collect()).or_insert(i);
        }
        Some((keys, map))
    }

    pub fn lookup(&self, w: &[Value]) -> &Value {
        if let Some((keys, map)) = &self.index {
            let probe: Vec<Value> = keys.iter().map(|&k| w[k].clone()).collect();
            return match map.get(&probe) {
                Some(&i) => &self.rows[i].1,
                None => &self.default,
            };
        }
        for (key, val) in &self.rows {
            if key.iter().all(|(v, x)| &w[*v] == x) {
                return val;
            }
        }
        &self.default
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Lit(Value),
    Var(VarId),
    Op(Op, Vec<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
    Vec(Vec<Expr>),
    Proj(usize, Box<Expr>),
    /// Row vector times matrix (`rows` = input dimension).
    MatMul(Arc<Vec<Vec<f64>>>, Box<Expr>),
    Table(Arc<Table>),
}

pub fn var(v: VarId) -> Expr {
    Expr::Var(v)
}

pub fn lit<V: Into<Value>>(v: V) -> Expr {
    Expr::Lit(v.into())
}

pub fn op(o: Op, args: Vec<Expr>) -> Expr {
    Expr::Op(o, args)
}

pub fn if_then(c: Expr, t: Expr, e: Expr) -> Expr {
    Expr::If(Box::new(c), Box::new(t), Box::new(e))
}

pub fn proj(k: usize, e: Expr) -> Expr {
    Expr::Proj(k, Box::new(e))
}

type EvalResult = std::result::Result<Value, String>;

fn num(v: &Value, what: &str) -> std::result::Result<f64, String> {
    v.as_num().ok_or_else(|| format!("{what} expects a number, got {v}"))
}

fn elementwise(a: &Value, b: &Value, f: &dyn Fn(f64, f64) -> f64, name: &str) -> EvalResult {
    match (a, b) {
        (Value::Num(x), Value::Num(y)) => Ok(Value::Num(f(*x, *y))),
        (Value::Tuple(xs), Value::Tuple(ys)) if xs.len() == ys.len() => {
            let mut out = Vec::with_capacity(xs.len());
            for (x, y) in xs.iter().zip(ys.iter()) {
                out.push(Value::Num(f(num(x, name)?, num(y, name)?)));
            }
            Ok(Value::tuple(out))
        }
        (Value::Num(x), Value::Tuple(ys)) => {
            let mut out = Vec::with_capacity(ys.len());
            for y in ys.iter() {
                out.push(Value::Num(f(*x, num(y, name)?)));
            }
            Ok(Value::tuple(out))
        }
        (Value::Tuple(xs), Value::Num(y)) => {
            let mut out = Vec::with_capacity(xs.len());
            for x in xs.iter() {
                out.push(Value::Num(f(num(x, name)?, *y)));
            }
            Ok(Value::tuple(out))
        }
        _ => Err(format!("{name} cannot combine {a} and {b}")),
    }
}

fn map_unary(a: &Value, f: &dyn Fn(f64) -> f64, name: &str) -> EvalResult {
    match a {
        Value::Num(x) => Ok(Value::Num(f(*x))),
        Value::Tuple(xs) => {
            let mut out = Vec::with_capacity(xs.len());
            for x in xs.iter() {
                out.push(Value::Num(f(num(x, name)?)));
            }
            Ok(Value::tuple(out))
        }
        _ => Err(format!("{name} expects a number or vector, got {a}")),
    }
}

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

impl Expr {
    pub fn eval(&self, w: &[Value]) -> EvalResult {
        match self {
            Expr::Lit(v) => Ok(v.clone()),
            Expr::Var(v) => w.get(*v).cloned().ok_or_else(|| format!("variable index {v} out of bounds")),
            Expr::Op(o, args) => eval_op(*o, args, w),
            Expr::If(c, t, e) => match c.eval(w)? {
                Value::Bool(true) => t.eval(w),
                Value::Bool(false) => e.eval(w),
                other => Err(format!("if expects a boolean condition, got {other}")),
            },
            Expr::Vec(items) => {
                let mut out = Vec::with_capacity(items.len());
                for it in items {
                    out.push(it.eval(w)?);
                }
                Ok(Value::tuple(out))
            }
            Expr::Proj(k, e) => match e.eval(w)? {
                Value::Tuple(t) => t.get(*k).cloned().ok_or_else(|| format!("proj {k} out of bounds for length {}", t.len())),
                other => Err(format!("proj expects a tuple, got {other}")),
            },
            Expr::MatMul(m, e) => {
                let v = e.eval(w)?;
                let xs = v.as_vector().ok_or_else(|| format!("matmul expects a vector, got {v}"))?;
                if xs.len() != m.len() {
                    return Err(format!("matmul: vector length {} but matrix has {} rows", xs.len(), m.len()));
                }
                let cols = m.first().map_or(0, |r| r.len());
                let mut out = Vec::with_capacity(cols);
                for j in 0..cols {
                    let mut acc = 0.0;
                    for (i, x) in xs.iter().enumerate() {
                        acc += x * m[i][j];
                    }
                    out.push(Value::Num(acc));
                }
                Ok(Value::tuple(out))
            }
            Expr::Table(t) => Ok(t.lookup(w).clone()),
        }
    }

    /// Variables read by the expression, sorted and deduplicated.
    pub fn free_vars(&self) -> Vec<VarId> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    fn collect_vars(&self, out: &mut Vec<VarId>) {
        match self {
            Expr::Lit(_) => {}
            Expr::Var(v) => out.push(*v),
            Expr::Op(_, args) | Expr::Vec(args) => args.iter().for_each(|a| a.collect_vars(out)),
            Expr::If(c, t, e) => {
                c.collect_vars(out);
                t.collect_vars(out);
                e.collect_vars(out);
            }
            Expr::Proj(_, e) | Expr::MatMul(_, e) => e.collect_vars(out),
            Expr::Table(t) => {
                for (key, _) in &t.rows {
                    out.extend(key.iter().map(|(v, _)| *v));
                }
            }
        }
    }

    /// Renames variables through `f`.
    pub fn remap(&self, f: &dyn Fn(VarId) -> VarId) -> Expr {
        match self {
            Expr::Lit(v) => Expr::Lit(v.clone()),
            Expr::Var(v) => Expr::Var(f(*v)),
            Expr::Op(o, args) => Expr::Op(*o, args.iter().map(|a| a.remap(f)).collect()),
            Expr::If(c, t, e) => if_then(c.remap(f), t.remap(f), e.remap(f)),
            Expr::Vec(items) => Expr::Vec(items.iter().map(|a| a.remap(f)).collect()),
            Expr::Proj(k, e) => proj(*k, e.remap(f)),
            Expr::MatMul(m, e) => Expr::MatMul(m.clone(), Box::new(e.remap(f))),
            Expr::Table(t) => Expr::Table(Arc::new(Table::new(
                t.rows.iter().map(|(k, v)| (k.iter().map(|(x, y)| (f(*x), y.clone())).collect(), v.clone())).collect(),
                t.default.clone(),
            ))),
        }
    }
}

fn eval_op(o: Op, args: &[Expr], w: &[Value]) -> EvalResult {
    let arity_err = || format!("{} has the wrong number of arguments ({})", o.name(), args.len());
    if (o.is_unary() && args.len() != 1) || (o.is_binary() && args.len() != 2) || args.is_empty() {
        return Err(arity_err());
    }
    match o {
        Op::Add => {
            let mut acc = Value::Num(0.0);
            for a in args {
                acc = elementwise(&acc, &a.eval(w)?, &|x, y| x + y, "add")?;
            }
            Ok(acc)
        }
        Op::Mul => {
            let mut acc = Value::Num(1.0);
            for a in args {
                acc = elementwise(&acc, &a.eval(w)?, &|x, y| x * y, "mul")?;
            }
            Ok(acc)
        }
        Op::Sub => elementwise(&args[0].eval(w)?, &args[1].eval(w)?, &|x, y| x - y, "sub"),
        Op::Div => elementwise(&args[0].eval(w)?, &args[1].eval(w)?, &|x, y| x / y, "div"),
        Op::Min | Op::Max => {
            let mut best = num(&args[0].eval(w)?, o.name())?;
            for a in &args[1..] {
                let x = num(&a.eval(w)?, o.name())?;
                best = if o == Op::Min { if x < best { x } else { best } } else if x > best { x } else { best };
            }
            Ok(Value::Num(best))
        }
        Op::Neg => map_unary(&args[0].eval(w)?, &|x| -x, "neg"),
        Op::Abs => map_unary(&args[0].eval(w)?, &f64::abs, "abs"),
        Op::Relu => map_unary(&args[0].eval(w)?, &relu, "relu"),
        Op::Indicator => match args[0].eval(w)? {
            Value::Bool(b) => Ok(Value::Num(if b { 1.0 } else { 0.0 })),
            other => Err(format!("indicator expects a boolean, got {other}")),
        },
        Op::Eq => Ok(Value::Bool(args[0].eval(w)? == args[1].eval(w)?)),
        Op::Lt | Op::Le | Op::Gt | Op::Ge => {
            let a = num(&args[0].eval(w)?, o.name())?;
            let b = num(&args[1].eval(w)?, o.name())?;
            Ok(Value::Bool(match o {
                Op::Lt => a < b,
                Op::Le => a <= b,
                Op::Gt => a > b,
                _ => a >= b,
            }))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_accumulates_left_to_right_from_zero() {
        let xs = [0.1, 0.2, 0.3, -0.6];
        let e = op(Op::Add, xs.iter().map(|&x| lit(x)).collect());
        let mut acc = 0.0;
        for x in xs {
            acc += x;
        }
        assert_eq!(e.eval(&[]).unwrap().as_num().unwrap().to_bits(), acc.to_bits());
    }

    #[test]
    fn matmul_is_row_vector_times_matrix() {
        let m = Arc::new(vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        let e = Expr::MatMul(m, Box::new(Expr::Vec(vec![lit(1.0), lit(1.0)])));
        assert_eq!(e.eval(&[]).unwrap(), Value::vector(&[4.0, 6.0]));
    }

    #[test]
    fn table_first_match_wins() {
        let t = Table::new(
            vec![(vec![(0, Value::from(1.0))], Value::sym("a")), (vec![(0, Value::from(1.0))], Value::sym("b"))],
            Value::sym("d"),
        );
        assert_eq!(t.lookup(&[Value::from(1.0)]), &Value::sym("a"));
        assert_eq!(t.lookup(&[Value::from(2.0)]), &Value::sym("d"));
    }

    #[test]
    fn type_errors_are_reported_not_panicked() {
        let e = op(Op::Lt, vec![lit("x"), lit(1.0)]);
        assert!(e.eval(&[]).is_err());
        let e = proj(3, Expr::Vec(vec![lit(1.0)]));
        assert!(e.eval(&[]).is_err());
    }
}
