//! Worked examples as ready-made models, alignments and suites.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::{json, Value as Json};

use crate::abstraction::{Alignment, CellMap};
use crate::error::{Error, Result};
use crate::expr::{if_then, lit, op, proj, var, Expr, Op, Table};
use crate::interchange::InputPair;
use crate::model::{CausalModel, Mechanism};
use crate::ops::ValueMergeFamily;
use crate::nn::{hierarchical_equality_fixture, net_to_model, Activation, DenseNet, Layer, ReadoutConvention, Readout};
use crate::value::{Setting, Signature, Value, ValueRange, VarId, World};

/// Placeholder value of the glut example.
pub const STAR: &str = "⋆";
/// Empty slot of the sorting model.
pub const BOT: &str = "⊥";

/// Settings found by sweeping the equality network (see `nn::sweep_hierarchical_equality`).
pub const HE_EPSILON: f64 = 0.1;
pub const HE_CONVENTION: ReadoutConvention = ReadoutConvention::TrueIsSecondNonStrict;

pub const FIXTURE_NAMES: [&str; 9] = [
    "glut",
    "hierarchical_equality",
    "conjunction_rotation",
    "max_relu",
    "addition_mod10",
    "arithmetic_circuits",
    "bubble(3)",
    "cebab_synthetic",
    "toy_chain",
];

fn sig(vars: Vec<(String, ValueRange)>) -> Result<Arc<Signature>> {
    Ok(Arc::new(Signature::new(vars)?))
}

fn n(x: i64) -> Value {
    Value::from(x)
}

fn table_expr(rows: Vec<(Vec<(VarId, Value)>, Value)>, default: Value) -> Expr {
    Expr::Table(Arc::new(Table::new(rows, default)))
}

/// Three variables over {0,1,2,3,⋆} with two competing self-supporting
/// settings, (0,2,3) and (1,2,3). Everything else maps to ⋆.
pub fn glut() -> Result<CausalModel> {
    let mut vals: Vec<Value> = (0..4).map(n).collect();
    vals.push(Value::sym(STAR));
    let range = ValueRange::Enum(vals);
    let s = sig(["X", "Y", "Z"].iter().map(|v| (v.to_string(), range.clone())).collect())?;
    let key = |x: i64| vec![(0, n(x)), (1, n(2)), (2, n(3))];
    let mech = |a: i64, b: i64| {
        Mechanism::Expr(table_expr(vec![(key(0), n(a)), (key(1), n(b))], Value::sym(STAR)))
    };
    CausalModel::new(s, vec![mech(0, 1), mech(2, 3), mech(2, 3)])
}

/// Two-variable chain `Y = X + 1` with `X` defaulting to 0.
pub fn toy_chain() -> Result<CausalModel> {
    let s = sig(vec![("X".into(), ValueRange::ints(0, 2)), ("Y".into(), ValueRange::ints(1, 3))])?;
    CausalModel::new(s, vec![Mechanism::Const(n(0)), Mechanism::Expr(op(Op::Add, vec![var(0), lit(1.0)]))])
}

/// Boolean conjunction through a hidden layer rotated clockwise by
/// `theta_deg`: `(Y1, Y2) = (X1, X2) R`, and `Z` un-rotates before testing
/// `Y1 + Y2 = 2` (to within 1e-9).
pub fn conjunction_rotation(theta_deg: f64) -> Result<CausalModel> {
    let (s, c) = theta_deg.to_radians().sin_cos();
    let sig = Arc::new(Signature::new(vec![
        ("X1", ValueRange::ints(0, 1)),
        ("X2", ValueRange::ints(0, 1)),
        ("Y1", ValueRange::Real(1)),
        ("Y2", ValueRange::Real(1)),
        ("Z", ValueRange::ints(0, 1)),
    ])?);
    let lin = |a: f64, b: f64, x: usize, y: usize| {
        op(Op::Add, vec![op(Op::Mul, vec![var(x), lit(a)]), op(Op::Mul, vec![var(y), lit(b)])])
    };
    let sum = op(Op::Sub, vec![lin(s + c, c - s, 2, 3), lit(2.0)]);
    let z = op(Op::Indicator, vec![op(Op::Le, vec![op(Op::Abs, vec![sum]), lit(1e-9)])]);
    CausalModel::new(
        sig,
        vec![
            Mechanism::Const(Value::from(0i64)),
            Mechanism::Const(Value::from(0i64)),
            Mechanism::Expr(lin(c, s, 0, 1)),
            Mechanism::Expr(lin(-s, c, 0, 1)),
            Mechanism::Expr(z),
        ],
    )
}

/// Two-layer network computing `max(x1, x2)` for positive inputs.
pub fn max_net() -> Result<DenseNet> {
    DenseNet::new(
        vec![
            Layer::new(vec![vec![1.0, -1.0, 1.0], vec![-1.0, 1.0, 1.0]], Activation::Relu),
            Layer::new(vec![vec![0.5], vec![0.5], vec![0.5]], Activation::Identity),
        ],
        BTreeMap::new(),
        Readout::None,
    )
}

/// `max_net` as a model over `X1, X2, Y1..Y3, Z`, inputs fixed to 1.
pub fn max_relu() -> Result<CausalModel> {
    let names = vec![
        vec!["X1".to_string(), "X2".to_string()],
        vec!["Y1".to_string(), "Y2".to_string(), "Y3".to_string()],
        vec!["Z".to_string()],
    ];
    let m = net_to_model(&max_net()?, &names)?;
    m.with_mechanisms(vec![(0, Arc::new(Mechanism::Const(Value::Num(1.0)))), (1, Arc::new(Mechanism::Const(Value::Num(1.0))))])
}

/// Input values of the finite variant of `max_relu`.
pub const MAX_INPUTS: [f64; 5] = [1.0, 0.5, 1.5, 2.0, 3.0];

/// `max_relu` with finite ranges: inputs over `MAX_INPUTS`, each hidden unit
/// over the values it takes on those inputs, and `Z` over every value its
/// mechanism gives on the hidden ranges.
pub fn max_relu_enum() -> Result<CausalModel> {
    let m = max_relu()?;
    let mut hidden: Vec<Vec<f64>> = vec![Vec::new(); 3];
    for &a in &MAX_INPUTS {
        for &b in &MAX_INPUTS {
            let mut w = m.sig().default_world();
            w[0] = Value::Num(a);
            w[1] = Value::Num(b);
            for (k, h) in hidden.iter_mut().enumerate() {
                h.push(num_of(&m.mechanism(2 + k).eval(&w, "Y")?));
            }
        }
    }
    let mut zs = Vec::new();
    for h in hidden.iter_mut() {
        sort_dedup(h);
    }
    let mut w = m.sig().default_world();
    for &y1 in &hidden[0] {
        for &y2 in &hidden[1] {
            for &y3 in &hidden[2] {
                w[2] = Value::Num(y1);
                w[3] = Value::Num(y2);
                w[4] = Value::Num(y3);
                zs.push(num_of(&m.mechanism(5).eval(&w, "Z")?));
            }
        }
    }
    sort_dedup(&mut zs);
    let nums = |xs: &[f64]| ValueRange::Enum(xs.iter().map(|&x| Value::Num(x)).collect());
    let s = sig(vec![
        ("X1".into(), nums(&MAX_INPUTS)),
        ("X2".into(), nums(&MAX_INPUTS)),
        ("Y1".into(), nums(&hidden[0])),
        ("Y2".into(), nums(&hidden[1])),
        ("Y3".into(), nums(&hidden[2])),
        ("Z".into(), nums(&zs)),
    ])?;
    CausalModel::from_arcs(s, m.mechanisms().to_vec())
}

fn num_of(v: &Value) -> f64 {
    v.as_num().unwrap_or(f64::NAN)
}

fn sort_dedup(xs: &mut Vec<f64>) {
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| a.to_bits() == b.to_bits());
}

/// Digit addition `Y = X1 + X2` with `X1, X2` in 0..9.
pub fn addition() -> Result<CausalModel> {
    let s = sig(vec![
        ("X1".into(), ValueRange::ints(0, 9)),
        ("X2".into(), ValueRange::ints(0, 9)),
        ("Y".into(), ValueRange::ints(0, 18)),
    ])?;
    CausalModel::new(
        s,
        vec![Mechanism::Const(n(0)), Mechanism::Const(n(0)), Mechanism::Expr(op(Op::Add, vec![var(0), var(1)]))],
    )
}

/// Reduction mod 10 of a value below 20.
pub fn mod10_expr() -> Expr {
    if_then(op(Op::Ge, vec![var(0), lit(10.0)]), op(Op::Sub, vec![var(0), lit(10.0)]), var(0))
}

/// Every variable of `addition` reduced mod 10, against a copy of itself.
pub fn addition_mod10_alignment(low: &CausalModel, high: &CausalModel) -> Result<Alignment> {
    let k = low.len();
    Alignment::new(
        low.sig().clone(),
        high.sig().clone(),
        (0..k).map(|v| vec![v]).collect(),
        Vec::new(),
        vec![CellMap::Expr(mod10_expr()); k],
    )
}

/// Sum of four digits in 0..3 as `O = (X1 + X2) + (X3 + X4)`.
pub fn unary_circuit() -> Result<CausalModel> {
    let mut vars: Vec<(String, ValueRange)> = (1..=4).map(|i| (format!("X{i}"), ValueRange::ints(0, 3))).collect();
    vars.push(("S1".into(), ValueRange::ints(0, 6)));
    vars.push(("S2".into(), ValueRange::ints(0, 6)));
    vars.push(("O".into(), ValueRange::ints(0, 12)));
    let add = |a: VarId, b: VarId| Mechanism::Expr(op(Op::Add, vec![var(a), var(b)]));
    let mut mechs = vec![Mechanism::Const(n(0)); 4];
    mechs.extend([add(0, 1), add(2, 3), add(4, 5)]);
    CausalModel::new(sig(vars)?, mechs)
}

/// Bits of `x`, most significant first.
pub fn bits(x: i64, width: usize) -> Vec<i64> {
    (0..width).rev().map(|k| (x >> k) & 1).collect()
}

fn bit_values(x: i64, width: usize) -> Vec<Value> {
    bits(x, width).into_iter().map(n).collect()
}

/// The same sum on bits: `Xi_1 Xi_2` are the bits of digit `i`, `Sj_1..3`
/// the bits of each pair sum and `O_1..4` the bits of the total.
pub fn binary_circuit() -> Result<CausalModel> {
    let b = ValueRange::ints(0, 1);
    let mut vars = Vec::new();
    for i in 1..=4 {
        for k in 1..=2 {
            vars.push((format!("X{i}_{k}"), b.clone()));
        }
    }
    for j in 1..=2 {
        for k in 1..=3 {
            vars.push((format!("S{j}_{k}"), b.clone()));
        }
    }
    for k in 1..=4 {
        vars.push((format!("O_{k}"), b.clone()));
    }
    let mut mechs = vec![Mechanism::Const(n(0)); 8];
    for j in 0..2 {
        let (xa, xb) = (4 * j, 4 * j + 2);
        for k in 0..3 {
            let mut rows = Vec::with_capacity(16);
            for a in 0..4 {
                for c in 0..4 {
                    let ba = bits(a, 2);
                    let bc = bits(c, 2);
                    let key = vec![(xa, n(ba[0])), (xa + 1, n(ba[1])), (xb, n(bc[0])), (xb + 1, n(bc[1]))];
                    rows.push((key, n(bits(a + c, 3)[k])));
                }
            }
            mechs.push(Mechanism::Expr(table_expr(rows, n(0))));
        }
    }
    for k in 0..4 {
        let mut rows = Vec::with_capacity(64);
        for s1 in 0..8 {
            for s2 in 0..8 {
                let mut key: Vec<(VarId, Value)> = bits(s1, 3).into_iter().enumerate().map(|(t, x)| (8 + t, n(x))).collect();
                key.extend(bits(s2, 3).into_iter().enumerate().map(|(t, x)| (11 + t, n(x))));
                rows.push((key, n(bits(s1 + s2, 4)[k])));
            }
        }
        mechs.push(Mechanism::Expr(table_expr(rows, n(0))));
    }
    CausalModel::new(sig(vars)?, mechs)
}

/// Reads each group of bits as a number. Codes outside the unary ranges
/// (`S = 7`, `O >= 13`) are left unmapped.
pub fn circuit_alignment(binary: &CausalModel, unary: &CausalModel) -> Result<Alignment> {
    let code = |width: usize, hi: i64| CellMap::table((0..=hi).map(|x| (bit_values(x, width), n(x))).collect());
    let cells = vec![
        vec![0, 1],
        vec![2, 3],
        vec![4, 5],
        vec![6, 7],
        vec![8, 9, 10],
        vec![11, 12, 13],
        vec![14, 15, 16, 17],
    ];
    let mut maps = vec![code(2, 3); 4];
    maps.push(code(3, 6));
    maps.push(code(3, 6));
    maps.push(code(4, 12));
    Alignment::new(binary.sig().clone(), unary.sig().clone(), cells, Vec::new(), maps)
}

pub const CEBAB_CONCEPTS: [&str; 4] = ["C_service", "C_noise", "C_food", "C_ambiance"];
pub const CEBAB_LABELS: [&str; 3] = ["unknown", "+", "-"];

/// Symbolic stand-in for a review rating pipeline: four concept labels feed
/// a review tuple `X`, each concept is scored (+1, -1 or 0) and the rating
/// is `clamp(3 + sum, 1, 5)`.
pub fn cebab_synthetic() -> Result<CausalModel> {
    let labels = ValueRange::syms(&CEBAB_LABELS);
    let mut vars: Vec<(String, ValueRange)> = CEBAB_CONCEPTS.iter().map(|c| (c.to_string(), labels.clone())).collect();
    let mut reviews = Vec::with_capacity(81);
    for a in CEBAB_LABELS {
        for b in CEBAB_LABELS {
            for c in CEBAB_LABELS {
                for d in CEBAB_LABELS {
                    reviews.push(Value::tuple(vec![Value::sym(a), Value::sym(b), Value::sym(c), Value::sym(d)]));
                }
            }
        }
    }
    vars.push(("X".into(), ValueRange::Enum(reviews)));
    for c in CEBAB_CONCEPTS {
        vars.push((format!("H{}", &c[1..]), ValueRange::ints(-1, 1)));
    }
    vars.push(("Out".into(), ValueRange::ints(1, 5)));
    let mut mechs = vec![Mechanism::Const(Value::sym(CEBAB_LABELS[0])); 4];
    mechs.push(Mechanism::Expr(Expr::Vec((0..4).map(var).collect())));
    for k in 0..4 {
        let part = proj(k, var(4));
        let score = if_then(
            op(Op::Eq, vec![part.clone(), lit("+")]),
            lit(1.0),
            if_then(op(Op::Eq, vec![part, lit("-")]), lit(-1.0), lit(0.0)),
        );
        mechs.push(Mechanism::Expr(score));
    }
    let mut sum = vec![lit(3.0)];
    sum.extend((5..9).map(var));
    let out = op(Op::Max, vec![lit(1.0), op(Op::Min, vec![lit(5.0), op(Op::Add, sum)])]);
    mechs.push(Mechanism::Expr(out));
    CausalModel::new(sig(vars)?, mechs)
}

/// Infinite sequence given by a finite prefix followed by a repeated tail.
#[derive(Clone, Debug)]
pub struct EventuallyConstantSeq {
    pub prefix: Vec<Value>,
    pub tail: Value,
}

impl EventuallyConstantSeq {
    pub fn new(prefix: Vec<Value>, tail: Value) -> EventuallyConstantSeq {
        EventuallyConstantSeq { prefix, tail }
    }

    /// Reads a finite run as converged when its last two entries agree.
    pub fn from_run(run: &[Value]) -> Option<EventuallyConstantSeq> {
        match run {
            [.., a, b] if a == b => Some(EventuallyConstantSeq::new(run[..run.len() - 1].to_vec(), b.clone())),
            _ => None,
        }
    }

    /// Entry `t`, counting from 0.
    pub fn at(&self, t: usize) -> &Value {
        self.prefix.get(t).unwrap_or(&self.tail)
    }

    /// Same sequence with trailing prefix entries equal to the tail removed.
    pub fn normalized(&self) -> EventuallyConstantSeq {
        let mut prefix = self.prefix.clone();
        while prefix.last() == Some(&self.tail) {
            prefix.pop();
        }
        EventuallyConstantSeq { prefix, tail: self.tail.clone() }
    }

    pub fn limit(&self) -> &Value {
        &self.tail
    }
}

impl PartialEq for EventuallyConstantSeq {
    fn eq(&self, other: &Self) -> bool {
        let (a, b) = (self.normalized(), other.normalized());
        a.prefix == b.prefix && a.tail == b.tail
    }
}

fn bot() -> Value {
    Value::sym(BOT)
}

fn is_bot(e: Expr) -> Expr {
    op(Op::Eq, vec![e, lit(bot())])
}

fn slot_range(max_value: i64) -> ValueRange {
    let mut vals = vec![bot()];
    vals.extend((1..=max_value).map(n));
    ValueRange::Enum(vals)
}

/// Bubble sort unrolled into rows. Row `j` holds `Xj_1..Xj_L`; a value
/// `Yj_i` carries the running maximum to the right and `Zj_i` records
/// whether it moves past `Xj_{i+1}`. Row `R + 1` has only `X`. Empty slots
/// are ⊥; a list shorter than `L` is padded with ⊥.
#[derive(Clone, Debug)]
pub struct BubbleModel {
    pub len: usize,
    pub rows: usize,
    pub max_value: i64,
    pub model: CausalModel,
    x: Vec<Vec<VarId>>,
}

/// Result of sorting one list with the unrolled model.
#[derive(Clone, Debug, PartialEq)]
pub struct BubbleRun {
    pub sorted: Vec<i64>,
    /// Rows `X^1..X^{R+1}` of the solution.
    pub rows: Vec<Vec<Value>>,
    /// First row (1-based) equal to the row after it.
    pub stable_row: usize,
}

impl BubbleModel {
    pub fn new(len: usize, max_value: i64) -> Result<BubbleModel> {
        BubbleModel::with_rows(len, len + 1, max_value)
    }

    pub fn with_rows(len: usize, rows: usize, max_value: i64) -> Result<BubbleModel> {
        if len == 0 || rows == 0 || max_value < 1 {
            return Err(Error::TypeMismatch(format!("bubble model needs positive sizes, got L={len} R={rows} max={max_value}")));
        }
        let slot = slot_range(max_value);
        let flag = ValueRange::Enum(vec![bot(), Value::Bool(false), Value::Bool(true)]);
        let mut vars = Vec::new();
        for j in 1..=rows + 1 {
            for i in 1..=len {
                vars.push((format!("X{j}_{i}"), slot.clone()));
            }
            if j <= rows {
                for i in 1..len {
                    vars.push((format!("Z{j}_{i}"), flag.clone()));
                    vars.push((format!("Y{j}_{i}"), slot.clone()));
                }
            }
        }
        let s = sig(vars)?;
        let id = |name: String| s.require(&name);
        let mut x = Vec::with_capacity(rows + 1);
        for j in 1..=rows + 1 {
            x.push((1..=len).map(|i| id(format!("X{j}_{i}"))).collect::<Result<Vec<_>>>()?);
        }
        let mut mechs: Vec<Option<Mechanism>> = vec![None; s.len()];
        for &v in &x[0] {
            mechs[v] = Some(Mechanism::Const(bot()));
        }
        for j in 1..=rows {
            let xs = &x[j - 1];
            let carry = |i: usize| -> Result<Expr> {
                Ok(if i == 1 { var(xs[0]) } else { var(id(format!("Y{j}_{}", i - 1))?) })
            };
            for i in 1..len {
                let (z, y) = (id(format!("Z{j}_{i}"))?, id(format!("Y{j}_{i}"))?);
                let (b, next) = (carry(i)?, var(xs[i]));
                mechs[z] = Some(Mechanism::Expr(if_then(
                    is_bot(b.clone()),
                    lit(bot()),
                    if_then(is_bot(next.clone()), lit(bot()), op(Op::Gt, vec![b.clone(), next.clone()])),
                )));
                let zt = op(Op::Eq, vec![var(z), lit(true)]);
                let zf = op(Op::Eq, vec![var(z), lit(false)]);
                mechs[y] = Some(Mechanism::Expr(if_then(zt.clone(), b.clone(), if_then(zf, next.clone(), lit(bot())))));
                mechs[x[j][i - 1]] = Some(Mechanism::Expr(if_then(zt, next, b)));
            }
            mechs[x[j][len - 1]] = Some(Mechanism::Expr(carry(len)?));
        }
        let mechs = mechs.into_iter().map(|m| m.expect("every variable gets a mechanism")).collect();
        let model = CausalModel::new(s, mechs)?;
        Ok(BubbleModel { len, rows, max_value, model, x })
    }

    /// Variables of row `j` (1-based).
    pub fn row(&self, j: usize) -> &[VarId] {
        &self.x[j - 1]
    }

    pub fn input_vars(&self) -> &[VarId] {
        &self.x[0]
    }

    fn check_input(&self, input: &[i64]) -> Result<()> {
        if input.is_empty() || input.len() > self.len {
            return Err(Error::TypeMismatch(format!("input length {} outside 1..={}", input.len(), self.len)));
        }
        if let Some(bad) = input.iter().find(|&&v| v < 1 || v > self.max_value) {
            return Err(Error::TypeMismatch(format!("entry {bad} outside 1..={}", self.max_value)));
        }
        Ok(())
    }

    pub fn input_setting(&self, input: &[i64]) -> Setting {
        self.x[0].iter().zip(input).map(|(&v, &x)| (v, n(x))).collect()
    }

    pub fn solve(&self, input: &[i64]) -> Result<BubbleRun> {
        self.check_input(input)?;
        let w = self.model.solve_unique(&self.input_setting(input))?;
        let rows: Vec<Vec<Value>> = self.x.iter().map(|r| r.iter().map(|&v| w[v].clone()).collect()).collect();
        let j = (0..self.rows).find(|&j| rows[j] == rows[j + 1]).ok_or(Error::NoConvergence(self.rows))?;
        let sorted = rows[j].iter().filter_map(|v| v.as_num()).map(|x| x as i64).collect();
        Ok(BubbleRun { sorted, rows, stable_row: j + 1 })
    }

    /// Hard interventions setting a prefix of the input row, over every
    /// length `1..=max_len` and values `1..=max_value`.
    pub fn prefix_inputs(&self, max_len: usize, max_value: i64) -> Vec<Setting> {
        prefix_lists(max_len.min(self.len), max_value).iter().map(|l| self.input_setting(l)).collect()
    }
}

/// All lists of length `1..=max_len` over `1..=max_value`, shorter first.
pub fn prefix_lists(max_len: usize, max_value: i64) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let mut layer: Vec<Vec<i64>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for l in &layer {
            for v in 1..=max_value {
                let mut e = l.clone();
                e.push(v);
                next.push(e);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

pub fn bubble_solve(m: &BubbleModel, input: &[i64]) -> Result<BubbleRun> {
    m.solve(input)
}

fn max_of(xs: Vec<Expr>) -> Expr {
    if xs.len() == 1 {
        xs.into_iter().next().expect("one element")
    } else {
        op(Op::Max, xs)
    }
}

fn min_of(xs: Vec<Expr>) -> Expr {
    if xs.len() == 1 {
        xs.into_iter().next().expect("one element")
    } else {
        op(Op::Min, xs)
    }
}

/// One bubble pass as a closed form: slot `i` of the next row from the
/// slots of this one.
fn pass_expr(row: &[VarId], i: usize) -> Expr {
    let len = row.len();
    let running = max_of(row[..=i].iter().map(|&v| var(v)).collect());
    let mut e = if i + 1 == len {
        running
    } else {
        let next = var(row[i + 1]);
        if_then(is_bot(next.clone()), running.clone(), op(Op::Min, vec![next, running]))
    };
    for k in (0..=i).rev() {
        e = if_then(is_bot(var(row[k])), lit(bot()), e);
    }
    e
}

/// Rows of the sorting model with the `Y` and `Z` variables summed out:
/// each row is one bubble pass applied to the row above.
pub fn bubble_marginalized(len: usize, max_value: i64) -> Result<CausalModel> {
    let rows = len + 1;
    let slot = slot_range(max_value);
    let mut vars = Vec::new();
    for j in 1..=rows + 1 {
        for i in 1..=len {
            vars.push((format!("X{j}_{i}"), slot.clone()));
        }
    }
    let mut mechs = vec![Mechanism::Const(bot()); len];
    for j in 1..=rows {
        let row: Vec<VarId> = ((j - 1) * len..j * len).collect();
        for i in 0..len {
            mechs.push(Mechanism::Expr(pass_expr(&row, i)));
        }
    }
    CausalModel::new(sig(vars)?, mechs)
}

/// Alignment keeping the `X` rows of `full` and forgetting `Y`, `Z`.
pub fn bubble_marginal_alignment(full: &BubbleModel, marg: &CausalModel) -> Result<Alignment> {
    let keep: Vec<VarId> = full.x.iter().flatten().copied().collect();
    let bot_cell: Vec<VarId> = (0..full.model.len()).filter(|v| !keep.contains(v)).collect();
    let k = keep.len();
    Alignment::new(full.model.sig().clone(), marg.sig().clone(), keep.into_iter().map(|v| vec![v]).collect(), bot_cell, vec![CellMap::Identity; k])
}

/// Partition of the rows model keeping the input row and gathering column
/// `i` of every later row into `X*_i`.
pub fn bubble_merge_partition(len: usize) -> Vec<(String, Vec<VarId>)> {
    let rows = len + 1;
    let mut out: Vec<(String, Vec<VarId>)> = (0..len).map(|i| (format!("X1_{}", i + 1), vec![i])).collect();
    out.extend((0..len).map(|i| (format!("X*_{}", i + 1), (1..=rows).map(|j| j * len + i).collect())));
    out
}

/// Value merge sending each merged column to its last entry.
pub fn bubble_limit_family(len: usize, max_value: i64) -> ValueMergeFamily {
    let rows = len + 1;
    let last = CellMap::Unpack(Arc::new(CellMap::Expr(var(rows - 1))));
    ValueMergeFamily { maps: (0..len).map(|i| (len + i, last.clone(), slot_range(max_value))).collect(), candidates: Vec::new() }
}

/// Does the assignment of a sequence to each column satisfy the merged
/// model's equations for this input? Entry 0 of column `i` must be input
/// slot `i` (⊥ past the end) and each later entry must be one bubble pass
/// applied to the entries before it, with the tail a fixed point.
pub fn bubble_merged_is_solution(seqs: &[EventuallyConstantSeq], input: &[i64]) -> bool {
    let len = seqs.len();
    if input.len() > len {
        return false;
    }
    let row_at = |t: usize| -> Vec<Value> { seqs.iter().map(|s| s.at(t).clone()).collect() };
    let first: Vec<Value> = (0..len).map(|i| input.get(i).map_or_else(bot, |&x| n(x))).collect();
    if row_at(0) != first {
        return false;
    }
    let horizon = seqs.iter().map(|s| s.prefix.len()).max().unwrap_or(0) + 1;
    (0..horizon).all(|t| pass(&row_at(t)) == row_at(t + 1))
}

/// One bubble pass over a row with ⊥ padding.
pub fn pass(row: &[Value]) -> Vec<Value> {
    let len = row.len();
    let k = row.iter().position(|v| *v == bot()).unwrap_or(len);
    let mut out = vec![bot(); len];
    let mut running: Option<f64> = None;
    for i in 0..k {
        let x = row[i].as_num().unwrap_or(f64::NAN);
        let m = running.map_or(x, |r| r.max(x));
        running = Some(m);
        out[i] = if i + 1 < k { Value::Num(m.min(row[i + 1].as_num().unwrap_or(f64::NAN))) } else { Value::Num(m) };
    }
    out
}

/// Columns of a run as sequences, one per slot.
pub fn run_sequences(run: &BubbleRun) -> Vec<EventuallyConstantSeq> {
    let len = run.rows[0].len();
    (0..len)
        .map(|i| {
            let col: Vec<Value> = run.rows.iter().map(|r| r[i].clone()).collect();
            EventuallyConstantSeq::from_run(&col).unwrap_or_else(|| EventuallyConstantSeq::new(col.clone(), col[col.len() - 1].clone()))
        })
        .collect()
}

fn subsets(k: usize, size: usize) -> Vec<Vec<usize>> {
    if size == 0 {
        return vec![Vec::new()];
    }
    if k < size {
        return Vec::new();
    }
    let mut out = subsets(k - 1, size);
    for mut s in subsets(k - 1, size - 1) {
        s.push(k - 1);
        out.push(s);
    }
    out
}

/// `i`-th smallest (0-based) of the first `k` inputs: the least maximum
/// over all subsets of size `i + 1`.
fn order_stat(xs: &[VarId], i: usize, k: usize) -> Expr {
    min_of(subsets(k, i + 1).into_iter().map(|s| max_of(s.into_iter().map(|t| var(xs[t])).collect())).collect())
}

/// The limits of the merged columns: inputs `X1_1..X1_L` and `X*_i`, the
/// `i`-th smallest entry of the input's non-⊥ prefix (⊥ past its end).
pub fn bubble_value_merged(len: usize, max_value: i64) -> Result<CausalModel> {
    let slot = slot_range(max_value);
    let mut vars: Vec<(String, ValueRange)> = (1..=len).map(|i| (format!("X1_{i}"), slot.clone())).collect();
    vars.extend((1..=len).map(|i| (format!("X*_{i}"), slot.clone())));
    let xs: Vec<VarId> = (0..len).collect();
    let mut mechs = vec![Mechanism::Const(bot()); len];
    for i in 0..len {
        // e(k): value given that exactly the first k slots hold values, k >= i + 1
        let mut e = order_stat(&xs, i, len);
        for k in (i + 1..len).rev() {
            e = if_then(is_bot(var(xs[k])), order_stat(&xs, i, k), e);
        }
        for k in (0..=i).rev() {
            e = if_then(is_bot(var(xs[k])), lit(bot()), e);
        }
        mechs.push(Mechanism::Expr(e));
    }
    CausalModel::new(sig(vars)?, mechs)
}

/// From the rows model to its limits: the input row stays, the last row
/// becomes `X*`, the rows in between are forgotten.
pub fn bubble_limit_alignment(marg: &CausalModel, limits: &CausalModel, len: usize) -> Result<Alignment> {
    let rows = len + 1;
    let mut cells: Vec<Vec<VarId>> = (0..len).map(|i| vec![i]).collect();
    cells.extend((0..len).map(|i| vec![rows * len + i]));
    let bot_cell: Vec<VarId> = (len..rows * len).collect();
    Alignment::new(marg.sig().clone(), limits.sig().clone(), cells, bot_cell, vec![CellMap::Identity; 2 * len])
}

/// Named hard-intervention suite on one model of a bundle.
#[derive(Clone, Debug)]
pub struct SuiteEntry {
    pub name: String,
    pub model: String,
    pub items: Vec<Setting>,
}

#[derive(Clone, Debug)]
pub struct AlignmentEntry {
    pub name: String,
    pub low: String,
    pub high: String,
    pub alignment: Arc<Alignment>,
    /// Source inputs for maps read off interchange runs.
    pub inputs: Vec<crate::interchange::InputPair>,
}

/// Everything one worked example needs.
#[derive(Clone, Debug)]
pub struct Fixture {
    pub name: String,
    pub models: Vec<(String, CausalModel)>,
    /// Models that are better stored as dense networks, by model name.
    pub nets: Vec<(String, DenseNet)>,
    pub alignments: Vec<AlignmentEntry>,
    pub suites: Vec<SuiteEntry>,
    /// `{"source": ..., "expected": {...}}`
    pub metadata: Json,
}

impl Fixture {
    pub fn model(&self, name: &str) -> Result<&CausalModel> {
        self.models.iter().find(|(k, _)| k == name).map(|(_, m)| m).ok_or_else(|| Error::UnknownFixture(format!("{}/{name}", self.name)))
    }

    pub fn alignment(&self, name: &str) -> Result<&AlignmentEntry> {
        self.alignments.iter().find(|a| a.name == name).ok_or_else(|| Error::UnknownFixture(format!("{}/{name}", self.name)))
    }

    pub fn suite(&self, name: &str) -> Result<&SuiteEntry> {
        self.suites.iter().find(|s| s.name == name).ok_or_else(|| Error::UnknownFixture(format!("{}/{name}", self.name)))
    }

    pub fn expected(&self) -> &Json {
        &self.metadata["expected"]
    }
}

fn entry(name: &str, low: &str, high: &str, a: Alignment) -> AlignmentEntry {
    AlignmentEntry { name: name.into(), low: low.into(), high: high.into(), alignment: Arc::new(a), inputs: Vec::new() }
}

fn worlds_json(sig: &Signature, ws: &[World]) -> Json {
    Json::Array(ws.iter().map(|w| sig.world_to_json(w)).collect())
}

/// Parses `bubble(L)`; plain `bubble` means `L = 3`.
fn bubble_len(name: &str) -> Option<usize> {
    if name == "bubble" {
        return Some(3);
    }
    name.strip_prefix("bubble(")?.strip_suffix(')')?.trim().parse().ok().filter(|&l| (1..=6).contains(&l))
}

pub fn fixture(name: &str) -> Result<Fixture> {
    if let Some(len) = bubble_len(name) {
        return bubble_fixture(len);
    }
    match name {
        "glut" => glut_fixture(),
        "hierarchical_equality" => he_fixture(),
        "conjunction_rotation" => conjunction_fixture(),
        "max_relu" => max_fixture(),
        "addition_mod10" => addition_fixture(),
        "arithmetic_circuits" => circuits_fixture(),
        "cebab_synthetic" => cebab_fixture(),
        "toy_chain" => toy_fixture(),
        _ => Err(Error::UnknownFixture(name.to_string())),
    }
}

fn glut_fixture() -> Result<Fixture> {
    let m = glut()?;
    let s = m.sig().clone();
    let y2 = Setting::named(&s, &[("Y", n(2))])?;
    let z3 = Setting::named(&s, &[("Z", n(3))])?;
    let (marg, a) = crate::ops::marginalize(&m, &[0])?;
    let marg = crate::ops::tabulate(&marg)?;
    let star = Value::sym(STAR);
    let w = |x: Value, y: Value, z: Value| vec![x, y, z];
    let expected = json!({
        "solve": worlds_json(&s, &[w(star.clone(), star.clone(), star.clone())]),
        "solve_Y=2": worlds_json(&s, &[w(n(1), n(2), n(3)), w(star.clone(), n(2), star.clone())]),
        "solve_Z=3": worlds_json(&s, &[w(n(0), n(2), n(3)), w(star.clone(), star.clone(), n(3))]),
        "marginalization_verifies": false,
    });
    Ok(Fixture {
        name: "glut".into(),
        models: vec![("glut".into(), m), ("glut_yz".into(), marg)],
        nets: Vec::new(),
        alignments: vec![AlignmentEntry {
            name: "marginalize_x".into(),
            low: "glut".into(),
            high: "glut_yz".into(),
            alignment: a,
            inputs: Vec::new(),
        }],
        suites: vec![SuiteEntry { name: "marginalize_x".into(), model: "glut".into(), items: vec![Setting::new(), y2, z3] }],
        metadata: json!({"source": "marginalization counterexample with several solutions", "expected": expected}),
    })
}

fn toy_fixture() -> Result<Fixture> {
    let m = toy_chain()?;
    let expected = json!({"solve": worlds_json(m.sig(), &[vec![n(0), n(1)]])});
    let all: Vec<Setting> = (0..3).map(|x| Setting::from_pairs([(0, n(x))])).collect();
    Ok(Fixture {
        name: "toy_chain".into(),
        models: vec![("toy_chain".into(), m)],
        nets: Vec::new(),
        alignments: Vec::new(),
        suites: vec![SuiteEntry { name: "inputs".into(), model: "toy_chain".into(), items: all }],
        metadata: json!({"source": "two-variable chain", "expected": expected}),
    })
}

fn he_fixture() -> Result<Fixture> {
    let f = hierarchical_equality_fixture(HE_EPSILON, HE_CONVENTION)?;
    let inputs: Vec<Setting> = f.inputs.iter().map(|p| p.low.clone()).collect();
    let expected = json!({
        "epsilon": HE_EPSILON,
        "readout": HE_CONVENTION.name(),
        "iia": 1.0,
        "suite_size": 81 + 2 * 81 * 81 + 81 * 81 * 81,
    });
    Ok(Fixture {
        name: "hierarchical_equality".into(),
        models: vec![("network".into(), f.low), ("equality".into(), f.high)],
        nets: vec![("network".into(), f.net)],
        alignments: vec![AlignmentEntry {
            name: "interchange".into(),
            low: "network".into(),
            high: "equality".into(),
            alignment: f.alignment,
            inputs: f.inputs,
        }],
        suites: vec![SuiteEntry { name: "inputs".into(), model: "network".into(), items: inputs }],
        metadata: json!({"source": "hierarchical equality network with hand-set weights", "expected": expected}),
    })
}

fn conjunction_fixture() -> Result<Fixture> {
    let m = conjunction_rotation(20.0)?;
    let plain = conjunction_rotation(0.0)?;
    let inputs: Vec<Setting> =
        [(0, 0), (0, 1), (1, 0), (1, 1)].iter().map(|&(a, b)| Setting::from_pairs([(0, n(a)), (1, n(b))])).collect();
    let cells = (0..m.len()).map(|v| vec![v]).collect();
    let identity = Alignment::new(m.sig().clone(), plain.sig().clone(), cells, Vec::new(), vec![CellMap::Identity; m.len()])?;
    Ok(Fixture {
        name: "conjunction_rotation".into(),
        models: vec![("rotated".into(), m), ("plain".into(), plain)],
        nets: Vec::new(),
        alignments: vec![AlignmentEntry {
            name: "identity".into(),
            low: "rotated".into(),
            high: "plain".into(),
            alignment: Arc::new(identity),
            inputs: inputs.iter().map(|s| InputPair { low: s.clone(), high: s.clone() }).collect(),
        }],
        suites: vec![SuiteEntry { name: "inputs".into(), model: "rotated".into(), items: inputs }],
        metadata: json!({
            "source": "boolean conjunction with a rotated hidden layer",
            "expected": {"angle_deg": 20.0, "das_loss": 0.0}
        }),
    })
}

fn max_fixture() -> Result<Fixture> {
    let m = max_relu()?;
    let e = max_relu_enum()?;
    let inputs: Vec<Setting> = MAX_INPUTS
        .iter()
        .flat_map(|&a| MAX_INPUTS.iter().map(move |&b| Setting::from_pairs([(0, Value::Num(a)), (1, Value::Num(b))])))
        .collect();
    let net = max_net()?;
    Ok(Fixture {
        name: "max_relu".into(),
        models: vec![("max_relu".into(), m), ("max_relu_enum".into(), e)],
        nets: Vec::new(),
        alignments: Vec::new(),
        suites: vec![SuiteEntry { name: "inputs".into(), model: "max_relu_enum".into(), items: inputs }],
        metadata: json!({
            "source": "ReLU network computing the maximum of two inputs",
            "expected": {"max_3_1": net.forward(&[3.0, 1.0])?.last().map(|o| o[0]), "z_default": 1.0}
        }),
    })
}

fn addition_fixture() -> Result<Fixture> {
    let low = addition()?;
    let high = addition()?;
    let a = addition_mod10_alignment(&low, &high)?;
    let items: Vec<Setting> = (0..10).flat_map(|x| (0..10).map(move |y| Setting::from_pairs([(0, n(x)), (1, n(y))]))).collect();
    Ok(Fixture {
        name: "addition_mod10".into(),
        models: vec![("sum".into(), low), ("digit_sum".into(), high)],
        nets: Vec::new(),
        alignments: vec![entry("mod10", "sum", "digit_sum", a)],
        suites: vec![SuiteEntry { name: "digit_pairs".into(), model: "sum".into(), items }],
        metadata: json!({
            "source": "sum of two numbers against the sum of their last digits",
            "expected": {"similarity": "AbsDiff", "output": "Y", "mean": 4.5, "max": 10.0}
        }),
    })
}

fn circuits_fixture() -> Result<Fixture> {
    let bin = binary_circuit()?;
    let un = unary_circuit()?;
    let a = circuit_alignment(&bin, &un)?;
    let mut cf = Setting::new();
    for (k, b) in [1, 1, 1, 1].iter().enumerate() {
        cf.insert(k, n(*b));
    }
    cf.insert(10, n(1));
    Ok(Fixture {
        name: "arithmetic_circuits".into(),
        models: vec![("binary".into(), bin), ("unary".into(), un)],
        nets: Vec::new(),
        alignments: vec![entry("bits_to_numbers", "binary", "unary", a)],
        suites: vec![SuiteEntry { name: "counterfactual".into(), model: "binary".into(), items: vec![cf] }],
        metadata: json!({
            "source": "sum of four numbers computed on bits and on numbers",
            "expected": {"counterfactual_O": [0, 1, 1, 1], "exhaustive_suite_size": 625 * 64 * 14}
        }),
    })
}

fn cebab_fixture() -> Result<Fixture> {
    let m = cebab_synthetic()?;
    let food = m.var("C_food")?;
    let items: Vec<Setting> = CEBAB_LABELS.iter().map(|l| Setting::from_pairs([(food, Value::sym(l))])).collect();
    Ok(Fixture {
        name: "cebab_synthetic".into(),
        models: vec![("reviews".into(), m)],
        nets: Vec::new(),
        alignments: Vec::new(),
        suites: vec![SuiteEntry { name: "food".into(), model: "reviews".into(), items }],
        metadata: json!({
            "source": "symbolic concept-to-rating pipeline",
            "expected": {"food_to_out": {"unknown": 3, "+": 4, "-": 2}}
        }),
    })
}

fn bubble_fixture(len: usize) -> Result<Fixture> {
    let max_value = len as i64;
    let full = BubbleModel::new(len, max_value)?;
    let marg = bubble_marginalized(len, max_value)?;
    let limits = bubble_value_merged(len, max_value)?;
    let a1 = bubble_marginal_alignment(&full, &marg)?;
    let a2 = bubble_limit_alignment(&marg, &limits, len)?;
    let lists = prefix_lists(len.min(3), max_value.min(3));
    let rows_items = lists.iter().map(|l| l.iter().enumerate().map(|(i, &x)| (i, n(x))).collect()).collect();
    let full_items = lists.iter().map(|l| full.input_setting(l)).collect();
    let sample: Vec<i64> = (1..=max_value).rev().collect();
    let sorted = full.solve(&sample)?.sorted;
    Ok(Fixture {
        name: format!("bubble({len})"),
        suites: vec![
            SuiteEntry { name: "inputs".into(), model: "bubble".into(), items: full_items },
            SuiteEntry { name: "inputs_rows".into(), model: "rows".into(), items: rows_items },
        ],
        models: vec![("bubble".into(), full.model), ("rows".into(), marg), ("limits".into(), limits)],
        nets: Vec::new(),
        alignments: vec![entry("drop_carries", "bubble", "rows", a1), entry("keep_limits", "rows", "limits", a2)],
        metadata: json!({
            "source": "bubble sort unrolled into rows and its abstractions",
            "expected": {"input": sample, "sorted": sorted}
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intervene::{solve_under, Intervention};

    fn solve_set(m: &CausalModel, s: &[(&str, Value)]) -> Vec<World> {
        let mut ws = m.solve_with(&Setting::named(m.sig(), s).unwrap()).unwrap();
        m.sig().sort_worlds(&mut ws);
        ws
    }

    #[test]
    fn glut_solution_sets() {
        let m = glut().unwrap();
        let star = Value::sym(STAR);
        assert_eq!(solve_set(&m, &[]), vec![vec![star.clone(), star.clone(), star.clone()]]);
        let mut want = vec![vec![n(1), n(2), n(3)], vec![star.clone(), n(2), star.clone()]];
        m.sig().sort_worlds(&mut want);
        assert_eq!(solve_set(&m, &[("Y", n(2))]), want);
        let mut want = vec![vec![n(0), n(2), n(3)], vec![star.clone(), star.clone(), n(3)]];
        m.sig().sort_worlds(&mut want);
        assert_eq!(solve_set(&m, &[("Z", n(3))]), want);
    }

    #[test]
    fn toy_chain_solution() {
        assert_eq!(toy_chain().unwrap().solve().unwrap(), vec![vec![n(0), n(1)]]);
    }

    #[test]
    fn unknown_fixture_name() {
        assert!(matches!(fixture("nope"), Err(Error::UnknownFixture(_))));
        assert!(matches!(fixture("bubble(x)"), Err(Error::UnknownFixture(_))));
    }

    #[test]
    fn max_relu_is_max() {
        let m = max_relu().unwrap();
        assert_eq!(m.solve_unique(&Setting::new()).unwrap()[5], Value::Num(1.0));
        let w = m.solve_unique(&Setting::from_pairs([(0, Value::Num(3.0)), (1, Value::Num(1.0))])).unwrap();
        assert_eq!(w[5], Value::Num(3.0));
        let e = max_relu_enum().unwrap();
        for &a in &MAX_INPUTS {
            for &b in &MAX_INPUTS {
                let w = e.solve_unique(&Setting::from_pairs([(0, Value::Num(a)), (1, Value::Num(b))])).unwrap();
                assert_eq!(w[5], Value::Num(a.max(b)));
            }
        }
    }

    #[test]
    fn unary_counterfactual() {
        let m = unary_circuit().unwrap();
        let w = m.solve_unique(&Setting::named(m.sig(), &[("S1", n(3)), ("X3", n(2))]).unwrap()).unwrap();
        assert_eq!(w, vec![n(0), n(0), n(2), n(0), n(3), n(2), n(5)]);
    }

    #[test]
    fn binary_counterfactual() {
        let f = fixture("arithmetic_circuits").unwrap();
        let m = f.model("binary").unwrap();
        let w = m.solve_unique(&f.suite("counterfactual").unwrap().items[0]).unwrap();
        let o: Vec<Value> = w[14..18].to_vec();
        assert_eq!(o, bit_values(7, 4));
        assert_eq!(&w[8..11], &bit_values(7, 3)[..]);
    }

    #[test]
    fn binary_matches_unary_on_inputs() {
        let bin = binary_circuit().unwrap();
        let un = unary_circuit().unwrap();
        let a = circuit_alignment(&bin, &un).unwrap();
        for code in 0..256i64 {
            let digits: Vec<i64> = (0..4).map(|k| (code >> (2 * (3 - k))) & 3).collect();
            let mut s = Setting::new();
            let mut u = Setting::new();
            for (k, &d) in digits.iter().enumerate() {
                let b = bits(d, 2);
                s.insert(2 * k, n(b[0]));
                s.insert(2 * k + 1, n(b[1]));
                u.insert(k, n(d));
            }
            let wb = bin.solve_unique(&s).unwrap();
            let wu = un.solve_unique(&u).unwrap();
            assert_eq!(a.tau(&wb).unwrap(), wu);
        }
    }

    #[test]
    fn cebab_scores() {
        let m = cebab_synthetic().unwrap();
        let all_plus: Vec<(&str, Value)> = CEBAB_CONCEPTS.iter().map(|c| (*c, Value::sym("+"))).collect();
        assert_eq!(*m.value(&solve_set(&m, &all_plus)[0], "Out").unwrap(), n(5));
        assert_eq!(*m.value(&solve_set(&m, &[("C_food", Value::sym("-"))])[0], "Out").unwrap(), n(2));
        assert_eq!(*m.value(&solve_set(&m, &[])[0], "Out").unwrap(), n(3));
    }

    #[test]
    fn bubble_small_cases() {
        let b = BubbleModel::new(3, 3).unwrap();
        assert_eq!(b.solve(&[3, 1, 2]).unwrap().sorted, vec![1, 2, 3]);
        assert_eq!(b.solve(&[1]).unwrap().sorted, vec![1]);
        assert!(b.solve(&[]).is_err());
        assert!(b.solve(&[4]).is_err());
        let run = b.solve(&[3, 2, 1]).unwrap();
        assert_eq!(run.rows[1], vec![n(2), n(1), n(3)]);
    }

    #[test]
    fn bubble_sorts_every_short_list() {
        let b = BubbleModel::new(4, 4).unwrap();
        let lists = prefix_lists(4, 4);
        assert_eq!(lists.len(), 4 + 16 + 64 + 256);
        for l in lists {
            let mut want = l.clone();
            want.sort_unstable();
            assert_eq!(b.solve(&l).unwrap().sorted, want, "{l:?}");
        }
    }

    #[test]
    fn marginalized_rows_match_full_rows() {
        let b = BubbleModel::new(4, 4).unwrap();
        let marg = bubble_marginalized(4, 4).unwrap();
        let two = marg.solve_unique(&Setting::from_pairs([(0, n(2)), (1, n(1))])).unwrap();
        assert_eq!(&two[4..6], &[n(1), n(2)]);
        for l in prefix_lists(4, 4) {
            let run = b.solve(&l).unwrap();
            let s: Setting = l.iter().enumerate().map(|(i, &x)| (i, n(x))).collect();
            let w = marg.solve_unique(&s).unwrap();
            let rows: Vec<Vec<Value>> = w.chunks(4).map(|c| c.to_vec()).collect();
            assert_eq!(rows, run.rows, "{l:?}");
        }
    }

    #[test]
    fn merged_sequences() {
        let b = BubbleModel::new(3, 3).unwrap();
        let run = b.solve(&[2, 1, 3]).unwrap();
        let seqs = run_sequences(&run);
        assert!(bubble_merged_is_solution(&seqs, &[2, 1, 3]));
        let tails: Vec<Value> = seqs.iter().map(|s| s.limit().clone()).collect();
        assert_eq!(tails, vec![n(1), n(2), n(3)]);
        let mut bad = seqs.clone();
        bad[1].prefix[1] = n(3);
        assert!(!bubble_merged_is_solution(&bad, &[2, 1, 3]));
        assert!(!bubble_merged_is_solution(&seqs, &[2, 1, 2]));
    }

    #[test]
    fn eventually_constant_equality_is_extensional() {
        let a = EventuallyConstantSeq::new(vec![n(2), n(1)], n(1));
        let b = EventuallyConstantSeq::new(vec![n(2)], n(1));
        assert_eq!(a, b);
        assert_ne!(a, EventuallyConstantSeq::new(vec![n(1)], n(1)));
        assert_eq!(EventuallyConstantSeq::from_run(&[n(2), n(1), n(1)]), Some(b));
        assert_eq!(EventuallyConstantSeq::from_run(&[n(2), n(1)]), None);
    }

    #[test]
    fn value_merged_sorts() {
        let m = bubble_value_merged(2, 5).unwrap();
        let w = m.solve_unique(&Setting::from_pairs([(0, n(5)), (1, n(4))])).unwrap();
        assert_eq!(&w[2..], &[n(4), n(5)]);
        let m = bubble_value_merged(3, 3).unwrap();
        for l in prefix_lists(3, 3) {
            let mut want: Vec<Value> = {
                let mut s = l.clone();
                s.sort_unstable();
                s.into_iter().map(n).collect()
            };
            want.resize(3, bot());
            let s: Setting = l.iter().enumerate().map(|(i, &x)| (i, n(x))).collect();
            let w = m.solve_unique(&s).unwrap();
            assert_eq!(&w[3..], &want[..], "{l:?}");
            if l.windows(2).all(|p| p[0] <= p[1]) {
                let head: Vec<Value> = w[..l.len()].to_vec();
                assert_eq!(&w[3..3 + l.len()], &head[..]);
            }
        }
    }

    #[test]
    fn pass_matches_closed_form() {
        assert_eq!(pass(&[n(3), n(2), n(1)]), vec![n(2), n(1), n(3)]);
        assert_eq!(pass(&[n(1), bot(), n(2)]), vec![n(1), bot(), bot()]);
    }

    #[test]
    fn every_fixture_builds() {
        for name in FIXTURE_NAMES {
            let f = fixture(name).unwrap();
            assert!(f.metadata["source"].is_string(), "{name}");
            assert!(!f.models.is_empty());
            for s in &f.suites {
                let m = f.model(&s.model).unwrap();
                for it in s.items.iter().take(3) {
                    assert!(!solve_under(m, &Intervention::Hard(it.clone())).unwrap().is_empty());
                }
            }
        }
    }
}
