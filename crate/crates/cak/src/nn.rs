//! Dense feed-forward networks as causal models, featurizing bijections and
//! a derivative-free rotation search.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde_json::{json, Value as Json};

use crate::abstraction::{Alignment, Bijection, CellMap, TauOmega, WorldMap};
use crate::error::{Error, Result};
use crate::expr::{lit, op, relu, var, Expr, Op};
use crate::interchange::{build_interchange_alignment, distributed_interchange, iia, IiaReport, InputPair, InterchangeSuite};
use crate::intervene::{solve_under, Intervention};
use crate::model::{CausalModel, Mechanism};
use crate::value::{worlds_approx_eq, Setting, Sig, Signature, Value, ValueRange, VarId, World};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(s: &str) -> Option<Activation> {
        match s {
            "relu" => Some(Activation::Relu),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => relu(x),
            Activation::Identity => x,
        }
    }
}

/// `w[i][j]` is the weight from input `i` to output `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub w: Vec<Vec<f64>>,
    pub act: Activation,
}

impl Layer {
    pub fn new(w: Vec<Vec<f64>>, act: Activation) -> Layer {
        Layer { w, act }
    }

    pub fn inputs(&self) -> usize {
        self.w.len()
    }

    pub fn outputs(&self) -> usize {
        self.w.first().map_or(0, |r| r.len())
    }

    /// Row vector times the weight matrix, accumulated left to right.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.outputs())
            .map(|j| {
                let mut acc = 0.0;
                for (i, xi) in x.iter().enumerate() {
                    acc += xi * self.w[i][j];
                }
                self.act.apply(acc)
            })
            .collect()
    }
}

/// How output coordinates are read as a label.
#[derive(Clone, Debug, PartialEq)]
pub enum Readout {
    None,
    /// Label of the largest coordinate; ties go to the later one when `tie_last`.
    Argmax { labels: Vec<Value>, tie_last: bool },
    /// Coordinate `coord` at or above `at` reads as `above`.
    Threshold { coord: usize, at: f64, below: Value, above: Value },
}

impl Readout {
    pub fn read(&self, out: &[f64]) -> Option<Value> {
        self.cell_map()?.apply(&out.iter().map(|&x| Value::Num(x)).collect::<Vec<_>>())
    }

    /// The readout as a map on the output neurons.
    pub fn cell_map(&self) -> Option<CellMap> {
        match self {
            Readout::None => None,
            Readout::Argmax { labels, tie_last } => Some(CellMap::Argmax { labels: labels.clone(), tie_last: *tie_last }),
            Readout::Threshold { coord, at, below, above } => {
                let (coord, at, below, above) = (*coord, *at, below.clone(), above.clone());
                Some(CellMap::builtin(format!("threshold[{coord}]>={at}"), move |vals: &[Value]| {
                    let x = vals.get(coord)?.as_num()?;
                    Some(if x >= at { above.clone() } else { below.clone() })
                }))
            }
        }
    }

    pub fn to_json(&self) -> Json {
        match self {
            Readout::None => Json::Null,
            Readout::Argmax { labels, tie_last } => {
                json!({"argmax": {"labels": labels.iter().map(Value::to_json).collect::<Vec<_>>(), "tie_last": tie_last}})
            }
            Readout::Threshold { coord, at, below, above } => {
                json!({"threshold": {"coord": coord, "at": at, "below": below.to_json(), "above": above.to_json()}})
            }
        }
    }

    pub fn from_json(j: &Json, path: &str) -> Result<Readout> {
        let bad = |msg: &str| Error::TypeError { path: path.to_string(), msg: msg.to_string() };
        if j.is_null() {
            return Ok(Readout::None);
        }
        if let Some(a) = j.get("argmax") {
            let labels = a
                .get("labels")
                .and_then(Json::as_array)
                .ok_or_else(|| bad("argmax needs a `labels` list"))?
                .iter()
                .map(|l| Value::from_json(l).ok_or_else(|| bad("bad label")))
                .collect::<Result<Vec<_>>>()?;
            let tie_last = a.get("tie_last").and_then(Json::as_bool).unwrap_or(false);
            return Ok(Readout::Argmax { labels, tie_last });
        }
        if let Some(t) = j.get("threshold") {
            let coord = t.get("coord").and_then(Json::as_u64).ok_or_else(|| bad("threshold needs `coord`"))? as usize;
            let at = t.get("at").and_then(Json::as_f64).ok_or_else(|| bad("threshold needs `at`"))?;
            let below = t.get("below").and_then(Value::from_json).ok_or_else(|| bad("threshold needs `below`"))?;
            let above = t.get("above").and_then(Value::from_json).ok_or_else(|| bad("threshold needs `above`"))?;
            return Ok(Readout::Threshold { coord, at, below, above });
        }
        Err(bad("readout must be null, `argmax` or `threshold`"))
    }
}

/// A dense network with an embedding table for symbolic inputs.
///
/// The input layer holds `input_width / d` slots of dimension `d`, where `d`
/// is the common embedding dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseNet {
    pub layers: Vec<Layer>,
    pub embeddings: BTreeMap<String, Vec<f64>>,
    pub readout: Readout,
}

impl DenseNet {
    pub fn new(layers: Vec<Layer>, embeddings: BTreeMap<String, Vec<f64>>, readout: Readout) -> Result<DenseNet> {
        let dim = |msg: String| Error::DimensionMismatch(msg);
        if layers.is_empty() {
            return Err(dim("a network needs at least one layer".into()));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.inputs() == 0 || l.outputs() == 0 {
                return Err(dim(format!("layer {} is empty", k + 1)));
            }
            if let Some(r) = l.w.iter().position(|r| r.len() != l.outputs()) {
                return Err(dim(format!("layer {} row {} has {} entries, expected {}", k + 1, r + 1, l.w[r].len(), l.outputs())));
            }
            if k > 0 && layers[k - 1].outputs() != l.inputs() {
                return Err(dim(format!(
                    "layer {} emits {} values but layer {} takes {}",
                    k,
                    layers[k - 1].outputs(),
                    k + 1,
                    l.inputs()
                )));
            }
        }
        let width = layers[0].inputs();
        let mut dims = embeddings.values().map(Vec::len);
        if let Some(d) = dims.next() {
            if d == 0 || dims.any(|e| e != d) || width % d != 0 {
                return Err(dim(format!("embeddings must share one dimension dividing the input width {width}")));
            }
        }
        let out = layers[layers.len() - 1].outputs();
        match &readout {
            Readout::Argmax { labels, .. } if labels.len() != out => {
                return Err(dim(format!("{} argmax labels for {out} outputs", labels.len())));
            }
            Readout::Threshold { coord, .. } if *coord >= out => {
                return Err(dim(format!("threshold coordinate {coord} for {out} outputs")));
            }
            _ => {}
        }
        Ok(DenseNet { layers, embeddings, readout })
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn embedding_dim(&self) -> Option<usize> {
        self.embeddings.values().next().map(Vec::len)
    }

    /// Number of symbol slots in the input layer.
    pub fn slots(&self) -> usize {
        self.embedding_dim().map_or(self.input_width(), |d| self.input_width() / d)
    }

    /// The symbol whose embedding fills every slot by default: the first in
    /// sorted order.
    pub fn default_symbol(&self) -> Option<&str> {
        self.embeddings.keys().next().map(String::as_str)
    }

    pub fn embed(&self, symbols: &[&str]) -> Result<Vec<f64>> {
        if symbols.len() != self.slots() {
            return Err(Error::DimensionMismatch(format!("{} symbols for {} slots", symbols.len(), self.slots())));
        }
        let mut x = Vec::with_capacity(self.input_width());
        for s in symbols {
            let e = self.embeddings.get(*s).ok_or_else(|| Error::UnknownVariable(format!("symbol {s}")))?;
            x.extend_from_slice(e);
        }
        Ok(x)
    }

    /// Activations of every layer, input layer first.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        if x.len() != self.input_width() {
            return Err(Error::DimensionMismatch(format!("input of length {} for width {}", x.len(), self.input_width())));
        }
        let mut acts = vec![x.to_vec()];
        for l in &self.layers {
            let next = l.apply(&acts[acts.len() - 1]);
            acts.push(next);
        }
        Ok(acts)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Option<Value>> {
        let acts = self.forward(x)?;
        Ok(self.readout.read(&acts[acts.len() - 1]))
    }

    /// `N1..` for inputs, `H{k}_1..` for hidden layer `k`, `O1..` for outputs.
    pub fn standard_names(&self) -> Vec<Vec<String>> {
        let mut names = vec![(1..=self.input_width()).map(|i| format!("N{i}")).collect::<Vec<_>>()];
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            names.push(
                (1..=l.outputs()).map(|j| if k == last { format!("O{j}") } else { format!("H{}_{j}", k + 1) }).collect(),
            );
        }
        names
    }

    pub fn to_json(&self) -> Json {
        let emb: serde_json::Map<String, Json> =
            self.embeddings.iter().map(|(k, v)| (k.clone(), Json::Array(v.iter().map(|&x| json!(x)).collect()))).collect();
        let layers: Vec<Json> = self.layers.iter().map(|l| json!({"w": l.w, "act": l.act.name()})).collect();
        json!({"dense": {"embeddings": emb, "layers": layers, "readout": self.readout.to_json()}})
    }

    pub fn from_json(j: &Json) -> Result<DenseNet> {
        let bad = |path: &str, msg: &str| Error::TypeError { path: path.to_string(), msg: msg.to_string() };
        let d = j.get("dense").ok_or_else(|| bad("$", "missing `dense`"))?;
        let mut embeddings = BTreeMap::new();
        if let Some(e) = d.get("embeddings") {
            let e = e.as_object().ok_or_else(|| bad("$.dense.embeddings", "expected an object"))?;
            for (k, v) in e {
                let path = format!("$.dense.embeddings.{k}");
                embeddings.insert(k.clone(), num_list(v).ok_or_else(|| bad(&path, "expected a list of numbers"))?);
            }
        }
        let ls = d.get("layers").and_then(Json::as_array).ok_or_else(|| bad("$.dense.layers", "expected a list"))?;
        let mut layers = Vec::with_capacity(ls.len());
        for (k, l) in ls.iter().enumerate() {
            let path = format!("$.dense.layers[{k}]");
            let w = l
                .get("w")
                .and_then(Json::as_array)
                .and_then(|rows| rows.iter().map(num_list).collect::<Option<Vec<_>>>())
                .ok_or_else(|| bad(&path, "`w` must be a matrix of numbers"))?;
            let act = l
                .get("act")
                .and_then(Json::as_str)
                .and_then(Activation::from_name)
                .ok_or_else(|| bad(&path, "`act` must be `relu` or `identity`"))?;
            layers.push(Layer { w, act });
        }
        let readout = Readout::from_json(d.get("readout").unwrap_or(&Json::Null), "$.dense.readout")?;
        DenseNet::new(layers, embeddings, readout)
    }
}

fn num_list(j: &Json) -> Option<Vec<f64>> {
    j.as_array()?.iter().map(Json::as_f64).collect()
}

/// One real variable per neuron. Each neuron's mechanism reads the previous
/// layer and sums left to right, so the model agrees exactly with
/// `DenseNet::forward`. Inputs default to the embedding of the default symbol
/// in every slot, or to zero without embeddings.
pub fn net_to_model(n: &DenseNet, names: &[Vec<String>]) -> Result<CausalModel> {
    if names.len() != n.layers.len() + 1 {
        return Err(Error::DimensionMismatch(format!("{} name groups for {} layers", names.len(), n.layers.len())));
    }
    let widths: Vec<usize> = std::iter::once(n.input_width()).chain(n.layers.iter().map(Layer::outputs)).collect();
    for (k, (g, &w)) in names.iter().zip(&widths).enumerate() {
        if g.len() != w {
            return Err(Error::DimensionMismatch(format!("layer {k} has {w} neurons but {} names", g.len())));
        }
    }
    let sig = Arc::new(Signature::new(names.iter().flatten().map(|s| (s.clone(), ValueRange::Real(1))).collect())?);
    let defaults: Vec<f64> = match n.default_symbol() {
        Some(s) => {
            let e = &n.embeddings[s];
            (0..n.input_width()).map(|i| e[i % e.len()]).collect()
        }
        None => vec![0.0; n.input_width()],
    };
    let mut mechs: Vec<Mechanism> = defaults.into_iter().map(|x| Mechanism::Const(Value::Num(x))).collect();
    let mut offset = 0;
    for l in &n.layers {
        for j in 0..l.outputs() {
            let terms: Vec<Expr> = (0..l.inputs()).map(|i| op(Op::Mul, vec![var(offset + i), lit(l.w[i][j])])).collect();
            let sum = op(Op::Add, terms);
            mechs.push(Mechanism::Expr(match l.act {
                Activation::Relu => op(Op::Relu, vec![sum]),
                Activation::Identity => sum,
            }));
        }
        offset += l.inputs();
    }
    CausalModel::new(sig, mechs)
}

/// The input setting of a model built by `net_to_model` for input vector `x`.
pub fn input_setting(m: &CausalModel, x: &[f64]) -> Setting {
    x.iter().enumerate().map(|(i, &v)| (i, Value::Num(v))).take(m.len()).collect()
}

// ---------------------------------------------------------------------------
// Hierarchical equality

pub const HE_SHAPES: [&str; 3] = ["⬠", "□", "△"];

pub fn he_embeddings() -> BTreeMap<String, Vec<f64>> {
    BTreeMap::from([
        ("⬠".to_string(), vec![0.012, -0.301]),
        ("□".to_string(), vec![-0.812, 0.456]),
        ("△".to_string(), vec![0.682, 0.333]),
    ])
}

/// Which output logit means True, and whether a tie counts for it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ReadoutConvention {
    TrueIsFirstStrict,
    TrueIsFirstNonStrict,
    TrueIsSecondStrict,
    TrueIsSecondNonStrict,
}

impl ReadoutConvention {
    pub const ALL: [ReadoutConvention; 4] = [
        ReadoutConvention::TrueIsFirstStrict,
        ReadoutConvention::TrueIsFirstNonStrict,
        ReadoutConvention::TrueIsSecondStrict,
        ReadoutConvention::TrueIsSecondNonStrict,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ReadoutConvention::TrueIsFirstStrict => "TrueIsFirstStrict",
            ReadoutConvention::TrueIsFirstNonStrict => "TrueIsFirstNonStrict",
            ReadoutConvention::TrueIsSecondStrict => "TrueIsSecondStrict",
            ReadoutConvention::TrueIsSecondNonStrict => "TrueIsSecondNonStrict",
        }
    }

    pub fn from_name(s: &str) -> Option<ReadoutConvention> {
        ReadoutConvention::ALL.into_iter().find(|c| c.name() == s)
    }

    pub fn readout(self) -> Readout {
        let (t, f) = (Value::Bool(true), Value::Bool(false));
        let (labels, tie_last) = match self {
            ReadoutConvention::TrueIsFirstStrict => (vec![t, f], true),
            ReadoutConvention::TrueIsFirstNonStrict => (vec![t, f], false),
            ReadoutConvention::TrueIsSecondStrict => (vec![f, t], false),
            ReadoutConvention::TrueIsSecondNonStrict => (vec![f, t], true),
        };
        Readout::Argmax { labels, tie_last }
    }
}

/// Sign of the `1 - ε` entries in the last weight matrix: as printed in the
/// matrix, or as implied by the closed-form output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum W3Sign {
    Printed,
    Displayed,
}

impl W3Sign {
    pub fn name(self) -> &'static str {
        match self {
            W3Sign::Printed => "printed",
            W3Sign::Displayed => "displayed",
        }
    }
}

/// The handcrafted hierarchical-equality network.
pub fn he_net(epsilon: f64, convention: ReadoutConvention, sign: W3Sign) -> Result<DenseNet> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::RangeViolation { var: "epsilon".into(), value: epsilon.to_string() });
    }
    let mut w1 = vec![vec![0.0; 8]; 8];
    for base in [0, 4] {
        for k in 0..2 {
            let (a, b) = (base + k, base + k + 2);
            w1[a][a] = 1.0;
            w1[a][b] = -1.0;
            w1[b][a] = -1.0;
            w1[b][b] = 1.0;
        }
    }
    let mut w2 = vec![vec![0.0; 8]; 8];
    for (i, row) in w2.iter_mut().enumerate() {
        let first = i < 4;
        row[0] = if first { 1.0 } else { -1.0 };
        row[1] = -row[0];
        row[2] = if first { 0.0 } else { 1.0 };
        row[3] = if first { 1.0 } else { 0.0 };
    }
    let e = match sign {
        W3Sign::Printed => 1.0 - epsilon,
        W3Sign::Displayed => -(1.0 - epsilon),
    };
    let mut w3 = vec![vec![0.0; 2]; 8];
    w3[0][0] = 1.0;
    w3[1][0] = 1.0;
    w3[2][0] = e;
    w3[3][0] = e;
    DenseNet::new(
        vec![Layer::new(w1, Activation::Relu), Layer::new(w2, Activation::Relu), Layer::new(w3, Activation::Identity)],
        he_embeddings(),
        convention.readout(),
    )
}

/// The symbolic model: `Y1 = (X1 == X2)`, `Y2 = (X3 == X4)`, `Z = (Y1 == Y2)`.
pub fn he_high_model(default_shape: &str) -> Result<CausalModel> {
    let shapes = ValueRange::syms(&HE_SHAPES);
    let sig = Arc::new(Signature::new(vec![
        ("X1", shapes.clone()),
        ("X2", shapes.clone()),
        ("X3", shapes.clone()),
        ("X4", shapes),
        ("Y1", ValueRange::bools()),
        ("Y2", ValueRange::bools()),
        ("Z", ValueRange::bools()),
    ])?);
    let x = Mechanism::Const(Value::sym(default_shape));
    CausalModel::new(
        sig,
        vec![
            x.clone(),
            x.clone(),
            x.clone(),
            x,
            Mechanism::Expr(op(Op::Eq, vec![var(0), var(1)])),
            Mechanism::Expr(op(Op::Eq, vec![var(2), var(3)])),
            Mechanism::Expr(op(Op::Eq, vec![var(4), var(5)])),
        ],
    )
}

pub struct HeFixture {
    pub net: DenseNet,
    pub low: CausalModel,
    pub high: CausalModel,
    pub alignment: Arc<Alignment>,
    /// All 81 shape inputs, first shape varying slowest.
    pub inputs: Vec<InputPair>,
    pub epsilon: f64,
    pub convention: ReadoutConvention,
    pub sign: W3Sign,
}

impl HeFixture {
    /// Low variable cells standing for `Y1` and `Y2`.
    pub fn interchange_cells(&self) -> Vec<Vec<VarId>> {
        let a = &self.alignment;
        vec![a.cells[4].clone(), a.cells[5].clone()]
    }

    pub fn suite(&self) -> Result<InterchangeSuite> {
        InterchangeSuite::new(&self.low, self.inputs.iter().map(|p| p.low.clone()).collect(), self.interchange_cells())
    }

    /// Interchange intervention accuracy on `Z` over the full suite.
    pub fn iia(&self) -> Result<IiaReport> {
        let z = self.high.var("Z")?;
        iia(&self.low, &self.high, &TauOmega::from_alignment(self.alignment.clone()), &self.suite()?, &[z], 0.0)
    }

    /// Readout agrees with the symbolic model on every plain input.
    pub fn behaves(&self) -> Result<bool> {
        let z = self.high.var("Z")?;
        for p in &self.inputs {
            let x: Vec<f64> = (0..self.net.input_width()).map(|i| p.low.get(i).and_then(Value::as_num).unwrap_or(0.0)).collect();
            let got = self.net.predict(&x)?;
            let want = self.high.solve_unique(&p.high)?[z].clone();
            if got.as_ref() != Some(&want) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn input_pair(&self, shapes: [&str; 4]) -> Result<InputPair> {
        he_input_pair(&self.net, &self.low, &self.high, shapes)
    }

    /// Scalar fed to the readout: the first output logit before comparison.
    pub fn pre_readout(&self, shapes: [&str; 4]) -> Result<f64> {
        let acts = self.net.forward(&self.net.embed(&shapes)?)?;
        Ok(acts[acts.len() - 1][0])
    }
}

fn he_input_pair(net: &DenseNet, low: &CausalModel, high: &CausalModel, shapes: [&str; 4]) -> Result<InputPair> {
    let x = net.embed(&shapes)?;
    let high_set: Setting = shapes.iter().enumerate().map(|(k, s)| (k, Value::sym(s))).collect();
    let _ = high.sig().check(0, &Value::sym(shapes[0]))?;
    Ok(InputPair { low: input_setting(low, &x), high: high_set })
}

pub fn hierarchical_equality_fixture(epsilon: f64, convention: ReadoutConvention) -> Result<HeFixture> {
    hierarchical_equality_fixture_with(epsilon, convention, W3Sign::Displayed)
}

pub fn hierarchical_equality_fixture_with(epsilon: f64, convention: ReadoutConvention, sign: W3Sign) -> Result<HeFixture> {
    let net = he_net(epsilon, convention, sign)?;
    let low = net_to_model(&net, &net.standard_names())?;
    let default = net.default_symbol().unwrap_or(HE_SHAPES[0]).to_string();
    let high = he_high_model(&default)?;
    let mut inputs = Vec::with_capacity(81);
    for a in HE_SHAPES {
        for b in HE_SHAPES {
            for c in HE_SHAPES {
                for d in HE_SHAPES {
                    inputs.push(he_input_pair(&net, &low, &high, [a, b, c, d])?);
                }
            }
        }
    }
    let ids = |names: &[String]| low.sig().vars(&names.iter().map(String::as_str).collect::<Vec<_>>());
    let names = net.standard_names();
    let (n, h1, h2, o) = (ids(&names[0])?, ids(&names[1])?, ids(&names[2])?, ids(&names[3])?);
    let shape_map = CellMap::table(
        net.embeddings.iter().map(|(s, e)| (e.iter().map(|&x| Value::Num(x)).collect(), Value::sym(s))).collect(),
    );
    let cells = vec![
        n[0..2].to_vec(),
        n[2..4].to_vec(),
        n[4..6].to_vec(),
        n[6..8].to_vec(),
        h1[0..4].to_vec(),
        h1[4..8].to_vec(),
        o.clone(),
    ];
    let readout = net.readout.cell_map().ok_or_else(|| Error::TypeMismatch("network has no readout".into()))?;
    let fixed = vec![
        Some(shape_map.clone()),
        Some(shape_map.clone()),
        Some(shape_map.clone()),
        Some(shape_map),
        None,
        None,
        Some(readout),
    ];
    let alignment = Arc::new(build_interchange_alignment(&low, &high, cells, h2, fixed, &inputs)?);
    Ok(HeFixture { net, low, high, alignment, inputs, epsilon, convention, sign })
}

#[derive(Clone, Debug)]
pub struct HeSweep {
    pub epsilon: f64,
    pub convention: ReadoutConvention,
    pub sign: W3Sign,
    pub iia: IiaReport,
    /// Configurations tried before and including the passing one.
    pub tried: usize,
}

impl HeSweep {
    pub fn to_json(&self) -> Json {
        json!({
            "epsilon": self.epsilon,
            "readout_convention": self.convention.name(),
            "w3_sign": self.sign.name(),
            "iia": self.iia.iia,
            "suite_size": self.iia.suite_size,
            "tried": self.tried,
        })
    }
}

/// First (sign, ε, convention) in sweep order reaching IIA 1 on the full
/// suite. Configurations whose readout already disagrees on a plain input
/// are skipped without the full run, since plain inputs are suite items.
pub fn sweep_hierarchical_equality() -> Result<Option<HeSweep>> {
    let mut tried = 0;
    for sign in [W3Sign::Printed, W3Sign::Displayed] {
        for k in 1..=9 {
            let epsilon = k as f64 / 10.0;
            for convention in ReadoutConvention::ALL {
                tried += 1;
                let f = hierarchical_equality_fixture_with(epsilon, convention, sign)?;
                if !f.behaves()? {
                    continue;
                }
                let report = f.iia()?;
                if report.iia == 1.0 {
                    return Ok(Some(HeSweep { epsilon, convention, sign, iia: report, tried }));
                }
            }
        }
    }
    Ok(None)
}

// ---------------------------------------------------------------------------
// Featurizers

/// How block activations `h` become features `f`.
#[derive(Clone, Debug, PartialEq)]
pub enum FeatureMap {
    /// `f = Qᵀ h`, inverted by `h = Q f`.
    Orthogonal(Vec<Vec<f64>>),
    /// `f = enc h`, inverted by `h = dec f`. Only as exact as the pair.
    Pair { enc: Vec<Vec<f64>>, dec: Vec<Vec<f64>> },
}

/// A change of basis on a block of real variables.
#[derive(Clone, Debug, PartialEq)]
pub struct Featurizer {
    pub block: Vec<VarId>,
    /// Feature variable names; `None` reuses the block names when the widths agree.
    pub names: Option<Vec<String>>,
    pub map: FeatureMap,
}

/// A featurizer turned into a bijection, with the feature variables.
#[derive(Clone, Debug)]
pub struct FeatureSpace {
    pub bij: Arc<Bijection>,
    pub features: Vec<VarId>,
}

fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|row| {
            let mut acc = 0.0;
            for (r, xi) in row.iter().zip(x) {
                acc += r * xi;
            }
            acc
        })
        .collect()
}

fn transpose(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let cols = a.first().map_or(0, Vec::len);
    (0..cols).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| {
                    let mut acc = 0.0;
                    for (k, r) in row.iter().enumerate() {
                        acc += r * b[k][j];
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

pub fn identity_matrix(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

/// `max |QᵀQ - I|`.
pub fn orthogonality_deviation(q: &[Vec<f64>]) -> f64 {
    let qtq = mat_mul(&transpose(q), q);
    let mut dev: f64 = 0.0;
    for (i, row) in qtq.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            dev = dev.max((x - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    dev
}

pub const ORTHOGONALITY_TOL: f64 = 1e-9;

impl Featurizer {
    pub fn width(&self) -> usize {
        match &self.map {
            FeatureMap::Orthogonal(q) => q.first().map_or(0, Vec::len),
            FeatureMap::Pair { enc, .. } => enc.len(),
        }
    }

    pub fn named(mut self, names: Vec<String>) -> Featurizer {
        self.names = Some(names);
        self
    }

    pub fn q(&self) -> Option<&[Vec<f64>]> {
        match &self.map {
            FeatureMap::Orthogonal(q) => Some(q),
            FeatureMap::Pair { .. } => None,
        }
    }

    pub fn features(&self, h: &[f64]) -> Vec<f64> {
        match &self.map {
            FeatureMap::Orthogonal(q) => mat_vec(&transpose(q), h),
            FeatureMap::Pair { enc, .. } => mat_vec(enc, h),
        }
    }

    pub fn reconstruct(&self, f: &[f64]) -> Vec<f64> {
        match &self.map {
            FeatureMap::Orthogonal(q) => mat_vec(q, f),
            FeatureMap::Pair { dec, .. } => mat_vec(dec, f),
        }
    }

    fn feature_names(&self, sig: &Signature) -> Vec<String> {
        match &self.names {
            Some(n) => n.clone(),
            None if self.width() == self.block.len() => self.block.iter().map(|&v| sig.name(v).to_string()).collect(),
            None => (1..=self.width()).map(|k| format!("F{k}")).collect(),
        }
    }

    /// The bijection replacing the block by its features. Features take the
    /// place of the first block variable; everything else keeps its name.
    pub fn bijection(&self, sig: &Sig) -> Result<FeatureSpace> {
        if self.block.is_empty() {
            return Err(Error::DimensionMismatch("empty block".into()));
        }
        let mut in_block = vec![false; sig.len()];
        for &v in &self.block {
            if v >= sig.len() {
                return Err(Error::UnknownVariable(format!("#{v}")));
            }
            if in_block[v] {
                return Err(Error::PartitionError(format!("`{}` repeated in the block", sig.name(v))));
            }
            if sig.range(v) != &ValueRange::Real(1) {
                return Err(Error::TypeMismatch(format!("`{}` is not a scalar real", sig.name(v))));
            }
            in_block[v] = true;
        }
        let names = self.feature_names(sig);
        if names.len() != self.width() {
            return Err(Error::DimensionMismatch(format!("{} names for {} features", names.len(), self.width())));
        }
        let first = *self.block.iter().min().unwrap_or(&0);
        let mut vars: Vec<(String, ValueRange)> = Vec::new();
        let mut low_to_high = vec![usize::MAX; sig.len()];
        let mut features = Vec::new();
        for v in 0..sig.len() {
            if v == first {
                for n in &names {
                    features.push(vars.len());
                    vars.push((n.clone(), ValueRange::Real(1)));
                }
            } else if !in_block[v] {
                low_to_high[v] = vars.len();
                vars.push((sig.name(v).to_string(), sig.range(v).clone()));
            }
        }
        let high: Sig = Arc::new(Signature::new(vars)?);
        let mut blocks: Vec<(Vec<VarId>, Vec<VarId>)> =
            (0..sig.len()).filter(|&v| !in_block[v]).map(|v| (vec![v], vec![low_to_high[v]])).collect();
        blocks.push((self.block.clone(), features.clone()));

        let me = Arc::new(self.clone());
        let (fw_me, fw_l2h, fw_feat, hn) = (me.clone(), low_to_high.clone(), features.clone(), high.len());
        let forward: WorldMap = Arc::new(move |w: &[Value]| {
            let mut out: World = vec![Value::Num(0.0); hn];
            for (v, &x) in fw_l2h.iter().enumerate() {
                if x != usize::MAX {
                    out[x] = w[v].clone();
                }
            }
            let h: Vec<f64> = fw_me.block.iter().map(|&v| w[v].as_num().unwrap_or(f64::NAN)).collect();
            for (&x, f) in fw_feat.iter().zip(fw_me.features(&h)) {
                out[x] = Value::Num(f);
            }
            out
        });
        let (ln, inv_l2h, inv_feat) = (sig.len(), low_to_high, features.clone());
        let inverse: WorldMap = Arc::new(move |t: &[Value]| {
            let mut out: World = vec![Value::Num(0.0); ln];
            for (v, &x) in inv_l2h.iter().enumerate() {
                if x != usize::MAX {
                    out[v] = t[x].clone();
                }
            }
            let f: Vec<f64> = inv_feat.iter().map(|&x| t[x].as_num().unwrap_or(f64::NAN)).collect();
            for (&v, h) in me.block.iter().zip(me.reconstruct(&f)) {
                out[v] = Value::Num(h);
            }
            out
        });
        let label = match &self.map {
            FeatureMap::Orthogonal(_) => "rotation",
            FeatureMap::Pair { .. } => "encoder/decoder",
        };
        let bij = Bijection::new(sig.clone(), high, blocks, forward, inverse, label)?;
        Ok(FeatureSpace { bij: Arc::new(bij), features })
    }
}

/// Featurizer `f = Qᵀ h` on `block`.
pub fn rotation_featurizer(block: Vec<VarId>, q: Vec<Vec<f64>>) -> Result<Featurizer> {
    let n = block.len();
    if q.len() != n || q.iter().any(|r| r.len() != n) {
        return Err(Error::DimensionMismatch(format!("Q must be {n}x{n} for a block of {n}")));
    }
    let dev = orthogonality_deviation(&q);
    if !(dev <= ORTHOGONALITY_TOL) {
        return Err(Error::NotOrthogonal(dev));
    }
    Ok(Featurizer { block, names: None, map: FeatureMap::Orthogonal(q) })
}

/// Clockwise rotation by `theta_deg` in the plane of coordinates `(i, j)`:
/// the identity except `[[c, s], [-s, c]]` on rows and columns `i, j`.
pub fn givens(n: usize, plane: (usize, usize), theta_deg: f64) -> Vec<Vec<f64>> {
    let (s, c) = theta_deg.to_radians().sin_cos();
    let (i, j) = plane;
    let mut g = identity_matrix(n);
    g[i][i] = c;
    g[i][j] = s;
    g[j][i] = -s;
    g[j][j] = c;
    g
}

/// Product of Givens rotations, one per plane, in order.
pub fn rotation_product(n: usize, planes: &[(usize, usize)], angles: &[f64]) -> Vec<Vec<f64>> {
    planes.iter().zip(angles).fold(identity_matrix(n), |q, (&p, &a)| mat_mul(&q, &givens(n, p, a)))
}

fn block_activations(m: &CausalModel, block: &[VarId], pool: &[Setting]) -> Result<Vec<Vec<f64>>> {
    pool.par_iter()
        .map(|s| {
            let w = m.solve_unique(s)?;
            block
                .iter()
                .map(|&v| w[v].as_num().ok_or_else(|| Error::TypeMismatch(format!("`{}` is not a scalar real", m.sig().name(v)))))
                .collect()
        })
        .collect()
}

/// Eigenvalues and eigenvectors (as columns) of a symmetric matrix by cyclic
/// Jacobi rotations, stopping once every off-diagonal entry is at most 1e-12.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut a = a.to_vec();
    let mut v = identity_matrix(n);
    for _ in 0..100 {
        let off = (0..n).flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q))).fold(0.0f64, |m, (p, q)| m.max(a[p][q].abs()));
        if off <= 1e-12 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in a.iter_mut() {
                    let (kp, kq) = (row[p], row[q]);
                    row[p] = c * kp - s * kq;
                    row[q] = s * kp + c * kq;
                }
                for k in 0..n {
                    let (pk, qk) = (a[p][k], a[q][k]);
                    a[p][k] = c * pk - s * qk;
                    a[q][k] = s * pk + c * qk;
                }
                a[p][q] = 0.0;
                a[q][p] = 0.0;
                for row in v.iter_mut() {
                    let (kp, kq) = (row[p], row[q]);
                    row[p] = c * kp - s * kq;
                    row[q] = s * kp + c * kq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

#[derive(Clone, Debug)]
pub struct Pca {
    pub featurizer: Featurizer,
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Some eigenvalues tie; their order follows the coordinate index.
    pub degenerate: bool,
}

const EIGEN_TIE: f64 = 1e-12;

/// Principal components of the block activations over `pool`, as a rotation.
pub fn pca_featurizer(m: &CausalModel, block: Vec<VarId>, pool: &[Setting]) -> Result<Pca> {
    let acts = block_activations(m, &block, pool)?;
    let mut distinct = acts.clone();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::DegenerateCovariance(format!("{} distinct activation vectors", distinct.len())));
    }
    let n = block.len();
    let count = acts.len() as f64;
    let mean: Vec<f64> = (0..n).map(|i| acts.iter().map(|a| a[i]).sum::<f64>() / count).collect();
    let mut cov = vec![vec![0.0; n]; n];
    for a in &acts {
        for i in 0..n {
            for j in 0..n {
                cov[i][j] += (a[i] - mean[i]) * (a[j] - mean[j]);
            }
        }
    }
    for row in cov.iter_mut() {
        for x in row.iter_mut() {
            *x /= count;
        }
    }
    let (vals, vecs) = jacobi_eigen(&cov);
    let tie = |a: f64, b: f64| (a - b).abs() <= EIGEN_TIE * a.abs().max(b.abs()).max(1.0);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        if tie(vals[a], vals[b]) {
            a.cmp(&b)
        } else {
            vals[b].partial_cmp(&vals[a]).unwrap_or(std::cmp::Ordering::Equal)
        }
    });
    let mut p = vec![vec![0.0; n]; n];
    for (col, &k) in order.iter().enumerate() {
        let mut u: Vec<f64> = (0..n).map(|i| vecs[i][k]).collect();
        if u.iter().find(|x| x.abs() > EIGEN_TIE).is_some_and(|&x| x < 0.0) {
            u.iter_mut().for_each(|x| *x = -*x);
        }
        for i in 0..n {
            p[i][col] = u[i];
        }
    }
    let eigenvalues: Vec<f64> = order.iter().map(|&k| vals[k]).collect();
    let degenerate = eigenvalues.windows(2).any(|w| tie(w[0], w[1]));
    Ok(Pca { featurizer: rotation_featurizer(block, p)?, eigenvalues, degenerate })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `v` made orthogonal to `basis` (two passes) and normalized, unless it
/// lies in their span.
fn orthonormalize(v: &[f64], basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    let scale = dot(v, v).sqrt();
    let mut u = v.to_vec();
    for _ in 0..2 {
        for b in basis {
            let d = dot(&u, b);
            u.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
    }
    let norm = dot(&u, &u).sqrt();
    if norm <= 1e-10 * scale.max(1.0) {
        return None;
    }
    Some(u.into_iter().map(|x| x / norm).collect())
}

/// Orthonormal basis of the probe row space, completed by standard basis
/// vectors. Feature `i < rows` is the projection on the `i`-th basis row.
pub fn probe_featurizer(w: &[Vec<f64>], block: Vec<VarId>) -> Result<Featurizer> {
    let n = block.len();
    if w.iter().any(|r| r.len() != n) {
        return Err(Error::DimensionMismatch(format!("probe rows must have length {n}")));
    }
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    for r in w {
        match orthonormalize(r, &basis) {
            Some(u) => basis.push(u),
            None => return Err(Error::RankDeficient { rank: basis.len(), rows: w.len() }),
        }
    }
    for e in identity_matrix(n) {
        if basis.len() == n {
            break;
        }
        if let Some(u) = orthonormalize(&e, &basis) {
            basis.push(u);
        }
    }
    // Columns of Q are the basis vectors.
    rotation_featurizer(block, transpose(&basis))
}

#[derive(Clone, Debug)]
pub struct SaeReport {
    /// Mean L2 distance between activations and their reconstruction.
    pub reconstruction_error: f64,
    /// Mean L1 norm of the codes.
    pub l1: f64,
    block: Vec<VarId>,
    enc: Vec<Vec<f64>>,
    dec: Vec<Vec<f64>>,
}

impl SaeReport {
    pub fn to_json(&self) -> Json {
        json!({"reconstruction_error": self.reconstruction_error, "l1": self.l1})
    }

    /// The pair as a featurizer, when its error is within `bound`. It is
    /// bijective only up to that error.
    pub fn featurizer(&self, bound: f64) -> Option<Featurizer> {
        (self.reconstruction_error <= bound).then(|| Featurizer {
            block: self.block.clone(),
            names: None,
            map: FeatureMap::Pair { enc: self.enc.clone(), dec: self.dec.clone() },
        })
    }
}

/// Scores a linear encoder (`k x n`) and decoder (`n x k`) on the block
/// activations of `pool`.
pub fn sae_pair_eval(
    enc: &[Vec<f64>],
    dec: &[Vec<f64>],
    m: &CausalModel,
    block: &[VarId],
    pool: &[Setting],
) -> Result<SaeReport> {
    let n = block.len();
    let k = enc.len();
    if enc.iter().any(|r| r.len() != n) || dec.len() != n || dec.iter().any(|r| r.len() != k) {
        return Err(Error::DimensionMismatch(format!("encoder must be {k}x{n} and decoder {n}x{k}")));
    }
    let acts = block_activations(m, block, pool)?;
    let (mut err, mut l1) = (0.0, 0.0);
    for h in &acts {
        let code = mat_vec(enc, h);
        let back = mat_vec(dec, &code);
        err += back.iter().zip(h).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        l1 += code.iter().map(|x| x.abs()).sum::<f64>();
    }
    let count = acts.len().max(1) as f64;
    Ok(SaeReport {
        reconstruction_error: err / count,
        l1: l1 / count,
        block: block.to_vec(),
        enc: enc.to_vec(),
        dec: dec.to_vec(),
    })
}

// ---------------------------------------------------------------------------
// Rotation search

/// What a rotation search compares: patching feature sets of the low block
/// against patching high variables.
#[derive(Clone, Debug)]
pub struct DasTemplate {
    pub block: Vec<VarId>,
    /// Coordinate planes (indices into the block) of the Givens factors.
    pub planes: Vec<(usize, usize)>,
    /// Feature indices patched together, and the high variables they stand for.
    pub targets: Vec<(Vec<usize>, Vec<VarId>)>,
    pub inputs: Vec<InputPair>,
    /// Low and high variables compared after each run.
    pub outputs: Vec<(VarId, VarId)>,
    pub tol: f64,
}

#[derive(Clone, Debug)]
pub struct DasResult {
    /// Degrees, one per plane.
    pub angles: Vec<f64>,
    /// Number of (target, base, source) runs where low and high disagree.
    pub loss: usize,
    pub q: Vec<Vec<f64>>,
    /// Best loss after the grid, then after each refinement step.
    pub history: Vec<usize>,
    pub evaluations: usize,
}

impl DasResult {
    pub fn to_json(&self) -> Json {
        json!({"angles": self.angles, "loss": self.loss, "q": self.q, "history": self.history})
    }
}

/// Mismatch count of distributed interchange at the given angles.
pub fn das_loss(low: &CausalModel, high: &CausalModel, t: &DasTemplate, angles: &[f64]) -> Result<usize> {
    let q = rotation_product(t.block.len(), &t.planes, angles);
    let space = rotation_featurizer(t.block.clone(), q)?.bijection(low.sig())?;
    let high_runs: Vec<World> = t.inputs.iter().map(|p| high.solve_unique(&p.high)).collect::<Result<_>>()?;
    let mut loss = 0;
    for (feats, hvars) in &t.targets {
        let fids: Vec<VarId> = feats.iter().map(|&k| space.features[k]).collect();
        for (si, src) in t.inputs.iter().enumerate() {
            let dii = Arc::new(distributed_interchange(low, space.bij.clone(), &[src.low.clone()], &[fids.clone()])?);
            for base in &t.inputs {
                let iv = Intervention::Seq(vec![Intervention::Hard(base.low.clone()), Intervention::General(dii.clone())]);
                let lows = solve_under(low, &iv)?;
                let mut hs = base.high.clone();
                for &x in hvars {
                    hs.insert(x, high_runs[si][x].clone());
                }
                let hw = high.solve_unique(&hs)?;
                let agree = lows.len() == 1 && {
                    let l: World = t.outputs.iter().map(|&(a, _)| lows[0][a].clone()).collect();
                    let h: World = t.outputs.iter().map(|&(_, b)| hw[b].clone()).collect();
                    worlds_approx_eq(&l, &h, t.tol)
                };
                if !agree {
                    loss += 1;
                }
            }
        }
    }
    Ok(loss)
}

fn angle_size(a: f64) -> f64 {
    ((a + 180.0).rem_euclid(360.0) - 180.0).abs()
}

fn better(a: (usize, &[f64]), b: (usize, &[f64])) -> bool {
    let size = |x: &[f64]| x.iter().map(|&v| angle_size(v)).sum::<f64>();
    a.0 < b.0 || (a.0 == b.0 && size(a.1) < size(b.1))
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Grid search over each plane's angle in turn (`grid_deg` steps over a full
/// turn, others held), then golden-section refinement of each angle within
/// one grid step. Ties go to the smallest total angle.
pub fn das_search(
    low: &CausalModel,
    high: &CausalModel,
    t: &DasTemplate,
    grid_deg: f64,
    refine_iters: usize,
) -> Result<DasResult> {
    if !(grid_deg > 0.0) {
        return Err(Error::RangeViolation { var: "grid".into(), value: grid_deg.to_string() });
    }
    let steps = (360.0 / grid_deg).round() as usize;
    let mut angles = vec![0.0; t.planes.len()];
    let mut loss = das_loss(low, high, t, &angles)?;
    let mut evaluations = 1;
    for p in 0..t.planes.len() {
        let scored: Vec<(usize, Vec<f64>)> = (0..steps)
            .into_par_iter()
            .map(|k| {
                let mut a = angles.clone();
                a[p] = k as f64 * grid_deg;
                das_loss(low, high, t, &a).map(|l| (l, a))
            })
            .collect::<Result<_>>()?;
        evaluations += steps;
        for (l, a) in scored {
            if better((l, &a), (loss, &angles)) {
                loss = l;
                angles = a;
            }
        }
    }
    let mut history = vec![loss];
    for p in 0..t.planes.len() {
        let (mut lo, mut hi) = (angles[p] - grid_deg, angles[p] + grid_deg);
        for _ in 0..refine_iters {
            let c = hi - GOLDEN * (hi - lo);
            let d = lo + GOLDEN * (hi - lo);
            let mut ac = angles.clone();
            ac[p] = c;
            let mut ad = angles.clone();
            ad[p] = d;
            let lc = das_loss(low, high, t, &ac)?;
            let ld = das_loss(low, high, t, &ad)?;
            evaluations += 2;
            if lc <= ld {
                hi = d;
            } else {
                lo = c;
            }
            for (l, a) in [(lc, ac), (ld, ad)] {
                if l < loss {
                    loss = l;
                    angles = a;
                }
            }
            history.push(loss);
        }
    }
    let q = rotation_product(t.block.len(), &t.planes, &angles);
    Ok(DasResult { angles, loss, q, history, evaluations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::conjunction_rotation;

    fn max_net() -> DenseNet {
        DenseNet::new(
            vec![
                Layer::new(vec![vec![1.0, -1.0, 1.0], vec![-1.0, 1.0, 1.0]], Activation::Relu),
                Layer::new(vec![vec![0.5], vec![0.5], vec![0.5]], Activation::Identity),
            ],
            BTreeMap::new(),
            Readout::None,
        )
        .unwrap()
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = DenseNet::new(
            vec![Layer::new(identity_matrix(2), Activation::Identity)],
            BTreeMap::new(),
            Readout::None,
        )
        .unwrap();
        let m = net_to_model(&net, &net.standard_names()).unwrap();
        let w = m.solve_unique(&input_setting(&m, &[1.0, 0.0])).unwrap();
        assert_eq!(&w[2..], &[Value::Num(1.0), Value::Num(0.0)]);
    }

    #[test]
    fn max_net_computes_max() {
        let net = max_net();
        let m = net_to_model(&net, &net.standard_names()).unwrap();
        let w = m.solve_unique(&input_setting(&m, &[3.0, 1.0])).unwrap();
        assert_eq!(w[m.var("O1").unwrap()], Value::Num(3.0));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let bad = DenseNet::new(
            vec![Layer::new(identity_matrix(2), Activation::Relu), Layer::new(identity_matrix(3), Activation::Relu)],
            BTreeMap::new(),
            Readout::None,
        );
        assert!(matches!(bad, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn model_matches_pipeline_bit_for_bit() {
        let f = hierarchical_equality_fixture(0.1, ReadoutConvention::TrueIsSecondNonStrict).unwrap();
        for p in &f.inputs {
            let x: Vec<f64> = (0..8).map(|i| p.low.get(i).unwrap().as_num().unwrap()).collect();
            let acts: Vec<f64> = f.net.forward(&x).unwrap().concat();
            let w = f.low.solve_unique(&p.low).unwrap();
            let got: Vec<f64> = w.iter().map(|v| v.as_num().unwrap()).collect();
            assert_eq!(acts.len(), got.len());
            for (a, b) in acts.iter().zip(&got) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn he_network_reads_false_on_pentagon_pair_against_mixed_pair() {
        let f = hierarchical_equality_fixture(0.1, ReadoutConvention::TrueIsSecondNonStrict).unwrap();
        let x = f.net.embed(&["⬠", "⬠", "△", "□"]).unwrap();
        assert_eq!(f.net.predict(&x).unwrap(), Some(Value::Bool(false)));
        assert_eq!(f.net.embeddings["⬠"], vec![0.012, -0.301]);
        assert_eq!(f.low.len(), 26);
    }

    #[test]
    fn he_high_model_on_two_equal_pairs() {
        let h = he_high_model("⬠").unwrap();
        let s = Setting::named(
            h.sig(),
            &[("X1", Value::sym("⬠")), ("X2", Value::sym("⬠")), ("X3", Value::sym("△")), ("X4", Value::sym("△"))],
        )
        .unwrap();
        let w = h.solve_unique(&s).unwrap();
        assert_eq!(&w[4..], &[Value::Bool(true), Value::Bool(true), Value::Bool(true)]);
    }

    #[test]
    fn he_pre_readout_matches_closed_form() {
        let f = hierarchical_equality_fixture(0.1, ReadoutConvention::TrueIsSecondNonStrict).unwrap();
        let e = he_embeddings();
        let l1 = |a: &str, b: &str| e[a].iter().zip(&e[b]).map(|(x, y)| (x - y).abs()).sum::<f64>();
        for a in HE_SHAPES {
            for b in HE_SHAPES {
                for c in HE_SHAPES {
                    for d in HE_SHAPES {
                        let (p, q) = (l1(a, b), l1(c, d));
                        let want = (p - q).abs() - 0.9 * (p + q);
                        let got = f.pre_readout([a, b, c, d]).unwrap();
                        assert!((got - want).abs() <= 1e-12, "{a}{b}{c}{d}: {got} vs {want}");
                    }
                }
            }
        }
    }

    #[test]
    fn printed_sign_fails_every_convention() {
        for conv in ReadoutConvention::ALL {
            let f = hierarchical_equality_fixture_with(0.1, conv, W3Sign::Printed).unwrap();
            assert!(!f.behaves().unwrap(), "{}", conv.name());
        }
    }

    #[test]
    fn rotation_featurizer_rejects_non_orthogonal() {
        let r = rotation_featurizer(vec![0, 1], vec![vec![1.0, 1.0], vec![0.0, 1.0]]);
        assert!(matches!(r, Err(Error::NotOrthogonal(_))));
    }

    #[test]
    fn givens_inverse_is_negative_angle() {
        let p = mat_mul(&givens(3, (0, 2), 37.0), &givens(3, (0, 2), -37.0));
        assert!(orthogonality_deviation(&p) <= 1e-12);
        for (i, row) in p.iter().enumerate() {
            for (j, x) in row.iter().enumerate() {
                assert!((x - if i == j { 1.0 } else { 0.0 }).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn identity_rotation_is_identity_featurizer() {
        let m = conjunction_rotation(20.0).unwrap();
        let block = m.sig().vars(&["Y1", "Y2"]).unwrap();
        let f = rotation_featurizer(block, identity_matrix(2)).unwrap();
        let s = f.bijection(m.sig()).unwrap();
        let w: World = vec![Value::from(1i64), Value::from(0i64), Value::Num(0.3), Value::Num(-0.7), Value::from(0i64)];
        assert_eq!((s.bij.forward)(&w), w);
    }

    #[test]
    fn rotation_unrotates_conjunction() {
        let m = conjunction_rotation(20.0).unwrap();
        let block = m.sig().vars(&["Y1", "Y2"]).unwrap();
        let f = rotation_featurizer(block, givens(2, (0, 1), 20.0)).unwrap();
        let s = f.bijection(m.sig()).unwrap();
        let t = crate::abstraction::bijective_translate(&m, s.bij.clone()).unwrap();
        let mut rng = <rand_chacha::ChaCha20Rng as rand::SeedableRng>::seed_from_u64(7);
        for _ in 0..1000 {
            let w = crate::abstraction::random_world(t.sig(), &mut rng);
            for (k, y) in ["Y1", "Y2"].iter().enumerate() {
                let v = t.var(y).unwrap();
                let got = t.mechanism(v).eval(&w, y).unwrap().as_num().unwrap();
                assert!((got - w[k].as_num().unwrap()).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn pca_on_signed_axes_ties_by_index() {
        let net = DenseNet::new(vec![Layer::new(identity_matrix(2), Activation::Identity)], BTreeMap::new(), Readout::None)
            .unwrap();
        let m = net_to_model(&net, &net.standard_names()).unwrap();
        let pool: Vec<Setting> =
            [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]].iter().map(|x| input_setting(&m, x)).collect();
        let pca = pca_featurizer(&m, vec![2, 3], &pool).unwrap();
        assert_eq!(pca.eigenvalues, vec![0.5, 0.5]);
        assert!(pca.degenerate);
        assert_eq!(pca.featurizer.q().unwrap(), &identity_matrix(2)[..]);
    }

    #[test]
    fn pca_finds_line_direction() {
        let net = DenseNet::new(vec![Layer::new(identity_matrix(2), Activation::Identity)], BTreeMap::new(), Readout::None)
            .unwrap();
        let m = net_to_model(&net, &net.standard_names()).unwrap();
        let pool: Vec<Setting> = [-1.0, 0.0, 1.0, 2.5].iter().map(|t| input_setting(&m, &[0.6 * t, 0.8 * t])).collect();
        let pca = pca_featurizer(&m, vec![2, 3], &pool).unwrap();
        let q = pca.featurizer.q().unwrap();
        assert!((q[0][0] - 0.6).abs() <= 1e-9 && (q[1][0] - 0.8).abs() <= 1e-9);
        assert!(orthogonality_deviation(q) <= 1e-9);
    }

    #[test]
    fn pca_needs_two_distinct_activations() {
        let net = DenseNet::new(vec![Layer::new(identity_matrix(2), Activation::Identity)], BTreeMap::new(), Readout::None)
            .unwrap();
        let m = net_to_model(&net, &net.standard_names()).unwrap();
        let pool = vec![input_setting(&m, &[1.0, 1.0]); 3];
        assert!(matches!(pca_featurizer(&m, vec![2, 3], &pool), Err(Error::DegenerateCovariance(_))));
    }

    #[test]
    fn probe_rowspace_comes_first() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let f = probe_featurizer(&[vec![r, r]], vec![0, 1]).unwrap();
        let feats = f.features(&[1.0, 3.0]);
        assert!((feats[0] - 4.0 * r).abs() <= 1e-12);
        assert_eq!(probe_featurizer(&identity_matrix(2), vec![0, 1]).unwrap().q().unwrap(), &identity_matrix(2)[..]);
        let dup = probe_featurizer(&[vec![1.0, 0.0], vec![2.0, 0.0]], vec![0, 1]);
        assert_eq!(dup, Err(Error::RankDeficient { rank: 1, rows: 2 }));
    }

    #[test]
    fn sae_pairs_score_as_expected() {
        let net = DenseNet::new(vec![Layer::new(identity_matrix(2), Activation::Identity)], BTreeMap::new(), Readout::None)
            .unwrap();
        let m = net_to_model(&net, &net.standard_names()).unwrap();
        let pool: Vec<Setting> = [[0.6, 0.8], [1.0, 0.0], [0.0, -1.0]].iter().map(|x| input_setting(&m, x)).collect();
        let enc = givens(2, (0, 1), 30.0);
        let exact = sae_pair_eval(&enc, &transpose(&enc), &m, &[2, 3], &pool).unwrap();
        assert!(exact.reconstruction_error <= 1e-12);
        assert!(exact.featurizer(1e-9).is_some());
        let zero = sae_pair_eval(&enc, &[vec![0.0; 2], vec![0.0; 2]], &m, &[2, 3], &pool).unwrap();
        assert!((zero.reconstruction_error - 1.0).abs() <= 1e-12);
        assert!(zero.featurizer(1e-9).is_none());
        let doubled: Vec<Vec<f64>> = transpose(&enc).iter().map(|r| r.iter().map(|x| 2.0 * x).collect()).collect();
        let twice = sae_pair_eval(&enc, &doubled, &m, &[2, 3], &pool).unwrap();
        assert!((twice.reconstruction_error - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn dense_json_round_trips() {
        let f = he_net(0.1, ReadoutConvention::TrueIsSecondNonStrict, W3Sign::Displayed).unwrap();
        assert_eq!(DenseNet::from_json(&f.to_json()).unwrap(), f);
    }
}
