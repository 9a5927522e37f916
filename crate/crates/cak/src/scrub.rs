//! Ablation-based analyses: causal scrubbing, concept erasure and
//! sub-circuit checks, each scored against a three-variable collider.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde_json::{json, Value as Json};

use crate::abstraction::{CellMap, Suite, TauOmega};
use crate::approx::{approx_metric, ApproxConfig, Similarity, Statistic};
use crate::error::{Error, Result};
use crate::interchange::InputPair;
use crate::intervene::{compose, derive_seed, Intervention, Interventional};
use crate::model::{CausalModel, Mechanism};
use crate::value::{Setting, Signature, Value, ValueRange, VarId, World};

/// Marker for outputs outside a declared behavior.
pub fn undefined_output() -> Value {
    Value::sym("⊥")
}

fn pack_values(vals: Vec<Value>) -> Value {
    if vals.len() == 1 {
        vals.into_iter().next().unwrap_or_else(|| unreachable!())
    } else {
        Value::tuple(vals)
    }
}

/// Three-variable model: input `X`, flag `Z` (default 0) and output `Y`,
/// where `Y` follows `behavior` when `Z` is 1 and the plain run otherwise.
pub struct Collider {
    pub model: CausalModel,
    pub low_inputs: Vec<VarId>,
    pub low_outputs: Vec<VarId>,
    /// Applied to the low output values before they are compared.
    pub readout: Option<CellMap>,
}

fn read_outputs(readout: &Option<CellMap>, vals: Vec<Value>) -> Value {
    match readout {
        Some(r) => r.apply(&vals).unwrap_or_else(undefined_output),
        None => pack_values(vals),
    }
}

impl Collider {
    pub const X: VarId = 0;
    pub const Z: VarId = 1;
    pub const Y: VarId = 2;

    /// `plain` maps each packed input to the read output of the plain run;
    /// inputs outside `behavior` give the plain output, or ⊥ when `strict`.
    pub fn new(
        low: &CausalModel,
        inputs: &[Setting],
        behavior: HashMap<Value, Value>,
        strict: bool,
        readout: Option<CellMap>,
    ) -> Result<Collider> {
        let low_inputs = low.inputs();
        let low_outputs = low.sinks();
        let mut plain: HashMap<Value, Value> = HashMap::new();
        let mut xs = Vec::with_capacity(inputs.len());
        let mut ys: Vec<Value> = Vec::new();
        for s in inputs {
            let w = low.solve_unique(s)?;
            let x = pack_values(low_inputs.iter().map(|&v| w[v].clone()).collect());
            let y = read_outputs(&readout, low_outputs.iter().map(|&v| w[v].clone()).collect());
            if !xs.contains(&x) {
                xs.push(x.clone());
            }
            for out in [Some(&y), behavior.get(&x)].into_iter().flatten() {
                if !ys.contains(out) {
                    ys.push(out.clone());
                }
            }
            plain.insert(x, y);
        }
        if strict || (readout.is_some() && !ys.contains(&undefined_output())) {
            ys.push(undefined_output());
        }
        let sig = Arc::new(Signature::new(vec![
            ("X", ValueRange::Enum(xs.clone())),
            ("Z", ValueRange::ints(0, 1)),
            ("Y", ValueRange::Enum(ys)),
        ])?);
        let default_x = xs.first().cloned().ok_or_else(|| Error::TypeMismatch("empty input pool".into()))?;
        let y = Mechanism::native(vec![Self::X, Self::Z], "collider output", move |t| {
            let flagged = t[Self::Z].as_num() == Some(1.0);
            match (flagged, behavior.get(&t[Self::X])) {
                (true, Some(b)) => Ok(b.clone()),
                (true, None) if strict => Ok(undefined_output()),
                _ => plain.get(&t[Self::X]).cloned().ok_or_else(|| Error::Eval {
                    var: "Y".into(),
                    msg: format!("no plain run for input {}", t[Self::X]),
                }),
            }
        });
        let model = CausalModel::new(sig, vec![Mechanism::Const(default_x), Mechanism::Const(Value::from(0.0)), y])?;
        Ok(Collider { model, low_inputs, low_outputs, readout })
    }

    /// τ that flags a setting whenever `watched` differs from the plain run
    /// on the same input.
    pub fn tau_omega(&self, low: &CausalModel, watched: Vec<VarId>, flagged: Vec<Intervention>) -> TauOmega {
        let low_m = low.clone();
        let ins = self.low_inputs.clone();
        let outs = self.low_outputs.clone();
        let ins_o = ins.clone();
        let readout = self.readout.clone();
        let high = self.model.sig().clone();
        let flagged_o = flagged.clone();
        let tau = Arc::new(move |t: &[Value]| -> Option<World> {
            let input: Setting = ins.iter().map(|&v| (v, t[v].clone())).collect();
            let natural = low_m.solve_unique(&input).ok()?;
            let z = watched.iter().all(|&v| natural[v].approx_eq(&t[v], 1e-9));
            Some(vec![
                pack_values(ins.iter().map(|&v| t[v].clone()).collect()),
                Value::from(if z { 0.0 } else { 1.0 }),
                read_outputs(&readout, outs.iter().map(|&v| t[v].clone()).collect()),
            ])
        });
        let omega = Arc::new(move |iv: &Intervention| -> Option<Intervention> {
            omega_collider(iv, &ins_o, &flagged_o, &high)
        });
        TauOmega { low: low.sig().clone(), high: self.model.sig().clone(), tau, omega, provenance: crate::abstraction::Provenance::Custom("collider".into()) }
    }
}

fn omega_collider(iv: &Intervention, ins: &[VarId], flagged: &[Intervention], high: &Signature) -> Option<Intervention> {
    if flagged.iter().any(|f| f == iv) {
        return Some(Intervention::Hard(Setting::from_pairs([(Collider::Z, Value::from(1.0))])));
    }
    match iv {
        Intervention::Hard(s) => {
            let mut rest = s.clone();
            let mut vals = Vec::with_capacity(ins.len());
            for &v in ins {
                vals.push(rest.remove(v)?);
            }
            let mut out = Setting::from_pairs([(Collider::X, pack_values(vals))]);
            if !high.contains(Collider::X, out.get(Collider::X)?) {
                return None;
            }
            if !rest.is_empty() {
                let hit = flagged.iter().any(|f| matches!(f, Intervention::Hard(h) if *h == rest));
                if !hit {
                    return None;
                }
                out.insert(Collider::Z, Value::from(1.0));
            }
            Some(Intervention::Hard(out))
        }
        Intervention::Seq(items) => {
            let mut acc = Intervention::null();
            for it in items {
                acc = compose(&acc, &omega_collider(it, ins, flagged, high)?);
            }
            Some(acc)
        }
        _ => None,
    }
}

/// Ablation of `targets` scored against a degraded behavior table, keyed by
/// packed input values.
pub struct ErasureSetup {
    pub low: CausalModel,
    pub targets: Vec<VarId>,
    pub ablation: Intervention,
    pub degraded: HashMap<Value, Value>,
    pub inputs: Vec<Setting>,
}

pub struct ColliderCheck {
    pub high: CausalModel,
    pub to: TauOmega,
    pub suite: Vec<Intervention>,
}

/// The collider abstraction of an ablation. Inputs on which the ablation
/// leaves the targets unchanged are left out of the ablated half of the suite.
pub fn erasure_abstraction(e: &ErasureSetup) -> Result<ColliderCheck> {
    let col = Collider::new(&e.low, &e.inputs, e.degraded.clone(), false, None)?;
    let to = col.tau_omega(&e.low, e.targets.clone(), vec![e.ablation.clone()]);
    let mut suite = Vec::with_capacity(2 * e.inputs.len());
    for s in &e.inputs {
        let plain = Intervention::Hard(s.clone());
        suite.push(plain.clone());
        let ablated = compose(&plain, &e.ablation);
        let natural = e.low.solve_unique(s)?;
        let after = crate::intervene::solve_under(&e.low, &ablated)?;
        let changed = after.iter().any(|w| e.targets.iter().any(|&v| !w[v].approx_eq(&natural[v], 1e-9)));
        if changed {
            suite.push(Intervention::Seq(vec![plain, e.ablation.clone()]));
        }
    }
    Ok(ColliderCheck { high: col.model, to, suite })
}

/// Mechanism edit that feeds each severed edge from `ablated` and keeps the
/// edges of `kept` live.
pub fn subcircuit_interventional(m: &CausalModel, kept: &[(VarId, VarId)], ablated: &Setting) -> Result<Interventional> {
    let n = m.len();
    let mut severed: Vec<Vec<VarId>> = vec![Vec::new(); n];
    for h in 0..n {
        for g in m.mechanism(h).syntactic_parents() {
            if !kept.contains(&(g, h)) {
                if !ablated.contains(g) {
                    return Err(Error::MissingVariable(m.sig().name(g).to_string()));
                }
                severed[h].push(g);
            }
        }
    }
    let targets: Vec<VarId> = (0..n).filter(|&h| !severed[h].is_empty()).collect();
    let sig = m.sig().clone();
    let ablated = ablated.clone();
    let edit_targets = targets.clone();
    Ok(Interventional::new(targets, "subcircuit", move |old| {
        let mut out = Vec::with_capacity(old.len());
        for (k, &h) in edit_targets.iter().enumerate() {
            let f = old[k].clone();
            let cut = severed[h].clone();
            let live: Vec<VarId> = f.parents().into_iter().filter(|g| !cut.contains(g)).collect();
            let feed: Vec<(VarId, Value)> = cut.iter().map(|&g| (g, ablated.get(g).cloned().unwrap_or(Value::Bool(false)))).collect();
            let name = sig.name(h).to_string();
            out.push(Mechanism::native(live, format!("{name} with severed inputs"), move |t| {
                let mut u = t.to_vec();
                for (g, v) in &feed {
                    u[*g] = v.clone();
                }
                f.eval(&u, &name)
            }));
        }
        Ok(out)
    }))
}

/// Collider check of a sub-circuit against the behavior it should preserve.
pub fn subcircuit_abstraction(
    m: &CausalModel,
    kept: &[(VarId, VarId)],
    ablated: &Setting,
    behavior: HashMap<Value, Value>,
    inputs: &[Setting],
) -> Result<ColliderCheck> {
    let iv = Intervention::General(Arc::new(subcircuit_interventional(m, kept, ablated)?));
    let watched = iv.targets();
    let col = Collider::new(m, inputs, behavior.clone(), true, None)?;
    let to = col.tau_omega(m, watched, vec![iv.clone()]);
    let mut suite = Vec::new();
    for s in inputs {
        let plain = Intervention::Hard(s.clone());
        suite.push(plain.clone());
        let x = pack_values(col.low_inputs.iter().map(|&v| s.get(v).cloned().unwrap_or(Value::Bool(false))).collect());
        if behavior.contains_key(&x) {
            suite.push(Intervention::Seq(vec![plain, iv.clone()]));
        }
    }
    Ok(ColliderCheck { high: col.model, to, suite })
}

/// Pool mean of each target's value, as a constant ablation.
pub fn mean_ablation(m: &CausalModel, targets: &[VarId], pool: &[Setting]) -> Result<crate::intervene::AblationSpec> {
    if pool.is_empty() {
        return Err(Error::TypeMismatch("empty input pool".into()));
    }
    let runs: Vec<World> = pool.iter().map(|s| m.solve_unique(s)).collect::<Result<_>>()?;
    let mut means = Vec::with_capacity(targets.len());
    for &v in targets {
        let first = runs[0][v].as_vector().ok_or_else(|| Error::NonRealMediator(m.sig().name(v).to_string()))?;
        let mut acc = vec![0.0; first.len()];
        for w in &runs {
            let x = w[v].as_vector().ok_or_else(|| Error::NonRealMediator(m.sig().name(v).to_string()))?;
            for (a, b) in acc.iter_mut().zip(x) {
                *a += b;
            }
        }
        let mean: Vec<f64> = acc.iter().map(|a| a / runs.len() as f64).collect();
        means.push(if mean.len() == 1 { Value::Num(mean[0]) } else { Value::vector(&mean) });
    }
    Ok(crate::intervene::AblationSpec { targets: targets.to_vec(), kind: crate::intervene::AblationKind::Constant(means) })
}

/// Low model, high model, the variable map between them and an input pool
/// of paired runs.
pub struct ScrubSetup {
    pub low: CausalModel,
    pub high: CausalModel,
    /// High variable for each low variable, where defined.
    pub delta: Vec<Option<VarId>>,
    pub pool: Vec<InputPair>,
    /// Readout of the low outputs; network logits are compared through it.
    pub readout: Option<CellMap>,
}

/// Nodes of the scrub recursion: low variables sharing a δ image act as one
/// node; variables outside the domain of δ are nodes of their own.
struct ScrubGraph {
    nodes: Vec<Vec<VarId>>,
    image: Vec<Option<VarId>>,
    is_input: Vec<bool>,
    /// Parent nodes, each with whether the edge lies in the circuit.
    parents: Vec<Vec<(usize, bool)>>,
    /// High solutions of each pool input.
    high_runs: Vec<World>,
    low_runs: Vec<World>,
    outputs: Vec<usize>,
}

impl ScrubGraph {
    fn new(s: &ScrubSetup) -> Result<ScrubGraph> {
        if s.pool.is_empty() {
            return Err(Error::TypeMismatch("empty input pool".into()));
        }
        let n = s.low.len();
        let mut nodes: Vec<Vec<VarId>> = Vec::new();
        let mut image = Vec::new();
        let mut node_of = vec![0; n];
        let mut by_image: HashMap<VarId, usize> = HashMap::new();
        for v in 0..n {
            let k = match s.delta.get(v).copied().flatten() {
                Some(x) => *by_image.entry(x).or_insert_with(|| {
                    nodes.push(Vec::new());
                    image.push(Some(x));
                    nodes.len() - 1
                }),
                None => {
                    nodes.push(Vec::new());
                    image.push(None);
                    nodes.len() - 1
                }
            };
            nodes[k].push(v);
            node_of[v] = k;
        }
        let low_inputs = s.low.inputs();
        let is_input = nodes.iter().map(|vs| vs.iter().all(|v| low_inputs.contains(v))).collect();
        let hp = |x: VarId| s.high.parents(x).to_vec();
        let parents = (0..nodes.len())
            .map(|k| {
                let mut ps: Vec<usize> = nodes[k].iter().flat_map(|&v| s.low.parents(v).to_vec()).map(|g| node_of[g]).filter(|&g| g != k).collect();
                ps.sort_unstable();
                ps.dedup();
                ps.into_iter()
                    .map(|g| {
                        let important = match (image[g], image[k]) {
                            (Some(a), Some(b)) => a == b || hp(b).contains(&a),
                            _ => false,
                        };
                        (g, important)
                    })
                    .collect()
            })
            .collect();
        let high_runs = s.pool.par_iter().map(|p| s.high.solve_unique(&p.high)).collect::<Result<_>>()?;
        let low_runs = s.pool.par_iter().map(|p| s.low.solve_unique(&p.low)).collect::<Result<_>>()?;
        let sinks = s.low.sinks();
        let mut outputs: Vec<usize> = sinks.iter().map(|&v| node_of[v]).collect();
        outputs.sort_unstable();
        outputs.dedup();
        Ok(ScrubGraph { nodes, image, is_input, parents, high_runs, low_runs, outputs })
    }

    /// Values of the node's variables under the scrub of `base`.
    fn scrub(&self, s: &ScrubSetup, base: usize, targets: &[usize], rng: &mut ChaCha20Rng) -> Result<Setting> {
        let mut out = Setting::new();
        for &k in targets {
            if self.is_input[k] {
                for &v in &self.nodes[k] {
                    out.insert(v, self.low_runs[base][v].clone());
                }
                continue;
            }
            let mut fixed = Setting::new();
            for &(g, important) in &self.parents[k] {
                if !important {
                    let src = rng.gen_range(0..s.pool.len());
                    fixed = fixed.overwrite(&self.scrub(s, src, &[g], rng)?);
                }
            }
            if let Some(x) = self.image[k] {
                let important: Vec<usize> = self.parents[k].iter().filter(|p| p.1).map(|p| p.0).collect();
                if !important.is_empty() {
                    let want = &self.high_runs[base][x];
                    let matches: Vec<usize> = (0..s.pool.len()).filter(|&i| self.high_runs[i][x] == *want).collect();
                    if matches.is_empty() {
                        return Err(Error::EmptyConditionedSet { var: s.high.sig().name(x).to_string(), value: want.to_string() });
                    }
                    let src = matches[rng.gen_range(0..matches.len())];
                    fixed = fixed.overwrite(&self.scrub(s, src, &important, rng)?);
                }
            }
            let w = s.low.solve_unique(&fixed)?;
            for &v in &self.nodes[k] {
                out.insert(v, w[v].clone());
            }
        }
        Ok(out)
    }
}

/// Values of the output variables after scrubbing `base` (an index into the pool).
pub fn scrub(s: &ScrubSetup, base: usize, seed: u64) -> Result<Setting> {
    let g = ScrubGraph::new(s)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    g.scrub(s, base, &g.outputs.clone(), &mut rng)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScrubReport {
    pub faithfulness: f64,
    pub samples: usize,
    pub seed: u64,
    pub empty_conditioned: Vec<String>,
}

impl ScrubReport {
    pub fn to_json(&self) -> Json {
        json!({
            "faithfulness": self.faithfulness,
            "samples": self.samples,
            "seed": self.seed,
            "empty_conditioned": self.empty_conditioned,
        })
    }
}

/// Scrubbed runs, each a base input with its output variables overwritten.
struct ScrubSuite {
    items: Vec<Intervention>,
}

impl Suite for ScrubSuite {
    fn len(&self) -> usize {
        self.items.len()
    }
    fn item(&self, k: usize) -> Intervention {
        self.items[k].clone()
    }
}

/// Share of `samples` seeded scrubs whose outputs match the plain run of the
/// same base. Sample `k` draws its base and resamples from a generator
/// seeded by `(seed, k)`.
pub fn scrub_faithfulness(s: &ScrubSetup, samples: usize, seed: u64) -> Result<ScrubReport> {
    let g = ScrubGraph::new(s)?;
    let outs: Vec<VarId> = g.outputs.iter().flat_map(|&k| g.nodes[k].clone()).collect();
    let runs: Vec<std::result::Result<Setting, String>> = (0..samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(&[seed, k as u64]));
            let base = rng.gen_range(0..s.pool.len());
            match g.scrub(s, base, &g.outputs, &mut rng) {
                Ok(o) => Ok(s.pool[base].low.overwrite(&o)),
                Err(Error::EmptyConditionedSet { var, value }) => Err(format!("{var}={value}")),
                Err(e) => Err(format!("\u{0}{e}")),
            }
        })
        .collect();
    let mut empty = Vec::new();
    let mut items = Vec::with_capacity(samples);
    for r in runs {
        match r {
            Ok(setting) => items.push(Intervention::Hard(setting)),
            Err(msg) if msg.starts_with('\u{0}') => return Err(Error::TypeMismatch(msg[1..].to_string())),
            Err(msg) => {
                if !empty.contains(&msg) {
                    empty.push(msg);
                }
            }
        }
    }
    empty.sort();
    let inputs: Vec<Setting> = s.pool.iter().map(|p| p.low.clone()).collect();
    let col = Collider::new(&s.low, &inputs, HashMap::new(), false, s.readout.clone())?;
    let watched: Vec<VarId> = (0..s.low.len()).collect();
    let scrubbed_outputs = outs.clone();
    let mut to = col.tau_omega(&s.low, watched, Vec::new());
    let ins = col.low_inputs.clone();
    let high = col.model.sig().clone();
    to.omega = Arc::new(move |iv| {
        let Intervention::Hard(h) = iv else { return None };
        let input: Setting = ins.iter().map(|&v| Some((v, h.get(v)?.clone()))).collect::<Option<_>>()?;
        let x = pack_values(ins.iter().map(|&v| input.get(v).cloned().unwrap_or(Value::Bool(false))).collect());
        if !high.contains(Collider::X, &x) {
            return None;
        }
        let flagged = scrubbed_outputs.iter().any(|v| h.contains(*v));
        let mut out = Setting::from_pairs([(Collider::X, x)]);
        if flagged {
            out.insert(Collider::Z, Value::from(1.0));
        }
        Some(Intervention::Hard(out))
    });
    let suite = ScrubSuite { items };
    let cfg = ApproxConfig::new(Similarity::OutputMatch01(vec![Collider::Y]), Statistic::Mean);
    let metric = if suite.is_empty() { 0.0 } else { approx_metric(&s.low, &col.model, &to, &suite, &cfg)?.metric };
    // Failed samples (empty conditioned sets) count as mismatches.
    let faithfulness = if samples == 0 { 0.0 } else { metric * suite.len() as f64 / samples as f64 };
    Ok(ScrubReport { faithfulness, samples, seed, empty_conditioned: empty })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{op, var, Op};

    /// A, B inputs; C = A + B; D = C.
    fn adder() -> CausalModel {
        let sig = Arc::new(
            Signature::new(vec![
                ("A", ValueRange::ints(0, 1)),
                ("B", ValueRange::ints(0, 1)),
                ("C", ValueRange::ints(0, 2)),
                ("D", ValueRange::ints(0, 2)),
            ])
            .unwrap(),
        );
        CausalModel::new(
            sig,
            vec![
                Mechanism::Const(Value::from(0.0)),
                Mechanism::Const(Value::from(0.0)),
                Mechanism::Expr(op(Op::Add, vec![var(0), var(1)])),
                Mechanism::Expr(var(2)),
            ],
        )
        .unwrap()
    }

    fn inputs() -> Vec<Setting> {
        let mut out = Vec::new();
        for a in 0..2 {
            for b in 0..2 {
                out.push(Setting::from_pairs([(0, Value::from(a as f64)), (1, Value::from(b as f64))]));
            }
        }
        out
    }

    #[test]
    fn full_circuit_is_the_identity_edit() {
        let m = adder();
        let kept = vec![(0, 2), (1, 2), (2, 3)];
        let iv = subcircuit_interventional(&m, &kept, &Setting::new()).unwrap();
        assert!(iv.targets.is_empty());
    }

    #[test]
    fn empty_circuit_output_is_constant() {
        let m = adder();
        let abl = Setting::from_pairs([(0, Value::from(1.0)), (1, Value::from(1.0)), (2, Value::from(1.0))]);
        let iv = Intervention::General(Arc::new(subcircuit_interventional(&m, &[], &abl).unwrap()));
        for s in inputs() {
            let w = crate::intervene::solve_under(&m, &compose(&Intervention::Hard(s), &iv)).unwrap();
            assert_eq!(w[0][3], Value::from(1.0));
        }
    }

    #[test]
    fn identity_scrub_is_plain_run() {
        let m = adder();
        let pool: Vec<InputPair> = inputs().into_iter().map(|s| InputPair { low: s.clone(), high: s }).collect();
        let setup = ScrubSetup { low: m.clone(), high: m.clone(), delta: (0..4).map(Some).collect(), pool, readout: None };
        for base in 0..4 {
            let out = scrub(&setup, base, 0).unwrap();
            let w = m.solve_unique(&setup.pool[base].low).unwrap();
            assert_eq!(out.get(3), Some(&w[3]));
        }
        let r = scrub_faithfulness(&setup, 50, 0).unwrap();
        assert_eq!(r.faithfulness, 1.0);
    }
}
