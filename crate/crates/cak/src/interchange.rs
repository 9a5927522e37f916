//! Interchange interventions: simple, recursive and distributed, plus the
//! alignments and accuracy measure built from them.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde_json::{json, Value as Json};

use crate::abstraction::{
    evaluate_item, Alignment, Bijection, CellMap, HighCache, MapTable, Suite, TauOmega,
};
use crate::error::{Error, Result};
use crate::intervene::{Intervention, Interventional};
use crate::model::{CausalModel, Mechanism};
use crate::value::{project_world, worlds_approx_eq, Setting, Signature, Value, VarId, World};

/// Sources and the disjoint variable sets each one supplies.
#[derive(Clone, Debug, Default)]
pub struct InterchangeSpec {
    pub sources: Vec<Setting>,
    pub targets: Vec<Vec<VarId>>,
}

fn check_targets(m: &CausalModel, sources: usize, targets: &[Vec<VarId>]) -> Result<()> {
    if sources != targets.len() {
        return Err(Error::TypeMismatch(format!("{sources} sources for {} target sets", targets.len())));
    }
    let inputs = m.inputs();
    let mut seen = vec![false; m.len()];
    for t in targets {
        for &v in t {
            if v >= m.len() {
                return Err(Error::UnknownVariable(format!("#{v}")));
            }
            if inputs.contains(&v) {
                return Err(Error::TypeMismatch(format!("`{}` is an input and cannot be an interchange target", m.sig().name(v))));
            }
            if seen[v] {
                return Err(Error::TypeMismatch(format!("`{}` appears in two target sets", m.sig().name(v))));
            }
            seen[v] = true;
        }
    }
    Ok(())
}

/// Values the targets take when the model runs on their sources.
pub fn interchange(m: &CausalModel, spec: &InterchangeSpec) -> Result<Setting> {
    let none = vec![Setting::new(); spec.sources.len()];
    recursive_interchange(m, &spec.sources, &spec.targets, &none)
}

/// As `interchange`, with source `j` run under `sub[j]` as well.
pub fn recursive_interchange(
    m: &CausalModel,
    sources: &[Setting],
    targets: &[Vec<VarId>],
    sub: &[Setting],
) -> Result<Setting> {
    check_targets(m, sources.len(), targets)?;
    if sub.len() != sources.len() {
        return Err(Error::TypeMismatch(format!("{} nested interventions for {} sources", sub.len(), sources.len())));
    }
    let mut out = Setting::new();
    for ((s, t), i) in sources.iter().zip(targets).zip(sub) {
        let w = m.solve_unique(&s.overwrite(i))?;
        for &v in t {
            out.insert(v, w[v].clone());
        }
    }
    Ok(out)
}

/// Receivers take the values they would have if the senders came from
/// `source` and the frozen variables from `base`; the model then runs on
/// `base` with the receivers patched. Returns the output values.
pub fn path_patch(
    m: &CausalModel,
    base: &Setting,
    source: &Setting,
    senders: &[VarId],
    receivers: &[VarId],
    freeze: &[VarId],
    outputs: &[VarId],
) -> Result<Vec<Value>> {
    let patch = path_patch_intervention(m, base, source, senders, receivers, freeze)?;
    let w = m.solve_unique(&base.overwrite(&patch))?;
    Ok(outputs.iter().map(|&v| w[v].clone()).collect())
}

/// The receiver patch alone.
pub fn path_patch_intervention(
    m: &CausalModel,
    base: &Setting,
    source: &Setting,
    senders: &[VarId],
    receivers: &[VarId],
    freeze: &[VarId],
) -> Result<Setting> {
    let mut per_receiver = Vec::with_capacity(receivers.len());
    for &r in receivers {
        let frozen: Vec<VarId> = freeze.iter().copied().filter(|&f| f != r && !senders.contains(&f)).collect();
        let spec = InterchangeSpec { sources: vec![source.clone(), base.clone()], targets: vec![senders.to_vec(), frozen] };
        per_receiver.push(interchange(m, &spec)?);
    }
    let bases = vec![base.clone(); receivers.len()];
    let targets: Vec<Vec<VarId>> = receivers.iter().map(|&r| vec![r]).collect();
    recursive_interchange(m, &bases, &targets, &per_receiver)
}

/// High variables of `b` that carry the low inputs unchanged, by name.
fn check_input_preserving(m: &CausalModel, b: &Bijection, samples: usize) -> Result<Vec<(VarId, VarId)>> {
    let mut pairs = Vec::new();
    for v in m.inputs() {
        let name = m.sig().name(v);
        let x = b.high.var(name).ok_or_else(|| Error::NotInputPreserving(format!("no feature named `{name}`")))?;
        pairs.push((v, x));
    }
    let mut rng = <rand_chacha::ChaCha20Rng as rand::SeedableRng>::seed_from_u64(0);
    for _ in 0..samples {
        let w = crate::abstraction::random_world(&b.low, &mut rng);
        let h = (b.forward)(&w);
        for &(v, x) in &pairs {
            if !w[v].approx_eq(&h[x], 1e-9) {
                return Err(Error::NotInputPreserving(m.sig().name(v).to_string()));
            }
        }
    }
    Ok(pairs)
}

/// Interchange in the feature space of `b`: feature set `feature_targets[j]`
/// takes its value under source `j`, all other features (and the inputs) are
/// computed from the current setting as usual.
pub fn distributed_interchange(
    m: &CausalModel,
    b: Arc<Bijection>,
    sources: &[Setting],
    feature_targets: &[Vec<VarId>],
) -> Result<Interventional> {
    if sources.len() != feature_targets.len() {
        return Err(Error::TypeMismatch(format!("{} sources for {} feature sets", sources.len(), feature_targets.len())));
    }
    let pairs = check_input_preserving(m, &b, crate::abstraction::INVERSE_SAMPLES)?;
    let mut owner: Vec<Option<usize>> = vec![None; b.high.len()];
    for (j, t) in feature_targets.iter().enumerate() {
        for &x in t {
            if pairs.iter().any(|&(_, y)| y == x) {
                return Err(Error::NotInputPreserving(format!("input feature `{}` is a target", b.high.name(x))));
            }
            if x >= b.high.len() || owner[x].is_some() {
                return Err(Error::TypeMismatch(format!("feature #{x} is unknown or targeted twice")));
            }
            owner[x] = Some(j);
        }
    }
    let sig = m.sig().clone();
    let sources = sources.to_vec();
    let label = format!("distributed interchange via {}", b.label);
    let touched: Vec<bool> =
        (0..b.blocks.len()).map(|k| b.blocks[k].1.iter().any(|&x| owner[x].is_some())).collect();
    Ok(Interventional::new((0..m.len()).collect(), label, move |old| {
        let base = CausalModel::from_arcs(sig.clone(), old.to_vec())?;
        // Features of each source run, read through the old mechanisms.
        let mut src_features: Vec<World> = Vec::with_capacity(sources.len());
        for s in &sources {
            let w = base.solve_unique(s)?;
            let fw: World = (0..w.len()).map(|v| old[v].eval(&w, sig.name(v))).collect::<Result<_>>()?;
            src_features.push((b.forward)(&fw));
        }
        let src_features = Arc::new(src_features);
        let mut out = Vec::with_capacity(old.len());
        for v in 0..old.len() {
            let k = b.low_block(v);
            if !touched[k] {
                out.push(old[v].as_ref().clone());
                continue;
            }
            let members = b.blocks[k].0.clone();
            let mut parents: Vec<VarId> = members.iter().flat_map(|&u| old[u].parents()).collect();
            parents.sort_unstable();
            parents.dedup();
            let olds: Vec<Arc<crate::model::Mechanism>> = members.iter().map(|&u| old[u].clone()).collect();
            let b = b.clone();
            let sig = sig.clone();
            let owner = owner.clone();
            let src = src_features.clone();
            out.push(Mechanism::native(parents, format!("distributed {}", sig.name(v)), move |t| {
                let mut u = t.to_vec();
                for (i, &mv) in members.iter().enumerate() {
                    u[mv] = olds[i].eval(t, sig.name(mv))?;
                }
                let mut h = (b.forward)(&u);
                for &x in &b.blocks[k].1 {
                    if let Some(j) = owner[x] {
                        h[x] = src[j][x].clone();
                    }
                }
                Ok((b.inverse)(&h)[v].clone())
            }));
        }
        Ok(out)
    }))
}

/// A low input paired with the high input it stands for.
#[derive(Clone, Debug)]
pub struct InputPair {
    pub low: Setting,
    pub high: Setting,
}

/// Alignment whose maps for the cells listed in `induced` are read off the
/// runs of each input pair; the other cells use the given maps.
pub fn build_interchange_alignment(
    low: &CausalModel,
    high: &CausalModel,
    cells: Vec<Vec<VarId>>,
    bot: Vec<VarId>,
    fixed_maps: Vec<Option<CellMap>>,
    inputs: &[InputPair],
) -> Result<Alignment> {
    let n = high.len();
    let mut runs: Vec<(World, World)> = inputs
        .par_iter()
        .map(|p| Ok((low.solve_unique(&p.low)?, high.solve_unique(&p.high)?)))
        .collect::<Result<_>>()?;
    runs.sort_by(|a, b| low.sig().cmp_worlds(&a.0, &b.0).then_with(|| high.sig().cmp_worlds(&a.1, &b.1)));
    let mut maps = Vec::with_capacity(n);
    for x in 0..n {
        if let Some(Some(m)) = fixed_maps.get(x) {
            maps.push(m.clone());
            continue;
        }
        let mut seen: HashMap<Vec<Value>, Value> = HashMap::new();
        let mut rows = Vec::new();
        for (lw, hw) in &runs {
            let key: Vec<Value> = cells[x].iter().map(|&v| lw[v].clone()).collect();
            match seen.get(&key) {
                Some(prev) if *prev != hw[x] => {
                    return Err(Error::AlignmentConflict {
                        cell: high.sig().name(x).to_string(),
                        value: Value::tuple(key).to_string(),
                        first: prev.to_string(),
                        second: hw[x].to_string(),
                    });
                }
                Some(_) => {}
                None => {
                    seen.insert(key.clone(), hw[x].clone());
                    rows.push((key, hw[x].clone()));
                }
            }
        }
        maps.push(CellMap::Table { table: Arc::new(MapTable::new(rows)), induced: true });
    }
    Alignment::new(low.sig().clone(), high.sig().clone(), cells, bot, maps)
}

/// Every interchange intervention over `inputs`: a base input alone, or a
/// base with any non-empty set of patched cells, each from its own source.
/// Items are indexed lazily.
pub struct InterchangeSuite {
    inputs: Vec<Setting>,
    cells: Vec<Vec<VarId>>,
    /// cell_values[c][s]: values of cell `c` when the model runs on input `s`.
    cell_values: Vec<Vec<Vec<Value>>>,
    /// Non-empty subsets of cells, smallest first, with the offset of their first item.
    blocks: Vec<(Vec<usize>, usize)>,
    len: usize,
}

impl InterchangeSuite {
    pub fn new(low: &CausalModel, inputs: Vec<Setting>, cells: Vec<Vec<VarId>>) -> Result<InterchangeSuite> {
        let runs: Vec<World> = inputs.par_iter().map(|s| low.solve_unique(s)).collect::<Result<_>>()?;
        let cell_values = cells
            .iter()
            .map(|c| runs.iter().map(|w| c.iter().map(|&v| w[v].clone()).collect()).collect())
            .collect();
        let k = inputs.len();
        let mut subsets: Vec<Vec<usize>> = (1..(1usize << cells.len()))
            .map(|mask| (0..cells.len()).filter(|c| mask & (1 << c) != 0).collect())
            .collect();
        subsets.sort_by_key(|s: &Vec<usize>| (s.len(), s.clone()));
        let mut len = k;
        let mut blocks = Vec::with_capacity(subsets.len());
        for s in subsets {
            blocks.push((s.clone(), len));
            len += k.pow(s.len() as u32 + 1);
        }
        Ok(InterchangeSuite { inputs, cells, cell_values, blocks, len })
    }

    pub fn inputs(&self) -> &[Setting] {
        &self.inputs
    }

    /// Base input, and the source input for each patched cell.
    pub fn decode(&self, k: usize) -> (usize, Vec<(usize, usize)>) {
        let n = self.inputs.len();
        if k < n {
            return (k, Vec::new());
        }
        let (cells, start) = self
            .blocks
            .iter()
            .rev()
            .find(|(_, start)| *start <= k)
            .unwrap_or_else(|| unreachable!("index below the first block is a plain input"));
        let mut r = k - start;
        let mut patches = Vec::with_capacity(cells.len());
        for &c in cells.iter().rev() {
            patches.push((c, r % n));
            r /= n;
        }
        patches.reverse();
        (r, patches)
    }
}

impl Suite for InterchangeSuite {
    fn len(&self) -> usize {
        self.len
    }

    fn item(&self, k: usize) -> Intervention {
        let (base, patches) = self.decode(k);
        let mut s = self.inputs[base].clone();
        for (c, src) in patches {
            for (&v, val) in self.cells[c].iter().zip(&self.cell_values[c][src]) {
                s.insert(v, val.clone());
            }
        }
        Intervention::Hard(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IiaReport {
    pub iia: f64,
    pub suite_size: usize,
}

impl IiaReport {
    pub fn to_json(&self) -> Json {
        json!({"iia": self.iia, "suite_size": self.suite_size})
    }
}

fn project_set(sig: &Signature, ws: &[World], outs: &[VarId]) -> Vec<World> {
    let mut p: Vec<World> = ws.iter().map(|w| outs.iter().map(|&v| w[v].clone()).collect()).collect();
    p.sort_by(|a, b| {
        a.iter().zip(b).zip(outs).map(|((x, y), &v)| sig.cmp_values(v, x, y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    });
    p.dedup();
    p
}

/// Weighted share of suite items whose mapped low outputs match the high outputs.
pub fn iia(
    low: &CausalModel,
    high: &CausalModel,
    to: &TauOmega,
    suite: &dyn Suite,
    outputs: &[VarId],
    tol: f64,
) -> Result<IiaReport> {
    let cache = HighCache::new(high);
    let scored: Vec<Result<(f64, f64)>> = (0..suite.len())
        .into_par_iter()
        .map(|k| {
            let w = suite.weight(k);
            let ev = evaluate_item(low, to, &cache, &suite.item(k))?;
            let lows: Option<Vec<World>> = ev.tau_low.iter().cloned().collect();
            let hit = match lows {
                Some(ls) => {
                    let a = project_set(&to.high, &ls, outputs);
                    let b = project_set(&to.high, &ev.high, outputs);
                    a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| worlds_approx_eq(x, y, tol))
                }
                None => false,
            };
            Ok((w, if hit { w } else { 0.0 }))
        })
        .collect();
    let (mut total, mut good) = (0.0, 0.0);
    for s in scored {
        let (w, g) = s?;
        total += w;
        good += g;
    }
    let iia = if total > 0.0 { good / total } else { 0.0 };
    Ok(IiaReport { iia, suite_size: suite.len() })
}

/// The projection of a world onto `vars`, as a setting.
pub fn restrict(w: &[Value], vars: &[VarId]) -> Setting {
    project_world(w, vars)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{lit, op, var, Op};
    use crate::value::ValueRange;

    /// X → Z → Y with identity links.
    fn chain() -> CausalModel {
        let sig = Arc::new(
            Signature::new(vec![("X", ValueRange::ints(0, 3)), ("Z", ValueRange::ints(0, 3)), ("Y", ValueRange::ints(0, 6))])
                .unwrap(),
        );
        CausalModel::new(
            sig,
            vec![
                Mechanism::Const(Value::from(0.0)),
                Mechanism::Expr(var(0)),
                Mechanism::Expr(op(Op::Add, vec![var(1), var(0)])),
            ],
        )
        .unwrap()
    }

    fn x(v: f64) -> Setting {
        Setting::from_pairs([(0, Value::from(v))])
    }

    #[test]
    fn source_equal_to_base_changes_nothing() {
        let m = chain();
        let i = interchange(&m, &InterchangeSpec { sources: vec![x(2.0)], targets: vec![vec![1]] }).unwrap();
        assert_eq!(m.solve_with(&x(2.0).overwrite(&i)).unwrap(), m.solve_with(&x(2.0)).unwrap());
    }

    #[test]
    fn inputs_cannot_be_targets() {
        let m = chain();
        assert!(interchange(&m, &InterchangeSpec { sources: vec![x(1.0)], targets: vec![vec![0]] }).is_err());
    }

    #[test]
    fn nested_interchange_matches_two_pass_evaluation() {
        let m = chain();
        let inner = interchange(&m, &InterchangeSpec { sources: vec![x(3.0)], targets: vec![vec![1]] }).unwrap();
        let outer = recursive_interchange(&m, &[x(1.0)], &[vec![2]], &[inner]).unwrap();
        // Y under X=1 with Z taken from X=3 is 4.
        assert_eq!(outer, Setting::from_pairs([(2, Value::from(4.0))]));
        let w = m.solve_unique(&x(0.0).overwrite(&outer)).unwrap();
        assert_eq!(w[2], Value::from(4.0));
    }

    #[test]
    fn suite_indexing_covers_every_combination() {
        let m = chain();
        let inputs: Vec<Setting> = (0..3).map(|v| x(v as f64)).collect();
        let s = InterchangeSuite::new(&m, inputs, vec![vec![1]]).unwrap();
        assert_eq!(s.len(), 3 + 9);
        assert_eq!(s.decode(3), (0, vec![(0, 0)]));
        assert_eq!(s.decode(11), (2, vec![(0, 2)]));
    }

    #[test]
    fn conflicting_runs_are_reported() {
        // Two inputs reach the same hidden value but disagree at the high level.
        let low = chain();
        let hs = Arc::new(Signature::new(vec![("X", ValueRange::ints(0, 3)), ("Z", ValueRange::bools()), ("Y", ValueRange::ints(0, 6))]).unwrap());
        let high = CausalModel::new(
            hs,
            vec![
                Mechanism::Const(Value::from(0.0)),
                Mechanism::Expr(op(Op::Gt, vec![var(0), lit(0.0)])),
                Mechanism::Expr(op(Op::Add, vec![var(0), var(0)])),
            ],
        )
        .unwrap();
        let pairs: Vec<InputPair> = [(0.0, 1.0), (0.0, 0.0)].iter().map(|&(l, h)| InputPair { low: x(l), high: x(h) }).collect();
        let e = build_interchange_alignment(
            &low,
            &high,
            vec![vec![0], vec![1], vec![2]],
            vec![],
            vec![Some(CellMap::Identity), None, Some(CellMap::Identity)],
            &pairs,
        );
        assert!(matches!(e, Err(Error::AlignmentConflict { .. })), "{e:?}");
    }
}
