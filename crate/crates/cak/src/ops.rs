//! Marginalization, variable merge and value merge, with the checks that
//! tell when each one yields an abstraction.

use std::collections::HashMap;
use std::sync::Arc;

use crate::abstraction::{constructive_translate, Alignment, CellMap};
use crate::error::{Error, Result};
use crate::expr::{Expr, Table};
use crate::model::{budget, for_each_assignment, CausalModel, Mechanism};
use crate::value::{Setting, Sig, Signature, Value, ValueRange, VarId, World};

/// Drops `drop` from the model; every other variable keeps its values.
pub fn marginalize(m: &CausalModel, drop: &[VarId]) -> Result<(CausalModel, Arc<Alignment>)> {
    let sig = m.sig();
    let kept: Vec<VarId> = (0..sig.len()).filter(|v| !drop.contains(v)).collect();
    let high = Arc::new(Signature::new(kept.iter().map(|&v| (sig.name(v).to_string(), sig.range(v).clone())).collect())?);
    let cells = kept.iter().map(|&v| vec![v]).collect();
    let a = Arc::new(Alignment::new(sig.clone(), high, cells, drop.to_vec(), vec![CellMap::Identity; kept.len()])?);
    Ok((constructive_translate(m, a.clone())?, a))
}

/// Range of a variable holding the joint value of `cell`.
fn merged_range(sig: &Signature, cell: &[VarId]) -> Result<ValueRange> {
    if cell.len() == 1 {
        return Ok(sig.range(cell[0]).clone());
    }
    if cell.iter().all(|&v| matches!(sig.range(v), ValueRange::Real(1))) {
        return Ok(ValueRange::Real(cell.len()));
    }
    if !cell.iter().all(|&v| sig.is_enum(v)) {
        return Err(Error::TypeMismatch(format!(
            "cannot merge {:?}: mix of enumerated and vector-valued variables",
            cell.iter().map(|&v| sig.name(v)).collect::<Vec<_>>()
        )));
    }
    let size = sig.space_size(cell)?;
    if size > budget() as u128 {
        return Err(Error::BudgetExceeded { size, budget: budget() });
    }
    let domains: Vec<&[Value]> = cell.iter().map(|&v| sig.enum_values(v)).collect::<Result<_>>()?;
    let mut vals = Vec::with_capacity(size as usize);
    for_each_assignment(&domains, |t| {
        vals.push(Value::tuple(t.to_vec()));
        Ok(true)
    })?;
    Ok(ValueRange::Enum(vals))
}

/// Groups the variables into named cells that jointly cover the model.
pub fn variable_merge(m: &CausalModel, partition: &[(String, Vec<VarId>)]) -> Result<(CausalModel, Arc<Alignment>)> {
    let sig = m.sig();
    let vars = partition
        .iter()
        .map(|(name, cell)| {
            if cell.iter().any(|&v| v >= sig.len()) {
                return Err(Error::PartitionError(format!("cell `{name}` names an unknown variable")));
            }
            Ok((name.clone(), merged_range(sig, cell)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let high = Arc::new(Signature::new(vars)?);
    let cells: Vec<Vec<VarId>> = partition.iter().map(|(_, c)| c.clone()).collect();
    let a = Arc::new(Alignment::new(sig.clone(), high, cells, Vec::new(), vec![CellMap::Identity; partition.len()])?);
    Ok((constructive_translate(m, a.clone())?, a))
}

/// New ranges and value maps for some variables; the rest keep theirs.
#[derive(Clone, Debug, Default)]
pub struct ValueMergeFamily {
    pub maps: Vec<(VarId, CellMap, ValueRange)>,
    /// Finite value lists for real-valued variables whose maps must be inverted.
    pub candidates: Vec<(VarId, Vec<Value>)>,
}

impl ValueMergeFamily {
    fn entry(&self, v: VarId) -> Option<&(VarId, CellMap, ValueRange)> {
        self.maps.iter().find(|(x, _, _)| *x == v)
    }

    fn candidates_of(&self, v: VarId) -> Option<&[Value]> {
        self.candidates.iter().find(|(x, _)| *x == v).map(|(_, c)| c.as_slice())
    }

    pub fn alignment(&self, sig: &Sig) -> Result<Alignment> {
        let n = sig.len();
        let mut ranges = Vec::with_capacity(n);
        let mut maps = Vec::with_capacity(n);
        for v in 0..n {
            match self.entry(v) {
                Some((_, map, range)) => {
                    ranges.push((sig.name(v).to_string(), range.clone()));
                    maps.push(map.clone());
                }
                None => {
                    ranges.push((sig.name(v).to_string(), sig.range(v).clone()));
                    maps.push(CellMap::Identity);
                }
            }
        }
        let high = Arc::new(Signature::new(ranges)?);
        let mut a = Alignment::new(sig.clone(), high, (0..n).map(|v| vec![v]).collect(), Vec::new(), maps)?;
        for (v, c) in &self.candidates {
            a = a.with_candidates(*v, c.iter().map(|x| vec![x.clone()]).collect());
        }
        Ok(a)
    }
}

pub fn value_merge(m: &CausalModel, d: &ValueMergeFamily) -> Result<(CausalModel, Arc<Alignment>)> {
    let a = Arc::new(d.alignment(m.sig())?);
    a.check_surjective()?;
    Ok((constructive_translate(m, a.clone())?, a))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViabilityReport {
    pub viable: bool,
    pub pairs_checked: usize,
    /// Two interventions differing in one value with equal images whose
    /// solution sets map to different sets.
    pub witness: Option<(Setting, Setting)>,
}

/// Values a variable can be intervened to during the viability check.
fn viability_domain<'a>(m: &'a CausalModel, d: &'a ValueMergeFamily, v: VarId) -> Result<&'a [Value]> {
    match d.candidates_of(v) {
        Some(c) => Ok(c),
        None => m.sig().enum_values(v),
    }
}

/// Every partial setting over the model, with candidate lists standing in for real ranges.
pub fn all_partial_settings(m: &CausalModel, d: &ValueMergeFamily) -> Result<Vec<Setting>> {
    let n = m.len();
    let mut options: Vec<Vec<Value>> = Vec::with_capacity(n);
    for v in 0..n {
        let mut o = vec![Value::sym("\u{0}unset")];
        o.extend(viability_domain(m, d, v)?.iter().cloned());
        options.push(o);
    }
    let size = options.iter().fold(1u128, |acc, o| acc.saturating_mul(o.len() as u128));
    if size > budget() as u128 {
        return Err(Error::BudgetExceeded { size, budget: budget() });
    }
    let domains: Vec<&[Value]> = options.iter().map(|o| o.as_slice()).collect();
    let unset = Value::sym("\u{0}unset");
    let mut out = Vec::with_capacity(size as usize);
    for_each_assignment(&domains, |t| {
        out.push(t.iter().enumerate().filter(|(_, x)| **x != unset).map(|(v, x)| (v, x.clone())).collect());
        Ok(true)
    })?;
    Ok(out)
}

/// Checks that intervening to two values with the same image never changes
/// the image of the solution set. `bases` defaults to every partial setting.
pub fn value_merge_viable(m: &CausalModel, d: &ValueMergeFamily, bases: Option<&[Setting]>) -> Result<ViabilityReport> {
    let a = d.alignment(m.sig())?;
    let owned;
    let bases = match bases {
        Some(b) => b,
        None => {
            owned = all_partial_settings(m, d)?;
            &owned
        }
    };
    let mut cache: HashMap<Setting, Option<Vec<World>>> = HashMap::new();
    let mut image = |s: &Setting| -> Result<Option<Vec<World>>> {
        if let Some(hit) = cache.get(s) {
            return Ok(hit.clone());
        }
        let sols = m.solve_with(s)?;
        let mut mapped: Option<Vec<World>> = sols.iter().map(|w| a.tau(w)).collect();
        if let Some(ws) = mapped.as_mut() {
            a.high.sort_worlds(ws);
            ws.dedup();
        }
        cache.insert(s.clone(), mapped.clone());
        Ok(mapped)
    };
    let mut pairs = 0;
    for i in bases {
        for (v, val) in i.iter() {
            if d.entry(v).is_none() {
                continue;
            }
            let Some(target) = a.map_cell(v, std::slice::from_ref(val)) else { continue };
            for alt in viability_domain(m, d, v)? {
                if alt == val || a.map_cell(v, std::slice::from_ref(alt)).as_ref() != Some(&target) {
                    continue;
                }
                let mut j = i.clone();
                j.insert(v, alt.clone());
                pairs += 1;
                let (p, q) = (image(i)?, image(&j)?);
                if p.is_none() || q.is_none() || p != q {
                    return Ok(ViabilityReport { viable: false, pairs_checked: pairs, witness: Some((i.clone(), j)) });
                }
            }
        }
    }
    Ok(ViabilityReport { viable: true, pairs_checked: pairs, witness: None })
}

/// True when every intervention in `domain` leaves exactly one solution.
pub fn has_unique_solutions(m: &CausalModel, domain: &[Setting]) -> Result<bool> {
    for i in domain {
        if m.solve_with(i)?.len() != 1 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// An alignment split into a marginalization, a variable merge and a value
/// merge, applied in that order.
#[derive(Clone, Debug)]
pub struct DecompositionPipeline {
    pub marginalize: Vec<VarId>,
    /// Cells over the marginalized model's variables, named after the high variables.
    pub merge: Vec<(String, Vec<VarId>)>,
    pub values: ValueMergeFamily,
    source: Arc<Alignment>,
}

/// The three models and alignments a pipeline produces.
pub struct PipelineRun {
    pub models: Vec<CausalModel>,
    pub alignments: Vec<Arc<Alignment>>,
}

impl PipelineRun {
    pub fn output(&self) -> &CausalModel {
        self.models.last().unwrap_or_else(|| unreachable!("a run always has three stages"))
    }
}

pub fn decompose_alignment(a: Arc<Alignment>) -> DecompositionPipeline {
    let kept: Vec<VarId> = (0..a.low.len()).filter(|v| !a.bot.contains(v)).collect();
    let pos: HashMap<VarId, VarId> = kept.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let merge = (0..a.high.len())
        .map(|x| (a.high.name(x).to_string(), a.cells[x].iter().map(|v| pos[v]).collect()))
        .collect();
    let mut maps = Vec::new();
    let mut candidates = Vec::new();
    for x in 0..a.high.len() {
        let map = if a.cells[x].len() > 1 { CellMap::Unpack(Arc::new(a.maps[x].clone())) } else { a.maps[x].clone() };
        maps.push((x, map, a.high.range(x).clone()));
        if let Some(c) = &a.candidates[x] {
            let vals = c
                .iter()
                .map(|t| if t.len() == 1 { t[0].clone() } else { Value::tuple(t.clone()) })
                .collect();
            candidates.push((x, vals));
        }
    }
    DecompositionPipeline {
        marginalize: a.bot.clone(),
        merge,
        values: ValueMergeFamily { maps, candidates },
        source: a,
    }
}

impl DecompositionPipeline {
    pub fn run(&self, low: &CausalModel) -> Result<PipelineRun> {
        let (m1, a1) = marginalize(low, &self.marginalize)?;
        let (m2, a2) = variable_merge(&m1, &self.merge)?;
        let a3 = Arc::new(self.values.alignment(m2.sig())?);
        let m3 = constructive_translate(&m2, a3.clone())?;
        Ok(PipelineRun { models: vec![m1, m2, m3], alignments: vec![a1, a2, a3] })
    }

    /// τ of the three stages composed, without building any model.
    pub fn tau(&self, w: &[Value]) -> Option<World> {
        let w1: World = (0..w.len()).filter(|v| !self.marginalize.contains(v)).map(|v| w[v].clone()).collect();
        let w2: World = self
            .merge
            .iter()
            .map(|(_, c)| if c.len() == 1 { w1[c[0]].clone() } else { Value::tuple(c.iter().map(|&v| w1[v].clone()).collect()) })
            .collect();
        let mut out = Vec::with_capacity(w2.len());
        for (x, map, _) in &self.values.maps {
            let v = map.apply(std::slice::from_ref(&w2[*x]))?;
            if !self.source.high.contains(*x, &v) {
                return None;
            }
            out.push(v);
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{lit, op, var, Op};
    use crate::model::Mechanism;

    fn chain() -> CausalModel {
        let sig = Arc::new(
            Signature::new(vec![("A", ValueRange::ints(0, 2)), ("B", ValueRange::ints(0, 3)), ("C", ValueRange::ints(0, 4))])
                .unwrap(),
        );
        CausalModel::new(
            sig,
            vec![
                Mechanism::Const(Value::from(1.0)),
                Mechanism::Expr(op(Op::Add, vec![var(0), lit(1.0)])),
                Mechanism::Expr(op(Op::Add, vec![var(1), lit(1.0)])),
            ],
        )
        .unwrap()
    }

    #[test]
    fn marginalizing_nothing_keeps_solutions() {
        let m = chain();
        let (h, _) = marginalize(&m, &[]).unwrap();
        for s in all_partial_settings(&m, &ValueMergeFamily::default()).unwrap() {
            assert_eq!(m.solve_with(&s).unwrap(), h.solve_with(&s).unwrap());
        }
    }

    #[test]
    fn marginalized_chain_composes_mechanisms() {
        let m = chain();
        let (h, _) = marginalize(&m, &[1]).unwrap();
        let s = Setting::from_pairs([(0, Value::from(2.0))]);
        assert_eq!(h.solve_with(&s).unwrap(), vec![vec![Value::from(2.0), Value::from(4.0)]]);
    }

    #[test]
    fn singleton_merge_is_isomorphic() {
        let m = chain();
        let part: Vec<(String, Vec<VarId>)> = (0..3).map(|v| (m.sig().name(v).to_string(), vec![v])).collect();
        let (h, _) = variable_merge(&m, &part).unwrap();
        assert_eq!(h.solve().unwrap(), m.solve().unwrap());
    }

    #[test]
    fn identity_family_is_viable() {
        let m = chain();
        let d = ValueMergeFamily { maps: vec![(1, CellMap::Identity, ValueRange::ints(0, 3))], candidates: vec![] };
        assert!(value_merge_viable(&m, &d, None).unwrap().viable);
    }
}

/// Replaces every mechanism that is not already a constant or expression by
/// a lookup table over its syntactic parents. Needs a finite signature.
pub fn tabulate(m: &CausalModel) -> Result<CausalModel> {
    let sig = m.sig();
    let mut mechs = Vec::with_capacity(m.len());
    for v in 0..m.len() {
        let mech = m.mechanism(v);
        if matches!(mech.as_ref(), Mechanism::Const(_) | Mechanism::Expr(_)) {
            mechs.push(mech.clone());
            continue;
        }
        let parents = mech.syntactic_parents();
        let size = sig.space_size(&parents)?;
        if size > budget() as u128 {
            return Err(Error::BudgetExceeded { size, budget: budget() });
        }
        let domains: Vec<&[Value]> = parents.iter().map(|&p| sig.enum_values(p)).collect::<Result<_>>()?;
        let mut world = sig.default_world();
        let mut rows = Vec::with_capacity(size as usize);
        for_each_assignment(&domains, |vals| {
            for (&p, val) in parents.iter().zip(vals) {
                world[p] = val.clone();
            }
            let out = mech.eval(&world, sig.name(v))?;
            rows.push((parents.iter().copied().zip(vals.iter().cloned()).collect(), out));
            Ok(true)
        })?;
        let default = sig.default_value(v);
        let e = if parents.is_empty() {
            Mechanism::Const(rows.pop().map(|r| r.1).unwrap_or(default))
        } else {
            Mechanism::Expr(Expr::Table(Arc::new(Table::new(rows, default))))
        };
        mechs.push(Arc::new(e));
    }
    CausalModel::from_arcs(sig.clone(), mechs)
}
