//! Normal forms of intervention sequences and checks of the two laws that
//! make a family of interventions behave like hard interventions.

use std::collections::HashMap;
use std::fmt::Debug;
use std::hash::Hash;

use crate::error::{Error, Result};
use crate::intervene::{apply, compose, Intervention};
use crate::model::{inverse_project, CausalModel};
use crate::value::{Setting, Value, VarId};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Atom<K, P> {
    pub key: K,
    pub payload: P,
}

pub fn atom<K, P>(key: K, payload: P) -> Atom<K, P> {
    Atom { key, payload }
}

/// Total order on atom keys. Keys missing from an explicit list sort after
/// the listed ones, by their own order.
#[derive(Clone, Debug)]
pub enum ClassOrder<K> {
    Natural,
    Explicit(Vec<K>),
}

impl<K: Ord + Eq + Hash + Clone> ClassOrder<K> {
    fn sort_key(&self, rank: &HashMap<K, usize>, k: &K) -> (usize, K) {
        match self {
            ClassOrder::Natural => (0, k.clone()),
            ClassOrder::Explicit(_) => (rank.get(k).copied().unwrap_or(usize::MAX), k.clone()),
        }
    }

    fn ranks(&self) -> HashMap<K, usize> {
        match self {
            ClassOrder::Natural => HashMap::new(),
            ClassOrder::Explicit(keys) => keys.iter().enumerate().map(|(i, k)| (k.clone(), i)).collect(),
        }
    }
}

/// Drops every atom that has an equivalent atom to its right.
pub fn collapse<K: Eq + Hash + Clone, P: Clone>(s: &[Atom<K, P>]) -> Vec<Atom<K, P>> {
    let mut last: HashMap<&K, usize> = HashMap::new();
    for (i, a) in s.iter().enumerate() {
        last.insert(&a.key, i);
    }
    s.iter().enumerate().filter(|(i, a)| last[&a.key] == *i).map(|(_, a)| a.clone()).collect()
}

pub fn sort_seq<K: Ord + Eq + Hash + Clone + Debug, P: Clone>(
    s: &[Atom<K, P>],
    o: &ClassOrder<K>,
) -> Result<Vec<Atom<K, P>>> {
    let mut seen = std::collections::HashSet::new();
    for a in s {
        if !seen.insert(&a.key) {
            return Err(Error::DuplicateClass(format!("{:?}", a.key)));
        }
    }
    let rank = o.ranks();
    let mut out = s.to_vec();
    out.sort_by(|a, b| o.sort_key(&rank, &a.key).cmp(&o.sort_key(&rank, &b.key)));
    Ok(out)
}

pub fn normal_form<K: Ord + Eq + Hash + Clone + Debug, P: Clone>(
    s: &[Atom<K, P>],
    o: &ClassOrder<K>,
) -> Vec<Atom<K, P>> {
    let c = collapse(s);
    sort_seq(&c, o).unwrap_or_else(|_| unreachable!("collapse leaves one atom per class"))
}

/// Right-biased overwrite composition of hard atoms.
pub fn overwrite_composition(s: &[Atom<VarId, Value>]) -> Setting {
    let mut out = Setting::new();
    for a in s {
        out.insert(a.key, a.payload.clone());
    }
    out
}

/// Semi-lattice order on hard interventions: `p ≤ q` iff `q ∘ p = q`.
pub fn leq(p: &Setting, q: &Setting) -> bool {
    match compose(&Intervention::Hard(q.clone()), &Intervention::Hard(p.clone())) {
        Intervention::Hard(r) => &r == q,
        _ => false,
    }
}

/// `leq` checked extensionally: `q ∘ p` and `q` give the same solutions on every model.
pub fn leq_extensional(p: &Setting, q: &Setting, suite: &[CausalModel]) -> Result<bool> {
    let qp = compose(&Intervention::Hard(q.clone()), &Intervention::Hard(p.clone()));
    let q = Intervention::Hard(q.clone());
    for m in suite {
        if !same_action(m, &qp, &q)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Two interventions act the same on `m` when the intervened models have
/// equal solution sets under every hard intervention on their inputs, or
/// when `m` has real-valued inputs, under the null intervention alone.
pub fn same_action(m: &CausalModel, a: &Intervention, b: &Intervention) -> Result<bool> {
    let ma = apply(m, a)?;
    let mb = apply(m, b)?;
    let inputs = m.inputs();
    let contexts: Vec<Setting> = if inputs.iter().all(|&v| m.sig().is_enum(v)) {
        let sub = crate::value::Signature::new(
            inputs.iter().map(|&v| (m.sig().name(v).to_string(), m.sig().range(v).clone())).collect(),
        )?;
        inverse_project(&Setting::new(), &sub)?
            .into_iter()
            .map(|w| inputs.iter().copied().zip(w).collect())
            .collect()
    } else {
        vec![Setting::new()]
    };
    // Inputs targeted by either side keep their intervened mechanism.
    let ta = a.targets();
    let tb = b.targets();
    for ctx in contexts {
        let ctx: Setting = ctx.iter().filter(|(v, _)| !ta.contains(v) && !tb.contains(v)).map(|(v, x)| (v, x.clone())).collect();
        if ma.solve_with(&ctx)? != mb.solve_with(&ctx)? {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LawFailure {
    pub law: &'static str,
    pub first: usize,
    pub second: usize,
    pub model: usize,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct AlgebraReport {
    pub pairs_checked: usize,
    pub failures: Vec<LawFailure>,
}

impl AlgebraReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks commutativity across distinct targets and left-annihilativity on
/// equal targets for every ordered pair of atoms (an atom with itself
/// included), on every model of the suite.
pub fn check_intervention_algebra(atoms: &[(VarId, Intervention)], suite: &[CausalModel]) -> Result<AlgebraReport> {
    let mut report = AlgebraReport::default();
    for (i, (ki, ai)) in atoms.iter().enumerate() {
        for (j, (kj, aj)) in atoms.iter().enumerate() {
            if ki != kj && j <= i {
                continue;
            }
            report.pairs_checked += 1;
            let ij = compose(ai, aj);
            if ki == kj {
                // Symbolic check first; fall back to the suite when it is inconclusive.
                if ij == *aj {
                    continue;
                }
                for (mi, m) in suite.iter().enumerate() {
                    if !same_action(m, &ij, aj)? {
                        report.failures.push(LawFailure { law: "left-annihilative", first: i, second: j, model: mi });
                        break;
                    }
                }
            } else {
                let ji = compose(aj, ai);
                if ij == ji {
                    continue;
                }
                for (mi, m) in suite.iter().enumerate() {
                    if !same_action(m, &ij, &ji)? {
                        report.failures.push(LawFailure { law: "commutative", first: i, second: j, model: mi });
                        break;
                    }
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(k: usize, v: f64) -> Atom<usize, Value> {
        atom(k, Value::from(v))
    }

    #[test]
    fn collapse_keeps_rightmost() {
        assert_eq!(collapse(&[a(0, 1.0), a(1, 2.0), a(0, 3.0)]), vec![a(1, 2.0), a(0, 3.0)]);
        assert_eq!(collapse(&[a(0, 1.0), a(0, 1.0), a(0, 2.0)]), vec![a(0, 2.0)]);
        assert!(collapse::<usize, Value>(&[]).is_empty());
    }

    #[test]
    fn sort_rejects_duplicates() {
        assert!(matches!(sort_seq(&[a(0, 1.0), a(0, 2.0)], &ClassOrder::Natural), Err(Error::DuplicateClass(_))));
        let s = sort_seq(&[a(1, 2.0), a(0, 3.0)], &ClassOrder::Natural).unwrap();
        assert_eq!(s, vec![a(0, 3.0), a(1, 2.0)]);
    }

    #[test]
    fn explicit_order_is_respected() {
        let o = ClassOrder::Explicit(vec![2, 0, 1]);
        let s = normal_form(&[a(0, 1.0), a(1, 1.0), a(2, 1.0)], &o);
        assert_eq!(s.iter().map(|x| x.key).collect::<Vec<_>>(), vec![2, 0, 1]);
    }

    #[test]
    fn leq_is_subset() {
        let p = Setting::from_pairs([(0, Value::from(1.0))]);
        let q = Setting::from_pairs([(0, Value::from(1.0)), (1, Value::from(2.0))]);
        assert!(leq(&p, &q));
        assert!(!leq(&q, &p));
        assert!(leq(&Setting::new(), &p));
    }
}
