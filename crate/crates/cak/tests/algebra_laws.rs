use std::collections::HashMap;

use cak::algebra::{atom, normal_form, overwrite_composition, Atom, ClassOrder};
use cak::{Setting, Value};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};

type Seq = Vec<Atom<usize, Value>>;

fn all_sequences(vars: usize, vals: i64, max_len: usize) -> Vec<Seq> {
    let atoms: Vec<Atom<usize, Value>> = (0..vars).flat_map(|v| (0..vals).map(move |x| atom(v, Value::from(x)))).collect();
    let mut out: Vec<Seq> = vec![Vec::new()];
    let mut layer: Vec<Seq> = vec![Vec::new()];
    for _ in 0..max_len {
        layer = layer.iter().flat_map(|s| atoms.iter().map(move |a| [s.clone(), vec![a.clone()]].concat())).collect();
        out.extend(layer.iter().cloned());
    }
    out
}

/// Final value per variable, read right to left.
fn last_writes(s: &Seq) -> Vec<(usize, Value)> {
    let mut seen = Vec::new();
    let mut out = Vec::new();
    for a in s.iter().rev() {
        if !seen.contains(&a.key) {
            seen.push(a.key);
            out.push((a.key, a.payload.clone()));
        }
    }
    out.sort_by_key(|p| p.0);
    out
}

/// Equal normal forms exactly when equal overwrite compositions, over every
/// sequence of up to four atoms on three variables with three values.
#[test]
fn normal_form_classes_match_composition_classes() {
    let seqs = all_sequences(3, 3, 4);
    assert_eq!(seqs.len(), 1 + 9 + 81 + 729 + 6561);
    let mut by_nf: HashMap<Seq, Setting> = HashMap::new();
    let mut by_comp: HashMap<Setting, Seq> = HashMap::new();
    for s in &seqs {
        let nf = normal_form(s, &ClassOrder::Natural);
        let comp = overwrite_composition(s);
        assert_eq!(comp, last_writes(s).into_iter().collect::<Setting>());
        if let Some(prev) = by_nf.insert(nf.clone(), comp.clone()) {
            assert_eq!(prev, comp, "{s:?}");
        }
        if let Some(prev) = by_comp.insert(comp, nf.clone()) {
            assert_eq!(prev, nf, "{s:?}");
        }
    }
    // 4^3 partial settings over three variables with three values.
    assert_eq!(by_comp.len(), 64);
    assert_eq!(by_nf.len(), 64);
}

fn seq_strategy() -> impl Strategy<Value = Seq> {
    proptest::collection::vec((0..5usize, 0..4i64), 0..10).prop_map(|v| v.into_iter().map(|(k, x)| atom(k, Value::from(x))).collect())
}

proptest! {
    #![proptest_config(Config { cases: 10_000, rng_seed: RngSeed::Fixed(11), failure_persistence: None, ..Config::default() })]

    #[test]
    fn normal_form_equality_iff_composition_equality(a in seq_strategy(), b in seq_strategy()) {
        let o = ClassOrder::Natural;
        let same_nf = normal_form(&a, &o) == normal_form(&b, &o);
        let same_comp = overwrite_composition(&a) == overwrite_composition(&b);
        prop_assert_eq!(same_nf, same_comp);
        prop_assert_eq!(same_comp, last_writes(&a) == last_writes(&b));
    }

    #[test]
    fn normal_form_is_idempotent_with_one_atom_per_class(a in seq_strategy(), order in proptest::collection::vec(0..5usize, 0..5)) {
        let o = ClassOrder::Explicit(order);
        let nf = normal_form(&a, &o);
        prop_assert_eq!(normal_form(&nf, &o), nf.clone());
        let mut keys: Vec<usize> = nf.iter().map(|x| x.key).collect();
        let len = keys.len();
        keys.dedup();
        prop_assert_eq!(keys.len(), len);
    }
}
