use std::sync::Arc;

use cak::abstraction::{verify_constructive, Alignment, CellMap, CellSuite, Suite, TauOmega};
use cak::approx::{approx_metric, ApproxConfig, Similarity, Statistic};
use cak::expr::{op, var, Op};
use cak::fixtures::*;
use cak::intervene::Intervention;
use cak::ops::{has_unique_solutions, marginalize, tabulate, value_merge, value_merge_viable, variable_merge, ValueMergeFamily};
use cak::{Setting, Value, ValueRange};

fn hard(items: &[Setting]) -> Vec<Intervention> {
    items.iter().cloned().map(Intervention::Hard).collect()
}

#[test]
fn glut_marginalization_fails_with_witness() {
    let f = fixture("glut").unwrap();
    let m = f.model("glut").unwrap();
    let a = f.alignment("marginalize_x").unwrap();
    let suite = hard(&f.suite("marginalize_x").unwrap().items);
    assert!(!has_unique_solutions(m, &f.suite("marginalize_x").unwrap().items).unwrap());
    let rep = verify_constructive(m, f.model("glut_yz").unwrap(), a.alignment.clone(), &suite, 0.0).unwrap();
    assert!(!rep.passed());
    assert!(rep.first_counterexample().is_some());
    assert_eq!(f.expected()["marginalization_verifies"], false);
}

#[test]
fn addition_mod10_metric() {
    let f = fixture("addition_mod10").unwrap();
    let (low, high) = (f.model("sum").unwrap(), f.model("digit_sum").unwrap());
    let to = TauOmega::from_alignment(f.alignment("mod10").unwrap().alignment.clone());
    let suite = hard(&f.suite("digit_pairs").unwrap().items);
    let y = high.var("Y").unwrap();
    let mean = approx_metric(low, high, &to, &suite, &ApproxConfig::new(Similarity::AbsDiffOn(y), Statistic::Mean)).unwrap();
    assert_eq!(mean.metric, 4.5);
    assert_eq!(mean.suite_size, 100);
    let max = approx_metric(low, high, &to, &suite, &ApproxConfig::new(Similarity::AbsDiffOn(y), Statistic::Max)).unwrap();
    assert_eq!(max.metric, 10.0);
    // oracle: count pairs that carry
    let carries = (0..10).flat_map(|a| (0..10).map(move |b| a + b)).filter(|s| *s >= 10).count();
    assert_eq!(mean.metric, 10.0 * carries as f64 / 100.0);
}

#[test]
fn bits_abstract_to_numbers() {
    let f = fixture("arithmetic_circuits").unwrap();
    let a = f.alignment("bits_to_numbers").unwrap().alignment.clone();
    let suite = CellSuite::from_alignment(&a).unwrap();
    assert_eq!(serde_json::json!(suite.len()), f.expected()["exhaustive_suite_size"]);
    let rep = verify_constructive(f.model("binary").unwrap(), f.model("unary").unwrap(), a, &suite, 0.0).unwrap();
    assert!(rep.passed(), "{:?}", rep.first_counterexample());
}

#[test]
fn bubble_chain_verifies() {
    let f = fixture("bubble(3)").unwrap();
    let step = |align: &str, suite: &str| {
        let e = f.alignment(align).unwrap();
        let s = hard(&f.suite(suite).unwrap().items);
        assert_eq!(s.len(), 3 + 9 + 27);
        let rep = verify_constructive(f.model(&e.low).unwrap(), f.model(&e.high).unwrap(), e.alignment.clone(), &s, 0.0).unwrap();
        assert!(rep.passed(), "{align}: {:?}", rep.first_counterexample());
    };
    step("drop_carries", "inputs");
    step("keep_limits", "inputs_rows");
}

#[test]
fn merged_rows_verify_at_length_two() {
    let rows = bubble_marginalized(2, 3).unwrap();
    let (merged, a) = variable_merge(&rows, &bubble_merge_partition(2)).unwrap();
    assert!(!merged.is_acyclic());
    let items: Vec<Setting> = prefix_lists(2, 3).iter().map(|l| l.iter().enumerate().map(|(i, &x)| (i, Value::from(x))).collect()).collect();
    let rep = verify_constructive(&rows, &merged, a, &hard(&items), 0.0).unwrap();
    assert!(rep.passed(), "{:?}", rep.first_counterexample());
    let fam = bubble_limit_family(2, 3);
    let limits = bubble_value_merged(2, 3).unwrap();
    let a = Arc::new(fam.alignment(merged.sig()).unwrap());
    assert_eq!(*a.high, **limits.sig());
    let rep = verify_constructive(&merged, &limits, a, &hard(&items), 0.0).unwrap();
    assert!(rep.passed(), "{:?}", rep.first_counterexample());
}

#[test]
fn merged_model_accepts_runs_and_rejects_corruptions() {
    let b = BubbleModel::new(3, 3).unwrap();
    for l in prefix_lists(3, 3) {
        let seqs = run_sequences(&b.solve(&l).unwrap());
        assert!(bubble_merged_is_solution(&seqs, &l), "{l:?}");
        for i in 0..3 {
            for t in 0..seqs[i].prefix.len() {
                let mut bad = seqs.clone();
                let old = bad[i].prefix[t].clone();
                bad[i].prefix[t] = if old == Value::from(3i64) { Value::from(1i64) } else { Value::from(3i64) };
                assert!(!bubble_merged_is_solution(&bad, &l), "{l:?} slot {i} step {t}");
            }
        }
    }
}

#[test]
fn cebab_marginal_matches_composition() {
    let m = cebab_synthetic().unwrap();
    let food = m.var("C_food").unwrap();
    let out = m.var("Out").unwrap();
    let drop: Vec<usize> = (0..m.len()).filter(|&v| v != food && v != out).collect();
    let (marg, _) = marginalize(&m, &drop).unwrap();
    let table = tabulate(&marg).unwrap();
    assert_eq!(table.len(), 2);
    for label in CEBAB_LABELS {
        let brute = m.solve_unique(&Setting::from_pairs([(food, Value::sym(label))])).unwrap()[out].clone();
        for o in 1..=5i64 {
            let mut w = vec![Value::sym(label), Value::from(o)];
            w[1] = table.mechanism(1).eval(&w, "Out").unwrap();
            assert_eq!(w[1], brute, "{label}");
        }
    }
    let expected = &fixture("cebab_synthetic").unwrap().metadata["expected"]["food_to_out"];
    for label in CEBAB_LABELS {
        let brute = m.solve_unique(&Setting::from_pairs([(food, Value::sym(label))])).unwrap()[out].clone();
        assert_eq!(brute.as_num(), expected[label].as_f64());
    }
}

fn max_inputs() -> Vec<(f64, f64)> {
    MAX_INPUTS.iter().flat_map(|&a| MAX_INPUTS.iter().map(move |&b| (a, b))).collect()
}

#[test]
fn max_marginalizing_hidden_sum() {
    let m = max_relu_enum().unwrap();
    let y3 = m.var("Y3").unwrap();
    let (marg, _) = marginalize(&m, &[y3]).unwrap();
    let ys1 = m.sig().enum_values(2).unwrap().to_vec();
    let ys2 = m.sig().enum_values(3).unwrap().to_vec();
    for (a, b) in max_inputs() {
        for y1 in &ys1 {
            for y2 in &ys2 {
                let s = Setting::from_pairs([(0, Value::Num(a)), (1, Value::Num(b)), (2, y1.clone()), (3, y2.clone())]);
                let w = marg.solve_unique(&s).unwrap();
                let want = 0.5 * (y1.as_num().unwrap() + y2.as_num().unwrap() + a + b);
                assert!((w[4].as_num().unwrap() - want).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn max_merge_and_value_merge() {
    let m = max_relu_enum().unwrap();
    let (marg, _) = marginalize(&m, &[4]).unwrap();
    let part = vec![
        ("X1".to_string(), vec![0]),
        ("X2".to_string(), vec![1]),
        ("Y*".to_string(), vec![2, 3]),
        ("Z".to_string(), vec![4]),
    ];
    let (merged, _) = variable_merge(&marg, &part).unwrap();
    let inputs: Vec<Setting> = max_inputs().iter().map(|&(a, b)| Setting::from_pairs([(0, Value::Num(a)), (1, Value::Num(b))])).collect();
    for (s, &(a, b)) in inputs.iter().zip(&max_inputs()) {
        let w = merged.solve_unique(s).unwrap();
        assert_eq!(w[2], Value::tuple(vec![Value::Num((a - b).max(0.0)), Value::Num((b - a).max(0.0))]));
        assert_eq!(w[3], Value::Num(a.max(b)));
    }
    let delta = CellMap::Unpack(Arc::new(CellMap::Expr(op(Op::Indicator, vec![op(Op::Ge, vec![var(0), var(1)])]))));
    let fam = ValueMergeFamily { maps: vec![(2, delta, ValueRange::ints(0, 1))], candidates: Vec::new() };
    let on_inputs = value_merge_viable(&merged, &fam, Some(&inputs)).unwrap();
    assert!(on_inputs.viable);
    let everywhere = value_merge_viable(&merged, &fam, None).unwrap();
    assert!(!everywhere.viable);
    assert!(everywhere.witness.is_some());
    let (vm, _) = value_merge(&merged, &fam).unwrap();
    let stated = stated_max_high(&vm);
    for (s, &(a, b)) in inputs.iter().zip(&max_inputs()) {
        let ystar = if a >= b { 1.0 } else { 0.0 };
        let want = vec![Value::Num(a), Value::Num(b), Value::Num(ystar), Value::Num(ystar * a + (1.0 - ystar) * b)];
        assert!(vm.solve_with(s).unwrap().contains(&want));
        assert_eq!(stated.solve_unique(s).unwrap(), want);
    }
    let align = Arc::new(fam.alignment(merged.sig()).unwrap());
    let rep = verify_constructive(&merged, &stated, align, &hard(&inputs), 0.0).unwrap();
    assert!(rep.passed(), "{:?}", rep.first_counterexample());
}

/// `Y* = 1[x1 >= x2]`, `Z = y* x1 + (1 - y*) x2` over the signature of `like`.
fn stated_max_high(like: &cak::CausalModel) -> cak::CausalModel {
    use cak::expr::lit;
    use cak::Mechanism;
    let ystar = op(Op::Indicator, vec![op(Op::Ge, vec![var(0), var(1)])]);
    let z = op(
        Op::Add,
        vec![op(Op::Mul, vec![var(2), var(0)]), op(Op::Mul, vec![op(Op::Sub, vec![lit(1.0), var(2)]), var(1)])],
    );
    let mut mechs: Vec<Mechanism> = vec![Mechanism::Const(Value::Num(1.0)); 2];
    mechs.push(Mechanism::Expr(ystar));
    mechs.push(Mechanism::Expr(z));
    cak::CausalModel::new(like.sig().clone(), mechs).unwrap()
}

#[test]
fn alignment_for_merged_is_reusable() {
    let m = toy_chain().unwrap();
    let a = Alignment::identity(m.sig().clone());
    let rep = verify_constructive(&m, &m, Arc::new(a), &hard(&[Setting::new()]), 0.0).unwrap();
    assert!(rep.passed());
}
