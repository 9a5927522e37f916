use std::sync::Arc;

use cak::abstraction::TauOmega;
use cak::approx::{approx_metric, integrated_gradients, lime_fidelity, mediation_effects, ApproxConfig, Similarity, Statistic, IG_STEPS};
use cak::expr::{Expr, Table};
use cak::fixtures::fixture;
use cak::intervene::Intervention;
use cak::nn::DenseNet;
use cak::{CausalModel, Mechanism, Setting, Signature, Value, ValueRange, VarId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

struct Net {
    model: CausalModel,
    inputs: Vec<Setting>,
    hidden: Vec<Vec<VarId>>,
    outputs: Vec<VarId>,
}

fn equality_net() -> Net {
    let f = fixture("hierarchical_equality").unwrap();
    let net: &DenseNet = &f.nets[0].1;
    let model = f.model("network").unwrap().clone();
    let names = net.standard_names();
    let ids = |g: &[String]| g.iter().map(|n| model.var(n).unwrap()).collect::<Vec<_>>();
    let hidden = names[1..names.len() - 1].iter().map(|g| ids(g)).collect();
    let outputs = ids(&names[names.len() - 1]);
    let inputs = f.suite("inputs").unwrap().items.clone();
    Net { model, inputs, hidden, outputs }
}

fn num(w: &[Value], v: VarId) -> f64 {
    w[v].as_num().unwrap()
}

/// Every output change between two inputs runs through the last hidden
/// layer, so the indirect effect is the total effect; both effects also
/// match a direct re-evaluation.
#[test]
fn hidden_layer_completely_mediates() {
    let n = equality_net();
    let z = n.hidden.last().unwrap().clone();
    let runs: Vec<Vec<Value>> = n.inputs.iter().map(|s| n.model.solve_unique(s).unwrap()).collect();
    let patched = |base: &Setting, from: &[Value]| -> Vec<Value> {
        let mut s = base.clone();
        for &v in &z {
            s.insert(v, from[v].clone());
        }
        n.model.solve_unique(&s).unwrap()
    };
    let mut checked = 0;
    for (i, x) in n.inputs.iter().enumerate() {
        for (j, xp) in n.inputs.iter().enumerate() {
            for &y in &n.outputs {
                let e = mediation_effects(&n.model, x, xp, y, &z).unwrap();
                assert_eq!(e.indirect, e.total, "pair {i} {j}");
                if (i * 81 + j) % 401 == 0 {
                    let total = num(&runs[j], y) - num(&runs[i], y);
                    let direct = num(&runs[j], y) - num(&patched(x, &runs[j]), y);
                    let indirect = num(&runs[j], y) - num(&patched(xp, &runs[i]), y);
                    assert_eq!(e.total, vec![total]);
                    assert_eq!(e.direct, vec![direct]);
                    assert_eq!(e.indirect, vec![indirect]);
                }
            }
            checked += 1;
        }
    }
    assert_eq!(checked, 81 * 81);
}

/// Attributions along the path from a random hidden vector to the realized
/// one add up to the output difference.
#[test]
fn integrated_gradients_are_complete() {
    let n = equality_net();
    let layer = n.hidden[0].clone();
    let out = n.outputs[0];
    let mut rng = ChaCha20Rng::seed_from_u64(0);
    for t in 0..20 {
        let x = &n.inputs[rng.gen_range(0..n.inputs.len())];
        let w = n.model.solve_unique(x).unwrap();
        let y: Vec<f64> = layer.iter().map(|&v| num(&w, v)).collect();
        let y_prime: Vec<f64> = layer.iter().map(|_| rng.gen_range(0.0..2.0)).collect();
        let ig = integrated_gradients(&n.model, x, &layer, &y, &y_prime, out, IG_STEPS).unwrap();
        let mut s = x.clone();
        for (&v, &val) in layer.iter().zip(&y_prime) {
            s.insert(v, Value::Num(val));
        }
        let want = num(&w, out) - num(&n.model.solve_unique(&s).unwrap(), out);
        let got: f64 = ig.iter().sum();
        assert!((got - want).abs() <= 1e-2, "triple {t}: {got} vs {want}");
    }
}

/// Four integer variables; the first two are inputs, the others read tables.
fn random_model(rng: &mut ChaCha20Rng, sig: &Arc<Signature>) -> CausalModel {
    let vals = |rng: &mut ChaCha20Rng| Value::from(rng.gen_range(0..3i64));
    let mut mechs = vec![Mechanism::Const(vals(rng)), Mechanism::Const(vals(rng))];
    for v in 2..4 {
        let mut rows = Vec::new();
        for a in 0..3i64 {
            for b in 0..3i64 {
                rows.push((vec![(v - 2, Value::from(a)), (v - 1, Value::from(b))], vals(rng)));
            }
        }
        mechs.push(Mechanism::Expr(Expr::Table(Arc::new(Table::new(rows, Value::from(0i64))))));
    }
    CausalModel::new(sig.clone(), mechs).unwrap()
}

#[test]
fn lime_fidelity_is_the_mean_abs_diff_metric() {
    let sig = Arc::new(Signature::new((0..4).map(|v| (format!("V{v}"), ValueRange::ints(0, 2))).collect()).unwrap());
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let neighborhood: Vec<Setting> =
        (0..3i64).flat_map(|a| (0..3i64).map(move |b| Setting::from_pairs([(0, Value::from(a)), (1, Value::from(b))]))).collect();
    let suite: Vec<Intervention> = neighborhood.iter().cloned().map(Intervention::Hard).collect();
    for _ in 0..10 {
        let low = random_model(&mut rng, &sig);
        let high = random_model(&mut rng, &sig);
        let dist = |a: &[Value], b: &[Value]| (a[0].as_num().unwrap() - b[0].as_num().unwrap()).abs();
        let lime = lime_fidelity(&low, &high, &neighborhood, &[3], &dist).unwrap();
        let cfg = ApproxConfig::new(Similarity::AbsDiffOn(3), Statistic::Mean);
        let rep = approx_metric(&low, &high, &TauOmega::identity(sig.clone()), &suite, &cfg).unwrap();
        assert_eq!(lime, rep.metric);
    }
    let same = random_model(&mut rng, &sig);
    let dist = |a: &[Value], b: &[Value]| (a[0].as_num().unwrap() - b[0].as_num().unwrap()).abs();
    assert_eq!(lime_fidelity(&same, &same, &neighborhood, &[3], &dist).unwrap(), 0.0);
}
