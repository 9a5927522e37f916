use cak::fixtures::conjunction_rotation;
use cak::interchange::InputPair;
use cak::nn::{das_loss, das_search, rotation_featurizer, DasTemplate};
use cak::{CausalModel, Setting, Value};

fn template(low: &CausalModel, high: &CausalModel) -> DasTemplate {
    let mut inputs = Vec::new();
    for a in 0..2i64 {
        for b in 0..2i64 {
            let low_s = Setting::named(low.sig(), &[("X1", Value::from(a)), ("X2", Value::from(b))]).unwrap();
            let high_s = Setting::named(high.sig(), &[("X1", Value::from(a)), ("X2", Value::from(b))]).unwrap();
            inputs.push(InputPair { low: low_s, high: high_s });
        }
    }
    let y1 = high.var("Y1").unwrap();
    let y2 = high.var("Y2").unwrap();
    DasTemplate {
        block: low.sig().vars(&["Y1", "Y2"]).unwrap(),
        planes: vec![(0, 1)],
        targets: vec![(vec![0], vec![y1]), (vec![1], vec![y2])],
        inputs,
        outputs: vec![(low.var("Z").unwrap(), high.var("Z").unwrap())],
        tol: 0.0,
    }
}

/// Independent recount: set the block to the patched features mapped back,
/// as a hard intervention.
fn recount(low: &CausalModel, high: &CausalModel, t: &DasTemplate, angle: f64) -> usize {
    let q = cak::nn::rotation_product(2, &t.planes, &[angle]);
    let f = rotation_featurizer(t.block.clone(), q).unwrap();
    let mut loss = 0;
    for (feats, hvars) in &t.targets {
        for src in &t.inputs {
            let sw = low.solve_unique(&src.low).unwrap();
            let hsrc = high.solve_unique(&src.high).unwrap();
            for base in &t.inputs {
                let bw = low.solve_unique(&base.low).unwrap();
                let h = |w: &[Value]| t.block.iter().map(|&v| w[v].as_num().unwrap()).collect::<Vec<_>>();
                let mut fb = f.features(&h(&bw));
                let fs = f.features(&h(&sw));
                for &k in feats {
                    fb[k] = fs[k];
                }
                let mut s = base.low.clone();
                for (&v, x) in t.block.iter().zip(f.reconstruct(&fb)) {
                    s.insert(v, Value::Num(x));
                }
                let lw = low.solve_unique(&s).unwrap();
                let mut hs = base.high.clone();
                for &x in hvars {
                    hs.insert(x, hsrc[x].clone());
                }
                let hw = high.solve_unique(&hs).unwrap();
                if lw[t.outputs[0].0] != hw[t.outputs[0].1] {
                    loss += 1;
                }
            }
        }
    }
    loss
}

#[test]
fn das_recovers_twenty_degrees() {
    let low = conjunction_rotation(20.0).unwrap();
    let high = conjunction_rotation(0.0).unwrap();
    let t = template(&low, &high);
    let r = das_search(&low, &high, &t, 0.25, 20).unwrap();
    assert!((19.0..=21.0).contains(&r.angles[0]), "{:?}", r.angles);
    assert_eq!(r.loss, 0);
    assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(recount(&low, &high, &t, r.angles[0]), r.loss);
    assert_eq!(das_loss(&low, &high, &t, &r.angles).unwrap(), r.loss);
    assert!(das_loss(&low, &high, &t, &[45.0]).unwrap() > 0);
    assert_eq!(recount(&low, &high, &t, 45.0), das_loss(&low, &high, &t, &[45.0]).unwrap());
}

#[test]
fn das_on_unrotated_fixture_picks_zero() {
    let low = conjunction_rotation(0.0).unwrap();
    let t = template(&low, &low);
    let r = das_search(&low, &low, &t, 0.25, 10).unwrap();
    assert_eq!(r.angles, vec![0.0]);
    assert_eq!(r.loss, 0);
}

/// Intervening on the translated model matches intervening on the original
/// with the canonical interventional, mapped forward.
#[test]
fn canonical_interventionals_make_the_translation_exact() {
    use cak::abstraction::{bijective_translate, canonical_omega, verify_exact, TauOmega};
    use cak::intervene::Intervention;
    use cak::nn::givens;
    use std::sync::Arc;

    let low = conjunction_rotation(20.0).unwrap();
    let block = low.sig().vars(&["Y1", "Y2"]).unwrap();
    let space = rotation_featurizer(block, givens(2, (0, 1), 20.0)).unwrap().bijection(low.sig()).unwrap();
    let high = bijective_translate(&low, space.bij.clone()).unwrap();
    let (y1, y2) = (high.var("Y1").unwrap(), high.var("Y2").unwrap());
    let mut suite = Vec::new();
    for a in 0..2i64 {
        for b in 0..2i64 {
            let base = Setting::from_pairs([(0, Value::from(a)), (1, Value::from(b))]);
            let mut stars = vec![base.clone()];
            for v in [-1.0, 0.0, 0.5, 1.0] {
                stars.push(base.overwrite(&Setting::from_pairs([(y1, Value::Num(v))])));
                stars.push(base.overwrite(&Setting::from_pairs([(y2, Value::Num(v))])));
                stars.push(base.overwrite(&Setting::from_pairs([(y1, Value::Num(v)), (y2, Value::Num(1.0 - v))])));
            }
            for s in stars {
                suite.push(Intervention::General(Arc::new(canonical_omega(&low, space.bij.clone(), &s).unwrap())));
            }
        }
    }
    let rep = verify_exact(&low, &high, &TauOmega::from_bijection(space.bij.clone()), &suite, 1e-9).unwrap();
    assert_eq!(rep.suite_size, 4 * 13);
    assert!(rep.passed(), "{:?}", rep.first_counterexample());
}
