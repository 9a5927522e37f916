use cak::fixtures::{HE_CONVENTION, HE_EPSILON};
use cak::nn::{hierarchical_equality_fixture, HeFixture};
use cak::scrub::{scrub, scrub_faithfulness, ScrubSetup};
use cak::VarId;

fn he() -> HeFixture {
    hierarchical_equality_fixture(HE_EPSILON, HE_CONVENTION).unwrap()
}

/// δ from the alignment cells, with the unaligned second hidden layer
/// assigned to `Z` alongside the output neurons. `swap` exchanges the
/// images of the `Y1` and `Y2` cells.
fn setup(f: &HeFixture, swap: bool) -> ScrubSetup {
    let mut delta: Vec<Option<VarId>> = vec![None; f.low.len()];
    let z = f.high.var("Z").unwrap();
    for (x, cell) in f.alignment.cells.iter().enumerate() {
        let x = match (swap, f.high.sig().name(x)) {
            (true, "Y1") => f.high.var("Y2").unwrap(),
            (true, "Y2") => f.high.var("Y1").unwrap(),
            _ => x,
        };
        for &v in cell {
            delta[v] = Some(x);
        }
    }
    for &v in &f.alignment.bot {
        delta[v] = Some(z);
    }
    ScrubSetup { low: f.low.clone(), high: f.high.clone(), delta, pool: f.inputs.clone(), readout: f.net.readout.cell_map() }
}

fn read(f: &HeFixture, s: &ScrubSetup, vals: Vec<cak::Value>) -> cak::Value {
    s.readout.as_ref().unwrap().apply(&vals).unwrap_or_else(|| panic!("{:?}", f.net.readout))
}

#[test]
fn correct_map_preserves_every_base_output() {
    let f = he();
    let s = setup(&f, false);
    let outs = f.low.sinks();
    for base in 0..f.inputs.len() {
        let got = scrub(&s, base, 0).unwrap();
        let plain = f.low.solve_unique(&f.inputs[base].low).unwrap();
        let scrubbed = read(&f, &s, outs.iter().map(|&v| got.get(v).unwrap().clone()).collect());
        let want = read(&f, &s, outs.iter().map(|&v| plain[v].clone()).collect());
        assert_eq!(scrubbed, want, "base {base}");
    }
}

#[test]
fn correct_map_is_fully_faithful() {
    let f = he();
    let r = scrub_faithfulness(&setup(&f, false), 1000, 0).unwrap();
    assert_eq!(r.faithfulness, 1.0);
    assert!(r.empty_conditioned.is_empty());
}

#[test]
fn swapped_map_loses_faithfulness() {
    let f = he();
    let r = scrub_faithfulness(&setup(&f, true), 1000, 0).unwrap();
    assert!(r.faithfulness < 1.0);
    // Frozen from the first run at seed 0.
    assert_eq!(r.faithfulness, 0.487);
}

#[test]
fn reports_do_not_depend_on_worker_count() {
    let f = he();
    let s = setup(&f, true);
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| scrub_faithfulness(&s, 300, 5).unwrap().to_json().to_string())
    };
    assert_eq!(run(1), run(3));
}
