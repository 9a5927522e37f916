use std::path::PathBuf;

use cak::dsl::*;
use cak::fixtures::{fixture, FIXTURE_NAMES};
use cak::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn golden_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

#[test]
fn fixtures_round_trip_byte_identically() {
    for name in FIXTURE_NAMES {
        let docs = fixture_documents(&fixture(name).unwrap()).unwrap();
        let back = fixture_from_documents(&docs).unwrap_or_else(|e| panic!("{name}: {e}"));
        let again = fixture_documents(&back).unwrap();
        assert_eq!(docs, again, "{name}");
    }
}

#[test]
fn goldens_match() {
    let update = std::env::var_os("CAK_UPDATE_GOLDENS").is_some();
    for name in FIXTURE_NAMES {
        let docs = fixture_documents(&fixture(name).unwrap()).unwrap();
        let dir = golden_dir(name);
        if update {
            let _ = std::fs::remove_dir_all(&dir);
            write_documents(&docs, &dir).unwrap();
        }
        let on_disk = read_documents(&dir).unwrap_or_else(|e| panic!("{name}: {e}"));
        let mut sorted = docs.clone();
        sorted.sort_by(|a, b| a.file.cmp(&b.file));
        assert_eq!(on_disk, sorted, "{name}: run with CAK_UPDATE_GOLDENS=1 after an intended change");
    }
}

#[test]
fn glut_document_reproduces_solution_sets() {
    let f = fixture("glut").unwrap();
    let loaded = fixture_from_documents(&read_documents(&golden_dir("glut")).unwrap()).unwrap();
    let (m, l) = (f.model("glut").unwrap(), loaded.model("glut").unwrap());
    for s in &f.suite("marginalize_x").unwrap().items {
        let mut want = m.solve_with(s).unwrap();
        let mut got = l.solve_with(s).unwrap();
        want.sort();
        got.sort();
        assert_eq!(got, want);
    }
}

#[test]
fn partial_alignments_are_marked() {
    let text = &fixture_documents(&fixture("addition_mod10").unwrap()).unwrap();
    let align = text.iter().find(|d| d.file == "mod10.align.json").unwrap();
    assert!(align.text.contains("\"partial\": true"));
    let mut j: serde_json::Value = serde_json::from_str(&align.text).unwrap();
    j.as_object_mut().unwrap().remove("partial");
    let stripped = serialize(&j);
    let f = fixture("addition_mod10").unwrap();
    let err = load_alignment(&stripped, f.model("sum").unwrap(), f.model("digit_sum").unwrap()).unwrap_err();
    assert!(matches!(err, Error::SurjectivityError(_)), "{err}");
}

fn documented(e: &Error) -> bool {
    matches!(
        e,
        Error::ParseError { .. }
            | Error::TypeError { .. }
            | Error::UndeclaredVariable(_)
            | Error::PartitionError(_)
            | Error::SurjectivityError(_)
    )
}

fn mutate(text: &str, rng: &mut ChaCha8Rng) -> String {
    const PIECES: [&str; 12] = ["{", "}", "[", "]", ",", ":", "\"", "0", "-1.5", "true", "null", "\"var\""];
    let mut chars: Vec<char> = text.chars().collect();
    for _ in 0..rng.gen_range(1..4) {
        let at = rng.gen_range(0..=chars.len());
        match rng.gen_range(0..3) {
            0 if at < chars.len() => {
                chars.remove(at);
            }
            1 => {
                let p = PIECES[rng.gen_range(0..PIECES.len())];
                for (k, c) in p.chars().enumerate() {
                    chars.insert(at + k, c);
                }
            }
            _ if at < chars.len() => {
                let end = (at + rng.gen_range(1..20)).min(chars.len());
                let span: Vec<char> = chars[at..end].to_vec();
                let to = rng.gen_range(0..=chars.len());
                for (k, c) in span.into_iter().enumerate() {
                    chars.insert((to + k).min(chars.len()), c);
                }
            }
            _ => {}
        }
    }
    chars.into_iter().collect()
}

#[test]
fn mutated_documents_fail_cleanly() {
    let f = fixture("glut").unwrap();
    let docs = fixture_documents(&f).unwrap();
    let model = docs.iter().find(|d| d.file == "glut.cam.json").unwrap().text.clone();
    let align = docs.iter().find(|d| d.file == "marginalize_x.align.json").unwrap().text.clone();
    let suite = docs.iter().find(|d| d.file == "marginalize_x.suite.json").unwrap().text.clone();
    let (low, high) = (f.model("glut").unwrap(), f.model("glut_yz").unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for case in 0..10_000 {
        let (kind, text) = match case % 3 {
            0 => ("model", mutate(&model, &mut rng)),
            1 => ("alignment", mutate(&align, &mut rng)),
            _ => ("suite", mutate(&suite, &mut rng)),
        };
        let res = match kind {
            "model" => parse_model(&text).map(|_| ()),
            "alignment" => parse_alignment(&text, low.sig(), high.sig()).map(|_| ()),
            _ => parse_suite(&text, low.sig()).map(|_| ()),
        };
        if let Err(e) = res {
            assert!(documented(&e), "case {case} ({kind}): {e}\n{text}");
        }
    }
}
