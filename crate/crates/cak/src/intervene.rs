//! Hard and soft interventions, interventionals, and their composition.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::{json, Value as Json};

use crate::error::{Error, Result};
use crate::model::{CausalModel, Mechanism};
use crate::value::{Setting, Signature, Value, ValueRange, VarId};

pub type Editor = Arc<dyn Fn(&[Arc<Mechanism>]) -> Result<Vec<Mechanism>> + Send + Sync>;

/// A functional over mechanisms. The editor receives the old mechanisms of
/// `targets` (in that order) and returns their replacements.
pub struct Interventional {
    pub targets: Vec<VarId>,
    pub editor: Editor,
    pub label: String,
    /// High-level intervention this interventional stands for, when it was
    /// built from one (see `abstraction::canonical_omega`).
    pub omega_image: Option<Setting>,
}

impl fmt::Debug for Interventional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Interventional({}, targets {:?})", self.label, self.targets)
    }
}

impl Interventional {
    pub fn new<F>(targets: Vec<VarId>, label: impl Into<String>, editor: F) -> Interventional
    where
        F: Fn(&[Arc<Mechanism>]) -> Result<Vec<Mechanism>> + Send + Sync + 'static,
    {
        Interventional { targets, editor: Arc::new(editor), label: label.into(), omega_image: None }
    }
}

#[derive(Clone, Debug)]
pub enum Intervention {
    Hard(Setting),
    Soft(BTreeMap<VarId, Arc<Mechanism>>),
    General(Arc<Interventional>),
    /// Applied left to right.
    Seq(Vec<Intervention>),
}

impl PartialEq for Intervention {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Intervention::Hard(a), Intervention::Hard(b)) => a == b,
            (Intervention::Soft(a), Intervention::Soft(b)) => a == b,
            (Intervention::General(a), Intervention::General(b)) => Arc::ptr_eq(a, b),
            (Intervention::Seq(a), Intervention::Seq(b)) => a == b,
            _ => false,
        }
    }
}

impl From<Setting> for Intervention {
    fn from(s: Setting) -> Self {
        Intervention::Hard(s)
    }
}

impl Intervention {
    pub fn null() -> Intervention {
        Intervention::Hard(Setting::new())
    }

    pub fn is_null(&self) -> bool {
        match self {
            Intervention::Hard(s) => s.is_empty(),
            Intervention::Soft(m) => m.is_empty(),
            Intervention::Seq(items) => items.iter().all(|i| i.is_null()),
            Intervention::General(_) => false,
        }
    }

    pub fn as_hard(&self) -> Option<&Setting> {
        match self {
            Intervention::Hard(s) => Some(s),
            _ => None,
        }
    }

    /// Targeted variables, sorted.
    pub fn targets(&self) -> Vec<VarId> {
        let mut out: Vec<VarId> = match self {
            Intervention::Hard(s) => s.vars(),
            Intervention::Soft(m) => m.keys().copied().collect(),
            Intervention::General(g) => g.targets.clone(),
            Intervention::Seq(items) => items.iter().flat_map(|i| i.targets()).collect(),
        };
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn to_json(&self, sig: &Signature) -> Json {
        let names = |vs: &[VarId]| vs.iter().map(|&v| Json::from(sig.name(v))).collect::<Vec<_>>();
        match self {
            Intervention::Hard(s) => s.to_json(sig),
            Intervention::Soft(m) => json!({ "soft": names(&m.keys().copied().collect::<Vec<_>>()) }),
            Intervention::General(g) => json!({ "interventional": g.label, "targets": names(&g.targets) }),
            Intervention::Seq(items) => json!({ "seq": items.iter().map(|i| i.to_json(sig)).collect::<Vec<_>>() }),
        }
    }
}

/// The model with the intervention's mechanism replacements. `m` is untouched.
pub fn apply(m: &CausalModel, iv: &Intervention) -> Result<CausalModel> {
    match iv {
        Intervention::Hard(s) => m.with_fixed(s),
        Intervention::Soft(repl) => {
            for &v in repl.keys() {
                if v >= m.len() {
                    return Err(Error::UnknownVariable(format!("#{v}")));
                }
            }
            m.with_mechanisms(repl.iter().map(|(v, f)| (*v, f.clone())).collect())
        }
        Intervention::General(g) => {
            let mut old = Vec::with_capacity(g.targets.len());
            for &v in &g.targets {
                if v >= m.len() {
                    return Err(Error::UnknownVariable(format!("#{v}")));
                }
                old.push(m.mechanism(v).clone());
            }
            let new = (g.editor)(&old)?;
            if new.len() != g.targets.len() {
                return Err(Error::TypeMismatch(format!(
                    "interventional `{}` returned {} mechanisms for {} targets",
                    g.label,
                    new.len(),
                    g.targets.len()
                )));
            }
            m.with_mechanisms(g.targets.iter().copied().zip(new.into_iter().map(Arc::new)).collect())
        }
        Intervention::Seq(items) => {
            let mut cur = m.clone();
            for it in items {
                cur = apply(&cur, it)?;
            }
            Ok(cur)
        }
    }
}

/// Solutions of `m` under `iv`, using the fixed-variable fast path for hard interventions.
pub fn solve_under(m: &CausalModel, iv: &Intervention) -> Result<Vec<crate::value::World>> {
    match iv {
        Intervention::Hard(s) => m.solve_with(s),
        _ => apply(m, iv)?.solve(),
    }
}

fn as_soft(iv: &Intervention) -> Option<BTreeMap<VarId, Arc<Mechanism>>> {
    match iv {
        Intervention::Hard(s) => Some(s.iter().map(|(v, x)| (v, Arc::new(Mechanism::Const(x.clone())))).collect()),
        Intervention::Soft(m) => Some(m.clone()),
        _ => None,
    }
}

/// `a` then `b`; on a shared target `b` wins.
pub fn compose(a: &Intervention, b: &Intervention) -> Intervention {
    if b.is_null() {
        return a.clone();
    }
    if a.is_null() {
        return b.clone();
    }
    match (a, b) {
        (Intervention::Hard(x), Intervention::Hard(y)) => Intervention::Hard(x.overwrite(y)),
        _ => match (as_soft(a), as_soft(b)) {
            (Some(mut x), Some(y)) => {
                x.extend(y);
                Intervention::Soft(x)
            }
            _ => {
                let mut items = Vec::new();
                for it in [a, b] {
                    match it {
                        Intervention::Seq(inner) => items.extend(inner.iter().cloned()),
                        other => items.push(other.clone()),
                    }
                }
                Intervention::Seq(items)
            }
        },
    }
}

/// Adds `offset` to the target's mechanism.
pub struct SteeringIntervention {
    pub target: VarId,
    pub offset: Vec<f64>,
}

fn add_offset(v: &Value, offset: &[f64]) -> Result<Value> {
    match v {
        Value::Num(x) if offset.len() == 1 => Ok(Value::Num(x + offset[0])),
        Value::Tuple(t) if t.len() == offset.len() => {
            let mut out = Vec::with_capacity(t.len());
            for (x, o) in t.iter().zip(offset) {
                let x = x.as_num().ok_or_else(|| Error::TypeMismatch(format!("non-numeric component in {v}")))?;
                out.push(Value::Num(x + o));
            }
            Ok(Value::tuple(out))
        }
        _ => Err(Error::TypeMismatch(format!("cannot add an offset of length {} to {v}", offset.len()))),
    }
}

fn offset_mechanism(old: &Arc<Mechanism>, name: String, offset: Vec<f64>, label: &str) -> Mechanism {
    let old = old.clone();
    Mechanism::native(old.parents(), label, move |w| add_offset(&old.eval(w, &name)?, &offset))
}

pub fn steering_interventional(sig: &Signature, s: &SteeringIntervention) -> Result<Interventional> {
    if s.target >= sig.len() {
        return Err(Error::UnknownVariable(format!("#{}", s.target)));
    }
    match sig.range(s.target) {
        ValueRange::Real(d) if *d == s.offset.len() => {}
        ValueRange::Real(d) => {
            return Err(Error::TypeMismatch(format!(
                "steering offset has length {} but `{}` has dimension {d}",
                s.offset.len(),
                sig.name(s.target)
            )))
        }
        ValueRange::Enum(_) => {
            return Err(Error::TypeMismatch(format!("steering target `{}` is not real-valued", sig.name(s.target))))
        }
    }
    let name = sig.name(s.target).to_string();
    let offset = s.offset.clone();
    let label = format!("steer {name} by {offset:?}");
    let inner_label = label.clone();
    Ok(Interventional::new(vec![s.target], label, move |old| {
        Ok(vec![offset_mechanism(&old[0], name.clone(), offset.clone(), &inner_label)])
    }))
}

#[derive(Clone, Debug, PartialEq)]
pub enum AblationKind {
    Zero,
    /// One value per target.
    Constant(Vec<Value>),
    /// Source setting whose solution supplies the target values.
    Resample(Setting),
    Noise { seed: u64, scale: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationSpec {
    pub targets: Vec<VarId>,
    pub kind: AblationKind,
}

/// Name and version of the generator behind noise ablation. Offsets are drawn
/// from ChaCha20 seeded with a SplitMix64 mix of (seed, variable, component).
pub const NOISE_RNG: &str = "chacha20-splitmix64/1";

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed derived from a sequence of integers.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5EED_u64, |acc, &p| splitmix(acc ^ splitmix(p)))
}

pub fn noise_offset(seed: u64, var: VarId, component: usize, scale: f64) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(&[seed, var as u64, component as u64]));
    let u: f64 = rng.gen();
    scale * (2.0 * u - 1.0)
}

fn zero_of(sig: &Signature, v: VarId) -> Result<Value> {
    match sig.range(v) {
        ValueRange::Real(1) => Ok(Value::Num(0.0)),
        ValueRange::Real(d) => Ok(Value::vector(&vec![0.0; *d])),
        ValueRange::Enum(_) => {
            let z = Value::Num(0.0);
            if sig.contains(v, &z) {
                Ok(z)
            } else {
                Err(Error::TypeMismatch(format!("`{}` has no zero value", sig.name(v))))
            }
        }
    }
}

pub fn ablation_interventional(a: &AblationSpec, m: &CausalModel) -> Result<Intervention> {
    let sig = m.sig();
    for &v in &a.targets {
        if v >= sig.len() {
            return Err(Error::UnknownVariable(format!("#{v}")));
        }
    }
    match &a.kind {
        AblationKind::Zero => {
            let mut s = Setting::new();
            for &v in &a.targets {
                s.insert(v, zero_of(sig, v)?);
            }
            Ok(Intervention::Hard(s))
        }
        AblationKind::Constant(vals) => {
            if vals.len() != a.targets.len() {
                return Err(Error::TypeMismatch(format!("{} values for {} targets", vals.len(), a.targets.len())));
            }
            let mut s = Setting::new();
            for (&v, x) in a.targets.iter().zip(vals) {
                sig.check(v, x)?;
                s.insert(v, x.clone());
            }
            Ok(Intervention::Hard(s))
        }
        AblationKind::Resample(src) => {
            let sols = m.solve_with(src)?;
            match sols.len() {
                0 => Err(Error::UnsolvedSource),
                1 => Ok(Intervention::Hard(a.targets.iter().map(|&v| (v, sols[0][v].clone())).collect())),
                k => Err(Error::AmbiguousSolution(k)),
            }
        }
        AblationKind::Noise { seed, scale } => {
            let mut repl = BTreeMap::new();
            for &v in &a.targets {
                let dim = match sig.range(v) {
                    ValueRange::Real(d) => *d,
                    ValueRange::Enum(_) => {
                        return Err(Error::TypeMismatch(format!("noise ablation on non-real `{}`", sig.name(v))))
                    }
                };
                let offset: Vec<f64> = (0..dim).map(|k| noise_offset(*seed, v, k, *scale)).collect();
                let label = format!("noise({seed}, {scale}) on {}", sig.name(v));
                repl.insert(v, Arc::new(offset_mechanism(m.mechanism(v), sig.name(v).to_string(), offset, &label)));
            }
            Ok(Intervention::Soft(repl))
        }
    }
}
