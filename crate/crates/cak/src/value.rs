//! Values, value ranges, signatures and (partial) settings.
//!
//! Settings are keyed by variable index, so two variables may share values
//! without any ambiguity about which variable a value belongs to.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde_json::Value as Json;

use crate::error::{Error, Result};

/// Index of a variable inside its signature.
pub type VarId = usize;

/// A total setting: one value per variable, in declaration order.
pub type World = Vec<Value>;

#[derive(Clone, Debug)]
pub enum Value {
    Bool(bool),
    Num(f64),
    Sym(Arc<str>),
    Tuple(Arc<[Value]>),
}

impl Value {
    pub fn sym(s: &str) -> Value {
        Value::Sym(Arc::from(s))
    }

    pub fn tuple(items: Vec<Value>) -> Value {
        Value::Tuple(Arc::from(items))
    }

    pub fn vector(xs: &[f64]) -> Value {
        Value::Tuple(xs.iter().map(|&x| Value::Num(x)).collect::<Vec<_>>().into())
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_sym(&self) -> Option<&str> {
        match self {
            Value::Sym(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_tuple(&self) -> Option<&[Value]> {
        match self {
            Value::Tuple(t) => Some(t),
            _ => None,
        }
    }

    /// Numeric view of a number or a tuple of numbers.
    pub fn as_vector(&self) -> Option<Vec<f64>> {
        match self {
            Value::Num(x) => Some(vec![*x]),
            Value::Tuple(t) => t.iter().map(Value::as_num).collect(),
            _ => None,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Bool(_) => 0,
            Value::Num(_) => 1,
            Value::Sym(_) => 2,
            Value::Tuple(_) => 3,
        }
    }

    /// Equality that allows an absolute difference of `tol` between numbers.
    pub fn approx_eq(&self, other: &Value, tol: f64) -> bool {
        if tol == 0.0 {
            return self == other;
        }
        match (self, other) {
            (Value::Num(a), Value::Num(b)) => a == b || (a - b).abs() <= tol,
            (Value::Tuple(a), Value::Tuple(b)) => {
                a.len() == b.len() && a.iter().zip(b.iter()).all(|(x, y)| x.approx_eq(y, tol))
            }
            _ => self == other,
        }
    }

    pub fn to_json(&self) -> Json {
        match self {
            Value::Bool(b) => Json::Bool(*b),
            Value::Num(x) => num_to_json(*x),
            Value::Sym(s) => Json::String(s.to_string()),
            Value::Tuple(t) => Json::Array(t.iter().map(Value::to_json).collect()),
        }
    }

    pub fn from_json(j: &Json) -> Option<Value> {
        match j {
            Json::Bool(b) => Some(Value::Bool(*b)),
            Json::Number(n) => n.as_f64().map(Value::Num),
            Json::String(s) => Some(Value::sym(s)),
            Json::Array(items) => items.iter().map(Value::from_json).collect::<Option<Vec<_>>>().map(Value::tuple),
            _ => None,
        }
    }
}

/// JSON number for a float; integral values become JSON integers.
pub fn num_to_json(x: f64) -> Json {
    if x.is_finite() && x.fract() == 0.0 && x.abs() < 9.007_199_254_740_992e15 {
        let i = x as i64;
        if i == 0 {
            return Json::from(0);
        }
        return Json::from(i);
    }
    serde_json::Number::from_f64(x).map(Json::Number).unwrap_or(Json::Null)
}

fn norm_bits(x: f64) -> u64 {
    if x == 0.0 {
        0
    } else {
        x.to_bits()
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Num(a), Value::Num(b)) => norm_bits(*a) == norm_bits(*b),
            (Value::Sym(a), Value::Sym(b)) => a == b,
            (Value::Tuple(a), Value::Tuple(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Value {}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.rank().hash(state);
        match self {
            Value::Bool(b) => b.hash(state),
            Value::Num(x) => norm_bits(*x).hash(state),
            Value::Sym(s) => s.hash(state),
            Value::Tuple(t) => t.hash(state),
        }
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Bool(a), Value::Bool(b)) => a.cmp(b),
            (Value::Num(a), Value::Num(b)) => {
                let a = if *a == 0.0 { 0.0 } else { *a };
                let b = if *b == 0.0 { 0.0 } else { *b };
                a.total_cmp(&b)
            }
            (Value::Sym(a), Value::Sym(b)) => a.cmp(b),
            (Value::Tuple(a), Value::Tuple(b)) => a.iter().cmp(b.iter()),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", crate::dsl::to_canonical_string(&self.to_json()))
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Num(x)
    }
}

impl From<i64> for Value {
    fn from(x: i64) -> Self {
        Value::Num(x as f64)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::sym(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ValueRange {
    /// Finite list of distinct values, in declared order.
    Enum(Vec<Value>),
    /// Real vector space of the given dimension; dimension 1 holds plain numbers.
    Real(usize),
}

impl ValueRange {
    pub fn ints(lo: i64, hi: i64) -> ValueRange {
        ValueRange::Enum((lo..=hi).map(Value::from).collect())
    }

    pub fn bools() -> ValueRange {
        ValueRange::Enum(vec![Value::Bool(false), Value::Bool(true)])
    }

    pub fn syms(names: &[&str]) -> ValueRange {
        ValueRange::Enum(names.iter().map(|s| Value::sym(s)).collect())
    }

    pub fn size(&self) -> Option<usize> {
        match self {
            ValueRange::Enum(v) => Some(v.len()),
            ValueRange::Real(_) => None,
        }
    }
}

#[derive(Debug)]
pub struct Signature {
    names: Vec<String>,
    ranges: Vec<ValueRange>,
    by_name: HashMap<String, VarId>,
    ranks: Vec<HashMap<Value, usize>>,
}

impl PartialEq for Signature {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names && self.ranges == other.ranges
    }
}

impl Signature {
    pub fn new<S: Into<String>>(vars: Vec<(S, ValueRange)>) -> Result<Signature> {
        let mut names = Vec::new();
        let mut ranges = Vec::new();
        let mut by_name = HashMap::new();
        let mut ranks = Vec::new();
        for (i, (name, range)) in vars.into_iter().enumerate() {
            let name = name.into();
            if by_name.insert(name.clone(), i).is_some() {
                return Err(Error::TypeError { path: format!("signature.{name}"), msg: "duplicate variable".into() });
            }
            let mut rank = HashMap::new();
            match &range {
                ValueRange::Enum(vals) => {
                    if vals.is_empty() {
                        return Err(Error::TypeError { path: format!("signature.{name}"), msg: "empty value list".into() });
                    }
                    for (k, v) in vals.iter().enumerate() {
                        if rank.insert(v.clone(), k).is_some() {
                            return Err(Error::TypeError {
                                path: format!("signature.{name}"),
                                msg: format!("duplicate value {v}"),
                            });
                        }
                    }
                }
                ValueRange::Real(d) => {
                    if *d == 0 {
                        return Err(Error::TypeError { path: format!("signature.{name}"), msg: "zero dimension".into() });
                    }
                }
            }
            names.push(name);
            ranges.push(range);
            ranks.push(rank);
        }
        Ok(Signature { names, ranges, by_name, ranks })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, v: VarId) -> &str {
        &self.names[v]
    }

    pub fn range(&self, v: VarId) -> &ValueRange {
        &self.ranges[v]
    }

    pub fn var(&self, name: &str) -> Option<VarId> {
        self.by_name.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<VarId> {
        self.var(name).ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn vars(&self, names: &[&str]) -> Result<Vec<VarId>> {
        names.iter().map(|n| self.require(n)).collect()
    }

    pub fn is_enum(&self, v: VarId) -> bool {
        matches!(self.ranges[v], ValueRange::Enum(_))
    }

    pub fn all_enum(&self) -> bool {
        (0..self.len()).all(|v| self.is_enum(v))
    }

    pub fn enum_values(&self, v: VarId) -> Result<&[Value]> {
        match &self.ranges[v] {
            ValueRange::Enum(vals) => Ok(vals),
            ValueRange::Real(_) => Err(Error::NotEnumerable(self.names[v].clone())),
        }
    }

    pub fn rank(&self, v: VarId, val: &Value) -> Option<usize> {
        self.ranks[v].get(val).copied()
    }

    pub fn contains(&self, v: VarId, val: &Value) -> bool {
        match &self.ranges[v] {
            ValueRange::Enum(_) => self.ranks[v].contains_key(val),
            ValueRange::Real(1) => matches!(val, Value::Num(_)),
            ValueRange::Real(d) => match val {
                Value::Tuple(t) => t.len() == *d && t.iter().all(|x| matches!(x, Value::Num(_))),
                _ => false,
            },
        }
    }

    pub fn check(&self, v: VarId, val: &Value) -> Result<()> {
        if self.contains(v, val) {
            Ok(())
        } else {
            Err(Error::RangeViolation { var: self.names[v].clone(), value: val.to_string() })
        }
    }

    /// First declared value, or the zero vector for real ranges.
    pub fn default_value(&self, v: VarId) -> Value {
        match &self.ranges[v] {
            ValueRange::Enum(vals) => vals[0].clone(),
            ValueRange::Real(1) => Value::Num(0.0),
            ValueRange::Real(d) => Value::vector(&vec![0.0; *d]),
        }
    }

    pub fn default_world(&self) -> World {
        (0..self.len()).map(|v| self.default_value(v)).collect()
    }

    /// Order of values of one variable: declared order for enums.
    pub fn cmp_values(&self, v: VarId, a: &Value, b: &Value) -> Ordering {
        match (self.rank(v, a), self.rank(v, b)) {
            (Some(x), Some(y)) => x.cmp(&y),
            _ => a.cmp(b),
        }
    }

    /// Canonical order of total settings: lexicographic by variable, then value order.
    pub fn cmp_worlds(&self, a: &[Value], b: &[Value]) -> Ordering {
        for v in 0..a.len().min(b.len()) {
            let o = self.cmp_values(v, &a[v], &b[v]);
            if o != Ordering::Equal {
                return o;
            }
        }
        a.len().cmp(&b.len())
    }

    pub fn sort_worlds(&self, worlds: &mut [World]) {
        worlds.sort_by(|a, b| self.cmp_worlds(a, b));
    }

    /// Number of total settings, if every range is finite.
    pub fn space_size(&self, vars: &[VarId]) -> Result<u128> {
        let mut n: u128 = 1;
        for &v in vars {
            let k = self.ranges[v].size().ok_or_else(|| Error::NotEnumerable(self.names[v].clone()))?;
            n = n.saturating_mul(k as u128);
        }
        Ok(n)
    }

    pub fn world_to_json(&self, w: &[Value]) -> Json {
        let mut map = serde_json::Map::new();
        for (v, val) in w.iter().enumerate() {
            map.insert(self.names[v].clone(), val.to_json());
        }
        Json::Object(map)
    }
}

/// Partial (or total) assignment of values to variables.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Setting(BTreeMap<VarId, Value>);

impl Setting {
    pub fn new() -> Setting {
        Setting(BTreeMap::new())
    }

    pub fn from_pairs<I: IntoIterator<Item = (VarId, Value)>>(pairs: I) -> Setting {
        Setting(pairs.into_iter().collect())
    }

    /// Builds a setting from variable names, checking names and ranges.
    pub fn named(sig: &Signature, pairs: &[(&str, Value)]) -> Result<Setting> {
        let mut s = Setting::new();
        for (name, val) in pairs {
            let v = sig.require(name)?;
            sig.check(v, val)?;
            s.insert(v, val.clone());
        }
        Ok(s)
    }

    pub fn from_world(w: &[Value]) -> Setting {
        Setting(w.iter().cloned().enumerate().collect())
    }

    pub fn get(&self, v: VarId) -> Option<&Value> {
        self.0.get(&v)
    }

    pub fn insert(&mut self, v: VarId, val: Value) {
        self.0.insert(v, val);
    }

    pub fn remove(&mut self, v: VarId) -> Option<Value> {
        self.0.remove(&v)
    }

    pub fn contains(&self, v: VarId) -> bool {
        self.0.contains_key(&v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (VarId, &Value)> {
        self.0.iter().map(|(k, v)| (*k, v))
    }

    pub fn vars(&self) -> Vec<VarId> {
        self.0.keys().copied().collect()
    }

    /// Right-biased union: entries of `later` win.
    pub fn overwrite(&self, later: &Setting) -> Setting {
        let mut out = self.clone();
        for (v, val) in later.iter() {
            out.insert(v, val.clone());
        }
        out
    }

    /// `self ⊆ other` as sets of (variable, value) pairs.
    pub fn is_subset_of(&self, other: &Setting) -> bool {
        self.iter().all(|(v, val)| other.get(v) == Some(val))
    }

    pub fn project(&self, sig: &Signature, vars: &[VarId]) -> Result<Setting> {
        let mut out = Setting::new();
        for &v in vars {
            let val = self.get(v).ok_or_else(|| Error::MissingVariable(sig.name(v).to_string()))?;
            out.insert(v, val.clone());
        }
        Ok(out)
    }

    pub fn to_world(&self, sig: &Signature) -> Option<World> {
        (0..sig.len()).map(|v| self.get(v).cloned()).collect()
    }

    pub fn to_json(&self, sig: &Signature) -> Json {
        let mut map = serde_json::Map::new();
        for (v, val) in self.iter() {
            map.insert(sig.name(v).to_string(), val.to_json());
        }
        Json::Object(map)
    }

    pub fn from_json(sig: &Signature, j: &Json) -> Result<Setting> {
        let obj = j.as_object().ok_or_else(|| Error::TypeError { path: "setting".into(), msg: "expected an object".into() })?;
        let mut s = Setting::new();
        for (name, jv) in obj {
            let v = sig.var(name).ok_or_else(|| Error::UndeclaredVariable(name.clone()))?;
            let val = Value::from_json(jv)
                .ok_or_else(|| Error::TypeError { path: format!("setting.{name}"), msg: "not a value".into() })?;
            sig.check(v, &val)?;
            s.insert(v, val);
        }
        Ok(s)
    }
}

impl FromIterator<(VarId, Value)> for Setting {
    fn from_iter<T: IntoIterator<Item = (VarId, Value)>>(iter: T) -> Self {
        Setting(iter.into_iter().collect())
    }
}

/// Restriction of a total setting to `vars`.
pub fn project_world(w: &[Value], vars: &[VarId]) -> Setting {
    vars.iter().map(|&v| (v, w[v].clone())).collect()
}

/// Worlds equal up to an absolute tolerance on numbers.
pub fn worlds_approx_eq(a: &[Value], b: &[Value], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.approx_eq(y, tol))
}

/// Set equality of solution sets with tolerance.
pub fn world_sets_eq(a: &[World], b: &[World], tol: f64) -> bool {
    if tol == 0.0 {
        if a.len() != b.len() {
            return false;
        }
        let mut x: Vec<&World> = a.iter().collect();
        let mut y: Vec<&World> = b.iter().collect();
        x.sort();
        x.dedup();
        y.sort();
        y.dedup();
        return x == y;
    }
    a.iter().all(|w| b.iter().any(|u| worlds_approx_eq(w, u, tol)))
        && b.iter().all(|w| a.iter().any(|u| worlds_approx_eq(w, u, tol)))
}

pub type Sig = Arc<Signature>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negative_zero_equals_zero() {
        assert_eq!(Value::Num(-0.0), Value::Num(0.0));
        let mut h1 = std::collections::hash_map::DefaultHasher::new();
        let mut h2 = std::collections::hash_map::DefaultHasher::new();
        Value::Num(-0.0).hash(&mut h1);
        Value::Num(0.0).hash(&mut h2);
        assert_eq!(h1.finish(), h2.finish());
    }

    #[test]
    fn signature_rejects_duplicates() {
        assert!(Signature::new(vec![("X", ValueRange::bools()), ("X", ValueRange::bools())]).is_err());
        assert!(Signature::new(vec![("X", ValueRange::Enum(vec![Value::Num(1.0), Value::Num(1.0)]))]).is_err());
        assert!(Signature::new(vec![("X", ValueRange::Enum(vec![]))]).is_err());
    }

    #[test]
    fn projection() {
        let sig = Signature::new(vec![("X", ValueRange::ints(0, 3)), ("Y", ValueRange::ints(0, 3))]).unwrap();
        let s = Setting::named(&sig, &[("X", 1.0.into()), ("Y", 2.0.into())]).unwrap();
        let p = s.project(&sig, &[0]).unwrap();
        assert_eq!(p, Setting::named(&sig, &[("X", 1.0.into())]).unwrap());
        assert_eq!(s.project(&sig, &[0, 1]).unwrap(), s);
        assert_eq!(p.project(&sig, &[1]), Err(Error::MissingVariable("Y".into())));
    }

    #[test]
    fn canonical_world_order_follows_declared_values() {
        let sig = Signature::new(vec![("X", ValueRange::syms(&["b", "a"]))]).unwrap();
        let mut ws = vec![vec![Value::sym("a")], vec![Value::sym("b")]];
        sig.sort_worlds(&mut ws);
        assert_eq!(ws[0][0], Value::sym("b"));
    }
}
