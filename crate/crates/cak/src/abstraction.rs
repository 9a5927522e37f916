//! Alignments, the maps they induce, and commuting-diagram verification.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::{Arc, Mutex, RwLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde_json::{json, Value as Json};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::intervene::{compose, solve_under, Intervention, Interventional};
use crate::model::{budget, for_each_assignment, inverse_project, CausalModel, Mechanism, Witness};
use crate::value::{world_sets_eq, Setting, Sig, Signature, Value, ValueRange, VarId, World};

/// Finite map from cell values to high values.
#[derive(Debug)]
pub struct MapTable {
    rows: Vec<(Vec<Value>, Value)>,
    index: HashMap<Vec<Value>, Value>,
    reverse: HashMap<Value, Vec<Vec<Value>>>,
}

impl MapTable {
    /// Later rows with an already-present key are ignored.
    pub fn new(rows: Vec<(Vec<Value>, Value)>) -> MapTable {
        let mut index = HashMap::with_capacity(rows.len());
        let mut kept = Vec::with_capacity(rows.len());
        let mut reverse: HashMap<Value, Vec<Vec<Value>>> = HashMap::new();
        for (k, v) in rows {
            if index.contains_key(&k) {
                continue;
            }
            index.insert(k.clone(), v.clone());
            reverse.entry(v.clone()).or_default().push(k.clone());
            kept.push((k, v));
        }
        MapTable { rows: kept, index, reverse }
    }

    pub fn rows(&self) -> &[(Vec<Value>, Value)] {
        &self.rows
    }

    pub fn get(&self, key: &[Value]) -> Option<&Value> {
        self.index.get(key)
    }

    pub fn image(&self) -> impl Iterator<Item = &Value> {
        self.reverse.keys()
    }
}

pub type BuiltinFn = Arc<dyn Fn(&[Value]) -> Option<Value> + Send + Sync>;

/// Partial map from the values of a cell to the values of a high variable.
#[derive(Clone)]
pub enum CellMap {
    /// A single-variable cell maps to its value, a larger cell to the tuple of its values.
    Identity,
    Table { table: Arc<MapTable>, induced: bool },
    /// `Var(k)` refers to the k-th variable of the cell.
    Expr(Expr),
    /// Label of the largest coordinate; ties go to the first (or last) of the tied coordinates.
    Argmax { labels: Vec<Value>, tie_last: bool },
    /// The cell is one tuple-valued variable whose components feed the inner map.
    Unpack(Arc<CellMap>),
    Builtin { name: String, f: BuiltinFn },
}

impl fmt::Debug for CellMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellMap::Identity => write!(f, "Identity"),
            CellMap::Table { table, induced } => write!(f, "Table({} rows, induced={induced})", table.rows.len()),
            CellMap::Expr(e) => write!(f, "Expr({e:?})"),
            CellMap::Argmax { labels, tie_last } => write!(f, "Argmax({labels:?}, tie_last={tie_last})"),
            CellMap::Unpack(inner) => write!(f, "Unpack({inner:?})"),
            CellMap::Builtin { name, .. } => write!(f, "Builtin({name})"),
        }
    }
}

impl CellMap {
    pub fn table(rows: Vec<(Vec<Value>, Value)>) -> CellMap {
        CellMap::Table { table: Arc::new(MapTable::new(rows)), induced: false }
    }

    pub fn builtin<F>(name: impl Into<String>, f: F) -> CellMap
    where
        F: Fn(&[Value]) -> Option<Value> + Send + Sync + 'static,
    {
        CellMap::Builtin { name: name.into(), f: Arc::new(f) }
    }

    pub fn apply(&self, vals: &[Value]) -> Option<Value> {
        match self {
            CellMap::Identity => {
                if vals.len() == 1 {
                    Some(vals[0].clone())
                } else {
                    Some(Value::tuple(vals.to_vec()))
                }
            }
            CellMap::Table { table, .. } => table.get(vals).cloned(),
            CellMap::Expr(e) => e.eval(vals).ok(),
            CellMap::Argmax { labels, tie_last } => {
                if labels.len() != vals.len() || vals.is_empty() {
                    return None;
                }
                let mut best = 0;
                let mut best_x = vals[0].as_num()?;
                for (i, v) in vals.iter().enumerate().skip(1) {
                    let x = v.as_num()?;
                    if x > best_x || (*tie_last && x == best_x) {
                        best = i;
                        best_x = x;
                    }
                }
                Some(labels[best].clone())
            }
            CellMap::Unpack(inner) => match vals {
                [Value::Tuple(t)] => inner.apply(t),
                _ => inner.apply(vals),
            },
            CellMap::Builtin { f, .. } => f(vals),
        }
    }
}

/// Cells of low variables, one per high variable plus a forgotten cell, with
/// a value map per high variable.
pub struct Alignment {
    pub low: Sig,
    pub high: Sig,
    pub cells: Vec<Vec<VarId>>,
    pub bot: Vec<VarId>,
    pub maps: Vec<CellMap>,
    /// Optional finite lists of cell values, used to invert maps over real cells.
    pub candidates: Vec<Option<Arc<Vec<Vec<Value>>>>>,
    cell_of: Vec<Option<VarId>>,
    preimage_cache: Mutex<HashMap<(VarId, Value), Arc<Vec<Vec<Value>>>>>,
}

impl fmt::Debug for Alignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Alignment").field("cells", &self.cells).field("bot", &self.bot).field("maps", &self.maps).finish()
    }
}

impl Clone for Alignment {
    fn clone(&self) -> Self {
        Alignment {
            low: self.low.clone(),
            high: self.high.clone(),
            cells: self.cells.clone(),
            bot: self.bot.clone(),
            maps: self.maps.clone(),
            candidates: self.candidates.clone(),
            cell_of: self.cell_of.clone(),
            preimage_cache: Mutex::new(HashMap::new()),
        }
    }
}

impl Alignment {
    pub fn new(low: Sig, high: Sig, cells: Vec<Vec<VarId>>, bot: Vec<VarId>, maps: Vec<CellMap>) -> Result<Alignment> {
        if cells.len() != high.len() || maps.len() != high.len() {
            return Err(Error::PartitionError(format!(
                "{} cells and {} maps for {} high variables",
                cells.len(),
                maps.len(),
                high.len()
            )));
        }
        let mut cell_of: Vec<Option<VarId>> = vec![None; low.len()];
        let mut seen = vec![false; low.len()];
        let mut mark = |v: VarId, owner: Option<VarId>, seen: &mut Vec<bool>| -> Result<()> {
            if v >= low.len() {
                return Err(Error::PartitionError(format!("unknown low variable #{v}")));
            }
            if seen[v] {
                return Err(Error::PartitionError(format!("`{}` appears in more than one cell", low.name(v))));
            }
            seen[v] = true;
            cell_of[v] = owner;
            Ok(())
        };
        for (x, cell) in cells.iter().enumerate() {
            if cell.is_empty() {
                return Err(Error::PartitionError(format!("cell of `{}` is empty", high.name(x))));
            }
            for &v in cell {
                mark(v, Some(x), &mut seen)?;
            }
        }
        for &v in &bot {
            mark(v, None, &mut seen)?;
        }
        if let Some(v) = seen.iter().position(|s| !s) {
            return Err(Error::PartitionError(format!("`{}` is not covered by any cell", low.name(v))));
        }
        let n = high.len();
        Ok(Alignment {
            low,
            high,
            cells,
            bot,
            maps,
            candidates: vec![None; n],
            cell_of,
            preimage_cache: Mutex::new(HashMap::new()),
        })
    }

    /// Singleton cells with identity maps between equal signatures.
    pub fn identity(sig: Sig) -> Alignment {
        let n = sig.len();
        Alignment::new(sig.clone(), sig, (0..n).map(|v| vec![v]).collect(), Vec::new(), vec![CellMap::Identity; n])
            .unwrap_or_else(|_| unreachable!("singleton cells always partition"))
    }

    pub fn with_candidates(mut self, x: VarId, values: Vec<Vec<Value>>) -> Alignment {
        self.candidates[x] = Some(Arc::new(values));
        self
    }

    pub fn cell_of(&self, low_var: VarId) -> Option<VarId> {
        self.cell_of[low_var]
    }

    pub fn cell_values(&self, x: VarId, w: &[Value]) -> Vec<Value> {
        self.cells[x].iter().map(|&v| w[v].clone()).collect()
    }

    /// Value of one high variable, if the cell value lies in the map's domain.
    pub fn map_cell(&self, x: VarId, vals: &[Value]) -> Option<Value> {
        self.maps[x].apply(vals).filter(|v| self.high.contains(x, v))
    }

    /// As `map_cell`, with an error for values outside the domain.
    pub fn map_strict(&self, x: VarId, vals: &[Value]) -> Result<Value> {
        self.map_cell(x, vals).ok_or_else(|| Error::UnrealizedValue {
            cell: self.high.name(x).to_string(),
            value: Value::tuple(vals.to_vec()).to_string(),
        })
    }

    pub fn tau(&self, w: &[Value]) -> Option<World> {
        (0..self.high.len()).map(|x| self.map_cell(x, &self.cell_values(x, w))).collect()
    }

    /// Cellwise image of a hard intervention: defined when the targets form
    /// whole cells and every cell value lies in its map's domain.
    pub fn omega(&self, i: &Setting) -> Option<Setting> {
        let mut touched: Vec<VarId> = Vec::new();
        for (v, _) in i.iter() {
            let x = self.cell_of.get(v).copied().flatten()?;
            if !touched.contains(&x) {
                touched.push(x);
            }
        }
        let mut out = Setting::new();
        for x in touched {
            let vals: Option<Vec<Value>> = self.cells[x].iter().map(|&v| i.get(v).cloned()).collect();
            out.insert(x, self.map_cell(x, &vals?)?);
        }
        Some(out)
    }

    /// Image of a hard intervention by the set condition: the τ-image of all
    /// completions of `i` must be exactly all completions of the result.
    pub fn omega_strict(&self, i: &Setting) -> Result<Option<Setting>> {
        let mut images: HashSet<World> = HashSet::new();
        for t in inverse_project(i, &self.low)? {
            match self.tau(&t) {
                Some(h) => {
                    images.insert(h);
                }
                None => return Ok(None),
            }
        }
        let Some(first) = images.iter().next().cloned() else {
            return Ok(None);
        };
        let fixed: Setting =
            (0..self.high.len()).filter(|&x| images.iter().all(|h| h[x] == first[x])).map(|x| (x, first[x].clone())).collect();
        let free: Vec<VarId> = (0..self.high.len()).filter(|x| !fixed.contains(*x)).collect();
        let size = self.high.space_size(&free)?;
        Ok((size == images.len() as u128).then_some(fixed))
    }

    /// Checks that every map reaches every value of its high variable, where
    /// the cell can be enumerated.
    pub fn check_surjective(&self) -> Result<()> {
        for x in 0..self.high.len() {
            let Ok(targets) = self.high.enum_values(x) else { continue };
            let image: HashSet<Value> = match &self.maps[x] {
                CellMap::Table { table, .. } => table.image().cloned().collect(),
                CellMap::Identity if self.cells[x].len() == 1 => {
                    let v = self.cells[x][0];
                    match self.low.enum_values(v) {
                        Ok(vals) => vals.iter().cloned().collect(),
                        Err(_) => continue,
                    }
                }
                _ => match self.enumerate_cell(x)? {
                    Some(vals) => vals.iter().filter_map(|c| self.map_cell(x, c)).collect(),
                    None => continue,
                },
            };
            if let Some(miss) = targets.iter().find(|t| !image.contains(t)) {
                return Err(Error::SurjectivityError(format!("{} (value {miss} unreachable)", self.high.name(x))));
            }
        }
        Ok(())
    }

    /// All cell values, from declared candidates or by enumeration. `None`
    /// when the cell has real-valued members and no candidates.
    pub(crate) fn enumerate_cell(&self, x: VarId) -> Result<Option<Arc<Vec<Vec<Value>>>>> {
        if let Some(c) = &self.candidates[x] {
            return Ok(Some(c.clone()));
        }
        let cell = &self.cells[x];
        if !cell.iter().all(|&v| self.low.is_enum(v)) {
            return Ok(None);
        }
        let size = self.low.space_size(cell)?;
        if size > budget() as u128 {
            return Err(Error::BudgetExceeded { size, budget: budget() });
        }
        let domains: Vec<&[Value]> = cell.iter().map(|&v| self.low.enum_values(v)).collect::<Result<_>>()?;
        let mut out = Vec::with_capacity(size as usize);
        for_each_assignment(&domains, |vals| {
            out.push(vals.to_vec());
            Ok(true)
        })?;
        Ok(Some(Arc::new(out)))
    }

    /// Cell values that map to `value`.
    pub fn preimages(&self, x: VarId, value: &Value) -> Result<Arc<Vec<Vec<Value>>>> {
        let key = (x, value.clone());
        if let Some(hit) = self.preimage_cache.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
            return Ok(hit.clone());
        }
        let out = Arc::new(self.compute_preimages(x, value)?);
        self.preimage_cache.lock().unwrap_or_else(|e| e.into_inner()).insert(key, out.clone());
        Ok(out)
    }

    fn compute_preimages(&self, x: VarId, value: &Value) -> Result<Vec<Vec<Value>>> {
        let cell = &self.cells[x];
        let fits = |vals: &[Value]| vals.iter().zip(cell).all(|(val, &v)| self.low.contains(v, val));
        match &self.maps[x] {
            CellMap::Identity => {
                let vals = if cell.len() == 1 {
                    vec![value.clone()]
                } else {
                    match value.as_tuple() {
                        Some(t) if t.len() == cell.len() => t.to_vec(),
                        _ => return Ok(Vec::new()),
                    }
                };
                Ok(if fits(&vals) { vec![vals] } else { Vec::new() })
            }
            CellMap::Table { table, .. } => {
                Ok(table.reverse.get(value).map(|ks| ks.iter().filter(|k| fits(k)).cloned().collect()).unwrap_or_default())
            }
            CellMap::Unpack(inner) if self.candidates[x].is_none() && !self.low.is_enum(cell[0]) => match inner.as_ref() {
                CellMap::Table { table, .. } => Ok(table
                    .reverse
                    .get(value)
                    .map(|ks| ks.iter().map(|k| vec![Value::tuple(k.clone())]).filter(|k| fits(k)).collect())
                    .unwrap_or_default()),
                CellMap::Identity => Ok(if fits(std::slice::from_ref(value)) { vec![vec![value.clone()]] } else { Vec::new() }),
                _ => Err(Error::NotEnumerable(self.high.name(x).to_string())),
            },
            _ => match self.enumerate_cell(x)? {
                Some(all) => Ok(all.iter().filter(|c| self.map_cell(x, c).as_ref() == Some(value)).cloned().collect()),
                None => Err(Error::NotEnumerable(self.high.name(x).to_string())),
            },
        }
    }
}

pub type TauFn = Arc<dyn Fn(&[Value]) -> Option<World> + Send + Sync>;
pub type OmegaFn = Arc<dyn Fn(&Intervention) -> Option<Intervention> + Send + Sync>;

#[derive(Clone, Debug)]
pub enum Provenance {
    Alignment(Arc<Alignment>),
    Bijective(String),
    Custom(String),
}

/// A setting map τ with an intervention map ω.
#[derive(Clone)]
pub struct TauOmega {
    pub low: Sig,
    pub high: Sig,
    pub tau: TauFn,
    pub omega: OmegaFn,
    pub provenance: Provenance,
}

impl fmt::Debug for TauOmega {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TauOmega({:?})", self.provenance)
    }
}

/// Maps a sequence elementwise through `hard` and composes the images.
fn omega_seq(iv: &Intervention, hard: &dyn Fn(&Setting) -> Option<Setting>) -> Option<Intervention> {
    match iv {
        Intervention::Hard(s) => hard(s).map(Intervention::Hard),
        Intervention::General(g) => g.omega_image.clone().map(Intervention::Hard),
        Intervention::Seq(items) => {
            let mut acc = Intervention::null();
            for it in items {
                acc = compose(&acc, &omega_seq(it, hard)?);
            }
            Some(acc)
        }
        Intervention::Soft(_) => None,
    }
}

impl TauOmega {
    pub fn from_alignment(a: Arc<Alignment>) -> TauOmega {
        let ta = a.clone();
        let oa = a.clone();
        TauOmega {
            low: a.low.clone(),
            high: a.high.clone(),
            tau: Arc::new(move |w| ta.tau(w)),
            omega: Arc::new(move |iv| omega_seq(iv, &|s| oa.omega(s))),
            provenance: Provenance::Alignment(a),
        }
    }

    /// τ and ω both the identity, between models sharing a signature.
    pub fn identity(sig: Sig) -> TauOmega {
        TauOmega {
            low: sig.clone(),
            high: sig,
            tau: Arc::new(|w| Some(w.to_vec())),
            omega: Arc::new(|iv| Some(iv.clone())),
            provenance: Provenance::Custom("identity".into()),
        }
    }

    pub fn from_bijection(b: Arc<Bijection>) -> TauOmega {
        let tb = b.clone();
        let ob = b.clone();
        TauOmega {
            low: b.low.clone(),
            high: b.high.clone(),
            tau: Arc::new(move |w| Some((tb.forward)(w))),
            omega: Arc::new(move |iv| omega_seq(iv, &|s| ob.map_hard(s))),
            provenance: Provenance::Bijective(b.label.clone()),
        }
    }
}

/// Finite, indexable suite of interventions with optional weights.
pub trait Suite: Sync {
    fn len(&self) -> usize;
    fn item(&self, k: usize) -> Intervention;
    fn weight(&self, _k: usize) -> f64 {
        1.0
    }
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Suite for Vec<Intervention> {
    fn len(&self) -> usize {
        <[Intervention]>::len(self)
    }
    fn item(&self, k: usize) -> Intervention {
        self[k].clone()
    }
}

#[derive(Clone, Debug)]
pub struct WeightedSuite {
    pub items: Vec<Intervention>,
    pub weights: Vec<f64>,
}

impl Suite for WeightedSuite {
    fn len(&self) -> usize {
        self.items.len()
    }
    fn item(&self, k: usize) -> Intervention {
        self.items[k].clone()
    }
    fn weight(&self, k: usize) -> f64 {
        self.weights.get(k).copied().unwrap_or(1.0)
    }
}

/// Hard interventions that set any subset of cells to low values the
/// alignment maps, in mixed-radix order (first cell slowest). Option 0 of
/// each cell leaves it alone.
#[derive(Clone, Debug)]
pub struct CellSuite {
    cells: Vec<Vec<VarId>>,
    options: Vec<Vec<Vec<Value>>>,
    len: usize,
}

impl CellSuite {
    pub fn new(cells: Vec<Vec<VarId>>, options: Vec<Vec<Vec<Value>>>) -> Result<CellSuite> {
        if cells.len() != options.len() {
            return Err(Error::PartitionError(format!("{} cells but {} option lists", cells.len(), options.len())));
        }
        let mut len: u128 = 1;
        for o in &options {
            len = len.saturating_mul(o.len() as u128 + 1);
        }
        if len > budget() as u128 {
            return Err(Error::BudgetExceeded { size: len, budget: budget() });
        }
        Ok(CellSuite { cells, options, len: len as usize })
    }

    /// Every mapped value of every non-empty cell of `a`.
    pub fn from_alignment(a: &Alignment) -> Result<CellSuite> {
        let mut cells = Vec::new();
        let mut options = Vec::new();
        for x in 0..a.high.len() {
            let all = a.enumerate_cell(x)?.ok_or_else(|| Error::NotEnumerable(a.high.name(x).to_string()))?;
            cells.push(a.cells[x].clone());
            options.push(all.iter().filter(|c| a.map_cell(x, c).is_some()).cloned().collect());
        }
        CellSuite::new(cells, options)
    }

    pub fn setting(&self, mut k: usize) -> Setting {
        let mut s = Setting::new();
        for c in (0..self.cells.len()).rev() {
            let radix = self.options[c].len() + 1;
            let pick = k % radix;
            k /= radix;
            if pick > 0 {
                for (&v, val) in self.cells[c].iter().zip(&self.options[c][pick - 1]) {
                    s.insert(v, val.clone());
                }
            }
        }
        s
    }
}

impl Suite for CellSuite {
    fn len(&self) -> usize {
        self.len
    }
    fn item(&self, k: usize) -> Intervention {
        Intervention::Hard(self.setting(k))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FailureRecord {
    pub index: usize,
    pub intervention: Json,
    pub mapped: Json,
    pub expected: Json,
    pub actual: Json,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AbstractionReport {
    pub suite_size: usize,
    pub passed_count: usize,
    pub failures: Vec<FailureRecord>,
}

impl AbstractionReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn first_counterexample(&self) -> Option<&FailureRecord> {
        self.failures.first()
    }

    pub fn to_json(&self) -> Json {
        json!({
            "suite_size": self.suite_size,
            "passed": self.passed(),
            "failures": self.failures.iter().map(|f| json!({
                "intervention": f.intervention,
                "expected": f.expected,
                "actual": f.actual,
            })).collect::<Vec<_>>(),
        })
    }
}

/// Caches high-level solutions of hard interventions.
pub(crate) struct HighCache<'a> {
    high: &'a CausalModel,
    cache: RwLock<HashMap<Setting, Arc<Vec<World>>>>,
}

impl<'a> HighCache<'a> {
    pub(crate) fn new(high: &'a CausalModel) -> Self {
        HighCache { high, cache: RwLock::new(HashMap::new()) }
    }

    pub(crate) fn solve(&self, iv: &Intervention) -> Result<Arc<Vec<World>>> {
        let Intervention::Hard(s) = iv else {
            return Ok(Arc::new(solve_under(self.high, iv)?));
        };
        if let Some(hit) = self.cache.read().unwrap_or_else(|e| e.into_inner()).get(s) {
            return Ok(hit.clone());
        }
        let sols = Arc::new(self.high.solve_with(s)?);
        self.cache.write().unwrap_or_else(|e| e.into_inner()).insert(s.clone(), sols.clone());
        Ok(sols)
    }
}

/// Low solutions mapped by τ (`None` where τ is undefined) next to the high
/// solutions of the mapped intervention.
pub(crate) struct Evaluated {
    pub mapped: Intervention,
    pub tau_low: Vec<Option<World>>,
    pub high: Arc<Vec<World>>,
}

pub(crate) fn evaluate_item(
    low: &CausalModel,
    to: &TauOmega,
    cache: &HighCache<'_>,
    iv: &Intervention,
) -> Result<Evaluated> {
    let mapped = (to.omega)(iv).ok_or_else(|| Error::DomainViolation(crate::dsl::to_canonical_string(&iv.to_json(&to.low))))?;
    let lows = solve_under(low, iv)?;
    let tau_low: Vec<Option<World>> = lows.iter().map(|w| (to.tau)(w)).collect();
    let high = cache.solve(&mapped)?;
    Ok(Evaluated { mapped, tau_low, high })
}

/// Mapped low worlds as a canonical set, or `None` when τ is undefined somewhere.
pub(crate) fn tau_set(to: &TauOmega, tau_low: &[Option<World>]) -> Option<Vec<World>> {
    let mut out: Vec<World> = tau_low.iter().cloned().collect::<Option<_>>()?;
    to.high.sort_worlds(&mut out);
    out.dedup();
    Some(out)
}

fn worlds_json(sig: &Signature, ws: &[World]) -> Json {
    Json::Array(ws.iter().map(|w| sig.world_to_json(w)).collect())
}

/// Checks τ(Solve(low_i)) = Solve(high_ω(i)) for every suite item.
pub fn verify_exact(
    low: &CausalModel,
    high: &CausalModel,
    to: &TauOmega,
    suite: &dyn Suite,
    tol: f64,
) -> Result<AbstractionReport> {
    let cache = HighCache::new(high);
    let outcomes: Vec<Result<Option<FailureRecord>>> = (0..suite.len())
        .into_par_iter()
        .map(|k| {
            let iv = suite.item(k);
            let ev = evaluate_item(low, to, &cache, &iv)?;
            let ok = match tau_set(to, &ev.tau_low) {
                Some(mapped_low) => world_sets_eq(&mapped_low, &ev.high, tol),
                None => false,
            };
            if ok {
                return Ok(None);
            }
            let actual = Json::Array(
                ev.tau_low.iter().map(|w| w.as_ref().map_or(Json::Null, |w| to.high.world_to_json(w))).collect(),
            );
            Ok(Some(FailureRecord {
                index: k,
                intervention: iv.to_json(&to.low),
                mapped: ev.mapped.to_json(&to.high),
                expected: worlds_json(&to.high, &ev.high),
                actual,
            }))
        })
        .collect();
    let mut failures = Vec::new();
    for o in outcomes {
        if let Some(f) = o? {
            failures.push(f);
        }
    }
    Ok(AbstractionReport { suite_size: suite.len(), passed_count: suite.len() - failures.len(), failures })
}

pub fn verify_constructive(
    low: &CausalModel,
    high: &CausalModel,
    a: Arc<Alignment>,
    suite: &dyn Suite,
    tol: f64,
) -> Result<AbstractionReport> {
    verify_exact(low, high, &TauOmega::from_alignment(a), suite, tol)
}

pub type WorldMap = Arc<dyn Fn(&[Value]) -> World + Send + Sync>;

/// Blockwise bijection between total settings of two signatures. Each block
/// pairs low variables with high variables; the high values of a block
/// depend only on the low values of the same block.
pub struct Bijection {
    pub low: Sig,
    pub high: Sig,
    pub blocks: Vec<(Vec<VarId>, Vec<VarId>)>,
    pub forward: WorldMap,
    pub inverse: WorldMap,
    pub label: String,
    low_block: Vec<usize>,
    high_block: Vec<usize>,
}

impl fmt::Debug for Bijection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bijection({}, blocks {:?})", self.label, self.blocks)
    }
}

fn block_index(n: usize, blocks: &[Vec<VarId>], side: &str) -> Result<Vec<usize>> {
    let mut idx = vec![usize::MAX; n];
    for (b, vars) in blocks.iter().enumerate() {
        for &v in vars {
            if v >= n || idx[v] != usize::MAX {
                return Err(Error::PartitionError(format!("{side} variable #{v} is out of range or repeated")));
            }
            idx[v] = b;
        }
    }
    if let Some(v) = idx.iter().position(|&b| b == usize::MAX) {
        return Err(Error::PartitionError(format!("{side} variable #{v} is in no block")));
    }
    Ok(idx)
}

impl Bijection {
    pub fn new(
        low: Sig,
        high: Sig,
        blocks: Vec<(Vec<VarId>, Vec<VarId>)>,
        forward: WorldMap,
        inverse: WorldMap,
        label: impl Into<String>,
    ) -> Result<Bijection> {
        let low_block = block_index(low.len(), &blocks.iter().map(|b| b.0.clone()).collect::<Vec<_>>(), "low")?;
        let high_block = block_index(high.len(), &blocks.iter().map(|b| b.1.clone()).collect::<Vec<_>>(), "high")?;
        Ok(Bijection { low, high, blocks, forward, inverse, label: label.into(), low_block, high_block })
    }

    pub fn identity(sig: Sig) -> Bijection {
        let blocks = (0..sig.len()).map(|v| (vec![v], vec![v])).collect();
        Bijection::new(sig.clone(), sig, blocks, Arc::new(|w| w.to_vec()), Arc::new(|w| w.to_vec()), "identity")
            .unwrap_or_else(|_| unreachable!("singleton blocks always partition"))
    }

    pub fn low_block(&self, v: VarId) -> usize {
        self.low_block[v]
    }

    pub fn high_block(&self, v: VarId) -> usize {
        self.high_block[v]
    }

    /// Image of a hard intervention that covers whole low blocks.
    pub fn map_hard(&self, s: &Setting) -> Option<Setting> {
        let mut touched: Vec<usize> = s.iter().map(|(v, _)| self.low_block[v]).collect();
        touched.sort_unstable();
        touched.dedup();
        let mut w = self.low.default_world();
        for &b in &touched {
            for &v in &self.blocks[b].0 {
                w[v] = s.get(v)?.clone();
            }
        }
        let h = (self.forward)(&w);
        Some(touched.iter().flat_map(|&b| self.blocks[b].1.iter().map(|&x| (x, h[x].clone()))).collect())
    }

    /// Checks the round trip both ways on `samples` random settings, and on
    /// every setting of an enumerable side within budget.
    pub fn check_inverse(&self, samples: usize, seed: u64, tol: f64) -> Result<()> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let check_low = |t: &World| -> Result<()> {
            let back = (self.inverse)(&(self.forward)(t));
            if !crate::value::worlds_approx_eq(&back, t, tol) {
                return Err(Error::NotInverse(crate::dsl::to_canonical_string(&self.low.world_to_json(t))));
            }
            Ok(())
        };
        let check_high = |t: &World| -> Result<()> {
            let back = (self.forward)(&(self.inverse)(t));
            if !crate::value::worlds_approx_eq(&back, t, tol) {
                return Err(Error::NotInverse(crate::dsl::to_canonical_string(&self.high.world_to_json(t))));
            }
            Ok(())
        };
        for _ in 0..samples {
            check_low(&random_world(&self.low, &mut rng))?;
            check_high(&random_world(&self.high, &mut rng))?;
        }
        for (sig, high_side) in [(&self.low, false), (&self.high, true)] {
            let all: Vec<VarId> = (0..sig.len()).collect();
            if sig.all_enum() && sig.space_size(&all)? <= budget() as u128 {
                for t in inverse_project(&Setting::new(), sig)? {
                    if high_side {
                        check_high(&t)?;
                    } else {
                        check_low(&t)?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Uniform enum values, reals uniform in [-2, 2].
pub fn random_world(sig: &Signature, rng: &mut impl Rng) -> World {
    (0..sig.len())
        .map(|v| match sig.range(v) {
            ValueRange::Enum(vals) => vals[rng.gen_range(0..vals.len())].clone(),
            ValueRange::Real(1) => Value::Num(rng.gen_range(-2.0..2.0)),
            ValueRange::Real(d) => Value::vector(&(0..*d).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<_>>()),
        })
        .collect()
}

pub const INVERSE_SAMPLES: usize = 1000;
pub const INVERSE_TOL: f64 = 1e-9;

/// Low parents of a block's members, outside the block.
fn block_low_parents(m: &CausalModel, members: &[VarId]) -> Vec<VarId> {
    let mut ps: Vec<VarId> = members.iter().flat_map(|&v| m.parents(v).to_vec()).collect();
    ps.sort_unstable();
    ps.dedup();
    ps
}

/// The model seen through `bij`: each high variable applies the low
/// mechanisms of its block and maps the result forward.
pub fn bijective_translate(m: &CausalModel, bij: Arc<Bijection>) -> Result<CausalModel> {
    bij.check_inverse(INVERSE_SAMPLES, 0, INVERSE_TOL)?;
    let mut mechs = Vec::with_capacity(bij.high.len());
    for x in 0..bij.high.len() {
        let b = bij.high_block(x);
        let members = bij.blocks[b].0.clone();
        let mut parents: Vec<VarId> = block_low_parents(m, &members)
            .into_iter()
            .flat_map(|p| bij.blocks[bij.low_block(p)].1.clone())
            .collect();
        parents.sort_unstable();
        parents.dedup();
        let m = m.clone();
        let bij = bij.clone();
        mechs.push(Mechanism::native(parents, format!("{} via {}", bij.high.name(x), bij.label), move |th| {
            let t = (bij.inverse)(th);
            let mut u = t.clone();
            for &v in &members {
                u[v] = m.mechanism(v).eval(&t, m.sig().name(v))?;
            }
            Ok((bij.forward)(&u)[x].clone())
        }));
    }
    CausalModel::new(bij.high.clone(), mechs)
}

/// The low interventional that stands for the high hard intervention `i_star`
/// under `bij`: every mechanism is mapped forward, overwritten by `i_star`
/// and mapped back.
pub fn canonical_omega(m: &CausalModel, bij: Arc<Bijection>, i_star: &Setting) -> Result<Interventional> {
    bij.check_inverse(INVERSE_SAMPLES, 0, INVERSE_TOL)?;
    for (x, val) in i_star.iter() {
        if x >= bij.high.len() {
            return Err(Error::UnknownVariable(format!("#{x}")));
        }
        bij.high.check(x, val)?;
    }
    let n = m.len();
    let touched: Vec<bool> =
        (0..bij.blocks.len()).map(|b| bij.blocks[b].1.iter().any(|&x| i_star.contains(x))).collect();
    let fully_fixed: Vec<bool> =
        (0..bij.blocks.len()).map(|b| bij.blocks[b].1.iter().all(|&x| i_star.contains(x))).collect();
    let sig = m.sig().clone();
    let image = i_star.clone();
    let i_star = i_star.clone();
    let label = format!("canonical({})", crate::dsl::to_canonical_string(&i_star.to_json(&bij.high)));
    let mut iv = Interventional::new((0..n).collect(), label, move |old| {
        let mut out = Vec::with_capacity(old.len());
        for v in 0..old.len() {
            let b = bij.low_block(v);
            if !touched[b] {
                out.push(old[v].as_ref().clone());
                continue;
            }
            let members = bij.blocks[b].0.clone();
            let parents = if fully_fixed[b] {
                Vec::new()
            } else {
                let mut ps: Vec<VarId> = members.iter().flat_map(|&u| old[u].parents()).collect();
                ps.sort_unstable();
                ps.dedup();
                ps
            };
            let olds: Vec<Arc<Mechanism>> = members.iter().map(|&u| old[u].clone()).collect();
            let bij = bij.clone();
            let sig = sig.clone();
            let i_star = i_star.clone();
            out.push(Mechanism::native(parents, format!("canonical {}", sig.name(v)), move |t| {
                let mut u = t.to_vec();
                for (k, &mv) in members.iter().enumerate() {
                    u[mv] = olds[k].eval(t, sig.name(mv))?;
                }
                let mut h = (bij.forward)(&u);
                for (x, val) in i_star.iter() {
                    if bij.high_block(x) == b {
                        h[x] = val.clone();
                    }
                }
                Ok((bij.inverse)(&h)[v].clone())
            }));
        }
        Ok(out)
    });
    iv.omega_image = Some(image);
    Ok(iv)
}

/// Next value of the range after `v` (cyclically); reals move by one.
pub fn filter_value(sig: &Signature, x: VarId, v: &Value) -> Value {
    match sig.range(x) {
        ValueRange::Enum(vals) => match sig.rank(x, v) {
            Some(r) => vals[(r + 1) % vals.len()].clone(),
            None => vals[0].clone(),
        },
        ValueRange::Real(_) => match v {
            Value::Num(n) => Value::Num(n + 1.0),
            Value::Tuple(t) => Value::tuple(t.iter().map(|c| Value::Num(c.as_num().unwrap_or(0.0) + 1.0)).collect()),
            other => other.clone(),
        },
    }
}

/// High variables whose cells can influence the cell of `x`, and the low
/// variables that must be solved to obtain that cell.
fn witness_scope(low: &CausalModel, a: &Alignment, x: VarId) -> (Vec<VarId>, Vec<bool>) {
    let n = low.len();
    if !low.has_eval_order() {
        let others = (0..a.high.len()).filter(|&y| y != x).collect();
        return (others, vec![true; n]);
    }
    let mut needed = vec![false; n];
    let mut stack: Vec<VarId> = a.cells[x].clone();
    for &v in &stack {
        needed[v] = true;
    }
    let mut reach: Vec<VarId> = Vec::new();
    while let Some(u) = stack.pop() {
        for &p in low.parents(u) {
            match a.cell_of(p) {
                Some(y) if y != x => {
                    if !reach.contains(&y) {
                        reach.push(y);
                    }
                }
                _ => {
                    if !needed[p] {
                        needed[p] = true;
                        stack.push(p);
                    }
                }
            }
        }
    }
    reach.sort_unstable();
    (reach, needed)
}

struct WitnessState {
    low: CausalModel,
    a: Arc<Alignment>,
    x: VarId,
    scope: Vec<VarId>,
    needed: Vec<bool>,
    memo: RwLock<HashMap<Vec<Value>, Arc<Vec<Value>>>>,
}

impl WitnessState {
    fn witnessed(&self, th: &[Value]) -> Result<Arc<Vec<Value>>> {
        let key: Vec<Value> = self.scope.iter().map(|&y| th[y].clone()).collect();
        if let Some(hit) = self.memo.read().unwrap_or_else(|e| e.into_inner()).get(&key) {
            return Ok(hit.clone());
        }
        let pre: Vec<Arc<Vec<Vec<Value>>>> =
            self.scope.iter().map(|&y| self.a.preimages(y, &th[y])).collect::<Result<_>>()?;
        let size = pre.iter().fold(1u128, |acc, p| acc.saturating_mul(p.len() as u128));
        if size > budget() as u128 {
            return Err(Error::BudgetExceeded { size, budget: budget() });
        }
        let mut found: Vec<Value> = Vec::new();
        let choice: Vec<Vec<Value>> = pre.iter().map(|p| (0..p.len()).map(|i| Value::Num(i as f64)).collect()).collect();
        let domains: Vec<&[Value]> = choice.iter().map(|c| c.as_slice()).collect();
        for_each_assignment(&domains, |idx| {
            let mut fixed = Setting::new();
            for (k, &y) in self.scope.iter().enumerate() {
                let i = idx[k].as_num().unwrap_or(0.0) as usize;
                for (val, &v) in pre[k][i].iter().zip(&self.a.cells[y]) {
                    fixed.insert(v, val.clone());
                }
            }
            for w in self.low.solve_restricted(&fixed, &self.needed)? {
                if let Some(h) = self.a.map_cell(self.x, &self.a.cell_values(self.x, &w)) {
                    if !found.contains(&h) {
                        found.push(h);
                    }
                }
            }
            Ok(true)
        })?;
        let hs = &self.a.high;
        found.sort_by(|p, q| hs.cmp_values(self.x, p, q));
        let found = Arc::new(found);
        self.memo.write().unwrap_or_else(|e| e.into_inner()).insert(key, found.clone());
        Ok(found)
    }
}

/// The high model whose mechanism for each `X` keeps a value exactly when
/// some low solution, with the other cells held at preimages of the high
/// setting, maps to it.
///
/// For low models with an evaluation order only the cells that can reach
/// `X`'s cell are held fixed, and only the part of the low model feeding
/// that cell is solved.
pub fn constructive_translate(low: &CausalModel, a: Arc<Alignment>) -> Result<CausalModel> {
    if *a.low != **low.sig() {
        return Err(Error::SignatureMismatch);
    }
    let mut mechs = Vec::with_capacity(a.high.len());
    for x in 0..a.high.len() {
        let (scope, needed) = witness_scope(low, &a, x);
        let state = Arc::new(WitnessState {
            low: low.clone(),
            a: a.clone(),
            x,
            scope: scope.clone(),
            needed,
            memo: RwLock::new(HashMap::new()),
        });
        let high = a.high.clone();
        mechs.push(Mechanism::Witness(Witness {
            var: x,
            parents: scope,
            label: format!("witness {}", a.high.name(x)),
            candidates: Arc::new(move |th| Ok(state.witnessed(th)?.as_ref().clone())),
            filter: Arc::new(move |v| filter_value(&high, x, v)),
        }));
    }
    CausalModel::new(a.high.clone(), mechs)
}
