//! Causal models, their parent structure, and solving.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::value::{Setting, Sig, Signature, Value, VarId, World};

pub const DEFAULT_BUDGET: u64 = 10_000_000;

/// Enumeration budget: `CAK_BUDGET` if set, else 10^7.
pub fn budget() -> u64 {
    static B: OnceLock<u64> = OnceLock::new();
    *B.get_or_init(|| {
        std::env::var("CAK_BUDGET").ok().and_then(|s| s.trim().parse().ok()).unwrap_or(DEFAULT_BUDGET)
    })
}

pub type NativeFn = Arc<dyn Fn(&[Value]) -> Result<Value> + Send + Sync>;
pub type CandidateFn = Arc<dyn Fn(&[Value]) -> Result<Vec<Value>> + Send + Sync>;

/// Host-supplied mechanism reading only `parents`.
#[derive(Clone)]
pub struct Native {
    pub parents: Vec<VarId>,
    pub label: String,
    pub f: NativeFn,
}

/// Mechanism that keeps its own current value when that value is witnessed
/// and otherwise moves it by `filter`.
///
/// `candidates` returns the witnessed values given the parents. When it
/// returns exactly one value the mechanism returns it outright, which has
/// the same fixpoints.
#[derive(Clone)]
pub struct Witness {
    pub var: VarId,
    pub parents: Vec<VarId>,
    pub label: String,
    pub candidates: CandidateFn,
    pub filter: Arc<dyn Fn(&Value) -> Value + Send + Sync>,
}

#[derive(Clone)]
pub enum Mechanism {
    Const(Value),
    Expr(Expr),
    Native(Native),
    Witness(Witness),
}

impl fmt::Debug for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mechanism::Const(v) => write!(f, "Const({v})"),
            Mechanism::Expr(e) => write!(f, "Expr({e:?})"),
            Mechanism::Native(n) => write!(f, "Native({})", n.label),
            Mechanism::Witness(w) => write!(f, "Witness({})", w.label),
        }
    }
}

impl PartialEq for Mechanism {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Mechanism::Const(a), Mechanism::Const(b)) => a == b,
            (Mechanism::Expr(a), Mechanism::Expr(b)) => a == b,
            (Mechanism::Native(a), Mechanism::Native(b)) => Arc::ptr_eq(&a.f, &b.f),
            (Mechanism::Witness(a), Mechanism::Witness(b)) => Arc::ptr_eq(&a.candidates, &b.candidates),
            _ => false,
        }
    }
}

impl Mechanism {
    pub fn native<F>(parents: Vec<VarId>, label: impl Into<String>, f: F) -> Mechanism
    where
        F: Fn(&[Value]) -> Result<Value> + Send + Sync + 'static,
    {
        Mechanism::Native(Native { parents, label: label.into(), f: Arc::new(f) })
    }

    /// Parents used for evaluation order. A witness mechanism's read of its
    /// own variable is left out.
    pub fn parents(&self) -> Vec<VarId> {
        match self {
            Mechanism::Const(_) => Vec::new(),
            Mechanism::Expr(e) => e.free_vars(),
            Mechanism::Native(n) => {
                let mut p = n.parents.clone();
                p.sort_unstable();
                p.dedup();
                p
            }
            Mechanism::Witness(w) => {
                let mut p: Vec<VarId> = w.parents.iter().copied().filter(|&x| x != w.var).collect();
                p.sort_unstable();
                p.dedup();
                p
            }
        }
    }

    /// Syntactic parents, including a witness mechanism's self-read.
    pub fn syntactic_parents(&self) -> Vec<VarId> {
        let mut p = self.parents();
        if let Mechanism::Witness(w) = self {
            p.push(w.var);
            p.sort_unstable();
            p.dedup();
        }
        p
    }

    pub fn eval(&self, w: &[Value], name: &str) -> Result<Value> {
        match self {
            Mechanism::Const(v) => Ok(v.clone()),
            Mechanism::Expr(e) => e.eval(w).map_err(|msg| Error::Eval { var: name.to_string(), msg }),
            Mechanism::Native(n) => (n.f)(w),
            Mechanism::Witness(wt) => {
                let cands = (wt.candidates)(w)?;
                if cands.len() == 1 {
                    return Ok(cands[0].clone());
                }
                let cur = &w[wt.var];
                if cands.contains(cur) {
                    Ok(cur.clone())
                } else {
                    Ok((wt.filter)(cur))
                }
            }
        }
    }
}

#[derive(Clone)]
pub struct CausalModel {
    sig: Sig,
    mechs: Vec<Arc<Mechanism>>,
    parents: Arc<Vec<Vec<VarId>>>,
    topo: Option<Arc<Vec<VarId>>>,
}

impl fmt::Debug for CausalModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CausalModel").field("vars", &self.sig.names()).field("mechanisms", &self.mechs).finish()
    }
}

/// Topological order of `0..n` under `parents`, or `None` on a cycle.
pub fn topo_order(parents: &[Vec<VarId>]) -> Option<Vec<VarId>> {
    let n = parents.len();
    let mut indeg = vec![0usize; n];
    let mut children = vec![Vec::new(); n];
    for (v, ps) in parents.iter().enumerate() {
        for &p in ps {
            if p == v {
                return None;
            }
            indeg[v] += 1;
            children[p].push(v);
        }
    }
    // Smallest ready variable first keeps the order deterministic.
    let mut ready: std::collections::BTreeSet<VarId> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut out = Vec::with_capacity(n);
    while let Some(v) = ready.pop_first() {
        out.push(v);
        for &c in &children[v] {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                ready.insert(c);
            }
        }
    }
    (out.len() == n).then_some(out)
}

/// Visits every assignment of the given value lists in odometer order (last
/// position fastest). Stops early when `f` returns `false`.
pub fn for_each_assignment<F>(domains: &[&[Value]], mut f: F) -> Result<()>
where
    F: FnMut(&[Value]) -> Result<bool>,
{
    if domains.iter().any(|d| d.is_empty()) {
        return Ok(());
    }
    let mut idx = vec![0usize; domains.len()];
    let mut cur: Vec<Value> = domains.iter().map(|d| d[0].clone()).collect();
    loop {
        if !f(&cur)? {
            return Ok(());
        }
        let mut k = domains.len();
        loop {
            if k == 0 {
                return Ok(());
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < domains[k].len() {
                cur[k] = domains[k][idx[k]].clone();
                break;
            }
            idx[k] = 0;
            cur[k] = domains[k][0].clone();
        }
    }
}

/// All total settings extending `p`, in canonical order.
pub fn inverse_project(p: &Setting, sig: &Signature) -> Result<Vec<World>> {
    let free: Vec<VarId> = (0..sig.len()).filter(|v| !p.contains(*v)).collect();
    for (v, val) in p.iter() {
        if v >= sig.len() {
            return Err(Error::UnknownVariable(format!("#{v}")));
        }
        sig.check(v, val)?;
    }
    let size = sig.space_size(&free)?;
    if size > budget() as u128 {
        return Err(Error::EnumerationBudgetExceeded { size, budget: budget() });
    }
    let mut base = sig.default_world();
    for (v, val) in p.iter() {
        base[v] = val.clone();
    }
    let domains: Vec<&[Value]> = free.iter().map(|&v| sig.enum_values(v)).collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(size as usize);
    for_each_assignment(&domains, |vals| {
        let mut w = base.clone();
        for (k, &v) in free.iter().enumerate() {
            w[v] = vals[k].clone();
        }
        out.push(w);
        Ok(true)
    })?;
    Ok(out)
}

/// Parent structure of a model.
#[derive(Clone, Debug, PartialEq)]
pub struct CausalOrder {
    pub syntactic: Vec<Vec<VarId>>,
    pub semantic: Option<Vec<Vec<VarId>>>,
    pub acyclic: bool,
}

impl CausalModel {
    pub fn new(sig: Sig, mechs: Vec<Mechanism>) -> Result<CausalModel> {
        Self::from_arcs(sig, mechs.into_iter().map(Arc::new).collect())
    }

    pub fn from_arcs(sig: Sig, mechs: Vec<Arc<Mechanism>>) -> Result<CausalModel> {
        if mechs.len() != sig.len() {
            return Err(Error::TypeError {
                path: "mechanisms".into(),
                msg: format!("{} mechanisms for {} variables", mechs.len(), sig.len()),
            });
        }
        let mut parents = Vec::with_capacity(mechs.len());
        for (v, m) in mechs.iter().enumerate() {
            let ps = m.parents();
            if let Some(&bad) = ps.iter().find(|&&p| p >= sig.len()) {
                return Err(Error::UndeclaredVariable(format!("#{bad} (in mechanism of {})", sig.name(v))));
            }
            if let Mechanism::Const(c) = m.as_ref() {
                sig.check(v, c)?;
            }
            parents.push(ps);
        }
        let topo = topo_order(&parents).map(Arc::new);
        Ok(CausalModel { sig, mechs, parents: Arc::new(parents), topo })
    }

    pub fn sig(&self) -> &Sig {
        &self.sig
    }

    pub fn len(&self) -> usize {
        self.sig.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sig.is_empty()
    }

    pub fn mechanism(&self, v: VarId) -> &Arc<Mechanism> {
        &self.mechs[v]
    }

    pub fn mechanisms(&self) -> &[Arc<Mechanism>] {
        &self.mechs
    }

    /// Evaluation parents (witness self-reads excluded).
    pub fn parents(&self, v: VarId) -> &[VarId] {
        &self.parents[v]
    }

    pub fn children(&self, v: VarId) -> Vec<VarId> {
        (0..self.len()).filter(|&c| self.parents[c].contains(&v)).collect()
    }

    /// Variables without parents.
    pub fn inputs(&self) -> Vec<VarId> {
        (0..self.len()).filter(|&v| self.mechs[v].syntactic_parents().is_empty()).collect()
    }

    /// Variables that are nobody's parent.
    pub fn sinks(&self) -> Vec<VarId> {
        let mut has_child = vec![false; self.len()];
        for ps in self.parents.iter() {
            for &p in ps {
                has_child[p] = true;
            }
        }
        (0..self.len()).filter(|&v| !has_child[v]).collect()
    }

    /// True when the syntactic parent relation (self-reads included) has no cycle.
    pub fn is_acyclic(&self) -> bool {
        self.topo.is_some() && self.mechs.iter().all(|m| !matches!(m.as_ref(), Mechanism::Witness(_)))
    }

    pub fn var(&self, name: &str) -> Result<VarId> {
        self.sig.require(name)
    }

    /// Copy with some mechanisms replaced.
    pub fn with_mechanisms(&self, repl: Vec<(VarId, Arc<Mechanism>)>) -> Result<CausalModel> {
        let mut mechs = self.mechs.clone();
        for (v, m) in repl {
            if v >= mechs.len() {
                return Err(Error::UnknownVariable(format!("#{v}")));
            }
            mechs[v] = m;
        }
        Self::from_arcs(self.sig.clone(), mechs)
    }

    /// Copy with the given variables held constant.
    pub fn with_fixed(&self, fixed: &Setting) -> Result<CausalModel> {
        let mut repl = Vec::with_capacity(fixed.len());
        for (v, val) in fixed.iter() {
            if v >= self.len() {
                return Err(Error::UnknownVariable(format!("#{v}")));
            }
            self.sig.check(v, val)?;
            repl.push((v, Arc::new(Mechanism::Const(val.clone()))));
        }
        self.with_mechanisms(repl)
    }

    fn eval_var(&self, v: VarId, w: &[Value]) -> Result<Value> {
        self.mechs[v].eval(w, self.sig.name(v))
    }

    fn eval_checked(&self, v: VarId, w: &[Value]) -> Result<Value> {
        let val = self.eval_var(v, w)?;
        if !self.sig.contains(v, &val) {
            return Err(Error::RangeViolation { var: self.sig.name(v).to_string(), value: val.to_string() });
        }
        Ok(val)
    }

    /// True iff every mechanism maps `w` to its own value.
    pub fn is_solution(&self, w: &[Value]) -> Result<bool> {
        for v in 0..self.len() {
            if self.eval_var(v, w)? != w[v] {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn solve(&self) -> Result<Vec<World>> {
        self.solve_with(&Setting::new())
    }

    /// Solutions of the model with the variables of `fixed` held constant.
    pub fn solve_with(&self, fixed: &Setting) -> Result<Vec<World>> {
        let n = self.len();
        let mut fixed_vals: Vec<Option<&Value>> = vec![None; n];
        for (v, val) in fixed.iter() {
            if v >= n {
                return Err(Error::UnknownVariable(format!("#{v}")));
            }
            self.sig.check(v, val)?;
            fixed_vals[v] = Some(val);
        }
        let local;
        let order: &[VarId] = match &self.topo {
            Some(t) => t,
            None => {
                let eff: Vec<Vec<VarId>> =
                    (0..n).map(|v| if fixed_vals[v].is_some() { Vec::new() } else { self.parents[v].clone() }).collect();
                match topo_order(&eff) {
                    Some(t) => {
                        local = t;
                        &local
                    }
                    None => return self.solve_enumerate(&fixed_vals),
                }
            }
        };
        let mut out = Vec::new();
        let mut w = self.sig.default_world();
        self.solve_dfs(order, 0, &fixed_vals, &mut w, &mut out)?;
        if out.len() > 1 {
            self.sig.sort_worlds(&mut out);
            out.dedup();
        }
        Ok(out)
    }

    /// Solutions over the variables flagged in `needed`, which must be closed
    /// under evaluation parents apart from fixed variables. Other variables
    /// keep their fixed or default values. Falls back to `solve_with` when the
    /// model has no evaluation order.
    pub fn solve_restricted(&self, fixed: &Setting, needed: &[bool]) -> Result<Vec<World>> {
        let Some(topo) = &self.topo else {
            return self.solve_with(fixed);
        };
        let n = self.len();
        let mut fixed_vals: Vec<Option<&Value>> = vec![None; n];
        let mut w = self.sig.default_world();
        for (v, val) in fixed.iter() {
            if v >= n {
                return Err(Error::UnknownVariable(format!("#{v}")));
            }
            self.sig.check(v, val)?;
            fixed_vals[v] = Some(val);
            w[v] = val.clone();
        }
        let order: Vec<VarId> = topo.iter().copied().filter(|&v| needed[v] && fixed_vals[v].is_none()).collect();
        let mut out = Vec::new();
        self.solve_dfs(&order, 0, &fixed_vals, &mut w, &mut out)?;
        if out.len() > 1 {
            self.sig.sort_worlds(&mut out);
            out.dedup();
        }
        Ok(out)
    }

    /// True when evaluation parents (witness self-reads excluded) are acyclic.
    pub fn has_eval_order(&self) -> bool {
        self.topo.is_some()
    }

    fn solve_dfs(
        &self,
        order: &[VarId],
        mut pos: usize,
        fixed: &[Option<&Value>],
        w: &mut World,
        out: &mut Vec<World>,
    ) -> Result<()> {
        while pos < order.len() {
            let v = order[pos];
            if let Some(val) = fixed[v] {
                w[v] = val.clone();
            } else if let Mechanism::Witness(wt) = self.mechs[v].as_ref() {
                let mut cands = (wt.candidates)(w)?;
                cands.retain(|c| self.sig.contains(v, c));
                match cands.len() {
                    0 => return Ok(()),
                    1 => w[v] = cands.pop().unwrap_or_else(|| unreachable!()),
                    _ => {
                        for c in cands {
                            let mut branch = w.clone();
                            branch[v] = c;
                            self.solve_dfs(order, pos + 1, fixed, &mut branch, out)?;
                        }
                        return Ok(());
                    }
                }
            } else {
                w[v] = self.eval_checked(v, w)?;
            }
            pos += 1;
        }
        out.push(w.clone());
        Ok(())
    }

    fn solve_enumerate(&self, fixed: &[Option<&Value>]) -> Result<Vec<World>> {
        let n = self.len();
        let mut domains: Vec<Vec<Value>> = Vec::with_capacity(n);
        let mut size: u128 = 1;
        for v in 0..n {
            let dom = if let Some(val) = fixed[v] {
                vec![val.clone()]
            } else if let Mechanism::Const(c) = self.mechs[v].as_ref() {
                vec![c.clone()]
            } else {
                match self.sig.enum_values(v) {
                    Ok(vals) => vals.to_vec(),
                    Err(_) => return Err(Error::UnsolvableRepresentation(self.sig.name(v).to_string())),
                }
            };
            size = size.saturating_mul(dom.len() as u128);
            domains.push(dom);
        }
        if size > budget() as u128 {
            return Err(Error::BudgetExceeded { size, budget: budget() });
        }
        // Each mechanism is checked as soon as it and everything it reads are assigned.
        let mut checks: Vec<Vec<VarId>> = vec![Vec::new(); n];
        for v in 0..n {
            if fixed[v].is_some() || matches!(self.mechs[v].as_ref(), Mechanism::Const(_)) {
                continue;
            }
            let deps = self.mechs[v].syntactic_parents();
            let at = deps.iter().copied().chain(std::iter::once(v)).max().unwrap_or(v);
            checks[at].push(v);
        }
        let mut out = Vec::new();
        let mut w = self.sig.default_world();
        self.enumerate_rec(0, &domains, &checks, &mut w, &mut out)?;
        Ok(out)
    }

    fn enumerate_rec(
        &self,
        k: usize,
        domains: &[Vec<Value>],
        checks: &[Vec<VarId>],
        w: &mut World,
        out: &mut Vec<World>,
    ) -> Result<()> {
        if k == domains.len() {
            out.push(w.clone());
            return Ok(());
        }
        'values: for val in &domains[k] {
            w[k] = val.clone();
            for &v in &checks[k] {
                if self.eval_var(v, w)? != w[v] {
                    continue 'values;
                }
            }
            self.enumerate_rec(k + 1, domains, checks, w, out)?;
        }
        Ok(())
    }

    /// The unique solution under `fixed`.
    pub fn solve_unique(&self, fixed: &Setting) -> Result<World> {
        let mut sols = self.solve_with(fixed)?;
        match sols.len() {
            0 => Err(Error::NoSolution),
            1 => Ok(sols.pop().unwrap_or_else(|| unreachable!())),
            k => Err(Error::AmbiguousSolution(k)),
        }
    }

    /// Syntactic parents, plus semantic parents when every range is finite.
    pub fn semantic_order(&self) -> Result<CausalOrder> {
        let syntactic: Vec<Vec<VarId>> = self.mechs.iter().map(|m| m.syntactic_parents()).collect();
        let acyclic = topo_order(&syntactic).is_some();
        let mut semantic = Vec::with_capacity(self.len());
        for v in 0..self.len() {
            let ps = &syntactic[v];
            let size = self.sig.space_size(ps)?;
            if size > budget() as u128 {
                return Err(Error::BudgetExceeded { size, budget: budget() });
            }
            let domains: Vec<&[Value]> = ps.iter().map(|&p| self.sig.enum_values(p)).collect::<Result<_>>()?;
            let mut table: Vec<(Vec<Value>, Value)> = Vec::new();
            let mut w = self.sig.default_world();
            for_each_assignment(&domains, |vals| {
                for (k, &p) in ps.iter().enumerate() {
                    w[p] = vals[k].clone();
                }
                table.push((vals.to_vec(), self.eval_var(v, &w)?));
                Ok(true)
            })?;
            let mut sem = Vec::new();
            for (k, &p) in ps.iter().enumerate() {
                let mut seen: HashMap<Vec<Value>, &Value> = HashMap::new();
                let mut depends = false;
                for (vals, out) in &table {
                    let mut ctx = vals.clone();
                    ctx.remove(k);
                    match seen.get(&ctx) {
                        Some(prev) if *prev != out => {
                            depends = true;
                            break;
                        }
                        Some(_) => {}
                        None => {
                            seen.insert(ctx, out);
                        }
                    }
                }
                if depends {
                    sem.push(p);
                }
            }
            semantic.push(sem);
        }
        Ok(CausalOrder { syntactic, semantic: Some(semantic), acyclic })
    }

    /// Projects a world onto named variables, for convenience in tests and reports.
    pub fn value<'a>(&self, w: &'a [Value], name: &str) -> Result<&'a Value> {
        Ok(&w[self.var(name)?])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{lit, op, var, Op};
    use crate::value::ValueRange;

    fn chain() -> CausalModel {
        let sig = Arc::new(Signature::new(vec![("X", ValueRange::ints(0, 1)), ("Y", ValueRange::ints(0, 1))]).unwrap());
        CausalModel::new(sig, vec![Mechanism::Const(Value::from(0.0)), Mechanism::Expr(var(0))]).unwrap()
    }

    #[test]
    fn chain_solves_to_single_world() {
        let m = chain();
        assert_eq!(m.solve().unwrap(), vec![vec![Value::from(0.0), Value::from(0.0)]]);
        let s = Setting::from_pairs([(0, Value::from(1.0))]);
        assert_eq!(m.solve_with(&s).unwrap(), vec![vec![Value::from(1.0), Value::from(1.0)]]);
    }

    #[test]
    fn inverse_project_counts_completions() {
        let m = chain();
        let p = Setting::from_pairs([(0, Value::from(0.0))]);
        let ws = inverse_project(&p, m.sig()).unwrap();
        assert_eq!(ws.len(), 2);
        assert_eq!(ws[0][1], Value::from(0.0));
        assert_eq!(ws[1][1], Value::from(1.0));
    }

    #[test]
    fn cyclic_model_enumerates_fixpoints() {
        // X = Y, Y = X over {0,1}: both constant worlds are solutions.
        let sig = Arc::new(Signature::new(vec![("X", ValueRange::ints(0, 1)), ("Y", ValueRange::ints(0, 1))]).unwrap());
        let m = CausalModel::new(sig, vec![Mechanism::Expr(var(1)), Mechanism::Expr(var(0))]).unwrap();
        let sols = m.solve().unwrap();
        assert_eq!(sols.len(), 2);
        assert!(!m.is_acyclic());
        for s in &sols {
            assert!(m.is_solution(s).unwrap());
        }
    }

    #[test]
    fn cyclic_real_is_unsolvable() {
        let sig = Arc::new(Signature::new(vec![("X", ValueRange::Real(1)), ("Y", ValueRange::Real(1))]).unwrap());
        let m = CausalModel::new(sig, vec![Mechanism::Expr(var(1)), Mechanism::Expr(var(0))]).unwrap();
        assert!(matches!(m.solve(), Err(Error::UnsolvableRepresentation(_))));
        // Fixing one variable breaks the cycle.
        let s = Setting::from_pairs([(0, Value::from(2.5))]);
        assert_eq!(m.solve_with(&s).unwrap()[0][1], Value::from(2.5));
    }

    #[test]
    fn semantic_parents_drop_ignored_inputs() {
        let sig = Arc::new(
            Signature::new(vec![("A", ValueRange::ints(0, 1)), ("B", ValueRange::ints(0, 1)), ("C", ValueRange::ints(0, 2))])
                .unwrap(),
        );
        // C = A + 0*B reads B syntactically but not semantically.
        let c = op(Op::Add, vec![var(0), op(Op::Mul, vec![lit(0.0), var(1)])]);
        let m = CausalModel::new(
            sig,
            vec![Mechanism::Const(Value::from(0.0)), Mechanism::Const(Value::from(0.0)), Mechanism::Expr(c)],
        )
        .unwrap();
        let o = m.semantic_order().unwrap();
        assert_eq!(o.syntactic[2], vec![0, 1]);
        assert_eq!(o.semantic.unwrap()[2], vec![0]);
        assert!(o.acyclic);
    }

    #[test]
    fn range_violation_is_reported() {
        let sig = Arc::new(Signature::new(vec![("X", ValueRange::ints(0, 1)), ("Y", ValueRange::ints(0, 1))]).unwrap());
        let m = CausalModel::new(
            sig,
            vec![Mechanism::Const(Value::from(1.0)), Mechanism::Expr(op(Op::Add, vec![var(0), lit(1.0)]))],
        )
        .unwrap();
        assert!(matches!(m.solve(), Err(Error::RangeViolation { .. })));
    }
}
