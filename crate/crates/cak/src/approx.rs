//! Graded faithfulness: the approximate-transformation metric and the
//! behavioral measures expressed through it.

use rayon::prelude::*;
use serde_json::{json, Value as Json};

use crate::abstraction::{evaluate_item, tau_set, HighCache, Suite, TauOmega};
use crate::error::{Error, Result};
use crate::interchange::{interchange, InterchangeSpec};
use crate::model::CausalModel;
use crate::value::{world_sets_eq, Setting, Value, ValueRange, VarId, World};

#[derive(Clone, Debug, PartialEq)]
pub enum Similarity {
    /// 1 when the mapped low solutions equal the high solutions.
    ExactMatch01,
    /// Absolute difference of one numeric high variable; both sides must have one solution.
    AbsDiffOn(VarId),
    /// 1 when the solutions agree on the listed high variables.
    OutputMatch01(Vec<VarId>),
}

impl Similarity {
    pub fn name(&self) -> &'static str {
        match self {
            Similarity::ExactMatch01 => "exact_match",
            Similarity::AbsDiffOn(_) => "abs_diff",
            Similarity::OutputMatch01(_) => "output_match",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Statistic {
    Mean,
    Max,
    Min,
}

impl Statistic {
    pub fn name(self) -> &'static str {
        match self {
            Statistic::Mean => "mean",
            Statistic::Max => "max",
            Statistic::Min => "min",
        }
    }

    pub fn from_name(s: &str) -> Option<Statistic> {
        match s {
            "mean" => Some(Statistic::Mean),
            "max" => Some(Statistic::Max),
            "min" => Some(Statistic::Min),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ApproxConfig {
    pub sim: Similarity,
    pub stat: Statistic,
    /// Threshold above which the metric counts as an approximate abstraction.
    pub eta: Option<f64>,
    pub tol: f64,
}

impl ApproxConfig {
    pub fn new(sim: Similarity, stat: Statistic) -> ApproxConfig {
        ApproxConfig { sim, stat, eta: None, tol: 1e-9 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApproxReport {
    pub metric: f64,
    pub stat: Statistic,
    pub sim: &'static str,
    pub suite_size: usize,
    pub eta_pass: Option<bool>,
}

impl ApproxReport {
    pub fn to_json(&self) -> Json {
        json!({
            "metric": self.metric,
            "stat": self.stat.name(),
            "sim": self.sim,
            "suite_size": self.suite_size,
            "eta_pass": self.eta_pass,
        })
    }
}

fn scalar(v: &Value, name: &str) -> Result<f64> {
    v.as_num().ok_or_else(|| Error::NonNumericOutcome(name.to_string()))
}

fn project_eq(a: &[World], b: &[World], vars: &[VarId], tol: f64, to: &TauOmega) -> bool {
    let proj = |ws: &[World]| -> Vec<World> {
        let mut p: Vec<World> = ws.iter().map(|w| vars.iter().map(|&v| w[v].clone()).collect()).collect();
        p.sort_by(|x, y| to.high.cmp_worlds(x, y));
        p.dedup();
        p
    };
    world_sets_eq(&proj(a), &proj(b), tol)
}

fn similarity(sim: &Similarity, to: &TauOmega, lows: Option<Vec<World>>, highs: &[World], tol: f64) -> Result<f64> {
    let Some(lows) = lows else {
        return match sim {
            Similarity::AbsDiffOn(v) => Err(Error::NonNumericOutcome(format!("{} (mapping undefined)", to.high.name(*v)))),
            _ => Ok(0.0),
        };
    };
    match sim {
        Similarity::ExactMatch01 => Ok(if world_sets_eq(&lows, highs, tol) { 1.0 } else { 0.0 }),
        Similarity::OutputMatch01(vars) => Ok(if project_eq(&lows, highs, vars, tol, to) { 1.0 } else { 0.0 }),
        Similarity::AbsDiffOn(v) => {
            if lows.len() != 1 || highs.len() != 1 {
                return Err(Error::TypeMismatch(format!(
                    "abs_diff needs one solution per side, got {} and {}",
                    lows.len(),
                    highs.len()
                )));
            }
            let name = to.high.name(*v);
            Ok((scalar(&lows[0][*v], name)? - scalar(&highs[0][*v], name)?).abs())
        }
    }
}

fn aggregate(stat: Statistic, scored: &[(f64, f64)]) -> f64 {
    match stat {
        Statistic::Mean => {
            let total: f64 = scored.iter().map(|(w, _)| w).sum();
            if total == 0.0 {
                return 0.0;
            }
            scored.iter().map(|(w, s)| w * s).sum::<f64>() / total
        }
        Statistic::Max => scored.iter().filter(|(w, _)| *w > 0.0).map(|(_, s)| *s).fold(f64::NEG_INFINITY, f64::max),
        Statistic::Min => scored.iter().filter(|(w, _)| *w > 0.0).map(|(_, s)| *s).fold(f64::INFINITY, f64::min),
    }
}

/// Statistic over the suite of the similarity between mapped low solutions
/// and high solutions.
pub fn approx_metric(
    low: &CausalModel,
    high: &CausalModel,
    to: &TauOmega,
    suite: &dyn Suite,
    cfg: &ApproxConfig,
) -> Result<ApproxReport> {
    let cache = HighCache::new(high);
    let scored: Vec<(f64, f64)> = (0..suite.len())
        .into_par_iter()
        .map(|k| {
            let ev = evaluate_item(low, to, &cache, &suite.item(k))?;
            let lows = tau_set(to, &ev.tau_low);
            Ok((suite.weight(k), similarity(&cfg.sim, to, lows, &ev.high, cfg.tol)?))
        })
        .collect::<Result<_>>()?;
    let metric = aggregate(cfg.stat, &scored);
    Ok(ApproxReport {
        metric,
        stat: cfg.stat,
        sim: cfg.sim.name(),
        suite_size: suite.len(),
        eta_pass: cfg.eta.map(|eta| metric >= eta),
    })
}

/// Mean distance between the outputs of two models sharing inputs and
/// outputs, over a neighborhood of input settings.
pub fn lime_fidelity(
    low: &CausalModel,
    high: &CausalModel,
    neighborhood: &[Setting],
    outputs: &[VarId],
    distance: &(dyn Fn(&[Value], &[Value]) -> f64 + Sync),
) -> Result<f64> {
    if neighborhood.is_empty() {
        return Ok(0.0);
    }
    let hv: Vec<VarId> = outputs
        .iter()
        .map(|&v| high.sig().require(low.sig().name(v)))
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    for x in neighborhood {
        let lx = low.solve_unique(x)?;
        let hx: Setting = x.iter().map(|(v, val)| Ok((high.sig().require(low.sig().name(v))?, val.clone()))).collect::<Result<_>>()?;
        let hw = high.solve_unique(&hx)?;
        let a: Vec<Value> = outputs.iter().map(|&v| lx[v].clone()).collect();
        let b: Vec<Value> = hv.iter().map(|&v| hw[v].clone()).collect();
        total += distance(&a, &b);
    }
    Ok(total / neighborhood.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EffectTriple {
    pub total: Vec<f64>,
    pub direct: Vec<f64>,
    pub indirect: Vec<f64>,
}

fn numeric(m: &CausalModel, y: VarId, v: &Value) -> Result<Vec<f64>> {
    v.as_vector().ok_or_else(|| Error::NonNumericOutcome(m.sig().name(y).to_string()))
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Total, direct and indirect effect of moving `x` to `x_prime` on `y`,
/// with `z` as the mediators.
pub fn mediation_effects(m: &CausalModel, x: &Setting, x_prime: &Setting, y: VarId, z: &[VarId]) -> Result<EffectTriple> {
    let run = |s: &Setting| -> Result<Vec<f64>> {
        let w = m.solve_unique(s)?;
        numeric(m, y, &w[y])
    };
    let swap = |base: &Setting, source: &Setting| -> Result<Setting> {
        let i = interchange(m, &InterchangeSpec { sources: vec![source.clone()], targets: vec![z.to_vec()] })?;
        Ok(base.overwrite(&i))
    };
    let y_x = run(x)?;
    let y_xp = run(x_prime)?;
    let y_direct = run(&swap(x, x_prime)?)?;
    let y_indirect = run(&swap(x_prime, x)?)?;
    Ok(EffectTriple { total: diff(&y_xp, &y_x), direct: diff(&y_xp, &y_direct), indirect: diff(&y_xp, &y_indirect) })
}

pub const IG_STEPS: usize = 512;
pub const IG_STEP: f64 = 1e-5;

fn pack(m: &CausalModel, mediators: &[VarId], flat: &[f64]) -> Setting {
    let mut out = Setting::new();
    let mut at = 0;
    for &v in mediators {
        let d = match m.sig().range(v) {
            ValueRange::Real(d) => *d,
            ValueRange::Enum(_) => 1,
        };
        let val = if d == 1 { Value::Num(flat[at]) } else { Value::vector(&flat[at..at + d]) };
        out.insert(v, val);
        at += d;
    }
    out
}

/// Per-coordinate attributions of `out` along the straight path from the
/// baseline `y_prime` to `y` of the mediators, with `x` held as the input.
pub fn integrated_gradients(
    m: &CausalModel,
    x: &Setting,
    mediators: &[VarId],
    y: &[f64],
    y_prime: &[f64],
    out: VarId,
    steps: usize,
) -> Result<Vec<f64>> {
    let mut dim = 0;
    for &v in mediators {
        match m.sig().range(v) {
            ValueRange::Real(d) => dim += d,
            ValueRange::Enum(_) => return Err(Error::NonRealMediator(m.sig().name(v).to_string())),
        }
    }
    if y.len() != dim || y_prime.len() != dim {
        return Err(Error::DimensionMismatch(format!("mediators have {dim} coordinates, got {} and {}", y.len(), y_prime.len())));
    }
    let g = |p: &[f64]| -> Result<f64> {
        let w = m.solve_unique(&x.overwrite(&pack(m, mediators, p)))?;
        scalar(&w[out], m.sig().name(out))
    };
    let steps = steps.max(1);
    let sums: Vec<f64> = (0..dim)
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            let mut p = vec![0.0; dim];
            for k in 0..steps {
                let a = (k as f64 + 0.5) / steps as f64;
                for j in 0..dim {
                    p[j] = y_prime[j] + a * (y[j] - y_prime[j]);
                }
                let c = p[i];
                p[i] = c + IG_STEP;
                let up = g(&p)?;
                p[i] = c - IG_STEP;
                let down = g(&p)?;
                acc += (up - down) / (2.0 * IG_STEP);
            }
            Ok(acc / steps as f64)
        })
        .collect::<Result<_>>()?;
    Ok((0..dim).map(|i| (y[i] - y_prime[i]) * sums[i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{lit, op, var, Op};
    use crate::model::Mechanism;
    use crate::value::Signature;
    use std::sync::Arc;

    fn chain(direct: bool) -> CausalModel {
        let sig = Arc::new(
            Signature::new(vec![("X", ValueRange::Real(1)), ("Z", ValueRange::Real(1)), ("Y", ValueRange::Real(1))]).unwrap(),
        );
        let fy = if direct { op(Op::Mul, vec![lit(3.0), var(0)]) } else { var(1) };
        CausalModel::new(sig, vec![Mechanism::Const(Value::from(0.0)), Mechanism::Expr(var(0)), Mechanism::Expr(fy)]).unwrap()
    }

    fn x(v: f64) -> Setting {
        Setting::from_pairs([(0, Value::from(v))])
    }

    #[test]
    fn full_mediation() {
        let e = mediation_effects(&chain(false), &x(0.0), &x(1.0), 2, &[1]).unwrap();
        assert_eq!(e, EffectTriple { total: vec![1.0], direct: vec![0.0], indirect: vec![1.0] });
    }

    #[test]
    fn no_mediation_through_disconnected_variable() {
        let e = mediation_effects(&chain(true), &x(0.0), &x(1.0), 2, &[1]).unwrap();
        assert_eq!(e.indirect, vec![0.0]);
        assert_eq!(e.direct, e.total);
    }

    #[test]
    fn linear_readout_attribution() {
        let sig = Arc::new(Signature::new(vec![("Y", ValueRange::Real(1)), ("O", ValueRange::Real(1))]).unwrap());
        let m = CausalModel::new(
            sig,
            vec![Mechanism::Const(Value::from(0.0)), Mechanism::Expr(op(Op::Mul, vec![lit(2.0), var(0)]))],
        )
        .unwrap();
        let ig = integrated_gradients(&m, &Setting::new(), &[0], &[1.0], &[0.0], 1, 64).unwrap();
        assert!((ig[0] - 2.0).abs() < 1e-6);
        assert!(matches!(
            integrated_gradients(&m, &Setting::new(), &[0], &[1.0, 2.0], &[0.0], 1, 8),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn statistics_aggregate_weights() {
        let s = [(1.0, 0.0), (3.0, 1.0)];
        assert_eq!(aggregate(Statistic::Mean, &s), 0.75);
        assert_eq!(aggregate(Statistic::Max, &s), 1.0);
        assert_eq!(aggregate(Statistic::Min, &s), 0.0);
    }
}
