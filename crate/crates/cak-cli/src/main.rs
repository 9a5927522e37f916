use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{ArgGroup, Parser, Subcommand};
use serde_json::{json, Value as Json};

use cak::abstraction::{verify_constructive, Alignment, CellMap, CellSuite, Suite, TauOmega};
use cak::approx::{approx_metric, mediation_effects, ApproxConfig, Similarity, Statistic};
use cak::dsl::{self, Document};
use cak::fixtures::fixture;
use cak::interchange::{iia, interchange, InputPair, InterchangeSpec, InterchangeSuite};
use cak::intervene::Intervention;
use cak::nn::{das_search, DasTemplate, DenseNet};
use cak::ops::{decompose_alignment, marginalize, tabulate, value_merge, variable_merge};
use cak::scrub::{scrub_faithfulness, ScrubSetup};
use cak::{CausalModel, Error, Setting, Signature, Value, VarId};

/// Failures listed in a verify report; the rest are only counted.
const SHOWN_FAILURES: usize = 10;

#[derive(Parser)]
#[command(name = "cak", version, about = "Causal models, interventions and abstraction checks")]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solution set of a model, optionally under hard interventions.
    Solve {
        model: PathBuf,
        /// Hard intervention VAR=VALUE (VALUE is JSON, or a bare symbol).
        #[arg(long = "set", value_name = "VAR=VALUE")]
        set: Vec<String>,
    },
    /// Checks that the alignment is an exact abstraction over a suite.
    #[command(group(ArgGroup::new("items").required(true).args(["suite", "exhaustive"])))]
    Verify {
        low: PathBuf,
        high: PathBuf,
        align: PathBuf,
        #[arg(long)]
        suite: Option<PathBuf>,
        #[arg(long)]
        exhaustive: bool,
        #[arg(long, default_value_t = 0.0)]
        tolerance: f64,
    },
    /// Interchange intervention accuracy on the high outputs.
    Iia {
        low: PathBuf,
        high: PathBuf,
        align: PathBuf,
        #[arg(long)]
        suite: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        tolerance: f64,
    },
    /// Approximate abstraction metric.
    Approx {
        low: PathBuf,
        high: PathBuf,
        align: PathBuf,
        /// exact_match, abs_diff:VAR or output_match:VAR,VAR...
        #[arg(long)]
        sim: String,
        /// mean, max or min.
        #[arg(long)]
        stat: String,
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        eta: Option<f64>,
    },
    /// Applies one abstraction operation and writes the result.
    #[command(group(ArgGroup::new("op").required(true).args(["marginalize", "merge", "value_merge"])))]
    Transform {
        model: PathBuf,
        #[arg(long, num_args = 1..)]
        marginalize: Vec<String>,
        /// NAME=VAR,VAR;NAME=VAR... (unlisted variables stay as they are).
        #[arg(long)]
        merge: Option<String>,
        /// File with {"maps": {VAR: map}, "values": {VAR: [...]}}.
        #[arg(long = "value-merge")]
        value_merge: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Splits an alignment into marginalization, variable merge and value merge.
    Decompose {
        align: PathBuf,
        /// Low model (default: the `low` model named in the alignment, next to it).
        #[arg(long)]
        low: Option<PathBuf>,
        #[arg(long)]
        high: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Runs a base input with targets fixed to their values under sources.
    Interchange {
        model: PathBuf,
        #[arg(long)]
        base: PathBuf,
        /// One file per source.
        #[arg(long, required = true)]
        source: Vec<PathBuf>,
        /// Comma-separated targets, one list per source.
        #[arg(long, required = true, num_args = 1..)]
        targets: Vec<String>,
    },
    /// Total, direct and indirect effects.
    Mediate {
        model: PathBuf,
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        xprime: PathBuf,
        #[arg(long)]
        y: String,
        #[arg(long, required = true, num_args = 1..)]
        z: Vec<String>,
    },
    /// Causal scrubbing faithfulness of a variable map.
    Scrub {
        low: PathBuf,
        high: PathBuf,
        /// File with {LOW_VAR: HIGH_VAR}.
        map: PathBuf,
        /// File with input pairs: [{"low": ..., "high": ...}] or {"inputs": [...]}.
        #[arg(long)]
        pool: PathBuf,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Rotation search over a block of low variables.
    Das {
        low: PathBuf,
        high: PathBuf,
        align: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        block: Vec<String>,
        #[arg(long, default_value_t = 1.0)]
        grid: f64,
        #[arg(long, default_value_t = 20)]
        refine: usize,
    },
    /// Writes a built-in fixture as documents.
    Fixture {
        name: String,
        #[arg(short, long)]
        out: PathBuf,
    },
}

/// Exit status for a library error.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::ParseError { .. }
        | Error::TypeError { .. }
        | Error::UndeclaredVariable(_)
        | Error::PartitionError(_)
        | Error::SurjectivityError(_)
        | Error::UnknownFixture(_)
        | Error::UnknownVariable(_)
        | Error::RangeViolation { .. }
        | Error::SignatureMismatch
        | Error::NotSerializable(_)
        | Error::Io(_) => 2,
        Error::MissingVariable(_)
        | Error::NotEnumerable(_)
        | Error::EnumerationBudgetExceeded { .. }
        | Error::UnsolvableRepresentation(_)
        | Error::BudgetExceeded { .. }
        | Error::Eval { .. }
        | Error::TypeMismatch(_)
        | Error::UnsolvedSource
        | Error::DuplicateClass(_)
        | Error::DomainViolation(_)
        | Error::NotInverse(_)
        | Error::NoSolution
        | Error::AmbiguousSolution(_)
        | Error::NotInputPreserving(_)
        | Error::AlignmentConflict { .. }
        | Error::UnrealizedValue { .. }
        | Error::NonNumericOutcome(_)
        | Error::NonRealMediator(_)
        | Error::EmptyConditionedSet { .. }
        | Error::DimensionMismatch(_)
        | Error::NotOrthogonal(_)
        | Error::DegenerateCovariance(_)
        | Error::RankDeficient { .. }
        | Error::NoConvergence(_) => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if !e.use_stderr() {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.render().to_string();
            eprintln!("{}", text.lines().next().unwrap_or("usage error"));
            return ExitCode::from(2);
        }
    };
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("cak: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok((report, ok)) => {
            print!("{}", dsl::serialize(&report));
            ExitCode::from(if ok { 0 } else { 1 })
        }
        Err(e) => {
            eprintln!("cak: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn read(p: &Path) -> cak::Result<String> {
    std::fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))
}

fn load_model(p: &Path) -> cak::Result<CausalModel> {
    dsl::parse_model(&read(p)?)
}

fn load_alignment(p: &Path, low: &CausalModel, high: &CausalModel) -> cak::Result<(Alignment, Vec<InputPair>)> {
    dsl::load_alignment(&read(p)?, low, high)
}

fn load_suite(p: &Path, sig: &Signature) -> cak::Result<Vec<Intervention>> {
    Ok(dsl::parse_suite(&read(p)?, sig)?.into_iter().map(Intervention::Hard).collect())
}

/// A setting file: one object of variable names to values.
fn load_setting(p: &Path, sig: &Signature) -> cak::Result<Setting> {
    let j = dsl::parse_json(&read(p)?)?;
    Setting::from_json(sig, &j)
}

fn var(sig: &Signature, name: &str) -> cak::Result<VarId> {
    sig.var(name).ok_or_else(|| Error::UndeclaredVariable(name.to_string()))
}

fn vars(sig: &Signature, names: &[String]) -> cak::Result<Vec<VarId>> {
    names.iter().flat_map(|n| n.split(',')).filter(|n| !n.is_empty()).map(|n| var(sig, n)).collect()
}

fn usage(msg: impl Into<String>) -> Error {
    Error::TypeError { path: "arguments".into(), msg: msg.into() }
}

fn solutions_json(sig: &Signature, mut ws: Vec<Vec<Value>>) -> Json {
    sig.sort_worlds(&mut ws);
    Json::Array(ws.iter().map(|w| sig.world_to_json(w)).collect())
}

/// Cells whose maps are read off interchange runs.
fn induced_cells(a: &Alignment) -> Vec<Vec<VarId>> {
    (0..a.high.len())
        .filter(|&x| match &a.maps[x] {
            CellMap::Table { induced, .. } => *induced,
            _ => false,
        })
        .map(|x| a.cells[x].clone())
        .collect()
}

/// The suite a flagless check runs over: all interchange interventions on
/// the induced cells when the alignment has them, otherwise every
/// combination of realizable cell values.
fn exhaustive_suite(low: &CausalModel, a: &Alignment, inputs: &[InputPair]) -> cak::Result<(Box<dyn Suite>, &'static str)> {
    let cells = induced_cells(a);
    if !cells.is_empty() {
        if inputs.is_empty() {
            return Err(usage("induced maps need the alignment's input pairs"));
        }
        let s = InterchangeSuite::new(low, inputs.iter().map(|p| p.low.clone()).collect(), cells)?;
        return Ok((Box::new(s), "interchange"));
    }
    Ok((Box::new(CellSuite::from_alignment(a)?), "cells"))
}

fn run(cmd: Command) -> cak::Result<(Json, bool)> {
    match cmd {
        Command::Solve { model, set } => {
            let m = load_model(&model)?;
            let mut s = Setting::new();
            for item in &set {
                let (name, raw) = item.split_once('=').ok_or_else(|| usage(format!("expected VAR=VALUE, got `{item}`")))?;
                let v = var(m.sig(), name)?;
                let val = match serde_json::from_str::<Json>(raw) {
                    Ok(j) => Value::from_json(&j).ok_or_else(|| usage(format!("bad value `{raw}`")))?,
                    Err(_) => Value::sym(raw),
                };
                m.sig().check(v, &val)?;
                s.insert(v, val);
            }
            let ws = m.solve_with(&s)?;
            Ok((json!({"intervention": s.to_json(m.sig()), "count": ws.len(), "solutions": solutions_json(m.sig(), ws)}), true))
        }
        Command::Verify { low, high, align, suite, exhaustive, tolerance } => {
            let (l, h) = (load_model(&low)?, load_model(&high)?);
            let (a, inputs) = load_alignment(&align, &l, &h)?;
            let (items, kind): (Box<dyn Suite>, &str) = match (&suite, exhaustive) {
                (Some(p), _) => (Box::new(load_suite(p, l.sig())?), "file"),
                (None, _) => exhaustive_suite(&l, &a, &inputs)?,
            };
            let rep = verify_constructive(&l, &h, Arc::new(a), items.as_ref(), tolerance)?;
            let mut j = rep.to_json();
            j["suite"] = json!(kind);
            j["failure_count"] = json!(rep.failures.len());
            if let Some(f) = j.get_mut("failures").and_then(Json::as_array_mut) {
                f.truncate(SHOWN_FAILURES);
            }
            Ok((j, rep.passed()))
        }
        Command::Iia { low, high, align, suite, tolerance } => {
            let (l, h) = (load_model(&low)?, load_model(&high)?);
            let (a, inputs) = load_alignment(&align, &l, &h)?;
            let items: Box<dyn Suite> = match &suite {
                Some(p) => Box::new(load_suite(p, l.sig())?),
                None => exhaustive_suite(&l, &a, &inputs)?.0,
            };
            let outputs = h.sinks();
            let rep = iia(&l, &h, &TauOmega::from_alignment(Arc::new(a)), items.as_ref(), &outputs, tolerance)?;
            let mut j = rep.to_json();
            j["outputs"] = json!(outputs.iter().map(|&v| h.sig().name(v)).collect::<Vec<_>>());
            Ok((j, true))
        }
        Command::Approx { low, high, align, sim, stat, suite, eta } => {
            let (l, h) = (load_model(&low)?, load_model(&high)?);
            let (a, _) = load_alignment(&align, &l, &h)?;
            let sim = match sim.split_once(':') {
                None if sim == "exact_match" => Similarity::ExactMatch01,
                Some(("abs_diff", v)) => Similarity::AbsDiffOn(var(h.sig(), v)?),
                Some(("output_match", vs)) => Similarity::OutputMatch01(vars(h.sig(), &[vs.to_string()])?),
                _ => return Err(usage(format!("unknown similarity `{sim}`"))),
            };
            let stat = Statistic::from_name(&stat).ok_or_else(|| usage(format!("unknown statistic `{stat}`")))?;
            let items = load_suite(&suite, l.sig())?;
            let mut cfg = ApproxConfig::new(sim, stat);
            cfg.eta = eta;
            let rep = approx_metric(&l, &h, &TauOmega::from_alignment(Arc::new(a)), &items, &cfg)?;
            Ok((rep.to_json(), rep.eta_pass != Some(false)))
        }
        Command::Transform { model, marginalize: drop, merge, value_merge: vm, out } => {
            let m = load_model(&model)?;
            let (result, a, op) = if !drop.is_empty() {
                let (r, a) = marginalize(&m, &vars(m.sig(), &drop)?)?;
                (r, a, "marginalize")
            } else if let Some(spec) = merge {
                let (r, a) = variable_merge(&m, &merge_partition(m.sig(), &spec)?)?;
                (r, a, "merge")
            } else {
                let p = vm.ok_or_else(|| usage("no operation given"))?;
                let fam = dsl::parse_value_merge(&read(&p)?, m.sig())?;
                let (r, a) = value_merge(&m, &fam)?;
                (r, a, "value-merge")
            };
            let doc = match dsl::model_to_json(&result) {
                Ok(j) => j,
                Err(Error::NotSerializable(_)) => dsl::model_to_json(&tabulate(&result)?)?,
                Err(e) => return Err(e),
            };
            write(&out, &dsl::serialize(&doc))?;
            let align_path = sibling(&out, "align.json");
            let align_file = match dsl::alignment_to_json(&a, &[]) {
                Ok(j) => {
                    write(&align_path, &dsl::serialize(&j))?;
                    json!(align_path.display().to_string())
                }
                Err(_) => Json::Null,
            };
            Ok((
                json!({
                    "operation": op,
                    "model": out.display().to_string(),
                    "alignment": align_file,
                    "variables": result.sig().names(),
                }),
                true,
            ))
        }
        Command::Decompose { align, low, high, out } => {
            let text = read(&align)?;
            let doc = dsl::parse_json(&text)?;
            let named = |key: &str, given: &Option<PathBuf>| -> cak::Result<PathBuf> {
                if let Some(p) = given {
                    return Ok(p.clone());
                }
                let name = doc.get(key).and_then(Json::as_str).ok_or_else(|| usage(format!("alignment names no `{key}` model; pass --{key}")))?;
                Ok(align.parent().unwrap_or(Path::new(".")).join(format!("{name}.cam.json")))
            };
            let l = load_model(&named("low", &low)?)?;
            let h = load_model(&named("high", &high)?)?;
            let (a, _) = dsl::load_alignment(&text, &l, &h)?;
            let pipeline = decompose_alignment(Arc::new(a));
            let run = pipeline.run(&l)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::Io(format!("{}: {e}", out.display())))?;
            let mut stages = Vec::new();
            for (k, (name, (m, a))) in ["marginalize", "merge", "value_merge"].iter().zip(run.models.iter().zip(&run.alignments)).enumerate() {
                let stem = format!("{}_{name}", k + 1);
                let model_file = write_model(m, &out.join(format!("{stem}.cam.json")))?;
                let align_file = match dsl::alignment_to_json(a, &[]) {
                    Ok(j) => {
                        let f = format!("{stem}.align.json");
                        write(&out.join(&f), &dsl::serialize(&j))?;
                        json!(f)
                    }
                    Err(_) => Json::Null,
                };
                stages.push(json!({"stage": name, "variables": m.sig().names(), "model": model_file, "alignment": align_file}));
            }
            Ok((
                json!({
                    "marginalize": pipeline.marginalize.iter().map(|&v| l.sig().name(v)).collect::<Vec<_>>(),
                    "merge": pipeline
                        .merge
                        .iter()
                        .map(|(n, c)| json!({"name": n, "cell": c.iter().map(|&v| run.models[0].sig().name(v)).collect::<Vec<_>>()}))
                        .collect::<Vec<_>>(),
                    "stages": stages,
                }),
                true,
            ))
        }
        Command::Interchange { model, base, source, targets } => {
            let m = load_model(&model)?;
            if source.len() != targets.len() {
                return Err(usage(format!("{} sources for {} target lists", source.len(), targets.len())));
            }
            let base = load_setting(&base, m.sig())?;
            let sources = source.iter().map(|p| load_setting(p, m.sig())).collect::<cak::Result<Vec<_>>>()?;
            let targets = targets.iter().map(|t| vars(m.sig(), std::slice::from_ref(t))).collect::<cak::Result<Vec<_>>>()?;
            let fixed = interchange(&m, &InterchangeSpec { sources, targets })?;
            let ws = m.solve_with(&base.overwrite(&fixed))?;
            Ok((json!({"fixed": fixed.to_json(m.sig()), "solutions": solutions_json(m.sig(), ws)}), true))
        }
        Command::Mediate { model, x, xprime, y, z } => {
            let m = load_model(&model)?;
            let x = load_setting(&x, m.sig())?;
            let xp = load_setting(&xprime, m.sig())?;
            let e = mediation_effects(&m, &x, &xp, var(m.sig(), &y)?, &vars(m.sig(), &z)?)?;
            Ok((json!({"total": e.total, "direct": e.direct, "indirect": e.indirect}), true))
        }
        Command::Scrub { low, high, map, pool, samples, seed } => {
            let low_text = read(&low)?;
            let (l, h) = (dsl::parse_model(&low_text)?, load_model(&high)?);
            let lj = dsl::parse_json(&low_text)?;
            let readout = if lj.get("dense").is_some() { DenseNet::from_json(&lj)?.readout.cell_map() } else { None };
            let mj = dsl::parse_json(&read(&map)?)?;
            let mo = mj.as_object().ok_or_else(|| usage("the map file holds an object of low to high names"))?;
            let mut delta = vec![None; l.len()];
            for (lv, hv) in mo {
                let hv = hv.as_str().ok_or_else(|| usage(format!("`{lv}` must map to a high variable name")))?;
                delta[var(l.sig(), lv)?] = Some(var(h.sig(), hv)?);
            }
            let pj = dsl::parse_json(&read(&pool)?)?;
            let list = pj.get("inputs").unwrap_or(&pj).as_array().ok_or_else(|| usage("the pool file holds a list of input pairs"))?;
            let pool = list
                .iter()
                .map(|p| {
                    let side = |k: &str, sig: &Signature| Setting::from_json(sig, p.get(k).unwrap_or(&Json::Null));
                    Ok(InputPair { low: side("low", l.sig())?, high: side("high", h.sig())? })
                })
                .collect::<cak::Result<Vec<_>>>()?;
            let rep = scrub_faithfulness(&ScrubSetup { low: l, high: h, delta, pool, readout }, samples, seed)?;
            Ok((rep.to_json(), true))
        }
        Command::Das { low, high, align, block, grid, refine } => {
            let (l, h) = (load_model(&low)?, load_model(&high)?);
            let (a, inputs) = load_alignment(&align, &l, &h)?;
            if inputs.is_empty() {
                return Err(usage("the alignment has no input pairs"));
            }
            let block = vars(l.sig(), &block)?;
            let mut targets = Vec::new();
            for x in 0..h.len() {
                let cell = &a.cells[x];
                if !cell.is_empty() && cell.iter().all(|v| block.contains(v)) {
                    let feats = cell.iter().map(|v| block.iter().position(|b| b == v).unwrap_or_default()).collect();
                    targets.push((feats, vec![x]));
                }
            }
            let outputs = h
                .sinks()
                .into_iter()
                .map(|x| match a.cells[x].as_slice() {
                    [v] => Ok((*v, x)),
                    _ => Err(usage(format!("output `{}` needs a one-variable cell", h.sig().name(x)))),
                })
                .collect::<cak::Result<Vec<_>>>()?;
            let planes = (0..block.len()).flat_map(|i| (i + 1..block.len()).map(move |j| (i, j))).collect();
            let t = DasTemplate { block, planes, targets, inputs, outputs, tol: 1e-9 };
            let r = das_search(&l, &h, &t, grid, refine)?;
            Ok((r.to_json(), r.loss == 0))
        }
        Command::Fixture { name, out } => {
            let docs = dsl::fixture_documents(&fixture(&name)?)?;
            dsl::write_documents(&docs, &out)?;
            Ok((json!({"fixture": name, "files": docs.iter().map(|d: &Document| d.file.clone()).collect::<Vec<_>>()}), true))
        }
    }
}

/// Partition for a merge spec; unlisted variables keep singleton cells.
fn merge_partition(sig: &Signature, spec: &str) -> cak::Result<Vec<(String, Vec<VarId>)>> {
    let mut groups = Vec::new();
    let mut used = vec![false; sig.len()];
    for part in spec.split(';').filter(|p| !p.trim().is_empty()) {
        let (name, members) = part.split_once('=').ok_or_else(|| usage(format!("expected NAME=VAR,VAR in `{part}`")))?;
        let cell = vars(sig, &[members.to_string()])?;
        for &v in &cell {
            if std::mem::replace(&mut used[v], true) {
                return Err(Error::PartitionError(format!("`{}` is in two cells", sig.name(v))));
            }
        }
        groups.push((name.trim().to_string(), cell));
    }
    let mut out: Vec<(String, Vec<VarId>)> = Vec::new();
    for v in 0..sig.len() {
        if !used[v] {
            out.push((sig.name(v).to_string(), vec![v]));
        } else if let Some(k) = groups.iter().position(|(_, c)| c[0] == v) {
            out.push(groups[k].clone());
        }
    }
    Ok(out)
}

fn sibling(p: &Path, ext: &str) -> PathBuf {
    let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let stem = name.strip_suffix(".cam.json").or_else(|| name.strip_suffix(".json")).unwrap_or(name);
    p.with_file_name(format!("{stem}.{ext}"))
}

fn write(p: &Path, text: &str) -> cak::Result<()> {
    std::fs::write(p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display())))
}

/// Writes the model if it has a document form, tabulating host mechanisms.
fn write_model(m: &CausalModel, p: &Path) -> cak::Result<Json> {
    let doc = match dsl::model_to_json(m) {
        Ok(j) => Ok(j),
        Err(Error::NotSerializable(_)) => tabulate(m).and_then(|t| dsl::model_to_json(&t)),
        Err(e) => Err(e),
    };
    match doc {
        Ok(j) => {
            write(p, &dsl::serialize(&j))?;
            Ok(json!(p.file_name().and_then(|n| n.to_str()).unwrap_or_default()))
        }
        Err(_) => Ok(Json::Null),
    }
}
