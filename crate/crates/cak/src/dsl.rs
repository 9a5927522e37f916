//! JSON documents for models, alignments and suites, in one canonical form:
//! sorted keys, integral numbers written as integers, shortest round-trip
//! decimals otherwise.

use std::path::Path;
use std::sync::Arc;

use serde_json::{json, Map, Value as Json};

use crate::abstraction::{Alignment, CellMap};
use crate::error::{Error, Result};
use crate::expr::{Expr, Op, Table};
use crate::fixtures::{AlignmentEntry, Fixture, SuiteEntry};
use crate::interchange::{build_interchange_alignment, InputPair};
use crate::model::{CausalModel, Mechanism};
use crate::nn::{net_to_model, DenseNet};
use crate::ops::ValueMergeFamily;
use crate::value::{num_to_json, Setting, Signature, Value, ValueRange, VarId};

pub const FORMAT: &str = "cam/1";

/// Integral floats become integers, recursively.
pub fn canonicalize(j: &Json) -> Json {
    match j {
        Json::Number(n) => match n.as_f64() {
            Some(x) if !n.is_i64() && !n.is_u64() => num_to_json(x),
            _ => j.clone(),
        },
        Json::Array(items) => Json::Array(items.iter().map(canonicalize).collect()),
        Json::Object(m) => Json::Object(m.iter().map(|(k, v)| (k.clone(), canonicalize(v))).collect()),
        _ => j.clone(),
    }
}

/// One-line canonical text.
pub fn to_canonical_string(j: &Json) -> String {
    canonicalize(j).to_string()
}

/// Canonical text for files: two-space indentation and a final newline.
pub fn serialize(j: &Json) -> String {
    let mut s = serde_json::to_string_pretty(&canonicalize(j)).unwrap_or_else(|_| unreachable!("JSON values always print"));
    s.push('\n');
    s
}

/// Parses JSON text, reporting syntax errors by position.
pub fn parse_json(text: &str) -> Result<Json> {
    serde_json::from_str(text).map_err(|e| Error::ParseError { line: e.line(), column: e.column(), msg: e.to_string() })
}

/// Position of the first occurrence of `"key"` in the text, or 0:0.
fn locate(text: Option<&str>, key: &str) -> (usize, usize) {
    let Some(text) = text else { return (0, 0) };
    let needle = format!("\"{key}\"");
    let Some(at) = text.find(&needle) else { return (0, 0) };
    let before = &text[..at];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

struct Ctx<'a> {
    text: Option<&'a str>,
}

impl Ctx<'_> {
    fn parse_err(&self, key: &str, msg: impl Into<String>) -> Error {
        let (line, column) = locate(self.text, key);
        Error::ParseError { line, column, msg: msg.into() }
    }

    fn type_err(&self, path: &str, msg: impl Into<String>) -> Error {
        Error::TypeError { path: path.to_string(), msg: msg.into() }
    }

    fn obj<'j>(&self, j: &'j Json, path: &str) -> Result<&'j Map<String, Json>> {
        j.as_object().ok_or_else(|| self.type_err(path, "expected an object"))
    }

    fn arr<'j>(&self, j: &'j Json, path: &str) -> Result<&'j Vec<Json>> {
        j.as_array().ok_or_else(|| self.type_err(path, "expected a list"))
    }

    fn field<'j>(&self, m: &'j Map<String, Json>, key: &str, path: &str) -> Result<&'j Json> {
        m.get(key).ok_or_else(|| self.parse_err(key, format!("missing `{key}` at {path}")))
    }

    fn value(&self, j: &Json, path: &str) -> Result<Value> {
        Value::from_json(j).ok_or_else(|| self.type_err(path, "expected a value (number, boolean, string or list)"))
    }

    fn check_format(&self, m: &Map<String, Json>) -> Result<()> {
        match m.get("format") {
            None => Ok(()),
            Some(Json::String(s)) if s == FORMAT => Ok(()),
            Some(other) => Err(self.parse_err("format", format!("unsupported format {other}, expected \"{FORMAT}\""))),
        }
    }

    fn only_keys(&self, m: &Map<String, Json>, allowed: &[&str], path: &str) -> Result<()> {
        match m.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(self.parse_err(k, format!("unexpected key `{k}` at {path}"))),
            None => Ok(()),
        }
    }
}

fn range_to_json(r: &ValueRange) -> Json {
    match r {
        ValueRange::Enum(vals) => json!({"values": vals.iter().map(Value::to_json).collect::<Vec<_>>()}),
        ValueRange::Real(d) => json!({"real": d}),
    }
}

fn signature_to_json(sig: &Signature) -> Json {
    Json::Array(
        (0..sig.len())
            .map(|v| {
                let mut o = range_to_json(sig.range(v));
                o["name"] = json!(sig.name(v));
                o
            })
            .collect(),
    )
}

fn signature_from_json(cx: &Ctx, j: &Json) -> Result<Signature> {
    let mut vars = Vec::new();
    for (k, item) in cx.arr(j, "$.signature")?.iter().enumerate() {
        let path = format!("$.signature[{k}]");
        let o = cx.obj(item, &path)?;
        cx.only_keys(o, &["name", "values", "real"], &path)?;
        let name = cx.field(o, "name", &path)?.as_str().ok_or_else(|| cx.type_err(&path, "`name` must be a string"))?;
        let range = match (o.get("values"), o.get("real")) {
            (Some(vals), None) => {
                let vals = cx.arr(vals, &format!("{path}.values"))?;
                ValueRange::Enum(vals.iter().map(|v| cx.value(v, &format!("{path}.values"))).collect::<Result<_>>()?)
            }
            (None, Some(d)) => ValueRange::Real(
                d.as_u64().filter(|&d| d >= 1).ok_or_else(|| cx.type_err(&path, "`real` must be a positive integer"))? as usize,
            ),
            _ => return Err(cx.type_err(&path, "give exactly one of `values` and `real`")),
        };
        vars.push((name.to_string(), range));
    }
    Signature::new(vars).map_err(|e| cx.type_err("$.signature", e.to_string()))
}

/// Expression as JSON; `name` gives the name of a variable index.
pub fn expr_to_json(e: &Expr, name: &dyn Fn(VarId) -> Json) -> Json {
    match e {
        Expr::Lit(v) => v.to_json(),
        Expr::Var(v) => json!({"var": name(*v)}),
        Expr::Op(o, args) => {
            let mut m = Map::new();
            m.insert(o.name().to_string(), Json::Array(args.iter().map(|a| expr_to_json(a, name)).collect()));
            Json::Object(m)
        }
        Expr::If(c, t, f) => json!({"if": expr_to_json(c, name), "then": expr_to_json(t, name), "else": expr_to_json(f, name)}),
        Expr::Vec(items) => json!({"vec": items.iter().map(|a| expr_to_json(a, name)).collect::<Vec<_>>()}),
        Expr::Proj(k, inner) => json!({"proj": k, "of": expr_to_json(inner, name)}),
        Expr::MatMul(m, inner) => json!({"matmul": m.as_ref(), "of": expr_to_json(inner, name)}),
        Expr::Table(t) => {
            let rows: Vec<Json> = t
                .rows
                .iter()
                .map(|(key, out)| {
                    let k: Map<String, Json> = key
                        .iter()
                        .map(|(v, x)| (name(*v).as_str().map(str::to_string).unwrap_or_else(|| name(*v).to_string()), x.to_json()))
                        .collect();
                    json!([k, out.to_json()])
                })
                .collect();
            json!({"table": {"rows": rows, "default": t.default.to_json()}})
        }
    }
}

/// Resolves `{"var": ...}` references while parsing an expression.
type Resolver<'r> = dyn Fn(&Json, &str) -> Result<VarId> + 'r;

fn expr_from_json(cx: &Ctx, j: &Json, path: &str, resolve: &Resolver) -> Result<Expr> {
    let o = match j {
        Json::Object(o) => o,
        Json::Null => return Err(cx.type_err(path, "null is not an expression")),
        _ => return Ok(Expr::Lit(cx.value(j, path)?)),
    };
    let sub = |key: &str, p: &str| -> Result<Expr> { expr_from_json(cx, cx.field(o, key, path)?, p, resolve) };
    if let Some(v) = o.get("var") {
        cx.only_keys(o, &["var"], path)?;
        return Ok(Expr::Var(resolve(v, path)?));
    }
    if o.contains_key("if") {
        cx.only_keys(o, &["if", "then", "else"], path)?;
        let c = sub("if", &format!("{path}.if"))?;
        let t = sub("then", &format!("{path}.then"))?;
        let f = sub("else", &format!("{path}.else"))?;
        return Ok(Expr::If(Box::new(c), Box::new(t), Box::new(f)));
    }
    if let Some(items) = o.get("vec") {
        cx.only_keys(o, &["vec"], path)?;
        let items = cx.arr(items, &format!("{path}.vec"))?;
        return Ok(Expr::Vec(
            items.iter().enumerate().map(|(k, it)| expr_from_json(cx, it, &format!("{path}.vec[{k}]"), resolve)).collect::<Result<_>>()?,
        ));
    }
    if let Some(k) = o.get("proj") {
        cx.only_keys(o, &["proj", "of"], path)?;
        let k = k.as_u64().ok_or_else(|| cx.type_err(&format!("{path}.proj"), "expected a non-negative integer"))?;
        return Ok(Expr::Proj(k as usize, Box::new(sub("of", &format!("{path}.of"))?)));
    }
    if let Some(m) = o.get("matmul") {
        cx.only_keys(o, &["matmul", "of"], path)?;
        let p = format!("{path}.matmul");
        let rows = cx.arr(m, &p)?;
        let mut mat = Vec::with_capacity(rows.len());
        for r in rows {
            let r = cx.arr(r, &p)?;
            mat.push(r.iter().map(|x| x.as_f64().ok_or_else(|| cx.type_err(&p, "expected numbers"))).collect::<Result<Vec<f64>>>()?);
        }
        if mat.is_empty() || mat.iter().any(|r| r.len() != mat[0].len()) {
            return Err(cx.type_err(&p, "matrix rows must be non-empty and of equal length"));
        }
        return Ok(Expr::MatMul(Arc::new(mat), Box::new(sub("of", &format!("{path}.of"))?)));
    }
    if let Some(t) = o.get("table") {
        cx.only_keys(o, &["table"], path)?;
        let p = format!("{path}.table");
        let t = cx.obj(t, &p)?;
        cx.only_keys(t, &["rows", "default"], &p)?;
        let default = cx.value(cx.field(t, "default", &p)?, &format!("{p}.default"))?;
        let mut rows = Vec::new();
        for (k, r) in cx.arr(cx.field(t, "rows", &p)?, &format!("{p}.rows"))?.iter().enumerate() {
            let rp = format!("{p}.rows[{k}]");
            let pair = cx.arr(r, &rp)?;
            if pair.len() != 2 {
                return Err(cx.type_err(&rp, "a row is [key, value]"));
            }
            let key = cx
                .obj(&pair[0], &rp)?
                .iter()
                .map(|(name, x)| Ok((resolve(&json!(name), &rp)?, cx.value(x, &rp)?)))
                .collect::<Result<Vec<_>>>()?;
            rows.push((key, cx.value(&pair[1], &rp)?));
        }
        return Ok(Expr::Table(Arc::new(Table::new(rows, default))));
    }
    if o.len() != 1 {
        let key = o.keys().next().map_or("", String::as_str);
        return Err(cx.parse_err(key, format!("unrecognized expression at {path}")));
    }
    let (key, args) = o.iter().next().unwrap_or_else(|| unreachable!("one key checked above"));
    let op = Op::from_name(key).ok_or_else(|| cx.parse_err(key, format!("unknown operation `{key}` at {path}")))?;
    let args = cx.arr(args, &format!("{path}.{key}"))?;
    let arity_ok = if op.is_unary() {
        args.len() == 1
    } else if op.is_binary() {
        args.len() == 2
    } else {
        !args.is_empty()
    };
    if !arity_ok {
        return Err(cx.type_err(&format!("{path}.{key}"), format!("wrong number of arguments ({})", args.len())));
    }
    let args = args
        .iter()
        .enumerate()
        .map(|(k, a)| expr_from_json(cx, a, &format!("{path}.{key}[{k}]"), resolve))
        .collect::<Result<Vec<_>>>()?;
    Ok(Expr::Op(op, args))
}

fn mechanism_to_json(sig: &Signature, m: &Mechanism, var: &str) -> Result<Json> {
    let name = |v: VarId| json!(sig.name(v));
    match m {
        Mechanism::Const(v) => Ok(v.to_json()),
        Mechanism::Expr(e) => Ok(expr_to_json(e, &name)),
        Mechanism::Native(n) => Err(Error::NotSerializable(format!("`{var}` has host mechanism {}", n.label))),
        Mechanism::Witness(w) => Err(Error::NotSerializable(format!("`{var}` has witness mechanism {}", w.label))),
    }
}

/// Model document. Host and witness mechanisms cannot be written; tabulate
/// them first (`ops::tabulate`).
pub fn model_to_json(m: &CausalModel) -> Result<Json> {
    let sig = m.sig();
    let mut mechs = Map::new();
    for v in 0..m.len() {
        mechs.insert(sig.name(v).to_string(), mechanism_to_json(sig, m.mechanism(v), sig.name(v))?);
    }
    Ok(json!({"format": FORMAT, "signature": signature_to_json(sig), "mechanisms": mechs}))
}

pub fn dense_to_json(n: &DenseNet) -> Json {
    let mut j = n.to_json();
    j["format"] = json!(FORMAT);
    j
}

/// Model from a model or dense document. A dense document gives the
/// standard neuron names.
pub fn parse_model(text: &str) -> Result<CausalModel> {
    let j = parse_json(text)?;
    model_from_json_text(&j, Some(text))
}

pub fn model_from_json(j: &Json) -> Result<CausalModel> {
    model_from_json_text(j, None)
}

fn model_from_json_text(j: &Json, text: Option<&str>) -> Result<CausalModel> {
    let cx = Ctx { text };
    let o = cx.obj(j, "$")?;
    cx.check_format(o)?;
    if o.contains_key("dense") {
        cx.only_keys(o, &["format", "dense"], "$")?;
        let net = DenseNet::from_json(j)?;
        return net_to_model(&net, &net.standard_names());
    }
    cx.only_keys(o, &["format", "signature", "mechanisms"], "$")?;
    let sig = Arc::new(signature_from_json(&cx, cx.field(o, "signature", "$")?)?);
    let mechs_json = cx.obj(cx.field(o, "mechanisms", "$")?, "$.mechanisms")?;
    if let Some(extra) = mechs_json.keys().find(|k| sig.var(k).is_none()) {
        return Err(Error::UndeclaredVariable(extra.clone()));
    }
    let resolve = |v: &Json, path: &str| -> Result<VarId> {
        let name = v.as_str().ok_or_else(|| cx.type_err(path, "`var` must name a variable"))?;
        sig.var(name).ok_or_else(|| Error::UndeclaredVariable(name.to_string()))
    };
    let mut mechs = Vec::with_capacity(sig.len());
    for v in 0..sig.len() {
        let name = sig.name(v);
        let path = format!("$.mechanisms.{name}");
        let mj = mechs_json.get(name).ok_or_else(|| cx.type_err(&path, "missing mechanism"))?;
        let e = expr_from_json(&cx, mj, &path, &resolve)?;
        mechs.push(match e {
            Expr::Lit(val) => {
                if !sig.contains(v, &val) {
                    return Err(cx.type_err(&path, format!("constant {val} is outside the range")));
                }
                Mechanism::Const(val)
            }
            e => Mechanism::Expr(e),
        });
    }
    CausalModel::new(sig, mechs).map_err(|e| cx.type_err("$.mechanisms", e.to_string()))
}

fn positional(v: VarId) -> Json {
    json!(v)
}

fn cell_map_to_json(map: &CellMap, high: &str) -> Result<Json> {
    Ok(match map {
        CellMap::Identity => json!("identity"),
        CellMap::Table { table, induced } => {
            let rows: Vec<Json> = table
                .rows()
                .iter()
                .map(|(k, v)| json!([k.iter().map(Value::to_json).collect::<Vec<_>>(), v.to_json()]))
                .collect();
            let kind = if *induced { "interchange-induced" } else { "table" };
            json!({kind: {"rows": rows}})
        }
        CellMap::Expr(e) => json!({"expr": expr_to_json(e, &positional)}),
        CellMap::Argmax { labels, tie_last } => {
            json!({"argmax": {"labels": labels.iter().map(Value::to_json).collect::<Vec<_>>(), "tie_last": tie_last}})
        }
        CellMap::Unpack(inner) => json!({"unpack": cell_map_to_json(inner, high)?}),
        CellMap::Builtin { name, .. } => return Err(Error::NotSerializable(format!("map of `{high}` is the host function {name}"))),
    })
}

fn cell_map_from_json(cx: &Ctx, j: &Json, path: &str, width: usize) -> Result<(CellMap, bool)> {
    if j.as_str() == Some("identity") {
        return Ok((CellMap::Identity, false));
    }
    let o = cx.obj(j, path)?;
    if o.len() != 1 {
        return Err(cx.type_err(path, "a map has exactly one kind"));
    }
    let (kind, body) = o.iter().next().unwrap_or_else(|| unreachable!("one key checked above"));
    let p = format!("{path}.{kind}");
    match kind.as_str() {
        "table" | "interchange-induced" => {
            let b = cx.obj(body, &p)?;
            cx.only_keys(b, &["rows"], &p)?;
            let Some(rows_json) = b.get("rows") else {
                return Ok((CellMap::table(Vec::new()), true));
            };
            let mut rows = Vec::new();
            for (k, r) in cx.arr(rows_json, &p)?.iter().enumerate() {
                let rp = format!("{p}.rows[{k}]");
                let pair = cx.arr(r, &rp)?;
                if pair.len() != 2 {
                    return Err(cx.type_err(&rp, "a row is [cell values, high value]"));
                }
                let key = cx.arr(&pair[0], &rp)?.iter().map(|x| cx.value(x, &rp)).collect::<Result<Vec<_>>>()?;
                if key.len() != width {
                    return Err(cx.type_err(&rp, format!("key has {} values for a cell of {width}", key.len())));
                }
                rows.push((key, cx.value(&pair[1], &rp)?));
            }
            let table = Arc::new(crate::abstraction::MapTable::new(rows));
            Ok((CellMap::Table { table, induced: kind == "interchange-induced" }, false))
        }
        "expr" => {
            let resolve = |v: &Json, vp: &str| -> Result<VarId> {
                v.as_u64().map(|k| k as usize).filter(|&k| k < width).ok_or_else(|| cx.type_err(vp, "map variables are cell positions"))
            };
            Ok((CellMap::Expr(expr_from_json(cx, body, &p, &resolve)?), false))
        }
        "argmax" => {
            let b = cx.obj(body, &p)?;
            cx.only_keys(b, &["labels", "tie_last"], &p)?;
            let labels = cx.arr(cx.field(b, "labels", &p)?, &p)?.iter().map(|x| cx.value(x, &p)).collect::<Result<Vec<_>>>()?;
            if labels.len() != width {
                return Err(cx.type_err(&p, format!("{} labels for a cell of {width}", labels.len())));
            }
            let tie_last = b.get("tie_last").map_or(Ok(false), |t| t.as_bool().ok_or_else(|| cx.type_err(&p, "`tie_last` is a boolean")))?;
            Ok((CellMap::Argmax { labels, tie_last }, false))
        }
        "unpack" => {
            let (inner, pending) = cell_map_from_json(cx, body, &p, usize::MAX)?;
            Ok((CellMap::Unpack(Arc::new(inner)), pending))
        }
        other => Err(cx.parse_err(other, format!("unknown map kind `{other}` at {path}"))),
    }
}

fn setting_to_json(sig: &Signature, s: &Setting) -> Json {
    Json::Object(s.iter().map(|(v, x)| (sig.name(v).to_string(), x.to_json())).collect())
}

fn setting_from_json(cx: &Ctx, sig: &Signature, j: &Json, path: &str) -> Result<Setting> {
    let mut s = Setting::new();
    for (name, x) in cx.obj(j, path)? {
        let v = sig.var(name).ok_or_else(|| Error::UndeclaredVariable(name.clone()))?;
        let val = cx.value(x, &format!("{path}.{name}"))?;
        if !sig.contains(v, &val) {
            return Err(cx.type_err(&format!("{path}.{name}"), format!("{val} is outside the range")));
        }
        s.insert(v, val);
    }
    Ok(s)
}

/// Alignment document. `inputs` are written when the alignment has maps
/// read off interchange runs.
pub fn alignment_to_json(a: &Alignment, inputs: &[InputPair]) -> Result<Json> {
    let (low, high) = (&a.low, &a.high);
    let mut cells = Map::new();
    let mut maps = Map::new();
    let mut candidates = Map::new();
    for x in 0..high.len() {
        let name = high.name(x).to_string();
        cells.insert(name.clone(), Json::Array(a.cells[x].iter().map(|&v| json!(low.name(v))).collect()));
        maps.insert(name.clone(), cell_map_to_json(&a.maps[x], &name)?);
        if let Some(c) = &a.candidates[x] {
            candidates.insert(name, Json::Array(c.iter().map(|t| Json::Array(t.iter().map(Value::to_json).collect())).collect()));
        }
    }
    let mut j = json!({
        "format": FORMAT,
        "cells": cells,
        "bot": a.bot.iter().map(|&v| json!(low.name(v))).collect::<Vec<_>>(),
        "maps": maps,
    });
    if !candidates.is_empty() {
        j["candidates"] = Json::Object(candidates);
    }
    if a.check_surjective().is_err() {
        j["partial"] = json!(true);
    }
    if !inputs.is_empty() {
        j["inputs"] = Json::Array(
            inputs.iter().map(|p| json!({"low": setting_to_json(low, &p.low), "high": setting_to_json(high, &p.high)})).collect(),
        );
    }
    Ok(j)
}

/// A parsed alignment document before any induced maps are computed.
struct AlignmentDoc {
    alignment: Alignment,
    /// Cells whose induced maps were given without rows.
    pending: Vec<VarId>,
    inputs: Vec<InputPair>,
}

fn alignment_doc(cx: &Ctx, j: &Json, low: &Arc<Signature>, high: &Arc<Signature>) -> Result<AlignmentDoc> {
    let o = cx.obj(j, "$")?;
    cx.check_format(o)?;
    if let Some(flag) = o.get("identity") {
        cx.only_keys(o, &["format", "identity"], "$")?;
        if flag != &json!(true) {
            return Err(cx.type_err("$.identity", "expected true"));
        }
        if low != high && **low != **high {
            return Err(Error::SignatureMismatch);
        }
        return Ok(AlignmentDoc { alignment: Alignment::identity(low.clone()), pending: Vec::new(), inputs: Vec::new() });
    }
    cx.only_keys(o, &["format", "cells", "bot", "maps", "candidates", "partial", "inputs", "low", "high"], "$")?;
    let cells_json = cx.obj(cx.field(o, "cells", "$")?, "$.cells")?;
    let maps_json = cx.obj(cx.field(o, "maps", "$")?, "$.maps")?;
    if let Some(extra) = cells_json.keys().chain(maps_json.keys()).find(|k| high.var(k).is_none()) {
        return Err(Error::UndeclaredVariable(extra.clone()));
    }
    let low_var = |name: &Json, path: &str| -> Result<VarId> {
        let name = name.as_str().ok_or_else(|| cx.type_err(path, "expected a variable name"))?;
        low.var(name).ok_or_else(|| Error::UndeclaredVariable(name.to_string()))
    };
    let mut cells = Vec::with_capacity(high.len());
    let mut maps = Vec::with_capacity(high.len());
    let mut pending = Vec::new();
    for x in 0..high.len() {
        let name = high.name(x);
        let path = format!("$.cells.{name}");
        let cj = cells_json.get(name).ok_or_else(|| Error::PartitionError(format!("no cell for `{name}`")))?;
        let cell = cx.arr(cj, &path)?.iter().map(|v| low_var(v, &path)).collect::<Result<Vec<_>>>()?;
        let mpath = format!("$.maps.{name}");
        let (map, is_pending) = match maps_json.get(name) {
            Some(mj) => cell_map_from_json(cx, mj, &mpath, cell.len())?,
            None => (CellMap::Identity, false),
        };
        if is_pending {
            pending.push(x);
        }
        cells.push(cell);
        maps.push(map);
    }
    let bot_path = "$.bot";
    let bot = match o.get("bot") {
        Some(b) => cx.arr(b, bot_path)?.iter().map(|v| low_var(v, bot_path)).collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    let mut a = Alignment::new(low.clone(), high.clone(), cells, bot, maps)?;
    if let Some(c) = o.get("candidates") {
        for (name, vals) in cx.obj(c, "$.candidates")? {
            let x = high.var(name).ok_or_else(|| Error::UndeclaredVariable(name.clone()))?;
            let p = format!("$.candidates.{name}");
            let mut list = Vec::new();
            for t in cx.arr(vals, &p)? {
                list.push(cx.arr(t, &p)?.iter().map(|v| cx.value(v, &p)).collect::<Result<Vec<_>>>()?);
            }
            a = a.with_candidates(x, list);
        }
    }
    let mut inputs = Vec::new();
    if let Some(ins) = o.get("inputs") {
        for (k, p) in cx.arr(ins, "$.inputs")?.iter().enumerate() {
            let path = format!("$.inputs[{k}]");
            let po = cx.obj(p, &path)?;
            cx.only_keys(po, &["low", "high"], &path)?;
            inputs.push(InputPair {
                low: setting_from_json(cx, low, cx.field(po, "low", &path)?, &format!("{path}.low"))?,
                high: setting_from_json(cx, high, cx.field(po, "high", &path)?, &format!("{path}.high"))?,
            });
        }
    }
    let partial = match o.get("partial") {
        None => false,
        Some(p) => p.as_bool().ok_or_else(|| cx.type_err("$.partial", "expected a boolean"))?,
    };
    if !partial && pending.is_empty() {
        a.check_surjective()?;
    }
    Ok(AlignmentDoc { alignment: a, pending, inputs })
}

/// Alignment between two signatures. Induced maps must carry their rows.
pub fn parse_alignment(text: &str, low: &Arc<Signature>, high: &Arc<Signature>) -> Result<Alignment> {
    let cx = Ctx { text: Some(text) };
    let doc = alignment_doc(&cx, &parse_json(text)?, low, high)?;
    if let Some(&x) = doc.pending.first() {
        return Err(cx.type_err(&format!("$.maps.{}", high.name(x)), "induced map without rows needs the models to rebuild it"));
    }
    Ok(doc.alignment)
}

/// Alignment between two models, rebuilding induced maps given without
/// rows from the document's `inputs`. Returns the inputs as well.
pub fn load_alignment(text: &str, low: &CausalModel, high: &CausalModel) -> Result<(Alignment, Vec<InputPair>)> {
    let cx = Ctx { text: Some(text) };
    alignment_from_doc(&cx, &parse_json(text)?, low, high)
}

fn alignment_from_doc(cx: &Ctx, j: &Json, low: &CausalModel, high: &CausalModel) -> Result<(Alignment, Vec<InputPair>)> {
    let doc = alignment_doc(cx, j, low.sig(), high.sig())?;
    if doc.pending.is_empty() {
        return Ok((doc.alignment, doc.inputs));
    }
    if doc.inputs.is_empty() {
        return Err(cx.type_err("$.inputs", "induced maps need input pairs"));
    }
    let a = doc.alignment;
    let fixed = (0..a.high.len()).map(|x| if doc.pending.contains(&x) { None } else { Some(a.maps[x].clone()) }).collect();
    let rebuilt = build_interchange_alignment(low, high, a.cells.clone(), a.bot.clone(), fixed, &doc.inputs)?;
    Ok((rebuilt, doc.inputs))
}

/// Value-merge family over a model: `{"maps": {X: map}, "values": {X: [...]}}`.
/// A variable without `values` keeps the image of its map over its range.
pub fn parse_value_merge(text: &str, sig: &Signature) -> Result<ValueMergeFamily> {
    let cx = Ctx { text: Some(text) };
    let j = parse_json(text)?;
    let o = cx.obj(&j, "$")?;
    cx.check_format(o)?;
    cx.only_keys(o, &["format", "maps", "values"], "$")?;
    let values = match o.get("values") {
        Some(v) => Some(cx.obj(v, "$.values")?),
        None => None,
    };
    let mut maps = Vec::new();
    for (name, mj) in cx.obj(cx.field(o, "maps", "$")?, "$.maps")? {
        let x = sig.var(name).ok_or_else(|| Error::UndeclaredVariable(name.clone()))?;
        let path = format!("$.maps.{name}");
        let width = 1;
        let (map, pending) = cell_map_from_json(&cx, mj, &path, width)?;
        if pending {
            return Err(cx.type_err(&path, "value merges need explicit map rows"));
        }
        let range = match values.and_then(|v| v.get(name)) {
            Some(vals) => {
                let p = format!("$.values.{name}");
                ValueRange::Enum(cx.arr(vals, &p)?.iter().map(|v| cx.value(v, &p)).collect::<Result<_>>()?)
            }
            None => {
                let mut image: Vec<Value> = Vec::new();
                for v in sig.enum_values(x)? {
                    if let Some(y) = map.apply(std::slice::from_ref(v)) {
                        if !image.contains(&y) {
                            image.push(y);
                        }
                    }
                }
                ValueRange::Enum(image)
            }
        };
        maps.push((x, map, range));
    }
    maps.sort_by_key(|m| m.0);
    Ok(ValueMergeFamily { maps, candidates: Vec::new() })
}

pub fn suite_to_json(sig: &Signature, items: &[Setting]) -> Json {
    json!({"format": FORMAT, "suite": items.iter().map(|s| setting_to_json(sig, s)).collect::<Vec<_>>()})
}

/// Hard interventions, each an object from variable names to values.
pub fn parse_suite(text: &str, sig: &Signature) -> Result<Vec<Setting>> {
    let cx = Ctx { text: Some(text) };
    suite_from_json(&cx, &parse_json(text)?, sig)
}

fn suite_from_json(cx: &Ctx, j: &Json, sig: &Signature) -> Result<Vec<Setting>> {
    let list = match j {
        Json::Array(_) => j,
        Json::Object(o) => {
            cx.check_format(o)?;
            cx.only_keys(o, &["format", "suite", "model"], "$")?;
            cx.field(o, "suite", "$")?
        }
        _ => return Err(cx.type_err("$", "expected a suite")),
    };
    cx.arr(list, "$.suite")?.iter().enumerate().map(|(k, s)| setting_from_json(cx, sig, s, &format!("$.suite[{k}]"))).collect()
}

/// One file of a fixture directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub file: String,
    pub text: String,
}

/// Files describing a fixture: `fixture.json` with the metadata and an
/// index, then one `.cam.json`, `.align.json` or `.suite.json` file per part.
pub fn fixture_documents(f: &Fixture) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (name, m) in &f.models {
        let j = match f.nets.iter().find(|(k, _)| k == name) {
            Some((_, net)) => dense_to_json(net),
            None => model_to_json(m)?,
        };
        docs.push(Document { file: format!("{name}.cam.json"), text: serialize(&j) });
    }
    for a in &f.alignments {
        let mut j = alignment_to_json(&a.alignment, &a.inputs)?;
        j["low"] = json!(a.low);
        j["high"] = json!(a.high);
        docs.push(Document { file: format!("{}.align.json", a.name), text: serialize(&j) });
    }
    for s in &f.suites {
        let m = f.model(&s.model)?;
        let mut j = suite_to_json(m.sig(), &s.items);
        j["model"] = json!(s.model);
        docs.push(Document { file: format!("{}.suite.json", s.name), text: serialize(&j) });
    }
    let index = json!({
        "format": FORMAT,
        "fixture": f.name,
        "metadata": f.metadata,
        "models": f.models.iter().map(|(k, _)| k.clone()).collect::<Vec<_>>(),
        "alignments": f.alignments.iter().map(|a| a.name.clone()).collect::<Vec<_>>(),
        "suites": f.suites.iter().map(|s| s.name.clone()).collect::<Vec<_>>(),
    });
    docs.insert(0, Document { file: "fixture.json".into(), text: serialize(&index) });
    Ok(docs)
}

/// Rebuilds a fixture from its documents.
pub fn fixture_from_documents(docs: &[Document]) -> Result<Fixture> {
    let get = |file: &str| -> Result<&Document> {
        docs.iter().find(|d| d.file == file).ok_or_else(|| Error::ParseError { line: 0, column: 0, msg: format!("missing document {file}") })
    };
    let index_doc = get("fixture.json")?;
    let cx = Ctx { text: Some(&index_doc.text) };
    let index = parse_json(&index_doc.text)?;
    let io = cx.obj(&index, "$")?;
    cx.check_format(io)?;
    let names = |key: &str| -> Result<Vec<String>> {
        cx.arr(cx.field(io, key, "$")?, &format!("$.{key}"))?
            .iter()
            .map(|n| n.as_str().map(str::to_string).ok_or_else(|| cx.type_err(&format!("$.{key}"), "expected names")))
            .collect()
    };
    let name = cx.field(io, "fixture", "$")?.as_str().ok_or_else(|| cx.type_err("$.fixture", "expected a name"))?.to_string();
    let mut models = Vec::new();
    let mut nets = Vec::new();
    for m in names("models")? {
        let d = get(&format!("{m}.cam.json"))?;
        let j = parse_json(&d.text)?;
        if j.get("dense").is_some() {
            nets.push((m.clone(), DenseNet::from_json(&j)?));
        }
        models.push((m, model_from_json_text(&j, Some(&d.text))?));
    }
    let model = |m: &str| -> Result<&CausalModel> {
        models.iter().find(|(k, _)| k == m).map(|(_, x)| x).ok_or_else(|| Error::UnknownFixture(format!("{name}/{m}")))
    };
    let mut alignments = Vec::new();
    for a in names("alignments")? {
        let d = get(&format!("{a}.align.json"))?;
        let acx = Ctx { text: Some(&d.text) };
        let j = parse_json(&d.text)?;
        let ends = |k: &str| -> Result<String> {
            j.get(k).and_then(Json::as_str).map(str::to_string).ok_or_else(|| acx.parse_err(k, format!("alignment needs `{k}`")))
        };
        let (low, high) = (ends("low")?, ends("high")?);
        let (alignment, inputs) = alignment_from_doc(&acx, &j, model(&low)?, model(&high)?)?;
        alignments.push(AlignmentEntry { name: a, low, high, alignment: Arc::new(alignment), inputs });
    }
    let mut suites = Vec::new();
    for s in names("suites")? {
        let d = get(&format!("{s}.suite.json"))?;
        let scx = Ctx { text: Some(&d.text) };
        let j = parse_json(&d.text)?;
        let m = j.get("model").and_then(Json::as_str).ok_or_else(|| scx.parse_err("model", "suite needs `model`"))?.to_string();
        let items = suite_from_json(&scx, &j, model(&m)?.sig())?;
        suites.push(SuiteEntry { name: s, model: m, items });
    }
    let metadata = io.get("metadata").cloned().unwrap_or(Json::Null);
    Ok(Fixture { name, models, nets, alignments, suites, metadata })
}

pub fn write_documents(docs: &[Document], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    for d in docs {
        let p = dir.join(&d.file);
        std::fs::write(&p, &d.text).map_err(|e| io_error(&p, e))?;
    }
    Ok(())
}

pub fn read_documents(dir: &Path) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| io_error(dir, e))? {
        let p = entry.map_err(|e| io_error(dir, e))?.path();
        if p.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let text = std::fs::read_to_string(&p).map_err(|e| io_error(&p, e))?;
        let file = p.file_name().and_then(|f| f.to_str()).unwrap_or_default().to_string();
        docs.push(Document { file, text });
    }
    docs.sort_by(|a, b| a.file.cmp(&b.file));
    Ok(docs)
}

fn io_error(p: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", p.display()))
}
