//! Template-based invariant inference over trace records.
//!
//! Inference runs in two stages. [`infer_raw`] scans the samples of every
//! (program point, guard) cell and keeps each template instance that no
//! sample falsifies, without any support threshold or pruning. Raw sets of
//! several runs combine with [`merge`]. [`InvariantSet::finalize`] then
//! applies the justification threshold and subsumption pruning.

mod text;
mod types;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub use text::{parse_body, parse_guard, parse_invariants, parse_line};
pub use types::{
    Body, CandidateInvariant, Guard, InferError, Inference, InferenceConfig, ModeLiteral, NoJudgment, Rel, TimeBound,
    TimeOp,
};

use crate::trace::{ProgramPoint, RepType, TraceRecord, TraceValue};

/// Records of one run together with their declarations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceSet {
    pub ppts: Vec<ProgramPoint>,
    pub records: Vec<TraceRecord>,
}

/// Partition of samples by a mode variable and/or a time threshold.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Splitter {
    #[serde(default)]
    pub mode_var: Option<String>,
    /// Display names of mode values, keyed by the printed numeric value.
    #[serde(default)]
    pub labels: BTreeMap<String, String>,
    #[serde(default)]
    pub ts: Option<f64>,
}

impl Splitter {
    pub fn time(ts: f64) -> Self {
        Splitter {
            ts: Some(ts),
            ..Default::default()
        }
    }

    fn mode_name(&self, value: f64) -> String {
        let key = value.to_string();
        self.labels.get(&key).cloned().unwrap_or(key)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarClass {
    Time,
    Bool,
    Numeric,
    Size,
}

/// Raw summary of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub ppt: String,
    pub guard: Option<Guard>,
    pub samples: usize,
    /// Unpruned invariants that held on every sample of the cell.
    pub raw: Vec<Body>,
    /// Linear fit state per numeric pair still consistent with the samples,
    /// kept so that merging can complete a line split across runs.
    #[serde(default)]
    pub linear: Vec<PairFit>,
}

/// Streaming fit of `y = a * x + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LinearFit {
    Empty,
    Point { x: f64, y: f64 },
    /// Fitted through the two `support` points, which have distinct x.
    Line { a: f64, b: f64, support: [(f64, f64); 2] },
    Failed,
}

impl LinearFit {
    pub fn push(self, x: f64, y: f64, cfg: &InferenceConfig) -> Self {
        match self {
            LinearFit::Empty => LinearFit::Point { x, y },
            LinearFit::Point { x: x1, y: y1 } if x == x1 => {
                if cfg.approx_eq(y, y1) {
                    self
                } else {
                    LinearFit::Failed
                }
            }
            LinearFit::Point { x: x1, y: y1 } => {
                let a = (y - y1) / (x - x1);
                let b = y1 - a * x1;
                if a.is_finite() && b.is_finite() {
                    LinearFit::Line {
                        a,
                        b,
                        support: [(x1, y1), (x, y)],
                    }
                } else {
                    LinearFit::Failed
                }
            }
            LinearFit::Line { a, b, .. } => {
                // rounding in a * x + b scales with the terms, not with y
                let scale = y.abs().max((a * x).abs()).max(b.abs());
                if (y - (a * x + b)).abs() <= cfg.abs_tol.max(cfg.rel_tol * scale) {
                    self
                } else {
                    LinearFit::Failed
                }
            }
            LinearFit::Failed => LinearFit::Failed,
        }
    }

    /// Feeds the points that determine `other` into `self`.
    pub fn combine(self, other: LinearFit, cfg: &InferenceConfig) -> Self {
        match other {
            LinearFit::Empty => self,
            LinearFit::Failed => LinearFit::Failed,
            LinearFit::Point { x, y } => self.push(x, y, cfg),
            LinearFit::Line { support: [p, q], .. } => self.push(p.0, p.1, cfg).push(q.0, q.1, cfg),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFit {
    pub x: String,
    pub y: String,
    pub fit: LinearFit,
}

fn linear_bodies(fits: &[PairFit], cfg: &InferenceConfig) -> Vec<Body> {
    fits.iter()
        .filter_map(|p| match p.fit {
            LinearFit::Line { a, b, .. } if a.abs() > cfg.abs_tol => Some(Body::LinearBinary {
                y: p.y.clone(),
                a,
                x: p.x.clone(),
                b,
            }),
            _ => None,
        })
        .collect()
}

/// Raw inference result keyed by (program point, guard text).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InvariantSet {
    cells: BTreeMap<(String, String), Cell>,
}

impl InvariantSet {
    pub fn cells(&self) -> impl Iterator<Item = &Cell> {
        self.cells.values()
    }

    pub fn cell(&self, ppt: &str, guard: Option<&Guard>) -> Option<&Cell> {
        self.cells.get(&(ppt.to_string(), guard_key(guard)))
    }

    /// Applies the justification threshold and subsumption pruning.
    pub fn finalize(&self, cfg: &InferenceConfig) -> Inference {
        let mut out = Inference::default();
        for cell in self.cells.values() {
            if cell.samples < cfg.justification {
                out.no_judgment.push(NoJudgment {
                    ppt: cell.ppt.clone(),
                    guard: cell.guard.clone(),
                    samples: cell.samples,
                    reason: format!("{} sample(s), below the justification threshold {}", cell.samples, cfg.justification),
                });
                continue;
            }
            for body in prune(&cell.raw, cfg) {
                out.invariants.push(CandidateInvariant {
                    ppt: cell.ppt.clone(),
                    guard: cell.guard.clone(),
                    body,
                    support: cell.samples,
                });
            }
        }
        out
    }
}

fn guard_key(g: Option<&Guard>) -> String {
    g.map(ToString::to_string).unwrap_or_default()
}

fn prune(raw: &[Body], cfg: &InferenceConfig) -> Vec<Body> {
    let constants: Vec<&str> = raw
        .iter()
        .filter_map(|b| match b {
            Body::Constant { var, .. } => Some(var.as_str()),
            _ => None,
        })
        .collect();
    let is_const = |v: &str| constants.contains(&v);
    // A multi-value OneOf already pins the hull, so the Range adds nothing.
    let enumerated = |v: &str| {
        raw.iter()
            .any(|b| matches!(b, Body::OneOf { var, values } if var == v && values.len() > 1))
    };
    let identity = |x: &str, y: &str| {
        raw.iter().any(|b| match b {
            Body::LinearBinary { y: ly, a, x: lx, b } => {
                ((ly == y && lx == x) || (ly == x && lx == y)) && cfg.approx_eq(*a, 1.0) && cfg.approx_eq(*b, 0.0)
            }
            _ => false,
        })
    };
    raw.iter()
        .filter(|b| match b {
            Body::Constant { .. } | Body::SumRelation { .. } | Body::ElementRange { .. } => true,
            Body::Range { var, .. } => !is_const(var) && !enumerated(var),
            Body::Unmodified { var } => !is_const(var),
            Body::OneOf { var, values } => !is_const(var) && values.len() > 1,
            Body::LinearBinary { y, x, .. } => !is_const(y) && !is_const(x),
            Body::Ordering { x, rel, y } => {
                !is_const(x) && !is_const(y) && !(*rel == Rel::Eq && identity(x, y))
            }
        })
        .cloned()
        .collect()
}

struct Layout {
    /// (display name, class, record index or derived array index)
    scalars: Vec<(String, VarClass, ScalarSource)>,
    /// (display name, record index)
    arrays: Vec<(String, usize)>,
    time: Option<usize>,
}

#[derive(Clone, Copy)]
enum ScalarSource {
    Value(usize),
    SizeOf(usize),
}

impl Layout {
    fn new(p: &ProgramPoint) -> Layout {
        let mut scalars = Vec::new();
        let mut arrays = Vec::new();
        let mut time = None;
        for (i, v) in p.variables.iter().enumerate() {
            match v.rep_type {
                RepType::DoubleArray => arrays.push((format!("{}[]", v.name), i)),
                RepType::Boolean => scalars.push((v.name.clone(), VarClass::Bool, ScalarSource::Value(i))),
                RepType::Double if v.name == "t" => {
                    time = Some(i);
                    scalars.push((v.name.clone(), VarClass::Time, ScalarSource::Value(i)));
                }
                _ => scalars.push((v.name.clone(), VarClass::Numeric, ScalarSource::Value(i))),
            }
        }
        for (name, i) in arrays.clone() {
            scalars.push((format!("size({name})"), VarClass::Size, ScalarSource::SizeOf(i)));
        }
        Layout { scalars, arrays, time }
    }
}

fn array_of(r: &TraceRecord, i: usize) -> &[f64] {
    match &r.values[i].0 {
        TraceValue::DoubleArray(xs) => xs,
        _ => &[],
    }
}

fn scalar_of(r: &TraceRecord, src: ScalarSource) -> f64 {
    match src {
        ScalarSource::Value(i) => r.values[i].0.as_scalar().unwrap_or(f64::NAN),
        ScalarSource::SizeOf(i) => array_of(r, i).len() as f64,
    }
}

#[derive(Clone)]
struct ScalarAcc {
    first: f64,
    constant: bool,
    min: f64,
    max: f64,
    distinct: Option<Vec<f64>>,
}

#[derive(Clone)]
struct PairAcc {
    i: usize,
    j: usize,
    lt: bool,
    eq: bool,
    gt: bool,
    linear: LinearFit,
}

struct Acc<'a> {
    layout: &'a Layout,
    cfg: &'a InferenceConfig,
    n: usize,
    scalars: Vec<ScalarAcc>,
    pairs: Vec<PairAcc>,
    /// (scalar, array, holds)
    sums: Vec<(usize, usize, bool)>,
    /// (scalar or array display name, holds, seen)
    unmodified: Vec<(String, bool, bool)>,
    elements: Vec<Option<(f64, f64)>>,
}

impl<'a> Acc<'a> {
    fn new(layout: &'a Layout, cfg: &'a InferenceConfig, unmodified: Vec<String>) -> Self {
        let numeric = |c: VarClass| matches!(c, VarClass::Numeric | VarClass::Size);
        let mut pairs = Vec::new();
        for i in 0..layout.scalars.len() {
            for j in i + 1..layout.scalars.len() {
                if numeric(layout.scalars[i].1) && numeric(layout.scalars[j].1) {
                    pairs.push(PairAcc {
                        i,
                        j,
                        lt: false,
                        eq: false,
                        gt: false,
                        linear: LinearFit::Empty,
                    });
                }
            }
        }
        let mut sums = Vec::new();
        for (s, (_, class, _)) in layout.scalars.iter().enumerate() {
            if *class == VarClass::Numeric {
                for a in 0..layout.arrays.len() {
                    sums.push((s, a, true));
                }
            }
        }
        Acc {
            layout,
            cfg,
            n: 0,
            scalars: Vec::new(),
            pairs,
            sums,
            unmodified: unmodified.into_iter().map(|n| (n, true, false)).collect(),
            elements: vec![None; layout.arrays.len()],
        }
    }

    fn add(&mut self, r: &TraceRecord, partner: Option<(&TraceRecord, &ProgramPoint)>) {
        let cfg = self.cfg;
        let values: Vec<f64> = self.layout.scalars.iter().map(|(_, _, src)| scalar_of(r, *src)).collect();
        if self.n == 0 {
            self.scalars = values
                .iter()
                .map(|&v| ScalarAcc {
                    first: v,
                    constant: true,
                    min: v,
                    max: v,
                    distinct: Some(vec![v]),
                })
                .collect();
        } else {
            for (acc, &v) in self.scalars.iter_mut().zip(&values) {
                acc.constant &= cfg.approx_eq(acc.first, v);
                acc.min = acc.min.min(v);
                acc.max = acc.max.max(v);
                if let Some(d) = &mut acc.distinct {
                    if !d.contains(&v) {
                        d.push(v);
                        if d.len() > cfg.one_of_max {
                            acc.distinct = None;
                        }
                    }
                }
            }
        }
        for p in &mut self.pairs {
            let (x, y) = (values[p.i], values[p.j]);
            if cfg.approx_eq(x, y) {
                p.eq = true;
            } else if x < y {
                p.lt = true;
            } else {
                p.gt = true;
            }
            p.linear = p.linear.push(x, y, cfg);
        }
        for (s, a, holds) in &mut self.sums {
            if *holds {
                let total: f64 = array_of(r, self.layout.arrays[*a].1).iter().sum();
                *holds = (values[*s] - total).abs() <= cfg.abs_tol;
            }
        }
        for (lo_hi, (_, idx)) in self.elements.iter_mut().zip(&self.layout.arrays) {
            for &x in array_of(r, *idx) {
                *lo_hi = Some(match *lo_hi {
                    None => (x, x),
                    Some((lo, hi)) => (lo.min(x), hi.max(x)),
                });
            }
        }
        for (name, holds, seen) in &mut self.unmodified {
            let Some((pr, pp)) = partner else {
                *holds = false;
                continue;
            };
            let base = name.strip_suffix("[]").unwrap_or(name);
            let here = layout_value(self.layout, r, base);
            let there = pp.var_position(base).map(|i| &pr.values[i].0);
            *seen = true;
            *holds &= match (here, there) {
                (Some(TraceValue::DoubleArray(u)), Some(TraceValue::DoubleArray(v))) => {
                    u.len() == v.len() && u.iter().zip(v).all(|(a, b)| cfg.approx_eq(*a, *b))
                }
                (Some(u), Some(v)) => match (u.as_scalar(), v.as_scalar()) {
                    (Some(a), Some(b)) => cfg.approx_eq(a, b),
                    _ => false,
                },
                _ => false,
            };
        }
        self.n += 1;
    }

    fn fits(&self) -> Vec<PairFit> {
        self.pairs
            .iter()
            .filter(|p| !matches!(p.linear, LinearFit::Failed))
            .map(|p| PairFit {
                x: self.layout.scalars[p.i].0.clone(),
                y: self.layout.scalars[p.j].0.clone(),
                fit: p.linear,
            })
            .collect()
    }

    fn bodies(&self) -> Vec<Body> {
        let mut out = Vec::new();
        if self.n == 0 {
            return out;
        }
        let names = &self.layout.scalars;
        for (k, acc) in self.scalars.iter().enumerate() {
            let (name, class, _) = &names[k];
            if *class == VarClass::Time {
                continue;
            }
            if acc.constant {
                out.push(Body::Constant {
                    var: name.clone(),
                    value: acc.first,
                });
            }
            if *class != VarClass::Bool {
                out.push(Body::Range {
                    var: name.clone(),
                    lo: acc.min,
                    hi: acc.max,
                });
            }
            if let Some(d) = &acc.distinct {
                let mut values = d.clone();
                values.sort_by(f64::total_cmp);
                out.push(Body::OneOf {
                    var: name.clone(),
                    values,
                });
            }
        }
        for p in &self.pairs {
            let (x, y) = (&names[p.i].0, &names[p.j].0);
            if let Some(body) = ordering(x, y, p.lt, p.eq, p.gt) {
                out.push(body);
            }
        }
        out.extend(linear_bodies(&self.fits(), self.cfg));
        for &(s, a, holds) in &self.sums {
            if holds {
                out.push(Body::SumRelation {
                    sum: names[s].0.clone(),
                    array: self.layout.arrays[a].0.clone(),
                });
            }
        }
        for (name, holds, seen) in &self.unmodified {
            if *holds && *seen {
                out.push(Body::Unmodified { var: name.clone() });
            }
        }
        for (k, lo_hi) in self.elements.iter().enumerate() {
            if let Some((lo, hi)) = lo_hi {
                out.push(Body::ElementRange {
                    array: self.layout.arrays[k].0.clone(),
                    lo: *lo,
                    hi: *hi,
                });
            }
        }
        out
    }
}

fn layout_value<'r>(layout: &Layout, r: &'r TraceRecord, base: &str) -> Option<&'r TraceValue> {
    layout
        .scalars
        .iter()
        .find_map(|(n, _, src)| match src {
            ScalarSource::Value(i) if n == base => Some(*i),
            _ => None,
        })
        .or_else(|| {
            layout
                .arrays
                .iter()
                .find(|(n, _)| n.strip_suffix("[]") == Some(base))
                .map(|(_, i)| *i)
        })
        .map(|i| &r.values[i].0)
}

fn ordering(x: &str, y: &str, lt: bool, eq: bool, gt: bool) -> Option<Body> {
    let body = |x: &str, rel, y: &str| Body::Ordering {
        x: x.to_string(),
        rel,
        y: y.to_string(),
    };
    match (lt, eq, gt) {
        (true, true, true) | (true, _, true) | (false, false, false) => None,
        (true, false, false) => Some(body(x, Rel::Lt, y)),
        (true, true, false) => Some(body(x, Rel::Le, y)),
        (false, true, false) => Some(body(x, Rel::Eq, y)),
        (false, true, true) => Some(body(y, Rel::Le, x)),
        (false, false, true) => Some(body(y, Rel::Lt, x)),
    }
}

fn split_ppt(name: &str) -> (&str, &str) {
    name.split_once(":::").unwrap_or((name, ""))
}

/// Raw inference without partitioning (one cell per program point, or per
/// time window when `cfg.steady_state_time` is set).
pub fn infer_raw(traces: &TraceSet, cfg: &InferenceConfig) -> Result<InvariantSet, InferError> {
    let splitter = Splitter {
        ts: cfg.steady_state_time,
        ..Default::default()
    };
    infer_conditional_raw(traces, &splitter, cfg)
}

pub fn infer_conditional_raw(traces: &TraceSet, splitter: &Splitter, cfg: &InferenceConfig) -> Result<InvariantSet, InferError> {
    cfg.validate()?;
    let ppts: HashMap<&str, &ProgramPoint> = traces.ppts.iter().map(|p| (p.name.as_str(), p)).collect();
    if let Some(m) = &splitter.mode_var {
        if !traces.ppts.iter().any(|p| p.var_position(m).is_some()) {
            return Err(InferError::UnknownSplitter(m.clone()));
        }
    }
    let mut by_key: HashMap<(&str, &str, u64), &TraceRecord> = HashMap::new();
    for r in &traces.records {
        let (base, kind) = split_ppt(&r.ppt);
        by_key.insert((base, kind, r.nonce), r);
    }
    let partner_of = |r: &TraceRecord| -> Option<(&TraceRecord, &ProgramPoint)> {
        let (base, kind) = split_ppt(&r.ppt);
        let other = match kind {
            "ENTER" => "EXIT",
            "EXIT" => "ENTER",
            _ => return None,
        };
        let pr = by_key.get(&(base, other, r.nonce))?;
        Some((pr, ppts.get(pr.ppt.as_str())?))
    };

    let layouts: HashMap<&str, Layout> = traces.ppts.iter().map(|p| (p.name.as_str(), Layout::new(p))).collect();
    let mut accs: BTreeMap<(String, String), (Option<Guard>, Acc)> = BTreeMap::new();
    // make every declared point visible even with zero samples
    let mut empty_cells: Vec<&str> = traces.ppts.iter().map(|p| p.name.as_str()).collect();

    for r in &traces.records {
        let Some(p) = ppts.get(r.ppt.as_str()) else {
            continue;
        };
        let layout = &layouts[r.ppt.as_str()];
        let mut guard = Guard::default();
        if let Some(m) = &splitter.mode_var {
            let value = p
                .var_position(m)
                .and_then(|i| r.values[i].0.as_scalar())
                .or_else(|| {
                    let (pr, pp) = partner_of(r)?;
                    pp.var_position(m).and_then(|i| pr.values[i].0.as_scalar())
                });
            if let Some(v) = value {
                guard.modes.push(ModeLiteral {
                    var: m.clone(),
                    value: splitter.mode_name(v),
                });
            }
        }
        if let (Some(ts), Some(ti)) = (splitter.ts, layout.time) {
            let t = r.values[ti].0.as_scalar().unwrap_or(f64::NAN);
            guard.time = Some(TimeBound {
                op: if t >= ts { TimeOp::Ge } else { TimeOp::Le },
                ts,
            });
        }
        let guard = (!guard.is_trivial()).then_some(guard);
        let key = (r.ppt.clone(), guard_key(guard.as_ref()));
        let (_, acc) = accs.entry(key).or_insert_with(|| {
            let unmodified = unmodified_candidates(p, &traces.ppts);
            (guard.clone(), Acc::new(layout, cfg, unmodified))
        });
        acc.add(r, partner_of(r));
        empty_cells.retain(|n| *n != r.ppt);
    }

    let mut cells: BTreeMap<(String, String), Cell> = accs
        .into_iter()
        .map(|(key, (guard, acc))| {
            let cell = Cell {
                ppt: key.0.clone(),
                guard,
                samples: acc.n,
                raw: acc.bodies(),
                linear: acc.fits(),
            };
            (key, cell)
        })
        .collect();
    for name in empty_cells {
        cells.insert(
            (name.to_string(), String::new()),
            Cell {
                ppt: name.to_string(),
                guard: None,
                samples: 0,
                raw: Vec::new(),
                linear: Vec::new(),
            },
        );
    }
    Ok(InvariantSet { cells })
}

/// EXIT variables also declared (same name and type) at the matching ENTER point.
fn unmodified_candidates(p: &ProgramPoint, all: &[ProgramPoint]) -> Vec<String> {
    let (base, kind) = split_ppt(&p.name);
    if kind != "EXIT" {
        return Vec::new();
    }
    let enter_name = format!("{base}:::ENTER");
    let Some(enter) = all.iter().find(|q| q.name == enter_name) else {
        return Vec::new();
    };
    p.variables
        .iter()
        .filter(|v| v.name != "t")
        .filter(|v| enter.variables.iter().any(|w| w.name == v.name && w.rep_type == v.rep_type))
        .map(|v| {
            if v.rep_type == RepType::DoubleArray {
                format!("{}[]", v.name)
            } else {
                v.name.clone()
            }
        })
        .collect()
}

pub fn infer(traces: &TraceSet, cfg: &InferenceConfig) -> Result<Inference, InferError> {
    Ok(infer_raw(traces, cfg)?.finalize(cfg))
}

pub fn infer_conditional(traces: &TraceSet, splitter: &Splitter, cfg: &InferenceConfig) -> Result<Inference, InferError> {
    Ok(infer_conditional_raw(traces, splitter, cfg)?.finalize(cfg))
}

/// Combines raw per-run sets. A template instance survives only if every
/// run that has samples in the cell reports it; ranges take the envelope.
pub fn merge(runs: &[InvariantSet], cfg: &InferenceConfig) -> InvariantSet {
    let mut cells: BTreeMap<(String, String), Cell> = BTreeMap::new();
    for run in runs {
        for (key, cell) in &run.cells {
            match cells.get_mut(key) {
                None => {
                    cells.insert(key.clone(), cell.clone());
                }
                Some(_) if cell.samples == 0 => {}
                Some(acc) if acc.samples == 0 => *acc = cell.clone(),
                Some(acc) => {
                    acc.raw = merge_bodies(&acc.raw, &cell.raw, cfg);
                    acc.linear = acc
                        .linear
                        .iter()
                        .filter_map(|l| {
                            let r = cell.linear.iter().find(|r| r.x == l.x && r.y == l.y)?;
                            let fit = l.fit.combine(r.fit, cfg);
                            (fit != LinearFit::Failed).then(|| PairFit { fit, ..l.clone() })
                        })
                        .collect();
                    acc.raw.extend(linear_bodies(&acc.linear, cfg));
                    acc.samples += cell.samples;
                }
            }
        }
    }
    InvariantSet { cells }
}

fn merge_bodies(left: &[Body], right: &[Body], cfg: &InferenceConfig) -> Vec<Body> {
    let mut out = Vec::new();
    for l in left {
        let merged = right.iter().find_map(|r| merge_one(l, r, cfg));
        out.extend(merged);
    }
    out
}

fn flags(rel: Rel) -> (bool, bool) {
    match rel {
        Rel::Lt => (true, false),
        Rel::Le => (true, true),
        Rel::Eq => (false, true),
    }
}

fn merge_one(l: &Body, r: &Body, cfg: &InferenceConfig) -> Option<Body> {
    use Body::*;
    match (l, r) {
        (Constant { var, value }, Constant { var: v2, value: w }) if var == v2 => {
            cfg.approx_eq(*value, *w).then(|| l.clone())
        }
        (Range { var, lo, hi }, Range { var: v2, lo: l2, hi: h2 }) if var == v2 => Some(Range {
            var: var.clone(),
            lo: lo.min(*l2),
            hi: hi.max(*h2),
        }),
        (OneOf { var, values }, OneOf { var: v2, values: w }) if var == v2 => {
            let mut all = values.clone();
            for x in w {
                if !all.contains(x) {
                    all.push(*x);
                }
            }
            all.sort_by(f64::total_cmp);
            (all.len() <= cfg.one_of_max).then(|| OneOf { var: var.clone(), values: all })
        }
        // lines are recombined from the fit states in `merge`
        (Ordering { x, rel, y }, Ordering { x: x2, rel: r2, y: y2 }) => {
            // the same pair may appear in either orientation
            let (lt1, eq1) = flags(*rel);
            let (mut lt2, eq2) = flags(*r2);
            let mut gt2 = false;
            if x == y2 && y == x2 {
                gt2 = lt2;
                lt2 = false;
            } else if x != x2 || y != y2 {
                return None;
            }
            ordering(x, y, lt1 || lt2, eq1 || eq2, gt2)
        }
        (SumRelation { sum, array }, SumRelation { sum: s2, array: a2 }) if sum == s2 && array == a2 => Some(l.clone()),
        (Unmodified { var }, Unmodified { var: v2 }) if var == v2 => Some(l.clone()),
        (ElementRange { array, lo, hi }, ElementRange { array: a2, lo: l2, hi: h2 }) if array == a2 => Some(ElementRange {
            array: array.clone(),
            lo: lo.min(*l2),
            hi: hi.max(*h2),
        }),
        _ => None,
    }
}
