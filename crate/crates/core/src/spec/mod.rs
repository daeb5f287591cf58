//! Physical specifications and their comparison with inferred invariants.
//!
//! Both sides are reduced to a [`Formula`]: a guard plus a conjunction of
//! template atoms. Implication is decided on the interval fragment (see
//! [`implies`]); anything outside it is reported as `Incomparable`.

mod implies;
mod report;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use implies::{holds_on, implies, ImplicationResult, Verdict};
pub use report::{detect_mismatch, MismatchReport, PairResult, SpecVerdict};

use crate::infer::{Body, CandidateInvariant, Guard, ModeLiteral, TimeBound};
use crate::model::VarRef;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("malformed specification file: {0}")]
    Parse(String),
    #[error("invalid specification `{name}`: {message}")]
    Invalid { name: String, message: String },
    #[error("domain error: {0}")]
    Domain(String),
}

/// One interval conjunct `lo <= var <= hi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub var: String,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SpecGuard {
    /// Mode literals keyed by variable name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub mode: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<TimeBound>,
}

/// A physical specification: guard ⇒ conjunction of intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PhysSpecDoc")]
pub struct PhysSpec {
    pub name: String,
    #[serde(default)]
    pub guard: SpecGuard,
    pub body: Vec<Interval>,
}

#[derive(Deserialize)]
struct PhysSpecDoc {
    name: String,
    #[serde(default)]
    guard: SpecGuard,
    body: Vec<IntervalDoc>,
}

/// `{var, lo, hi}` or `{var, center, delta}`.
#[derive(Deserialize)]
#[serde(untagged)]
enum IntervalDoc {
    Bounds { var: String, lo: f64, hi: f64 },
    Tolerance { var: String, center: f64, delta: f64 },
}

impl TryFrom<PhysSpecDoc> for PhysSpec {
    type Error = SpecError;

    fn try_from(doc: PhysSpecDoc) -> Result<Self, SpecError> {
        let body = doc
            .body
            .into_iter()
            .map(|i| match i {
                IntervalDoc::Bounds { var, lo, hi } => Interval { var, lo, hi },
                IntervalDoc::Tolerance { var, center, delta } => Interval {
                    var,
                    lo: center - delta,
                    hi: center + delta,
                },
            })
            .collect();
        let spec = PhysSpec {
            name: doc.name,
            guard: doc.guard,
            body,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl PhysSpec {
    pub fn band(name: &str, guard: SpecGuard, var: &str, lo: f64, hi: f64) -> PhysSpec {
        PhysSpec {
            name: name.to_string(),
            guard,
            body: vec![Interval {
                var: var.to_string(),
                lo,
                hi,
            }],
        }
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let invalid = |message: String| SpecError::Invalid {
            name: self.name.clone(),
            message,
        };
        if self.body.is_empty() {
            return Err(invalid("empty body".into()));
        }
        for i in &self.body {
            if !(i.lo.is_finite() && i.hi.is_finite()) {
                return Err(invalid(format!("non-finite bound on `{}`", i.var)));
            }
            if i.lo > i.hi {
                return Err(invalid(format!("lo > hi on `{}`", i.var)));
            }
        }
        if let Some(tb) = self.guard.time {
            if !tb.ts.is_finite() {
                return Err(invalid("non-finite time bound".into()));
            }
        }
        Ok(())
    }

    pub fn formula(&self) -> Formula {
        Formula {
            name: self.name.clone(),
            guard: Guard {
                modes: self
                    .guard
                    .mode
                    .iter()
                    .map(|(var, value)| ModeLiteral {
                        var: var.clone(),
                        value: value.clone(),
                    })
                    .collect(),
                time: self.guard.time,
            },
            body: self
                .body
                .iter()
                .map(|i| Body::Range {
                    var: i.var.clone(),
                    lo: i.lo,
                    hi: i.hi,
                })
                .collect(),
        }
    }
}

pub fn load_specs(json: &str) -> Result<Vec<PhysSpec>, SpecError> {
    serde_json::from_str(json).map_err(|e| SpecError::Parse(e.to_string()))
}

/// Guard ⇒ conjunction of atoms. Variable names may be qualified as
/// `block.var`; a bare name matches the same name in any block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Formula {
    pub name: String,
    pub guard: Guard,
    pub body: Vec<Body>,
}

impl Formula {
    /// Qualifies the invariant's variables with the block of its program point.
    pub fn from_invariant(inv: &CandidateInvariant) -> Formula {
        let block = inv.ppt.split(":::").next().unwrap_or(&inv.ppt);
        let q = |v: &str| format!("{block}.{v}");
        let body = match &inv.body {
            Body::Constant { var, value } => Body::Constant { var: q(var), value: *value },
            Body::Range { var, lo, hi } => Body::Range { var: q(var), lo: *lo, hi: *hi },
            Body::OneOf { var, values } => Body::OneOf {
                var: q(var),
                values: values.clone(),
            },
            Body::LinearBinary { y, a, x, b } => Body::LinearBinary {
                y: q(y),
                a: *a,
                x: q(x),
                b: *b,
            },
            Body::Ordering { x, rel, y } => Body::Ordering { x: q(x), rel: *rel, y: q(y) },
            Body::SumRelation { sum, array } => Body::SumRelation {
                sum: q(sum),
                array: q(array),
            },
            Body::Unmodified { var } => Body::Unmodified { var: q(var) },
            Body::ElementRange { array, lo, hi } => Body::ElementRange {
                array: q(array),
                lo: *lo,
                hi: *hi,
            },
        };
        Formula {
            name: inv.to_string(),
            guard: inv.guard.clone().unwrap_or_default(),
            body: vec![body],
        }
    }

    pub fn variables(&self) -> Vec<&str> {
        self.body.iter().flat_map(Body::variables).collect()
    }
}

/// Whether two variable names denote the same variable. Unqualified names
/// match on the part after the block prefix.
pub fn same_var(a: &str, b: &str) -> bool {
    if a == b {
        return true;
    }
    match (a.split_once('.'), b.split_once('.')) {
        (Some(_), Some(_)) | (None, None) => false,
        (Some((_, va)), None) => va == b,
        (None, Some((_, vb))) => a == vb,
    }
}

/// Base variable name: strips `size(...)` and the array suffix.
fn base_name(v: &str) -> &str {
    let v = v.strip_prefix("size(").and_then(|s| s.strip_suffix(')')).unwrap_or(v);
    v.strip_suffix("[]").unwrap_or(v)
}

/// Keeps the invariants whose non-time variables, guard variables included,
/// all belong to `var_sp`. Variables resolve against the block of the
/// invariant's program point.
pub fn project(invariants: &[CandidateInvariant], var_sp: &BTreeSet<VarRef>) -> Vec<CandidateInvariant> {
    invariants
        .iter()
        .filter(|inv| {
            let block = inv.ppt.split(":::").next().unwrap_or(&inv.ppt);
            let guard_vars = inv.guard.iter().flat_map(|g| g.modes.iter().map(|m| m.var.as_str()));
            inv.body
                .variables()
                .into_iter()
                .chain(guard_vars)
                .map(base_name)
                .filter(|v| *v != "t")
                .all(|v| var_sp.contains(&VarRef::new(block, v)))
        })
        .cloned()
        .collect()
}

/// Relative steady-state output ripple of an ideal buck converter,
/// (1 − D) / (8·L·C·fs²) with duty cycle D = Vref / (η·Vs).
pub fn ripple_ratio(l: f64, c: f64, fs: f64, eta: f64, vref: f64, vs: f64) -> Result<f64, SpecError> {
    for (name, x) in [("L", l), ("C", c), ("fs", fs), ("eta", eta), ("Vref", vref), ("Vs", vs)] {
        if !(x > 0.0 && x.is_finite()) {
            return Err(SpecError::Domain(format!("{name} must be positive and finite, got {x}")));
        }
    }
    let d = vref / (eta * vs);
    if d >= 1.0 {
        return Err(SpecError::Domain(format!("duty cycle {d} >= 1: a buck converter cannot boost")));
    }
    Ok((1.0 - d) / (8.0 * l * c * fs * fs))
}
