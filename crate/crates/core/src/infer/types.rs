use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferError {
    #[error("splitter variable `{0}` does not occur in any program point")]
    UnknownSplitter(String),
    #[error("invalid inference config: {0}")]
    Config(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    /// Minimum number of samples for any judgment at a point.
    #[serde(default = "default_justification")]
    pub justification: usize,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    #[serde(default = "default_one_of_max")]
    pub one_of_max: usize,
    /// Splits samples into `t < ts` and `t >= ts` cells when set.
    #[serde(default)]
    pub steady_state_time: Option<f64>,
}

fn default_justification() -> usize {
    5
}
fn default_rel_tol() -> f64 {
    1e-9
}
fn default_abs_tol() -> f64 {
    1e-12
}
fn default_one_of_max() -> usize {
    3
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            justification: default_justification(),
            rel_tol: default_rel_tol(),
            abs_tol: default_abs_tol(),
            one_of_max: default_one_of_max(),
            steady_state_time: None,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<(), InferError> {
        if self.justification < 2 {
            return Err(InferError::Config("justification threshold must be at least 2".into()));
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(InferError::Config("tolerances must be positive".into()));
        }
        if self.one_of_max == 0 {
            return Err(InferError::Config("one_of_max must be positive".into()));
        }
        Ok(())
    }

    /// |u − v| ≤ max(abs_tol, rel_tol · max(|u|, |v|))
    pub fn approx_eq(&self, u: f64, v: f64) -> bool {
        (u - v).abs() <= self.abs_tol.max(self.rel_tol * u.abs().max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TimeOp {
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<=")]
    Le,
}

impl TimeOp {
    pub fn symbol(self) -> &'static str {
        match self {
            TimeOp::Ge => ">=",
            TimeOp::Le => "<=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeBound {
    pub op: TimeOp,
    pub ts: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModeLiteral {
    pub var: String,
    pub value: String,
}

/// Conjunction of mode-equality literals and an optional time bound.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Guard {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub modes: Vec<ModeLiteral>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<TimeBound>,
}

impl Guard {
    pub fn is_trivial(&self) -> bool {
        self.modes.is_empty() && self.time.is_none()
    }

    pub fn time(op: TimeOp, ts: f64) -> Guard {
        Guard {
            modes: Vec::new(),
            time: Some(TimeBound { op, ts }),
        }
    }

    pub fn with_mode(mut self, var: &str, value: &str) -> Guard {
        self.modes.push(ModeLiteral {
            var: var.to_string(),
            value: value.to_string(),
        });
        self
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = self.modes.iter().map(|m| format!("{} == {}", m.var, m.value)).collect();
        if let Some(tb) = self.time {
            parts.push(format!("t {} {}", tb.op.symbol(), tb.ts));
        }
        f.write_str(&parts.join(" && "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rel {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "==")]
    Eq,
}

impl Rel {
    pub fn symbol(self) -> &'static str {
        match self {
            Rel::Lt => "<",
            Rel::Le => "<=",
            Rel::Eq => "==",
        }
    }
}

/// Invariant templates. Variable names are display names: arrays carry a
/// `[]` suffix and derived lengths read `size(b[])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Body {
    Constant { var: String, value: f64 },
    Range { var: String, lo: f64, hi: f64 },
    OneOf { var: String, values: Vec<f64> },
    /// y = a·x + b
    LinearBinary { y: String, a: f64, x: String, b: f64 },
    Ordering { x: String, rel: Rel, y: String },
    SumRelation { sum: String, array: String },
    Unmodified { var: String },
    ElementRange { array: String, lo: f64, hi: f64 },
}

impl Body {
    /// Variables mentioned by the body.
    pub fn variables(&self) -> Vec<&str> {
        match self {
            Body::Constant { var, .. }
            | Body::Range { var, .. }
            | Body::OneOf { var, .. }
            | Body::Unmodified { var } => vec![var],
            Body::LinearBinary { y, x, .. } => vec![y, x],
            Body::Ordering { x, y, .. } => vec![x, y],
            Body::SumRelation { sum, array } => vec![sum, array],
            Body::ElementRange { array, .. } => vec![array],
        }
    }

    pub fn template(&self) -> &'static str {
        match self {
            Body::Constant { .. } => "constant",
            Body::Range { .. } => "range",
            Body::OneOf { .. } => "one_of",
            Body::LinearBinary { .. } => "linear_binary",
            Body::Ordering { .. } => "ordering",
            Body::SumRelation { .. } => "sum_relation",
            Body::Unmodified { .. } => "unmodified",
            Body::ElementRange { .. } => "element_range",
        }
    }
}

impl fmt::Display for Body {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Body::Constant { var, value } => write!(f, "{var} == {value}"),
            Body::Range { var, lo, hi } => write!(f, "{lo} <= {var} <= {hi}"),
            Body::OneOf { var, values } => {
                let vs: Vec<String> = values.iter().map(f64::to_string).collect();
                write!(f, "{var} one of {{ {} }}", vs.join(", "))
            }
            Body::LinearBinary { y, a, x, b } => {
                if *b < 0.0 {
                    write!(f, "{y} == {a} * {x} - {}", -b)
                } else {
                    write!(f, "{y} == {a} * {x} + {b}")
                }
            }
            Body::Ordering { x, rel, y } => write!(f, "{x} {} {y}", rel.symbol()),
            Body::SumRelation { sum, array } => write!(f, "{sum} == sum({array})"),
            Body::Unmodified { var } => write!(f, "{var} == orig({var})"),
            Body::ElementRange { array, lo, hi } => write!(f, "{lo} <= {array} elements <= {hi}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateInvariant {
    pub ppt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<Guard>,
    pub body: Body,
    /// Number of samples supporting the invariant.
    #[serde(default)]
    pub support: usize,
}

impl CandidateInvariant {
    pub fn new(ppt: &str, guard: Option<Guard>, body: Body) -> Self {
        CandidateInvariant {
            ppt: ppt.to_string(),
            guard,
            body,
            support: 0,
        }
    }
}

impl fmt::Display for CandidateInvariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.guard {
            Some(g) if !g.is_trivial() => write!(f, "{} :: {g} ==> {}", self.ppt, self.body),
            _ => write!(f, "{} :: {}", self.ppt, self.body),
        }
    }
}

/// A cell with too few samples to judge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoJudgment {
    pub ppt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<Guard>,
    pub samples: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Inference {
    pub invariants: Vec<CandidateInvariant>,
    #[serde(default)]
    pub no_judgment: Vec<NoJudgment>,
}

impl Inference {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for inv in &self.invariants {
            out.push_str(&inv.to_string());
            out.push('\n');
        }
        for nj in &self.no_judgment {
            let guard = nj.guard.as_ref().map(|g| format!(" [{g}]")).unwrap_or_default();
            out.push_str(&format!("# no judgment: {}{guard}: {}\n", nj.ppt, nj.reason));
        }
        out
    }
}
