use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{implies, same_var, Formula, ImplicationResult, PhysSpec, Verdict};
use crate::infer::{Body, CandidateInvariant};

/// Both implication directions for one (specification, invariant) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub invariant: String,
    /// Interval of the invariant on the specified variable, if it has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<(f64, f64)>,
    /// invariant ⇒ specification
    pub forward: ImplicationResult,
    /// specification ⇒ invariant
    pub backward: ImplicationResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecVerdict {
    pub spec: String,
    pub pairs: Vec<PairResult>,
    /// No variable-matching invariant forward-implies the specification.
    pub mismatch: bool,
    /// The stricter reading: the specification implies none of the invariants.
    pub literal_mismatch: bool,
    /// Invariants whose comparison fell outside the decidable fragment.
    pub incomparable: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchReport {
    pub scenario: String,
    pub specs: Vec<SpecVerdict>,
}

fn bound_on(body: &Body, vars: &[&str]) -> Option<(f64, f64)> {
    let hit = |v: &str| vars.iter().any(|w| same_var(v, w));
    match body {
        Body::Range { var, lo, hi } if hit(var) => Some((*lo, *hi)),
        Body::Constant { var, value } if hit(var) => Some((*value, *value)),
        _ => None,
    }
}

/// Compares every specification with every invariant sharing one of its
/// variables, in both directions.
pub fn detect_mismatch(scenario: &str, invariants: &[CandidateInvariant], specs: &[PhysSpec]) -> MismatchReport {
    let formulas: Vec<(&CandidateInvariant, Formula)> =
        invariants.iter().map(|i| (i, Formula::from_invariant(i))).collect();
    let specs = specs
        .iter()
        .map(|s| {
            let sigma = s.formula();
            let svars = sigma.variables();
            let pairs: Vec<PairResult> = formulas
                .iter()
                .filter(|(_, f)| f.variables().iter().any(|v| svars.iter().any(|w| same_var(v, w))))
                .map(|(inv, f)| PairResult {
                    invariant: inv.to_string(),
                    bound: bound_on(&f.body[0], &svars),
                    forward: implies(f, &sigma),
                    backward: implies(&sigma, f),
                })
                .collect();
            SpecVerdict {
                spec: s.name.clone(),
                mismatch: !pairs.iter().any(|p| p.forward.verdict == Verdict::Valid),
                literal_mismatch: !pairs.iter().any(|p| p.backward.verdict == Verdict::Valid),
                incomparable: pairs
                    .iter()
                    .filter(|p| {
                        p.forward.verdict == Verdict::Incomparable || p.backward.verdict == Verdict::Incomparable
                    })
                    .map(|p| p.invariant.clone())
                    .collect(),
                pairs,
            }
        })
        .collect();
    MismatchReport {
        scenario: scenario.to_string(),
        specs,
    }
}

fn cell(v: Verdict) -> &'static str {
    match v {
        Verdict::Valid => "True",
        Verdict::Invalid => "False",
        Verdict::Incomparable => "Incomparable",
    }
}

impl MismatchReport {
    pub fn any_mismatch(&self) -> bool {
        self.specs.iter().any(|s| s.mismatch)
    }

    pub fn any_incomparable(&self) -> bool {
        self.specs.iter().any(|s| !s.incomparable.is_empty())
    }

    /// Forward verdicts of the pairs that carry an interval bound.
    pub fn bounded_pairs(&self) -> impl Iterator<Item = (&SpecVerdict, &PairResult)> {
        self.specs
            .iter()
            .flat_map(|s| s.pairs.iter().map(move |p| (s, p)))
            .filter(|(_, p)| p.bound.is_some())
    }

    pub fn to_json(reports: &[MismatchReport]) -> String {
        serde_json::to_string_pretty(reports).expect("report serializes")
    }

    /// One row per bounded pair: scenario, bound_lo, bound_hi, fwd, bwd.
    pub fn to_csv(reports: &[MismatchReport]) -> String {
        let mut out = String::from("scenario,bound_lo,bound_hi,fwd,bwd\n");
        for r in reports {
            for (_, p) in r.bounded_pairs() {
                let (lo, hi) = p.bound.expect("filtered");
                let _ = writeln!(
                    out,
                    "{},{lo},{hi},{},{}",
                    r.scenario,
                    cell(p.forward.verdict),
                    cell(p.backward.verdict)
                );
            }
        }
        out
    }

    pub fn to_table(reports: &[MismatchReport]) -> String {
        let mut rows = vec![[
            "scenario".to_string(),
            "spec".to_string(),
            "inferred bound".to_string(),
            "inv => spec".to_string(),
            "spec => inv".to_string(),
            "mismatch".to_string(),
        ]];
        let mut notes = Vec::new();
        for r in reports {
            for s in &r.specs {
                if s.pairs.is_empty() {
                    rows.push([r.scenario.clone(), s.spec.clone(), "-".into(), "-".into(), "-".into(), yes(s.mismatch)]);
                }
                for p in &s.pairs {
                    let bound = p.bound.map_or_else(|| p.invariant.clone(), |(lo, hi)| format!("[{lo}, {hi}]"));
                    rows.push([
                        r.scenario.clone(),
                        s.spec.clone(),
                        bound,
                        cell(p.forward.verdict).into(),
                        cell(p.backward.verdict).into(),
                        yes(s.mismatch),
                    ]);
                }
                if s.mismatch != s.literal_mismatch {
                    notes.push(format!(
                        "{} / {}: the spec-implies-invariant reading gives mismatch = {}",
                        r.scenario,
                        s.spec,
                        yes(s.literal_mismatch)
                    ));
                }
                for inv in &s.incomparable {
                    notes.push(format!("{} / {}: incomparable with `{inv}`", r.scenario, s.spec));
                }
            }
        }
        let widths: Vec<usize> = (0..6).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for (i, row) in rows.iter().enumerate() {
            let line: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            let _ = writeln!(out, "{}", line.join(" | ").trim_end());
            if i == 0 {
                let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
                let _ = writeln!(out, "{}", rule.join("-+-"));
            }
        }
        for n in notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }
}

fn yes(b: bool) -> String {
    if b { "yes" } else { "no" }.to_string()
}
