use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{same_var, Formula};
use crate::infer::{Body, Guard, Rel, TimeOp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Valid,
    Invalid,
    Incomparable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImplicationResult {
    pub verdict: Verdict,
    /// Valuation satisfying the antecedent and violating the consequent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl ImplicationResult {
    fn valid() -> Self {
        ImplicationResult {
            verdict: Verdict::Valid,
            witness: None,
            reason: None,
        }
    }

    fn incomparable(reason: impl Into<String>) -> Self {
        ImplicationResult {
            verdict: Verdict::Incomparable,
            witness: None,
            reason: Some(reason.into()),
        }
    }

    fn invalid(witness: BTreeMap<String, f64>) -> Self {
        ImplicationResult {
            verdict: Verdict::Invalid,
            witness: Some(witness),
            reason: None,
        }
    }
}

/// Checks whether the consequent's guard window is covered by the
/// antecedent's, so the bodies can be compared inside it.
fn align(a: &Guard, c: &Guard) -> Result<(), String> {
    let mut ma: Vec<_> = a.modes.iter().collect();
    let mut mc: Vec<_> = c.modes.iter().collect();
    ma.sort();
    mc.sort();
    if ma != mc {
        return Err(format!("mode literals differ: `{a}` vs `{c}`"));
    }
    match (a.time, c.time) {
        (None, _) => Ok(()),
        (Some(_), None) => Err("antecedent holds only on a time window, consequent on all time".into()),
        (Some(ta), Some(tc)) if ta.op != tc.op => Err("time predicates have opposite orientation".into()),
        (Some(ta), Some(tc)) => {
            let covered = match ta.op {
                TimeOp::Ge => tc.ts >= ta.ts,
                TimeOp::Le => tc.ts <= ta.ts,
            };
            if covered {
                Ok(())
            } else {
                Err(format!("consequent window `{c}` extends beyond antecedent window `{a}`"))
            }
        }
    }
}

type Boxes = Vec<(String, f64, f64)>;

fn lookup<'a>(boxes: &'a Boxes, var: &str) -> Option<&'a (String, f64, f64)> {
    boxes.iter().find(|(v, _, _)| same_var(v, var))
}

fn narrow(boxes: &mut Boxes, var: &str, lo: f64, hi: f64) {
    match boxes.iter_mut().find(|(v, _, _)| same_var(v, var)) {
        Some(b) => {
            b.1 = b.1.max(lo);
            b.2 = b.2.min(hi);
        }
        None => boxes.push((var.to_string(), lo, hi)),
    }
}

/// Per-variable bounds implied by the antecedent. Atoms without an
/// interval reading are ignored here, which only enlarges the set.
fn antecedent_boxes(body: &[Body]) -> Boxes {
    let mut boxes = Boxes::new();
    for atom in body {
        match atom {
            Body::Range { var, lo, hi } => narrow(&mut boxes, var, *lo, *hi),
            Body::Constant { var, value } => narrow(&mut boxes, var, *value, *value),
            Body::OneOf { var, values } => {
                let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                narrow(&mut boxes, var, lo, hi);
            }
            _ => {}
        }
    }
    // affine images of known x ranges
    for atom in body {
        if let Body::LinearBinary { y, a, x, b } = atom {
            if let Some(&(_, xl, xh)) = lookup(&boxes, x) {
                let (p, q) = (a * xl + b, a * xh + b);
                if p.is_finite() && q.is_finite() {
                    narrow(&mut boxes, y, p.min(q), p.max(q));
                }
            }
        }
    }
    boxes
}

fn value(val: &BTreeMap<String, f64>, var: &str) -> Option<f64> {
    val.iter().find(|(k, _)| same_var(k, var)).map(|(_, v)| *v)
}

/// Evaluates the body of `f` on a scalar valuation. `None` when an atom
/// mentions an unassigned variable or needs array values.
pub fn holds_on(f: &Formula, val: &BTreeMap<String, f64>) -> Option<bool> {
    let mut all = true;
    for atom in &f.body {
        let ok = match atom {
            Body::Constant { var, value: c } => value(val, var)? == *c,
            Body::Range { var, lo, hi } => {
                let x = value(val, var)?;
                *lo <= x && x <= *hi
            }
            Body::OneOf { var, values } => values.contains(&value(val, var)?),
            Body::LinearBinary { y, a, x, b } => {
                let (yv, xv) = (value(val, y)?, value(val, x)?);
                (yv - (a * xv + b)).abs() <= 1e-9 * yv.abs().max(1.0)
            }
            Body::Ordering { x, rel, y } => {
                let (xv, yv) = (value(val, x)?, value(val, y)?);
                match rel {
                    Rel::Lt => xv < yv,
                    Rel::Le => xv <= yv,
                    Rel::Eq => xv == yv,
                }
            }
            Body::SumRelation { .. } | Body::Unmodified { .. } | Body::ElementRange { .. } => return None,
        };
        all &= ok;
    }
    Some(all)
}

/// Decides `a ⇒ c` on the interval fragment.
///
/// The consequent must be made of Range/Constant atoms (or atoms that occur
/// verbatim in the antecedent). Each is checked by interval containment
/// against the antecedent's bounds. A failing check yields a corner-point
/// witness that is re-evaluated against both formulas before being returned.
pub fn implies(a: &Formula, c: &Formula) -> ImplicationResult {
    if let Err(reason) = align(&a.guard, &c.guard) {
        return ImplicationResult::incomparable(reason);
    }
    let boxes = antecedent_boxes(&a.body);
    if boxes.iter().any(|(_, lo, hi)| lo > hi) {
        return ImplicationResult::valid();
    }
    for atom in &c.body {
        if a.body.contains(atom) {
            continue;
        }
        let (var, lo_c, hi_c) = match atom {
            Body::Range { var, lo, hi } => (var, *lo, *hi),
            Body::Constant { var, value } => (var, *value, *value),
            other => {
                return ImplicationResult::incomparable(format!(
                    "unsupported consequent form `{}`",
                    other.template()
                ))
            }
        };
        let (lo_a, hi_a) = lookup(&boxes, var).map_or((f64::NEG_INFINITY, f64::INFINITY), |b| (b.1, b.2));
        if lo_c <= lo_a && hi_a <= hi_c {
            continue;
        }
        let corner = if lo_a < lo_c {
            if lo_a.is_finite() {
                lo_a
            } else {
                lo_c - 1.0
            }
        } else if hi_a.is_finite() {
            hi_a
        } else {
            hi_c + 1.0
        };
        return match witness(a, c, &boxes, var, corner) {
            Some(w) => ImplicationResult::invalid(w),
            None => ImplicationResult::incomparable(format!(
                "`{var}` bounds are not contained but no witness satisfies the antecedent"
            )),
        };
    }
    ImplicationResult::valid()
}

/// Builds a full valuation with `var = corner`, propagating affine
/// relations and filling the rest from the antecedent bounds.
fn witness(a: &Formula, c: &Formula, boxes: &Boxes, var: &str, corner: f64) -> Option<BTreeMap<String, f64>> {
    let mut val = BTreeMap::new();
    val.insert(var.to_string(), corner);
    let linear: Vec<_> = a
        .body
        .iter()
        .filter_map(|b| match b {
            Body::LinearBinary { y, a, x, b } => Some((y, *a, x, *b)),
            _ => None,
        })
        .collect();
    loop {
        let mut changed = false;
        for &(y, k, x, b) in &linear {
            match (value(&val, y), value(&val, x)) {
                (Some(yv), None) => {
                    val.insert(x.clone(), (yv - b) / k);
                    changed = true;
                }
                (None, Some(xv)) => {
                    val.insert(y.clone(), k * xv + b);
                    changed = true;
                }
                _ => {}
            }
        }
        if !changed {
            break;
        }
    }
    let mut names: Vec<&str> = a.variables();
    names.extend(c.variables());
    for n in names {
        if value(&val, n).is_some() {
            continue;
        }
        let (lo, hi) = lookup(boxes, n).map_or((f64::NEG_INFINITY, f64::INFINITY), |b| (b.1, b.2));
        let x = match (lo.is_finite(), hi.is_finite()) {
            (true, true) => lo + (hi - lo) / 2.0,
            (true, false) => lo,
            (false, true) => hi,
            (false, false) => 0.0,
        };
        val.insert(n.to_string(), x);
    }
    (holds_on(a, &val)? && !holds_on(c, &val)?).then_some(val)
}
