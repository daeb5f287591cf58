//! Parser for the one-invariant-per-line text form.

use super::types::{Body, CandidateInvariant, Guard, InferError, ModeLiteral, Rel, TimeBound, TimeOp};

/// Parses the text form produced by [`super::Inference::to_text`]. Blank
/// lines and lines starting with `#` are skipped.
pub fn parse_invariants(text: &str) -> Result<Vec<CandidateInvariant>, InferError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(parse_line(line).map_err(|message| InferError::Parse { line: i + 1, message })?);
    }
    Ok(out)
}

pub fn parse_line(line: &str) -> Result<CandidateInvariant, String> {
    let (ppt, rest) = line
        .split_once(" :: ")
        .ok_or_else(|| format!("missing ` :: ` separator in `{line}`"))?;
    let (guard, body) = match rest.split_once(" ==> ") {
        Some((g, b)) => (Some(parse_guard(g)?), b),
        None => (None, rest),
    };
    Ok(CandidateInvariant::new(ppt.trim(), guard, parse_body(body.trim())?))
}

pub fn parse_guard(text: &str) -> Result<Guard, String> {
    let mut g = Guard::default();
    for lit in text.split(" && ") {
        let lit = lit.trim();
        if let Some(rest) = lit.strip_prefix("t ") {
            let (op, ts) = rest
                .split_once(' ')
                .ok_or_else(|| format!("malformed time predicate `{lit}`"))?;
            let op = match op {
                ">=" => TimeOp::Ge,
                "<=" => TimeOp::Le,
                other => return Err(format!("unsupported time operator `{other}`")),
            };
            if g.time.is_some() {
                return Err("more than one time predicate".to_string());
            }
            g.time = Some(TimeBound { op, ts: number(ts)? });
        } else {
            let (var, value) = lit
                .split_once(" == ")
                .ok_or_else(|| format!("malformed guard literal `{lit}`"))?;
            g.modes.push(ModeLiteral {
                var: var.trim().to_string(),
                value: value.trim().to_string(),
            });
        }
    }
    Ok(g)
}

fn number(s: &str) -> Result<f64, String> {
    let x: f64 = s.trim().parse().map_err(|_| format!("bad number `{s}`"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("non-finite number `{s}`"))
    }
}

pub fn parse_body(text: &str) -> Result<Body, String> {
    if let Some((var, set)) = text.split_once(" one of ") {
        let inner = set
            .trim()
            .strip_prefix('{')
            .and_then(|s| s.strip_suffix('}'))
            .ok_or_else(|| format!("malformed value set in `{text}`"))?;
        let values = inner.split(',').map(number).collect::<Result<Vec<_>, _>>()?;
        return Ok(Body::OneOf {
            var: var.trim().to_string(),
            values,
        });
    }
    if let Some((left, hi)) = text.split_once(" elements <= ") {
        let (lo, array) = left
            .split_once(" <= ")
            .ok_or_else(|| format!("malformed element range `{text}`"))?;
        return Ok(Body::ElementRange {
            array: array.trim().to_string(),
            lo: number(lo)?,
            hi: number(hi)?,
        });
    }
    let le: Vec<&str> = text.split(" <= ").collect();
    if le.len() == 3 {
        return Ok(Body::Range {
            var: le[1].trim().to_string(),
            lo: number(le[0])?,
            hi: number(le[2])?,
        });
    }
    if let Some((lhs, rhs)) = text.split_once(" == ") {
        let lhs = lhs.trim().to_string();
        let rhs = rhs.trim();
        if rhs == format!("orig({lhs})") {
            return Ok(Body::Unmodified { var: lhs });
        }
        if let Some(array) = rhs.strip_prefix("sum(").and_then(|r| r.strip_suffix(')')) {
            return Ok(Body::SumRelation {
                sum: lhs,
                array: array.to_string(),
            });
        }
        if let Some((a, rest)) = rhs.split_once(" * ") {
            let (x, b) = if let Some((x, b)) = rest.split_once(" + ") {
                (x, number(b)?)
            } else if let Some((x, b)) = rest.split_once(" - ") {
                (x, -number(b)?)
            } else {
                return Err(format!("malformed linear relation `{text}`"));
            };
            return Ok(Body::LinearBinary {
                y: lhs,
                a: number(a)?,
                x: x.trim().to_string(),
                b,
            });
        }
        if let Ok(value) = number(rhs) {
            return Ok(Body::Constant { var: lhs, value });
        }
        return Ok(Body::Ordering {
            x: lhs,
            rel: Rel::Eq,
            y: rhs.to_string(),
        });
    }
    if le.len() == 2 {
        return Ok(Body::Ordering {
            x: le[0].trim().to_string(),
            rel: Rel::Le,
            y: le[1].trim().to_string(),
        });
    }
    if let Some((x, y)) = text.split_once(" < ") {
        return Ok(Body::Ordering {
            x: x.trim().to_string(),
            rel: Rel::Lt,
            y: y.trim().to_string(),
        });
    }
    Err(format!("unrecognized invariant `{text}`"))
}
