//! Daikon declaration (version 2.0) and data-trace files.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceError {
    #[error("no program points to declare")]
    NoProgramPoints,
    #[error("invalid program point `{ppt}`: {message}")]
    InvalidPoint { ppt: String, message: String },
    #[error("record for undeclared program point `{0}`")]
    Undeclared(String),
    #[error("record for `{ppt}` has {got} values, expected {expected}")]
    Arity { ppt: String, got: usize, expected: usize },
    #[error("non-finite value for `{var}` at `{ppt}`")]
    NonFinite { ppt: String, var: String },
    #[error("value for `{var}` at `{ppt}` does not match its rep-type")]
    TypeMismatch { ppt: String, var: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("instrumentation: {0}")]
    Config(String),
}

fn io(e: std::io::Error) -> TraceError {
    TraceError::Io(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RepType {
    Double,
    Int,
    Boolean,
    DoubleArray,
}

impl RepType {
    pub fn as_str(self) -> &'static str {
        match self {
            RepType::Double => "double",
            RepType::Int => "int",
            RepType::Boolean => "boolean",
            RepType::DoubleArray => "double[]",
        }
    }

    fn parse(s: &str) -> Option<RepType> {
        Some(match s {
            "double" => RepType::Double,
            "int" => RepType::Int,
            "boolean" => RepType::Boolean,
            "double[]" => RepType::DoubleArray,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PptVariable {
    pub name: String,
    pub dec_type: String,
    pub rep_type: RepType,
    pub comparability: i64,
}

impl PptVariable {
    pub fn new(name: &str, rep_type: RepType, comparability: i64) -> Self {
        PptVariable {
            name: name.to_string(),
            dec_type: rep_type.as_str().to_string(),
            rep_type,
            comparability,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramPoint {
    pub name: String,
    pub variables: Vec<PptVariable>,
}

impl ProgramPoint {
    pub fn validate(&self) -> Result<(), TraceError> {
        let bad = |m: &str| {
            Err(TraceError::InvalidPoint {
                ppt: self.name.clone(),
                message: m.to_string(),
            })
        };
        if self.name.matches(":::").count() != 1 {
            return bad("name must contain exactly one `:::`");
        }
        if self.name.contains('\n') {
            return bad("name contains a newline");
        }
        let mut seen = std::collections::HashSet::new();
        for v in &self.variables {
            if v.name.is_empty() || v.name.contains(char::is_whitespace) {
                return bad(&format!("bad variable name `{}`", v.name));
            }
            if !seen.insert(&v.name) {
                return bad(&format!("duplicate variable `{}`", v.name));
            }
        }
        Ok(())
    }

    /// Part of the name before `:::`.
    pub fn base(&self) -> &str {
        self.name.split(":::").next().unwrap_or(&self.name)
    }

    pub fn is_enter(&self) -> bool {
        self.name.ends_with(":::ENTER")
    }

    pub fn is_exit(&self) -> bool {
        self.name.ends_with(":::EXIT")
    }

    pub fn var_position(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TraceValue {
    Double(f64),
    Int(i64),
    Boolean(bool),
    DoubleArray(Vec<f64>),
}

impl TraceValue {
    fn rep_type(&self) -> RepType {
        match self {
            TraceValue::Double(_) => RepType::Double,
            TraceValue::Int(_) => RepType::Int,
            TraceValue::Boolean(_) => RepType::Boolean,
            TraceValue::DoubleArray(_) => RepType::DoubleArray,
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            TraceValue::Double(x) => x.is_finite(),
            TraceValue::DoubleArray(xs) => xs.iter().all(|x| x.is_finite()),
            _ => true,
        }
    }

    /// Scalar view used by inference; booleans map to 0/1.
    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            TraceValue::Double(x) => Some(*x),
            TraceValue::Int(i) => Some(*i as f64),
            TraceValue::Boolean(b) => Some(f64::from(u8::from(*b))),
            TraceValue::DoubleArray(_) => None,
        }
    }
}

impl fmt::Display for TraceValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceValue::Double(x) => write!(f, "{x:?}"),
            TraceValue::Int(i) => write!(f, "{i}"),
            TraceValue::Boolean(b) => write!(f, "{b}"),
            TraceValue::DoubleArray(xs) => {
                f.write_str("[")?;
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{x:?}")?;
                }
                f.write_str("]")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub ppt: String,
    pub nonce: u64,
    /// (value, modified bit) per declared variable, in declaration order.
    pub values: Vec<(TraceValue, u8)>,
}

fn escape_name(name: &str) -> String {
    name.replace('\\', "\\\\").replace(' ', "\\_")
}

fn unescape_name(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    let mut chars = name.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('_') => out.push(' '),
                Some(other) => out.push(other),
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

pub fn write_decls<W: Write>(ppts: &[ProgramPoint], mut out: W) -> Result<(), TraceError> {
    if ppts.is_empty() {
        return Err(TraceError::NoProgramPoints);
    }
    for p in ppts {
        p.validate()?;
    }
    let mut text = String::from("decl-version 2.0\n");
    for p in ppts {
        text.push('\n');
        text.push_str(&format!("ppt {}\n", escape_name(&p.name)));
        text.push_str("  ppt-type point\n");
        for v in &p.variables {
            text.push_str(&format!("  variable {}\n", v.name));
            text.push_str("    var-kind variable\n");
            text.push_str(&format!("    dec-type {}\n", v.dec_type));
            text.push_str(&format!("    rep-type {}\n", v.rep_type.as_str()));
            text.push_str(&format!("    comparability {}\n", v.comparability));
        }
    }
    out.write_all(text.as_bytes()).map_err(io)
}

pub fn read_decls(input: &str) -> Result<Vec<ProgramPoint>, TraceError> {
    let perr = |line: usize, message: String| TraceError::Parse { line, message };
    let mut lines = input.lines().enumerate().map(|(i, l)| (i + 1, l)).peekable();
    match lines.next() {
        Some((_, "decl-version 2.0")) => {}
        Some((n, other)) => return Err(perr(n, format!("expected `decl-version 2.0`, found `{other}`"))),
        None => return Err(perr(1, "empty declaration file".to_string())),
    }
    let mut ppts: Vec<ProgramPoint> = Vec::new();
    while let Some((n, line)) = lines.next() {
        if line.trim().is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix("ppt ") {
            ppts.push(ProgramPoint {
                name: unescape_name(name),
                variables: Vec::new(),
            });
            continue;
        }
        let Some(current) = ppts.last_mut() else {
            return Err(perr(n, format!("unexpected `{line}` before any ppt")));
        };
        let trimmed = line.trim_start();
        if let Some(kind) = trimmed.strip_prefix("ppt-type ") {
            if kind != "point" {
                return Err(perr(n, format!("unsupported ppt-type `{kind}`")));
            }
        } else if let Some(name) = trimmed.strip_prefix("variable ") {
            current.variables.push(PptVariable {
                name: name.to_string(),
                dec_type: String::new(),
                rep_type: RepType::Double,
                comparability: 0,
            });
        } else {
            let Some(var) = current.variables.last_mut() else {
                return Err(perr(n, format!("unexpected `{line}` before any variable")));
            };
            let (key, value) = trimmed
                .split_once(' ')
                .ok_or_else(|| perr(n, format!("malformed line `{line}`")))?;
            match key {
                "var-kind" => {}
                "dec-type" => var.dec_type = value.to_string(),
                "rep-type" => {
                    var.rep_type =
                        RepType::parse(value).ok_or_else(|| perr(n, format!("unsupported rep-type `{value}`")))?
                }
                "comparability" => {
                    var.comparability = value.parse().map_err(|_| perr(n, format!("bad comparability `{value}`")))?
                }
                other => return Err(perr(n, format!("unknown declaration key `{other}`"))),
            }
        }
    }
    for p in &ppts {
        p.validate()?;
    }
    Ok(ppts)
}

/// Writes records in order. Every record must reference a declared point
/// and carry finite values of the declared types.
pub fn write_dtrace<'a, W, I>(records: I, ppts: &[ProgramPoint], mut out: W) -> Result<(), TraceError>
where
    W: Write,
    I: IntoIterator<Item = &'a TraceRecord>,
{
    let index: HashMap<&str, &ProgramPoint> = ppts.iter().map(|p| (p.name.as_str(), p)).collect();
    let mut text = String::new();
    for r in records {
        let p = index.get(r.ppt.as_str()).ok_or_else(|| TraceError::Undeclared(r.ppt.clone()))?;
        if r.values.len() != p.variables.len() {
            return Err(TraceError::Arity {
                ppt: r.ppt.clone(),
                got: r.values.len(),
                expected: p.variables.len(),
            });
        }
        text.push_str(&r.ppt);
        text.push('\n');
        text.push_str("this_invocation_nonce\n");
        text.push_str(&format!("{}\n", r.nonce));
        for ((value, modified), decl) in r.values.iter().zip(&p.variables) {
            if value.rep_type() != decl.rep_type {
                return Err(TraceError::TypeMismatch {
                    ppt: r.ppt.clone(),
                    var: decl.name.clone(),
                });
            }
            if !value.is_finite() {
                return Err(TraceError::NonFinite {
                    ppt: r.ppt.clone(),
                    var: decl.name.clone(),
                });
            }
            text.push_str(&format!("{}\n{value}\n{modified}\n", decl.name));
        }
        text.push('\n');
        if text.len() > 1 << 16 {
            out.write_all(text.as_bytes()).map_err(io)?;
            text.clear();
        }
    }
    out.write_all(text.as_bytes()).map_err(io)
}

fn parse_double(s: &str, line: usize) -> Result<f64, TraceError> {
    let x: f64 = s.parse().map_err(|_| TraceError::Parse {
        line,
        message: format!("bad double `{s}`"),
    })?;
    if !x.is_finite() {
        return Err(TraceError::Parse {
            line,
            message: format!("non-finite value `{s}` is not supported"),
        });
    }
    Ok(x)
}

fn parse_value(s: &str, rep: RepType, line: usize) -> Result<TraceValue, TraceError> {
    let perr = |m: String| TraceError::Parse { line, message: m };
    Ok(match rep {
        RepType::Double => TraceValue::Double(parse_double(s, line)?),
        RepType::Int => TraceValue::Int(s.parse().map_err(|_| perr(format!("bad int `{s}`")))?),
        RepType::Boolean => TraceValue::Boolean(match s {
            "true" => true,
            "false" => false,
            _ => return Err(perr(format!("bad boolean `{s}`"))),
        }),
        RepType::DoubleArray => {
            let inner = s
                .strip_prefix('[')
                .and_then(|r| r.strip_suffix(']'))
                .ok_or_else(|| perr(format!("bad array `{s}`")))?;
            TraceValue::DoubleArray(
                inner
                    .split_whitespace()
                    .map(|x| parse_double(x, line))
                    .collect::<Result<_, _>>()?,
            )
        }
    })
}

pub fn read_dtrace(input: &str, ppts: &[ProgramPoint]) -> Result<Vec<TraceRecord>, TraceError> {
    let index: HashMap<&str, &ProgramPoint> = ppts.iter().map(|p| (p.name.as_str(), p)).collect();
    let lines: Vec<&str> = input.lines().collect();
    let eof = lines.len() + 1;
    let mut pos = 0;
    let mut next = |what: &str| -> Result<(usize, &str), TraceError> {
        let Some(l) = lines.get(pos) else {
            return Err(TraceError::Parse {
                line: eof,
                message: format!("unexpected end of file, expected {what}"),
            });
        };
        pos += 1;
        Ok((pos, l))
    };
    let mut records = Vec::new();
    loop {
        let (n, name) = match next("ppt name") {
            Ok(x) => x,
            Err(_) => break,
        };
        if name.trim().is_empty() {
            continue;
        }
        let p = index.get(name).ok_or_else(|| TraceError::Parse {
            line: n,
            message: format!("undeclared program point `{name}`"),
        })?;
        let (n, marker) = next("this_invocation_nonce")?;
        if marker != "this_invocation_nonce" {
            return Err(TraceError::Parse {
                line: n,
                message: format!("expected `this_invocation_nonce`, found `{marker}`"),
            });
        }
        let (n, nonce) = next("nonce")?;
        let nonce: u64 = nonce.parse().map_err(|_| TraceError::Parse {
            line: n,
            message: format!("bad nonce `{nonce}`"),
        })?;
        let mut values = Vec::with_capacity(p.variables.len());
        for decl in &p.variables {
            let (n, vname) = next("variable name")?;
            if vname != decl.name {
                return Err(TraceError::Parse {
                    line: n,
                    message: format!("expected variable `{}`, found `{vname}`", decl.name),
                });
            }
            let (n, raw) = next("value")?;
            let value = parse_value(raw, decl.rep_type, n)?;
            let (n, m) = next("modified bit")?;
            let modified: u8 = match m {
                "0" => 0,
                "1" => 1,
                "2" => 2,
                _ => {
                    return Err(TraceError::Parse {
                        line: n,
                        message: format!("bad modified bit `{m}`"),
                    })
                }
            };
            values.push((value, modified));
        }
        records.push(TraceRecord {
            ppt: p.name.clone(),
            nonce,
            values,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(name: &str, vars: &[(&str, RepType)]) -> ProgramPoint {
        ProgramPoint {
            name: name.to_string(),
            variables: vars
                .iter()
                .enumerate()
                .map(|(i, (n, r))| PptVariable::new(n, *r, i as i64 + 1))
                .collect(),
        }
    }

    #[test]
    fn single_point_decls_layout() {
        let mut buf = Vec::new();
        write_decls(&[point("blk:::ENTER", &[("x", RepType::Double)])], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "decl-version 2.0\n\nppt blk:::ENTER\n  ppt-type point\n  variable x\n    var-kind variable\n    dec-type double\n    rep-type double\n    comparability 1\n"
        );
    }

    #[test]
    fn decls_escape_spaces_and_round_trip() {
        let ppts = vec![
            point("my block:::ENTER", &[("a", RepType::Int), ("b", RepType::DoubleArray)]),
            point("my block:::EXIT", &[("c", RepType::Boolean)]),
        ];
        let mut buf = Vec::new();
        write_decls(&ppts, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("ppt my\\_block:::ENTER\n"));
        assert_eq!(read_decls(&text).unwrap(), ppts);
        assert_eq!(write_decls(&[], Vec::new()), Err(TraceError::NoProgramPoints));
    }

    #[test]
    fn dtrace_record_layout() {
        let ppts = vec![point("controller:::ENTER", &[("VC", RepType::Double)])];
        let rec = TraceRecord {
            ppt: "controller:::ENTER".into(),
            nonce: 1,
            values: vec![(TraceValue::Double(48.125), 1)],
        };
        let mut buf = Vec::new();
        write_dtrace([&rec], &ppts, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "controller:::ENTER\nthis_invocation_nonce\n1\nVC\n48.125\n1\n\n");
        assert_eq!(read_dtrace(&text, &ppts).unwrap(), vec![rec]);

        let mut empty = Vec::new();
        write_dtrace(std::iter::empty(), &ppts, &mut empty).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn array_values_are_bracketed() {
        assert_eq!(TraceValue::DoubleArray(vec![1.0, 2.0, 3.0]).to_string(), "[1.0 2.0 3.0]");
    }

    #[test]
    fn write_errors() {
        let ppts = vec![point("p:::ENTER", &[("x", RepType::Double)])];
        let undeclared = TraceRecord {
            ppt: "q:::ENTER".into(),
            nonce: 1,
            values: vec![],
        };
        assert_eq!(
            write_dtrace([&undeclared], &ppts, Vec::new()),
            Err(TraceError::Undeclared("q:::ENTER".into()))
        );
        let nan = TraceRecord {
            ppt: "p:::ENTER".into(),
            nonce: 1,
            values: vec![(TraceValue::Double(f64::NAN), 1)],
        };
        assert!(matches!(write_dtrace([&nan], &ppts, Vec::new()), Err(TraceError::NonFinite { .. })));
    }

    #[test]
    fn read_errors_carry_line_numbers() {
        let ppts = vec![point("p:::ENTER", &[("x", RepType::Double)])];
        let truncated = "p:::ENTER\nthis_invocation_nonce\n1\nx\n";
        assert_eq!(
            read_dtrace(truncated, &ppts),
            Err(TraceError::Parse {
                line: 5,
                message: "unexpected end of file, expected value".into()
            })
        );
        let nan = "p:::ENTER\nthis_invocation_nonce\n1\nx\nNaN\n1\n";
        assert!(matches!(read_dtrace(nan, &ppts), Err(TraceError::Parse { line: 5, .. })));
        let wrong = "p:::ENTER\nnonce\n1\n";
        assert!(matches!(read_dtrace(wrong, &ppts), Err(TraceError::Parse { line: 2, .. })));
    }
}
