//! Infix expression language for guards, invariants, flows and updates.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! or      := and ( "||" and )*
//! and     := not ( "&&" not )*
//! not     := "!" not | cmp
//! cmp     := sum ( ("<=" | "<" | "==" | "!=" | ">=" | ">") sum )?
//! sum     := product ( ("+" | "-") product )*
//! product := unary ( ("*" | "/") unary )*
//! unary   := "-" unary | power
//! power   := atom ( "^" "-"? integer )?
//! atom    := number | "true" | "false" | ident | ident "(" args ")" | "(" or ")"
//! ```
//!
//! Functions: `min`, `max` (two arguments), `abs`, `floor`, `round` (one).
//! The identifier `t` denotes the current time. Location names can be used
//! as boolean atoms when an expression is bound with a location table.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero in `{0}`")]
    DivisionByZero(String),
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("expected a {expected} value in `{expr}`")]
    Type { expected: &'static str, expr: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Le,
    Lt,
    Eq,
    Ne,
    Ge,
    Gt,
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Le => "<=",
            CmpOp::Lt => "<",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
        }
    }

    fn apply(self, a: f64, b: f64) -> bool {
        match self {
            CmpOp::Le => a <= b,
            CmpOp::Lt => a < b,
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Ge => a >= b,
            CmpOp::Gt => a > b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LogicOp {
    And,
    Or,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Min,
    Max,
    Abs,
    Floor,
    Round,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Min => "min",
            Func::Max => "max",
            Func::Abs => "abs",
            Func::Floor => "floor",
            Func::Round => "round",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "min" => Func::Min,
            "max" => Func::Max,
            "abs" => Func::Abs,
            "floor" => Func::Floor,
            "round" => Func::Round,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Bool(bool),
    /// Variable reference; `slot` is filled in by [`Expr::bind`].
    Var { name: String, slot: Option<usize> },
    /// True iff the current location has this index.
    AtLocation { name: String, index: usize },
    Time,
    Neg(Box<Expr>),
    Not(Box<Expr>),
    Arith { op: ArithOp, lhs: Box<Expr>, rhs: Box<Expr> },
    /// `may_vanish` is false only for nonzero literal denominators.
    Div { num: Box<Expr>, den: Box<Expr>, may_vanish: bool },
    Pow { base: Box<Expr>, exp: i32 },
    Cmp { op: CmpOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Logic { op: LogicOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Call { func: Func, args: Vec<Expr> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Num(f64),
    Bool(bool),
}

impl Value {
    pub fn as_f64(self) -> f64 {
        match self {
            Value::Num(x) => x,
            Value::Bool(b) => f64::from(u8::from(b)),
        }
    }
}

/// Evaluation context: a valuation indexed by variable slot, the current
/// time and the current location.
#[derive(Debug, Clone, Copy)]
pub struct Env<'a> {
    pub values: &'a [f64],
    pub time: f64,
    pub location: usize,
}

impl<'a> Env<'a> {
    pub fn new(values: &'a [f64], time: f64, location: usize) -> Self {
        Env { values, time, location }
    }
}

/// Static type of an expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExprType {
    Num,
    Bool,
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ParseError> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0, len: src.len() };
        let e = p.or()?;
        if p.pos < p.tokens.len() {
            return Err(p.error(format!("unexpected `{}`", p.tokens[p.pos].1)));
        }
        Ok(e)
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var {
            name: name.to_string(),
            slot: None,
        }
    }

    pub fn and(lhs: Expr, rhs: Expr) -> Expr {
        match (&lhs, &rhs) {
            (Expr::Bool(true), _) => rhs,
            (_, Expr::Bool(true)) => lhs,
            _ => Expr::Logic {
                op: LogicOp::And,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            },
        }
    }

    /// Resolves variable names to slots. Names found in `locations` but not
    /// in `vars` become location predicates. `t` resolves to time unless a
    /// variable of that name exists.
    pub fn bind(
        &mut self,
        vars: &HashMap<String, usize>,
        locations: Option<&HashMap<String, usize>>,
    ) -> Result<(), EvalError> {
        match self {
            Expr::Var { name, slot } => {
                if let Some(&i) = vars.get(name.as_str()) {
                    *slot = Some(i);
                } else if name == "t" {
                    *self = Expr::Time;
                } else if let Some(&i) = locations.and_then(|l| l.get(name.as_str())) {
                    *self = Expr::AtLocation {
                        name: name.clone(),
                        index: i,
                    };
                } else {
                    return Err(EvalError::Unbound(name.clone()));
                }
                Ok(())
            }
            Expr::Num(_) | Expr::Bool(_) | Expr::Time | Expr::AtLocation { .. } => Ok(()),
            Expr::Neg(e) | Expr::Not(e) | Expr::Pow { base: e, .. } => e.bind(vars, locations),
            Expr::Arith { lhs, rhs, .. } | Expr::Cmp { lhs, rhs, .. } | Expr::Logic { lhs, rhs, .. } => {
                lhs.bind(vars, locations)?;
                rhs.bind(vars, locations)
            }
            Expr::Div { num, den, .. } => {
                num.bind(vars, locations)?;
                den.bind(vars, locations)
            }
            Expr::Call { args, .. } => args.iter_mut().try_for_each(|a| a.bind(vars, locations)),
        }
    }

    /// Variable names referenced by the expression (excluding time).
    pub fn variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Var { name, .. } => {
                if name != "t" {
                    out.insert(name.clone());
                }
            }
            Expr::Num(_) | Expr::Bool(_) | Expr::Time | Expr::AtLocation { .. } => {}
            Expr::Neg(e) | Expr::Not(e) | Expr::Pow { base: e, .. } => e.collect_vars(out),
            Expr::Arith { lhs, rhs, .. } | Expr::Cmp { lhs, rhs, .. } | Expr::Logic { lhs, rhs, .. } => {
                lhs.collect_vars(out);
                rhs.collect_vars(out);
            }
            Expr::Div { num, den, .. } => {
                num.collect_vars(out);
                den.collect_vars(out);
            }
            Expr::Call { args, .. } => args.iter().for_each(|a| a.collect_vars(out)),
        }
    }

    /// Static type, or an error naming the offending subexpression.
    pub fn check_type(&self) -> Result<ExprType, EvalError> {
        let want = |e: &Expr, t: ExprType| -> Result<(), EvalError> {
            if e.check_type()? == t {
                Ok(())
            } else {
                Err(EvalError::Type {
                    expected: if t == ExprType::Num { "numeric" } else { "boolean" },
                    expr: e.to_string(),
                })
            }
        };
        match self {
            Expr::Num(_) | Expr::Var { .. } | Expr::Time => Ok(ExprType::Num),
            Expr::Bool(_) | Expr::AtLocation { .. } => Ok(ExprType::Bool),
            Expr::Neg(e) | Expr::Pow { base: e, .. } => want(e, ExprType::Num).map(|_| ExprType::Num),
            Expr::Not(e) => want(e, ExprType::Bool).map(|_| ExprType::Bool),
            Expr::Arith { lhs, rhs, .. } => {
                want(lhs, ExprType::Num)?;
                want(rhs, ExprType::Num)?;
                Ok(ExprType::Num)
            }
            Expr::Div { num, den, .. } => {
                want(num, ExprType::Num)?;
                want(den, ExprType::Num)?;
                Ok(ExprType::Num)
            }
            Expr::Cmp { lhs, rhs, .. } => {
                want(lhs, ExprType::Num)?;
                want(rhs, ExprType::Num)?;
                Ok(ExprType::Bool)
            }
            Expr::Logic { lhs, rhs, .. } => {
                want(lhs, ExprType::Bool)?;
                want(rhs, ExprType::Bool)?;
                Ok(ExprType::Bool)
            }
            Expr::Call { args, .. } => {
                for a in args {
                    want(a, ExprType::Num)?;
                }
                Ok(ExprType::Num)
            }
        }
    }

    pub fn eval(&self, env: &Env<'_>) -> Result<Value, EvalError> {
        Ok(match self {
            Expr::Num(x) => Value::Num(*x),
            Expr::Bool(b) => Value::Bool(*b),
            Expr::Var { name, slot } => {
                let i = slot.ok_or_else(|| EvalError::Unbound(name.clone()))?;
                Value::Num(*env.values.get(i).ok_or_else(|| EvalError::Unbound(name.clone()))?)
            }
            Expr::AtLocation { index, .. } => Value::Bool(env.location == *index),
            Expr::Time => Value::Num(env.time),
            Expr::Neg(e) => Value::Num(-e.num(env)?),
            Expr::Not(e) => Value::Bool(!e.truth(env)?),
            Expr::Arith { op, lhs, rhs } => {
                let (a, b) = (lhs.num(env)?, rhs.num(env)?);
                Value::Num(match op {
                    ArithOp::Add => a + b,
                    ArithOp::Sub => a - b,
                    ArithOp::Mul => a * b,
                })
            }
            Expr::Div { num, den, may_vanish } => {
                let n = num.num(env)?;
                let d = den.num(env)?;
                if *may_vanish && d == 0.0 {
                    return Err(EvalError::DivisionByZero(self.to_string()));
                }
                Value::Num(n / d)
            }
            Expr::Pow { base, exp } => Value::Num(base.num(env)?.powi(*exp)),
            Expr::Cmp { op, lhs, rhs } => Value::Bool(op.apply(lhs.num(env)?, rhs.num(env)?)),
            Expr::Logic { op, lhs, rhs } => {
                let a = lhs.truth(env)?;
                Value::Bool(match op {
                    LogicOp::And => a && rhs.truth(env)?,
                    LogicOp::Or => a || rhs.truth(env)?,
                })
            }
            Expr::Call { func, args } => {
                let a = args[0].num(env)?;
                Value::Num(match func {
                    Func::Min => a.min(args[1].num(env)?),
                    Func::Max => a.max(args[1].num(env)?),
                    Func::Abs => a.abs(),
                    Func::Floor => a.floor(),
                    Func::Round => a.round(),
                })
            }
        })
    }

    /// Evaluates a numeric expression.
    pub fn num(&self, env: &Env<'_>) -> Result<f64, EvalError> {
        match self.eval(env)? {
            Value::Num(x) => Ok(x),
            Value::Bool(_) => Err(EvalError::Type {
                expected: "numeric",
                expr: self.to_string(),
            }),
        }
    }

    /// Evaluates a boolean expression.
    pub fn truth(&self, env: &Env<'_>) -> Result<bool, EvalError> {
        match self.eval(env)? {
            Value::Bool(b) => Ok(b),
            Value::Num(_) => Err(EvalError::Type {
                expected: "boolean",
                expr: self.to_string(),
            }),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(x) => {
                if *x < 0.0 {
                    write!(f, "({x:?})")
                } else {
                    write!(f, "{x:?}")
                }
            }
            Expr::Bool(b) => write!(f, "{b}"),
            Expr::Var { name, .. } | Expr::AtLocation { name, .. } => f.write_str(name),
            Expr::Time => f.write_str("t"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Not(e) => write!(f, "(!{e})"),
            Expr::Arith { op, lhs, rhs } => {
                let sym = match op {
                    ArithOp::Add => "+",
                    ArithOp::Sub => "-",
                    ArithOp::Mul => "*",
                };
                write!(f, "({lhs} {sym} {rhs})")
            }
            Expr::Div { num, den, .. } => write!(f, "({num} / {den})"),
            Expr::Pow { base, exp } => write!(f, "({base}^{exp})"),
            Expr::Cmp { op, lhs, rhs } => write!(f, "({lhs} {} {rhs})", op.symbol()),
            Expr::Logic { op, lhs, rhs } => {
                let sym = if *op == LogicOp::And { "&&" } else { "||" };
                write!(f, "({lhs} {sym} {rhs})")
            }
            Expr::Call { func, args } => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(&'static str),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(x) => write!(f, "{x}"),
            Tok::Ident(s) => f.write_str(s),
            Tok::Sym(s) => f.write_str(s),
        }
    }
}

const SYMBOLS: [&str; 19] = [
    "<=", ">=", "==", "!=", "&&", "||", "<", ">", "!", "+", "-", "*", "/", "^", "(", ")", ",", "=", "|",
];

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let x: f64 = text.parse().map_err(|_| ParseError::Syntax {
                offset: start,
                message: format!("bad number `{text}`"),
            })?;
            out.push((start, Tok::Num(x)));
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else {
            let rest = &src[i..];
            let sym = SYMBOLS
                .iter()
                .find(|s| rest.starts_with(**s))
                .ok_or_else(|| ParseError::Syntax {
                    offset: i,
                    message: format!("unexpected character `{}`", rest.chars().next().unwrap_or('?')),
                })?;
            if *sym == "=" || *sym == "|" {
                return Err(ParseError::Syntax {
                    offset: i,
                    message: format!("`{sym}` is not an operator; use `==` or `||`"),
                });
            }
            out.push((i, Tok::Sym(sym)));
            i += sym.len();
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Tok)>,
    pos: usize,
    len: usize,
}

impl Parser {
    fn error(&self, message: String) -> ParseError {
        let offset = self.tokens.get(self.pos).map_or(self.len, |t| t.0);
        ParseError::Syntax { offset, message }
    }

    fn peek_sym(&self) -> Option<&'static str> {
        match self.tokens.get(self.pos) {
            Some((_, Tok::Sym(s))) => Some(s),
            _ => None,
        }
    }

    fn eat(&mut self, sym: &str) -> bool {
        if self.peek_sym() == Some(sym) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, sym: &str) -> Result<(), ParseError> {
        if self.eat(sym) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{sym}`")))
        }
    }

    fn or(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.and()?;
        while self.eat("||") {
            let rhs = self.and()?;
            lhs = Expr::Logic {
                op: LogicOp::Or,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.not()?;
        while self.eat("&&") {
            let rhs = self.not()?;
            lhs = Expr::Logic {
                op: LogicOp::And,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn not(&mut self) -> Result<Expr, ParseError> {
        if self.eat("!") {
            return Ok(Expr::Not(Box::new(self.not()?)));
        }
        self.cmp()
    }

    fn cmp(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.sum()?;
        let op = match self.peek_sym() {
            Some("<=") => CmpOp::Le,
            Some("<") => CmpOp::Lt,
            Some("==") => CmpOp::Eq,
            Some("!=") => CmpOp::Ne,
            Some(">=") => CmpOp::Ge,
            Some(">") => CmpOp::Gt,
            _ => return Ok(lhs),
        };
        self.pos += 1;
        let rhs = self.sum()?;
        Ok(Expr::Cmp {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        })
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek_sym() {
                Some("+") => ArithOp::Add,
                Some("-") => ArithOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.product()?;
            lhs = Expr::Arith {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
    }

    fn product(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek_sym() {
                Some("*") => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    lhs = Expr::Arith {
                        op: ArithOp::Mul,
                        lhs: Box::new(lhs),
                        rhs: Box::new(rhs),
                    };
                }
                Some("/") => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    let may_vanish = !matches!(rhs, Expr::Num(x) if x != 0.0);
                    lhs = Expr::Div {
                        num: Box::new(lhs),
                        den: Box::new(rhs),
                        may_vanish,
                    };
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat("-") {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if !self.eat("^") {
            return Ok(base);
        }
        let negative = self.eat("-");
        match self.tokens.get(self.pos) {
            Some((_, Tok::Num(x))) if x.fract() == 0.0 && x.abs() <= f64::from(i32::MAX) => {
                let mut exp = *x as i32;
                if negative {
                    exp = -exp;
                }
                self.pos += 1;
                Ok(Expr::Pow {
                    base: Box::new(base),
                    exp,
                })
            }
            _ => Err(self.error("exponent must be an integer literal".to_string())),
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let Some((_, tok)) = self.tokens.get(self.pos).cloned() else {
            return Err(self.error("unexpected end of expression".to_string()));
        };
        self.pos += 1;
        match tok {
            Tok::Num(x) => Ok(Expr::Num(x)),
            Tok::Sym("(") => {
                let e = self.or()?;
                self.expect(")")?;
                Ok(e)
            }
            Tok::Ident(name) => match name.as_str() {
                "true" => Ok(Expr::Bool(true)),
                "false" => Ok(Expr::Bool(false)),
                _ if self.peek_sym() == Some("(") => {
                    let func = Func::lookup(&name).ok_or_else(|| {
                        self.pos -= 1;
                        self.error(format!("unknown function `{name}`"))
                    })?;
                    self.pos += 1;
                    let mut args = vec![self.or()?];
                    while self.eat(",") {
                        args.push(self.or()?);
                    }
                    self.expect(")")?;
                    if args.len() != func.arity() {
                        return Err(self.error(format!(
                            "`{name}` takes {} argument(s), got {}",
                            func.arity(),
                            args.len()
                        )));
                    }
                    Ok(Expr::Call { func, args })
                }
                _ => Ok(Expr::var(&name)),
            },
            Tok::Sym(s) => {
                self.pos -= 1;
                Err(self.error(format!("unexpected `{s}`")))
            }
        }
    }
}

/// Formats a float so that it parses back to the same value.
pub fn literal(x: f64) -> String {
    format!("{x:?}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn eval_with(src: &str, vars: &[(&str, f64)]) -> Result<Value, EvalError> {
        let mut e = Expr::parse(src).unwrap();
        let index: HashMap<String, usize> = vars.iter().enumerate().map(|(i, (n, _))| (n.to_string(), i)).collect();
        let values: Vec<f64> = vars.iter().map(|(_, v)| *v).collect();
        e.bind(&index, None)?;
        e.eval(&Env::new(&values, 0.0, 0))
    }

    #[test]
    fn comparison_example() {
        let v = eval_with("VC <= Vref + Vtol", &[("VC", 50.0), ("Vref", 48.0), ("Vtol", 2.4)]).unwrap();
        assert_eq!(v, Value::Bool(true));
    }

    #[test]
    fn buck_open_flow_example() {
        let v = eval_with(
            "(1 / C) * iL - (1 / (R * C)) * VC",
            &[("iL", 0.0), ("VC", 48.0), ("R", 6.0), ("C", 2.2e-3)],
        )
        .unwrap();
        let expected = -48.0 / (6.0 * 2.2e-3);
        assert!((v.as_f64() - expected).abs() < 1e-9);
        assert!((v.as_f64() + 3636.363_636_36).abs() < 1e-6);
    }

    #[test]
    fn division_by_zero_names_subexpression() {
        let err = eval_with("1 + x / 0", &[("x", 1.0)]).unwrap_err();
        assert_eq!(err, EvalError::DivisionByZero("(x / 0.0)".into()));
        let err = eval_with("x / y", &[("x", 1.0), ("y", 0.0)]).unwrap_err();
        assert!(matches!(err, EvalError::DivisionByZero(_)));
    }

    #[test]
    fn unbound_variable() {
        let mut e = Expr::parse("a + b").unwrap();
        let index = HashMap::from([("a".to_string(), 0)]);
        assert_eq!(e.bind(&index, None), Err(EvalError::Unbound("b".into())));
    }

    #[test]
    fn precedence_and_functions() {
        let v = |s: &str| eval_with(s, &[("x", 3.0)]).unwrap();
        assert_eq!(v("1 + 2 * x"), Value::Num(7.0));
        assert_eq!(v("-x^2"), Value::Num(-9.0));
        assert_eq!(v("x^-1 * 3"), Value::Num(1.0));
        assert_eq!(v("min(max(round(x / 2), 0), 1)"), Value::Num(1.0));
        assert_eq!(v("x > 2 && !(x == 4) || false"), Value::Bool(true));
        assert_eq!(v("abs(-x) - floor(2.7)"), Value::Num(1.0));
        assert_eq!(v("1.5e1 - 1e-1 * 10"), Value::Num(14.0));
    }

    #[test]
    fn time_and_locations() {
        let mut e = Expr::parse("Open && t >= 1").unwrap();
        let locs = HashMap::from([("Open".to_string(), 2)]);
        e.bind(&HashMap::new(), Some(&locs)).unwrap();
        assert_eq!(e.eval(&Env::new(&[], 1.5, 2)).unwrap(), Value::Bool(true));
        assert_eq!(e.eval(&Env::new(&[], 1.5, 0)).unwrap(), Value::Bool(false));
    }

    #[test]
    fn syntax_errors() {
        assert!(Expr::parse("x = 1").is_err());
        assert!(Expr::parse("(x + 1").is_err());
        assert!(Expr::parse("x ^ 1.5").is_err());
        assert!(Expr::parse("foo(1)").is_err());
        assert!(Expr::parse("min(1)").is_err());
        assert!(Expr::parse("x y").is_err());
    }

    #[test]
    fn type_checking() {
        assert_eq!(Expr::parse("x < 1 && y").unwrap().check_type().is_err(), true);
        assert_eq!(Expr::parse("x < 1 && y > 2").unwrap().check_type(), Ok(ExprType::Bool));
        assert_eq!(Expr::parse("x * (y < 1)").unwrap().check_type().is_err(), true);
    }

    #[test]
    fn literal_denominators_do_not_vanish() {
        match Expr::parse("x / 2").unwrap() {
            Expr::Div { may_vanish, .. } => assert!(!may_vanish),
            other => panic!("unexpected {other:?}"),
        }
        match Expr::parse("x / (2 - 2)").unwrap() {
            Expr::Div { may_vanish, .. } => assert!(may_vanish),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn arb_expr() -> impl Strategy<Value = String> {
        let leaf = prop_oneof![
            (-100.0f64..100.0).prop_map(|x| format!("{x:?}")),
            Just("x".to_string()),
            Just("y".to_string()),
        ];
        leaf.prop_recursive(4, 32, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} + {b})")),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} * {b})")),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} - {b})")),
                inner.clone().prop_map(|a| format!("-{a}")),
                inner.prop_map(|a| format!("abs({a})^2")),
            ]
        })
    }

    proptest! {
        #[test]
        fn evaluation_is_deterministic_and_display_round_trips(src in arb_expr(), x in -10.0f64..10.0, y in -10.0f64..10.0) {
            let a = eval_with(&src, &[("x", x), ("y", y)]).unwrap();
            let b = eval_with(&src, &[("x", x), ("y", y)]).unwrap();
            prop_assert_eq!(a.as_f64().to_bits(), b.as_f64().to_bits());
            let printed = Expr::parse(&src).unwrap().to_string();
            let c = eval_with(&printed, &[("x", x), ("y", y)]).unwrap();
            prop_assert_eq!(a.as_f64().to_bits(), c.as_f64().to_bits());
        }
    }
}
