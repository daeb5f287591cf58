use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::expr::{Env, EvalError, Expr, ExprType, ParseError};
use crate::model::{Direction, VarKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutomatonError {
    #[error("{context}: {source}")]
    Parse {
        context: String,
        #[source]
        source: ParseError,
    },
    #[error("{context}: {source}")]
    Expr {
        context: String,
        #[source]
        source: EvalError,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("malformed automaton document: {0}")]
    Json(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompositionError {
    #[error("automata `{left}` and `{right}` are not compatible: {reason}")]
    Incompatible { left: String, right: String, reason: String },
    #[error("joint `{label}` transition writes `{var}` from both components")]
    UpdateConflict { label: String, var: String },
    #[error(transparent)]
    Automaton(#[from] AutomatonError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutomatonVar {
    pub name: String,
    pub kind: VarKind,
    pub direction: Direction,
    #[serde(default)]
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub source: usize,
    pub target: usize,
    pub guard: Expr,
    /// Assignments applied atomically, evaluated on the pre-state.
    pub updates: Vec<(usize, Expr)>,
    pub label: String,
    /// Component transition indices when this automaton is a product.
    pub parts: [Option<usize>; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitCondition {
    pub location: usize,
    pub condition: Expr,
}

/// Location correspondence of a product automaton.
#[derive(Debug, Clone, PartialEq)]
pub struct Product {
    pub left: String,
    pub right: String,
    /// For each product location, the (left, right) component locations.
    pub locations: Vec<(usize, usize)>,
}

/// A cyber-physical input/output automaton. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Cpioa {
    name: String,
    locations: Vec<String>,
    location_index: HashMap<String, usize>,
    variables: Vec<AutomatonVar>,
    var_index: HashMap<String, usize>,
    invariants: Vec<Expr>,
    /// Per location, (variable slot, right-hand side) for physical variables.
    flows: Vec<Vec<(usize, Expr)>>,
    labels: BTreeSet<String>,
    transitions: Vec<Transition>,
    init: Vec<InitCondition>,
    product: Option<Product>,
}

/// A state of an automaton: location, valuation (indexed like the variable
/// list) and time.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub location: usize,
    pub values: Vec<f64>,
    pub time: f64,
}

impl State {
    pub fn env(&self) -> Env<'_> {
        Env::new(&self.values, self.time, self.location)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Discrete { transition: usize, pre: State, post: State },
    /// Sampled trajectory including both endpoints.
    Continuous { samples: Vec<State> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub initial: State,
    pub steps: Vec<Step>,
}

impl Execution {
    /// Every state in order, without repeating segment start points.
    pub fn states(&self) -> Vec<&State> {
        let mut out = vec![&self.initial];
        for step in &self.steps {
            match step {
                Step::Discrete { post, .. } => out.push(post),
                Step::Continuous { samples } => out.extend(samples.iter().skip(1)),
            }
        }
        out
    }

    pub fn final_state(&self) -> &State {
        match self.steps.last() {
            None => &self.initial,
            Some(Step::Discrete { post, .. }) => post,
            Some(Step::Continuous { samples }) => samples.last().unwrap_or(&self.initial),
        }
    }

    pub fn discrete_steps(&self) -> impl Iterator<Item = (usize, &State, &State)> {
        self.steps.iter().filter_map(|s| match s {
            Step::Discrete { transition, pre, post } => Some((*transition, pre, post)),
            Step::Continuous { .. } => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InvariantCheck {
    Holds,
    Violated(State),
}

#[derive(Debug, Clone)]
struct PendingTransition {
    from: String,
    to: String,
    guard: String,
    updates: Vec<(String, String)>,
    label: String,
}

/// String-based construction of a [`Cpioa`].
#[derive(Debug, Clone, Default)]
pub struct CpioaBuilder {
    name: String,
    locations: Vec<(String, String)>,
    variables: Vec<AutomatonVar>,
    flows: Vec<(String, String, String)>,
    labels: Vec<String>,
    transitions: Vec<PendingTransition>,
    init: Vec<(String, String)>,
}

impl CpioaBuilder {
    pub fn new(name: &str) -> Self {
        CpioaBuilder {
            name: name.to_string(),
            ..Default::default()
        }
    }

    pub fn location(mut self, name: &str, invariant: &str) -> Self {
        self.locations.push((name.to_string(), invariant.to_string()));
        self
    }

    pub fn variable(mut self, name: &str, kind: VarKind, direction: Direction, unit: &str) -> Self {
        self.variables.push(AutomatonVar {
            name: name.to_string(),
            kind,
            direction,
            unit: unit.to_string(),
        });
        self
    }

    pub fn flow(mut self, location: &str, var: &str, rhs: &str) -> Self {
        self.flows.push((location.to_string(), var.to_string(), rhs.to_string()));
        self
    }

    pub fn label(mut self, label: &str) -> Self {
        self.labels.push(label.to_string());
        self
    }

    pub fn transition(mut self, from: &str, to: &str, guard: &str, updates: &[(&str, &str)], label: &str) -> Self {
        self.transitions.push(PendingTransition {
            from: from.to_string(),
            to: to.to_string(),
            guard: guard.to_string(),
            updates: updates.iter().map(|(v, e)| (v.to_string(), e.to_string())).collect(),
            label: label.to_string(),
        });
        self
    }

    /// Like [`CpioaBuilder::transition`] with owned update strings.
    pub fn transition_owned(mut self, from: &str, to: &str, guard: &str, updates: Vec<(String, String)>, label: &str) -> Self {
        self.transitions.push(PendingTransition {
            from: from.to_string(),
            to: to.to_string(),
            guard: guard.to_string(),
            updates,
            label: label.to_string(),
        });
        self
    }

    pub fn init(mut self, location: &str, condition: &str) -> Self {
        self.init.push((location.to_string(), condition.to_string()));
        self
    }

    pub fn build(self) -> Result<Cpioa, AutomatonError> {
        let invalid = |m: String| AutomatonError::Invalid(format!("automaton `{}`: {m}", self.name));

        let mut location_index = HashMap::new();
        for (i, (name, _)) in self.locations.iter().enumerate() {
            if location_index.insert(name.clone(), i).is_some() {
                return Err(invalid(format!("duplicate location `{name}`")));
            }
        }
        if self.locations.is_empty() {
            return Err(invalid("no locations".to_string()));
        }
        let mut var_index = HashMap::new();
        for (i, v) in self.variables.iter().enumerate() {
            if v.name == "t" {
                return Err(invalid("`t` is reserved for time".to_string()));
            }
            if var_index.insert(v.name.clone(), i).is_some() {
                return Err(invalid(format!("duplicate variable `{}`", v.name)));
            }
        }
        let loc = |name: &str, ctx: &str| {
            location_index
                .get(name)
                .copied()
                .ok_or_else(|| invalid(format!("{ctx}: unknown location `{name}`")))
        };
        let compile = |src: &str, ctx: String, want: ExprType| -> Result<Expr, AutomatonError> {
            let mut e = Expr::parse(src).map_err(|source| AutomatonError::Parse {
                context: ctx.clone(),
                source,
            })?;
            e.bind(&var_index, None).map_err(|source| AutomatonError::Expr {
                context: ctx.clone(),
                source,
            })?;
            let got = e.check_type().map_err(|source| AutomatonError::Expr {
                context: ctx.clone(),
                source,
            })?;
            if got != want {
                return Err(AutomatonError::Invalid(format!(
                    "{ctx}: expected a {} expression",
                    if want == ExprType::Bool { "boolean" } else { "numeric" }
                )));
            }
            Ok(e)
        };

        let mut invariants = Vec::with_capacity(self.locations.len());
        for (name, src) in &self.locations {
            invariants.push(compile(src, format!("{}: invariant of `{name}`", self.name), ExprType::Bool)?);
        }

        let mut flows: Vec<Vec<(usize, Expr)>> = vec![Vec::new(); self.locations.len()];
        for (l, v, src) in &self.flows {
            let li = loc(l, "flow")?;
            let vi = *var_index
                .get(v)
                .ok_or_else(|| invalid(format!("flow in `{l}`: unknown variable `{v}`")))?;
            let var = &self.variables[vi];
            let e = compile(src, format!("{}: flow of `{v}` in `{l}`", self.name), ExprType::Num)?;
            if var.kind == VarKind::Cyber && e != Expr::Num(0.0) {
                return Err(invalid(format!("cyber variable `{v}` has a nonzero flow in `{l}`")));
            }
            if var.direction == Direction::Input {
                return Err(invalid(format!("input variable `{v}` cannot have a flow")));
            }
            if flows[li].iter().any(|(s, _)| *s == vi) {
                return Err(invalid(format!("two flows for `{v}` in `{l}`")));
            }
            if var.kind == VarKind::Physical {
                flows[li].push((vi, e));
            }
        }
        for (li, (lname, _)) in self.locations.iter().enumerate() {
            for (vi, v) in self.variables.iter().enumerate() {
                let needs = v.kind == VarKind::Physical && v.direction == Direction::Output;
                if needs && !flows[li].iter().any(|(s, _)| *s == vi) {
                    return Err(invalid(format!("missing flow for `{}` in `{lname}`", v.name)));
                }
            }
            flows[li].sort_by_key(|(s, _)| *s);
        }

        let mut labels: BTreeSet<String> = self.labels.iter().cloned().collect();
        let mut transitions = Vec::with_capacity(self.transitions.len());
        for (k, t) in self.transitions.iter().enumerate() {
            let ctx = format!("{}: transition {k} ({} -> {})", self.name, t.from, t.to);
            let source = loc(&t.from, &ctx)?;
            let target = loc(&t.to, &ctx)?;
            if t.label.is_empty() {
                return Err(invalid(format!("{ctx}: empty label")));
            }
            let guard = compile(&t.guard, format!("{ctx} guard"), ExprType::Bool)?;
            let mut updates = Vec::with_capacity(t.updates.len());
            for (v, src) in &t.updates {
                let vi = *var_index
                    .get(v)
                    .ok_or_else(|| invalid(format!("{ctx}: update of unknown variable `{v}`")))?;
                if updates.iter().any(|(s, _)| *s == vi) {
                    return Err(invalid(format!("{ctx}: `{v}` updated twice")));
                }
                updates.push((vi, compile(src, format!("{ctx} update of `{v}`"), ExprType::Num)?));
            }
            labels.insert(t.label.clone());
            transitions.push(Transition {
                source,
                target,
                guard,
                updates,
                label: t.label.clone(),
                parts: [None, None],
            });
        }

        let mut init = Vec::with_capacity(self.init.len());
        for (l, src) in &self.init {
            let location = loc(l, "init")?;
            init.push(InitCondition {
                location,
                condition: compile(src, format!("{}: init of `{l}`", self.name), ExprType::Bool)?,
            });
        }
        if init.is_empty() {
            return Err(invalid("no initial locations".to_string()));
        }

        Ok(Cpioa {
            name: self.name.clone(),
            locations: self.locations.iter().map(|(n, _)| n.clone()).collect(),
            location_index,
            variables: self.variables.clone(),
            var_index,
            invariants,
            flows,
            labels,
            transitions,
            init,
            product: None,
        })
    }
}

/// JSON mirror of a [`Cpioa`] definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpioaDoc {
    pub name: String,
    pub locations: Vec<String>,
    pub variables: Vec<AutomatonVar>,
    /// location -> variable -> right-hand side
    #[serde(default)]
    pub flows: BTreeMap<String, BTreeMap<String, String>>,
    /// location -> boolean expression; missing locations default to `true`
    #[serde(default)]
    pub invariants: BTreeMap<String, String>,
    #[serde(default)]
    pub transitions: Vec<TransitionDoc>,
    pub init: Vec<InitDoc>,
    #[serde(default)]
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionDoc {
    pub from: String,
    pub to: String,
    #[serde(default = "default_true")]
    pub guard: String,
    #[serde(default)]
    pub updates: BTreeMap<String, String>,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitDoc {
    pub location: String,
    #[serde(default = "default_true")]
    pub condition: String,
}

fn default_true() -> String {
    "true".to_string()
}

impl CpioaDoc {
    pub fn build(&self) -> Result<Cpioa, AutomatonError> {
        let mut b = CpioaBuilder::new(&self.name);
        for l in &self.locations {
            let inv = self.invariants.get(l).map_or("true", String::as_str);
            b = b.location(l, inv);
        }
        for l in self.invariants.keys() {
            if !self.locations.contains(l) {
                return Err(AutomatonError::Invalid(format!("invariant for unknown location `{l}`")));
            }
        }
        for v in &self.variables {
            b = b.variable(&v.name, v.kind, v.direction, &v.unit);
        }
        for (l, per_var) in &self.flows {
            for (v, rhs) in per_var {
                b = b.flow(l, v, rhs);
            }
        }
        for l in &self.labels {
            b = b.label(l);
        }
        for t in &self.transitions {
            let updates = t.updates.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
            b = b.transition_owned(&t.from, &t.to, &t.guard, updates, &t.label);
        }
        for i in &self.init {
            b = b.init(&i.location, &i.condition);
        }
        b.build()
    }
}

impl Cpioa {
    pub fn from_json_str(src: &str) -> Result<Cpioa, AutomatonError> {
        let doc: CpioaDoc = serde_json::from_str(src).map_err(|e| AutomatonError::Json(e.to_string()))?;
        doc.build()
    }

    pub fn to_doc(&self) -> CpioaDoc {
        let var_name = |i: usize| self.variables[i].name.clone();
        CpioaDoc {
            name: self.name.clone(),
            locations: self.locations.clone(),
            variables: self.variables.clone(),
            flows: self
                .locations
                .iter()
                .enumerate()
                .filter(|(i, _)| !self.flows[*i].is_empty())
                .map(|(i, l)| {
                    (
                        l.clone(),
                        self.flows[i].iter().map(|(v, e)| (var_name(*v), e.to_string())).collect(),
                    )
                })
                .collect(),
            invariants: self
                .locations
                .iter()
                .zip(&self.invariants)
                .map(|(l, e)| (l.clone(), e.to_string()))
                .collect(),
            transitions: self
                .transitions
                .iter()
                .map(|t| TransitionDoc {
                    from: self.locations[t.source].clone(),
                    to: self.locations[t.target].clone(),
                    guard: t.guard.to_string(),
                    updates: t.updates.iter().map(|(v, e)| (var_name(*v), e.to_string())).collect(),
                    label: t.label.clone(),
                })
                .collect(),
            init: self
                .init
                .iter()
                .map(|i| InitDoc {
                    location: self.locations[i.location].clone(),
                    condition: i.condition.to_string(),
                })
                .collect(),
            labels: self.labels.iter().cloned().collect(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn locations(&self) -> &[String] {
        &self.locations
    }

    pub fn location_index(&self, name: &str) -> Option<usize> {
        self.location_index.get(name).copied()
    }

    pub fn location_table(&self) -> &HashMap<String, usize> {
        &self.location_index
    }

    pub fn variables(&self) -> &[AutomatonVar] {
        &self.variables
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.var_index.get(name).copied()
    }

    pub fn var_table(&self) -> &HashMap<String, usize> {
        &self.var_index
    }

    pub fn invariant(&self, location: usize) -> &Expr {
        &self.invariants[location]
    }

    pub fn flows(&self, location: usize) -> &[(usize, Expr)] {
        &self.flows[location]
    }

    pub fn labels(&self) -> &BTreeSet<String> {
        &self.labels
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn init(&self) -> &[InitCondition] {
        &self.init
    }

    pub fn product(&self) -> Option<&Product> {
        self.product.as_ref()
    }

    pub fn inputs(&self) -> BTreeSet<&str> {
        self.names_with(Direction::Input)
    }

    pub fn outputs(&self) -> BTreeSet<&str> {
        self.names_with(Direction::Output)
    }

    fn names_with(&self, d: Direction) -> BTreeSet<&str> {
        self.variables
            .iter()
            .filter(|v| v.direction == d)
            .map(|v| v.name.as_str())
            .collect()
    }

    /// Compiles an expression against this automaton's variables and locations.
    pub fn compile(&self, src: &str) -> Result<Expr, AutomatonError> {
        let mut e = Expr::parse(src).map_err(|source| AutomatonError::Parse {
            context: src.to_string(),
            source,
        })?;
        e.bind(&self.var_index, Some(&self.location_index))
            .map_err(|source| AutomatonError::Expr {
                context: src.to_string(),
                source,
            })?;
        Ok(e)
    }

    /// Builds a state from named values; unnamed variables are zero.
    pub fn state(&self, location: &str, values: &[(&str, f64)], time: f64) -> Result<State, AutomatonError> {
        let location = self
            .location_index(location)
            .ok_or_else(|| AutomatonError::Invalid(format!("unknown location `{location}`")))?;
        let mut vals = vec![0.0; self.variables.len()];
        for (name, v) in values {
            let i = self
                .var_index(name)
                .ok_or_else(|| AutomatonError::Invalid(format!("unknown variable `{name}`")))?;
            vals[i] = *v;
        }
        Ok(State {
            location,
            values: vals,
            time,
        })
    }

    /// True iff `s` satisfies one of the initial conditions.
    pub fn satisfies_init(&self, s: &State) -> Result<bool, EvalError> {
        for c in &self.init {
            if c.location == s.location && c.condition.truth(&s.env())? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    pub fn value(&self, s: &State, var: &str) -> Option<f64> {
        self.var_index(var).map(|i| s.values[i])
    }
}

/// I1 ⊆ O2, I2 ⊆ O1 and O1 ∩ O2 = ∅, by variable name.
pub fn compatible(a1: &Cpioa, a2: &Cpioa) -> bool {
    incompatibility(a1, a2).is_none()
}

fn incompatibility(a1: &Cpioa, a2: &Cpioa) -> Option<String> {
    let (i1, o1, i2, o2) = (a1.inputs(), a1.outputs(), a2.inputs(), a2.outputs());
    if let Some(v) = i1.iter().find(|v| !o2.contains(*v)) {
        return Some(format!("input `{v}` of `{}` is not an output of `{}`", a1.name, a2.name));
    }
    if let Some(v) = i2.iter().find(|v| !o1.contains(*v)) {
        return Some(format!("input `{v}` of `{}` is not an output of `{}`", a2.name, a1.name));
    }
    if let Some(v) = o1.intersection(&o2).next() {
        return Some(format!("both automata output `{v}`"));
    }
    None
}

/// Parallel composition. Shared labels fire jointly; private labels fire
/// with the other component staying put.
pub fn compose(a1: &Cpioa, a2: &Cpioa) -> Result<Cpioa, CompositionError> {
    if let Some(reason) = incompatibility(a1, a2) {
        return Err(CompositionError::Incompatible {
            left: a1.name.clone(),
            right: a2.name.clone(),
            reason,
        });
    }

    // Shared variables take the declaration of the owning (output) side.
    let mut variables: Vec<AutomatonVar> = Vec::new();
    let mut var_index: HashMap<String, usize> = HashMap::new();
    for v in a1.variables.iter().chain(&a2.variables) {
        if var_index.contains_key(&v.name) {
            continue;
        }
        let owner = a1
            .variables
            .iter()
            .chain(&a2.variables)
            .find(|w| w.name == v.name && w.direction == Direction::Output)
            .unwrap_or(v);
        var_index.insert(v.name.clone(), variables.len());
        variables.push(owner.clone());
    }

    let n2 = a2.locations.len();
    let mut locations = Vec::with_capacity(a1.locations.len() * n2);
    let mut pairs = Vec::with_capacity(a1.locations.len() * n2);
    for (i1, l1) in a1.locations.iter().enumerate() {
        for (i2, l2) in a2.locations.iter().enumerate() {
            locations.push(format!("{l1}|{l2}"));
            pairs.push((i1, i2));
        }
    }
    let location_index: HashMap<String, usize> = locations.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
    let pid = |i1: usize, i2: usize| i1 * n2 + i2;

    let rebind = |e: &Expr| -> Result<Expr, AutomatonError> {
        let mut e = e.clone();
        clear_slots(&mut e);
        e.bind(&var_index, None).map_err(|source| AutomatonError::Expr {
            context: "composition".to_string(),
            source,
        })?;
        Ok(e)
    };
    let remap = |from: &Cpioa, slot: usize| var_index[&from.variables[slot].name];

    let mut invariants = Vec::with_capacity(locations.len());
    let mut flows = Vec::with_capacity(locations.len());
    for &(i1, i2) in &pairs {
        invariants.push(Expr::and(rebind(&a1.invariants[i1])?, rebind(&a2.invariants[i2])?));
        let mut f: Vec<(usize, Expr)> = Vec::new();
        for (slot, e) in &a1.flows[i1] {
            f.push((remap(a1, *slot), rebind(e)?));
        }
        for (slot, e) in &a2.flows[i2] {
            f.push((remap(a2, *slot), rebind(e)?));
        }
        f.sort_by_key(|(s, _)| *s);
        flows.push(f);
    }

    let shared: BTreeSet<&String> = a1.labels.intersection(&a2.labels).collect();
    let mut transitions = Vec::new();
    let lift_updates = |from: &Cpioa, ups: &[(usize, Expr)]| -> Result<Vec<(usize, Expr)>, AutomatonError> {
        ups.iter().map(|(s, e)| Ok((remap(from, *s), rebind(e)?))).collect()
    };
    for (k1, t1) in a1.transitions.iter().enumerate() {
        if shared.contains(&t1.label) {
            for (k2, t2) in a2.transitions.iter().enumerate().filter(|(_, t2)| t2.label == t1.label) {
                let mut updates = lift_updates(a1, &t1.updates)?;
                for (s, e) in lift_updates(a2, &t2.updates)? {
                    if updates.iter().any(|(u, _)| *u == s) {
                        return Err(CompositionError::UpdateConflict {
                            label: t1.label.clone(),
                            var: variables[s].name.clone(),
                        });
                    }
                    updates.push((s, e));
                }
                transitions.push(Transition {
                    source: pid(t1.source, t2.source),
                    target: pid(t1.target, t2.target),
                    guard: Expr::and(rebind(&t1.guard)?, rebind(&t2.guard)?),
                    updates,
                    label: t1.label.clone(),
                    parts: [Some(k1), Some(k2)],
                });
            }
        } else {
            for i2 in 0..n2 {
                transitions.push(Transition {
                    source: pid(t1.source, i2),
                    target: pid(t1.target, i2),
                    guard: rebind(&t1.guard)?,
                    updates: lift_updates(a1, &t1.updates)?,
                    label: t1.label.clone(),
                    parts: [Some(k1), None],
                });
            }
        }
    }
    for (k2, t2) in a2.transitions.iter().enumerate() {
        if shared.contains(&t2.label) {
            continue;
        }
        for i1 in 0..a1.locations.len() {
            transitions.push(Transition {
                source: pid(i1, t2.source),
                target: pid(i1, t2.target),
                guard: rebind(&t2.guard)?,
                updates: lift_updates(a2, &t2.updates)?,
                label: t2.label.clone(),
                parts: [None, Some(k2)],
            });
        }
    }

    let mut init = Vec::new();
    for c1 in &a1.init {
        for c2 in &a2.init {
            init.push(InitCondition {
                location: pid(c1.location, c2.location),
                condition: Expr::and(rebind(&c1.condition)?, rebind(&c2.condition)?),
            });
        }
    }

    Ok(Cpioa {
        name: format!("{}||{}", a1.name, a2.name),
        locations,
        location_index,
        variables,
        var_index,
        invariants,
        flows,
        labels: a1.labels.union(&a2.labels).cloned().collect(),
        transitions,
        init,
        product: Some(Product {
            left: a1.name.clone(),
            right: a2.name.clone(),
            locations: pairs,
        }),
    })
}

fn clear_slots(e: &mut Expr) {
    match e {
        Expr::Var { slot, .. } => *slot = None,
        Expr::Num(_) | Expr::Bool(_) | Expr::Time | Expr::AtLocation { .. } => {}
        Expr::Neg(x) | Expr::Not(x) | Expr::Pow { base: x, .. } => clear_slots(x),
        Expr::Arith { lhs, rhs, .. } | Expr::Cmp { lhs, rhs, .. } | Expr::Logic { lhs, rhs, .. } => {
            clear_slots(lhs);
            clear_slots(rhs);
        }
        Expr::Div { num, den, .. } => {
            clear_slots(num);
            clear_slots(den);
        }
        Expr::Call { args, .. } => args.iter_mut().for_each(clear_slots),
    }
}

/// Returns the first sampled state violating `phi`. `phi` may mention the
/// automaton's variables, `t` and location names. Not a proof of invariance.
pub fn check_invariant_on_samples<'a, I>(a: &Cpioa, phi: &Expr, states: I) -> Result<InvariantCheck, AutomatonError>
where
    I: IntoIterator<Item = &'a State>,
{
    let mut phi = phi.clone();
    clear_slots(&mut phi);
    phi.bind(&a.var_index, Some(&a.location_index))
        .map_err(|source| AutomatonError::Expr {
            context: "invariant check".to_string(),
            source,
        })?;
    for s in states {
        let ok = phi.truth(&s.env()).map_err(|source| AutomatonError::Expr {
            context: "invariant check".to_string(),
            source,
        })?;
        if !ok {
            return Ok(InvariantCheck::Violated(s.clone()));
        }
    }
    Ok(InvariantCheck::Holds)
}
