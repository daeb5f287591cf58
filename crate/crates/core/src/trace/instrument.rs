//! Observation points on diagram blocks, fed by a running simulation.
//!
//! Each selected block gets an ENTER point (its inputs) and an EXIT point
//! (its outputs). Both start with the simulation time `t`. Block variables
//! are bound to automaton variables by name unless overridden.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::daikon::{PptVariable, ProgramPoint, RepType, TraceError, TraceRecord, TraceValue};
use crate::automata::{Cpioa, Expr, State, Value};
use crate::model::{Diagram, Direction, ValueType, VarRef};
use crate::sim::Observer;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockSelection {
    AllBlocks,
    /// The direct children of the root block.
    SubsystemsOnly,
    Explicit(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sampling {
    EveryStep,
    /// After the discrete phase of every periodic-label instant.
    PeriodicLabel,
    DiscreteTransition,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstrumentationPlan {
    pub selection: BlockSelection,
    pub sampling: Sampling,
}

impl Default for InstrumentationPlan {
    fn default() -> Self {
        InstrumentationPlan {
            selection: BlockSelection::AllBlocks,
            sampling: Sampling::PeriodicLabel,
        }
    }
}

/// How a block variable is read from the automaton state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Binding {
    Var(String),
    Array(Vec<String>),
    Expr(String),
}

/// Overrides of the by-name default binding.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bindings {
    overrides: BTreeMap<VarRef, Binding>,
}

impl Bindings {
    pub fn new() -> Self {
        Bindings::default()
    }

    pub fn bind(mut self, block: &str, var: &str, binding: Binding) -> Self {
        self.overrides.insert(VarRef::new(block, var), binding);
        self
    }

    pub fn get(&self, block: &str, var: &str) -> Option<&Binding> {
        self.overrides.get(&VarRef::new(block, var))
    }
}

#[derive(Debug, Clone)]
enum Source {
    Slot(usize, RepType),
    Array(Vec<usize>),
    Expr(Expr, RepType),
}

impl Source {
    fn read(&self, s: &State) -> Result<TraceValue, TraceError> {
        let cast = |x: f64, rep: RepType| match rep {
            RepType::Int => TraceValue::Int(x.round() as i64),
            RepType::Boolean => TraceValue::Boolean(x != 0.0),
            _ => TraceValue::Double(x),
        };
        Ok(match self {
            Source::Slot(i, rep) => cast(s.values[*i], *rep),
            Source::Array(slots) => TraceValue::DoubleArray(slots.iter().map(|i| s.values[*i]).collect()),
            Source::Expr(e, rep) => match e.eval(&s.env()).map_err(|err| TraceError::Config(err.to_string()))? {
                Value::Bool(b) => match rep {
                    RepType::Boolean => TraceValue::Boolean(b),
                    _ => cast(f64::from(u8::from(b)), *rep),
                },
                Value::Num(x) => cast(x, *rep),
            },
        })
    }
}

#[derive(Debug, Clone)]
struct Point {
    ppt: usize,
    sources: Vec<Source>,
}

/// Instrumented model: program points and the recipe to fill them.
#[derive(Debug, Clone)]
pub struct Instrumentation {
    ppts: Vec<ProgramPoint>,
    /// (ENTER, EXIT) per selected block.
    blocks: Vec<(String, Point, Point)>,
    sampling: Sampling,
}

fn rep_of(t: ValueType) -> RepType {
    match t {
        ValueType::Real => RepType::Double,
        ValueType::Integer => RepType::Int,
        ValueType::Boolean => RepType::Boolean,
        ValueType::RealArray(_) => RepType::DoubleArray,
    }
}

pub fn instrument(
    d: &Diagram,
    a: &Cpioa,
    plan: &InstrumentationPlan,
    bindings: &Bindings,
) -> Result<Instrumentation, TraceError> {
    let selected: Vec<String> = match &plan.selection {
        BlockSelection::AllBlocks => d.walk().iter().map(|b| b.id.clone()).collect(),
        BlockSelection::SubsystemsOnly => d.children(d.root()).map_err(cfg_err)?.to_vec(),
        BlockSelection::Explicit(ids) => {
            for id in ids {
                d.block(id).map_err(cfg_err)?;
            }
            ids.clone()
        }
    };
    if selected.is_empty() {
        return Err(TraceError::Config("no blocks selected".to_string()));
    }

    let slot = |name: &str, what: &VarRef| {
        a.var_index(name)
            .ok_or_else(|| TraceError::Config(format!("`{what}` is bound to unknown automaton variable `{name}`")))
    };
    let mut ppts = Vec::new();
    let mut blocks = Vec::new();
    for id in selected {
        let block = d.block(&id).map_err(cfg_err)?;
        let mut points = Vec::with_capacity(2);
        for (direction, suffix) in [(Direction::Input, "ENTER"), (Direction::Output, "EXIT")] {
            let mut vars = vec![PptVariable::new("t", RepType::Double, 1)];
            let mut sources = vec![Source::Expr(Expr::Time, RepType::Double)];
            for v in block.variables.iter().filter(|v| v.direction == direction) {
                let r = VarRef::new(&id, &v.name);
                let rep = rep_of(v.value_type);
                let source = match (bindings.get(&id, &v.name), v.value_type) {
                    (Some(Binding::Var(name)), ValueType::RealArray(_)) | (Some(Binding::Expr(name)), ValueType::RealArray(_)) => {
                        return Err(TraceError::Config(format!("array `{r}` cannot be bound to `{name}`")))
                    }
                    (Some(Binding::Var(name)), _) => Source::Slot(slot(name, &r)?, rep),
                    (Some(Binding::Array(names)), ValueType::RealArray(n)) => {
                        if names.len() != n {
                            return Err(TraceError::Config(format!("`{r}` needs {n} bound elements")));
                        }
                        Source::Array(names.iter().map(|m| slot(m, &r)).collect::<Result<_, _>>()?)
                    }
                    (Some(Binding::Array(_)), _) => {
                        return Err(TraceError::Config(format!("scalar `{r}` cannot be bound to an array")))
                    }
                    (Some(Binding::Expr(src)), _) => {
                        let e = a.compile(src).map_err(|e| TraceError::Config(format!("`{r}`: {e}")))?;
                        Source::Expr(e, rep)
                    }
                    (None, ValueType::RealArray(n)) => Source::Array(
                        (0..n)
                            .map(|k| slot(&format!("{}_{k}", v.name), &r))
                            .collect::<Result<_, _>>()?,
                    ),
                    (None, _) => Source::Slot(slot(&v.name, &r)?, rep),
                };
                vars.push(PptVariable::new(&v.name, rep, vars.len() as i64 + 1));
                sources.push(source);
            }
            let ppt = ProgramPoint {
                name: format!("{id}:::{suffix}"),
                variables: vars,
            };
            ppt.validate()?;
            points.push(Point {
                ppt: ppts.len(),
                sources,
            });
            ppts.push(ppt);
        }
        let exit = points.pop().expect("two points");
        let enter = points.pop().expect("two points");
        blocks.push((id, enter, exit));
    }
    Ok(Instrumentation {
        ppts,
        blocks,
        sampling: plan.sampling,
    })
}

fn cfg_err(e: crate::model::ModelError) -> TraceError {
    TraceError::Config(e.to_string())
}

impl Instrumentation {
    pub fn program_points(&self) -> &[ProgramPoint] {
        &self.ppts
    }

    pub fn recorder(&self) -> TraceRecorder<'_> {
        TraceRecorder {
            inst: self,
            records: Vec::new(),
            nonce: 0,
            error: None,
        }
    }
}

/// Simulation observer collecting ENTER/EXIT records. Nonces count block
/// invocations; ENTER and EXIT of one snapshot share a nonce.
pub struct TraceRecorder<'a> {
    inst: &'a Instrumentation,
    records: Vec<TraceRecord>,
    nonce: u64,
    error: Option<TraceError>,
}

impl TraceRecorder<'_> {
    fn snapshot(&mut self, s: &State) {
        if self.error.is_some() {
            return;
        }
        for (_, enter, exit) in &self.inst.blocks {
            self.nonce += 1;
            for p in [enter, exit] {
                let values: Result<Vec<_>, _> = p.sources.iter().map(|src| src.read(s).map(|v| (v, 1))).collect();
                match values {
                    Ok(values) => self.records.push(TraceRecord {
                        ppt: self.inst.ppts[p.ppt].name.clone(),
                        nonce: self.nonce,
                        values,
                    }),
                    Err(e) => {
                        self.error = Some(e);
                        return;
                    }
                }
            }
        }
    }

    pub fn finish(self) -> Result<Vec<TraceRecord>, TraceError> {
        match self.error {
            Some(e) => Err(e),
            None => Ok(self.records),
        }
    }
}

impl Observer for TraceRecorder<'_> {
    fn on_start(&mut self, state: &State) {
        if self.inst.sampling == Sampling::EveryStep {
            self.snapshot(state);
        }
    }

    fn on_step(&mut self, state: &State) {
        if self.inst.sampling == Sampling::EveryStep {
            self.snapshot(state);
        }
    }

    fn on_discrete(&mut self, _transition: usize, _pre: &State, post: &State) {
        if self.inst.sampling == Sampling::DiscreteTransition {
            self.snapshot(post);
        }
    }

    fn on_periodic(&mut self, _label: &str, state: &State) {
        if self.inst.sampling == Sampling::PeriodicLabel {
            self.snapshot(state);
        }
    }
}
