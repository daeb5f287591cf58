//! Cyber-physical input/output automata: expressions, automaton structure,
//! compatibility and parallel composition.

pub mod cpioa;
pub mod expr;

pub use cpioa::{
    check_invariant_on_samples, compatible, compose, AutomatonError, AutomatonVar, CompositionError, Cpioa,
    CpioaBuilder, CpioaDoc, Execution, InitCondition, InvariantCheck, Product, State, Step, Transition,
};
pub use expr::{Env, EvalError, Expr, ParseError, Value};
