//! The two case studies (a closed-loop buck converter and an abstract fuel
//! controller), their scenario registry and the end-to-end experiment
//! driver: simulate, trace, infer, project and check.

pub mod afc;
pub mod buck;
mod scenarios;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use afc::{build_afc, AfcConstants, AfcParams};
pub use buck::{build_buck, BuckParams};
pub use scenarios::{afc_scenario, buck_scenario, scenario, scenario_ids};

use crate::automata::{AutomatonError, CompositionError, Cpioa, Execution, State};
use crate::infer::{self, CandidateInvariant, InferError, Inference, InferenceConfig, InvariantSet, Splitter, TraceSet};
use crate::model::{Diagram, ModelError};
use crate::sim::{sample_initial_conditions, simulate_observed, InitialConditionSet, SimConfig, SimError};
use crate::spec::{detect_mismatch, project, MismatchReport, PhysSpec};
use crate::trace::{instrument, Bindings, InstrumentationPlan, ProgramPoint, TraceError, TraceRecord};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CaseError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("constants file is missing {}", .0.join(", "))]
    MissingConstants(Vec<String>),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Automaton(#[from] AutomatonError),
    #[error(transparent)]
    Composition(#[from] CompositionError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Infer(#[from] InferError),
}

/// Block diagram plus the automata realizing it.
#[derive(Debug, Clone)]
pub struct CaseModel {
    pub diagram: Diagram,
    pub plant: Cpioa,
    pub controller: Cpioa,
    pub composed: Cpioa,
}

/// How the steady-state time `ts` of a scenario is obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SteadyState {
    Fixed(f64),
    /// Latest, over all runs, first sample time at which `var` at `ppt`
    /// lies in `[lo, hi]`.
    BandEntry { ppt: String, var: String, lo: f64, hi: f64 },
}

/// A fully parameterized experiment.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub id: String,
    pub description: String,
    pub model: CaseModel,
    pub sim: SimConfig,
    pub initial: InitialConditionSet,
    pub plan: InstrumentationPlan,
    pub bindings: Bindings,
    /// Mode partition; the time threshold is filled in from `steady_state`.
    pub splitter: Splitter,
    pub steady_state: SteadyState,
    pub inference: InferenceConfig,
    /// Time guards carry a placeholder until `ts` is resolved.
    pub specs: Vec<PhysSpec>,
}

/// Trace of one simulated initial condition.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub execution: Execution,
    pub records: Vec<TraceRecord>,
}

#[derive(Debug, Clone)]
pub struct SuiteOutput {
    pub ppts: Vec<ProgramPoint>,
    pub initial_states: Vec<State>,
    pub runs: Vec<Result<RunTrace, SimError>>,
}

impl SuiteOutput {
    /// Traces of the successful runs.
    pub fn trace_sets(&self) -> Vec<TraceSet> {
        self.runs
            .iter()
            .filter_map(|r| r.as_ref().ok())
            .map(|r| TraceSet {
                ppts: self.ppts.clone(),
                records: r.records.clone(),
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub ts: f64,
    pub specs: Vec<PhysSpec>,
    pub per_run: Vec<Inference>,
    pub merged: Inference,
    pub projected: Vec<CandidateInvariant>,
    pub report: MismatchReport,
}

impl Scenario {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.sim.seed = seed;
        self
    }

    pub fn with_runs(mut self, runs: usize) -> Self {
        self.initial.samples = runs;
        self
    }

    /// Specifications with their time guards set to `ts`.
    pub fn specs_at(&self, ts: f64) -> Vec<PhysSpec> {
        self.specs
            .iter()
            .cloned()
            .map(|mut s| {
                if let Some(tb) = &mut s.guard.time {
                    tb.ts = ts;
                }
                s
            })
            .collect()
    }

    /// Resolves `ts` from the recorded traces.
    pub fn steady_state_time(&self, traces: &[TraceSet]) -> f64 {
        match &self.steady_state {
            SteadyState::Fixed(ts) => *ts,
            SteadyState::BandEntry { ppt, var, lo, hi } => {
                let mut ts = f64::NEG_INFINITY;
                for tr in traces {
                    let Some(p) = tr.ppts.iter().find(|p| &p.name == ppt) else {
                        continue;
                    };
                    let (Some(ti), Some(vi)) = (p.var_position("t"), p.var_position(var)) else {
                        continue;
                    };
                    let entry = tr
                        .records
                        .iter()
                        .filter(|r| &r.ppt == ppt)
                        .filter_map(|r| Some((r.values[ti].0.as_scalar()?, r.values[vi].0.as_scalar()?)))
                        .find(|(_, x)| lo <= x && x <= hi)
                        .map_or(self.sim.t_max, |(t, _)| t);
                    ts = ts.max(entry);
                }
                if ts.is_finite() {
                    ts
                } else {
                    self.sim.t_max
                }
            }
        }
    }

    /// Simulates every sampled initial condition with instrumentation
    /// attached. Runs execute in parallel; output order follows sampling.
    pub fn simulate(&self) -> Result<SuiteOutput, CaseError> {
        let a = &self.model.composed;
        let inst = instrument(&self.model.diagram, a, &self.plan, &self.bindings)?;
        let inits = sample_initial_conditions(a, &self.initial, &self.sim)?;
        let runs = inits
            .par_iter()
            .map(|s| {
                let mut rec = inst.recorder();
                let execution = simulate_observed(a, s, &self.sim, &mut rec)?;
                let records = rec.finish().map_err(|e| SimError::Config(e.to_string()))?;
                Ok(RunTrace { execution, records })
            })
            .collect();
        Ok(SuiteOutput {
            ppts: inst.program_points().to_vec(),
            initial_states: inits,
            runs,
        })
    }

    /// Infers per run and merged, projects onto the software-physical
    /// variables and checks the specifications.
    pub fn analyze(&self, traces: &[TraceSet]) -> Result<Analysis, CaseError> {
        let ts = self.steady_state_time(traces);
        let splitter = Splitter {
            ts: Some(ts),
            ..self.splitter.clone()
        };
        let raw: Vec<InvariantSet> = traces
            .par_iter()
            .map(|t| infer::infer_conditional_raw(t, &splitter, &self.inference))
            .collect::<Result<_, _>>()?;
        let per_run = raw.iter().map(|r| r.finalize(&self.inference)).collect();
        let merged = infer::merge(&raw, &self.inference).finalize(&self.inference);
        let sp = self.model.diagram.software_physical_vars().software_physical;
        let projected = project(&merged.invariants, &sp);
        let specs = self.specs_at(ts);
        let report = detect_mismatch(&self.id, &projected, &specs);
        Ok(Analysis {
            ts,
            specs,
            per_run,
            merged,
            projected,
            report,
        })
    }

    pub fn run(&self) -> Result<(SuiteOutput, Analysis), CaseError> {
        let suite = self.simulate()?;
        let failed: Vec<String> = suite
            .runs
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.as_ref().err().map(|e| format!("run {i}: {e}")))
            .collect();
        if suite.runs.is_empty() || failed.len() == suite.runs.len() {
            let first = suite.runs.iter().find_map(|r| r.as_ref().err().cloned());
            return Err(first.map_or_else(|| CaseError::Params("no runs requested".into()), CaseError::Sim));
        }
        let analysis = self.analyze(&suite.trace_sets())?;
        Ok((suite, analysis))
    }
}

/// Formats a constant for embedding in expression text.
pub(crate) fn lit(x: f64) -> String {
    if x < 0.0 {
        format!("({x:?})")
    } else {
        format!("{x:?}")
    }
}

pub(crate) fn labels(pairs: &[(f64, &str)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(v, n)| (v.to_string(), n.to_string())).collect()
}
