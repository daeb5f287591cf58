//! Fixed-step simulation of automata.
//!
//! Flows are integrated with classical RK4. Transitions whose label is not a
//! periodic label are urgent: they fire as soon as they are enabled, with
//! the crossing time located by bisection. Periodic labels fire at
//! `phase + k / frequency`, where the first enabled transition carrying the
//! label is taken.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::automata::{Cpioa, EvalError, Execution, State, Step};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("initial state does not satisfy the initial condition")]
    InitNotSatisfied,
    #[error("deadlock at t = {}: invariant violated and no transition enabled", .0.time)]
    Deadlock(State),
    #[error("more than {limit} discrete steps at t = {}", .state.time)]
    Zeno { state: State, limit: usize },
    #[error("non-finite state at t = {}", .0.time)]
    Numerics(State),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicLabel {
    pub label: String,
    /// Hz
    pub frequency: f64,
    /// seconds
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub step_size: f64,
    pub t_max: f64,
    pub event_tolerance: f64,
    #[serde(default)]
    pub periodic_labels: Vec<PeriodicLabel>,
    #[serde(default = "default_max_discrete")]
    pub max_discrete_steps_per_instant: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_max_discrete() -> usize {
    64
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad("step_size must be positive");
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return bad("t_max must be positive");
        }
        if !(self.event_tolerance > 0.0 && self.event_tolerance < self.step_size) {
            return bad("event_tolerance must be positive and smaller than step_size");
        }
        if self.max_discrete_steps_per_instant == 0 {
            return bad("max_discrete_steps_per_instant must be positive");
        }
        for p in &self.periodic_labels {
            if !(p.frequency > 0.0 && p.frequency.is_finite()) || !p.phase.is_finite() || p.phase < 0.0 {
                return Err(SimError::Config(format!("bad periodic label `{}`", p.label)));
            }
        }
        Ok(())
    }

    fn is_periodic(&self, label: &str) -> bool {
        self.periodic_labels.iter().any(|p| p.label == label)
    }
}

/// Callbacks invoked while simulating. Observation only; they cannot
/// influence the run.
pub trait Observer {
    fn on_start(&mut self, _state: &State) {}
    fn on_step(&mut self, _state: &State) {}
    fn on_discrete(&mut self, _transition: usize, _pre: &State, _post: &State) {}
    /// Called after the discrete phase of a periodic instant.
    fn on_periodic(&mut self, _label: &str, _state: &State) {}
}

struct NoObserver;

impl Observer for NoObserver {}

pub fn simulate(a: &Cpioa, init: &State, cfg: &SimConfig) -> Result<Execution, SimError> {
    simulate_observed(a, init, cfg, &mut NoObserver)
}

pub fn simulate_observed(a: &Cpioa, init: &State, cfg: &SimConfig, obs: &mut dyn Observer) -> Result<Execution, SimError> {
    cfg.validate()?;
    if init.location >= a.locations().len() || init.values.len() != a.variables().len() {
        return Err(SimError::Config("initial state does not match the automaton".to_string()));
    }
    if !a.satisfies_init(init)? {
        return Err(SimError::InitNotSatisfied);
    }
    Runner::new(a, cfg, init.clone()).run(obs)
}

struct Clock {
    label: String,
    frequency: f64,
    phase: f64,
    k: u64,
}

impl Clock {
    fn instant(&self) -> f64 {
        self.phase + self.k as f64 / self.frequency
    }

    /// Moves to the first instant at or after `t`.
    fn start_at(&mut self, t: f64) {
        self.k = ((t - self.phase) * self.frequency).ceil().max(0.0) as u64;
        while self.k > 0 && self.phase + (self.k - 1) as f64 / self.frequency >= t {
            self.k -= 1;
        }
        while self.instant() < t {
            self.k += 1;
        }
    }
}

struct Runner<'a> {
    a: &'a Cpioa,
    cfg: &'a SimConfig,
    urgent: Vec<bool>,
    clocks: Vec<Clock>,
    state: State,
    steps: Vec<Step>,
    segment: Vec<State>,
    instant: f64,
    fired_at_instant: usize,
    scratch: Rk4Scratch,
}

impl<'a> Runner<'a> {
    fn new(a: &'a Cpioa, cfg: &'a SimConfig, init: State) -> Self {
        let urgent = a.transitions().iter().map(|t| !cfg.is_periodic(&t.label)).collect();
        let clocks = cfg
            .periodic_labels
            .iter()
            .map(|p| {
                let mut c = Clock {
                    label: p.label.clone(),
                    frequency: p.frequency,
                    phase: p.phase,
                    k: 0,
                };
                c.start_at(init.time);
                c
            })
            .collect();
        let n = init.values.len();
        Runner {
            a,
            cfg,
            urgent,
            clocks,
            instant: init.time,
            segment: vec![init.clone()],
            state: init,
            steps: Vec::new(),
            fired_at_instant: 0,
            scratch: Rk4Scratch::new(n),
        }
    }

    fn run(mut self, obs: &mut dyn Observer) -> Result<Execution, SimError> {
        let initial = self.state.clone();
        obs.on_start(&initial);
        self.settle(obs)?;
        let t_max = self.cfg.t_max;
        let h = self.cfg.step_size;
        loop {
            self.fire_due_clocks(obs)?;
            if self.state.time >= t_max {
                break;
            }
            let next_clock = self.clocks.iter().map(Clock::instant).fold(f64::INFINITY, f64::min);
            let mut target = (self.state.time + h).min(t_max);
            if next_clock <= target || next_clock - target < h * 1e-6 {
                target = next_clock.min(t_max);
            }
            if t_max - target < h * 1e-6 {
                target = t_max;
            }
            let dt = target - self.state.time;
            let mut candidate = self.advance(dt)?;
            candidate.time = target;
            if self.needs_event(&candidate)? {
                let (mut lo, mut hi) = (0.0, dt);
                while hi - lo > self.cfg.event_tolerance {
                    let mid = 0.5 * (lo + hi);
                    let s = self.advance(mid)?;
                    if self.needs_event(&s)? {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                if hi < dt {
                    candidate = self.advance(hi)?;
                }
                self.accept(candidate, obs);
                self.settle(obs)?;
            } else {
                self.accept(candidate, obs);
            }
        }
        self.close_segment();
        Ok(Execution {
            initial,
            steps: self.steps,
        })
    }

    /// Integrates from the current state over `dt`, keeping the location.
    fn advance(&mut self, dt: f64) -> Result<State, SimError> {
        let mut next = self.state.clone();
        rk4_step(self.a, &self.state, dt, &mut next.values, &mut self.scratch)?;
        next.time = self.state.time + dt;
        if next.values.iter().any(|v| !v.is_finite()) {
            return Err(SimError::Numerics(next));
        }
        Ok(next)
    }

    fn accept(&mut self, s: State, obs: &mut dyn Observer) {
        obs.on_step(&s);
        self.segment.push(s.clone());
        self.state = s;
    }

    fn close_segment(&mut self) {
        if self.segment.len() >= 2 {
            self.steps.push(Step::Continuous {
                samples: std::mem::take(&mut self.segment),
            });
        }
        self.segment = vec![self.state.clone()];
    }

    /// Post-state of transition `k` from `s`, or `None` when it is not enabled
    /// (guard false, or target invariant false after the update).
    fn try_fire(&self, k: usize, s: &State) -> Result<Option<State>, SimError> {
        let t = &self.a.transitions()[k];
        if t.source != s.location || !t.guard.truth(&s.env())? {
            return Ok(None);
        }
        let mut post = s.clone();
        post.location = t.target;
        for (slot, e) in &t.updates {
            post.values[*slot] = e.num(&s.env())?;
        }
        if !self.a.invariant(t.target).truth(&post.env())? {
            return Ok(None);
        }
        Ok(Some(post))
    }

    fn first_enabled(&self, s: &State, label: Option<&str>) -> Result<Option<(usize, State)>, SimError> {
        for (k, t) in self.a.transitions().iter().enumerate() {
            let eligible = match label {
                Some(l) => t.label == l,
                None => self.urgent[k],
            };
            if eligible {
                if let Some(post) = self.try_fire(k, s)? {
                    return Ok(Some((k, post)));
                }
            }
        }
        Ok(None)
    }

    fn needs_event(&self, s: &State) -> Result<bool, SimError> {
        Ok(!self.a.invariant(s.location).truth(&s.env())? || self.first_enabled(s, None)?.is_some())
    }

    fn fire(&mut self, k: usize, post: State, obs: &mut dyn Observer) -> Result<(), SimError> {
        if post.time != self.instant {
            self.instant = post.time;
            self.fired_at_instant = 0;
        }
        self.fired_at_instant += 1;
        if self.fired_at_instant > self.cfg.max_discrete_steps_per_instant {
            return Err(SimError::Zeno {
                state: post,
                limit: self.cfg.max_discrete_steps_per_instant,
            });
        }
        self.close_segment();
        obs.on_discrete(k, &self.state, &post);
        self.steps.push(Step::Discrete {
            transition: k,
            pre: self.state.clone(),
            post: post.clone(),
        });
        self.state = post;
        self.segment = vec![self.state.clone()];
        Ok(())
    }

    /// Fires urgent transitions until none is enabled, then requires the
    /// location invariant to hold.
    fn settle(&mut self, obs: &mut dyn Observer) -> Result<(), SimError> {
        while let Some((k, post)) = self.first_enabled(&self.state, None)? {
            self.fire(k, post, obs)?;
        }
        if !self.a.invariant(self.state.location).truth(&self.state.env())? {
            return Err(SimError::Deadlock(self.state.clone()));
        }
        Ok(())
    }

    fn fire_due_clocks(&mut self, obs: &mut dyn Observer) -> Result<(), SimError> {
        for c in 0..self.clocks.len() {
            if self.clocks[c].instant() > self.state.time {
                continue;
            }
            while self.clocks[c].instant() <= self.state.time {
                self.clocks[c].k += 1;
            }
            let label = self.clocks[c].label.clone();
            if let Some((k, post)) = self.first_enabled(&self.state, Some(&label))? {
                self.fire(k, post, obs)?;
            }
            self.settle(obs)?;
            obs.on_periodic(&label, &self.state);
        }
        Ok(())
    }
}

struct Rk4Scratch {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Rk4Scratch {
    fn new(n: usize) -> Self {
        Rk4Scratch {
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            tmp: vec![0.0; n],
        }
    }
}

fn derivative(a: &Cpioa, location: usize, values: &[f64], time: f64, out: &mut [f64]) -> Result<(), EvalError> {
    let env = crate::automata::Env::new(values, time, location);
    for (slot, e) in a.flows(location) {
        out[*slot] = e.num(&env)?;
    }
    Ok(())
}

/// One classical RK4 step; variables without a flow stay constant.
fn rk4_step(a: &Cpioa, s: &State, dt: f64, out: &mut [f64], sc: &mut Rk4Scratch) -> Result<(), EvalError> {
    let flows = a.flows(s.location);
    out.copy_from_slice(&s.values);
    if flows.is_empty() || dt == 0.0 {
        return Ok(());
    }
    let loc = s.location;
    let t = s.time;
    derivative(a, loc, &s.values, t, &mut sc.k[0])?;
    for stage in 1..4 {
        let c = if stage == 3 { dt } else { 0.5 * dt };
        sc.tmp.copy_from_slice(&s.values);
        for (slot, _) in flows {
            sc.tmp[*slot] = s.values[*slot] + c * sc.k[stage - 1][*slot];
        }
        let (_, tail) = sc.k.split_at_mut(stage);
        derivative(a, loc, &sc.tmp, t + c, &mut tail[0])?;
    }
    for (slot, _) in flows {
        let i = *slot;
        out[i] = s.values[i] + dt / 6.0 * (sc.k[0][i] + 2.0 * sc.k[1][i] + 2.0 * sc.k[2][i] + sc.k[3][i]);
    }
    Ok(())
}

/// Per-variable sampling ranges and allowed initial locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialConditionSet {
    pub locations: Vec<String>,
    /// Inclusive `[lo, hi]`; `lo == hi` is a point value. Unlisted
    /// variables start at zero.
    #[serde(default)]
    pub ranges: BTreeMap<String, (f64, f64)>,
    pub samples: usize,
}

/// Draws `samples` initial states, uniformly per range, deterministically
/// from `cfg.seed`. Locations cycle through the allowed list.
pub fn sample_initial_conditions(a: &Cpioa, ics: &InitialConditionSet, cfg: &SimConfig) -> Result<Vec<State>, SimError> {
    if ics.locations.is_empty() {
        return Err(SimError::Config("no initial locations".to_string()));
    }
    let mut locs = Vec::with_capacity(ics.locations.len());
    for l in &ics.locations {
        locs.push(
            a.location_index(l)
                .ok_or_else(|| SimError::Config(format!("unknown initial location `{l}`")))?,
        );
    }
    let mut ranges = Vec::with_capacity(ics.ranges.len());
    for (name, &(lo, hi)) in &ics.ranges {
        let slot = a
            .var_index(name)
            .ok_or_else(|| SimError::Config(format!("unknown variable `{name}` in initial conditions")))?;
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(SimError::Config(format!("empty range for `{name}`")));
        }
        ranges.push((slot, lo, hi));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(ics.samples);
    for i in 0..ics.samples {
        let mut values = vec![0.0; a.variables().len()];
        for &(slot, lo, hi) in &ranges {
            values[slot] = if lo == hi { lo } else { rng.gen_range(lo..=hi) };
        }
        let s = State {
            location: locs[i % locs.len()],
            values,
            time: 0.0,
        };
        if !a.satisfies_init(&s)? {
            return Err(SimError::Config(format!(
                "sampled initial state {i} does not satisfy the automaton's initial condition"
            )));
        }
        out.push(s);
    }
    Ok(out)
}

/// Simulates every sampled initial condition. Runs are independent and may
/// execute in parallel; results keep the sampling order.
pub fn run_suite(a: &Cpioa, ics: &InitialConditionSet, cfg: &SimConfig) -> Result<Vec<Result<Execution, SimError>>, SimError> {
    let inits = sample_initial_conditions(a, ics, cfg)?;
    Ok(inits.par_iter().map(|s| simulate(a, s, cfg)).collect())
}

/// Writes an execution as CSV: `time,location,<variables...>`.
pub fn write_csv<W: Write>(a: &Cpioa, exec: &Execution, mut out: W) -> Result<(), SimError> {
    let io = |e: std::io::Error| SimError::Io(e.to_string());
    let header: Vec<&str> = a.variables().iter().map(|v| v.name.as_str()).collect();
    writeln!(out, "time,location,{}", header.join(",")).map_err(io)?;
    for s in exec.states() {
        write!(out, "{:?},{}", s.time, a.locations()[s.location]).map_err(io)?;
        for v in &s.values {
            write!(out, ",{v:?}").map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    Ok(())
}
