use std::collections::BTreeMap;

use super::afc::MODES;
use super::{build_afc, build_buck, buck, labels, AfcParams, BuckParams, CaseError, Scenario, SteadyState};
use crate::infer::{InferenceConfig, Splitter, TimeBound, TimeOp};
use crate::sim::{InitialConditionSet, PeriodicLabel, SimConfig};
use crate::spec::{PhysSpec, SpecGuard};
use crate::trace::{Bindings, InstrumentationPlan};

const BUCK_RUNS: usize = 4;
const AFC_RUNS: usize = 3;

/// (id, description, parameter tweak)
type BuckVariant = (&'static str, &'static str, fn(&mut BuckParams));
type AfcVariant = (&'static str, &'static str, fn(&mut AfcParams));

const BUCK: &[BuckVariant] = &[
    ("baseline", "R = 6 ohm, L = 2.65 mH, C = 2.2 mF, Vs = 100 V, Vref = 48 V, fs = 60 kHz", |_| {}),
    ("vs120", "source voltage raised to 120 V", |p| p.vs = 120.0),
    ("vref36", "reference lowered to 36 V (spec band 34.2..37.8 V)", |p| {
        p.vref = 36.0;
        p.vrip = 1.8;
    }),
    ("fs30k", "sampling frequency lowered to 30 kHz", |p| p.fs = 30e3),
    ("samples32", "moving-average window raised to 32 samples", |p| p.samples_length = 32),
    ("table2-row1", "R = 4 ohm", |p| p.r = 4.0),
    ("table2-row2", "R = 8 ohm", |p| p.r = 8.0),
    ("table2-row3", "L = 0.65 mH", |p| p.l = 0.65e-3),
    ("table2-row4", "L = 6.65 mH", |p| p.l = 6.65e-3),
    ("table2-row5", "C = 1.2 mF", |p| p.c = 1.2e-3),
    ("table2-row6", "C = 3.2 mF", |p| p.c = 3.2e-3),
];

const AFC: &[AfcVariant] = &[
    ("baseline", "theta in [8.8, 90] deg, omega = 1800 rpm, c13 = 0.04, c14 = 0.14", |_| {}),
    ("omega2200", "engine speed raised to 2200 rpm", |p| p.omega = 2200.0),
    ("theta40-70", "throttle restricted to [40, 70] deg", |p| p.theta = (40.0, 70.0)),
    ("table3-row1", "c13 = 0.01, c14 = 0.14", |p| p.c13 = 0.01),
    ("table3-row2", "c13 = 0.02, c14 = 0.14", |p| p.c13 = 0.02),
    ("table3-row3", "c13 = 0.06, c14 = 0.14", |p| p.c13 = 0.06),
    ("table3-row4", "c13 = 0.8, c14 = 0.14", |p| p.c13 = 0.8),
    ("table3-row5", "c13 = 0.04, c14 = 0.04", |p| p.c14 = 0.04),
    ("table3-row6", "c13 = 0.04, c14 = 0.34", |p| p.c14 = 0.34),
    ("table3-row7", "c13 = 0.04, c14 = 0.64", |p| p.c14 = 0.64),
    ("table3-row8", "c13 = 0.04, c14 = 0.94", |p| p.c14 = 0.94),
];

/// Every registered scenario id with its description.
pub fn scenario_ids() -> Vec<(String, &'static str)> {
    BUCK.iter()
        .map(|(id, d, _)| (format!("buck/{id}"), *d))
        .chain(AFC.iter().map(|(id, d, _)| (format!("afc/{id}"), *d)))
        .collect()
}

pub fn scenario(id: &str) -> Result<Scenario, CaseError> {
    let unknown = || CaseError::UnknownScenario(id.to_string());
    let (case, name) = id.split_once('/').ok_or_else(unknown)?;
    match case {
        "buck" => {
            let (_, desc, tweak) = BUCK.iter().find(|(n, _, _)| *n == name).ok_or_else(unknown)?;
            let mut p = BuckParams::default();
            tweak(&mut p);
            buck_scenario(id, desc, &p)
        }
        "afc" => {
            let (_, desc, tweak) = AFC.iter().find(|(n, _, _)| *n == name).ok_or_else(unknown)?;
            let mut p = AfcParams::default();
            tweak(&mut p);
            afc_scenario(id, desc, &p)
        }
        _ => Err(unknown()),
    }
}

pub fn buck_scenario(id: &str, description: &str, p: &BuckParams) -> Result<Scenario, CaseError> {
    let model = build_buck(p)?;
    let sim = SimConfig {
        step_size: 1e-6,
        t_max: 0.03,
        event_tolerance: 1e-9,
        periodic_labels: vec![PeriodicLabel {
            label: "theta".into(),
            frequency: p.fs,
            phase: 0.0,
        }],
        max_discrete_steps_per_instant: 16,
        seed: 0,
    };
    let initial = InitialConditionSet {
        locations: vec!["Close|Close".into()],
        ranges: BTreeMap::from([
            ("iL".into(), (0.0, 0.5)),
            ("VC".into(), (0.0, 1.0)),
            ("mode".into(), (2.0, 2.0)),
        ]),
        samples: BUCK_RUNS,
    };
    let steady_state = match p.ts {
        Some(ts) => SteadyState::Fixed(ts),
        None => SteadyState::BandEntry {
            ppt: "controller:::EXIT".into(),
            var: "avg".into(),
            lo: p.vref - p.vtol,
            hi: p.vref + p.vtol,
        },
    };
    let (lo, hi) = p.band();
    let spec = PhysSpec::band(
        "sigma_P",
        SpecGuard {
            time: Some(TimeBound { op: TimeOp::Ge, ts: 0.0 }),
            ..Default::default()
        },
        "avg",
        lo,
        hi,
    );
    Ok(Scenario {
        id: id.to_string(),
        description: description.to_string(),
        model,
        sim,
        initial,
        plan: InstrumentationPlan::default(),
        bindings: buck::bindings(p),
        splitter: Splitter::default(),
        steady_state,
        inference: InferenceConfig::default(),
        specs: vec![spec],
    })
}

pub fn afc_scenario(id: &str, description: &str, p: &AfcParams) -> Result<Scenario, CaseError> {
    let model = build_afc(p)?;
    let sim = SimConfig {
        step_size: 1e-4,
        t_max: p.t_max,
        event_tolerance: 1e-7,
        periodic_labels: vec![PeriodicLabel {
            label: "sample".into(),
            frequency: 100.0,
            phase: 0.0,
        }],
        max_discrete_steps_per_instant: 16,
        seed: 0,
    };
    let initial = InitialConditionSet {
        locations: vec!["run|startup".into()],
        ranges: BTreeMap::from([
            ("p".into(), (0.9826, 0.9826)),
            ("pe".into(), (0.8, 0.8)),
            ("lambda".into(), (p.lambda_ref, p.lambda_ref)),
            ("theta".into(), p.theta),
            ("omega".into(), (p.omega, p.omega)),
        ]),
        samples: AFC_RUNS,
    };
    let (lo, hi) = (0.98 * p.lambda_ref, 1.02 * p.lambda_ref);
    let guard = |mode: &str, op| SpecGuard {
        mode: BTreeMap::from([("mode".to_string(), mode.to_string())]),
        time: Some(TimeBound { op, ts: p.ts }),
    };
    let specs = vec![
        PhysSpec::band("sigma_P1", guard("startup", TimeOp::Le), "lambda", lo, hi),
        PhysSpec::band("sigma_P2", guard("normal", TimeOp::Ge), "lambda", lo, hi),
    ];
    Ok(Scenario {
        id: id.to_string(),
        description: description.to_string(),
        model,
        sim,
        initial,
        plan: InstrumentationPlan::default(),
        bindings: Bindings::new(),
        splitter: Splitter {
            mode_var: Some("mode".into()),
            labels: labels(&MODES),
            ts: None,
        },
        steady_state: SteadyState::Fixed(p.ts),
        inference: InferenceConfig::default(),
        specs,
    })
}
