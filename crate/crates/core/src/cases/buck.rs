//! Closed-loop buck converter with a sampling, quantizing and averaging
//! sensor and a hysteresis controller.
//!
//! The plant has locations Open, Close and DCM with affine flows over
//! (iL, VC). The controller holds the sample buffer and switches `mode` on
//! the periodic label `theta`. Sensor and actuator behavior is folded into
//! the controller's updates; the diagram still models them as blocks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{lit, CaseError, CaseModel};
use crate::automata::{compose, CpioaBuilder};
use crate::model::{BlockDoc, Diagram, DiagramDoc, Direction, ValueType, VarKind, VariableDecl, WireDoc};
use crate::trace::{Binding, Bindings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuckParams {
    /// ohms
    pub r: f64,
    /// henries
    pub l: f64,
    /// farads
    pub c: f64,
    /// volts
    pub vs: f64,
    pub vref: f64,
    /// Half-width of the hysteresis band.
    pub vtol: f64,
    /// Half-width of the specified output band.
    pub vrip: f64,
    /// Hz
    pub fs: f64,
    pub samples_length: usize,
    pub adc_bits: u32,
    /// ADC full scale, volts.
    pub adc_range: f64,
    /// Fixed steady-state time; computed from the traces when absent.
    #[serde(default)]
    pub ts: Option<f64>,
}

impl Default for BuckParams {
    fn default() -> Self {
        BuckParams {
            r: 6.0,
            l: 2.65e-3,
            c: 2.2e-3,
            vs: 100.0,
            vref: 48.0,
            vtol: 2.4,
            vrip: 2.4,
            fs: 60e3,
            samples_length: 16,
            adc_bits: 12,
            adc_range: 100.0,
            ts: None,
        }
    }
}

impl BuckParams {
    pub fn validate(&self) -> Result<(), CaseError> {
        let positive = [
            ("R", self.r),
            ("L", self.l),
            ("C", self.c),
            ("Vs", self.vs),
            ("Vref", self.vref),
            ("Vtol", self.vtol),
            ("Vrip", self.vrip),
            ("fs", self.fs),
            ("adc_range", self.adc_range),
        ];
        for (name, x) in positive {
            if !(x > 0.0 && x.is_finite()) {
                return Err(CaseError::Params(format!("{name} must be positive, got {x}")));
            }
        }
        if self.vtol > self.vref {
            return Err(CaseError::Params("Vtol exceeds Vref".into()));
        }
        if self.samples_length == 0 {
            return Err(CaseError::Params("samples_length must be at least 1".into()));
        }
        if !(1..=24).contains(&self.adc_bits) {
            return Err(CaseError::Params("adc_bits must be in 1..=24".into()));
        }
        if let Some(ts) = self.ts {
            if !(ts >= 0.0 && ts.is_finite()) {
                return Err(CaseError::Params("ts must be non-negative".into()));
            }
        }
        Ok(())
    }

    /// Volts per ADC code.
    pub fn adc_quantum(&self) -> f64 {
        self.adc_range / f64::from(1u32 << self.adc_bits)
    }

    pub fn band(&self) -> (f64, f64) {
        (self.vref - self.vrip, self.vref + self.vrip)
    }

    fn sample_names(&self) -> Vec<String> {
        (0..self.samples_length).map(|k| format!("samples_{k}")).collect()
    }
}

fn plant(p: &BuckParams) -> CpioaBuilder {
    let (a12, a21, a22) = (-1.0 / p.l, 1.0 / p.c, -1.0 / (p.r * p.c));
    let il_open = format!("{} * VC", lit(a12));
    let vc_flow = format!("{} * iL + {} * VC", lit(a21), lit(a22));
    let il_close = format!("{} * VC + {}", lit(a12), lit(p.vs / p.l));
    CpioaBuilder::new("plant")
        .variable("iL", VarKind::Physical, Direction::Output, "A")
        .variable("VC", VarKind::Physical, Direction::Output, "V")
        .variable("mode", VarKind::Cyber, Direction::Input, "")
        .location("Open", "mode == 1 && iL >= 0")
        .location("Close", "mode == 2 && iL >= 0")
        .location("DCM", "mode == 1 && iL <= 0")
        .flow("Open", "iL", &il_open)
        .flow("Open", "VC", &vc_flow)
        .flow("Close", "iL", &il_close)
        .flow("Close", "VC", &vc_flow)
        .flow("DCM", "iL", "0")
        .flow("DCM", "VC", &format!("{} * VC", lit(a22)))
        .transition("Open", "DCM", "iL <= 0", &[], "theta")
        .transition("Open", "Close", "true", &[], "theta")
        .transition("Close", "Open", "true", &[], "theta")
        .transition("DCM", "Close", "true", &[], "theta")
        .transition("Open", "Open", "true", &[], "theta")
        .transition("Close", "Close", "true", &[], "theta")
        .transition("DCM", "DCM", "true", &[], "theta")
        // the inductor current cannot reverse through the diode
        .transition("Open", "DCM", "iL <= 0", &[("iL", "0")], "zc")
        .init("Close", "iL >= 0 && VC >= 0")
}

fn controller(p: &BuckParams) -> CpioaBuilder {
    let names = p.sample_names();
    let n = names.len();
    let lsb = p.adc_quantum();
    let max_code = f64::from(1u32 << p.adc_bits) - 1.0;
    let q = format!("(min(max(round(VC / {}), 0), {}) * {})", lit(lsb), lit(max_code), lit(lsb));
    let mut terms = vec![q.clone()];
    terms.extend(names[..n - 1].iter().cloned());
    let new_sum = format!("({})", terms.join(" + "));
    let new_avg = format!("({new_sum} / {})", lit(n as f64));
    let (lo, hi) = (lit(p.vref - p.vtol), lit(p.vref + p.vtol));

    let mut shift: Vec<(String, String)> = vec![(names[0].clone(), q)];
    for k in 1..n {
        shift.push((names[k].clone(), names[k - 1].clone()));
    }
    shift.push(("sum".into(), new_sum));
    shift.push(("avg".into(), new_avg.clone()));
    let with_mode = |m: &str| {
        let mut u = shift.clone();
        u.push(("mode".into(), m.to_string()));
        u
    };

    let mut b = CpioaBuilder::new("controller").variable("VC", VarKind::Cyber, Direction::Input, "V");
    for name in &names {
        b = b.variable(name, VarKind::Cyber, Direction::Output, "V");
    }
    b.variable("sum", VarKind::Cyber, Direction::Output, "V")
        .variable("avg", VarKind::Cyber, Direction::Output, "V")
        .variable("mode", VarKind::Cyber, Direction::Output, "")
        .location("Open", &format!("mode == 1 && avg >= {lo}"))
        .location("Close", &format!("mode == 2 && avg <= {hi}"))
        .transition_owned("Open", "Close", &format!("{new_avg} <= {lo}"), with_mode("2"), "theta")
        .transition_owned("Close", "Open", &format!("{new_avg} >= {hi}"), with_mode("1"), "theta")
        .transition_owned("Open", "Open", &format!("{new_avg} > {lo}"), shift.clone(), "theta")
        .transition_owned("Close", "Close", &format!("{new_avg} < {hi}"), shift.clone(), "theta")
        .init("Close", "mode == 2")
}

fn var(name: &str, kind: VarKind, dir: Direction, t: ValueType, unit: &str) -> VariableDecl {
    VariableDecl::new(name, kind, dir, t, unit)
}

fn diagram(p: &BuckParams) -> Result<Diagram, CaseError> {
    use Direction::{Input, Output};
    use VarKind::{Cyber, Physical};
    let n = p.samples_length;
    let block = |id: &str, parent: Option<&str>, variables: Vec<VariableDecl>| BlockDoc {
        id: id.to_string(),
        parent: parent.map(str::to_string),
        variables,
        direct_influence: None,
    };
    let mut controller = block(
        "controller",
        Some("buck"),
        vec![
            var("samples", Cyber, Input, ValueType::RealArray(n), "V"),
            var("Vref", Cyber, Input, ValueType::Real, "V"),
            var("sum", Cyber, Output, ValueType::Real, "V"),
            var("avg", Cyber, Output, ValueType::Real, "V"),
            var("mode", Cyber, Output, ValueType::Integer, ""),
        ],
    );
    controller.direct_influence = Some(BTreeMap::from([
        ("samples".to_string(), vec!["sum".to_string(), "avg".to_string(), "mode".to_string()]),
        ("Vref".to_string(), vec!["mode".to_string()]),
    ]));
    let doc = DiagramDoc {
        blocks: vec![
            block(
                "buck",
                None,
                vec![
                    var("Vs", Physical, Input, ValueType::Real, "V"),
                    var("Vref", Cyber, Input, ValueType::Real, "V"),
                    var("Vout", Physical, Output, ValueType::Real, "V"),
                ],
            ),
            block(
                "plant",
                Some("buck"),
                vec![
                    var("Vs", Physical, Input, ValueType::Real, "V"),
                    var("gate", Physical, Input, ValueType::Boolean, ""),
                    var("iL", Physical, Output, ValueType::Real, "A"),
                    var("VC", Physical, Output, ValueType::Real, "V"),
                ],
            ),
            block(
                "sensor",
                Some("buck"),
                vec![
                    var("VC", Physical, Input, ValueType::Real, "V"),
                    var("samples", Cyber, Output, ValueType::RealArray(n), "V"),
                ],
            ),
            controller,
            block(
                "actuator",
                Some("buck"),
                vec![
                    var("mode", Cyber, Input, ValueType::Integer, ""),
                    var("gate", Physical, Output, ValueType::Boolean, ""),
                ],
            ),
        ],
        wires: vec![
            WireDoc::new(("plant", "VC"), ("sensor", "VC")),
            WireDoc::new(("sensor", "samples"), ("controller", "samples")),
            WireDoc::new(("controller", "mode"), ("actuator", "mode")),
            WireDoc::new(("actuator", "gate"), ("plant", "gate")),
        ],
    };
    Ok(Diagram::from_doc(doc)?)
}

pub fn build_buck(p: &BuckParams) -> Result<CaseModel, CaseError> {
    p.validate()?;
    let plant = plant(p).build()?;
    let controller = controller(p).build()?;
    let composed = compose(&plant, &controller)?;
    Ok(CaseModel {
        diagram: diagram(p)?,
        plant,
        controller,
        composed,
    })
}

/// Trace bindings for block variables that are not automaton variables.
pub fn bindings(p: &BuckParams) -> Bindings {
    Bindings::new()
        .bind("buck", "Vs", Binding::Expr(lit(p.vs)))
        .bind("buck", "Vref", Binding::Expr(lit(p.vref)))
        .bind("buck", "Vout", Binding::Var("VC".into()))
        .bind("plant", "Vs", Binding::Expr(lit(p.vs)))
        .bind("plant", "gate", Binding::Expr("mode == 2".into()))
        .bind("controller", "Vref", Binding::Expr(lit(p.vref)))
        .bind("actuator", "gate", Binding::Expr("mode == 2".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automata::Env;
    use crate::model::VarRef;

    #[test]
    fn baseline_structure() {
        let m = build_buck(&BuckParams::default()).unwrap();
        assert_eq!(m.plant.locations(), ["Open", "Close", "DCM"]);
        assert_eq!(m.controller.locations(), ["Open", "Close"]);
        assert_eq!(m.composed.locations().len(), 6);
        let theta = m.composed.transitions().iter().filter(|t| t.label == "theta").count();
        assert_eq!(theta, 7 * 4);
        let outs = m.composed.outputs();
        assert!(outs.contains("iL") && outs.contains("VC"));
        assert_eq!(m.controller.variables().iter().filter(|v| v.name.starts_with("samples_")).count(), 16);
    }

    #[test]
    fn flows_follow_the_circuit_matrices() {
        let p = BuckParams::default();
        let m = build_buck(&p).unwrap();
        let a = &m.plant;
        let (il, vc) = (a.var_index("iL").unwrap(), a.var_index("VC").unwrap());
        let mut values = vec![0.0; a.variables().len()];
        values[il] = 3.0;
        values[vc] = 40.0;
        let rate = |loc: &str, slot: usize| {
            let l = a.location_index(loc).unwrap();
            let env = Env::new(&values, 0.0, l);
            a.flows(l).iter().find(|(s, _)| *s == slot).unwrap().1.num(&env).unwrap()
        };
        let close = (p.vs - 40.0) / p.l;
        assert!((rate("Close", il) - close).abs() < 1e-9 * close.abs());
        assert!((rate("Open", il) + 40.0 / p.l).abs() < 1e-6);
        let dv = 3.0 / p.c - 40.0 / (p.r * p.c);
        assert!((rate("Open", vc) - dv).abs() < 1e-9 * dv.abs());
        assert_eq!(rate("DCM", il), 0.0);
    }

    #[test]
    fn controller_switches_on_the_averaged_voltage() {
        let p = BuckParams {
            samples_length: 1,
            ..BuckParams::default()
        };
        let m = build_buck(&p).unwrap();
        let c = &m.controller;
        let s = c.state("Close", &[("mode", 2.0), ("VC", 50.45), ("avg", 49.0)], 0.0).unwrap();
        let to_open = &c.transitions()[1];
        assert!(to_open.guard.truth(&s.env()).unwrap());
        let s = c.state("Close", &[("mode", 2.0), ("VC", 50.3), ("avg", 49.0)], 0.0).unwrap();
        assert!(!to_open.guard.truth(&s.env()).unwrap());
    }

    #[test]
    fn software_physical_set() {
        let p = BuckParams::default();
        let sp = build_buck(&p).unwrap().diagram.software_physical_vars().software_physical;
        let want: std::collections::BTreeSet<VarRef> = [
            ("sensor", "samples"),
            ("controller", "samples"),
            ("controller", "sum"),
            ("controller", "avg"),
            ("controller", "mode"),
            ("actuator", "mode"),
        ]
        .iter()
        .map(|(b, v)| VarRef::new(b, v))
        .collect();
        assert_eq!(sp, want);
    }

    #[test]
    fn rejects_bad_params() {
        for p in [
            BuckParams { r: 0.0, ..Default::default() },
            BuckParams { samples_length: 0, ..Default::default() },
            BuckParams { vtol: 60.0, ..Default::default() },
        ] {
            assert!(matches!(build_buck(&p), Err(CaseError::Params(_))));
        }
    }
}
