//! Abstract fuel control: intake-manifold pressure and air-fuel ratio plant
//! with a PI fuel controller that has startup, normal, power and failure
//! modes.
//!
//! Engine speed enters the polynomials in rad/s; the plant exposes it in
//! rpm. Throttle angle is in degrees.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{lit, CaseError, CaseModel};
use crate::automata::{compose, CpioaBuilder};
use crate::model::{BlockDoc, Diagram, DiagramDoc, Direction, ValueType, VarKind, VariableDecl, WireDoc};

const DEFAULT_CONSTANTS: &str = include_str!("../../data/afc_constants.json");

/// Mode numbering used by the controller's `mode` output.
pub const MODES: [(f64, &str); 4] = [(0.0, "startup"), (1.0, "normal"), (2.0, "power"), (3.0, "failure")];

const REQUIRED_EXTRAS: [&str; 2] = ["power_enter_theta", "power_exit_theta"];

/// Benchmark constants `c1`..`c26` plus the power-mode throttle thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AfcConstants(pub BTreeMap<String, f64>);

impl AfcConstants {
    pub fn from_json(src: &str) -> Result<Self, CaseError> {
        let map: BTreeMap<String, f64> =
            serde_json::from_str(src).map_err(|e| CaseError::Params(format!("constants file: {e}")))?;
        let c = AfcConstants(map);
        c.check()?;
        Ok(c)
    }

    /// The constants shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_json(DEFAULT_CONSTANTS).expect("bundled constants are complete")
    }

    pub fn check(&self) -> Result<(), CaseError> {
        let missing: Vec<String> = (1..=26)
            .map(|j| format!("c{j}"))
            .chain(REQUIRED_EXTRAS.iter().map(|s| s.to_string()))
            .filter(|k| !self.0.contains_key(k))
            .collect();
        if !missing.is_empty() {
            return Err(CaseError::MissingConstants(missing));
        }
        if let Some((k, v)) = self.0.iter().find(|(_, v)| !v.is_finite()) {
            return Err(CaseError::Params(format!("constant `{k}` is not finite: {v}")));
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> f64 {
        self.0[key]
    }

    fn c(&self, j: usize) -> String {
        lit(self.0[&format!("c{j}")])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfcParams {
    pub constants: AfcConstants,
    pub lambda_ref: f64,
    /// Throttle angle range in degrees; each run draws one value.
    pub theta: (f64, f64),
    /// rpm
    pub omega: f64,
    /// seconds
    pub ts: f64,
    pub t_max: f64,
    /// Proportional and integral gains; override `c13` and `c14`.
    pub c13: f64,
    pub c14: f64,
}

impl Default for AfcParams {
    fn default() -> Self {
        let constants = AfcConstants::bundled();
        AfcParams {
            c13: constants.get("c13"),
            c14: constants.get("c14"),
            constants,
            lambda_ref: 14.7,
            theta: (8.8, 90.0),
            omega: 1800.0,
            ts: 9.5,
            t_max: 20.0,
        }
    }
}

impl AfcParams {
    pub fn validate(&self) -> Result<(), CaseError> {
        self.constants.check()?;
        let (lo, hi) = self.theta;
        if !(0.0 <= lo && lo <= hi && hi <= 90.0) {
            return Err(CaseError::Params(format!("theta range [{lo}, {hi}] is outside [0, 90] degrees")));
        }
        for (name, x) in [("lambda_ref", self.lambda_ref), ("omega", self.omega), ("ts", self.ts), ("t_max", self.t_max)] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(CaseError::Params(format!("{name} must be positive, got {x}")));
            }
        }
        if !(self.c13.is_finite() && self.c14.is_finite()) {
            return Err(CaseError::Params("gains must be finite".into()));
        }
        Ok(())
    }

    /// Constants with the gain overrides applied.
    pub fn effective_constants(&self) -> AfcConstants {
        let mut c = self.constants.clone();
        c.0.insert("c13".into(), self.c13);
        c.0.insert("c14".into(), self.c14);
        c
    }
}

struct Terms {
    /// c2 + c3·ω·x + c4·ω·x² + c5·ω²·x
    pump: Box<dyn Fn(&str) -> String>,
    /// c20·p² + c21·p + c22
    throttle: String,
}

fn terms(k: &AfcConstants) -> Terms {
    // engine speed in rad/s
    let wp = format!("(omega * {})", lit(std::f64::consts::PI / 30.0));
    let (c2, c3, c4, c5) = (k.c(2), k.c(3), k.c(4), k.c(5));
    Terms {
        pump: Box::new(move |x: &str| {
            format!("({c2} + {c3} * {wp} * {x} + {c4} * {wp} * {x} ^ 2 + {c5} * {wp} ^ 2 * {x})")
        }),
        throttle: format!("({} * p ^ 2 + {} * p + {})", k.c(20), k.c(21), k.c(22)),
    }
}

fn plant(k: &AfcConstants) -> CpioaBuilder {
    let t = terms(k);
    let mc = format!("({} * {})", k.c(12), (t.pump)("p"));
    // c11 is only zero in degenerate all-zero checks, where the fuel command drops out
    let c11 = k.get("c11");
    let inv_c11 = if c11 == 0.0 { 0.0 } else { 1.0 / c11 };
    let fc = format!(
        "({inv} * (1 + i + {c13} * ({c24} * lambda - {c11})) * {pe})",
        inv = lit(inv_c11),
        c11 = k.c(11),
        c13 = k.c(13),
        c24 = k.c(24),
        pe = (t.pump)("pe"),
    );
    let dp = format!("{} * (2 * theta * {} - {mc})", k.c(1), t.throttle);
    let dl = format!(
        "{c26} * ({c15} + {c16} * {c25} * {fc} + {c17} * {c25} ^ 2 * {fc} ^ 2 + {c18} * {mc} + {c19} * {mc} * {c25} * {fc} - lambda)",
        c26 = k.c(26),
        c15 = k.c(15),
        c16 = k.c(16),
        c17 = k.c(17),
        c18 = k.c(18),
        c19 = k.c(19),
        c25 = k.c(25),
    );
    CpioaBuilder::new("plant")
        .variable("p", VarKind::Physical, Direction::Output, "bar")
        .variable("lambda", VarKind::Physical, Direction::Output, "")
        .variable("theta", VarKind::Cyber, Direction::Output, "deg")
        .variable("omega", VarKind::Cyber, Direction::Output, "rpm")
        .variable("fail_event", VarKind::Cyber, Direction::Output, "")
        .variable("pe", VarKind::Physical, Direction::Input, "bar")
        .variable("i", VarKind::Physical, Direction::Input, "")
        .location("run", "true")
        .flow("run", "p", &dp)
        .flow("run", "lambda", &dl)
        .init("run", "p > 0 && lambda > 0 && theta >= 0 && theta <= 90")
}

fn controller(k: &AfcConstants, ts: f64) -> CpioaBuilder {
    let t = terms(k);
    // the pressure estimate shares the manifold throttle polynomial in p
    let dpe = format!(
        "{} * (2 * {} * theta * {} - {})",
        k.c(1),
        k.c(23),
        t.throttle,
        (t.pump)("pe")
    );
    let di = format!("{} * ({} * lambda - {})", k.c(14), k.c(24), k.c(11));
    let enter = lit(k.get("power_enter_theta"));
    let exit = lit(k.get("power_exit_theta"));
    let ts = lit(ts);
    let mut b = CpioaBuilder::new("controller")
        .variable("p", VarKind::Cyber, Direction::Input, "bar")
        .variable("lambda", VarKind::Cyber, Direction::Input, "")
        .variable("theta", VarKind::Cyber, Direction::Input, "deg")
        .variable("omega", VarKind::Cyber, Direction::Input, "rpm")
        .variable("fail_event", VarKind::Cyber, Direction::Input, "")
        .variable("pe", VarKind::Physical, Direction::Output, "bar")
        .variable("i", VarKind::Physical, Direction::Output, "")
        .variable("mode", VarKind::Cyber, Direction::Output, "")
        .location("startup", &format!("mode == 0 && t <= {ts}"))
        .location("normal", "mode == 1")
        .location("power", "mode == 2")
        .location("failure", "mode == 3");
    for loc in ["startup", "normal", "power", "failure"] {
        b = b.flow(loc, "pe", &dpe);
        let rate = if matches!(loc, "startup" | "normal") { di.as_str() } else { "0" };
        b = b.flow(loc, "i", rate);
    }
    for loc in ["startup", "normal", "power"] {
        b = b.transition(loc, "failure", "fail_event >= 1", &[("mode", "3")], "fail");
    }
    b.transition("startup", "normal", &format!("t >= {ts}"), &[("mode", "1")], "warm")
        .transition("normal", "power", &format!("theta >= {enter}"), &[("mode", "2")], "power_on")
        .transition("power", "normal", &format!("theta <= {exit}"), &[("mode", "1")], "power_off")
        .init("startup", "mode == 0 && pe > 0")
}

fn diagram() -> Result<Diagram, CaseError> {
    use Direction::{Input, Output};
    use VarKind::{Cyber, Physical};
    let v = |name: &str, kind, dir, unit: &str| VariableDecl::new(name, kind, dir, ValueType::Real, unit);
    let block = |id: &str, parent: Option<&str>, variables: Vec<VariableDecl>| BlockDoc {
        id: id.to_string(),
        parent: parent.map(str::to_string),
        variables,
        direct_influence: None,
    };
    let doc = DiagramDoc {
        blocks: vec![
            block("afc", None, vec![v("lambda", Physical, Output, "")]),
            block(
                "environment",
                Some("afc"),
                vec![
                    v("theta", Cyber, Output, "deg"),
                    v("omega", Cyber, Output, "rpm"),
                    v("fail_event", Cyber, Output, ""),
                ],
            ),
            block(
                "plant",
                Some("afc"),
                vec![
                    v("theta", Cyber, Input, "deg"),
                    v("omega", Cyber, Input, "rpm"),
                    v("pe", Cyber, Input, "bar"),
                    v("i", Cyber, Input, ""),
                    v("p", Physical, Output, "bar"),
                    v("lambda", Physical, Output, ""),
                ],
            ),
            block(
                "controller",
                Some("afc"),
                vec![
                    v("p", Cyber, Input, "bar"),
                    v("lambda", Cyber, Input, ""),
                    v("theta", Cyber, Input, "deg"),
                    v("omega", Cyber, Input, "rpm"),
                    v("fail_event", Cyber, Input, ""),
                    v("pe", Cyber, Output, "bar"),
                    v("i", Cyber, Output, ""),
                    VariableDecl::new("mode", Cyber, Output, ValueType::Integer, ""),
                ],
            ),
        ],
        wires: vec![
            WireDoc::new(("environment", "theta"), ("plant", "theta")),
            WireDoc::new(("environment", "omega"), ("plant", "omega")),
            WireDoc::new(("environment", "theta"), ("controller", "theta")),
            WireDoc::new(("environment", "omega"), ("controller", "omega")),
            WireDoc::new(("environment", "fail_event"), ("controller", "fail_event")),
            WireDoc::new(("plant", "p"), ("controller", "p")),
            WireDoc::new(("plant", "lambda"), ("controller", "lambda")),
            WireDoc::new(("controller", "pe"), ("plant", "pe")),
            WireDoc::new(("controller", "i"), ("plant", "i")),
        ],
    };
    Ok(Diagram::from_doc(doc)?)
}

pub fn build_afc(p: &AfcParams) -> Result<CaseModel, CaseError> {
    p.validate()?;
    let k = p.effective_constants();
    let plant = plant(&k).build()?;
    let controller = controller(&k, p.ts).build()?;
    let composed = compose(&plant, &controller)?;
    Ok(CaseModel {
        diagram: diagram()?,
        plant,
        controller,
        composed,
    })
}
