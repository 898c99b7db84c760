//! Physical parameters and the core state types shared by every other module.
//!
//! All quantities are SI internally. The parameter file may be written in the
//! mixed units of the prototype data sheet (g·m² for inertias and
//! N·cm/(rad/s) for viscous coefficients); conversion happens once, in
//! [`load_params`].

use std::fmt;

use nalgebra::{Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::ParamError;

/// g·m² → kg·m².
const INERTIA_TABLE_PER_SI: f64 = 1000.0;
/// N·cm/(rad/s) → N·m·s/rad.
const VISCOUS_TABLE_PER_SI: f64 = 100.0;

/// Physical constants of the robot, SI units.
#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotParams {
    /// Wheel radius, m.
    pub R: f64,
    /// Roller radius, m.
    pub r: f64,
    /// Wheel centre to body centre of mass, m.
    pub l: f64,
    /// Roller drive speed factor (inverse gear ratio).
    pub n: f64,
    pub m_w: f64,
    pub m_b: f64,
    pub I_wx: f64,
    pub I_wy: f64,
    pub I_wz: f64,
    pub I_bx: f64,
    pub I_by: f64,
    pub I_bz: f64,
    /// Moment of all rollers about their own axis.
    pub I_rx: f64,
    /// Roller/ground viscous coefficient, N·m·s/rad.
    pub mu_g: f64,
    /// Wheel axle viscous coefficient.
    pub mu_1: f64,
    /// Roller axle viscous coefficient.
    pub mu_2: f64,
    pub g: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self::prototype()
    }
}

impl RobotParams {
    /// The prototype's measured parameter set, with the roller speed factor
    /// defaulting to 1/4.
    pub fn prototype() -> Self {
        TableUnits::PROTOTYPE.to_si()
    }

    /// Combined wheel and body mass.
    pub fn total_mass(&self) -> f64 {
        self.m_b + self.m_w
    }

    /// Copy with every viscous coefficient zeroed.
    pub fn frictionless(&self) -> Self {
        Self {
            mu_g: 0.0,
            mu_1: 0.0,
            mu_2: 0.0,
            ..*self
        }
    }

    /// Every invariant violation, in field order.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let positive = [
            ("R", self.R),
            ("r", self.r),
            ("l", self.l),
            ("m_w", self.m_w),
            ("m_b", self.m_b),
            ("g", self.g),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                out.push(Violation::new(field, ViolationKind::NonPositive));
            }
        }
        let inertias = [
            ("I_wx", self.I_wx),
            ("I_wy", self.I_wy),
            ("I_wz", self.I_wz),
            ("I_bx", self.I_bx),
            ("I_by", self.I_by),
            ("I_bz", self.I_bz),
            ("I_rx", self.I_rx),
        ];
        for (field, v) in inertias {
            if !(v > 0.0 && v.is_finite()) {
                out.push(Violation::new(field, ViolationKind::NonPositive));
            }
        }
        for (field, v) in [("mu_g", self.mu_g), ("mu_1", self.mu_1), ("mu_2", self.mu_2)] {
            if !(v >= 0.0 && v.is_finite()) {
                out.push(Violation::new(field, ViolationKind::NegativeViscosity));
            }
        }
        if !(self.n > 0.0 && self.n <= 1.0) {
            out.push(Violation::new("n", ViolationKind::SpeedFactorRange));
        }
        if !(self.R > self.r) {
            out.push(Violation::new("R", ViolationKind::RollerNotInsideWheel));
        }
        out
    }
}

/// Returns every invariant violation rather than stopping at the first.
pub fn validate_params(p: &RobotParams) -> Result<(), Vec<Violation>> {
    let v = p.violations();
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    NonPositive,
    NegativeViscosity,
    SpeedFactorRange,
    RollerNotInsideWheel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub kind: ViolationKind,
}

impl Violation {
    fn new(field: &'static str, kind: ViolationKind) -> Self {
        Self { field, kind }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ViolationKind::NonPositive => write!(f, "{}: must be strictly positive", self.field),
            ViolationKind::NegativeViscosity => {
                write!(f, "{}: non-negative viscosity required", self.field)
            }
            ViolationKind::SpeedFactorRange => write!(f, "{}: must satisfy 0 < n <= 1", self.field),
            ViolationKind::RollerNotInsideWheel => write!(f, "R > r required"),
        }
    }
}

/// Parameters in data-sheet units: inertias in g·m², viscous
/// coefficients in N·cm/(rad/s), everything else SI.
#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableUnits {
    pub R: f64,
    pub r: f64,
    pub l: f64,
    pub n: f64,
    pub m_w: f64,
    pub m_b: f64,
    pub I_wx: f64,
    pub I_wy: f64,
    pub I_wz: f64,
    pub I_bx: f64,
    pub I_by: f64,
    pub I_bz: f64,
    pub I_rx: f64,
    pub mu_g: f64,
    pub mu_1: f64,
    pub mu_2: f64,
    pub g: f64,
}

impl TableUnits {
    pub const PROTOTYPE: TableUnits = TableUnits {
        R: 0.101,
        r: 0.0142,
        l: 0.2511,
        n: 0.25,
        m_w: 0.72,
        m_b: 1.13,
        I_wx: 1.925,
        I_wy: 3.706,
        I_wz: 1.925,
        I_bx: 38.909,
        I_by: 2.608,
        I_bz: 38.256,
        I_rx: 0.030,
        mu_g: 9.0,
        mu_1: 0.5,
        mu_2: 0.5,
        g: 9.81,
    };

    pub fn to_si(&self) -> RobotParams {
        let i = |v: f64| v / INERTIA_TABLE_PER_SI;
        let mu = |v: f64| v / VISCOUS_TABLE_PER_SI;
        RobotParams {
            R: self.R,
            r: self.r,
            l: self.l,
            n: self.n,
            m_w: self.m_w,
            m_b: self.m_b,
            I_wx: i(self.I_wx),
            I_wy: i(self.I_wy),
            I_wz: i(self.I_wz),
            I_bx: i(self.I_bx),
            I_by: i(self.I_by),
            I_bz: i(self.I_bz),
            I_rx: i(self.I_rx),
            mu_g: mu(self.mu_g),
            mu_1: mu(self.mu_1),
            mu_2: mu(self.mu_2),
            g: self.g,
        }
    }

    /// Field-for-field copy without unit conversion.
    fn holding(p: &RobotParams) -> Self {
        TableUnits {
            R: p.R,
            r: p.r,
            l: p.l,
            n: p.n,
            m_w: p.m_w,
            m_b: p.m_b,
            I_wx: p.I_wx,
            I_wy: p.I_wy,
            I_wz: p.I_wz,
            I_bx: p.I_bx,
            I_by: p.I_by,
            I_bz: p.I_bz,
            I_rx: p.I_rx,
            mu_g: p.mu_g,
            mu_1: p.mu_1,
            mu_2: p.mu_2,
            g: p.g,
        }
    }

    pub fn from_si(p: &RobotParams) -> Self {
        let i = |v: f64| v * INERTIA_TABLE_PER_SI;
        let mu = |v: f64| v * VISCOUS_TABLE_PER_SI;
        TableUnits {
            R: p.R,
            r: p.r,
            l: p.l,
            n: p.n,
            m_w: p.m_w,
            m_b: p.m_b,
            I_wx: i(p.I_wx),
            I_wy: i(p.I_wy),
            I_wz: i(p.I_wz),
            I_bx: i(p.I_bx),
            I_by: i(p.I_by),
            I_bz: i(p.I_bz),
            I_rx: i(p.I_rx),
            mu_g: mu(p.mu_g),
            mu_1: mu(p.mu_1),
            mu_2: mu(p.mu_2),
            g: p.g,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    #[default]
    Table,
    Si,
}

#[allow(non_snake_case)]
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamDocument {
    #[serde(default)]
    units: Units,
    /// `"prototype"` starts from the built-in set; listed fields override it.
    preset: Option<String>,
    R: Option<f64>,
    r: Option<f64>,
    l: Option<f64>,
    n: Option<f64>,
    m_w: Option<f64>,
    m_b: Option<f64>,
    I_wx: Option<f64>,
    I_wy: Option<f64>,
    I_wz: Option<f64>,
    I_bx: Option<f64>,
    I_by: Option<f64>,
    I_bz: Option<f64>,
    I_rx: Option<f64>,
    mu_g: Option<f64>,
    mu_1: Option<f64>,
    mu_2: Option<f64>,
    g: Option<f64>,
}

/// Parse a flat TOML parameter document.
///
/// ```toml
/// units = "table"      # or "si"
/// preset = "prototype" # optional; fields below override it
/// m_b = 1.2
/// ```
///
/// Without a preset every field except `n` must be present (`n` defaults to
/// 0.25). The result is validated before it is returned.
pub fn load_params(source: &str) -> Result<RobotParams, ParamError> {
    let doc: ParamDocument = toml::from_str(source).map_err(|e| ParamError::Parse(e.to_string()))?;

    let base = match doc.preset.as_deref() {
        None => None,
        Some("prototype") => Some(match doc.units {
            Units::Table => TableUnits::PROTOTYPE,
            // Same struct, SI values.
            Units::Si => TableUnits::holding(&RobotParams::prototype()),
        }),
        Some(other) => return Err(ParamError::UnknownPreset(other.to_string())),
    };

    macro_rules! field {
        ($name:ident) => {
            match (doc.$name, base) {
                (Some(v), _) => v,
                (None, Some(b)) => b.$name,
                (None, None) => return Err(ParamError::MissingField(stringify!($name))),
            }
        };
    }

    let raw = TableUnits {
        R: field!(R),
        r: field!(r),
        l: field!(l),
        n: doc.n.or(base.map(|b| b.n)).unwrap_or(TableUnits::PROTOTYPE.n),
        m_w: field!(m_w),
        m_b: field!(m_b),
        I_wx: field!(I_wx),
        I_wy: field!(I_wy),
        I_wz: field!(I_wz),
        I_bx: field!(I_bx),
        I_by: field!(I_by),
        I_bz: field!(I_bz),
        I_rx: field!(I_rx),
        mu_g: field!(mu_g),
        mu_1: field!(mu_1),
        mu_2: field!(mu_2),
        g: field!(g),
    };

    let p = match doc.units {
        Units::Table => raw.to_si(),
        // The raw struct already holds SI values.
        Units::Si => RobotParams {
            R: raw.R,
            r: raw.r,
            l: raw.l,
            n: raw.n,
            m_w: raw.m_w,
            m_b: raw.m_b,
            I_wx: raw.I_wx,
            I_wy: raw.I_wy,
            I_wz: raw.I_wz,
            I_bx: raw.I_bx,
            I_by: raw.I_by,
            I_bz: raw.I_bz,
            I_rx: raw.I_rx,
            mu_g: raw.mu_g,
            mu_1: raw.mu_1,
            mu_2: raw.mu_2,
            g: raw.g,
        },
    };

    validate_params(&p).map_err(ParamError::Invalid)?;
    Ok(p)
}

/// Render parameters as a complete SI document accepted by [`load_params`].
pub fn params_to_toml(p: &RobotParams) -> String {
    let mut s = String::from("units = \"si\"\n");
    let fields = [
        ("R", p.R),
        ("r", p.r),
        ("l", p.l),
        ("n", p.n),
        ("m_w", p.m_w),
        ("m_b", p.m_b),
        ("I_wx", p.I_wx),
        ("I_wy", p.I_wy),
        ("I_wz", p.I_wz),
        ("I_bx", p.I_bx),
        ("I_by", p.I_by),
        ("I_bz", p.I_bz),
        ("I_rx", p.I_rx),
        ("mu_g", p.mu_g),
        ("mu_1", p.mu_1),
        ("mu_2", p.mu_2),
        ("g", p.g),
    ];
    for (k, v) in fields {
        s.push_str(&format!("{k} = {v:?}\n"));
    }
    s
}

/// Generalized coordinates `q = [θ1, θ2, φ1, φ2]` and their rates.
///
/// θ are body pitch/roll relative to the ground normal, φ the wheel and
/// roller angles relative to the body. Absolute wheel/roller angles are
/// `ψ = θ + φ`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GeneralizedState {
    pub q: Vector4<f64>,
    pub dq: Vector4<f64>,
}

impl GeneralizedState {
    pub fn new(q: Vector4<f64>, dq: Vector4<f64>) -> Self {
        Self { q, dq }
    }

    /// Upright and at rest, with body angles `theta1`, `theta2`.
    pub fn tilted(theta1: f64, theta2: f64) -> Self {
        Self {
            q: Vector4::new(theta1, theta2, 0.0, 0.0),
            dq: Vector4::zeros(),
        }
    }

    pub fn theta(&self) -> Vector2<f64> {
        Vector2::new(self.q[0], self.q[1])
    }

    pub fn theta_dot(&self) -> Vector2<f64> {
        Vector2::new(self.dq[0], self.dq[1])
    }

    pub fn phi(&self) -> Vector2<f64> {
        Vector2::new(self.q[2], self.q[3])
    }

    pub fn phi_dot(&self) -> Vector2<f64> {
        Vector2::new(self.dq[2], self.dq[3])
    }

    /// Absolute wheel (ψ1) and roller (ψ2) angles.
    pub fn psi(&self) -> Vector2<f64> {
        self.theta() + self.phi()
    }

    pub fn psi_dot(&self) -> Vector2<f64> {
        self.theta_dot() + self.phi_dot()
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.dq.iter()).all(|v| v.is_finite())
    }
}

/// Generalized torques applied at φ1 and φ2, N·m.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput {
    pub u: Vector2<f64>,
}

impl ControlInput {
    pub fn new(u1: f64, u2: f64) -> Self {
        Self {
            u: Vector2::new(u1, u2),
        }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// Clip each component to `[-limit, limit]`; flags mark clipped axes.
    pub fn clipped(self, limit: f64) -> (Self, [bool; 2]) {
        let mut sat = [false; 2];
        let mut u = self.u;
        for i in 0..2 {
            if u[i].abs() > limit {
                u[i] = limit.copysign(u[i]);
                sat[i] = true;
            }
        }
        (Self { u }, sat)
    }
}

/// Kinetic energy of rollers, wheel and body, potential energy and their sum, J.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub kinetic_roller: f64,
    pub kinetic_wheel: f64,
    pub kinetic_body: f64,
    pub potential: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    pub fn new(kinetic_roller: f64, kinetic_wheel: f64, kinetic_body: f64, potential: f64) -> Self {
        Self {
            kinetic_roller,
            kinetic_wheel,
            kinetic_body,
            potential,
            total: kinetic_roller + kinetic_wheel + kinetic_body + potential,
        }
    }

    pub fn kinetic(&self) -> f64 {
        self.kinetic_roller + self.kinetic_wheel + self.kinetic_body
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL_DOC: &str = r#"
units = "table"
R = 0.101
r = 0.0142
l = 0.2511
n = 0.25
m_w = 0.72
m_b = 1.13
I_wx = 1.925
I_wy = 3.706
I_wz = 1.925
I_bx = 38.909
I_by = 2.608
I_bz = 38.256
I_rx = 0.030
mu_g = 9
mu_1 = 0.5
mu_2 = 0.5
g = 9.81
"#;

    #[test]
    fn default_set_converts_mixed_units() {
        let p = RobotParams::prototype();
        assert_eq!(p.mu_g, 0.09);
        assert_eq!(p.I_by, 2.608e-3);
        assert_eq!(p.mu_1, 0.005);
        assert!(validate_params(&p).is_ok());
    }

    #[test]
    fn full_document_matches_builtin() {
        let p = load_params(FULL_DOC).unwrap();
        assert_eq!(p, RobotParams::prototype());
    }

    #[test]
    fn preset_with_override() {
        let p = load_params("preset = \"prototype\"\nm_b = 1.5\n").unwrap();
        assert_eq!(p.m_b, 1.5);
        assert_eq!(p.I_bx, RobotParams::prototype().I_bx);
    }

    #[test]
    fn si_preset_overrides_are_si() {
        let p = load_params("units = \"si\"\npreset = \"prototype\"\nmu_g = 0.2\n").unwrap();
        assert_eq!(p.mu_g, 0.2);
        assert_eq!(p.I_wy, RobotParams::prototype().I_wy);
    }

    #[test]
    fn negative_mass_rejected() {
        let doc = FULL_DOC.replace("m_b = 1.13", "m_b = -1");
        match load_params(&doc) {
            Err(ParamError::Invalid(v)) => {
                assert!(v.iter().any(|v| v.field == "m_b" && v.kind == ViolationKind::NonPositive))
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn missing_field_reported() {
        let doc = FULL_DOC.replace("I_rx = 0.030\n", "");
        assert!(matches!(load_params(&doc), Err(ParamError::MissingField("I_rx"))));
    }

    #[test]
    fn unknown_key_and_preset_rejected() {
        assert!(matches!(load_params("preset = \"prototype\"\nfoo = 1\n"), Err(ParamError::Parse(_))));
        assert!(matches!(load_params("preset = \"other\""), Err(ParamError::UnknownPreset(_))));
    }

    #[test]
    fn roller_equal_to_wheel_violates() {
        let p = RobotParams {
            r: 0.101,
            ..RobotParams::prototype()
        };
        let v = validate_params(&p).unwrap_err();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].to_string(), "R > r required");
    }

    #[test]
    fn negative_viscosity_violates() {
        let p = RobotParams {
            mu_g: -0.01,
            ..RobotParams::prototype()
        };
        let v = validate_params(&p).unwrap_err();
        assert_eq!(v[0].kind, ViolationKind::NegativeViscosity);
        assert!(v[0].to_string().contains("non-negative viscosity"));
    }

    #[test]
    fn all_violations_collected() {
        let p = RobotParams {
            m_b: -1.0,
            mu_2: -1.0,
            r: 0.5,
            n: 2.0,
            ..RobotParams::prototype()
        };
        assert_eq!(validate_params(&p).unwrap_err().len(), 4);
    }

    #[test]
    fn table_units_round_trip_is_exact() {
        let back = TableUnits::from_si(&RobotParams::prototype());
        assert_eq!(back, TableUnits::PROTOTYPE);
    }

    #[test]
    fn toml_export_round_trips() {
        let p = RobotParams::prototype();
        assert_eq!(load_params(&params_to_toml(&p)).unwrap(), p);
    }

    #[test]
    fn clipping_flags_only_clipped_axes() {
        let (u, sat) = ControlInput::new(7.0, -1.0).clipped(6.0);
        assert_eq!(u.u, Vector2::new(6.0, -1.0));
        assert_eq!(sat, [true, false]);
        let (u, sat) = ControlInput::new(-9.0, 0.0).clipped(6.0);
        assert_eq!(u.u[0], -6.0);
        assert_eq!(sat, [true, false]);
    }
}
