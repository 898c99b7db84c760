//! Nonlinear equations of motion `M(q) q̈ + C(q, q̇) + F(q̇) + G(q) = W(u)`.
//!
//! Coordinates are `q = [θ1, θ2, φ1, φ2]`. The mass matrix and Coriolis
//! terms are the closed forms of the Lagrangian with `I_wz = I_wx` (wheel
//! symmetry). The gravity vector is `∂U/∂q` of the same potential.
//!
//! Inclines are modelled in a slope-fixed frame whose x axis points uphill:
//! gravity is `(-g sin γ, 0, -g cos γ)`, so `U = Σ m g (z cos γ + x sin γ)`.
//! At γ = 0 everything reduces to the flat-ground model.

use nalgebra::{Matrix4, Vector4};

use crate::error::DynamicsError;
use crate::model::{ControlInput, EnergyBreakdown, GeneralizedState, RobotParams};

/// Determinant magnitude below which the mass matrix is treated as singular.
pub const SINGULAR_DET: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InclineConfig {
    /// Slope angle, rad; positive means the slope rises along +x.
    pub gamma: f64,
    /// Robot heading aligned with the slope. Only the aligned case is modelled.
    pub aligned: bool,
}

impl Default for InclineConfig {
    fn default() -> Self {
        Self::flat()
    }
}

impl InclineConfig {
    pub fn flat() -> Self {
        Self {
            gamma: 0.0,
            aligned: true,
        }
    }

    pub fn aligned(gamma: f64) -> Result<Self, DynamicsError> {
        let c = Self {
            gamma,
            aligned: true,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !self.aligned || !self.gamma.is_finite() || self.gamma.abs() >= std::f64::consts::FRAC_PI_2 {
            return Err(DynamicsError::InvalidIncline(self.gamma));
        }
        Ok(())
    }
}

/// Inertia matrix and generalized force vectors at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsTerms {
    pub mass: Matrix4<f64>,
    pub coriolis: Vector4<f64>,
    pub friction: Vector4<f64>,
    pub gravity: Vector4<f64>,
}

pub fn compute_terms(s: &GeneralizedState, p: &RobotParams, inc: &InclineConfig) -> DynamicsTerms {
    let (th1, th2) = (s.q[0], s.q[1]);
    let (dth1, dth2, dph1, dph2) = (s.dq[0], s.dq[1], s.dq[2], s.dq[3]);
    let (s1, c1) = th1.sin_cos();
    let (s2, c2) = th2.sin_cos();
    let m = p.total_mass();
    let (big_r, r, l, mb) = (p.R, p.r, p.l, p.m_b);
    let mbl = mb * l;
    let d = big_r + r * c2 - r;
    // m(R - r) + m_b l cos θ1 appears throughout the roll row.
    let roll_lever = m * (big_r - r) + mbl * c1;

    let m11 = p.I_by + p.I_wy + mbl * l + m * big_r * big_r + 2.0 * mbl * big_r * c1;
    let m12 = -mbl * r * s1 * s2;
    let m13 = p.I_wy + m * big_r * big_r + mbl * big_r * c1;
    let m14 = m12;
    let m22 = 0.5 * (p.I_bx + p.I_bz + mbl * l)
        + p.I_rx
        + p.I_wx
        + m * (2.0 * r * r - 2.0 * r * big_r + big_r * big_r)
        + 2.0 * m * r * (big_r - r) * c2
        + 0.5 * (p.I_bx - p.I_bz + mbl * l) * (2.0 * th1).cos()
        + 2.0 * mbl * c1 * d;
    let m24 = p.I_rx + m * r * r + r * roll_lever * c2;
    let m33 = p.I_wy + m * big_r * big_r;
    let m44 = p.I_rx + m * r * r;

    #[rustfmt::skip]
    let mass = Matrix4::new(
        m11, m12, m13, m14,
        m12, m22, 0.0, m24,
        m13, 0.0, m33, 0.0,
        m14, m24, 0.0, m44,
    );

    let ib_diff = p.I_bx - p.I_bz + mbl * l;
    let coriolis = Vector4::new(
        (ib_diff * c1 + mbl * (big_r - r)) * dth2 * dth2 * s1 - mbl * big_r * dth1 * dth1 * s1,
        2.0 * (-ib_diff * c1 - mbl * d) * dth1 * dth2 * s1
            - roll_lever * r * dth2 * dth2 * s2
            - mbl * r * dth1 * dth1 * c1 * s2,
        -mbl * big_r * dth1 * dth1 * s1,
        -mbl * r * dth1 * dth1 * c1 * s2
            - 2.0 * mbl * r * dth1 * dth2 * s1 * c2
            - roll_lever * r * dth2 * dth2 * s2,
    );

    let wheel_rate = dth1 + dph1;
    let roller_rate = dth2 + dph2;
    let friction = Vector4::new(
        p.mu_g * wheel_rate,
        p.mu_g * roller_rate,
        p.mu_g * wheel_rate + p.mu_1 * dph1,
        p.mu_g * roller_rate + p.mu_2 * dph2,
    );

    let (sg, cg) = inc.gamma.sin_cos();
    let gravity = Vector4::new(
        -mbl * p.g * s1 * c2 * cg + (m * big_r + mbl * c1) * p.g * sg,
        -roll_lever * p.g * s2 * cg,
        m * big_r * p.g * sg,
        0.0,
    );

    DynamicsTerms {
        mass,
        coriolis,
        friction,
        gravity,
    }
}

/// `q̈ = M⁻¹ (W + u_ext − C − F − G)` with `W = [0, 0, u1, u2]`.
pub fn forward_dynamics(
    s: &GeneralizedState,
    u: &ControlInput,
    p: &RobotParams,
    inc: &InclineConfig,
    u_ext: &Vector4<f64>,
) -> Result<Vector4<f64>, DynamicsError> {
    let t = compute_terms(s, p, inc);
    let rhs = Vector4::new(0.0, 0.0, u.u[0], u.u[1]) + u_ext - t.coriolis - t.friction - t.gravity;
    let lu = t.mass.lu();
    let det = lu.determinant();
    if !(det.abs() >= SINGULAR_DET) {
        return Err(DynamicsError::SingularMassMatrix { det });
    }
    lu.solve(&rhs)
        .ok_or(DynamicsError::SingularMassMatrix { det })
}

struct Velocities {
    wheel: [f64; 3],
    body: [f64; 3],
}

/// Translational velocities of wheel centre and body centre of mass, from
/// differentiating their positions along the kinematic chain.
fn frame_velocities(s: &GeneralizedState, p: &RobotParams) -> Velocities {
    let (th1, th2) = (s.q[0], s.q[1]);
    let (dth1, dth2) = (s.dq[0], s.dq[1]);
    let psi_dot = s.psi_dot();
    let (s1, c1) = th1.sin_cos();
    let (s2, c2) = th2.sin_cos();
    let wheel = [
        p.R * psi_dot[0],
        p.r * psi_dot[1] + (p.R - p.r) * c2 * dth2,
        -(p.R - p.r) * s2 * dth2,
    ];
    let body = [
        wheel[0] + p.l * c1 * dth1,
        wheel[1] - p.l * s1 * s2 * dth1 + p.l * c1 * c2 * dth2,
        wheel[2] - p.l * s1 * c2 * dth1 - p.l * c1 * s2 * dth2,
    ];
    Velocities { wheel, body }
}

fn sq_norm(v: &[f64; 3]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Slope-frame positions `(x, z)` of wheel centre and body centre of mass.
fn heights(s: &GeneralizedState, p: &RobotParams) -> ([f64; 2], [f64; 2]) {
    let (th1, th2) = (s.q[0], s.q[1]);
    let psi1 = s.psi()[0];
    let xw = p.R * psi1;
    let zw = p.r + (p.R - p.r) * th2.cos();
    let xb = xw + p.l * th1.sin();
    let zb = zw + p.l * th1.cos() * th2.cos();
    ([xw, zw], [xb, zb])
}

/// Kinetic and potential energy evaluated directly from frame positions and
/// velocities (independent of the mass-matrix route).
pub fn total_energy(s: &GeneralizedState, p: &RobotParams, inc: &InclineConfig) -> EnergyBreakdown {
    let psi = s.psi();
    let psi_dot = s.psi_dot();
    let (th1, dth1, dth2) = (s.q[0], s.dq[0], s.dq[1]);
    let v = frame_velocities(s, p);

    let k_roller = 0.5 * p.I_rx * psi_dot[1] * psi_dot[1];

    let (sp1, cp1) = psi[0].sin_cos();
    let k_wheel = 0.5
        * (p.I_wx * (dth2 * cp1).powi(2) + p.I_wy * psi_dot[0].powi(2) + p.I_wz * (dth2 * sp1).powi(2))
        + 0.5 * p.m_w * sq_norm(&v.wheel);

    let (s1, c1) = th1.sin_cos();
    let k_body = 0.5
        * (p.I_bx * (dth2 * c1).powi(2) + p.I_by * dth1 * dth1 + p.I_bz * (dth2 * s1).powi(2))
        + 0.5 * p.m_b * sq_norm(&v.body);

    let (sg, cg) = inc.gamma.sin_cos();
    let ([xw, zw], [xb, zb]) = heights(s, p);
    let potential =
        p.g * cg * (p.m_w * zw + p.m_b * zb) + p.g * sg * (p.m_w * xw + p.m_b * xb);

    EnergyBreakdown::new(k_roller, k_wheel, k_body, potential)
}

/// Twice the Rayleigh dissipation function, i.e. the power lost to viscous
/// friction, W.
pub fn dissipation_power(s: &GeneralizedState, p: &RobotParams) -> f64 {
    let psi_dot = s.psi_dot();
    let phi_dot = s.phi_dot();
    p.mu_g * (psi_dot[0].powi(2) + psi_dot[1].powi(2))
        + p.mu_1 * phi_dot[0].powi(2)
        + p.mu_2 * phi_dot[1].powi(2)
}

/// Power delivered by the actuators and an external generalized torque.
pub fn input_power(s: &GeneralizedState, u: &ControlInput, u_ext: &Vector4<f64>) -> f64 {
    u.u[0] * s.dq[2] + u.u[1] * s.dq[3] + u_ext.dot(&s.dq)
}

/// Static pitch (from the gravity vertical) that puts the combined centre of
/// mass above the contact point on an aligned slope:
/// `m_b l sin θ = (m_b + m_w) R sin γ`.
pub fn equilibrium_pitch(gamma: f64, p: &RobotParams) -> Result<f64, DynamicsError> {
    let ratio = p.total_mass() * p.R * gamma.sin() / (p.m_b * p.l);
    if !(ratio.abs() <= 1.0) {
        return Err(DynamicsError::NoEquilibrium { gamma, ratio });
    }
    Ok(ratio.asin())
}

/// Body pitch and roll measured from the gravity vertical (what an attitude
/// sensor reports).
pub fn gravity_attitude(s: &GeneralizedState, inc: &InclineConfig) -> [f64; 2] {
    [s.q[0] - inc.gamma, s.q[1]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn p() -> RobotParams {
        RobotParams::prototype()
    }

    fn flat() -> InclineConfig {
        InclineConfig::flat()
    }

    #[test]
    fn upright_rest_terms() {
        let t = compute_terms(&GeneralizedState::default(), &p(), &flat());
        assert_eq!(t.coriolis, Vector4::zeros());
        assert_eq!(t.friction, Vector4::zeros());
        assert_eq!(t.gravity, Vector4::zeros());
        assert_eq!(t.mass[(0, 1)], 0.0);
        assert_eq!(t.mass[(0, 3)], 0.0);
    }

    #[test]
    fn wheel_inertia_entry() {
        // I_wy + (m_b + m_w) R² = 3.706e-3 + 1.85 · 0.101²
        let t = compute_terms(&GeneralizedState::default(), &p(), &flat());
        let expected = 3.706e-3 + 1.85 * 0.101 * 0.101;
        assert_abs_diff_eq!(t.mass[(2, 2)], expected, epsilon = 1e-15);
        assert_abs_diff_eq!(t.mass[(2, 2)], 0.02258, epsilon = 1e-5);
    }

    #[test]
    fn pitch_gravity_torque() {
        let t = compute_terms(&GeneralizedState::tilted(0.1, 0.0), &p(), &flat());
        let expected = -1.13 * 9.81 * 0.2511 * 0.1f64.sin();
        assert_abs_diff_eq!(t.gravity[0], expected, epsilon = 1e-15);
        assert_abs_diff_eq!(t.gravity[0], -0.2779, epsilon = 1e-4);
        assert_eq!(t.gravity[1], 0.0);
    }

    #[test]
    fn roll_gravity_is_destabilizing() {
        // Positive roll must be pushed further by gravity: -G2 > 0 for θ2 > 0.
        let t = compute_terms(&GeneralizedState::tilted(0.0, 0.1), &p(), &flat());
        assert!(t.gravity[1] < 0.0);
    }

    #[test]
    fn rest_is_equilibrium() {
        let a = forward_dynamics(&GeneralizedState::default(), &ControlInput::zero(), &p(), &flat(), &Vector4::zeros())
            .unwrap();
        assert_eq!(a, Vector4::zeros());
    }

    #[test]
    fn tilted_body_falls_further() {
        let pf = p().frictionless();
        let a = forward_dynamics(&GeneralizedState::tilted(0.01, 0.0), &ControlInput::zero(), &pf, &flat(), &Vector4::zeros())
            .unwrap();
        assert!(a[0] > 0.0);
    }

    #[test]
    fn wheel_torque_response_matches_planar_solve() {
        let pp = p();
        let a = forward_dynamics(&GeneralizedState::default(), &ControlInput::new(0.1, 0.0), &pp, &flat(), &Vector4::zeros())
            .unwrap();
        // Closed-form 2×2 solve of the pitch/wheel block at upright.
        let m = pp.total_mass();
        let a1 = pp.I_by + pp.I_wy + pp.m_b * pp.l * pp.l + m * pp.R * pp.R + 2.0 * pp.m_b * pp.l * pp.R;
        let a2 = pp.I_wy + m * pp.R * pp.R + pp.m_b * pp.l * pp.R;
        let m33 = pp.I_wy + m * pp.R * pp.R;
        let det = a1 * m33 - a2 * a2;
        let th = -a2 * 0.1 / det;
        let ph = a1 * 0.1 / det;
        assert!(a[2] > 0.0 && a[0] < 0.0);
        assert_abs_diff_eq!(a[0], th, epsilon = 1e-12);
        assert_abs_diff_eq!(a[2], ph, epsilon = 1e-12);
        assert_eq!(a[1], 0.0);
        assert_eq!(a[3], 0.0);
    }

    #[test]
    fn singular_mass_matrix_reported() {
        // Massless, inertia-free robot: M collapses to zero.
        let tiny = RobotParams {
            m_w: 1e-9,
            m_b: 1e-9,
            I_wx: 1e-12,
            I_wy: 1e-12,
            I_wz: 1e-12,
            I_bx: 1e-12,
            I_by: 1e-12,
            I_bz: 1e-12,
            I_rx: 1e-12,
            ..p()
        };
        let e = forward_dynamics(&GeneralizedState::default(), &ControlInput::zero(), &tiny, &flat(), &Vector4::zeros());
        assert!(matches!(e, Err(DynamicsError::SingularMassMatrix { .. })));
    }

    #[test]
    fn energy_at_rest_is_potential_only() {
        let e = total_energy(&GeneralizedState::default(), &p(), &flat());
        assert_eq!(e.kinetic(), 0.0);
        let pp = p();
        let u0 = pp.g * (pp.m_w * pp.R + pp.m_b * (pp.R + pp.l));
        assert_abs_diff_eq!(e.potential, u0, epsilon = 1e-12);
        assert_eq!(e.total, e.potential);
    }

    #[test]
    fn pure_roller_spin_energy() {
        // ψ̇2 = θ̇2 + φ̇2 = 1 with θ̇2 = 0.
        let s = GeneralizedState::new(Vector4::zeros(), Vector4::new(0.0, 0.0, 0.0, 1.0));
        let e = total_energy(&s, &p(), &flat());
        assert_abs_diff_eq!(e.kinetic_roller, p().I_rx / 2.0, epsilon = 1e-18);
    }

    #[test]
    fn dissipation_examples() {
        assert_eq!(dissipation_power(&GeneralizedState::default(), &p()), 0.0);
        // ψ̇1 = 1 through θ̇1 alone leaves φ̇ = 0.
        let s = GeneralizedState::new(Vector4::zeros(), Vector4::new(1.0, 0.0, 0.0, 0.0));
        assert_abs_diff_eq!(dissipation_power(&s, &p()), 0.09, epsilon = 1e-15);
    }

    #[test]
    fn kinetic_energy_equals_mass_matrix_quadratic_form() {
        // Two independent routes to K: frame velocities and ½ q̇ᵀ M q̇.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let s = random_state(&mut rng);
            let k = total_energy(&s, &p(), &flat()).kinetic();
            let m = compute_terms(&s, &p(), &flat()).mass;
            let kq = 0.5 * (s.dq.transpose() * m * s.dq)[0];
            assert!((k - kq).abs() <= 1e-12 * k.max(1.0), "{k} vs {kq}");
        }
    }

    #[test]
    fn gravity_is_potential_gradient() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let inc = InclineConfig::aligned(0.2).unwrap();
        for _ in 0..100 {
            let s = random_state(&mut rng);
            let g = compute_terms(&s, &p(), &inc).gravity;
            for i in 0..4 {
                let h = 1e-6;
                let mut a = s;
                let mut b = s;
                a.q[i] += h;
                b.q[i] -= h;
                let fd = (total_energy(&a, &p(), &inc).potential - total_energy(&b, &p(), &inc).potential) / (2.0 * h);
                assert!((fd - g[i]).abs() < 1e-8, "G{} {} vs {}", i + 1, g[i], fd);
            }
        }
    }

    #[test]
    fn equilibrium_pitch_examples() {
        assert_eq!(equilibrium_pitch(0.0, &p()).unwrap(), 0.0);
        let e15 = equilibrium_pitch(15f64.to_radians(), &p()).unwrap().to_degrees();
        assert_abs_diff_eq!(e15, 9.8, epsilon = 0.05);
        let e30 = equilibrium_pitch(30f64.to_radians(), &p()).unwrap().to_degrees();
        assert_abs_diff_eq!(e30, 19.2, epsilon = 0.05);
        let heavy_wheel = RobotParams { m_w: 10.0, ..p() };
        assert!(matches!(
            equilibrium_pitch(1.2, &heavy_wheel),
            Err(DynamicsError::NoEquilibrium { .. })
        ));
    }

    #[test]
    fn incline_equilibrium_is_static() {
        // At the equilibrium pitch the pitch row of G vanishes.
        let gamma = 15f64.to_radians();
        let inc = InclineConfig::aligned(gamma).unwrap();
        let th = equilibrium_pitch(gamma, &p()).unwrap();
        let s = GeneralizedState::tilted(th + gamma, 0.0);
        let g = compute_terms(&s, &p(), &inc).gravity;
        assert_abs_diff_eq!(g[0], 0.0, epsilon = 1e-14);
        assert_eq!(gravity_attitude(&s, &inc)[0], th + gamma - gamma);
    }

    #[test]
    fn non_aligned_incline_rejected() {
        let c = InclineConfig {
            gamma: 0.1,
            aligned: false,
        };
        assert!(c.validate().is_err());
        assert!(InclineConfig::aligned(2.0).is_err());
    }

    #[test]
    fn upright_axes_decouple() {
        let s = GeneralizedState::default();
        let a = forward_dynamics(&s, &ControlInput::new(0.7, 0.0), &p(), &flat(), &Vector4::zeros()).unwrap();
        assert_eq!(a[1], 0.0);
        assert_eq!(a[3], 0.0);
    }

    fn random_state(rng: &mut impl Rng) -> GeneralizedState {
        GeneralizedState::new(
            Vector4::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            ),
            Vector4::new(
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
            ),
        )
    }

    #[test]
    fn mass_matrix_positive_definite_on_random_states() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let s = random_state(&mut rng);
            let m = compute_terms(&s, &p(), &flat()).mass;
            assert_eq!(m, m.transpose());
            // Leading principal minors.
            for k in 1..=4 {
                let minor = m.view((0, 0), (k, k)).determinant();
                assert!(minor > 0.0, "minor {k} = {minor} at {s:?}");
            }
        }
    }

    proptest! {
        #[test]
        fn mass_matrix_symmetric(t1 in -3.0..3.0f64, t2 in -3.0..3.0f64, p1 in -9.0..9.0f64, p2 in -9.0..9.0f64) {
            let s = GeneralizedState::new(Vector4::new(t1, t2, p1, p2), Vector4::zeros());
            let m = compute_terms(&s, &p(), &flat()).mass;
            prop_assert_eq!(m, m.transpose());
            prop_assert_eq!(m[(1, 2)], 0.0);
            prop_assert_eq!(m[(2, 3)], 0.0);
        }

        #[test]
        fn dissipation_non_negative(a in -10.0..10.0f64, b in -10.0..10.0f64, c in -10.0..10.0f64, d in -10.0..10.0f64) {
            let s = GeneralizedState::new(Vector4::zeros(), Vector4::new(a, b, c, d));
            prop_assert!(dissipation_power(&s, &p()) >= 0.0);
            // Equals F·q̇.
            let f = compute_terms(&s, &p(), &flat()).friction;
            prop_assert!((f.dot(&s.dq) - dissipation_power(&s, &p())).abs() < 1e-10);
        }
    }
}
