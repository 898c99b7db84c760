//! LQR balancing, reference feedforward and the outer position loop.
//!
//! Control law per tick: `u = −K (x − x_ref) + H ψ̇_ref`, with `x_ref`
//! carrying the PI position correction in its θ slots.

mod gains_file;
pub mod riccati;

use nalgebra::{DMatrix, Matrix2, SMatrix, Vector2};

use crate::error::{ControlError, KinematicsError};
use crate::kinematics::{wheel_rates_for_velocity, BodyVelocity, PlanarPosition};
use crate::linearization::{
    closed_loop_spectrum, spectral_abscissa, state_matrices, Matrix6, StateMatrices, StateVector6,
};
use crate::model::{ControlInput, RobotParams};

pub use gains_file::{gains_to_toml, load_gains};
pub use riccati::CareSolution;

pub type GainMatrix = SMatrix<f64, 2, 6>;

/// State and input weights for the quadratic cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqrWeights {
    pub q: Matrix6,
    pub rw: Matrix2<f64>,
}

impl LqrWeights {
    pub fn diagonal(q: [f64; 6], rw: [f64; 2]) -> Self {
        Self {
            q: Matrix6::from_diagonal(&StateVector6::from_column_slice(&q)),
            rw: Matrix2::from_diagonal(&Vector2::new(rw[0], rw[1])),
        }
    }

    /// Attitude first; wheel torque penalised hard enough that the fast
    /// roller mode stays well inside what a 125 Hz loop can hold.
    pub fn standard() -> Self {
        Self::diagonal([100.0, 100.0, 1.0, 1.0, 1.0, 1.0], [10.0, 1000.0])
    }
}

impl Default for LqrWeights {
    fn default() -> Self {
        Self::standard()
    }
}

fn to_dyn<const R: usize, const C: usize>(m: &SMatrix<f64, R, C>) -> DMatrix<f64> {
    DMatrix::from_column_slice(R, C, m.as_slice())
}

/// Full CARE solution for the 6-state model.
pub fn solve_lqr(sm: &StateMatrices, w: &LqrWeights) -> Result<CareSolution, ControlError> {
    riccati::solve_care(&to_dyn(&sm.a), &to_dyn(&sm.b), &to_dyn(&w.q), &to_dyn(&w.rw))
}

/// `K = Rw⁻¹ Bᵀ P` for the stabilizing CARE solution `P`.
pub fn lqr_gain(sm: &StateMatrices, w: &LqrWeights) -> Result<GainMatrix, ControlError> {
    let sol = solve_lqr(sm, w)?;
    let k = GainMatrix::from_column_slice(sol.k.as_slice());
    let abscissa = spectral_abscissa(&closed_loop_spectrum(sm, &k));
    if !(abscissa < 0.0) {
        return Err(ControlError::NotStabilizing(abscissa));
    }
    Ok(k)
}

/// Steady-state map from `ψ̇_ref` to output, `C (BK − A)⁻¹ B`.
pub fn dc_gain(sm: &StateMatrices, k: &GainMatrix) -> Result<Matrix2<f64>, ControlError> {
    let inv = (sm.b * k - sm.a).try_inverse().ok_or(ControlError::SingularDcGain)?;
    Ok(sm.c * inv * sm.b)
}

/// `H = (C (BK − A)⁻¹ B)⁻¹`.
pub fn feedforward_gain(sm: &StateMatrices, k: &GainMatrix) -> Result<Matrix2<f64>, ControlError> {
    let g = dc_gain(sm, k)?;
    if g.determinant().abs() < 1e-14 * g.norm().max(1.0) {
        return Err(ControlError::SingularDcGain);
    }
    g.try_inverse().ok_or(ControlError::SingularDcGain)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainSet {
    pub k: GainMatrix,
    pub h: Matrix2<f64>,
    /// Position-loop proportional gain per axis (x → pitch, y → roll), rad/m.
    pub kp: [f64; 2],
    /// Position-loop integral gain per axis, rad/(m·s).
    pub ki: [f64; 2],
    pub theta_correction_limit: f64,
    pub u_limit: f64,
    /// Anti-windup clamp on each integrator, m·s.
    pub integrator_limit: f64,
}

impl GainSet {
    pub const DEFAULT_KP: [f64; 2] = [0.5, 1.0];
    pub const DEFAULT_KI: [f64; 2] = [0.05, 0.1];
    pub const DEFAULT_THETA_LIMIT_DEG: f64 = 15.0;
    pub const DEFAULT_U_LIMIT: f64 = 6.0;
    pub const DEFAULT_INTEGRATOR_LIMIT: f64 = 4.0;

    /// Synthesize K and H from the given weights, default outer-loop settings.
    pub fn synthesize(p: &RobotParams, w: &LqrWeights) -> Result<Self, ControlError> {
        let sm = state_matrices(p);
        let k = lqr_gain(&sm, w)?;
        let h = feedforward_gain(&sm, &k)?;
        Ok(Self {
            k,
            h,
            kp: Self::DEFAULT_KP,
            ki: Self::DEFAULT_KI,
            theta_correction_limit: Self::DEFAULT_THETA_LIMIT_DEG.to_radians(),
            u_limit: Self::DEFAULT_U_LIMIT,
            integrator_limit: Self::DEFAULT_INTEGRATOR_LIMIT,
        })
    }

    pub fn synthesize_default(p: &RobotParams) -> Result<Self, ControlError> {
        Self::synthesize(p, &LqrWeights::standard())
    }

    /// Balancing only: the position loop switched off.
    pub fn without_position_loop(mut self) -> Self {
        self.kp = [0.0; 2];
        self.ki = [0.0; 2];
        self
    }

    /// All gains zero (open loop).
    pub fn zeroed(mut self) -> Self {
        self.k = GainMatrix::zeros();
        self.h = Matrix2::zeros();
        self.without_position_loop()
    }
}

/// Absolute wheel/roller rate reference `[ψ̇1_ref, ψ̇2_ref]`, rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VelocityReference {
    pub psi_dot_ref: Vector2<f64>,
}

impl VelocityReference {
    pub fn new(psi1: f64, psi2: f64) -> Self {
        Self {
            psi_dot_ref: Vector2::new(psi1, psi2),
        }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// Reference that realises ground velocity `(vx, vy)` at steady state.
    pub fn from_ground_velocity(vx: f64, vy: f64, p: &RobotParams) -> Result<Self, KinematicsError> {
        Ok(Self {
            psi_dot_ref: wheel_rates_for_velocity(&BodyVelocity::new(vx, vy), p)?,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.psi_dot_ref.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControllerState {
    /// Accumulated position error per axis, m·s.
    pub integrator: Vector2<f64>,
    pub last_position: PlanarPosition,
    /// Saturation flags from the most recent control step.
    pub saturated: [bool; 2],
}

impl ControllerState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// PI position correction mapped onto the θ-reference slots.
///
/// The kinematic Jacobian is diagonal between ground axes and absolute
/// wheel/roller angles, so x error drives pitch and y error drives roll.
/// An axis's integrator is frozen while that axis's torque is saturated.
pub fn pi_compensate(
    cs: &mut ControllerState,
    measured: &PlanarPosition,
    target: &PlanarPosition,
    dt: f64,
    gains: &GainSet,
) -> Vector2<f64> {
    debug_assert!(dt > 0.0);
    let e = Vector2::new(target.px - measured.px, target.py - measured.py);
    let lim = gains.integrator_limit;
    for i in 0..2 {
        if !cs.saturated[i] {
            cs.integrator[i] = (cs.integrator[i] + e[i] * dt).clamp(-lim, lim);
        }
    }
    cs.last_position = *measured;
    let tl = gains.theta_correction_limit;
    Vector2::from_fn(|i, _| (gains.kp[i] * e[i] + gains.ki[i] * cs.integrator[i]).clamp(-tl, tl))
}

/// Output of one control computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub input: ControlInput,
    pub saturated: [bool; 2],
}

pub fn control_step(
    x: &StateVector6,
    reference: &VelocityReference,
    theta_ref: &Vector2<f64>,
    gains: &GainSet,
) -> ControlOutput {
    let mut x_ref = StateVector6::zeros();
    x_ref[0] = theta_ref[0];
    x_ref[1] = theta_ref[1];
    let u = -gains.k * (x - x_ref) + gains.h * reference.psi_dot_ref;
    let (input, saturated) = ControlInput { u }.clipped(gains.u_limit);
    ControlOutput { input, saturated }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linearization::{X_AXIS, Y_AXIS};
    use approx::assert_abs_diff_eq;

    fn sm() -> StateMatrices {
        state_matrices(&RobotParams::prototype())
    }

    #[test]
    fn identity_weights_hurwitz_and_small_residual() {
        let sm = sm();
        let w = LqrWeights::diagonal([1.0; 6], [1.0; 2]);
        let sol = solve_lqr(&sm, &w).unwrap();
        assert!(sol.residual < 1e-8, "residual {}", sol.residual);
        let k = lqr_gain(&sm, &w).unwrap();
        assert!(spectral_abscissa(&closed_loop_spectrum(&sm, &k)) < 0.0);
    }

    #[test]
    fn default_weights_positive_definite_solution() {
        let sol = solve_lqr(&sm(), &LqrWeights::standard()).unwrap();
        assert!((&sol.p - sol.p.transpose()).norm() < 1e-12 * sol.p.norm());
        assert!(sol.p.clone().symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn gain_has_block_structure() {
        let k = lqr_gain(&sm(), &LqrWeights::standard()).unwrap();
        for &j in &Y_AXIS {
            assert!(k[(0, j)].abs() < 1e-9 * k.norm());
        }
        for &j in &X_AXIS {
            assert!(k[(1, j)].abs() < 1e-9 * k.norm());
        }
    }

    #[test]
    fn dc_identity() {
        let sm = sm();
        let k = lqr_gain(&sm, &LqrWeights::standard()).unwrap();
        let h = feedforward_gain(&sm, &k).unwrap();
        let prod = h * dc_gain(&sm, &k).unwrap();
        assert!((prod - Matrix2::identity()).norm() < 1e-10);
        assert!(h[(0, 1)].abs() < 1e-9 * h[(0, 0)].abs());
        assert!(h[(1, 0)].abs() < 1e-9 * h[(1, 1)].abs());
    }

    #[test]
    fn symmetric_axes_give_identical_blocks() {
        // Copy the pitch-axis constants onto the roll axis at the level of the
        // linear model, so both 3×3 blocks are the same system.
        let mut sm = sm();
        for (i, &xi) in X_AXIS.iter().enumerate() {
            for (j, &xj) in X_AXIS.iter().enumerate() {
                sm.a[(Y_AXIS[i], Y_AXIS[j])] = sm.a[(xi, xj)];
            }
            sm.b[(Y_AXIS[i], 1)] = sm.b[(xi, 0)];
        }
        let w = LqrWeights::diagonal([5.0, 5.0, 1.0, 1.0, 2.0, 2.0], [1.0, 1.0]);
        let k = lqr_gain(&sm, &w).unwrap();
        for c in 0..3 {
            assert_abs_diff_eq!(k[(0, X_AXIS[c])], k[(1, Y_AXIS[c])], epsilon = 1e-8 * k.norm());
        }
    }

    #[test]
    fn heavier_state_weight_moves_poles_left() {
        let sm = sm();
        // Not monotone for every base Q: the slowest closed-loop pole sits
        // near a transmission zero set by the viscous terms and can drift
        // right by a few thousandths. Checked for the attitude-first weighting.
        let base = [100.0, 100.0, 1.0, 1.0, 10.0, 10.0];
        let w1 = LqrWeights::diagonal(base, [1.0; 2]);
        let w100 = LqrWeights::diagonal(base.map(|v| v * 100.0), [1.0; 2]);
        let a1 = spectral_abscissa(&closed_loop_spectrum(&sm, &lqr_gain(&sm, &w1).unwrap()));
        let a100 = spectral_abscissa(&closed_loop_spectrum(&sm, &lqr_gain(&sm, &w100).unwrap()));
        assert!(a100 <= a1 + 1e-9, "{a100} vs {a1}");
    }

    #[test]
    fn common_scaling_leaves_gain_unchanged() {
        let sm = sm();
        let w = LqrWeights::standard();
        let scaled = LqrWeights {
            q: w.q * 7.5,
            rw: w.rw * 7.5,
        };
        let k1 = lqr_gain(&sm, &w).unwrap();
        let k2 = lqr_gain(&sm, &scaled).unwrap();
        assert!((k1 - k2).norm() < 1e-10 * k1.norm().max(1.0), "{}", (k1 - k2).norm());
    }

    #[test]
    fn control_step_examples() {
        let g = GainSet::synthesize_default(&RobotParams::prototype()).unwrap();
        let zero = control_step(&StateVector6::zeros(), &VelocityReference::zero(), &Vector2::zeros(), &g);
        assert_eq!(zero.input.u, Vector2::zeros());
        assert_eq!(zero.saturated, [false, false]);

        let ff = control_step(&StateVector6::zeros(), &VelocityReference::new(1.0, 0.0), &Vector2::zeros(), &g);
        assert_eq!(ff.input.u, g.h * Vector2::new(1.0, 0.0));
        assert!(ff.input.u[1].abs() < 1e-12);
    }

    #[test]
    fn large_tilt_saturates() {
        // Stiff gains from light torque weighting.
        let p = RobotParams::prototype();
        let g = GainSet::synthesize(&p, &LqrWeights::diagonal([100.0, 100.0, 1.0, 1.0, 10.0, 10.0], [1.0, 1.0]))
            .unwrap();
        let mut x = StateVector6::zeros();
        x[0] = 30f64.to_radians();
        let out = control_step(&x, &VelocityReference::zero(), &Vector2::zeros(), &g);
        assert_eq!(out.input.u[0].abs(), g.u_limit);
        assert!(out.saturated[0]);
    }

    #[test]
    fn pi_examples() {
        let g = GainSet::synthesize_default(&RobotParams::prototype()).unwrap();
        let origin = PlanarPosition::default();
        let mut cs = ControllerState::new();
        assert_eq!(pi_compensate(&mut cs, &origin, &origin, 0.008, &g), Vector2::zeros());

        let mut cs = ControllerState::new();
        let e = 0.01;
        let dt = 0.008;
        let steps = 125;
        let mut out = Vector2::zeros();
        for _ in 0..steps {
            out = pi_compensate(&mut cs, &origin, &PlanarPosition::new(e, -e), dt, &g);
        }
        let t = dt * steps as f64;
        assert_abs_diff_eq!(out[0], g.kp[0] * e + g.ki[0] * e * t, epsilon = 1e-12);
        assert_abs_diff_eq!(out[1], -(g.kp[1] * e + g.ki[1] * e * t), epsilon = 1e-12);
    }

    #[test]
    fn pi_clamps_and_freezes() {
        let g = GainSet::synthesize_default(&RobotParams::prototype()).unwrap();
        let mut cs = ControllerState::new();
        let far = PlanarPosition::new(10.0, 0.0);
        let out = pi_compensate(&mut cs, &PlanarPosition::default(), &far, 1.0, &g);
        assert_eq!(out[0], g.theta_correction_limit);
        assert_eq!(cs.integrator[0], g.integrator_limit);

        let mut cs = ControllerState {
            saturated: [true, false],
            ..ControllerState::new()
        };
        pi_compensate(&mut cs, &PlanarPosition::default(), &PlanarPosition::new(0.1, 0.1), 0.5, &g);
        assert_eq!(cs.integrator[0], 0.0);
        assert!(cs.integrator[1] > 0.0);
    }

    #[test]
    fn reference_from_ground_velocity() {
        let p = RobotParams::prototype();
        let r = VelocityReference::from_ground_velocity(0.101, 0.0, &p).unwrap();
        assert_abs_diff_eq!(r.psi_dot_ref[0], 1.0, epsilon = 1e-12);
        assert_eq!(r.psi_dot_ref[1], 0.0);
        let r = VelocityReference::from_ground_velocity(0.0, 0.0, &p).unwrap();
        assert_eq!(r.psi_dot_ref, Vector2::zeros());
    }
}
