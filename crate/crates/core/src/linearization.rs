//! Small-angle model about the upright equilibrium.
//!
//! State ordering everywhere is `x = [θ1, θ2, θ̇1, θ̇2, φ̇1, φ̇2]`; inputs
//! `u = [u1, u2]`; output `y = [ψ̇1, ψ̇2]`. The pitch (x) and roll (y) axes
//! decouple: indices {0, 2, 4} never couple with {1, 3, 5}.

use nalgebra::{Complex, SMatrix, Vector4};

use crate::dynamics::{forward_dynamics, InclineConfig};
use crate::error::DynamicsError;
use crate::model::{ControlInput, GeneralizedState, RobotParams};

pub type Matrix6 = SMatrix<f64, 6, 6>;
pub type Matrix6x2 = SMatrix<f64, 6, 2>;
pub type Matrix2x6 = SMatrix<f64, 2, 6>;
pub type StateVector6 = SMatrix<f64, 6, 1>;

/// Central-difference step used by [`numeric_linearization`].
pub const FD_STEP: f64 = 1e-6;

/// Indices of the pitch-axis states.
pub const X_AXIS: [usize; 3] = [0, 2, 4];
/// Indices of the roll-axis states.
pub const Y_AXIS: [usize; 3] = [1, 3, 5];

/// Coefficients of the linearized equations of motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearCoeffs {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub a5: f64,
    pub a6: f64,
    pub m33: f64,
    pub m44: f64,
}

impl LinearCoeffs {
    /// `a2² − a1·M33`, the (negative) pitch-block denominator.
    pub fn pitch_denominator(&self) -> f64 {
        self.a2 * self.a2 - self.a1 * self.m33
    }

    /// `a5² − a4·M44`, the (negative) roll-block denominator.
    pub fn roll_denominator(&self) -> f64 {
        self.a5 * self.a5 - self.a4 * self.m44
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateMatrices {
    pub a: Matrix6,
    pub b: Matrix6x2,
    pub c: Matrix2x6,
}

/// The output map selecting `ψ̇ = θ̇ + φ̇`.
pub fn output_matrix() -> Matrix2x6 {
    #[rustfmt::skip]
    let c = Matrix2x6::new(
        0.0, 0.0, 1.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 1.0, 0.0, 1.0,
    );
    c
}

pub fn linear_coeffs(p: &RobotParams) -> LinearCoeffs {
    let m = p.total_mass();
    let mbl = p.m_b * p.l;
    LinearCoeffs {
        a1: p.I_by + p.I_wy + mbl * p.l + m * p.R * p.R + 2.0 * mbl * p.R,
        a2: p.I_wy + m * p.R * p.R + mbl * p.R,
        a3: -mbl * p.g,
        a4: p.I_bx + p.I_rx + p.I_wx + mbl * p.l + m * p.R * p.R + 2.0 * mbl * p.R,
        a5: p.I_rx + m * p.r * p.R + mbl * p.r,
        a6: -mbl * p.g - m * p.g * (p.R - p.r),
        m33: p.I_wy + m * p.R * p.R,
        m44: p.I_rx + m * p.r * p.r,
    }
}

/// Closed-form `A`, `B` from the linear coefficients.
pub fn state_matrices(p: &RobotParams) -> StateMatrices {
    let k = linear_coeffs(p);
    let (mu_g, mu_1, mu_2) = (p.mu_g, p.mu_1, p.mu_2);
    let dx = k.pitch_denominator();
    let dy = k.roll_denominator();

    let mut a = Matrix6::zeros();
    a[(0, 2)] = 1.0;
    a[(1, 3)] = 1.0;

    a[(2, 0)] = k.a3 * k.m33 / dx;
    a[(2, 2)] = mu_g * (k.m33 - k.a2) / dx;
    a[(2, 4)] = (mu_g * k.m33 - (mu_g + mu_1) * k.a2) / dx;

    a[(3, 1)] = k.a6 * k.m44 / dy;
    a[(3, 3)] = mu_g * (k.m44 - k.a5) / dy;
    a[(3, 5)] = (mu_g * k.m44 - (mu_g + mu_2) * k.a5) / dy;

    a[(4, 0)] = -k.a2 * k.a3 / dx;
    a[(4, 2)] = mu_g * (k.a1 - k.a2) / dx;
    a[(4, 4)] = (-mu_g * k.a2 + (mu_g + mu_1) * k.a1) / dx;

    a[(5, 1)] = -k.a5 * k.a6 / dy;
    a[(5, 3)] = mu_g * (k.a4 - k.a5) / dy;
    a[(5, 5)] = (-mu_g * k.a5 + (mu_g + mu_2) * k.a4) / dy;

    let mut b = Matrix6x2::zeros();
    b[(2, 0)] = k.a2 / dx;
    b[(3, 1)] = k.a5 / dy;
    b[(4, 0)] = -k.a1 / dx;
    b[(5, 1)] = -k.a4 / dy;

    StateMatrices {
        a,
        b,
        c: output_matrix(),
    }
}

/// First-order vector field of the full nonlinear model in the 6-state
/// coordinates (φ itself does not enter the dynamics).
pub fn state_derivative(
    x: &StateVector6,
    u: &ControlInput,
    p: &RobotParams,
    inc: &InclineConfig,
) -> Result<StateVector6, DynamicsError> {
    let s = GeneralizedState::new(
        Vector4::new(x[0], x[1], 0.0, 0.0),
        Vector4::new(x[2], x[3], x[4], x[5]),
    );
    let qdd = forward_dynamics(&s, u, p, inc, &Vector4::zeros())?;
    Ok(StateVector6::from_column_slice(&[x[2], x[3], qdd[0], qdd[1], qdd[2], qdd[3]]))
}

/// Central finite differences of the nonlinear dynamics about upright rest.
pub fn numeric_linearization(p: &RobotParams) -> Result<StateMatrices, DynamicsError> {
    let inc = InclineConfig::flat();
    let x0 = StateVector6::zeros();
    let u0 = ControlInput::zero();
    let h = FD_STEP;

    let mut a = Matrix6::zeros();
    for j in 0..6 {
        let mut xp = x0;
        let mut xm = x0;
        xp[j] += h;
        xm[j] -= h;
        let d = (state_derivative(&xp, &u0, p, &inc)? - state_derivative(&xm, &u0, p, &inc)?) / (2.0 * h);
        a.set_column(j, &d);
    }

    let mut b = Matrix6x2::zeros();
    for j in 0..2 {
        let mut up = u0;
        let mut um = u0;
        up.u[j] += h;
        um.u[j] -= h;
        let d = (state_derivative(&x0, &up, p, &inc)? - state_derivative(&x0, &um, p, &inc)?) / (2.0 * h);
        b.set_column(j, &d);
    }

    Ok(StateMatrices {
        a,
        b,
        c: output_matrix(),
    })
}

/// Eigenvalues of a square system matrix.
pub fn stability_spectrum(a: &Matrix6) -> Vec<Complex<f64>> {
    a.complex_eigenvalues().iter().copied().collect()
}

/// Eigenvalues of `A − B K`.
pub fn closed_loop_spectrum(sm: &StateMatrices, k: &SMatrix<f64, 2, 6>) -> Vec<Complex<f64>> {
    stability_spectrum(&(sm.a - sm.b * k))
}

/// Largest real part.
pub fn spectral_abscissa(eigs: &[Complex<f64>]) -> f64 {
    eigs.iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Comparison of two linearizations over the structural pattern of the
/// analytic matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearizationDiscrepancy {
    /// Max relative error over entries that are structurally nonzero.
    pub max_relative_nonzero: f64,
    /// Max absolute value of the other matrix over structurally zero entries.
    pub max_abs_structural_zero: f64,
}

/// Compare `numeric` against `analytic` entrywise. Entries that are exactly
/// zero in `analytic` are structural zeros.
pub fn compare(analytic: &StateMatrices, numeric: &StateMatrices) -> LinearizationDiscrepancy {
    let mut rel: f64 = 0.0;
    let mut zero: f64 = 0.0;
    let pairs = analytic
        .a
        .iter()
        .zip(numeric.a.iter())
        .chain(analytic.b.iter().zip(numeric.b.iter()));
    for (&x, &y) in pairs {
        if x == 0.0 {
            zero = zero.max(y.abs());
        } else {
            rel = rel.max(((x - y) / x).abs());
        }
    }
    LinearizationDiscrepancy {
        max_relative_nonzero: rel,
        max_abs_structural_zero: zero,
    }
}
