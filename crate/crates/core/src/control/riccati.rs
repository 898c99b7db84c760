//! Continuous algebraic Riccati equation
//!
//! `AᵀP + PA − P B R⁻¹ Bᵀ P + Q = 0`
//!
//! solved by Newton-Kleinman iteration. The initial stabilizing gain comes
//! from the Bass construction, which needs nothing beyond a Lyapunov solve.

use nalgebra::{Complex, DMatrix};

use crate::error::ControlError;

pub const MAX_ITERATIONS: usize = 100;
/// Iteration stops once the residual drops below this.
pub const TARGET_RESIDUAL: f64 = 1e-10;
/// A solution is accepted if the final residual is below this, or if the
/// residual relative to the size of the terms is below [`ACCEPT_RELATIVE`].
pub const ACCEPT_RESIDUAL: f64 = 1e-8;
pub const ACCEPT_RELATIVE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct CareSolution {
    pub p: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub iterations: usize,
    /// Frobenius norm of the Riccati residual at `p`.
    pub residual: f64,
    /// `residual` over the summed norms of the equation's terms.
    pub relative_residual: f64,
}

/// Solve `M X + X Mᵀ = W` by Bartels-Stewart on the complex Schur form
/// `M = U T Uᴴ`, which reduces the equation to triangular substitution.
pub fn solve_lyapunov(m: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>, ControlError> {
    let n = m.nrows();
    let mc: DMatrix<Complex<f64>> = m.map(|v| Complex::new(v, 0.0));
    let wc: DMatrix<Complex<f64>> = w.map(|v| Complex::new(v, 0.0));
    let (u, t) = mc.schur().unpack();
    let wt = u.adjoint() * wc * &u;

    let scale = t.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let mut y = DMatrix::<Complex<f64>>::zeros(n, n);
    for i in (0..n).rev() {
        for j in (0..n).rev() {
            let mut acc = wt[(i, j)];
            for k in i + 1..n {
                acc -= t[(i, k)] * y[(k, j)];
            }
            for k in j + 1..n {
                acc -= y[(i, k)] * t[(j, k)].conj();
            }
            let d = t[(i, i)] + t[(j, j)].conj();
            if d.norm() <= 1e-14 * scale {
                return Err(ControlError::SingularLyapunov);
            }
            y[(i, j)] = acc / d;
        }
    }
    let x = (&u * y * u.adjoint()).map(|z| z.re);
    Ok(symmetrize(&x))
}

/// Same equation through the `n² × n²` Kronecker system. Slower and less
/// accurate for stiff `M`; kept as a cross-check.
pub fn solve_lyapunov_kronecker(m: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>, ControlError> {
    let n = m.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let op = eye.kronecker(m) + m.kronecker(&eye);
    let rhs = DMatrix::from_column_slice(n * n, 1, w.as_slice());
    let sol = op.lu().solve(&rhs).ok_or(ControlError::SingularLyapunov)?;
    Ok(symmetrize(&DMatrix::from_column_slice(n, n, sol.as_slice())))
}

fn symmetrize(x: &DMatrix<f64>) -> DMatrix<f64> {
    (x + x.transpose()) * 0.5
}

pub fn riccati_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r_inv: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> DMatrix<f64> {
    a.transpose() * p + p * a - p * b * r_inv * b.transpose() * p + q
}

/// Rank of the controllability pencil, via the PBH test: `(A, B)` is
/// controllable iff `[A − λI, B]` has full row rank at every eigenvalue λ.
/// Returns the smallest rank found.
pub fn controllability_rank(a: &DMatrix<f64>, b: &DMatrix<f64>) -> usize {
    let n = a.nrows();
    let m = b.ncols();
    // Rank is invariant to scaling B; match it to A so one tolerance fits both.
    let scale = if b.norm() > 0.0 { a.norm().max(1.0) / b.norm() } else { 1.0 };
    let mut min_rank = n;
    for lambda in a.complex_eigenvalues().iter() {
        let mut pencil = DMatrix::<Complex<f64>>::zeros(n, n + m);
        for i in 0..n {
            for j in 0..n {
                pencil[(i, j)] = Complex::new(a[(i, j)], 0.0);
            }
            pencil[(i, i)] -= lambda;
            for j in 0..m {
                pencil[(i, n + j)] = Complex::new(b[(i, j)] * scale, 0.0);
            }
        }
        let sv = pencil.singular_values();
        let tol = 1e-10 * sv.max().max(1.0);
        min_rank = min_rank.min(sv.iter().filter(|&&s| s > tol).count());
    }
    min_rank
}

/// Bass stabilizing gain: with β above the spectral radius,
/// `(A + βI) Z + Z (A + βI)ᵀ = 2 B Bᵀ` has `Z ≻ 0` and `K = Bᵀ Z⁻¹`
/// places every closed-loop eigenvalue left of −β.
pub fn bass_gain(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>, ControlError> {
    let n = a.nrows();
    let beta = a.norm() + 1.0;
    let shifted = a + DMatrix::<f64>::identity(n, n) * beta;
    let z = solve_lyapunov(&shifted, &(b * b.transpose() * 2.0))?;
    let z_inv = z.try_inverse().ok_or(ControlError::SingularLyapunov)?;
    Ok(b.transpose() * z_inv)
}

fn check_weights(q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<(), ControlError> {
    if q.iter().chain(r.iter()).any(|v| !v.is_finite()) {
        return Err(ControlError::InvalidWeights("non-finite entry"));
    }
    if (q - q.transpose()).norm() > 1e-12 * q.norm().max(1.0) {
        return Err(ControlError::InvalidWeights("Q not symmetric"));
    }
    if (r - r.transpose()).norm() > 1e-12 * r.norm().max(1.0) {
        return Err(ControlError::InvalidWeights("R not symmetric"));
    }
    if q.symmetric_eigenvalues().min() < -1e-12 * q.norm().max(1.0) {
        return Err(ControlError::InvalidWeights("Q not positive semidefinite"));
    }
    if r.symmetric_eigenvalues().min() <= 0.0 {
        return Err(ControlError::InvalidWeights("R not positive definite"));
    }
    Ok(())
}

pub fn solve_care(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<CareSolution, ControlError> {
    let n = a.nrows();
    check_weights(q, r)?;
    let rank = controllability_rank(a, b);
    if rank < n {
        return Err(ControlError::Uncontrollable { rank, n });
    }
    let r_inv = r.clone().try_inverse().ok_or(ControlError::InvalidWeights("R singular"))?;

    // First Kleinman step from the Bass gain, then Newton steps in defect
    // form: the Lyapunov solve only has to resolve the small correction.
    let k0 = bass_gain(a, b)?;
    let a0 = a - b * &k0;
    let mut p = solve_lyapunov(&a0.transpose(), &-(q + k0.transpose() * r * &k0))?;
    let mut res = riccati_residual(a, b, q, &r_inv, &p);
    let mut best = (p.clone(), res.norm());
    let mut stalled = 0;
    let mut iterations = 1;

    while iterations < MAX_ITERATIONS && best.1 >= TARGET_RESIDUAL && stalled < 3 {
        iterations += 1;
        let k = &r_inv * b.transpose() * &p;
        let ak = a - b * &k;
        let dp = solve_lyapunov(&ak.transpose(), &-&res)?;
        p = symmetrize(&(&p + dp));
        res = riccati_residual(a, b, q, &r_inv, &p);
        let norm = res.norm();
        if !norm.is_finite() {
            break;
        }
        if norm < best.1 {
            best = (p.clone(), norm);
            stalled = 0;
        } else {
            stalled += 1;
        }
    }

    let (p, residual) = best;
    let k = &r_inv * b.transpose() * &p;
    let terms = 2.0 * (a.transpose() * &p).norm() + (k.transpose() * r * &k).norm() + q.norm();
    let relative_residual = residual / terms.max(f64::MIN_POSITIVE);
    if !(residual < ACCEPT_RESIDUAL || relative_residual < ACCEPT_RELATIVE) {
        return Err(ControlError::NotConverged { iterations, residual });
    }
    Ok(CareSolution {
        p,
        k,
        iterations,
        residual,
        relative_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn scalar_care_closed_form() {
        // a p + p a − p² b²/r + q = 0 → p = r(a + sqrt(a² + b² q / r)) / b²
        let (a, b, q, r) = (1.5, 2.0, 3.0, 0.5);
        let sol = solve_care(
            &DMatrix::from_element(1, 1, a),
            &DMatrix::from_element(1, 1, b),
            &DMatrix::from_element(1, 1, q),
            &DMatrix::from_element(1, 1, r),
        )
        .unwrap();
        let p = r * (a + (a * a + b * b * q / r).sqrt()) / (b * b);
        assert_relative_eq!(sol.p[(0, 0)], p, max_relative = 1e-12);
    }

    #[test]
    fn double_integrator_closed_form() {
        // Q = I, R = 1: P = [[√3, 1], [1, √3]], K = [1, √3].
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let sol = solve_care(&a, &b, &DMatrix::identity(2, 2), &DMatrix::identity(1, 1)).unwrap();
        let s3 = 3f64.sqrt();
        assert_relative_eq!(sol.p, DMatrix::from_row_slice(2, 2, &[s3, 1.0, 1.0, s3]), max_relative = 1e-10);
        assert_relative_eq!(sol.k, DMatrix::from_row_slice(1, 2, &[1.0, s3]), max_relative = 1e-10);
    }

    #[test]
    fn lyapunov_satisfies_equation() {
        let m = DMatrix::from_row_slice(3, 3, &[-1.0, 2.0, 0.0, 0.0, -3.0, 1.0, 0.5, 0.0, -2.0]);
        let w = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.2, 2.0, 0.1, 0.0, 0.1, 3.0]);
        let x = solve_lyapunov(&m, &w).unwrap();
        assert!((&m * &x + &x * m.transpose() - &w).norm() < 1e-12);
        let xk = solve_lyapunov_kronecker(&m, &w).unwrap();
        assert!((x - xk).norm() < 1e-12);
    }

    #[test]
    fn lyapunov_complex_spectrum() {
        // Rotation-dominated M has a complex pair; X must still come out real
        // and satisfy the equation.
        let m = DMatrix::from_row_slice(3, 3, &[-0.5, 4.0, 0.0, -4.0, -0.5, 0.0, 1.0, 0.0, -100.0]);
        let w = DMatrix::identity(3, 3);
        let x = solve_lyapunov(&m, &w).unwrap();
        assert!((&m * &x + &x * m.transpose() - &w).norm() < 1e-12);
    }

    #[test]
    fn singular_lyapunov_detected() {
        // Eigenvalues 1 and −1 sum to zero.
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert_eq!(
            solve_lyapunov(&m, &DMatrix::identity(2, 2)).unwrap_err(),
            ControlError::SingularLyapunov
        );
    }

    #[test]
    fn bass_gain_stabilizes() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 20.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let k = bass_gain(&a, &b).unwrap();
        let eig = (&a - &b * k).complex_eigenvalues();
        assert!(eig.iter().all(|e| e.re < 0.0), "{eig}");
    }

    #[test]
    fn uncontrollable_reported() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        assert_eq!(controllability_rank(&a, &b), 1);
        let e = solve_care(&a, &b, &DMatrix::identity(2, 2), &DMatrix::identity(1, 1)).unwrap_err();
        assert_eq!(e, ControlError::Uncontrollable { rank: 1, n: 2 });
    }

    #[test]
    fn bad_weights_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let q = DMatrix::identity(2, 2);
        assert!(matches!(
            solve_care(&a, &b, &q, &DMatrix::from_element(1, 1, 0.0)),
            Err(ControlError::InvalidWeights(_))
        ));
        assert!(matches!(
            solve_care(&a, &b, &(-q), &DMatrix::identity(1, 1)),
            Err(ControlError::InvalidWeights(_))
        ));
    }
}
