//! Small dense linear algebra and fixed-step integrators.
//!
//! Vectors and matrices are nalgebra's dynamically sized types; every state,
//! costate and weighting matrix in this crate is at most a handful of rows, so
//! nothing here is tuned for size.

use nalgebra::{DMatrix, DVector};

use crate::error::{NrhcError, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Condition-number cap above which a linear solve is treated as singular.
pub const DEFAULT_CONDITION_CAP: f64 = 1e12;

pub fn all_finite(v: &Vector) -> bool {
    v.iter().all(|x| x.is_finite())
}

pub fn all_finite_matrix(m: &Matrix) -> bool {
    m.iter().all(|x| x.is_finite())
}

pub fn mat_vec(m: &Matrix, v: &Vector) -> Result<Vector> {
    if m.ncols() != v.len() {
        return Err(NrhcError::DimensionMismatch {
            context: "mat_vec",
            expected: format!("vector of length {}", m.ncols()),
            got: format!("length {}", v.len()),
        });
    }
    Ok(m * v)
}

/// Ratio of extreme singular values; infinite for a singular matrix.
pub fn condition_estimate(m: &Matrix) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves `m · v = b` with an LU factorization, refusing matrices whose
/// condition estimate exceeds `DEFAULT_CONDITION_CAP`.
pub fn solve_small(m: &Matrix, b: &Vector) -> Result<Vector> {
    solve_small_with_cap(m, b, DEFAULT_CONDITION_CAP)
}

pub fn solve_small_with_cap(m: &Matrix, b: &Vector, cap: f64) -> Result<Vector> {
    check_square_system(m, b.len(), "solve_small")?;
    let lu = factor(m, cap)?;
    lu.solve(b).ok_or(NrhcError::SingularHessian {
        condition: f64::INFINITY,
        cap,
    })
}

/// Solves `m · X = b` column by column.
pub fn solve_small_matrix(m: &Matrix, b: &Matrix) -> Result<Matrix> {
    check_square_system(m, b.nrows(), "solve_small_matrix")?;
    let lu = factor(m, DEFAULT_CONDITION_CAP)?;
    lu.solve(b).ok_or(NrhcError::SingularHessian {
        condition: f64::INFINITY,
        cap: DEFAULT_CONDITION_CAP,
    })
}

fn check_square_system(m: &Matrix, rhs_rows: usize, context: &'static str) -> Result<()> {
    if !m.is_square() || m.nrows() != rhs_rows {
        return Err(NrhcError::DimensionMismatch {
            context,
            expected: format!("square matrix matching {rhs_rows} right-hand-side rows"),
            got: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    Ok(())
}

fn factor(m: &Matrix, cap: f64) -> Result<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    let condition = condition_estimate(m);
    if !(condition <= cap) {
        return Err(NrhcError::SingularHessian { condition, cap });
    }
    Ok(m.clone().lu())
}

fn checked(v: Vector, what: &str, t: f64) -> Result<Vector> {
    if all_finite(&v) {
        Ok(v)
    } else {
        Err(NrhcError::NumericalBlowup(format!(
            "non-finite {what} at t={t}"
        )))
    }
}

pub fn euler_step<F>(mut f: F, state: &Vector, t: f64, h: f64) -> Result<Vector>
where
    F: FnMut(&Vector, f64) -> Result<Vector>,
{
    debug_assert!(h > 0.0, "step size must be positive");
    let k = checked(f(state, t)?, "derivative", t)?;
    Ok(state + k * h)
}

/// Classical fourth-order Runge-Kutta step.
pub fn rk4_step<F>(mut f: F, state: &Vector, t: f64, h: f64) -> Result<Vector>
where
    F: FnMut(&Vector, f64) -> Result<Vector>,
{
    debug_assert!(h > 0.0, "step size must be positive");
    let half = 0.5 * h;
    let k1 = checked(f(state, t)?, "derivative", t)?;
    let k2 = checked(f(&(state + &k1 * half), t + half)?, "derivative", t + half)?;
    let k3 = checked(f(&(state + &k2 * half), t + half)?, "derivative", t + half)?;
    let k4 = checked(f(&(state + &k3 * h), t + h)?, "derivative", t + h)?;
    Ok(state + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// `(m + mᵀ) / 2`, together with the largest absolute asymmetry seen before
/// the correction.
pub fn symmetrize(m: &Matrix) -> (Matrix, f64) {
    let mt = m.transpose();
    let drift = (m - &mt).amax();
    ((m + mt) * 0.5, drift)
}
