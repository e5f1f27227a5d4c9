//! Hamiltonian of the synchronization cost and the matrices the backward
//! sweep needs.
//!
//! With `e = y − x` and response dynamics `ẏ = A·y + f(y) + D(y)·Θ̂`,
//!
//! ```text
//! H = ½(eᵀQe + Θ̂ᵀRΘ̂) + λᵀ(A·y + f(y) + D(y)·Θ̂)
//! ```
//!
//! The cost is quadratic in `Θ̂`, so `H_Θ̂ = 0` has the closed form
//! `Θ̂ = −R⁻¹D(y)ᵀλ` and `H_Θ̂Θ̂ = R`.

use crate::error::{NrhcError, Result};
use crate::model::{response_rhs, Dynamics};
use crate::numerics::{all_finite, all_finite_matrix, solve_small, solve_small_matrix, symmetrize, Matrix, Vector};

/// Step used when a model has no analytic second derivatives.
pub const CURVATURE_FD_STEP: f64 = 1e-5;

/// Weights of the running cost `½(eᵀQe + Θ̂ᵀRΘ̂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights {
    q: Matrix,
    r: Matrix,
}

impl CostWeights {
    /// Fails unless both matrices are symmetric positive definite.
    pub fn new(q: Matrix, r: Matrix) -> Result<Self> {
        check_spd(&q, "weights.q")?;
        check_spd(&r, "weights.r")?;
        Ok(Self { q, r })
    }

    pub fn diagonal(q: &[f64], r: &[f64]) -> Result<Self> {
        Self::new(
            Matrix::from_diagonal(&Vector::from_column_slice(q)),
            Matrix::from_diagonal(&Vector::from_column_slice(r)),
        )
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn r(&self) -> &Matrix {
        &self.r
    }
}

fn check_spd(m: &Matrix, key: &str) -> Result<()> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(NrhcError::invalid(key, format!("must be a non-empty square matrix, got {}x{}", m.nrows(), m.ncols())));
    }
    if !all_finite_matrix(m) {
        return Err(NrhcError::invalid(key, "contains non-finite entries"));
    }
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 * m.amax().max(1.0) {
        return Err(NrhcError::invalid(key, format!("must be symmetric (asymmetry {asym:e})")));
    }
    if m.clone().cholesky().is_none() {
        return Err(NrhcError::invalid(key, "must be positive definite"));
    }
    Ok(())
}

pub fn running_cost(e: &Vector, theta_hat: &Vector, w: &CostWeights) -> f64 {
    0.5 * (e.dot(&(&w.q * e)) + theta_hat.dot(&(&w.r * theta_hat)))
}

/// Scalar Hamiltonian value.
pub fn hamiltonian(
    dynamics: &dyn Dynamics,
    y: &Vector,
    lambda: &Vector,
    theta_hat: &Vector,
    x_ref: &Vector,
    w: &CostWeights,
) -> f64 {
    let e = y - x_ref;
    running_cost(&e, theta_hat, w) + lambda.dot(&dynamics.rhs(y, theta_hat))
}

/// Minimizer of `H` over `Θ̂`: `Θ̂ = −R⁻¹D(y)ᵀλ`.
pub fn optimal_parameter(
    dynamics: &dyn Dynamics,
    y: &Vector,
    lambda: &Vector,
    w: &CostWeights,
) -> Result<Vector> {
    let dt_lambda = dynamics.regressor(y).transpose() * lambda;
    let theta = -solve_small(&w.r, &dt_lambda)?;
    if !all_finite(&theta) {
        return Err(NrhcError::NumericalBlowup("non-finite parameter estimate".into()));
    }
    debug_assert!(
        (&w.r * &theta + &dt_lambda).norm() <= 1e-10 * dt_lambda.norm().max(1.0),
        "H_theta not annihilated"
    );
    Ok(theta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianPartials {
    pub h_y: Vector,
    pub h_lambda: Vector,
    pub h_theta: Vector,
    pub h_yy: Matrix,
    /// `n × p`.
    pub h_ytheta: Matrix,
    pub h_thetatheta: Matrix,
}

impl HamiltonianPartials {
    /// First and second partials of `H` at one point, with `e = y − x_ref`.
    pub fn evaluate(
        dynamics: &dyn Dynamics,
        y: &Vector,
        lambda: &Vector,
        theta_hat: &Vector,
        x_ref: &Vector,
        w: &CostWeights,
    ) -> Result<Self> {
        let n = dynamics.state_dim();
        let p = dynamics.param_dim();
        if lambda.len() != n || x_ref.len() != n {
            return Err(NrhcError::DimensionMismatch {
                context: "hamiltonian partials",
                expected: format!("costate and reference of length {n}"),
                got: format!("{} and {}", lambda.len(), x_ref.len()),
            });
        }

        let h_lambda = response_rhs(dynamics, y, theta_hat)?;
        let e = y - x_ref;
        let jac = dynamics.state_jacobian(y, theta_hat);
        let h_y = &w.q * e + jac.transpose() * lambda;
        let h_theta = &w.r * theta_hat + dynamics.regressor(y).transpose() * lambda;

        let mut h_ytheta = Matrix::zeros(n, p);
        for (j, d_col) in dynamics.regressor_jacobian(y).iter().enumerate() {
            h_ytheta.set_column(j, &(d_col.transpose() * lambda));
        }

        let curvature = match dynamics.costate_curvature(y, lambda, theta_hat) {
            Some(c) => c,
            None => fd_costate_curvature(dynamics, y, lambda, theta_hat),
        };
        let h_yy = &w.q + curvature;

        let partials = Self {
            h_y,
            h_lambda,
            h_theta,
            h_yy,
            h_ytheta,
            h_thetatheta: w.r.clone(),
        };
        if !partials.is_finite() {
            return Err(NrhcError::NumericalBlowup(
                "non-finite Hamiltonian partials".into(),
            ));
        }
        Ok(partials)
    }

    fn is_finite(&self) -> bool {
        all_finite(&self.h_y)
            && all_finite(&self.h_lambda)
            && all_finite(&self.h_theta)
            && all_finite_matrix(&self.h_yy)
            && all_finite_matrix(&self.h_ytheta)
    }
}

/// Central differences of `J(y)ᵀλ`, where `J` is the state Jacobian. Costs
/// roughly five digits of accuracy against an analytic curvature.
pub fn fd_costate_curvature(
    dynamics: &dyn Dynamics,
    y: &Vector,
    lambda: &Vector,
    theta: &Vector,
) -> Matrix {
    let n = y.len();
    let mut out = Matrix::zeros(n, n);
    for k in 0..n {
        let mut up = y.clone();
        let mut down = y.clone();
        up[k] += CURVATURE_FD_STEP;
        down[k] -= CURVATURE_FD_STEP;
        let g_up = dynamics.state_jacobian(&up, theta).transpose() * lambda;
        let g_down = dynamics.state_jacobian(&down, theta).transpose() * lambda;
        out.set_column(k, &((g_up - g_down) / (2.0 * CURVATURE_FD_STEP)));
    }
    symmetrize(&out).0
}

/// Coefficients of the linearized horizon dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct Glk {
    pub g: Matrix,
    pub l: Matrix,
    pub k: Matrix,
}

/// `G = f_y − f_Θ̂ H_Θ̂Θ̂⁻¹ H_Θ̂y`, `L = f_Θ̂ H_Θ̂Θ̂⁻¹ f_Θ̂ᵀ`,
/// `K = H_yy − H_yΘ̂ H_Θ̂Θ̂⁻¹ H_Θ̂y`, with `f` the full response right-hand side.
pub fn glk_matrices(
    partials: &HamiltonianPartials,
    dynamics: &dyn Dynamics,
    y: &Vector,
    theta_hat: &Vector,
) -> Result<Glk> {
    let f_y = dynamics.state_jacobian(y, theta_hat);
    let f_theta = dynamics.regressor(y);
    let h_thetay = partials.h_ytheta.transpose();
    let h = &partials.h_thetatheta;

    let inv_h_thetay = solve_small_matrix(h, &h_thetay)?;
    let inv_f_theta_t = solve_small_matrix(h, &f_theta.transpose())?;

    let g = &f_y - &f_theta * &inv_h_thetay;
    // L and K are symmetric in exact arithmetic
    let (l, _) = symmetrize(&(&f_theta * inv_f_theta_t));
    let (k, _) = symmetrize(&(&partials.h_yy - &partials.h_ytheta * inv_h_thetay));
    Ok(Glk { g, l, k })
}
