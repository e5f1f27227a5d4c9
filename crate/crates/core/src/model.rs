//! Drive/response system models.
//!
//! A model is split into the structural dynamics `ẏ = A·y + f(y) + D(y)·Θ`
//! (the [`Dynamics`] trait, which is all the estimator ever sees) and the true
//! parameter trajectory of the drive system, which only the simulation harness
//! and the trace logger read.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{NrhcError, Result};
use crate::numerics::{all_finite, Matrix, Vector};

/// Structural dynamics shared by the drive and the response system.
pub trait Dynamics: Send + Sync {
    fn state_dim(&self) -> usize;
    fn param_dim(&self) -> usize;

    /// Linear part `A`.
    fn linear_part(&self) -> &Matrix;

    fn nonlinearity(&self, y: &Vector) -> Vector;

    fn nonlinearity_jacobian(&self, y: &Vector) -> Matrix;

    /// Regressor `D(y)`, an `n × p` matrix.
    fn regressor(&self, y: &Vector) -> Matrix;

    /// One `n × n` matrix per parameter: entry `(i, k)` of the `j`-th matrix
    /// is `∂D[i, j] / ∂y[k]`.
    fn regressor_jacobian(&self, y: &Vector) -> Vec<Matrix>;

    /// `Σᵢ λᵢ ∇²(fᵢ + Σⱼ Θⱼ·D[i, j])` evaluated at `y`.
    ///
    /// Returning `None` makes the Hamiltonian fall back to finite differences
    /// of the state Jacobian.
    fn costate_curvature(&self, _y: &Vector, _lambda: &Vector, _theta: &Vector) -> Option<Matrix> {
        None
    }

    /// `A·y + f(y) + D(y)·Θ`.
    fn rhs(&self, y: &Vector, theta: &Vector) -> Vector {
        self.linear_part() * y + self.nonlinearity(y) + self.regressor(y) * theta
    }

    /// `∂(A·y + f(y) + D(y)·Θ) / ∂y`.
    fn state_jacobian(&self, y: &Vector, theta: &Vector) -> Matrix {
        let mut jac = self.linear_part() + self.nonlinearity_jacobian(y);
        for (j, d_col) in self.regressor_jacobian(y).iter().enumerate() {
            jac += d_col * theta[j];
        }
        jac
    }
}

/// True parameter trajectory `Θ(t)` of a drive system.
#[derive(Clone)]
pub struct ParameterTrajectory {
    evaluator: Arc<dyn Fn(f64) -> Vector + Send + Sync>,
    pub description: String,
}

impl ParameterTrajectory {
    pub fn new(
        description: impl Into<String>,
        evaluator: impl Fn(f64) -> Vector + Send + Sync + 'static,
    ) -> Self {
        Self {
            evaluator: Arc::new(evaluator),
            description: description.into(),
        }
    }

    pub fn constant(value: Vector) -> Self {
        let description = format!("constant {:?}", value.as_slice());
        Self::new(description, move |_| value.clone())
    }

    pub fn at(&self, t: f64) -> Vector {
        (self.evaluator)(t)
    }
}

impl fmt::Debug for ParameterTrajectory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParameterTrajectory")
            .field("description", &self.description)
            .finish_non_exhaustive()
    }
}

/// A benchmark: structural dynamics plus the drive system's true parameters.
#[derive(Clone)]
pub struct SystemModel {
    pub name: String,
    pub dynamics: Arc<dyn Dynamics>,
    pub theta_true: ParameterTrajectory,
}

impl fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemModel")
            .field("name", &self.name)
            .field("n", &self.state_dim())
            .field("p", &self.param_dim())
            .field("theta_true", &self.theta_true)
            .finish()
    }
}

impl SystemModel {
    pub fn new(
        name: impl Into<String>,
        dynamics: Arc<dyn Dynamics>,
        theta_true: ParameterTrajectory,
    ) -> Self {
        Self {
            name: name.into(),
            dynamics,
            theta_true,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }

    pub fn param_dim(&self) -> usize {
        self.dynamics.param_dim()
    }

    /// Drive system right-hand side, evaluated at the true parameters.
    pub fn drive_rhs(&self, x: &Vector, t: f64) -> Result<Vector> {
        let theta = self.theta_true.at(t);
        finite_rhs(self.dynamics.rhs(x, &theta), "drive")
    }

    /// Response system right-hand side at the estimated parameters.
    pub fn response_rhs(&self, y: &Vector, theta_hat: &Vector) -> Result<Vector> {
        response_rhs(self.dynamics.as_ref(), y, theta_hat)
    }

    /// Same model with a different true parameter trajectory.
    pub fn with_theta_true(mut self, theta_true: ParameterTrajectory) -> Self {
        self.theta_true = theta_true;
        self
    }
}

pub fn response_rhs(dynamics: &dyn Dynamics, y: &Vector, theta_hat: &Vector) -> Result<Vector> {
    if y.len() != dynamics.state_dim() || theta_hat.len() != dynamics.param_dim() {
        return Err(NrhcError::DimensionMismatch {
            context: "response_rhs",
            expected: format!("n={}, p={}", dynamics.state_dim(), dynamics.param_dim()),
            got: format!("n={}, p={}", y.len(), theta_hat.len()),
        });
    }
    finite_rhs(dynamics.rhs(y, theta_hat), "response")
}

fn finite_rhs(v: Vector, which: &str) -> Result<Vector> {
    if all_finite(&v) {
        Ok(v)
    } else {
        Err(NrhcError::NumericalBlowup(format!(
            "non-finite {which} right-hand side"
        )))
    }
}

/// Lorenz system with the `σ` and `β` coefficients as unknown parameters.
#[derive(Debug, Clone)]
pub struct LorenzDynamics {
    a: Matrix,
    rho: f64,
}

impl Default for LorenzDynamics {
    fn default() -> Self {
        Self {
            a: Matrix::zeros(3, 3),
            rho: 28.0,
        }
    }
}

impl Dynamics for LorenzDynamics {
    fn state_dim(&self) -> usize {
        3
    }

    fn param_dim(&self) -> usize {
        2
    }

    fn linear_part(&self) -> &Matrix {
        &self.a
    }

    fn nonlinearity(&self, y: &Vector) -> Vector {
        Vector::from_column_slice(&[
            0.0,
            self.rho * y[0] - y[0] * y[2] - y[1],
            y[0] * y[1],
        ])
    }

    fn nonlinearity_jacobian(&self, y: &Vector) -> Matrix {
        #[rustfmt::skip]
        let jac = Matrix::from_row_slice(3, 3, &[
            0.0,              0.0,   0.0,
            self.rho - y[2], -1.0,  -y[0],
            y[1],             y[0],  0.0,
        ]);
        jac
    }

    fn regressor(&self, y: &Vector) -> Matrix {
        #[rustfmt::skip]
        let d = Matrix::from_row_slice(3, 2, &[
            y[1] - y[0], 0.0,
            0.0,         0.0,
            0.0,        -y[2],
        ]);
        d
    }

    fn regressor_jacobian(&self, _y: &Vector) -> Vec<Matrix> {
        let mut d1 = Matrix::zeros(3, 3);
        d1[(0, 0)] = -1.0;
        d1[(0, 1)] = 1.0;
        let mut d2 = Matrix::zeros(3, 3);
        d2[(2, 2)] = -1.0;
        vec![d1, d2]
    }

    fn costate_curvature(&self, _y: &Vector, lambda: &Vector, _theta: &Vector) -> Option<Matrix> {
        // f₂ contributes −y₁y₃, f₃ contributes y₁y₂; D is linear in y
        let mut h = Matrix::zeros(3, 3);
        h[(0, 2)] = -lambda[1];
        h[(2, 0)] = -lambda[1];
        h[(0, 1)] = lambda[2];
        h[(1, 0)] = lambda[2];
        Some(h)
    }
}

/// `Θ(t) = (10·sin(t)/(t+1), 8/3)`.
pub fn lorenz_theta(t: f64) -> Vector {
    Vector::from_column_slice(&[10.0 * t.sin() / (t + 1.0), 8.0 / 3.0])
}

pub fn lorenz_model() -> SystemModel {
    SystemModel::new(
        "lorenz",
        Arc::new(LorenzDynamics::default()),
        ParameterTrajectory::new("(10 sin(t)/(t+1), 8/3)", lorenz_theta),
    )
}

/// Two-state system `ẏ₁ = −y₂² − 2y₁ + θ₁`, `ẏ₂ = −2y₂ + θ₂·y₁`.
#[derive(Debug, Clone)]
pub struct GuayDynamics {
    a: Matrix,
}

impl Default for GuayDynamics {
    fn default() -> Self {
        Self {
            a: Matrix::from_diagonal_element(2, 2, -2.0),
        }
    }
}

impl Dynamics for GuayDynamics {
    fn state_dim(&self) -> usize {
        2
    }

    fn param_dim(&self) -> usize {
        2
    }

    fn linear_part(&self) -> &Matrix {
        &self.a
    }

    fn nonlinearity(&self, y: &Vector) -> Vector {
        Vector::from_column_slice(&[-y[1] * y[1], 0.0])
    }

    fn nonlinearity_jacobian(&self, y: &Vector) -> Matrix {
        Matrix::from_row_slice(2, 2, &[0.0, -2.0 * y[1], 0.0, 0.0])
    }

    fn regressor(&self, y: &Vector) -> Matrix {
        Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, y[0]])
    }

    fn regressor_jacobian(&self, _y: &Vector) -> Vec<Matrix> {
        let d1 = Matrix::zeros(2, 2);
        let mut d2 = Matrix::zeros(2, 2);
        d2[(1, 0)] = 1.0;
        vec![d1, d2]
    }

    fn costate_curvature(&self, _y: &Vector, lambda: &Vector, _theta: &Vector) -> Option<Matrix> {
        let mut h = Matrix::zeros(2, 2);
        h[(1, 1)] = -2.0 * lambda[0];
        Some(h)
    }
}

/// Breakpoints of the piecewise `θ₁(t)`.
pub const GUAY_BREAK_1: f64 = 6.0 * PI;
pub const GUAY_BREAK_2: f64 = 14.0 * PI + PI / 12.0;

pub fn guay_theta1(t: f64) -> f64 {
    let offset = 2.0 - (PI / 3.0).sin();
    if t <= GUAY_BREAK_1 {
        2.0 + t.sin()
    } else if t <= GUAY_BREAK_2 {
        offset + (2.0 * t + PI / 3.0).sin()
    } else {
        offset + (PI / 2.0).sin()
    }
}

pub fn guay_theta(t: f64) -> Vector {
    Vector::from_column_slice(&[guay_theta1(t), 3.0 * (0.1 * PI * t).cos()])
}

pub fn guay_model() -> SystemModel {
    SystemModel::new(
        "guay",
        Arc::new(GuayDynamics::default()),
        ParameterTrajectory::new("piecewise θ₁(t), θ₂(t) = 3cos(0.1πt)", guay_theta),
    )
}

type ModelFactory = Arc<dyn Fn() -> SystemModel + Send + Sync>;

/// Name → model constructor lookup used by configs and the CLI.
#[derive(Clone)]
pub struct ModelRegistry {
    factories: BTreeMap<String, ModelFactory>,
}

impl Default for ModelRegistry {
    fn default() -> Self {
        let mut registry = Self::empty();
        registry.register("lorenz", lorenz_model);
        registry.register("guay", guay_model);
        registry
    }
}

impl ModelRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn register(
        &mut self,
        name: impl Into<String>,
        factory: impl Fn() -> SystemModel + Send + Sync + 'static,
    ) {
        self.factories.insert(name.into(), Arc::new(factory));
    }

    pub fn get(&self, name: &str) -> Result<SystemModel> {
        self.factories
            .get(name)
            .map(|f| f())
            .ok_or_else(|| NrhcError::UnknownModel(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }
}
