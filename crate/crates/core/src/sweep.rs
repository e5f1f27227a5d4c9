//! One horizon solve: the Euler-Lagrange equations forward along τ, then the
//! Riccati pair `(S, c)` backward from the terminal conditions.
//!
//! Both passes use explicit Euler on the same `N + 1` nodes, `dτ = T / N`.

use crate::error::{NrhcError, Result};
use crate::hamiltonian::{glk_matrices, optimal_parameter, CostWeights, HamiltonianPartials};
use crate::model::Dynamics;
use crate::numerics::{all_finite, all_finite_matrix, symmetrize, Matrix, Vector};

/// Largest asymmetry tolerated in a raw Riccati update before it is
/// symmetrized, scaled by `max(1, |S|∞)`.
pub const SYMMETRY_TOLERANCE: f64 = 5e-12;

/// How the drive state evolves along the horizon.
pub enum DriveReference<'a> {
    /// Freeze the measured sample for the whole horizon.
    Hold,
    /// Euler-integrate a drive model from the measured sample, starting at
    /// real time `t0`.
    Predict {
        rhs: &'a dyn Fn(&Vector, f64) -> Result<Vector>,
        t0: f64,
    },
}

#[derive(Debug, Clone)]
pub struct HorizonGrid {
    /// Number of τ intervals; zero for an empty horizon.
    pub intervals: usize,
    pub dtau: f64,
    pub y_nodes: Vec<Vector>,
    pub lambda_nodes: Vec<Vector>,
    pub theta_nodes: Vec<Vector>,
    pub x_nodes: Vec<Vector>,
    pub partials: Vec<HamiltonianPartials>,
    /// Filled by [`backward_sweep`].
    pub s_nodes: Vec<Matrix>,
    pub c_nodes: Vec<Vector>,
}

impl HorizonGrid {
    pub fn len(&self) -> usize {
        self.y_nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y_nodes.is_empty()
    }

    /// Terminal costate `λ*(T, t)`, the continuation residual.
    pub fn terminal_costate(&self) -> &Vector {
        self.lambda_nodes.last().expect("grid has at least one node")
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Residual `F = λ*(T, t)`.
    pub f: Vector,
    /// `c(0, t)`.
    pub c0: Vector,
    /// `H_yᵀ` at τ = 0.
    pub h_y0: Vector,
    /// Largest raw asymmetry of any Riccati update.
    pub max_symmetry_drift: f64,
    pub grid: HorizonGrid,
}

#[allow(clippy::too_many_arguments)]
pub fn forward_sweep(
    dynamics: &dyn Dynamics,
    w: &CostWeights,
    y_t: &Vector,
    lambda_t: &Vector,
    x_t: &Vector,
    horizon: f64,
    intervals: usize,
    drive: &DriveReference<'_>,
) -> Result<HorizonGrid> {
    if !(horizon >= 0.0) {
        return Err(NrhcError::invalid("horizon", format!("must be non-negative, got {horizon}")));
    }
    if intervals == 0 {
        return Err(NrhcError::invalid("nodes", "need at least one τ interval"));
    }
    let (intervals, dtau) = if horizon == 0.0 {
        (0, 0.0)
    } else {
        (intervals, horizon / intervals as f64)
    };
    let len = intervals + 1;

    let mut grid = HorizonGrid {
        intervals,
        dtau,
        y_nodes: Vec::with_capacity(len),
        lambda_nodes: Vec::with_capacity(len),
        theta_nodes: Vec::with_capacity(len),
        x_nodes: Vec::with_capacity(len),
        partials: Vec::with_capacity(len),
        s_nodes: Vec::new(),
        c_nodes: Vec::new(),
    };

    let mut y = y_t.clone();
    let mut lambda = lambda_t.clone();
    let mut x = x_t.clone();
    for k in 0..len {
        let theta = optimal_parameter(dynamics, &y, &lambda, w)?;
        let partials = HamiltonianPartials::evaluate(dynamics, &y, &lambda, &theta, &x, w)
            .map_err(|e| at_node(e, k))?;

        let next = if k < intervals {
            let y_next = &y + &partials.h_lambda * dtau;
            let lambda_next = &lambda - &partials.h_y * dtau;
            let x_next = match drive {
                DriveReference::Hold => x.clone(),
                DriveReference::Predict { rhs, t0 } => &x + rhs(&x, t0 + k as f64 * dtau)? * dtau,
            };
            if !(all_finite(&y_next) && all_finite(&lambda_next) && all_finite(&x_next)) {
                return Err(NrhcError::NumericalBlowup(format!(
                    "forward sweep diverged at node {}",
                    k + 1
                )));
            }
            Some((y_next, lambda_next, x_next))
        } else {
            None
        };

        grid.y_nodes.push(y.clone());
        grid.lambda_nodes.push(lambda.clone());
        grid.theta_nodes.push(theta);
        grid.x_nodes.push(x.clone());
        grid.partials.push(partials);

        if let Some((y_next, lambda_next, x_next)) = next {
            y = y_next;
            lambda = lambda_next;
            x = x_next;
        }
    }
    Ok(grid)
}

fn at_node(err: NrhcError, k: usize) -> NrhcError {
    match err {
        NrhcError::NumericalBlowup(msg) => NrhcError::NumericalBlowup(format!("{msg} at node {k}")),
        other => other,
    }
}

/// Integrates `S_τ = −GᵀS − SG + SLS − K` and `c_τ = −(Gᵀ − SL)c` backward
/// from `S(T) = 0`, `c(T) = H_yᵀ(T)(1 + dT/dt) − A_s·F`.
pub fn backward_sweep(
    mut grid: HorizonGrid,
    dynamics: &dyn Dynamics,
    f: &Vector,
    a_s: &Matrix,
    horizon_rate: f64,
) -> Result<SweepResult> {
    let last = grid.intervals;
    let n = f.len();
    let dtau = grid.dtau;

    let mut s_nodes = vec![Matrix::zeros(n, n); last + 1];
    let mut c_nodes = vec![Vector::zeros(n); last + 1];
    c_nodes[last] = &grid.partials[last].h_y * (1.0 + horizon_rate) - a_s * f;

    let mut max_drift = 0.0f64;
    for k in (0..last).rev() {
        let p = &grid.partials[k + 1];
        let glk = glk_matrices(p, dynamics, &grid.y_nodes[k + 1], &grid.theta_nodes[k + 1])?;
        let s = &s_nodes[k + 1];
        let c = &c_nodes[k + 1];

        let gt = glk.g.transpose();
        let sl = s * &glk.l;
        let s_rate = &gt * s + s * &glk.g - &sl * s + &glk.k;
        let raw = s + s_rate * dtau;
        let c_next = c + (&gt - &sl) * c * dtau;

        if !(all_finite_matrix(&raw) && all_finite(&c_next)) {
            return Err(NrhcError::NumericalBlowup(format!(
                "Riccati recursion diverged at node {k}"
            )));
        }
        let (sym, drift) = symmetrize(&raw);
        if drift > SYMMETRY_TOLERANCE * sym.amax().max(1.0) {
            return Err(NrhcError::NumericalBlowup(format!(
                "Riccati symmetry drift {drift:e} at node {k}"
            )));
        }
        max_drift = max_drift.max(drift);
        s_nodes[k] = sym;
        c_nodes[k] = c_next;
    }

    let c0 = c_nodes[0].clone();
    let h_y0 = grid.partials[0].h_y.clone();
    grid.s_nodes = s_nodes;
    grid.c_nodes = c_nodes;
    Ok(SweepResult {
        f: f.clone(),
        c0,
        h_y0,
        max_symmetry_drift: max_drift,
        grid,
    })
}

/// Forward then backward sweep at one instant.
#[allow(clippy::too_many_arguments)]
pub fn solve_horizon(
    dynamics: &dyn Dynamics,
    w: &CostWeights,
    y_t: &Vector,
    lambda_t: &Vector,
    x_t: &Vector,
    horizon: f64,
    horizon_rate: f64,
    intervals: usize,
    a_s: &Matrix,
    drive: &DriveReference<'_>,
) -> Result<SweepResult> {
    let grid = forward_sweep(dynamics, w, y_t, lambda_t, x_t, horizon, intervals, drive)?;
    let f = grid.terminal_costate().clone();
    backward_sweep(grid, dynamics, &f, a_s, horizon_rate)
}
