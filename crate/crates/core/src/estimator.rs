//! Real-time continuation of the costate and the resulting parameter
//! estimate.
//!
//! Each step of length `dt` solves one horizon, advances the costate with
//! `dλ/dt = −H_yᵀ + c(0, t)`, recomputes `Θ̂` from the new costate, and moves
//! the drive and response systems forward with RK4.

use serde::{Deserialize, Serialize};

use crate::error::{NrhcError, Result};
use crate::hamiltonian::{optimal_parameter, running_cost, CostWeights};
use crate::model::{ModelRegistry, SystemModel};
use crate::numerics::{all_finite, rk4_step, Matrix, Vector};
use crate::sweep::{solve_horizon, DriveReference};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriveMode {
    /// Hold the measured drive sample across the horizon.
    #[default]
    Hold,
    /// Integrate the drive model across the horizon. This reads the drive's
    /// true parameters and is meant for studies, not estimation.
    Predict,
}

impl std::str::FromStr for DriveMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "hold" => Ok(DriveMode::Hold),
            "predict" => Ok(DriveMode::Predict),
            other => Err(format!("unknown drive mode `{other}` (expected hold or predict)")),
        }
    }
}

impl std::fmt::Display for DriveMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DriveMode::Hold => "hold",
            DriveMode::Predict => "predict",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub model_name: String,
    pub weights: CostWeights,
    /// Final horizon length `T_f`.
    pub horizon_final: f64,
    /// Horizon growth rate `α`.
    pub horizon_rate: f64,
    /// `A_s`, the residual decay matrix.
    pub stabilization: Matrix,
    pub dt: f64,
    /// τ intervals per horizon.
    pub nodes: usize,
    pub t_end: f64,
    pub x0: Vector,
    pub y0: Vector,
    pub lambda0: Vector,
    pub drive_mode: DriveMode,
}

impl EstimatorConfig {
    /// Checks scalar ranges, dimensions against `model`, and that `A_s` has
    /// eigenvalues with strictly positive real part.
    pub fn validate(&self, model: &SystemModel) -> Result<()> {
        positive("dt", self.dt)?;
        positive("horizon.final", self.horizon_final)?;
        positive("horizon.rate", self.horizon_rate)?;
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(NrhcError::invalid("t_end", format!("must be finite and non-negative, got {}", self.t_end)));
        }
        if self.nodes == 0 {
            return Err(NrhcError::invalid("nodes", "must be at least 1"));
        }

        let n = model.state_dim();
        let p = model.param_dim();
        check_len("x0", &self.x0, n)?;
        check_len("y0", &self.y0, n)?;
        check_len("lambda0", &self.lambda0, n)?;
        if self.weights.q().nrows() != n {
            return Err(NrhcError::invalid("weights.q", format!("must be {n}x{n} for model `{}`", model.name)));
        }
        if self.weights.r().nrows() != p {
            return Err(NrhcError::invalid("weights.r", format!("must be {p}x{p} for model `{}`", model.name)));
        }

        let a_s = &self.stabilization;
        if a_s.nrows() != n || a_s.ncols() != n {
            return Err(NrhcError::invalid("a_s", format!("must be {n}x{n}, got {}x{}", a_s.nrows(), a_s.ncols())));
        }
        if !a_s.iter().all(|v| v.is_finite()) {
            return Err(NrhcError::invalid("a_s", "contains non-finite entries"));
        }
        let min_re = a_s
            .complex_eigenvalues()
            .iter()
            .map(|z| z.re)
            .fold(f64::INFINITY, f64::min);
        if !(min_re > 0.0) {
            return Err(NrhcError::invalid(
                "a_s",
                format!("eigenvalues must have positive real part (smallest {min_re})"),
            ));
        }
        Ok(())
    }

    pub fn step_count(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

fn positive(key: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(NrhcError::invalid(key, format!("must be positive, got {value}")))
    }
}

fn check_len(key: &str, v: &Vector, n: usize) -> Result<()> {
    if v.len() != n {
        return Err(NrhcError::invalid(key, format!("expected {n} entries, got {}", v.len())));
    }
    if !all_finite(v) {
        return Err(NrhcError::invalid(key, "contains non-finite entries"));
    }
    Ok(())
}

/// `T(t) = T_f(1 − e^{−αt})` and its time derivative.
pub fn horizon_length(t: f64, horizon_final: f64, rate: f64) -> (f64, f64) {
    let decay = (-rate * t).exp();
    (horizon_final * (1.0 - decay), horizon_final * rate * decay)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    /// Steps taken so far; `t = step · dt`.
    pub step: usize,
    pub t: f64,
    pub x: Vector,
    pub y: Vector,
    pub lambda: Vector,
    /// `‖λ*(T, t)‖` from the most recent horizon solve.
    pub f_norm: f64,
    pub theta_hat: Vector,
}

impl EstimatorState {
    pub fn initial(cfg: &EstimatorConfig, model: &SystemModel) -> Result<Self> {
        let theta_hat = optimal_parameter(model.dynamics.as_ref(), &cfg.y0, &cfg.lambda0, &cfg.weights)?;
        Ok(Self {
            step: 0,
            t: 0.0,
            x: cfg.x0.clone(),
            y: cfg.y0.clone(),
            lambda: cfg.lambda0.clone(),
            f_norm: cfg.lambda0.norm(),
            theta_hat,
        })
    }
}

/// One row of output, describing the state at the end of a step.
///
/// `theta_hat` is the estimate that was applied across the step and
/// `f_norm` the residual of the horizon solved at its start.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub x: Vector,
    pub y: Vector,
    pub e: Vector,
    pub theta_hat: Vector,
    pub theta_true: Vector,
    pub theta_err: Vector,
    pub f_norm: f64,
    pub cost: f64,
}

/// Advances the continuation by one `dt`.
pub fn step(
    state: &EstimatorState,
    cfg: &EstimatorConfig,
    model: &SystemModel,
) -> Result<(EstimatorState, TraceRecord)> {
    advance(state, cfg, model).map_err(|source| NrhcError::StepFailed {
        step: state.step,
        t: state.t,
        source: Box::new(source),
    })
}

fn advance(
    state: &EstimatorState,
    cfg: &EstimatorConfig,
    model: &SystemModel,
) -> Result<(EstimatorState, TraceRecord)> {
    let dynamics = model.dynamics.as_ref();
    let w = &cfg.weights;
    let (horizon, horizon_rate) = horizon_length(state.t, cfg.horizon_final, cfg.horizon_rate);

    let drive_rhs = |x: &Vector, t: f64| model.drive_rhs(x, t);
    let drive = match cfg.drive_mode {
        DriveMode::Hold => DriveReference::Hold,
        DriveMode::Predict => DriveReference::Predict {
            rhs: &drive_rhs,
            t0: state.t,
        },
    };
    let sweep = solve_horizon(
        dynamics,
        w,
        &state.y,
        &state.lambda,
        &state.x,
        horizon,
        horizon_rate,
        cfg.nodes,
        &cfg.stabilization,
        &drive,
    )?;

    let lambda = &state.lambda + (&sweep.c0 - &sweep.h_y0) * cfg.dt;
    if !all_finite(&lambda) {
        return Err(NrhcError::NumericalBlowup("non-finite costate".into()));
    }
    let theta_hat = optimal_parameter(dynamics, &state.y, &lambda, w)?;

    let x = rk4_step(|x, t| model.drive_rhs(x, t), &state.x, state.t, cfg.dt)?;
    let y = rk4_step(|y, _| model.response_rhs(y, &theta_hat), &state.y, state.t, cfg.dt)?;

    let next_step = state.step + 1;
    let t = next_step as f64 * cfg.dt;
    let e = &y - &x;
    let theta_true = model.theta_true.at(t);
    let record = TraceRecord {
        t,
        cost: running_cost(&e, &theta_hat, w),
        theta_err: &theta_hat - &theta_true,
        x: x.clone(),
        y: y.clone(),
        e,
        theta_hat: theta_hat.clone(),
        theta_true,
        f_norm: sweep.f.norm(),
    };
    let next = EstimatorState {
        step: next_step,
        t,
        x,
        y,
        lambda,
        f_norm: record.f_norm,
        theta_hat,
    };
    Ok((next, record))
}

/// Runs a config against a model from the built-in registry.
pub fn run(cfg: &EstimatorConfig) -> Result<Vec<TraceRecord>> {
    let model = ModelRegistry::default().get(&cfg.model_name)?;
    run_with_model(cfg, &model)
}

pub fn run_with_model(cfg: &EstimatorConfig, model: &SystemModel) -> Result<Vec<TraceRecord>> {
    cfg.validate(model)?;
    let steps = cfg.step_count();
    let mut trace = Vec::with_capacity(steps);
    let mut state = EstimatorState::initial(cfg, model)?;
    for _ in 0..steps {
        let (next, record) = step(&state, cfg, model)?;
        trace.push(record);
        state = next;
    }
    Ok(trace)
}

/// Error statistics over the tail of a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TailMetrics {
    pub t_from: f64,
    pub t_to: f64,
    pub samples: usize,
    pub e_rms: f64,
    pub e_max: f64,
    pub theta_err_rms: Vec<f64>,
    pub theta_err_max: Vec<f64>,
    pub f_norm_max: f64,
}

pub fn tail_metrics(trace: &[TraceRecord], t_from: f64) -> Result<TailMetrics> {
    window_metrics(trace, t_from, f64::INFINITY)
}

/// Metrics over records with `t_from ≤ t ≤ t_to`.
pub fn window_metrics(trace: &[TraceRecord], t_from: f64, t_to: f64) -> Result<TailMetrics> {
    // half a nanosecond of slack so a record at exactly t_from is included
    let tol = 5e-10;
    let window: Vec<&TraceRecord> = trace
        .iter()
        .filter(|r| r.t >= t_from - tol && r.t <= t_to + tol)
        .collect();
    let first = window.first().ok_or(NrhcError::EmptyWindow { t_from })?;
    let count = window.len() as f64;
    let p = first.theta_err.len();

    let e_norms: Vec<f64> = window.iter().map(|r| r.e.norm()).collect();
    let mut theta_err_rms = vec![0.0; p];
    let mut theta_err_max = vec![0.0f64; p];
    for r in &window {
        for (j, err) in r.theta_err.iter().enumerate() {
            theta_err_rms[j] += err * err;
            theta_err_max[j] = theta_err_max[j].max(err.abs());
        }
    }
    for acc in &mut theta_err_rms {
        *acc = (*acc / count).sqrt();
    }

    Ok(TailMetrics {
        t_from,
        t_to: window.last().map(|r| r.t).unwrap_or(first.t),
        samples: window.len(),
        e_rms: (e_norms.iter().map(|e| e * e).sum::<f64>() / count).sqrt(),
        e_max: e_norms.iter().copied().fold(0.0, f64::max),
        theta_err_rms,
        theta_err_max,
        f_norm_max: window.iter().map(|r| r.f_norm).fold(0.0, f64::max),
    })
}

/// Trailing moving average of the running cost, one value per record once a
/// full window is available.
pub fn moving_average_cost(trace: &[TraceRecord], window: f64) -> Vec<(f64, f64)> {
    let Some(first) = trace.first() else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut start = 0;
    let mut sum = 0.0;
    for (i, r) in trace.iter().enumerate() {
        sum += r.cost;
        while r.t - trace[start].t >= window - 1e-9 {
            sum -= trace[start].cost;
            start += 1;
        }
        if r.t - first.t >= window - 1e-9 {
            out.push((r.t, sum / (i + 1 - start) as f64));
        }
    }
    out
}
