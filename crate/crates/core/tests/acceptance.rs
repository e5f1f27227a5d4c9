//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_RED` are reported as FAIL but do not fail the
//! test binary; any other failure does, and so does a known-red criterion
//! that starts passing. Set `NRHC_ACCEPTANCE_STRICT=1` to make every FAIL
//! fatal.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{Matrix2, Vector2};
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::TestRunner;

use nrhc::estimator::{horizon_length, moving_average_cost, window_metrics};
use nrhc::hamiltonian::HamiltonianPartials;
use nrhc::model::{guay_theta, lorenz_theta, GUAY_BREAK_1};
use nrhc::numerics::{Matrix, Vector};
use nrhc::sweep::{backward_sweep, forward_sweep, solve_horizon, DriveReference};
use nrhc::trace::write_trace_to;
use nrhc::{
    preset, step, CostWeights, DriveMode, Dynamics, EstimatorConfig, EstimatorState, ModelRegistry,
    ParameterTrajectory, SystemModel, TraceRecord,
};

const KNOWN_RED: &[&str] = &[
    "example1",
    "example2",
    "continuation",
    "cost-monotone",
    "riccati-oracle",
    "manifold-invariance",
];

const DRIVE_MODES: [DriveMode; 2] = [DriveMode::Hold, DriveMode::Predict];

struct Outcome {
    id: &'static str,
    pass: bool,
    details: Vec<String>,
}

impl Outcome {
    fn new(id: &'static str) -> Self {
        Self { id, pass: true, details: Vec::new() }
    }

    fn check(&mut self, ok: bool, detail: String) {
        self.pass &= ok;
        let mark = if ok { "ok  " } else { "FAIL" };
        self.details.push(format!("{mark} {detail}"));
    }

    fn note(&mut self, detail: String) {
        self.details.push(format!("info {detail}"));
    }
}

struct Run {
    trace: Vec<TraceRecord>,
    final_f: f64,
    seconds: f64,
}

/// Runs a config step by step and solves one more horizon at `t_end`, so
/// the terminal residual is available.
fn run(cfg: &EstimatorConfig, model: &SystemModel) -> Run {
    cfg.validate(model).unwrap();
    let started = Instant::now();
    let mut state = EstimatorState::initial(cfg, model).unwrap();
    let mut trace = Vec::with_capacity(cfg.step_count());
    for _ in 0..cfg.step_count() {
        let (next, record) = step(&state, cfg, model).unwrap();
        trace.push(record);
        state = next;
    }
    let seconds = started.elapsed().as_secs_f64();

    let (horizon, rate) = horizon_length(state.t, cfg.horizon_final, cfg.horizon_rate);
    let rhs = |x: &Vector, t: f64| model.drive_rhs(x, t);
    let drive = match cfg.drive_mode {
        DriveMode::Hold => DriveReference::Hold,
        DriveMode::Predict => DriveReference::Predict { rhs: &rhs, t0: state.t },
    };
    let sweep = solve_horizon(
        model.dynamics.as_ref(),
        &cfg.weights,
        &state.y,
        &state.lambda,
        &state.x,
        horizon,
        rate,
        cfg.nodes,
        &cfg.stabilization,
        &drive,
    )
    .unwrap();
    Run { trace, final_f: sweep.f.norm(), seconds }
}

fn preset_run(name: &str, mode: DriveMode) -> (EstimatorConfig, Run) {
    let mut cfg = preset(name).unwrap();
    cfg.drive_mode = mode;
    let model = ModelRegistry::default().get(&cfg.model_name).unwrap();
    let run = run(&cfg, &model);
    (cfg, run)
}

/// RMS of each parameter error over the records selected by `keep`.
fn theta_rms(trace: &[TraceRecord], keep: impl Fn(f64) -> bool) -> Vec<f64> {
    let rows: Vec<&TraceRecord> = trace.iter().filter(|r| keep(r.t)).collect();
    let p = rows[0].theta_err.len();
    (0..p)
        .map(|j| (rows.iter().map(|r| r.theta_err[j].powi(2)).sum::<f64>() / rows.len() as f64).sqrt())
        .collect()
}

fn example1(runs: &[(DriveMode, Run)]) -> Outcome {
    let mut out = Outcome::new("example1");
    for (mode, run) in runs {
        let rms = theta_rms(&run.trace, |t| t >= 5.0 - 1e-9);
        // reference values recomputed from the closed form, not read off the trace
        let check = window_metrics(&run.trace, 5.0, 20.0).unwrap();
        let worst = run
            .trace
            .iter()
            .filter(|r| r.t >= 5.0 - 1e-9)
            .map(|r| (r.theta_hat.clone() - lorenz_theta(r.t)).amax())
            .fold(0.0, f64::max);
        assert!((worst - check.theta_err_max.iter().copied().fold(0.0, f64::max)).abs() < 1e-12);
        let e_end = run.trace.last().unwrap().e.norm();
        out.check(rms[0] <= 0.2, format!("[{mode}] theta_1 error RMS on [5,20] = {:.4} (<= 0.2)", rms[0]));
        out.check(rms[1] <= 0.15, format!("[{mode}] theta_2 error RMS on [5,20] = {:.4} (<= 0.15)", rms[1]));
        out.check(e_end <= 1e-2, format!("[{mode}] |e(20)| = {e_end:.3e} (<= 1e-2)"));
        out.check(run.seconds <= 10.0, format!("[{mode}] runtime {:.3} s (<= 10 s)", run.seconds));
    }
    out
}

fn example2(runs: &[(DriveMode, Run)]) -> Outcome {
    let mut out = Outcome::new("example2");
    for (mode, run) in runs {
        for r in &run.trace {
            assert!((r.theta_true.clone() - guay_theta(r.t)).amax() < 1e-12);
        }
        let rms = theta_rms(&run.trace, |t| t >= 5.0 - 1e-9 && (t - GUAY_BREAK_1).abs() > 1.0);
        for (j, v) in rms.iter().enumerate() {
            out.check(*v <= 0.2, format!("[{mode}] theta_{} error RMS on [5,60] minus 6pi+-1 = {v:.4} (<= 0.2)", j + 1));
        }
        let reentry = theta_rms(&run.trace, |t| t > GUAY_BREAK_1 + 1.0 && t <= GUAY_BREAK_1 + 2.0);
        for (j, v) in reentry.iter().enumerate() {
            out.check(*v <= 0.2, format!("[{mode}] theta_{} error RMS on (6pi+1, 6pi+2] = {v:.4} (<= 0.2)", j + 1));
        }
        out.check(run.seconds <= 30.0, format!("[{mode}] runtime {:.3} s (<= 30 s)", run.seconds));
    }
    out
}

fn continuation(all: &[(&str, DriveMode, &Run)]) -> Outcome {
    let mut out = Outcome::new("continuation");
    for (name, mode, run) in all {
        let early = run.trace.iter().filter(|r| r.t - 0.01 < 5.0 - 1e-9).map(|r| r.f_norm).fold(0.0, f64::max);
        let late = run.trace.iter().filter(|r| r.t - 0.01 >= 5.0 - 1e-9).map(|r| r.f_norm).fold(0.0, f64::max);
        let late = late.max(run.final_f);
        out.check(late <= early, format!("{name}[{mode}] max|F| after 5 s = {late:.3e} vs before = {early:.3e}"));
        out.check(run.final_f <= 1e-3, format!("{name}[{mode}] |F(t_end)| = {:.3e} (<= 1e-3)", run.final_f));
    }
    out
}

fn cost_monotone(all: &[(&str, DriveMode, &Run)]) -> Outcome {
    let mut out = Outcome::new("cost-monotone");
    for (name, mode, run) in all {
        let avg: Vec<(f64, f64)> = moving_average_cost(&run.trace, 1.0)
            .into_iter()
            .filter(|(t, _)| *t >= 5.0 - 1e-9)
            .collect();
        let mut worst = 0.0f64;
        let mut at = 0.0;
        for pair in avg.windows(2) {
            let growth = pair[1].1 / pair[0].1 - 1.0;
            if growth > worst {
                worst = growth;
                at = pair[1].0;
            }
        }
        out.check(
            worst <= 0.05,
            format!("{name}[{mode}] worst step growth of 1 s average cost = {:.3}% at t={at:.2} (<= 5%)", worst * 100.0),
        );
    }
    out
}

/// Benchmark Hamiltonians written out term by term, independent of the
/// library's dynamics.
fn lorenz_h(y: &[f64], l: &[f64], th: &[f64], x: &[f64], q: [f64; 3], r: [f64; 2]) -> f64 {
    let e: Vec<f64> = (0..3).map(|i| y[i] - x[i]).collect();
    let cost = 0.5 * (q[0] * e[0] * e[0] + q[1] * e[1] * e[1] + q[2] * e[2] * e[2] + r[0] * th[0] * th[0] + r[1] * th[1] * th[1]);
    let f1 = th[0] * (y[1] - y[0]);
    let f2 = 28.0 * y[0] - y[0] * y[2] - y[1];
    let f3 = y[0] * y[1] - th[1] * y[2];
    cost + l[0] * f1 + l[1] * f2 + l[2] * f3
}

fn guay_h(y: &[f64], l: &[f64], th: &[f64], x: &[f64], q: [f64; 2], r: [f64; 2]) -> f64 {
    let e = [y[0] - x[0], y[1] - x[1]];
    let cost = 0.5 * (q[0] * e[0] * e[0] + q[1] * e[1] * e[1] + r[0] * th[0] * th[0] + r[1] * th[1] * th[1]);
    let f1 = -y[1] * y[1] - 2.0 * y[0] + th[0];
    let f2 = -2.0 * y[1] + th[1] * y[0];
    cost + l[0] * f1 + l[1] * f2
}

fn central_diff(h: &dyn Fn(&[f64]) -> f64, z: &[f64], range: std::ops::Range<usize>) -> Vec<f64> {
    range
        .map(|i| {
            let step = 1e-5 * z[i].abs().max(1.0);
            let mut hi = z.to_vec();
            let mut lo = z.to_vec();
            hi[i] += step;
            lo[i] -= step;
            (h(&hi) - h(&lo)) / (hi[i] - lo[i])
        })
        .collect()
}

fn relative_gap(analytic: &Vector, fd: &[f64]) -> f64 {
    let gap = analytic.iter().zip(fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    gap / analytic.amax().max(f64::MIN_POSITIVE)
}

fn gradient_oracle() -> Outcome {
    let mut out = Outcome::new("gradient-oracle");
    let mut runner = TestRunner::deterministic();
    let registry = ModelRegistry::default();

    for (name, n, scale) in [("lorenz", 3usize, 20.0), ("guay", 2usize, 3.0)] {
        let model = registry.get(name).unwrap();
        let d = model.dynamics.as_ref();
        let p = d.param_dim();
        let cfg = preset(if name == "lorenz" { "example1" } else { "example2" }).unwrap();
        let q: Vec<f64> = cfg.weights.q().diagonal().iter().copied().collect();
        let r: Vec<f64> = cfg.weights.r().diagonal().iter().copied().collect();
        // z = (y, λ, Θ, x)
        let width = 3 * n + p;
        let h = |z: &[f64]| {
            let (y, rest) = z.split_at(n);
            let (l, rest) = rest.split_at(n);
            let (th, x) = rest.split_at(p);
            if name == "lorenz" {
                lorenz_h(y, l, th, x, [q[0], q[1], q[2]], [r[0], r[1]])
            } else {
                guay_h(y, l, th, x, [q[0], q[1]], [r[0], r[1]])
            }
        };

        let mut worst = [0.0f64; 3];
        for _ in 0..100 {
            let unit = proptest::collection::vec(-1.0f64..1.0, width)
                .new_tree(&mut runner)
                .unwrap()
                .current();
            let mut z: Vec<f64> = unit.iter().map(|u| u * scale).collect();
            for v in &mut z[n..2 * n] {
                *v /= scale;
            }
            for v in &mut z[2 * n..2 * n + p] {
                *v *= 10.0 / scale;
            }
            let y = Vector::from_column_slice(&z[..n]);
            let l = Vector::from_column_slice(&z[n..2 * n]);
            let th = Vector::from_column_slice(&z[2 * n..2 * n + p]);
            let x = Vector::from_column_slice(&z[2 * n + p..]);
            let partials = HamiltonianPartials::evaluate(d, &y, &l, &th, &x, &cfg.weights).unwrap();

            let gaps = [
                relative_gap(&partials.h_y, &central_diff(&h, &z, 0..n)),
                relative_gap(&partials.h_lambda, &central_diff(&h, &z, n..2 * n)),
                relative_gap(&partials.h_theta, &central_diff(&h, &z, 2 * n..2 * n + p)),
            ];
            for (w, g) in worst.iter_mut().zip(gaps) {
                *w = w.max(g);
            }
        }
        for (label, w) in ["H_y", "H_lambda", "H_theta"].iter().zip(worst) {
            out.check(w <= 1e-6, format!("{name} {label}: worst relative gap over 100 points = {w:.2e} (<= 1e-6)"));
        }
    }
    out
}

/// `ẏ = A·y + B·θ`, the regressor is the constant `B`.
struct LinearTestModel {
    a: Matrix,
    b: Matrix,
}

impl Dynamics for LinearTestModel {
    fn state_dim(&self) -> usize {
        2
    }
    fn param_dim(&self) -> usize {
        1
    }
    fn linear_part(&self) -> &Matrix {
        &self.a
    }
    fn nonlinearity(&self, _y: &Vector) -> Vector {
        Vector::zeros(2)
    }
    fn nonlinearity_jacobian(&self, _y: &Vector) -> Matrix {
        Matrix::zeros(2, 2)
    }
    fn regressor(&self, _y: &Vector) -> Matrix {
        self.b.clone()
    }
    fn regressor_jacobian(&self, _y: &Vector) -> Vec<Matrix> {
        vec![Matrix::zeros(2, 2)]
    }
}

fn riccati_oracle() -> Outcome {
    let mut out = Outcome::new("riccati-oracle");
    // double integrator with unit weights
    let a = Matrix2::new(0.0, 1.0, 0.0, 0.0);
    let b = Vector2::new(0.0, 1.0);
    let q = Matrix2::identity();
    let r = 1.0;
    let horizon = 0.1;
    let intervals = 20;

    let model = LinearTestModel {
        a: Matrix::from_column_slice(2, 2, a.as_slice()),
        b: Matrix::from_column_slice(2, 1, b.as_slice()),
    };
    let w = CostWeights::new(Matrix::from_column_slice(2, 2, q.as_slice()), Matrix::from_element(1, 1, r)).unwrap();
    let sweep_s0 = |intervals: usize| {
        let y = Vector::from_column_slice(&[1.0, -0.5]);
        let lambda = Vector::from_column_slice(&[0.05, 0.02]);
        let x = Vector::zeros(2);
        let grid = forward_sweep(&model, &w, &y, &lambda, &x, horizon, intervals, &DriveReference::Hold).unwrap();
        let f = grid.terminal_costate().clone();
        let sweep = backward_sweep(grid, &model, &f, &Matrix::identity(2, 2), 0.0).unwrap();
        (sweep.grid.s_nodes[0].clone(), sweep.max_symmetry_drift)
    };

    // dS/dτ = −(AᵀS + SA − S·B R⁻¹Bᵀ·S + Q), RK4 backward from S(T) = 0
    let l = b * b.transpose() / r;
    let rate = |s: &Matrix2<f64>| -(a.transpose() * s + s * a - s * l * s + q);
    let fine = intervals * 100;
    let h = -horizon / fine as f64;
    let mut s = Matrix2::zeros();
    for _ in 0..fine {
        let k1 = rate(&s);
        let k2 = rate(&(s + k1 * (h / 2.0)));
        let k3 = rate(&(s + k2 * (h / 2.0)));
        let k4 = rate(&(s + k3 * h));
        s += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    let gap_at = |s0: &Matrix| {
        (0..2)
            .flat_map(|i| (0..2).map(move |j| (i, j)))
            .map(|(i, j)| (s0[(i, j)] - s[(i, j)]).abs())
            .fold(0.0, f64::max)
    };
    let (s0, drift) = sweep_s0(intervals);
    let gap = gap_at(&s0);
    out.check(gap <= 1e-4, format!("S(0) elementwise gap vs RK4 at dtau/100 = {gap:.3e} (<= 1e-4)"));
    out.check(drift <= 5e-12, format!("largest raw asymmetry of a Riccati step = {drift:.3e} (<= 5e-12)"));
    for finer in [2 * intervals, 4 * intervals] {
        out.note(format!("N={finer}: S(0) gap = {:.3e}", gap_at(&sweep_s0(finer).0)));
    }
    out
}

fn manifold_invariance() -> Outcome {
    let mut out = Outcome::new("manifold-invariance");
    let registry = ModelRegistry::default();
    for name in ["example1", "example2"] {
        for mode in DRIVE_MODES {
            let mut cfg = preset(name).unwrap();
            cfg.drive_mode = mode;
            cfg.y0 = cfg.x0.clone();
            cfg.lambda0 = Vector::zeros(cfg.x0.len());
            cfg.t_end = 100.0 * cfg.dt;
            let base = registry.get(&cfg.model_name).unwrap();
            let p = base.param_dim();
            let model = base.with_theta_true(ParameterTrajectory::constant(Vector::zeros(p)));
            let run = run(&cfg, &model);
            assert_eq!(run.trace.len(), 100);
            let e = run.trace.iter().map(|r| r.e.norm()).fold(0.0, f64::max);
            let th = run.trace.iter().map(|r| r.theta_hat.norm()).fold(0.0, f64::max);
            out.check(e <= 1e-9 && th <= 1e-9, format!("{name}[{mode}] max|e| = {e:.3e}, max|theta_hat| = {th:.3e} (<= 1e-9)"));
        }
    }
    out
}

fn csv_bytes(name: &str, mode: DriveMode) -> Vec<u8> {
    let mut cfg = preset(name).unwrap();
    cfg.drive_mode = mode;
    let model = ModelRegistry::default().get(&cfg.model_name).unwrap();
    let trace = nrhc::run(&cfg).unwrap();
    let mut buf = Vec::new();
    write_trace_to(&trace, model.state_dim(), model.param_dim(), &mut buf).unwrap();
    buf
}

fn determinism() -> Outcome {
    let mut out = Outcome::new("determinism");
    for name in ["example1", "example2"] {
        for mode in DRIVE_MODES {
            let first = csv_bytes(name, mode);
            let second = csv_bytes(name, mode);
            out.check(first == second, format!("{name}[{mode}] two runs, {} CSV bytes, identical={}", first.len(), first == second));
        }
    }
    out
}

fn main() -> ExitCode {
    let strict = std::env::var("NRHC_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    assert!((GUAY_BREAK_1 - 6.0 * PI).abs() < 1e-15);

    let ex1: Vec<(DriveMode, Run)> = DRIVE_MODES.iter().map(|m| (*m, preset_run("example1", *m).1)).collect();
    let ex2: Vec<(DriveMode, Run)> = DRIVE_MODES.iter().map(|m| (*m, preset_run("example2", *m).1)).collect();
    let all: Vec<(&str, DriveMode, &Run)> = ex1
        .iter()
        .map(|(m, r)| ("example1", *m, r))
        .chain(ex2.iter().map(|(m, r)| ("example2", *m, r)))
        .collect();

    let outcomes = [
        example1(&ex1),
        example2(&ex2),
        continuation(&all),
        cost_monotone(&all),
        gradient_oracle(),
        riccati_oracle(),
        manifold_invariance(),
        determinism(),
    ];

    let mut fatal = Vec::new();
    println!();
    for o in &outcomes {
        let known = KNOWN_RED.contains(&o.id);
        let tag = match (o.pass, known) {
            (true, false) => "PASS",
            (true, true) => "PASS (listed as known-red; update KNOWN_RED)",
            (false, true) => "FAIL (known-red)",
            (false, false) => "FAIL",
        };
        println!("{tag} {}", o.id);
        for d in &o.details {
            println!("    {d}");
        }
        if (!o.pass && (strict || !known)) || (o.pass && known) {
            fatal.push(o.id);
        }
    }
    let passed = outcomes.iter().filter(|o| o.pass).count();
    println!("\nacceptance: {passed}/{} criteria pass", outcomes.len());
    if fatal.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected results: {}", fatal.join(", "));
        ExitCode::FAILURE
    }
}
