//! Decaying Taylor-Green vortex on the periodic box, used to verify the
//! solver against an exact solution.

use crate::solver::FlowSolver;

#[derive(Clone, Debug, PartialEq)]
pub struct TaylorGreenConfig {
    pub n: usize,
    pub dt: f64,
    pub nu: f64,
    pub end_time: f64,
}

impl Default for TaylorGreenConfig {
    fn default() -> Self {
        Self {
            n: 64,
            dt: 1e-3,
            nu: 0.001,
            end_time: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaylorGreenReport {
    pub n: usize,
    pub time: f64,
    pub steps: usize,
    /// Max pointwise velocity error divided by the exact amplitude.
    pub max_rel_error: f64,
    pub max_divergence: f64,
}

pub fn exact_u(x: f64, y: f64, t: f64, nu: f64) -> f64 {
    -x.cos() * y.sin() * (-2.0 * nu * t).exp()
}

pub fn exact_v(x: f64, y: f64, t: f64, nu: f64) -> f64 {
    x.sin() * y.cos() * (-2.0 * nu * t).exp()
}

pub fn exact_p(x: f64, y: f64, t: f64, nu: f64) -> f64 {
    -0.25 * ((2.0 * x).cos() + (2.0 * y).cos()) * (-4.0 * nu * t).exp()
}

/// Runs the vortex to `cfg.end_time` and compares face velocities with the
/// exact field.
pub fn taylor_green_validation(cfg: &TaylorGreenConfig) -> TaylorGreenReport {
    let n = cfg.n;
    let mut solver = FlowSolver::periodic(n, cfg.nu, cfg.dt);
    let h = solver.h();
    for i in 0..n {
        for j in 0..n {
            let (xi, yj) = (i as f64 * h, j as f64 * h);
            solver.grid.u[i * n + j] = exact_u(xi, yj + 0.5 * h, 0.0, cfg.nu);
            solver.grid.v[i * n + j] = exact_v(xi + 0.5 * h, yj, 0.0, cfg.nu);
        }
    }
    let steps = (cfg.end_time / cfg.dt).round() as usize;
    for _ in 0..steps {
        solver
            .step()
            .expect("the periodic vortex stays far below the CFL limit");
    }
    let t = solver.time;
    let amp = (-2.0 * cfg.nu * t).exp();
    let mut err: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let (xi, yj) = (i as f64 * h, j as f64 * h);
            let eu = solver.grid.u[i * n + j] - exact_u(xi, yj + 0.5 * h, t, cfg.nu);
            let ev = solver.grid.v[i * n + j] - exact_v(xi + 0.5 * h, yj, t, cfg.nu);
            err = err.max(eu.abs()).max(ev.abs());
        }
    }
    TaylorGreenReport {
        n,
        time: t,
        steps,
        max_rel_error: err / amp,
        max_divergence: solver.grid.max_divergence(),
    }
}

/// Observed convergence order between two resolutions (`fine = 2 coarse`).
pub fn observed_order(coarse: &TaylorGreenReport, fine: &TaylorGreenReport) -> f64 {
    (coarse.max_rel_error / fine.max_rel_error).ln() / (fine.n as f64 / coarse.n as f64).ln()
}
