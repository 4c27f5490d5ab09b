//! Chorin projection on a staggered MAC grid.
//!
//! Layout: `u(i, j)` sits on the vertical face at `(i h, (j + 1/2) h)`,
//! `v(i, j)` on the horizontal face at `((i + 1/2) h, j h)` and `p(i, j)` at
//! the cell center. Each step advances advection and diffusion explicitly
//! (Heun's method), solves the pressure equation and subtracts the pressure
//! gradient so the discrete divergence vanishes in every fluid cell.

use crate::geometry::{ChannelGeometry, DesignPoint, RoiGrid};
use crate::poisson::{periodic_cg, BandedCholesky, BandedSpd};
use crate::DatagenError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InletProfile {
    Uniform,
    /// Poiseuille profile with peak `u_inlet` on the channel centerline.
    Parabolic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WallCondition {
    NoSlip,
    FreeSlip,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialCondition {
    /// Fluid at rest with the inlet switched on at `t = 0`.
    Rest,
    /// `u = u_inlet`, `v = 0` everywhere outside the cylinder.
    Uniform,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub nx: usize,
    pub ny: usize,
    pub dt: f64,
    pub end_time: f64,
    pub output_cadence: f64,
    pub inlet: InletProfile,
    pub walls: WallCondition,
    pub initial: InitialCondition,
    pub with_cylinder: bool,
    pub nu: f64,
    /// Amplitude of the transverse forcing pulse that breaks the top/bottom
    /// symmetry of the wake, in units of `u_inlet^2 / d_y`. Zero disables it.
    pub kick: f64,
    /// Duration of the forcing pulse.
    pub kick_duration: f64,
    pub roi_nx: usize,
    pub roi_ny: usize,
}

impl SolverConfig {
    /// 360 x 80 cells (h = 0.005), dt = 5e-4.
    pub fn production() -> Self {
        Self {
            nx: 360,
            ny: 80,
            dt: 5e-4,
            ..Self::desk()
        }
    }

    /// 180 x 40 cells (h = 0.01), dt = 1e-3.
    pub fn desk() -> Self {
        Self {
            nx: 180,
            ny: 40,
            dt: 1e-3,
            end_time: 6.0,
            output_cadence: 0.05,
            inlet: InletProfile::Parabolic,
            walls: WallCondition::NoSlip,
            initial: InitialCondition::Rest,
            with_cylinder: true,
            nu: 0.001,
            kick: 0.05,
            kick_duration: 0.5,
            roi_nx: 151,
            roi_ny: 31,
        }
    }

    pub fn steps_per_output(&self) -> usize {
        (self.output_cadence / self.dt).round() as usize
    }

    pub fn output_count(&self) -> usize {
        (self.end_time / self.output_cadence).round() as usize + 1
    }

    pub fn validate(&self, geometry: &ChannelGeometry) -> Result<(), DatagenError> {
        let bad = |m: String| Err(DatagenError::Config(m));
        if self.nx < 4 || self.ny < 4 {
            return bad(format!("grid {}x{} is too small", self.nx, self.ny));
        }
        let hx = geometry.length / self.nx as f64;
        let hy = geometry.width / self.ny as f64;
        if ((hx - hy) / hx).abs() > 1e-9 {
            return bad(format!("cells must be square, got hx = {hx}, hy = {hy}"));
        }
        if !(self.dt > 0.0) || !(self.nu > 0.0) || !(self.end_time > 0.0) {
            return bad("dt, nu and end_time must be positive".into());
        }
        let k = self.output_cadence / self.dt;
        if (k - k.round()).abs() > 1e-9 || k.round() < 1.0 {
            return bad(format!(
                "output cadence {} is not an integer multiple of dt {}",
                self.output_cadence, self.dt
            ));
        }
        let n = self.end_time / self.output_cadence;
        if (n - n.round()).abs() > 1e-9 {
            return bad("end time is not a multiple of the output cadence".into());
        }
        // Advective bound for the fastest design, with headroom for the
        // acceleration around the cylinder.
        let cfl = 2.0 * 1.0 * self.dt / hx;
        if cfl > 1.0 {
            return bad(format!("dt = {} violates the advective CFL bound", self.dt));
        }
        if self.roi_nx < 2 || self.roi_ny < 2 {
            return bad("ROI grid needs at least 2 x 2 points".into());
        }
        geometry.validate()
    }
}

/// ROI fields at one output time. Grids are row-major with rows along `x`
/// (see [`RoiGrid::index`]).
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSnapshot {
    pub t: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub p: Vec<f64>,
}

/// Counters gathered while stepping.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolverStats {
    pub steps: usize,
    /// Largest `|div u| h / u_ref` over fluid cells after any projection.
    pub max_divergence: f64,
    /// Largest `|u| dt / h` seen.
    pub max_cfl: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Boundary {
    Channel,
    Periodic,
}

/// Velocity and pressure state on a MAC grid.
#[derive(Clone, Debug)]
pub struct MacGrid {
    nx: usize,
    ny: usize,
    h: f64,
    boundary: Boundary,
    wall_sign: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub p: Vec<f64>,
    solid: Vec<bool>,
    u_fixed: Vec<bool>,
    v_fixed: Vec<bool>,
}

impl MacGrid {
    fn v_rows(&self) -> usize {
        match self.boundary {
            Boundary::Channel => self.ny + 1,
            Boundary::Periodic => self.ny,
        }
    }

    #[inline]
    fn ui(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }

    #[inline]
    fn vi(&self, i: usize, j: usize) -> usize {
        i * self.v_rows() + j
    }

    #[inline]
    fn pi(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }

    /// `u` with ghost values outside the stored range.
    #[inline]
    fn u_at(&self, u: &[f64], i: isize, j: isize) -> f64 {
        let (nx, ny) = (self.nx as isize, self.ny as isize);
        match self.boundary {
            Boundary::Periodic => {
                let ii = i.rem_euclid(nx) as usize;
                let jj = j.rem_euclid(ny) as usize;
                u[self.ui(ii, jj)]
            }
            Boundary::Channel => {
                let ii = i.clamp(0, nx) as usize;
                if j < 0 {
                    self.wall_sign * u[self.ui(ii, 0)]
                } else if j >= ny {
                    self.wall_sign * u[self.ui(ii, self.ny - 1)]
                } else {
                    u[self.ui(ii, j as usize)]
                }
            }
        }
    }

    /// `v` with ghost values outside the stored range.
    #[inline]
    fn v_at(&self, v: &[f64], i: isize, j: isize) -> f64 {
        let (nx, ny) = (self.nx as isize, self.ny as isize);
        match self.boundary {
            Boundary::Periodic => {
                let ii = i.rem_euclid(nx) as usize;
                let jj = j.rem_euclid(ny) as usize;
                v[self.vi(ii, jj)]
            }
            Boundary::Channel => {
                let jj = j.clamp(0, ny) as usize;
                if i < 0 {
                    // v = 0 on the inlet plane
                    -v[self.vi(0, jj)]
                } else if i >= nx {
                    v[self.vi(self.nx - 1, jj)]
                } else {
                    v[self.vi(i as usize, jj)]
                }
            }
        }
    }

    /// Explicit advection-diffusion tendency for every free face.
    fn tendency(&self, u: &[f64], v: &[f64], nu: f64, force_v: &[f64], du: &mut [f64], dv: &mut [f64]) {
        let h = self.h;
        let inv_h = 1.0 / h;
        let inv_h2 = 1.0 / (h * h);
        du.iter_mut().for_each(|x| *x = 0.0);
        dv.iter_mut().for_each(|x| *x = 0.0);

        let (i_lo, i_hi) = match self.boundary {
            Boundary::Channel => (1, self.nx),
            Boundary::Periodic => (0, self.nx),
        };
        for i in i_lo..i_hi {
            for j in 0..self.ny {
                let k = self.ui(i, j);
                if self.u_fixed[k] {
                    continue;
                }
                let (ii, jj) = (i as isize, j as isize);
                let uc = u[k];
                let ue = self.u_at(u, ii + 1, jj);
                let uw = self.u_at(u, ii - 1, jj);
                let un = self.u_at(u, ii, jj + 1);
                let us = self.u_at(u, ii, jj - 1);
                let vnw = self.v_at(v, ii - 1, jj + 1);
                let vne = self.v_at(v, ii, jj + 1);
                let vsw = self.v_at(v, ii - 1, jj);
                let vse = self.v_at(v, ii, jj);

                let fe = 0.5 * (uc + ue);
                let fw = 0.5 * (uw + uc);
                let du2dx = (fe * fe - fw * fw) * inv_h;
                let vn = 0.5 * (vnw + vne);
                let vs = 0.5 * (vsw + vse);
                let duvdy = (vn * 0.5 * (uc + un) - vs * 0.5 * (us + uc)) * inv_h;
                let lap = (ue + uw + un + us - 4.0 * uc) * inv_h2;
                du[k] = -du2dx - duvdy + nu * lap;
            }
        }

        let (j_lo, j_hi) = match self.boundary {
            Boundary::Channel => (1, self.ny),
            Boundary::Periodic => (0, self.ny),
        };
        for i in 0..self.nx {
            for j in j_lo..j_hi {
                let k = self.vi(i, j);
                if self.v_fixed[k] {
                    continue;
                }
                let (ii, jj) = (i as isize, j as isize);
                let vc = v[k];
                let ve = self.v_at(v, ii + 1, jj);
                let vw = self.v_at(v, ii - 1, jj);
                let vn = self.v_at(v, ii, jj + 1);
                let vs = self.v_at(v, ii, jj - 1);
                let une = self.u_at(u, ii + 1, jj);
                let use_ = self.u_at(u, ii + 1, jj - 1);
                let unw = self.u_at(u, ii, jj);
                let usw = self.u_at(u, ii, jj - 1);

                let ue = 0.5 * (une + use_);
                let uw = 0.5 * (unw + usw);
                let duvdx = (ue * 0.5 * (vc + ve) - uw * 0.5 * (vw + vc)) * inv_h;
                let fn_ = 0.5 * (vc + vn);
                let fs = 0.5 * (vs + vc);
                let dv2dy = (fn_ * fn_ - fs * fs) * inv_h;
                let lap = (ve + vw + vn + vs - 4.0 * vc) * inv_h2;
                dv[k] = -duvdx - dv2dy + nu * lap + force_v[k];
            }
        }
    }

    /// Discrete divergence of cell `(i, j)`.
    fn divergence(&self, u: &[f64], v: &[f64], i: usize, j: usize) -> f64 {
        let (ii, jj) = (i as isize, j as isize);
        (self.u_at(u, ii + 1, jj) - self.u_at(u, ii, jj) + self.v_at(v, ii, jj + 1)
            - self.v_at(v, ii, jj))
            / self.h
    }

    /// Largest `|div|` over fluid cells.
    pub fn max_divergence(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.nx {
            for j in 0..self.ny {
                if !self.solid[self.pi(i, j)] {
                    m = m.max(self.divergence(&self.u, &self.v, i, j).abs());
                }
            }
        }
        m
    }
}

/// Pressure projection operator for one grid configuration.
enum Projector {
    Channel(BandedCholesky),
    Periodic,
}

/// Time stepper for either the channel or the periodic box.
pub struct FlowSolver {
    pub grid: MacGrid,
    nu: f64,
    dt: f64,
    projector: Projector,
    inlet: Vec<f64>,
    force_shape: Vec<f64>,
    kick_amplitude: f64,
    kick_duration: f64,
    u_ref: f64,
    pub time: f64,
    pub stats: SolverStats,
    scratch: Scratch,
}

#[derive(Default)]
struct Scratch {
    du0: Vec<f64>,
    dv0: Vec<f64>,
    du1: Vec<f64>,
    dv1: Vec<f64>,
    u1: Vec<f64>,
    v1: Vec<f64>,
    rhs: Vec<f64>,
    force: Vec<f64>,
}

impl FlowSolver {
    /// Channel flow for one design.
    pub fn channel(
        design: DesignPoint,
        geometry: &ChannelGeometry,
        cfg: &SolverConfig,
    ) -> Result<Self, DatagenError> {
        cfg.validate(geometry)?;
        let (nx, ny) = (cfg.nx, cfg.ny);
        let h = geometry.length / nx as f64;
        let mut solid = vec![false; nx * ny];
        if cfg.with_cylinder {
            for i in 0..nx {
                for j in 0..ny {
                    let (x, y) = ((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
                    solid[i * ny + j] = geometry.inside_cylinder(x, y);
                }
            }
        }
        let mut u_fixed = vec![false; (nx + 1) * ny];
        let mut v_fixed = vec![false; nx * (ny + 1)];
        for j in 0..ny {
            u_fixed[j] = true;
        }
        for i in 0..nx {
            v_fixed[i * (ny + 1)] = true;
            v_fixed[i * (ny + 1) + ny] = true;
        }
        for i in 0..nx {
            for j in 0..ny {
                if solid[i * ny + j] {
                    u_fixed[i * ny + j] = true;
                    u_fixed[(i + 1) * ny + j] = true;
                    v_fixed[i * (ny + 1) + j] = true;
                    v_fixed[i * (ny + 1) + j + 1] = true;
                }
            }
        }

        let inlet: Vec<f64> = (0..ny)
            .map(|j| {
                let y = (j as f64 + 0.5) * h;
                match cfg.inlet {
                    InletProfile::Uniform => design.u_inlet,
                    InletProfile::Parabolic => {
                        4.0 * design.u_inlet * y * (geometry.width - y)
                            / (geometry.width * geometry.width)
                    }
                }
            })
            .collect();

        let grid = MacGrid {
            nx,
            ny,
            h,
            boundary: Boundary::Channel,
            wall_sign: match cfg.walls {
                WallCondition::NoSlip => -1.0,
                WallCondition::FreeSlip => 1.0,
            },
            u: vec![0.0; (nx + 1) * ny],
            v: vec![0.0; nx * (ny + 1)],
            p: vec![0.0; nx * ny],
            solid,
            u_fixed,
            v_fixed,
        };

        // Assemble the pressure operator: open faces couple neighbours, the
        // outlet plane holds p = 0.
        let mut a = BandedSpd::zeros(nx * ny, ny);
        for i in 0..nx {
            for j in 0..ny {
                let k = i * ny + j;
                if grid.solid[k] {
                    a.add(k, k, 1.0);
                    continue;
                }
                let mut diag = 0.0;
                if i > 0 && !grid.u_fixed[grid.ui(i, j)] {
                    diag += 1.0;
                    a.add(k, k - ny, -1.0);
                }
                if i + 1 < nx && !grid.u_fixed[grid.ui(i + 1, j)] {
                    diag += 1.0;
                }
                if i + 1 == nx {
                    diag += 2.0;
                }
                if j > 0 && !grid.v_fixed[grid.vi(i, j)] {
                    diag += 1.0;
                    a.add(k, k - 1, -1.0);
                }
                if j + 1 < ny && !grid.v_fixed[grid.vi(i, j + 1)] {
                    diag += 1.0;
                }
                a.add(k, k, diag);
            }
        }
        let factor = a.cholesky()?;

        // Transverse forcing patch one diameter behind the cylinder center.
        let mut force_shape = vec![0.0; nx * (ny + 1)];
        if cfg.with_cylinder && cfg.kick != 0.0 {
            let (fx, fy) = (geometry.center_x + geometry.d_x, geometry.center_y);
            let sigma = 0.5 * geometry.d_y;
            for i in 0..nx {
                for j in 1..ny {
                    let (x, y) = ((i as f64 + 0.5) * h, j as f64 * h);
                    let r2 = ((x - fx).powi(2) + (y - fy).powi(2)) / (sigma * sigma);
                    if r2 < 25.0 && !grid.v_fixed[i * (ny + 1) + j] {
                        force_shape[i * (ny + 1) + j] = (-r2).exp();
                    }
                }
            }
        }

        let mut solver = Self {
            grid,
            nu: cfg.nu,
            dt: cfg.dt,
            projector: Projector::Channel(factor),
            inlet,
            force_shape,
            kick_amplitude: cfg.kick * design.u_inlet * design.u_inlet / design.d_y,
            kick_duration: cfg.kick_duration,
            u_ref: design.u_inlet.abs().max(1.0),
            time: 0.0,
            stats: SolverStats::default(),
            scratch: Scratch::default(),
        };

        if cfg.initial == InitialCondition::Uniform {
            for i in 0..=nx {
                for j in 0..ny {
                    solver.grid.u[i * ny + j] = design.u_inlet;
                }
            }
        }
        solver.apply_boundary_velocity();
        solver.zero_fixed();
        // The impulsively started flow is the divergence-free projection of
        // the initial field; the reported pressure comes from one trial step.
        if cfg.initial == InitialCondition::Rest {
            let mut u = solver.grid.u.clone();
            let mut v = solver.grid.v.clone();
            u[nx * ny..].copy_from_slice(&solver.grid.u[(nx - 1) * ny..nx * ny]);
            solver.project(&mut u, &mut v, 1.0)?;
            solver.grid.u = u;
            solver.grid.v = v;
            solver.grid.p.iter_mut().for_each(|p| *p = 0.0);
        }
        let mut trial = Self::clone_state(&solver);
        trial.step()?;
        solver.grid.p = trial.grid.p;
        Ok(solver)
    }

    fn clone_state(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            nu: self.nu,
            dt: self.dt,
            projector: match &self.projector {
                Projector::Channel(f) => Projector::Channel(f.clone()),
                Projector::Periodic => Projector::Periodic,
            },
            inlet: self.inlet.clone(),
            force_shape: self.force_shape.clone(),
            kick_amplitude: self.kick_amplitude,
            kick_duration: self.kick_duration,
            u_ref: self.u_ref,
            time: self.time,
            stats: self.stats.clone(),
            scratch: Scratch::default(),
        }
    }

    /// Doubly periodic box `[0, 2 pi]^2` on an `n x n` grid.
    pub fn periodic(n: usize, nu: f64, dt: f64) -> Self {
        let h = 2.0 * std::f64::consts::PI / n as f64;
        let grid = MacGrid {
            nx: n,
            ny: n,
            h,
            boundary: Boundary::Periodic,
            wall_sign: 1.0,
            u: vec![0.0; n * n],
            v: vec![0.0; n * n],
            p: vec![0.0; n * n],
            solid: vec![false; n * n],
            u_fixed: vec![false; n * n],
            v_fixed: vec![false; n * n],
        };
        Self {
            grid,
            nu,
            dt,
            projector: Projector::Periodic,
            inlet: Vec::new(),
            force_shape: vec![0.0; n * n],
            kick_amplitude: 0.0,
            kick_duration: 0.0,
            u_ref: 1.0,
            time: 0.0,
            stats: SolverStats::default(),
            scratch: Scratch::default(),
        }
    }

    pub fn h(&self) -> f64 {
        self.grid.h
    }

    fn apply_boundary_velocity(&mut self) {
        if self.grid.boundary == Boundary::Channel {
            for (j, &ui) in self.inlet.iter().enumerate() {
                self.grid.u[j] = ui;
            }
        }
    }

    fn zero_fixed(&mut self) {
        let g = &mut self.grid;
        if g.boundary == Boundary::Periodic {
            return;
        }
        for (k, fixed) in g.u_fixed.iter().enumerate() {
            if *fixed && k >= g.ny {
                g.u[k] = 0.0;
            }
        }
        for (k, fixed) in g.v_fixed.iter().enumerate() {
            if *fixed {
                g.v[k] = 0.0;
            }
        }
    }

    /// Solves for the pressure that makes `(u, v)` divergence free and
    /// applies the correction. `dt` scales the pressure.
    fn project(&mut self, u: &mut [f64], v: &mut [f64], dt: f64) -> Result<(), DatagenError> {
        let g = &self.grid;
        let (nx, ny, h) = (g.nx, g.ny, g.h);
        let mut rhs = std::mem::take(&mut self.scratch.rhs);
        rhs.clear();
        rhs.resize(nx * ny, 0.0);
        for i in 0..nx {
            for j in 0..ny {
                let k = g.pi(i, j);
                if !g.solid[k] {
                    rhs[k] = -g.divergence(u, v, i, j) * h * h / dt;
                }
            }
        }
        match &self.projector {
            Projector::Channel(factor) => factor.solve_in_place(&mut rhs),
            Projector::Periodic => {
                let mut x = self.grid.p.clone();
                periodic_cg(nx, ny, &rhs, &mut x, 1e-13, 20 * nx * ny)?;
                rhs.copy_from_slice(&x);
            }
        }
        let g = &mut self.grid;
        g.p.copy_from_slice(&rhs);
        self.scratch.rhs = rhs;
        let p = &self.grid.p;
        let g = &self.grid;
        let scale = dt / h;
        match g.boundary {
            Boundary::Channel => {
                for i in 1..nx {
                    for j in 0..ny {
                        let k = g.ui(i, j);
                        if !g.u_fixed[k] {
                            u[k] -= scale * (p[g.pi(i, j)] - p[g.pi(i - 1, j)]);
                        }
                    }
                }
                for j in 0..ny {
                    let k = g.ui(nx, j);
                    u[k] -= scale * (0.0 - p[g.pi(nx - 1, j)]) * 2.0;
                }
                for i in 0..nx {
                    for j in 1..ny {
                        let k = g.vi(i, j);
                        if !g.v_fixed[k] {
                            v[k] -= scale * (p[g.pi(i, j)] - p[g.pi(i, j - 1)]);
                        }
                    }
                }
            }
            Boundary::Periodic => {
                for i in 0..nx {
                    let im = (i + nx - 1) % nx;
                    for j in 0..ny {
                        let jm = (j + ny - 1) % ny;
                        u[g.ui(i, j)] -= scale * (p[g.pi(i, j)] - p[g.pi(im, j)]);
                        v[g.vi(i, j)] -= scale * (p[g.pi(i, j)] - p[g.pi(i, jm)]);
                    }
                }
            }
        }
        Ok(())
    }

    fn force_at(&self, t: f64, out: &mut Vec<f64>) {
        out.clear();
        out.resize(self.force_shape.len(), 0.0);
        if self.kick_amplitude == 0.0 || t >= self.kick_duration {
            return;
        }
        let env = (std::f64::consts::PI * t / self.kick_duration).sin().powi(2);
        let a = self.kick_amplitude * env;
        for (o, s) in out.iter_mut().zip(&self.force_shape) {
            *o = a * s;
        }
    }

    /// Advances one time step.
    pub fn step(&mut self) -> Result<(), DatagenError> {
        let dt = self.dt;
        let nu = self.nu;
        let mut s = std::mem::take(&mut self.scratch);
        let nu_len = self.grid.u.len();
        let nv_len = self.grid.v.len();
        for buf in [&mut s.du0, &mut s.du1, &mut s.u1] {
            buf.resize(nu_len, 0.0);
        }
        for buf in [&mut s.dv0, &mut s.dv1, &mut s.v1] {
            buf.resize(nv_len, 0.0);
        }

        // Heun predictor
        self.force_at(self.time, &mut s.force);
        self.grid
            .tendency(&self.grid.u, &self.grid.v, nu, &s.force, &mut s.du0, &mut s.dv0);
        for k in 0..nu_len {
            s.u1[k] = self.grid.u[k] + dt * s.du0[k];
        }
        for k in 0..nv_len {
            s.v1[k] = self.grid.v[k] + dt * s.dv0[k];
        }
        self.fix_outlet(&mut s.u1);
        // Projecting the intermediate stage keeps the scheme second order in
        // time; otherwise the gradient part of the tendency leaks into stage 2.
        let (mut u1, mut v1) = (std::mem::take(&mut s.u1), std::mem::take(&mut s.v1));
        self.scratch.rhs = std::mem::take(&mut s.rhs);
        self.project(&mut u1, &mut v1, dt)?;
        s.rhs = std::mem::take(&mut self.scratch.rhs);
        s.u1 = u1;
        s.v1 = v1;
        self.force_at(self.time + dt, &mut s.force);
        self.grid.tendency(&s.u1, &s.v1, nu, &s.force, &mut s.du1, &mut s.dv1);
        let mut u_star = self.grid.u.clone();
        let mut v_star = self.grid.v.clone();
        for k in 0..nu_len {
            u_star[k] += 0.5 * dt * (s.du0[k] + s.du1[k]);
        }
        for k in 0..nv_len {
            v_star[k] += 0.5 * dt * (s.dv0[k] + s.dv1[k]);
        }
        self.fix_outlet(&mut u_star);
        self.scratch = s;

        self.project(&mut u_star, &mut v_star, dt)?;
        self.grid.u = u_star;
        self.grid.v = v_star;
        self.time += dt;
        self.stats.steps += 1;

        let div = self.grid.max_divergence() * self.grid.h / self.u_ref;
        self.stats.max_divergence = self.stats.max_divergence.max(div);
        let mut vmax: f64 = 0.0;
        for &x in self.grid.u.iter().chain(&self.grid.v) {
            if !x.is_finite() {
                vmax = f64::INFINITY;
                break;
            }
            vmax = vmax.max(x.abs());
        }
        let cfl = vmax * dt / self.grid.h;
        self.stats.max_cfl = self.stats.max_cfl.max(cfl);
        if !(cfl <= 1.0) {
            return Err(DatagenError::Instability {
                step: self.stats.steps,
                cfl,
            });
        }
        Ok(())
    }

    fn fix_outlet(&self, u: &mut [f64]) {
        if self.grid.boundary == Boundary::Channel {
            let (nx, ny) = (self.grid.nx, self.grid.ny);
            let (head, tail) = u.split_at_mut(nx * ny);
            tail.copy_from_slice(&head[(nx - 1) * ny..]);
        }
    }

    /// Bilinear samples of `u`, `v`, `p` at channel coordinates `(x, y)`.
    pub fn sample(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let g = &self.grid;
        let h = g.h;
        let u = bilinear(x / h, y / h - 0.5, |i, j| g.u_at(&g.u, i, j));
        let v = bilinear(x / h - 0.5, y / h, |i, j| g.v_at(&g.v, i, j));
        let p = bilinear(x / h - 0.5, y / h - 0.5, |i, j| self.p_at(i, j));
        (u, v, p)
    }

    fn p_at(&self, i: isize, j: isize) -> f64 {
        let g = &self.grid;
        let (nx, ny) = (g.nx as isize, g.ny as isize);
        match g.boundary {
            Boundary::Periodic => g.p[g.pi(i.rem_euclid(nx) as usize, j.rem_euclid(ny) as usize)],
            Boundary::Channel => {
                let jj = j.clamp(0, ny - 1) as usize;
                if i >= nx {
                    -g.p[g.pi(g.nx - 1, jj)]
                } else {
                    g.p[g.pi(i.max(0) as usize, jj)]
                }
            }
        }
    }

    /// Samples the ROI of `geometry` on `roi`.
    pub fn snapshot(&self, geometry: &ChannelGeometry, roi: &RoiGrid, t: f64) -> FieldSnapshot {
        let (ox, oy) = geometry.roi_origin();
        let n = roi.len();
        let mut snap = FieldSnapshot {
            t,
            u: vec![0.0; n],
            v: vec![0.0; n],
            p: vec![0.0; n],
        };
        for j in 0..roi.ny {
            for i in 0..roi.nx {
                let (u, v, p) = self.sample(ox + roi.x(i), oy + roi.y(j));
                let k = roi.index(i, j);
                snap.u[k] = u;
                snap.v[k] = v;
                snap.p[k] = p;
            }
        }
        snap
    }

    /// Largest `|u|` over faces touching a solid cell.
    pub fn max_masked_velocity(&self) -> f64 {
        let g = &self.grid;
        let mut m: f64 = 0.0;
        for i in 0..g.nx {
            for j in 0..g.ny {
                if g.solid[g.pi(i, j)] {
                    m = m
                        .max(g.u[g.ui(i, j)].abs())
                        .max(g.u[g.ui(i + 1, j)].abs())
                        .max(g.v[g.vi(i, j)].abs())
                        .max(g.v[g.vi(i, j + 1)].abs());
                }
            }
        }
        m
    }

    pub fn solid_cells(&self) -> usize {
        self.grid.solid.iter().filter(|s| **s).count()
    }
}

fn bilinear(fi: f64, fj: f64, at: impl Fn(isize, isize) -> f64) -> f64 {
    let i0 = fi.floor();
    let j0 = fj.floor();
    let (ax, ay) = (fi - i0, fj - j0);
    let (i0, j0) = (i0 as isize, j0 as isize);
    let f00 = at(i0, j0);
    let f10 = at(i0 + 1, j0);
    let f01 = at(i0, j0 + 1);
    let f11 = at(i0 + 1, j0 + 1);
    (1.0 - ax) * ((1.0 - ay) * f00 + ay * f01) + ax * ((1.0 - ay) * f10 + ay * f11)
}

/// Output time stamp `k * cadence`, rounded to 1e-9 so stamps are exact
/// decimal neighbours.
pub fn stamp(k: usize, cadence: f64) -> f64 {
    ((k as f64 * cadence) * 1e9).round() / 1e9
}

/// Runs the channel simulation for one design and returns every ROI
/// snapshot from `t = 0` to `end_time`.
pub fn simulate(
    design: DesignPoint,
    geometry: &ChannelGeometry,
    cfg: &SolverConfig,
) -> Result<Vec<FieldSnapshot>, DatagenError> {
    simulate_with_stats(design, geometry, cfg).map(|(s, _)| s)
}

pub fn simulate_with_stats(
    design: DesignPoint,
    geometry: &ChannelGeometry,
    cfg: &SolverConfig,
) -> Result<(Vec<FieldSnapshot>, SolverStats), DatagenError> {
    let mut solver = FlowSolver::channel(design, geometry, cfg)?;
    let roi = RoiGrid::new(cfg.roi_nx, cfg.roi_ny, geometry);
    let per = cfg.steps_per_output();
    let count = cfg.output_count();
    let mut out = Vec::with_capacity(count);
    out.push(solver.snapshot(geometry, &roi, 0.0));
    for k in 1..count {
        for _ in 0..per {
            solver.step()?;
        }
        out.push(solver.snapshot(geometry, &roi, stamp(k, cfg.output_cadence)));
    }
    Ok((out, solver.stats))
}
