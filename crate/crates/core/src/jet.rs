//! Batched, differentiable forward passes on the reverse-mode tape.
//!
//! For the residual the trunk is pushed forward with derivative channels:
//! alongside the activations `h` it carries `dh/dx`, `dh/dy`, `dh/dt`,
//! `d2h/dx2` and `d2h/dy2` (all with respect to physical coordinates).
//! Linear layers act on every channel (bias only on the value), and tanh
//! follows the chain rule
//!
//! ```text
//! h' = s z',   h'' = s z'' - 2 h s z'^2,   s = 1 - h^2.
//! ```
//!
//! The tape then differentiates the resulting losses with respect to the
//! weights, so parameter gradients include the path through the input
//! derivatives.

use fcpinn_autodiff::{Gradients, Tape, Var};
use ndarray::{s, Array2, ArrayView2};
use rand_chacha::ChaCha8Rng;

use crate::model::{dropout_mask, input_scale, normalize, SurrogateParams, Variant, N_FOURIER};
use crate::Result;

/// Tape handles of every weight and bias, in [`SurrogateParams::tensors`]
/// order.
pub struct ParamVars {
    ffm: Vec<(Var, Var)>,
    trunk: Vec<(Var, Var)>,
}

impl ParamVars {
    pub fn register(tape: &mut Tape, params: &SurrogateParams) -> Self {
        let mut reg = |layers: &[crate::model::Dense]| {
            layers
                .iter()
                .map(|d| (tape.leaf(d.w.clone(), true), tape.leaf(d.b.clone(), true)))
                .collect::<Vec<_>>()
        };
        let ffm = reg(&params.ffm);
        let trunk = reg(&params.trunk);
        Self { ffm, trunk }
    }

    pub fn vars(&self) -> Vec<Var> {
        self.ffm
            .iter()
            .chain(&self.trunk)
            .flat_map(|&(w, b)| [w, b])
            .collect()
    }

    /// Gradient tensors in [`SurrogateParams::tensors`] order; zeros where
    /// the loss did not reach a parameter.
    pub fn collect(&self, tape: &Tape, grads: &mut Gradients) -> Vec<Array2<f64>> {
        self.vars()
            .into_iter()
            .map(|v| grads.take(v).unwrap_or_else(|| Array2::zeros(tape.shape(v))))
            .collect()
    }
}

/// Dropout masks for the FFM hidden layers of one batch.
pub fn ffm_masks(params: &SurrogateParams, rows: usize, rng: Option<&mut ChaCha8Rng>) -> Vec<Array2<f64>> {
    match rng {
        Some(rng) if params.arch.dropout > 0.0 && params.arch.variant == Variant::Full => {
            let hidden = params.ffm.len() - 1;
            (0..hidden)
                .map(|l| dropout_mask(rng, rows, params.ffm[l].fan_out(), params.arch.dropout))
                .collect()
        }
        _ => Vec::new(),
    }
}

fn normalized_inputs(inputs: ArrayView2<f64>) -> Array2<f64> {
    let mut h = inputs.to_owned();
    for k in 0..5 {
        h.column_mut(k).mapv_inplace(|v| normalize(k, v));
    }
    h
}

/// FFM output (`n x 10`) on the tape.
fn ffm_tape(tape: &mut Tape, pv: &ParamVars, inputs: ArrayView2<f64>, masks: &[Array2<f64>]) -> Result<Var> {
    let mut design = inputs.slice(s![.., 3..5]).to_owned();
    design.column_mut(0).mapv_inplace(|v| normalize(3, v));
    design.column_mut(1).mapv_inplace(|v| normalize(4, v));
    let mut h = tape.constant(design);
    let last = pv.ffm.len() - 1;
    for (l, &(w, b)) in pv.ffm.iter().enumerate() {
        let z = tape.matmul(h, w)?;
        let mut z = tape.add_row(z, b)?;
        if l == last {
            return Ok(z);
        }
        if let Some(m) = masks.get(l) {
            let mv = tape.constant(m.clone());
            z = tape.mul(z, mv)?;
        }
        h = tape.tanh(z);
    }
    unreachable!("the FFM always has an output layer")
}

/// Network output (`n x 3`) for raw rows `(x, y, t, u_inlet, d_y)`.
pub fn predict_tape(
    tape: &mut Tape,
    pv: &ParamVars,
    params: &SurrogateParams,
    inputs: ArrayView2<f64>,
    masks: &[Array2<f64>],
) -> Result<Var> {
    let coords = tape.constant(normalized_inputs(inputs));
    let mut h = match params.arch.variant {
        Variant::NoFfm => coords,
        Variant::Full => {
            let f = ffm_tape(tape, pv, inputs, masks)?;
            let t = tape.constant(inputs.slice(s![.., 2..3]).to_owned());
            let freq = tape.cols(f, 0, N_FOURIER)?;
            let phase = tape.cols(f, N_FOURIER, 2 * N_FOURIER)?;
            let ft = tape.mul_col(freq, t)?;
            let arg = tape.add(ft, phase)?;
            let sn = tape.sin(arg);
            let cs = tape.cos(arg);
            tape.hcat(&[coords, sn, cs])?
        }
    };
    let last = pv.trunk.len() - 1;
    for (l, &(w, b)) in pv.trunk.iter().enumerate() {
        let z = tape.matmul(h, w)?;
        let z = tape.add_row(z, b)?;
        h = if l == last { z } else { tape.tanh(z) };
    }
    Ok(h)
}

/// Outputs and their physical-coordinate derivatives, each `n x 3`
/// (columns `u, v, p`).
pub struct Jets {
    pub value: Var,
    pub dx: Var,
    pub dy: Var,
    pub dt: Var,
    pub dxx: Var,
    pub dyy: Var,
}

struct Channels {
    value: Var,
    dx: Var,
    dy: Var,
    dt: Var,
    dxx: Option<Var>,
    dyy: Option<Var>,
}

fn linear_channels(tape: &mut Tape, c: &Channels, w: Var, b: Var) -> Result<Channels> {
    let z = tape.matmul(c.value, w)?;
    let value = tape.add_row(z, b)?;
    let dx = tape.matmul(c.dx, w)?;
    let dy = tape.matmul(c.dy, w)?;
    let dt = tape.matmul(c.dt, w)?;
    let dxx = c.dxx.map(|v| tape.matmul(v, w)).transpose()?;
    let dyy = c.dyy.map(|v| tape.matmul(v, w)).transpose()?;
    Ok(Channels { value, dx, dy, dt, dxx, dyy })
}

fn tanh_channels(tape: &mut Tape, z: &Channels) -> Result<Channels> {
    let h = tape.tanh(z.value);
    let h2 = tape.mul(h, h)?;
    let neg = tape.scale(h2, -1.0);
    let s = tape.shift(neg, 1.0);
    let hs = tape.mul(h, s)?;
    let dx = tape.mul(s, z.dx)?;
    let dy = tape.mul(s, z.dy)?;
    let dt = tape.mul(s, z.dt)?;
    let mut second = |zd: Var, zdd: Option<Var>| -> Result<Var> {
        let zd2 = tape.mul(zd, zd)?;
        let curv = tape.mul(hs, zd2)?;
        let curv = tape.scale(curv, -2.0);
        Ok(match zdd {
            Some(zdd) => {
                let lin = tape.mul(s, zdd)?;
                tape.add(lin, curv)?
            }
            None => curv,
        })
    };
    let dxx = Some(second(z.dx, z.dxx)?);
    let dyy = Some(second(z.dy, z.dyy)?);
    Ok(Channels { value: h, dx, dy, dt, dxx, dyy })
}

/// Forward pass with derivative channels for collocation rows
/// `(x, y, t, u_inlet, d_y)`.
pub fn jets_tape(
    tape: &mut Tape,
    pv: &ParamVars,
    params: &SurrogateParams,
    inputs: ArrayView2<f64>,
    masks: &[Array2<f64>],
) -> Result<Jets> {
    let n = inputs.nrows();
    let width = params.arch.trunk_inputs();
    let seed = |k: usize| {
        let mut m = Array2::zeros((n, width));
        m.column_mut(k).fill(input_scale(k));
        m
    };
    let coords = tape.constant(normalized_inputs(inputs));
    let (value, dx, dy, dt) = match params.arch.variant {
        Variant::NoFfm => {
            let dx = tape.constant(seed(0));
            let dy = tape.constant(seed(1));
            let dt = tape.constant(seed(2));
            (coords, dx, dy, dt)
        }
        Variant::Full => {
            let f = ffm_tape(tape, pv, inputs, masks)?;
            let t = tape.constant(inputs.slice(s![.., 2..3]).to_owned());
            let freq = tape.cols(f, 0, N_FOURIER)?;
            let phase = tape.cols(f, N_FOURIER, 2 * N_FOURIER)?;
            let ft = tape.mul_col(freq, t)?;
            let arg = tape.add(ft, phase)?;
            let sn = tape.sin(arg);
            let cs = tape.cos(arg);
            let value = tape.hcat(&[coords, sn, cs])?;
            // d/dt sin(F t + phi) = F cos(.), d/dt cos(F t + phi) = -F sin(.)
            let dsn = tape.mul(freq, cs)?;
            let fs = tape.mul(freq, sn)?;
            let dcs = tape.scale(fs, -1.0);
            let mut tseed = Array2::zeros((n, 5));
            tseed.column_mut(2).fill(input_scale(2));
            let tseed = tape.constant(tseed);
            let dt = tape.hcat(&[tseed, dsn, dcs])?;
            let dx = tape.constant(seed(0));
            let dy = tape.constant(seed(1));
            (value, dx, dy, dt)
        }
    };
    let mut c = Channels { value, dx, dy, dt, dxx: None, dyy: None };
    let last = pv.trunk.len() - 1;
    for (l, &(w, b)) in pv.trunk.iter().enumerate() {
        let z = linear_channels(tape, &c, w, b)?;
        c = if l == last { z } else { tanh_channels(tape, &z)? };
    }
    let zeros = |tape: &mut Tape| tape.constant(Array2::zeros((n, 3)));
    let dxx = match c.dxx {
        Some(v) => v,
        None => zeros(tape),
    };
    let dyy = match c.dyy {
        Some(v) => v,
        None => zeros(tape),
    };
    Ok(Jets {
        value: c.value,
        dx: c.dx,
        dy: c.dy,
        dt: c.dt,
        dxx,
        dyy,
    })
}

/// Residual columns `(r_x, r_y, r_c)`, each `n x 1`.
pub fn residual_tape(tape: &mut Tape, j: &Jets, nu: f64) -> Result<(Var, Var, Var)> {
    let col = |tape: &mut Tape, v: Var, k: usize| tape.cols(v, k, k + 1);
    let u = col(tape, j.value, 0)?;
    let v = col(tape, j.value, 1)?;
    let p_x = col(tape, j.dx, 2)?;
    let p_y = col(tape, j.dy, 2)?;
    let momentum = |tape: &mut Tape, k: usize, p_grad: Var| -> Result<Var> {
        let f_t = col(tape, j.dt, k)?;
        let f_x = col(tape, j.dx, k)?;
        let f_y = col(tape, j.dy, k)?;
        let f_xx = col(tape, j.dxx, k)?;
        let f_yy = col(tape, j.dyy, k)?;
        let adv_x = tape.mul(u, f_x)?;
        let adv_y = tape.mul(v, f_y)?;
        let lap = tape.add(f_xx, f_yy)?;
        let visc = tape.scale(lap, -nu);
        let r = tape.add(f_t, adv_x)?;
        let r = tape.add(r, adv_y)?;
        let r = tape.add(r, p_grad)?;
        Ok(tape.add(r, visc)?)
    };
    let rx = momentum(tape, 0, p_x)?;
    let ry = momentum(tape, 1, p_y)?;
    let u_x = col(tape, j.dx, 0)?;
    let v_y = col(tape, j.dy, 1)?;
    let rc = tape.add(u_x, v_y)?;
    Ok((rx, ry, rc))
}

/// Mean over rows of `r_x^2 + r_y^2 + r_c^2` (1 x 1).
pub fn pde_loss_tape(tape: &mut Tape, r: (Var, Var, Var)) -> Result<Var> {
    let sq = |tape: &mut Tape, v: Var| tape.mul(v, v);
    let a = sq(tape, r.0)?;
    let b = sq(tape, r.1)?;
    let c = sq(tape, r.2)?;
    let s = tape.add(a, b)?;
    let s = tape.add(s, c)?;
    Ok(tape.mean(s))
}

/// Mean over rows of the summed squared errors against `labels` (`n x 3`).
pub fn prediction_loss_tape(tape: &mut Tape, pred: Var, labels: Array2<f64>) -> Result<Var> {
    let l = tape.constant(labels);
    let d = tape.sub(pred, l)?;
    let sq = tape.mul(d, d)?;
    let rows = tape.row_sum(sq);
    Ok(tape.mean(rows))
}
