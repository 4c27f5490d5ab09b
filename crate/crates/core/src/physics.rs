//! Incompressible Navier-Stokes residual on network outputs, and the
//! Reynolds-number and shedding-frequency helpers.

use fcpinn_autodiff::{GradientRequest, Graph, NodeId};
use fcpinn_datagen::DesignPoint;

use crate::model::{prediction_graph, SurrogateParams};
use crate::{CoreError, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluidConstants {
    pub nu: f64,
}

impl Default for FluidConstants {
    fn default() -> Self {
        Self { nu: 0.001 }
    }
}

impl FluidConstants {
    pub fn new(nu: f64) -> Result<Self> {
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(CoreError::Config(format!("viscosity must be positive, got {nu}")));
        }
        Ok(Self { nu })
    }
}

/// Momentum (x, y) and continuity residuals at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualTriple {
    pub r_momentum_x: f64,
    pub r_momentum_y: f64,
    pub r_continuity: f64,
}

impl ResidualTriple {
    pub fn squared_norm(&self) -> f64 {
        self.r_momentum_x.powi(2) + self.r_momentum_y.powi(2) + self.r_continuity.powi(2)
    }
}

/// Mean of the squared residual norms.
pub fn mean_squared_residual(rs: &[ResidualTriple]) -> Result<f64> {
    if rs.is_empty() {
        return Err(CoreError::EmptyBatch);
    }
    Ok(rs.iter().map(ResidualTriple::squared_norm).sum::<f64>() / rs.len() as f64)
}

pub fn reynolds(d: DesignPoint, c: &FluidConstants) -> f64 {
    d.u_inlet * d.d_y / c.nu
}

/// Empirical vortex-shedding frequency (cycles per unit time), valid for
/// `Re > 21`.
pub fn shedding_frequency(d: DesignPoint, c: &FluidConstants) -> Result<f64> {
    let re = reynolds(d, c);
    if !(re > 21.0) {
        return Err(CoreError::OutOfValidity(re));
    }
    Ok(0.21 * (1.0 - 21.0 / re) * (d.u_inlet / d.d_y))
}

/// Residuals of the fields `[u, v, p]` held in `g`, differentiated with
/// respect to the tags `x`, `y`, `t`.
pub fn residual_of_fields(g: &mut Graph, fields: [NodeId; 3], c: &FluidConstants) -> Result<ResidualTriple> {
    let [u, v, p] = fields;
    let values = [g.evaluate(u)?, g.evaluate(v)?, g.evaluate(p)?];
    let first = |g: &mut Graph, f: NodeId| g.derivative(&GradientRequest::first(f, &["t", "x", "y"]));
    let du = first(g, u)?;
    let dv = first(g, v)?;
    let dp = first(g, p)?;
    // full 2x2 Hessians in (x, y); diagonal entries are the pure partials
    let hu = g.derivative(&GradientRequest::second(u, &["x", "y"]))?;
    let hv = g.derivative(&GradientRequest::second(v, &["x", "y"]))?;
    let (uu, vv) = (values[0], values[1]);
    let r = ResidualTriple {
        r_momentum_x: du[0] + uu * du[1] + vv * du[2] + dp[1] - c.nu * (hu[0] + hu[3]),
        r_momentum_y: dv[0] + uu * dv[1] + vv * dv[2] + dp[2] - c.nu * (hv[0] + hv[3]),
        r_continuity: du[1] + dv[2],
    };
    if !(r.r_momentum_x.is_finite() && r.r_momentum_y.is_finite() && r.r_continuity.is_finite()) {
        return Err(CoreError::PoisonedParameters("non-finite residual derivative".into()));
    }
    Ok(r)
}

/// Navier-Stokes residual of the network prediction at `(x, y, t)`, in
/// physical coordinates.
pub fn residual_at(
    params: &SurrogateParams,
    x: f64,
    y: f64,
    t: f64,
    d: DesignPoint,
    c: &FluidConstants,
) -> Result<ResidualTriple> {
    let (mut g, out) = prediction_graph(params, x, y, t, d)?;
    residual_of_fields(&mut g, out, c)
}
