//! Channel, cylinder and region-of-interest geometry.

use crate::DatagenError;

/// One geometry/boundary-condition configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DesignPoint {
    pub u_inlet: f64,
    pub d_y: f64,
}

impl DesignPoint {
    pub const U_INLET_RANGE: (f64, f64) = (0.8, 1.0);
    pub const D_Y_RANGE: (f64, f64) = (0.08, 0.11);

    pub fn new(u_inlet: f64, d_y: f64) -> Self {
        Self { u_inlet, d_y }
    }

    /// Whether the point lies inside the design box used for training.
    pub fn in_design_box(&self) -> bool {
        let tol = 1e-12;
        let (ul, uh) = Self::U_INLET_RANGE;
        let (dl, dh) = Self::D_Y_RANGE;
        self.u_inlet >= ul - tol
            && self.u_inlet <= uh + tol
            && self.d_y >= dl - tol
            && self.d_y <= dh + tol
    }

    /// Equality on the 1e-9 grid used for design keys.
    pub fn same_as(&self, other: &DesignPoint) -> bool {
        (self.u_inlet - other.u_inlet).abs() < 1e-9 && (self.d_y - other.d_y).abs() < 1e-9
    }

    /// Short label such as `0.8_0.08`.
    pub fn label(&self) -> String {
        format!("{}_{}", fmt_short(self.u_inlet), fmt_short(self.d_y))
    }
}

/// Formats a value with at most six decimals and no trailing zeros.
pub fn fmt_short(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0');
    let s = s.trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// The twelve design combinations of the full study, in table order.
pub fn all_designs() -> Vec<DesignPoint> {
    let mut out = Vec::with_capacity(12);
    for u in [0.8, 0.9, 1.0] {
        for d in [0.08, 0.09, 0.10, 0.11] {
            out.push(DesignPoint::new(u, d));
        }
    }
    out
}

/// Rectangular channel with an elliptical cylinder and a sampling window.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelGeometry {
    pub length: f64,
    pub width: f64,
    pub center_x: f64,
    pub center_y: f64,
    pub d_x: f64,
    pub d_y: f64,
    /// Horizontal distance from the cylinder center to the ROI's left edge.
    pub roi_offset: f64,
    pub roi_length: f64,
    pub roi_width: f64,
}

impl ChannelGeometry {
    pub fn new(d_y: f64) -> Self {
        Self {
            length: 1.8,
            width: 0.4,
            center_x: 0.2,
            center_y: 0.2,
            d_x: 0.1,
            d_y,
            roi_offset: 0.1,
            roi_length: 1.5,
            roi_width: 0.3,
        }
    }

    /// Lower-left corner of the ROI in channel coordinates.
    pub fn roi_origin(&self) -> (f64, f64) {
        (
            self.center_x + self.roi_offset,
            self.center_y - 0.5 * self.roi_width,
        )
    }

    pub fn inside_cylinder(&self, x: f64, y: f64) -> bool {
        let ax = 0.5 * self.d_x;
        let ay = 0.5 * self.d_y;
        let dx = (x - self.center_x) / ax;
        let dy = (y - self.center_y) / ay;
        dx * dx + dy * dy <= 1.0
    }

    pub fn validate(&self) -> Result<(), DatagenError> {
        let (ox, oy) = self.roi_origin();
        let roi_ok = ox >= 0.0
            && oy >= 0.0
            && ox + self.roi_length <= self.length + 1e-12
            && oy + self.roi_width <= self.width + 1e-12;
        if !roi_ok {
            return Err(DatagenError::Config(
                "region of interest leaves the channel".into(),
            ));
        }
        if !(self.d_y > 0.0) || self.center_y - 0.5 * self.d_y <= 0.0
            || self.center_y + 0.5 * self.d_y >= self.width
        {
            return Err(DatagenError::Config(format!(
                "cylinder with d_y = {} intersects the channel walls",
                self.d_y
            )));
        }
        Ok(())
    }
}

/// Uniform sampling grid over the ROI, in ROI-local coordinates
/// (`x` in `[0, roi_length]`, `y` in `[0, roi_width]`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoiGrid {
    pub nx: usize,
    pub ny: usize,
    pub length: f64,
    pub width: f64,
}

impl RoiGrid {
    pub fn new(nx: usize, ny: usize, geometry: &ChannelGeometry) -> Self {
        Self {
            nx,
            ny,
            length: geometry.roi_length,
            width: geometry.roi_width,
        }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self, i: usize) -> f64 {
        if self.nx <= 1 {
            0.0
        } else {
            self.length * i as f64 / (self.nx - 1) as f64
        }
    }

    pub fn y(&self, j: usize) -> f64 {
        if self.ny <= 1 {
            0.0
        } else {
            self.width * j as f64 / (self.ny - 1) as f64
        }
    }

    /// Flat index of point `(i, j)`; rows run along `x`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roi_sits_downstream_of_the_cylinder() {
        let g = ChannelGeometry::new(0.1);
        let (ox, oy) = g.roi_origin();
        assert!((ox - 0.3).abs() < 1e-12 && (oy - 0.05).abs() < 1e-12);
        g.validate().unwrap();
        assert!(g.inside_cylinder(0.2, 0.2));
        assert!(!g.inside_cylinder(0.26, 0.2));
    }

    #[test]
    fn largest_design_clears_the_walls() {
        for d in all_designs() {
            ChannelGeometry::new(d.d_y).validate().unwrap();
        }
        assert!(ChannelGeometry::new(0.5).validate().is_err());
    }

    #[test]
    fn labels_are_compact() {
        assert_eq!(DesignPoint::new(0.8, 0.1).label(), "0.8_0.1");
        assert_eq!(DesignPoint::new(1.0, 0.11).label(), "1_0.11");
        assert_eq!(fmt_short(4.65), "4.65");
    }

    #[test]
    fn roi_grid_spacing() {
        let g = ChannelGeometry::new(0.1);
        let r = RoiGrid::new(151, 31, &g);
        assert!((r.x(1) - 0.01).abs() < 1e-15);
        assert!((r.x(150) - 1.5).abs() < 1e-15);
        assert!((r.y(30) - 0.3).abs() < 1e-15);
        assert_eq!(r.len(), 4681);
    }
}
