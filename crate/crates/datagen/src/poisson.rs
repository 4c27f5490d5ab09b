//! Linear solvers for the pressure equation.
//!
//! The channel operator is factored once with a banded Cholesky
//! decomposition and reused every step. The periodic operator (singular,
//! constants in its null space) is solved with conjugate gradients on the
//! zero-mean subspace.

use crate::DatagenError;

/// Symmetric positive definite matrix stored as its lower band.
///
/// Entry `(k, k - d)` lives at `band[k * (bw + 1) + d]` for `d <= bw`.
#[derive(Clone, Debug)]
pub struct BandedSpd {
    n: usize,
    bw: usize,
    band: Vec<f64>,
}

impl BandedSpd {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            band: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Adds `value` at `(row, col)` with `col <= row`.
    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(col <= row && row - col <= self.bw);
        self.band[row * (self.bw + 1) + (row - col)] += value;
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let (r, c) = if col <= row { (row, col) } else { (col, row) };
        if r - c > self.bw {
            0.0
        } else {
            self.band[r * (self.bw + 1) + (r - c)]
        }
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let w = self.bw + 1;
        y.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..self.n {
            let row = &self.band[k * w..(k + 1) * w];
            y[k] += row[0] * x[k];
            for d in 1..=self.bw.min(k) {
                let a = row[d];
                if a != 0.0 {
                    y[k] += a * x[k - d];
                    y[k - d] += a * x[k];
                }
            }
        }
    }

    pub fn cholesky(&self) -> Result<BandedCholesky, DatagenError> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        let mut l = self.band.clone();
        for k in 0..n {
            let dmax = bw.min(k);
            for d in (1..=dmax).rev() {
                let j = k - d;
                // L[k][j] = (A[k][j] - sum_m L[k][m] L[j][m]) / L[j][j], m < j
                // column m = k - e sits at offset e - d in row j
                let mut s = l[k * w + d];
                for e in (d + 1)..=dmax {
                    s -= l[k * w + e] * l[j * w + (e - d)];
                }
                l[k * w + d] = s / l[j * w];
            }
            let mut diag = l[k * w];
            for d in 1..=dmax {
                diag -= l[k * w + d] * l[k * w + d];
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(DatagenError::SolverFailure(format!(
                    "pressure matrix is not positive definite at row {k}"
                )));
            }
            l[k * w] = diag.sqrt();
        }
        Ok(BandedCholesky { n, bw, l })
    }
}

/// Lower-triangular banded factor `L` with `A = L L^T`.
#[derive(Clone, Debug)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandedCholesky {
    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let w = self.bw + 1;
        for k in 0..self.n {
            let mut s = b[k];
            for d in 1..=self.bw.min(k) {
                s -= self.l[k * w + d] * b[k - d];
            }
            b[k] = s / self.l[k * w];
        }
        for k in (0..self.n).rev() {
            let mut s = b[k];
            for d in 1..=self.bw.min(self.n - 1 - k) {
                s -= self.l[(k + d) * w + d] * b[k + d];
            }
            b[k] = s / self.l[k * w];
        }
    }
}

/// Conjugate gradients for the periodic five-point operator
/// `(A p)_c = 4 p_c - sum of the four neighbours` on an `n x m` torus.
///
/// The right-hand side is projected to zero mean and the solution is
/// returned with zero mean. `x` holds the initial guess on entry.
pub fn periodic_cg(
    nx: usize,
    ny: usize,
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<usize, DatagenError> {
    let n = nx * ny;
    let apply = |p: &[f64], out: &mut [f64]| {
        for i in 0..nx {
            let ip = (i + 1) % nx;
            let im = (i + nx - 1) % nx;
            for j in 0..ny {
                let jp = (j + 1) % ny;
                let jm = (j + ny - 1) % ny;
                out[i * ny + j] = 4.0 * p[i * ny + j]
                    - p[ip * ny + j]
                    - p[im * ny + j]
                    - p[i * ny + jp]
                    - p[i * ny + jm];
            }
        }
    };
    let mean = b.iter().sum::<f64>() / n as f64;
    let rhs: Vec<f64> = b.iter().map(|v| v - mean).collect();
    let bnorm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    let xm = x.iter().sum::<f64>() / n as f64;
    x.iter_mut().for_each(|v| *v -= xm);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut p = r.clone();
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        if rr.sqrt() <= rel_tol * bnorm {
            let m = x.iter().sum::<f64>() / n as f64;
            x.iter_mut().for_each(|v| *v -= m);
            return Ok(it);
        }
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            break;
        }
        let alpha = rr / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rr_new / rr;
        rr = rr_new;
        for k in 0..n {
            p[k] = r[k] + beta * p[k];
        }
    }
    Err(DatagenError::SolverFailure(format!(
        "periodic pressure solve did not converge in {max_iter} iterations"
    )))
}
