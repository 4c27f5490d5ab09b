//! Batched reverse-mode differentiation over dense matrices.
//!
//! Rows are samples and columns are features. The tape records matrix
//! operations in execution order; [`Tape::backward`] walks it in reverse and
//! returns the gradient of a scalar (1x1) output with respect to every
//! variable created with `requires_grad = true`.

use ndarray::{s, Array2, Axis, Zip};

use crate::DiffError;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum TOp {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    Shift(Var),
    Tanh(Var),
    Sin(Var),
    Cos(Var),
    Cols(Var, usize, usize),
    HCat(Vec<Var>),
    Mean(Var),
    RowSum(Var),
}

struct TNode {
    op: TOp,
    value: Array2<f64>,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<TNode>,
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// Gradient with respect to `v`, `None` when `v` does not influence the
    /// output or was created without `requires_grad`.
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Array2<f64>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: TOp, value: Array2<f64>, needs_grad: bool) -> Var {
        self.nodes.push(TNode {
            op,
            value,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    pub fn leaf(&mut self, value: Array2<f64>, requires_grad: bool) -> Var {
        self.push(TOp::Leaf, value, requires_grad)
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.leaf(value, false)
    }

    fn check_same(&self, op: &'static str, a: Var, b: Var) -> Result<(), DiffError> {
        if self.shape(a) != self.shape(b) {
            return Err(DiffError::Shape {
                op,
                left: self.shape(a),
                right: self.shape(b),
            });
        }
        Ok(())
    }

    /// `a (n x k) . b (k x m)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(DiffError::Shape {
                op: "matmul",
                left: sa,
                right: sb,
            });
        }
        let value = self.value(a).dot(self.value(b));
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(TOp::MatMul(a, b), value, ng))
    }

    /// Adds the `1 x m` row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var, DiffError> {
        let (sa, sb) = (self.shape(a), self.shape(bias));
        if sb.0 != 1 || sa.1 != sb.1 {
            return Err(DiffError::Shape {
                op: "add_row",
                left: sa,
                right: sb,
            });
        }
        let value = self.value(a) + self.value(bias);
        let ng = self.needs(a) || self.needs(bias);
        Ok(self.push(TOp::AddRow(a, bias), value, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.check_same("add", a, b)?;
        let value = self.value(a) + self.value(b);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(TOp::Add(a, b), value, ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.check_same("sub", a, b)?;
        let value = self.value(a) - self.value(b);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(TOp::Sub(a, b), value, ng))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.check_same("mul", a, b)?;
        let value = self.value(a) * self.value(b);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(TOp::Mul(a, b), value, ng))
    }

    /// Multiplies every column of `a` (`n x m`) by the column `col` (`n x 1`).
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var, DiffError> {
        let (sa, sc) = (self.shape(a), self.shape(col));
        if sc.1 != 1 || sa.0 != sc.0 {
            return Err(DiffError::Shape {
                op: "mul_col",
                left: sa,
                right: sc,
            });
        }
        let value = self.value(a) * self.value(col);
        let ng = self.needs(a) || self.needs(col);
        Ok(self.push(TOp::MulCol(a, col), value, ng))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) * c;
        let ng = self.needs(a);
        self.push(TOp::Scale(a, c), value, ng)
    }

    pub fn shift(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) + c;
        let ng = self.needs(a);
        self.push(TOp::Shift(a), value, ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::tanh);
        let ng = self.needs(a);
        self.push(TOp::Tanh(a), value, ng)
    }

    pub fn sin(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::sin);
        let ng = self.needs(a);
        self.push(TOp::Sin(a), value, ng)
    }

    pub fn cos(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::cos);
        let ng = self.needs(a);
        self.push(TOp::Cos(a), value, ng)
    }

    /// Columns `start..end` of `a`.
    pub fn cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var, DiffError> {
        let sa = self.shape(a);
        if start > end || end > sa.1 {
            return Err(DiffError::Shape {
                op: "cols",
                left: sa,
                right: (start, end),
            });
        }
        let value = self.value(a).slice(s![.., start..end]).to_owned();
        let ng = self.needs(a);
        Ok(self.push(TOp::Cols(a, start, end), value, ng))
    }

    /// Horizontal concatenation.
    pub fn hcat(&mut self, parts: &[Var]) -> Result<Var, DiffError> {
        let rows = parts.first().map(|&p| self.shape(p).0).unwrap_or(0);
        for &p in parts {
            if self.shape(p).0 != rows {
                return Err(DiffError::Shape {
                    op: "hcat",
                    left: self.shape(parts[0]),
                    right: self.shape(p),
                });
            }
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut value = Array2::zeros((rows, cols));
        let mut at = 0;
        for &p in parts {
            let w = self.shape(p).1;
            value.slice_mut(s![.., at..at + w]).assign(self.value(p));
            at += w;
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(TOp::HCat(parts.to_vec()), value, ng))
    }

    /// Mean over all entries, as a `1 x 1` matrix.
    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a).mean().unwrap_or(0.0);
        let ng = self.needs(a);
        self.push(TOp::Mean(a), Array2::from_elem((1, 1), m), ng)
    }

    /// Sum across columns, giving an `n x 1` column.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let value = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        let ng = self.needs(a);
        self.push(TOp::RowSum(a), value, ng)
    }

    /// Reverse sweep from the `1 x 1` variable `output`.
    pub fn backward(&self, output: Var) -> Result<Gradients, DiffError> {
        let shape = self.shape(output);
        if shape != (1, 1) {
            return Err(DiffError::Shape {
                op: "backward",
                left: shape,
                right: (1, 1),
            });
        }
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Array2::ones((1, 1)));

        for i in (0..=output.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let node = &self.nodes[i];
            if matches!(node.op, TOp::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            match &node.op {
                TOp::Leaf => unreachable!(),
                TOp::MatMul(a, b) => {
                    if self.needs(*a) {
                        let ga = g.dot(&self.value(*b).t());
                        accumulate(&mut grads, *a, ga);
                    }
                    if self.needs(*b) {
                        let gb = self.value(*a).t().dot(&g);
                        accumulate(&mut grads, *b, gb);
                    }
                }
                TOp::AddRow(a, bias) => {
                    if self.needs(*bias) {
                        let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                        accumulate(&mut grads, *bias, gb);
                    }
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                TOp::Add(a, b) => {
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, g.clone());
                    }
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                TOp::Sub(a, b) => {
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, -&g);
                    }
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                TOp::Mul(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, &g * self.value(*b));
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, &g * self.value(*a));
                    }
                }
                TOp::MulCol(a, col) => {
                    if self.needs(*col) {
                        let gc = (&g * self.value(*a)).sum_axis(Axis(1)).insert_axis(Axis(1));
                        accumulate(&mut grads, *col, gc);
                    }
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, &g * self.value(*col));
                    }
                }
                TOp::Scale(a, c) => accumulate(&mut grads, *a, g * *c),
                TOp::Shift(a) => accumulate(&mut grads, *a, g),
                TOp::Tanh(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(&node.value)
                        .for_each(|gv, &h| *gv *= 1.0 - h * h);
                    accumulate(&mut grads, *a, ga);
                }
                TOp::Sin(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(self.value(*a))
                        .for_each(|gv, &x| *gv *= x.cos());
                    accumulate(&mut grads, *a, ga);
                }
                TOp::Cos(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(self.value(*a))
                        .for_each(|gv, &x| *gv *= -x.sin());
                    accumulate(&mut grads, *a, ga);
                }
                TOp::Cols(a, start, end) => {
                    let mut ga = Array2::zeros(self.shape(*a));
                    ga.slice_mut(s![.., *start..*end]).assign(&g);
                    accumulate(&mut grads, *a, ga);
                }
                TOp::HCat(parts) => {
                    let mut at = 0;
                    for &p in parts {
                        let w = self.shape(p).1;
                        if self.needs(p) {
                            accumulate(&mut grads, p, g.slice(s![.., at..at + w]).to_owned());
                        }
                        at += w;
                    }
                }
                TOp::Mean(a) => {
                    let (r, c) = self.shape(*a);
                    let scale = g[[0, 0]] / (r * c) as f64;
                    accumulate(&mut grads, *a, Array2::from_elem((r, c), scale));
                }
                TOp::RowSum(a) => {
                    let (r, c) = self.shape(*a);
                    let ga = g
                        .broadcast((r, c))
                        .map(|b| b.to_owned())
                        .ok_or(DiffError::Shape {
                            op: "row_sum",
                            left: (r, 1),
                            right: (r, c),
                        })?;
                    accumulate(&mut grads, *a, ga);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Array2<f64>>], target: Var, g: Array2<f64>) {
    match &mut grads[target.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}
