//! Scalar expression graphs with symbolic reverse-mode differentiation.
//!
//! Every node stores its operation and the value computed from its operands
//! at construction time. Derivatives are built as *new nodes* in the same
//! graph, so a derivative node can itself be differentiated again. Second
//! order partials are obtained by differentiating the gradient nodes
//! (reverse-over-reverse).
//!
//! ```
//! use fcpinn_autodiff::graph::{Graph, GradientRequest};
//!
//! let mut g = Graph::new();
//! let x = g.input("x", 2.0).unwrap();
//! let y = g.powi(x, 3);
//! assert_eq!(g.evaluate(y).unwrap(), 8.0);
//! let d = g.derivative(&GradientRequest::first(y, &["x"])).unwrap();
//! assert_eq!(d, vec![12.0]);
//! ```

use std::collections::HashMap;
use std::fmt;

use crate::DiffError;

/// Handle to a node inside a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Identifier of a differentiation variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Tag(u32);

/// The closed set of operations the engine understands.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Op {
    Const,
    Input(Tag),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Neg(NodeId),
    Tanh(NodeId),
    Sin(NodeId),
    Cos(NodeId),
    Exp(NodeId),
    Powi(NodeId, i32),
    Powf(NodeId, f64),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Const => "const",
            Op::Input(_) => "input",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Neg(_) => "neg",
            Op::Tanh(_) => "tanh",
            Op::Sin(_) => "sin",
            Op::Cos(_) => "cos",
            Op::Exp(_) => "exp",
            Op::Powi(..) => "powi",
            Op::Powf(..) => "powf",
        }
    }

    fn operands(&self) -> (Option<NodeId>, Option<NodeId>) {
        match *self {
            Op::Const | Op::Input(_) => (None, None),
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => (Some(a), Some(b)),
            Op::Neg(a)
            | Op::Tanh(a)
            | Op::Sin(a)
            | Op::Cos(a)
            | Op::Exp(a)
            | Op::Powi(a, _)
            | Op::Powf(a, _) => (Some(a), None),
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: f64,
}

/// Order of a [`GradientRequest`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Order {
    First,
    Second,
}

/// Which partial derivatives of `output` to compute.
///
/// First order returns one value per entry of `wrt`. Second order returns
/// the full `n x n` matrix of pure and mixed partials in row-major order,
/// entry `(i, j)` being `d2 output / (d wrt[i] d wrt[j])`.
#[derive(Clone, Debug)]
pub struct GradientRequest {
    pub output: NodeId,
    pub wrt: Vec<String>,
    pub order: Order,
}

impl GradientRequest {
    pub fn first(output: NodeId, wrt: &[&str]) -> Self {
        Self {
            output,
            wrt: wrt.iter().map(|s| s.to_string()).collect(),
            order: Order::First,
        }
    }

    pub fn second(output: NodeId, wrt: &[&str]) -> Self {
        Self {
            output,
            wrt: wrt.iter().map(|s| s.to_string()).collect(),
            order: Order::Second,
        }
    }
}

/// Arena of expression nodes. Operands always precede the nodes that use
/// them, so insertion order is a topological order and the graph is acyclic.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    tags: Vec<String>,
    tag_nodes: Vec<NodeId>,
    tag_lookup: HashMap<String, Tag>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op) -> NodeId {
        let value = self.compute(&op, None);
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node { op, value });
        id
    }

    fn compute(&self, op: &Op, own: Option<f64>) -> f64 {
        let v = |n: NodeId| self.nodes[n.index()].value;
        match *op {
            Op::Const | Op::Input(_) => own.unwrap_or(0.0),
            Op::Add(a, b) => v(a) + v(b),
            Op::Sub(a, b) => v(a) - v(b),
            Op::Mul(a, b) => v(a) * v(b),
            Op::Div(a, b) => v(a) / v(b),
            Op::Neg(a) => -v(a),
            Op::Tanh(a) => v(a).tanh(),
            Op::Sin(a) => v(a).sin(),
            Op::Cos(a) => v(a).cos(),
            Op::Exp(a) => v(a).exp(),
            Op::Powi(a, n) => v(a).powi(n),
            Op::Powf(a, c) => v(a).powf(c),
        }
    }

    pub fn constant(&mut self, value: f64) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node {
            op: Op::Const,
            value,
        });
        id
    }

    /// Registers a differentiation variable named `name`.
    pub fn input(&mut self, name: &str, value: f64) -> Result<NodeId, DiffError> {
        if self.tag_lookup.contains_key(name) {
            return Err(DiffError::DuplicateTag(name.to_string()));
        }
        let tag = Tag(self.tags.len() as u32);
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node {
            op: Op::Input(tag),
            value,
        });
        self.tags.push(name.to_string());
        self.tag_nodes.push(id);
        self.tag_lookup.insert(name.to_string(), tag);
        Ok(id)
    }

    pub fn tag(&self, name: &str) -> Option<Tag> {
        self.tag_lookup.get(name).copied()
    }

    pub fn tag_node(&self, tag: Tag) -> NodeId {
        self.tag_nodes[tag.0 as usize]
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Mul(a, b))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Div(a, b))
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Neg(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Tanh(a))
    }

    pub fn sin(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sin(a))
    }

    pub fn cos(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Cos(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Exp(a))
    }

    pub fn powi(&mut self, a: NodeId, n: i32) -> NodeId {
        self.push(Op::Powi(a, n))
    }

    pub fn powf(&mut self, a: NodeId, c: f64) -> NodeId {
        self.push(Op::Powf(a, c))
    }

    /// `c * a` with `c` a fresh constant node.
    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let k = self.constant(c);
        self.mul(k, a)
    }

    /// Sum of `terms`; a zero constant for an empty slice.
    pub fn sum(&mut self, terms: &[NodeId]) -> NodeId {
        match terms.split_first() {
            None => self.constant(0.0),
            Some((&first, rest)) => rest.iter().fold(first, |acc, &t| self.add(acc, t)),
        }
    }

    /// `bias + sum_k weights[k] * xs[k]`, accumulated left to right.
    pub fn affine(&mut self, weights: &[f64], xs: &[NodeId], bias: f64) -> NodeId {
        debug_assert_eq!(weights.len(), xs.len());
        let mut acc = self.constant(bias);
        for (&w, &x) in weights.iter().zip(xs) {
            let term = self.scale(x, w);
            acc = self.add(acc, term);
        }
        acc
    }

    pub fn op(&self, id: NodeId) -> Op {
        self.nodes[id.index()].op
    }

    /// Value computed during the most recent construction or evaluation.
    pub fn value(&self, id: NodeId) -> f64 {
        self.nodes[id.index()].value
    }

    pub fn set_input(&mut self, name: &str, value: f64) -> Result<(), DiffError> {
        let tag = self
            .tag(name)
            .ok_or_else(|| DiffError::UnknownTag(name.to_string()))?;
        let id = self.tag_node(tag);
        self.nodes[id.index()].value = value;
        Ok(())
    }

    /// Recomputes every node up to `root` from the current leaf values and
    /// returns the value of `root`.
    pub fn evaluate(&mut self, root: NodeId) -> Result<f64, DiffError> {
        for i in 0..=root.index() {
            let op = self.nodes[i].op;
            if !matches!(op, Op::Const | Op::Input(_)) {
                self.nodes[i].value = self.compute(&op, None);
            }
        }
        self.check_finite(root)?;
        Ok(self.value(root))
    }

    /// Recomputes every node in the graph.
    pub fn evaluate_all(&mut self) {
        for i in 0..self.nodes.len() {
            let op = self.nodes[i].op;
            if !matches!(op, Op::Const | Op::Input(_)) {
                self.nodes[i].value = self.compute(&op, None);
            }
        }
    }

    fn ancestors(&self, root: NodeId) -> Vec<bool> {
        let mut live = vec![false; root.index() + 1];
        live[root.index()] = true;
        for i in (0..=root.index()).rev() {
            if !live[i] {
                continue;
            }
            let (a, b) = self.nodes[i].op.operands();
            for n in [a, b].into_iter().flatten() {
                live[n.index()] = true;
            }
        }
        live
    }

    /// Fails on the first (lowest-index) non-finite ancestor of `root`.
    pub fn check_finite(&self, root: NodeId) -> Result<(), DiffError> {
        let live = self.ancestors(root);
        for (i, alive) in live.iter().enumerate() {
            if *alive && !self.nodes[i].value.is_finite() {
                return Err(DiffError::NonFinite {
                    node: i,
                    descriptor: self.describe(NodeId(i as u32)),
                });
            }
        }
        Ok(())
    }

    /// Short human readable description of a node, e.g. `div(#3, #7)`.
    pub fn describe(&self, id: NodeId) -> String {
        let node = &self.nodes[id.index()];
        match node.op {
            Op::Const => format!("const({})", node.value),
            Op::Input(tag) => format!("input({})", self.tags[tag.0 as usize]),
            Op::Powi(a, n) => format!("powi(#{}, {n})", a.0),
            Op::Powf(a, c) => format!("powf(#{}, {c})", a.0),
            op => match op.operands() {
                (Some(a), Some(b)) => format!("{}(#{}, #{})", op.name(), a.0, b.0),
                (Some(a), None) => format!("{}(#{})", op.name(), a.0),
                _ => op.name().to_string(),
            },
        }
    }

    /// Builds nodes for `d output / d v` for each `v` in `wrt`.
    ///
    /// Variables the output does not depend on get an exact zero constant.
    pub fn grad(&mut self, output: NodeId, wrt: &[NodeId]) -> Vec<NodeId> {
        let n = output.index() + 1;
        let mut adj: Vec<Option<NodeId>> = vec![None; n];
        let live = self.ancestors(output);
        let seed = self.constant(1.0);
        adj[output.index()] = Some(seed);

        for i in (0..n).rev() {
            if !live[i] {
                continue;
            }
            let Some(g) = adj[i] else { continue };
            let id = NodeId(i as u32);
            let op = self.nodes[i].op;
            match op {
                Op::Const | Op::Input(_) => {}
                Op::Add(a, b) => {
                    self.accumulate(&mut adj, a, g);
                    self.accumulate(&mut adj, b, g);
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut adj, a, g);
                    let ng = self.neg(g);
                    self.accumulate(&mut adj, b, ng);
                }
                Op::Mul(a, b) => {
                    let ga = self.mul(g, b);
                    self.accumulate(&mut adj, a, ga);
                    let gb = self.mul(g, a);
                    self.accumulate(&mut adj, b, gb);
                }
                Op::Div(a, b) => {
                    let ga = self.div(g, b);
                    self.accumulate(&mut adj, a, ga);
                    // d(a/b)/db = -(a/b)/b
                    let t = self.mul(ga, id);
                    let gb = self.neg(t);
                    self.accumulate(&mut adj, b, gb);
                }
                Op::Neg(a) => {
                    let ga = self.neg(g);
                    self.accumulate(&mut adj, a, ga);
                }
                Op::Tanh(a) => {
                    let sq = self.mul(id, id);
                    let one = self.constant(1.0);
                    let s = self.sub(one, sq);
                    let ga = self.mul(g, s);
                    self.accumulate(&mut adj, a, ga);
                }
                Op::Sin(a) => {
                    let c = self.cos(a);
                    let ga = self.mul(g, c);
                    self.accumulate(&mut adj, a, ga);
                }
                Op::Cos(a) => {
                    let s = self.sin(a);
                    let t = self.mul(g, s);
                    let ga = self.neg(t);
                    self.accumulate(&mut adj, a, ga);
                }
                Op::Exp(a) => {
                    let ga = self.mul(g, id);
                    self.accumulate(&mut adj, a, ga);
                }
                Op::Powi(a, k) => match k {
                    0 => {}
                    1 => self.accumulate(&mut adj, a, g),
                    _ => {
                        let p = self.powi(a, k - 1);
                        let kp = self.scale(p, k as f64);
                        let ga = self.mul(g, kp);
                        self.accumulate(&mut adj, a, ga);
                    }
                },
                Op::Powf(a, c) => {
                    let p = self.powf(a, c - 1.0);
                    let cp = self.scale(p, c);
                    let ga = self.mul(g, cp);
                    self.accumulate(&mut adj, a, ga);
                }
            }
        }

        wrt.iter()
            .map(|&v| match adj.get(v.index()).copied().flatten() {
                Some(node) => node,
                None => self.constant(0.0),
            })
            .collect()
    }

    fn accumulate(&mut self, adj: &mut [Option<NodeId>], target: NodeId, contribution: NodeId) {
        let slot = &mut adj[target.index()];
        *slot = Some(match *slot {
            None => contribution,
            Some(prev) => self.add(prev, contribution),
        });
    }

    fn resolve(&self, names: &[String]) -> Result<Vec<NodeId>, DiffError> {
        names
            .iter()
            .map(|name| {
                self.tag(name)
                    .map(|t| self.tag_node(t))
                    .ok_or_else(|| DiffError::UnknownTag(name.clone()))
            })
            .collect()
    }

    /// Evaluates the requested partials at the current leaf values.
    pub fn derivative(&mut self, req: &GradientRequest) -> Result<Vec<f64>, DiffError> {
        let wrt = self.resolve(&req.wrt)?;
        self.evaluate(req.output)?;
        let first = self.grad(req.output, &wrt);
        let nodes = match req.order {
            Order::First => first,
            Order::Second => {
                let mut all = Vec::with_capacity(wrt.len() * wrt.len());
                for g in first {
                    all.extend(self.grad(g, &wrt));
                }
                all
            }
        };
        let mut out = Vec::with_capacity(nodes.len());
        for node in nodes {
            self.check_finite(node)?;
            out.push(self.value(node));
        }
        Ok(out)
    }
}

impl fmt::Display for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.nodes.len() {
            let id = NodeId(i as u32);
            writeln!(f, "#{i} = {} -> {}", self.describe(id), self.value(id))?;
        }
        Ok(())
    }
}
