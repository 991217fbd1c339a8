//! Reverse-mode automatic differentiation over matrix-valued nodes.
//!
//! The tape records the primal computation as an append-only list of
//! operations; node ids therefore form a topological order, and the
//! backward pass is a single reverse sweep that visits each node exactly
//! once. Values are dense [`Matrix`] blocks (vectors are `n x 1`), which
//! keeps the node count small for MLP forwards and for the iterative
//! covariance machinery that must be differentiated through.
//!
//! Shape agreement between operands is a programmer error and panics;
//! only `backward` (whose output-must-be-scalar rule is a caller-facing
//! contract) returns a `Result`.

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Constant,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    MulElem(Var, Var),
    DivElem(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Transpose(Var),
    Trace(Var),
    Sum(Var),
    SumSq(Var),
    L1Norm(Var),
    Tanh(Var),
    Softplus(Var),
    Sigmoid(Var),
    Log(Var),
    Exp(Var),
    Sqrt(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Matrix,
    needs_grad: bool,
}

/// Recorded computation graph plus primal values.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by one backward sweep.
#[derive(Debug)]
pub struct Grads {
    adjoints: Vec<Option<Matrix>>,
}

impl Grads {
    /// Gradient of the backward output with respect to `var`; zero matrix
    /// if the var never influenced the output.
    pub fn wrt(&self, var: Var, tape: &Tape) -> Matrix {
        match &self.adjoints[var.0] {
            Some(m) => m.clone(),
            None => {
                let v = &tape.nodes[var.0].value;
                Matrix::zeros(v.rows(), v.cols())
            }
        }
    }
}

fn stable_softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
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

    fn push(&mut self, op: Op, value: Matrix, needs_grad: bool) -> Var {
        self.nodes.push(Node { op, value, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Differentiable leaf.
    pub fn input(&mut self, value: Matrix) -> Var {
        self.push(Op::Input, value, true)
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(Op::Constant, value, false)
    }

    /// Column-vector leaf helpers.
    pub fn input_vec(&mut self, v: &[f64]) -> Var {
        self.input(Matrix::from_vec(v.len(), 1, v.to_vec()).expect("finite input"))
    }

    pub fn constant_vec(&mut self, v: &[f64]) -> Var {
        self.constant(Matrix::from_vec(v.len(), 1, v.to_vec()).expect("finite constant"))
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Extract a 1x1 node's value.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert!(
            m.rows() == 1 && m.cols() == 1,
            "scalar() on a {}x{} node",
            m.rows(),
            m.cols()
        );
        m.data()[0]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b)).expect("matmul shapes");
        self.push(Op::MatMul(a, b), value, self.needs(a) || self.needs(b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).add(self.value(b)).expect("add shapes");
        self.push(Op::Add(a, b), value, self.needs(a) || self.needs(b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).sub(self.value(b)).expect("sub shapes");
        self.push(Op::Sub(a, b), value, self.needs(a) || self.needs(b))
    }

    pub fn mul_elem(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!((va.rows(), va.cols()), (vb.rows(), vb.cols()), "mul_elem shapes");
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x * y).collect();
        let value = Matrix::from_vec_raw(va.rows(), va.cols(), data);
        self.push(Op::MulElem(a, b), value, self.needs(a) || self.needs(b))
    }

    pub fn div_elem(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!((va.rows(), va.cols()), (vb.rows(), vb.cols()), "div_elem shapes");
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x / y).collect();
        let value = Matrix::from_vec_raw(va.rows(), va.cols(), data);
        self.push(Op::DivElem(a, b), value, self.needs(a) || self.needs(b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).scale(s);
        self.push(Op::Scale(a, s), value, self.needs(a))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let va = self.value(a);
        let data = va.data().iter().map(|&x| x + s).collect();
        let value = Matrix::from_vec_raw(va.rows(), va.cols(), data);
        self.push(Op::AddScalar(a), value, self.needs(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.push(Op::Transpose(a), value, self.needs(a))
    }

    pub fn trace(&mut self, a: Var) -> Var {
        let t = self.value(a).trace();
        self.push(Op::Trace(a), Matrix::from_vec_raw(1, 1, vec![t]), self.needs(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Op::Sum(a), Matrix::from_vec_raw(1, 1, vec![s]), self.needs(a))
    }

    /// Sum of squared entries.
    pub fn sum_sq(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().map(|x| x * x).sum();
        self.push(Op::SumSq(a), Matrix::from_vec_raw(1, 1, vec![s]), self.needs(a))
    }

    /// Sum of absolute entries; subgradient at 0 is fixed to 0.
    pub fn l1_norm(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().map(|x| x.abs()).sum();
        self.push(Op::L1Norm(a), Matrix::from_vec_raw(1, 1, vec![s]), self.needs(a))
    }

    fn unary_elem(&mut self, a: Var, op: fn(Var) -> Op, f: impl Fn(f64) -> f64) -> Var {
        let va = self.value(a);
        let data = va.data().iter().map(|&x| f(x)).collect();
        let value = Matrix::from_vec_raw(va.rows(), va.cols(), data);
        self.push(op(a), value, self.needs(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary_elem(a, Op::Tanh, f64::tanh)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary_elem(a, Op::Softplus, stable_softplus)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary_elem(a, Op::Sigmoid, sigmoid)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary_elem(a, Op::Log, f64::ln)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary_elem(a, Op::Exp, f64::exp)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary_elem(a, Op::Sqrt, f64::sqrt)
    }

    /// Stack column vectors (or equal-width blocks) vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        let mut needs = false;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.cols(), cols, "concat_rows width");
            rows += v.rows();
            data.extend_from_slice(v.data());
            needs |= self.needs(p);
        }
        let value = Matrix::from_vec_raw(rows, cols, data);
        self.push(Op::ConcatRows(parts.to_vec()), value, needs)
    }

    /// Pack column vectors side by side into a `rows x parts.len()` matrix.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).rows();
        let cols = parts.len();
        let mut value = Matrix::zeros(rows, cols);
        let mut needs = false;
        for (j, &p) in parts.iter().enumerate() {
            let v = self.value(p);
            assert_eq!(v.cols(), 1, "concat_cols takes column vectors");
            assert_eq!(v.rows(), rows, "concat_cols height");
            for i in 0..rows {
                value.set(i, j, v.data()[i]);
            }
            needs |= self.needs(p);
        }
        self.push(Op::ConcatCols(parts.to_vec()), value, needs)
    }

    /// Reverse sweep from a scalar output. Returns the adjoint of every
    /// node that influenced it.
    pub fn backward(&self, out: Var) -> Result<Grads> {
        let ov = self.value(out);
        if ov.rows() != 1 || ov.cols() != 1 {
            return Err(Error::Contract(format!(
                "backward output must be scalar, got {}x{}",
                ov.rows(),
                ov.cols()
            )));
        }
        let mut adj: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        adj[out.0] = Some(Matrix::from_vec(1, 1, vec![1.0]).unwrap());

        for idx in (0..=out.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad && !matches!(node.op, Op::Input) {
                adj[idx] = Some(g);
                continue;
            }
            match &node.op {
                Op::Input | Op::Constant => {}
                Op::MatMul(a, b) => {
                    if self.needs(*a) {
                        let da = g.matmul(&self.value(*b).transpose()).unwrap();
                        accumulate(&mut adj[a.0], da);
                    }
                    if self.needs(*b) {
                        let db = self.value(*a).transpose().matmul(&g).unwrap();
                        accumulate(&mut adj[b.0], db);
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut adj[a.0], g.clone());
                    }
                    if self.needs(*b) {
                        accumulate(&mut adj[b.0], g.clone());
                    }
                }
                Op::Sub(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut adj[a.0], g.clone());
                    }
                    if self.needs(*b) {
                        accumulate(&mut adj[b.0], g.scale(-1.0));
                    }
                }
                Op::MulElem(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut adj[a.0], elem_mul(&g, self.value(*b)));
                    }
                    if self.needs(*b) {
                        accumulate(&mut adj[b.0], elem_mul(&g, self.value(*a)));
                    }
                }
                Op::DivElem(a, b) => {
                    let vb = self.value(*b);
                    if self.needs(*a) {
                        accumulate(&mut adj[a.0], elem_map2(&g, vb, |gi, bi| gi / bi));
                    }
                    if self.needs(*b) {
                        let va = self.value(*a);
                        let mut d = g.clone();
                        for ((x, &a_), &b_) in
                            d.data_mut().iter_mut().zip(va.data()).zip(vb.data())
                        {
                            *x = -*x * a_ / (b_ * b_);
                        }
                        accumulate(&mut adj[b.0], d);
                    }
                }
                Op::Scale(a, s) => {
                    if self.needs(*a) {
                        accumulate(&mut adj[a.0], g.scale(*s));
                    }
                }
                Op::AddScalar(a) => {
                    if self.needs(*a) {
                        accumulate(&mut adj[a.0], g.clone());
                    }
                }
                Op::Transpose(a) => {
                    if self.needs(*a) {
                        accumulate(&mut adj[a.0], g.transpose());
                    }
                }
                Op::Trace(a) => {
                    if self.needs(*a) {
                        let n = self.value(*a).rows();
                        accumulate(&mut adj[a.0], Matrix::identity(n).scale(g.data()[0]));
                    }
                }
                Op::Sum(a) => {
                    if self.needs(*a) {
                        let v = self.value(*a);
                        let d =
                            Matrix::from_vec_raw(v.rows(), v.cols(), vec![g.data()[0]; v.rows() * v.cols()]);
                        accumulate(&mut adj[a.0], d);
                    }
                }
                Op::SumSq(a) => {
                    if self.needs(*a) {
                        accumulate(&mut adj[a.0], self.value(*a).scale(2.0 * g.data()[0]));
                    }
                }
                Op::L1Norm(a) => {
                    if self.needs(*a) {
                        let s = g.data()[0];
                        let v = self.value(*a);
                        let data = v
                            .data()
                            .iter()
                            .map(|&x| {
                                if x > 0.0 {
                                    s
                                } else if x < 0.0 {
                                    -s
                                } else {
                                    0.0
                                }
                            })
                            .collect();
                        accumulate(
                            &mut adj[a.0],
                            Matrix::from_vec_raw(v.rows(), v.cols(), data),
                        );
                    }
                }
                Op::Tanh(a) => {
                    if self.needs(*a) {
                        let out_v = &node.value;
                        accumulate(&mut adj[a.0], elem_map2(&g, out_v, |gi, y| gi * (1.0 - y * y)));
                    }
                }
                Op::Softplus(a) => {
                    if self.needs(*a) {
                        let in_v = self.value(*a);
                        accumulate(&mut adj[a.0], elem_map2(&g, in_v, |gi, x| gi * sigmoid(x)));
                    }
                }
                Op::Sigmoid(a) => {
                    if self.needs(*a) {
                        let out_v = &node.value;
                        accumulate(
                            &mut adj[a.0],
                            elem_map2(&g, out_v, |gi, y| gi * y * (1.0 - y)),
                        );
                    }
                }
                Op::Log(a) => {
                    if self.needs(*a) {
                        let in_v = self.value(*a);
                        accumulate(&mut adj[a.0], elem_map2(&g, in_v, |gi, x| gi / x));
                    }
                }
                Op::Exp(a) => {
                    if self.needs(*a) {
                        let out_v = &node.value;
                        accumulate(&mut adj[a.0], elem_mul(&g, out_v));
                    }
                }
                Op::Sqrt(a) => {
                    if self.needs(*a) {
                        let out_v = &node.value;
                        accumulate(&mut adj[a.0], elem_map2(&g, out_v, |gi, y| gi / (2.0 * y)));
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let v = self.value(p);
                        let block_rows = v.rows();
                        if self.needs(p) {
                            let mut d = Matrix::zeros(block_rows, v.cols());
                            for r in 0..block_rows {
                                for c in 0..v.cols() {
                                    d.set(r, c, g.get(offset + r, c));
                                }
                            }
                            accumulate(&mut adj[p.0], d);
                        }
                        offset += block_rows;
                    }
                }
                Op::ConcatCols(parts) => {
                    for (j, &p) in parts.iter().enumerate() {
                        if self.needs(p) {
                            let rows = self.value(p).rows();
                            let col: Vec<f64> = (0..rows).map(|r| g.get(r, j)).collect();
                            accumulate(&mut adj[p.0], Matrix::from_vec_raw(rows, 1, col));
                        }
                    }
                }
            }
            adj[idx] = Some(g);
        }
        Ok(Grads { adjoints: adj })
    }
}

fn accumulate(slot: &mut Option<Matrix>, delta: Matrix) {
    match slot {
        Some(m) => *m = m.add(&delta).expect("adjoint shapes agree"),
        None => *slot = Some(delta),
    }
}

fn elem_mul(a: &Matrix, b: &Matrix) -> Matrix {
    elem_map2(a, b, |x, y| x * y)
}

fn elem_map2(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    debug_assert_eq!((a.rows(), a.cols()), (b.rows(), b.cols()));
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Matrix::from_vec_raw(a.rows(), a.cols(), data)
}
