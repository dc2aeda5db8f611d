//! Reverse-mode gradient tape over f64 vectors.
//!
//! Values live on the tape as vectors (scalars are length-1). Matrices enter
//! only through matrix-vector products, either as named trainable parameters
//! or as frozen constants. One backward pass accumulates gradients into the
//! parameter store exactly once per parameter; calling backward again without
//! zeroing doubles them.

use crate::error::{NeuralError, Result};
use crate::params::ParamStore;
use crate::tensor::{ensure_finite, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValueId(usize);

enum Op {
    Const,
    ParamLeaf(String),
    Add(ValueId, ValueId),
    Sub(ValueId, ValueId),
    Mul(ValueId, ValueId),
    Scale(ValueId, f64),
    AddConst(ValueId),
    Sum(Vec<ValueId>),
    Concat(Vec<ValueId>),
    Slice(ValueId, usize),
    Relu(ValueId),
    Sigmoid(ValueId),
    Exp(ValueId),
    ReduceSum(ValueId),
    RotateMul(ValueId, ValueId),
    MatVec { param: String, x: ValueId },
    MatVecFrozen { w: Tensor, x: ValueId },
}

struct Node {
    value: Vec<f64>,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Vec<f64>>,
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: ValueId) -> &[f64] {
        &self.nodes[id.0].value
    }

    /// Node gradient from the last backward pass (inputs included).
    pub fn grad(&self, id: ValueId) -> Option<&[f64]> {
        self.grads.get(id.0).map(Vec::as_slice)
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Result<ValueId> {
        ensure_finite(&value, "tape value")?;
        self.nodes.push(Node { value, op });
        Ok(ValueId(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, value: Vec<f64>) -> Result<ValueId> {
        self.push(value, Op::Const)
    }

    pub fn scalar(&mut self, value: f64) -> Result<ValueId> {
        self.push(vec![value], Op::Const)
    }

    pub fn zeros(&mut self, len: usize) -> Result<ValueId> {
        self.push(vec![0.0; len], Op::Const)
    }

    /// Tracked leaf for a named 1-D parameter.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<ValueId> {
        let tensor = store.get(name)?;
        if tensor.cols() != 1 {
            return Err(NeuralError::Shape(format!(
                "parameter {name:?} is 2-D; use matvec"
            )));
        }
        self.push(tensor.data().to_vec(), Op::ParamLeaf(name.to_string()))
    }

    fn binary_same_len(&self, a: ValueId, b: ValueId, what: &str) -> Result<()> {
        if self.nodes[a.0].value.len() != self.nodes[b.0].value.len() {
            return Err(NeuralError::Shape(format!(
                "{what}: lengths {} vs {}",
                self.nodes[a.0].value.len(),
                self.nodes[b.0].value.len()
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.binary_same_len(a, b, "add")?;
        let value = zip(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x + y);
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.binary_same_len(a, b, "sub")?;
        let value = zip(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x - y);
        self.push(value, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.binary_same_len(a, b, "mul")?;
        let value = zip(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x * y);
        self.push(value, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: ValueId, factor: f64) -> Result<ValueId> {
        let value = self.nodes[a.0].value.iter().map(|x| x * factor).collect();
        self.push(value, Op::Scale(a, factor))
    }

    pub fn add_const(&mut self, a: ValueId, c: f64) -> Result<ValueId> {
        let value = self.nodes[a.0].value.iter().map(|x| x + c).collect();
        self.push(value, Op::AddConst(a))
    }

    /// Elementwise sum of same-length vectors; empty input is invalid.
    pub fn sum(&mut self, ids: &[ValueId]) -> Result<ValueId> {
        let first = *ids
            .first()
            .ok_or_else(|| NeuralError::Shape("sum of no vectors".into()))?;
        let mut value = self.nodes[first.0].value.clone();
        for &id in &ids[1..] {
            self.binary_same_len(first, id, "sum")?;
            for (v, x) in value.iter_mut().zip(&self.nodes[id.0].value) {
                *v += x;
            }
        }
        self.push(value, Op::Sum(ids.to_vec()))
    }

    pub fn concat(&mut self, ids: &[ValueId]) -> Result<ValueId> {
        let mut value = Vec::new();
        for &id in ids {
            value.extend_from_slice(&self.nodes[id.0].value);
        }
        self.push(value, Op::Concat(ids.to_vec()))
    }

    pub fn slice(&mut self, src: ValueId, start: usize, len: usize) -> Result<ValueId> {
        let data = &self.nodes[src.0].value;
        if start + len > data.len() {
            return Err(NeuralError::Shape(format!(
                "slice {start}..{} of length-{} vector",
                start + len,
                data.len()
            )));
        }
        let value = data[start..start + len].to_vec();
        self.push(value, Op::Slice(src, start))
    }

    pub fn relu(&mut self, a: ValueId) -> Result<ValueId> {
        let value = self.nodes[a.0].value.iter().map(|x| x.max(0.0)).collect();
        self.push(value, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: ValueId) -> Result<ValueId> {
        let value = self.nodes[a.0].value.iter().map(|x| sigmoid(*x)).collect();
        self.push(value, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: ValueId) -> Result<ValueId> {
        let value = self.nodes[a.0].value.iter().map(|x| x.exp()).collect();
        self.push(value, Op::Exp(a))
    }

    pub fn reduce_sum(&mut self, a: ValueId) -> Result<ValueId> {
        let value = vec![self.nodes[a.0].value.iter().sum()];
        self.push(value, Op::ReduceSum(a))
    }

    pub fn dot(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let prod = self.mul(a, b)?;
        self.reduce_sum(prod)
    }

    /// Elementwise complex product over consecutive dimension pairs.
    pub fn rotate_mul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.binary_same_len(a, b, "rotate_mul")?;
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let value = rotate_mul_vec(av, bv)?;
        self.push(value, Op::RotateMul(a, b))
    }

    /// y = W x with a named 2-D parameter.
    pub fn matvec(&mut self, store: &ParamStore, name: &str, x: ValueId) -> Result<ValueId> {
        let w = store.get(name)?;
        let value = w.matvec(&self.nodes[x.0].value)?;
        self.push(
            value,
            Op::MatVec {
                param: name.to_string(),
                x,
            },
        )
    }

    /// y = W x with frozen weights: gradients flow to x only.
    pub fn matvec_frozen(&mut self, w: &Tensor, x: ValueId) -> Result<ValueId> {
        let value = w.matvec(&self.nodes[x.0].value)?;
        self.push(value, Op::MatVecFrozen { w: w.clone(), x })
    }

    pub fn backward(&mut self, loss: ValueId, store: &mut ParamStore) -> Result<()> {
        self.backward_scaled(loss, 1.0, store)
    }

    /// Reverse pass seeded with `scale`; gradients accumulate into the store.
    pub fn backward_scaled(
        &mut self,
        loss: ValueId,
        scale: f64,
        store: &mut ParamStore,
    ) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(NeuralError::Shape(
                "backward expects a scalar (length-1) loss".into(),
            ));
        }
        ensure_finite(&self.nodes[loss.0].value, "loss")?;
        let mut grads: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|n| vec![0.0; n.value.len()])
            .collect();
        grads[loss.0][0] = scale;

        for i in (0..self.nodes.len()).rev() {
            if grads[i].iter().all(|&g| g == 0.0) {
                continue;
            }
            let g = grads[i].clone();
            match &self.nodes[i].op {
                Op::Const => {}
                Op::ParamLeaf(name) => {
                    let grad = store.grad_mut(name)?;
                    for (dst, src) in grad.data_mut().iter_mut().zip(&g) {
                        *dst += src;
                    }
                }
                Op::Add(a, b) => {
                    axpy(&mut grads, a.0, &g, 1.0);
                    axpy(&mut grads, b.0, &g, 1.0);
                }
                Op::Sub(a, b) => {
                    axpy(&mut grads, a.0, &g, 1.0);
                    axpy(&mut grads, b.0, &g, -1.0);
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    let bv = self.nodes[b.0].value.clone();
                    let av = self.nodes[a.0].value.clone();
                    for (k, gk) in g.iter().enumerate() {
                        grads[a.0][k] += gk * bv[k];
                        grads[b.0][k] += gk * av[k];
                    }
                }
                Op::Scale(a, factor) => axpy(&mut grads, a.0, &g, *factor),
                Op::AddConst(a) => axpy(&mut grads, a.0, &g, 1.0),
                Op::Sum(ids) => {
                    for id in ids {
                        axpy(&mut grads, id.0, &g, 1.0);
                    }
                }
                Op::Concat(ids) => {
                    let mut offset = 0;
                    for id in ids {
                        let len = self.nodes[id.0].value.len();
                        for k in 0..len {
                            grads[id.0][k] += g[offset + k];
                        }
                        offset += len;
                    }
                }
                Op::Slice(src, start) => {
                    for (k, gk) in g.iter().enumerate() {
                        grads[src.0][start + k] += gk;
                    }
                }
                Op::Relu(a) => {
                    let xs = self.nodes[a.0].value.clone();
                    for (k, gk) in g.iter().enumerate() {
                        if xs[k] > 0.0 {
                            grads[a.0][k] += gk;
                        }
                    }
                }
                Op::Sigmoid(a) => {
                    let ys = self.nodes[i].value.clone();
                    for (k, gk) in g.iter().enumerate() {
                        grads[a.0][k] += gk * ys[k] * (1.0 - ys[k]);
                    }
                }
                Op::Exp(a) => {
                    let ys = self.nodes[i].value.clone();
                    for (k, gk) in g.iter().enumerate() {
                        grads[a.0][k] += gk * ys[k];
                    }
                }
                Op::ReduceSum(a) => {
                    let len = self.nodes[a.0].value.len();
                    for k in 0..len {
                        grads[a.0][k] += g[0];
                    }
                }
                Op::RotateMul(a, b) => {
                    let (a, b) = (*a, *b);
                    let av = self.nodes[a.0].value.clone();
                    let bv = self.nodes[b.0].value.clone();
                    for j in 0..av.len() / 2 {
                        let (g0, g1) = (g[2 * j], g[2 * j + 1]);
                        let (a0, a1) = (av[2 * j], av[2 * j + 1]);
                        let (b0, b1) = (bv[2 * j], bv[2 * j + 1]);
                        grads[a.0][2 * j] += g0 * b0 + g1 * b1;
                        grads[a.0][2 * j + 1] += -g0 * b1 + g1 * b0;
                        grads[b.0][2 * j] += g0 * a0 + g1 * a1;
                        grads[b.0][2 * j + 1] += -g0 * a1 + g1 * a0;
                    }
                }
                Op::MatVec { param, x } => {
                    let x = *x;
                    let xv = self.nodes[x.0].value.clone();
                    let w = store.get(param)?.clone();
                    let cols = w.cols();
                    {
                        let grad = store.grad_mut(param)?;
                        let gd = grad.data_mut();
                        for (r, gr) in g.iter().enumerate() {
                            for (c, xc) in xv.iter().enumerate() {
                                gd[r * cols + c] += gr * xc;
                            }
                        }
                    }
                    for c in 0..cols {
                        let mut acc = 0.0;
                        for (r, gr) in g.iter().enumerate() {
                            acc += gr * w.at(r, c);
                        }
                        grads[x.0][c] += acc;
                    }
                }
                Op::MatVecFrozen { w, x } => {
                    let x = *x;
                    let cols = w.cols();
                    let mut acc = vec![0.0; cols];
                    for (r, gr) in g.iter().enumerate() {
                        for (c, a) in acc.iter_mut().enumerate() {
                            *a += gr * w.at(r, c);
                        }
                    }
                    for (k, a) in acc.iter().enumerate() {
                        grads[x.0][k] += a;
                    }
                }
            }
        }
        self.grads = grads;
        Ok(())
    }
}

fn zip(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect()
}

fn axpy(grads: &mut [Vec<f64>], idx: usize, g: &[f64], factor: f64) {
    for (dst, src) in grads[idx].iter_mut().zip(g) {
        *dst += factor * src;
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Plain-vector rotate composition (complex product of dimension pairs).
pub fn rotate_mul_vec(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(NeuralError::Shape(format!(
            "rotate: lengths {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() % 2 != 0 {
        return Err(NeuralError::Shape(format!(
            "rotate needs an even dimension, got {}",
            a.len()
        )));
    }
    let mut out = vec![0.0; a.len()];
    for j in 0..a.len() / 2 {
        let (a0, a1) = (a[2 * j], a[2 * j + 1]);
        let (b0, b1) = (b[2 * j], b[2 * j + 1]);
        out[2 * j] = a0 * b0 - a1 * b1;
        out[2 * j + 1] = a0 * b1 + a1 * b0;
    }
    Ok(out)
}
