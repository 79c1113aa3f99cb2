//! Define-by-run reverse-mode differentiation on a flat tape.
//!
//! A `Graph` is rebuilt per minibatch. Nodes are appended in forward
//! order, so the tape index order is a topological order and `backward`
//! is a single reverse sweep. Adjoints for a node consumed twice are
//! summed, and gradients accumulate across repeated `backward` calls
//! until the graph is dropped.

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnaryKind {
    Relu,
    LeakyRelu(f64),
    Sigmoid,
    Exp,
    /// e^{-x}
    NegExp,
    /// e^{x} - 1, computed via `f64::exp_m1` for accuracy near 0.
    ExpM1,
    Log,
    Recip,
    Softplus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceKind {
    Sum,
    Mean,
    L2Norm,
    SqL2Norm,
    /// Sum of |x_i|; on a scalar this is |x|. The adjoint is sign(x_i),
    /// with sign(0) = 0.
    Abs,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Affine {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
    },
    Unary {
        kind: UnaryKind,
        x: NodeId,
    },
    Binary {
        kind: BinaryKind,
        a: NodeId,
        b: NodeId,
    },
    Scale {
        x: NodeId,
        c: f64,
    },
    Reduce {
        kind: ReduceKind,
        x: NodeId,
    },
    /// Arithmetic mean of scalar nodes; adjoint 1/n into each parent.
    MeanMany {
        xs: Vec<NodeId>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient accumulated by `backward`; `None` means zero.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    pub fn grad_or_zeros(&self, id: NodeId) -> Tensor {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros_like(&self.nodes[id.0].value),
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        self.grads.push(None);
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn constant(&mut self, value: f64) -> NodeId {
        self.leaf(Tensor::scalar(value))
    }

    /// `x W + b` for a rank-1 input `x: [n]`, `W: [n, m]`, `b: [m]`.
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId> {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        let (n, m) = match (xs.as_slice(), ws.as_slice()) {
            ([n], [wn, m]) if n == wn => (*n, *m),
            _ => {
                return Err(Error::Shape(format!(
                    "affine expects x:[n], W:[n,m]; got x:{xs:?}, W:{ws:?}"
                )))
            }
        };
        if let Some(b) = b {
            let bs = self.value(b).shape();
            if bs != [m] {
                return Err(Error::Shape(format!(
                    "affine bias must be [{m}], got {bs:?}"
                )));
            }
        }
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let mut out = match b {
            Some(b) => self.value(b).data().to_vec(),
            None => vec![0.0; m],
        };
        for k in 0..n {
            let xk = xv[k];
            let row = &wv[k * m..(k + 1) * m];
            for j in 0..m {
                out[j] += xk * row[j];
            }
        }
        let value = Tensor::vector(out)?;
        Ok(self.push(value, Op::Affine { x, w, b }))
    }

    fn unary(&mut self, kind: UnaryKind, x: NodeId) -> Result<NodeId> {
        let input = self.value(x).data();
        let mut out = Vec::with_capacity(input.len());
        for &v in input {
            let r = match kind {
                UnaryKind::Relu => v.max(0.0),
                UnaryKind::LeakyRelu(slope) => {
                    if v > 0.0 {
                        v
                    } else {
                        slope * v
                    }
                }
                UnaryKind::Sigmoid => sigmoid(v),
                UnaryKind::Exp => v.exp(),
                UnaryKind::NegExp => (-v).exp(),
                UnaryKind::ExpM1 => v.exp_m1(),
                UnaryKind::Log => {
                    if v <= 0.0 {
                        return Err(Error::Numeric(format!("log of non-positive value {v}")));
                    }
                    v.ln()
                }
                UnaryKind::Recip => {
                    if v == 0.0 {
                        return Err(Error::Numeric("reciprocal of zero".into()));
                    }
                    1.0 / v
                }
                UnaryKind::Softplus => softplus(v),
            };
            out.push(r);
        }
        let shape = self.value(x).shape().to_vec();
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Unary { kind, x }))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.unary(UnaryKind::Relu, x).expect("relu is total")
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> NodeId {
        self.unary(UnaryKind::LeakyRelu(slope), x)
            .expect("leaky_relu is total")
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.unary(UnaryKind::Sigmoid, x).expect("sigmoid is total")
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        self.unary(UnaryKind::Exp, x).expect("exp is total")
    }

    pub fn neg_exp(&mut self, x: NodeId) -> NodeId {
        self.unary(UnaryKind::NegExp, x).expect("neg_exp is total")
    }

    pub fn expm1(&mut self, x: NodeId) -> NodeId {
        self.unary(UnaryKind::ExpM1, x).expect("expm1 is total")
    }

    pub fn log(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(UnaryKind::Log, x)
    }

    pub fn recip(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(UnaryKind::Recip, x)
    }

    pub fn softplus(&mut self, x: NodeId) -> NodeId {
        self.unary(UnaryKind::Softplus, x)
            .expect("softplus is total")
    }

    fn binary(&mut self, kind: BinaryKind, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::Shape(format!(
                "elementwise {kind:?} needs equal shapes, got {sa:?} and {sb:?}"
            )));
        }
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let out: Vec<f64> = av
            .iter()
            .zip(bv)
            .map(|(&x, &y)| match kind {
                BinaryKind::Add => x + y,
                BinaryKind::Sub => x - y,
                BinaryKind::Mul => x * y,
            })
            .collect();
        let value = Tensor::new(sa.to_vec(), out)?;
        Ok(self.push(value, Op::Binary { kind, a, b }))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(BinaryKind::Mul, a, b)
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let value = Tensor::new(
            self.value(x).shape().to_vec(),
            self.value(x).data().iter().map(|v| v * c).collect(),
        )
        .expect("scale preserves shape");
        self.push(value, Op::Scale { x, c })
    }

    fn reduce(&mut self, kind: ReduceKind, x: NodeId) -> NodeId {
        let data = self.value(x).data();
        let v = match kind {
            ReduceKind::Sum => data.iter().sum(),
            ReduceKind::Mean => data.iter().sum::<f64>() / data.len() as f64,
            ReduceKind::L2Norm => data.iter().map(|v| v * v).sum::<f64>().sqrt(),
            ReduceKind::SqL2Norm => data.iter().map(|v| v * v).sum(),
            ReduceKind::Abs => data.iter().map(|v| v.abs()).sum(),
        };
        self.push(Tensor::scalar(v), Op::Reduce { kind, x })
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        self.reduce(ReduceKind::Sum, x)
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        self.reduce(ReduceKind::Mean, x)
    }

    pub fn l2_norm(&mut self, x: NodeId) -> NodeId {
        self.reduce(ReduceKind::L2Norm, x)
    }

    pub fn sq_l2_norm(&mut self, x: NodeId) -> NodeId {
        self.reduce(ReduceKind::SqL2Norm, x)
    }

    pub fn abs(&mut self, x: NodeId) -> NodeId {
        self.reduce(ReduceKind::Abs, x)
    }

    /// Mean of scalar nodes. Used to average per-point losses.
    pub fn mean_many(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        if xs.is_empty() {
            return Err(Error::Contract("mean over an empty batch".into()));
        }
        for &id in xs {
            if !self.value(id).is_scalar() {
                return Err(Error::Contract("mean_many expects scalar nodes".into()));
            }
        }
        let sum: f64 = xs.iter().map(|&id| self.value(id).item()).sum();
        let value = Tensor::scalar(sum / xs.len() as f64);
        Ok(self.push(value, Op::MeanMany { xs: xs.to_vec() }))
    }

    /// max(x, floor) elementwise, as relu(x - floor) + floor. The
    /// gradient is 0 below the floor (and at it).
    pub fn floor_at(&mut self, x: NodeId, floor: f64) -> NodeId {
        let shape = self.value(x).shape().to_vec();
        let c = self.leaf(Tensor::full(&shape, floor).expect("shape from existing tensor"));
        let shifted = self.sub(x, c).expect("same shape");
        let clipped = self.relu(shifted);
        self.add(clipped, c).expect("same shape")
    }

    /// Reverse sweep from a scalar root. Each call propagates through a
    /// fresh adjoint buffer and adds the result into the persistent
    /// per-node gradients, so repeated calls accumulate.
    pub fn backward(&mut self, root: NodeId) -> Result<()> {
        if !self.value(root).is_scalar() {
            return Err(Error::Contract(format!(
                "backward root must be scalar, got shape {:?}",
                self.value(root).shape()
            )));
        }
        let mut sweep: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        sweep[root.0] = Some(Tensor::scalar(1.0));
        for idx in (0..=root.0).rev() {
            let (lo, hi) = sweep.split_at_mut(idx);
            let up = match hi[0].as_ref() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Affine { x, w, b } => {
                    let up = up.data();
                    let xv = self.nodes[x.0].value.data();
                    let wv = self.nodes[w.0].value.data();
                    let n = xv.len();
                    let m = up.len();
                    {
                        let gx = get_slot(lo, *x, &self.nodes[x.0].value);
                        for k in 0..n {
                            let row = &wv[k * m..(k + 1) * m];
                            let mut acc = 0.0;
                            for j in 0..m {
                                acc += up[j] * row[j];
                            }
                            gx[k] += acc;
                        }
                    }
                    {
                        let gw = get_slot(lo, *w, &self.nodes[w.0].value);
                        for k in 0..n {
                            let xk = xv[k];
                            let row = &mut gw[k * m..(k + 1) * m];
                            for j in 0..m {
                                row[j] += xk * up[j];
                            }
                        }
                    }
                    if let Some(b) = b {
                        let gb = get_slot(lo, *b, &self.nodes[b.0].value);
                        for j in 0..m {
                            gb[j] += up[j];
                        }
                    }
                }
                Op::Unary { kind, x } => {
                    let up = up.data();
                    let xv = self.nodes[x.0].value.data();
                    let yv = node.value.data();
                    let gx = get_slot(lo, *x, &self.nodes[x.0].value);
                    for i in 0..xv.len() {
                        let d = match kind {
                            UnaryKind::Relu => {
                                if xv[i] > 0.0 {
                                    1.0
                                } else {
                                    0.0
                                }
                            }
                            UnaryKind::LeakyRelu(slope) => {
                                if xv[i] > 0.0 {
                                    1.0
                                } else {
                                    *slope
                                }
                            }
                            UnaryKind::Sigmoid => yv[i] * (1.0 - yv[i]),
                            UnaryKind::Exp => yv[i],
                            UnaryKind::NegExp => -yv[i],
                            UnaryKind::ExpM1 => yv[i] + 1.0,
                            UnaryKind::Log => 1.0 / xv[i],
                            UnaryKind::Recip => -yv[i] * yv[i],
                            UnaryKind::Softplus => sigmoid(xv[i]),
                        };
                        gx[i] += up[i] * d;
                    }
                }
                Op::Binary { kind, a, b } => {
                    let up = up.data().to_vec();
                    match kind {
                        BinaryKind::Add => {
                            let ga = get_slot(lo, *a, &self.nodes[a.0].value);
                            for i in 0..up.len() {
                                ga[i] += up[i];
                            }
                            let gb = get_slot(lo, *b, &self.nodes[b.0].value);
                            for i in 0..up.len() {
                                gb[i] += up[i];
                            }
                        }
                        BinaryKind::Sub => {
                            let ga = get_slot(lo, *a, &self.nodes[a.0].value);
                            for i in 0..up.len() {
                                ga[i] += up[i];
                            }
                            let gb = get_slot(lo, *b, &self.nodes[b.0].value);
                            for i in 0..up.len() {
                                gb[i] -= up[i];
                            }
                        }
                        BinaryKind::Mul => {
                            let av = self.nodes[a.0].value.data().to_vec();
                            let bv = self.nodes[b.0].value.data().to_vec();
                            let ga = get_slot(lo, *a, &self.nodes[a.0].value);
                            for i in 0..up.len() {
                                ga[i] += up[i] * bv[i];
                            }
                            let gb = get_slot(lo, *b, &self.nodes[b.0].value);
                            for i in 0..up.len() {
                                gb[i] += up[i] * av[i];
                            }
                        }
                    }
                }
                Op::Scale { x, c } => {
                    let up = up.data();
                    let gx = get_slot(lo, *x, &self.nodes[x.0].value);
                    for i in 0..up.len() {
                        gx[i] += up[i] * c;
                    }
                }
                Op::Reduce { kind, x } => {
                    let u = up.data()[0];
                    let xv = self.nodes[x.0].value.data();
                    let n = xv.len();
                    let y = node.value.data()[0];
                    let gx = get_slot(lo, *x, &self.nodes[x.0].value);
                    match kind {
                        ReduceKind::Sum => {
                            for g in gx.iter_mut() {
                                *g += u;
                            }
                        }
                        ReduceKind::Mean => {
                            let d = u / n as f64;
                            for g in gx.iter_mut() {
                                *g += d;
                            }
                        }
                        ReduceKind::L2Norm => {
                            // Subgradient 0 at the origin.
                            if y > 0.0 {
                                for i in 0..n {
                                    gx[i] += u * xv[i] / y;
                                }
                            }
                        }
                        ReduceKind::SqL2Norm => {
                            for i in 0..n {
                                gx[i] += u * 2.0 * xv[i];
                            }
                        }
                        ReduceKind::Abs => {
                            for i in 0..n {
                                gx[i] += u * sign_zero(xv[i]);
                            }
                        }
                    }
                }
                Op::MeanMany { xs } => {
                    let d = up.data()[0] / xs.len() as f64;
                    let ids = xs.clone();
                    for id in ids {
                        let g = get_slot(lo, id, &self.nodes[id.0].value);
                        g[0] += d;
                    }
                }
            }
        }
        for (slot, fresh) in self.grads.iter_mut().zip(sweep) {
            match (slot.as_mut(), fresh) {
                (Some(acc), Some(add)) => {
                    for (a, b) in acc.data_mut().iter_mut().zip(add.data()) {
                        *a += b;
                    }
                }
                (None, Some(add)) => *slot = Some(add),
                _ => {}
            }
        }
        Ok(())
    }
}

fn get_slot<'a>(grads: &'a mut [Option<Tensor>], id: NodeId, template: &Tensor) -> &'a mut [f64] {
    grads[id.0]
        .get_or_insert_with(|| Tensor::zeros_like(template))
        .data_mut()
}

/// sign with sign(0) = 0, the subgradient choice for |.| at the kink.
fn sign_zero(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^x) without overflow for large |x|.
fn softplus(v: f64) -> f64 {
    if v > 0.0 {
        v + (-v).exp().ln_1p()
    } else {
        v.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec_leaf(g: &mut Graph, v: &[f64]) -> NodeId {
        g.leaf(Tensor::vector(v.to_vec()).unwrap())
    }

    #[test]
    fn affine_identity() {
        let mut g = Graph::new();
        let x = vec_leaf(&mut g, &[1.0, 0.0]);
        let w = g.leaf(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let b = vec_leaf(&mut g, &[0.0, 0.0]);
        let y = g.affine(x, w, Some(b)).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 0.0]);
    }

    #[test]
    fn affine_hand_sum() {
        let mut g = Graph::new();
        let x = vec_leaf(&mut g, &[1.0, 2.0]);
        let w = g.leaf(Tensor::matrix(2, 1, vec![1.0, 1.0]).unwrap());
        let b = vec_leaf(&mut g, &[3.0]);
        let y = g.affine(x, w, Some(b)).unwrap();
        assert_eq!(g.value(y).data(), &[6.0]);
    }

    #[test]
    fn affine_shape_error_names_both_shapes() {
        let mut g = Graph::new();
        let x = vec_leaf(&mut g, &[1.0, 2.0, 3.0]);
        let w = g.leaf(Tensor::matrix(2, 2, vec![0.0; 4]).unwrap());
        let err = g.affine(x, w, None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[3]") && msg.contains("[2, 2]"), "{msg}");
    }

    #[test]
    fn affine_weight_grad_matches_finite_differences() {
        // Loss = sum(xW); the gradient wrt W is x broadcast per column.
        // The numeric side is a straight-line re-evaluation, no graph.
        let x = [0.3, -1.2, 0.7];
        let w0: Vec<f64> = (0..12).map(|i| 0.1 * i as f64 - 0.5).collect();
        let forward = |w: &[f64]| -> f64 {
            let mut out = [0.0; 4];
            for k in 0..3 {
                for j in 0..4 {
                    out[j] += x[k] * w[k * 4 + j];
                }
            }
            out.iter().sum()
        };

        let mut g = Graph::new();
        let xn = vec_leaf(&mut g, &x);
        let wn = g.leaf(Tensor::matrix(3, 4, w0.clone()).unwrap());
        let y = g.affine(xn, wn, None).unwrap();
        let root = g.sum(y);
        g.backward(root).unwrap();
        let analytic = g.grad_or_zeros(wn);

        let step = 1e-5;
        for i in 0..12 {
            let mut wp = w0.clone();
            wp[i] += step;
            let mut wm = w0.clone();
            wm[i] -= step;
            let numeric = (forward(&wp) - forward(&wm)) / (2.0 * step);
            let a = analytic.data()[i];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-12);
            assert!(rel < 1e-6, "coord {i}: analytic {a}, numeric {numeric}");
        }
    }

    #[test]
    fn relu_values() {
        let mut g = Graph::new();
        let x = vec_leaf(&mut g, &[-1.0, 2.0]);
        let y = g.relu(x);
        assert_eq!(g.value(y).data(), &[0.0, 2.0]);
    }

    #[test]
    fn exp_grad_at_zero_is_one() {
        let mut g = Graph::new();
        let x = g.constant(0.0);
        let y = g.exp(x);
        g.backward(y).unwrap();
        assert_eq!(g.grad_or_zeros(x).item(), 1.0);
    }

    #[test]
    fn sigmoid_grad_matches_finite_differences() {
        let pts = [-2.3, -0.4, 0.1, 1.7, 3.9];
        let step = 1e-5;
        for &p in &pts {
            let mut g = Graph::new();
            let x = g.constant(p);
            let y = g.sigmoid(x);
            g.backward(y).unwrap();
            let a = g.grad_or_zeros(x).item();
            // straight-line numeric evaluation
            let f = |v: f64| 1.0 / (1.0 + (-v).exp());
            let n = (f(p + step) - f(p - step)) / (2.0 * step);
            let rel = (a - n).abs() / (a.abs() + n.abs()).max(1e-12);
            assert!(rel < 1e-6, "at {p}: analytic {a}, numeric {n}");
        }
    }

    #[test]
    fn log_rejects_non_positive() {
        let mut g = Graph::new();
        let x = g.constant(0.0);
        assert!(g.log(x).is_err());
        let y = g.constant(-1.0);
        assert!(g.log(y).is_err());
    }

    #[test]
    fn l2_norm_of_3_4_is_5() {
        let mut g = Graph::new();
        let x = vec_leaf(&mut g, &[3.0, 4.0]);
        let y = g.l2_norm(x);
        assert_eq!(g.value(y).item(), 5.0);
    }

    #[test]
    fn abs_of_negative_two() {
        let mut g = Graph::new();
        let x = g.constant(-2.0);
        let y = g.abs(x);
        g.backward(y).unwrap();
        assert_eq!(g.value(y).item(), 2.0);
        assert_eq!(g.grad_or_zeros(x).item(), -1.0);
    }

    #[test]
    fn abs_grad_at_zero_is_zero() {
        let mut g = Graph::new();
        let x = g.constant(0.0);
        let y = g.abs(x);
        g.backward(y).unwrap();
        assert_eq!(g.grad_or_zeros(x).item(), 0.0);
    }

    #[test]
    fn sq_l2_grad_is_2x() {
        let x0 = [0.4, -1.1, 2.2, 0.05];
        let mut g = Graph::new();
        let x = vec_leaf(&mut g, &x0);
        let y = g.sq_l2_norm(x);
        g.backward(y).unwrap();
        let grad = g.grad_or_zeros(x);
        let step = 1e-5;
        for i in 0..4 {
            // straight-line numeric check
            let f = |xs: &[f64]| xs.iter().map(|v| v * v).sum::<f64>();
            let mut p = x0;
            p[i] += step;
            let mut m = x0;
            m[i] -= step;
            let numeric = (f(&p) - f(&m)) / (2.0 * step);
            assert!((grad.data()[i] - 2.0 * x0[i]).abs() < 1e-12);
            assert!((grad.data()[i] - numeric).abs() < 1e-6);
        }
    }

    #[test]
    fn backward_square() {
        let mut g = Graph::new();
        let w = g.constant(3.0);
        let y = g.mul(w, w).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad_or_zeros(w).item(), 6.0);
    }

    #[test]
    fn backward_two_path_accumulates() {
        let mut g = Graph::new();
        let w = g.constant(5.0);
        let y = g.add(w, w).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad_or_zeros(w).item(), 2.0);
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let mut g = Graph::new();
        let x = vec_leaf(&mut g, &[1.0, 2.0]);
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut g = Graph::new();
        let w = g.constant(3.0);
        let y = g.mul(w, w).unwrap();
        g.backward(y).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad_or_zeros(w).item(), 12.0);
    }

    #[test]
    fn duplication_identity_doubles_gradient() {
        // root = f(x) + f(x) must give exactly twice the gradient of f(x).
        let build_once = |v: f64| {
            let mut g = Graph::new();
            let x = g.constant(v);
            let f = g.sigmoid(x);
            g.backward(f).unwrap();
            g.grad_or_zeros(x).item()
        };
        let v = 0.37;
        let single = build_once(v);

        let mut g = Graph::new();
        let x = g.constant(v);
        let f1 = g.sigmoid(x);
        let f2 = g.sigmoid(x);
        let root = g.add(f1, f2).unwrap();
        g.backward(root).unwrap();
        assert_eq!(g.grad_or_zeros(x).item(), 2.0 * single);
    }

    #[test]
    fn forward_is_deterministic_bitwise() {
        let run = || {
            let mut g = Graph::new();
            let x = vec_leaf(&mut g, &[0.123, -4.56, 7.89]);
            let w = g.leaf(Tensor::matrix(3, 2, vec![0.3, -0.8, 1.1, 0.02, -0.5, 0.9]).unwrap());
            let h = g.affine(x, w, None).unwrap();
            let a = g.leaky_relu(h, 0.01);
            let n = g.l2_norm(a);
            g.value(n).item()
        };
        assert_eq!(run().to_bits(), run().to_bits());
    }

    #[test]
    fn floor_at_clamps_and_blocks_gradient_below() {
        let mut g = Graph::new();
        let x = g.constant(0.5);
        let y = g.floor_at(x, 1.0);
        g.backward(y).unwrap();
        assert_eq!(g.value(y).item(), 1.0);
        assert_eq!(g.grad_or_zeros(x).item(), 0.0);

        let mut g = Graph::new();
        let x = g.constant(2.0);
        let y = g.floor_at(x, 1.0);
        g.backward(y).unwrap();
        assert_eq!(g.value(y).item(), 2.0);
        assert_eq!(g.grad_or_zeros(x).item(), 1.0);
    }

    #[test]
    fn mean_many_averages_scalars() {
        let mut g = Graph::new();
        let a = g.constant(1.0);
        let b = g.constant(3.0);
        let m = g.mean_many(&[a, b]).unwrap();
        g.backward(m).unwrap();
        assert_eq!(g.value(m).item(), 2.0);
        assert_eq!(g.grad_or_zeros(a).item(), 0.5);
        assert!(g.mean_many(&[]).is_err());
    }

    #[test]
    fn softplus_is_stable_at_extremes() {
        let mut g = Graph::new();
        let hi = g.constant(1000.0);
        let lo = g.constant(-1000.0);
        let a = g.softplus(hi);
        let b = g.softplus(lo);
        assert_eq!(g.value(a).item(), 1000.0);
        assert_eq!(g.value(b).item(), 0.0);
    }
}
