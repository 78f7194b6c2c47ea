//! Eager reverse-mode tape. Forward values are computed at insertion with
//! the kernels from `ops`; `backward` replays the recorded graph and
//! accumulates parameter gradients into caller-owned tensors aligned with
//! the parameter slice the tape was opened over.

use super::ops::{matvec, sigmoid};
use super::{NetError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

enum NodeValue {
    Owned(Vec<f64>),
    Param(usize),
}

enum Op {
    Leaf,
    MatVec { w: NodeId, x: NodeId },
    Add { a: NodeId, b: NodeId },
    Hadamard { a: NodeId, b: NodeId },
    Sigmoid { x: NodeId },
    Tanh { x: NodeId },
    Relu { x: NodeId },
    Slice { x: NodeId, start: usize },
    Concat { parts: Vec<NodeId> },
    ScaleMask { x: NodeId, mask: Vec<f64> },
    GatherMean { table: NodeId, rows: Vec<usize> },
    Sum { x: NodeId },
    SoftmaxCe { scores: NodeId, target: usize, probs: Vec<f64> },
}

struct Node {
    value: NodeValue,
    op: Op,
}

pub struct Tape<'a> {
    params: &'a [Tensor],
    nodes: Vec<Node>,
}

impl<'a> Tape<'a> {
    pub fn new(params: &'a [Tensor]) -> Tape<'a> {
        Tape {
            params,
            nodes: Vec::with_capacity(64),
        }
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        match &self.nodes[id.0].value {
            NodeValue::Owned(v) => v,
            NodeValue::Param(i) => self.params[*i].data(),
        }
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        let v = self.value(id);
        debug_assert_eq!(v.len(), 1);
        v[0]
    }

    fn len_of(&self, id: NodeId) -> usize {
        self.value(id).len()
    }

    fn push(&mut self, value: Vec<f64>, op: Op, context: &'static str) -> Result<NodeId, NetError> {
        if value.iter().any(|v| !v.is_finite()) {
            return Err(NetError::NonFinite(context));
        }
        self.nodes.push(Node {
            value: NodeValue::Owned(value),
            op,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// A constant vector; gradients do not flow into it.
    pub fn input(&mut self, value: Vec<f64>) -> Result<NodeId, NetError> {
        self.push(value, Op::Leaf, "tape input")
    }

    /// A leaf bound to `params[index]`; gradients accumulate into the
    /// matching slot of the tensor slice given to `backward`.
    pub fn param(&mut self, index: usize) -> NodeId {
        assert!(index < self.params.len(), "param index out of range");
        self.nodes.push(Node {
            value: NodeValue::Param(index),
            op: Op::Leaf,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn matvec(&mut self, w: NodeId, x: NodeId) -> Result<NodeId, NetError> {
        let w_tensor = match &self.nodes[w.0].value {
            NodeValue::Param(i) => &self.params[*i],
            NodeValue::Owned(_) => {
                return Err(NetError::Invalid(
                    "matvec weight must be a parameter leaf".to_string(),
                ))
            }
        };
        let (_, cols) = w_tensor.dims2()?;
        if cols != self.len_of(x) {
            return Err(NetError::ShapeMismatch {
                context: "tape matvec",
                detail: format!("weight width {cols} vs input {}", self.len_of(x)),
            });
        }
        let y = matvec(w_tensor, self.value(x));
        self.push(y, Op::MatVec { w, x }, "tape matvec")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NetError> {
        if self.len_of(a) != self.len_of(b) {
            return Err(NetError::ShapeMismatch {
                context: "tape add",
                detail: format!("{} vs {}", self.len_of(a), self.len_of(b)),
            });
        }
        let y: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x + y)
            .collect();
        self.push(y, Op::Add { a, b }, "tape add")
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NetError> {
        if self.len_of(a) != self.len_of(b) {
            return Err(NetError::ShapeMismatch {
                context: "tape hadamard",
                detail: format!("{} vs {}", self.len_of(a), self.len_of(b)),
            });
        }
        let y: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x * y)
            .collect();
        self.push(y, Op::Hadamard { a, b }, "tape hadamard")
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId, NetError> {
        let y: Vec<f64> = self.value(x).iter().map(|&v| sigmoid(v)).collect();
        self.push(y, Op::Sigmoid { x }, "tape sigmoid")
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId, NetError> {
        let y: Vec<f64> = self.value(x).iter().map(|v| v.tanh()).collect();
        self.push(y, Op::Tanh { x }, "tape tanh")
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId, NetError> {
        let y: Vec<f64> = self.value(x).iter().map(|v| v.max(0.0)).collect();
        self.push(y, Op::Relu { x }, "tape relu")
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId, NetError> {
        if start + len > self.len_of(x) {
            return Err(NetError::IndexOutOfRange {
                index: start + len,
                len: self.len_of(x),
            });
        }
        let y = self.value(x)[start..start + len].to_vec();
        self.push(y, Op::Slice { x, start }, "tape slice")
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId, NetError> {
        let mut y = Vec::new();
        for &p in parts {
            y.extend_from_slice(self.value(p));
        }
        self.push(
            y,
            Op::Concat {
                parts: parts.to_vec(),
            },
            "tape concat",
        )
    }

    /// Elementwise scale by a fixed mask (inverted dropout).
    pub fn scale_mask(&mut self, x: NodeId, mask: Vec<f64>) -> Result<NodeId, NetError> {
        if mask.len() != self.len_of(x) {
            return Err(NetError::ShapeMismatch {
                context: "tape scale_mask",
                detail: format!("mask {} vs input {}", mask.len(), self.len_of(x)),
            });
        }
        let y: Vec<f64> = self.value(x).iter().zip(&mask).map(|(v, m)| v * m).collect();
        self.push(y, Op::ScaleMask { x, mask }, "tape scale_mask")
    }

    /// Mean of the given rows of a parameter matrix (the trainable subword
    /// embedding path). Repeated rows contribute once per occurrence.
    pub fn gather_mean(&mut self, table: NodeId, rows: Vec<usize>) -> Result<NodeId, NetError> {
        let tensor = match &self.nodes[table.0].value {
            NodeValue::Param(i) => &self.params[*i],
            NodeValue::Owned(_) => {
                return Err(NetError::Invalid(
                    "gather_mean table must be a parameter leaf".to_string(),
                ))
            }
        };
        let (n_rows, dim) = tensor.dims2()?;
        if rows.is_empty() {
            return Err(NetError::Invalid("gather_mean over no rows".to_string()));
        }
        let mut y = vec![0.0; dim];
        for &r in &rows {
            if r >= n_rows {
                return Err(NetError::IndexOutOfRange {
                    index: r,
                    len: n_rows,
                });
            }
            for (acc, v) in y.iter_mut().zip(&tensor.data()[r * dim..(r + 1) * dim]) {
                *acc += v;
            }
        }
        let scale = 1.0 / rows.len() as f64;
        for v in &mut y {
            *v *= scale;
        }
        self.push(y, Op::GatherMean { table, rows }, "tape gather_mean")
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId, NetError> {
        let total: f64 = self.value(x).iter().sum();
        self.push(vec![total], Op::Sum { x }, "tape sum")
    }

    /// Fused softmax + cross-entropy against a one-hot target; returns the
    /// scalar loss node. The probabilities are cached for the backward pass
    /// and readable through [`Tape::probs`].
    pub fn softmax_ce(&mut self, scores: NodeId, target: usize) -> Result<NodeId, NetError> {
        let s = self.value(scores);
        if target >= s.len() {
            return Err(NetError::IndexOutOfRange {
                index: target,
                len: s.len(),
            });
        }
        let probs = super::ops::softmax(s);
        let loss = super::ops::cross_entropy(&probs, target)?;
        self.push(
            vec![loss],
            Op::SoftmaxCe {
                scores,
                target,
                probs,
            },
            "tape softmax_ce",
        )
    }

    /// The cached probability vector of a `softmax_ce` node.
    pub fn probs(&self, id: NodeId) -> Option<&[f64]> {
        match &self.nodes[id.0].op {
            Op::SoftmaxCe { probs, .. } => Some(probs),
            _ => None,
        }
    }

    /// Accumulates `d loss / d param` into `grads` (shapes aligned with the
    /// parameter slice). Adds to whatever is already there, so batches can
    /// share one gradient buffer.
    pub fn backward(&self, loss: NodeId, grads: &mut [Tensor]) {
        debug_assert_eq!(grads.len(), self.params.len());
        let mut buffers: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        accumulate(self, &mut buffers, grads, loss, &[1.0]);

        for idx in (0..self.nodes.len()).rev() {
            let dy = match buffers[idx].take() {
                Some(v) => v,
                None => continue,
            };
            match &self.nodes[idx].op {
                Op::Leaf => {}
                Op::MatVec { w, x } => {
                    let xv = self.value(*x).to_vec();
                    if let NodeValue::Param(pi) = self.nodes[w.0].value {
                        let (rows, cols) = self.params[pi].dims2().expect("validated at forward");
                        let gw = grads[pi].data_mut();
                        for (r, dyr) in dy.iter().enumerate() {
                            if *dyr == 0.0 {
                                continue;
                            }
                            let row = &mut gw[r * cols..(r + 1) * cols];
                            for (g, xv) in row.iter_mut().zip(&xv) {
                                *g += dyr * xv;
                            }
                        }
                        let wd = self.params[pi].data();
                        let mut dx = vec![0.0; cols];
                        for r in 0..rows {
                            let dyr = dy[r];
                            if dyr == 0.0 {
                                continue;
                            }
                            let row = &wd[r * cols..(r + 1) * cols];
                            for (d, wv) in dx.iter_mut().zip(row) {
                                *d += dyr * wv;
                            }
                        }
                        accumulate(self, &mut buffers, grads, *x, &dx);
                    }
                }
                Op::Add { a, b } => {
                    accumulate(self, &mut buffers, grads, *a, &dy);
                    accumulate(self, &mut buffers, grads, *b, &dy);
                }
                Op::Hadamard { a, b } => {
                    let da: Vec<f64> = dy.iter().zip(self.value(*b)).map(|(d, v)| d * v).collect();
                    let db: Vec<f64> = dy.iter().zip(self.value(*a)).map(|(d, v)| d * v).collect();
                    accumulate(self, &mut buffers, grads, *a, &da);
                    accumulate(self, &mut buffers, grads, *b, &db);
                }
                Op::Sigmoid { x } => {
                    let y = &self.nodes[idx];
                    let yv = match &y.value {
                        NodeValue::Owned(v) => v,
                        NodeValue::Param(_) => unreachable!(),
                    };
                    let dx: Vec<f64> = dy
                        .iter()
                        .zip(yv)
                        .map(|(d, y)| d * y * (1.0 - y))
                        .collect();
                    accumulate(self, &mut buffers, grads, *x, &dx);
                }
                Op::Tanh { x } => {
                    let yv = match &self.nodes[idx].value {
                        NodeValue::Owned(v) => v,
                        NodeValue::Param(_) => unreachable!(),
                    };
                    let dx: Vec<f64> = dy.iter().zip(yv).map(|(d, y)| d * (1.0 - y * y)).collect();
                    accumulate(self, &mut buffers, grads, *x, &dx);
                }
                Op::Relu { x } => {
                    let xv = self.value(*x);
                    let dx: Vec<f64> = dy
                        .iter()
                        .zip(xv)
                        .map(|(d, x)| if *x > 0.0 { *d } else { 0.0 })
                        .collect();
                    accumulate(self, &mut buffers, grads, *x, &dx);
                }
                Op::Slice { x, start } => {
                    let mut dx = vec![0.0; self.len_of(*x)];
                    dx[*start..*start + dy.len()].copy_from_slice(&dy);
                    accumulate(self, &mut buffers, grads, *x, &dx);
                }
                Op::Concat { parts } => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = self.len_of(p);
                        accumulate(self, &mut buffers, grads, p, &dy[offset..offset + len]);
                        offset += len;
                    }
                }
                Op::ScaleMask { x, mask } => {
                    let dx: Vec<f64> = dy.iter().zip(mask).map(|(d, m)| d * m).collect();
                    accumulate(self, &mut buffers, grads, *x, &dx);
                }
                Op::GatherMean { table, rows } => {
                    if let NodeValue::Param(pi) = self.nodes[table.0].value {
                        let dim = dy.len();
                        let scale = 1.0 / rows.len() as f64;
                        let gt = grads[pi].data_mut();
                        for &r in rows {
                            for (g, d) in gt[r * dim..(r + 1) * dim].iter_mut().zip(&dy) {
                                *g += d * scale;
                            }
                        }
                    }
                }
                Op::Sum { x } => {
                    let dx = vec![dy[0]; self.len_of(*x)];
                    accumulate(self, &mut buffers, grads, *x, &dx);
                }
                Op::SoftmaxCe {
                    scores,
                    target,
                    probs,
                } => {
                    let scale = dy[0];
                    let mut ds: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                    ds[*target] -= scale;
                    accumulate(self, &mut buffers, grads, *scores, &ds);
                }
            }
        }
    }
}

fn accumulate(
    tape: &Tape<'_>,
    buffers: &mut [Option<Vec<f64>>],
    grads: &mut [Tensor],
    id: NodeId,
    delta: &[f64],
) {
    match tape.nodes[id.0].value {
        NodeValue::Param(pi) => {
            for (g, d) in grads[pi].data_mut().iter_mut().zip(delta) {
                *g += d;
            }
        }
        NodeValue::Owned(_) => {
            let buf = buffers[id.0].get_or_insert_with(|| vec![0.0; tape.len_of(id)]);
            for (g, d) in buf.iter_mut().zip(delta) {
                *g += d;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::ops;

    fn grads_for(params: &[Tensor]) -> Vec<Tensor> {
        params.iter().map(Tensor::zeros_like).collect()
    }

    #[test]
    fn linear_gradient_is_exact() {
        // loss = sum(w . x): d loss / d w = outer(1, x)
        let params = vec![Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap()];
        let mut tape = Tape::new(&params);
        let w = tape.param(0);
        let x = tape.input(vec![0.5, -1.0, 2.0]).unwrap();
        let y = tape.matvec(w, x).unwrap();
        let loss = tape.sum(y).unwrap();
        assert!((tape.scalar(loss) - (4.5 + 9.0)).abs() < 1e-12);

        let mut grads = grads_for(&params);
        tape.backward(loss, &mut grads);
        let expect = [0.5, -1.0, 2.0, 0.5, -1.0, 2.0];
        for (g, e) in grads[0].data().iter().zip(&expect) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_ce_gradient_matches_probs_minus_onehot() {
        let params = vec![Tensor::new(vec![3, 3], {
            let mut id = vec![0.0; 9];
            id[0] = 1.0;
            id[4] = 1.0;
            id[8] = 1.0;
            id
        })
        .unwrap()];
        let mut tape = Tape::new(&params);
        let w = tape.param(0);
        let x = tape.input(vec![0.2, -0.4, 0.9]).unwrap();
        let scores = tape.matvec(w, x).unwrap();
        let loss = tape.softmax_ce(scores, 2).unwrap();

        let probs = tape.probs(loss).unwrap().to_vec();
        let mut grads = grads_for(&params);
        tape.backward(loss, &mut grads);

        // Identity weight: d loss / d w[r, c] = (p[r] - onehot[r]) * x[c].
        let x = [0.2, -0.4, 0.9];
        for r in 0..3 {
            let coeff = probs[r] - if r == 2 { 1.0 } else { 0.0 };
            for c in 0..3 {
                let got = grads[0].data()[r * 3 + c];
                assert!((got - coeff * x[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gather_mean_distributes_gradient() {
        let params = vec![Tensor::new(vec![3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap()];
        let mut tape = Tape::new(&params);
        let table = tape.param(0);
        let emb = tape.gather_mean(table, vec![0, 2, 2]).unwrap();
        let expect = [(1.0 + 5.0 + 5.0) / 3.0, (2.0 + 6.0 + 6.0) / 3.0];
        for (v, e) in tape.value(emb).iter().zip(&expect) {
            assert!((v - e).abs() < 1e-15);
        }

        let loss = tape.sum(emb).unwrap();
        let mut grads = grads_for(&params);
        tape.backward(loss, &mut grads);
        let g = grads[0].data();
        assert!((g[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((g[4] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(g[2], 0.0);
    }

    #[test]
    fn tape_forward_matches_pure_mlp() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let w1 = ops::xavier_uniform(4, 3, &mut rng);
        let b1 = Tensor::zeros(vec![4]);
        let w2 = ops::xavier_uniform(2, 4, &mut rng);
        let b2 = Tensor::zeros(vec![2]);
        let x = vec![0.3, -0.6, 0.9];

        let pure =
            ops::mlp_forward(&w1, &b1, &w2, &b2, &x, 0.0, false, &mut rng.clone()).unwrap();

        let params = vec![w1, b1, w2, b2];
        let mut tape = Tape::new(&params);
        let (w1n, b1n, w2n, b2n) = (tape.param(0), tape.param(1), tape.param(2), tape.param(3));
        let xn = tape.input(x).unwrap();
        let h = tape.matvec(w1n, xn).unwrap();
        let h = tape.add(h, b1n).unwrap();
        let h = tape.relu(h).unwrap();
        let y = tape.matvec(w2n, h).unwrap();
        let y = tape.add(y, b2n).unwrap();

        for (a, b) in tape.value(y).iter().zip(&pure) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn non_finite_forward_is_rejected() {
        let params: Vec<Tensor> = Vec::new();
        let mut tape = Tape::new(&params);
        let big = tape.input(vec![1e308, 1e308]).unwrap();
        assert!(tape.add(big, big).is_err());
    }
}
