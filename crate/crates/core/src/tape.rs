//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Forward computations append nodes (each storing its output tensor and the
//! op that produced it); [`backward`] replays the tape in reverse, seeding the
//! scalar loss with gradient one and accumulating per-parameter gradients by
//! name. Constants entering mid-graph (targets, encodings) are plain data, so
//! gradient never flows into them.

use std::collections::BTreeMap;

use crate::error::{AqlError, Result};
use crate::scalar::Scalar;
use crate::tensor::{matmul_acc, matmul_nt_acc, matmul_tn_acc, Tensor};

pub type NodeId = usize;

/// Gradients keyed by parameter name.
pub type GradMap<F> = BTreeMap<String, Tensor<F>>;

enum Op<F: Scalar> {
    /// Constant leaf; no gradient.
    Const,
    /// Parameter leaf; gradient accumulated under `name`.
    Param { name: String },
    /// `[m,k] @ [k,n]`.
    MatMul { a: NodeId, b: NodeId },
    /// Row-broadcast bias add: `[m,n] + [n]`.
    AddBias { x: NodeId, bias: NodeId },
    Tanh { x: NodeId },
    Relu { x: NodeId },
    /// Column-wise concat of a node with constant data: `[m,p] ++ [m,q]`.
    ConcatCols { left: NodeId, right: Tensor<F> },
    /// Row-wise log-softmax.
    LogSoftmaxRows { x: NodeId },
    /// Row-wise entropy of the distribution given by a log-probability node: `[m,k] -> [m,1]`.
    EntropyRows { log_probs: NodeId },
    /// Pick one column per row: `[m,k] -> [m,1]`.
    GatherCols { x: NodeId, indices: Vec<usize> },
    /// Elementwise sum of two same-shape nodes.
    Add { a: NodeId, b: NodeId },
    /// `c - x` with constant `c`.
    SubFromConst { x: NodeId },
    Square { x: NodeId },
    Scale { x: NodeId, k: F },
    AddScalar { x: NodeId },
    MeanAll { x: NodeId },
    SumAll { x: NodeId },
}

struct Node<F: Scalar> {
    value: Tensor<F>,
    op: Op<F>,
}

/// Records a forward computation for later differentiation.
pub struct Tape<F: Scalar> {
    nodes: Vec<Node<F>>,
}

impl<F: Scalar> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Tape<F> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<F> {
        &self.nodes[id].value
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>) -> NodeId {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    /// Constant input; gradient does not flow into it.
    pub fn constant(&mut self, value: Tensor<F>) -> NodeId {
        self.push(value, Op::Const)
    }

    /// Parameter leaf. The tensor is snapshotted at registration; gradients
    /// are accumulated under `name`, summing if the same parameter is
    /// registered more than once.
    pub fn param(&mut self, name: &str, value: Tensor<F>) -> NodeId {
        self.push(
            value,
            Op::Param {
                name: name.to_string(),
            },
        )
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (&self.nodes[a].value, &self.nodes[b].value);
        if av.shape().len() != 2 || bv.shape().len() != 2 || av.cols() != bv.rows() {
            return Err(AqlError::Usage(format!(
                "matmul shape mismatch: {:?} @ {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let (m, k, n) = (av.rows(), av.cols(), bv.cols());
        let mut out = vec![F::zero(); m * n];
        matmul_acc(av.data(), bv.data(), &mut out, m, k, n);
        let value = Tensor::matrix(m, n, out)?;
        Ok(self.push(value, Op::MatMul { a, b }))
    }

    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (xv, bv) = (&self.nodes[x].value, &self.nodes[bias].value);
        if bv.numel() != xv.cols() {
            return Err(AqlError::Usage(format!(
                "bias of {} elements against width {}",
                bv.numel(),
                xv.cols()
            )));
        }
        let cols = xv.cols();
        let mut out = Vec::with_capacity(xv.numel());
        for row in 0..xv.rows() {
            for (j, &v) in xv.row(row).iter().enumerate() {
                out.push(v + bv.data()[j % cols]);
            }
        }
        let value = Tensor::from_vec(xv.shape().to_vec(), out)?;
        Ok(self.push(value, Op::AddBias { x, bias }))
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        let out: Vec<F> = self.nodes[x].value.data().iter().map(|v| v.tanh()).collect();
        let value = Tensor::from_vec(self.nodes[x].value.shape().to_vec(), out)?;
        Ok(self.push(value, Op::Tanh { x }))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let out: Vec<F> = self.nodes[x]
            .value
            .data()
            .iter()
            .map(|&v| if v > F::zero() { v } else { F::zero() })
            .collect();
        let value = Tensor::from_vec(self.nodes[x].value.shape().to_vec(), out)?;
        Ok(self.push(value, Op::Relu { x }))
    }

    pub fn concat_cols(&mut self, left: NodeId, right: Tensor<F>) -> Result<NodeId> {
        let lv = &self.nodes[left].value;
        if right.rows() != lv.rows() {
            return Err(AqlError::Usage(format!(
                "concat rows mismatch: {} vs {}",
                lv.rows(),
                right.rows()
            )));
        }
        let (rows, lc, rc) = (lv.rows(), lv.cols(), right.cols());
        let mut out = Vec::with_capacity(rows * (lc + rc));
        for r in 0..rows {
            out.extend_from_slice(lv.row(r));
            out.extend_from_slice(right.row(r));
        }
        let value = Tensor::matrix(rows, lc + rc, out)?;
        Ok(self.push(value, Op::ConcatCols { left, right }))
    }

    pub fn log_softmax_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let value = crate::dist::log_softmax(&self.nodes[x].value)?;
        Ok(self.push(value, Op::LogSoftmaxRows { x }))
    }

    /// Entropy per row of the distribution `p = exp(log_probs)`.
    pub fn entropy_rows(&mut self, log_probs: NodeId) -> Result<NodeId> {
        let lp = &self.nodes[log_probs].value;
        let mut out = Vec::with_capacity(lp.rows());
        for r in 0..lp.rows() {
            let h: F = lp.row(r).iter().map(|&l| -(l.exp() * l)).sum();
            out.push(h);
        }
        let value = Tensor::matrix(lp.rows(), 1, out)?;
        Ok(self.push(value, Op::EntropyRows { log_probs }))
    }

    pub fn gather_cols(&mut self, x: NodeId, indices: Vec<usize>) -> Result<NodeId> {
        let xv = &self.nodes[x].value;
        if indices.len() != xv.rows() {
            return Err(AqlError::Usage(format!(
                "gather wants {} indices, got {}",
                xv.rows(),
                indices.len()
            )));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= xv.cols()) {
            return Err(AqlError::Usage(format!(
                "gather index {} out of width {}",
                bad,
                xv.cols()
            )));
        }
        let out: Vec<F> = indices
            .iter()
            .enumerate()
            .map(|(r, &j)| xv.row(r)[j])
            .collect();
        let value = Tensor::matrix(xv.rows(), 1, out)?;
        Ok(self.push(value, Op::GatherCols { x, indices }))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (&self.nodes[a].value, &self.nodes[b].value);
        if av.shape() != bv.shape() {
            return Err(AqlError::Usage(format!(
                "add shape mismatch: {:?} vs {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let out: Vec<F> = av.data().iter().zip(bv.data()).map(|(&x, &y)| x + y).collect();
        let value = Tensor::from_vec(av.shape().to_vec(), out)?;
        Ok(self.push(value, Op::Add { a, b }))
    }

    /// `c - x` elementwise for a constant tensor `c`.
    pub fn sub_from_const(&mut self, c: Tensor<F>, x: NodeId) -> Result<NodeId> {
        let xv = &self.nodes[x].value;
        if c.shape() != xv.shape() {
            return Err(AqlError::Usage(format!(
                "sub shape mismatch: {:?} vs {:?}",
                c.shape(),
                xv.shape()
            )));
        }
        let out: Vec<F> = c.data().iter().zip(xv.data()).map(|(&cv, &v)| cv - v).collect();
        let value = Tensor::from_vec(xv.shape().to_vec(), out)?;
        Ok(self.push(value, Op::SubFromConst { x }))
    }

    pub fn square(&mut self, x: NodeId) -> Result<NodeId> {
        let out: Vec<F> = self.nodes[x].value.data().iter().map(|&v| v * v).collect();
        let value = Tensor::from_vec(self.nodes[x].value.shape().to_vec(), out)?;
        Ok(self.push(value, Op::Square { x }))
    }

    pub fn scale(&mut self, x: NodeId, k: F) -> Result<NodeId> {
        let out: Vec<F> = self.nodes[x].value.data().iter().map(|&v| v * k).collect();
        let value = Tensor::from_vec(self.nodes[x].value.shape().to_vec(), out)?;
        Ok(self.push(value, Op::Scale { x, k }))
    }

    pub fn add_scalar(&mut self, x: NodeId, c: F) -> Result<NodeId> {
        let out: Vec<F> = self.nodes[x].value.data().iter().map(|&v| v + c).collect();
        let value = Tensor::from_vec(self.nodes[x].value.shape().to_vec(), out)?;
        Ok(self.push(value, Op::AddScalar { x }))
    }

    pub fn mean_all(&mut self, x: NodeId) -> Result<NodeId> {
        let xv = &self.nodes[x].value;
        let n = F::from_f64_lit(xv.numel() as f64);
        let mean = xv.data().iter().copied().sum::<F>() / n;
        let value = Tensor::scalar(mean)?;
        Ok(self.push(value, Op::MeanAll { x }))
    }

    pub fn sum_all(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.nodes[x].value.data().iter().copied().sum::<F>();
        let value = Tensor::scalar(s)?;
        Ok(self.push(value, Op::SumAll { x }))
    }
}

/// Reverse pass from a scalar loss node.
///
/// Returns one gradient tensor per parameter that appears on the tape;
/// parameters never touched by the computation are simply absent (the
/// optimizer treats absence as a zero gradient).
pub fn backward<F: Scalar>(tape: &Tape<F>, loss: NodeId) -> Result<GradMap<F>> {
    let loss_value = tape
        .nodes
        .get(loss)
        .ok_or_else(|| AqlError::Usage(format!("loss node {} not on tape", loss)))?;
    if !loss_value.value.is_scalar() {
        return Err(AqlError::Usage(format!(
            "loss must be scalar, got shape {:?}",
            loss_value.value.shape()
        )));
    }

    let mut grads: Vec<Option<Vec<F>>> = vec![None; tape.nodes.len()];
    grads[loss] = Some(vec![F::one()]);

    let mut out: GradMap<F> = BTreeMap::new();

    for id in (0..=loss).rev() {
        let gy = match grads[id].take() {
            Some(g) => g,
            None => continue,
        };
        let node = &tape.nodes[id];
        match &node.op {
            Op::Const => {}
            Op::Param { name } => {
                let shape = node.value.shape().to_vec();
                match out.get_mut(name.as_str()) {
                    Some(acc) => {
                        let merged: Vec<F> =
                            acc.data().iter().zip(&gy).map(|(&a, &g)| a + g).collect();
                        *acc = Tensor::from_vec(shape, merged)?;
                    }
                    None => {
                        out.insert(name.clone(), Tensor::from_vec(shape, gy)?);
                    }
                }
            }
            Op::MatMul { a, b } => {
                let (av, bv) = (&tape.nodes[*a].value, &tape.nodes[*b].value);
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                {
                    let ga = grads[*a].get_or_insert_with(|| vec![F::zero(); m * k]);
                    matmul_nt_acc(&gy, bv.data(), ga, m, n, k);
                }
                let gb = grads[*b].get_or_insert_with(|| vec![F::zero(); k * n]);
                matmul_tn_acc(av.data(), &gy, gb, k, m, n);
            }
            Op::AddBias { x, bias } => {
                let cols = tape.nodes[*bias].value.numel();
                {
                    let gb = grads[*bias].get_or_insert_with(|| vec![F::zero(); cols]);
                    for (j, &g) in gy.iter().enumerate() {
                        gb[j % cols] += g;
                    }
                }
                accumulate(&mut grads, *x, &gy);
            }
            Op::Tanh { x } => {
                let gx: Vec<F> = node
                    .value
                    .data()
                    .iter()
                    .zip(&gy)
                    .map(|(&y, &g)| g * (F::one() - y * y))
                    .collect();
                accumulate(&mut grads, *x, &gx);
            }
            Op::Relu { x } => {
                let gx: Vec<F> = tape.nodes[*x]
                    .value
                    .data()
                    .iter()
                    .zip(&gy)
                    .map(|(&v, &g)| if v > F::zero() { g } else { F::zero() })
                    .collect();
                accumulate(&mut grads, *x, &gx);
            }
            Op::ConcatCols { left, right } => {
                let lv = &tape.nodes[*left].value;
                let (rows, lc, rc) = (lv.rows(), lv.cols(), right.cols());
                let mut gl = vec![F::zero(); rows * lc];
                for r in 0..rows {
                    gl[r * lc..(r + 1) * lc]
                        .copy_from_slice(&gy[r * (lc + rc)..r * (lc + rc) + lc]);
                }
                accumulate(&mut grads, *left, &gl);
            }
            Op::LogSoftmaxRows { x } => {
                // dx_j = dy_j - p_j * sum_k dy_k, with p = exp(output).
                let y = node.value.data();
                let cols = node.value.cols();
                let mut gx = vec![F::zero(); y.len()];
                for r in 0..node.value.rows() {
                    let gy_row = &gy[r * cols..(r + 1) * cols];
                    let row_sum: F = gy_row.iter().copied().sum();
                    for j in 0..cols {
                        gx[r * cols + j] = gy_row[j] - y[r * cols + j].exp() * row_sum;
                    }
                }
                accumulate(&mut grads, *x, &gx);
            }
            Op::EntropyRows { log_probs } => {
                // dH/dlp_j = -p_j (lp_j + 1); composing with the log-softmax
                // backward yields the usual -p_j (log p_j + H) on logits.
                let lp = &tape.nodes[*log_probs].value;
                let cols = lp.cols();
                let mut gx = vec![F::zero(); lp.numel()];
                for r in 0..lp.rows() {
                    let g = gy[r];
                    for j in 0..cols {
                        let l = lp.row(r)[j];
                        gx[r * cols + j] = -g * l.exp() * (l + F::one());
                    }
                }
                accumulate(&mut grads, *log_probs, &gx);
            }
            Op::GatherCols { x, indices } => {
                let xv = &tape.nodes[*x].value;
                let cols = xv.cols();
                let mut gx = vec![F::zero(); xv.numel()];
                for (r, &j) in indices.iter().enumerate() {
                    gx[r * cols + j] = gy[r];
                }
                accumulate(&mut grads, *x, &gx);
            }
            Op::Add { a, b } => {
                accumulate(&mut grads, *a, &gy);
                accumulate(&mut grads, *b, &gy);
            }
            Op::SubFromConst { x } => {
                let gx: Vec<F> = gy.iter().map(|&g| -g).collect();
                accumulate(&mut grads, *x, &gx);
            }
            Op::Square { x } => {
                let two = F::from_f64_lit(2.0);
                let gx: Vec<F> = tape.nodes[*x]
                    .value
                    .data()
                    .iter()
                    .zip(&gy)
                    .map(|(&v, &g)| two * v * g)
                    .collect();
                accumulate(&mut grads, *x, &gx);
            }
            Op::Scale { x, k } => {
                let gx: Vec<F> = gy.iter().map(|&g| g * *k).collect();
                accumulate(&mut grads, *x, &gx);
            }
            Op::AddScalar { x } => {
                accumulate(&mut grads, *x, &gy);
            }
            Op::MeanAll { x } => {
                let n = tape.nodes[*x].value.numel();
                let k = gy[0] / F::from_f64_lit(n as f64);
                let gx = vec![k; n];
                accumulate(&mut grads, *x, &gx);
            }
            Op::SumAll { x } => {
                let gx = vec![gy[0]; tape.nodes[*x].value.numel()];
                accumulate(&mut grads, *x, &gx);
            }
        }
    }

    Ok(out)
}

fn accumulate<F: Scalar>(grads: &mut [Option<Vec<F>>], id: NodeId, g: &[F]) {
    match &mut grads[id] {
        Some(acc) => {
            for (a, &v) in acc.iter_mut().zip(g) {
                *a += v;
            }
        }
        None => grads[id] = Some(g.to_vec()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: Vec<usize>, data: Vec<f64>) -> Tensor<f64> {
        Tensor::from_vec(shape, data).unwrap()
    }

    #[test]
    fn linear_gradient_is_the_input() {
        // loss = sum(w . x) as [1,3] @ [3,1]
        let mut tape: Tape<f64> = Tape::new();
        let w = tape.param("w", t(vec![1, 3], vec![0.3, -1.0, 2.0]));
        let x = tape.constant(t(vec![3, 1], vec![4.0, 5.0, 6.0]));
        let loss = tape.matmul(w, x).unwrap();
        let grads = backward(&tape, loss).unwrap();
        assert_eq!(grads["w"].data(), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn squared_norm_gradient_is_twice_the_weights() {
        let mut tape: Tape<f64> = Tape::new();
        let w = tape.param("w", t(vec![4], vec![1.0, -2.0, 0.5, 3.0]));
        let sq = tape.square(w).unwrap();
        let loss = tape.sum_all(sq).unwrap();
        let grads = backward(&tape, loss).unwrap();
        assert_eq!(grads["w"].data(), &[2.0, -4.0, 1.0, 6.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape: Tape<f64> = Tape::new();
        let w = tape.param("w", t(vec![2], vec![1.0, 2.0]));
        let err = backward(&tape, w).unwrap_err();
        assert!(matches!(err, AqlError::Usage(_)));
    }

    #[test]
    fn repeated_param_registration_accumulates() {
        // loss = sum(w) + sum(w) -> grad 2 per coordinate.
        let mut tape: Tape<f64> = Tape::new();
        let w1 = tape.param("w", t(vec![2], vec![1.0, 2.0]));
        let w2 = tape.param("w", t(vec![2], vec![1.0, 2.0]));
        let s1 = tape.sum_all(w1).unwrap();
        let s2 = tape.sum_all(w2).unwrap();
        let loss = tape.add(s1, s2).unwrap();
        let grads = backward(&tape, loss).unwrap();
        assert_eq!(grads["w"].data(), &[2.0, 2.0]);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut tape: Tape<f64> = Tape::new();
        let w = tape.param("w", t(vec![1, 2], vec![1.0, 2.0]));
        let c = tape.constant(t(vec![2, 1], vec![3.0, 4.0]));
        let loss = tape.matmul(w, c).unwrap();
        let grads = backward(&tape, loss).unwrap();
        assert_eq!(grads.len(), 1);
        assert!(grads.contains_key("w"));
    }
}
