//! Reverse-mode differentiation over a dynamically recorded tape.
//!
//! Every operation evaluates eagerly and records how to push gradients back
//! to its inputs. A tape is built per sample, differentiated once with
//! [`Tape::backward`] and dropped.

use super::matrix::{
    self, check_inner, check_same, matmul_acc, matmul_nt_acc, matmul_nt_banded_acc, matmul_tn_acc,
    Matrix,
};
use super::params::{GradBuffer, ParamId, ParamStore};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// An operation whose forward value is computed by the caller and whose
/// backward rule is supplied here.
pub trait CustomOp: Send + Sync {
    fn name(&self) -> &'static str;

    /// Gradients with respect to each input, in input order.
    fn backward(&self, inputs: &[&Matrix], output: &Matrix, grad: &Matrix) -> Vec<Matrix>;
}

enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Propagate {
        adj: Var,
        x: Var,
        band: usize,
    },
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddBias(Var, Var),
    Relu(Var),
    Log(Var),
    RowSoftmax(Var),
    NormalizeAdj(Var),
    MeanRows(Var),
    SumAll(Var),
    Concat(Vec<Var>),
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Matrix,
    },
    Custom {
        inputs: Vec<Var>,
        op: Box<dyn CustomOp>,
    },
}

struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every recorded node.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    params: Vec<(ParamId, Matrix)>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Matrix> {
        self.grads[var.0].as_ref()
    }

    /// Per-parameter gradients (a parameter used twice appears twice).
    pub fn params(&self) -> &[(ParamId, Matrix)] {
        &self.params
    }

    /// Adds `scale` times every parameter gradient into `buffer`.
    pub fn accumulate_into(&self, buffer: &mut GradBuffer, scale: f64) {
        for (id, g) in &self.params {
            buffer.add_scaled(*id, g, scale);
        }
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

    pub fn value(&self, var: Var) -> &Matrix {
        &self.nodes[var.0].value
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    /// A constant input; no gradient flows into it.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A free input whose gradient is reported by [`Gradients::get`].
    pub fn input(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A trainable parameter read from `store`.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        check_inner("matmul", av, bv)?;
        let mut out = Matrix::zeros(av.rows(), bv.cols());
        matmul_acc(av, bv, &mut out);
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    /// `adj * x` for a square `adj` that is zero outside `|i - j| <= band`.
    ///
    /// The gradient with respect to `adj` is produced on the band only; entries
    /// outside it are structural zeros.
    pub fn propagate(&mut self, adj: Var, x: Var, band: usize) -> Result<Var> {
        let (av, xv) = (self.value(adj), self.value(x));
        check_inner("propagate", av, xv)?;
        if av.rows() != av.cols() {
            return Err(Error::ShapeMismatch {
                op: "propagate",
                lhs: av.shape(),
                rhs: (av.cols(), av.rows()),
            });
        }
        let actual = av.bandwidth();
        if actual > band {
            return Err(Error::InvalidArgument(format!(
                "propagate: adjacency bandwidth {actual} exceeds declared band {band}"
            )));
        }
        let mut out = Matrix::zeros(av.rows(), xv.cols());
        matmul_acc(av, xv, &mut out);
        let rg = self.needs(adj) || self.needs(x);
        Ok(self.push(out, Op::Propagate { adj, x, band }, rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        let rg = self.needs(a);
        self.push(out, Op::Transpose(a), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same("add", self.value(a), self.value(b))?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same("sub", self.value(a), self.value(b))?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same("mul", self.value(a), self.value(b))?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a).map(|x| x * factor);
        let rg = self.needs(a);
        self.push(out, Op::Scale(a, factor), rg)
    }

    /// Adds a `1 x c` bias row to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(Error::ShapeMismatch {
                op: "add_bias",
                lhs: xv.shape(),
                rhs: bv.shape(),
            });
        }
        let mut out = xv.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(bv.as_slice()) {
                *o += b;
            }
        }
        let rg = self.needs(x) || self.needs(bias);
        Ok(self.push(out, Op::AddBias(x, bias), rg))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        let rg = self.needs(a);
        self.push(out, Op::Relu(a), rg)
    }

    /// Natural logarithm, elementwise.
    pub fn log(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::ln);
        let rg = self.needs(a);
        self.push(out, Op::Log(a), rg)
    }

    pub fn row_softmax(&mut self, a: Var) -> Var {
        let out = matrix::row_softmax(self.value(a));
        let rg = self.needs(a);
        self.push(out, Op::RowSoftmax(a), rg)
    }

    /// `D^{-1/2} (A + I) D^{-1/2}`.
    pub fn normalize_adjacency(&mut self, a: Var) -> Result<Var> {
        let out = matrix::normalize_adjacency(self.value(a))?;
        let rg = self.needs(a);
        Ok(self.push(out, Op::NormalizeAdj(a), rg))
    }

    /// Column means as a `1 x c` row.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let n = av.rows() as f64;
        let mut out = Matrix::zeros(1, av.cols());
        for r in 0..av.rows() {
            for (o, v) in out.as_mut_slice().iter_mut().zip(av.row(r)) {
                *o += v;
            }
        }
        let out = out.map(|v| v / n);
        let rg = self.needs(a);
        self.push(out, Op::MeanRows(a), rg)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let out = Matrix::filled(1, 1, self.value(a).sum());
        let rg = self.needs(a);
        self.push(out, Op::SumAll(a), rg)
    }

    /// Joins row vectors end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut values = Vec::new();
        for &p in parts {
            let pv = self.value(p);
            if pv.rows() != 1 {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: (1, pv.cols()),
                    rhs: pv.shape(),
                });
            }
            values.extend_from_slice(pv.as_slice());
        }
        let rg = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(Matrix::row_vector(values), Op::Concat(parts.to_vec()), rg))
    }

    /// Mean softmax cross-entropy of `logits` (one row per sample).
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        if labels.len() != lv.rows() {
            return Err(Error::ShapeMismatch {
                op: "cross_entropy",
                lhs: lv.shape(),
                rhs: (labels.len(), 1),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= lv.cols()) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                classes: lv.cols(),
            });
        }
        let (loss, probs) = softmax_cross_entropy(lv, labels);
        let rg = self.needs(logits);
        Ok(self.push(
            Matrix::filled(1, 1, loss),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            rg,
        ))
    }

    pub fn custom(&mut self, inputs: &[Var], value: Matrix, op: Box<dyn CustomOp>) -> Var {
        let rg = inputs.iter().any(|&v| self.needs(v));
        self.push(
            value,
            Op::Custom {
                inputs: inputs.to_vec(),
                op,
            },
            rg,
        )
    }

    /// Differentiates the `1 x 1` value `output` with respect to every node.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out_shape = self.value(output).shape();
        if out_shape != (1, 1) {
            return Err(Error::ShapeMismatch {
                op: "backward",
                lhs: out_shape,
                rhs: (1, 1),
            });
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Matrix::filled(1, 1, 1.0));
        let mut params = Vec::new();

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].as_ref() else {
                continue;
            };
            let g = g.clone();
            let mut send = |var: Var, contribution: Matrix| {
                if !self.nodes[var.0].requires_grad {
                    return;
                }
                match &mut grads[var.0] {
                    Some(acc) => acc.add_scaled(&contribution, 1.0),
                    slot @ None => *slot = Some(contribution),
                }
            };
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => params.push((*id, g.clone())),
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.needs(*a) {
                        let mut da = Matrix::zeros(av.rows(), av.cols());
                        matmul_nt_acc(&g, bv, &mut da);
                        send(*a, da);
                    }
                    if self.needs(*b) {
                        let mut db = Matrix::zeros(bv.rows(), bv.cols());
                        matmul_tn_acc(av, &g, &mut db);
                        send(*b, db);
                    }
                }
                Op::Propagate { adj, x, band } => {
                    let (av, xv) = (self.value(*adj), self.value(*x));
                    if self.needs(*adj) {
                        let mut da = Matrix::zeros(av.rows(), av.cols());
                        matmul_nt_banded_acc(&g, xv, *band, &mut da);
                        send(*adj, da);
                    }
                    if self.needs(*x) {
                        let mut dx = Matrix::zeros(xv.rows(), xv.cols());
                        matmul_tn_acc(av, &g, &mut dx);
                        send(*x, dx);
                    }
                }
                Op::Transpose(a) => send(*a, g.transpose()),
                Op::Add(a, b) => {
                    send(*a, g.clone());
                    send(*b, g);
                }
                Op::Sub(a, b) => {
                    send(*a, g.clone());
                    send(*b, g.map(|v| -v));
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    send(*a, g.zip_map(bv, |x, y| x * y));
                    send(*b, g.zip_map(av, |x, y| x * y));
                }
                Op::Scale(a, factor) => send(*a, g.map(|v| v * factor)),
                Op::AddBias(x, bias) => {
                    let mut db = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (d, v) in db.as_mut_slice().iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                    send(*bias, db);
                    send(*x, g);
                }
                Op::Relu(a) => {
                    let av = self.value(*a);
                    send(*a, g.zip_map(av, |gv, x| if x > 0.0 { gv } else { 0.0 }));
                }
                Op::Log(a) => {
                    let av = self.value(*a);
                    send(*a, g.zip_map(av, |gv, x| gv / x));
                }
                Op::RowSoftmax(a) => {
                    let y = &node.value;
                    let mut da = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let inner = matrix::dot(yr, gr);
                        for ((d, yv), gv) in da.row_mut(r).iter_mut().zip(yr).zip(gr) {
                            *d = yv * (gv - inner);
                        }
                    }
                    send(*a, da);
                }
                Op::NormalizeAdj(a) => {
                    send(*a, normalize_backward(self.value(*a), &node.value, &g));
                }
                Op::MeanRows(a) => {
                    let av = self.value(*a);
                    let n = av.rows() as f64;
                    send(
                        *a,
                        Matrix::from_fn(av.rows(), av.cols(), |_, c| g.get(0, c) / n),
                    );
                }
                Op::SumAll(a) => {
                    let av = self.value(*a);
                    send(*a, Matrix::filled(av.rows(), av.cols(), g.get(0, 0)));
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let width = self.value(p).cols();
                        let slice = g.as_slice()[offset..offset + width].to_vec();
                        send(p, Matrix::row_vector(slice));
                        offset += width;
                    }
                }
                Op::CrossEntropy {
                    logits,
                    labels,
                    probs,
                } => {
                    let scale = g.get(0, 0) / labels.len() as f64;
                    let mut d = probs.clone();
                    for (r, &label) in labels.iter().enumerate() {
                        let row = d.row_mut(r);
                        row[label] -= 1.0;
                        for v in row.iter_mut() {
                            *v *= scale;
                        }
                    }
                    send(*logits, d);
                }
                Op::Custom { inputs, op } => {
                    let values: Vec<&Matrix> = inputs.iter().map(|&v| self.value(v)).collect();
                    let contributions = op.backward(&values, &node.value, &g);
                    assert_eq!(
                        contributions.len(),
                        inputs.len(),
                        "custom op {} returned wrong gradient count",
                        op.name()
                    );
                    for (&v, c) in inputs.iter().zip(contributions) {
                        send(v, c);
                    }
                }
            }
        }
        Ok(Gradients { grads, params })
    }
}

/// Mean cross-entropy and the softmax probabilities of `logits`.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> (f64, Matrix) {
    let probs = matrix::row_softmax(logits);
    let mut loss = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[label];
    }
    (loss / labels.len() as f64, probs)
}

fn normalize_backward(a: &Matrix, a_hat: &Matrix, g: &Matrix) -> Matrix {
    let n = a.rows();
    // r_i = d_i^{-1/2}; dL/dd_i = -1/2 r_i^2 sum_j (G_ij Â_ij + G_ji Â_ji)
    let degrees: Vec<f64> = (0..n).map(|r| a.row(r).iter().sum::<f64>() + 1.0).collect();
    let inv_sqrt: Vec<f64> = degrees.iter().map(|d| d.sqrt().recip()).collect();
    let mut through = vec![0.0; n];
    for r in 0..n {
        for c in 0..n {
            let t = g.get(r, c) * a_hat.get(r, c);
            through[r] += t;
            through[c] += t;
        }
    }
    let d_degree: Vec<f64> = (0..n).map(|r| -0.5 * through[r] / degrees[r]).collect();
    Matrix::from_fn(n, n, |r, c| {
        g.get(r, c) * inv_sqrt[r] * inv_sqrt[c] + d_degree[r]
    })
}
