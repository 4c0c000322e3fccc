//! Adaptive visibility graph.
//!
//! A bank of `m - 1` one-dimensional convolutions with kernel lengths
//! `2..=m` (stride 1) slides over a series. The ReLU of kernel `s` at offset
//! `f` becomes the weight of the edge joining samples `f` and `f + s - 1`, so
//! the result is a symmetric non-negative adjacency with zero diagonal and
//! bandwidth `m - 1`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Edge, VisGraph};
use crate::nn::{CustomOp, Matrix, Tape, Var};
use crate::signal::Series;

/// One convolution kernel of the bank.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

/// Kernels of lengths `2..=m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBank {
    kernels: Vec<Kernel>,
}

impl ConvBank {
    /// Builds a bank from kernels ordered by length; kernel `k` must have
    /// `k + 2` weights.
    pub fn new(kernels: Vec<Kernel>) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::InvalidArgument(
                "bank needs at least one kernel".into(),
            ));
        }
        for (k, kernel) in kernels.iter().enumerate() {
            if kernel.weights.len() != k + 2 {
                return Err(Error::InvalidArgument(format!(
                    "kernel {k} should have {} weights, has {}",
                    k + 2,
                    kernel.weights.len()
                )));
            }
        }
        Ok(Self { kernels })
    }

    /// All-zero bank of span `m`.
    pub fn zeros(m: usize) -> Result<Self> {
        check_span(m)?;
        Ok(Self {
            kernels: (2..=m)
                .map(|s| Kernel {
                    weights: vec![0.0; s],
                    bias: 0.0,
                })
                .collect(),
        })
    }

    /// Maximum span `m` (longest kernel length).
    pub fn span(&self) -> usize {
        self.kernels.len() + 1
    }

    pub fn kernels(&self) -> &[Kernel] {
        &self.kernels
    }

    /// Kernel of length `s`.
    pub fn kernel(&self, s: usize) -> &Kernel {
        &self.kernels[s - 2]
    }

    pub fn kernel_mut(&mut self, s: usize) -> &mut Kernel {
        &mut self.kernels[s - 2]
    }

    pub fn num_weights(&self) -> usize {
        self.kernels.iter().map(|k| k.weights.len()).sum()
    }
}

fn check_span(m: usize) -> Result<()> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "span m must be at least 2, got {m}"
        )));
    }
    Ok(())
}

/// Random bank: kernel `s` weights uniform in `(-sqrt(1/s), sqrt(1/s))`, zero biases.
pub fn init_bank(m: usize, seed: u64) -> Result<ConvBank> {
    check_span(m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kernels = (2..=m)
        .map(|s| {
            let limit = (1.0 / s as f64).sqrt();
            Kernel {
                weights: (0..s).map(|_| rng.gen_range(-limit..limit)).collect(),
                bias: 0.0,
            }
        })
        .collect();
    Ok(ConvBank { kernels })
}

/// Symmetric banded matrix stored by diagonal offset.
///
/// `band[d - 1][i]` holds the entry at `(i, i + d)` (0-based) for
/// `1 <= d <= m - 1`; everything else, including the diagonal, is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix {
    n: usize,
    band: Vec<Vec<f64>>,
}

impl BandedMatrix {
    /// Zero matrix of order `n` with bandwidth `m - 1`.
    pub fn zeros(n: usize, m: usize) -> Self {
        let width = m.saturating_sub(1).min(n.saturating_sub(1));
        Self {
            n,
            band: (1..=width).map(|d| vec![0.0; n - d]).collect(),
        }
    }

    pub fn order(&self) -> usize {
        self.n
    }

    /// Largest offset that can hold a nonzero entry.
    pub fn bandwidth(&self) -> usize {
        self.band.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        let d = hi - lo;
        if d == 0 || d > self.band.len() {
            0.0
        } else {
            self.band[d - 1][lo]
        }
    }

    /// Sets entry `(i, i + d)` (and its mirror).
    pub fn set(&mut self, i: usize, d: usize, value: f64) {
        self.band[d - 1][i] = value;
    }

    /// Entries at offset `d`, indexed by their lower node.
    pub fn diagonal(&self, d: usize) -> &[f64] {
        &self.band[d - 1]
    }

    pub fn to_dense(&self) -> Matrix {
        let n = self.n;
        let mut m = Matrix::zeros(n, n);
        for (k, diag) in self.band.iter().enumerate() {
            let d = k + 1;
            for (i, &v) in diag.iter().enumerate() {
                m.set(i, i + d, v);
                m.set(i + d, i, v);
            }
        }
        m
    }

    /// Graph of the strictly positive entries.
    pub fn to_graph(&self) -> VisGraph {
        let edges = self.band.iter().enumerate().flat_map(|(k, diag)| {
            diag.iter()
                .enumerate()
                .filter(|(_, &v)| v > 0.0)
                .map(move |(i, &v)| Edge {
                    u: i,
                    v: i + k + 1,
                    weight: v,
                })
        });
        VisGraph::from_edges(self.n, edges)
    }
}

/// Gradients of a loss with respect to every bank parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct BankGradient {
    /// `weights[s - 2][t]` for kernel length `s`.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

fn check_length(series: &Series, bank: &ConvBank) -> Result<()> {
    let m = bank.span();
    if series.len() < m {
        return Err(Error::SeriesTooShort {
            len: series.len(),
            min: m,
        });
    }
    Ok(())
}

#[inline]
fn conv(t: &[f64], kernel: &Kernel, f: usize) -> f64 {
    kernel.bias
        + kernel
            .weights
            .iter()
            .zip(&t[f..])
            .map(|(w, x)| w * x)
            .sum::<f64>()
}

/// Maps `series` to its adaptive visibility adjacency.
pub fn avg_forward(series: &Series, bank: &ConvBank) -> Result<BandedMatrix> {
    check_length(series, bank)?;
    let t = series.values();
    let n = t.len();
    let mut out = BandedMatrix::zeros(n, bank.span());
    for s in 2..=bank.span() {
        let kernel = bank.kernel(s);
        for f in 0..=n - s {
            out.set(f, s - 1, conv(t, kernel, f).max(0.0));
        }
    }
    Ok(out)
}

/// Back-propagates `upstream` (gradient per stored band entry) to the bank.
///
/// The ReLU subgradient at zero is taken as zero.
pub fn avg_backward(
    series: &Series,
    bank: &ConvBank,
    upstream: &BandedMatrix,
) -> Result<BankGradient> {
    check_length(series, bank)?;
    let t = series.values();
    let n = t.len();
    if upstream.order() != n || upstream.bandwidth() != bank.span() - 1 {
        return Err(Error::ShapeMismatch {
            op: "avg_backward",
            lhs: (n, bank.span() - 1),
            rhs: (upstream.order(), upstream.bandwidth()),
        });
    }
    let mut weights = Vec::with_capacity(bank.span() - 1);
    let mut biases = Vec::with_capacity(bank.span() - 1);
    for s in 2..=bank.span() {
        let kernel = bank.kernel(s);
        let up = upstream.diagonal(s - 1);
        let mut gw = vec![0.0; s];
        let mut gb = 0.0;
        for f in 0..=n - s {
            if conv(t, kernel, f) <= 0.0 {
                continue;
            }
            let g = up[f];
            gb += g;
            for (w, x) in gw.iter_mut().zip(&t[f..f + s]) {
                *w += g * x;
            }
        }
        weights.push(gw);
        biases.push(gb);
    }
    Ok(BankGradient { weights, biases })
}

/// Tape operation producing the dense adjacency from kernel parameters.
///
/// Inputs are the `1 x s` weight rows for `s = 2..=m`, followed by the
/// `1 x 1` biases when the bank carries them.
struct AvgOp {
    series: Series,
    with_bias: bool,
}

impl AvgOp {
    fn bank(&self, inputs: &[&Matrix]) -> ConvBank {
        let count = if self.with_bias {
            inputs.len() / 2
        } else {
            inputs.len()
        };
        let kernels = (0..count)
            .map(|k| Kernel {
                weights: inputs[k].as_slice().to_vec(),
                bias: if self.with_bias {
                    inputs[count + k].get(0, 0)
                } else {
                    0.0
                },
            })
            .collect();
        ConvBank { kernels }
    }
}

impl CustomOp for AvgOp {
    fn name(&self) -> &'static str {
        "avg"
    }

    fn backward(&self, inputs: &[&Matrix], _output: &Matrix, grad: &Matrix) -> Vec<Matrix> {
        let bank = self.bank(inputs);
        let n = self.series.len();
        let mut upstream = BandedMatrix::zeros(n, bank.span());
        for d in 1..bank.span() {
            for i in 0..n - d {
                upstream.set(i, d, grad.get(i, i + d) + grad.get(i + d, i));
            }
        }
        let g = avg_backward(&self.series, &bank, &upstream).expect("shapes fixed at forward time");
        let mut out: Vec<Matrix> = g.weights.into_iter().map(Matrix::row_vector).collect();
        if self.with_bias {
            out.extend(g.biases.into_iter().map(|b| Matrix::filled(1, 1, b)));
        }
        out
    }
}

/// Records the adaptive visibility mapping of `series` on `tape`.
///
/// `weights[k]` must hold a `1 x (k + 2)` kernel; `biases`, when given, one
/// `1 x 1` value per kernel. The result is the dense `n x n` adjacency.
pub fn avg_on_tape(
    tape: &mut Tape,
    series: &Series,
    weights: &[Var],
    biases: Option<&[Var]>,
) -> Result<Var> {
    let mut inputs = weights.to_vec();
    if let Some(b) = biases {
        if b.len() != weights.len() {
            return Err(Error::InvalidArgument(
                "one bias per kernel required".into(),
            ));
        }
        inputs.extend_from_slice(b);
    }
    let op = AvgOp {
        series: series.clone(),
        with_bias: biases.is_some(),
    };
    let bank = {
        let values: Vec<&Matrix> = inputs.iter().map(|&v| tape.value(v)).collect();
        for (k, v) in values.iter().take(weights.len()).enumerate() {
            if v.shape() != (1, k + 2) {
                return Err(Error::ShapeMismatch {
                    op: "avg",
                    lhs: (1, k + 2),
                    rhs: v.shape(),
                });
            }
        }
        op.bank(&values)
    };
    let dense = avg_forward(series, &bank)?.to_dense();
    Ok(tape.custom(&inputs, dense, Box::new(op)))
}
