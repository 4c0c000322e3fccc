//! Graph classification head and the full two-branch network.
//!
//! Each branch runs a dense GCN embedding stack and a GCN assignment stack on
//! the normalised adjacency, pools the graph into `c` soft clusters
//! (`X' = SᵀZ`, `A' = SᵀAS`), applies a GCN stack on the pooled graph and
//! averages cluster features into one vector. The I and Q branches see the
//! adaptive visibility graphs of their own channel but share the node
//! features `[I_j, Q_j]`; their outputs are concatenated and classified by a
//! single affine layer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::avg::{avg_on_tape, ConvBank, Kernel};
use crate::error::{Error, Result};
use crate::nn::{Matrix, ParamId, ParamStore, Tape, Var};
use crate::signal::{IqFrame, Series};

pub use crate::nn::normalize_adjacency;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Largest kernel length of the adaptive visibility bank.
    pub m: usize,
    /// Hidden width `h`; each branch emits `h` features.
    pub hidden: usize,
    /// Cluster count `c` of the pooling stage.
    pub clusters: usize,
    pub embed_depth: usize,
    pub pool_depth: usize,
    pub post_depth: usize,
    pub num_classes: usize,
    /// Whether the convolution kernels carry a bias.
    pub conv_bias: bool,
    /// Whether the Q branch reuses the I branch's bank and GCN weights.
    pub share_weights: bool,
}

impl ModelConfig {
    pub fn new(num_classes: usize) -> Self {
        Self {
            m: 11,
            hidden: 64,
            clusters: 32,
            embed_depth: 2,
            pool_depth: 2,
            post_depth: 1,
            num_classes,
            conv_bias: true,
            share_weights: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden", self.hidden),
            ("clusters", self.clusters),
            ("embed_depth", self.embed_depth),
            ("pool_depth", self.pool_depth),
            ("num_classes", self.num_classes),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("{name} must be positive")));
        }
        if self.m < 2 {
            return Err(Error::InvalidArgument(format!(
                "m must be at least 2, got {}",
                self.m
            )));
        }
        Ok(())
    }
}

/// Weights of one branch. Every GCN layer is a plain `in x out` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchParams {
    pub embed: Vec<Matrix>,
    /// Assignment stack; the last layer has `c` outputs and no activation.
    pub pool: Vec<Matrix>,
    pub post: Vec<Matrix>,
}

impl BranchParams {
    pub fn hidden(&self) -> usize {
        self.embed.last().map_or(0, Matrix::cols)
    }

    pub fn clusters(&self) -> usize {
        self.pool.last().map_or(0, Matrix::cols)
    }

    /// Glorot-uniform initialisation for `in_dim` node features.
    pub fn init(cfg: &ModelConfig, in_dim: usize, rng: &mut impl Rng) -> Self {
        let stack =
            |rng: &mut dyn rand::RngCore, depth: usize, first: usize, width: usize, last: usize| {
                (0..depth)
                    .map(|k| {
                        let rows = if k == 0 { first } else { width };
                        let cols = if k + 1 == depth { last } else { width };
                        glorot(rng, rows, cols)
                    })
                    .collect::<Vec<_>>()
            };
        let h = cfg.hidden;
        Self {
            embed: stack(rng, cfg.embed_depth, in_dim, h, h),
            pool: stack(rng, cfg.pool_depth, in_dim, h, cfg.clusters),
            post: stack(rng, cfg.post_depth, h, h, h),
        }
    }
}

fn glorot(rng: &mut dyn rand::RngCore, rows: usize, cols: usize) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-limit..limit))
}

/// Tape handles of one branch's weights.
#[derive(Debug, Clone)]
pub(crate) struct BranchVars {
    pub embed: Vec<Var>,
    pub pool: Vec<Var>,
    pub post: Vec<Var>,
}

/// Tape outputs of one branch.
pub(crate) struct BranchOut {
    pub features: Var,
    pub assignment: Var,
}

/// `ReLU(Â X W)`.
pub fn gcn_layer(a_hat: &Matrix, x: &Matrix, w: &Matrix) -> Result<Matrix> {
    let mut tape = Tape::new();
    let (a, xv, wv) = (
        tape.constant(a_hat.clone()),
        tape.constant(x.clone()),
        tape.constant(w.clone()),
    );
    let band = a_hat.bandwidth();
    let out = gcn_on_tape(&mut tape, a, band, xv, wv, true)?;
    Ok(tape.value(out).clone())
}

/// `Â X W` with optional ReLU, multiplying in the cheaper order.
fn gcn_on_tape(
    tape: &mut Tape,
    a_hat: Var,
    band: usize,
    x: Var,
    w: Var,
    relu: bool,
) -> Result<Var> {
    let (in_dim, out_dim) = tape.value(w).shape();
    if tape.value(x).cols() != in_dim {
        return Err(Error::ShapeMismatch {
            op: "gcn_layer",
            lhs: tape.value(x).shape(),
            rhs: (in_dim, out_dim),
        });
    }
    let y = if out_dim < in_dim {
        let xw = tape.matmul(x, w)?;
        tape.propagate(a_hat, xw, band)?
    } else {
        let ax = tape.propagate(a_hat, x, band)?;
        tape.matmul(ax, w)?
    };
    Ok(if relu { tape.relu(y) } else { y })
}

/// Tape handles of one pooling stage.
pub(crate) struct Pooled {
    pub assignment: Var,
    pub adjacency: Var,
    pub features: Var,
}

/// Embedding and assignment stacks followed by `SᵀZ` and `SᵀAS`. `adj` is the
/// raw (unnormalised) adjacency, zero outside `|i - j| <= band`.
pub(crate) fn pool_on_tape(
    tape: &mut Tape,
    adj: Var,
    band: usize,
    x: Var,
    weights: &BranchVars,
) -> Result<Pooled> {
    let a_hat = tape.normalize_adjacency(adj)?;
    let mut z = x;
    for &w in &weights.embed {
        z = gcn_on_tape(tape, a_hat, band, z, w, true)?;
    }
    let mut p = x;
    let last = weights.pool.len() - 1;
    for (k, &w) in weights.pool.iter().enumerate() {
        p = gcn_on_tape(tape, a_hat, band, p, w, k != last)?;
    }
    let s = tape.row_softmax(p);
    let s_t = tape.transpose(s);
    let features = tape.matmul(s_t, z)?;
    let a_s = tape.propagate(adj, s, band)?;
    let adjacency = tape.matmul(s_t, a_s)?;
    Ok(Pooled {
        assignment: s,
        adjacency,
        features,
    })
}

/// Runs a whole branch on `tape`: pooling, the post-pool stack and the mean
/// readout.
pub(crate) fn branch_on_tape(
    tape: &mut Tape,
    adj: Var,
    band: usize,
    x: Var,
    weights: &BranchVars,
) -> Result<BranchOut> {
    let pooled = pool_on_tape(tape, adj, band, x, weights)?;
    let pooled_hat = tape.normalize_adjacency(pooled.adjacency)?;
    let c = tape.value(pooled.adjacency).rows();
    let mut h = pooled.features;
    for &w in &weights.post {
        h = gcn_on_tape(tape, pooled_hat, c.saturating_sub(1), h, w, true)?;
    }
    let features = tape.mean_rows(h);
    Ok(BranchOut {
        features,
        assignment: pooled.assignment,
    })
}

fn branch_constants(tape: &mut Tape, branch: &BranchParams) -> BranchVars {
    let mut put = |ms: &[Matrix]| ms.iter().map(|m| tape.constant(m.clone())).collect();
    BranchVars {
        embed: put(&branch.embed),
        pool: put(&branch.pool),
        post: put(&branch.post),
    }
}

fn check_branch(branch: &BranchParams) -> Result<()> {
    if branch.embed.is_empty() || branch.pool.is_empty() {
        return Err(Error::InvalidArgument(
            "branch needs at least one embedding and one assignment layer".into(),
        ));
    }
    Ok(())
}

/// One pooling stage: returns `(SᵀAS, SᵀZ)` with `Z` the embedding and `S`
/// the softmax assignment.
pub fn diffpool_layer(a: &Matrix, x: &Matrix, branch: &BranchParams) -> Result<(Matrix, Matrix)> {
    check_branch(branch)?;
    let (pooled_a, pooled_x, _) = diffpool_with_assignment(a, x, branch)?;
    Ok((pooled_a, pooled_x))
}

/// Like [`diffpool_layer`], also returning the assignment matrix `S`.
pub fn diffpool_with_assignment(
    a: &Matrix,
    x: &Matrix,
    branch: &BranchParams,
) -> Result<(Matrix, Matrix, Matrix)> {
    check_branch(branch)?;
    let mut tape = Tape::new();
    let adj = tape.constant(a.clone());
    let xv = tape.constant(x.clone());
    let w = branch_constants(&mut tape, branch);
    let pooled = pool_on_tape(&mut tape, adj, a.bandwidth(), xv, &w)?;
    Ok((
        tape.value(pooled.adjacency).clone(),
        tape.value(pooled.features).clone(),
        tape.value(pooled.assignment).clone(),
    ))
}

/// Branch feature vector (length `h`) of a graph with dense adjacency `adj`
/// and node features `features`.
pub fn branch_forward(adj: &Matrix, features: &Matrix, branch: &BranchParams) -> Result<Vec<f64>> {
    check_branch(branch)?;
    if adj.rows() != features.rows() {
        return Err(Error::ShapeMismatch {
            op: "branch_forward",
            lhs: adj.shape(),
            rhs: features.shape(),
        });
    }
    let mut tape = Tape::new();
    let a = tape.constant(adj.clone());
    let x = tape.constant(features.clone());
    let w = branch_constants(&mut tape, branch);
    let out = branch_on_tape(&mut tape, a, adj.bandwidth(), x, &w)?;
    Ok(tape.value(out.features).as_slice().to_vec())
}

/// Node features `[I_j, Q_j]`, one row per sample.
pub fn node_features(frame: &IqFrame) -> Matrix {
    let (i, q) = (frame.i().values(), frame.q().values());
    Matrix::from_fn(frame.len(), 2, |r, c| if c == 0 { i[r] } else { q[r] })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    I,
    Q,
}

impl Channel {
    fn tag(self) -> &'static str {
        match self {
            Channel::I => "i",
            Channel::Q => "q",
        }
    }
}

#[derive(Debug, Clone)]
struct BankIds {
    weights: Vec<ParamId>,
    biases: Option<Vec<ParamId>>,
}

#[derive(Debug, Clone)]
struct BranchIds {
    embed: Vec<ParamId>,
    pool: Vec<ParamId>,
    post: Vec<ParamId>,
}

#[derive(Debug, Clone)]
struct Layout {
    bank_i: BankIds,
    bank_q: BankIds,
    branch_i: BranchIds,
    branch_q: BranchIds,
    head_weight: ParamId,
    head_bias: ParamId,
}

/// All trainable parameters of the network, held in a named [`ParamStore`].
///
/// Names: `bank_{i,q}/w{s}`, `bank_{i,q}/b{s}`,
/// `branch_{i,q}/{embed,pool,post}/{k}`, `head/weight`, `head/bias`. With
/// shared weights only the `_i` entries exist and both branches use them.
#[derive(Debug, Clone)]
pub struct AvgNetParams {
    config: ModelConfig,
    store: ParamStore,
    layout: Layout,
}

/// Tape handles for one forward pass.
pub(crate) struct ForwardTape {
    pub logits: Var,
    /// Link-prediction plus assignment-entropy penalty, summed over branches.
    pub aux: Var,
}

impl AvgNetParams {
    /// Random initialisation; input node features are `[I_j, Q_j]`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let channels: &[Channel] = if config.share_weights {
            &[Channel::I]
        } else {
            &[Channel::I, Channel::Q]
        };
        for &ch in channels {
            let bank = crate::avg::init_bank(config.m, rng.gen())?;
            for kernel in bank.kernels() {
                let s = kernel.weights.len();
                store.insert(
                    format!("bank_{}/w{s}", ch.tag()),
                    Matrix::row_vector(kernel.weights.clone()),
                )?;
            }
            if config.conv_bias {
                for s in 2..=config.m {
                    store.insert(format!("bank_{}/b{s}", ch.tag()), Matrix::zeros(1, 1))?;
                }
            }
        }
        for &ch in channels {
            let branch = BranchParams::init(&config, 2, &mut rng);
            for (part, layers) in [
                ("embed", &branch.embed),
                ("pool", &branch.pool),
                ("post", &branch.post),
            ] {
                for (k, w) in layers.iter().enumerate() {
                    store.insert(format!("branch_{}/{part}/{k}", ch.tag()), w.clone())?;
                }
            }
        }
        store.insert(
            "head/weight",
            glorot(&mut rng, 2 * config.hidden, config.num_classes),
        )?;
        store.insert("head/bias", Matrix::zeros(1, config.num_classes))?;
        Self::from_store(store)
    }

    /// Rebuilds the parameter set from a store (e.g. a loaded checkpoint),
    /// inferring the architecture from names and shapes.
    pub fn from_store(store: ParamStore) -> Result<Self> {
        let missing = |name: &str| Error::Malformed(format!("missing parameter `{name}`"));
        let share_weights = store.id("branch_q/embed/0").is_none();
        let conv_bias = store.id("bank_i/b2").is_some();
        let mut m = 1;
        while store.id(&format!("bank_i/w{}", m + 1)).is_some() {
            m += 1;
        }
        if m < 2 {
            return Err(missing("bank_i/w2"));
        }
        let count = |prefix: &str| {
            (0..)
                .take_while(|k| store.id(&format!("{prefix}/{k}")).is_some())
                .count()
        };
        let embed_depth = count("branch_i/embed");
        let pool_depth = count("branch_i/pool");
        let post_depth = count("branch_i/post");
        if embed_depth == 0 || pool_depth == 0 {
            return Err(missing("branch_i/embed/0 or branch_i/pool/0"));
        }
        let head_weight = store
            .id("head/weight")
            .ok_or_else(|| missing("head/weight"))?;
        let head_bias = store.id("head/bias").ok_or_else(|| missing("head/bias"))?;

        let bank = |tag: &str| -> Result<BankIds> {
            let tag = if share_weights { "i" } else { tag };
            let weights = (2..=m)
                .map(|s| {
                    let name = format!("bank_{tag}/w{s}");
                    store.id(&name).ok_or_else(|| missing(&name))
                })
                .collect::<Result<Vec<_>>>()?;
            let biases = if conv_bias {
                Some(
                    (2..=m)
                        .map(|s| {
                            let name = format!("bank_{tag}/b{s}");
                            store.id(&name).ok_or_else(|| missing(&name))
                        })
                        .collect::<Result<Vec<_>>>()?,
                )
            } else {
                None
            };
            Ok(BankIds { weights, biases })
        };
        let branch = |tag: &str| -> Result<BranchIds> {
            let tag = if share_weights { "i" } else { tag };
            let layers = |part: &str, depth: usize| {
                (0..depth)
                    .map(|k| {
                        let name = format!("branch_{tag}/{part}/{k}");
                        store.id(&name).ok_or_else(|| missing(&name))
                    })
                    .collect::<Result<Vec<_>>>()
            };
            Ok(BranchIds {
                embed: layers("embed", embed_depth)?,
                pool: layers("pool", pool_depth)?,
                post: layers("post", post_depth)?,
            })
        };
        let layout = Layout {
            bank_i: bank("i")?,
            bank_q: bank("q")?,
            branch_i: branch("i")?,
            branch_q: branch("q")?,
            head_weight,
            head_bias,
        };

        let hidden = store.value(layout.branch_i.embed[embed_depth - 1]).cols();
        let clusters = store.value(layout.branch_i.pool[pool_depth - 1]).cols();
        let head = store.value(head_weight);
        if head.rows() != 2 * hidden {
            return Err(Error::Malformed(format!(
                "head input width {} does not match 2 x hidden ({hidden})",
                head.rows()
            )));
        }
        let config = ModelConfig {
            m,
            hidden,
            clusters,
            embed_depth,
            pool_depth,
            post_depth,
            num_classes: head.cols(),
            conv_bias,
            share_weights,
        };
        let params = Self {
            config,
            store,
            layout,
        };
        params.check_shapes()?;
        Ok(params)
    }

    fn check_shapes(&self) -> Result<()> {
        for ch in [Channel::I, Channel::Q] {
            let b = self.branch(ch);
            let chain = |layers: &[Matrix], first: usize| -> bool {
                let mut width = first;
                for l in layers {
                    if l.rows() != width {
                        return false;
                    }
                    width = l.cols();
                }
                true
            };
            let h = self.config.hidden;
            let ok = chain(&b.embed, 2)
                && chain(&b.pool, 2)
                && chain(&b.post, h)
                && b.post.last().is_none_or(|l| l.cols() == h)
                && b.hidden() == h;
            if !ok {
                return Err(Error::Malformed(format!(
                    "inconsistent layer widths in branch {}",
                    ch.tag()
                )));
            }
        }
        if self.store.value(self.layout.head_bias).shape() != (1, self.config.num_classes) {
            return Err(Error::Malformed("head bias shape".into()));
        }
        Ok(())
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn into_store(self) -> ParamStore {
        self.store
    }

    /// Serialized parameter size in bytes (`f32` per scalar).
    pub fn size_bytes(&self) -> usize {
        4 * self.store.num_scalars()
    }

    pub fn bank(&self, ch: Channel) -> ConvBank {
        let ids = match ch {
            Channel::I => &self.layout.bank_i,
            Channel::Q => &self.layout.bank_q,
        };
        let kernels = ids
            .weights
            .iter()
            .enumerate()
            .map(|(k, &w)| Kernel {
                weights: self.store.value(w).as_slice().to_vec(),
                bias: ids
                    .biases
                    .as_ref()
                    .map_or(0.0, |b| self.store.value(b[k]).get(0, 0)),
            })
            .collect();
        ConvBank::new(kernels).expect("layout validated")
    }

    pub fn branch(&self, ch: Channel) -> BranchParams {
        let ids = match ch {
            Channel::I => &self.layout.branch_i,
            Channel::Q => &self.layout.branch_q,
        };
        let get = |v: &[ParamId]| v.iter().map(|&id| self.store.value(id).clone()).collect();
        BranchParams {
            embed: get(&ids.embed),
            pool: get(&ids.pool),
            post: get(&ids.post),
        }
    }

    /// Records the forward pass of `frame` on `tape`.
    pub(crate) fn forward_on_tape(
        &self,
        tape: &mut Tape,
        frame: &IqFrame,
        with_aux: bool,
    ) -> Result<ForwardTape> {
        let n = frame.len();
        if n < self.config.m {
            return Err(Error::SeriesTooShort {
                len: n,
                min: self.config.m,
            });
        }
        let band = self.config.m - 1;
        let x = tape.constant(node_features(frame));
        let mut parts = Vec::with_capacity(2);
        let mut aux_terms = Vec::new();
        for (ch, series) in [(Channel::I, frame.i()), (Channel::Q, frame.q())] {
            let (bank, branch) = match ch {
                Channel::I => (&self.layout.bank_i, &self.layout.branch_i),
                Channel::Q => (&self.layout.bank_q, &self.layout.branch_q),
            };
            let adj = self.bank_on_tape(tape, series, bank)?;
            let vars = BranchVars {
                embed: branch
                    .embed
                    .iter()
                    .map(|&id| tape.param(&self.store, id))
                    .collect(),
                pool: branch
                    .pool
                    .iter()
                    .map(|&id| tape.param(&self.store, id))
                    .collect(),
                post: branch
                    .post
                    .iter()
                    .map(|&id| tape.param(&self.store, id))
                    .collect(),
            };
            let out = branch_on_tape(tape, adj, band, x, &vars)?;
            if with_aux {
                aux_terms.push(auxiliary_loss(tape, adj, out.assignment)?);
            }
            parts.push(out.features);
        }
        let joined = tape.concat(&parts)?;
        let w = tape.param(&self.store, self.layout.head_weight);
        let b = tape.param(&self.store, self.layout.head_bias);
        let logits = tape.matmul(joined, w)?;
        let logits = tape.add_bias(logits, b)?;
        let aux = match aux_terms.as_slice() {
            [] => tape.constant(Matrix::zeros(1, 1)),
            [a] => *a,
            [a, rest @ ..] => {
                let mut acc = *a;
                for &r in rest {
                    acc = tape.add(acc, r)?;
                }
                acc
            }
        };
        Ok(ForwardTape { logits, aux })
    }

    fn bank_on_tape(&self, tape: &mut Tape, series: &Series, ids: &BankIds) -> Result<Var> {
        let weights: Vec<Var> = ids
            .weights
            .iter()
            .map(|&id| tape.param(&self.store, id))
            .collect();
        let biases: Option<Vec<Var>> = ids
            .biases
            .as_ref()
            .map(|b| b.iter().map(|&id| tape.param(&self.store, id)).collect());
        avg_on_tape(tape, series, &weights, biases.as_deref())
    }
}

/// Mean squared link-prediction error `‖A − SSᵀ‖² / n²` plus the mean row
/// entropy of `S`.
fn auxiliary_loss(tape: &mut Tape, adj: Var, s: Var) -> Result<Var> {
    let n = tape.value(adj).rows() as f64;
    let s_t = tape.transpose(s);
    let sst = tape.matmul(s, s_t)?;
    let diff = tape.sub(adj, sst)?;
    let sq = tape.mul(diff, diff)?;
    let link = tape.sum_all(sq);
    let link = tape.scale(link, 1.0 / (n * n));
    let log_s = tape.log(s);
    let plogp = tape.mul(s, log_s)?;
    let ent = tape.sum_all(plogp);
    let ent = tape.scale(ent, -1.0 / n);
    tape.add(link, ent)
}

/// Class logits (no softmax) for one frame.
pub fn avgnet_forward(frame: &IqFrame, params: &AvgNetParams) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let out = params.forward_on_tape(&mut tape, frame, false)?;
    Ok(tape.value(out.logits).as_slice().to_vec())
}
