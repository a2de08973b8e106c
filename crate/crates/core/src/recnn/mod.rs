//! Recursive neural network over binarized parse trees.
//!
//! Each internal node `n` with children `l`, `r` computes
//!
//! ```text
//! rep_n = act( t_l(l) + t_r(r) )
//! t_x(c) = W_x · embed(c) + b_W     if c is a leaf
//! t_x(c) = U_x · rep_c    + b_U     if c is an internal node
//! o_n    = softmax(V · rep_n + b_p)
//! ```
//!
//! so word vectors (dimension `N_e`) and node representations (dimension
//! `N_h`) live in separate spaces. Every internal node predicts the sentence
//! label; the loss sums a weighted cross-entropy over all of them, with the
//! root label propagated to every node:
//!
//! ```text
//! L = -Σ_n [ w · t · ln p_n + (1 - t) · ln(1 - p_n) ],   p_n = o_n[1]
//! ```
//!
//! A node's parameters therefore receive gradient from its own output head
//! and from the heads of all of its ancestors.

mod train;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::distr::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use train::{
    evaluate, line_search, train, transfer_finetune, CurvePoint, DevScore, RunReport, StopReason,
    StopRule, TrainConfig, TrainOutcome, Trainable, Trainer, DEFAULT_TRANSFER_NOISE,
};

use crate::corpus::{LabeledSentence, ParseTree};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::serde_util::{matrix, vector};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before the log.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Sigmoid,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation's output `a`.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::invalid(format!("unknown activation {other:?}"))),
        }
    }
}

/// All trainable parameters. Gradients use the same type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    #[serde(with = "matrix")]
    pub w_left: Array2<f64>,
    #[serde(with = "matrix")]
    pub w_right: Array2<f64>,
    #[serde(with = "matrix")]
    pub u_left: Array2<f64>,
    #[serde(with = "matrix")]
    pub u_right: Array2<f64>,
    #[serde(with = "vector")]
    pub b_w: Array1<f64>,
    #[serde(with = "vector")]
    pub b_u: Array1<f64>,
    #[serde(with = "matrix")]
    pub v: Array2<f64>,
    #[serde(with = "vector")]
    pub b_p: Array1<f64>,
}

pub const BLOCK_NAMES: [&str; 8] = [
    "w_left", "w_right", "u_left", "u_right", "b_w", "b_u", "v", "b_p",
];

impl Params {
    pub fn zeros(n_e: usize, n_h: usize) -> Self {
        Params {
            w_left: Array2::zeros((n_h, n_e)),
            w_right: Array2::zeros((n_h, n_e)),
            u_left: Array2::zeros((n_h, n_h)),
            u_right: Array2::zeros((n_h, n_h)),
            b_w: Array1::zeros(n_h),
            b_u: Array1::zeros(n_h),
            v: Array2::zeros((2, n_h)),
            b_p: Array1::zeros(2),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.n_e(), self.n_h())
    }

    pub fn n_e(&self) -> usize {
        self.w_left.ncols()
    }

    pub fn n_h(&self) -> usize {
        self.w_left.nrows()
    }

    /// Parameter blocks as flat slices, in [`BLOCK_NAMES`] order.
    pub fn blocks(&self) -> [&[f64]; 8] {
        fn s(a: Option<&[f64]>) -> &[f64] {
            a.expect("parameters are in standard layout")
        }
        [
            s(self.w_left.as_slice()),
            s(self.w_right.as_slice()),
            s(self.u_left.as_slice()),
            s(self.u_right.as_slice()),
            s(self.b_w.as_slice()),
            s(self.b_u.as_slice()),
            s(self.v.as_slice()),
            s(self.b_p.as_slice()),
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 8] {
        fn s(a: Option<&mut [f64]>) -> &mut [f64] {
            a.expect("parameters are in standard layout")
        }
        [
            s(self.w_left.as_slice_mut()),
            s(self.w_right.as_slice_mut()),
            s(self.u_left.as_slice_mut()),
            s(self.u_right.as_slice_mut()),
            s(self.b_w.as_slice_mut()),
            s(self.b_u.as_slice_mut()),
            s(self.v.as_slice_mut()),
            s(self.b_p.as_slice_mut()),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.blocks()
            .iter()
            .all(|b| b.iter().all(|x| x.is_finite()))
    }

    /// `self += scale * other`, restricted to the blocks selected by `mask`.
    pub fn add_scaled(&mut self, other: &Params, scale: f64, mask: [bool; 8]) {
        for ((dst, src), on) in self.blocks_mut().into_iter().zip(other.blocks()).zip(mask) {
            if on {
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += scale * s;
                }
            }
        }
    }
}

/// A child reference inside a [`TreeShape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Child {
    Leaf(usize),
    Node(usize),
}

/// A binary tree flattened into post-order: every node's children come
/// before it and the root is last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeShape {
    pub nodes: Vec<[Child; 2]>,
    pub tokens: Vec<String>,
}

impl TreeShape {
    pub fn from_tree(tree: &ParseTree) -> Result<Self> {
        if !tree.is_binary() || tree.is_leaf() {
            return Err(Error::Tree(
                "recursive network input must be a binary tree with at least 2 leaves".into(),
            ));
        }
        let mut shape = TreeShape {
            nodes: Vec::new(),
            tokens: Vec::new(),
        };
        shape.push(tree);
        Ok(shape)
    }

    fn push(&mut self, t: &ParseTree) -> Child {
        match t {
            ParseTree::Leaf { token, .. } => {
                self.tokens.push(token.clone());
                Child::Leaf(self.tokens.len() - 1)
            }
            ParseTree::Node { children, .. } => {
                let l = self.push(&children[0]);
                let r = self.push(&children[1]);
                self.nodes.push([l, r]);
                Child::Node(self.nodes.len() - 1)
            }
        }
    }

    pub fn root(&self) -> usize {
        self.nodes.len() - 1
    }
}

/// A tree with its leaf vectors resolved, ready for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub shape: TreeShape,
    /// One row per leaf, `N_e` columns.
    pub leaves: Array2<f64>,
    pub label: u8,
}

impl Example {
    pub fn new(tree: &ParseTree, label: u8, embeddings: &EmbeddingTable) -> Result<Self> {
        let shape = TreeShape::from_tree(tree)?;
        let mut leaves = Array2::zeros((shape.tokens.len(), embeddings.dim()));
        for (mut row, tok) in leaves.rows_mut().into_iter().zip(&shape.tokens) {
            row.assign(&embeddings.lookup(tok));
        }
        Ok(Example {
            shape,
            leaves,
            label,
        })
    }

    pub fn from_sentence(s: &LabeledSentence, embeddings: &EmbeddingTable) -> Result<Self> {
        Self::new(&s.tree, s.label, embeddings)
    }

    pub fn node_count(&self) -> usize {
        self.shape.nodes.len()
    }
}

pub fn prepare(sentences: &[LabeledSentence], embeddings: &EmbeddingTable) -> Result<Vec<Example>> {
    sentences
        .iter()
        .map(|s| Example::from_sentence(s, embeddings))
        .collect()
}

/// Per-node forward results.
#[derive(Debug, Clone)]
pub struct NodeStates {
    /// Activation output before dropout, one row per node.
    pub act: Array2<f64>,
    /// Representation passed upward and to the output head (after dropout).
    pub rep: Array2<f64>,
    /// Output distribution `o_n`, one row per node.
    pub out: Array2<f64>,
    /// Inverted-dropout multipliers, when dropout was applied.
    mask: Option<Array2<f64>>,
}

impl NodeStates {
    pub fn root_output(&self) -> ArrayView1<'_, f64> {
        self.out.row(self.out.nrows() - 1)
    }

    pub fn root_rep(&self) -> ArrayView1<'_, f64> {
        self.rep.row(self.rep.nrows() - 1)
    }

    pub fn len(&self) -> usize {
        self.out.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.out.nrows() == 0
    }
}

fn softmax2(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let z = e0 + e1;
    [e0 / z, e1 / z]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecnnModel {
    pub params: Params,
    pub activation: Activation,
    pub seed: u64,
}

impl RecnnModel {
    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init(n_e: usize, n_h: usize, activation: Activation, seed: u64) -> Result<Self> {
        if n_e == 0 || n_h == 0 {
            return Err(Error::invalid("dimensions must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::zeros(n_e, n_h);
        for m in [
            &mut params.w_left,
            &mut params.w_right,
            &mut params.u_left,
            &mut params.u_right,
            &mut params.v,
        ] {
            let r = 1.0 / (m.ncols() as f64).sqrt();
            let dist = Uniform::new_inclusive(-r, r).expect("finite range");
            m.mapv_inplace(|_| dist.sample(&mut rng));
        }
        Ok(RecnnModel {
            params,
            activation,
            seed,
        })
    }

    /// All-zero parameters.
    pub fn zeros(n_e: usize, n_h: usize, activation: Activation) -> Self {
        RecnnModel {
            params: Params::zeros(n_e, n_h),
            activation,
            seed: 0,
        }
    }

    pub fn n_e(&self) -> usize {
        self.params.n_e()
    }

    pub fn n_h(&self) -> usize {
        self.params.n_h()
    }

    fn check_dims(&self, ex: &Example) -> Result<()> {
        if ex.leaves.ncols() != self.n_e() {
            return Err(Error::Dimension {
                expected: self.n_e(),
                got: ex.leaves.ncols(),
            });
        }
        Ok(())
    }

    /// Evaluate every node bottom-up (no dropout).
    pub fn forward(&self, ex: &Example) -> Result<NodeStates> {
        self.check_dims(ex)?;
        Ok(self.forward_impl(ex, None))
    }

    /// Forward pass with inverted dropout at rate `p` on node representations.
    pub fn forward_train<R: Rng + ?Sized>(
        &self,
        ex: &Example,
        p: f64,
        rng: &mut R,
    ) -> Result<NodeStates> {
        self.check_dims(ex)?;
        if p <= 0.0 {
            return Ok(self.forward_impl(ex, None));
        }
        let keep = 1.0 - p;
        let mask = Array2::from_shape_fn((ex.node_count(), self.n_h()), |_| {
            if rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        Ok(self.forward_impl(ex, Some(mask)))
    }

    fn forward_impl(&self, ex: &Example, mask: Option<Array2<f64>>) -> NodeStates {
        let p = &self.params;
        let n = ex.node_count();
        let h = self.n_h();
        let mut act = Array2::zeros((n, h));
        let mut rep = Array2::zeros((n, h));
        let mut out = Array2::zeros((n, 2));
        for (i, children) in ex.shape.nodes.iter().enumerate() {
            let mut z = Array1::<f64>::zeros(h);
            for (side, child) in children.iter().enumerate() {
                match *child {
                    Child::Leaf(j) => {
                        let w = if side == 0 { &p.w_left } else { &p.w_right };
                        z += &w.dot(&ex.leaves.row(j));
                        z += &p.b_w;
                    }
                    Child::Node(k) => {
                        let u = if side == 0 { &p.u_left } else { &p.u_right };
                        z += &u.dot(&rep.row(k));
                        z += &p.b_u;
                    }
                }
            }
            let a = z.mapv(|x| self.activation.apply(x));
            let r = match &mask {
                Some(m) => &a * &m.row(i),
                None => a.clone(),
            };
            let logits = p.v.dot(&r) + &p.b_p;
            let o = softmax2([logits[0], logits[1]]);
            act.row_mut(i).assign(&a);
            rep.row_mut(i).assign(&r);
            out[[i, 0]] = o[0];
            out[[i, 1]] = o[1];
        }
        NodeStates {
            act,
            rep,
            out,
            mask,
        }
    }

    /// `(label, Pr(sensitive))` from the root output; an exact tie goes to 0.
    pub fn predict(&self, ex: &Example) -> Result<(u8, f64)> {
        let states = self.forward(ex)?;
        let o = states.root_output();
        Ok((u8::from(o[1] > o[0]), o[1]))
    }

    /// Root representation.
    pub fn embed(&self, ex: &Example) -> Result<Array1<f64>> {
        Ok(self.forward(ex)?.root_rep().to_owned())
    }

    /// Loss and gradient for one example, optionally with dropout.
    pub fn loss_and_grad(
        &self,
        ex: &Example,
        weight: f64,
        dropout: Option<(f64, &mut dyn rand::RngCore)>,
    ) -> Result<(f64, Params)> {
        let states = match dropout {
            Some((p, rng)) => self.forward_train(ex, p, rng)?,
            None => self.forward(ex)?,
        };
        let l = loss(&states, ex.label, weight);
        let g = self.backward_from(ex, &states, weight);
        Ok((l, g))
    }

    /// Exact gradient of [`loss`] for the forward states `states`.
    pub fn backward_from(&self, ex: &Example, states: &NodeStates, weight: f64) -> Params {
        let p = &self.params;
        let mut g = p.zeros_like();
        let n = ex.node_count();
        let h = self.n_h();
        let t = f64::from(ex.label);
        // gradient w.r.t. each node's (post-dropout) representation from its parent
        let mut from_parent = Array2::<f64>::zeros((n, h));

        for i in (0..n).rev() {
            let (p0, p1) = (states.out[[i, 0]], states.out[[i, 1]]);
            // d loss / d logits, zero where the clamp is active
            let d1 = if t == 1.0 {
                if p1 > PROB_CLAMP && p1 < 1.0 - PROB_CLAMP {
                    -weight * p0
                } else {
                    0.0
                }
            } else if p0 > PROB_CLAMP && p0 < 1.0 - PROB_CLAMP {
                p1
            } else {
                0.0
            };
            let dlogits = Array1::from(vec![-d1, d1]);
            let rep_i = states.rep.row(i);
            g.v += &outer(&dlogits, &rep_i);
            g.b_p += &dlogits;

            let mut g_rep = p.v.t().dot(&dlogits);
            g_rep += &from_parent.row(i);
            let mut dz = match &states.mask {
                Some(m) => &g_rep * &m.row(i),
                None => g_rep,
            };
            let a = states.act.row(i);
            dz.zip_mut_with(&a, |d, &av| {
                *d *= self.activation.derivative_from_output(av)
            });

            for (side, child) in ex.shape.nodes[i].iter().enumerate() {
                match *child {
                    Child::Leaf(j) => {
                        let gw = if side == 0 {
                            &mut g.w_left
                        } else {
                            &mut g.w_right
                        };
                        *gw += &outer(&dz, &ex.leaves.row(j));
                        g.b_w += &dz;
                    }
                    Child::Node(k) => {
                        let (gu, u) = if side == 0 {
                            (&mut g.u_left, &p.u_left)
                        } else {
                            (&mut g.u_right, &p.u_right)
                        };
                        *gu += &outer(&dz, &states.rep.row(k));
                        g.b_u += &dz;
                        let back = u.t().dot(&dz);
                        let mut row = from_parent.row_mut(k);
                        row += &back;
                    }
                }
            }
        }
        g
    }

    /// Gradient of the loss for one example (no dropout).
    pub fn backward(&self, ex: &Example, weight: f64) -> Result<Params> {
        let states = self.forward(ex)?;
        Ok(self.backward_from(ex, &states, weight))
    }
}

fn outer(a: &Array1<f64>, b: &ArrayView1<'_, f64>) -> Array2<f64> {
    let a2 = a.view().insert_axis(Axis(1));
    let b2 = b.view().insert_axis(Axis(0));
    a2.dot(&b2)
}

/// Loss of a single node with output distribution `(p0, p1)`.
pub fn node_loss(p0: f64, p1: f64, label: u8, weight: f64) -> f64 {
    if label == 1 {
        -weight * p1.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP).ln()
    } else {
        -p0.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP).ln()
    }
}

/// Weighted cross-entropy summed over all nodes, root label at every node.
pub fn loss(states: &NodeStates, root_label: u8, weight: f64) -> f64 {
    states
        .out
        .rows()
        .into_iter()
        .map(|o| node_loss(o[0], o[1], root_label, weight))
        .sum()
}
