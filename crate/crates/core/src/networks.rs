//! Unary and pairwise feature networks.
//!
//! Both networks are small fully-connected stacks over pooled node features.
//! The pairwise network ends in a Gaussian kernel layer that turns node
//! embeddings and centroids into the dense affinity matrix `R`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{shape_err, Result};
use crate::graph::NodeGraph;

/// Kernel exponents below this are flushed to an exact zero affinity.
pub const MIN_KERNEL_EXPONENT: f64 = -60.0;

pub const DEFAULT_EMBED_DIM: usize = 128;
pub const DEFAULT_GAMMA: f64 = 0.1;

/// One affine layer, `y = x W + b` with `W` stored as `fan_in x fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self { weight: Array2::zeros((fan_in, fan_out)), bias: Array1::zeros(fan_out) }
    }

    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn xavier<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-bound..=bound));
        Self { weight, bias: Array1::zeros(fan_out) }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.ncols()
    }
}

/// Rectifier on hidden layers, identity on the output layer.
///
/// Gradients share this type: a gradient is an `Mlp` of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
}

impl Mlp {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        for pair in layers.windows(2) {
            if pair[0].fan_out() != pair[1].fan_in() {
                return shape_err(format!(
                    "layer output {} does not feed input {}",
                    pair[0].fan_out(),
                    pair[1].fan_in()
                ));
            }
        }
        for layer in &layers {
            if layer.bias.len() != layer.fan_out() {
                return shape_err("bias length differs from layer width");
            }
        }
        if layers.is_empty() {
            return shape_err("an MLP needs at least one layer");
        }
        Ok(Self { layers })
    }

    pub fn xavier<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "need input and output dims");
        let layers = dims.windows(2).map(|d| Dense::xavier(d[0], d[1], rng)).collect();
        Self { layers }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let layers = dims.windows(2).map(|d| Dense::zeros(d[0], d[1])).collect();
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self { layers: self.layers.iter().map(|l| Dense::zeros(l.fan_in(), l.fan_out())).collect() }
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].fan_in()];
        dims.extend(self.layers.iter().map(Dense::fan_out));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Dense::fan_out)
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, MlpCache)> {
        if x.ncols() != self.input_dim() {
            return shape_err(format!("input width {} but MLP expects {}", x.ncols(), self.input_dim()));
        }
        let last = self.layers.len() - 1;
        let mut cache = MlpCache { inputs: Vec::with_capacity(last + 1), pre_activations: Vec::with_capacity(last + 1) };
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let a = h.dot(&layer.weight) + &layer.bias;
            let next = if i == last { a.clone() } else { a.mapv(|v| v.max(0.0)) };
            cache.inputs.push(h);
            cache.pre_activations.push(a);
            h = next;
        }
        Ok((h, cache))
    }

    /// Output only.
    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.forward(x).map(|(y, _)| y)
    }

    /// Returns `(dX, parameter gradients)`. The rectifier's subgradient at 0 is 0.
    pub fn backward(&self, cache: &MlpCache, dy: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Mlp)> {
        let last = self.layers.len() - 1;
        let expected = cache.pre_activations[last].dim();
        if dy.dim() != expected {
            return shape_err(format!("upstream gradient {:?}, output {:?}", dy.dim(), expected));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut d = dy.to_owned();
        for i in (0..self.layers.len()).rev() {
            if i != last {
                d.zip_mut_with(&cache.pre_activations[i], |g, &a| {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                });
            }
            let weight = cache.inputs[i].t().dot(&d).as_standard_layout().into_owned();
            let bias = d.sum_axis(Axis(0));
            d = d.dot(&self.layers[i].weight.t());
            grads.push(Dense { weight, bias });
        }
        grads.reverse();
        Ok((d, Mlp { layers: grads }))
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Visit parameter buffers in a fixed order (per layer: weight, bias).
    pub fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        for l in &self.layers {
            f(l.weight.as_slice().expect("standard layout"));
            f(l.bias.as_slice().expect("standard layout"));
        }
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for l in &mut self.layers {
            f(l.weight.as_slice_mut().expect("standard layout"));
            f(l.bias.as_slice_mut().expect("standard layout"));
        }
    }
}

/// Unary network: node features to `m` class scores (or one depth value).
#[derive(Debug, Clone, PartialEq)]
pub struct UnaryNet {
    pub mlp: Mlp,
}

impl UnaryNet {
    pub fn output_dim(&self) -> usize {
        self.mlp.output_dim()
    }

    pub fn forward(&self, graph: &NodeGraph) -> Result<(Array2<f64>, MlpCache)> {
        self.mlp.forward(graph.features.view())
    }

    pub fn backward(&self, cache: &MlpCache, dz: ArrayView2<'_, f64>) -> Result<Mlp> {
        self.mlp.backward(cache, dz).map(|(_, g)| g)
    }
}

pub fn unary_forward(unary: &UnaryNet, graph: &NodeGraph) -> Result<Array2<f64>> {
    unary.forward(graph).map(|(z, _)| z)
}

/// `softplus(x) = ln(1 + eˣ)`, evaluated without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    assert!(y > 0.0, "softplus is positive");
    if y > 30.0 {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Pairwise network: an embedding MLP followed by the Gaussian kernel layer
/// `R_pq = β exp(-|s_p - s_q|² - γ |l_p - l_q|²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseNet {
    pub embed: Mlp,
    /// β = softplus(beta_raw)
    pub beta_raw: f64,
    /// Position kernel scale; fixed during training.
    pub gamma: f64,
}

/// Gradients of a [`PairwiseNet`]. `gamma` is a hyperparameter and has none.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseGrad {
    pub embed: Mlp,
    pub beta_raw: f64,
}

#[derive(Debug, Clone)]
pub struct PairwiseCache {
    embed_cache: MlpCache,
    embeddings: Array2<f64>,
    /// Unscaled kernel `exp(-d_pq)`, zero diagonal.
    kernel: Array2<f64>,
    beta: f64,
}

impl PairwiseCache {
    pub fn kernel(&self) -> &Array2<f64> {
        &self.kernel
    }

    pub fn embeddings(&self) -> &Array2<f64> {
        &self.embeddings
    }
}

impl PairwiseNet {
    pub fn beta(&self) -> f64 {
        softplus(self.beta_raw)
    }

    pub fn forward(&self, graph: &NodeGraph) -> Result<(Array2<f64>, PairwiseCache)> {
        self.forward_with_beta(graph, self.beta())
    }

    /// Forward pass with an explicit `β` (e.g. 0 for a decoupled, unary-only model).
    pub fn forward_with_beta(&self, graph: &NodeGraph, beta: f64) -> Result<(Array2<f64>, PairwiseCache)> {
        let n = graph.node_count();
        if graph.centroids.nrows() != n || graph.centroids.ncols() != 2 {
            return shape_err("centroids must be n x 2");
        }
        let (s, embed_cache) = self.embed.forward(graph.features.view())?;
        let e = s.ncols();
        let s_flat = s.as_slice().expect("standard layout");
        let mut kernel = Array2::zeros((n, n));
        for p in 0..n {
            let sp = &s_flat[p * e..(p + 1) * e];
            for q in (p + 1)..n {
                let sq = &s_flat[q * e..(q + 1) * e];
                let ds: f64 = sp.iter().zip(sq).map(|(a, b)| (a - b) * (a - b)).sum();
                let dl = (graph.centroids[[p, 0]] - graph.centroids[[q, 0]]).powi(2)
                    + (graph.centroids[[p, 1]] - graph.centroids[[q, 1]]).powi(2);
                let exponent = -ds - self.gamma * dl;
                let k = if exponent < MIN_KERNEL_EXPONENT { 0.0 } else { exponent.exp() };
                kernel[[p, q]] = k;
                kernel[[q, p]] = k;
            }
        }
        let r = &kernel * beta;
        Ok((r, PairwiseCache { embed_cache, embeddings: s, kernel, beta }))
    }

    /// Backpropagate through the kernel layer and the embedding network.
    ///
    /// `dr[p][q]` is the derivative of the loss with respect to the shared value
    /// of the symmetric pair `R_pq = R_qp` (each unordered pair counted once).
    /// The input is symmetrized and its diagonal ignored.
    pub fn backward(&self, cache: &PairwiseCache, dr: ArrayView2<'_, f64>) -> Result<PairwiseGrad> {
        let n = cache.kernel.nrows();
        if dr.dim() != (n, n) {
            return shape_err(format!("dR is {:?}, expected {n}x{n}", dr.dim()));
        }
        let s = &cache.embeddings;
        let e = s.ncols();
        let mut ds = Array2::<f64>::zeros((n, e));
        let mut dbeta = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                let k = cache.kernel[[p, q]];
                if k == 0.0 {
                    continue;
                }
                let g = 0.5 * (dr[[p, q]] + dr[[q, p]]);
                dbeta += g * k;
                // dR_pq/ds_p = -2 R_pq (s_p - s_q)
                let coeff = -2.0 * g * cache.beta * k;
                if coeff == 0.0 {
                    continue;
                }
                for j in 0..e {
                    let diff = s[[p, j]] - s[[q, j]];
                    ds[[p, j]] += coeff * diff;
                    ds[[q, j]] -= coeff * diff;
                }
            }
        }
        let (_, embed) = self.embed.backward(&cache.embed_cache, ds.view())?;
        Ok(PairwiseGrad { embed, beta_raw: dbeta * sigmoid(self.beta_raw) })
    }
}

pub fn pairwise_forward(pair: &PairwiseNet, graph: &NodeGraph) -> Result<(Array2<f64>, PairwiseCache)> {
    pair.forward(graph)
}

pub fn pairwise_backward(pair: &PairwiseNet, cache: &PairwiseCache, dr: ArrayView2<'_, f64>) -> Result<PairwiseGrad> {
    pair.backward(cache, dr)
}
