//! The joint unary + pairwise model and its parameter plumbing.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::crf::{self, CrfOutput};
use crate::error::{shape_err, Error, Result};
use crate::graph::NodeGraph;
use crate::networks::{softplus_inv, Mlp, PairwiseGrad, PairwiseNet, UnaryNet, DEFAULT_EMBED_DIM, DEFAULT_GAMMA};

/// What the node labels mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Segmentation { classes: usize },
    Depth,
}

impl Task {
    /// Label columns per node.
    pub fn label_dim(&self) -> usize {
        match self {
            Task::Segmentation { classes } => *classes,
            Task::Depth => 1,
        }
    }

    pub fn is_segmentation(&self) -> bool {
        matches!(self, Task::Segmentation { .. })
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Segmentation { classes } => write!(f, "segmentation {classes}"),
            Task::Depth => f.write_str("depth"),
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some("depth"), None, None) => Ok(Task::Depth),
            (Some("segmentation"), Some(m), None) => {
                let classes: usize = m.parse().map_err(|_| Error::Format(format!("bad class count {m:?}")))?;
                if classes < 2 {
                    return Err(Error::InvalidArgument("segmentation needs at least 2 classes".into()));
                }
                Ok(Task::Segmentation { classes })
            }
            _ => Err(Error::Format(format!("bad task tag {s:?}"))),
        }
    }
}

/// Network sizes and fixed hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub unary_hidden: Vec<usize>,
    pub embed_hidden: Vec<usize>,
    pub embed_dim: usize,
    pub gamma: f64,
    /// Initial β (the raw parameter starts at softplus⁻¹ of this).
    pub beta_init: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            unary_hidden: vec![32, 32],
            embed_hidden: vec![32],
            embed_dim: DEFAULT_EMBED_DIM,
            gamma: DEFAULT_GAMMA,
            beta_init: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub unary: UnaryNet,
    pub pairwise: PairwiseNet,
    /// When false the pairwise branch is switched off (`R = 0`) and the model
    /// is a plain per-node predictor.
    pub coupled: bool,
}

/// Gradients for every trainable parameter of a [`Model`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub unary: Mlp,
    pub pairwise: PairwiseGrad,
}

impl Model {
    pub fn init<R: Rng + ?Sized>(feature_dim: usize, task: Task, cfg: &ModelConfig, rng: &mut R) -> Self {
        let mut unary_dims = vec![feature_dim];
        unary_dims.extend(&cfg.unary_hidden);
        unary_dims.push(task.label_dim());
        let mut embed_dims = vec![feature_dim];
        embed_dims.extend(&cfg.embed_hidden);
        embed_dims.push(cfg.embed_dim);
        let unary = UnaryNet { mlp: Mlp::xavier(&unary_dims, rng) };
        let embed = Mlp::xavier(&embed_dims, rng);
        Self {
            unary,
            pairwise: PairwiseNet { embed, beta_raw: softplus_inv(cfg.beta_init), gamma: cfg.gamma },
            coupled: true,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.unary.mlp.input_dim()
    }

    pub fn label_dim(&self) -> usize {
        self.unary.output_dim()
    }

    /// Check that the model and a task agree.
    pub fn check_task(&self, task: Task) -> Result<()> {
        if self.label_dim() != task.label_dim() {
            return shape_err(format!("model predicts {} columns, task {task} needs {}", self.label_dim(), task.label_dim()));
        }
        Ok(())
    }

    /// Affinities for a graph; all zero when `coupled` is false.
    pub fn affinities(&self, graph: &NodeGraph, coupled: bool) -> Result<Array2<f64>> {
        let n = graph.node_count();
        if coupled {
            self.pairwise.forward(graph).map(|(r, _)| r)
        } else {
            Ok(Array2::zeros((n, n)))
        }
    }

    /// Full inference. `coupled` overrides the model's own flag only when it
    /// turns the pairwise branch off.
    pub fn predict_with(&self, graph: &NodeGraph, coupled: bool) -> Result<CrfOutput> {
        let z = self.unary.forward(graph)?.0;
        let r = self.affinities(graph, coupled && self.coupled)?;
        crf::infer(r.view(), z)
    }

    pub fn predict(&self, graph: &NodeGraph) -> Result<CrfOutput> {
        self.predict_with(graph, true)
    }

    pub fn zero_grads(&self) -> ModelGrads {
        ModelGrads {
            unary: self.unary.mlp.zeros_like(),
            pairwise: PairwiseGrad { embed: self.pairwise.embed.zeros_like(), beta_raw: 0.0 },
        }
    }

    pub fn param_count(&self) -> usize {
        self.unary.mlp.param_count() + self.pairwise.embed.param_count() + 1
    }

    /// Flatten all trainable parameters (unary, embedding, beta_raw).
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.unary.mlp.visit(&mut |s| out.extend_from_slice(s));
        self.pairwise.embed.visit(&mut |s| out.extend_from_slice(s));
        out.push(self.pairwise.beta_raw);
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count(), "parameter vector length");
        let mut offset = 0;
        let mut take = |s: &mut [f64]| {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        };
        self.unary.mlp.visit_mut(&mut take);
        self.pairwise.embed.visit_mut(&mut take);
        self.pairwise.beta_raw = flat[flat.len() - 1];
    }

    /// Number of leading entries of the flat vector that belong to the unary net.
    pub fn unary_param_count(&self) -> usize {
        self.unary.mlp.param_count()
    }
}

impl ModelGrads {
    /// Same layout as [`Model::flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.unary.visit(&mut |s| out.extend_from_slice(s));
        self.pairwise.embed.visit(&mut |s| out.extend_from_slice(s));
        out.push(self.pairwise.beta_raw);
        out
    }
}

/// Pixel-free predictions for external callers: features `n x F` and centroids `n x 2`.
pub fn predict_raw(model: &Model, features: ArrayView2<'_, f64>, centroids: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let n = features.nrows();
    if centroids.dim() != (n, 2) {
        return shape_err("centroids must be n x 2");
    }
    let graph = NodeGraph { features: features.to_owned(), centroids: centroids.to_owned(), pixel_counts: vec![1; n] };
    model.predict(&graph).map(|out| out.yhat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn flat_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = ModelConfig { embed_dim: 4, unary_hidden: vec![5], embed_hidden: vec![3], ..Default::default() };
        let model = Model::init(6, Task::Segmentation { classes: 3 }, &cfg, &mut rng);
        let flat = model.flat_params();
        assert_eq!(flat.len(), model.param_count());
        let mut other = Model::init(6, Task::Segmentation { classes: 3 }, &cfg, &mut rng);
        assert_ne!(other, model);
        other.set_flat_params(&flat);
        assert_eq!(other, model);
        assert_eq!(model.zero_grads().flatten().len(), flat.len());
        assert!((model.pairwise.beta() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn task_tags() {
        assert_eq!("segmentation 4".parse::<Task>().unwrap(), Task::Segmentation { classes: 4 });
        assert_eq!("depth".parse::<Task>().unwrap(), Task::Depth);
        assert!("segmentation 1".parse::<Task>().is_err());
        assert!("depth 3".parse::<Task>().is_err());
        assert_eq!(Task::Segmentation { classes: 8 }.to_string(), "segmentation 8");
    }
}
