//! End-to-end training of the joint model, by a task loss on the MAP estimate
//! or by maximum likelihood, with SGD + momentum + weight decay.

use std::fmt::Write as _;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::crf::{assemble, map_backward, map_infer, nll_and_backward};
use crate::data::{depth_metrics, seg_metrics, DepthMetrics, LabeledExample, SegMetrics};
use crate::error::{Error, Result};
use crate::losses::{predict_labels, TaskLossKind};
use crate::model::{Model, ModelConfig, ModelGrads, Task};
use crate::networks::PairwiseGrad;

/// Shift applied to depths before ratio/log metrics.
pub const DEPTH_METRIC_SHIFT: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss: TaskLossKind,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Leading epochs that train the unary network only, with `R = 0`.
    pub unary_warmup_epochs: usize,
    pub seed: u64,
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: TaskLossKind::SOFTMAX,
            lr: 1e-3,
            momentum: 0.9,
            weight_decay: 5e-4,
            epochs: 30,
            unary_warmup_epochs: 5,
            seed: 0,
            clip_norm: Some(10.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::InvalidArgument("lr must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument("momentum must be in [0, 1)".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidArgument("weight_decay must be >= 0".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::InvalidArgument("clip_norm must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// Loss and gradients for one example.
#[derive(Debug, Clone)]
pub struct StepOutput {
    /// Task loss (or negative log-likelihood) without the regularizer.
    pub data_loss: f64,
    /// `λ/2 |θ|²` over the parameters that receive gradients.
    pub reg_loss: f64,
    pub grads: ModelGrads,
}

impl StepOutput {
    pub fn total_loss(&self) -> f64 {
        self.data_loss + self.reg_loss
    }
}

/// Forward and backward pass through unary net, pairwise net, closed-form
/// inference and the loss. With `freeze_pairwise` the affinities are zero and
/// the pairwise parameters get neither gradients nor weight decay.
pub fn forward_loss(
    model: &Model,
    example: &LabeledExample,
    loss: TaskLossKind,
    weight_decay: f64,
    freeze_pairwise: bool,
) -> Result<StepOutput> {
    model.check_task(example.task)?;
    let graph = &example.graph;
    let n = graph.node_count();
    let (z, unary_cache) = model.unary.forward(graph)?;
    let coupled = model.coupled && !freeze_pairwise;
    let (r, pair_cache) = if coupled {
        let (r, cache) = model.pairwise.forward(graph)?;
        (r, Some(cache))
    } else {
        (Array2::zeros((n, n)), None)
    };
    let system = assemble(r.view())?;
    let y = example.targets.view();
    let (data_loss, dz, dr) = match loss {
        TaskLossKind::LogLikelihood => nll_and_backward(&system, z.view(), y)?,
        kind => {
            let yhat = map_infer(&system, z.view())?;
            let (value, d_yhat) = kind.evaluate(yhat.view(), y)?;
            let (dz, dr) = map_backward(&system, yhat.view(), d_yhat.view())?;
            (value, dz, dr)
        }
    };
    if !data_loss.is_finite() {
        return Err(Error::Divergence { epoch: 0, example: 0, detail: format!("loss is {data_loss}") });
    }
    let mut unary = model.unary.backward(&unary_cache, dz.view())?;
    let mut pairwise = match &pair_cache {
        Some(cache) => model.pairwise.backward(cache, dr.view())?,
        None => PairwiseGrad { embed: model.pairwise.embed.zeros_like(), beta_raw: 0.0 },
    };

    let mut reg = 0.0;
    if weight_decay > 0.0 {
        add_decay(&mut unary, &model.unary.mlp, weight_decay, &mut reg);
        if pair_cache.is_some() {
            add_decay(&mut pairwise.embed, &model.pairwise.embed, weight_decay, &mut reg);
            pairwise.beta_raw += weight_decay * model.pairwise.beta_raw;
            reg += 0.5 * weight_decay * model.pairwise.beta_raw * model.pairwise.beta_raw;
        }
    }
    Ok(StepOutput { data_loss, reg_loss: reg, grads: ModelGrads { unary, pairwise } })
}

fn add_decay(grad: &mut crate::networks::Mlp, params: &crate::networks::Mlp, lambda: f64, reg: &mut f64) {
    for (g, p) in grad.layers.iter_mut().zip(&params.layers) {
        g.weight.scaled_add(lambda, &p.weight);
        g.bias.scaled_add(lambda, &p.bias);
        *reg += 0.5 * lambda * (p.weight.iter().map(|v| v * v).sum::<f64>() + p.bias.iter().map(|v| v * v).sum::<f64>());
    }
}

/// SGD with momentum: `v ← μ v - lr g`, `θ ← θ + v`, after optional global-norm clipping.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub clip_norm: Option<f64>,
    velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(param_count: usize, lr: f64, momentum: f64, clip_norm: Option<f64>) -> Self {
        Self { lr, momentum, clip_norm, velocity: vec![0.0; param_count] }
    }

    pub fn velocity(&self) -> &[f64] {
        &self.velocity
    }

    /// Apply one update in place; returns the gradient norm before clipping.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> f64 {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.velocity.len());
        let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
        let scale = match self.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        for ((p, v), g) in params.iter_mut().zip(&mut self.velocity).zip(grads) {
            *v = self.momentum * *v - self.lr * scale * g;
            *p += *v;
        }
        norm
    }
}

/// Update a model in place from one gradient bundle.
pub fn sgd_step(model: &mut Model, grads: &ModelGrads, opt: &mut Sgd) -> f64 {
    let mut params = model.flat_params();
    let norm = opt.step(&mut params, &grads.flatten());
    model.set_flat_params(&params);
    norm
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    /// Validation pixel accuracy (segmentation) or rms (depth).
    pub metric: f64,
    /// Effective β during the epoch (0 while the pairwise branch is frozen).
    pub beta: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    /// Epoch whose parameters were returned, if any epoch ran.
    pub best_epoch: Option<usize>,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,metric,beta,grad_norm\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{},{},{}", r.epoch, r.loss, r.metric, r.beta, r.grad_norm);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MetricRecord {
    Segmentation(SegMetrics),
    Depth(DepthMetrics),
}

impl MetricRecord {
    /// Pixel accuracy for segmentation, rms for depth.
    pub fn headline(&self) -> f64 {
        match self {
            MetricRecord::Segmentation(m) => m.pixel_acc,
            MetricRecord::Depth(m) => m.rms,
        }
    }

    pub fn higher_is_better(&self) -> bool {
        matches!(self, MetricRecord::Segmentation(_))
    }
}

/// Run inference over every example and aggregate node-level metrics,
/// weighting each node by its pixel count. `coupled = false` evaluates the
/// unary-only variant of the same model.
pub fn evaluate(model: &Model, examples: &[LabeledExample], task: Task, coupled: bool) -> Result<MetricRecord> {
    model.check_task(task)?;
    if examples.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate an empty dataset".into()));
    }
    let mut counts = Vec::new();
    match task {
        Task::Segmentation { classes } => {
            let (mut pred, mut truth) = (Vec::new(), Vec::new());
            for ex in examples {
                if ex.task != task {
                    return Err(Error::InvalidArgument("example task differs from dataset task".into()));
                }
                let out = model.predict_with(&ex.graph, coupled)?;
                pred.extend(predict_labels(out.yhat.view()));
                truth.extend(ex.class_labels());
                counts.extend(&ex.graph.pixel_counts);
            }
            seg_metrics(&pred, &truth, &counts, classes).map(MetricRecord::Segmentation)
        }
        Task::Depth => {
            let (mut pred, mut truth) = (Vec::new(), Vec::new());
            for ex in examples {
                if ex.task != task {
                    return Err(Error::InvalidArgument("example task differs from dataset task".into()));
                }
                let out = model.predict_with(&ex.graph, coupled)?;
                pred.extend(out.yhat.column(0).iter());
                truth.extend(ex.targets.column(0).iter());
                counts.extend(&ex.graph.pixel_counts);
            }
            depth_metrics(&pred, &truth, &counts, DEPTH_METRIC_SHIFT).map(MetricRecord::Depth)
        }
    }
}

/// Initial model for a training run: the first draws of the run's RNG.
pub fn init_model(feature_dim: usize, task: Task, model_cfg: &ModelConfig, config: &TrainConfig, rng: &mut ChaCha8Rng) -> Model {
    let mut model = Model::init(feature_dim, task, model_cfg, rng);
    model.coupled = config.unary_warmup_epochs == 0;
    model
}

/// Train on `train`, select the epoch with the best score on `val` (or on
/// `train` when `val` is empty) and return that model.
pub fn train(
    train: &[LabeledExample],
    val: &[LabeledExample],
    model_cfg: &ModelConfig,
    config: &TrainConfig,
) -> Result<(Model, TrainHistory)> {
    config.validate()?;
    let first = train.first().ok_or_else(|| Error::InvalidArgument("training set is empty".into()))?;
    let task = first.task;
    if train.iter().chain(val).any(|e| e.task != task || e.graph.feature_dim() != first.graph.feature_dim()) {
        return Err(Error::InvalidArgument("examples disagree on task or feature width".into()));
    }
    if config.loss.is_classification() != task.is_segmentation() && config.loss != TaskLossKind::LogLikelihood {
        return Err(Error::InvalidArgument(format!("loss {} does not fit task {task}", config.loss)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = init_model(first.graph.feature_dim(), task, model_cfg, config, &mut rng);
    let mut opt = Sgd::new(model.param_count(), config.lr, config.momentum, config.clip_norm);
    let selection_set = if val.is_empty() { train } else { val };

    let mut history = TrainHistory::default();
    let mut best: Option<(f64, Model)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..config.epochs {
        let frozen = epoch < config.unary_warmup_epochs;
        model.coupled = !frozen;
        order.shuffle(&mut rng);
        let (mut loss_sum, mut norm_sum) = (0.0, 0.0);
        for &i in &order {
            let step = forward_loss(&model, &train[i], config.loss, config.weight_decay, frozen).map_err(|e| match e {
                Error::Divergence { detail, .. } => Error::Divergence { epoch, example: i, detail },
                other => other,
            })?;
            norm_sum += sgd_step(&mut model, &step.grads, &mut opt);
            if model.flat_params().iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { epoch, example: i, detail: "parameters became nonfinite".into() });
            }
            loss_sum += step.data_loss;
        }
        let metric = evaluate(&model, selection_set, task, true)?;
        let score = metric.headline();
        let improved = match &best {
            None => true,
            Some((b, _)) if metric.higher_is_better() => score > *b,
            Some((b, _)) => score < *b,
        };
        if improved {
            best = Some((score, model.clone()));
            history.best_epoch = Some(epoch);
        }
        history.records.push(EpochRecord {
            epoch,
            loss: loss_sum / train.len() as f64,
            metric: score,
            beta: if frozen { 0.0 } else { model.pairwise.beta() },
            grad_norm: norm_sum / train.len() as f64,
        });
    }
    Ok((best.map_or(model, |(_, m)| m), history))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_gradient_step() {
        let mut opt = Sgd::new(2, 0.1, 0.0, None);
        let mut p = vec![1.0, -2.0];
        opt.step(&mut p, &[0.5, 1.0]);
        assert_eq!(p, vec![1.0 - 0.05, -2.0 - 0.1]);
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut opt = Sgd::new(3, 0.1, 0.9, Some(1.0));
        let mut p = vec![0.3, 0.2, 0.1];
        opt.step(&mut p, &[0.0; 3]);
        assert_eq!(p, vec![0.3, 0.2, 0.1]);
    }

    #[test]
    fn momentum_two_steps_by_hand() {
        let (lr, mu) = (0.1, 0.9);
        let mut opt = Sgd::new(1, lr, mu, None);
        let mut p = vec![1.0];
        opt.step(&mut p, &[2.0]);
        opt.step(&mut p, &[-1.0]);
        // v1 = -0.2, θ1 = 0.8; v2 = 0.9 * -0.2 + 0.1 = -0.08, θ2 = 0.72
        let v1 = -lr * 2.0;
        let v2 = mu * v1 + lr * 1.0;
        assert!((opt.velocity()[0] - v2).abs() < 1e-15);
        assert!((p[0] - (1.0 + v1 + v2)).abs() < 1e-15);
        assert!((p[0] - 0.72).abs() < 1e-12);
    }

    #[test]
    fn clipping_limits_step() {
        let mut opt = Sgd::new(2, 1.0, 0.0, Some(1.0));
        let mut p = vec![0.0, 0.0];
        let norm = opt.step(&mut p, &[3.0, 4.0]);
        assert_eq!(norm, 5.0);
        assert!((p[0] + 0.6).abs() < 1e-15 && (p[1] + 0.8).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { momentum: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { lr: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { clip_norm: Some(0.0), ..Default::default() }.validate().is_err());
    }

    #[test]
    fn history_csv_layout() {
        let h = TrainHistory {
            records: vec![EpochRecord { epoch: 0, loss: 1.5, metric: 0.25, beta: 0.0, grad_norm: 2.0 }],
            best_epoch: Some(0),
        };
        assert_eq!(h.to_csv(), "epoch,loss,metric,beta,grad_norm\n0,1.5,0.25,0,2\n");
    }
}
