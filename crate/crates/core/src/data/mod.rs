//! Labeled examples, synthetic scenes, label corruption and evaluation metrics.

pub mod corrupt;
pub mod metrics;
pub mod synth;

use ndarray::Array2;

use crate::error::{shape_err, Result};
use crate::graph::{ImageGrid, NodeGraph, SuperpixelSegmentation};
use crate::model::Task;

pub use corrupt::{inject_gaussian_noise, inject_outliers, CorruptionKind, CorruptionSpec};
pub use metrics::{depth_metrics, seg_metrics, DepthMetrics, SegMetrics};
pub use synth::{gen_depth_scene, gen_segmentation_scene, SyntheticSceneSpec};

/// One training or evaluation image with node-level targets.
#[derive(Debug, Clone)]
pub struct LabeledExample {
    pub image: ImageGrid,
    pub segmentation: SuperpixelSegmentation,
    /// `n x m` one-hot rows for segmentation, `n x 1` depths for depth.
    pub targets: Array2<f64>,
    pub task: Task,
    pub graph: NodeGraph,
}

impl LabeledExample {
    pub fn new(image: ImageGrid, segmentation: SuperpixelSegmentation, targets: Array2<f64>, task: Task) -> Result<Self> {
        let n = segmentation.node_count();
        if targets.dim() != (n, task.label_dim()) {
            return shape_err(format!(
                "targets are {:?}, expected {n}x{} for {task}",
                targets.dim(),
                task.label_dim()
            ));
        }
        let graph = NodeGraph::build(&image, &segmentation)?;
        Ok(Self { image, segmentation, targets, task, graph })
    }

    pub fn node_count(&self) -> usize {
        self.segmentation.node_count()
    }

    /// Node class indices for segmentation targets (argmax of each row).
    pub fn class_labels(&self) -> Vec<usize> {
        crate::losses::predict_labels(self.targets.view())
    }
}

/// Train/validation/test splits sharing one task.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub task: Task,
    pub train: Vec<LabeledExample>,
    pub val: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
}

impl Dataset {
    pub fn is_empty(&self) -> bool {
        self.train.is_empty() && self.val.is_empty() && self.test.is_empty()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.train
            .iter()
            .chain(&self.val)
            .chain(&self.test)
            .next()
            .map(|e| e.graph.feature_dim())
    }
}

/// Sizes of a 3-way split: `train%/val%` with the rest for test, rounded down,
/// leftovers going to train.
pub fn split_sizes(count: usize, train_pct: usize, val_pct: usize) -> (usize, usize, usize) {
    let val = count * val_pct / 100;
    let test = count * (100 - train_pct - val_pct) / 100;
    (count - val - test, val, test)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixty_twenty_twenty() {
        assert_eq!(split_sizes(10, 60, 20), (6, 2, 2));
        assert_eq!(split_sizes(7, 60, 20), (5, 1, 1));
        assert_eq!(split_sizes(0, 60, 20), (0, 0, 0));
    }
}
