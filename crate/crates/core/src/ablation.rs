//! Experiment drivers: unary-vs-full, loss-vs-class-count and
//! loss-vs-corruption sweeps on synthetic data.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::synth::{gen_scenes, SyntheticSceneSpec};
use crate::data::{split_sizes, CorruptionKind, CorruptionSpec, Dataset, LabeledExample};
use crate::error::Result;
use crate::losses::TaskLossKind;
use crate::model::{ModelConfig, Task};
use crate::training::{evaluate, train, MetricRecord, TrainConfig, TrainHistory};

/// Seed offset separating label-corruption draws from scene generation draws.
const CORRUPTION_SEED_SALT: u64 = 0x5eed_c0de;

/// Synthetic dataset of `count` scenes split by example order
/// (`train_pct` / `val_pct` / rest).
pub fn synth_dataset(spec: &SyntheticSceneSpec, count: usize, train_pct: usize, val_pct: usize) -> Result<Dataset> {
    let mut all = gen_scenes(spec, count)?;
    let (ntrain, nval, _) = split_sizes(count, train_pct, val_pct);
    let test = all.split_off(ntrain + nval);
    let val = all.split_off(ntrain);
    Ok(Dataset { task: spec.task, train: all, val, test })
}

/// Synthetic dataset with explicit split sizes.
pub fn synth_dataset_sized(spec: &SyntheticSceneSpec, ntrain: usize, nval: usize, ntest: usize) -> Result<Dataset> {
    let mut all = gen_scenes(spec, ntrain + nval + ntest)?;
    let test = all.split_off(ntrain + nval);
    let val = all.split_off(ntrain);
    Ok(Dataset { task: spec.task, train: all, val, test })
}

/// Corrupt the node targets of every example; example `i` draws from seed `seed + salt + i`.
pub fn corrupt_examples(examples: &[LabeledExample], corruption: &CorruptionSpec, seed: u64) -> Result<Vec<LabeledExample>> {
    examples
        .iter()
        .enumerate()
        .map(|(i, ex)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(CORRUPTION_SEED_SALT).wrapping_add(i as u64));
            let mut out = ex.clone();
            out.targets = corruption.apply(&ex.targets, &mut rng)?;
            Ok(out)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub loss: TaskLossKind,
    pub full: MetricRecord,
    pub unary: MetricRecord,
    pub history: TrainHistory,
}

/// Train one model and evaluate it on the clean test split, both coupled and unary-only.
pub fn run_cell(
    data: &Dataset,
    corruption: Option<&CorruptionSpec>,
    model_cfg: &ModelConfig,
    config: &TrainConfig,
) -> Result<CellResult> {
    // Only training labels are corrupted; model selection and test use clean targets.
    let train_set = match corruption {
        Some(c) if c.fraction > 0.0 => corrupt_examples(&data.train, c, config.seed)?,
        _ => data.train.clone(),
    };
    let (model, history) = train(&train_set, &data.val, model_cfg, config)?;
    Ok(CellResult {
        loss: config.loss,
        full: evaluate(&model, &data.test, data.task, true)?,
        unary: evaluate(&model, &data.test, data.task, false)?,
        history,
    })
}

/// The corruption settings of the robustness sweep, in report order.
pub fn corruption_grid(sigma: f64, magnitude: f64) -> Vec<CorruptionSpec> {
    let noise = CorruptionKind::GaussianNoise { sigma };
    let outlier = CorruptionKind::Outlier { magnitude };
    vec![
        CorruptionSpec { kind: noise, fraction: 0.0 },
        CorruptionSpec { kind: noise, fraction: 0.10 },
        CorruptionSpec { kind: noise, fraction: 0.25 },
        CorruptionSpec { kind: outlier, fraction: 0.10 },
        CorruptionSpec { kind: outlier, fraction: 0.25 },
    ]
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let k = values.len();
    if k == 0 {
        return f64::NAN;
    }
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

/// Segmentation task with `classes` classes on a spec template.
pub fn with_classes(spec: &SyntheticSceneSpec, classes: usize) -> SyntheticSceneSpec {
    SyntheticSceneSpec { task: Task::Segmentation { classes }, ..spec.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_odd_even() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn grid_rows() {
        let labels: Vec<String> = corruption_grid(0.1, 5.0).iter().map(CorruptionSpec::label).collect();
        assert_eq!(labels, ["0%", "10% noise", "25% noise", "10% outlier", "25% outlier"]);
    }
}
