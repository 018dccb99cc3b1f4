//! `key=value` run configuration with `#` comments.
//!
//! Unset keys keep their defaults. [`RunConfig::render`] prints every key in a
//! fixed order, which is what run ids are hashed over.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::data::corrupt::{DEFAULT_NOISE_SIGMA, DEFAULT_OUTLIER_MAGNITUDE};
use crate::data::synth::{Segmenter, SyntheticSceneSpec};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Task};
use crate::training::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    /// Class count sweep, softmax against likelihood.
    Classes,
    /// Label corruption sweep, likelihood against Tukey.
    Corruption,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub kind: SweepKind,
    pub classes: Vec<usize>,
    /// Seeds per cell; reported metrics are medians.
    pub seeds: usize,
    pub noise_sigma: f64,
    pub outlier_magnitude: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            kind: SweepKind::Classes,
            classes: vec![2, 4, 8],
            seeds: 1,
            noise_sigma: DEFAULT_NOISE_SIGMA,
            outlier_magnitude: DEFAULT_OUTLIER_MAGNITUDE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scene: SyntheticSceneSpec,
    /// Examples generated by `synth`.
    pub count: usize,
    pub train_pct: usize,
    pub val_pct: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scene: SyntheticSceneSpec::new(Task::Segmentation { classes: 4 }, 0),
            count: 100,
            train_pct: 60,
            val_pct: 20,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::InvalidArgument(format!("bad value {v:?} for {key}")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<usize>> {
    if v.is_empty() || v == "none" {
        return Ok(vec![]);
    }
    v.split(',').map(|s| parse(key, s.trim())).collect()
}

fn join(v: &[usize]) -> String {
    if v.is_empty() {
        return "none".into();
    }
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut classes = None;
        let mut task = None;
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("config line {}: expected key=value", no + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "task" => task = Some(value.to_string()),
                "classes" => classes = Some(parse::<usize>(key, value)?),
                _ => cfg.set(key, value)?,
            }
        }
        match task.as_deref() {
            None | Some("segmentation") => {
                let m = classes.unwrap_or(cfg.scene.task.label_dim().max(2));
                cfg.scene.task = format!("segmentation {m}").parse()?;
            }
            Some("depth") => cfg.scene.task = Task::Depth,
            Some(other) => return Err(Error::InvalidArgument(format!("unknown task {other:?}"))),
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply one `key=value` setting (everything except `task`/`classes`).
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let s = &mut self.scene;
        let t = &mut self.train;
        let m = &mut self.model;
        match key {
            "size" => s.size = parse(key, v)?,
            "shapes" => s.shape_count = parse(key, v)?,
            "noise" => s.noise_level = parse(key, v)?,
            "nodes" => s.nodes = parse(key, v)?,
            "segmenter" => {
                s.segmenter = match v {
                    "grid" => Segmenter::Grid,
                    "slic" => Segmenter::Slic,
                    _ => return Err(Error::InvalidArgument(format!("segmenter must be grid or slic, got {v:?}"))),
                }
            }
            "contrast" => s.contrast = parse(key, v)?,
            "jitter" => s.shape_jitter = parse(key, v)?,
            "ramp" => s.ramp_strength = parse(key, v)?,
            "count" => self.count = parse(key, v)?,
            "train_pct" => self.train_pct = parse(key, v)?,
            "val_pct" => self.val_pct = parse(key, v)?,
            "unary_hidden" => m.unary_hidden = parse_list(key, v)?,
            "embed_hidden" => m.embed_hidden = parse_list(key, v)?,
            "embed_dim" => m.embed_dim = parse(key, v)?,
            "gamma" => m.gamma = parse(key, v)?,
            "beta_init" => m.beta_init = parse(key, v)?,
            "loss" => t.loss = v.parse()?,
            "lr" => t.lr = parse(key, v)?,
            "momentum" => t.momentum = parse(key, v)?,
            "weight_decay" => t.weight_decay = parse(key, v)?,
            "epochs" => t.epochs = parse(key, v)?,
            "warmup" => t.unary_warmup_epochs = parse(key, v)?,
            "seed" => self.set_seed(parse(key, v)?),
            "clip_norm" => t.clip_norm = if v == "none" { None } else { Some(parse(key, v)?) },
            "sweep" => {
                self.sweep.kind = match v {
                    "classes" => SweepKind::Classes,
                    "corruption" => SweepKind::Corruption,
                    _ => return Err(Error::InvalidArgument(format!("sweep must be classes or corruption, got {v:?}"))),
                }
            }
            "sweep_classes" => self.sweep.classes = parse_list(key, v)?,
            "sweep_seeds" => self.sweep.seeds = parse(key, v)?,
            "noise_sigma" => self.sweep.noise_sigma = parse(key, v)?,
            "outlier_magnitude" => self.sweep.outlier_magnitude = parse(key, v)?,
            _ => return Err(Error::InvalidArgument(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// One seed drives scene generation and training.
    pub fn set_seed(&mut self, seed: u64) {
        self.scene.seed = seed;
        self.train.seed = seed;
    }

    pub fn seed(&self) -> u64 {
        self.train.seed
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.train_pct + self.val_pct > 100 {
            return Err(Error::InvalidArgument("train_pct + val_pct exceeds 100".into()));
        }
        if self.model.embed_dim == 0 || !(self.model.beta_init > 0.0) || !(self.model.gamma >= 0.0) {
            return Err(Error::InvalidArgument("need embed_dim > 0, beta_init > 0, gamma >= 0".into()));
        }
        if self.sweep.seeds == 0 {
            return Err(Error::InvalidArgument("sweep_seeds must be >= 1".into()));
        }
        if self.sweep.classes.iter().any(|&c| c < 2) {
            return Err(Error::InvalidArgument("sweep_classes entries must be >= 2".into()));
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        let s = &self.scene;
        let t = &self.train;
        let m = &self.model;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        match s.task {
            Task::Segmentation { classes } => {
                kv("task", "segmentation".into());
                kv("classes", classes.to_string());
            }
            Task::Depth => kv("task", "depth".into()),
        }
        kv("size", s.size.to_string());
        kv("shapes", s.shape_count.to_string());
        kv("noise", format!("{:?}", s.noise_level));
        kv("nodes", s.nodes.to_string());
        kv("segmenter", if s.segmenter == Segmenter::Grid { "grid" } else { "slic" }.into());
        kv("contrast", format!("{:?}", s.contrast));
        kv("jitter", format!("{:?}", s.shape_jitter));
        kv("ramp", format!("{:?}", s.ramp_strength));
        kv("count", self.count.to_string());
        kv("train_pct", self.train_pct.to_string());
        kv("val_pct", self.val_pct.to_string());
        kv("unary_hidden", join(&m.unary_hidden));
        kv("embed_hidden", join(&m.embed_hidden));
        kv("embed_dim", m.embed_dim.to_string());
        kv("gamma", format!("{:?}", m.gamma));
        kv("beta_init", format!("{:?}", m.beta_init));
        kv("loss", t.loss.to_string());
        kv("lr", format!("{:?}", t.lr));
        kv("momentum", format!("{:?}", t.momentum));
        kv("weight_decay", format!("{:?}", t.weight_decay));
        kv("epochs", t.epochs.to_string());
        kv("warmup", t.unary_warmup_epochs.to_string());
        kv("seed", t.seed.to_string());
        kv("clip_norm", t.clip_norm.map_or("none".into(), |c| format!("{c:?}")));
        kv("sweep", if self.sweep.kind == SweepKind::Classes { "classes" } else { "corruption" }.into());
        kv("sweep_classes", join(&self.sweep.classes));
        kv("sweep_seeds", self.sweep.seeds.to_string());
        kv("noise_sigma", format!("{:?}", self.sweep.noise_sigma));
        kv("outlier_magnitude", format!("{:?}", self.sweep.outlier_magnitude));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::TaskLossKind;

    #[test]
    fn defaults_and_overrides() {
        let cfg = RunConfig::parse("# base\ntask = depth\nepochs=3 # short\nloss=tukey\nclip_norm=none\n").unwrap();
        assert_eq!(cfg.scene.task, Task::Depth);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.loss, TaskLossKind::Tukey { c: 1.0 });
        assert_eq!(cfg.train.clip_norm, None);
        assert_eq!(cfg.train.lr, 1e-3);
    }

    #[test]
    fn render_parses_back_to_the_same_config() {
        let cfg = RunConfig::parse("classes=8\nunary_hidden=16,8\nseed=11\nnoise=0.35\nsweep=corruption\n").unwrap();
        assert_eq!(cfg.scene.seed, 11);
        assert_eq!(RunConfig::parse(&cfg.render()).unwrap(), cfg);
    }

    #[test]
    fn bad_lines_rejected() {
        for text in ["epochs", "epochs=x", "colour=red", "task=audio", "classes=1", "lr=0", "train_pct=90\nval_pct=20"] {
            assert!(RunConfig::parse(text).is_err(), "{text}");
        }
    }
}
