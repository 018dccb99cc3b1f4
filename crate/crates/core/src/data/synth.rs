//! Deterministic synthetic scenes for segmentation and depth regression.
//!
//! Example `i` of a generated dataset uses seed `base_seed + i`.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::LabeledExample;
use crate::error::{Error, Result};
use crate::graph::{grid_segment, ImageGrid, SuperpixelSegmentation};
use crate::model::Task;
use crate::slic::slic_segment;

const MAX_ATTEMPTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segmenter {
    Grid,
    Slic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSceneSpec {
    pub task: Task,
    /// Image side in pixels.
    pub size: usize,
    /// Shapes for segmentation, Gaussian bumps for depth.
    pub shape_count: usize,
    /// Standard deviation of per-pixel intensity noise.
    pub noise_level: f64,
    pub seed: u64,
    /// Target superpixel count.
    pub nodes: usize,
    pub segmenter: Segmenter,
    /// Radius of the class palette around mid-gray.
    pub contrast: f64,
    /// Per-shape colour jitter (standard deviation).
    pub shape_jitter: f64,
    /// Weight of the planar ramp in depth scenes.
    pub ramp_strength: f64,
}

impl SyntheticSceneSpec {
    pub fn new(task: Task, seed: u64) -> Self {
        Self {
            task,
            size: 64,
            shape_count: 4,
            noise_level: 0.1,
            seed,
            nodes: 100,
            segmenter: Segmenter::Grid,
            contrast: 0.25,
            shape_jitter: 0.02,
            ramp_strength: 1.0,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    fn validate(&self) -> Result<()> {
        if self.size < 32 {
            return Err(Error::InvalidArgument(format!("scene size must be >= 32, got {}", self.size)));
        }
        if let Task::Segmentation { classes } = self.task {
            if classes < 2 {
                return Err(Error::InvalidArgument("segmentation scenes need >= 2 classes".into()));
            }
        }
        if !(self.noise_level >= 0.0) || !(self.contrast >= 0.0) || !(self.shape_jitter >= 0.0) {
            return Err(Error::InvalidArgument("noise, contrast and jitter must be >= 0".into()));
        }
        Ok(())
    }

    fn segment(&self, image: &ImageGrid) -> Result<SuperpixelSegmentation> {
        match self.segmenter {
            Segmenter::Grid => grid_segment(image, self.nodes),
            Segmenter::Slic => slic_segment(image, self.nodes, 10.0, 10),
        }
    }
}

/// Class colours: evenly spaced hues on a circle of radius `contrast` around
/// mid-gray, with alternating lightness once there are more than 3 classes.
pub fn palette(classes: usize, contrast: f64) -> Vec<[f64; 3]> {
    let s6 = 6f64.sqrt();
    let s2 = 2f64.sqrt();
    let u = [2.0 / s6, -1.0 / s6, -1.0 / s6];
    let v = [0.0, 1.0 / s2, -1.0 / s2];
    let gray = 1.0 / 3f64.sqrt();
    (0..classes)
        .map(|j| {
            let h = std::f64::consts::TAU * j as f64 / classes as f64;
            let light = match (classes > 3, j % 2 == 0) {
                (false, _) => 0.0,
                (true, true) => 0.5 * contrast,
                (true, false) => -0.5 * contrast,
            };
            let mut c = [0.0; 3];
            for k in 0..3 {
                c[k] = (0.5 + contrast * (h.cos() * u[k] + h.sin() * v[k]) + light * gray).clamp(0.0, 1.0);
            }
            c
        })
        .collect()
}

fn noisy_channel(value: f64, noise: &Option<Normal<f64>>, rng: &mut ChaCha8Rng) -> f64 {
    let n = noise.as_ref().map_or(0.0, |d| d.sample(rng));
    (value + n).clamp(0.0, 1.0)
}

/// Majority class per node (ties to the lowest class), one-hot.
fn majority_targets(seg: &SuperpixelSegmentation, pixel_class: &[usize], classes: usize) -> Array2<f64> {
    let n = seg.node_count();
    let mut votes = vec![0usize; n * classes];
    for (&node, &cls) in seg.labels().iter().zip(pixel_class) {
        votes[node * classes + cls] += 1;
    }
    let mut targets = Array2::zeros((n, classes));
    for p in 0..n {
        let row = &votes[p * classes..(p + 1) * classes];
        let mut best = 0;
        for j in 1..classes {
            if row[j] > row[best] {
                best = j;
            }
        }
        targets[[p, best]] = 1.0;
    }
    targets
}

/// Shapes of random classes painted over a class-0 background.
pub fn gen_segmentation_scene(spec: &SyntheticSceneSpec) -> Result<LabeledExample> {
    spec.validate()?;
    let Task::Segmentation { classes } = spec.task else {
        return Err(Error::InvalidArgument("segmentation scene needs a segmentation task".into()));
    };
    let size = spec.size;
    let colors = palette(classes, spec.contrast);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = (spec.noise_level > 0.0).then(|| Normal::new(0.0, spec.noise_level).expect("valid sigma"));
    let jitter = (spec.shape_jitter > 0.0).then(|| Normal::new(0.0, spec.shape_jitter).expect("valid sigma"));

    for _ in 0..MAX_ATTEMPTS {
        let mut pixel_class = vec![0usize; size * size];
        let shade = |rng: &mut ChaCha8Rng, cls: usize| -> [f64; 3] {
            let mut c = colors[cls];
            if let Some(j) = &jitter {
                c.iter_mut().for_each(|v| *v = (*v + j.sample(rng)).clamp(0.0, 1.0));
            }
            c
        };
        let background = shade(&mut rng, 0);
        let mut pixel_color = vec![background; size * size];
        for _ in 0..spec.shape_count {
            let cls = rng.random_range(1..classes);
            let color = shade(&mut rng, cls);
            let cr = rng.random_range(0.0..size as f64);
            let cc = rng.random_range(0.0..size as f64);
            let hr = rng.random_range(size as f64 / 10.0..size as f64 / 4.0);
            let hc = rng.random_range(size as f64 / 10.0..size as f64 / 4.0);
            let ellipse = rng.random_bool(0.5);
            for r in 0..size {
                for c in 0..size {
                    let dr = (r as f64 - cr) / hr;
                    let dc = (c as f64 - cc) / hc;
                    let inside = if ellipse { dr * dr + dc * dc <= 1.0 } else { dr.abs() <= 1.0 && dc.abs() <= 1.0 };
                    if inside {
                        pixel_class[r * size + c] = cls;
                        pixel_color[r * size + c] = color;
                    }
                }
            }
        }
        let mut values = Vec::with_capacity(size * size * 3);
        for color in &pixel_color {
            for &v in color {
                values.push(noisy_channel(v, &noise, &mut rng));
            }
        }
        let image = ImageGrid::new(size, size, 3, values)?;
        let seg = spec.segment(&image)?;
        let targets = majority_targets(&seg, &pixel_class, classes);
        let present = (0..classes).filter(|&j| targets.column(j).iter().any(|&v| v == 1.0)).count();
        if spec.shape_count == 0 || present >= 2 {
            return LabeledExample::new(image, seg, targets, spec.task);
        }
    }
    Err(Error::InvalidArgument(format!(
        "could not place two classes in {MAX_ATTEMPTS} attempts (seed {})",
        spec.seed
    )))
}

/// Normalize into `[0, 1]`; a constant field maps to 0.5.
fn normalize(values: &mut [f64]) {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1e-12 {
        values.iter_mut().for_each(|v| *v = 0.5);
    } else {
        values.iter_mut().for_each(|v| *v = (*v - lo) / (hi - lo));
    }
}

/// Per-pixel ground-truth depth: planar ramp plus Gaussian bumps, normalized to `[0, 1]`.
pub fn depth_field(spec: &SyntheticSceneSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let size = spec.size as f64;
    let a = rng.random_range(-1.0..1.0) * spec.ramp_strength;
    let b = rng.random_range(-1.0..1.0) * spec.ramp_strength;
    let bumps: Vec<(f64, f64, f64, f64)> = (0..spec.shape_count)
        .map(|_| {
            let amp = rng.random_range(0.5..1.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let r = rng.random_range(0.0..size);
            let c = rng.random_range(0.0..size);
            let sigma = rng.random_range(size / 10.0..size / 4.0);
            (amp, r, c, sigma)
        })
        .collect();
    let mut depth = Vec::with_capacity(spec.size * spec.size);
    for r in 0..spec.size {
        for c in 0..spec.size {
            let (rf, cf) = (r as f64, c as f64);
            let mut d = a * rf / size + b * cf / size;
            for &(amp, br, bc, s) in &bumps {
                d += amp * (-((rf - br).powi(2) + (cf - bc).powi(2)) / (2.0 * s * s)).exp();
            }
            depth.push(d);
        }
    }
    normalize(&mut depth);
    depth
}

/// Shaded rendering of a smooth depth field; node targets are mean depths.
pub fn gen_depth_scene(spec: &SyntheticSceneSpec) -> Result<LabeledExample> {
    spec.validate()?;
    if spec.task != Task::Depth {
        return Err(Error::InvalidArgument("depth scene needs the depth task".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let depth = depth_field(spec, &mut rng);
    let gains = [rng.random_range(0.8..1.0), rng.random_range(0.6..0.9), rng.random_range(0.4..0.8)];
    let noise = (spec.noise_level > 0.0).then(|| Normal::new(0.0, spec.noise_level).expect("valid sigma"));
    let mut values = Vec::with_capacity(depth.len() * 3);
    for &d in &depth {
        for g in gains {
            values.push(noisy_channel(0.1 + 0.8 * g * (1.0 - d), &noise, &mut rng));
        }
    }
    let image = ImageGrid::new(spec.size, spec.size, 3, values)?;
    let seg = spec.segment(&image)?;
    let n = seg.node_count();
    let mut sums = vec![0.0; n];
    for (&node, &d) in seg.labels().iter().zip(&depth) {
        sums[node] += d;
    }
    let counts = seg.pixel_counts();
    let targets = Array2::from_shape_fn((n, 1), |(p, _)| sums[p] / counts[p] as f64);
    LabeledExample::new(image, seg, targets, Task::Depth)
}

/// Generate the scene for `spec.task`.
pub fn gen_scene(spec: &SyntheticSceneSpec) -> Result<LabeledExample> {
    match spec.task {
        Task::Segmentation { .. } => gen_segmentation_scene(spec),
        Task::Depth => gen_depth_scene(spec),
    }
}

/// `count` scenes with seeds `spec.seed + i`.
pub fn gen_scenes(spec: &SyntheticSceneSpec, count: usize) -> Result<Vec<LabeledExample>> {
    (0..count).map(|i| gen_scene(&spec.with_seed(spec.seed.wrapping_add(i as u64)))).collect()
}
