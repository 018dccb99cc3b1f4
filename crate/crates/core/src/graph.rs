//! Superpixel node graphs: segmentation, per-pixel features, pooling and centroids.

use ndarray::{Array2, ArrayView2};

use crate::error::{shape_err, Error, Result};

pub const MIN_IMAGE_SIDE: usize = 8;

/// A dense image with intensities in `[0, 1]`, stored row-major with channels last.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<f64>,
}

impl ImageGrid {
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if height < MIN_IMAGE_SIDE || width < MIN_IMAGE_SIDE {
            return Err(Error::InvalidArgument(format!(
                "image must be at least {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}, got {height}x{width}"
            )));
        }
        if !(1..=3).contains(&channels) {
            return Err(Error::InvalidArgument(format!("channels must be 1..=3, got {channels}")));
        }
        if values.len() != height * width * channels {
            return shape_err(format!(
                "expected {} values for {height}x{width}x{channels}, got {}",
                height * width * channels,
                values.len()
            ));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("intensity {v} outside [0, 1]")));
        }
        Ok(Self { height, width, channels, values })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.values[(row * self.width + col) * self.channels + ch]
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.width + col) * self.channels;
        &self.values[start..start + self.channels]
    }
}

/// Per-pixel node assignment. Every node owns at least one pixel and its pixels
/// form a single 4-connected component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuperpixelSegmentation {
    height: usize,
    width: usize,
    n: usize,
    labels: Vec<usize>,
}

impl SuperpixelSegmentation {
    /// Validates coverage and connectivity.
    pub fn new(height: usize, width: usize, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != height * width {
            return shape_err(format!(
                "label map has {} entries for a {height}x{width} image",
                labels.len()
            ));
        }
        let n = labels.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; n];
        labels.iter().for_each(|&l| seen[l] = true);
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(format!("node {missing} has no pixels")));
        }
        let seg = Self { height, width, n, labels };
        let (_, comps) = connected_components(height, width, &seg.labels);
        if comps != n {
            return Err(Error::InvalidArgument(format!(
                "segmentation has {n} nodes but {comps} connected components"
            )));
        }
        Ok(seg)
    }

    pub(crate) fn from_parts_unchecked(height: usize, width: usize, n: usize, labels: Vec<usize>) -> Self {
        Self { height, width, n, labels }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, row: usize, col: usize) -> usize {
        self.labels[row * self.width + col]
    }

    pub fn pixel_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n];
        self.labels.iter().for_each(|&l| counts[l] += 1);
        counts
    }

    /// True when every node's pixels form exactly one 4-connected component.
    pub fn is_connected(&self) -> bool {
        connected_components(self.height, self.width, &self.labels).1 == self.n
    }
}

/// Label 4-connected components of equal-label regions. Returns per-pixel
/// component ids (in raster order of first appearance) and the component count.
pub(crate) fn connected_components(height: usize, width: usize, labels: &[usize]) -> (Vec<usize>, usize) {
    const UNSET: usize = usize::MAX;
    let mut comp = vec![UNSET; labels.len()];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..labels.len() {
        if comp[start] != UNSET {
            continue;
        }
        let label = labels[start];
        comp[start] = count;
        stack.push(start);
        while let Some(idx) = stack.pop() {
            let (r, c) = (idx / width, idx % width);
            let mut visit = |j: usize| {
                if comp[j] == UNSET && labels[j] == label {
                    comp[j] = count;
                    stack.push(j);
                }
            };
            if r > 0 {
                visit(idx - width);
            }
            if r + 1 < height {
                visit(idx + width);
            }
            if c > 0 {
                visit(idx - 1);
            }
            if c + 1 < width {
                visit(idx + 1);
            }
        }
        count += 1;
    }
    (comp, count)
}

/// Pick a `rows x cols` tiling whose block count is as close as possible to
/// `target`, among tilings whose blocks have aspect ratio within `[0.5, 2]`.
fn choose_tiling(height: usize, width: usize, target: usize) -> (usize, usize) {
    let mut best: Option<((usize, f64, usize), (usize, usize))> = None;
    let mut fallback: Option<((usize, f64), (usize, usize))> = None;
    for rows in 1..=height.min(target) {
        let ideal = (target as f64 / rows as f64).round().max(1.0) as usize;
        for cols in [ideal.saturating_sub(1).max(1), ideal, ideal + 1] {
            if cols > width {
                continue;
            }
            let diff = (rows * cols).abs_diff(target);
            let aspect = ((height as f64 / rows as f64) / (width as f64 / cols as f64)).ln().abs();
            let key = (diff, aspect, rows);
            if aspect <= 2f64.ln() + 1e-12 && best.as_ref().is_none_or(|(k, _)| key < *k) {
                best = Some((key, (rows, cols)));
            }
            let fkey = (diff, aspect);
            if fallback.as_ref().is_none_or(|(k, _)| fkey < *k) {
                fallback = Some((fkey, (rows, cols)));
            }
        }
    }
    match (best, fallback) {
        (Some((key, dims)), _) if key.0 * 5 <= target => dims,
        (_, Some((_, dims))) => dims,
        _ => (1, 1),
    }
}

/// Deterministic rectangular tiling into roughly `target_count` nodes.
pub fn grid_segment(image: &ImageGrid, target_count: usize) -> Result<SuperpixelSegmentation> {
    let (h, w) = (image.height(), image.width());
    if target_count == 0 || target_count > h * w {
        return Err(Error::InvalidArgument(format!(
            "target_count must be in 1..={}, got {target_count}",
            h * w
        )));
    }
    let (rows, cols) = choose_tiling(h, w, target_count);
    let mut labels = Vec::with_capacity(h * w);
    for r in 0..h {
        let br = r * rows / h;
        for c in 0..w {
            labels.push(br * cols + c * cols / w);
        }
    }
    Ok(SuperpixelSegmentation::from_parts_unchecked(h, w, rows * cols, labels))
}

/// Number of per-pixel features for an image with `channels` channels.
pub fn feature_dim(channels: usize) -> usize {
    2 * channels + 4
}

/// Per-pixel features, one row per pixel in raster order:
/// `[intensities; 3x3 box-smoothed intensities; |d/dx|; |d/dy|; row; col]`.
///
/// Gradients are central differences of the channel intensities with replicated
/// borders, combined as the root-mean-square over channels. Coordinates are
/// normalized by `(height - 1, width - 1)`.
pub fn compute_pixel_features(image: &ImageGrid) -> Array2<f64> {
    let (h, w, ch) = (image.height(), image.width(), image.channels());
    let f = feature_dim(ch);
    let mut out = Array2::zeros((h * w, f));
    let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;
    for r in 0..h {
        for c in 0..w {
            let mut row = out.row_mut(r * w + c);
            let mut gx2 = 0.0;
            let mut gy2 = 0.0;
            for k in 0..ch {
                row[k] = image.get(r, c, k);
                let mut acc = 0.0;
                for dr in -1isize..=1 {
                    for dc in -1isize..=1 {
                        acc += image.get(clamp(r as isize + dr, h), clamp(c as isize + dc, w), k);
                    }
                }
                row[ch + k] = acc / 9.0;
                let gx = (image.get(r, clamp(c as isize + 1, w), k)
                    - image.get(r, clamp(c as isize - 1, w), k))
                    / 2.0;
                let gy = (image.get(clamp(r as isize + 1, h), c, k)
                    - image.get(clamp(r as isize - 1, h), c, k))
                    / 2.0;
                gx2 += gx * gx;
                gy2 += gy * gy;
            }
            row[2 * ch] = (gx2 / ch as f64).sqrt();
            row[2 * ch + 1] = (gy2 / ch as f64).sqrt();
            row[2 * ch + 2] = r as f64 / (h - 1) as f64;
            row[2 * ch + 3] = c as f64 / (w - 1) as f64;
        }
    }
    out
}

/// Mean of the pixel features over each node.
pub fn pool_features(pixel_features: ArrayView2<'_, f64>, seg: &SuperpixelSegmentation) -> Result<Array2<f64>> {
    if pixel_features.nrows() != seg.labels().len() {
        return shape_err(format!(
            "{} feature rows for {} pixels",
            pixel_features.nrows(),
            seg.labels().len()
        ));
    }
    let n = seg.node_count();
    let mut pooled = Array2::zeros((n, pixel_features.ncols()));
    let mut counts = vec![0usize; n];
    for (row, &l) in pixel_features.outer_iter().zip(seg.labels()) {
        let mut dst = pooled.row_mut(l);
        dst += &row;
        counts[l] += 1;
    }
    for (mut row, &count) in pooled.outer_iter_mut().zip(&counts) {
        if count == 0 {
            return Err(Error::InvalidArgument("empty superpixel".into()));
        }
        row /= count as f64;
    }
    Ok(pooled)
}

/// Mean `(row, col)` of each node, normalized into `[0, 1]`.
pub fn compute_centroids(seg: &SuperpixelSegmentation, height: usize, width: usize) -> Array2<f64> {
    let n = seg.node_count();
    let mut sums = Array2::<f64>::zeros((n, 2));
    let mut counts = vec![0usize; n];
    for r in 0..height {
        for c in 0..width {
            let l = seg.label(r, c);
            sums[[l, 0]] += r as f64;
            sums[[l, 1]] += c as f64;
            counts[l] += 1;
        }
    }
    let denom = [(height.max(2) - 1) as f64, (width.max(2) - 1) as f64];
    for (p, mut row) in sums.outer_iter_mut().enumerate() {
        let k = counts[p].max(1) as f64;
        row[0] = row[0] / k / denom[0];
        row[1] = row[1] / k / denom[1];
    }
    sums
}

/// The CRF domain: one row per superpixel.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeGraph {
    pub features: Array2<f64>,
    pub centroids: Array2<f64>,
    pub pixel_counts: Vec<usize>,
}

impl NodeGraph {
    pub fn build(image: &ImageGrid, seg: &SuperpixelSegmentation) -> Result<Self> {
        if seg.height() != image.height() || seg.width() != image.width() {
            return shape_err("segmentation and image sizes differ");
        }
        let pixel_features = compute_pixel_features(image);
        Ok(Self {
            features: pool_features(pixel_features.view(), seg)?,
            centroids: compute_centroids(seg, image.height(), image.width()),
            pixel_counts: seg.pixel_counts(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.features.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }
}
