//! The `.f32grid` container: little-endian `u32` height, width, channels, then
//! row-major `f32` values with channels fastest.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::graph::{ImageGrid, SuperpixelSegmentation};

const HEADER_BYTES: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct F32Grid {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub values: Vec<f32>,
}

impl F32Grid {
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<f32>) -> Result<Self> {
        if height.checked_mul(width).and_then(|v| v.checked_mul(channels)) != Some(values.len()) {
            return Err(Error::Shape(format!(
                "{height}x{width}x{channels} grid given {} values",
                values.len()
            )));
        }
        for d in [height, width, channels] {
            if u32::try_from(d).is_err() {
                return Err(Error::InvalidArgument(format!("grid dimension {d} exceeds u32")));
            }
        }
        Ok(Self { height, width, channels, values })
    }

    pub fn from_f64(height: usize, width: usize, channels: usize, values: &[f64]) -> Result<Self> {
        Self::new(height, width, channels, values.iter().map(|&v| v as f32).collect())
    }

    /// A matrix as an `rows x cols x 1` grid.
    pub fn from_matrix(m: ArrayView2<'_, f64>) -> Result<Self> {
        Self::new(m.nrows(), m.ncols(), 1, m.iter().map(|&v| v as f32).collect())
    }

    /// Node targets (`n x k`) as an `n x 1 x k` grid.
    pub fn from_targets(t: ArrayView2<'_, f64>) -> Result<Self> {
        Self::new(t.nrows(), 1, t.ncols(), t.iter().map(|&v| v as f32).collect())
    }

    pub fn from_image(image: &ImageGrid) -> Result<Self> {
        Self::from_f64(image.height(), image.width(), image.channels(), image.values())
    }

    pub fn from_segmentation(seg: &SuperpixelSegmentation) -> Result<Self> {
        if seg.node_count() > 1 << 24 {
            return Err(Error::InvalidArgument("node indices above 2^24 are not exact in f32".into()));
        }
        Self::new(seg.height(), seg.width(), 1, seg.labels().iter().map(|&l| l as f32).collect())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn to_image(&self) -> Result<ImageGrid> {
        ImageGrid::new(self.height, self.width, self.channels, self.to_f64())
    }

    pub fn to_segmentation(&self) -> Result<SuperpixelSegmentation> {
        if self.channels != 1 {
            return Err(Error::Format(format!("segmentation grid has {} channels", self.channels)));
        }
        let mut labels = Vec::with_capacity(self.values.len());
        for &v in &self.values {
            if !(v >= 0.0 && v.fract() == 0.0) {
                return Err(Error::Format(format!("node index {v} is not a nonnegative integer")));
            }
            labels.push(v as usize);
        }
        SuperpixelSegmentation::new(self.height, self.width, labels)
    }

    /// Read an `n x 1 x k` grid back as an `n x k` matrix.
    pub fn to_targets(&self) -> Result<Array2<f64>> {
        if self.width != 1 {
            return Err(Error::Format(format!("target grid has width {}, expected 1", self.width)));
        }
        Ok(Array2::from_shape_vec((self.height, self.channels), self.to_f64()).expect("length checked on construction"))
    }

    pub fn to_matrix(&self) -> Result<Array2<f64>> {
        if self.channels != 1 {
            return Err(Error::Format(format!("matrix grid has {} channels", self.channels)));
        }
        Ok(Array2::from_shape_vec((self.height, self.width), self.to_f64()).expect("length checked on construction"))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_BYTES + 4 * self.values.len());
        for d in [self.height, self.width, self.channels] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_BYTES {
            return Err(Error::Format("f32grid shorter than its header".into()));
        }
        let dim = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap()) as usize;
        let (h, w, c) = (dim(0), dim(1), dim(2));
        let body = &bytes[HEADER_BYTES..];
        let count = h.checked_mul(w).and_then(|v| v.checked_mul(c));
        if count.and_then(|v| v.checked_mul(4)) != Some(body.len()) {
            return Err(Error::Format(format!("f32grid {h}x{w}x{c} has {} payload bytes", body.len())));
        }
        let values = body.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        Self::new(h, w, c, values)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Load an image from `.f32grid`, `.pgm`, `.ppm` or `.pnm`.
pub fn load_image(path: &Path) -> Result<ImageGrid> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm" | "ppm" | "pnm") => super::pnm::read_pnm(path),
        _ => F32Grid::read(path)?.to_image(),
    }
}
