//! On-disk formats: raw grids, PNM images, model checkpoints and dataset manifests.

pub mod checkpoint;
pub mod dump;
pub mod grid;
pub mod manifest;
pub mod pnm;

pub use checkpoint::{load_model, read_model, save_model, write_model};
pub use grid::F32Grid;
pub use manifest::{load_dataset, write_dataset, DatasetManifest, ManifestEntry};
