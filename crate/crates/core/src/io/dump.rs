//! Debug dump of one inference as `R`, `A0`, `Z` and `Yhat` grids.

use std::fs;
use std::path::Path;

use ndarray::ArrayView2;

use crate::crf::CrfOutput;
use crate::error::Result;

use super::grid::F32Grid;

pub fn dump_inference(dir: &Path, r: ArrayView2<'_, f64>, out: &CrfOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    F32Grid::from_matrix(r)?.write(&dir.join("R.f32grid"))?;
    F32Grid::from_matrix(out.system.a0().view())?.write(&dir.join("A0.f32grid"))?;
    F32Grid::from_matrix(out.z.view())?.write(&dir.join("Z.f32grid"))?;
    F32Grid::from_matrix(out.yhat.view())?.write(&dir.join("Yhat.f32grid"))?;
    Ok(())
}
