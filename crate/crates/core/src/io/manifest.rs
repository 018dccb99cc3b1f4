//! Dataset manifests: a `task ...` line, then one `split image seg targets`
//! line per example. Paths are relative to the manifest's directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::data::{Dataset, LabeledExample};
use crate::error::{Error, Result};
use crate::model::Task;

use super::grid::{load_image, F32Grid};

pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub split: Split,
    pub image: PathBuf,
    pub segmentation: PathBuf,
    pub targets: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub task: Task,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn parse(text: &str) -> Result<Self> {
        let mut task = None;
        let mut entries = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |what: &str| Error::Format(format!("manifest line {}: {what}", no + 1));
            if let Some(rest) = line.strip_prefix("task ") {
                if task.is_some() {
                    return Err(bad("second task line"));
                }
                task = Some(rest.trim().parse::<Task>()?);
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [split, image, seg, targets] = fields[..] else {
                return Err(bad("expected `split image seg targets`"));
            };
            let split = Split::parse(split).ok_or_else(|| bad("split must be train, val or test"))?;
            entries.push(ManifestEntry { split, image: image.into(), segmentation: seg.into(), targets: targets.into() });
        }
        let task = task.ok_or_else(|| Error::Format("manifest has no task line".into()))?;
        Ok(Self { task, entries })
    }

    pub fn render(&self) -> String {
        let mut out = format!("task {}\n", self.task);
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{} {} {} {}",
                e.split.name(),
                e.image.display(),
                e.segmentation.display(),
                e.targets.display()
            );
        }
        out
    }
}

/// `path` may name the manifest file or the directory holding it.
pub fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file = manifest_path(path);
    let manifest = DatasetManifest::parse(&fs::read_to_string(&file)?)?;
    let root = file.parent().unwrap_or(Path::new("."));
    let mut data = Dataset { task: manifest.task, train: vec![], val: vec![], test: vec![] };
    for e in &manifest.entries {
        let image = load_image(&root.join(&e.image))?;
        let seg = F32Grid::read(&root.join(&e.segmentation))?.to_segmentation()?;
        let targets = F32Grid::read(&root.join(&e.targets))?.to_targets()?;
        let ex = LabeledExample::new(image, seg, targets, manifest.task)?;
        match e.split {
            Split::Train => data.train.push(ex),
            Split::Val => data.val.push(ex),
            Split::Test => data.test.push(ex),
        }
    }
    Ok(data)
}

/// Write every example as an `.f32grid` triplet plus the manifest into `dir`.
pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<DatasetManifest> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    for (split, examples) in [(Split::Train, &data.train), (Split::Val, &data.val), (Split::Test, &data.test)] {
        for (i, ex) in examples.iter().enumerate() {
            let stem = format!("{}_{i:04}", split.name());
            let entry = ManifestEntry {
                split,
                image: format!("{stem}.img.f32grid").into(),
                segmentation: format!("{stem}.seg.f32grid").into(),
                targets: format!("{stem}.tgt.f32grid").into(),
            };
            F32Grid::from_image(&ex.image)?.write(&dir.join(&entry.image))?;
            F32Grid::from_segmentation(&ex.segmentation)?.write(&dir.join(&entry.segmentation))?;
            F32Grid::from_targets(ex.targets.view())?.write(&dir.join(&entry.targets))?;
            entries.push(entry);
        }
    }
    let manifest = DatasetManifest { task: data.task, entries };
    fs::write(dir.join(MANIFEST_FILE), manifest.render())?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_render_roundtrip() {
        let text = "# comment\ntask segmentation 4\ntrain a.f32grid b.f32grid c.f32grid\ntest d e f # trailing\n";
        let m = DatasetManifest::parse(text).unwrap();
        assert_eq!(m.task, Task::Segmentation { classes: 4 });
        assert_eq!(m.entries.len(), 2);
        assert_eq!(m.entries[1].split, Split::Test);
        assert_eq!(DatasetManifest::parse(&m.render()).unwrap(), m);
    }

    #[test]
    fn malformed_manifests_rejected() {
        assert!(DatasetManifest::parse("train a b c\n").is_err());
        assert!(DatasetManifest::parse("task depth\ntrain a b\n").is_err());
        assert!(DatasetManifest::parse("task depth\nholdout a b c\n").is_err());
        assert!(DatasetManifest::parse("task depth\ntask depth\n").is_err());
    }
}
