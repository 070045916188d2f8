//! Dataset manifests.
//!
//! A manifest is a TOML document (schema version 1):
//!
//! ```toml
//! format_version = 1
//! task = "single_label"            # or "multi_label"
//! class_names = ["a", "b", "c"]
//! dim = 16
//! encoder = "synthetic-gaussian"    # optional provenance
//! augmentation = "jitter-0.5"       # optional provenance
//! class_embeddings = "classes.emb"  # optional, C x d single-view file
//! removal_plan = "plan.csv"         # optional, set on cleaned datasets
//! source_manifest = "../manifest.toml"
//!
//! [train]
//! embeddings = "train.emb"
//! labels = "train.labels"           # the labels detectors see (possibly noisy)
//! clean_labels = "train.clean.labels"  # optional ground truth
//! noise_mask = "train.mask"         # optional, 0/1 per line
//! n = 5000
//! views = 1
//!
//! [validation]                      # optional, same keys
//! [test]                            # optional, same keys
//!
//! [noise]                           # optional NoiseSpec of the injected noise
//! kind = "symmetric"
//! rate = 0.3
//! seed = 7
//! ```
//!
//! Relative paths resolve against the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{embeddings, labels, EmbeddingTensor, Labels};
use crate::error::{Error, Result};
use crate::noise::NoiseSpec;
use crate::numerics::Matrix;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    SingleLabel,
    MultiLabel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub embeddings: PathBuf,
    pub labels: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clean_labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_mask: Option<PathBuf>,
    pub n: usize,
    pub views: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub task: TaskKind,
    pub class_names: Vec<String>,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoder: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augmentation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_embeddings: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub removal_plan: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_manifest: Option<PathBuf>,
    pub train: SplitEntry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<SplitEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<SplitEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
}

impl DatasetManifest {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("manifest serialization: {e}")))
    }

    pub fn from_toml(text: &str, path: Option<&Path>) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format {
            path: path.map(Path::to_path_buf),
            offset: e.span().map(|s| s.start as u64),
            line: None,
            message: e.message().to_string(),
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_toml()?)?;
        Ok(())
    }
}

/// One loaded split.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitData {
    pub embeddings: EmbeddingTensor,
    pub labels: Labels,
    pub clean_labels: Option<Labels>,
    /// `true` where the given label differs from the clean label
    /// (single-label only).
    pub noise_mask: Option<Vec<bool>>,
}

/// A manifest with every referenced file loaded and shape-checked.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    pub manifest: DatasetManifest,
    pub base_dir: PathBuf,
    pub train: SplitData,
    pub validation: Option<SplitData>,
    pub test: Option<SplitData>,
    pub class_embeddings: Option<Matrix>,
}

impl DatasetBundle {
    pub fn num_classes(&self) -> usize {
        self.manifest.num_classes()
    }

    pub fn dim(&self) -> usize {
        self.manifest.dim
    }

    pub fn task(&self) -> TaskKind {
        self.manifest.task
    }

    /// Validation split if present, else test.
    pub fn eval_split(&self) -> Option<&SplitData> {
        self.validation.as_ref().or(self.test.as_ref())
    }
}

/// Parses and eagerly validates a manifest. Every problem found is listed in
/// the returned [`Error::Validation`], not just the first.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetBundle> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let manifest = DatasetManifest::from_toml(&text, Some(path))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut problems = Vec::new();

    if manifest.format_version != MANIFEST_VERSION {
        problems.push(format!(
            "unsupported manifest format_version {} (expected {MANIFEST_VERSION})",
            manifest.format_version
        ));
    }
    let c = manifest.num_classes();
    if c < 2 {
        problems.push(format!("need at least 2 class names, found {c}"));
    }
    if manifest.dim == 0 {
        problems.push("dim must be at least 1".into());
    }

    let train = load_split("train", &manifest.train, &manifest, &base_dir, &mut problems);
    let validation = manifest
        .validation
        .as_ref()
        .and_then(|s| load_split("validation", s, &manifest, &base_dir, &mut problems));
    let test = manifest
        .test
        .as_ref()
        .and_then(|s| load_split("test", s, &manifest, &base_dir, &mut problems));

    let class_embeddings = manifest.class_embeddings.as_ref().and_then(|p| {
        match embeddings::read_matrix(base_dir.join(p)) {
            Ok(m) => {
                if m.shape() != (c, manifest.dim) {
                    problems.push(format!(
                        "class_embeddings: shape {:?}, expected ({c}, {})",
                        m.shape(),
                        manifest.dim
                    ));
                    None
                } else {
                    Some(m)
                }
            }
            Err(e) => {
                problems.push(format!("class_embeddings: {e}"));
                None
            }
        }
    });

    if let Some(noise) = &manifest.noise {
        if let Err(e) = noise.validate(c) {
            problems.push(format!("noise: {e}"));
        }
    }

    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }
    Ok(DatasetBundle {
        manifest,
        base_dir,
        train: train.expect("train split validated"),
        validation,
        test,
        class_embeddings,
    })
}

fn load_split(
    name: &str,
    entry: &SplitEntry,
    manifest: &DatasetManifest,
    base: &Path,
    problems: &mut Vec<String>,
) -> Option<SplitData> {
    let before = problems.len();
    let c = manifest.num_classes();
    let embeddings = match embeddings::read_embeddings(base.join(&entry.embeddings)) {
        Ok(t) => {
            if t.n() != entry.n {
                problems.push(format!(
                    "{name}: manifest declares n={} but {} holds n={}",
                    entry.n,
                    entry.embeddings.display(),
                    t.n()
                ));
            }
            if t.dim() != manifest.dim {
                problems.push(format!(
                    "{name}: manifest declares dim={} but {} holds d={}",
                    manifest.dim,
                    entry.embeddings.display(),
                    t.dim()
                ));
            }
            if t.num_views() != entry.views {
                problems.push(format!(
                    "{name}: manifest declares views={} but {} holds V={}",
                    entry.views,
                    entry.embeddings.display(),
                    t.num_views()
                ));
            }
            Some(t)
        }
        Err(e) => {
            problems.push(format!("{name}: embeddings: {e}"));
            None
        }
    };

    let read = |p: &Path, what: &str, problems: &mut Vec<String>| -> Option<Labels> {
        let full = base.join(p);
        let res = match manifest.task {
            TaskKind::SingleLabel => labels::read_labels(&full, c).map(Labels::Single),
            TaskKind::MultiLabel => labels::read_multilabels(&full, c).map(Labels::Multi),
        };
        match res {
            Ok(l) => {
                if l.len() != entry.n {
                    problems.push(format!(
                        "{name}: manifest declares n={} but {what} {} holds {} rows",
                        entry.n,
                        p.display(),
                        l.len()
                    ));
                }
                Some(l)
            }
            Err(e) => {
                problems.push(format!("{name}: {what}: {e}"));
                None
            }
        }
    };
    let given = read(&entry.labels, "labels", problems);
    let clean = entry.clean_labels.as_ref().and_then(|p| read(p, "clean_labels", problems));

    let mut noise_mask = match (&given, &clean) {
        (Some(Labels::Single(g)), Some(Labels::Single(cl))) if g.len() == cl.len() => Some(
            g.as_slice()
                .iter()
                .zip(cl.as_slice())
                .map(|(a, b)| a != b)
                .collect::<Vec<bool>>(),
        ),
        _ => None,
    };
    if let Some(p) = &entry.noise_mask {
        match labels::read_labels(base.join(p), 2) {
            Ok(m) => {
                let stored: Vec<bool> = m.as_slice().iter().map(|&v| v == 1).collect();
                match &noise_mask {
                    Some(derived) if *derived != stored => problems.push(format!(
                        "{name}: noise_mask {} disagrees with labels vs clean_labels",
                        p.display()
                    )),
                    Some(_) => {}
                    None if stored.len() != entry.n => problems.push(format!(
                        "{name}: manifest declares n={} but noise_mask holds {} rows",
                        entry.n,
                        stored.len()
                    )),
                    None => noise_mask = Some(stored),
                }
            }
            Err(e) => problems.push(format!("{name}: noise_mask: {e}")),
        }
    }

    if problems.len() > before {
        return None;
    }
    Some(SplitData {
        embeddings: embeddings?,
        labels: given?,
        clean_labels: clean,
        noise_mask,
    })
}

/// Writes `<stem>.emb`, `<stem>.labels` and, when given, `<stem>.clean.labels`
/// into `dir` and returns the matching manifest entry (paths relative to `dir`).
pub fn write_split(
    dir: impl AsRef<Path>,
    stem: &str,
    x: &EmbeddingTensor,
    given: &Labels,
    clean: Option<&Labels>,
) -> Result<SplitEntry> {
    let dir = dir.as_ref();
    let write = |name: String, l: &Labels| -> Result<PathBuf> {
        match l {
            Labels::Single(s) => labels::write_labels(dir.join(&name), s)?,
            Labels::Multi(m) => labels::write_multilabels(dir.join(&name), m)?,
        }
        Ok(PathBuf::from(name))
    };
    let emb = PathBuf::from(format!("{stem}.emb"));
    embeddings::write_embeddings(dir.join(&emb), x)?;
    Ok(SplitEntry {
        embeddings: emb,
        labels: write(format!("{stem}.labels"), given)?,
        clean_labels: clean.map(|c| write(format!("{stem}.clean.labels"), c)).transpose()?,
        noise_mask: None,
        n: x.n(),
        views: x.num_views(),
    })
}

/// Writes a 0/1-per-line noise mask.
pub fn write_mask(path: impl AsRef<Path>, mask: &[bool]) -> Result<()> {
    let mut out = String::with_capacity(mask.len() * 2);
    for &m in mask {
        out.push(if m { '1' } else { '0' });
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}
