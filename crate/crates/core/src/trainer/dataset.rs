//! Dataset manifests: image, tree and optional label-map paths relative to
//! the manifest file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{read_json, write_json, Error, Result};
use crate::labeler::{read_ppm, write_ppm, Image, LabelMap};
use crate::synthdata::{generate, Scene, SceneSpec};
use crate::treeconv::{SemanticTree, Vocabulary};

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: Image,
    pub tree: SemanticTree,
    /// Pixel-level annotation; present only for strongly labeled samples.
    pub strong_labels: Option<LabelMap>,
}

impl Sample {
    pub fn weak(image: Image, tree: SemanticTree) -> Self {
        Sample {
            image,
            tree,
            strong_labels: None,
        }
    }
}

impl From<Scene> for Sample {
    fn from(s: Scene) -> Self {
        Sample::weak(s.image, s.tree)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub tree: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub vocabulary: Vocabulary,
    pub samples: Vec<ManifestEntry>,
}

/// A loaded dataset. `labels` holds every label map the manifest lists;
/// whether they act as strong supervision is up to the trainer.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub vocabulary: Vocabulary,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let manifest: Manifest = read_json(manifest_path)?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let vocab = manifest.vocabulary;
        let mut samples = Vec::with_capacity(manifest.samples.len());
        for entry in &manifest.samples {
            let image = read_ppm(&base.join(&entry.image))?;
            let tree_path = base.join(&entry.tree);
            let value: serde_json::Value = read_json(&tree_path)?;
            let tree = SemanticTree::from_json(&value, &vocab)
                .map_err(|e| Error::Data(format!("{}: {e}", tree_path.display())))?;
            let strong_labels = match &entry.labels {
                Some(p) => {
                    let lm: LabelMap = read_json(&base.join(p))?;
                    if lm.height != image.height() || lm.width != image.width() {
                        return Err(Error::Data(format!("{}: label map size differs from image", p.display())));
                    }
                    lm.validate(vocab.categories.len())?;
                    Some(lm)
                }
                None => None,
            };
            samples.push(Sample {
                image,
                tree,
                strong_labels,
            });
        }
        Ok(Dataset {
            vocabulary: vocab,
            samples,
        })
    }

    pub fn strong_count(&self) -> usize {
        self.samples.iter().filter(|s| s.strong_labels.is_some()).count()
    }
}

/// Write `count` synthetic scenes starting at `first` into `dir` with one
/// `sample_NNNN.{ppm,labels.json,tree.json}` triple each, plus
/// `manifest.json`. Returns the manifest path.
pub fn write_synthetic(spec: &SceneSpec, first: u64, count: usize, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let vocab = spec.vocabulary();
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let scene = generate(spec, first + i as u64)?;
        let stem = format!("sample_{i:04}");
        let entry = ManifestEntry {
            image: format!("{stem}.ppm").into(),
            tree: format!("{stem}.tree.json").into(),
            labels: Some(format!("{stem}.labels.json").into()),
        };
        write_ppm(&dir.join(&entry.image), &scene.image)?;
        write_json(&dir.join(&entry.tree), &scene.tree.to_json(&vocab)?)?;
        write_json(&dir.join(entry.labels.as_ref().unwrap()), &scene.labels)?;
        entries.push(entry);
    }
    let path = dir.join("manifest.json");
    write_json(
        &path,
        &Manifest {
            vocabulary: vocab,
            samples: entries,
        },
    )?;
    Ok(path)
}
