//! Datasets of images, ground-truth masks and boxes described by a JSON manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::image::{BBox, ImageTensor, Mask};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    /// Paths relative to the manifest's directory.
    pub image: PathBuf,
    pub mask: PathBuf,
    pub bbox: BBox,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub items: Vec<ManifestEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetItem {
    pub name: String,
    pub image: ImageTensor,
    pub gt: Mask,
    pub bbox: BBox,
}

impl Manifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// Loads every item of the manifest at `path`.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<DatasetItem>> {
    let path = path.as_ref();
    let manifest = Manifest::read(path)?;
    let root = path.parent().unwrap_or(Path::new("."));
    manifest
        .items
        .iter()
        .map(|e| {
            let image = ImageTensor::open(root.join(&e.image))?;
            let gt = Mask::open(root.join(&e.mask))?;
            if (gt.height(), gt.width()) != (image.height(), image.width()) {
                return Err(Error::ShapeMismatch(format!("mask of {} does not match its image", e.name)));
            }
            e.bbox.check_within(image.height(), image.width())?;
            Ok(DatasetItem {
                name: e.name.clone(),
                image,
                gt,
                bbox: e.bbox,
            })
        })
        .collect()
}
