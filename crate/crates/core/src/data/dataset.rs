use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::data::image::{self, decode_image, is_supported, probe_image};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A geometric augmentation with its drawn parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AugmentOp {
    Rotate { degrees: f64 },
    Flip,
    Shear { factor: f64 },
}

impl AugmentOp {
    pub fn tag(&self) -> &'static str {
        match self {
            AugmentOp::Rotate { .. } => "rotate",
            AugmentOp::Flip => "flip",
            AugmentOp::Shear { .. } => "shear",
        }
    }

    pub fn apply(&self, img: &Tensor) -> Result<Tensor> {
        match *self {
            AugmentOp::Rotate { degrees } => image::rotate(img, degrees),
            AugmentOp::Flip => image::hflip(img),
            AugmentOp::Shear { factor } => image::shear(img, factor),
        }
    }
}

#[derive(Debug, Clone)]
pub enum ImageSource {
    File(PathBuf),
    Memory(Arc<Tensor>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Origin {
    Original,
    Augmented(AugmentOp),
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Original => f.write_str("original"),
            Origin::Augmented(op) => write!(f, "augmented({})", op.tag()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Item {
    pub source: ImageSource,
    /// File stem (or caller-chosen name for in-memory images).
    pub name: String,
    pub label: usize,
    pub origin: Origin,
}

impl Item {
    pub fn in_memory(name: impl Into<String>, image: Tensor, label: usize) -> Self {
        Self {
            source: ImageSource::Memory(Arc::new(image)),
            name: name.into(),
            label,
            origin: Origin::Original,
        }
    }

    /// Decoded image in `[0, 1]`, with the item's augmentation applied.
    pub fn load(&self) -> Result<Tensor> {
        let base = match &self.source {
            ImageSource::File(path) => decode_image(path)?,
            ImageSource::Memory(t) => (**t).clone(),
        };
        match self.origin {
            Origin::Original => Ok(base),
            Origin::Augmented(op) => op.apply(&base),
        }
    }
}

/// Ordered `(image, class)` collection with its class table.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub items: Vec<Item>,
    pub class_names: Vec<String>,
    pub root: Option<PathBuf>,
}

impl LabeledDataset {
    pub fn new(items: Vec<Item>, class_names: Vec<String>) -> Result<Self> {
        if let Some(item) = items.iter().find(|i| i.label >= class_names.len()) {
            return Err(Error::Data(format!(
                "item {:?} has label {} but only {} classes exist",
                item.name,
                item.label,
                class_names.len()
            )));
        }
        Ok(Self {
            items,
            class_names,
            root: None,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for item in &self.items {
            counts[item.label] += 1;
        }
        counts
    }

    pub fn labels(&self) -> Vec<usize> {
        self.items.iter().map(|i| i.label).collect()
    }

    pub(crate) fn with_items(&self, items: Vec<Item>) -> Self {
        Self {
            items,
            class_names: self.class_names.clone(),
            root: self.root.clone(),
        }
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

/// Loads `<root>/<class>/<file>`: classes are the sorted subdirectory names,
/// items are ordered by class then file name. Files are probed, not decoded.
pub fn load_dataset(root: impl AsRef<Path>) -> Result<LabeledDataset> {
    let root = root.as_ref();
    let class_dirs: Vec<PathBuf> = sorted_entries(root)?
        .into_iter()
        .filter(|p| p.is_dir())
        .collect();
    if class_dirs.is_empty() {
        return Err(Error::Data(format!(
            "{} has no class directories",
            root.display()
        )));
    }
    let mut class_names = Vec::new();
    let mut items = Vec::new();
    for (label, dir) in class_dirs.iter().enumerate() {
        let class = dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::Data(format!("class directory {} is not UTF-8", dir.display())))?
            .to_string();
        let files: Vec<PathBuf> = sorted_entries(dir)?
            .into_iter()
            .filter(|p| p.is_file() && is_supported(p))
            .collect();
        if files.is_empty() {
            return Err(Error::Data(format!("class {class:?} has no images")));
        }
        for path in files {
            probe_image(&path)?;
            let name = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            items.push(Item {
                source: ImageSource::File(path),
                name,
                label,
                origin: Origin::Original,
            });
        }
        class_names.push(class);
    }
    Ok(LabeledDataset {
        items,
        class_names,
        root: Some(root.to_path_buf()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::image::save_png;

    fn write_tree(root: &Path, classes: &[(&str, usize)]) {
        for (class, n) in classes {
            let dir = root.join(class);
            fs::create_dir_all(&dir).unwrap();
            for i in 0..*n {
                let img = Tensor::full([3, 4, 4], i as f32 / 10.0).unwrap();
                save_png(&img, &dir.join(format!("img{i}.png"))).unwrap();
            }
        }
    }

    #[test]
    fn loads_sorted_tree() {
        let dir = tempfile::tempdir().unwrap();
        write_tree(dir.path(), &[("zebra", 3), ("apple", 3)]);
        fs::write(dir.path().join("apple/notes.txt"), "ignored").unwrap();
        let ds = load_dataset(dir.path()).unwrap();
        assert_eq!(ds.len(), 6);
        assert_eq!(ds.class_names, vec!["apple", "zebra"]);
        assert_eq!(ds.labels(), vec![0, 0, 0, 1, 1, 1]);
        assert_eq!(ds.items[1].name, "img1");

        let again = load_dataset(dir.path()).unwrap();
        let names = |d: &LabeledDataset| {
            d.items
                .iter()
                .map(|i| (i.label, i.name.clone()))
                .collect::<Vec<_>>()
        };
        assert_eq!(names(&ds), names(&again));
    }

    #[test]
    fn empty_class_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        write_tree(dir.path(), &[("a", 2)]);
        fs::create_dir(dir.path().join("empty")).unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(err.to_string().contains("empty"), "{err}");
    }

    #[test]
    fn undecodable_file_is_named() {
        let dir = tempfile::tempdir().unwrap();
        write_tree(dir.path(), &[("a", 1)]);
        fs::write(dir.path().join("a/broken.png"), b"not a png").unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(err.to_string().contains("broken.png"), "{err}");
    }

    #[test]
    fn loads_ltt1_items() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("c")).unwrap();
        let img = Tensor::from_fn([5, 6], |i| i as f32 / 30.0).unwrap();
        crate::tensor::write_ltt1_file(&img, dir.path().join("c/t.ltt1")).unwrap();
        let ds = load_dataset(dir.path()).unwrap();
        assert_eq!(ds.items[0].load().unwrap().shape(), &[1, 5, 6]);
    }
}
