use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::image::save_png;
use crate::data::{AugmentOp, ImageSource, Item, LabeledDataset, Origin};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentKind {
    Rotate,
    Flip,
    Shear,
}

impl AugmentKind {
    pub const ALL: [AugmentKind; 3] = [AugmentKind::Rotate, AugmentKind::Flip, AugmentKind::Shear];
}

impl FromStr for AugmentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rotate" => Ok(AugmentKind::Rotate),
            "flip" | "hflip" => Ok(AugmentKind::Flip),
            "shear" => Ok(AugmentKind::Shear),
            other => Err(Error::InvalidArgument(format!(
                "unknown augmentation {other:?} (expected rotate, flip or shear)"
            ))),
        }
    }
}

/// Parses a comma-separated list such as `rotate,flip,shear`.
pub fn parse_ops(list: &str) -> Result<Vec<AugmentKind>> {
    let mut ops = Vec::new();
    for part in list.split(',').filter(|p| !p.trim().is_empty()) {
        let op: AugmentKind = part.parse()?;
        if !ops.contains(&op) {
            ops.push(op);
        }
    }
    Ok(ops)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub max_rotation_deg: f64,
    pub max_shear: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            max_rotation_deg: 15.0,
            max_shear: 0.15,
        }
    }
}

impl AugmentConfig {
    /// Draws the parameters of one derived image.
    pub fn draw(&self, kind: AugmentKind, rng: &mut Rng) -> AugmentOp {
        match kind {
            AugmentKind::Rotate => AugmentOp::Rotate {
                degrees: rng.uniform_range(-self.max_rotation_deg, self.max_rotation_deg),
            },
            AugmentKind::Flip => AugmentOp::Flip,
            AugmentKind::Shear => AugmentOp::Shear {
                factor: rng.uniform_range(-self.max_shear, self.max_shear),
            },
        }
    }
}

/// Every original followed by one derived item per selected op, in `ops`
/// order. Derived items keep the source label and are tagged with their op.
/// Parameters are drawn sequentially from `rng`, so the result depends only
/// on the dataset order and the rng state.
pub fn augment(
    ds: &LabeledDataset,
    ops: &[AugmentKind],
    config: &AugmentConfig,
    rng: &mut Rng,
) -> Result<LabeledDataset> {
    if ops.is_empty() {
        return Err(Error::InvalidArgument(
            "augment needs at least one op".into(),
        ));
    }
    let mut items = Vec::with_capacity(ds.len() * (ops.len() + 1));
    for item in ds.items.iter().filter(|i| i.origin == Origin::Original) {
        items.push(item.clone());
        for &kind in ops {
            items.push(Item {
                origin: Origin::Augmented(config.draw(kind, rng)),
                ..item.clone()
            });
        }
    }
    Ok(ds.with_items(items))
}

/// File name for an item in an augmented tree: `<stem>.png` or
/// `<stem>__<op>.png`.
pub fn output_name(item: &Item) -> String {
    match item.origin {
        Origin::Original => format!("{}.png", item.name),
        Origin::Augmented(op) => format!("{}__{}.png", item.name, op.tag()),
    }
}

/// Writes `<out>/<class>/<file>` for every item. Originals that are PNG files
/// are copied byte for byte; everything else is rendered to PNG.
pub fn write_augmented(ds: &LabeledDataset, out: &Path) -> Result<()> {
    for class in &ds.class_names {
        let dir = out.join(class);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    ds.items.par_iter().try_for_each(|item| {
        let dir = out.join(&ds.class_names[item.label]);
        match (&item.source, item.origin) {
            (ImageSource::File(src), Origin::Original) => {
                let name = src.file_name().map(|n| n.to_owned()).unwrap_or_default();
                let dest = dir.join(name);
                fs::copy(src, &dest)
                    .map(|_| ())
                    .map_err(|e| Error::io(&dest, e))
            }
            _ => save_png(&item.load()?, &dir.join(output_name(item))),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::image::hflip;
    use crate::tensor::Tensor;

    fn corpus(n: usize) -> LabeledDataset {
        let items = (0..n)
            .map(|i| {
                let img =
                    Tensor::from_fn([3, 6, 5], |j| ((i * 31 + j * 7) % 17) as f32 / 16.0).unwrap();
                Item::in_memory(format!("img{i}"), img, i % 2)
            })
            .collect();
        LabeledDataset::new(items, vec!["a".into(), "b".into()]).unwrap()
    }

    #[test]
    fn all_ops_quadruple_the_corpus() {
        let ds = corpus(14);
        let out = augment(
            &ds,
            &AugmentKind::ALL,
            &AugmentConfig::default(),
            &mut Rng::new(0),
        )
        .unwrap();
        assert_eq!(out.len(), 56);
        for chunk in out.items.chunks(4) {
            assert_eq!(chunk[0].origin, Origin::Original);
            assert!(chunk
                .iter()
                .all(|i| i.label == chunk[0].label && i.name == chunk[0].name));
            let tags: Vec<&str> = chunk[1..]
                .iter()
                .map(|i| match i.origin {
                    Origin::Augmented(op) => op.tag(),
                    Origin::Original => "original",
                })
                .collect();
            assert_eq!(tags, vec!["rotate", "flip", "shear"]);
        }
    }

    #[test]
    fn k_ops_multiply_by_k_plus_one() {
        let ds = corpus(9);
        for ops in [
            vec![AugmentKind::Flip],
            vec![AugmentKind::Rotate, AugmentKind::Shear],
        ] {
            let out = augment(&ds, &ops, &AugmentConfig::default(), &mut Rng::new(1)).unwrap();
            assert_eq!(out.len(), 9 * (ops.len() + 1));
            assert_eq!(out.class_counts().iter().sum::<usize>(), out.len());
        }
        assert!(augment(&ds, &[], &AugmentConfig::default(), &mut Rng::new(1)).is_err());
    }

    #[test]
    fn drawn_parameters_stay_in_range() {
        let cfg = AugmentConfig::default();
        let mut rng = Rng::new(5);
        for _ in 0..1000 {
            match cfg.draw(AugmentKind::Rotate, &mut rng) {
                AugmentOp::Rotate { degrees } => assert!(degrees.abs() <= 15.0),
                other => panic!("{other:?}"),
            }
            match cfg.draw(AugmentKind::Shear, &mut rng) {
                AugmentOp::Shear { factor } => assert!(factor.abs() <= 0.15),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn flip_item_matches_flipped_image() {
        let ds = corpus(1);
        let out = augment(
            &ds,
            &[AugmentKind::Flip],
            &AugmentConfig::default(),
            &mut Rng::new(0),
        )
        .unwrap();
        let original = out.items[0].load().unwrap();
        let flipped = out.items[1].load().unwrap();
        assert_eq!(flipped.data(), hflip(&original).unwrap().data());
        assert_eq!(hflip(&flipped).unwrap().data(), original.data());
    }

    #[test]
    fn parses_op_lists() {
        assert_eq!(
            parse_ops("rotate,flip,shear").unwrap(),
            AugmentKind::ALL.to_vec()
        );
        assert_eq!(parse_ops("flip, flip").unwrap(), vec![AugmentKind::Flip]);
        assert!(parse_ops("blur").is_err());
    }

    #[test]
    fn writes_tree_with_op_suffixes() {
        let dir = tempfile::tempdir().unwrap();
        let ds = corpus(2);
        let out = augment(
            &ds,
            &AugmentKind::ALL,
            &AugmentConfig::default(),
            &mut Rng::new(0),
        )
        .unwrap();
        write_augmented(&out, dir.path()).unwrap();
        let reloaded = crate::data::load_dataset(dir.path()).unwrap();
        assert_eq!(reloaded.len(), 8);
        assert!(dir.path().join("a/img0__rotate.png").exists());
        assert!(dir.path().join("b/img1__shear.png").exists());
        assert!(dir.path().join("b/img1.png").exists());
    }
}
