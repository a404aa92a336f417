//! Small generated datasets for sanity checks, tests and benchmarks.

use crate::data::{Item, LabeledDataset};
use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Two classes of `[3, h, w]` images: class `left` has a bright left half,
/// class `right` a bright right half. Pixels carry small seeded noise.
/// Items alternate between the classes.
pub fn bright_halves(per_class: usize, h: usize, w: usize, seed: u64) -> Result<LabeledDataset> {
    let mut rng = Rng::new(seed);
    let mut items = Vec::with_capacity(2 * per_class);
    for i in 0..per_class {
        for label in 0..2 {
            let img = Tensor::from_fn([3, h, w], |j| {
                let x = j % w;
                let left = x < w / 2;
                let bright = left == (label == 0);
                let base = if bright { 0.85 } else { 0.15 };
                (base + rng.uniform_range(-0.1, 0.1)) as f32
            })?;
            items.push(Item::in_memory(format!("img{i:03}_{label}"), img, label));
        }
    }
    LabeledDataset::new(items, vec!["left".into(), "right".into()])
}

/// `n_classes` classes distinguished by which horizontal band is bright.
pub fn bright_bands(
    n_classes: usize,
    per_class: usize,
    h: usize,
    w: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    let mut rng = Rng::new(seed);
    let mut items = Vec::with_capacity(n_classes * per_class);
    for i in 0..per_class {
        for label in 0..n_classes {
            let img = Tensor::from_fn([3, h, w], |j| {
                let y = (j / w) % h;
                let band = y * n_classes / h;
                let base = if band == label { 0.85 } else { 0.15 };
                (base + rng.uniform_range(-0.1, 0.1)) as f32
            })?;
            items.push(Item::in_memory(format!("img{i:03}_{label}"), img, label));
        }
    }
    let names = (0..n_classes).map(|c| format!("band{c}")).collect();
    LabeledDataset::new(items, names)
}
