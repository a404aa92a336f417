use rayon::prelude::*;

use crate::data::image::preprocess;
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::network::NetworkSpec;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Batch {
    /// `[B, C, H, W]`, preprocessed.
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    /// Dataset positions of the batch members.
    pub indices: Vec<usize>,
}

/// Lazy batches over one epoch. Images are decoded and preprocessed only when
/// their batch is requested; decoding within a batch runs in parallel but the
/// batch layout is fixed by the epoch order.
pub struct BatchIterator<'a> {
    ds: &'a LabeledDataset,
    spec: &'a NetworkSpec,
    order: Vec<usize>,
    batch_size: usize,
    cursor: usize,
}

impl<'a> BatchIterator<'a> {
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn n_batches(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }
}

/// Epoch iterator. With `shuffle`, the permutation is drawn from `rng`;
/// otherwise items come in dataset order and `rng` is not touched.
pub fn batch_iterator<'a>(
    ds: &'a LabeledDataset,
    spec: &'a NetworkSpec,
    batch_size: usize,
    rng: &mut Rng,
    shuffle: bool,
) -> Result<BatchIterator<'a>> {
    if batch_size < 1 {
        return Err(Error::InvalidArgument(
            "batch_size must be at least 1".into(),
        ));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    if shuffle {
        rng.shuffle(&mut order);
    }
    Ok(BatchIterator {
        ds,
        spec,
        order,
        batch_size,
        cursor: 0,
    })
}

/// Preprocesses the listed items into one `[B, C, H, W]` tensor.
pub fn load_batch(ds: &LabeledDataset, spec: &NetworkSpec, indices: &[usize]) -> Result<Batch> {
    let images: Vec<Tensor> = indices
        .par_iter()
        .map(|&i| ds.items[i].load().and_then(|img| preprocess(&img, spec)))
        .collect::<Result<_>>()?;
    let per_image = spec.input_channels * spec.input_height * spec.input_width;
    let mut data = Vec::with_capacity(per_image * images.len());
    for img in &images {
        data.extend_from_slice(img.data());
    }
    Ok(Batch {
        inputs: Tensor::new(
            [
                indices.len(),
                spec.input_channels,
                spec.input_height,
                spec.input_width,
            ],
            data,
        )?,
        labels: indices.iter().map(|&i| ds.items[i].label).collect(),
        indices: indices.to_vec(),
    })
}

impl Iterator for BatchIterator<'_> {
    type Item = Result<Batch>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let indices = &self.order[self.cursor..end];
        self.cursor = end;
        Some(load_batch(self.ds, self.spec, indices))
    }
}
