//! Fixtures shared by the benchmarks.

use ltcnn::data::{load_batch, synthetic::bright_halves, Batch};
use ltcnn::network::{Network, NetworkSpec};
use ltcnn::tensor::sample_normal;
use ltcnn::{Rng, Tensor};

/// Reference two-class network at the given square input size.
pub fn network(size: usize, seed: u64) -> Network {
    let spec = NetworkSpec::with_class_count(2).with_input_size(size, size);
    Network::build(spec, &mut Rng::new(seed)).expect("valid spec")
}

/// Standard-normal `[batch, 3, size, size]` input.
pub fn input(batch: usize, size: usize, seed: u64) -> Tensor {
    sample_normal(&mut Rng::new(seed), [batch, 3, size, size], 0.0, 1.0).expect("valid shape")
}

/// Preprocessed synthetic two-class batch matching [`network`]'s classes.
pub fn labeled_batch(batch: usize, size: usize, seed: u64) -> Batch {
    let ds = bright_halves(batch.div_ceil(2), size, size, seed).expect("synthetic set");
    let spec = NetworkSpec::with_classes(ds.class_names.clone()).with_input_size(size, size);
    let indices: Vec<usize> = (0..batch).collect();
    load_batch(&ds, &spec, &indices).expect("batch")
}
