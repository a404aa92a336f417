//! Dataset loading, preprocessing, stratified splitting, augmentation and
//! batching.

mod augment;
mod batch;
mod dataset;
pub mod image;
mod split;
pub mod synthetic;

pub use augment::{augment, output_name, parse_ops, write_augmented, AugmentConfig, AugmentKind};
pub use batch::{batch_iterator, load_batch, Batch, BatchIterator};
pub use dataset::{load_dataset, AugmentOp, ImageSource, Item, LabeledDataset, Origin};
pub use image::{decode_image, preprocess};
pub use split::{stratified_counts, stratified_split, stratified_split3, SplitPair, SplitTriple};
