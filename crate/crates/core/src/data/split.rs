use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::{streams, Rng};

#[derive(Debug, Clone)]
pub struct SplitPair {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub ratio: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SplitTriple {
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    pub test: LabeledDataset,
    pub seed: u64,
}

/// Per-class held-out counts for `ratio`.
///
/// Each class gets `round(n_c · ratio)`, clamped so both sides keep at least
/// one item. If the sum misses `round(N · ratio)`, single items move from the
/// largest classes first (ties by class index) while the moved class stays
/// within one item of its exact share.
pub fn stratified_counts(class_counts: &[usize], ratio: f64) -> Result<Vec<usize>> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split ratio must be in (0, 1), got {ratio}"
        )));
    }
    if let Some(c) = class_counts.iter().position(|&n| n < 2) {
        return Err(Error::Data(format!(
            "class {c} has {} item(s); a split needs at least 2 per class",
            class_counts[c]
        )));
    }
    let mut counts: Vec<usize> = class_counts
        .iter()
        .map(|&n| ((n as f64 * ratio).round() as usize).clamp(1, n - 1))
        .collect();
    let total: usize = class_counts.iter().sum();
    let target = (total as f64 * ratio).round() as usize;

    let mut order: Vec<usize> = (0..class_counts.len()).collect();
    order.sort_by(|&a, &b| class_counts[b].cmp(&class_counts[a]).then(a.cmp(&b)));
    let within_one = |c: usize, k: usize| (k as f64 - class_counts[c] as f64 * ratio).abs() < 1.0;
    loop {
        let sum: usize = counts.iter().sum();
        if sum == target {
            break;
        }
        let step = |k: usize| if sum < target { k + 1 } else { k - 1 };
        let pick = order.iter().copied().find(|&c| {
            let k = step(counts[c]);
            (1..class_counts[c]).contains(&k) && within_one(c, k)
        });
        match pick {
            Some(c) => counts[c] = step(counts[c]),
            None => break,
        }
    }
    Ok(counts)
}

/// Seeded stratified split: each class is shuffled independently and its
/// first `stratified_counts` items go to the test side. Both sides keep the
/// source order.
pub fn stratified_split(ds: &LabeledDataset, ratio: f64, seed: u64) -> Result<SplitPair> {
    let counts = stratified_counts(&ds.class_counts(), ratio)?;
    let mut rng = Rng::stream(seed, streams::SPLIT);
    let mut is_test = vec![false; ds.len()];
    for (class, &k) in counts.iter().enumerate() {
        let mut members: Vec<usize> = (0..ds.len())
            .filter(|&i| ds.items[i].label == class)
            .collect();
        rng.shuffle(&mut members);
        for &i in &members[..k] {
            is_test[i] = true;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (item, held_out) in ds.items.iter().zip(is_test) {
        if held_out { &mut test } else { &mut train }.push(item.clone());
    }
    Ok(SplitPair {
        train: ds.with_items(train),
        test: ds.with_items(test),
        ratio,
        seed,
    })
}

/// Test split first, then a validation split of the remaining training side.
pub fn stratified_split3(
    ds: &LabeledDataset,
    val_ratio: f64,
    test_ratio: f64,
    seed: u64,
) -> Result<SplitTriple> {
    let outer = stratified_split(ds, test_ratio, seed)?;
    let inner = stratified_split(
        &outer.train,
        val_ratio / (1.0 - test_ratio),
        Rng::stream(seed, streams::SPLIT).derive().next_u64(),
    )?;
    Ok(SplitTriple {
        train: inner.train,
        val: inner.test,
        test: outer.test,
        seed,
    })
}
