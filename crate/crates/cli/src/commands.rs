use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context};

use ltcnn::data::{
    augment as augment_dataset, decode_image, load_dataset, parse_ops, preprocess,
    stratified_split, write_augmented, AugmentConfig, ImageSource, LabeledDataset,
};
use ltcnn::layers::softmax;
use ltcnn::metrics::{
    argmax, compute_metrics_named, predict_dataset, write_confusion_csv, write_report,
};
use ltcnn::network::{count_parameters, load_checkpoint, model_size, Network, NetworkSpec};
use ltcnn::rng::{streams, Rng};
use ltcnn::saliency::{export_raw, logits, normalize_and_export, saliency_map};
use ltcnn::train::{emit_curves, init_network, train as run_training};
use ltcnn::Tensor;

use crate::config::RunConfig;

pub const CHECKPOINT_FILE: &str = "checkpoint.ltcnn";
pub const BEST_FILE: &str = "best.ltcnn";
pub const CURVES_FILE: &str = "curves.csv";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.json";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const REPORT_CSV_FILE: &str = "report.csv";
pub const CONFUSION_FILE: &str = "confusion.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

/// Probability formatting shared by `eval` and `predict`.
fn fmt_prob(p: f32) -> String {
    format!("{p:.6}")
}

pub fn train(config_path: &Path) -> anyhow::Result<()> {
    let cfg = RunConfig::load(config_path)?;
    cfg.validate()?;
    let seed = cfg.train.seed;
    let full = load_dataset(&cfg.data.root).context("data.root")?;
    let (train_ds, val_ds) = match (&cfg.data.val_root, cfg.data.split_ratio) {
        (Some(val_root), _) => (full, Some(load_dataset(val_root).context("data.val_root")?)),
        (None, Some(ratio)) => {
            let split = stratified_split(&full, ratio, seed).context("data.split_ratio")?;
            (split.train, Some(split.test))
        }
        (None, None) => (full, None),
    };
    let train_ds = match &cfg.data.augment_ops {
        Some(ops) => augment_dataset(
            &train_ds,
            ops,
            &cfg.data.augment,
            &mut Rng::stream(seed, streams::AUGMENT),
        )?,
        None => train_ds,
    };
    let spec = cfg.network.resolve(Some(&train_ds.class_names))?;

    let out = &cfg.output_dir;
    create_dir(out)?;
    let resolved = serde_json::to_string_pretty(&cfg.resolved(&spec))?;
    write(&out.join(RESOLVED_CONFIG_FILE), resolved + "\n")?;

    println!(
        "training on {} items ({} classes){}",
        train_ds.len(),
        spec.n_classes,
        val_ds
            .as_ref()
            .map(|v| format!(", validating on {}", v.len()))
            .unwrap_or_default()
    );
    let net = init_network(spec, seed)?;
    let epochs = cfg.train.epochs;
    let outcome = run_training(net, &train_ds, val_ds.as_ref(), &cfg.train, |record| {
        println!("{}", record.progress_line(epochs))
    })?;

    outcome.final_checkpoint.save(out.join(CHECKPOINT_FILE))?;
    outcome.best_checkpoint.save(out.join(BEST_FILE))?;
    emit_curves(&outcome.records, &out.join(CURVES_FILE))?;
    println!(
        "best epoch {}; artifacts in {}",
        outcome.best_epoch,
        out.display()
    );
    Ok(())
}

fn relative_name(ds: &LabeledDataset, index: usize) -> String {
    let item = &ds.items[index];
    match &item.source {
        ImageSource::File(path) => {
            let file = path
                .file_name()
                .map(|f| f.to_string_lossy().into_owned())
                .unwrap_or_default();
            format!("{}/{}", ds.class_names[item.label], file)
        }
        ImageSource::Memory(_) => item.name.clone(),
    }
}

pub fn eval(checkpoint: &Path, data: &Path, batch: usize, out: &Path) -> anyhow::Result<()> {
    let net = load_checkpoint(checkpoint)?.network;
    let ds = load_dataset(data)?;
    let preds = predict_dataset(&net, &ds, batch)?;
    let report = compute_metrics_named(&preds.labels, &preds.predicted, ds.class_names.clone())?;
    create_dir(out)?;
    write_report(
        &report,
        &out.join(REPORT_JSON_FILE),
        &out.join(REPORT_CSV_FILE),
    )?;
    write_confusion_csv(&report.confusion, &out.join(CONFUSION_FILE))?;

    let mut rows = String::from("file,true,pred,prob\n");
    for i in 0..ds.len() {
        let (t, p) = (preds.labels[i], preds.predicted[i]);
        let _ = writeln!(
            rows,
            "{},{},{},{}",
            relative_name(&ds, i),
            ds.class_names[t],
            ds.class_names[p],
            fmt_prob(preds.probs[i][p])
        );
    }
    write(&out.join(PREDICTIONS_FILE), rows)?;

    print!("{}", report.to_csv());
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    println!(
        "accuracy={:.4} loss={:.6} n={}",
        report.accuracy, preds.loss, report.total
    );
    Ok(())
}

fn load_input(net: &Network, image: &Path) -> anyhow::Result<Tensor> {
    if !image.is_file() {
        bail!("image {} does not exist", image.display());
    }
    Ok(preprocess(&decode_image(image)?, net.spec())?)
}

pub fn predict(checkpoint: &Path, image: &Path) -> anyhow::Result<()> {
    let net = load_checkpoint(checkpoint)?.network;
    let input = load_input(&net, image)?;
    let z = logits(&net, &input)?;
    let probs = softmax(&Tensor::new([1, z.len()], z.clone())?)?;
    let class = argmax(&z);
    println!(
        "class={} prob={}",
        net.class_names()[class],
        fmt_prob(probs.data()[class])
    );
    Ok(())
}

fn parse_class(net: &Network, class: &str) -> anyhow::Result<usize> {
    if let Some(i) = net.class_names().iter().position(|n| n == class) {
        return Ok(i);
    }
    match class.parse::<usize>() {
        Ok(i) if i < net.n_classes() => Ok(i),
        _ => bail!(
            "unknown class {class:?}; expected one of {:?} or an index",
            net.class_names()
        ),
    }
}

pub fn saliency(
    checkpoint: &Path,
    image: &Path,
    out: &Path,
    class: Option<&str>,
    raw: Option<&Path>,
) -> anyhow::Result<()> {
    let net = load_checkpoint(checkpoint)?.network;
    let target = class.map(|c| parse_class(&net, c)).transpose()?;
    let input = load_input(&net, image)?;
    let map = saliency_map(&net, &input, target)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    normalize_and_export(&map, out)?;
    if let Some(raw) = raw {
        export_raw(&map, raw)?;
    }
    let max = map.values.data().iter().copied().fold(0.0f32, f32::max);
    println!(
        "target={} size={}x{} max={max:e} -> {}",
        net.class_names()[map.target],
        map.height(),
        map.width(),
        out.display()
    );
    Ok(())
}

fn inspect_spec(config: Option<&Path>, checkpoint: Option<&Path>) -> anyhow::Result<NetworkSpec> {
    match (config, checkpoint) {
        (_, Some(path)) => Ok(load_checkpoint(path)?.network.spec().clone()),
        (Some(path), None) => {
            let cfg = RunConfig::load(path)?;
            let section = &cfg.network;
            if section.class_names.is_some() || section.n_classes.is_some() {
                section.resolve(None)
            } else {
                let ds = load_dataset(&cfg.data.root).context("data.root")?;
                section.resolve(Some(&ds.class_names))
            }
        }
        (None, None) => bail!("inspect needs --config or --checkpoint"),
    }
}

pub fn inspect(config: Option<&Path>, checkpoint: Option<&Path>) -> anyhow::Result<()> {
    let spec = inspect_spec(config, checkpoint)?;
    let table = count_parameters(&spec)?;
    let size = model_size(&spec)?;
    println!(
        "input {}x{}x{}, {} classes",
        spec.input_channels, spec.input_height, spec.input_width, spec.n_classes
    );
    println!("{table}");
    println!("Total params: {}", table.total);
    println!(
        "Model size: {} bytes ({} MB)",
        size.total_bytes,
        size.megabytes()
    );
    Ok(())
}

fn copy_tree(ds: &LabeledDataset, out: &Path) -> anyhow::Result<()> {
    for item in &ds.items {
        let ImageSource::File(src) = &item.source else {
            bail!("item {} is not backed by a file", item.name);
        };
        let dir = out.join(&ds.class_names[item.label]);
        create_dir(&dir)?;
        let dest = dir.join(src.file_name().unwrap_or_default());
        fs::copy(src, &dest)
            .with_context(|| format!("cannot copy {} to {}", src.display(), dest.display()))?;
    }
    Ok(())
}

pub fn split(data: &Path, ratio: f64, seed: u64, out: &Path) -> anyhow::Result<()> {
    let ds = load_dataset(data)?;
    let split = stratified_split(&ds, ratio, seed)?;
    copy_tree(&split.train, &out.join("train"))?;
    copy_tree(&split.test, &out.join("test"))?;
    let counts = |d: &LabeledDataset| {
        d.class_counts()
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join("+")
    };
    println!("train={} ({})", split.train.len(), counts(&split.train));
    println!("test={} ({})", split.test.len(), counts(&split.test));
    Ok(())
}

pub fn augment(data: &Path, out: &Path, ops: &str, seed: u64) -> anyhow::Result<()> {
    let ops = parse_ops(ops)?;
    let ds = load_dataset(data)?;
    let augmented = augment_dataset(
        &ds,
        &ops,
        &AugmentConfig::default(),
        &mut Rng::stream(seed, streams::AUGMENT),
    )?;
    write_augmented(&augmented, out)?;
    println!("{} originals -> {} items", ds.len(), augmented.len());
    Ok(())
}
