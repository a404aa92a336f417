//! End-to-end library pipeline on a synthetic image tree.

use ltcnn::data::synthetic::{bright_bands, bright_halves};
use ltcnn::data::{
    augment, load_dataset, preprocess, stratified_split, write_augmented, AugmentConfig,
    AugmentKind,
};
use ltcnn::metrics::evaluate;
use ltcnn::network::{count_parameters, load_checkpoint, model_size_bytes, NetworkSpec};
use ltcnn::rng::{streams, Rng};
use ltcnn::saliency::{normalize_and_export, parse_pgm, saliency_map};
use ltcnn::train::{emit_curves, init_network, read_curves, train, TrainConfig};

#[test]
fn disk_tree_to_trained_model() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("data");
    write_augmented(&bright_halves(10, 32, 32, 0).unwrap(), &root).unwrap();
    let ds = load_dataset(&root).unwrap();
    assert_eq!(ds.class_names, ["left", "right"]);
    assert_eq!(ds.class_counts(), [10, 10]);

    let split = stratified_split(&ds, 0.2, 7).unwrap();
    assert_eq!((split.train.len(), split.test.len()), (16, 4));
    let train_ds = augment(
        &split.train,
        &[AugmentKind::Flip],
        &AugmentConfig::default(),
        &mut Rng::stream(7, streams::AUGMENT),
    )
    .unwrap();
    assert_eq!(train_ds.len(), 32);

    let spec = NetworkSpec::with_classes(ds.class_names.clone()).with_input_size(32, 32);
    let mut cfg = TrainConfig::new(6);
    cfg.batch_size = 8;
    cfg.seed = 7;
    let out = train(
        init_network(spec.clone(), 7).unwrap(),
        &train_ds,
        Some(&split.test),
        &cfg,
        |_| {},
    )
    .unwrap();
    assert_eq!(out.records.len(), 6);
    assert!(out.records.last().unwrap().train_loss < out.records[0].train_loss);

    let ckpt = tmp.path().join("model.ltcnn");
    out.best_checkpoint.save(&ckpt).unwrap();
    assert_eq!(
        std::fs::metadata(&ckpt).unwrap().len() as usize,
        model_size_bytes(&spec).unwrap()
    );
    let net = load_checkpoint(&ckpt).unwrap().network;
    let report = evaluate(&net, &split.test, 4).unwrap();
    assert_eq!(report.total, 4);
    assert_eq!(
        Some(report.accuracy),
        out.records[out.best_epoch - 1].val_acc
    );

    let curves = tmp.path().join("curves.csv");
    emit_curves(&out.records, &curves).unwrap();
    assert_eq!(read_curves(&curves).unwrap().len(), 6);

    let image = split.test.items[0].load().unwrap();
    let input = preprocess(&image, &spec).unwrap();
    let map = saliency_map(&net, &input, None).unwrap();
    let pgm = tmp.path().join("map.pgm");
    normalize_and_export(&map, &pgm).unwrap();
    let (w, h, _) = parse_pgm(&std::fs::read(&pgm).unwrap()).unwrap();
    assert_eq!((w, h), (32, 32));
}

#[test]
fn many_class_accounting_and_training() {
    let ds = bright_bands(4, 3, 32, 32, 1).unwrap();
    let spec = NetworkSpec::with_classes(ds.class_names.clone()).with_input_size(32, 32);
    let table = count_parameters(&NetworkSpec::with_classes(ds.class_names.clone())).unwrap();
    assert_eq!(table.total, 5_406_480 + 85 * 4);
    let mut cfg = TrainConfig::new(2);
    cfg.batch_size = 5;
    let out = train(init_network(spec, 1).unwrap(), &ds, None, &cfg, |_| {}).unwrap();
    assert_eq!(out.best_epoch, 2);
    assert!(out.records.iter().all(|r| r.val_acc.is_none()));
}
