//! Confusion matrices, classification reports and their file artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{batch_iterator, LabeledDataset};
use crate::error::{Error, Result};
use crate::layers::{softmax, softmax_cross_entropy};
use crate::network::Network;
use crate::rng::Rng;

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub class_names: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(class_names: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = class_names.len();
        if n == 0 || counts.len() != n || counts.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgument(format!(
                "confusion matrix must be {n}x{n} for {n} class names"
            )));
        }
        Ok(Self {
            class_names,
            counts,
        })
    }

    pub fn from_pairs(
        truth: &[usize],
        predicted: &[usize],
        class_names: Vec<String>,
    ) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::InvalidArgument(format!(
                "{} true labels but {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let n = class_names.len();
        let mut counts = vec![vec![0u64; n]; n];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= n || p >= n {
                return Err(Error::InvalidArgument(format!(
                    "label pair ({t}, {p}) out of range for {n} classes"
                )));
            }
            counts[t][p] += 1;
        }
        Self::new(class_names, counts)
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes()).map(|c| self.counts[c][c]).sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }

    /// CSV grid with a `true\predicted` corner cell and class-name headers.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for name in &self.class_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (name, row) in self.class_names.iter().zip(&self.counts) {
            out.push_str(name);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub class_names: Vec<String>,
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    pub total: u64,
    pub confusion: ConfusionMatrix,
    /// Set when some precision or recall had a zero denominator and was
    /// reported as 0.
    pub zero_division: bool,
    pub warnings: Vec<String>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Full report from a confusion matrix. Undefined precision or recall is
/// reported as 0 and flagged; weighted averages use true-class support.
pub fn report_from_confusion(confusion: ConfusionMatrix) -> Result<EvalReport> {
    let total = confusion.total();
    if total == 0 {
        return Err(Error::InvalidArgument("no samples to evaluate".into()));
    }
    let n = confusion.n_classes();
    let mut warnings = Vec::new();
    let per_class: Vec<ClassMetrics> = (0..n)
        .map(|c| {
            let tp = confusion.counts[c][c];
            let name = &confusion.class_names[c];
            let precision = ratio(tp, confusion.predicted(c)).unwrap_or_else(|| {
                warnings.push(format!(
                    "precision undefined for class {name:?} (never predicted); reported as 0"
                ));
                0.0
            });
            let recall = ratio(tp, confusion.support(c)).unwrap_or_else(|| {
                warnings.push(format!(
                    "recall undefined for class {name:?} (no true samples); reported as 0"
                ));
                0.0
            });
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support: confusion.support(c),
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / n as f64;
    let weighted = |f: fn(&ClassMetrics) -> f64| {
        per_class
            .iter()
            .map(|m| f(m) * m.support as f64)
            .sum::<f64>()
            / total as f64
    };
    Ok(EvalReport {
        class_names: confusion.class_names.clone(),
        accuracy: confusion.trace() as f64 / total as f64,
        macro_avg: Averages {
            precision: mean(|m| m.precision),
            recall: mean(|m| m.recall),
            f1: mean(|m| m.f1),
        },
        weighted_avg: Averages {
            precision: weighted(|m| m.precision),
            recall: weighted(|m| m.recall),
            f1: weighted(|m| m.f1),
        },
        per_class,
        total,
        confusion,
        zero_division: !warnings.is_empty(),
        warnings,
    })
}

pub fn compute_metrics(
    truth: &[usize],
    predicted: &[usize],
    n_classes: usize,
) -> Result<EvalReport> {
    let names = (0..n_classes).map(|c| format!("class{c}")).collect();
    compute_metrics_named(truth, predicted, names)
}

pub fn compute_metrics_named(
    truth: &[usize],
    predicted: &[usize],
    class_names: Vec<String>,
) -> Result<EvalReport> {
    report_from_confusion(ConfusionMatrix::from_pairs(truth, predicted, class_names)?)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Eval-mode outputs for every item of a dataset, in dataset order.
#[derive(Debug, Clone)]
pub struct Predictions {
    pub labels: Vec<usize>,
    pub predicted: Vec<usize>,
    /// Softmax probabilities, one row per item.
    pub probs: Vec<Vec<f32>>,
    /// Mean cross-entropy over the dataset.
    pub loss: f64,
}

impl Predictions {
    pub fn accuracy(&self) -> f64 {
        let correct = self
            .labels
            .iter()
            .zip(&self.predicted)
            .filter(|(a, b)| a == b)
            .count();
        correct as f64 / self.labels.len() as f64
    }
}

pub(crate) fn check_classes(net: &Network, ds: &LabeledDataset) -> Result<()> {
    if net.class_names() != ds.class_names.as_slice() {
        return Err(Error::Data(format!(
            "dataset classes {:?} do not match network classes {:?}",
            ds.class_names,
            net.class_names()
        )));
    }
    Ok(())
}

pub fn predict_dataset(
    net: &Network,
    ds: &LabeledDataset,
    batch_size: usize,
) -> Result<Predictions> {
    check_classes(net, ds)?;
    if ds.is_empty() {
        return Err(Error::Data("cannot evaluate an empty dataset".into()));
    }
    let mut out = Predictions {
        labels: Vec::with_capacity(ds.len()),
        predicted: Vec::with_capacity(ds.len()),
        probs: Vec::with_capacity(ds.len()),
        loss: 0.0,
    };
    let mut loss_sum = 0.0;
    for batch in batch_iterator(ds, net.spec(), batch_size, &mut Rng::new(0), false)? {
        let batch = batch?;
        let (logits, _) = net.forward_eval(&batch.inputs)?;
        let loss = softmax_cross_entropy(&logits, &batch.labels)?;
        loss_sum += loss.loss * batch.labels.len() as f64;
        let probs = softmax(&logits)?;
        let n = net.n_classes();
        for (logit_row, prob_row) in logits.data().chunks(n).zip(probs.data().chunks(n)) {
            out.predicted.push(argmax(logit_row));
            out.probs.push(prob_row.to_vec());
        }
        out.labels.extend_from_slice(&batch.labels);
    }
    out.loss = loss_sum / ds.len() as f64;
    Ok(out)
}

/// Eval-mode report; predictions are the argmax of the logits.
pub fn evaluate(net: &Network, ds: &LabeledDataset, batch_size: usize) -> Result<EvalReport> {
    let preds = predict_dataset(net, ds, batch_size)?;
    compute_metrics_named(&preds.labels, &preds.predicted, ds.class_names.clone())
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

impl EvalReport {
    /// Copy with every float rounded to 4 decimals, as written to JSON.
    pub fn rounded(&self) -> Self {
        let avg = |a: &Averages| Averages {
            precision: round4(a.precision),
            recall: round4(a.recall),
            f1: round4(a.f1),
        };
        Self {
            per_class: self
                .per_class
                .iter()
                .map(|m| ClassMetrics {
                    precision: round4(m.precision),
                    recall: round4(m.recall),
                    f1: round4(m.f1),
                    support: m.support,
                })
                .collect(),
            accuracy: round4(self.accuracy),
            macro_avg: avg(&self.macro_avg),
            weighted_avg: avg(&self.weighted_avg),
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.rounded()).map_err(|e| Error::Header(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Header(e.to_string()))
    }

    /// Classification table: one row per class, then accuracy, macro and
    /// weighted averages; values at 2 decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(",precision,recall,f1-score,support\n");
        for (name, m) in self.class_names.iter().zip(&self.per_class) {
            let _ = writeln!(
                out,
                "{name},{:.2},{:.2},{:.2},{}",
                m.precision, m.recall, m.f1, m.support
            );
        }
        let _ = writeln!(out, "accuracy,,,{:.2},{}", self.accuracy, self.total);
        for (label, a) in [
            ("macro avg", &self.macro_avg),
            ("weighted avg", &self.weighted_avg),
        ] {
            let _ = writeln!(
                out,
                "{label},{:.2},{:.2},{:.2},{}",
                a.precision, a.recall, a.f1, self.total
            );
        }
        out
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn write_report(report: &EvalReport, json_path: &Path, csv_path: &Path) -> Result<()> {
    write_file(json_path, &report.to_json()?)?;
    write_file(csv_path, &report.to_csv())
}

pub fn write_confusion_csv(confusion: &ConfusionMatrix, path: &Path) -> Result<()> {
    write_file(path, &confusion.to_csv())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};
    use proptest::strategy::Strategy;

    fn reference_report() -> EvalReport {
        let cm = ConfusionMatrix::new(
            vec!["Encroached".into(), "Unencroached".into()],
            vec![vec![112, 25], vec![16, 95]],
        )
        .unwrap();
        report_from_confusion(cm).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn hand_computed_oracle() {
        let r = reference_report();
        let expect = [(0.875, 0.818, 0.845), (0.792, 0.856, 0.822)];
        for (m, (p, rc, f)) in r.per_class.iter().zip(expect) {
            // The oracle values are quoted to 3 decimals, so allow one unit there.
            assert!(close(m.precision, p, 1e-3), "{m:?}");
            assert!(close(m.recall, rc, 1e-3), "{m:?}");
            assert!(close(m.f1, f, 1e-3), "{m:?}");
        }
        assert_eq!(r.per_class[0].support, 137);
        assert_eq!(r.per_class[1].support, 111);
        assert_eq!(r.total, 248);
        assert!(close(r.accuracy, 207.0 / 248.0, 1e-12));
        assert!(close(r.macro_avg.precision, 0.833, 1e-3));
        assert!(close(r.weighted_avg.precision, 0.838, 1e-3));
        assert!(!r.zero_division);
    }

    #[test]
    fn reference_values_within_a_hundredth() {
        let r = reference_report();
        let printed = [
            (r.per_class[0].precision, 0.87),
            (r.per_class[0].recall, 0.82),
            (r.per_class[0].f1, 0.85),
            (r.per_class[1].precision, 0.80),
            (r.per_class[1].recall, 0.85),
            (r.per_class[1].f1, 0.82),
            (r.accuracy, 0.835),
            (r.macro_avg.precision, 0.83),
            (r.macro_avg.recall, 0.84),
            (r.macro_avg.f1, 0.83),
            (r.weighted_avg.precision, 0.84),
            (r.weighted_avg.recall, 0.83),
            (r.weighted_avg.f1, 0.84),
        ];
        for (i, (got, want)) in printed.iter().enumerate() {
            let rounded = (got * 100.0).round() / 100.0;
            assert!(
                close(rounded, *want, 0.01 + 1e-9),
                "entry {i}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn all_wrong_uses_zero_rule() {
        let r = compute_metrics(&[0, 0, 1, 1], &[1, 1, 0, 0], 2).unwrap();
        assert_eq!(r.accuracy, 0.0);
        assert!(r
            .per_class
            .iter()
            .all(|m| m.precision == 0.0 && m.recall == 0.0 && m.f1 == 0.0));
        assert!(!r.zero_division);

        let r = compute_metrics(&[0, 0, 1, 1], &[0, 0, 0, 0], 2).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert_eq!([r.per_class[0].recall, r.per_class[1].recall], [1.0, 0.0]);
        assert_eq!(r.per_class[1].precision, 0.0);
        assert!(r.zero_division);
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn single_class_collapses() {
        let r = compute_metrics(&[0, 0, 0], &[0, 0, 0], 1).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.macro_avg, r.weighted_avg);
        assert_eq!(r.per_class[0].f1, 1.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(compute_metrics(&[0, 2], &[0, 1], 2).is_err());
        assert!(compute_metrics(&[0], &[0, 1], 2).is_err());
        assert!(compute_metrics(&[], &[], 2).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.2, 0.5, 0.5]), 1);
        assert_eq!(argmax(&[1.0, 1.0]), 0);
        assert_eq!(argmax(&[-3.0, -1.0, -2.0]), 1);
    }

    #[test]
    fn csv_and_json_artifacts() {
        let r = reference_report();
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        // Header, two classes, accuracy, macro and weighted averages.
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[0], ",precision,recall,f1-score,support");
        assert_eq!(lines[2], "Unencroached,0.79,0.86,0.82,111");
        assert_eq!(lines[3], "accuracy,,,0.83,248");
        assert_eq!(lines[4], "macro avg,0.83,0.84,0.83,248");
        assert_eq!(lines[5], "weighted avg,0.84,0.83,0.84,248");

        let parsed = EvalReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(parsed, r.rounded());
        assert_eq!(parsed.accuracy, 0.8347);

        assert_eq!(
            r.confusion.to_csv(),
            "true\\predicted,Encroached,Unencroached\nEncroached,112,25\nUnencroached,16,95\n"
        );

        let dir = tempfile::tempdir().unwrap();
        let (j, c) = (dir.path().join("r.json"), dir.path().join("r.csv"));
        write_report(&r, &j, &c).unwrap();
        assert_eq!(fs::read_to_string(&c).unwrap(), csv);
        assert_eq!(fs::read_to_string(&j).unwrap(), r.to_json().unwrap());
    }

    fn small_net(seed: u64) -> (Network, LabeledDataset) {
        let ds = crate::data::synthetic::bright_halves(5, 24, 24, seed).unwrap();
        let spec = crate::network::NetworkSpec::with_classes(ds.class_names.clone())
            .with_input_size(24, 24);
        (Network::build(spec, &mut Rng::new(seed)).unwrap(), ds)
    }

    #[test]
    fn constant_predictor_on_balanced_set() {
        let (mut net, ds) = small_net(3);
        net.fc3.weights.data_mut().fill(0.0);
        net.fc3.bias = crate::tensor::Tensor::new([2], vec![1.0, 0.0]).unwrap();
        let r = evaluate(&net, &ds, 4).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert_eq!([r.per_class[0].recall, r.per_class[1].recall], [1.0, 0.0]);
    }

    #[test]
    fn evaluate_agrees_with_collected_pairs() {
        let (net, ds) = small_net(8);
        let preds = predict_dataset(&net, &ds, 3).unwrap();
        let direct =
            compute_metrics_named(&preds.labels, &preds.predicted, ds.class_names.clone()).unwrap();
        assert_eq!(evaluate(&net, &ds, 7).unwrap(), direct);
        assert_eq!(preds.labels, ds.labels());
        assert!(preds.loss.is_finite() && preds.loss > 0.0);

        let empty = ds.with_items(Vec::new());
        assert!(evaluate(&net, &empty, 4).is_err());
        let mut renamed = ds.clone();
        renamed.class_names[0] = "other".into();
        assert!(evaluate(&net, &renamed, 4).is_err());
    }

    fn labels(n_classes: usize, len: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
        (
            proptest::collection::vec(0..n_classes, len),
            proptest::collection::vec(0..n_classes, len),
        )
    }

    fn case() -> impl Strategy<Value = (usize, Vec<usize>, Vec<usize>)> {
        (1usize..=10, 1usize..=1000)
            .prop_flat_map(|(n, len)| labels(n, len).prop_map(move |(t, p)| (n, t, p)))
    }

    proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(100))]

        #[test]
        fn accuracy_is_weighted_recall((n, t, p) in case()) {
            let r = compute_metrics(&t, &p, n).unwrap();
            prop_assert!((r.accuracy - r.weighted_avg.recall).abs() < 1e-12);
            prop_assert_eq!(r.confusion.total(), t.len() as u64);
        }

        #[test]
        fn matches_pairwise_counting((n, t, p) in case()) {
            let r = compute_metrics(&t, &p, n).unwrap();
            for c in 0..n {
                let tp = t.iter().zip(&p).filter(|&(&a, &b)| a == c && b == c).count();
                let fp = t.iter().zip(&p).filter(|&(&a, &b)| a != c && b == c).count();
                let fn_ = t.iter().zip(&p).filter(|&(&a, &b)| a == c && b != c).count();
                let prec = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
                let rec = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
                prop_assert_eq!(r.per_class[c].precision, prec);
                prop_assert_eq!(r.per_class[c].recall, rec);
                prop_assert_eq!(r.per_class[c].support, (tp + fn_) as u64);
            }
            let correct = t.iter().zip(&p).filter(|(a, b)| a == b).count();
            prop_assert_eq!(r.accuracy, correct as f64 / t.len() as f64);
        }

        #[test]
        fn class_permutation_invariance((n, t, p) in case(), seed in 0u64..1000) {
            let mut perm: Vec<usize> = (0..n).collect();
            Rng::new(seed).shuffle(&mut perm);
            let r = compute_metrics(&t, &p, n).unwrap();
            let t2: Vec<usize> = t.iter().map(|&c| perm[c]).collect();
            let p2: Vec<usize> = p.iter().map(|&c| perm[c]).collect();
            let r2 = compute_metrics(&t2, &p2, n).unwrap();
            for c in 0..n {
                prop_assert_eq!(r.per_class[c], r2.per_class[perm[c]]);
            }
            prop_assert_eq!(r.accuracy, r2.accuracy);
            for (a, b) in [(r.macro_avg, r2.macro_avg), (r.weighted_avg, r2.weighted_avg)] {
                prop_assert!((a.precision - b.precision).abs() < 1e-12);
                prop_assert!((a.recall - b.recall).abs() < 1e-12);
                prop_assert!((a.f1 - b.f1).abs() < 1e-12);
            }
        }
    }
}
