use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::train::EpochRecord;

pub const CURVES_HEADER: &str = "epoch,train_loss,train_acc,val_loss,val_acc";

/// Rounds to 6 significant digits.
pub fn round_sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

/// Decimal rendering at 6 significant digits (`0.693147`, `12.5`).
pub fn fmt_sig6(x: f64) -> String {
    format!("{}", round_sig6(x))
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_sig6).unwrap_or_default()
}

pub fn format_curves(records: &[EpochRecord]) -> String {
    let mut out = format!("{CURVES_HEADER}\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.epoch,
            fmt_sig6(r.train_loss),
            fmt_sig6(r.train_acc),
            opt(r.val_loss),
            opt(r.val_acc)
        );
    }
    out
}

pub fn emit_curves(records: &[EpochRecord], path: &Path) -> Result<()> {
    fs::write(path, format_curves(records)).map_err(|e| Error::io(path, e))
}

pub fn parse_curves(text: &str) -> Result<Vec<EpochRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(CURVES_HEADER) {
        return Err(Error::Data(format!(
            "curves file must start with {CURVES_HEADER:?}"
        )));
    }
    let bad = |line: &str| Error::Data(format!("malformed curves row {line:?}"));
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(bad(line));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(line));
            let opt = |s: &str| {
                if s.is_empty() {
                    Ok(None)
                } else {
                    num(s).map(Some)
                }
            };
            Ok(EpochRecord {
                epoch: fields[0].parse().map_err(|_| bad(line))?,
                train_loss: num(fields[1])?,
                train_acc: num(fields[2])?,
                val_loss: opt(fields[3])?,
                val_acc: opt(fields[4])?,
            })
        })
        .collect()
}

pub fn read_curves(path: &Path) -> Result<Vec<EpochRecord>> {
    parse_curves(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(epoch: usize, loss: f64, val: bool) -> EpochRecord {
        EpochRecord {
            epoch,
            train_loss: loss,
            train_acc: 1.0 / 3.0,
            val_loss: val.then_some(loss * 1.1),
            val_acc: val.then_some(0.5),
        }
    }

    #[test]
    fn one_record_two_lines() {
        let text = format_curves(&[record(1, 0.693147180, false)]);
        assert_eq!(text, format!("{CURVES_HEADER}\n1,0.693147,0.333333,,\n"));
    }

    #[test]
    fn parse_reproduces_rounded_records() {
        let records: Vec<EpochRecord> = (1..=20)
            .map(|e| record(e, 2.0 / (e as f64).powf(1.7) + 1e-7 * e as f64, e % 3 != 0))
            .collect();
        let parsed = parse_curves(&format_curves(&records)).unwrap();
        let rounded: Vec<EpochRecord> = records
            .iter()
            .map(|r| EpochRecord {
                epoch: r.epoch,
                train_loss: round_sig6(r.train_loss),
                train_acc: round_sig6(r.train_acc),
                val_loss: r.val_loss.map(round_sig6),
                val_acc: r.val_acc.map(round_sig6),
            })
            .collect();
        assert_eq!(parsed, rounded);
    }

    #[test]
    fn decreasing_losses_stay_monotone() {
        let records: Vec<EpochRecord> = (1..=50).map(|e| record(e, 1.0 / e as f64, true)).collect();
        let parsed = parse_curves(&format_curves(&records)).unwrap();
        assert!(parsed.windows(2).all(|w| w[1].train_loss < w[0].train_loss));
    }

    #[test]
    fn rejects_wrong_header() {
        assert!(parse_curves("epoch,loss\n1,0.5\n").is_err());
        assert!(parse_curves(&format!("{CURVES_HEADER}\n1,x,0,,\n")).is_err());
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt_sig6(0.000012345678), "0.0000123457");
        assert_eq!(fmt_sig6(123456789.0), "123457000");
        assert_eq!(fmt_sig6(1.0), "1");
        assert_eq!(fmt_sig6(0.0), "0");
    }
}
