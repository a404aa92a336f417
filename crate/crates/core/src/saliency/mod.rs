//! Vanilla gradient saliency: `max_c |∂ logit_target / ∂ input[c, h, w]|`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::argmax;
use crate::network::Network;
use crate::tensor::{write_ltt1_file, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    /// `[H, W]`, non-negative.
    pub values: Tensor,
    pub target: usize,
    /// Eval-mode logits of the explained image.
    pub logits: Vec<f32>,
}

impl SaliencyMap {
    pub fn height(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[1]
    }

    /// Row-major position of the largest value (ties to the first).
    pub fn argmax(&self) -> (usize, usize) {
        let i = argmax(self.values.data());
        (i / self.width(), i % self.width())
    }

    /// Row-major position of the smallest value (ties to the first).
    pub fn argmin(&self) -> (usize, usize) {
        let d = self.values.data();
        let i = (0..d.len()).fold(0, |best, i| if d[i] < d[best] { i } else { best });
        (i / self.width(), i % self.width())
    }
}

fn check_image(net: &Network, image: &Tensor) -> Result<()> {
    let s = net.spec();
    let expected = [s.input_channels, s.input_height, s.input_width];
    if image.shape() != expected {
        return Err(Error::ShapeMismatch {
            op: "saliency input",
            left: image.shape().to_vec(),
            right: expected.to_vec(),
        });
    }
    Ok(())
}

/// Eval-mode logits of one preprocessed `[C, H, W]` image.
pub fn logits(net: &Network, image: &Tensor) -> Result<Vec<f32>> {
    check_image(net, image)?;
    let batch = image.reshape([1, image.shape()[0], image.shape()[1], image.shape()[2]])?;
    Ok(net.forward_eval(&batch)?.0.into_data())
}

/// Saliency of a preprocessed `[C, H, W]` image for `target`, or for the
/// eval-mode argmax class when `target` is `None`.
pub fn saliency_map(net: &Network, image: &Tensor, target: Option<usize>) -> Result<SaliencyMap> {
    check_image(net, image)?;
    let (c, h, w) = (image.shape()[0], image.shape()[1], image.shape()[2]);
    let (logits, trace) = net.forward_eval(&image.reshape([1, c, h, w])?)?;
    let logits = logits.into_data();
    let target = match target {
        Some(t) if t >= net.n_classes() => {
            return Err(Error::InvalidArgument(format!(
                "target class {t} out of range for {} classes",
                net.n_classes()
            )))
        }
        Some(t) => t,
        None => argmax(&logits),
    };
    let mut seed = vec![0.0f32; net.n_classes()];
    seed[target] = 1.0;
    let grad = net.input_gradient(&trace, &Tensor::new([1, net.n_classes()], seed)?)?;
    let g = grad.data();
    let plane = h * w;
    let values = Tensor::from_fn([h, w], |i| {
        (0..c).map(|ch| g[ch * plane + i].abs()).fold(0.0, f32::max)
    })?;
    Ok(SaliencyMap {
        values,
        target,
        logits,
    })
}

/// Min-max quantization to `0..=255`; a constant map becomes all zeros.
pub fn quantize(values: &Tensor) -> Vec<u8> {
    let d = values.data();
    let (lo, hi) = d
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !(hi > lo) {
        return vec![0; d.len()];
    }
    let range = (hi - lo) as f64;
    d.iter()
        .map(|&v| (((v - lo) as f64 / range) * 255.0).round() as u8)
        .collect()
}

pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Parses a binary PGM with maxval 255. Returns `(width, height, pixels)`.
pub fn parse_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let bad = |why: &str| Error::Data(format!("invalid PGM: {why}"));
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if bytes.get(pos) == Some(&b'#') {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
    }
    if fields[0] != "P5" {
        return Err(bad("magic is not P5"));
    }
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| bad("non-numeric header field"))
    };
    let (w, h, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval != 255 {
        return Err(bad("maxval must be 255"));
    }
    let data = bytes
        .get(pos + 1..)
        .ok_or_else(|| bad("missing pixel data"))?;
    if data.len() != w * h {
        return Err(bad("pixel count does not match dimensions"));
    }
    Ok((w, h, data.to_vec()))
}

/// Writes the min-max normalized map as a binary PGM.
pub fn normalize_and_export(map: &SaliencyMap, path: &Path) -> Result<()> {
    let bytes = encode_pgm(map.width(), map.height(), &quantize(&map.values));
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Raw float map as an `LTT1` tensor.
pub fn export_raw(map: &SaliencyMap, path: &Path) -> Result<()> {
    write_ltt1_file(&map.values, path)
}

/// Largest change of the target logit when one channel of a pixel is moved
/// by `h`, for the most and the least salient pixel.
pub fn perturbation_probe(
    net: &Network,
    image: &Tensor,
    map: &SaliencyMap,
    h: f32,
) -> Result<(f64, f64)> {
    let base = map.logits[map.target] as f64;
    let (channels, width) = (image.shape()[0], map.width());
    let plane = map.height() * width;
    let nudged = |ch: usize, i: usize| -> Result<f32> {
        let mut probe = image.clone();
        probe.data_mut()[ch * plane + i] += h;
        Ok(logits(net, &probe)?[map.target])
    };
    let delta = |(y, x): (usize, usize)| -> Result<f64> {
        let i = y * width + x;
        let mut best = 0.0f64;
        for ch in 0..channels {
            best = best.max((nudged(ch, i)? as f64 - base).abs());
        }
        Ok(best)
    };
    Ok((delta(map.argmax())?, delta(map.argmin())?))
}
