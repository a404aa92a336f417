//! Image decoding, resampling and the geometric transforms used for augmentation.
//!
//! Images are `[C, H, W]` tensors with channel values in `[0, 1]`. Pixel
//! centers sit at integer coordinates; all resampling is bilinear with
//! out-of-range coordinates clamped to the border (replicate padding).

use std::fs;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};
use crate::network::NetworkSpec;
use crate::tensor::{read_ltt1_file, Tensor};

pub const NORM_MEAN: f32 = 0.5;
pub const NORM_STD: f32 = 0.5;

pub(crate) fn is_ltt1(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("ltt1"))
}

pub(crate) fn is_supported(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .is_some_and(|e| matches!(e.as_str(), "png" | "jpg" | "jpeg" | "ltt1"))
}

fn decode_error(path: &Path, reason: impl ToString) -> Error {
    Error::Decode {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

/// Decodes PNG/JPEG to 3-channel RGB (grayscale replicated, alpha dropped)
/// or reads an `LTT1` tensor of shape `[C, H, W]` or `[H, W]`.
pub fn decode_image(path: &Path) -> Result<Tensor> {
    if is_ltt1(path) {
        let t = read_ltt1_file(path).map_err(|e| decode_error(path, e))?;
        return match *t.shape() {
            [h, w] => t.into_reshaped([1, h, w]),
            [_, _, _] => Ok(t),
            ref s => Err(decode_error(
                path,
                format!("expected [C, H, W] or [H, W], got {s:?}"),
            )),
        };
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory(&bytes).map_err(|e| decode_error(path, e))?;
    from_dynamic(&img).map_err(|e| decode_error(path, e))
}

/// Cheap validity probe used at dataset load time.
pub(crate) fn probe_image(path: &Path) -> Result<()> {
    if is_ltt1(path) {
        return decode_image(path).map(|_| ());
    }
    image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .into_dimensions()
        .map_err(|e| decode_error(path, e))?;
    Ok(())
}

pub fn from_dynamic(img: &DynamicImage) -> Result<Tensor> {
    let rgb = img.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::InvalidArgument("zero-dimension image".into()));
    }
    let mut data = vec![0.0f32; 3 * h * w];
    for (x, y, px) in rgb.enumerate_pixels() {
        for c in 0..3 {
            data[c * h * w + y as usize * w + x as usize] = px[c] as f32 / 255.0;
        }
    }
    Tensor::new([3, h, w], data)
}

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a `[1|3, H, W]` image as 8-bit PNG.
pub fn save_png(img: &Tensor, path: &Path) -> Result<()> {
    let (c, h, w) = dims3(img)?;
    let px =
        |ch: usize, x: u32, y: u32| quantize(img.data()[ch * h * w + y as usize * w + x as usize]);
    let result = match c {
        1 => ImageBuffer::from_fn(w as u32, h as u32, |x, y| Luma([px(0, x, y)])).save(path),
        3 => ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
            Rgb([px(0, x, y), px(1, x, y), px(2, x, y)])
        })
        .save(path),
        _ => {
            return Err(Error::InvalidArgument(format!(
                "cannot write {c}-channel image as PNG"
            )))
        }
    };
    result.map_err(|e| decode_error(path, e))
}

pub(crate) fn dims3(img: &Tensor) -> Result<(usize, usize, usize)> {
    match *img.shape() {
        [c, h, w] => Ok((c, h, w)),
        ref s => Err(Error::InvalidShape {
            shape: s.to_vec(),
            reason: "expected an image [C, H, W]".into(),
        }),
    }
}

/// Bilinear sample of one plane at fractional `(y, x)`, clamped to the border.
fn sample(plane: &[f32], h: usize, w: usize, y: f64, x: f64) -> f32 {
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let (ty, tx) = (y - y0 as f64, x - x0 as f64);
    let at = |yy: usize, xx: usize| plane[yy * w + xx] as f64;
    let top = at(y0, x0) * (1.0 - tx) + at(y0, x1) * tx;
    let bottom = at(y1, x0) * (1.0 - tx) + at(y1, x1) * tx;
    (top * (1.0 - ty) + bottom * ty) as f32
}

/// Resamples every output pixel from `map(y, x) -> (src_y, src_x)`.
fn warp(
    img: &Tensor,
    out_h: usize,
    out_w: usize,
    map: impl Fn(f64, f64) -> (f64, f64),
) -> Result<Tensor> {
    let (c, h, w) = dims3(img)?;
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let plane = &img.data()[ch * h * w..][..h * w];
        for y in 0..out_h {
            for x in 0..out_w {
                let (sy, sx) = map(y as f64, x as f64);
                out.push(sample(plane, h, w, sy, sx));
            }
        }
    }
    Tensor::new([c, out_h, out_w], out)
}

/// Bilinear resize, half-pixel ("align corners = false") convention.
pub fn resize_bilinear(img: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (_, h, w) = dims3(img)?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument(
            "zero-dimension resize target".into(),
        ));
    }
    if (h, w) == (out_h, out_w) {
        return Ok(img.clone());
    }
    let (sy, sx) = (h as f64 / out_h as f64, w as f64 / out_w as f64);
    warp(img, out_h, out_w, |y, x| {
        (
            ((y + 0.5) * sy - 0.5).max(0.0),
            ((x + 0.5) * sx - 0.5).max(0.0),
        )
    })
}

pub fn hflip(img: &Tensor) -> Result<Tensor> {
    let (c, h, w) = dims3(img)?;
    let src = img.data();
    Tensor::from_fn([c, h, w], |i| {
        let (row, x) = (i / w, i % w);
        src[row * w + (w - 1 - x)]
    })
}

/// Rotation by `degrees` (counter-clockwise) about the image center.
pub fn rotate(img: &Tensor, degrees: f64) -> Result<Tensor> {
    let (_, h, w) = dims3(img)?;
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let (sin, cos) = degrees.to_radians().sin_cos();
    warp(img, h, w, |y, x| {
        let (dy, dx) = (y - cy, x - cx);
        (cy + sin * dx + cos * dy, cx + cos * dx - sin * dy)
    })
}

/// Horizontal shear: row `y` is displaced by `factor · (y − center)`.
pub fn shear(img: &Tensor, factor: f64) -> Result<Tensor> {
    let (_, h, w) = dims3(img)?;
    let cy = (h as f64 - 1.0) / 2.0;
    warp(img, h, w, |y, x| (y, x - factor * (y - cy)))
}

fn adapt_channels(img: &Tensor, channels: usize) -> Result<Tensor> {
    let (c, h, w) = dims3(img)?;
    let plane = h * w;
    let src = img.data();
    match (c, channels) {
        (a, b) if a == b => Ok(img.clone()),
        (1, n) => Tensor::from_fn([n, h, w], |i| src[i % plane]),
        (4, 3) => Tensor::new([3, h, w], src[..3 * plane].to_vec()),
        (c, 1) => Tensor::from_fn([1, h, w], |i| {
            (0..c).map(|ch| src[ch * plane + i]).sum::<f32>() / c as f32
        }),
        (c, n) => Err(Error::InvalidArgument(format!(
            "cannot map a {c}-channel image onto {n} input channels"
        ))),
    }
}

/// Network input for one image: channel adaptation, bilinear resize to the
/// spec's size, then `(v − 0.5) / 0.5` so values land in `[−1, 1]`.
pub fn preprocess(img: &Tensor, spec: &NetworkSpec) -> Result<Tensor> {
    let img = adapt_channels(img, spec.input_channels)?;
    let resized = resize_bilinear(&img, spec.input_height, spec.input_width)?;
    Ok(resized.map(|v| (v.clamp(0.0, 1.0) - NORM_MEAN) / NORM_STD))
}
