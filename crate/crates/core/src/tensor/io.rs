//! `LTT1` tensor files: magic, u8 rank, little-endian u32 dims, little-endian f32 payload.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};

pub const LTT1_MAGIC: &[u8; 4] = b"LTT1";

pub fn write_ltt1<W: Write>(tensor: &Tensor, mut w: W) -> std::io::Result<()> {
    let rank = u8::try_from(tensor.rank())
        .map_err(|_| std::io::Error::other("tensor rank exceeds 255"))?;
    let mut buf = Vec::with_capacity(5 + 4 * tensor.rank() + 4 * tensor.len());
    buf.extend_from_slice(LTT1_MAGIC);
    buf.push(rank);
    for &d in tensor.shape() {
        let d = u32::try_from(d).map_err(|_| std::io::Error::other("dimension exceeds u32"))?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for v in tensor.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

pub fn read_ltt1<R: Read>(mut r: R) -> Result<Tensor> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::Truncated(e.to_string()))?;
    parse(&bytes)
}

fn parse(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 5 || &bytes[..4] != LTT1_MAGIC {
        return Err(Error::BadMagic { expected: "LTT1" });
    }
    let rank = bytes[4] as usize;
    let dims_end = 5 + 4 * rank;
    if bytes.len() < dims_end {
        return Err(Error::Truncated("LTT1 header".into()));
    }
    let shape: Vec<usize> = bytes[5..dims_end]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let count: usize = shape.iter().product();
    let payload = &bytes[dims_end..];
    if payload.len() != 4 * count {
        return Err(Error::Truncated(format!(
            "LTT1 payload holds {} bytes, shape {shape:?} needs {}",
            payload.len(),
            4 * count
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::new(shape, data)
}

pub fn write_ltt1_file(tensor: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_ltt1(tensor, &mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_ltt1_file(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_bit_exact() {
        let t = Tensor::new([1, 2], vec![1.0f32, -2.0]).unwrap();
        let mut buf = Vec::new();
        write_ltt1(&t, &mut buf).unwrap();
        let mut expected = b"LTT1".to_vec();
        expected.push(2);
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        expected.extend_from_slice(&(-2.0f32).to_le_bytes());
        assert_eq!(buf, expected);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(matches!(
            read_ltt1(&b"LTT2\x01"[..]),
            Err(Error::BadMagic { .. })
        ));
        let t = Tensor::new([3], vec![1.0f32, 2.0, 3.0]).unwrap();
        let mut buf = Vec::new();
        write_ltt1(&t, &mut buf).unwrap();
        buf.pop();
        assert!(matches!(read_ltt1(&buf[..]), Err(Error::Truncated(_))));
    }

    proptest! {
        #[test]
        fn roundtrip(dims in proptest::collection::vec(1usize..4, 1..4), seed in any::<u32>()) {
            let n: usize = dims.iter().product();
            let data: Vec<f32> = (0..n).map(|i| (i as f32 + seed as f32).sin()).collect();
            let t = Tensor::new(dims, data).unwrap();
            let mut buf = Vec::new();
            write_ltt1(&t, &mut buf).unwrap();
            prop_assert_eq!(read_ltt1(&buf[..]).unwrap(), t);
        }
    }
}
