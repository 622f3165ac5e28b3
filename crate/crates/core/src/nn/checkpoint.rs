//! Flat binary checkpoints: `NLL1`, little-endian `u32` layer count, then
//! per layer a `u32` kind tag, `u32` dimension count, `u32` dimensions and
//! the layer's `f64` parameters (weights row-major, then bias).

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Conv2d, Dense, Layer, MaxPool2d, Model};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"NLL1";

const TAG_DENSE: u32 = 1;
const TAG_CONV: u32 = 2;
const TAG_RELU: u32 = 3;
const TAG_POOL: u32 = 4;

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut buf, model.layers().len());
    for layer in model.layers() {
        let (tag, dims): (u32, Vec<usize>) = match layer {
            Layer::Dense(d) => (TAG_DENSE, vec![d.inputs(), d.outputs()]),
            Layer::Conv2d(c) => (
                TAG_CONV,
                vec![c.in_channels, c.out_channels, c.kernel, c.height, c.width],
            ),
            Layer::Relu { width } => (TAG_RELU, vec![*width]),
            Layer::MaxPool2d(p) => (TAG_POOL, vec![p.channels, p.height, p.width]),
        };
        buf.extend_from_slice(&tag.to_le_bytes());
        put_u32(&mut buf, dims.len());
        for d in dims {
            put_u32(&mut buf, d);
        }
        for tensor in layer.params() {
            for v in tensor {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(
                self.path,
                format!("truncated at byte offset {}", self.pos),
            ));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::format(self.path, "parameter count overflows"))?,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
        path,
    };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::format(path, "bad magic bytes, expected NLL1"));
    }
    let count = r.u32()?;
    let mut layers = Vec::with_capacity(count.min(1024));
    for index in 0..count {
        let tag = r.u32()? as u32;
        let ndims = r.u32()?;
        let dims = (0..ndims).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let want = |n: usize| -> Result<()> {
            if dims.len() == n {
                Ok(())
            } else {
                Err(Error::format(
                    path,
                    format!("layer {index}: expected {n} dims, found {}", dims.len()),
                ))
            }
        };
        let shape_err = |e: ndarray::ShapeError| Error::format(path, format!("layer {index}: {e}"));
        let layer = match tag {
            TAG_DENSE => {
                want(2)?;
                let w = r.f64s(dims[0] * dims[1])?;
                let b = r.f64s(dims[1])?;
                Layer::Dense(Dense {
                    weight: Array2::from_shape_vec((dims[0], dims[1]), w).map_err(shape_err)?,
                    bias: Array1::from(b),
                })
            }
            TAG_CONV => {
                want(5)?;
                let (cin, cout, k) = (dims[0], dims[1], dims[2]);
                let w = r.f64s(cout * cin * k * k)?;
                let b = r.f64s(cout)?;
                Layer::Conv2d(Conv2d {
                    in_channels: cin,
                    out_channels: cout,
                    kernel: k,
                    height: dims[3],
                    width: dims[4],
                    weight: Array2::from_shape_vec((cout, cin * k * k), w).map_err(shape_err)?,
                    bias: Array1::from(b),
                })
            }
            TAG_RELU => {
                want(1)?;
                Layer::Relu { width: dims[0] }
            }
            TAG_POOL => {
                want(3)?;
                Layer::MaxPool2d(MaxPool2d::new(dims[0], dims[1], dims[2])?)
            }
            other => {
                return Err(Error::format(
                    path,
                    format!("layer {index}: unknown tag {other}"),
                ));
            }
        };
        layers.push(layer);
    }
    if r.pos != bytes.len() {
        return Err(Error::format(
            path,
            format!("{} trailing bytes after last layer", bytes.len() - r.pos),
        ));
    }
    Model::new(layers).map_err(|e| Error::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_and_header() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let model = Model::small_cnn(1, 4, 4, 3, (2, 2), &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_checkpoint(&model, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"NLL1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 7);
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn rejects_corruption() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let model = Model::mlp(3, &[4], 2, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_checkpoint(&model, &path).unwrap();
        let bytes = fs::read(&path).unwrap();

        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        let err = load_checkpoint(&path).unwrap_err().to_string();
        assert!(err.contains("truncated"), "{err}");

        let mut bad = bytes.clone();
        bad[0] = b'X';
        fs::write(&path, &bad).unwrap();
        assert!(load_checkpoint(&path)
            .unwrap_err()
            .to_string()
            .contains("magic"));
    }
}
