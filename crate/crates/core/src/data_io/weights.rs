use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::embeddings::{to_u32, truncated};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const WEIGHTS_MAGIC: &[u8; 5] = b"NCWQ1";

/// Dense layers `W^1, ..., W^q` of a bias-free ReLU network; layer `i` has
/// shape `d_{i+1} x d_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReluNetWeights {
    layers: Vec<Matrix>,
}

impl ReluNetWeights {
    pub fn new(layers: Vec<Matrix>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::ShapeMismatch(
                "network needs at least one layer".into(),
            ));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[1].cols() != pair[0].rows() {
                return Err(Error::ShapeMismatch(format!(
                    "layer {} is {:?} but layer {} outputs {} values",
                    i + 2,
                    pair[1].shape(),
                    i + 1,
                    pair[0].rows()
                )));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if !l.is_finite() {
                return Err(Error::NonFinite(format!("layer {}", i + 1)));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    /// Depth `q`.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].rows()
    }
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<ReluNetWeights> {
    read_weights(super::open(path.as_ref())?)
}

pub fn save_weights(path: impl AsRef<Path>, w: &ReluNetWeights) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_weights(&mut out, w)?;
    out.flush()?;
    Ok(())
}

/// Reads `NCWQ1`, `u32 q`, then per layer `u32 rows`, `u32 cols`, row-major `f32`s.
pub fn read_weights<R: Read>(mut r: R) -> Result<ReluNetWeights> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)
        .map_err(|_| Error::BadMagic { expected: "NCWQ1" })?;
    if &magic != WEIGHTS_MAGIC {
        return Err(Error::BadMagic { expected: "NCWQ1" });
    }
    let q = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
    let mut layers = Vec::with_capacity(q.min(1024));
    for i in 0..q {
        let rows = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
        let cols = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
        let mut data = Vec::with_capacity((rows * cols).min(1 << 24));
        for _ in 0..rows * cols {
            let v = r.read_f32::<LittleEndian>().map_err(truncated)?;
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("layer {}", i + 1)));
            }
            data.push(f64::from(v));
        }
        layers.push(Matrix::from_vec(rows, cols, data)?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::ShapeMismatch(
            "trailing bytes after last layer".into(),
        ));
    }
    ReluNetWeights::new(layers)
}

pub fn write_weights<W: Write>(w: &mut W, net: &ReluNetWeights) -> Result<()> {
    w.write_all(WEIGHTS_MAGIC)?;
    w.write_u32::<LittleEndian>(to_u32(net.depth())?)?;
    for l in net.layers() {
        w.write_u32::<LittleEndian>(to_u32(l.rows())?)?;
        w.write_u32::<LittleEndian>(to_u32(l.cols())?)?;
        for &v in l.as_slice() {
            w.write_f32::<LittleEndian>(v as f32)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_identity_layer() {
        let net = ReluNetWeights::new(vec![Matrix::identity(2)]).unwrap();
        assert_eq!(net.depth(), 1);
        let mut buf = Vec::new();
        write_weights(&mut buf, &net).unwrap();
        assert_eq!(read_weights(buf.as_slice()).unwrap(), net);
    }

    #[test]
    fn mismatched_chain() {
        let err = ReluNetWeights::new(vec![Matrix::zeros(3, 2), Matrix::zeros(3, 4)]).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)));

        // same chain through the binary reader
        let mut buf = b"NCWQ1".to_vec();
        buf.extend(2u32.to_le_bytes());
        for (r, c) in [(3u32, 2u32), (3, 4)] {
            buf.extend(r.to_le_bytes());
            buf.extend(c.to_le_bytes());
            buf.extend(std::iter::repeat(0u8).take((r * c * 4) as usize));
        }
        assert!(matches!(
            read_weights(buf.as_slice()),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn round_trip_bit_exact() {
        let net = ReluNetWeights::new(vec![
            Matrix::from_rows(&[[0.5, -1.0, 2.0], [0.25, 0.0, 3.0]]).unwrap(),
            Matrix::from_rows(&[[1.0, -0.75]]).unwrap(),
        ])
        .unwrap();
        let mut buf = Vec::new();
        write_weights(&mut buf, &net).unwrap();
        let back = read_weights(buf.as_slice()).unwrap();
        assert_eq!(back, net);
        let mut buf2 = Vec::new();
        write_weights(&mut buf2, &back).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn bad_magic_and_empty() {
        assert!(matches!(
            read_weights(&b"NCEB1"[..]),
            Err(Error::BadMagic { .. })
        ));
        let mut buf = b"NCWQ1".to_vec();
        buf.extend(0u32.to_le_bytes());
        assert!(matches!(
            read_weights(buf.as_slice()),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
