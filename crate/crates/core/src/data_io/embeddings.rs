use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const EMBEDDINGS_MAGIC: &[u8; 5] = b"NCEB1";

/// Samples of one class, one row per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSamples {
    pub id: String,
    pub samples: Matrix,
}

impl ClassSamples {
    pub fn count(&self) -> usize {
        self.samples.rows()
    }
}

/// Per-class embeddings sharing a `p`-dimensional feature space.
///
/// Invariants: at least two classes, every class nonempty, every sample has
/// `p` finite coordinates, class ids are unique.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingDataset {
    p: usize,
    classes: Vec<ClassSamples>,
}

impl EmbeddingDataset {
    pub fn new(p: usize, classes: Vec<ClassSamples>) -> Result<Self> {
        if classes.len() < 2 {
            return Err(Error::NotEnoughClasses {
                needed: 2,
                available: classes.len(),
            });
        }
        let mut seen = HashSet::new();
        for c in &classes {
            if !seen.insert(c.id.as_str()) {
                return Err(Error::DuplicateClass(c.id.clone()));
            }
            if c.samples.rows() == 0 {
                return Err(Error::EmptyClass(c.id.clone()));
            }
            if c.samples.cols() != p {
                return Err(Error::ShapeMismatch(format!(
                    "class {} has {} columns, expected {p}",
                    c.id,
                    c.samples.cols()
                )));
            }
            if !c.samples.is_finite() {
                return Err(Error::NonFinite(format!("class {}", c.id)));
            }
        }
        Ok(Self { p, classes })
    }

    /// Convenience constructor from `(id, rows)` pairs.
    pub fn from_class_rows<S: Into<String>, R: AsRef<[f64]>>(
        classes: Vec<(S, Vec<R>)>,
    ) -> Result<Self> {
        let mut out = Vec::with_capacity(classes.len());
        let mut p = None;
        for (id, rows) in classes {
            let samples = Matrix::from_rows(&rows)?;
            if rows.is_empty() {
                let id: String = id.into();
                return Err(Error::EmptyClass(id));
            }
            p.get_or_insert(samples.cols());
            out.push(ClassSamples {
                id: id.into(),
                samples,
            });
        }
        Self::new(p.unwrap_or(0), out)
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn classes(&self) -> &[ClassSamples] {
        &self.classes
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn class_ids(&self) -> impl Iterator<Item = &str> {
        self.classes.iter().map(|c| c.id.as_str())
    }

    /// Smallest per-class sample count.
    pub fn min_class_size(&self) -> usize {
        self.classes
            .iter()
            .map(ClassSamples::count)
            .min()
            .unwrap_or(0)
    }

    /// Largest sample norm over the whole dataset.
    pub fn max_norm(&self) -> f64 {
        self.classes
            .iter()
            .flat_map(|c| c.samples.row_iter())
            .map(crate::numerics::norm)
            .fold(0.0, f64::max)
    }

    /// Copy with every coordinate passed through `f`.
    pub fn map_samples(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Self> {
        let mut classes = Vec::with_capacity(self.classes.len());
        let mut p = None;
        for c in &self.classes {
            let rows: Vec<Vec<f64>> = c.samples.row_iter().map(&mut f).collect();
            let samples = Matrix::from_rows(&rows)?;
            p.get_or_insert(samples.cols());
            classes.push(ClassSamples {
                id: c.id.clone(),
                samples,
            });
        }
        Self::new(p.unwrap_or(0), classes)
    }
}

/// Load from `path`; `.csv`/`.txt` files are CSV without header, anything else is `NCEB1` binary.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingDataset> {
    load_embeddings_with(path, false)
}

/// Like [`load_embeddings`], with an explicit CSV header flag.
pub fn load_embeddings_with(path: impl AsRef<Path>, csv_header: bool) -> Result<EmbeddingDataset> {
    let path = path.as_ref();
    let reader = super::open(path)?;
    if super::is_csv(path) {
        read_embeddings_csv(reader, csv_header)
    } else {
        read_embeddings_binary(reader)
    }
}

pub fn save_embeddings(path: impl AsRef<Path>, ds: &EmbeddingDataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_embeddings_binary(&mut w, ds)?;
    w.flush()?;
    Ok(())
}

pub fn save_embeddings_csv(path: impl AsRef<Path>, ds: &EmbeddingDataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_embeddings_csv(&mut w, ds)?;
    w.flush()?;
    Ok(())
}

/// Parses `class_id,x_1,...,x_p` rows. Class order follows first appearance.
pub fn read_embeddings_csv<R: Read>(reader: R, has_header: bool) -> Result<EmbeddingDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<f64>> = HashMap::new();
    let mut p: Option<usize> = None;

    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        if rec.is_empty() || (rec.len() == 1 && rec[0].is_empty()) {
            continue;
        }
        let id = rec[0].to_string();
        let width = rec.len() - 1;
        match p {
            None => p = Some(width),
            Some(p) if p != width => {
                return Err(Error::ShapeMismatch(format!(
                    "record {} has {width} values, expected {p}",
                    line + 1
                )))
            }
            _ => {}
        }
        let entry = rows.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Vec::new()
        });
        for field in rec.iter().skip(1) {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Parse(format!("record {}: bad number {field:?}", line + 1)))?;
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("record {}", line + 1)));
            }
            entry.push(v);
        }
    }

    let p = p.unwrap_or(0);
    let mut classes = Vec::with_capacity(order.len());
    for id in order {
        let data = rows.remove(&id).unwrap_or_default();
        let m = if p == 0 { 0 } else { data.len() / p };
        classes.push(ClassSamples {
            id,
            samples: Matrix::from_vec(m, p, data)?,
        });
    }
    EmbeddingDataset::new(p, classes)
}

pub fn write_embeddings_csv<W: Write>(w: &mut W, ds: &EmbeddingDataset) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for c in ds.classes() {
        for r in c.samples.row_iter() {
            let mut rec = Vec::with_capacity(r.len() + 1);
            rec.push(c.id.clone());
            rec.extend(r.iter().map(|v| format!("{v:?}")));
            wtr.write_record(&rec)
                .map_err(|e| Error::Parse(e.to_string()))?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Reads the `NCEB1` layout: magic, `u32 p`, `u32 classes`, then per class
/// `u16 id_len`, UTF-8 id, `u32 m_c` and `m_c * p` little-endian `f32`s, row-major.
pub fn read_embeddings_binary<R: Read>(mut r: R) -> Result<EmbeddingDataset> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)
        .map_err(|_| Error::BadMagic { expected: "NCEB1" })?;
    if &magic != EMBEDDINGS_MAGIC {
        return Err(Error::BadMagic { expected: "NCEB1" });
    }
    let p = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
    let count = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
    let mut classes = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let id_len = r.read_u16::<LittleEndian>().map_err(truncated)? as usize;
        let mut id = vec![0u8; id_len];
        r.read_exact(&mut id).map_err(truncated)?;
        let id = String::from_utf8(id).map_err(|e| Error::Parse(format!("class id: {e}")))?;
        let m = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
        let mut data = Vec::with_capacity((m * p).min(1 << 24));
        for _ in 0..m * p {
            let v = r.read_f32::<LittleEndian>().map_err(truncated)?;
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("class {id}")));
            }
            data.push(f64::from(v));
        }
        classes.push(ClassSamples {
            id,
            samples: Matrix::from_vec(m, p, data)?,
        });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::ShapeMismatch(
            "trailing bytes after last class".into(),
        ));
    }
    EmbeddingDataset::new(p, classes)
}

/// Writes the `NCEB1` layout. Values are narrowed to `f32`.
pub fn write_embeddings_binary<W: Write>(w: &mut W, ds: &EmbeddingDataset) -> Result<()> {
    w.write_all(EMBEDDINGS_MAGIC)?;
    w.write_u32::<LittleEndian>(to_u32(ds.dim())?)?;
    w.write_u32::<LittleEndian>(to_u32(ds.class_count())?)?;
    for c in ds.classes() {
        let id = c.id.as_bytes();
        let id_len = u16::try_from(id.len())
            .map_err(|_| Error::ShapeMismatch(format!("class id {} too long", c.id)))?;
        w.write_u16::<LittleEndian>(id_len)?;
        w.write_all(id)?;
        w.write_u32::<LittleEndian>(to_u32(c.count())?)?;
        for &v in c.samples.as_slice() {
            w.write_f32::<LittleEndian>(v as f32)?;
        }
    }
    Ok(())
}

pub(crate) fn to_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::ShapeMismatch(format!("{v} does not fit in u32")))
}

pub(crate) fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::ShapeMismatch("file truncated".into())
    } else {
        e.into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_class() -> EmbeddingDataset {
        EmbeddingDataset::from_class_rows(vec![
            ("cat", vec![vec![0.0, 1.0], vec![0.5, -2.25]]),
            ("dog", vec![vec![1.0, 0.0]]),
        ])
        .unwrap()
    }

    #[test]
    fn smallest_csv() {
        let ds = read_embeddings_csv("cat,0.0,1.0\ndog,1.0,0.0\n".as_bytes(), false).unwrap();
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.class_count(), 2);
        assert_eq!(ds.classes()[0].id, "cat");
        assert_eq!(ds.classes()[0].count(), 1);
        assert_eq!(ds.classes()[1].samples.row(0), &[1.0, 0.0]);
    }

    #[test]
    fn csv_with_header_and_interleaved_classes() {
        let text = "label,a,b\ncat,0,1\ndog,1,0\ncat,2,3\n";
        let ds = read_embeddings_csv(text.as_bytes(), true).unwrap();
        assert_eq!(ds.classes()[0].count(), 2);
        assert_eq!(ds.classes()[0].samples.row(1), &[2.0, 3.0]);
    }

    #[test]
    fn csv_nan_rejected() {
        let err = read_embeddings_csv("cat,NaN,1\ndog,1,0\n".as_bytes(), false).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn csv_ragged_rejected() {
        let err = read_embeddings_csv("cat,0,1\ndog,1\n".as_bytes(), false).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)));
    }

    #[test]
    fn single_class_rejected() {
        let err = read_embeddings_csv("cat,0,1\ncat,1,0\n".as_bytes(), false).unwrap_err();
        assert!(matches!(err, Error::NotEnoughClasses { .. }));
    }

    #[test]
    fn binary_round_trip_bit_exact() {
        let ds = two_class();
        let mut buf = Vec::new();
        write_embeddings_binary(&mut buf, &ds).unwrap();
        let back = read_embeddings_binary(buf.as_slice()).unwrap();
        assert_eq!(back, ds);
        let mut buf2 = Vec::new();
        write_embeddings_binary(&mut buf2, &back).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn binary_layout_is_exact() {
        let ds = EmbeddingDataset::from_class_rows(vec![
            ("a", vec![vec![1.0]]),
            ("bc", vec![vec![-2.0], vec![0.5]]),
        ])
        .unwrap();
        let mut buf = Vec::new();
        write_embeddings_binary(&mut buf, &ds).unwrap();
        let mut expected = b"NCEB1".to_vec();
        expected.extend(1u32.to_le_bytes());
        expected.extend(2u32.to_le_bytes());
        expected.extend(1u16.to_le_bytes());
        expected.extend(b"a");
        expected.extend(1u32.to_le_bytes());
        expected.extend(1.0f32.to_le_bytes());
        expected.extend(2u16.to_le_bytes());
        expected.extend(b"bc");
        expected.extend(2u32.to_le_bytes());
        expected.extend((-2.0f32).to_le_bytes());
        expected.extend(0.5f32.to_le_bytes());
        assert_eq!(buf, expected);
    }

    #[test]
    fn binary_errors() {
        assert!(matches!(
            read_embeddings_binary(&b"NCEB2\0\0\0\0"[..]),
            Err(Error::BadMagic { .. })
        ));

        let ds = two_class();
        let mut buf = Vec::new();
        write_embeddings_binary(&mut buf, &ds).unwrap();
        assert!(matches!(
            read_embeddings_binary(&buf[..buf.len() - 2]),
            Err(Error::ShapeMismatch(_))
        ));

        let mut extra = buf.clone();
        extra.push(0);
        assert!(matches!(
            read_embeddings_binary(extra.as_slice()),
            Err(Error::ShapeMismatch(_))
        ));

        // patch first value of "cat" to NaN: header 5+4+4, id_len 2, "cat" 3, m 4
        let mut nan = buf.clone();
        let off = 5 + 4 + 4 + 2 + 3 + 4;
        nan[off..off + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            read_embeddings_binary(nan.as_slice()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn duplicate_class_rejected() {
        let mut buf = Vec::new();
        buf.extend(b"NCEB1");
        buf.extend(1u32.to_le_bytes());
        buf.extend(2u32.to_le_bytes());
        for _ in 0..2 {
            buf.extend(1u16.to_le_bytes());
            buf.extend(b"x");
            buf.extend(1u32.to_le_bytes());
            buf.extend(0.0f32.to_le_bytes());
        }
        assert!(matches!(
            read_embeddings_binary(buf.as_slice()),
            Err(Error::DuplicateClass(id)) if id == "x"
        ));
    }

    #[test]
    fn empty_class_rejected() {
        let mut buf = Vec::new();
        buf.extend(b"NCEB1");
        buf.extend(1u32.to_le_bytes());
        buf.extend(2u32.to_le_bytes());
        buf.extend(1u16.to_le_bytes());
        buf.extend(b"x");
        buf.extend(0u32.to_le_bytes());
        buf.extend(1u16.to_le_bytes());
        buf.extend(b"y");
        buf.extend(1u32.to_le_bytes());
        buf.extend(0.0f32.to_le_bytes());
        assert!(matches!(
            read_embeddings_binary(buf.as_slice()),
            Err(Error::EmptyClass(_))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let ds = two_class();
        let mut buf = Vec::new();
        write_embeddings_csv(&mut buf, &ds).unwrap();
        let back = read_embeddings_csv(buf.as_slice(), false).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn missing_file() {
        let err = load_embeddings("/definitely/not/here.nceb").unwrap_err();
        assert!(matches!(err, Error::FileNotFound(_)));
    }
}
