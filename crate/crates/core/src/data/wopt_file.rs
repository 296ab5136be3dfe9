//! Flat binary container for row-vector datasets.
//!
//! ```text
//! "WOPT1"                      5 bytes
//! M, C, count                  u32 little-endian each
//! count × { label u32, M × f64 }   little-endian
//! ```

use std::io::{Read, Write};

use super::Dataset;
use crate::error::{mismatch, Error, Result};
use crate::linalg::Matrix;

pub const WOPT_MAGIC: &[u8; 5] = b"WOPT1";

pub fn write_wopt<W: Write>(mut out: W, ds: &Dataset) -> Result<()> {
    let m = match ds.sample_shape() {
        Some((1, m)) => m,
        Some((n, _)) => {
            return Err(Error::DataFormat(format!(
                "only row-vector samples are supported, got {n} rows"
            )))
        }
        None => 0,
    };
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::DataFormat(format!("{what} {v} exceeds u32")))
    };
    out.write_all(WOPT_MAGIC)?;
    for v in [
        to_u32(m, "dim")?,
        to_u32(ds.classes, "classes")?,
        to_u32(ds.len(), "count")?,
    ] {
        out.write_all(&v.to_le_bytes())?;
    }
    for (x, &label) in ds.samples.iter().zip(&ds.labels) {
        if x.shape() != (1, m) {
            return Err(mismatch(
                "wopt sample",
                format!("1x{m}"),
                format!("{}x{}", x.rows(), x.cols()),
            ));
        }
        out.write_all(&to_u32(label, "label")?.to_le_bytes())?;
        for v in x.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_wopt<R: Read>(mut input: R) -> Result<Dataset> {
    let mut magic = [0u8; 5];
    input.read_exact(&mut magic)?;
    if &magic != WOPT_MAGIC {
        return Err(Error::DataFormat("bad magic".into()));
    }
    let mut word = [0u8; 4];
    let mut next_u32 = |input: &mut R| -> Result<usize> {
        input.read_exact(&mut word)?;
        Ok(u32::from_le_bytes(word) as usize)
    };
    let m = next_u32(&mut input)?;
    let classes = next_u32(&mut input)?;
    let count = next_u32(&mut input)?;
    let mut samples = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    let mut buf = vec![0u8; 8 * m];
    for _ in 0..count {
        let label = next_u32(&mut input)?;
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        input.read_exact(&mut buf)?;
        let row = buf
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        samples.push(Matrix::from_vec(1, m, row)?);
        labels.push(label);
    }
    Ok(Dataset {
        samples,
        labels,
        classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_layout() {
        let ds = Dataset {
            samples: vec![
                Matrix::from_rows(&[vec![1.5, -2.0]]),
                Matrix::from_rows(&[vec![0.0, 3.25]]),
            ],
            labels: vec![1, 0],
            classes: 2,
        };
        let mut bytes = Vec::new();
        write_wopt(&mut bytes, &ds).unwrap();
        assert_eq!(bytes.len(), 5 + 12 + 2 * (4 + 16));
        assert_eq!(&bytes[5..9], &2u32.to_le_bytes());
        assert_eq!(&bytes[17..21], &1u32.to_le_bytes());
        assert_eq!(&bytes[21..29], &1.5f64.to_le_bytes());
        assert_eq!(read_wopt(bytes.as_slice()).unwrap(), ds);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(read_wopt(&b"WOPT2\0\0\0\0"[..]).is_err());
        let ds = Dataset {
            samples: vec![Matrix::zeros(1, 3)],
            labels: vec![0],
            classes: 1,
        };
        let mut bytes = Vec::new();
        write_wopt(&mut bytes, &ds).unwrap();
        bytes.pop();
        assert!(read_wopt(bytes.as_slice()).is_err());
    }
}
