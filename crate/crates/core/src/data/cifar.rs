use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const CIFAR10_RECORD_LEN: usize = 3073;
const PIXELS: usize = 1024;
const CHANNELS: usize = 3;

/// Parses CIFAR-10 records. Each sample becomes a `1024×3` matrix: one row
/// per pixel position (row-major 32×32), one column per RGB channel.
pub fn parse_cifar10(bytes: &[u8], limit: Option<usize>) -> Result<Dataset> {
    if !bytes.len().is_multiple_of(CIFAR10_RECORD_LEN) {
        return Err(Error::DataFormat("size not multiple of 3073".into()));
    }
    let total = bytes.len() / CIFAR10_RECORD_LEN;
    let count = limit.map_or(total, |l| l.min(total));
    let mut samples = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for rec in bytes.chunks_exact(CIFAR10_RECORD_LEN).take(count) {
        let label = rec[0] as usize;
        if label > 9 {
            return Err(Error::DataFormat(format!("label byte {label} > 9")));
        }
        let mut x = Matrix::zeros(PIXELS, CHANNELS);
        for ch in 0..CHANNELS {
            let plane = &rec[1 + ch * PIXELS..1 + (ch + 1) * PIXELS];
            for (pos, &p) in plane.iter().enumerate() {
                x[(pos, ch)] = p as f64 / 255.0;
            }
        }
        samples.push(x);
        labels.push(label);
    }
    Ok(Dataset {
        samples,
        labels,
        classes: 10,
    })
}

pub fn load_cifar10_binary(path: impl AsRef<Path>, limit: Option<usize>) -> Result<Dataset> {
    let bytes = std::fs::read(path)?;
    parse_cifar10(&bytes, limit)
}

/// Loads the standard `cifar-10-batches-bin` layout: `data_batch_{1..5}.bin`
/// for training and `test_batch.bin` for testing.
pub fn load_cifar10_dir(
    dir: impl AsRef<Path>,
    train_limit: Option<usize>,
    test_limit: Option<usize>,
) -> Result<(Dataset, Dataset)> {
    let dir = dir.as_ref();
    let mut train = Dataset {
        classes: 10,
        ..Default::default()
    };
    for i in 1..=5 {
        let remaining = train_limit.map(|l| l.saturating_sub(train.len()));
        if remaining == Some(0) {
            break;
        }
        let part = load_cifar10_binary(dir.join(format!("data_batch_{i}.bin")), remaining)?;
        train.samples.extend(part.samples);
        train.labels.extend(part.labels);
    }
    let test = load_cifar10_binary(dir.join("test_batch.bin"), test_limit)?;
    Ok((train, test))
}
