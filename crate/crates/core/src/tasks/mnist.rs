//! IDX container reader for MNIST images (magic 2051) and labels (magic 2049).

use std::path::Path;

use super::{Dataset, Split, TaskError, Targets};
use crate::tensor::Tensor;

const IMAGE_MAGIC: u32 = 2051;
const LABEL_MAGIC: u32 = 2049;

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32, TaskError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| TaskError::Format {
            offset,
            detail: "truncated header".into(),
        })
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<(), TaskError> {
    let magic = read_u32(bytes, 0)?;
    if magic != expected {
        return Err(TaskError::Format {
            offset: 0,
            detail: format!("magic {magic}, expected {expected}"),
        });
    }
    Ok(())
}

/// Images as `[n, rows·cols]` raw intensities in `0..=255`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Tensor, TaskError> {
    check_magic(bytes, IMAGE_MAGIC)?;
    let n = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let d = rows * cols;
    let body = &bytes[16..];
    if body.len() < n * d {
        return Err(TaskError::Format {
            offset: 16 + body.len(),
            detail: format!("expected {} pixel bytes, found {}", n * d, body.len()),
        });
    }
    let data = body[..n * d].iter().map(|&b| f64::from(b)).collect();
    Ok(Tensor::new(vec![n, d], data)?)
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>, TaskError> {
    check_magic(bytes, LABEL_MAGIC)?;
    let n = read_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() < n {
        return Err(TaskError::Format {
            offset: 8 + body.len(),
            detail: format!("expected {n} label bytes, found {}", body.len()),
        });
    }
    Ok(body[..n].iter().map(|&b| usize::from(b)).collect())
}

pub fn load_mnist_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    split: Split,
) -> Result<Dataset, TaskError> {
    let images = parse_idx_images(&std::fs::read(images_path)?)?;
    let label_bytes = std::fs::read(labels_path)?;
    let labels = parse_idx_labels(&label_bytes)?;
    if labels.len() != images.shape()[0] {
        return Err(TaskError::Format {
            offset: 4,
            detail: format!("{} labels for {} images", labels.len(), images.shape()[0]),
        });
    }
    Dataset::new(images, Targets::Classes(labels), split)
}

/// Encodes `[n, rows·cols]` byte-valued images as IDX.
pub fn write_idx_images(images: &Tensor, rows: usize, cols: usize) -> Result<Vec<u8>, TaskError> {
    if images.rank() != 2 || images.shape()[1] != rows * cols {
        return Err(TaskError::Shape(format!("images {:?} vs {rows}x{cols}", images.shape())));
    }
    let mut out = Vec::with_capacity(16 + images.len());
    for v in [IMAGE_MAGIC, images.shape()[0] as u32, rows as u32, cols as u32] {
        out.extend(v.to_be_bytes());
    }
    for &v in images.values() {
        if !(0.0..=255.0).contains(&v) || v.fract() != 0.0 {
            return Err(TaskError::Domain(format!("pixel {v} is not a byte")));
        }
        out.push(v as u8);
    }
    Ok(out)
}

pub fn write_idx_labels(labels: &[usize]) -> Result<Vec<u8>, TaskError> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend(LABEL_MAGIC.to_be_bytes());
    out.extend((labels.len() as u32).to_be_bytes());
    for &l in labels {
        out.push(u8::try_from(l).map_err(|_| TaskError::Domain(format!("label {l} exceeds a byte")))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_dimensions() {
        let mut bytes = vec![0x00, 0x00, 0x08, 0x03];
        for v in [60000u32, 28, 28] {
            bytes.extend(v.to_be_bytes());
        }
        assert_eq!(read_u32(&bytes, 0).unwrap(), 2051);
        assert_eq!(read_u32(&bytes, 4).unwrap(), 60000);
        bytes.resize(16 + 60000 * 784, 0);
        let images = parse_idx_images(&bytes).unwrap();
        assert_eq!(images.shape(), &[60000, 784]);
        assert!(images.row(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn format_errors_carry_offsets() {
        let err = parse_idx_images(&[0, 0, 8, 1, 0, 0, 0, 0]).unwrap_err();
        assert!(matches!(err, TaskError::Format { offset: 0, .. }));
        let err = parse_idx_images(&[0, 0, 8, 3, 0, 0]).unwrap_err();
        assert!(matches!(err, TaskError::Format { offset: 4, .. }));
        let mut bytes = write_idx_labels(&[1, 2, 3]).unwrap();
        bytes.pop();
        assert!(matches!(parse_idx_labels(&bytes), Err(TaskError::Format { offset: 10, .. })));
    }
}
