//! IDX image and label files (big-endian, unsigned bytes).

use std::path::Path;

use crate::autodiff::{ProbeDataset, ProbeSource};
use crate::error::{Error, Result};
use crate::harness::io::read_artifact;
use crate::numeric::FlatTensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(b: &[u8], at: usize, what: &str) -> Result<u32> {
    b.get(at..at + 4)
        .map(|s| u32::from_be_bytes([s[0], s[1], s[2], s[3]]))
        .ok_or_else(|| Error::Format {
            offset: at as u64,
            message: format!("truncated before {what}"),
        })
}

fn body<'a>(b: &'a [u8], at: usize, len: usize, what: &str) -> Result<&'a [u8]> {
    let end = at.checked_add(len).ok_or_else(|| Error::Format {
        offset: at as u64,
        message: format!("{what} size overflows"),
    })?;
    if b.len() < end {
        return Err(Error::Format {
            offset: b.len() as u64,
            message: format!("truncated {what}: need {len} bytes from offset {at}"),
        });
    }
    if b.len() > end {
        return Err(Error::Format {
            offset: end as u64,
            message: format!("{} trailing bytes after {what}", b.len() - end),
        });
    }
    Ok(&b[at..end])
}

fn check_magic(b: &[u8], want: u32) -> Result<()> {
    let got = be_u32(b, 0, "magic")?;
    if got != want {
        return Err(Error::Format {
            offset: 0,
            message: format!("bad magic {got:#010x}, expected {want:#010x}"),
        });
    }
    Ok(())
}

/// Parses an image file into `(rows, cols, images)` with pixels scaled to
/// `[0, 1]`.
pub fn decode_idx_images(b: &[u8]) -> Result<(usize, usize, Vec<Vec<f32>>)> {
    check_magic(b, IDX_IMAGES_MAGIC)?;
    let n = be_u32(b, 4, "image count")? as usize;
    let rows = be_u32(b, 8, "row count")? as usize;
    let cols = be_u32(b, 12, "column count")? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::Format {
            offset: 8,
            message: "images must have positive size".into(),
        });
    }
    let per = rows * cols;
    let pixels = body(b, 16, n.saturating_mul(per), "pixel data")?;
    let images = pixels
        .chunks_exact(per)
        .map(|c| c.iter().map(|&p| f32::from(p) / 255.0).collect())
        .collect();
    Ok((rows, cols, images))
}

pub fn decode_idx_labels(b: &[u8]) -> Result<Vec<u8>> {
    check_magic(b, IDX_LABELS_MAGIC)?;
    let n = be_u32(b, 4, "label count")? as usize;
    Ok(body(b, 8, n, "label data")?.to_vec())
}

/// Builds an image file from `[0, 1]` pixels; the inverse of
/// [`decode_idx_images`] up to 8-bit quantization.
pub fn encode_idx_images(rows: usize, cols: usize, images: &[Vec<f32>]) -> Vec<u8> {
    let mut b = Vec::with_capacity(16 + images.len() * rows * cols);
    for v in [IDX_IMAGES_MAGIC, images.len() as u32, rows as u32, cols as u32] {
        b.extend_from_slice(&v.to_be_bytes());
    }
    for img in images {
        b.extend(img.iter().map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8));
    }
    b
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut b = Vec::with_capacity(8 + labels.len());
    b.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    b.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    b.extend_from_slice(labels);
    b
}

/// Loads an image/label pair as a dataset of `[1, rows, cols]` images.
///
/// Labels must be below `classes`. At most `cap` samples are kept.
pub fn load_idx_dataset(
    images: &Path,
    labels: &Path,
    classes: usize,
    cap: Option<usize>,
) -> Result<ProbeDataset> {
    let (rows, cols, imgs) = decode_idx_images(&read_artifact(images)?)?;
    let labs = decode_idx_labels(&read_artifact(labels)?)?;
    if imgs.len() != labs.len() {
        return Err(Error::Input(format!(
            "{} images but {} labels",
            imgs.len(),
            labs.len()
        )));
    }
    let keep = cap.unwrap_or(imgs.len()).min(imgs.len());
    let samples = imgs
        .into_iter()
        .zip(labs)
        .take(keep)
        .map(|(img, y)| Ok((FlatTensor::new(vec![1, rows, cols], img)?, usize::from(y))))
        .collect::<Result<Vec<_>>>()?;
    ProbeDataset::new(
        samples,
        vec![1, rows, cols],
        classes,
        ProbeSource::IdxFile {
            images: images.to_path_buf(),
            labels: labels.to_path_buf(),
        },
    )
}
