//! Labelled image sets: attacker probes and simulated client data.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{FlatTensor, RngState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProbeSource {
    /// Independent `U(0, 1)` pixels.
    Uniform { seed: u64 },
    /// Smooth random blob images.
    Synthetic { seed: u64 },
    /// Read from an IDX image/label pair.
    IdxFile { images: PathBuf, labels: PathBuf },
}

/// A nonempty list of `(image, label)` pairs sharing one input shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeDataset {
    samples: Vec<(FlatTensor, usize)>,
    input_shape: Vec<usize>,
    classes: usize,
    source: ProbeSource,
}

impl ProbeDataset {
    pub fn new(
        samples: Vec<(FlatTensor, usize)>,
        input_shape: Vec<usize>,
        classes: usize,
        source: ProbeSource,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Input("dataset is empty".into()));
        }
        let want: usize = input_shape.iter().product();
        for (i, (x, y)) in samples.iter().enumerate() {
            if x.len() != want {
                return Err(Error::Shape(format!(
                    "sample {i} has {} values, expected {input_shape:?}",
                    x.len()
                )));
            }
            if *y >= classes {
                return Err(Error::Input(format!(
                    "sample {i} has label {y} but there are {classes} classes"
                )));
            }
        }
        Ok(Self {
            samples,
            input_shape,
            classes,
            source,
        })
    }

    pub fn samples(&self) -> &[(FlatTensor, usize)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn source(&self) -> &ProbeSource {
        &self.source
    }

    /// Keeps the first `n` samples.
    pub fn truncate(mut self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Input("cannot truncate a dataset to zero samples".into()));
        }
        self.samples.truncate(n);
        Ok(self)
    }
}

fn check_request(input_shape: &[usize], classes: usize, n: usize) -> Result<usize> {
    let d: usize = input_shape.iter().product();
    if d == 0 || input_shape.is_empty() || classes == 0 || n == 0 {
        return Err(Error::Parameter(format!(
            "need a positive shape, class count and sample count (shape {input_shape:?}, classes {classes}, n {n})"
        )));
    }
    Ok(d)
}

/// Images with i.i.d. `U(0, 1)` pixels and uniform labels.
pub fn uniform_dataset(seed: u64, input_shape: &[usize], classes: usize, n: usize) -> Result<ProbeDataset> {
    let d = check_request(input_shape, classes, n)?;
    let root = RngState::new(seed);
    let samples = (0..n)
        .map(|i| {
            let mut r = root.derive(&[i as u64]);
            let label = r.next_below(classes as u64) as usize;
            let px = (0..d).map(|_| r.next_f64() as f32).collect();
            (FlatTensor::from_parts_unchecked(input_shape.to_vec(), px), label)
        })
        .collect();
    ProbeDataset::new(
        samples,
        input_shape.to_vec(),
        classes,
        ProbeSource::Uniform { seed },
    )
}

/// Images made of three Gaussian blobs each, rescaled so the maximum is 1.
///
/// The last two dimensions of `input_shape` are the spatial ones; every
/// channel gets the same picture. Labels are uniform.
pub fn synthetic_dataset(seed: u64, input_shape: &[usize], classes: usize, n: usize) -> Result<ProbeDataset> {
    let d = check_request(input_shape, classes, n)?;
    let (h, w) = match input_shape {
        [.., h, w] => (*h, *w),
        [d] => (1, *d),
        [] => unreachable!(),
    };
    let channels = d / (h * w);
    let root = RngState::new(seed);
    let samples = (0..n)
        .map(|i| {
            let mut r = root.derive(&[i as u64]);
            let label = r.next_below(classes as u64) as usize;
            let mut img = vec![0.0f64; h * w];
            for _ in 0..3 {
                let (cy, cx) = (r.next_f64(), r.next_f64());
                let width = 0.1 + 0.2 * r.next_f64();
                let amp = r.next_f64();
                for (y, row) in img.chunks_mut(w).enumerate() {
                    let fy = if h > 1 { y as f64 / (h - 1) as f64 } else { 0.5 };
                    for (x, v) in row.iter_mut().enumerate() {
                        let fx = if w > 1 { x as f64 / (w - 1) as f64 } else { 0.5 };
                        let d2 = (fy - cy).powi(2) + (fx - cx).powi(2);
                        *v += amp * (-d2 / (2.0 * width * width)).exp();
                    }
                }
            }
            let peak = img.iter().cloned().fold(1e-6, f64::max);
            let mut px = Vec::with_capacity(d);
            for _ in 0..channels {
                px.extend(img.iter().map(|v| (v / peak) as f32));
            }
            (FlatTensor::from_parts_unchecked(input_shape.to_vec(), px), label)
        })
        .collect();
    ProbeDataset::new(
        samples,
        input_shape.to_vec(),
        classes,
        ProbeSource::Synthetic { seed },
    )
}
