//! Binary tensor file.
//!
//! ```text
//! "PGRD" | u32 version | u32 layer count
//! | per layer: u32 name length, name bytes (UTF-8), u32 rank, u32 dims...
//! | u8 role | u64 seed | [u8; 32] config digest | f32 payload...
//! ```
//!
//! Little-endian throughout. The payload holds exactly the sum of the layer
//! sizes.

use std::path::Path;

use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::harness::io::{read_artifact, write_atomic};
use crate::shape::{GradientRole, GradientVector, LayerLayout};

pub const GRADIENT_MAGIC: &[u8; 4] = b"PGRD";
pub const GRADIENT_VERSION: u32 = 1;

/// What a [`GradientFile`] payload holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileRole {
    Gradient(GradientRole),
    /// Model parameters.
    Parameters,
    /// Images, labels or label logits.
    Image,
}

impl FileRole {
    fn byte(self) -> u8 {
        match self {
            FileRole::Gradient(GradientRole::Clean) => 0,
            FileRole::Gradient(GradientRole::Perturbed) => 1,
            FileRole::Gradient(GradientRole::Recovered) => 2,
            FileRole::Gradient(GradientRole::Surrogate) => 3,
            FileRole::Parameters => 4,
            FileRole::Image => 5,
        }
    }

    fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            0 => FileRole::Gradient(GradientRole::Clean),
            1 => FileRole::Gradient(GradientRole::Perturbed),
            2 => FileRole::Gradient(GradientRole::Recovered),
            3 => FileRole::Gradient(GradientRole::Surrogate),
            4 => FileRole::Parameters,
            5 => FileRole::Image,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientFile {
    pub layout: LayerLayout,
    pub role: FileRole,
    pub seed: u64,
    pub digest: [u8; 32],
    pub payload: Vec<f32>,
}

impl GradientFile {
    pub fn new(
        layout: LayerLayout,
        role: FileRole,
        seed: u64,
        digest: [u8; 32],
        payload: Vec<f32>,
    ) -> Result<Self> {
        if payload.len() != layout.total_len() {
            return Err(Error::Layout(format!(
                "payload has {} values, layout needs {}",
                payload.len(),
                layout.total_len()
            )));
        }
        Ok(Self {
            layout,
            role,
            seed,
            digest,
            payload,
        })
    }

    pub fn from_gradient(g: &GradientVector, seed: u64, digest: [u8; 32]) -> Self {
        Self {
            layout: g.layout().clone(),
            role: FileRole::Gradient(g.role()),
            seed,
            digest,
            payload: g.data().to_vec(),
        }
    }

    /// The payload as a gradient; fails for parameter and image files.
    pub fn to_gradient(&self) -> Result<GradientVector> {
        match self.role {
            FileRole::Gradient(role) => {
                GradientVector::from_vec(self.payload.clone(), self.layout.clone(), role)
            }
            other => Err(Error::Input(format!("file holds {other:?}, not a gradient"))),
        }
    }

    /// The values of the layer called `name`.
    pub fn layer(&self, name: &str) -> Result<(&[usize], &[f32])> {
        let e = self
            .layout
            .entries()
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::Input(format!("file has no layer {name:?}")))?;
        Ok((&e.shape, &self.payload[e.offset..e.offset + e.len]))
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut w = Writer::new();
        w.bytes(GRADIENT_MAGIC);
        w.u32(GRADIENT_VERSION);
        w.u32(fit(self.layout.layer_count(), "layer count")?);
        for e in self.layout.entries() {
            w.u32(fit(e.name.len(), "name length")?);
            w.bytes(e.name.as_bytes());
            w.u32(fit(e.shape.len(), "rank")?);
            for &d in &e.shape {
                w.u32(fit(d, "dimension")?);
            }
        }
        w.u8(self.role.byte());
        w.u64(self.seed);
        w.bytes(&self.digest);
        w.f32s(&self.payload);
        Ok(w.finish())
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(GRADIENT_MAGIC)?;
        let at = r.offset();
        let version = r.u32("version")?;
        if version != GRADIENT_VERSION {
            return Err(Error::Format {
                offset: at,
                message: format!("unsupported gradient file version {version}"),
            });
        }
        let count = r.u32("layer count")?;
        let mut layers = Vec::new();
        for _ in 0..count {
            let n = r.u32("name length")? as usize;
            let at = r.offset();
            let name = std::str::from_utf8(r.take(n, "layer name")?)
                .map_err(|_| Error::Format {
                    offset: at,
                    message: "layer name is not UTF-8".into(),
                })?
                .to_owned();
            let rank = r.u32("rank")? as usize;
            let at = r.offset();
            let mut shape = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                shape.push(r.u32("dimension")? as usize);
            }
            if shape.is_empty() || shape.contains(&0) {
                return Err(Error::Format {
                    offset: at,
                    message: format!("layer {name:?} has empty or zero-sized shape {shape:?}"),
                });
            }
            layers.push((name, shape));
        }
        let at = r.offset();
        let layout = LayerLayout::new(layers).map_err(|e| Error::Format {
            offset: at,
            message: e.to_string(),
        })?;
        let role_byte = r.u8("role")?;
        let role = FileRole::from_byte(role_byte).ok_or_else(|| Error::Format {
            offset: at,
            message: format!("unknown role byte {role_byte}"),
        })?;
        let seed = r.u64("seed")?;
        let digest = r.array32("digest")?;
        let payload = r.f32s(layout.total_len(), "payload")?;
        r.finish()?;
        Ok(Self {
            layout,
            role,
            seed,
            digest,
            payload,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&read_artifact(path)?)
    }
}

fn fit(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Layout(format!("{what} {v} does not fit in 32 bits")))
}
