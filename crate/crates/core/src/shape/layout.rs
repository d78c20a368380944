use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::FlatTensor;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

/// Ordered, contiguous partition of a flat vector into named layers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerLayout {
    entries: Vec<LayerEntry>,
    total: usize,
}

impl LayerLayout {
    /// Builds a layout from `(name, shape)` pairs laid out back to back.
    pub fn new<S: Into<String>>(layers: impl IntoIterator<Item = (S, Vec<usize>)>) -> Result<Self> {
        let mut entries = Vec::new();
        let mut offset = 0usize;
        for (name, shape) in layers {
            let name = name.into();
            if shape.is_empty() || shape.iter().any(|&d| d == 0) {
                return Err(Error::Layout(format!(
                    "layer {name:?} has empty or zero-sized shape {shape:?}"
                )));
            }
            let len: usize = shape.iter().product();
            entries.push(LayerEntry {
                name,
                shape,
                offset,
                len,
            });
            offset += len;
        }
        if offset == 0 {
            return Err(Error::Layout("layout has no elements".into()));
        }
        Ok(Self {
            entries,
            total: offset,
        })
    }

    /// One unnamed rank-1 layer of length `len`.
    pub fn flat(len: usize) -> Result<Self> {
        Self::new([("flat", vec![len])])
    }

    pub fn entries(&self) -> &[LayerEntry] {
        &self.entries
    }

    pub fn layer_count(&self) -> usize {
        self.entries.len()
    }

    /// Total element count `L`.
    pub fn total_len(&self) -> usize {
        self.total
    }

    pub fn shapes(&self) -> Vec<Vec<usize>> {
        self.entries.iter().map(|e| e.shape.clone()).collect()
    }

    /// The slice of `data` belonging to layer `i`.
    pub fn slice<'a>(&self, data: &'a [f32], i: usize) -> &'a [f32] {
        let e = &self.entries[i];
        &data[e.offset..e.offset + e.len]
    }

    /// Same layer shapes in the same order; names are not compared.
    pub fn same_shapes(&self, other: &LayerLayout) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.shape == b.shape)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientRole {
    /// The true client gradient.
    Clean,
    /// What the client actually shares after clipping and noise.
    Perturbed,
    /// Output of the diffusion denoiser.
    Recovered,
    /// Harvested by the attacker from its own surrogate model.
    Surrogate,
}

/// A flat gradient together with its layer structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientVector {
    values: FlatTensor,
    layout: LayerLayout,
    role: GradientRole,
}

impl GradientVector {
    pub fn new(values: FlatTensor, layout: LayerLayout, role: GradientRole) -> Result<Self> {
        if values.len() != layout.total_len() {
            return Err(Error::Layout(format!(
                "gradient has {} values but its layout describes {}",
                values.len(),
                layout.total_len()
            )));
        }
        let values = if values.shape().len() == 1 {
            values
        } else {
            let n = values.len();
            values.reshape(vec![n])?
        };
        Ok(Self {
            values,
            layout,
            role,
        })
    }

    pub fn from_vec(data: Vec<f32>, layout: LayerLayout, role: GradientRole) -> Result<Self> {
        Self::new(FlatTensor::from_vec(data)?, layout, role)
    }

    /// Skips the finiteness scan; the caller guarantees consistency.
    pub(crate) fn from_parts_unchecked(
        data: Vec<f32>,
        layout: LayerLayout,
        role: GradientRole,
    ) -> Self {
        debug_assert_eq!(data.len(), layout.total_len());
        let n = data.len();
        Self {
            values: FlatTensor::from_parts_unchecked(vec![n], data),
            layout,
            role,
        }
    }

    pub fn values(&self) -> &FlatTensor {
        &self.values
    }

    pub fn data(&self) -> &[f32] {
        self.values.data()
    }

    pub fn layout(&self) -> &LayerLayout {
        &self.layout
    }

    pub fn role(&self) -> GradientRole {
        self.role
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn layer(&self, i: usize) -> &[f32] {
        self.layout.slice(self.values.data(), i)
    }

    pub fn with_role(mut self, role: GradientRole) -> Self {
        self.role = role;
        self
    }

    pub fn norm(&self) -> f64 {
        self.values.norm()
    }

    pub fn into_data(self) -> Vec<f32> {
        self.values.into_data()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_are_contiguous() {
        let l = LayerLayout::new([("a", vec![4]), ("b", vec![2, 4]), ("c", vec![16])]).unwrap();
        let offs: Vec<_> = l.entries().iter().map(|e| e.offset).collect();
        assert_eq!(offs, vec![0, 4, 12]);
        assert_eq!(l.total_len(), 28);
        let data: Vec<f32> = (0..28).map(|v| v as f32).collect();
        assert_eq!(l.slice(&data, 1), &data[4..12]);
    }

    #[test]
    fn rejects_empty() {
        assert!(LayerLayout::new(Vec::<(String, Vec<usize>)>::new()).is_err());
        assert!(LayerLayout::new([("a", vec![0])]).is_err());
    }

    #[test]
    fn gradient_length_must_match_layout() {
        let l = LayerLayout::flat(3).unwrap();
        assert!(GradientVector::from_vec(vec![1.0, 2.0], l.clone(), GradientRole::Clean).is_err());
        let g = GradientVector::from_vec(vec![1.0, 2.0, 3.0], l, GradientRole::Clean).unwrap();
        assert_eq!(g.with_role(GradientRole::Perturbed).role(), GradientRole::Perturbed);
    }
}
