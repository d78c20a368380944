use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::FlatTensor;
use crate::shape::{GradientRole, GradientVector, LayerLayout};

/// Lower bound on the normalization scale.
pub const SCALE_FLOOR: f64 = 1e-8;

/// How the grid side `g` relates to the gradient length `L`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridRule {
    /// Smallest `g` with `g*g > L`; perfect squares still get padding.
    #[default]
    Strict,
    /// Smallest `g` with `g*g >= L`.
    Inclusive,
}

/// Side length of the square grid holding `len` values.
pub fn grid_side(len: usize, rule: GridRule) -> usize {
    let mut g = (len as f64).sqrt() as usize;
    while g > 0 && g * g > len {
        g -= 1;
    }
    // g is now floor(sqrt(len))
    match rule {
        GridRule::Strict => g + 1,
        GridRule::Inclusive if g * g == len => g,
        GridRule::Inclusive => g + 1,
    }
}

/// A gradient flattened, optionally standardized and zero-padded into a
/// `1 x g x g` grid.
///
/// The first `len` grid entries hold `(v - offset) / scale`; the trailing
/// `padding` entries are zero. [`restore`] inverts this.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustedGrid {
    grid: FlatTensor,
    len: usize,
    padding: usize,
    scale: f64,
    offset: f64,
}

impl AdjustedGrid {
    /// Wraps an existing grid produced elsewhere, e.g. by the denoiser.
    pub fn from_parts(grid: FlatTensor, len: usize, scale: f64, offset: f64) -> Result<Self> {
        let shape = grid.shape();
        let side = match shape {
            [1, a, b] if a == b => *a,
            _ => return Err(Error::Shape(format!("grid must be 1 x g x g, got {shape:?}"))),
        };
        if len == 0 || len > side * side {
            return Err(Error::Layout(format!(
                "length {len} does not fit a {side}x{side} grid"
            )));
        }
        if !(scale > 0.0) || !scale.is_finite() || !offset.is_finite() {
            return Err(Error::Parameter(format!(
                "grid scale must be positive and finite (scale {scale}, offset {offset})"
            )));
        }
        Ok(Self {
            padding: side * side - len,
            grid,
            len,
            scale,
            offset,
        })
    }

    pub fn grid(&self) -> &FlatTensor {
        &self.grid
    }

    pub fn side(&self) -> usize {
        self.grid.shape()[1]
    }

    /// Original gradient length `L`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `P = g*g - L`.
    pub fn padding(&self) -> usize {
        self.padding
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Replaces the grid values, keeping the bookkeeping.
    pub fn with_grid(mut self, grid: FlatTensor) -> Result<Self> {
        if grid.shape() != self.grid.shape() {
            return Err(Error::Shape(format!(
                "replacement grid {:?} differs from {:?}",
                grid.shape(),
                self.grid.shape()
            )));
        }
        self.grid = grid;
        Ok(self)
    }

    /// Standardizes the value region with [`normalize`], keeping padding at 0.
    ///
    /// Applying this to an already normalized grid composes the two scales,
    /// so [`restore`] still returns the original values (up to rounding).
    pub fn normalized(self) -> Self {
        let values = &self.grid.data()[..self.len];
        let (scaled, s, off) = normalize_slice(values);
        let mut data = scaled;
        data.resize(self.len + self.padding, 0.0);
        Self {
            grid: FlatTensor::from_parts_unchecked(self.grid.shape().to_vec(), data),
            len: self.len,
            padding: self.padding,
            scale: self.scale * s,
            offset: self.offset + self.scale * off,
        }
    }
}

/// Flattens `g` in layout order and zero-pads it to the strict grid size.
///
/// No rescaling is applied, so [`restore`] reproduces `g` bit for bit.
/// Call [`AdjustedGrid::normalized`] to standardize for diffusion.
pub fn adjust(g: &GradientVector) -> AdjustedGrid {
    adjust_with(g, GridRule::Strict)
}

pub fn adjust_with(g: &GradientVector, rule: GridRule) -> AdjustedGrid {
    let len = g.len();
    let side = grid_side(len, rule);
    let mut data = Vec::with_capacity(side * side);
    data.extend_from_slice(g.data());
    data.resize(side * side, 0.0);
    AdjustedGrid {
        grid: FlatTensor::from_parts_unchecked(vec![1, side, side], data),
        len,
        padding: side * side - len,
        scale: 1.0,
        offset: 0.0,
    }
}

/// Drops padding, undoes normalization and re-slices per `layout`.
///
/// The result carries role `Recovered`; use
/// [`GradientVector::with_role`] to relabel.
pub fn restore(grid: &AdjustedGrid, layout: &LayerLayout) -> Result<GradientVector> {
    if layout.total_len() != grid.len {
        return Err(Error::Layout(format!(
            "layout describes {} values but the grid holds {}",
            layout.total_len(),
            grid.len
        )));
    }
    let values = &grid.grid.data()[..grid.len];
    let data = denormalize_slice(values, grid.scale, grid.offset);
    GradientVector::from_vec(data, layout.clone(), GradientRole::Recovered)
}

fn normalize_slice(v: &[f32]) -> (Vec<f32>, f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().map(|&x| f64::from(x)).sum::<f64>() / n;
    let var = v.iter().map(|&x| (f64::from(x) - mean).powi(2)).sum::<f64>() / n;
    let s = var.sqrt().max(SCALE_FLOOR);
    let scaled = v
        .iter()
        .map(|&x| ((f64::from(x) - mean) / s) as f32)
        .collect();
    (scaled, s, mean)
}

fn denormalize_slice(v: &[f32], scale: f64, offset: f64) -> Vec<f32> {
    if scale == 1.0 && offset == 0.0 {
        return v.to_vec();
    }
    v.iter()
        .map(|&x| (f64::from(x) * scale + offset) as f32)
        .collect()
}

/// Standardizes `v`: returns `((v - offset) / s, s, offset)` with
/// `offset = mean(v)` and `s = max(std(v), 1e-8)` (population std).
pub fn normalize(v: &FlatTensor) -> (FlatTensor, f64, f64) {
    let (scaled, s, off) = normalize_slice(v.data());
    (
        FlatTensor::from_parts_unchecked(v.shape().to_vec(), scaled),
        s,
        off,
    )
}

/// Inverse of [`normalize`].
pub fn denormalize(scaled: &FlatTensor, s: f64, offset: f64) -> FlatTensor {
    FlatTensor::from_parts_unchecked(
        scaled.shape().to_vec(),
        denormalize_slice(scaled.data(), s, offset),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{sample_gaussian, RngState};

    fn grad(data: Vec<f32>) -> GradientVector {
        let n = data.len();
        GradientVector::from_vec(data, LayerLayout::flat(n).unwrap(), GradientRole::Clean).unwrap()
    }

    #[test]
    fn side_examples() {
        assert_eq!(grid_side(10, GridRule::Strict), 4);
        assert_eq!(grid_side(3, GridRule::Strict), 2);
        assert_eq!(grid_side(16, GridRule::Strict), 5);
        assert_eq!(grid_side(16, GridRule::Inclusive), 4);
        assert_eq!(grid_side(1, GridRule::Strict), 2);
        assert_eq!(grid_side(1, GridRule::Inclusive), 1);
        assert_eq!(grid_side(8554, GridRule::Strict), 93);
    }

    #[test]
    fn adjust_pads_tail() {
        let a = adjust(&grad((1..=10).map(|v| v as f32).collect()));
        assert_eq!(a.side(), 4);
        assert_eq!(a.padding(), 6);
        assert!(a.grid().data()[10..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn roundtrip_keeps_signed_zero() {
        let g = grad(vec![-0.0, 1.5, -2.25]);
        let back = restore(&adjust(&g), g.layout()).unwrap();
        let bits: Vec<u32> = back.data().iter().map(|v| v.to_bits()).collect();
        let want: Vec<u32> = g.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits, want);
    }

    #[test]
    fn padding_edits_are_ignored() {
        let g = grad(vec![1.0, 2.0, 3.0]);
        let a = adjust(&g);
        let mut data = a.grid().data().to_vec();
        data[3] = 42.0;
        let a = a
            .with_grid(FlatTensor::new(vec![1, 2, 2], data).unwrap())
            .unwrap();
        assert_eq!(restore(&a, g.layout()).unwrap().data(), g.data());
    }

    #[test]
    fn normalized_grid_restores_closely() {
        let v = sample_gaussian(&mut RngState::new(4), 3.0, 50).unwrap();
        let g = grad(v.data().iter().map(|x| x + 0.7).collect());
        let a = adjust(&g).normalized();
        assert!(a.grid().data()[50..].iter().all(|&x| x == 0.0));
        let back = restore(&a, g.layout()).unwrap();
        for (x, y) in back.data().iter().zip(g.data()) {
            assert!((x - y).abs() <= 1e-5 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn normalize_examples() {
        let c = FlatTensor::from_vec(vec![3.0; 5]).unwrap();
        let (s, scale, _) = normalize(&c);
        assert!(s.data().iter().all(|&v| v == 0.0));
        assert_eq!(scale, SCALE_FLOOR);

        let v = FlatTensor::from_vec(vec![-1.0, 3.0, -1.0, 3.0]).unwrap();
        let (s, scale, off) = normalize(&v);
        assert_eq!(scale, 2.0);
        assert_eq!(off, 1.0);
        let std = (s.data().iter().map(|&x| f64::from(x).powi(2)).sum::<f64>() / 4.0).sqrt();
        assert!((std - 1.0).abs() < 1e-6);
        assert_eq!(denormalize(&s, scale, off), v);
    }

    #[test]
    fn restore_checks_length() {
        let g = grad(vec![1.0, 2.0, 3.0]);
        assert!(restore(&adjust(&g), &LayerLayout::flat(4).unwrap()).is_err());
    }
}
