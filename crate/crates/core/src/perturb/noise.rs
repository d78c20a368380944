//! Clipping and noise application.

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::numeric::{fill_gaussian, fill_laplace, RngState};
use crate::perturb::{NoiseKind, PerturbationSpec};
use crate::shape::{GradientRole, GradientVector};

/// Rescales `g` to `g * min(1, clip / ||g||)`.
///
/// The returned norm never exceeds `clip`, even after rounding to `f32`.
pub fn clip_gradient(g: &GradientVector, clip: f64) -> Result<GradientVector> {
    if !(clip > 0.0) || !clip.is_finite() {
        return param_err(format!("clip must be > 0, got {clip}"));
    }
    let norm = g.norm();
    if norm <= clip {
        return Ok(g.clone());
    }
    let mut factor = clip / norm;
    loop {
        let data: Vec<f32> = g
            .data()
            .iter()
            .map(|&v| (f64::from(v) * factor) as f32)
            .collect();
        let n: f64 = data
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt();
        if n <= clip {
            return Ok(GradientVector::from_parts_unchecked(
                data,
                g.layout().clone(),
                g.role(),
            ));
        }
        factor *= 1.0 - 1e-7;
    }
}

fn fill(kind: NoiseKind, rng: &mut RngState, scale: f64, out: &mut [f32]) {
    match kind {
        NoiseKind::Gaussian => fill_gaussian(rng, scale, out),
        NoiseKind::Laplace => fill_laplace(rng, scale, out),
    }
}

fn add_noise_in_place(values: &mut [f32], kind: NoiseKind, scale: f64, rng: &mut RngState) {
    if scale == 0.0 {
        return;
    }
    let mut noise = vec![0.0f32; values.len()];
    fill(kind, rng, scale, &mut noise);
    for (v, n) in values.iter_mut().zip(noise) {
        *v += n;
    }
}

/// Adds i.i.d. noise of the given family and scale; role becomes `Perturbed`.
pub fn add_noise(
    g: &GradientVector,
    kind: NoiseKind,
    scale: f64,
    rng: &mut RngState,
) -> Result<GradientVector> {
    if !(scale >= 0.0) || !scale.is_finite() {
        return param_err(format!("noise scale must be finite and >= 0, got {scale}"));
    }
    let mut data = g.data().to_vec();
    add_noise_in_place(&mut data, kind, scale, rng);
    GradientVector::from_vec(data, g.layout().clone(), GradientRole::Perturbed)
}

/// `g + sigma * noise` with `sigma` resolved from `spec`.
pub fn perturb(g: &GradientVector, spec: &PerturbationSpec, rng: &mut RngState) -> Result<GradientVector> {
    add_noise(g, spec.noise_kind(), spec.sigma()?, rng)
}

/// The noise actually applied to one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerNoise {
    pub layer: usize,
    pub kind: NoiseKind,
    pub scale: f64,
}

/// Perturbs each layer slice with its own spec, consuming `rng` layer by layer.
pub fn perturb_per_layer(
    g: &GradientVector,
    specs: &[PerturbationSpec],
    rng: &mut RngState,
) -> Result<(GradientVector, Vec<LayerNoise>)> {
    let layout = g.layout();
    if specs.len() != layout.layer_count() {
        return Err(Error::Layout(format!(
            "{} perturbation specs for {} layers",
            specs.len(),
            layout.layer_count()
        )));
    }
    let mut data = g.data().to_vec();
    let mut record = Vec::with_capacity(specs.len());
    for (i, (entry, spec)) in layout.entries().iter().zip(specs).enumerate() {
        let scale = spec.sigma()?;
        let kind = spec.noise_kind();
        add_noise_in_place(&mut data[entry.offset..entry.offset + entry.len], kind, scale, rng);
        record.push(LayerNoise {
            layer: i,
            kind,
            scale,
        });
    }
    let out = GradientVector::from_vec(data, layout.clone(), GradientRole::Perturbed)?;
    Ok((out, record))
}

/// One fixed-scale spec per layer with the noise family chosen by coin flip.
pub fn random_layer_specs(
    layers: usize,
    scale: f64,
    clip: f64,
    rng: &mut RngState,
) -> Vec<PerturbationSpec> {
    (0..layers)
        .map(|_| {
            let kind = if rng.next_u64() & 1 == 0 {
                NoiseKind::Gaussian
            } else {
                NoiseKind::Laplace
            };
            PerturbationSpec::random(kind, scale, clip)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape::LayerLayout;

    fn grad(data: Vec<f32>) -> GradientVector {
        let n = data.len();
        GradientVector::from_vec(data, LayerLayout::flat(n).unwrap(), GradientRole::Clean).unwrap()
    }

    #[test]
    fn clip_examples() {
        let g = grad(vec![6.0, 8.0]);
        let c = clip_gradient(&g, 1.0).unwrap();
        assert!((c.norm() - 1.0).abs() < 1e-6 && c.norm() <= 1.0);
        assert!((c.data()[0] - 0.6).abs() < 1e-6);
        let small = grad(vec![0.3, 0.4]);
        assert_eq!(clip_gradient(&small, 1.0).unwrap(), small);
        assert_eq!(clip_gradient(&c, 1.0).unwrap(), c);
        let z = grad(vec![0.0, 0.0]);
        assert_eq!(clip_gradient(&z, 1.0).unwrap(), z);
        assert!(clip_gradient(&g, 0.0).is_err());
    }

    #[test]
    fn zero_sigma_is_identity() {
        let g = grad(vec![1.0, -2.0, 3.0]);
        let spec = PerturbationSpec::random(NoiseKind::Gaussian, 0.0, 1.0);
        let p = perturb(&g, &spec, &mut RngState::new(1)).unwrap();
        assert_eq!(p.data(), g.data());
        assert_eq!(p.role(), GradientRole::Perturbed);
    }

    #[test]
    fn per_layer_single_layer_matches_perturb() {
        let g = grad((0..100).map(|v| v as f32 * 0.01).collect());
        let spec = PerturbationSpec::laplace(1.0, 1.0, 10);
        let a = perturb(&g, &spec, &mut RngState::new(3)).unwrap();
        let (b, rec) = perturb_per_layer(&g, &[spec], &mut RngState::new(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(rec[0].kind, NoiseKind::Laplace);
        assert!(perturb_per_layer(&g, &[], &mut RngState::new(3)).is_err());
    }
}
