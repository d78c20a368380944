//! Surrogate gradient harvesting and training-pair construction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{build_model, ModelInstance, ModelSpec, ProbeDataset};
use crate::error::{Error, Result};
use crate::numeric::{fill_gaussian, FlatTensor, RngState};
use crate::shape::{adjust_with, AdjustedGrid, GradientRole, GradientVector, GridRule};

/// Where the surrogate's weights come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurrogateInit {
    /// The global weights the server broadcast in the attacked round.
    Broadcast,
    /// A fresh random initialization drawn from the attacker's stream.
    Fresh,
}

/// Builds the surrogate: a copy of `broadcast` or a freshly initialized
/// model with the same spec.
pub fn build_surrogate(
    spec: &ModelSpec,
    init: &SurrogateInit,
    broadcast: Option<&ModelInstance>,
    rng: &mut RngState,
) -> Result<ModelInstance> {
    match init {
        SurrogateInit::Fresh => build_model(spec, rng),
        SurrogateInit::Broadcast => {
            let b = broadcast.ok_or_else(|| {
                Error::Usage("broadcast initialization needs the global model".into())
            })?;
            if !b.layout().same_shapes(&spec.param_layout()?) {
                return Err(Error::Layout(
                    "broadcast model does not match the surrogate layout".into(),
                ));
            }
            ModelInstance::from_params(spec, b.params().data().to_vec())
        }
    }
}

/// One clean surrogate gradient per probe sample, in probe order.
///
/// Each gradient is the cross-entropy gradient of a single `(x, y)` pair.
/// Samples are processed in parallel; the output does not depend on the
/// thread count.
pub fn harvest_surrogate_gradients(
    surrogate: &ModelInstance,
    probe: &ProbeDataset,
) -> Result<Vec<GradientVector>> {
    if probe.input_shape().iter().product::<usize>() != surrogate.spec().input_len() {
        return Err(Error::Shape(format!(
            "probe images are {:?}, surrogate takes {:?}",
            probe.input_shape(),
            surrogate.spec().input_shape
        )));
    }
    if probe.classes() > surrogate.spec().classes {
        return Err(Error::Input(format!(
            "probe has {} classes, surrogate has {}",
            probe.classes(),
            surrogate.spec().classes
        )));
    }
    probe
        .samples()
        .par_iter()
        .map(|(x, y)| {
            let (_, g) = surrogate.loss_and_grad_params(x, *y)?;
            Ok(g.with_role(GradientRole::Surrogate))
        })
        .collect()
}

/// Standardized square grids for a set of gradients.
pub fn training_grids(gradients: &[GradientVector], rule: GridRule) -> Vec<AdjustedGrid> {
    gradients
        .par_iter()
        .map(|g| adjust_with(g, rule).normalized())
        .collect()
}

/// Noisy copies `x + m n`, `n ~ N(0, I)`, of standardized grids, used as
/// conditions for a conditional predictor. Padding stays zero.
///
/// Grid `i` draws from `rng.derive(&[i])`.
pub fn condition_grids(grids: &[AdjustedGrid], m: f64, rng: &RngState) -> Result<Vec<AdjustedGrid>> {
    if !(m >= 0.0 && m.is_finite()) {
        return Err(Error::Parameter(format!("noise level must be finite and >= 0, got {m}")));
    }
    grids
        .par_iter()
        .enumerate()
        .map(|(i, a)| {
            let mut stream = rng.derive(&[i as u64]);
            let mut noise = vec![0.0f32; a.len()];
            fill_gaussian(&mut stream, m, &mut noise);
            let mut data = a.grid().data().to_vec();
            for (v, n) in data.iter_mut().zip(&noise) {
                *v += n;
            }
            let grid = FlatTensor::new(a.grid().shape().to_vec(), data)?;
            a.clone().with_grid(grid)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{synthetic_dataset, Activation};

    fn setup() -> (ModelInstance, ProbeDataset) {
        let spec = ModelSpec::mlp(vec![1, 4, 4], &[6], 3, Activation::Sigmoid);
        let m = build_model(&spec, &mut RngState::new(4)).unwrap();
        let p = synthetic_dataset(9, &[1, 4, 4], 3, 5).unwrap();
        (m, p)
    }

    #[test]
    fn harvest_matches_direct_gradients() {
        let (m, p) = setup();
        let hs = harvest_surrogate_gradients(&m, &p).unwrap();
        assert_eq!(hs.len(), 5);
        for (h, (x, y)) in hs.iter().zip(p.samples()) {
            assert_eq!(h.role(), GradientRole::Surrogate);
            let (_, g) = m.loss_and_grad_params(x, *y).unwrap();
            assert_eq!(h.data(), g.data());
        }
    }

    #[test]
    fn broadcast_copies_weights() {
        let (m, _) = setup();
        let mut rng = RngState::new(0);
        let s = build_surrogate(m.spec(), &SurrogateInit::Broadcast, Some(&m), &mut rng).unwrap();
        assert_eq!(s.params(), m.params());
        assert_eq!(rng.position(), 0);
        let f = build_surrogate(m.spec(), &SurrogateInit::Fresh, None, &mut rng).unwrap();
        assert_ne!(f.params(), m.params());
        assert!(build_surrogate(m.spec(), &SurrogateInit::Broadcast, None, &mut rng).is_err());
    }

    #[test]
    fn condition_padding_stays_zero() {
        let (m, p) = setup();
        let hs = harvest_surrogate_gradients(&m, &p).unwrap();
        let grids = training_grids(&hs, GridRule::Strict);
        let conds = condition_grids(&grids, 0.5, &RngState::new(3)).unwrap();
        for (g, c) in grids.iter().zip(&conds) {
            assert_eq!(&c.grid().data()[g.len()..], &g.grid().data()[g.len()..]);
            assert_ne!(c.grid().data()[..g.len()], g.grid().data()[..g.len()]);
        }
        let zero = condition_grids(&grids, 0.0, &RngState::new(3)).unwrap();
        assert_eq!(zero, grids);
    }
}
