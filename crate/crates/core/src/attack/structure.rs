//! Recovering a surrogate architecture from a gradient's visible layout.

use crate::autodiff::{Activation, LayerSpec, ModelSpec};
use crate::error::{Error, Result};
use crate::shape::{GradientVector, LayerLayout};

/// The layer layout carried by an intercepted gradient.
///
/// Shapes travel with every update in federated training, and perturbation
/// only changes values, so the layout of `shared` is the victim's layout.
/// Fails if the shapes do not read as a stack of dense or square-kernel
/// convolution layers with optional biases.
pub fn infer_structure(shared: &GradientVector) -> Result<LayerLayout> {
    let layout = shared.layout().clone();
    parse_layers(&layout, None)?;
    Ok(layout)
}

/// Builds a model spec whose parameter layout has the same shapes as
/// `layout`, putting `activation` between consecutive parametric layers.
///
/// Dense-first stacks take their input size from the first weight matrix.
/// Convolutional stacks need `input_shape`, because spatial size is not
/// visible in the kernel shapes.
pub fn surrogate_spec(
    layout: &LayerLayout,
    input_shape: Option<Vec<usize>>,
    activation: Activation,
) -> Result<ModelSpec> {
    let layers = parse_layers(layout, Some(activation))?;
    let input_shape = match (input_shape, layers.first()) {
        (Some(s), _) => s,
        (None, Some(LayerSpec::Dense { fan_in, .. })) => vec![*fan_in],
        (None, _) => {
            return Err(Error::Structure(
                "a convolutional first layer needs an explicit input shape".into(),
            ))
        }
    };
    let classes = ModelSpec {
        input_shape: input_shape.clone(),
        layers: layers.clone(),
        classes: 1,
    }
    .output_len()
    .map_err(|e| Error::Structure(format!("inferred layers do not compose: {e}")))?;
    let spec = ModelSpec {
        input_shape,
        layers,
        classes,
    };
    let own = spec
        .param_layout()
        .map_err(|e| Error::Structure(format!("inferred layers do not compose: {e}")))?;
    if !own.same_shapes(layout) {
        return Err(Error::Structure("inferred spec does not reproduce the layout".into()));
    }
    Ok(spec)
}

fn parse_layers(layout: &LayerLayout, activation: Option<Activation>) -> Result<Vec<LayerSpec>> {
    let entries = layout.entries();
    let mut layers = Vec::new();
    let mut i = 0;
    while i < entries.len() {
        let e = &entries[i];
        let has_bias = |out: usize| {
            entries
                .get(i + 1)
                .map(|b| b.shape == [out])
                .unwrap_or(false)
        };
        let (layer, consumed) = match e.shape[..] {
            [out, inp] => {
                let bias = has_bias(out);
                (
                    LayerSpec::Dense {
                        fan_in: inp,
                        fan_out: out,
                        bias,
                    },
                    1 + usize::from(bias),
                )
            }
            [out, ch, k, k2] if k == k2 => {
                let bias = has_bias(out);
                (
                    LayerSpec::Conv2d {
                        in_channels: ch,
                        out_channels: out,
                        kernel: k,
                        bias,
                    },
                    1 + usize::from(bias),
                )
            }
            _ => {
                return Err(Error::Structure(format!(
                    "layer {:?} with shape {:?} is neither a dense nor a square convolution weight",
                    e.name, e.shape
                )))
            }
        };
        if !layers.is_empty() {
            if let Some(function) = activation {
                layers.push(LayerSpec::Activation { function });
            }
        }
        layers.push(layer);
        i += consumed;
    }
    Ok(layers)
}
