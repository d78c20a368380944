//! Reading a victim's architecture off an intercepted gradient and building a
//! surrogate with the same parameter layout.

use pgla::attack::{infer_structure, surrogate_spec};
use pgla::autodiff::{build_model, synthetic_dataset, Activation, LayerSpec, ModelSpec};
use pgla::numeric::RngState;

pub fn run_example() -> pgla::Result<()> {
    let victim = ModelSpec {
        input_shape: vec![1, 8, 8],
        layers: vec![
            LayerSpec::Conv2d { in_channels: 1, out_channels: 4, kernel: 3, bias: true },
            LayerSpec::Activation { function: Activation::Tanh },
            LayerSpec::Dense { fan_in: 144, fan_out: 5, bias: true },
        ],
        classes: 5,
    };
    let model = build_model(&victim, &mut RngState::new(1))?;
    let data = synthetic_dataset(2, &[1, 8, 8], 5, 1)?;
    let (x, y) = &data.samples()[0];
    let (_, shared) = model.loss_and_grad_params(x, *y)?;

    let layout = infer_structure(&shared)?;
    for e in layout.entries() {
        println!("{:>10} {:?}", e.name, e.shape);
    }
    let spec = surrogate_spec(&layout, Some(vec![1, 8, 8]), Activation::Sigmoid)?;
    println!(
        "surrogate: {} layers, {} classes, {} parameters",
        spec.layers.len(),
        spec.classes,
        spec.param_count()?
    );
    assert!(spec.param_layout()?.same_shapes(shared.layout()));
    Ok(())
}

#[allow(dead_code)]
fn main() -> pgla::Result<()> {
    run_example()
}
