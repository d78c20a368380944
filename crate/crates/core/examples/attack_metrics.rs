//! Scoring reconstructions and summarizing trials, including metrics that
//! are undefined for degenerate inputs.

use pgla::attack::{evaluate, summarize, Evaluation};
use pgla::numeric::FlatTensor;
use pgla::shape::{GradientRole, GradientVector, LayerLayout};

pub fn run_example() -> pgla::Result<()> {
    let layout = LayerLayout::flat(4)?;
    let clean = GradientVector::from_vec(vec![0.5, -1.0, 0.25, 0.0], layout.clone(), GradientRole::Clean)?;
    let rec = GradientVector::from_vec(vec![0.45, -0.9, 0.3, 0.05], layout.clone(), GradientRole::Recovered)?;
    let truth = FlatTensor::new(vec![1, 2, 2], vec![0.0, 0.5, 1.0, 0.25])?;
    let guess = FlatTensor::new(vec![1, 2, 2], vec![0.1, 0.45, 1.2, 0.2])?;
    let m = evaluate(&Evaluation {
        clean: Some(&clean),
        candidate: Some(&rec),
        images: Some((&truth, &guess)),
        labels: Some((&[2], &[2])),
    })?;
    println!("{m:?}");

    let zero = GradientVector::from_vec(vec![0.0; 4], layout, GradientRole::Clean)?;
    let undefined = evaluate(&Evaluation {
        clean: Some(&zero),
        candidate: Some(&rec),
        ..Evaluation::default()
    })?;
    println!("against a zero gradient: {undefined:?}");
    assert!(undefined.cos_g.is_none());

    let s = summarize([Some(0.9), None, Some(0.7)]).expect("two defined values");
    println!("mean {:.2} std {:.4} over {} trials", s.mean, s.std, s.count);
    Ok(())
}

#[allow(dead_code)]
fn main() -> pgla::Result<()> {
    run_example()
}
