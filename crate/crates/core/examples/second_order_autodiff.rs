//! Differentiating a gradient: the gradient-matching loss needs the
//! derivative of a parameter gradient with respect to the input.

use pgla::autodiff::Graph;

pub fn run_example() -> pgla::Result<()> {
    // f(w, x) = sum(sigmoid(w * x)); g = df/dw; loss = sum(g^2); d loss / dx.
    let mut g = Graph::new();
    let w = g.leaf(vec![3], vec![0.5, -1.0, 2.0]);
    let x = g.leaf(vec![3], vec![1.0, 0.3, -0.2]);
    let wx = g.mul(w, x);
    let s = g.sigmoid(wx);
    let f = g.sum(s);
    let dw = g.grad(f, &[w])[0];
    let sq = g.square(dw);
    let loss = g.sum(sq);
    let dx = g.grad(loss, &[x])[0];
    println!("df/dw = {:?}", g.value(dw));
    println!("d||df/dw||^2/dx = {:?}", g.value(dx));

    // Check one coordinate against a central difference.
    let h = 1e-3f64;
    let eval = |xv: [f64; 3]| -> f64 {
        let wv = [0.5, -1.0, 2.0];
        (0..3)
            .map(|i| {
                let z = wv[i] * xv[i];
                let sg = 1.0 / (1.0 + (-z).exp());
                (sg * (1.0 - sg) * xv[i]).powi(2)
            })
            .sum()
    };
    let fd = (eval([1.0 + h, 0.3, -0.2]) - eval([1.0 - h, 0.3, -0.2])) / (2.0 * h);
    println!("finite difference {fd:.6} vs graph {:.6}", g.value(dx)[0]);
    assert!((fd - f64::from(g.value(dx)[0])).abs() < 1e-4);
    Ok(())
}

#[allow(dead_code)]
fn main() -> pgla::Result<()> {
    run_example()
}
