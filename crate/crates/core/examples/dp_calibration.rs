//! Calibrating client and server noise for a DP federated deployment and
//! composing the budget over releases.

use pgla::perturb::{
    client_sigma, compose, gaussian_constant, server_sigma, FlTopology, PerturbationSpec,
    PrivacyAccountant,
};

pub fn run_example() -> pgla::Result<()> {
    let gauss = PerturbationSpec::gaussian(1.0, 1e-5, 1.0, 100);
    let lap = PerturbationSpec::laplace(0.5, 1.0, 100);
    let sigma = client_sigma(&gauss)?;
    let b = client_sigma(&lap)?;
    println!("gaussian sigma {sigma:.10}, laplace b {b:.10}");
    assert!((sigma - 0.02 * (2.0 * (1.25f64 / 1e-5).ln()).sqrt()).abs() < 1e-15);
    assert!((b - 0.04).abs() < 1e-15);

    let c_dp = gaussian_constant(1e-5)?;
    for (n, t, l) in [(10, 3, 1), (4, 10, 1), (1, 1, 1)] {
        let topo = FlTopology::new(n, t, l)?;
        let s = server_sigma(&topo, 1.0, 100, 1.0, c_dp);
        println!("N={n} T={t} L={l}: server sigma {s:.10}");
    }

    let mut acct = PrivacyAccountant::new();
    for _ in 0..3 {
        let (e, d) = gauss.budget();
        acct.record(e, d);
    }
    let (e, d) = compose(&acct);
    println!("three releases cost epsilon {e}, delta {d}");
    assert_eq!(e, 3.0);
    assert!((d - 3e-5).abs() < 1e-18);
    Ok(())
}

#[allow(dead_code)]
fn main() -> pgla::Result<()> {
    run_example()
}
