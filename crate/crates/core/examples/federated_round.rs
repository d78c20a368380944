//! One federated round: clients compute local gradients, clip them and add
//! Gaussian DP noise before sharing.

use pgla::autodiff::{build_model, synthetic_dataset, Activation, ModelSpec};
use pgla::numeric::{cosine_similarity_slices, RngState};
use pgla::perturb::{simulate_round, Client, FlTopology, PerturbationSpec, PrivacyAccountant};

pub fn run_example() -> pgla::Result<()> {
    let spec = ModelSpec::mlp(vec![1, 8, 8], &[16], 4, Activation::Sigmoid);
    let global = build_model(&spec, &mut RngState::new(1))?;
    let data = synthetic_dataset(7, &[1, 8, 8], 4, 12)?;
    let clients: Vec<Client> = data
        .samples()
        .chunks(3)
        .enumerate()
        .map(|(id, chunk)| Client {
            id: id as u64,
            model: global.clone(),
            data: chunk.to_vec(),
        })
        .collect();
    let noise = PerturbationSpec::gaussian(1.0, 1e-5, 1.0, 50);
    let topo = FlTopology::new(4, 1, 1)?;
    let mut acct = PrivacyAccountant::new();
    let round = simulate_round(&clients, &noise, &topo, 0, &RngState::new(2), &mut acct, false)?;
    println!("client sigma {:.5}", round.client_sigma);
    for (i, (c, s)) in round.clean.iter().zip(&round.shared).enumerate() {
        let cos = cosine_similarity_slices(c.data(), s.data())?.value;
        println!("client {i}: clean norm {:.4}, cos(shared, clean) {cos:.3}", c.norm());
        assert!(c.norm() <= 1.0 + 1e-6);
    }
    println!("budget spent {:?}", acct.compose());
    Ok(())
}

#[allow(dead_code)]
fn main() -> pgla::Result<()> {
    run_example()
}
