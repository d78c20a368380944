//! One federated round: local gradients, clipping, noise, aggregation.

use rayon::prelude::*;

use crate::autodiff::{hard_cross_entropy, Graph, ModelInstance};
use crate::error::{Error, Result};
use crate::numeric::{fill_gaussian, FlatTensor, RngState};
use crate::perturb::{
    clip_gradient, gaussian_constant, perturb, server_sigma, FlTopology, PerturbationSpec,
    PrivacyAccountant,
};
use crate::shape::{GradientRole, GradientVector};

/// A participant: the broadcast model plus private local samples.
#[derive(Debug, Clone)]
pub struct Client {
    pub id: u64,
    pub model: ModelInstance,
    pub data: Vec<(FlatTensor, usize)>,
}

impl Client {
    /// Mean cross-entropy gradient over the local samples.
    pub fn local_gradient(&self) -> Result<GradientVector> {
        if self.data.is_empty() {
            return Err(Error::Input(format!("client {} has no data", self.id)));
        }
        if let [(x, y)] = &self.data[..] {
            return Ok(self.model.loss_and_grad_params(x, *y)?.1);
        }
        let spec = self.model.spec();
        let d = spec.input_len();
        let mut xs = Vec::with_capacity(d * self.data.len());
        let mut labels = Vec::with_capacity(self.data.len());
        for (x, y) in &self.data {
            if x.len() != d {
                return Err(Error::Shape(format!("sample has {} values, expected {d}", x.len())));
            }
            if *y >= spec.classes {
                return Err(Error::Input(format!("label {y} out of range")));
            }
            xs.extend_from_slice(x.data());
            labels.push(*y);
        }
        let mut g = Graph::new();
        let params = self.model.param_leaves(&mut g);
        let xv = g.leaf(vec![labels.len(), d], xs);
        let logits = self.model.forward(&mut g, &params, xv);
        let loss = hard_cross_entropy(&mut g, logits, &labels);
        let grads = g.grad(loss, &params);
        let mut flat = Vec::with_capacity(self.model.param_count());
        for v in grads {
            flat.extend_from_slice(g.value(v));
        }
        GradientVector::from_vec(flat, self.model.layout().clone(), GradientRole::Clean)
    }
}

/// Everything one round produces.
///
/// `clean` is ground truth for evaluation only; attack code consumes
/// `shared` (or `aggregate`).
#[derive(Debug, Clone)]
pub struct RoundOutput {
    pub shared: Vec<GradientVector>,
    pub clean: Vec<GradientVector>,
    /// Unweighted mean of `shared`, with server noise when enabled.
    pub aggregate: GradientVector,
    pub client_sigma: f64,
    pub server_sigma: f64,
}

/// Runs one round for all clients in parallel.
///
/// Client `i` draws noise from `rng.derive(&[round, id])`, so results do not
/// depend on scheduling. `clean` holds the post-clip gradients. The
/// accountant gains one entry per client.
pub fn simulate_round(
    clients: &[Client],
    spec: &PerturbationSpec,
    topo: &FlTopology,
    round: u64,
    rng: &RngState,
    acct: &mut PrivacyAccountant,
    server_noise: bool,
) -> Result<RoundOutput> {
    if clients.is_empty() {
        return Err(Error::Input("a round needs at least one client".into()));
    }
    spec.validate()?;
    topo.validate()?;
    let client_sigma = spec.sigma()?;
    let pairs: Vec<(GradientVector, GradientVector)> = clients
        .par_iter()
        .map(|c| {
            let clean = clip_gradient(&c.local_gradient()?, spec.clip)?;
            let mut r = rng.derive(&[round, c.id]);
            let shared = perturb(&clean, spec, &mut r)?;
            Ok((shared, clean))
        })
        .collect::<Result<_>>()?;
    for _ in clients {
        let (e, d) = spec.budget();
        acct.record(e, d);
    }
    let (shared, clean): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();

    let l = shared[0].len();
    let mut mean = vec![0.0f64; l];
    for s in &shared {
        if s.len() != l {
            return Err(Error::Layout("clients disagree on gradient length".into()));
        }
        for (m, &v) in mean.iter_mut().zip(s.data()) {
            *m += f64::from(v);
        }
    }
    let n = shared.len() as f64;
    let mut agg: Vec<f32> = mean.iter().map(|m| (m / n) as f32).collect();
    let server = if server_noise && spec.is_dp() {
        let c_dp = gaussian_constant(if spec.delta > 0.0 { spec.delta } else { 1e-5 })?;
        server_sigma(topo, spec.clip, spec.min_dataset_size, spec.epsilon, c_dp)
    } else {
        0.0
    };
    if server > 0.0 {
        let mut noise = vec![0.0f32; l];
        fill_gaussian(&mut rng.derive(&[round, u64::MAX]), server, &mut noise);
        for (a, z) in agg.iter_mut().zip(noise) {
            *a += z;
        }
    }
    let aggregate = GradientVector::from_vec(agg, shared[0].layout().clone(), GradientRole::Perturbed)?;
    Ok(RoundOutput {
        shared,
        clean,
        aggregate,
        client_sigma,
        server_sigma: server,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{build_model, synthetic_dataset, Activation, ModelSpec};
    use crate::perturb::NoiseKind;

    fn clients(n: usize, same_data: bool) -> Vec<Client> {
        let spec = ModelSpec::mlp(vec![1, 4, 4], &[6], 3, Activation::Sigmoid);
        let model = build_model(&spec, &mut RngState::new(1)).unwrap();
        let data = synthetic_dataset(2, &[1, 4, 4], 3, n).unwrap();
        (0..n)
            .map(|i| Client {
                id: i as u64,
                model: model.clone(),
                data: vec![data.samples()[if same_data { 0 } else { i }].clone()],
            })
            .collect()
    }

    #[test]
    fn zero_noise_shares_clean() {
        let cs = clients(3, false);
        let spec = PerturbationSpec::random(NoiseKind::Gaussian, 0.0, 1.0);
        let topo = FlTopology::new(3, 1, 1).unwrap();
        let mut acct = PrivacyAccountant::new();
        let out = simulate_round(&cs, &spec, &topo, 0, &RngState::new(5), &mut acct, false).unwrap();
        for (s, c) in out.shared.iter().zip(&out.clean) {
            assert_eq!(s.data(), c.data());
            assert!(c.norm() <= 1.0);
        }
        assert_eq!(acct.len(), 3);
    }

    #[test]
    fn clients_get_distinct_noise() {
        let cs = clients(2, true);
        let spec = PerturbationSpec::gaussian(1.0, 1e-5, 1.0, 10);
        let topo = FlTopology::new(2, 1, 1).unwrap();
        let mut acct = PrivacyAccountant::new();
        let out = simulate_round(&cs, &spec, &topo, 0, &RngState::new(5), &mut acct, false).unwrap();
        assert_eq!(out.clean[0], out.clean[1]);
        assert_ne!(out.shared[0], out.shared[1]);
        assert_eq!(acct.compose().0, 2.0);
    }

    #[test]
    fn server_noise_applies_past_threshold() {
        let cs = clients(1, false);
        let spec = PerturbationSpec::gaussian(1.0, 1e-5, 1.0, 10);
        let mut acct = PrivacyAccountant::new();
        let quiet = FlTopology::new(1, 1, 1).unwrap();
        let out = simulate_round(&cs, &spec, &quiet, 0, &RngState::new(5), &mut acct, true).unwrap();
        assert_eq!(out.server_sigma, 0.0);
        assert_eq!(out.aggregate.data(), out.shared[0].data());
        let loud = FlTopology::new(1, 5, 1).unwrap();
        let out = simulate_round(&cs, &spec, &loud, 0, &RngState::new(5), &mut acct, true).unwrap();
        assert!(out.server_sigma > 0.0);
        assert_ne!(out.aggregate.data(), out.shared[0].data());
    }

    #[test]
    fn batched_local_gradient_is_mean_of_singles() {
        let mut cs = clients(3, false);
        let all: Vec<_> = cs.iter().map(|c| c.data[0].clone()).collect();
        let singles: Vec<_> = cs.iter().map(|c| c.local_gradient().unwrap()).collect();
        cs[0].data = all;
        let batched = cs[0].local_gradient().unwrap();
        for (i, &b) in batched.data().iter().enumerate() {
            let m = singles.iter().map(|s| s.data()[i]).sum::<f32>() / 3.0;
            assert!((b - m).abs() < 1e-6);
        }
    }
}
