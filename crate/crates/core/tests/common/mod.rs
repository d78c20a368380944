//! Helpers shared by the integration tests.

#![allow(dead_code)]

use pgla::autodiff::{build_model, Activation, LayerSpec, ModelInstance, ModelSpec};
use pgla::harness::ExperimentConfig;
use pgla::numeric::RngState;
use pgla_oracle::net::{Layer, Net};

/// A small random classifier and its oracle twin.
pub struct NetPair {
    pub model: ModelInstance,
    pub oracle: Net,
}

impl NetPair {
    pub fn params64(&self) -> Vec<f64> {
        self.model.params().data().iter().map(|&v| f64::from(v)).collect()
    }
}

fn pick(rng: &mut RngState, lo: usize, hi: usize) -> usize {
    lo + rng.next_below((hi - lo + 1) as u64) as usize
}

/// Dense or convolutional, sigmoid or tanh, at most `max_params` parameters.
pub fn random_net(rng: &mut RngState, max_params: usize) -> NetPair {
    loop {
        let act = if rng.next_below(2) == 0 { Activation::Sigmoid } else { Activation::Tanh };
        let oact = match act {
            Activation::Sigmoid => Layer::Sigmoid,
            Activation::Tanh => Layer::Tanh,
        };
        let classes = pick(rng, 2, 5);
        let bias = rng.next_below(4) != 0;
        let (input, mut layers, mut olayers, mut width) = if rng.next_below(2) == 0 {
            let d = pick(rng, 3, 16);
            (vec![d], Vec::new(), Vec::new(), d)
        } else {
            let (c, h, w) = (pick(rng, 1, 2), pick(rng, 4, 7), pick(rng, 4, 7));
            let (co, k) = (pick(rng, 1, 3), pick(rng, 2, 3));
            let layers = vec![
                LayerSpec::Conv2d { in_channels: c, out_channels: co, kernel: k, bias },
                LayerSpec::Activation { function: act },
            ];
            let olayers = vec![Layer::Conv { c_in: c, c_out: co, k, bias }, oact];
            (vec![c, h, w], layers, olayers, co * (h - k + 1) * (w - k + 1))
        };
        for _ in 0..rng.next_below(2) {
            let h = pick(rng, 2, 10);
            layers.push(LayerSpec::Dense { fan_in: width, fan_out: h, bias });
            layers.push(LayerSpec::Activation { function: act });
            olayers.push(Layer::Dense { fan_in: width, fan_out: h, bias });
            olayers.push(oact);
            width = h;
        }
        layers.push(LayerSpec::Dense { fan_in: width, fan_out: classes, bias: true });
        olayers.push(Layer::Dense { fan_in: width, fan_out: classes, bias: true });
        let spec = ModelSpec { input_shape: input.clone(), layers, classes };
        let oracle = Net { input, layers: olayers };
        if oracle.param_count() > max_params {
            continue;
        }
        let model = build_model(&spec, rng).expect("valid random spec");
        assert_eq!(model.param_count(), oracle.param_count());
        return NetPair { model, oracle };
    }
}

/// A config small enough to run every stage in a few seconds.
pub fn tiny_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig::from_json(&format!(
        r#"{{
            "seed": {seed},
            "model": {{
                "input_shape": [1, 4, 4],
                "layers": [
                    {{"kind": "dense", "fan_in": 16, "fan_out": 6, "bias": true}},
                    {{"kind": "activation", "function": "sigmoid"}},
                    {{"kind": "dense", "fan_in": 6, "fan_out": 3, "bias": true}}
                ],
                "classes": 3
            }},
            "perturbation": {{"mechanism": "gaussian_dp", "epsilon": 1.0, "delta": 1e-5, "min_dataset_size": 100}},
            "probe": {{"count": 48}},
            "diffusion": {{"train": {{"steps": 60, "batch_size": 8, "predictor": {{"hidden": 16, "blocks": 1, "time_dim": 8}}}}}},
            "inversion": {{"iterations": 20}},
            "attack": {{"trials": 3}}
        }}"#
    ))
    .expect("tiny config parses")
}
