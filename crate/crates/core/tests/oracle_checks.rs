//! Library results against the independent reference implementations.

mod common;

use pgla::diffusion::{posterior_coefficients_raw, NoiseSchedule, PosteriorForm};
use pgla::numeric::{
    cosine_similarity_slices, psnr_slices, sample_gaussian, sample_laplace, FlatTensor, RngState,
};
use pgla::perturb::{client_sigma, gaussian_constant, server_sigma, FlTopology, PerturbationSpec};
use pgla::shape::{GradientRole, GradientVector};
use pgla_oracle::{diffusion as od, dist, dp, fd, metrics as om, net};

fn to64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| f64::from(x)).collect()
}

#[test]
fn calibration_matches_closed_forms() {
    for (eps, m, clip) in [(0.1, 10u64, 0.5), (1.0, 600, 1.0), (8.0, 60_000, 3.0)] {
        let g = client_sigma(&PerturbationSpec::gaussian(eps, 1e-5, clip, m)).unwrap();
        let want = dp::gaussian_sigma(clip, m, eps, 1e-5);
        assert!((g - want).abs() <= 1e-12 * want);
        let l = client_sigma(&PerturbationSpec::laplace(eps, clip, m)).unwrap();
        assert!((l - dp::laplace_b(clip, m, eps)).abs() <= 1e-12 * l);
        for (n, t, e) in [(1u64, 1u64, 1u64), (9, 3, 1), (10, 3, 1), (4, 10, 2), (100, 50, 1)] {
            let topo = FlTopology::new(n, t, e).unwrap();
            let s = server_sigma(&topo, clip, m, eps, gaussian_constant(1e-5).unwrap());
            let want = dp::server_sigma(n, t, e, clip, m, eps, 1e-5);
            if want == 0.0 {
                assert_eq!(s, 0.0);
            } else {
                assert!((s - want).abs() <= 1e-12 * want);
            }
        }
    }
}

#[test]
fn schedule_matches_cumulative_product() {
    let s = NoiseSchedule::standard();
    for t in [0, 1, 2, 28, 500, 1000] {
        assert!((s.gamma(t) - od::gamma(t, 1000, 1e-4, 0.02)).abs() <= 1e-12);
    }
    for m in [0.0, 0.05, 0.1, 0.5, 2.0, 10.0] {
        let st = pgla::diffusion::map_m_to_tprime(m, &s).unwrap();
        assert_eq!(st.t_prime, od::start_step(m, 1000, 1e-4, 0.02));
    }
}

#[test]
fn posterior_matches_joint_gaussian_conditioning() {
    let s = NoiseSchedule::standard();
    for t in [2, 3, 50, 999, 1000] {
        let c = posterior_coefficients_raw(s.alpha(t), s.gamma(t - 1), s.gamma(t), PosteriorForm::Conditioned);
        let (x0, xt, var) = od::posterior(s.alpha(t), s.gamma(t - 1));
        assert!((c.x0 - x0).abs() < 1e-10 && (c.xt - xt).abs() < 1e-10 && (c.var - var).abs() < 1e-10);
    }
}

#[test]
fn metrics_match_reference() {
    let mut rng = RngState::new(5);
    for _ in 0..20 {
        let a = sample_gaussian(&mut rng, 1.0, 50).unwrap();
        let b = sample_gaussian(&mut rng, 1.0, 50).unwrap();
        let (a64, b64) = (to64(a.data()), to64(b.data()));
        let c = cosine_similarity_slices(a.data(), b.data()).unwrap().value;
        assert!((c - om::cosine(&a64, &b64)).abs() < 1e-12);
        let peak = om::range(&a64);
        let p = psnr_slices(a.data(), b.data(), peak).unwrap().value;
        assert!((p - om::psnr(&a64, &b64, peak)).abs() < 1e-9);
    }
}

#[test]
fn noise_samplers_pass_ks() {
    let n = 20_000;
    let crit = dist::ks_critical(n, 0.001);
    let g = sample_gaussian(&mut RngState::new(1), 0.7, n).unwrap();
    assert!(dist::ks_statistic(&to64(g.data()), dist::normal_cdf(0.7)) < crit);
    let l = sample_laplace(&mut RngState::new(2), 0.3, n).unwrap();
    assert!(dist::ks_statistic(&to64(l.data()), dist::laplace_cdf(0.3)) < crit);
}

#[test]
fn parameter_gradients_match_backprop_and_finite_differences() {
    let mut rng = RngState::new(21);
    for _ in 0..8 {
        let pair = common::random_net(&mut rng, 600);
        let n = pair.model.spec().input_len();
        let x: Vec<f32> = (0..n).map(|_| rng.next_f64() as f32).collect();
        let classes = pair.model.spec().classes;
        let y = rng.next_below(classes as u64) as usize;
        let xt = FlatTensor::new(pair.model.spec().input_shape.clone(), x.clone()).unwrap();
        let (loss, g) = pair.model.loss_and_grad_params(&xt, y).unwrap();

        let p = pair.params64();
        let target = net::one_hot(classes, y);
        let (oloss, og, _) = pair.oracle.loss_and_grads(&p, &to64(&x), &target);
        assert!((loss - oloss).abs() < 1e-4 * (1.0 + oloss));
        assert!(fd::relative_error(&to64(g.data()), &og, 1e-8) < 1e-4);

        let x64 = to64(&x);
        let f = |q: &[f64]| net::cross_entropy(&pair.oracle.logits(q, &x64), &target);
        let numeric = fd::gradient(f, &p, 1e-5);
        assert!(fd::relative_error(&og, &numeric, 1e-8) < 1e-6);
    }
}

#[test]
fn match_loss_input_gradients_match_finite_differences() {
    let mut rng = RngState::new(22);
    for _ in 0..6 {
        let pair = common::random_net(&mut rng, 400);
        let spec = pair.model.spec().clone();
        let n = spec.input_len();
        let x: Vec<f32> = (0..n).map(|_| rng.next_f64() as f32).collect();
        let y: Vec<f32> = (0..spec.classes).map(|_| rng.next_f64() as f32 * 2.0 - 1.0).collect();
        let target: Vec<f32> = (0..pair.model.param_count()).map(|_| (rng.next_f64() as f32 - 0.5) * 0.2).collect();
        let tg = GradientVector::from_vec(target.clone(), pair.model.layout().clone(), GradientRole::Clean).unwrap();
        let xt = FlatTensor::new(spec.input_shape.clone(), x.clone()).unwrap();
        let mg = pair.model.grad_match_loss_and_input_grad(&xt, &y, &tg).unwrap();

        let p = pair.params64();
        let (x64, y64, t64) = (to64(&x), to64(&y), to64(&target));
        let want = pair.oracle.match_loss(&p, &x64, &y64, &t64);
        assert!((mg.loss - want).abs() < 1e-4 * (1.0 + want));
        let dx = fd::gradient(|v| pair.oracle.match_loss(&p, v, &y64, &t64), &x64, 1e-5);
        let dy = fd::gradient(|v| pair.oracle.match_loss(&p, &x64, v, &t64), &y64, 1e-5);
        assert!(fd::relative_error(&to64(mg.dx.data()), &dx, 1e-8) < 1e-3);
        assert!(fd::relative_error(&to64(&mg.dy), &dy, 1e-8) < 1e-3);
    }
}
