//! The noise schedule: forward corruption, the reverse posterior and the
//! start step chosen for a given noise level.

use pgla::diffusion::{
    map_m_to_tprime, posterior_coefficients, q_sample, NoiseSchedule, PosteriorForm,
};
use pgla::numeric::{sample_gaussian, FlatTensor, RngState};

pub fn run_example() -> pgla::Result<()> {
    let s = NoiseSchedule::standard();
    println!("T = {}, gamma_T = {:.3e}", s.steps(), s.gamma(s.steps()));

    let mut rng = RngState::new(4);
    let x0 = FlatTensor::new(vec![1, 2, 2], vec![1.0, -0.5, 0.25, 2.0])?;
    let eps = sample_gaussian(&mut rng, 1.0, 4)?.reshape(vec![1, 2, 2])?;
    for t in [1, 100, 1000] {
        let xt = q_sample(&x0, t, &eps, &s)?;
        println!("t = {t}: x_t = {:?}", xt.data());
    }

    let c = posterior_coefficients(2, &s, PosteriorForm::Conditioned)?;
    println!("posterior at t = 2: x0 {:.6} x_t {:.10} var {:.3e}", c.x0, c.xt, c.var);

    for m in [0.0, 0.1, 1.0, 3.0] {
        let st = map_m_to_tprime(m, &s)?;
        println!("M = {m}: T' = {} (bracket {}..{})", st.t_prime, st.lo, st.hi);
    }
    assert_eq!(map_m_to_tprime(0.1, &s)?.t_prime, 28);
    Ok(())
}

#[allow(dead_code)]
fn main() -> pgla::Result<()> {
    run_example()
}
