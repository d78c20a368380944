//! Time-conditioned noise predictor and its training loop.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, Graph, Var};
use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};
use crate::numeric::{fill_gaussian, RngState};
use crate::shape::{AdjustedGrid, LayerLayout};

/// Anything that predicts the noise in a corrupted grid.
pub trait NoiseModel: Sync {
    /// Grid side `g`; inputs hold `g * g` values per row.
    fn side(&self) -> usize;

    fn is_conditional(&self) -> bool;

    /// Predicted noise for `ts.len()` rows of `xs`, one step per row.
    /// `cond` has the same layout as `xs` and is required exactly when the
    /// model is conditional.
    fn predict_batch(&self, xs: &[f32], ts: &[usize], cond: Option<&[f32]>) -> Result<Vec<f32>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictorConfig {
    pub hidden: usize,
    pub blocks: usize,
    pub time_dim: usize,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            blocks: 2,
            time_dim: 64,
        }
    }
}

/// Sinusoidal embedding of step `t`: `[sin(t w_k), cos(t w_k)]` with
/// `w_k = 10000^(-k / (dim/2))`.
pub fn time_embedding(t: usize, dim: usize) -> Vec<f32> {
    let half = dim / 2;
    let mut out = vec![0.0f32; dim];
    for k in 0..half {
        let w = (-(10000f64.ln()) * k as f64 / half as f64).exp();
        let a = t as f64 * w;
        out[k] = a.sin() as f32;
        out[half + k] = a.cos() as f32;
    }
    out
}

/// Fully connected residual network over the flattened grid.
///
/// The network body gives a clean-grid estimate `F`, which is fused with the
/// observation: `x0 = F + l (x_t / sqrt(gamma_t) - F)` with
/// `l = d^2 / (d^2 + s)`, `s = (1 - gamma_t) / gamma_t` the observation's
/// noise variance and `d` a learned scale of the body's own error. The
/// reported noise is `(x_t - sqrt(gamma_t) x0) / sqrt(1 - gamma_t)`, which is
/// the same quantity the training loss compares against. Conditional predictors take
/// the condition grid through a second input projection, which is the same
/// as stacking it as an extra channel. A condition with noise level `m` is
/// weighted by `s / (s + m^2)`, `s = (1 - gamma_t) / gamma_t`, its share of
/// the precision when fused with `x_t / sqrt(gamma_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensePredictor {
    config: PredictorConfig,
    side: usize,
    cond_m: Option<f64>,
    schedule: NoiseSchedule,
    layout: LayerLayout,
    params: Vec<f32>,
}

const INITIAL_LOG_SCALE: f32 = -3.0;

fn check_cond_m(cond_m: Option<f64>) -> Result<()> {
    match cond_m {
        Some(m) if !(m >= 0.0 && m.is_finite()) => Err(Error::Parameter(format!(
            "condition noise must be finite and >= 0, got {m}"
        ))),
        _ => Ok(()),
    }
}

fn predictor_layout(side: usize, conditional: bool, c: &PredictorConfig) -> Result<LayerLayout> {
    if side == 0 || c.hidden == 0 || c.time_dim == 0 || c.time_dim % 2 != 0 {
        return Err(Error::Parameter(format!(
            "predictor needs side > 0, hidden > 0 and an even time_dim > 0 (side {side}, {c:?})"
        )));
    }
    let d = side * side;
    let h = c.hidden;
    let mut e: Vec<(String, Vec<usize>)> = vec![("in.weight".into(), vec![h, d])];
    if conditional {
        e.push(("cond.weight".into(), vec![h, d]));
    }
    e.push(("time.weight".into(), vec![h, c.time_dim]));
    e.push(("in.bias".into(), vec![h]));
    for i in 0..c.blocks {
        e.push((format!("block{i}.weight"), vec![h, h]));
        e.push((format!("block{i}.bias"), vec![h]));
    }
    e.push(("out.weight".into(), vec![d, h]));
    e.push(("out.bias".into(), vec![d]));
    e.push(("skip.log_scale".into(), vec![1]));
    LayerLayout::new(e)
}

impl DensePredictor {
    /// Fresh predictor with uniform `±sqrt(6 / (fan_in + fan_out))` weights.
    /// The condition projection starts at zero, so a conditional predictor
    /// starts out equal to the unconditional one drawn from the same `rng`.
    /// `cond_m` is the noise level of the condition grids, `None` for an
    /// unconditional predictor.
    pub fn new(
        side: usize,
        cond_m: Option<f64>,
        config: PredictorConfig,
        schedule: NoiseSchedule,
        rng: &mut RngState,
    ) -> Result<Self> {
        check_cond_m(cond_m)?;
        let layout = predictor_layout(side, cond_m.is_some(), &config)?;
        let mut params = Vec::with_capacity(layout.total_len());
        for e in layout.entries() {
            if e.name == "cond.weight" {
                params.extend(std::iter::repeat(0.0f32).take(e.len));
            } else if e.name == "skip.log_scale" {
                params.push(INITIAL_LOG_SCALE);
            } else if let [o, i] = e.shape[..] {
                let a = (6.0 / (o + i) as f64).sqrt();
                params.extend((0..e.len).map(|_| ((2.0 * rng.next_f64() - 1.0) * a) as f32));
            } else {
                params.extend(std::iter::repeat(0.0f32).take(e.len));
            }
        }
        Ok(Self {
            config,
            side,
            cond_m,
            schedule,
            layout,
            params,
        })
    }

    pub fn from_params(
        side: usize,
        cond_m: Option<f64>,
        config: PredictorConfig,
        schedule: NoiseSchedule,
        params: Vec<f32>,
    ) -> Result<Self> {
        check_cond_m(cond_m)?;
        let layout = predictor_layout(side, cond_m.is_some(), &config)?;
        if params.len() != layout.total_len() {
            return Err(Error::Layout(format!(
                "predictor needs {} parameters, got {}",
                layout.total_len(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Input("non-finite predictor parameter".into()));
        }
        Ok(Self {
            config,
            side,
            cond_m,
            schedule,
            layout,
            params,
        })
    }

    pub fn config(&self) -> &PredictorConfig {
        &self.config
    }

    /// Noise level of the condition grids, `None` when unconditional.
    pub fn condition_noise(&self) -> Option<f64> {
        self.cond_m
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn leaves(&self, g: &mut Graph) -> Vec<Var> {
        self.layout
            .entries()
            .iter()
            .map(|e| g.leaf(e.shape.clone(), self.params[e.offset..e.offset + e.len].to_vec()))
            .collect()
    }

    fn check_steps(&self, ts: &[usize]) -> Result<()> {
        if let Some(&t) = ts.iter().find(|&&t| t == 0 || t > self.schedule.steps()) {
            return Err(Error::Parameter(format!(
                "step {t} outside 1..={}",
                self.schedule.steps()
            )));
        }
        Ok(())
    }

    /// Predicted noise node `[B, D]`.
    fn forward(&self, g: &mut Graph, p: &[Var], x: Var, ts: &[usize], cond: Option<Var>) -> Var {
        let b = ts.len();
        let mut it = p.iter().copied();
        let w_in = it.next().unwrap();
        let w_cond = if self.cond_m.is_some() { it.next() } else { None };
        let w_time = it.next().unwrap();
        let b_in = it.next().unwrap();

        let mut h = g.matmul(x, w_in, false, true);
        if let (Some(w), Some(c), Some(m)) = (w_cond, cond, self.cond_m) {
            let share: Vec<f32> = ts
                .iter()
                .map(|&t| {
                    let gm = self.schedule.gamma(t);
                    let s = (1.0 - gm) / gm;
                    (s / (s + m * m)) as f32
                })
                .collect();
            let share = g.leaf(vec![b], share);
            let share = g.broadcast_cols(share, self.side * self.side);
            let c = g.mul(share, c);
            let hc = g.matmul(c, w, false, true);
            h = g.add(h, hc);
        }
        let dim = self.config.time_dim;
        let mut emb = Vec::with_capacity(b * dim);
        for &t in ts {
            emb.extend(time_embedding(t, dim));
        }
        let emb = g.leaf(vec![b, dim], emb);
        let ht = g.matmul(emb, w_time, false, true);
        h = g.add(h, ht);
        let bb = g.broadcast_rows(b_in, b);
        h = g.add(h, bb);
        h = g.tanh(h);
        for _ in 0..self.config.blocks {
            let w = it.next().unwrap();
            let bias = it.next().unwrap();
            let z = g.matmul(h, w, false, true);
            let bz = g.broadcast_rows(bias, b);
            let z = g.add(z, bz);
            let z = g.tanh(z);
            h = g.add(h, z);
        }
        let w_out = it.next().unwrap();
        let b_out = it.next().unwrap();
        let log_scale = it.next().unwrap();
        let body = g.matmul(h, w_out, false, true);
        let bo = g.broadcast_rows(b_out, b);
        let body = g.add(body, bo);

        let d = self.side * self.side;
        let mut sg = Vec::with_capacity(b);
        let mut inv = Vec::with_capacity(b);
        let mut neg_log_s = Vec::with_capacity(b);
        for &t in ts {
            let gm = self.schedule.gamma(t);
            sg.push(gm.sqrt() as f32);
            inv.push((1.0 / (1.0 - gm).sqrt()) as f32);
            neg_log_s.push((-((1.0 - gm) / gm).ln()) as f32);
        }
        let two_log_d = g.scale(log_scale, 2.0);
        let two_log_d = g.broadcast_all(two_log_d, vec![b]);
        let neg_log_s = g.leaf(vec![b], neg_log_s);
        let l = g.add(two_log_d, neg_log_s);
        let l = g.sigmoid(l);
        let l = g.broadcast_cols(l, d);
        let sg = g.leaf(vec![b], sg);
        let sg = g.broadcast_cols(sg, d);
        let inv = g.leaf(vec![b], inv);
        let inv = g.broadcast_cols(inv, d);

        let scaled_body = g.mul(sg, body);
        let innovation = g.sub(x, scaled_body);
        let kept = g.mul(l, innovation);
        let residual = g.sub(innovation, kept);
        g.mul(residual, inv)
    }

    fn check_inputs(&self, xs: &[f32], ts: &[usize], cond: Option<&[f32]>) -> Result<()> {
        let d = self.side * self.side;
        if xs.len() != ts.len() * d || ts.is_empty() {
            return Err(Error::Shape(format!(
                "expected {} rows of {d} values, got {} values",
                ts.len(),
                xs.len()
            )));
        }
        match (self.cond_m.is_some(), cond) {
            (true, None) => {
                return Err(Error::Usage(
                    "conditional predictor called without a condition grid".into(),
                ))
            }
            (true, Some(c)) if c.len() != xs.len() => {
                return Err(Error::Shape("condition grid size differs from input".into()))
            }
            _ => {}
        }
        self.check_steps(ts)
    }
}

impl NoiseModel for DensePredictor {
    fn side(&self) -> usize {
        self.side
    }

    fn is_conditional(&self) -> bool {
        self.cond_m.is_some()
    }

    fn predict_batch(&self, xs: &[f32], ts: &[usize], cond: Option<&[f32]>) -> Result<Vec<f32>> {
        self.check_inputs(xs, ts, cond)?;
        let d = self.side * self.side;
        let mut g = Graph::new();
        let p = self.leaves(&mut g);
        let x = g.leaf(vec![ts.len(), d], xs.to_vec());
        let c = if self.cond_m.is_some() {
            cond.map(|c| g.leaf(vec![ts.len(), d], c.to_vec()))
        } else {
            None
        };
        let out = self.forward(&mut g, &p, x, ts, c);
        Ok(g.value(out).to_vec())
    }
}

/// Per-sample weight on the noise-prediction error.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossWeighting {
    /// Plain `||eps - f(x_t, t)||^2`.
    #[default]
    Simple,
    /// `beta_t^2 / (2 sigma_t^2 alpha_t (1 - gamma_t))` with `sigma_t^2 = beta_t`.
    Variational,
}

impl LossWeighting {
    fn weight(self, t: usize, sched: &NoiseSchedule) -> f64 {
        match self {
            LossWeighting::Simple => 1.0,
            LossWeighting::Variational => {
                let b = sched.beta(t);
                b * b / (2.0 * b * sched.alpha(t) * (1.0 - sched.gamma(t)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub predictor: PredictorConfig,
    pub weighting: LossWeighting,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 20_000,
            batch_size: 32,
            learning_rate: 1e-3,
            predictor: PredictorConfig::default(),
            weighting: LossWeighting::Simple,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub predictor: DensePredictor,
    /// Mini-batch loss at every step.
    pub loss_trace: Vec<f64>,
}

fn grid_rows<'a>(data: &'a [AdjustedGrid], what: &str) -> Result<(usize, Vec<&'a [f32]>)> {
    let side = data[0].side();
    let mut rows = Vec::with_capacity(data.len());
    for (i, a) in data.iter().enumerate() {
        if a.side() != side {
            return Err(Error::Shape(format!(
                "{what} grid {i} has side {} but grid 0 has {side}",
                a.side()
            )));
        }
        rows.push(a.grid().data());
    }
    Ok((side, rows))
}

/// Trains a predictor on clean grids with the noise-prediction objective.
///
/// Each step draws `batch_size` grid indices, steps `t ~ U{1..T}` and noise
/// `eps ~ N(0, I)` from `rng.derive(&[step])`, so the run is reproducible.
/// With `cond_m`, the predictor is conditional and each drawn grid `x` is
/// paired with a fresh condition `x + cond_m * n`, `n ~ N(0, I)`, drawn from
/// the same step stream after `eps`. Padding stays zero.
pub fn train(
    data: &[AdjustedGrid],
    cond_m: Option<f64>,
    sched: &NoiseSchedule,
    cfg: &TrainConfig,
    rng: &RngState,
) -> Result<TrainOutput> {
    if data.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::Parameter("batch_size and learning_rate must be positive".into()));
    }
    let (side, rows) = grid_rows(data, "training")?;
    let mut predictor = DensePredictor::new(
        side,
        cond_m,
        cfg.predictor,
        sched.clone(),
        &mut rng.derive(&[u64::MAX]),
    )?;
    let d = side * side;
    let b = cfg.batch_size;
    let mut adam = Adam::new(predictor.param_count(), cfg.learning_rate);
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut r = rng.derive(&[step as u64]);
        let idx: Vec<usize> = (0..b).map(|_| r.next_below(data.len() as u64) as usize).collect();
        let ts: Vec<usize> = (0..b)
            .map(|_| 1 + r.next_below(sched.steps() as u64) as usize)
            .collect();
        let mut eps = vec![0.0f32; b * d];
        fill_gaussian(&mut r, 1.0, &mut eps);
        let cond = cond_m.map(|m| {
            let mut c = vec![0.0f32; b * d];
            for (k, &i) in idx.iter().enumerate() {
                let row = &mut c[k * d..(k + 1) * d];
                let n = data[i].len();
                fill_gaussian(&mut r, m, &mut row[..n]);
                for (v, &x) in row.iter_mut().zip(rows[i]).take(n) {
                    *v += x;
                }
            }
            c
        });
        let (loss, grads) = batch_loss(&predictor, &rows, cond.as_deref(), &idx, &ts, &eps, cfg.weighting, true)?;
        if !loss.is_finite() {
            return Err(Error::Divergence(format!("training loss became {loss} at step {step}")));
        }
        adam.step(&mut predictor.params, &grads.expect("requested gradients"));
        trace.push(loss);
    }
    Ok(TrainOutput {
        predictor,
        loss_trace: trace,
    })
}

#[allow(clippy::too_many_arguments)]
fn batch_loss(
    p: &DensePredictor,
    rows: &[&[f32]],
    cond: Option<&[f32]>,
    idx: &[usize],
    ts: &[usize],
    eps: &[f32],
    weighting: LossWeighting,
    want_grad: bool,
) -> Result<(f64, Option<Vec<f32>>)> {
    let d = p.side * p.side;
    let b = idx.len();
    let mut xt = Vec::with_capacity(b * d);
    for (k, (&i, &t)) in idx.iter().zip(ts).enumerate() {
        let gm = p.schedule.gamma(t);
        let (a, s) = (gm.sqrt(), (1.0 - gm).sqrt());
        let e = &eps[k * d..(k + 1) * d];
        xt.extend(
            rows[i]
                .iter()
                .zip(e)
                .map(|(&x0, &n)| (a * f64::from(x0) + s * f64::from(n)) as f32),
        );
    }
    let mut g = Graph::new();
    let params = p.leaves(&mut g);
    let x = g.leaf(vec![b, d], xt);
    let c = cond.map(|c| g.leaf(vec![b, d], c.to_vec()));
    let pred = p.forward(&mut g, &params, x, ts, c);
    let target = g.leaf(vec![b, d], eps.to_vec());
    let diff = g.sub(pred, target);
    let mut sq = g.square(diff);
    if weighting != LossWeighting::Simple {
        let w: Vec<f32> = ts.iter().map(|&t| weighting.weight(t, &p.schedule) as f32).collect();
        let w = g.leaf(vec![b], w);
        let w = g.broadcast_cols(w, d);
        sq = g.mul(sq, w);
    }
    let s = g.sum(sq);
    let loss = g.scale(s, 1.0 / (b * d) as f32);
    let lv = f64::from(g.scalar_value(loss));
    if !want_grad {
        return Ok((lv, None));
    }
    let grads = g.grad(loss, &params);
    let mut flat = Vec::with_capacity(p.param_count());
    for v in grads {
        flat.extend_from_slice(g.value(v));
    }
    Ok((lv, Some(flat)))
}

/// Mean per-coordinate noise-prediction error over `data`.
///
/// Steps are stratified: evaluation `j = i * draws + k` of `n` uses
/// `t = 1 + floor(j * T / n)`, so every part of the schedule gets its share.
/// Noise comes from `rng.derive(&[i, k])`, so two models evaluated with the
/// same `rng` see identical corruptions.
pub fn noise_prediction_loss(
    model: &dyn NoiseModel,
    data: &[AdjustedGrid],
    cond: Option<&[AdjustedGrid]>,
    sched: &NoiseSchedule,
    rng: &RngState,
    draws: usize,
) -> Result<f64> {
    if data.is_empty() || draws == 0 {
        return Err(Error::Input("validation set is empty".into()));
    }
    let (side, rows) = grid_rows(data, "validation")?;
    if side != model.side() {
        return Err(Error::Layout(format!(
            "grids have side {side}, model expects {}",
            model.side()
        )));
    }
    let cond_rows = match cond {
        Some(c) if model.is_conditional() => Some(grid_rows(c, "condition")?.1),
        _ => None,
    };
    let d = side * side;
    let mut total = 0.0f64;
    let mut count = 0usize;
    let n = rows.len() * draws;
    for (i, row) in rows.iter().enumerate() {
        for k in 0..draws {
            let mut r = rng.derive(&[i as u64, k as u64]);
            let t = 1 + (i * draws + k) * sched.steps() / n;
            let mut eps = vec![0.0f32; d];
            fill_gaussian(&mut r, 1.0, &mut eps);
            let gm = sched.gamma(t);
            let (a, s) = (gm.sqrt(), (1.0 - gm).sqrt());
            let xt: Vec<f32> = row
                .iter()
                .zip(&eps)
                .map(|(&x0, &n)| (a * f64::from(x0) + s * f64::from(n)) as f32)
                .collect();
            let c = cond_rows.as_ref().map(|cr| cr[i]);
            let pred = model.predict_batch(&xt, &[t], c)?;
            total += pred
                .iter()
                .zip(&eps)
                .map(|(&p, &e)| (f64::from(p) - f64::from(e)).powi(2))
                .sum::<f64>();
            count += d;
        }
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::FlatTensor;

    fn zero_grids(n: usize, side: usize) -> Vec<AdjustedGrid> {
        (0..n)
            .map(|_| {
                AdjustedGrid::from_parts(FlatTensor::zeros(vec![1, side, side]), side * side - 1, 1.0, 0.0)
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn embedding_shape() {
        let e = time_embedding(0, 8);
        assert_eq!(e, vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        assert_ne!(time_embedding(5, 8), time_embedding(6, 8));
    }

    #[test]
    fn zero_data_beats_constant_baseline() {
        let sched = NoiseSchedule::standard();
        let data = zero_grids(4, 3);
        let cfg = TrainConfig {
            steps: 300,
            batch_size: 8,
            learning_rate: 1e-3,
            predictor: PredictorConfig {
                hidden: 16,
                blocks: 1,
                time_dim: 8,
            },
            weighting: LossWeighting::Simple,
        };
        let out = train(&data, None, &sched, &cfg, &RngState::new(1)).unwrap();
        assert!(out.loss_trace.iter().all(|l| l.is_finite()));
        let v = noise_prediction_loss(&out.predictor, &data, None, &sched, &RngState::new(2), 8).unwrap();
        // The best input-independent predictor outputs 0 and scores 1.
        assert!(v <= 1.05, "validation loss {v}");
    }

    #[test]
    fn batch_loss_ignores_row_order() {
        let sched = NoiseSchedule::standard();
        let p = DensePredictor::new(3, None, PredictorConfig { hidden: 8, blocks: 1, time_dim: 4 }, sched, &mut RngState::new(3)).unwrap();
        let rows_owned: Vec<Vec<f32>> = (0..4).map(|i| (0..9).map(|j| ((i * 9 + j) as f32).sin()).collect()).collect();
        let rows: Vec<&[f32]> = rows_owned.iter().map(|r| r.as_slice()).collect();
        let mut eps = vec![0.0f32; 36];
        fill_gaussian(&mut RngState::new(4), 1.0, &mut eps);
        let (a, _) = batch_loss(&p, &rows, None, &[0, 1, 2, 3], &[5, 50, 500, 999], &eps, LossWeighting::Simple, false).unwrap();
        let mut eps_r = Vec::new();
        for k in [3, 2, 1, 0] {
            eps_r.extend_from_slice(&eps[k * 9..(k + 1) * 9]);
        }
        let (b, _) = batch_loss(&p, &rows, None, &[3, 2, 1, 0], &[999, 500, 50, 5], &eps_r, LossWeighting::Simple, false).unwrap();
        assert!((a - b).abs() <= 1e-6 * a.abs());
    }

    #[test]
    fn fresh_conditional_matches_unconditional() {
        let sched = NoiseSchedule::standard();
        let c = PredictorConfig { hidden: 6, blocks: 1, time_dim: 4 };
        let u = DensePredictor::new(3, None, c, sched.clone(), &mut RngState::new(5)).unwrap();
        let k = DensePredictor::new(3, Some(0.5), c, sched, &mut RngState::new(5)).unwrap();
        let x: Vec<f32> = (0..9).map(|i| (i as f32 * 0.7).cos()).collect();
        let a = u.predict_batch(&x, &[40], None).unwrap();
        let b = k.predict_batch(&x, &[40], Some(&[1.5; 9])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn conditional_requires_condition() {
        let sched = NoiseSchedule::standard();
        let p = DensePredictor::new(2, Some(0.5), PredictorConfig { hidden: 4, blocks: 0, time_dim: 4 }, sched, &mut RngState::new(3)).unwrap();
        assert!(matches!(p.predict_batch(&[0.0; 4], &[3], None), Err(Error::Usage(_))));
        assert!(p.predict_batch(&[0.0; 4], &[3], Some(&[0.0; 4])).is_ok());
        assert!(p.predict_batch(&[0.0; 4], &[0], Some(&[0.0; 4])).is_err());
    }
}
