//! Small dense/convolutional classifiers built on [`Graph`].

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::graph::{Graph, Var};
use crate::error::{Error, Result};
use crate::numeric::{FlatTensor, RngState};
use crate::shape::{GradientRole, GradientVector, LayerLayout};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    /// Fully connected layer; its input is the flattened previous output.
    Dense {
        fan_in: usize,
        fan_out: usize,
        #[serde(default = "default_true")]
        bias: bool,
    },
    /// Valid (unpadded), stride-1 square convolution over `[C, H, W]`.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        #[serde(default = "default_true")]
        bias: bool,
    },
    Activation { function: Activation },
}

fn default_true() -> bool {
    true
}

/// A classifier architecture: input shape, layer stack and class count.
///
/// The input shape is either `[D]` or `[C, H, W]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub classes: usize,
}

/// Per-sample feature shape flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Feat {
    Flat(usize),
    Image(usize, usize, usize),
}

impl Feat {
    fn len(self) -> usize {
        match self {
            Feat::Flat(n) => n,
            Feat::Image(c, h, w) => c * h * w,
        }
    }
}

impl ModelSpec {
    /// Multilayer perceptron with biased dense layers and `act` between them.
    pub fn mlp(input_shape: Vec<usize>, hidden: &[usize], classes: usize, act: Activation) -> Self {
        let mut layers = Vec::new();
        let mut fan_in: usize = input_shape.iter().product();
        for &h in hidden {
            layers.push(LayerSpec::Dense {
                fan_in,
                fan_out: h,
                bias: true,
            });
            layers.push(LayerSpec::Activation { function: act });
            fan_in = h;
        }
        layers.push(LayerSpec::Dense {
            fan_in,
            fan_out: classes,
            bias: true,
        });
        Self {
            input_shape,
            layers,
            classes,
        }
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    fn input_feat(&self) -> Result<Feat> {
        match self.input_shape[..] {
            [d] if d > 0 => Ok(Feat::Flat(d)),
            [c, h, w] if c > 0 && h > 0 && w > 0 => Ok(Feat::Image(c, h, w)),
            _ => Err(Error::Spec(format!(
                "input shape must be [D] or [C, H, W] with positive sizes, got {:?}",
                self.input_shape
            ))),
        }
    }

    fn walk(&self) -> Result<(Vec<(String, Vec<usize>)>, usize)> {
        let mut feat = self.input_feat()?;
        let mut entries: Vec<(String, Vec<usize>)> = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Dense {
                    fan_in,
                    fan_out,
                    bias,
                } => {
                    if fan_in != feat.len() || fan_out == 0 {
                        return Err(Error::Spec(format!(
                            "layer {i}: dense {fan_in}->{fan_out} cannot take {} inputs",
                            feat.len()
                        )));
                    }
                    entries.push((format!("dense{i}.weight"), vec![fan_out, fan_in]));
                    if bias {
                        entries.push((format!("dense{i}.bias"), vec![fan_out]));
                    }
                    feat = Feat::Flat(fan_out);
                }
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    bias,
                } => {
                    let Feat::Image(c, h, w) = feat else {
                        return Err(Error::Spec(format!(
                            "layer {i}: convolution needs an image input, got a flat vector"
                        )));
                    };
                    if c != in_channels || kernel == 0 || kernel > h || kernel > w || out_channels == 0
                    {
                        return Err(Error::Spec(format!(
                            "layer {i}: conv {in_channels}->{out_channels} k{kernel} cannot take [{c}, {h}, {w}]"
                        )));
                    }
                    entries.push((
                        format!("conv{i}.weight"),
                        vec![out_channels, in_channels, kernel, kernel],
                    ));
                    if bias {
                        entries.push((format!("conv{i}.bias"), vec![out_channels]));
                    }
                    feat = Feat::Image(out_channels, h - kernel + 1, w - kernel + 1);
                }
                LayerSpec::Activation { .. } => {}
            }
        }
        Ok((entries, feat.len()))
    }

    /// Number of values the layer stack emits per sample.
    pub fn output_len(&self) -> Result<usize> {
        Ok(self.walk()?.1)
    }

    /// Checks that layer shapes compose and returns the parameter layout.
    pub fn param_layout(&self) -> Result<LayerLayout> {
        let (entries, out) = self.walk()?;
        if self.classes == 0 || out != self.classes {
            return Err(Error::Spec(format!(
                "network emits {out} values but the spec declares {} classes",
                self.classes
            )));
        }
        LayerLayout::new(entries).map_err(|_| Error::Spec("model has no parameters".into()))
    }

    pub fn validate(&self) -> Result<()> {
        self.param_layout().map(|_| ())
    }

    /// Total parameter count `L`.
    pub fn param_count(&self) -> Result<usize> {
        Ok(self.param_layout()?.total_len())
    }
}

/// What a loss compares the network output against.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// Cross-entropy against a class index.
    Class(usize),
    /// Sum of squared errors against raw output values.
    Values(Vec<f32>),
}

/// Result of [`ModelInstance::grad_match_loss_and_input_grad`].
#[derive(Debug, Clone, PartialEq)]
pub struct MatchGrad {
    pub loss: f64,
    pub dx: FlatTensor,
    pub dy: Vec<f32>,
}

/// A model specification with concrete parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInstance {
    spec: ModelSpec,
    layout: LayerLayout,
    params: FlatTensor,
}

/// Builds a model with uniform `±sqrt(6 / (fan_in + fan_out))` weights and
/// zero biases.
pub fn build_model(spec: &ModelSpec, rng: &mut RngState) -> Result<ModelInstance> {
    let layout = spec.param_layout()?;
    let mut params = Vec::with_capacity(layout.total_len());
    for e in layout.entries() {
        if e.name.ends_with(".bias") {
            params.extend(std::iter::repeat(0.0f32).take(e.len));
            continue;
        }
        let (fan_in, fan_out) = match e.shape[..] {
            [o, i] => (i, o),
            [o, c, k, _] => (c * k * k, o * k * k),
            _ => unreachable!("weights are rank 2 or 4"),
        };
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        params.extend((0..e.len).map(|_| ((2.0 * rng.next_f64() - 1.0) * a) as f32));
    }
    let n = params.len();
    Ok(ModelInstance {
        spec: spec.clone(),
        layout,
        params: FlatTensor::from_parts_unchecked(vec![n], params),
    })
}

impl ModelInstance {
    pub fn from_params(spec: &ModelSpec, params: Vec<f32>) -> Result<Self> {
        let layout = spec.param_layout()?;
        if params.len() != layout.total_len() {
            return Err(Error::Layout(format!(
                "spec needs {} parameters, got {}",
                layout.total_len(),
                params.len()
            )));
        }
        Ok(Self {
            spec: spec.clone(),
            layout,
            params: FlatTensor::from_vec(params)?,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layout(&self) -> &LayerLayout {
        &self.layout
    }

    pub fn params(&self) -> &FlatTensor {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Adds `params` as leaves of `g`, one per layout entry.
    pub fn param_leaves(&self, g: &mut Graph) -> Vec<Var> {
        self.layout
            .entries()
            .iter()
            .map(|e| {
                let data = self.params.data()[e.offset..e.offset + e.len].to_vec();
                g.leaf(e.shape.clone(), data)
            })
            .collect()
    }

    /// Logits `[B, classes]` for a `[B, input_len]` node.
    pub fn forward(&self, g: &mut Graph, params: &[Var], x: Var) -> Var {
        let batch = g.shape(x)[0];
        let mut feat = self.spec.input_feat().expect("validated spec");
        let mut h = x;
        let mut p = params.iter().copied();
        for layer in &self.spec.layers {
            match *layer {
                LayerSpec::Dense { fan_out, bias, .. } => {
                    if g.shape(h).len() != 2 || g.shape(h)[1] != feat.len() {
                        h = g.reshape(h, vec![batch, feat.len()]);
                    }
                    let w = p.next().expect("weight leaf");
                    h = g.matmul(h, w, false, true);
                    if bias {
                        let b = p.next().expect("bias leaf");
                        let bb = g.broadcast_rows(b, batch);
                        h = g.add(h, bb);
                    }
                    feat = Feat::Flat(fan_out);
                }
                LayerSpec::Conv2d {
                    out_channels,
                    kernel,
                    bias,
                    ..
                } => {
                    let Feat::Image(c, hh, ww) = feat else {
                        unreachable!("validated spec")
                    };
                    let (oh, ow) = (hh - kernel + 1, ww - kernel + 1);
                    let w = p.next().expect("weight leaf");
                    let b = if bias { p.next() } else { None };
                    h = conv2d(g, h, w, b, batch, (c, hh, ww), out_channels, kernel);
                    feat = Feat::Image(out_channels, oh, ow);
                }
                LayerSpec::Activation { function } => {
                    h = match function {
                        Activation::Sigmoid => g.sigmoid(h),
                        Activation::Tanh => g.tanh(h),
                    };
                }
            }
        }
        if g.shape(h) != [batch, self.spec.classes] {
            h = g.reshape(h, vec![batch, self.spec.classes]);
        }
        h
    }

    fn check_input(&self, x: &FlatTensor) -> Result<()> {
        if x.len() != self.spec.input_len() {
            return Err(Error::Shape(format!(
                "input has {} values, model expects {:?}",
                x.len(),
                self.spec.input_shape
            )));
        }
        Ok(())
    }

    /// Class scores for one input.
    pub fn logits(&self, x: &FlatTensor) -> Result<Vec<f32>> {
        self.check_input(x)?;
        let mut g = Graph::new();
        let params = self.param_leaves(&mut g);
        let xv = g.leaf(vec![1, x.len()], x.data().to_vec());
        let out = self.forward(&mut g, &params, xv);
        Ok(g.value(out).to_vec())
    }

    /// Loss of one sample and its exact gradient with respect to every parameter.
    pub fn loss_and_grad(&self, x: &FlatTensor, target: &Target) -> Result<(f64, GradientVector)> {
        self.check_input(x)?;
        let mut g = Graph::new();
        let params = self.param_leaves(&mut g);
        let xv = g.leaf(vec![1, x.len()], x.data().to_vec());
        let logits = self.forward(&mut g, &params, xv);
        let loss = match target {
            Target::Class(y) => {
                if *y >= self.spec.classes {
                    return Err(Error::Input(format!(
                        "label {y} out of range for {} classes",
                        self.spec.classes
                    )));
                }
                hard_cross_entropy(&mut g, logits, &[*y])
            }
            Target::Values(t) => {
                if t.len() != self.spec.classes {
                    return Err(Error::Shape(format!(
                        "target has {} values, model emits {}",
                        t.len(),
                        self.spec.classes
                    )));
                }
                let tv = g.leaf(vec![1, t.len()], t.clone());
                let d = g.sub(logits, tv);
                let sq = g.square(d);
                g.sum(sq)
            }
        };
        let grads = g.grad(loss, &params);
        let mut flat = Vec::with_capacity(self.param_count());
        for v in grads {
            flat.extend_from_slice(g.value(v));
        }
        let lv = f64::from(g.scalar_value(loss));
        let gv = GradientVector::new(FlatTensor::from_vec(flat)?, self.layout.clone(), GradientRole::Clean)?;
        Ok((lv, gv))
    }

    /// Cross-entropy loss of `(x, y)` and its parameter gradient.
    pub fn loss_and_grad_params(&self, x: &FlatTensor, y: usize) -> Result<(f64, GradientVector)> {
        self.loss_and_grad(x, &Target::Class(y))
    }

    /// Gradient-matching loss `||grad_W l(F(x), softmax(y)) - target||^2` and
    /// its gradients with respect to the dummy input `x` and label logits `y`.
    ///
    /// The parameter gradient is built as a differentiable subgraph and then
    /// differentiated a second time.
    pub fn grad_match_loss_and_input_grad(
        &self,
        dummy_x: &FlatTensor,
        dummy_y: &[f32],
        target: &GradientVector,
    ) -> Result<MatchGrad> {
        self.check_input(dummy_x)?;
        if dummy_y.len() != self.spec.classes {
            return Err(Error::Shape(format!(
                "label logits have {} entries, model has {} classes",
                dummy_y.len(),
                self.spec.classes
            )));
        }
        if !target.layout().same_shapes(&self.layout) {
            return Err(Error::Layout(
                "target gradient layout does not match the model".into(),
            ));
        }
        let mut g = Graph::new();
        let params = self.param_leaves(&mut g);
        let xv = g.leaf(vec![1, dummy_x.len()], dummy_x.data().to_vec());
        let yv = g.leaf(vec![1, dummy_y.len()], dummy_y.to_vec());
        let logits = self.forward(&mut g, &params, xv);
        let ce = soft_cross_entropy(&mut g, logits, yv);
        let grads = g.grad(ce, &params);

        let mut total: Option<Var> = None;
        for (i, gv) in grads.into_iter().enumerate() {
            let shape = g.shape(gv).to_vec();
            let tv = g.leaf(shape, target.layer(i).to_vec());
            let d = g.sub(gv, tv);
            let sq = g.square(d);
            let s = g.sum(sq);
            total = Some(match total {
                Some(t) => g.add(t, s),
                None => s,
            });
        }
        let loss = total.expect("model has parameters");
        let dd = g.grad(loss, &[xv, yv]);
        let dx = FlatTensor::new(dummy_x.shape().to_vec(), g.value(dd[0]).to_vec())
            .map_err(|_| Error::Divergence("non-finite input gradient".into()))?;
        Ok(MatchGrad {
            loss: f64::from(g.scalar_value(loss)),
            dx,
            dy: g.value(dd[1]).to_vec(),
        })
    }
}

/// Mean cross-entropy of `[B, K]` logits against hard labels.
pub fn hard_cross_entropy(g: &mut Graph, logits: Var, labels: &[usize]) -> Var {
    let k = g.shape(logits)[1];
    let ls = g.log_softmax_rows(logits);
    let idx: Arc<[u32]> = labels
        .iter()
        .enumerate()
        .map(|(b, &y)| (b * k + y) as u32)
        .collect();
    let picked = g.gather(ls, idx, vec![labels.len()]);
    let s = g.sum(picked);
    g.scale(s, -1.0 / labels.len() as f32)
}

/// Cross-entropy of `[1, K]` logits against `softmax(label_logits)`.
pub fn soft_cross_entropy(g: &mut Graph, logits: Var, label_logits: Var) -> Var {
    let lp = g.log_softmax_rows(label_logits);
    let p = g.exp(lp);
    let ls = g.log_softmax_rows(logits);
    let m = g.mul(p, ls);
    let s = g.sum(m);
    g.neg(s)
}

#[allow(clippy::too_many_arguments)]
fn conv2d(
    g: &mut Graph,
    x: Var,
    w: Var,
    b: Option<Var>,
    batch: usize,
    (c, h, wd): (usize, usize, usize),
    out_ch: usize,
    k: usize,
) -> Var {
    let (oh, ow) = (h - k + 1, wd - k + 1);
    let p = oh * ow;
    let ckk = c * k * k;
    let feat = c * h * wd;
    let mut cols = Vec::with_capacity(batch * p * ckk);
    for bi in 0..batch {
        for y in 0..oh {
            for xx in 0..ow {
                for ci in 0..c {
                    for ky in 0..k {
                        for kx in 0..k {
                            cols.push((bi * feat + ci * h * wd + (y + ky) * wd + xx + kx) as u32);
                        }
                    }
                }
            }
        }
    }
    let patches = g.gather(x, cols.into(), vec![batch * p, ckk]);
    let wr = g.reshape(w, vec![out_ch, ckk]);
    let mut out = g.matmul(patches, wr, false, true);
    if let Some(b) = b {
        let bb = g.broadcast_rows(b, batch * p);
        out = g.add(out, bb);
    }
    let mut perm = Vec::with_capacity(batch * out_ch * p);
    for bi in 0..batch {
        for o in 0..out_ch {
            for pi in 0..p {
                perm.push(((bi * p + pi) * out_ch + o) as u32);
            }
        }
    }
    g.gather(out, perm.into(), vec![batch, out_ch * p])
}
