//! A small classifier with hand-written backpropagation.
//!
//! Parameter order matches a row-major `[out, in]` dense weight followed by
//! its bias, and an `[out, in, k, k]` convolution kernel followed by its
//! bias. Convolutions are valid, stride 1, unflipped.

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Layer {
    Dense { fan_in: usize, fan_out: usize, bias: bool },
    Conv { c_in: usize, c_out: usize, k: usize, bias: bool },
    Sigmoid,
    Tanh,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Net {
    /// `[D]` or `[C, H, W]`.
    pub input: Vec<usize>,
    pub layers: Vec<Layer>,
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    Flat(usize),
    Image(usize, usize, usize),
}

impl Shape {
    fn len(self) -> usize {
        match self {
            Shape::Flat(n) => n,
            Shape::Image(c, h, w) => c * h * w,
        }
    }
}

struct Tape {
    /// Input to each layer, plus the final output.
    acts: Vec<Vec<f64>>,
    shapes: Vec<Shape>,
}

impl Net {
    fn input_shape(&self) -> Shape {
        match self.input[..] {
            [d] => Shape::Flat(d),
            [c, h, w] => Shape::Image(c, h, w),
            _ => panic!("input must be [D] or [C, H, W]"),
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match *l {
                Layer::Dense { fan_in, fan_out, bias } => fan_out * fan_in + if bias { fan_out } else { 0 },
                Layer::Conv { c_in, c_out, k, bias } => c_out * c_in * k * k + if bias { c_out } else { 0 },
                _ => 0,
            })
            .sum()
    }

    fn run(&self, params: &[f64], x: &[f64]) -> Tape {
        let mut shape = self.input_shape();
        let mut acts = vec![x.to_vec()];
        let mut shapes = vec![shape];
        let mut off = 0;
        for layer in &self.layers {
            let h = acts.last().unwrap();
            let out = match *layer {
                Layer::Dense { fan_in, fan_out, bias } => {
                    assert_eq!(shape.len(), fan_in);
                    let w = &params[off..off + fan_out * fan_in];
                    off += fan_out * fan_in;
                    let mut y: Vec<f64> = (0..fan_out)
                        .map(|o| (0..fan_in).map(|i| w[o * fan_in + i] * h[i]).sum())
                        .collect();
                    if bias {
                        for (v, b) in y.iter_mut().zip(&params[off..off + fan_out]) {
                            *v += b;
                        }
                        off += fan_out;
                    }
                    shape = Shape::Flat(fan_out);
                    y
                }
                Layer::Conv { c_in, c_out, k, bias } => {
                    let Shape::Image(c, hh, ww) = shape else { panic!("conv needs an image") };
                    assert_eq!(c, c_in);
                    let (oh, ow) = (hh - k + 1, ww - k + 1);
                    let w = &params[off..off + c_out * c_in * k * k];
                    off += c_out * c_in * k * k;
                    let b = if bias {
                        let b = &params[off..off + c_out];
                        off += c_out;
                        Some(b)
                    } else {
                        None
                    };
                    let mut y = vec![0.0; c_out * oh * ow];
                    for o in 0..c_out {
                        for i in 0..oh {
                            for j in 0..ow {
                                let mut s = b.map_or(0.0, |b| b[o]);
                                for ci in 0..c_in {
                                    for a in 0..k {
                                        for bb in 0..k {
                                            s += w[((o * c_in + ci) * k + a) * k + bb]
                                                * h[(ci * hh + i + a) * ww + j + bb];
                                        }
                                    }
                                }
                                y[(o * oh + i) * ow + j] = s;
                            }
                        }
                    }
                    shape = Shape::Image(c_out, oh, ow);
                    y
                }
                Layer::Sigmoid => h.iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect(),
                Layer::Tanh => h.iter().map(|v| v.tanh()).collect(),
            };
            acts.push(out);
            shapes.push(shape);
        }
        Tape { acts, shapes }
    }

    pub fn logits(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        self.run(params, x).acts.pop().unwrap()
    }

    /// Cross-entropy against the distribution `target` and its gradients
    /// with respect to the parameters and the input.
    pub fn loss_and_grads(&self, params: &[f64], x: &[f64], target: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let tape = self.run(params, x);
        let z = tape.acts.last().unwrap();
        let p = softmax(z);
        let loss = cross_entropy(z, target);
        let mut dy: Vec<f64> = p.iter().zip(target).map(|(p, t)| p - t).collect();
        let mut dparams = vec![0.0; params.len()];
        // Parameter offsets per layer, for the backward walk.
        let mut offs = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offs.push(off);
            off += match *l {
                Layer::Dense { fan_in, fan_out, bias } => fan_out * fan_in + if bias { fan_out } else { 0 },
                Layer::Conv { c_in, c_out, k, bias } => c_out * c_in * k * k + if bias { c_out } else { 0 },
                _ => 0,
            };
        }
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let h = &tape.acts[li];
            let out = &tape.acts[li + 1];
            let off = offs[li];
            dy = match *layer {
                Layer::Dense { fan_in, fan_out, bias } => {
                    let w = &params[off..off + fan_out * fan_in];
                    for o in 0..fan_out {
                        for i in 0..fan_in {
                            dparams[off + o * fan_in + i] += dy[o] * h[i];
                        }
                    }
                    if bias {
                        for o in 0..fan_out {
                            dparams[off + fan_out * fan_in + o] += dy[o];
                        }
                    }
                    (0..fan_in)
                        .map(|i| (0..fan_out).map(|o| w[o * fan_in + i] * dy[o]).sum())
                        .collect()
                }
                Layer::Conv { c_in, c_out, k, bias } => {
                    let Shape::Image(_, hh, ww) = tape.shapes[li] else { unreachable!() };
                    let (oh, ow) = (hh - k + 1, ww - k + 1);
                    let nw = c_out * c_in * k * k;
                    let w = &params[off..off + nw];
                    let mut dx = vec![0.0; h.len()];
                    for o in 0..c_out {
                        for i in 0..oh {
                            for j in 0..ow {
                                let g = dy[(o * oh + i) * ow + j];
                                if bias {
                                    dparams[off + nw + o] += g;
                                }
                                for ci in 0..c_in {
                                    for a in 0..k {
                                        for bb in 0..k {
                                            let wi = ((o * c_in + ci) * k + a) * k + bb;
                                            let xi = (ci * hh + i + a) * ww + j + bb;
                                            dparams[off + wi] += g * h[xi];
                                            dx[xi] += g * w[wi];
                                        }
                                    }
                                }
                            }
                        }
                    }
                    dx
                }
                Layer::Sigmoid => dy.iter().zip(out).map(|(d, s)| d * s * (1.0 - s)).collect(),
                Layer::Tanh => dy.iter().zip(out).map(|(d, t)| d * (1.0 - t * t)).collect(),
            };
        }
        (loss, dparams, dy)
    }

    /// `||grad_params CE(F(x), softmax(label_logits)) - target||^2`.
    pub fn match_loss(&self, params: &[f64], x: &[f64], label_logits: &[f64], target: &[f64]) -> f64 {
        let (_, g, _) = self.loss_and_grads(params, x, &softmax(label_logits));
        g.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum()
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// `-sum_k t_k log softmax(z)_k`.
pub fn cross_entropy(z: &[f64], target: &[f64]) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().zip(target).map(|(v, t)| -t * (v - lse)).sum()
}

pub fn one_hot(k: usize, y: usize) -> Vec<f64> {
    let mut v = vec![0.0; k];
    v[y] = 1.0;
    v
}
