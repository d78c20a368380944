//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! Every node holds its value, computed eagerly when the node is created.
//! [`Graph::grad`] builds the vector-Jacobian products out of ordinary graph
//! nodes, so the returned gradients can themselves be differentiated. This
//! is what the gradient-matching loss of an inversion attack needs: the
//! parameter gradient is a node, its distance to a target is a node, and a
//! second call to `grad` differentiates that distance with respect to the
//! dummy input.
//!
//! Nodes are appended in creation order, which is a valid topological order.
//! Shape errors are programming errors and panic.

use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f32),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    SumAll(Var),
    BroadcastAll(Var),
    SumAxis0(Var),
    BroadcastAxis0(Var),
    SumAxis1(Var),
    BroadcastAxis1(Var),
    LogSumExpAxis1(Var),
    Gather(Var, Arc<[u32]>),
    ScatterAdd(Var, Arc<[u32]>),
    Reshape(Var),
}

impl Op {
    fn inputs(&self) -> [Option<Var>; 2] {
        use Op::*;
        match *self {
            Leaf => [None, None],
            MatMul { a, b, .. } | Add(a, b) | Sub(a, b) | Mul(a, b) => [Some(a), Some(b)],
            Scale(a, _) | AddScalar(a) | Sigmoid(a) | Tanh(a) | Exp(a) | SumAll(a)
            | BroadcastAll(a) | SumAxis0(a) | BroadcastAxis0(a) | SumAxis1(a)
            | BroadcastAxis1(a) | LogSumExpAxis1(a) | Reshape(a) => [Some(a), None],
            Gather(a, _) | ScatterAdd(a, _) => [Some(a), None],
        }
    }
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    data: Vec<f32>,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f32>, op: Op) -> Var {
        debug_assert_eq!(numel(&shape), data.len());
        self.nodes.push(Node { shape, data, op });
        Var(self.nodes.len() - 1)
    }

    /// A leaf holding `data`. Leaves are differentiable only if they are
    /// listed in the `wrt` argument of [`Graph::grad`].
    pub fn leaf(&mut self, shape: Vec<usize>, data: Vec<f32>) -> Var {
        assert_eq!(numel(&shape), data.len(), "leaf data does not match shape");
        self.push(shape, data, Op::Leaf)
    }

    pub fn scalar(&mut self, v: f32) -> Var {
        self.leaf(vec![1], vec![v])
    }

    pub fn zeros(&mut self, shape: Vec<usize>) -> Var {
        let n = numel(&shape);
        self.leaf(shape, vec![0.0; n])
    }

    pub fn value(&self, v: Var) -> &[f32] {
        &self.nodes[v.0].data
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Value of a single-element node.
    pub fn scalar_value(&self, v: Var) -> f32 {
        let d = self.value(v);
        assert_eq!(d.len(), 1, "scalar_value on a node with {} elements", d.len());
        d[0]
    }

    fn dims2(&self, v: Var) -> (usize, usize) {
        match self.shape(v) {
            [r, c] => (*r, *c),
            s => panic!("expected a rank-2 node, got shape {s:?}"),
        }
    }

    // ---- elementwise -------------------------------------------------------

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f32, f32) -> f32) -> Var {
        assert_eq!(
            self.shape(a),
            self.shape(b),
            "elementwise operands differ in shape"
        );
        let data = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        self.push(shape, data, op)
    }

    fn map(&mut self, a: Var, op: Op, f: impl Fn(f32) -> f32) -> Var {
        let data = self.value(a).iter().map(|&x| f(x)).collect();
        let shape = self.shape(a).to_vec();
        self.push(shape, data, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn scale(&mut self, a: Var, c: f32) -> Var {
        self.map(a, Op::Scale(a, c), |x| x * c)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, c: f32) -> Var {
        self.map(a, Op::AddScalar(a), |x| x + c)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, Op::Sigmoid(a), |x| {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        })
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, Op::Tanh(a), f32::tanh)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, Op::Exp(a), f32::exp)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a)
    }

    // ---- reductions and broadcasts ------------------------------------------

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).iter().map(|&x| f64::from(x)).sum();
        self.push(vec![1], vec![s as f32], Op::SumAll(a))
    }

    /// Broadcast a `[1]` node to `shape`.
    pub fn broadcast_all(&mut self, a: Var, shape: Vec<usize>) -> Var {
        assert_eq!(self.value(a).len(), 1, "broadcast_all needs a scalar");
        let v = self.value(a)[0];
        let n = numel(&shape);
        self.push(shape, vec![v; n], Op::BroadcastAll(a))
    }

    /// `[r, c] -> [c]`, summing over rows.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let (r, c) = self.dims2(a);
        let mut out = vec![0.0f32; c];
        let x = self.value(a);
        for i in 0..r {
            for (o, &v) in out.iter_mut().zip(&x[i * c..(i + 1) * c]) {
                *o += v;
            }
        }
        self.push(vec![c], out, Op::SumAxis0(a))
    }

    /// `[c] -> [rows, c]`, repeating the vector on every row.
    pub fn broadcast_rows(&mut self, a: Var, rows: usize) -> Var {
        let x = self.value(a);
        assert_eq!(self.shape(a).len(), 1, "broadcast_rows needs a rank-1 node");
        let c = x.len();
        let mut out = Vec::with_capacity(rows * c);
        for _ in 0..rows {
            out.extend_from_slice(x);
        }
        self.push(vec![rows, c], out, Op::BroadcastAxis0(a))
    }

    /// `[r, c] -> [r]`, summing within each row.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let (r, c) = self.dims2(a);
        let x = self.value(a);
        let out = (0..r).map(|i| x[i * c..(i + 1) * c].iter().sum()).collect();
        self.push(vec![r], out, Op::SumAxis1(a))
    }

    /// `[r] -> [r, cols]`, repeating each entry along its row.
    pub fn broadcast_cols(&mut self, a: Var, cols: usize) -> Var {
        assert_eq!(self.shape(a).len(), 1, "broadcast_cols needs a rank-1 node");
        let x = self.value(a);
        let r = x.len();
        let mut out = Vec::with_capacity(r * cols);
        for &v in x {
            out.extend(std::iter::repeat(v).take(cols));
        }
        self.push(vec![r, cols], out, Op::BroadcastAxis1(a))
    }

    /// Row-wise `log(sum(exp(x)))`, `[r, c] -> [r]`.
    pub fn logsumexp_rows(&mut self, a: Var) -> Var {
        let (r, c) = self.dims2(a);
        let x = self.value(a);
        let out = (0..r)
            .map(|i| {
                let row = &x[i * c..(i + 1) * c];
                let m = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
                let s: f64 = row.iter().map(|&v| f64::from(v - m).exp()).sum();
                m + s.ln() as f32
            })
            .collect();
        self.push(vec![r], out, Op::LogSumExpAxis1(a))
    }

    /// Row-wise log-softmax of a `[r, c]` node.
    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let (_, c) = self.dims2(a);
        let lse = self.logsumexp_rows(a);
        let b = self.broadcast_cols(lse, c);
        self.sub(a, b)
    }

    // ---- indexing ------------------------------------------------------------

    /// `out[i] = a[idx[i]]`, with the result shaped `shape`.
    pub fn gather(&mut self, a: Var, idx: Arc<[u32]>, shape: Vec<usize>) -> Var {
        assert_eq!(numel(&shape), idx.len(), "gather index count must match shape");
        let x = self.value(a);
        let out = idx.iter().map(|&i| x[i as usize]).collect();
        self.push(shape, out, Op::Gather(a, idx))
    }

    /// `out[idx[i]] += a[i]` into a zero tensor shaped `shape`.
    pub fn scatter_add(&mut self, a: Var, idx: Arc<[u32]>, shape: Vec<usize>) -> Var {
        let x = self.value(a);
        assert_eq!(x.len(), idx.len(), "scatter index count must match input");
        let mut out = vec![0.0f32; numel(&shape)];
        for (&v, &i) in x.iter().zip(idx.iter()) {
            out[i as usize] += v;
        }
        self.push(shape, out, Op::ScatterAdd(a, idx))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Var {
        assert_eq!(
            numel(&shape),
            self.value(a).len(),
            "reshape must preserve element count"
        );
        let data = self.value(a).to_vec();
        self.push(shape, data, Op::Reshape(a))
    }

    // ---- matrix product ------------------------------------------------------

    /// `op(a) @ op(b)` where `op` optionally transposes a rank-2 node.
    pub fn matmul(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Var {
        let (ar, ac) = self.dims2(a);
        let (br, bc) = self.dims2(b);
        let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
        let (k2, n) = if tb { (bc, br) } else { (br, bc) };
        assert_eq!(k, k2, "matmul inner dimensions differ: {k} vs {k2}");
        let mut out = vec![0.0f32; m * n];
        let (rsa, csa) = if ta { (1, ac) } else { (ac, 1) };
        let (rsb, csb) = if tb { (1, bc) } else { (bc, 1) };
        if m > 0 && n > 0 && k > 0 {
            let (pa, pb) = (self.value(a).as_ptr(), self.value(b).as_ptr());
            // SAFETY: the pointers cover `m*k` and `k*n` elements laid out with
            // the given strides, and `out` holds `m*n` elements, row-major.
            unsafe {
                matrixmultiply::sgemm(
                    m,
                    k,
                    n,
                    1.0,
                    pa,
                    rsa as isize,
                    csa as isize,
                    pb,
                    rsb as isize,
                    csb as isize,
                    0.0,
                    out.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
        }
        self.push(vec![m, n], out, Op::MatMul { a, b, ta, tb })
    }

    // ---- differentiation -----------------------------------------------------

    /// Gradients of the scalar `root` with respect to each node in `wrt`.
    ///
    /// The returned nodes live in this graph and are differentiable, so this
    /// can be called again on any function of them. A `wrt` node that does
    /// not influence `root` gets a zero gradient.
    pub fn grad(&mut self, root: Var, wrt: &[Var]) -> Vec<Var> {
        assert_eq!(self.value(root).len(), 1, "grad needs a scalar root");
        let n = root.0 + 1;
        let mut needs = vec![false; n];
        for w in wrt {
            if w.0 < n {
                needs[w.0] = true;
            }
        }
        for i in 0..n {
            if !needs[i] {
                needs[i] = self.nodes[i]
                    .op
                    .inputs()
                    .iter()
                    .flatten()
                    .any(|v| needs[v.0]);
            }
        }

        let mut grads: Vec<Option<Var>> = vec![None; n];
        if needs[root.0] {
            grads[root.0] = Some(self.leaf(vec![1], vec![1.0]));
        }
        for i in (0..n).rev() {
            let Some(g) = grads[i] else { continue };
            if !needs[i] {
                continue;
            }
            let op = self.nodes[i].op.clone();
            let node = Var(i);
            for (input, contrib) in self.vjp(node, &op, g, &needs) {
                grads[input.0] = Some(match grads[input.0] {
                    Some(prev) => self.add(prev, contrib),
                    None => contrib,
                });
            }
        }

        wrt.iter()
            .map(|w| match grads.get(w.0).copied().flatten() {
                Some(g) => g,
                None => {
                    let shape = self.shape(*w).to_vec();
                    self.zeros(shape)
                }
            })
            .collect()
    }

    fn vjp(&mut self, node: Var, op: &Op, g: Var, needs: &[bool]) -> Vec<(Var, Var)> {
        let want = |v: Var| needs[v.0];
        let mut out = Vec::with_capacity(2);
        match *op {
            Op::Leaf => {}
            Op::MatMul { a, b, ta, tb } => {
                if want(a) {
                    let ga = match (ta, tb) {
                        (false, false) => self.matmul(g, b, false, true),
                        (true, false) => self.matmul(b, g, false, true),
                        (false, true) => self.matmul(g, b, false, false),
                        (true, true) => self.matmul(b, g, true, true),
                    };
                    out.push((a, ga));
                }
                if want(b) {
                    let gb = match (ta, tb) {
                        (false, false) => self.matmul(a, g, true, false),
                        (true, false) => self.matmul(a, g, false, false),
                        (false, true) => self.matmul(g, a, true, false),
                        (true, true) => self.matmul(g, a, true, true),
                    };
                    out.push((b, gb));
                }
            }
            Op::Add(a, b) => {
                if want(a) {
                    out.push((a, g));
                }
                if want(b) {
                    out.push((b, g));
                }
            }
            Op::Sub(a, b) => {
                if want(a) {
                    out.push((a, g));
                }
                if want(b) {
                    let nb = self.neg(g);
                    out.push((b, nb));
                }
            }
            Op::Mul(a, b) => {
                if want(a) {
                    let ga = self.mul(g, b);
                    out.push((a, ga));
                }
                if want(b) {
                    let gb = self.mul(g, a);
                    out.push((b, gb));
                }
            }
            Op::Scale(a, c) => {
                let ga = self.scale(g, c);
                out.push((a, ga));
            }
            Op::AddScalar(a) => out.push((a, g)),
            Op::Sigmoid(a) => {
                // s * (1 - s)
                let one_minus = {
                    let n = self.neg(node);
                    self.add_scalar(n, 1.0)
                };
                let d = self.mul(node, one_minus);
                let ga = self.mul(g, d);
                out.push((a, ga));
            }
            Op::Tanh(a) => {
                let sq = self.mul(node, node);
                let d = {
                    let n = self.neg(sq);
                    self.add_scalar(n, 1.0)
                };
                let ga = self.mul(g, d);
                out.push((a, ga));
            }
            Op::Exp(a) => {
                let ga = self.mul(g, node);
                out.push((a, ga));
            }
            Op::SumAll(a) => {
                let shape = self.shape(a).to_vec();
                let ga = self.broadcast_all(g, shape);
                out.push((a, ga));
            }
            Op::BroadcastAll(a) => {
                let ga = self.sum(g);
                out.push((a, ga));
            }
            Op::SumAxis0(a) => {
                let (r, _) = self.dims2(a);
                let ga = self.broadcast_rows(g, r);
                out.push((a, ga));
            }
            Op::BroadcastAxis0(a) => {
                let ga = self.sum_rows(g);
                out.push((a, ga));
            }
            Op::SumAxis1(a) => {
                let (_, c) = self.dims2(a);
                let ga = self.broadcast_cols(g, c);
                out.push((a, ga));
            }
            Op::BroadcastAxis1(a) => {
                let ga = self.sum_cols(g);
                out.push((a, ga));
            }
            Op::LogSumExpAxis1(a) => {
                // softmax(a) * broadcast(g)
                let (_, c) = self.dims2(a);
                let lse = self.broadcast_cols(node, c);
                let shifted = self.sub(a, lse);
                let soft = self.exp(shifted);
                let gb = self.broadcast_cols(g, c);
                let ga = self.mul(soft, gb);
                out.push((a, ga));
            }
            Op::Gather(a, ref idx) => {
                let shape = self.shape(a).to_vec();
                let ga = self.scatter_add(g, idx.clone(), shape);
                out.push((a, ga));
            }
            Op::ScatterAdd(a, ref idx) => {
                let shape = self.shape(a).to_vec();
                let ga = self.gather(g, idx.clone(), shape);
                out.push((a, ga));
            }
            Op::Reshape(a) => {
                let shape = self.shape(a).to_vec();
                let ga = self.reshape(g, shape);
                out.push((a, ga));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f32, b: f32, tol: f32) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    /// Central differences of a scalar function of one leaf, in f32.
    fn fd(build: &dyn Fn(&mut Graph, Var) -> Var, shape: &[usize], x: &[f32]) -> Vec<f32> {
        let h = 1e-2f32;
        (0..x.len())
            .map(|i| {
                let eval = |delta: f32| {
                    let mut g = Graph::new();
                    let mut xs = x.to_vec();
                    xs[i] += delta;
                    let v = g.leaf(shape.to_vec(), xs);
                    let y = build(&mut g, v);
                    f64::from(g.scalar_value(y))
                };
                ((eval(h) - eval(-h)) / (2.0 * f64::from(h))) as f32
            })
            .collect()
    }

    fn check(build: &dyn Fn(&mut Graph, Var) -> Var, shape: &[usize], x: &[f32]) {
        let mut g = Graph::new();
        let v = g.leaf(shape.to_vec(), x.to_vec());
        let y = build(&mut g, v);
        let dx = g.grad(y, &[v])[0];
        let analytic = g.value(dx).to_vec();
        let numeric = fd(build, shape, x);
        for (a, n) in analytic.iter().zip(&numeric) {
            assert!(close(*a, *n, 2e-2), "analytic {a} vs numeric {n}");
        }
    }

    #[test]
    fn matmul_values() {
        let mut g = Graph::new();
        let a = g.leaf(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]);
        let b = g.leaf(vec![3, 2], vec![1., 0., 0., 1., 1., 1.]);
        let c = g.matmul(a, b, false, false);
        assert_eq!(g.value(c), &[4., 5., 10., 11.]);
        let at = g.leaf(vec![3, 2], vec![1., 4., 2., 5., 3., 6.]);
        let c2 = g.matmul(at, b, true, false);
        assert_eq!(g.value(c2), g.value(c).to_vec().as_slice());
        let bt = g.leaf(vec![2, 3], vec![1., 0., 1., 0., 1., 1.]);
        let c3 = g.matmul(a, bt, false, true);
        assert_eq!(g.value(c3), g.value(c).to_vec().as_slice());
        let c4 = g.matmul(at, bt, true, true);
        assert_eq!(g.value(c4), g.value(c).to_vec().as_slice());
    }

    #[test]
    fn first_order_matches_fd_for_every_op() {
        let x: Vec<f32> = vec![0.3, -0.7, 1.1, 0.2, -0.4, 0.9];
        let w: Vec<f32> = vec![0.5, -0.2, 0.1, 0.4, 0.3, -0.6];
        let fns: Vec<Box<dyn Fn(&mut Graph, Var) -> Var>> = vec![
            Box::new(|g, v| {
                let s = g.sigmoid(v);
                g.sum(s)
            }),
            Box::new(|g, v| {
                let t = g.tanh(v);
                let sq = g.square(t);
                g.sum(sq)
            }),
            Box::new(|g, v| {
                let l = g.log_softmax_rows(v);
                let e = g.exp(l);
                let m = g.mul(e, l);
                g.sum(m)
            }),
            Box::new(move |g, v| {
                let wv = g.leaf(vec![3, 2], w.clone());
                let p = g.matmul(v, wv, false, false);
                let p2 = g.matmul(p, v, false, false);
                let s = g.sigmoid(p2);
                g.sum(s)
            }),
            Box::new(|g, v| {
                let r = g.sum_rows(v);
                let b = g.broadcast_rows(r, 4);
                let c = g.sum_cols(b);
                let d = g.broadcast_cols(c, 2);
                let e = g.tanh(d);
                g.sum(e)
            }),
            Box::new(|g, v| {
                let idx: Arc<[u32]> = vec![0u32, 2, 2, 5, 1].into();
                let gth = g.gather(v, idx, vec![5]);
                let sq = g.square(gth);
                let sc = g.scatter_add(sq, vec![1u32, 1, 0, 2, 0].into(), vec![3]);
                let t = g.tanh(sc);
                g.sum(t)
            }),
        ];
        for f in &fns {
            check(f.as_ref(), &[2, 3], &x);
        }
    }

    #[test]
    fn second_order_through_grad() {
        // f(x) = sum(sigmoid(W x)^2); check d/dx of ||df/dW||^2 against FD.
        let w = vec![0.4f32, -0.3, 0.2, 0.7, -0.5, 0.1];
        let build = move |g: &mut Graph, x: Var| {
            let wv = g.leaf(vec![2, 3], w.clone());
            let y = g.matmul(wv, x, false, false);
            let s = g.sigmoid(y);
            let sq = g.square(s);
            let f = g.sum(sq);
            let dw = g.grad(f, &[wv])[0];
            let d2 = g.square(dw);
            g.sum(d2)
        };
        check(&build, &[3, 1], &[0.5, -1.0, 0.8]);
    }

    #[test]
    fn unrelated_wrt_gets_zero() {
        let mut g = Graph::new();
        let a = g.leaf(vec![2], vec![1.0, 2.0]);
        let b = g.leaf(vec![3], vec![1.0, 2.0, 3.0]);
        let s = g.sum(a);
        let gr = g.grad(s, &[a, b]);
        assert_eq!(g.value(gr[0]), &[1.0, 1.0]);
        assert_eq!(g.value(gr[1]), &[0.0, 0.0, 0.0]);
    }
}
