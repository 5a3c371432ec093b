//! Reverse-mode automatic differentiation over `f64` arrays.
//!
//! A [`Tape`] owns every node of one forward pass. Operations append nodes
//! and hand back [`NodeId`]s; [`Tape::backward`] walks the nodes in reverse
//! creation order, calling each node's stored backward closure to push
//! gradient contributions to its parents. All values are dynamic-dimension
//! `f64` arrays; scalars are represented as one-element arrays.
//!
//! The op set is exactly what the model graph needs — elementwise arithmetic
//! and nonlinearities, affine maps, shape plumbing, row softmax, layer norm,
//! a fused multi-head attention node (which also exposes its attention
//! probabilities for saliency rollout), and a rowwise Pearson-correlation
//! node. Gradients are checked against central finite differences in the
//! unit tests, op by op.

use ndarray::{Array1, Array2, Array3, Array4, ArrayD, Axis, Ix2, Ix3, IxDyn, s};

/// Index of a node on a [`Tape`].
pub type NodeId = usize;

type BackFn = Box<dyn Fn(&Tape, &ArrayD<f64>, &mut dyn FnMut(NodeId, ArrayD<f64>))>;

struct Node {
    value: ArrayD<f64>,
    back: Option<BackFn>,
}

/// Gradients of one scalar root with respect to every node, indexed by
/// [`NodeId`]. Nodes the root does not depend on have no entry.
pub struct Gradients {
    by_node: Vec<Option<ArrayD<f64>>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&ArrayD<f64>> {
        self.by_node.get(id).and_then(|g| g.as_ref())
    }
}

/// Recording of one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Enter an input or parameter value. Gradients accumulate here.
    pub fn leaf(&mut self, value: ArrayD<f64>) -> NodeId {
        self.push(value, None)
    }

    pub fn value(&self, id: NodeId) -> &ArrayD<f64> {
        &self.nodes[id].value
    }

    /// Value of a one-element node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id].value.len(), 1);
        self.nodes[id].value.iter().copied().next().unwrap()
    }

    fn push(&mut self, value: ArrayD<f64>, back: Option<BackFn>) -> NodeId {
        self.nodes.push(Node { value, back });
        self.nodes.len() - 1
    }

    /// Gradient of the one-element node `root` with respect to every node it
    /// depends on, by reverse sweep.
    pub fn backward(&self, root: NodeId) -> Gradients {
        assert_eq!(
            self.nodes[root].value.len(),
            1,
            "backward root must be a scalar node"
        );
        let mut grads: Vec<Option<ArrayD<f64>>> = vec![None; self.nodes.len()];
        grads[root] = Some(ArrayD::ones(self.nodes[root].value.raw_dim()));
        for id in (0..=root).rev() {
            let Some(g) = grads[id].take() else { continue };
            if let Some(back) = &self.nodes[id].back {
                back(self, &g, &mut |pid, contrib| {
                    debug_assert!(pid < id, "gradient must flow to earlier nodes");
                    match &mut grads[pid] {
                        Some(acc) => *acc += &contrib,
                        slot => *slot = Some(contrib),
                    }
                });
            }
            grads[id] = Some(g);
        }
        Gradients { by_node: grads }
    }

    // ----- elementwise arithmetic -------------------------------------------

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a) + self.value(b);
        self.push(
            v,
            Some(Box::new(move |_, d, sink| {
                sink(a, d.clone());
                sink(b, d.clone());
            })),
        )
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a) - self.value(b);
        self.push(
            v,
            Some(Box::new(move |_, d, sink| {
                sink(a, d.clone());
                sink(b, -d);
            })),
        )
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a) * self.value(b);
        self.push(
            v,
            Some(Box::new(move |t, d, sink| {
                sink(a, d * t.value(b));
                sink(b, d * t.value(a));
            })),
        )
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a) / self.value(b);
        self.push(
            v,
            Some(Box::new(move |t, d, sink| {
                let bv = t.value(b);
                sink(a, d / bv);
                sink(b, -(d * t.value(a)) / (bv * bv));
            })),
        )
    }

    /// `c * a` for a plain constant `c`.
    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a) * c;
        self.push(v, Some(Box::new(move |_, d, sink| sink(a, d * c))))
    }

    /// `a + c` elementwise.
    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a) + c;
        self.push(v, Some(Box::new(move |_, d, sink| sink(a, d.clone()))))
    }

    /// `c / a` elementwise.
    pub fn rdiv_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = c / self.value(a);
        self.push(
            v,
            Some(Box::new(move |t, d, sink| {
                let av = t.value(a);
                sink(a, -(d * c) / (av * av));
            })),
        )
    }

    /// Elementwise product with a non-differentiable constant array
    /// (dropout masks, per-sample loss weights).
    pub fn mul_const(&mut self, a: NodeId, c: ArrayD<f64>) -> NodeId {
        let v = self.value(a) * &c;
        self.push(v, Some(Box::new(move |_, d, sink| sink(a, d * &c))))
    }

    // ----- nonlinearities ---------------------------------------------------

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(f64::exp);
        let out = self.nodes.len();
        self.push(
            v,
            Some(Box::new(move |t, d, sink| sink(a, d * t.value(out)))),
        )
    }

    /// Natural log; the caller guarantees positive inputs (clamp first).
    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(f64::ln);
        self.push(
            v,
            Some(Box::new(move |t, d, sink| sink(a, d / t.value(a)))),
        )
    }

    /// Clamp to `[lo, hi]`; gradient is zero where the clamp is active.
    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        let v = self.value(a).mapv(|x| x.clamp(lo, hi));
        self.push(
            v,
            Some(Box::new(move |t, d, sink| {
                let av = t.value(a);
                let mut g = d.clone();
                g.zip_mut_with(av, |gi, &x| {
                    if !(lo..=hi).contains(&x) {
                        *gi = 0.0;
                    }
                });
                sink(a, g);
            })),
        )
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(|x| x.max(0.0));
        self.push(
            v,
            Some(Box::new(move |t, d, sink| {
                let mut g = d.clone();
                g.zip_mut_with(t.value(a), |gi, &x| {
                    if x <= 0.0 {
                        *gi = 0.0;
                    }
                });
                sink(a, g);
            })),
        )
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(|x| x.max(0.0) + (-x.abs()).exp().ln_1p());
        self.push(
            v,
            Some(Box::new(move |t, d, sink| {
                let s = t.value(a).mapv(sigmoid);
                sink(a, d * &s);
            })),
        )
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(sigmoid);
        let out = self.nodes.len();
        self.push(
            v,
            Some(Box::new(move |t, d, sink| {
                let y = t.value(out);
                sink(a, d * &(y * &(1.0 - y)));
            })),
        )
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(f64::abs);
        self.push(
            v,
            Some(Box::new(move |t, d, sink| {
                let sign = t.value(a).mapv(|x| {
                    if x > 0.0 {
                        1.0
                    } else if x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                });
                sink(a, d * &sign);
            })),
        )
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
        const K: f64 = 0.044_715;
        let v = self
            .value(a)
            .mapv(|x| 0.5 * x * (1.0 + (C * (x + K * x * x * x)).tanh()));
        self.push(
            v,
            Some(Box::new(move |t, d, sink| {
                let g = t.value(a).mapv(|x| {
                    let inner = C * (x + K * x * x * x);
                    let th = inner.tanh();
                    let dinner = C * (1.0 + 3.0 * K * x * x);
                    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * dinner
                });
                sink(a, d * &g);
            })),
        )
    }

    // ----- shape plumbing ---------------------------------------------------

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> NodeId {
        let old = self.value(a).raw_dim();
        let v = self
            .value(a)
            .clone()
            .into_shape_with_order(IxDyn(shape))
            .expect("reshape must preserve element count");
        self.push(
            v,
            Some(Box::new(move |_, d, sink| {
                sink(
                    a,
                    d.clone()
                        .into_shape_with_order(old.clone())
                        .expect("gradient reshape"),
                );
            })),
        )
    }

    /// Copy of `a` severed from the gradient graph.
    pub fn detach(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).clone();
        self.push(v, None)
    }

    /// Broadcast-add `p` (shape = trailing axes of `x`) onto every leading
    /// slice of `x`; covers bias rows and positional tables.
    pub fn add_bcast(&mut self, x: NodeId, p: NodeId) -> NodeId {
        let v = self.value(x) + self.value(p);
        let lead = self.value(x).ndim() - self.value(p).ndim();
        self.push(
            v,
            Some(Box::new(move |_, d, sink| {
                sink(x, d.clone());
                let mut dp = d.clone();
                for _ in 0..lead {
                    dp = dp.sum_axis(Axis(0));
                }
                sink(p, dp);
            })),
        )
    }

    /// Sum every element down to a one-element array.
    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let total = self.value(a).sum();
        let shape = self.value(a).raw_dim();
        let v = ArrayD::from_elem(IxDyn(&[1]), total);
        self.push(
            v,
            Some(Box::new(move |_, d, sink| {
                let g = d.iter().copied().next().unwrap();
                sink(a, ArrayD::from_elem(shape.clone(), g));
            })),
        )
    }

    /// Weighted sum with a constant weight array of the same shape;
    /// yields a one-element node.
    pub fn weighted_sum(&mut self, a: NodeId, w: ArrayD<f64>) -> NodeId {
        let total = (self.value(a) * &w).sum();
        let v = ArrayD::from_elem(IxDyn(&[1]), total);
        self.push(
            v,
            Some(Box::new(move |_, d, sink| {
                let g = d.iter().copied().next().unwrap();
                sink(a, &w * g);
            })),
        )
    }

    /// Sum over the last axis.
    pub fn sum_last(&mut self, a: NodeId) -> NodeId {
        let nd = self.value(a).ndim();
        let v = self.value(a).sum_axis(Axis(nd - 1));
        let k = self.value(a).shape()[nd - 1];
        self.push(
            v,
            Some(Box::new(move |t, d, sink| {
                let mut g = ArrayD::zeros(t.value(a).raw_dim());
                let nd = g.ndim();
                for j in 0..k {
                    g.index_axis_mut(Axis(nd - 1), j).assign(d);
                }
                sink(a, g);
            })),
        )
    }

    /// Pick one column per row of a 2-D node: `out[r] = x[r, idx[r]]`.
    pub fn gather_rows(&mut self, x: NodeId, idx: Vec<usize>) -> NodeId {
        let xv = self.value(x).view().into_dimensionality::<Ix2>().unwrap();
        assert_eq!(xv.nrows(), idx.len());
        let v = Array1::from_iter(idx.iter().enumerate().map(|(r, &c)| xv[[r, c]]));
        self.push(
            v.into_dyn(),
            Some(Box::new(move |t, d, sink| {
                let mut g = ArrayD::zeros(t.value(x).raw_dim());
                {
                    let mut g2 = g.view_mut().into_dimensionality::<Ix2>().unwrap();
                    for (r, &c) in idx.iter().enumerate() {
                        g2[[r, c]] = d[[r]];
                    }
                }
                sink(x, g);
            })),
        )
    }

    /// Scale each row of a 2-D node by the matching element of a 1-D node.
    pub fn mul_rows(&mut self, x: NodeId, s: NodeId) -> NodeId {
        let xv = self.value(x).view().into_dimensionality::<Ix2>().unwrap();
        let sv = self.value(s).view().into_dimensionality::<ndarray::Ix1>().unwrap();
        let v = &xv * &sv.view().insert_axis(Axis(1));
        self.push(
            v.into_dyn(),
            Some(Box::new(move |t, d, sink| {
                let d2 = d.view().into_dimensionality::<Ix2>().unwrap();
                let xv = t.value(x).view().into_dimensionality::<Ix2>().unwrap();
                let sv = t.value(s).view().into_dimensionality::<ndarray::Ix1>().unwrap();
                sink(x, (&d2 * &sv.view().insert_axis(Axis(1))).into_dyn());
                sink(s, (&d2 * &xv).sum_axis(Axis(1)).into_dyn());
            })),
        )
    }

    /// Divide each row of a 2-D node by the matching element of a 1-D node.
    pub fn div_rows(&mut self, x: NodeId, s: NodeId) -> NodeId {
        let xv = self.value(x).view().into_dimensionality::<Ix2>().unwrap();
        let sv = self.value(s).view().into_dimensionality::<ndarray::Ix1>().unwrap();
        let v = &xv / &sv.view().insert_axis(Axis(1));
        self.push(
            v.into_dyn(),
            Some(Box::new(move |t, d, sink| {
                let d2 = d.view().into_dimensionality::<Ix2>().unwrap();
                let xv = t.value(x).view().into_dimensionality::<Ix2>().unwrap();
                let sv = t.value(s).view().into_dimensionality::<ndarray::Ix1>().unwrap();
                let s_col = sv.view().insert_axis(Axis(1));
                sink(x, (&d2 / &s_col).into_dyn());
                let ds = (&d2 * &xv).sum_axis(Axis(1)) / (&sv * &sv);
                sink(s, (-ds).into_dyn());
            })),
        )
    }

    // ----- linear algebra ---------------------------------------------------

    /// 2-D matrix product.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let av = self.value(a).view().into_dimensionality::<Ix2>().unwrap();
        let bv = self.value(b).view().into_dimensionality::<Ix2>().unwrap();
        let v = av.dot(&bv);
        self.push(
            v.into_dyn(),
            Some(Box::new(move |t, d, sink| {
                let d2 = d.view().into_dimensionality::<Ix2>().unwrap();
                let av = t.value(a).view().into_dimensionality::<Ix2>().unwrap();
                let bv = t.value(b).view().into_dimensionality::<Ix2>().unwrap();
                sink(a, d2.dot(&bv.t()).into_dyn());
                sink(b, av.t().dot(&d2).into_dyn());
            })),
        )
    }

    /// Affine map on the trailing axis: flattens leading axes, multiplies by
    /// `w` (in × out), adds `b` (out), and restores the leading shape.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> NodeId {
        let xsh = self.value(x).shape().to_vec();
        let d_in = *xsh.last().unwrap();
        let d_out = self.value(w).shape()[1];
        let rows: usize = xsh[..xsh.len() - 1].iter().product();
        let flat = self.reshape(x, &[rows, d_in]);
        let mm = self.matmul(flat, w);
        let biased = self.add_bcast(mm, b);
        let mut out_shape = xsh;
        *out_shape.last_mut().unwrap() = d_out;
        self.reshape(biased, &out_shape)
    }

    /// Softmax over the last axis of a 2-D node.
    pub fn row_softmax(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a).view().into_dimensionality::<Ix2>().unwrap();
        let mut v = av.to_owned();
        softmax_rows_in_place(&mut v);
        let out = self.nodes.len();
        self.push(
            v.into_dyn(),
            Some(Box::new(move |t, d, sink| {
                let y = t.value(out).view().into_dimensionality::<Ix2>().unwrap();
                let d2 = d.view().into_dimensionality::<Ix2>().unwrap();
                let inner = (&d2 * &y).sum_axis(Axis(1)).insert_axis(Axis(1));
                sink(a, (&y * &(&d2 - &inner)).into_dyn());
            })),
        )
    }

    /// Layer normalization over the last axis of a 2-D node, with learnable
    /// gain and shift.
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, shift: NodeId, eps: f64) -> NodeId {
        let xv = self.value(x).view().into_dimensionality::<Ix2>().unwrap();
        let gv = self.value(gain).view().into_dimensionality::<ndarray::Ix1>().unwrap();
        let sv = self.value(shift).view().into_dimensionality::<ndarray::Ix1>().unwrap();
        let c = xv.ncols() as f64;
        let mean = xv.mean_axis(Axis(1)).unwrap().insert_axis(Axis(1));
        let centered = &xv - &mean;
        let var = centered.mapv(|v| v * v).sum_axis(Axis(1)).insert_axis(Axis(1)) / c;
        let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
        let xhat = &centered * &inv_std;
        let v = &xhat * &gv + &sv;
        self.push(
            v.into_dyn(),
            Some(Box::new(move |t, d, sink| {
                let xv = t.value(x).view().into_dimensionality::<Ix2>().unwrap();
                let gv = t.value(gain).view().into_dimensionality::<ndarray::Ix1>().unwrap();
                let d2 = d.view().into_dimensionality::<Ix2>().unwrap();
                let c = xv.ncols() as f64;
                let mean = xv.mean_axis(Axis(1)).unwrap().insert_axis(Axis(1));
                let centered = &xv - &mean;
                let var =
                    centered.mapv(|v| v * v).sum_axis(Axis(1)).insert_axis(Axis(1)) / c;
                let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
                let xhat = &centered * &inv_std;
                sink(shift, d2.sum_axis(Axis(0)).into_dyn());
                sink(gain, (&d2 * &xhat).sum_axis(Axis(0)).into_dyn());
                let g = &d2 * &gv;
                let g_mean = g.mean_axis(Axis(1)).unwrap().insert_axis(Axis(1));
                let gx_mean = (&g * &xhat).mean_axis(Axis(1)).unwrap().insert_axis(Axis(1));
                let dx = (&g - &g_mean - &(&xhat * &gx_mean)) * &inv_std;
                sink(x, dx.into_dyn());
            })),
        )
    }

    /// Multi-head self-attention over packed `qkv` of shape
    /// (batch, tokens, 3·dim). Returns the attended output
    /// (batch, tokens, dim) and the attention probabilities
    /// (batch, heads, tokens, tokens) for saliency rollout.
    pub fn mha(&mut self, qkv: NodeId, heads: usize) -> (NodeId, Array4<f64>) {
        let v3 = self.value(qkv).view().into_dimensionality::<Ix3>().unwrap();
        let (b, tkn, c3) = v3.dim();
        assert_eq!(c3 % 3, 0, "qkv last axis must pack three projections");
        let c = c3 / 3;
        assert_eq!(c % heads, 0, "dim must divide evenly over heads");
        let hd = c / heads;
        let scale = 1.0 / (hd as f64).sqrt();
        let mut out = Array3::<f64>::zeros((b, tkn, c));
        let mut probs = Array4::<f64>::zeros((b, heads, tkn, tkn));
        for bi in 0..b {
            for h in 0..heads {
                let q = v3.slice(s![bi, .., h * hd..(h + 1) * hd]);
                let k = v3.slice(s![bi, .., c + h * hd..c + (h + 1) * hd]);
                let val = v3.slice(s![bi, .., 2 * c + h * hd..2 * c + (h + 1) * hd]);
                let mut scores = q.dot(&k.t());
                scores *= scale;
                softmax_rows_in_place(&mut scores);
                out.slice_mut(s![bi, .., h * hd..(h + 1) * hd])
                    .assign(&scores.dot(&val));
                probs.slice_mut(s![bi, h, .., ..]).assign(&scores);
            }
        }
        let saved = probs.clone();
        let out_id = self.push(
            out.into_dyn(),
            Some(Box::new(move |t, d, sink| {
                let v3 = t.value(qkv).view().into_dimensionality::<Ix3>().unwrap();
                let d3 = d.view().into_dimensionality::<Ix3>().unwrap();
                let mut dqkv = Array3::<f64>::zeros(v3.dim());
                for bi in 0..b {
                    for h in 0..heads {
                        let q = v3.slice(s![bi, .., h * hd..(h + 1) * hd]);
                        let k = v3.slice(s![bi, .., c + h * hd..c + (h + 1) * hd]);
                        let val = v3.slice(s![bi, .., 2 * c + h * hd..2 * c + (h + 1) * hd]);
                        let p = saved.slice(s![bi, h, .., ..]);
                        let dout = d3.slice(s![bi, .., h * hd..(h + 1) * hd]);
                        let dp = dout.dot(&val.t());
                        let dv = p.t().dot(&dout);
                        // Softmax backward per row.
                        let inner = (&dp * &p).sum_axis(Axis(1)).insert_axis(Axis(1));
                        let ds = (&p * &(&dp - &inner)) * scale;
                        let dq = ds.dot(&k);
                        let dk = ds.t().dot(&q);
                        dqkv.slice_mut(s![bi, .., h * hd..(h + 1) * hd])
                            .zip_mut_with(&dq, |a, &b| *a += b);
                        dqkv.slice_mut(s![bi, .., c + h * hd..c + (h + 1) * hd])
                            .zip_mut_with(&dk, |a, &b| *a += b);
                        dqkv.slice_mut(s![bi, .., 2 * c + h * hd..2 * c + (h + 1) * hd])
                            .zip_mut_with(&dv, |a, &b| *a += b);
                    }
                }
                sink(qkv, dqkv.into_dyn());
            })),
        );
        (out_id, probs)
    }

    /// First token of every sequence: (batch, tokens, dim) → (batch, dim).
    pub fn first_token(&mut self, x: NodeId) -> NodeId {
        let v3 = self.value(x).view().into_dimensionality::<Ix3>().unwrap();
        let v = v3.index_axis(Axis(1), 0).to_owned();
        self.push(
            v.into_dyn(),
            Some(Box::new(move |t, d, sink| {
                let mut g = ArrayD::zeros(t.value(x).raw_dim());
                let d2 = d.view().into_dimensionality::<Ix2>().unwrap();
                g.view_mut()
                    .into_dimensionality::<Ix3>()
                    .unwrap()
                    .index_axis_mut(Axis(1), 0)
                    .assign(&d2);
                sink(x, g);
            })),
        )
    }

    /// Prepend a learned token (dim,) to every sequence of `x`
    /// (batch, tokens, dim).
    pub fn prepend_token(&mut self, token: NodeId, x: NodeId) -> NodeId {
        let tv = self.value(token).view().into_dimensionality::<ndarray::Ix1>().unwrap();
        let xv = self.value(x).view().into_dimensionality::<Ix3>().unwrap();
        let (b, tkn, c) = xv.dim();
        let mut v = Array3::<f64>::zeros((b, tkn + 1, c));
        for bi in 0..b {
            v.slice_mut(s![bi, 0, ..]).assign(&tv);
        }
        v.slice_mut(s![.., 1.., ..]).assign(&xv);
        self.push(
            v.into_dyn(),
            Some(Box::new(move |_, d, sink| {
                let d3 = d.view().into_dimensionality::<Ix3>().unwrap();
                sink(token, d3.slice(s![.., 0, ..]).sum_axis(Axis(0)).into_dyn());
                sink(x, d3.slice(s![.., 1.., ..]).to_owned().into_dyn());
            })),
        )
    }

    /// Rowwise Pearson correlation between two (batch, dim) nodes, with an
    /// epsilon-guarded denominator; yields one coefficient per row.
    pub fn pearson_rows(&mut self, a: NodeId, b: NodeId, eps: f64) -> NodeId {
        let av = self.value(a).view().into_dimensionality::<Ix2>().unwrap();
        let bv = self.value(b).view().into_dimensionality::<Ix2>().unwrap();
        assert_eq!(av.dim(), bv.dim());
        let rows = av.nrows();
        let mut v = Array1::<f64>::zeros(rows);
        for r in 0..rows {
            let (num, da, db) = centered_terms(av.row(r), bv.row(r));
            v[r] = num / ((da * db).sqrt() + eps);
        }
        self.push(
            v.into_dyn(),
            Some(Box::new(move |t, d, sink| {
                let av = t.value(a).view().into_dimensionality::<Ix2>().unwrap();
                let bv = t.value(b).view().into_dimensionality::<Ix2>().unwrap();
                let mut ga = Array2::<f64>::zeros(av.dim());
                let mut gb = Array2::<f64>::zeros(av.dim());
                for r in 0..av.nrows() {
                    let ar = av.row(r);
                    let br = bv.row(r);
                    let (num, da, db) = centered_terms(ar, br);
                    let d0 = (da * db).sqrt();
                    let den = d0 + eps;
                    let ma = ar.mean().unwrap();
                    let mb = br.mean().unwrap();
                    let seed = d[[r]];
                    for c in 0..ar.len() {
                        let ca = ar[c] - ma;
                        let cb = br[c] - mb;
                        // d(num)/da = cb, d(sqrt(da*db))/da = db*ca/d0.
                        let (sa, sb) = if d0 > 0.0 {
                            (
                                cb / den - num * db * ca / (d0 * den * den),
                                ca / den - num * da * cb / (d0 * den * den),
                            )
                        } else {
                            (cb / den, ca / den)
                        };
                        ga[[r, c]] += seed * sa;
                        gb[[r, c]] += seed * sb;
                    }
                }
                sink(a, ga.into_dyn());
                sink(b, gb.into_dyn());
            })),
        )
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-subtracted softmax over each row of a 2-D array, in place.
fn softmax_rows_in_place(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|x| (x - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|x| x / sum);
    }
}

fn centered_terms(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> (f64, f64, f64) {
    let n = a.len() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for (x, y) in a.iter().zip(b) {
        let cx = x - ma;
        let cy = y - mb;
        num += cx * cy;
        da += cx * cx;
        db += cy * cy;
    }
    (num, da, db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{ArrayD, IxDyn};
    use rand::prelude::*;
    use rand_chacha::ChaCha20Rng;

    /// Build a random array with entries in (lo, hi).
    fn rand_array(rng: &mut ChaCha20Rng, shape: &[usize], lo: f64, hi: f64) -> ArrayD<f64> {
        ArrayD::from_shape_fn(IxDyn(shape), |_| rng.random_range(lo..hi))
    }

    /// Check the engine gradient of a scalar-valued graph against central
    /// finite differences for every element of every input.
    fn check_grads(
        build: &dyn Fn(&mut Tape, &[NodeId]) -> NodeId,
        inputs: &[ArrayD<f64>],
        tol: f64,
    ) {
        let eval = |inputs: &[ArrayD<f64>]| -> f64 {
            let mut tape = Tape::new();
            let ids: Vec<NodeId> = inputs.iter().map(|v| tape.leaf(v.clone())).collect();
            let root = build(&mut tape, &ids);
            tape.scalar(root)
        };
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = inputs.iter().map(|v| tape.leaf(v.clone())).collect();
        let root = build(&mut tape, &ids);
        let grads = tape.backward(root);
        let h = 1e-5;
        for (which, input) in inputs.iter().enumerate() {
            let engine = grads.get(ids[which]);
            for idx in ndarray::indices(input.raw_dim()) {
                let mut plus = inputs.to_vec();
                plus[which][&idx] += h;
                let mut minus = inputs.to_vec();
                minus[which][&idx] -= h;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let got = engine.map_or(0.0, |g| g[&idx]);
                let denom = fd.abs().max(got.abs()).max(1.0);
                assert!(
                    (fd - got).abs() / denom < tol,
                    "input {which} at {idx:?}: fd {fd} vs engine {got}"
                );
            }
        }
    }

    #[test]
    fn elementwise_arithmetic_gradients() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let a = rand_array(&mut rng, &[2, 3], -2.0, 2.0);
        let b = rand_array(&mut rng, &[2, 3], 0.5, 2.0);
        let w = rand_array(&mut rng, &[2, 3], -1.0, 1.0);
        for op in 0..6 {
            let w = w.clone();
            check_grads(
                &move |t: &mut Tape, ids: &[NodeId]| {
                    let x = match op {
                        0 => t.add(ids[0], ids[1]),
                        1 => t.sub(ids[0], ids[1]),
                        2 => t.mul(ids[0], ids[1]),
                        3 => t.div(ids[0], ids[1]),
                        4 => t.scale(ids[0], -1.7),
                        _ => t.rdiv_scalar(ids[1], 2.5),
                    };
                    t.weighted_sum(x, w.clone())
                },
                &[a.clone(), b.clone()],
                1e-6,
            );
        }
    }

    #[test]
    fn nonlinearity_gradients() {
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        let a = rand_array(&mut rng, &[3, 4], 0.2, 2.0);
        let signed = rand_array(&mut rng, &[3, 4], -2.0, 2.0);
        let w = rand_array(&mut rng, &[3, 4], -1.0, 1.0);
        for op in 0..7 {
            let input = if op == 1 { a.clone() } else { signed.clone() };
            let w = w.clone();
            check_grads(
                &move |t: &mut Tape, ids: &[NodeId]| {
                    let x = match op {
                        0 => t.exp(ids[0]),
                        1 => t.ln(ids[0]),
                        2 => t.relu(ids[0]),
                        3 => t.softplus(ids[0]),
                        4 => t.sigmoid(ids[0]),
                        5 => t.gelu(ids[0]),
                        _ => t.abs(ids[0]),
                    };
                    t.weighted_sum(x, w.clone())
                },
                &[input],
                1e-5,
            );
        }
    }

    #[test]
    fn clamp_gradient_is_zero_outside_range() {
        let a = ndarray::arr1(&[-2.0, 0.3, 0.9, 5.0]).into_dyn();
        let mut tape = Tape::new();
        let id = tape.leaf(a);
        let c = tape.clamp(id, 0.0, 1.0);
        let root = tape.sum_all(c);
        let grads = tape.backward(root);
        let g = grads.get(id).unwrap();
        assert_eq!(g.as_slice().unwrap(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn matmul_and_linear_gradients() {
        let mut rng = ChaCha20Rng::seed_from_u64(37);
        let x = rand_array(&mut rng, &[4, 3], -1.0, 1.0);
        let w = rand_array(&mut rng, &[3, 5], -1.0, 1.0);
        let b = rand_array(&mut rng, &[5], -0.5, 0.5);
        let seed = rand_array(&mut rng, &[4, 5], -1.0, 1.0);
        let s1 = seed.clone();
        check_grads(
            &move |t: &mut Tape, ids: &[NodeId]| {
                let y = t.matmul(ids[0], ids[1]);
                t.weighted_sum(y, s1.clone())
            },
            &[x.clone(), w.clone()],
            1e-6,
        );
        // linear on a 3-D input exercises the reshape plumbing.
        let x3 = rand_array(&mut rng, &[2, 2, 3], -1.0, 1.0);
        let seed3 = rand_array(&mut rng, &[2, 2, 5], -1.0, 1.0);
        check_grads(
            &move |t: &mut Tape, ids: &[NodeId]| {
                let y = t.linear(ids[0], ids[1], ids[2]);
                t.weighted_sum(y, seed3.clone())
            },
            &[x3, w, b],
            1e-6,
        );
    }

    #[test]
    fn reduction_and_gather_gradients() {
        let mut rng = ChaCha20Rng::seed_from_u64(41);
        let x = rand_array(&mut rng, &[3, 4], -1.0, 1.0);
        let s = rand_array(&mut rng, &[3], 0.5, 2.0);
        let w3 = rand_array(&mut rng, &[3], -1.0, 1.0);
        let w34 = rand_array(&mut rng, &[3, 4], -1.0, 1.0);
        let w = w3.clone();
        check_grads(
            &move |t: &mut Tape, ids: &[NodeId]| {
                let y = t.sum_last(ids[0]);
                t.weighted_sum(y, w.clone())
            },
            &[x.clone()],
            1e-6,
        );
        let w = w3.clone();
        check_grads(
            &move |t: &mut Tape, ids: &[NodeId]| {
                let y = t.gather_rows(ids[0], vec![2, 0, 3]);
                t.weighted_sum(y, w.clone())
            },
            &[x.clone()],
            1e-6,
        );
        let w = w34.clone();
        check_grads(
            &move |t: &mut Tape, ids: &[NodeId]| {
                let y = t.mul_rows(ids[0], ids[1]);
                t.weighted_sum(y, w.clone())
            },
            &[x.clone(), s.clone()],
            1e-6,
        );
        let w = w34.clone();
        check_grads(
            &move |t: &mut Tape, ids: &[NodeId]| {
                let y = t.div_rows(ids[0], ids[1]);
                t.weighted_sum(y, w.clone())
            },
            &[x, s],
            1e-6,
        );
    }

    #[test]
    fn broadcast_and_shape_gradients() {
        let mut rng = ChaCha20Rng::seed_from_u64(43);
        let x = rand_array(&mut rng, &[2, 3, 4], -1.0, 1.0);
        let p = rand_array(&mut rng, &[3, 4], -1.0, 1.0);
        let w = rand_array(&mut rng, &[2, 3, 4], -1.0, 1.0);
        let w1 = w.clone();
        check_grads(
            &move |t: &mut Tape, ids: &[NodeId]| {
                let y = t.add_bcast(ids[0], ids[1]);
                t.weighted_sum(y, w1.clone())
            },
            &[x.clone(), p],
            1e-6,
        );
        let w2 = w
            .clone()
            .into_shape_with_order(IxDyn(&[6, 4]))
            .unwrap();
        check_grads(
            &move |t: &mut Tape, ids: &[NodeId]| {
                let y = t.reshape(ids[0], &[6, 4]);
                t.weighted_sum(y, w2.clone())
            },
            &[x],
            1e-6,
        );
    }

    #[test]
    fn softmax_and_layer_norm_gradients() {
        let mut rng = ChaCha20Rng::seed_from_u64(47);
        let x = rand_array(&mut rng, &[3, 5], -2.0, 2.0);
        let g = rand_array(&mut rng, &[5], 0.5, 1.5);
        let b = rand_array(&mut rng, &[5], -0.5, 0.5);
        let w = rand_array(&mut rng, &[3, 5], -1.0, 1.0);
        let w1 = w.clone();
        check_grads(
            &move |t: &mut Tape, ids: &[NodeId]| {
                let y = t.row_softmax(ids[0]);
                t.weighted_sum(y, w1.clone())
            },
            &[x.clone()],
            1e-6,
        );
        let w2 = w.clone();
        check_grads(
            &move |t: &mut Tape, ids: &[NodeId]| {
                let y = t.layer_norm(ids[0], ids[1], ids[2], 1e-6);
                t.weighted_sum(y, w2.clone())
            },
            &[x, g, b],
            1e-5,
        );
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = ChaCha20Rng::seed_from_u64(53);
        let x = rand_array(&mut rng, &[4, 7], -30.0, 30.0);
        let mut tape = Tape::new();
        let id = tape.leaf(x);
        let y = tape.row_softmax(id);
        for row in tape
            .value(y)
            .view()
            .into_dimensionality::<Ix2>()
            .unwrap()
            .rows()
        {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_gradients_and_probabilities() {
        let mut rng = ChaCha20Rng::seed_from_u64(59);
        let qkv = rand_array(&mut rng, &[2, 4, 18], -1.0, 1.0);
        let w = rand_array(&mut rng, &[2, 4, 6], -1.0, 1.0);
        let w1 = w.clone();
        check_grads(
            &move |t: &mut Tape, ids: &[NodeId]| {
                let (y, _) = t.mha(ids[0], 2);
                t.weighted_sum(y, w1.clone())
            },
            &[qkv.clone()],
            1e-5,
        );
        let mut tape = Tape::new();
        let id = tape.leaf(qkv);
        let (_, probs) = tape.mha(id, 2);
        assert_eq!(probs.dim(), (2, 2, 4, 4));
        for bi in 0..2 {
            for h in 0..2 {
                for r in 0..4 {
                    let sum: f64 = probs.slice(s![bi, h, r, ..]).sum();
                    assert!((sum - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn token_plumbing_gradients() {
        let mut rng = ChaCha20Rng::seed_from_u64(61);
        let cls = rand_array(&mut rng, &[4], -1.0, 1.0);
        let x = rand_array(&mut rng, &[2, 3, 4], -1.0, 1.0);
        let w_seq = rand_array(&mut rng, &[2, 4, 4], -1.0, 1.0);
        let w_tok = rand_array(&mut rng, &[2, 4], -1.0, 1.0);
        let w1 = w_seq.clone();
        check_grads(
            &move |t: &mut Tape, ids: &[NodeId]| {
                let y = t.prepend_token(ids[0], ids[1]);
                t.weighted_sum(y, w1.clone())
            },
            &[cls.clone(), x.clone()],
            1e-6,
        );
        let w2 = w_tok.clone();
        check_grads(
            &move |t: &mut Tape, ids: &[NodeId]| {
                let seq = t.prepend_token(ids[0], ids[1]);
                let y = t.first_token(seq);
                t.weighted_sum(y, w2.clone())
            },
            &[cls, x],
            1e-6,
        );
    }

    #[test]
    fn pearson_rows_matches_reference_and_gradients() {
        let mut rng = ChaCha20Rng::seed_from_u64(67);
        let a = rand_array(&mut rng, &[3, 6], -2.0, 2.0);
        let b = rand_array(&mut rng, &[3, 6], -2.0, 2.0);
        let mut tape = Tape::new();
        let ia = tape.leaf(a.clone());
        let ib = tape.leaf(b.clone());
        let rho = tape.pearson_rows(ia, ib, crate::losses::DEC_EPS);
        for r in 0..3 {
            let expect = crate::losses::pearson_guarded(
                a.slice(s![r, ..]).as_slice().unwrap(),
                b.slice(s![r, ..]).as_slice().unwrap(),
            )
            .unwrap();
            assert!((tape.value(rho)[[r]] - expect).abs() < 1e-12);
        }
        let w = rand_array(&mut rng, &[3], -1.0, 1.0);
        check_grads(
            &move |t: &mut Tape, ids: &[NodeId]| {
                let rho = t.pearson_rows(ids[0], ids[1], crate::losses::DEC_EPS);
                t.weighted_sum(rho, w.clone())
            },
            &[a, b],
            1e-5,
        );
    }

    #[test]
    fn detach_blocks_gradients() {
        let mut tape = Tape::new();
        let a = tape.leaf(ndarray::arr1(&[1.0, 2.0]).into_dyn());
        let d = tape.detach(a);
        let b = tape.leaf(ndarray::arr1(&[3.0, 4.0]).into_dyn());
        let y = tape.mul(d, b);
        let root = tape.sum_all(y);
        let grads = tape.backward(root);
        assert!(grads.get(a).is_none());
        assert!(grads.get(b).is_some());
        // The detached value itself still receives a gradient; it just does
        // not propagate further.
        assert!(grads.get(d).is_some());
    }

    #[test]
    fn gradient_accumulates_over_shared_nodes() {
        // y = a*a + a  =>  dy/da = 2a + 1.
        let mut tape = Tape::new();
        let a = tape.leaf(ndarray::arr1(&[3.0]).into_dyn());
        let sq = tape.mul(a, a);
        let y = tape.add(sq, a);
        let root = tape.sum_all(y);
        let grads = tape.backward(root);
        assert!((grads.get(a).unwrap()[[0]] - 7.0).abs() < 1e-12);
    }

    #[test]
    fn backward_requires_scalar_root() {
        let mut tape = Tape::new();
        let a = tape.leaf(ndarray::arr1(&[1.0, 2.0]).into_dyn());
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
            tape.backward(a);
        }));
        assert!(result.is_err());
    }
}
