//! Bidirectional transformer encoder with tied input/output embeddings.
//!
//! Pre-norm blocks (LayerNorm → multi-head self-attention → residual,
//! LayerNorm → GELU MLP → residual), learned absolute positions, and a final
//! LayerNorm whose output is exposed as the last-layer hidden state. Attention
//! is non-causal; PAD keys are excluded. Parameters live in one flat `f32`
//! buffer so the optimizer and checkpoint code can treat them uniformly.
//! Backward passes are hand-written and checked against finite differences.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DenoisingModel, ForwardOutput, ModelSpec};
use crate::error::{Error, Result};
use crate::tokenizer::{TokenId, PAD};

const LN_EPS: f32 = 1e-5;
const INIT_RANGE: f32 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Span {
    offset: usize,
    rows: usize,
    cols: usize,
}

impl Span {
    fn len(&self) -> usize {
        self.rows * self.cols
    }
    fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct LayerSpans {
    ln1_g: Span,
    ln1_b: Span,
    wq: Span,
    wk: Span,
    wv: Span,
    wo: Span,
    ln2_g: Span,
    ln2_b: Span,
    w1: Span,
    b1: Span,
    w2: Span,
    b2: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Layout {
    tok_emb: Span,
    pos_emb: Span,
    layers: Vec<LayerSpans>,
    lnf_g: Span,
    lnf_b: Span,
    out_bias: Span,
    total: usize,
}

impl Layout {
    fn new(spec: &ModelSpec) -> Self {
        let d = spec.hidden_dim;
        let f = 4 * d;
        let mut offset = 0;
        let mut take = |rows: usize, cols: usize| {
            let span = Span { offset, rows, cols };
            offset += rows * cols;
            span
        };
        let tok_emb = take(spec.vocab_size, d);
        let pos_emb = take(spec.max_seq_len, d);
        let layers = (0..spec.n_layers)
            .map(|_| LayerSpans {
                ln1_g: take(1, d),
                ln1_b: take(1, d),
                wq: take(d, d),
                wk: take(d, d),
                wv: take(d, d),
                wo: take(d, d),
                ln2_g: take(1, d),
                ln2_b: take(1, d),
                w1: take(d, f),
                b1: take(1, f),
                w2: take(f, d),
                b2: take(1, d),
            })
            .collect();
        let lnf_g = take(1, d);
        let lnf_b = take(1, d);
        let out_bias = take(1, spec.vocab_size);
        Self {
            tok_emb,
            pos_emb,
            layers,
            lnf_g,
            lnf_b,
            out_bias,
            total: offset,
        }
    }

    /// Spans initialised to one rather than drawn uniformly.
    fn unit_spans(&self) -> Vec<Span> {
        let mut spans: Vec<Span> = self.layers.iter().flat_map(|l| [l.ln1_g, l.ln2_g]).collect();
        spans.push(self.lnf_g);
        spans
    }

    fn zero_spans(&self) -> Vec<Span> {
        let mut spans: Vec<Span> = self
            .layers
            .iter()
            .flat_map(|l| [l.ln1_b, l.ln2_b, l.b1, l.b2])
            .collect();
        spans.push(self.lnf_b);
        spans.push(self.out_bias);
        spans
    }
}

fn mat(buf: &[f32], span: Span) -> ArrayView2<'_, f32> {
    ArrayView2::from_shape((span.rows, span.cols), &buf[span.range()]).expect("span fits buffer")
}

fn vec1(buf: &[f32], span: Span) -> ArrayView1<'_, f32> {
    ArrayView1::from(&buf[span.range()])
}

fn mat_mut(buf: &mut [f32], span: Span) -> ArrayViewMut2<'_, f32> {
    ArrayViewMut2::from_shape((span.rows, span.cols), &mut buf[span.range()])
        .expect("span fits buffer")
}

fn vec1_mut(buf: &mut [f32], span: Span) -> ArrayViewMut1<'_, f32> {
    ArrayViewMut1::from(&mut buf[span.range()])
}

struct LnCache {
    xhat: Array2<f32>,
    inv_std: Array1<f32>,
}

fn layer_norm(x: &Array2<f32>, g: ArrayView1<f32>, b: ArrayView1<f32>) -> (Array2<f32>, LnCache) {
    let d = x.ncols() as f32;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, inv) in xhat.axis_iter_mut(Axis(0)).zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f32>() / d;
        *inv = 1.0 / (var + LN_EPS).sqrt();
        let s = *inv;
        row.mapv_inplace(|v| v * s);
    }
    let y = &xhat * &g + b;
    (y, LnCache { xhat, inv_std })
}

fn layer_norm_backward(
    dy: &Array2<f32>,
    cache: &LnCache,
    g: ArrayView1<f32>,
    mut dg: ArrayViewMut1<f32>,
    mut db: ArrayViewMut1<f32>,
) -> Array2<f32> {
    dg += &(dy * &cache.xhat).sum_axis(Axis(0));
    db += &dy.sum_axis(Axis(0));
    let dxhat = dy * &g;
    let d = dy.ncols() as f32;
    let mut dx = Array2::zeros(dy.raw_dim());
    for i in 0..dy.nrows() {
        let dxh = dxhat.row(i);
        let xh = cache.xhat.row(i);
        let sum = dxh.sum();
        let dot = dxh.dot(&xh);
        let inv = cache.inv_std[i];
        let mut out = dx.row_mut(i);
        for j in 0..dy.ncols() {
            out[j] = inv / d * (d * dxh[j] - sum - xh[j] * dot);
        }
    }
    dx
}

const GELU_C: f32 = 0.797_884_6; // sqrt(2/pi)

fn gelu(x: f32) -> f32 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f32) -> f32 {
    let inner = GELU_C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

struct LayerCache {
    ln1: LnCache,
    a: Array2<f32>,
    q: Array2<f32>,
    k: Array2<f32>,
    v: Array2<f32>,
    probs: Vec<Array2<f32>>,
    attn: Array2<f32>,
    ln2: LnCache,
    b: Array2<f32>,
    pre: Array2<f32>,
    act: Array2<f32>,
}

pub(crate) struct Activations {
    tokens: Vec<TokenId>,
    layers: Vec<LayerCache>,
    lnf: LnCache,
    pub(crate) hidden: Array2<f32>,
    pub(crate) logits: Array2<f32>,
}

/// The desk-scale masked-diffusion backbone.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyTransformer {
    spec: ModelSpec,
    layout: Layout,
    params: Vec<f32>,
}

impl ToyTransformer {
    /// Seeded initialisation: weights uniform in ±0.02, LayerNorm gains one,
    /// biases zero.
    pub fn new(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let layout = Layout::new(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut params: Vec<f32> = (0..layout.total)
            .map(|_| rng.gen_range(-INIT_RANGE..=INIT_RANGE))
            .collect();
        for span in layout.unit_spans() {
            params[span.range()].fill(1.0);
        }
        for span in layout.zero_spans() {
            params[span.range()].fill(0.0);
        }
        Ok(Self {
            spec,
            layout,
            params,
        })
    }

    pub(crate) fn from_parts(spec: ModelSpec, params: Vec<f32>) -> Result<Self> {
        spec.validate()?;
        let layout = Layout::new(&spec);
        if params.len() != layout.total {
            return Err(Error::Shape {
                expected: format!("{} parameters", layout.total),
                actual: format!("{} parameters", params.len()),
            });
        }
        Ok(Self {
            spec,
            layout,
            params,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f32] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub(crate) fn forward_cached(&self, tokens: &[TokenId]) -> Result<Activations> {
        self.check_input(tokens)?;
        let spec = &self.spec;
        let p = &self.params;
        let n = tokens.len();
        let d = spec.hidden_dim;
        let heads = spec.n_heads;
        let dh = d / heads;
        let scale = 1.0 / (dh as f32).sqrt();

        let tok_emb = mat(p, self.layout.tok_emb);
        let pos_emb = mat(p, self.layout.pos_emb);
        let mut x = Array2::<f32>::zeros((n, d));
        for (i, &t) in tokens.iter().enumerate() {
            let mut row = x.row_mut(i);
            row.assign(&tok_emb.row(t as usize));
            row += &pos_emb.row(i);
        }
        let key_ok: Vec<bool> = tokens.iter().map(|&t| t != PAD).collect();

        let mut caches = Vec::with_capacity(spec.n_layers);
        for l in &self.layout.layers {
            let (a, ln1) = layer_norm(&x, vec1(p, l.ln1_g), vec1(p, l.ln1_b));
            let q = a.dot(&mat(p, l.wq));
            let k = a.dot(&mat(p, l.wk));
            let v = a.dot(&mat(p, l.wv));
            let mut attn = Array2::<f32>::zeros((n, d));
            let mut probs = Vec::with_capacity(heads);
            for h in 0..heads {
                let cols = s![.., h * dh..(h + 1) * dh];
                let mut scores = q.slice(cols).dot(&k.slice(cols).t());
                for mut row in scores.axis_iter_mut(Axis(0)) {
                    let mut max = f32::NEG_INFINITY;
                    for (j, v) in row.iter_mut().enumerate() {
                        if key_ok[j] {
                            *v *= scale;
                            max = max.max(*v);
                        }
                    }
                    if max == f32::NEG_INFINITY {
                        row.fill(0.0);
                        continue;
                    }
                    let mut sum = 0.0;
                    for (j, v) in row.iter_mut().enumerate() {
                        if key_ok[j] {
                            *v = (*v - max).exp();
                            sum += *v;
                        } else {
                            *v = 0.0;
                        }
                    }
                    row.mapv_inplace(|v| v / sum);
                }
                attn.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
                probs.push(scores);
            }
            x = x + attn.dot(&mat(p, l.wo));
            let (b, ln2) = layer_norm(&x, vec1(p, l.ln2_g), vec1(p, l.ln2_b));
            let pre = b.dot(&mat(p, l.w1)) + vec1(p, l.b1);
            let act = pre.mapv(gelu);
            x = x + act.dot(&mat(p, l.w2)) + vec1(p, l.b2);
            caches.push(LayerCache {
                ln1,
                a,
                q,
                k,
                v,
                probs,
                attn,
                ln2,
                b,
                pre,
                act,
            });
        }
        let (hidden, lnf) = layer_norm(&x, vec1(p, self.layout.lnf_g), vec1(p, self.layout.lnf_b));
        let logits = hidden.dot(&tok_emb.t()) + vec1(p, self.layout.out_bias);
        Ok(Activations {
            tokens: tokens.to_vec(),
            layers: caches,
            lnf,
            hidden,
            logits,
        })
    }

    /// Accumulates parameter gradients for upstream gradient `dlogits`.
    pub(crate) fn backward(&self, acts: &Activations, dlogits: &Array2<f32>, grads: &mut [f32]) {
        let p = &self.params;
        let layout = &self.layout;
        let d = self.spec.hidden_dim;
        let heads = self.spec.n_heads;
        let dh = d / heads;
        let scale = 1.0 / (dh as f32).sqrt();

        let tok_emb = mat(p, layout.tok_emb);
        let dhidden = dlogits.dot(&tok_emb);
        {
            let mut de = mat_mut(grads, layout.tok_emb);
            ndarray::linalg::general_mat_mul(1.0, &dlogits.t(), &acts.hidden, 1.0, &mut de);
        }
        {
            let mut dbias = vec1_mut(grads, layout.out_bias);
            dbias += &dlogits.sum_axis(Axis(0));
        }
        let (g_lnf, b_lnf) = (layout.lnf_g, layout.lnf_b);
        let mut dx = {
            let (dg, db) = two_vecs_mut(grads, g_lnf, b_lnf);
            layer_norm_backward(&dhidden, &acts.lnf, vec1(p, g_lnf), dg, db)
        };

        for (l, c) in layout.layers.iter().zip(&acts.layers).rev() {
            // MLP
            ndarray::linalg::general_mat_mul(1.0, &c.act.t(), &dx, 1.0, &mut mat_mut(grads, l.w2));
            {
                let mut db2 = vec1_mut(grads, l.b2);
                db2 += &dx.sum_axis(Axis(0));
            }
            let mut dpre = dx.dot(&mat(p, l.w2).t());
            ndarray::Zip::from(&mut dpre)
                .and(&c.pre)
                .for_each(|g, &x| *g *= gelu_grad(x));
            ndarray::linalg::general_mat_mul(1.0, &c.b.t(), &dpre, 1.0, &mut mat_mut(grads, l.w1));
            {
                let mut db1 = vec1_mut(grads, l.b1);
                db1 += &dpre.sum_axis(Axis(0));
            }
            let db = dpre.dot(&mat(p, l.w1).t());
            let dmid = {
                let (dg, dbeta) = two_vecs_mut(grads, l.ln2_g, l.ln2_b);
                layer_norm_backward(&db, &c.ln2, vec1(p, l.ln2_g), dg, dbeta)
            };
            dx += &dmid;

            // attention
            ndarray::linalg::general_mat_mul(1.0, &c.attn.t(), &dx, 1.0, &mut mat_mut(grads, l.wo));
            let dattn = dx.dot(&mat(p, l.wo).t());
            let n = dx.nrows();
            let mut dq = Array2::<f32>::zeros((n, d));
            let mut dk = Array2::<f32>::zeros((n, d));
            let mut dv = Array2::<f32>::zeros((n, d));
            for h in 0..heads {
                let cols = s![.., h * dh..(h + 1) * dh];
                let probs = &c.probs[h];
                let dout = dattn.slice(cols);
                dv.slice_mut(cols).assign(&probs.t().dot(&dout));
                let mut ds = dout.dot(&c.v.slice(cols).t());
                for (mut drow, prow) in ds.axis_iter_mut(Axis(0)).zip(probs.axis_iter(Axis(0))) {
                    let dot = drow.dot(&prow);
                    ndarray::Zip::from(&mut drow)
                        .and(&prow)
                        .for_each(|g, &pv| *g = pv * (*g - dot) * scale);
                }
                dq.slice_mut(cols).assign(&ds.dot(&c.k.slice(cols)));
                dk.slice_mut(cols).assign(&ds.t().dot(&c.q.slice(cols)));
            }
            ndarray::linalg::general_mat_mul(1.0, &c.a.t(), &dq, 1.0, &mut mat_mut(grads, l.wq));
            ndarray::linalg::general_mat_mul(1.0, &c.a.t(), &dk, 1.0, &mut mat_mut(grads, l.wk));
            ndarray::linalg::general_mat_mul(1.0, &c.a.t(), &dv, 1.0, &mut mat_mut(grads, l.wv));
            let da = dq.dot(&mat(p, l.wq).t()) + dk.dot(&mat(p, l.wk).t()) + dv.dot(&mat(p, l.wv).t());
            let din = {
                let (dg, dbeta) = two_vecs_mut(grads, l.ln1_g, l.ln1_b);
                layer_norm_backward(&da, &c.ln1, vec1(p, l.ln1_g), dg, dbeta)
            };
            dx += &din;
        }

        {
            let mut de = mat_mut(grads, layout.tok_emb);
            for (i, &t) in acts.tokens.iter().enumerate() {
                let mut row = de.row_mut(t as usize);
                row += &dx.row(i);
            }
        }
        let mut dpos = mat_mut(grads, layout.pos_emb);
        for i in 0..acts.tokens.len() {
            let mut row = dpos.row_mut(i);
            row += &dx.row(i);
        }
    }
}

/// Disjoint mutable views of two adjacent-or-not spans (g precedes b).
fn two_vecs_mut(buf: &mut [f32], g: Span, b: Span) -> (ArrayViewMut1<'_, f32>, ArrayViewMut1<'_, f32>) {
    debug_assert!(g.offset + g.len() <= b.offset);
    let (head, tail) = buf.split_at_mut(b.offset);
    (
        ArrayViewMut1::from(&mut head[g.range()]),
        ArrayViewMut1::from(&mut tail[..b.len()]),
    )
}

impl DenoisingModel for ToyTransformer {
    fn vocab_size(&self) -> usize {
        self.spec.vocab_size
    }

    fn hidden_dim(&self) -> usize {
        self.spec.hidden_dim
    }

    fn max_seq_len(&self) -> usize {
        self.spec.max_seq_len
    }

    fn mask_id(&self) -> TokenId {
        self.spec.mask_id
    }

    fn forward(&self, tokens: &[TokenId]) -> Result<ForwardOutput> {
        let acts = self.forward_cached(tokens)?;
        ForwardOutput::new(acts.logits.mapv(f64::from), acts.hidden.mapv(f64::from))
    }
}
