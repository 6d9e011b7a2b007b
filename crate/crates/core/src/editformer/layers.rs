//! Transformer building blocks: multi-head attention, layer norm, FFN, and
//! the timestep-gating MLP. Every forward returns the cache its backward
//! needs; backward routines accumulate parameter gradients only when asked,
//! so frozen groups cost nothing while input gradients still flow.

use rand::RngExt;
use rand_chacha::ChaCha8Rng;

use super::mat::Mat;
use super::scalar::Scalar;

const LN_EPS: f64 = 1e-6;

fn sample_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn random_mat<T: Scalar>(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Mat<T> {
    let data: Vec<f64> = (0..rows * cols).map(|_| sample_normal(rng) * std).collect();
    Mat::from_f64s(rows, cols, &data)
}

// ---------------------------------------------------------------------------
// Linear projections

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub w: Mat<T>, // [d_in, d_out]
    pub b: Vec<T>, // [d_out]
}

impl<T: Scalar> Linear<T> {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Self {
            w: Mat::zeros(d_in, d_out),
            b: vec![T::ZERO; d_out],
        }
    }

    pub fn random(rng: &mut ChaCha8Rng, d_in: usize, d_out: usize, std: f64) -> Self {
        Self {
            w: random_mat(rng, d_in, d_out, std),
            b: vec![T::ZERO; d_out],
        }
    }

    pub fn forward(&self, x: &Mat<T>) -> Mat<T> {
        let mut y = x.matmul(&self.w);
        y.add_row_broadcast(&self.b);
        y
    }

    /// Returns d_input; accumulates parameter grads into `grads` when given.
    pub fn backward(&self, x: &Mat<T>, d_out: &Mat<T>, grads: Option<&mut Linear<T>>) -> Mat<T> {
        if let Some(g) = grads {
            g.w.add_assign(&x.matmul_tn(d_out));
            for r in 0..d_out.rows() {
                for (gb, &d) in g.b.iter_mut().zip(d_out.row(r)) {
                    *gb += d;
                }
            }
        }
        d_out.matmul_nt(&self.w)
    }

    pub fn cast<U: Scalar>(&self) -> Linear<U> {
        Linear {
            w: self.w.cast(),
            b: self.b.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Layer norm

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

pub struct LayerNormCache<T> {
    x_hat: Mat<T>,
    inv_sigma: Vec<T>,
}

impl<T: Scalar> LayerNorm<T> {
    pub fn identity(d: usize) -> Self {
        Self {
            gamma: vec![T::ONE; d],
            beta: vec![T::ZERO; d],
        }
    }

    pub fn forward(&self, x: &Mat<T>) -> (Mat<T>, LayerNormCache<T>) {
        let (rows, cols) = (x.rows(), x.cols());
        let mut x_hat = Mat::zeros(rows, cols);
        let mut inv_sigma = Vec::with_capacity(rows);
        let inv_n = T::from_f64(1.0 / cols as f64);
        for r in 0..rows {
            let row = x.row(r);
            let mut mean = T::ZERO;
            for &v in row {
                mean += v;
            }
            mean *= inv_n;
            let mut var = T::ZERO;
            for &v in row {
                let d = v - mean;
                var += d * d;
            }
            var *= inv_n;
            let is = T::ONE / (var + T::from_f64(LN_EPS)).sqrt();
            inv_sigma.push(is);
            for c in 0..cols {
                x_hat.set(r, c, (row[c] - mean) * is);
            }
        }
        let mut y = x_hat.clone();
        for r in 0..rows {
            for c in 0..cols {
                y.set(r, c, y.get(r, c) * self.gamma[c] + self.beta[c]);
            }
        }
        (y, LayerNormCache { x_hat, inv_sigma })
    }

    pub fn backward(
        &self,
        cache: &LayerNormCache<T>,
        d_out: &Mat<T>,
        grads: Option<&mut LayerNorm<T>>,
    ) -> Mat<T> {
        let (rows, cols) = (d_out.rows(), d_out.cols());
        if let Some(g) = grads {
            for r in 0..rows {
                for c in 0..cols {
                    g.gamma[c] += d_out.get(r, c) * cache.x_hat.get(r, c);
                    g.beta[c] += d_out.get(r, c);
                }
            }
        }
        let mut dx = Mat::zeros(rows, cols);
        let inv_n = T::from_f64(1.0 / cols as f64);
        for r in 0..rows {
            let mut mean_dxhat = T::ZERO;
            let mut mean_dxhat_xhat = T::ZERO;
            for c in 0..cols {
                let dxh = d_out.get(r, c) * self.gamma[c];
                mean_dxhat += dxh;
                mean_dxhat_xhat += dxh * cache.x_hat.get(r, c);
            }
            mean_dxhat *= inv_n;
            mean_dxhat_xhat *= inv_n;
            for c in 0..cols {
                let dxh = d_out.get(r, c) * self.gamma[c];
                let xh = cache.x_hat.get(r, c);
                dx.set(
                    r,
                    c,
                    cache.inv_sigma[r] * (dxh - mean_dxhat - xh * mean_dxhat_xhat),
                );
            }
        }
        dx
    }

    pub fn cast<U: Scalar>(&self) -> LayerNorm<U> {
        LayerNorm {
            gamma: self.gamma.iter().map(|v| U::from_f64(v.to_f64())).collect(),
            beta: self.beta.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Multi-head attention

#[derive(Debug, Clone, PartialEq)]
pub struct Attention<T> {
    pub wq: Linear<T>,
    pub wk: Linear<T>,
    pub wv: Linear<T>,
    pub wo: Linear<T>,
    pub n_heads: usize,
}

pub struct AttentionCache<T> {
    q_in: Mat<T>,
    kv_in: Mat<T>,
    q: Mat<T>,
    k: Mat<T>,
    v: Mat<T>,
    /// Per-head softmax rows, each `[n_q, n_kv]`.
    pub probs: Vec<Mat<T>>,
    ctx: Mat<T>,
}

impl<T: Scalar> Attention<T> {
    pub fn zeros(d_model: usize, n_heads: usize) -> Self {
        Self {
            wq: Linear::zeros(d_model, d_model),
            wk: Linear::zeros(d_model, d_model),
            wv: Linear::zeros(d_model, d_model),
            wo: Linear::zeros(d_model, d_model),
            n_heads,
        }
    }

    pub fn random(rng: &mut ChaCha8Rng, d_model: usize, n_heads: usize, std: f64) -> Self {
        Self {
            wq: Linear::random(rng, d_model, d_model, std),
            wk: Linear::random(rng, d_model, d_model, std),
            wv: Linear::random(rng, d_model, d_model, std),
            wo: Linear::random(rng, d_model, d_model, std),
            n_heads,
        }
    }

    pub fn forward(&self, q_in: &Mat<T>, kv_in: &Mat<T>) -> (Mat<T>, AttentionCache<T>) {
        let d = q_in.cols();
        let dh = d / self.n_heads;
        let scale = T::from_f64(1.0 / (dh as f64).sqrt());
        let q = self.wq.forward(q_in);
        let k = self.wk.forward(kv_in);
        let v = self.wv.forward(kv_in);
        let (n_q, n_kv) = (q.rows(), k.rows());

        let mut ctx = Mat::zeros(n_q, d);
        let mut probs = Vec::with_capacity(self.n_heads);
        for h in 0..self.n_heads {
            let off = h * dh;
            let mut p = Mat::zeros(n_q, n_kv);
            for i in 0..n_q {
                // scores then a max-shifted softmax row
                let mut row_max = T::from_f64(f64::NEG_INFINITY);
                for j in 0..n_kv {
                    let mut s = T::ZERO;
                    for c in 0..dh {
                        s += q.get(i, off + c) * k.get(j, off + c);
                    }
                    s *= scale;
                    p.set(i, j, s);
                    row_max = row_max.maximum(s);
                }
                let mut sum = T::ZERO;
                for j in 0..n_kv {
                    let e = (p.get(i, j) - row_max).exp();
                    p.set(i, j, e);
                    sum += e;
                }
                let inv = T::ONE / sum;
                for j in 0..n_kv {
                    p.set(i, j, p.get(i, j) * inv);
                }
                for j in 0..n_kv {
                    let w = p.get(i, j);
                    for c in 0..dh {
                        let cur = ctx.get(i, off + c);
                        ctx.set(i, off + c, cur + w * v.get(j, off + c));
                    }
                }
            }
            probs.push(p);
        }

        let out = self.wo.forward(&ctx);
        let cache = AttentionCache {
            q_in: q_in.clone(),
            kv_in: kv_in.clone(),
            q,
            k,
            v,
            probs,
            ctx,
        };
        (out, cache)
    }

    /// Returns (d_q_in, d_kv_in).
    pub fn backward(
        &self,
        cache: &AttentionCache<T>,
        d_out: &Mat<T>,
        mut grads: Option<&mut Attention<T>>,
    ) -> (Mat<T>, Mat<T>) {
        let d = cache.q_in.cols();
        let dh = d / self.n_heads;
        let scale = T::from_f64(1.0 / (dh as f64).sqrt());
        let (n_q, n_kv) = (cache.q.rows(), cache.k.rows());

        let d_ctx = self
            .wo
            .backward(&cache.ctx, d_out, grads.as_deref_mut().map(|g| &mut g.wo));

        let mut dq = Mat::zeros(n_q, d);
        let mut dk = Mat::zeros(n_kv, d);
        let mut dv = Mat::zeros(n_kv, d);
        for h in 0..self.n_heads {
            let off = h * dh;
            let p = &cache.probs[h];
            for i in 0..n_q {
                // dP and dV for this query row
                let mut dp = vec![T::ZERO; n_kv];
                for j in 0..n_kv {
                    let mut s = T::ZERO;
                    for c in 0..dh {
                        s += d_ctx.get(i, off + c) * cache.v.get(j, off + c);
                    }
                    dp[j] = s;
                    let w = p.get(i, j);
                    for c in 0..dh {
                        let cur = dv.get(j, off + c);
                        dv.set(j, off + c, cur + w * d_ctx.get(i, off + c));
                    }
                }
                // softmax backward: dS = P ⊙ (dP − Σ dP ⊙ P)
                let mut dot = T::ZERO;
                for j in 0..n_kv {
                    dot += dp[j] * p.get(i, j);
                }
                for j in 0..n_kv {
                    let ds = p.get(i, j) * (dp[j] - dot) * scale;
                    for c in 0..dh {
                        let cur_q = dq.get(i, off + c);
                        dq.set(i, off + c, cur_q + ds * cache.k.get(j, off + c));
                        let cur_k = dk.get(j, off + c);
                        dk.set(j, off + c, cur_k + ds * cache.q.get(i, off + c));
                    }
                }
            }
        }

        let d_q_in = self
            .wq
            .backward(&cache.q_in, &dq, grads.as_deref_mut().map(|g| &mut g.wq));
        let mut d_kv_in =
            self.wk
                .backward(&cache.kv_in, &dk, grads.as_deref_mut().map(|g| &mut g.wk));
        let d_kv_v = self
            .wv
            .backward(&cache.kv_in, &dv, grads.as_deref_mut().map(|g| &mut g.wv));
        d_kv_in.add_assign(&d_kv_v);
        (d_q_in, d_kv_in)
    }

    pub fn cast<U: Scalar>(&self) -> Attention<U> {
        Attention {
            wq: self.wq.cast(),
            wk: self.wk.cast(),
            wv: self.wv.cast(),
            wo: self.wo.cast(),
            n_heads: self.n_heads,
        }
    }
}

// ---------------------------------------------------------------------------
// GELU + feed-forward

fn gelu<T: Scalar>(u: T) -> T {
    // tanh approximation; smooth everywhere, which keeps central differences
    // honest during gradient checks
    let c = T::from_f64(0.7978845608028654); // sqrt(2/pi)
    let a = T::from_f64(0.044715);
    let half = T::from_f64(0.5);
    half * u * (T::ONE + (c * (u + a * u * u * u)).tanh())
}

fn gelu_grad<T: Scalar>(u: T) -> T {
    let c = T::from_f64(0.7978845608028654);
    let a = T::from_f64(0.044715);
    let half = T::from_f64(0.5);
    let three = T::from_f64(3.0);
    let s = c * (u + a * u * u * u);
    let t = s.tanh();
    let sech2 = T::ONE - t * t;
    half * (T::ONE + t) + half * u * sech2 * c * (T::ONE + three * a * u * u)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ffn<T> {
    pub l1: Linear<T>,
    pub l2: Linear<T>,
}

pub struct FfnCache<T> {
    x: Mat<T>,
    pre_act: Mat<T>,
    act: Mat<T>,
}

impl<T: Scalar> Ffn<T> {
    pub fn random(rng: &mut ChaCha8Rng, d_model: usize, d_ff: usize, std: f64) -> Self {
        Self {
            l1: Linear::random(rng, d_model, d_ff, std),
            l2: Linear::random(rng, d_ff, d_model, std),
        }
    }

    pub fn forward(&self, x: &Mat<T>) -> (Mat<T>, FfnCache<T>) {
        let pre_act = self.l1.forward(x);
        let mut act = pre_act.clone();
        for v in act.data_mut() {
            *v = gelu(*v);
        }
        let y = self.l2.forward(&act);
        (
            y,
            FfnCache {
                x: x.clone(),
                pre_act,
                act,
            },
        )
    }

    pub fn backward(
        &self,
        cache: &FfnCache<T>,
        d_out: &Mat<T>,
        mut grads: Option<&mut Ffn<T>>,
    ) -> Mat<T> {
        let mut d_act =
            self.l2
                .backward(&cache.act, d_out, grads.as_deref_mut().map(|g| &mut g.l2));
        for (d, &u) in d_act.data_mut().iter_mut().zip(cache.pre_act.data()) {
            *d *= gelu_grad(u);
        }
        self.l1
            .backward(&cache.x, &d_act, grads.as_deref_mut().map(|g| &mut g.l1))
    }

    pub fn cast<U: Scalar>(&self) -> Ffn<U> {
        Ffn {
            l1: self.l1.cast(),
            l2: self.l2.cast(),
        }
    }
}

// ---------------------------------------------------------------------------
// Timestep-gating MLP

/// Two hidden GELU layers; the final projection starts at zero so the edited
/// model boots as the frozen backbone.
#[derive(Debug, Clone, PartialEq)]
pub struct GateMlp<T> {
    pub l1: Linear<T>,
    pub l2: Linear<T>,
    pub l3: Linear<T>,
}

pub struct GateCache<T> {
    embed: Mat<T>,
    pre1: Mat<T>,
    act1: Mat<T>,
    pre2: Mat<T>,
    act2: Mat<T>,
}

impl<T: Scalar> GateMlp<T> {
    pub fn zero_final(rng: &mut ChaCha8Rng, embed_width: usize, hidden: usize, d_model: usize) -> Self {
        Self {
            l1: Linear::random(rng, embed_width, hidden, 0.2),
            l2: Linear::random(rng, hidden, hidden, 0.2),
            l3: Linear::zeros(hidden, 2 * d_model),
        }
    }

    /// Gate pair for a timestep embedding row: `(g1, g2)`, each `d_model` wide.
    pub fn forward(&self, embed: &Mat<T>) -> ((Vec<T>, Vec<T>), GateCache<T>) {
        let pre1 = self.l1.forward(embed);
        let mut act1 = pre1.clone();
        for v in act1.data_mut() {
            *v = gelu(*v);
        }
        let pre2 = self.l2.forward(&act1);
        let mut act2 = pre2.clone();
        for v in act2.data_mut() {
            *v = gelu(*v);
        }
        let out = self.l3.forward(&act2);
        let d_model = out.cols() / 2;
        let g1 = out.row(0)[..d_model].to_vec();
        let g2 = out.row(0)[d_model..].to_vec();
        (
            (g1, g2),
            GateCache {
                embed: embed.clone(),
                pre1,
                act1,
                pre2,
                act2,
            },
        )
    }

    pub fn backward(
        &self,
        cache: &GateCache<T>,
        d_g1: &[T],
        d_g2: &[T],
        mut grads: Option<&mut GateMlp<T>>,
    ) {
        let mut d_out = Mat::zeros(1, d_g1.len() + d_g2.len());
        for (c, &v) in d_g1.iter().chain(d_g2.iter()).enumerate() {
            d_out.set(0, c, v);
        }
        let mut d_act2 =
            self.l3
                .backward(&cache.act2, &d_out, grads.as_deref_mut().map(|g| &mut g.l3));
        for (d, &u) in d_act2.data_mut().iter_mut().zip(cache.pre2.data()) {
            *d *= gelu_grad(u);
        }
        let mut d_act1 =
            self.l2
                .backward(&cache.act1, &d_act2, grads.as_deref_mut().map(|g| &mut g.l2));
        for (d, &u) in d_act1.data_mut().iter_mut().zip(cache.pre1.data()) {
            *d *= gelu_grad(u);
        }
        let _ = self
            .l1
            .backward(&cache.embed, &d_act1, grads.as_deref_mut().map(|g| &mut g.l1));
    }

    pub fn cast<U: Scalar>(&self) -> GateMlp<U> {
        GateMlp {
            l1: self.l1.cast(),
            l2: self.l2.cast(),
            l3: self.l3.cast(),
        }
    }
}

/// Sinusoidal features of a scalar timestep, deterministic in `t`.
pub fn timestep_embedding<T: Scalar>(t: f64, width: usize) -> Mat<T> {
    assert!(width >= 2 && width % 2 == 0, "embedding width must be even");
    let half = width / 2;
    let mut data = vec![0.0f64; width];
    let scaled = t * 1000.0;
    for i in 0..half {
        let exponent = if half > 1 {
            i as f64 / (half - 1) as f64
        } else {
            0.0
        };
        let freq = (-(10_000.0f64.ln()) * exponent).exp();
        data[2 * i] = (scaled * freq).sin();
        data[2 * i + 1] = (scaled * freq).cos();
    }
    Mat::from_f64s(1, width, &data)
}
