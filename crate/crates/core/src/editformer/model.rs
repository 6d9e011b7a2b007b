//! The desk-scale editing transformer: a frozen randomly-initialized backbone
//! emulator plus two trainable cross-attention branches per layer and a
//! timestep-gating MLP.
//!
//! Layer layout (pre-norm, residual):
//!   x += SelfAttn(LN1(x))            [+ gated cross-attention branches]
//!   feature tap: LN2(x)              <- per-layer block feature
//!   x += ImgAttn(LN2(x), condition)
//!   x += FFN(LN3(x))

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::layers::{Attention, Ffn, GateMlp, LayerNorm, timestep_embedding};
use super::mat::Mat;
use super::scalar::Scalar;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    /// Maximum token count accepted by forward passes.
    pub seq_len: usize,
    #[serde(default = "default_t_embed_width")]
    pub t_embed_width: usize,
    #[serde(default = "default_gate_hidden")]
    pub gate_hidden: usize,
}

fn default_t_embed_width() -> usize {
    64
}

fn default_gate_hidden() -> usize {
    32
}

impl ModelConfig {
    pub fn toy() -> Self {
        Self {
            d_model: 16,
            n_heads: 2,
            n_layers: 2,
            d_ff: 32,
            seq_len: 8,
            t_embed_width: 64,
            gate_hidden: 32,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.d_model == 0 || self.n_heads == 0 || self.n_layers == 0 || self.d_ff == 0 {
            return Err(ModelError::ShapeMismatch("config fields must be positive".into()));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(ModelError::ShapeMismatch(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.seq_len == 0 || self.t_embed_width < 2 || self.t_embed_width % 2 != 0 {
            return Err(ModelError::ShapeMismatch(
                "seq_len must be positive and t_embed_width even".into(),
            ));
        }
        Ok(())
    }
}

/// One transformer layer. `self_attn`, `img_attn`, the norms, and `ffn`
/// belong to the frozen backbone; `cross1` / `cross2` are the trainable
/// guidance branches.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights<T> {
    pub ln1: LayerNorm<T>,
    pub self_attn: Attention<T>,
    pub cross1: Attention<T>,
    pub cross2: Attention<T>,
    pub ln2: LayerNorm<T>,
    pub img_attn: Attention<T>,
    pub ln3: LayerNorm<T>,
    pub ffn: Ffn<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyEditFormer<T> {
    pub config: ModelConfig,
    /// Frozen projection of the timestep embedding added to every token.
    pub time_proj: super::layers::Linear<T>,
    pub layers: Vec<LayerWeights<T>>,
    pub gate_mlp: GateMlp<T>,
}

/// Per-channel gate pair broadcast over tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct GatePair<T> {
    pub g1: Vec<T>,
    pub g2: Vec<T>,
}

/// Block features from the two feature-extraction passes: `f1` near t~0 under
/// the empty condition, `f2` near t~1 under the target-image condition.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSets<T> {
    pub f1: Vec<Mat<T>>,
    pub f2: Vec<Mat<T>>,
}

pub const FEATURE_T1_DEFAULT: f64 = 0.05;
pub const FEATURE_T2_DEFAULT: f64 = 0.95;

impl<T: Scalar> ToyEditFormer<T> {
    /// Seeded random initialization. The backbone emulator gets fixed random
    /// weights (standing in for a pretrained model); the guidance branches get
    /// small random weights; the gate MLP's final layer starts at zero.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d_model;
        let backbone_std = 0.35 / (d as f64).sqrt().sqrt();
        let branch_std = 0.05;
        let time_proj = super::layers::Linear::random(&mut rng, config.t_embed_width, d, 0.1);
        let layers = (0..config.n_layers)
            .map(|_| LayerWeights {
                ln1: LayerNorm::identity(d),
                self_attn: Attention::random(&mut rng, d, config.n_heads, backbone_std),
                cross1: Attention::random(&mut rng, d, config.n_heads, branch_std),
                cross2: Attention::random(&mut rng, d, config.n_heads, branch_std),
                ln2: LayerNorm::identity(d),
                img_attn: Attention::random(&mut rng, d, config.n_heads, backbone_std),
                ln3: LayerNorm::identity(d),
                ffn: Ffn::random(&mut rng, d, config.d_ff, backbone_std),
            })
            .collect();
        let gate_mlp = GateMlp::zero_final(&mut rng, config.t_embed_width, config.gate_hidden, d);
        Ok(Self {
            config,
            time_proj,
            layers,
            gate_mlp,
        })
    }

    pub fn cast<U: Scalar>(&self) -> ToyEditFormer<U> {
        ToyEditFormer {
            config: self.config,
            time_proj: self.time_proj.cast(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerWeights {
                    ln1: l.ln1.cast(),
                    self_attn: l.self_attn.cast(),
                    cross1: l.cross1.cast(),
                    cross2: l.cross2.cast(),
                    ln2: l.ln2.cast(),
                    img_attn: l.img_attn.cast(),
                    ln3: l.ln3.cast(),
                    ffn: l.ffn.cast(),
                })
                .collect(),
            gate_mlp: self.gate_mlp.cast(),
        }
    }

    fn check_tokens(&self, what: &str, tokens: &Mat<T>) -> Result<(), ModelError> {
        if tokens.cols() != self.config.d_model {
            return Err(ModelError::ShapeMismatch(format!(
                "{what}: width {} != d_model {}",
                tokens.cols(),
                self.config.d_model
            )));
        }
        if tokens.rows() == 0 || tokens.rows() > self.config.seq_len {
            return Err(ModelError::ShapeMismatch(format!(
                "{what}: {} tokens exceeds the seq_len budget {}",
                tokens.rows(),
                self.config.seq_len
            )));
        }
        Ok(())
    }

    fn timed_input(&self, tokens: &Mat<T>, t: f64) -> Mat<T> {
        let embed = timestep_embedding::<T>(t, self.config.t_embed_width);
        let proj = self.time_proj.forward(&embed);
        let mut x = tokens.clone();
        x.add_row_broadcast(proj.row(0));
        x
    }

    pub fn gates(&self, t: f64) -> GatePair<T> {
        let embed = timestep_embedding::<T>(t, self.config.t_embed_width);
        let ((g1, g2), _) = self.gate_mlp.forward(&embed);
        GatePair { g1, g2 }
    }

    /// Frozen-backbone pass: returns the output tokens and the per-layer
    /// block features (the layer-normed residual stream right after the
    /// self-attention merge).
    pub fn backbone_forward(
        &self,
        tokens: &Mat<T>,
        t: f64,
        condition: &Mat<T>,
    ) -> Result<(Mat<T>, Vec<Mat<T>>), ModelError> {
        self.check_tokens("latent tokens", tokens)?;
        if condition.cols() != self.config.d_model {
            return Err(ModelError::ShapeMismatch(format!(
                "condition tokens width {} != d_model {}",
                condition.cols(),
                self.config.d_model
            )));
        }
        let mut x = self.timed_input(tokens, t);
        let mut features = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (n1, _) = layer.ln1.forward(&x);
            let (h1, _) = layer.self_attn.forward(&n1, &n1);
            x.add_assign(&h1);
            let (n2, _) = layer.ln2.forward(&x);
            features.push(n2.clone());
            let (h_img, _) = layer.img_attn.forward(&n2, condition);
            x.add_assign(&h_img);
            let (n3, _) = layer.ln3.forward(&x);
            let (h_ffn, _) = layer.ffn.forward(&n3);
            x.add_assign(&h_ffn);
        }
        Ok((x, features))
    }

    /// Two backbone passes: fine-grained structural features near `t1 ~ 0`
    /// under the empty condition, semantic transition features near `t2 ~ 1`
    /// under the target-image condition.
    pub fn extract_features(
        &self,
        src_tokens: &Mat<T>,
        t1: f64,
        t2: f64,
        img_tgt: &Mat<T>,
        img_zero: &Mat<T>,
    ) -> Result<FeatureSets<T>, ModelError> {
        if t1 >= t2 {
            return Err(ModelError::ShapeMismatch(format!(
                "feature timesteps must satisfy t1 < t2, got {t1} >= {t2}"
            )));
        }
        if !(0.0..=1.0).contains(&t1) || !(0.0..=1.0).contains(&t2) {
            return Err(ModelError::ShapeMismatch(format!(
                "feature timesteps must lie in [0, 1], got {t1} and {t2}"
            )));
        }
        let (_, f1) = self.backbone_forward(src_tokens, t1, img_zero)?;
        let (_, f2) = self.backbone_forward(src_tokens, t2, img_tgt)?;
        Ok(FeatureSets { f1, f2 })
    }

    /// Full edited forward. Returns the output tokens; with `cache` the
    /// activations needed by `backward` are recorded.
    pub fn edited_forward(
        &self,
        tokens: &Mat<T>,
        t: f64,
        condition: &Mat<T>,
        features: &FeatureSets<T>,
        cache: Option<&mut ForwardCache<T>>,
    ) -> Result<Mat<T>, ModelError> {
        self.check_tokens("latent tokens", tokens)?;
        if features.f1.len() != self.layers.len() || features.f2.len() != self.layers.len() {
            return Err(ModelError::ShapeMismatch(format!(
                "feature sets have {}/{} entries for {} layers",
                features.f1.len(),
                features.f2.len(),
                self.layers.len()
            )));
        }
        let embed = timestep_embedding::<T>(t, self.config.t_embed_width);
        let ((g1, g2), gate_cache) = self.gate_mlp.forward(&embed);
        let mut x = self.timed_input(tokens, t);

        let mut layer_caches = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let x_in = x.clone();
            let (n1, ln1_cache) = layer.ln1.forward(&x_in);
            let (h1, self_cache) = layer.self_attn.forward(&n1, &n1);
            let (h2, c1_cache) = layer.cross1.forward(&n1, &features.f1[i]);
            let (h3, c2_cache) = layer.cross2.forward(&n1, &features.f2[i]);
            let mut h = h1.clone();
            for r in 0..h.rows() {
                for c in 0..h.cols() {
                    let v = h.get(r, c) + g1[c] * h2.get(r, c) + g2[c] * h3.get(r, c);
                    h.set(r, c, v);
                }
            }
            x.add_assign(&h);
            let x_mid = x.clone();
            let (n2, ln2_cache) = layer.ln2.forward(&x_mid);
            let (h_img, img_cache) = layer.img_attn.forward(&n2, condition);
            x.add_assign(&h_img);
            let x_mid2 = x.clone();
            let (n3, ln3_cache) = layer.ln3.forward(&x_mid2);
            let (h_ffn, ffn_cache) = layer.ffn.forward(&n3);
            x.add_assign(&h_ffn);
            if cache.is_some() {
                layer_caches.push(LayerCache {
                    ln1: ln1_cache,
                    self_attn: self_cache,
                    cross1: c1_cache,
                    cross2: c2_cache,
                    h2,
                    h3,
                    ln2: ln2_cache,
                    img: img_cache,
                    ln3: ln3_cache,
                    ffn: ffn_cache,
                });
            }
        }
        if let Some(cache) = cache {
            cache.layers = layer_caches;
            cache.gate = Some(gate_cache);
            cache.g1 = g1;
            cache.g2 = g2;
        }
        Ok(x)
    }
}

impl<T: Scalar> LayerWeights<T> {
    /// One frozen backbone layer: self-attention, image cross-attention, FFN,
    /// all with pre-norm residuals. Returns (output, block feature).
    pub fn backbone_block_forward(&self, x: &Mat<T>, img_tokens: &Mat<T>) -> (Mat<T>, Mat<T>) {
        let mut x = x.clone();
        let (n1, _) = self.ln1.forward(&x);
        let (h1, _) = self.self_attn.forward(&n1, &n1);
        x.add_assign(&h1);
        let (n2, _) = self.ln2.forward(&x);
        let feature = n2.clone();
        let (h_img, _) = self.img_attn.forward(&n2, img_tokens);
        x.add_assign(&h_img);
        let (n3, _) = self.ln3.forward(&x);
        let (h_ffn, _) = self.ffn.forward(&n3);
        x.add_assign(&h_ffn);
        (x, feature)
    }

    /// One dual-guidance layer: the frozen pathway plus the two gated
    /// cross-attention branches over the per-layer source features.
    pub fn dual_block_forward(
        &self,
        x: &Mat<T>,
        f1_i: &Mat<T>,
        f2_i: &Mat<T>,
        gates: &GatePair<T>,
        img_tokens: &Mat<T>,
    ) -> Result<Mat<T>, ModelError> {
        if gates.g1.len() != x.cols() || gates.g2.len() != x.cols() {
            return Err(ModelError::ShapeMismatch(format!(
                "gate width {} vs token width {}",
                gates.g1.len(),
                x.cols()
            )));
        }
        if f1_i.cols() != x.cols() || f2_i.cols() != x.cols() {
            return Err(ModelError::ShapeMismatch(
                "feature width differs from token width".into(),
            ));
        }
        let mut x = x.clone();
        let (n1, _) = self.ln1.forward(&x);
        let (h1, _) = self.self_attn.forward(&n1, &n1);
        let (h2, _) = self.cross1.forward(&n1, f1_i);
        let (h3, _) = self.cross2.forward(&n1, f2_i);
        let mut h = h1;
        for r in 0..h.rows() {
            for c in 0..h.cols() {
                let v = h.get(r, c) + gates.g1[c] * h2.get(r, c) + gates.g2[c] * h3.get(r, c);
                h.set(r, c, v);
            }
        }
        x.add_assign(&h);
        let (n2, _) = self.ln2.forward(&x);
        let (h_img, _) = self.img_attn.forward(&n2, img_tokens);
        x.add_assign(&h_img);
        let (n3, _) = self.ln3.forward(&x);
        let (h_ffn, _) = self.ffn.forward(&n3);
        x.add_assign(&h_ffn);
        Ok(x)
    }
}

pub struct LayerCache<T> {
    pub ln1: super::layers::LayerNormCache<T>,
    pub self_attn: super::layers::AttentionCache<T>,
    pub cross1: super::layers::AttentionCache<T>,
    pub cross2: super::layers::AttentionCache<T>,
    pub h2: Mat<T>,
    pub h3: Mat<T>,
    pub ln2: super::layers::LayerNormCache<T>,
    pub img: super::layers::AttentionCache<T>,
    pub ln3: super::layers::LayerNormCache<T>,
    pub ffn: super::layers::FfnCache<T>,
}

pub struct ForwardCache<T> {
    pub layers: Vec<LayerCache<T>>,
    pub gate: Option<super::layers::GateCache<T>>,
    pub g1: Vec<T>,
    pub g2: Vec<T>,
}

impl<T: Scalar> Default for ForwardCache<T> {
    fn default() -> Self {
        Self {
            layers: Vec::new(),
            gate: None,
            g1: Vec::new(),
            g2: Vec::new(),
        }
    }
}

/// Gradients for the trainable groups only.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainableGrads<T> {
    pub cross: Vec<(Attention<T>, Attention<T>)>,
    pub gate: GateMlp<T>,
}

impl<T: Scalar> TrainableGrads<T> {
    pub fn zeros(config: &ModelConfig) -> Self {
        let d = config.d_model;
        Self {
            cross: (0..config.n_layers)
                .map(|_| {
                    (
                        Attention::zeros(d, config.n_heads),
                        Attention::zeros(d, config.n_heads),
                    )
                })
                .collect(),
            gate: GateMlp {
                l1: super::layers::Linear::zeros(config.t_embed_width, config.gate_hidden),
                l2: super::layers::Linear::zeros(config.gate_hidden, config.gate_hidden),
                l3: super::layers::Linear::zeros(config.gate_hidden, 2 * d),
            },
        }
    }
}

impl<T: Scalar> ToyEditFormer<T> {
    /// Backward through the edited forward. `d_output` is dL/d(output
    /// tokens); gradients for the trainable groups accumulate into `grads`.
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        d_output: &Mat<T>,
        grads: &mut TrainableGrads<T>,
    ) {
        let mut dx = d_output.clone();
        let d_model = self.config.d_model;
        let mut d_g1_total = vec![T::ZERO; d_model];
        let mut d_g2_total = vec![T::ZERO; d_model];

        for (i, layer) in self.layers.iter().enumerate().rev() {
            let lc = &cache.layers[i];
            // x_out = x_mid2 + FFN(LN3(x_mid2))
            let d_ffn_out = dx.clone();
            let d_n3 = layer.ffn.backward(&lc.ffn, &d_ffn_out, None);
            let d_x_mid2 = layer.ln3.backward(&lc.ln3, &d_n3, None);
            dx.add_assign(&d_x_mid2);
            // x_mid2 = x_mid + ImgAttn(LN2(x_mid), cond)
            let (d_n2, _d_cond) = layer.img_attn.backward(&lc.img, &dx, None);
            let d_x_mid = layer.ln2.backward(&lc.ln2, &d_n2, None);
            dx.add_assign(&d_x_mid);
            // x_mid = x_in + h1 + g1*h2 + g2*h3
            let dh = dx.clone();
            // gate gradients: dg[c] += sum_r dh[r,c] * h[r,c]
            for r in 0..dh.rows() {
                for c in 0..d_model {
                    d_g1_total[c] += dh.get(r, c) * lc.h2.get(r, c);
                    d_g2_total[c] += dh.get(r, c) * lc.h3.get(r, c);
                }
            }
            // branch gradients, scaled by the gates
            let mut dh2 = dh.clone();
            let mut dh3 = dh.clone();
            for r in 0..dh.rows() {
                for c in 0..d_model {
                    dh2.set(r, c, dh.get(r, c) * cache.g1[c]);
                    dh3.set(r, c, dh.get(r, c) * cache.g2[c]);
                }
            }
            // self-attention queries and keys/values both come from n1
            let (d_n1_self_q, d_n1_self_kv) = layer.self_attn.backward(&lc.self_attn, &dh, None);
            let (layer_g1, layer_g2) = &mut grads.cross[i];
            let (d_n1_c1, _d_f1) = layer.cross1.backward(&lc.cross1, &dh2, Some(layer_g1));
            let (d_n1_c2, _d_f2) = layer.cross2.backward(&lc.cross2, &dh3, Some(layer_g2));
            let mut d_n1 = d_n1_self_q;
            d_n1.add_assign(&d_n1_self_kv);
            d_n1.add_assign(&d_n1_c1);
            d_n1.add_assign(&d_n1_c2);
            let d_x_in = layer.ln1.backward(&lc.ln1, &d_n1, None);
            dx.add_assign(&d_x_in);
        }

        if let Some(gate_cache) = &cache.gate {
            self.gate_mlp
                .backward(gate_cache, &d_g1_total, &d_g2_total, Some(&mut grads.gate));
        }
    }
}
