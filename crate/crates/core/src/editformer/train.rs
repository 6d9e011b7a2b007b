//! Training (AdamW over the trainable groups only), finite-difference
//! gradient verification, and the frozen-group hash.

use rand::RngExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{Attention, GateMlp, Linear};
use super::mat::Mat;
use super::model::{FeatureSets, ForwardCache, ModelError, ToyEditFormer, TrainableGrads};
use super::scalar::Scalar;

/// One training example: clean tokens, noise tokens, a timestep, condition
/// tokens, and the pre-extracted per-layer source features.
#[derive(Debug, Clone)]
pub struct TrainSample<T> {
    pub x0: Mat<T>,
    pub eps: Mat<T>,
    pub t: f64,
    pub condition: Mat<T>,
    pub features: FeatureSets<T>,
}

/// Mean over elements of `(pred - (eps - x0))^2`.
pub fn cfm_loss_tokens<T: Scalar>(pred: &Mat<T>, eps: &Mat<T>, x0: &Mat<T>) -> f64 {
    assert!(pred.same_shape(eps) && pred.same_shape(x0));
    let mut sum = 0.0f64;
    for i in 0..pred.data().len() {
        let r = pred.data()[i].to_f64() - (eps.data()[i].to_f64() - x0.data()[i].to_f64());
        sum += r * r;
    }
    sum / pred.data().len() as f64
}

fn cfm_loss_grad<T: Scalar>(pred: &Mat<T>, eps: &Mat<T>, x0: &Mat<T>) -> (f64, Mat<T>) {
    let n = pred.data().len() as f64;
    let mut grad = Mat::zeros(pred.rows(), pred.cols());
    let mut sum = 0.0f64;
    for i in 0..pred.data().len() {
        let r = pred.data()[i].to_f64() - (eps.data()[i].to_f64() - x0.data()[i].to_f64());
        sum += r * r;
        grad.data_mut()[i] = T::from_f64(2.0 * r / n);
    }
    (sum / n, grad)
}

fn interpolate_tokens<T: Scalar>(x0: &Mat<T>, eps: &Mat<T>, t: f64) -> Mat<T> {
    let mut x = x0.clone();
    let tv = T::from_f64(t);
    let one_minus = T::from_f64(1.0 - t);
    for (o, &e) in x.data_mut().iter_mut().zip(eps.data()) {
        *o = one_minus * *o + tv * e;
    }
    x
}

/// Forward + loss for one sample; fills `cache` when given.
pub fn sample_loss<T: Scalar>(
    model: &ToyEditFormer<T>,
    sample: &TrainSample<T>,
    cache: Option<&mut ForwardCache<T>>,
) -> Result<(f64, Mat<T>), ModelError> {
    let x_t = interpolate_tokens(&sample.x0, &sample.eps, sample.t);
    let pred = model.edited_forward(&x_t, sample.t, &sample.condition, &sample.features, cache)?;
    if !pred.all_finite() {
        return Err(ModelError::NonFinite("forward output".into()));
    }
    let (loss, d_pred) = cfm_loss_grad(&pred, &sample.eps, &sample.x0);
    Ok((loss, d_pred))
}

/// Average CFM loss and trainable gradients over a batch.
pub fn batch_loss_and_grads<T: Scalar>(
    model: &ToyEditFormer<T>,
    batch: &[TrainSample<T>],
) -> Result<(f64, TrainableGrads<T>), ModelError> {
    assert!(!batch.is_empty());
    let mut grads = TrainableGrads::zeros(&model.config);
    let mut total = 0.0f64;
    for sample in batch {
        let mut cache = ForwardCache::default();
        let (loss, mut d_pred) = sample_loss(model, sample, Some(&mut cache))?;
        total += loss;
        let scale = T::from_f64(1.0 / batch.len() as f64);
        for v in d_pred.data_mut() {
            *v *= scale;
        }
        model.backward(&cache, &d_pred, &mut grads);
    }
    Ok((total / batch.len() as f64, grads))
}

// ---------------------------------------------------------------------------
// Uniform access to the trainable tensors

fn linear_slots<'a, T>(prefix: &str, l: &'a mut Linear<T>, out: &mut Vec<(String, &'a mut [T])>) {
    out.push((format!("{prefix}.w"), l.w.data_mut()));
    out.push((format!("{prefix}.b"), l.b.as_mut_slice()));
}

fn attention_slots<'a, T>(
    prefix: &str,
    a: &'a mut Attention<T>,
    out: &mut Vec<(String, &'a mut [T])>,
) {
    linear_slots(&format!("{prefix}.wq"), &mut a.wq, out);
    linear_slots(&format!("{prefix}.wk"), &mut a.wk, out);
    linear_slots(&format!("{prefix}.wv"), &mut a.wv, out);
    linear_slots(&format!("{prefix}.wo"), &mut a.wo, out);
}

fn gate_slots<'a, T>(g: &'a mut GateMlp<T>, out: &mut Vec<(String, &'a mut [T])>) {
    linear_slots("gate.l1", &mut g.l1, out);
    linear_slots("gate.l2", &mut g.l2, out);
    linear_slots("gate.l3", &mut g.l3, out);
}

/// Named flat views of every trainable tensor, in a canonical order shared by
/// the gradient container.
pub fn trainable_slots_mut<T>(model: &mut ToyEditFormer<T>) -> Vec<(String, &mut [T])> {
    let mut out = Vec::new();
    for (i, layer) in model.layers.iter_mut().enumerate() {
        attention_slots(&format!("layer{i}.cross1"), &mut layer.cross1, &mut out);
        attention_slots(&format!("layer{i}.cross2"), &mut layer.cross2, &mut out);
    }
    gate_slots(&mut model.gate_mlp, &mut out);
    out
}

pub fn grad_slots_mut<T>(grads: &mut TrainableGrads<T>) -> Vec<(String, &mut [T])> {
    let mut out = Vec::new();
    for (i, (c1, c2)) in grads.cross.iter_mut().enumerate() {
        attention_slots(&format!("layer{i}.cross1"), c1, &mut out);
        attention_slots(&format!("layer{i}.cross2"), c2, &mut out);
    }
    gate_slots(&mut grads.gate, &mut out);
    out
}

/// Re-randomizes the trainable groups (including the gate MLP's final layer,
/// which `init` leaves at zero). Used to probe gradients away from the
/// zero-gate point.
pub fn randomize_trainable(model: &mut ToyEditFormer<f64>, seed: u64, std: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (_, slot) in trainable_slots_mut(model) {
        for v in slot {
            let u1: f64 = rng.random::<f64>().max(1e-300);
            let u2: f64 = rng.random();
            *v = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos() * std;
        }
    }
}

// ---------------------------------------------------------------------------
// AdamW

pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: TrainableGrads<f32>,
    v: TrainableGrads<f32>,
}

impl AdamW {
    pub fn new(config: &super::model::ModelConfig, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            step: 0,
            m: TrainableGrads::zeros(config),
            v: TrainableGrads::zeros(config),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }
}

/// One optimizer step on the trainable groups; frozen weights are untouched
/// by construction. Returns the batch loss at the pre-step weights.
pub fn train_step(
    model: &mut ToyEditFormer<f32>,
    batch: &[TrainSample<f32>],
    opt: &mut AdamW,
) -> Result<f64, ModelError> {
    let (loss, mut grads) = batch_loss_and_grads(model, batch)?;
    if !loss.is_finite() {
        return Err(ModelError::NonFinite("batch loss".into()));
    }
    opt.step += 1;
    let bc1 = 1.0 - opt.beta1.powi(opt.step as i32);
    let bc2 = 1.0 - opt.beta2.powi(opt.step as i32);

    let params = trainable_slots_mut(model);
    let grad_views = grad_slots_mut(&mut grads);
    let m_views = grad_slots_mut(&mut opt.m);
    let v_views = grad_slots_mut(&mut opt.v);
    for (((param, grad), m), v) in params
        .into_iter()
        .zip(grad_views)
        .zip(m_views)
        .zip(v_views)
    {
        debug_assert_eq!(param.0, grad.0);
        debug_assert_eq!(param.0, m.0);
        for i in 0..param.1.len() {
            let g = grad.1[i] as f64;
            let m_new = opt.beta1 * (m.1[i] as f64) + (1.0 - opt.beta1) * g;
            let v_new = opt.beta2 * (v.1[i] as f64) + (1.0 - opt.beta2) * g * g;
            m.1[i] = m_new as f32;
            v.1[i] = v_new as f32;
            let m_hat = m_new / bc1;
            let v_hat = v_new / bc2;
            let update = opt.lr * (m_hat / (v_hat.sqrt() + opt.eps)
                + opt.weight_decay * (param.1[i] as f64));
            param.1[i] -= update as f32;
        }
    }
    Ok(loss)
}

// ---------------------------------------------------------------------------
// Gradient check

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_slot: String,
    pub coords_checked: usize,
}

/// Central finite differences against the analytic gradients, in 64-bit.
/// Relative error uses `|a - fd| / max(|a|, |fd|, 1e-4)`; the floor absorbs
/// f64 round-off on near-zero gradients without masking real defects.
pub fn grad_check(
    model: &ToyEditFormer<f64>,
    sample: &TrainSample<f64>,
    eps: f64,
    max_coords_per_slot: usize,
    seed: u64,
) -> Result<GradCheckReport, ModelError> {
    assert!((1e-6..=1e-3).contains(&eps), "eps must be in [1e-6, 1e-3]");
    let (_, grads) = batch_loss_and_grads(model, std::slice::from_ref(sample))?;
    let mut grads = grads;
    let analytic: Vec<(String, Vec<f64>)> = grad_slots_mut(&mut grads)
        .into_iter()
        .map(|(name, slice)| (name, slice.to_vec()))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_slot: String::new(),
        coords_checked: 0,
    };

    for (slot_idx, (name, a_grad)) in analytic.iter().enumerate() {
        let coords: Vec<usize> = if a_grad.len() <= max_coords_per_slot {
            (0..a_grad.len()).collect()
        } else {
            (0..max_coords_per_slot)
                .map(|_| rng.random_range(0..a_grad.len()))
                .collect()
        };
        for &c in &coords {
            let eval = |delta: f64| -> Result<f64, ModelError> {
                let mut probe = model.clone();
                trainable_slots_mut(&mut probe)[slot_idx].1[c] += delta;
                let (loss, _) = sample_loss(&probe, sample, None)?;
                Ok(loss)
            };
            let plus = eval(eps)?;
            let minus = eval(-eps)?;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(ModelError::NonFinite(format!("fd probe at {name}[{c}]")));
            }
            let fd = (plus - minus) / (2.0 * eps);
            let a = a_grad[c];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-4);
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_slot = format!("{name}[{c}]");
            }
            report.coords_checked += 1;
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Frozen-group hash

fn fnv1a_update(hash: &mut u64, bytes: &[u8]) {
    for &b in bytes {
        *hash ^= b as u64;
        *hash = hash.wrapping_mul(0x100000001b3);
    }
}

/// FNV-1a over every frozen tensor in canonical order. Constant across
/// training by the freeze contract.
pub fn frozen_group_hash<T: Scalar>(model: &ToyEditFormer<T>) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    let eat_slice = |hash: &mut u64, values: &[T]| {
        for v in values {
            fnv1a_update(hash, &v.hash_bits().to_le_bytes());
        }
    };
    let eat_linear = |hash: &mut u64, l: &Linear<T>| {
        eat_slice(hash, l.w.data());
        eat_slice(hash, &l.b);
    };
    let eat_attention = |hash: &mut u64, a: &Attention<T>| {
        eat_linear(hash, &a.wq);
        eat_linear(hash, &a.wk);
        eat_linear(hash, &a.wv);
        eat_linear(hash, &a.wo);
    };
    eat_linear(&mut hash, &model.time_proj);
    for layer in &model.layers {
        eat_slice(&mut hash, &layer.ln1.gamma);
        eat_slice(&mut hash, &layer.ln1.beta);
        eat_attention(&mut hash, &layer.self_attn);
        eat_slice(&mut hash, &layer.ln2.gamma);
        eat_slice(&mut hash, &layer.ln2.beta);
        eat_attention(&mut hash, &layer.img_attn);
        eat_slice(&mut hash, &layer.ln3.gamma);
        eat_slice(&mut hash, &layer.ln3.beta);
        eat_linear(&mut hash, &layer.ffn.l1);
        eat_linear(&mut hash, &layer.ffn.l2);
    }
    hash
}

// ---------------------------------------------------------------------------
// Fixture generation

/// Deterministic toy dataset: random clean/noise tokens, timesteps away from
/// the endpoints, random condition tokens, and features extracted from a
/// random per-sample source through the frozen backbone.
pub fn build_toy_batch<T: Scalar>(
    model: &ToyEditFormer<T>,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<TrainSample<T>>, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = &model.config;
    let seq = cfg.seq_len.min(8);
    let n_cond = 4.min(cfg.seq_len);
    let normal = |std: f64, rng: &mut ChaCha8Rng| -> f64 {
        let u1: f64 = rng.random::<f64>().max(1e-300);
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos() * std
    };
    let random_mat = |rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng| -> Mat<T> {
        let data: Vec<f64> = (0..rows * cols).map(|_| normal(std, rng)).collect();
        Mat::from_f64s(rows, cols, &data)
    };
    let mut batch = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let x0 = random_mat(seq, cfg.d_model, 1.0, &mut rng);
        let eps = random_mat(seq, cfg.d_model, 1.0, &mut rng);
        let t = 0.1 + 0.8 * rng.random::<f64>();
        let condition = random_mat(n_cond, cfg.d_model, 1.0, &mut rng);
        let src = random_mat(seq, cfg.d_model, 1.0, &mut rng);
        let zero_cond = Mat::zeros(n_cond, cfg.d_model);
        let features = model.extract_features(
            &src,
            super::model::FEATURE_T1_DEFAULT,
            super::model::FEATURE_T2_DEFAULT,
            &condition,
            &zero_cond,
        )?;
        batch.push(TrainSample {
            x0,
            eps,
            t,
            condition,
            features,
        });
    }
    Ok(batch)
}
