use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use serde_json::json;

use super::{Global, write_json};
use evk_core::editformer::{
    AdamW, ModelConfig, ToyEditFormer, batch_loss_and_grads, build_toy_batch, frozen_group_hash,
    grad_check, load_checkpoint, randomize_trainable, save_checkpoint, train_step,
};

#[derive(Args)]
pub struct EditformerCmd {
    #[command(subcommand)]
    pub command: EditformerSub,
}

#[derive(Subcommand)]
pub enum EditformerSub {
    /// Run the verification suite: gate-zero identity, gradient check,
    /// overfit smoke test, freeze invariance, checkpoint round trip
    Check(CheckArgs),
}

#[derive(Args)]
pub struct CheckArgs {
    /// Model config JSON; defaults to the toy configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 200)]
    pub train_steps: usize,
    #[arg(long, default_value_t = 0.02)]
    pub lr: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

pub fn run(cmd: EditformerCmd, global: &Global) -> Result<i32> {
    match cmd.command {
        EditformerSub::Check(args) => run_check(args, global),
    }
}

fn run_check(args: CheckArgs, global: &Global) -> Result<i32> {
    let config: ModelConfig = match &args.config {
        Some(path) => serde_json::from_str(
            &std::fs::read_to_string(path).with_context(|| path.display().to_string())?,
        )?,
        None => ModelConfig::toy(),
    };
    config.validate()?;
    let seed = global.effective_seed(args.seed);
    let mut checks: Vec<Check> = Vec::new();

    // 1. gate-zero identity over 100 random inputs, bitwise
    {
        let model = ToyEditFormer::<f32>::init(config, seed)?;
        let batch = build_toy_batch(&model, 100, seed.wrapping_add(1))?;
        let mut all_equal = true;
        let mut checked = 0usize;
        for sample in &batch {
            let x_t = interpolate_rows(&sample.x0, &sample.eps, sample.t);
            let edited =
                model.edited_forward(&x_t, sample.t, &sample.condition, &sample.features, None)?;
            let (backbone, _) = model.backbone_forward(&x_t, sample.t, &sample.condition)?;
            for (a, b) in edited.data().iter().zip(backbone.data()) {
                checked += 1;
                if a.to_bits() != b.to_bits() {
                    all_equal = false;
                }
            }
        }
        checks.push(Check {
            name: "gate_zero_identity",
            passed: all_equal,
            detail: format!("{checked} values compared across 100 inputs"),
        });
    }

    // 2. gradient check in 64-bit
    {
        let mut model = ToyEditFormer::<f64>::init(config, seed)?;
        randomize_trainable(&mut model, seed.wrapping_add(2), 0.05);
        let batch = build_toy_batch(&model, 1, seed.wrapping_add(3))?;
        let report = grad_check(&model, &batch[0], 1e-5, 32, seed.wrapping_add(4))?;
        checks.push(Check {
            name: "grad_check",
            passed: report.max_rel_err < 1e-4,
            detail: format!(
                "max rel err {:.3e} at {} ({} coords)",
                report.max_rel_err, report.worst_slot, report.coords_checked
            ),
        });
    }

    // 3. overfit smoke test with freeze-hash invariance
    {
        let mut model = ToyEditFormer::<f32>::init(config, seed)?;
        let batch = build_toy_batch(&model, 16, seed.wrapping_add(5))?;
        let hash_before = frozen_group_hash(&model);
        let initial = batch_loss_and_grads(&model, &batch)?.0;
        let mut opt = AdamW::new(&config, args.lr);
        for _ in 0..args.train_steps {
            train_step(&mut model, &batch, &mut opt)?;
        }
        let final_loss = batch_loss_and_grads(&model, &batch)?.0;
        let hash_ok = frozen_group_hash(&model) == hash_before;
        checks.push(Check {
            name: "overfit_smoke",
            passed: final_loss < 0.1 * initial,
            detail: format!(
                "loss {initial:.4} -> {final_loss:.4} over {} steps",
                args.train_steps
            ),
        });
        checks.push(Check {
            name: "freeze_invariance",
            passed: hash_ok,
            detail: format!("frozen-group hash {:016x}", hash_before),
        });

        // 4. checkpoint round trip on the trained weights
        let dir = std::env::temp_dir().join(format!("evk-check-{}", std::process::id()));
        save_checkpoint(&model, &dir)?;
        let loaded = load_checkpoint(&dir)?;
        let round_trip = loaded == model;
        let _ = std::fs::remove_dir_all(&dir);
        checks.push(Check {
            name: "checkpoint_round_trip",
            passed: round_trip,
            detail: "save -> load -> equality".into(),
        });
    }

    let all_passed = checks.iter().all(|c| c.passed);
    let report = json!({
        "config": config,
        "seed": seed,
        "all_passed": all_passed,
        "checks": checks.iter().map(|c| json!({
            "name": c.name,
            "passed": c.passed,
            "detail": c.detail,
        })).collect::<Vec<_>>(),
    });
    write_json(args.out.as_deref(), &report)?;
    for check in &checks {
        eprintln!(
            "[{}] {}: {}",
            if check.passed { "PASS" } else { "FAIL" },
            check.name,
            check.detail
        );
    }
    Ok(if all_passed { 0 } else { 1 })
}

fn interpolate_rows(
    x0: &evk_core::editformer::Mat<f32>,
    eps: &evk_core::editformer::Mat<f32>,
    t: f64,
) -> evk_core::editformer::Mat<f32> {
    let mut x = x0.clone();
    let tv = t as f32;
    for (o, &e) in x.data_mut().iter_mut().zip(eps.data()) {
        *o = (1.0 - tv) * *o + tv * e;
    }
    x
}
