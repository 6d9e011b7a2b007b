//! Weight checkpoints: one "EVK0" tensor file per parameter plus a JSON index
//! carrying the config, shapes, and frozen flags.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layers::{Attention, Linear};
use super::model::{ModelConfig, ModelError, ToyEditFormer};
use crate::geom::{TensorBlob, read_tensor, write_tensor};

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    file: String,
    rows: usize,
    cols: usize,
    frozen: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointIndex {
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
}

fn collect_tensors(model: &ToyEditFormer<f32>) -> Vec<(String, usize, usize, Vec<f32>, bool)> {
    let mut out: Vec<(String, usize, usize, Vec<f32>, bool)> = Vec::new();
    let push_linear = |name: String, l: &Linear<f32>, frozen: bool,
                           out: &mut Vec<(String, usize, usize, Vec<f32>, bool)>| {
        out.push((
            format!("{name}.w"),
            l.w.rows(),
            l.w.cols(),
            l.w.data().to_vec(),
            frozen,
        ));
        out.push((format!("{name}.b"), 1, l.b.len(), l.b.clone(), frozen));
    };
    let push_attn = |name: String, a: &Attention<f32>, frozen: bool,
                         out: &mut Vec<(String, usize, usize, Vec<f32>, bool)>| {
        push_linear(format!("{name}.wq"), &a.wq, frozen, out);
        push_linear(format!("{name}.wk"), &a.wk, frozen, out);
        push_linear(format!("{name}.wv"), &a.wv, frozen, out);
        push_linear(format!("{name}.wo"), &a.wo, frozen, out);
    };
    push_linear("time_proj".into(), &model.time_proj, true, &mut out);
    for (i, layer) in model.layers.iter().enumerate() {
        let p = format!("layer{i}");
        out.push((format!("{p}.ln1.gamma"), 1, layer.ln1.gamma.len(), layer.ln1.gamma.clone(), true));
        out.push((format!("{p}.ln1.beta"), 1, layer.ln1.beta.len(), layer.ln1.beta.clone(), true));
        push_attn(format!("{p}.self_attn"), &layer.self_attn, true, &mut out);
        push_attn(format!("{p}.cross1"), &layer.cross1, false, &mut out);
        push_attn(format!("{p}.cross2"), &layer.cross2, false, &mut out);
        out.push((format!("{p}.ln2.gamma"), 1, layer.ln2.gamma.len(), layer.ln2.gamma.clone(), true));
        out.push((format!("{p}.ln2.beta"), 1, layer.ln2.beta.len(), layer.ln2.beta.clone(), true));
        push_attn(format!("{p}.img_attn"), &layer.img_attn, true, &mut out);
        out.push((format!("{p}.ln3.gamma"), 1, layer.ln3.gamma.len(), layer.ln3.gamma.clone(), true));
        out.push((format!("{p}.ln3.beta"), 1, layer.ln3.beta.len(), layer.ln3.beta.clone(), true));
        push_linear(format!("{p}.ffn.l1"), &layer.ffn.l1, true, &mut out);
        push_linear(format!("{p}.ffn.l2"), &layer.ffn.l2, true, &mut out);
    }
    push_linear("gate.l1".into(), &model.gate_mlp.l1, false, &mut out);
    push_linear("gate.l2".into(), &model.gate_mlp.l2, false, &mut out);
    push_linear("gate.l3".into(), &model.gate_mlp.l3, false, &mut out);
    out
}

pub fn save_checkpoint(model: &ToyEditFormer<f32>, dir: &Path) -> Result<(), ModelError> {
    std::fs::create_dir_all(dir).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    let mut entries = Vec::new();
    for (name, rows, cols, data, frozen) in collect_tensors(model) {
        let file = format!("{}.evk", name.replace('.', "_"));
        let blob = TensorBlob::new(vec![rows, cols], data)
            .map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        write_tensor(&dir.join(&file), &blob).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        entries.push(TensorEntry {
            name,
            file,
            rows,
            cols,
            frozen,
        });
    }
    let index = CheckpointIndex {
        config: model.config,
        tensors: entries,
    };
    let text = serde_json::to_string_pretty(&index).expect("index serializes");
    std::fs::write(dir.join("index.json"), text).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<ToyEditFormer<f32>, ModelError> {
    let text = std::fs::read_to_string(dir.join("index.json"))
        .map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    let index: CheckpointIndex =
        serde_json::from_str(&text).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    let mut model = ToyEditFormer::<f32>::init(index.config, 0)?;

    let mut lookup = std::collections::HashMap::new();
    for entry in &index.tensors {
        let blob = read_tensor(&dir.join(&entry.file))
            .map_err(|e| ModelError::Checkpoint(format!("{}: {e}", entry.name)))?;
        if blob.dims() != [entry.rows, entry.cols] {
            return Err(ModelError::Checkpoint(format!(
                "{}: dims {:?} do not match index ({}, {})",
                entry.name,
                blob.dims(),
                entry.rows,
                entry.cols
            )));
        }
        lookup.insert(entry.name.clone(), blob.data().to_vec());
    }

    load_linear(&mut lookup, "time_proj", &mut model.time_proj)?;
    for i in 0..model.layers.len() {
        let p = format!("layer{i}");
        let layer = &mut model.layers[i];
        load_vec(&mut lookup, &format!("{p}.ln1.gamma"), &mut layer.ln1.gamma)?;
        load_vec(&mut lookup, &format!("{p}.ln1.beta"), &mut layer.ln1.beta)?;
        load_attn(&mut lookup, &format!("{p}.self_attn"), &mut layer.self_attn)?;
        load_attn(&mut lookup, &format!("{p}.cross1"), &mut layer.cross1)?;
        load_attn(&mut lookup, &format!("{p}.cross2"), &mut layer.cross2)?;
        load_vec(&mut lookup, &format!("{p}.ln2.gamma"), &mut layer.ln2.gamma)?;
        load_vec(&mut lookup, &format!("{p}.ln2.beta"), &mut layer.ln2.beta)?;
        load_attn(&mut lookup, &format!("{p}.img_attn"), &mut layer.img_attn)?;
        load_vec(&mut lookup, &format!("{p}.ln3.gamma"), &mut layer.ln3.gamma)?;
        load_vec(&mut lookup, &format!("{p}.ln3.beta"), &mut layer.ln3.beta)?;
        load_linear(&mut lookup, &format!("{p}.ffn.l1"), &mut layer.ffn.l1)?;
        load_linear(&mut lookup, &format!("{p}.ffn.l2"), &mut layer.ffn.l2)?;
    }
    load_linear(&mut lookup, "gate.l1", &mut model.gate_mlp.l1)?;
    load_linear(&mut lookup, "gate.l2", &mut model.gate_mlp.l2)?;
    load_linear(&mut lookup, "gate.l3", &mut model.gate_mlp.l3)?;
    Ok(model)
}

type TensorLookup = std::collections::HashMap<String, Vec<f32>>;

fn take(lookup: &mut TensorLookup, name: &str) -> Result<Vec<f32>, ModelError> {
    lookup
        .remove(name)
        .ok_or_else(|| ModelError::Checkpoint(format!("missing tensor {name}")))
}

fn load_vec(lookup: &mut TensorLookup, name: &str, v: &mut [f32]) -> Result<(), ModelError> {
    let data = take(lookup, name)?;
    if data.len() != v.len() {
        return Err(ModelError::Checkpoint(format!("{name} length mismatch")));
    }
    v.copy_from_slice(&data);
    Ok(())
}

fn load_linear(lookup: &mut TensorLookup, name: &str, l: &mut Linear<f32>) -> Result<(), ModelError> {
    let w = take(lookup, &format!("{name}.w"))?;
    if w.len() != l.w.data().len() {
        return Err(ModelError::Checkpoint(format!("{name}.w length mismatch")));
    }
    l.w.data_mut().copy_from_slice(&w);
    load_vec(lookup, &format!("{name}.b"), &mut l.b)
}

fn load_attn(lookup: &mut TensorLookup, name: &str, a: &mut Attention<f32>) -> Result<(), ModelError> {
    load_linear(lookup, &format!("{name}.wq"), &mut a.wq)?;
    load_linear(lookup, &format!("{name}.wk"), &mut a.wk)?;
    load_linear(lookup, &format!("{name}.wv"), &mut a.wv)?;
    load_linear(lookup, &format!("{name}.wo"), &mut a.wo)
}
