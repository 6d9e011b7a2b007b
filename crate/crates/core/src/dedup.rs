//! Candidate-pose deduplication by embedding similarity and character-pose
//! pair assembly.

use rand::RngExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DedupError {
    #[error("embedding width mismatch: {0} vs {1}")]
    WidthMismatch(usize, usize),
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("pose pool has {pool} entries, need {k}")]
    PoolTooSmall { pool: usize, k: usize },
}

/// Identified unit embeddings of equal width.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    ids: Vec<String>,
    vectors: Vec<Vec<f32>>,
}

impl EmbeddingSet {
    pub fn new(ids: Vec<String>, mut vectors: Vec<Vec<f32>>) -> Result<Self, DedupError> {
        if ids.len() != vectors.len() {
            return Err(DedupError::WidthMismatch(ids.len(), vectors.len()));
        }
        let mut seen = std::collections::HashSet::new();
        for id in &ids {
            if !seen.insert(id.clone()) {
                return Err(DedupError::DuplicateId(id.clone()));
            }
        }
        let width = vectors.first().map(|v| v.len()).unwrap_or(0);
        for v in &mut vectors {
            if v.len() != width {
                return Err(DedupError::WidthMismatch(v.len(), width));
            }
            // normalize so cosine is a plain dot product
            let norm = v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
            if norm > 1e-12 && (norm - 1.0).abs() > 1e-6 {
                for x in v.iter_mut() {
                    *x = (*x as f64 / norm) as f32;
                }
            }
        }
        Ok(Self { ids, vectors })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| x as f64 * y as f64)
        .sum::<f64>()
        .clamp(-1.0, 1.0)
}

/// Greedy first-come pruning in ascending id order: an item survives iff its
/// max cosine to every previously kept item stays below the threshold.
pub fn greedy_prune(set: &EmbeddingSet, sim_threshold: f64) -> Vec<String> {
    let threshold = sim_threshold.clamp(-1.0, 1.0);
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.sort_by(|&a, &b| set.ids[a].cmp(&set.ids[b]));

    let mut kept: Vec<usize> = Vec::new();
    for &candidate in &order {
        let cand = &set.vectors[candidate];
        // candidate-vs-kept scan parallelizes; the kept-set order does not
        let worst = kept
            .par_iter()
            .map(|&k| cosine(cand, &set.vectors[k]))
            .reduce(|| f64::NEG_INFINITY, f64::max);
        if worst < threshold {
            kept.push(candidate);
        }
    }
    kept.into_iter().map(|i| set.ids[i].clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetEntry {
    pub character: String,
    pub pose: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditPair {
    pub character: String,
    pub pose_before: String,
    pub pose_after: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingManifest {
    pub seed: u64,
    pub assets: Vec<AssetEntry>,
    pub pairs: Vec<EditPair>,
}

/// Samples `k` poses per character without replacement (seeded) and forms
/// edit pairs from consecutive sampled poses of the same character.
pub fn assemble_pairs(
    characters: &[String],
    pose_pool: &[String],
    k: usize,
    seed: u64,
) -> Result<PairingManifest, DedupError> {
    if k > pose_pool.len() {
        return Err(DedupError::PoolTooSmall {
            pool: pose_pool.len(),
            k,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assets = Vec::with_capacity(characters.len() * k);
    let mut pairs = Vec::with_capacity(characters.len() * k.saturating_sub(1));
    for character in characters {
        // partial Fisher-Yates: the first k slots end up a uniform sample
        let mut indices: Vec<usize> = (0..pose_pool.len()).collect();
        for i in 0..k {
            let j = rng.random_range(i..indices.len());
            indices.swap(i, j);
        }
        let sampled = &indices[..k];
        for &p in sampled {
            assets.push(AssetEntry {
                character: character.clone(),
                pose: pose_pool[p].clone(),
            });
        }
        for w in sampled.windows(2) {
            pairs.push(EditPair {
                character: character.clone(),
                pose_before: pose_pool[w[0]].clone(),
                pose_after: pose_pool[w[1]].clone(),
            });
        }
    }
    Ok(PairingManifest {
        seed,
        assets,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("id{i:04}")).collect()
    }

    #[test]
    fn identical_vectors_pruned() {
        let set = EmbeddingSet::new(
            ids(2),
            vec![vec![1.0, 0.0], vec![1.0, 0.0]],
        )
        .unwrap();
        let kept = greedy_prune(&set, 0.99);
        assert_eq!(kept, vec!["id0000".to_string()]);
    }

    #[test]
    fn threshold_one_keeps_non_duplicates() {
        let set = EmbeddingSet::new(
            ids(3),
            vec![vec![1.0, 0.0], vec![0.9, 0.43589], vec![1.0, 0.0]],
        )
        .unwrap();
        // items 0 and 2 are exact duplicates; 1 differs
        let kept = greedy_prune(&set, 1.0);
        assert_eq!(kept, vec!["id0000".to_string(), "id0001".to_string()]);
    }

    #[test]
    fn threshold_minus_one_keeps_only_first() {
        let set = EmbeddingSet::new(
            ids(4),
            vec![
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![-1.0, 0.0],
                vec![0.0, -1.0],
            ],
        )
        .unwrap();
        let kept = greedy_prune(&set, -1.0);
        assert_eq!(kept, vec!["id0000".to_string()]);
    }

    #[test]
    fn no_kept_pair_reaches_threshold() {
        use rand::RngExt;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        let vectors: Vec<Vec<f32>> = (0..200)
            .map(|_| (0..8).map(|_| rng.random::<f32>() - 0.5).collect())
            .collect();
        let set = EmbeddingSet::new(ids(200), vectors).unwrap();
        let threshold = 0.8;
        let kept = greedy_prune(&set, threshold);
        let index: std::collections::HashMap<&str, usize> = set
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        for (i, a) in kept.iter().enumerate() {
            for b in kept.iter().skip(i + 1) {
                let cos = cosine(&set.vectors[index[a.as_str()]], &set.vectors[index[b.as_str()]]);
                assert!(cos < threshold, "{a} vs {b} has cosine {cos}");
            }
        }
    }

    #[test]
    fn prune_is_layout_independent() {
        use rand::RngExt;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(43);
        let vectors: Vec<Vec<f32>> = (0..50)
            .map(|_| (0..4).map(|_| rng.random::<f32>() - 0.5).collect())
            .collect();
        let id_list = ids(50);
        let set = EmbeddingSet::new(id_list.clone(), vectors.clone()).unwrap();
        let kept_a = greedy_prune(&set, 0.7);
        // shuffle the storage order; id order must dominate
        let mut paired: Vec<(String, Vec<f32>)> =
            id_list.into_iter().zip(vectors).collect();
        paired.reverse();
        let (rids, rvecs): (Vec<_>, Vec<_>) = paired.into_iter().unzip();
        let shuffled = EmbeddingSet::new(rids, rvecs).unwrap();
        let kept_b = greedy_prune(&shuffled, 0.7);
        assert_eq!(kept_a, kept_b);
    }

    #[test]
    fn benchmark_scale_assembly_counts() {
        let characters: Vec<String> = (0..108).map(|i| format!("char{i:03}")).collect();
        let pool: Vec<String> = (0..4998).map(|i| format!("pose{i:04}")).collect();
        let manifest = assemble_pairs(&characters, &pool, 500, 3).unwrap();
        assert_eq!(manifest.assets.len(), 54_000);
        assert_eq!(manifest.pairs.len(), 108 * 499);
    }

    #[test]
    fn full_pool_sampling_and_uniqueness() {
        let characters = vec!["a".to_string(), "b".to_string()];
        let pool: Vec<String> = (0..20).map(|i| format!("p{i}")).collect();
        let manifest = assemble_pairs(&characters, &pool, 20, 9).unwrap();
        assert_eq!(manifest.assets.len(), 40);
        // every character gets the full pool, order shuffled
        for character in &characters {
            let mut poses: Vec<&str> = manifest
                .assets
                .iter()
                .filter(|a| &a.character == character)
                .map(|a| a.pose.as_str())
                .collect();
            poses.sort();
            poses.dedup();
            assert_eq!(poses.len(), 20);
        }
        for pair in &manifest.pairs {
            assert_ne!(pair.pose_before, pair.pose_after);
        }
    }

    #[test]
    fn same_seed_identical_manifest_bytes() {
        let characters: Vec<String> = (0..5).map(|i| format!("c{i}")).collect();
        let pool: Vec<String> = (0..30).map(|i| format!("p{i}")).collect();
        let a = assemble_pairs(&characters, &pool, 10, 77).unwrap();
        let b = assemble_pairs(&characters, &pool, 10, 77).unwrap();
        assert_eq!(
            serde_json::to_vec(&a).unwrap(),
            serde_json::to_vec(&b).unwrap()
        );
    }

    #[test]
    fn pool_too_small_rejected() {
        let characters = vec!["a".to_string()];
        let pool: Vec<String> = (0..3).map(|i| format!("p{i}")).collect();
        assert!(matches!(
            assemble_pairs(&characters, &pool, 4, 0),
            Err(DedupError::PoolTooSmall { pool: 3, k: 4 })
        ));
    }
}
