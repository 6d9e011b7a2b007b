//! Run configuration with defaults safe for the file-drop fixtures.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Fraction-of-views vote threshold.
    pub tau: f64,
    /// Expected view count per sample; a sample whose views.json disagrees
    /// fails its maskvote stage.
    pub n_views: usize,
    /// Dilation percents for robustness tables.
    pub dilation_percents: Vec<f64>,
    /// Mean-cosine threshold for the post-edit consistency filter.
    /// Default is a working value; the protocol does not pin one.
    pub consistency_threshold: f64,
    pub seed: u64,
    /// Voting-domain resolution when a sample supplies no grid.evk.
    pub resolution: usize,
    pub repaint_steps: usize,
    /// "zero", "identity", or "linear:<path relative to the sample dir>".
    pub denoiser: String,
    /// "proxy" or "file:<dir>" for externally computed embeddings.
    pub embedder: String,
    /// Worker pool width; 0 = rayon default.
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            n_views: 70,
            dilation_percents: vec![9.0, 18.0, 27.0],
            consistency_threshold: 0.85,
            seed: 0,
            resolution: 16,
            repaint_steps: 25,
            denoiser: "zero".into(),
            embedder: "proxy".into(),
            jobs: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(format!("tau {} outside (0, 1]", self.tau));
        }
        if self.n_views == 0 {
            return Err("n_views must be at least 1".into());
        }
        if self.resolution < 2 {
            return Err(format!("resolution {} below minimum 2", self.resolution));
        }
        if self.repaint_steps == 0 {
            return Err("repaint_steps must be at least 1".into());
        }
        if self.dilation_percents.iter().any(|&p| p < 0.0) {
            return Err("dilation percents must be non-negative".into());
        }
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
        let config: Self = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        assert!(RunConfig::default().validate().is_ok());
    }

    #[test]
    fn bad_tau_rejected() {
        let config = RunConfig {
            tau: 0.0,
            ..Default::default()
        };
        assert!(config.validate().is_err());
    }

    #[test]
    fn partial_json_fills_defaults() {
        let config: RunConfig = serde_json::from_str(r#"{"tau": 0.8, "n_views": 4}"#).unwrap();
        assert_eq!(config.tau, 0.8);
        assert_eq!(config.n_views, 4);
        assert_eq!(config.repaint_steps, 25);
    }
}
