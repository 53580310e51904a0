//! The run configuration file: one TOML document mirroring the network,
//! training, and data options. Unknown keys are rejected; the effective
//! (post-override) config is echoed into the run directory.

use anyhow::{Context, Result};
use cagface::net::NetworkConfig;
use cagface::train::{Phase, TrainConfig};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// LR patch size; must be a multiple of 4.
    pub patch: usize,
    /// Patches sampled per training image.
    pub per_image: usize,
    /// Patch-sampling seed.
    pub sample_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { patch: 16, per_image: 8, sample_seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            network: NetworkConfig::desk(),
            train: TrainConfig::default(),
            data: DataConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// The published full-size configuration.
    pub fn apply_paper_scale(&mut self) {
        self.network = NetworkConfig::paper();
        self.data.patch = 128;
        self.data.per_image = 48;
    }

    pub fn parse_phase(s: &str) -> Result<Phase> {
        match s {
            "stage1-only" => Ok(Phase::Stage1Only),
            "stage2-after-init" => Ok(Phase::Stage2AfterInit),
            "joint" => Ok(Phase::Joint),
            other => anyhow::bail!("unknown phase {other:?}"),
        }
    }

    /// Write the effective config next to the run outputs.
    pub fn echo(&self, run_dir: &Path) -> Result<()> {
        std::fs::create_dir_all(run_dir)?;
        let text = toml::to_string_pretty(self)?;
        std::fs::write(run_dir.join("config.toml"), text)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_desk_scale() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.network.features, 64);
        assert_eq!(cfg.network.res_blocks, 4);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back.network, cfg.network);
        assert_eq!(back.data.patch, cfg.data.patch);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = toml::from_str::<RunConfig>("[network]\nfeatures = 8\nwat = 3\n");
        assert!(err.is_err());
    }

    #[test]
    fn paper_scale_sets_table_sizes() {
        let mut cfg = RunConfig::default();
        cfg.apply_paper_scale();
        assert_eq!(cfg.network.features, 256);
        assert_eq!(cfg.network.res_blocks, 16);
        assert_eq!(cfg.data.per_image, 48);
    }
}
