//! Run configuration: a TOML file of overrides layered over the benchmark
//! protocol defaults. Every field is optional so a config may pin only
//! what it cares about.

use std::path::{Path, PathBuf};

use ctxad_core::model::ModelConfig;
use ctxad_core::train::TrainConfig;
use ctxad_core::{Error, Result};
use serde::{Deserialize, Serialize};

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}

fn d_embed() -> Option<usize> {
    Some(16)
}
fn d_encoder() -> Option<Vec<usize>> {
    Some(vec![8])
}
fn d_latent() -> Option<usize> {
    Some(2)
}
fn d_decoder() -> Option<Vec<usize>> {
    Some(vec![32])
}
fn d_lambda() -> Option<f64> {
    Some(10.0)
}
fn d_epochs() -> Option<usize> {
    Some(6)
}
fn d_batch() -> Option<usize> {
    Some(128)
}
fn d_lr() -> Option<f64> {
    Some(1e-2)
}

/// Model hyperparameters applied on top of a per-dataset base config.
/// Defaults follow the evaluation protocol: a compact encoder with a
/// strong prior weight, so conditional structure must flow through the
/// context path rather than the latent.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelOverrides {
    #[serde(default = "d_embed")]
    pub embed_dim: Option<usize>,
    #[serde(default = "d_encoder")]
    pub encoder_hidden: Option<Vec<usize>>,
    #[serde(default = "d_latent")]
    pub latent_dim: Option<usize>,
    #[serde(default = "d_decoder")]
    pub decoder_hidden: Option<Vec<usize>>,
    #[serde(default = "d_lambda")]
    pub lambda_mmd: Option<f64>,
    #[serde(default)]
    pub mmd_sigma: Option<f64>,
    #[serde(default)]
    pub mmd_on_final_latent: Option<bool>,
}

impl Default for ModelOverrides {
    fn default() -> Self {
        ModelOverrides {
            embed_dim: d_embed(),
            encoder_hidden: d_encoder(),
            latent_dim: d_latent(),
            decoder_hidden: d_decoder(),
            lambda_mmd: d_lambda(),
            mmd_sigma: None,
            mmd_on_final_latent: None,
        }
    }
}

impl ModelOverrides {
    pub fn apply(&self, cfg: &mut ModelConfig) {
        if let Some(v) = self.embed_dim {
            cfg.embed_dim = v;
        }
        if let Some(v) = &self.encoder_hidden {
            cfg.encoder_hidden = v.clone();
        }
        if let Some(v) = self.latent_dim {
            cfg.latent_dim = v;
        }
        if let Some(v) = &self.decoder_hidden {
            cfg.decoder_hidden = v.clone();
        }
        if let Some(v) = self.lambda_mmd {
            cfg.lambda_mmd = v;
        }
        if let Some(v) = self.mmd_sigma {
            cfg.mmd_sigma = Some(v);
        }
        if let Some(v) = self.mmd_on_final_latent {
            cfg.mmd_on_final_latent = v;
        }
    }
}

/// Training schedule overrides. The default budget is deliberately short:
/// the context path converges within a few epochs while still separating
/// it from what a context-free encoder can pick up in the same time.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    #[serde(default = "d_epochs")]
    pub epochs: Option<usize>,
    #[serde(default = "d_batch")]
    pub batch_size: Option<usize>,
    #[serde(default = "d_lr")]
    pub learning_rate: Option<f64>,
    #[serde(default)]
    pub shuffle: Option<bool>,
}

impl Default for TrainOverrides {
    fn default() -> Self {
        TrainOverrides {
            epochs: d_epochs(),
            batch_size: d_batch(),
            learning_rate: d_lr(),
            shuffle: None,
        }
    }
}

impl TrainOverrides {
    pub fn to_train_config(&self) -> TrainConfig {
        let mut cfg = TrainConfig::default();
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.shuffle {
            cfg.shuffle = v;
        }
        cfg
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Manifest path, resolved relative to the config file; the
    /// `--manifest` flag takes precedence.
    #[serde(default)]
    pub manifest: Option<String>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub out_dir: Option<String>,
    #[serde(default)]
    pub model: ModelOverrides,
    #[serde(default)]
    pub train: TrainOverrides,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            manifest: None,
            seeds: default_seeds(),
            out_dir: None,
            model: ModelOverrides::default(),
            train: TrainOverrides::default(),
        }
    }
}

impl RunConfig {
    pub fn read(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::validation(format!("config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::validation("config needs at least one seed"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::validation("config seeds contain duplicates"));
        }
        Ok(())
    }

    /// Resolves `self.manifest` against the directory the config file
    /// came from, when both are relative.
    pub fn manifest_path(&self, config_path: Option<&Path>) -> Option<PathBuf> {
        let m = self.manifest.as_ref()?;
        let p = Path::new(m);
        if p.is_absolute() {
            return Some(p.to_path_buf());
        }
        match config_path.and_then(|c| c.parent()) {
            Some(dir) => Some(dir.join(p)),
            None => Some(p.to_path_buf()),
        }
    }
}

/// Picks the output directory: flag, then config, then environment, then
/// `runs` in the working directory.
pub fn resolve_out_dir(flag: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    if let Some(d) = flag {
        return d.to_path_buf();
    }
    if let Some(d) = &cfg.out_dir {
        return PathBuf::from(d);
    }
    if let Ok(d) = std::env::var("CTXAD_OUT_DIR") {
        if !d.is_empty() {
            return PathBuf::from(d);
        }
    }
    PathBuf::from("runs")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_protocol() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg.seeds, RunConfig::default().seeds);
        assert_eq!(cfg.seeds, vec![0, 1, 2, 3, 4]);
        let tcfg = cfg.train.to_train_config();
        assert_eq!(tcfg.epochs, 6);
        assert_eq!(tcfg.batch_size, 128);
        assert!(tcfg.shuffle);
        let mut mcfg = ModelConfig::default();
        cfg.model.apply(&mut mcfg);
        assert_eq!(mcfg.embed_dim, 16);
        assert_eq!(mcfg.encoder_hidden, vec![8]);
        assert_eq!(mcfg.latent_dim, 2);
        assert_eq!(mcfg.lambda_mmd, 10.0);
    }

    #[test]
    fn partial_sections_keep_protocol_defaults() {
        let cfg: RunConfig = toml::from_str("[train]\nepochs = 40\n[model]\nlatent_dim = 4\n")
            .unwrap();
        let tcfg = cfg.train.to_train_config();
        assert_eq!(tcfg.epochs, 40);
        assert_eq!(tcfg.batch_size, 128, "unset train fields stay at protocol defaults");
        let mut mcfg = ModelConfig::default();
        cfg.model.apply(&mut mcfg);
        assert_eq!(mcfg.latent_dim, 4);
        assert_eq!(mcfg.lambda_mmd, 10.0, "unset model fields stay at protocol defaults");
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(toml::from_str::<RunConfig>("seeds = []").unwrap().validate().is_err());
        assert!(toml::from_str::<RunConfig>("seeds = [1, 1]").unwrap().validate().is_err());
        assert!(toml::from_str::<RunConfig>("unknown_key = 3").is_err());
    }

    #[test]
    fn manifest_resolves_against_config_dir() {
        let cfg: RunConfig = toml::from_str("manifest = \"m/cmc.toml\"\nseeds = [0]").unwrap();
        let got = cfg.manifest_path(Some(Path::new("/etc/ctxad/run.toml"))).unwrap();
        assert_eq!(got, PathBuf::from("/etc/ctxad/m/cmc.toml"));
        let abs: RunConfig = toml::from_str("manifest = \"/data/cmc.toml\"").unwrap();
        assert_eq!(abs.manifest_path(None).unwrap(), PathBuf::from("/data/cmc.toml"));
    }
}
