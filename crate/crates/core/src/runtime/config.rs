use std::path::{Path, PathBuf};

use super::RuntimeError;
use crate::model::{AttentionKind, FusionKind, ModelConfig};

/// Environment variable naming a `key = value` configuration file.
pub const CONFIG_ENV: &str = "TRIMM_CONFIG";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Ablations {
    /// Plain concatenation instead of gated fusion.
    pub mfa: bool,
    /// Standard self-attention instead of divided attention.
    pub tsaa: bool,
    /// No graph retrieval: poses come from the PCA inverse of the prediction.
    pub mga: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub window: usize,
    pub d_text: usize,
    pub d_audio: usize,
    /// Architecture of a randomly initialised model; a checkpoint carries its own.
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_width: usize,
    pub k: usize,
    pub top_k: usize,
    /// τ = coverage_factor × sentence audio duration.
    pub coverage_factor: f64,
    pub overlap: f64,
    pub fps: u32,
    pub max_visits: Option<usize>,
    pub ablations: Ablations,
    pub model: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub pca: Option<PathBuf>,
    pub library: Option<PathBuf>,
    /// Seed for a randomly initialised model when no checkpoint is given.
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            window: 8,
            d_text: 768,
            d_audio: 512,
            d_model: 2048,
            layers: 6,
            heads: 1,
            ff_width: 4096,
            k: crate::graph::DEFAULT_K,
            top_k: crate::graph::DEFAULT_TOP_K,
            coverage_factor: 0.8,
            overlap: crate::blend::DEFAULT_OVERLAP,
            fps: 60,
            max_visits: None,
            ablations: Ablations::default(),
            model: None,
            graph: None,
            pca: None,
            library: None,
            seed: 0,
        }
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool, RuntimeError> {
    match v.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(RuntimeError::Config(format!("{key}: expected a boolean, got {v:?}"))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, RuntimeError> {
    v.parse()
        .map_err(|_| RuntimeError::Config(format!("{key}: cannot parse {v:?}")))
}

impl EngineConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), RuntimeError> {
        let v = value.trim();
        match key.trim() {
            "window" => self.window = parse_num(key, v)?,
            "d_text" => self.d_text = parse_num(key, v)?,
            "d_audio" => self.d_audio = parse_num(key, v)?,
            "d_model" => self.d_model = parse_num(key, v)?,
            "layers" => self.layers = parse_num(key, v)?,
            "heads" => self.heads = parse_num(key, v)?,
            "ff_width" => self.ff_width = parse_num(key, v)?,
            "k" => self.k = parse_num(key, v)?,
            "top_k" => self.top_k = parse_num(key, v)?,
            "coverage_factor" => self.coverage_factor = parse_num(key, v)?,
            "overlap" => self.overlap = parse_num(key, v)?,
            "fps" => self.fps = parse_num(key, v)?,
            "max_visits" => {
                self.max_visits = match v {
                    "" | "none" | "unlimited" => None,
                    _ => Some(parse_num(key, v)?),
                }
            }
            "mfa" => self.ablations.mfa = parse_bool(key, v)?,
            "tsaa" => self.ablations.tsaa = parse_bool(key, v)?,
            "mga" => self.ablations.mga = parse_bool(key, v)?,
            "model" => self.model = Some(PathBuf::from(v)),
            "graph" => self.graph = Some(PathBuf::from(v)),
            "pca" => self.pca = Some(PathBuf::from(v)),
            "library" => self.library = Some(PathBuf::from(v)),
            "seed" => self.seed = parse_num(key, v)?,
            other => return Err(RuntimeError::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment. Relative paths are
    /// resolved against `base` when given.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<EngineConfig, RuntimeError> {
        let mut c = EngineConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| RuntimeError::Config(format!("line {}: expected key = value", i + 1)))?;
            c.set(k, v)
                .map_err(|e| RuntimeError::Config(format!("line {}: {e}", i + 1)))?;
        }
        if let Some(base) = base {
            for p in [&mut c.model, &mut c.graph, &mut c.pca, &mut c.library].into_iter().flatten() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<EngineConfig, RuntimeError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RuntimeError::Config(format!("{}: {e}", path.display())))?;
        EngineConfig::parse(&text, path.parent())
    }

    /// The file named by `TRIMM_CONFIG`, or defaults when it is unset.
    pub fn from_env() -> Result<EngineConfig, RuntimeError> {
        match std::env::var_os(CONFIG_ENV) {
            Some(p) if !p.is_empty() => EngineConfig::load(Path::new(&p)),
            _ => Ok(EngineConfig::default()),
        }
    }

    pub fn validate(&self) -> Result<(), RuntimeError> {
        if self.window == 0 || self.d_text == 0 || self.d_audio == 0 || self.k == 0 || self.top_k == 0 {
            return Err(RuntimeError::Config("window, d_text, d_audio, k and top_k must be at least 1".into()));
        }
        if ![30, 60, 120].contains(&self.fps) {
            return Err(RuntimeError::Config(format!("fps must be 30, 60 or 120, got {}", self.fps)));
        }
        if !(self.overlap >= 0.0 && self.overlap.is_finite()) {
            return Err(RuntimeError::Config("overlap must be a non-negative number of seconds".into()));
        }
        if !(self.coverage_factor >= 0.0 && self.coverage_factor.is_finite()) {
            return Err(RuntimeError::Config("coverage_factor must be non-negative".into()));
        }
        Ok(())
    }

    /// Model architecture implied by this configuration.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            d_text: self.d_text,
            d_audio: self.d_audio,
            d_model: self.d_model,
            layers: self.layers,
            heads: self.heads,
            ff_width: self.ff_width,
            window: self.window,
            fusion: if self.ablations.mfa {
                FusionKind::Concat
            } else {
                FusionKind::Gated
            },
            attention: if self.ablations.tsaa {
                AttentionKind::Standard
            } else {
                AttentionKind::Divided
            },
            ..ModelConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_and_comments() {
        let c = EngineConfig::parse("# demo\nfps = 120\nmga=true\nmodel = m.trmf\n", Some(Path::new("/cfg"))).unwrap();
        assert_eq!(c.fps, 120);
        assert!(c.ablations.mga);
        assert_eq!(c.model, Some(PathBuf::from("/cfg/m.trmf")));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(EngineConfig::parse("fps = 50", None).is_err());
        assert!(EngineConfig::parse("k = 0", None).is_err());
        assert!(EngineConfig::parse("colour = red", None).is_err());
        assert!(EngineConfig::parse("just words", None).is_err());
    }
}
