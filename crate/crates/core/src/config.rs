//! Experiment configuration.
//!
//! Configs are flat `key = value` text files (`#` starts a comment). Every
//! key can also be given on the command line as `--key value` or
//! `--key=value`, which overrides the file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::encoder::{EncoderConfig, EncoderKind};
use crate::error::{Error, Result};
use crate::losses::{LossKind, SccfParams, Similarity};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    /// Raw `user item` interaction log.
    pub dataset: Option<PathBuf>,
    /// Prepared split manifest; takes precedence over `dataset`.
    pub manifest: Option<PathBuf>,
    pub split_seed: u64,
    pub loss: LossKind,
    pub tau: f64,
    pub beta: f64,
    pub squared_term: bool,
    pub encoder: EncoderConfig,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub eval_ks: Vec<usize>,
    pub train_similarity: Similarity,
    pub infer_similarity: Similarity,
    pub seed: u64,
    pub embedding_dim: usize,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            manifest: None,
            split_seed: 2024,
            loss: LossKind::Sccf,
            tau: 0.25,
            beta: 1.0,
            squared_term: true,
            encoder: EncoderConfig::naive(),
            learning_rate: 1.0,
            batch_size: 10_000,
            epochs: 300,
            eval_ks: vec![10, 20, 50],
            train_similarity: Similarity::Cosine,
            infer_similarity: Similarity::InnerProduct,
            seed: 2024,
            embedding_dim: 64,
            out_dir: PathBuf::from("runs/default"),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse {value:?}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

impl ExperimentConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.merge_text(&text)?;
        Ok(cfg)
    }

    pub fn merge_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Applies `--key value` / `--key=value` pairs.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, args: &[S]) -> Result<()> {
        let mut it = args.iter().map(AsRef::as_ref);
        while let Some(arg) = it.next() {
            let flag = arg
                .strip_prefix("--")
                .ok_or_else(|| Error::Config(format!("unexpected argument {arg:?}")))?;
            let (key, value) = match flag.split_once('=') {
                Some((k, v)) => (k.to_string(), v.to_string()),
                None => {
                    let v = it
                        .next()
                        .ok_or_else(|| Error::Config(format!("--{flag} needs a value")))?;
                    (flag.to_string(), v.to_string())
                }
            };
            self.set(&key.replace('-', "_"), &value)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dataset" => self.dataset = Some(PathBuf::from(value)),
            "manifest" => self.manifest = Some(PathBuf::from(value)),
            "split_seed" => self.split_seed = parse_num(key, value)?,
            "loss" => self.loss = value.parse()?,
            "tau" => self.tau = parse_num(key, value)?,
            "beta" => self.beta = parse_num(key, value)?,
            "squared_term" => self.squared_term = parse_bool(key, value)?,
            "encoder.kind" | "encoder_kind" => self.encoder.kind = value.parse()?,
            "encoder.train_layers" | "encoder_train_layers" => self.encoder.train_layers = parse_num(key, value)?,
            "encoder.infer_layers" | "encoder_infer_layers" => self.encoder.infer_layers = parse_num(key, value)?,
            "encoder.layer_weights" | "encoder_layer_weights" => {
                self.encoder.layer_weights = Some(parse_list(key, value)?)
            }
            "learning_rate" => self.learning_rate = parse_num(key, value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "epochs" => self.epochs = parse_num(key, value)?,
            "eval_ks" => self.eval_ks = parse_list(key, value)?,
            "train_similarity" => self.train_similarity = value.parse()?,
            "infer_similarity" => self.infer_similarity = value.parse()?,
            "seed" => self.seed = parse_num(key, value)?,
            "embedding_dim" => self.embedding_dim = parse_num(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [("tau", self.tau), ("learning_rate", self.learning_rate)];
        for (name, v) in positive {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(Error::Config(format!("beta must be non-negative, got {}", self.beta)));
        }
        if self.batch_size == 0 || self.embedding_dim == 0 {
            return Err(Error::Config("batch_size and embedding_dim must be positive".into()));
        }
        if self.eval_ks.is_empty() || self.eval_ks.contains(&0) {
            return Err(Error::Config(format!("bad eval_ks {:?}", self.eval_ks)));
        }
        self.encoder.validate()
    }

    pub fn sccf_params(&self) -> SccfParams {
        SccfParams {
            tau: self.tau,
            squared_term: self.squared_term,
            similarity: self.train_similarity,
        }
    }

    /// Serialises back to the `key = value` form.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        if let Some(p) = &self.dataset {
            line("dataset", p.display().to_string());
        }
        if let Some(p) = &self.manifest {
            line("manifest", p.display().to_string());
        }
        line("split_seed", self.split_seed.to_string());
        line("loss", self.loss.to_string());
        line("tau", self.tau.to_string());
        line("beta", self.beta.to_string());
        line("squared_term", self.squared_term.to_string());
        line("encoder.kind", self.encoder.kind.to_string());
        line("encoder.train_layers", self.encoder.train_layers.to_string());
        line("encoder.infer_layers", self.encoder.infer_layers.to_string());
        if let Some(w) = &self.encoder.layer_weights {
            let joined: Vec<String> = w.iter().map(f64::to_string).collect();
            line("encoder.layer_weights", joined.join(","));
        }
        line("learning_rate", self.learning_rate.to_string());
        line("batch_size", self.batch_size.to_string());
        line("epochs", self.epochs.to_string());
        let ks: Vec<String> = self.eval_ks.iter().map(usize::to_string).collect();
        line("eval_ks", ks.join(","));
        line("train_similarity", self.train_similarity.to_string());
        line("infer_similarity", self.infer_similarity.to_string());
        line("seed", self.seed.to_string());
        line("embedding_dim", self.embedding_dim.to_string());
        line("out_dir", self.out_dir.display().to_string());
        out
    }

    pub fn is_lightgcn(&self) -> bool {
        self.encoder.kind == EncoderKind::LightGcn
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_beauty_recipe() {
        let c = ExperimentConfig::default();
        assert_eq!(c.batch_size, 10_000);
        assert_eq!(c.tau, 0.25);
        assert_eq!(c.embedding_dim, 64);
        assert_eq!(c.epochs, 300);
        assert_eq!(c.eval_ks, vec![10, 20, 50]);
        assert_eq!(c.train_similarity, Similarity::Cosine);
        assert_eq!(c.infer_similarity, Similarity::InnerProduct);
        c.validate().unwrap();
    }

    #[test]
    fn file_then_cli_override() {
        let mut c = ExperimentConfig::default();
        c.merge_text(
            "# comment\nloss = directau\nbeta = 0.5 # inline\nencoder.kind = lightgcn\nencoder.train_layers = 3\n",
        )
        .unwrap();
        c.apply_overrides(&["--beta", "2", "--encoder.infer_layers=1", "--eval-ks", "5,20"])
            .unwrap();
        assert_eq!(c.loss, LossKind::DirectAu);
        assert_eq!(c.beta, 2.0);
        assert_eq!(c.encoder, EncoderConfig::lightgcn(3, 1));
        assert_eq!(c.eval_ks, vec![5, 20]);
    }

    #[test]
    fn text_round_trip() {
        let mut c = ExperimentConfig::default();
        c.apply_overrides(&["--tau", "0.1", "--squared_term", "false", "--dataset", "x.txt"])
            .unwrap();
        let mut back = ExperimentConfig::default();
        back.merge_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_unknown_and_bad_values() {
        let mut c = ExperimentConfig::default();
        assert!(c.set("nope", "1").is_err());
        assert!(c.set("epochs", "-3").is_err());
        assert!(c.apply_overrides(&["--epochs"]).is_err());
        assert!(c.apply_overrides(&["epochs", "3"]).is_err());
        c.tau = 0.0;
        assert!(c.validate().is_err());
    }
}
