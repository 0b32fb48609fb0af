//! Run configuration files.
//!
//! The grammar is line-oriented UTF-8:
//!
//! ```text
//! line    := blank | comment | entry
//! comment := '#' any*
//! entry   := key '=' value [comment]
//! key     := ident ('.' ident)*      e.g. model.width
//! value   := any text up to '#', trimmed; may be wrapped in double quotes
//! ```
//!
//! Sections are the dotted prefix of a key (`model.`, `train.`, `data.`).
//! Every key may appear at most once and unknown keys are rejected. The
//! config hash is the SHA-256 of the fully resolved configuration in
//! canonical form, so two files that resolve to the same run hash alike.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{OcticError, Result};
use crate::model::{ModelConfig, OptimizerKind, TrainOptions};

/// Where training and evaluation samples come from.
#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub train_size: usize,
    pub eval_size: usize,
    pub train_seed: u64,
    pub eval_seed: u64,
    /// `path,label` manifest replacing the synthetic training set.
    pub manifest: Option<PathBuf>,
    /// Manifest replacing the synthetic evaluation set.
    pub eval_manifest: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train_size: 4096,
            eval_size: 512,
            train_seed: 1,
            eval_seed: 2,
            manifest: None,
            eval_manifest: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainOptions,
    pub data: DataConfig,
}

/// Every accepted key, in canonical order.
pub const KEYS: &[&str] = &[
    "model.family",
    "model.depth",
    "model.octic_depth",
    "model.width",
    "model.heads",
    "model.patch",
    "model.image",
    "model.classes",
    "model.invariant",
    "model.seed",
    "train.steps",
    "train.batch",
    "train.optimizer",
    "train.lr",
    "train.eval_every",
    "train.seed",
    "data.train_size",
    "data.eval_size",
    "data.train_seed",
    "data.eval_seed",
    "data.manifest",
    "data.eval_manifest",
];

/// Split a config file into `key → value`, rejecting malformed lines,
/// duplicates and unknown keys.
pub fn parse_entries(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: &str| OcticError::InvalidConfig(format!("line {}: {msg}", n + 1));
        let (key, value) = line.split_once('=').ok_or_else(|| bad("expected 'key = value'"))?;
        let (key, mut value) = (key.trim(), value.trim());
        let valid_key = !key.is_empty()
            && key
                .split('.')
                .all(|p| !p.is_empty() && p.chars().all(|c| c.is_ascii_alphanumeric() || c == '_'));
        if !valid_key {
            return Err(bad(&format!("malformed key '{key}'")));
        }
        if !KEYS.contains(&key) {
            return Err(bad(&format!("unknown key '{key}'")));
        }
        if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
            value = &value[1..value.len() - 1];
        }
        if out.insert(key.to_string(), value.to_string()).is_some() {
            return Err(bad(&format!("duplicate key '{key}'")));
        }
    }
    Ok(out)
}

/// Drop a trailing `#` comment that is not inside double quotes.
fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| OcticError::InvalidConfig(format!("{key}: cannot parse '{value}'")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_entries(&parse_entries(text)?)
    }

    /// Read a config file; relative manifest paths resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::parse(&std::fs::read_to_string(path).map_err(OcticError::at(path))?)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for m in [&mut cfg.data.manifest, &mut cfg.data.eval_manifest].into_iter().flatten() {
            if m.is_relative() {
                *m = base.join(&*m);
            }
        }
        Ok(cfg)
    }

    pub fn from_entries(entries: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = Self::default();
        let mut lr = None;
        let mut optimizer = "adam".to_string();
        for (key, v) in entries {
            let k = key.as_str();
            match k {
                "model.family" => cfg.model.family = v.parse()?,
                "model.depth" => cfg.model.depth = parse_value(k, v)?,
                "model.octic_depth" => cfg.model.octic_depth = parse_value(k, v)?,
                "model.width" => cfg.model.width = parse_value(k, v)?,
                "model.heads" => cfg.model.heads = parse_value(k, v)?,
                "model.patch" => cfg.model.patch = parse_value(k, v)?,
                "model.image" => cfg.model.image = parse_value(k, v)?,
                "model.classes" => cfg.model.classes = parse_value(k, v)?,
                "model.invariant" => cfg.model.invariant = v.parse()?,
                "model.seed" => cfg.model.seed = parse_value(k, v)?,
                "train.steps" => cfg.train.steps = parse_value(k, v)?,
                "train.batch" => cfg.train.batch = parse_value(k, v)?,
                "train.optimizer" => optimizer = v.to_ascii_lowercase(),
                "train.lr" => lr = Some(parse_value::<f64>(k, v)?),
                "train.eval_every" => cfg.train.eval_every = parse_value(k, v)?,
                "train.seed" => cfg.train.seed = parse_value(k, v)?,
                "data.train_size" => cfg.data.train_size = parse_value(k, v)?,
                "data.eval_size" => cfg.data.eval_size = parse_value(k, v)?,
                "data.train_seed" => cfg.data.train_seed = parse_value(k, v)?,
                "data.eval_seed" => cfg.data.eval_seed = parse_value(k, v)?,
                "data.manifest" => cfg.data.manifest = Some(PathBuf::from(v)),
                "data.eval_manifest" => cfg.data.eval_manifest = Some(PathBuf::from(v)),
                _ => return Err(OcticError::InvalidConfig(format!("unknown key '{k}'"))),
            }
        }
        cfg.train.optimizer = match optimizer.as_str() {
            "adam" => OptimizerKind::adam(lr.unwrap_or(1e-3)),
            "sgd" => OptimizerKind::sgd(lr.unwrap_or(1e-2)),
            other => {
                return Err(OcticError::InvalidConfig(format!(
                    "train.optimizer: unknown optimizer '{other}' (expected adam or sgd)"
                )))
            }
        };
        if lr.is_some_and(|lr| !(lr > 0.0 && lr.is_finite())) {
            return Err(OcticError::InvalidConfig("train.lr must be positive".into()));
        }
        cfg.model.validate()?;
        Ok(cfg)
    }

    /// Canonical `key = value` text of every setting, defaults included.
    pub fn canonical(&self) -> String {
        let m = &self.model;
        let t = &self.train;
        let d = &self.data;
        let (opt, lr) = match t.optimizer {
            OptimizerKind::Adam { lr, .. } => ("adam", lr),
            OptimizerKind::Sgd { lr, .. } => ("sgd", lr),
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
        let values = [
            m.family.to_string(),
            m.depth.to_string(),
            m.octic_depth.to_string(),
            m.width.to_string(),
            m.heads.to_string(),
            m.patch.to_string(),
            m.image.to_string(),
            m.classes.to_string(),
            m.invariant.to_string(),
            m.seed.to_string(),
            t.steps.to_string(),
            t.batch.to_string(),
            opt.to_string(),
            format!("{lr:e}"),
            t.eval_every.to_string(),
            t.seed.to_string(),
            d.train_size.to_string(),
            d.eval_size.to_string(),
            d.train_seed.to_string(),
            d.eval_seed.to_string(),
            path(&d.manifest),
            path(&d.eval_manifest),
        ];
        let mut out = String::new();
        for (k, v) in KEYS.iter().zip(values) {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn hash(&self) -> String {
        hash_text(&self.canonical())
    }
}

/// Hex SHA-256 of `text`.
pub fn hash_text(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::invariants::InvariantizationKind;
    use crate::model::Family;

    #[test]
    fn parses_sections_comments_and_quotes() {
        let cfg = RunConfig::parse(
            "# toy run\nmodel.family = i8\nmodel.octic_depth = 1 # seam after one block\n\n\
             model.invariant = \"maxfilter\"\ntrain.lr = 5e-4\n",
        )
        .unwrap();
        assert_eq!(cfg.model.family, Family::I8);
        assert_eq!(cfg.model.octic_depth, 1);
        assert_eq!(cfg.model.invariant, InvariantizationKind::MaxFiltering);
        assert_eq!(cfg.train.optimizer, OptimizerKind::adam(5e-4));
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed() {
        assert!(RunConfig::parse("model.colour = red").is_err());
        assert!(RunConfig::parse("model.width = 16\nmodel.width = 32").is_err());
        assert!(RunConfig::parse("model.width 16").is_err());
        assert!(RunConfig::parse("model..width = 16").is_err());
        assert!(RunConfig::parse("model.width = sixteen").is_err());
        assert!(RunConfig::parse("train.optimizer = lbfgs").is_err());
    }

    #[test]
    fn validates_the_model() {
        assert!(RunConfig::parse("model.family = d8\nmodel.octic_depth = 1").is_err());
    }

    #[test]
    fn hash_depends_on_resolved_settings_only() {
        let a = RunConfig::parse("model.width = 16").unwrap();
        let b = RunConfig::parse("# defaults\n").unwrap();
        let c = RunConfig::parse("model.width = 32").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn canonical_text_parses_back() {
        let cfg = RunConfig::parse("model.family = h8\nmodel.octic_depth = 1\ntrain.optimizer = sgd").unwrap();
        let text: String = cfg.canonical().lines().filter(|l| !l.ends_with("= ")).map(|l| format!("{l}\n")).collect();
        assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
    }
}
