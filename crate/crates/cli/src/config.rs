//! Flat `key = value` run configuration.
//!
//! One pair per line, `#` starts a comment, blank lines are ignored. Keys:
//!
//! | key | meaning | default |
//! |-----|---------|---------|
//! | `method` | `baseline`, `evd` or `recursive` | `baseline` |
//! | `seed` | run seed (overridden by `WOPT_SEED`) | `1` |
//! | `epochs` | training epochs | `5` |
//! | `threads` | worker threads, 0 = all cores | `0` |
//! | `architecture` | `auto`, `mlp` or `convnet` | `auto` |
//! | `hidden` | comma-separated MLP hidden widths | `64` |
//! | `dataset` | `synthetic`, `cifar10` or `files` | `synthetic` |
//! | `synthetic.dim`, `.classes`, `.cond`, `.samples_train`, `.samples_test`, `.seed`, `.separation` | synthetic set | see `SyntheticSpec` |
//! | `cifar10.dir`, `cifar10.train_limit`, `cifar10.test_limit` | CIFAR-10 binaries | none |
//! | `train_file`, `test_file` | WOPT1 files for `dataset = files` | none |
//! | `alpha`, `beta`, `gamma`, `delta`, `epsilon`, `g_max`, `c_rel`, `c_abs` | whitening | per method |
//! | `block_batches`, `batch_size`, `eta`, `momentum`, `weight_decay` | optimizer | `4`, `32`, `0.1`, `0.9`, `5e-4` |
//! | `lr_milestones` | comma-separated epochs dividing `eta` by 10 | empty |
//! | `subsample_stride`, `allow_amplify`, `refresh_every` | cost controls | `1`, `false`, `1` |

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use wopt_core::data::SyntheticSpec;
use wopt_core::experiment::{DataSource, ExperimentConfig};
use wopt_core::optimizer::HyperParams;
use wopt_core::Method;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: cannot parse `{value}`: {reason}")]
    Value {
        key: String,
        value: String,
        reason: String,
    },
    #[error("missing key `{0}`")]
    Missing(&'static str),
    #[error("{0}")]
    Invalid(String),
}

/// Architecture preference; `Auto` picks from the sample shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchChoice {
    Auto,
    Mlp,
    Convnet,
}

impl FromStr for ArchChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "auto" => Ok(ArchChoice::Auto),
            "mlp" => Ok(ArchChoice::Mlp),
            "convnet" => Ok(ArchChoice::Convnet),
            other => Err(format!("expected auto, mlp or convnet, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub architecture: ArchChoice,
    pub threads: usize,
}

const KEYS: &[&str] = &[
    "method",
    "seed",
    "epochs",
    "threads",
    "architecture",
    "hidden",
    "dataset",
    "synthetic.dim",
    "synthetic.classes",
    "synthetic.cond",
    "synthetic.samples_train",
    "synthetic.samples_test",
    "synthetic.seed",
    "synthetic.separation",
    "cifar10.dir",
    "cifar10.train_limit",
    "cifar10.test_limit",
    "train_file",
    "test_file",
    "alpha",
    "beta",
    "gamma",
    "delta",
    "epsilon",
    "g_max",
    "c_rel",
    "c_abs",
    "block_batches",
    "batch_size",
    "eta",
    "momentum",
    "weight_decay",
    "lr_milestones",
    "subsample_stride",
    "allow_amplify",
    "refresh_every",
];

/// Parses `key = value` lines into a map, rejecting unknown and repeated
/// keys.
pub fn parse_pairs(text: &str, known: &[&str]) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            text: raw.to_string(),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            });
        }
        if !known.contains(&key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        if out.insert(key.to_string(), value.to_string()).is_some() {
            return Err(ConfigError::Duplicate {
                line: i + 1,
                key: key.to_string(),
            });
        }
    }
    Ok(out)
}

struct Pairs(BTreeMap<String, String>);

impl Pairs {
    fn get<T>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.0
            .get(key)
            .map(|v| {
                v.parse().map_err(|e: T::Err| ConfigError::Value {
                    key: key.to_string(),
                    value: v.clone(),
                    reason: e.to_string(),
                })
            })
            .transpose()
    }

    fn set<T>(&self, key: &str, slot: &mut T) -> Result<(), ConfigError>
    where
        T: FromStr,
        T::Err: Display,
    {
        if let Some(v) = self.get(key)? {
            *slot = v;
        }
        Ok(())
    }

    fn list(&self, key: &str) -> Result<Option<Vec<usize>>, ConfigError> {
        let Some(raw) = self.0.get(key) else {
            return Ok(None);
        };
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|e: std::num::ParseIntError| ConfigError::Value {
                        key: key.to_string(),
                        value: raw.clone(),
                        reason: e.to_string(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }
}

/// Builds a validated run configuration. `seed_override` replaces the
/// configured seed (used for `WOPT_SEED`).
pub fn parse_run_config(text: &str, seed_override: Option<u64>) -> Result<RunConfig, ConfigError> {
    let p = Pairs(parse_pairs(text, KEYS)?);
    let method: Method = p.get("method")?.unwrap_or(Method::Baseline);

    let data = match p
        .get::<String>("dataset")?
        .as_deref()
        .unwrap_or("synthetic")
    {
        "synthetic" => {
            let mut spec = SyntheticSpec::default();
            p.set("synthetic.dim", &mut spec.dim)?;
            p.set("synthetic.classes", &mut spec.classes)?;
            p.set("synthetic.cond", &mut spec.cond)?;
            p.set("synthetic.samples_train", &mut spec.samples_train)?;
            p.set("synthetic.samples_test", &mut spec.samples_test)?;
            p.set("synthetic.seed", &mut spec.seed)?;
            p.set("synthetic.separation", &mut spec.separation)?;
            DataSource::Synthetic(spec)
        }
        "cifar10" => DataSource::Cifar10 {
            dir: p
                .get::<PathBuf>("cifar10.dir")?
                .ok_or(ConfigError::Missing("cifar10.dir"))?,
            train_limit: p.get("cifar10.train_limit")?,
            test_limit: p.get("cifar10.test_limit")?,
        },
        "files" => DataSource::Files {
            train: p
                .get("train_file")?
                .ok_or(ConfigError::Missing("train_file"))?,
            test: p
                .get("test_file")?
                .ok_or(ConfigError::Missing("test_file"))?,
        },
        other => {
            return Err(ConfigError::Value {
                key: "dataset".into(),
                value: other.into(),
                reason: "expected synthetic, cifar10 or files".into(),
            })
        }
    };

    let mut cfg = ExperimentConfig::new(method, data);
    p.set("seed", &mut cfg.seed)?;
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    p.set("epochs", &mut cfg.epochs)?;
    if let Some(hidden) = p.list("hidden")? {
        cfg.hidden = hidden;
    }
    apply_hyper(&p, &mut cfg.hyper)?;
    cfg.validate()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;

    Ok(RunConfig {
        experiment: cfg,
        architecture: p.get("architecture")?.unwrap_or(ArchChoice::Auto),
        threads: p.get("threads")?.unwrap_or(0),
    })
}

fn apply_hyper(p: &Pairs, h: &mut HyperParams) -> Result<(), ConfigError> {
    p.set("alpha", &mut h.alpha)?;
    p.set("beta", &mut h.beta)?;
    p.set("gamma", &mut h.gamma)?;
    p.set("delta", &mut h.delta)?;
    p.set("epsilon", &mut h.epsilon)?;
    p.set("g_max", &mut h.g_max)?;
    p.set("c_rel", &mut h.c_rel)?;
    p.set("c_abs", &mut h.c_abs)?;
    p.set("block_batches", &mut h.block_batches)?;
    p.set("batch_size", &mut h.batch_size)?;
    p.set("eta", &mut h.eta)?;
    p.set("momentum", &mut h.momentum)?;
    p.set("weight_decay", &mut h.weight_decay)?;
    p.set("subsample_stride", &mut h.subsample_stride)?;
    p.set("allow_amplify", &mut h.allow_amplify)?;
    p.set("refresh_every", &mut h.refresh_every)?;
    if let Some(m) = p.list("lr_milestones")? {
        h.lr_milestones = m;
    }
    Ok(())
}

const SPEC_KEYS: &[&str] = &[
    "dim",
    "classes",
    "cond",
    "samples_train",
    "samples_test",
    "seed",
    "separation",
];

/// A synthetic-set spec in the same `key = value` format, keys without the
/// `synthetic.` prefix.
pub fn parse_synthetic_spec(text: &str) -> Result<SyntheticSpec, ConfigError> {
    let p = Pairs(parse_pairs(text, SPEC_KEYS)?);
    let mut spec = SyntheticSpec::default();
    p.set("dim", &mut spec.dim)?;
    p.set("classes", &mut spec.classes)?;
    p.set("cond", &mut spec.cond)?;
    p.set("samples_train", &mut spec.samples_train)?;
    p.set("samples_test", &mut spec.samples_test)?;
    p.set("seed", &mut spec.seed)?;
    p.set("separation", &mut spec.separation)?;
    spec.validate()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(spec)
}
