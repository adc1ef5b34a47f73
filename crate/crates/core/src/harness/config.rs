//! Experiment configuration: flat `key = value` files (TOML syntax) with
//! command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cnn::CnnConfig;
use crate::dataset::BalanceMode;
use crate::embeddings::EmbeddingMode;
use crate::error::{Error, Result};
use crate::mlp::MlpConfig;
use crate::optim::{AdamHyper, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Cv,
    Train,
    Eval,
    Wsd,
    Analyze,
    Tune,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Cv => "cv",
            Mode::Train => "train",
            Mode::Eval => "eval",
            Mode::Wsd => "wsd",
            Mode::Analyze => "analyze",
            Mode::Tune => "tune",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "cv" => Mode::Cv,
            "train" => Mode::Train,
            "eval" => Mode::Eval,
            "wsd" => Mode::Wsd,
            "analyze" => Mode::Analyze,
            "tune" => Mode::Tune,
            other => return Err(Error::Config(format!("unknown mode `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Cnn,
    Mlp,
    Majority,
    Random,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Cnn => "cnn",
            ModelKind::Mlp => "mlp",
            ModelKind::Majority => "majority",
            ModelKind::Random => "random",
        }
    }

    pub fn is_neural(self) -> bool {
        matches!(self, ModelKind::Cnn | ModelKind::Mlp)
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "cnn" => ModelKind::Cnn,
            "mlp" => ModelKind::Mlp,
            "majority" => ModelKind::Majority,
            "random" => ModelKind::Random,
            other => return Err(Error::Config(format!("unknown model `{other}`"))),
        })
    }
}

/// Where the word vectors come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingInit {
    Pretrained,
    /// Random vectors; the bound comes from the embedding file's variance
    /// when one is given, otherwise from `random_bound`.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupBy {
    /// One classifier per lowercased target word.
    Target,
    /// A single classifier over the whole corpus.
    None,
}

/// Every knob of an experiment run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub mode: Mode,
    pub model: ModelKind,
    /// Fold source in `cv`, training corpus elsewhere.
    pub corpus: Option<PathBuf>,
    /// Corpora appended whole to every training set.
    pub always_in_train: Vec<PathBuf>,
    pub test_corpus: Option<PathBuf>,
    /// Train on this CV fold's training part instead of the whole corpus.
    pub train_fold: Option<usize>,
    pub embeddings: Option<PathBuf>,
    pub embedding_dim: usize,
    pub embedding_init: EmbeddingInit,
    pub random_bound: Option<f64>,
    pub embedding_mode: EmbeddingMode,
    pub balance: Option<BalanceMode>,
    pub folds: usize,
    pub seed: u64,
    pub group_by: GroupBy,
    pub iterations: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: f64,
    pub dropout_keep: f64,
    pub l2_lambda: f64,
    pub region_sizes: Vec<usize>,
    pub maps_per_size: usize,
    pub hidden: usize,
    /// Tune region sizes per word before the final `wsd` training.
    pub tune: bool,
    pub tune_candidates: Vec<Vec<usize>>,
    /// Systems evaluated alongside `model` for significance testing.
    pub compare: Vec<ModelKind>,
    pub top_k: usize,
    pub checkpoint_dir: Option<PathBuf>,
    pub out: PathBuf,
    pub parallel: bool,
    /// Input digests a manifest expects, keyed by path.
    pub expected_digests: BTreeMap<String, String>,
}

/// The five region-size triples searched for lexical-sample WSD.
pub fn default_tune_candidates() -> Vec<Vec<usize>> {
    vec![
        vec![1, 2, 3],
        vec![2, 3, 4],
        vec![3, 4, 5],
        vec![4, 5, 6],
        vec![5, 6, 7],
    ]
}

impl ExperimentSpec {
    pub fn new(mode: Mode) -> Self {
        ExperimentSpec {
            mode,
            model: ModelKind::Cnn,
            corpus: None,
            always_in_train: Vec::new(),
            test_corpus: None,
            train_fold: None,
            embeddings: None,
            embedding_dim: 300,
            embedding_init: EmbeddingInit::Pretrained,
            random_bound: None,
            embedding_mode: EmbeddingMode::Static,
            balance: None,
            folds: 5,
            seed: 0,
            group_by: GroupBy::Target,
            iterations: None,
            batch_size: None,
            learning_rate: 1e-4,
            dropout_keep: 0.5,
            l2_lambda: 1e-3,
            region_sizes: vec![3, 4, 5],
            maps_per_size: 100,
            hidden: 1024,
            tune: false,
            tune_candidates: default_tune_candidates(),
            compare: vec![ModelKind::Majority],
            top_k: crate::introspect::DEFAULT_TOP_K,
            checkpoint_dir: None,
            out: PathBuf::from("out"),
            parallel: true,
            expected_digests: BTreeMap::new(),
        }
    }

    /// Parses a config file body. Relative paths resolve against `base_dir`.
    pub fn from_toml_str(mode: Mode, text: &str, base_dir: &Path) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut spec = ExperimentSpec::new(mode);
        for (key, value) in &table {
            spec.set(key, value, base_dir)?;
        }
        Ok(spec)
    }

    /// Sets one key. Paths in `value` are resolved against `base_dir`.
    pub fn set(&mut self, key: &str, value: &toml::Value, base_dir: &Path) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("`{key}` expects {what}, got {value}"));
        let string = || {
            value
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| bad("a string"))
        };
        let path = || string().map(|s| resolve(base_dir, &s));
        let uint = || {
            value
                .as_integer()
                .filter(|&i| i >= 0)
                .map(|i| i as u64)
                .ok_or_else(|| bad("a non-negative integer"))
        };
        let float = || {
            value
                .as_float()
                .or_else(|| value.as_integer().map(|i| i as f64))
                .ok_or_else(|| bad("a number"))
        };
        let boolean = || value.as_bool().ok_or_else(|| bad("a boolean"));
        let list = |v: &toml::Value| -> Result<Vec<toml::Value>> {
            match v {
                toml::Value::Array(a) => Ok(a.clone()),
                toml::Value::String(s) if s.trim().is_empty() => Ok(Vec::new()),
                toml::Value::String(s) => Ok(s
                    .split(',')
                    .map(|p| {
                        let p = p.trim();
                        p.parse::<i64>()
                            .map(toml::Value::Integer)
                            .unwrap_or_else(|_| toml::Value::String(p.to_string()))
                    })
                    .collect()),
                other => Ok(vec![other.clone()]),
            }
        };
        let usizes = |v: &toml::Value| -> Result<Vec<usize>> {
            list(v)?
                .iter()
                .map(|x| {
                    x.as_integer()
                        .filter(|&i| i > 0)
                        .map(|i| i as usize)
                        .ok_or_else(|| bad("positive integers"))
                })
                .collect()
        };

        match key {
            "mode" => {
                let m: Mode = string()?.parse()?;
                if m != self.mode {
                    return Err(Error::Config(format!(
                        "config is for mode `{}`, running `{}`",
                        m.name(),
                        self.mode.name()
                    )));
                }
            }
            "model" => self.model = string()?.parse()?,
            "corpus" => self.corpus = Some(path()?),
            "always_in_train" => {
                self.always_in_train = list(value)?
                    .iter()
                    .map(|v| {
                        v.as_str()
                            .map(|s| resolve(base_dir, s))
                            .ok_or_else(|| bad("paths"))
                    })
                    .collect::<Result<_>>()?
            }
            "test_corpus" => self.test_corpus = Some(path()?),
            "train_fold" => self.train_fold = Some(uint()? as usize),
            "embeddings" => self.embeddings = Some(path()?),
            "embedding_dim" => self.embedding_dim = uint()? as usize,
            "embedding_init" => {
                self.embedding_init = match string()?.as_str() {
                    "pretrained" => EmbeddingInit::Pretrained,
                    "random" => EmbeddingInit::Random,
                    _ => return Err(bad("`pretrained` or `random`")),
                }
            }
            "random_bound" => self.random_bound = Some(float()?),
            "embedding_mode" => self.embedding_mode = string()?.parse()?,
            "balance" => {
                self.balance = match string()?.as_str() {
                    "over" | "oversample" => Some(BalanceMode::Oversample),
                    "under" | "undersample" => Some(BalanceMode::Undersample),
                    "none" => None,
                    _ => return Err(bad("`over`, `under` or `none`")),
                }
            }
            "folds" => self.folds = uint()? as usize,
            "seed" => self.seed = uint()?,
            "group_by" => {
                self.group_by = match string()?.as_str() {
                    "target" => GroupBy::Target,
                    "none" => GroupBy::None,
                    _ => return Err(bad("`target` or `none`")),
                }
            }
            "iterations" => self.iterations = Some(uint()? as usize),
            "batch_size" => self.batch_size = Some(uint()? as usize),
            "learning_rate" => self.learning_rate = float()?,
            "dropout_keep" => self.dropout_keep = float()?,
            "l2_lambda" => self.l2_lambda = float()?,
            "region_sizes" => self.region_sizes = usizes(value)?,
            "maps_per_size" => self.maps_per_size = uint()? as usize,
            "hidden" => self.hidden = uint()? as usize,
            "tune" => self.tune = boolean()?,
            "tune_candidates" => {
                self.tune_candidates = match value {
                    toml::Value::Array(items) if items.iter().all(|i| i.is_array()) => {
                        items.iter().map(usizes).collect::<Result<_>>()?
                    }
                    toml::Value::String(s) => s
                        .split(';')
                        .map(|part| usizes(&toml::Value::String(part.to_string())))
                        .collect::<Result<_>>()?,
                    _ => return Err(bad("a list of size lists")),
                }
            }
            "compare" => {
                self.compare = list(value)?
                    .iter()
                    .map(|v| v.as_str().ok_or_else(|| bad("model names"))?.parse())
                    .collect::<Result<_>>()?
            }
            "top_k" => self.top_k = uint()? as usize,
            "checkpoint_dir" => self.checkpoint_dir = Some(path()?),
            "out" => self.out = path()?,
            "parallel" => self.parallel = boolean()?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// The resolved configuration as a flat table, for manifests.
    pub fn to_table(&self) -> toml::Table {
        use toml::Value as V;
        let mut t = toml::Table::new();
        let p = |p: &Path| V::String(p.display().to_string());
        let ints = |v: &[usize]| V::Array(v.iter().map(|&x| V::Integer(x as i64)).collect());
        t.insert("mode".into(), V::String(self.mode.name().into()));
        t.insert("model".into(), V::String(self.model.name().into()));
        if let Some(c) = &self.corpus {
            t.insert("corpus".into(), p(c));
        }
        t.insert(
            "always_in_train".into(),
            V::Array(self.always_in_train.iter().map(|x| p(x)).collect()),
        );
        if let Some(c) = &self.test_corpus {
            t.insert("test_corpus".into(), p(c));
        }
        if let Some(f) = self.train_fold {
            t.insert("train_fold".into(), V::Integer(f as i64));
        }
        if let Some(e) = &self.embeddings {
            t.insert("embeddings".into(), p(e));
        }
        t.insert(
            "embedding_dim".into(),
            V::Integer(self.embedding_dim as i64),
        );
        t.insert(
            "embedding_init".into(),
            V::String(
                match self.embedding_init {
                    EmbeddingInit::Pretrained => "pretrained",
                    EmbeddingInit::Random => "random",
                }
                .into(),
            ),
        );
        if let Some(b) = self.random_bound {
            t.insert("random_bound".into(), V::Float(b));
        }
        t.insert(
            "embedding_mode".into(),
            V::String(
                match self.embedding_mode {
                    EmbeddingMode::Static => "static",
                    EmbeddingMode::Tuned => "tuned",
                }
                .into(),
            ),
        );
        t.insert(
            "balance".into(),
            V::String(
                match self.balance {
                    None => "none",
                    Some(BalanceMode::Oversample) => "over",
                    Some(BalanceMode::Undersample) => "under",
                }
                .into(),
            ),
        );
        t.insert("folds".into(), V::Integer(self.folds as i64));
        t.insert("seed".into(), V::Integer(self.seed as i64));
        t.insert(
            "group_by".into(),
            V::String(
                match self.group_by {
                    GroupBy::Target => "target",
                    GroupBy::None => "none",
                }
                .into(),
            ),
        );
        if let Some(i) = self.iterations {
            t.insert("iterations".into(), V::Integer(i as i64));
        }
        if let Some(b) = self.batch_size {
            t.insert("batch_size".into(), V::Integer(b as i64));
        }
        t.insert("learning_rate".into(), V::Float(self.learning_rate));
        t.insert("dropout_keep".into(), V::Float(self.dropout_keep));
        t.insert("l2_lambda".into(), V::Float(self.l2_lambda));
        t.insert("region_sizes".into(), ints(&self.region_sizes));
        t.insert(
            "maps_per_size".into(),
            V::Integer(self.maps_per_size as i64),
        );
        t.insert("hidden".into(), V::Integer(self.hidden as i64));
        t.insert("tune".into(), V::Boolean(self.tune));
        t.insert(
            "tune_candidates".into(),
            V::Array(self.tune_candidates.iter().map(|c| ints(c)).collect()),
        );
        t.insert(
            "compare".into(),
            V::Array(
                self.compare
                    .iter()
                    .map(|k| V::String(k.name().into()))
                    .collect(),
            ),
        );
        t.insert("top_k".into(), V::Integer(self.top_k as i64));
        if let Some(c) = &self.checkpoint_dir {
            t.insert("checkpoint_dir".into(), p(c));
        }
        t.insert("out".into(), p(&self.out));
        t.insert("parallel".into(), V::Boolean(self.parallel));
        t
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Config("folds must be at least 2".into()));
        }
        if self.embedding_dim == 0 {
            return Err(Error::Config("embedding_dim must be positive".into()));
        }
        if self.tune_candidates.is_empty() {
            return Err(Error::Config("tune_candidates is empty".into()));
        }
        if self.iterations == Some(0) {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if let (Some(f), true) = (self.train_fold, true) {
            if f >= self.folds {
                return Err(Error::Config(format!(
                    "train_fold {f} >= folds {}",
                    self.folds
                )));
            }
        }
        Ok(())
    }

    /// Training schedule for `kind`: 1001 steps for the CNN, 3001 for the
    /// MLP, batches of 50 (10 in `wsd` mode) unless overridden.
    pub fn train_config(&self, kind: ModelKind, seed: u64) -> TrainConfig {
        let base = match kind {
            ModelKind::Mlp => TrainConfig::mlp_default(seed),
            _ => TrainConfig::cnn_default(seed),
        };
        let default_batch = if self.mode == Mode::Wsd {
            10
        } else {
            base.batch_size
        };
        TrainConfig {
            iterations: self.iterations.unwrap_or(base.iterations),
            batch_size: self.batch_size.unwrap_or(default_batch),
            seed,
            adam: AdamHyper {
                lr: self.learning_rate,
                ..AdamHyper::default()
            },
        }
    }

    pub fn cnn_config(&self, dim: usize, classes: usize, region_sizes: &[usize]) -> CnnConfig {
        CnnConfig {
            dim,
            region_sizes: region_sizes.to_vec(),
            maps_per_size: self.maps_per_size,
            classes,
            dropout_keep: self.dropout_keep,
            l2_lambda: self.l2_lambda,
            embedding_mode: self.embedding_mode,
        }
    }

    pub fn mlp_config(&self, dim: usize, classes: usize) -> MlpConfig {
        MlpConfig {
            dim,
            hidden: self.hidden,
            classes,
            dropout_keep: self.dropout_keep,
            l2_lambda: self.l2_lambda,
            embedding_mode: self.embedding_mode,
        }
    }
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let path = PathBuf::from(p);
    if path.is_absolute() {
        path
    } else {
        base.join(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_flat_config() {
        let text = r#"
model = "mlp"
corpus = "data/train.jsonl"
always_in_train = ["extra.jsonl"]
seed = 7
region_sizes = [2, 3]
balance = "over"
compare = "majority, random"
tune_candidates = "1,2,3; 4,5,6"
learning_rate = 0.001
"#;
        let spec = ExperimentSpec::from_toml_str(Mode::Cv, text, Path::new("/base")).unwrap();
        assert_eq!(spec.model, ModelKind::Mlp);
        assert_eq!(
            spec.corpus.as_deref(),
            Some(Path::new("/base/data/train.jsonl"))
        );
        assert_eq!(
            spec.always_in_train,
            vec![PathBuf::from("/base/extra.jsonl")]
        );
        assert_eq!(spec.seed, 7);
        assert_eq!(spec.region_sizes, vec![2, 3]);
        assert_eq!(spec.balance, Some(BalanceMode::Oversample));
        assert_eq!(spec.compare, vec![ModelKind::Majority, ModelKind::Random]);
        assert_eq!(spec.tune_candidates, vec![vec![1, 2, 3], vec![4, 5, 6]]);
        assert_eq!(spec.learning_rate, 1e-3);
    }

    #[test]
    fn unknown_key_is_error() {
        assert!(ExperimentSpec::from_toml_str(Mode::Cv, "bogus = 1", Path::new(".")).is_err());
        assert!(ExperimentSpec::from_toml_str(Mode::Cv, "seed = \"x\"", Path::new(".")).is_err());
        assert!(ExperimentSpec::from_toml_str(Mode::Cv, "mode = \"wsd\"", Path::new(".")).is_err());
    }

    #[test]
    fn table_round_trip() {
        let mut spec = ExperimentSpec::new(Mode::Wsd);
        spec.corpus = Some("/a/b.jsonl".into());
        spec.iterations = Some(12);
        spec.random_bound = Some(0.25);
        spec.balance = Some(BalanceMode::Undersample);
        let text = toml::to_string(&spec.to_table()).unwrap();
        let back = ExperimentSpec::from_toml_str(Mode::Wsd, &text, Path::new("")).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn schedule_defaults() {
        let spec = ExperimentSpec::new(Mode::Cv);
        assert_eq!(spec.train_config(ModelKind::Cnn, 0).iterations, 1001);
        assert_eq!(spec.train_config(ModelKind::Mlp, 0).iterations, 3001);
        assert_eq!(spec.train_config(ModelKind::Cnn, 0).batch_size, 50);
        assert_eq!(
            ExperimentSpec::new(Mode::Wsd)
                .train_config(ModelKind::Cnn, 0)
                .batch_size,
            10
        );
    }
}
