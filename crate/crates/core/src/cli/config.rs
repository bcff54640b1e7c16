//! Run configuration file.
//!
//! A TOML document; relative paths are resolved against the directory of
//! the config file. Any key can be overridden from the command line with
//! `--set section.key=value`.
//!
//! ```toml
//! seed = 0
//! threads = 0               # 0 = all available cores
//!
//! [paths]
//! train = "train.conll"
//! dev = "dev.conll"
//! model = "model.crf"
//! train_log = "train.log"   # optional: per-iteration objective log
//! clusters = "clusters.txt"
//! embeddings = "vectors.txt"
//! pos_lexicon = "pos.tsv"
//! gazetteers = { LOC = "gaz/loc.txt", PER = "gaz/per.txt" }
//!
//! [corpus]
//! columns = "surface,label"
//! normalize = true
//! bare_tags = false
//! entity_types = ["LOC", "GRP", "PROD", "CW", "CORP", "PER"]
//!
//! [features]                # see FeatureTemplateConfig
//! use_pos = false
//! neighbor_window = 2
//!
//! [train]                   # see TrainConfig
//! l2 = 1.0
//!
//! [decode]
//! constrain_bio = false
//!
//! [cluster]
//! k = 64
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clustering::KMeansConfig;
use crate::conll::{ColumnRole, ColumnSpec, LabelSchema, ParseOptions, DEFAULT_ENTITY_TYPES};
use crate::crf::TrainConfig;
use crate::error::{Error, Result};
use crate::features::FeatureTemplateConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub train_log: Option<PathBuf>,
    pub clusters: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub pos_lexicon: Option<PathBuf>,
    pub gazetteers: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub columns: String,
    pub normalize: bool,
    pub bare_tags: bool,
    pub entity_types: Vec<String>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            columns: "surface,label".into(),
            normalize: true,
            bare_tags: false,
            entity_types: DEFAULT_ENTITY_TYPES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl CorpusConfig {
    pub fn column_spec(&self) -> Result<ColumnSpec> {
        self.columns.parse()
    }

    pub fn parse_options(&self) -> Result<ParseOptions> {
        Ok(ParseOptions {
            columns: self.column_spec()?,
            normalize: self.normalize,
            bare_tags: self.bare_tags,
        })
    }

    pub fn schema(&self) -> Result<LabelSchema> {
        LabelSchema::new(&self.entity_types)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    pub constrain_bio: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub k: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        let d = KMeansConfig::default();
        Self {
            k: d.k,
            max_iter: d.max_iter,
            tol: d.tol,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: usize,
    pub paths: PathsConfig,
    pub corpus: CorpusConfig,
    pub features: FeatureTemplateConfig,
    pub train: TrainConfig,
    pub decode: DecodeConfig,
    pub cluster: ClusterConfig,
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| {
        Error::Config(format!("empty override key {key:?}"))
    })?;
    let mut cursor = table;
    for part in parts {
        let entry = cursor
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {part:?} is not a section")))?;
    }
    cursor.insert(last.to_string(), value);
    Ok(())
}

/// Parses the right-hand side of an override as a TOML value, falling back
/// to a plain string.
fn override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    doc.parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl RunConfig {
    /// Parses a config document and applies `key=value` overrides.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e| Error::Config(format!("config syntax: {e}")))?;
        for o in overrides {
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            set_dotted(&mut table, key.trim(), override_value(value.trim()))?;
        }
        let mut config: RunConfig = table
            .try_into()
            .map_err(|e| Error::Config(format!("config: {e}")))?;
        config.train.seed = config.seed;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text, overrides)?;
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut self.paths;
        for p in [
            &mut paths.train,
            &mut paths.dev,
            &mut paths.model,
            &mut paths.train_log,
            &mut paths.clusters,
            &mut paths.embeddings,
            &mut paths.pos_lexicon,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        paths.gazetteers.values_mut().for_each(fix);
    }

    pub fn kmeans(&self) -> KMeansConfig {
        KMeansConfig {
            k: self.cluster.k,
            seed: self.seed,
            max_iter: self.cluster.max_iter,
            tol: self.cluster.tol,
        }
    }

    /// Checks everything `train` needs before any compute starts.
    pub fn validate_for_training(&self) -> Result<()> {
        let missing_key = |k: &str| Error::Config(format!("paths.{k} is required"));
        let exists = |key: &str, p: &Path| {
            if p.exists() {
                Ok(())
            } else {
                Err(Error::Config(format!("paths.{key}: {} does not exist", p.display())))
            }
        };
        exists("train", self.paths.train.as_deref().ok_or_else(|| missing_key("train"))?)?;
        if self.paths.model.is_none() {
            return Err(missing_key("model"));
        }
        if let Some(dev) = &self.paths.dev {
            exists("dev", dev)?;
        }
        self.features.validate()?;
        self.train.validate()?;
        self.corpus.schema()?;
        let columns = self.corpus.column_spec()?;
        if !columns.has(ColumnRole::Label) {
            return Err(Error::Config("training corpus columns need a label column".into()));
        }
        if self.features.use_pos && !columns.has(ColumnRole::Pos) && self.paths.pos_lexicon.is_none() {
            return Err(Error::Config(
                "use_pos needs a pos column in corpus.columns or paths.pos_lexicon".into(),
            ));
        }
        if let Some(p) = &self.paths.pos_lexicon {
            exists("pos_lexicon", p)?;
        }
        if self.features.use_cluster {
            exists("clusters", self.paths.clusters.as_deref().ok_or_else(|| missing_key("clusters"))?)?;
        }
        if let Some(p) = &self.paths.embeddings {
            exists("embeddings", p)?;
        }
        if self.features.use_gazetteer {
            if self.paths.gazetteers.is_empty() {
                return Err(missing_key("gazetteers"));
            }
            for (ty, p) in &self.paths.gazetteers {
                exists(&format!("gazetteers.{ty}"), p)?;
            }
        }
        Ok(())
    }
}
