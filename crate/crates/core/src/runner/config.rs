//! Project configuration and the data it points at.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{sha256_hex, RunError};
use crate::gateway::ModelConfig;
use crate::metrics::MetricOptions;
use crate::protocol::{PromptContext, Task, Templates};
use crate::retrieval::{Method, SelectionSpec, VectorSet};
use crate::tok::NormalizationTable;
use crate::treebank::{
    parse_dependency_file, parse_morph_file, Corpus, DepFormat, FeatureVocab, GenreSidecar,
    LabelSet, Split,
};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitPaths {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

impl SplitPaths {
    pub fn get(&self, split: Split) -> Option<&PathBuf> {
        match split {
            Split::Train => self.train.as_ref(),
            Split::Dev => self.dev.as_ref(),
            Split::Test => self.test.as_ref(),
        }
    }

    fn resolve(&mut self, base: &Path) {
        for p in [&mut self.train, &mut self.dev, &mut self.test].into_iter().flatten() {
            *p = base.join(&*p);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorPaths {
    pub vectors: PathBuf,
    pub ids: PathBuf,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingPaths {
    pub train: Option<VectorPaths>,
    pub dev: Option<VectorPaths>,
    pub test: Option<VectorPaths>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepLayout {
    #[default]
    Compact,
    Conllx,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default)]
    pub format: DepLayout,
    /// Dependency files, used by the parsing tasks.
    #[serde(default)]
    pub dep: SplitPaths,
    /// Morphological feature files, used by tagging.
    #[serde(default)]
    pub morph: SplitPaths,
    pub genres: Option<PathBuf>,
    #[serde(default)]
    pub embeddings: EmbeddingPaths,
    /// Feature vocabulary TOML; the built-in one when absent.
    pub vocab: Option<PathBuf>,
    /// Normalization table TOML; the built-in one when absent.
    pub normalization: Option<PathBuf>,
    /// Directory of prompt templates overriding the built-in ones.
    pub templates: Option<PathBuf>,
    /// Dependency label inventory; CATiB when absent.
    pub labels: Option<Vec<String>>,
}

fn default_ks() -> Vec<usize> {
    vec![0, 1, 3, 5, 10]
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_ks")]
    pub ks: Vec<usize>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Overrides the per-task primary metric.
    pub metric: Option<String>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            ks: default_ks(),
            methods: default_methods(),
            metric: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Hybrid selection rule; the built-in one when absent.
    pub rule: Option<String>,
    /// Metric broken down by genre; the task's primary metric when absent.
    pub metric: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    #[serde(default)]
    pub data: DataConfig,
    pub model: Option<ModelConfig>,
    pub selection: Option<SelectionSpec>,
    #[serde(default)]
    pub metrics: MetricOptions,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

impl ProjectConfig {
    /// Parses `text`, resolving relative paths against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, RunError> {
        let mut cfg: ProjectConfig =
            toml::from_str(text).map_err(|e| RunError::Usage(format!("config: {e}")))?;
        let d = &mut cfg.data;
        d.dep.resolve(base);
        d.morph.resolve(base);
        for p in [&mut d.genres, &mut d.vocab, &mut d.normalization, &mut d.templates]
            .into_iter()
            .flatten()
        {
            *p = base.join(&*p);
        }
        for v in [&mut d.embeddings.train, &mut d.embeddings.dev, &mut d.embeddings.test]
            .into_iter()
            .flatten()
        {
            v.vectors = base.join(&v.vectors);
            v.ids = base.join(&v.ids);
        }
        if let Some(m) = &cfg.model {
            m.validate().map_err(|e| RunError::Usage(e.to_string()))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Usage(format!("{}: {e}", path.display())))?;
        ProjectConfig::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn dep_format(&self) -> DepFormat {
        let mut f = match self.data.format {
            DepLayout::Compact => DepFormat::compact(),
            DepLayout::Conllx => DepFormat::conllx(),
        };
        f.labels = self.labels();
        f
    }

    pub fn labels(&self) -> LabelSet {
        self.data
            .labels
            .as_ref()
            .map_or_else(LabelSet::catib, |l| LabelSet::new(l.iter()))
    }
}

/// A file that was read, with its content hash.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

pub(crate) fn read_file(path: &Path) -> Result<(Vec<u8>, FileHash), RunError> {
    let bytes =
        std::fs::read(path).map_err(|e| RunError::Data(format!("{}: {e}", path.display())))?;
    let hash = FileHash {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    };
    Ok((bytes, hash))
}

/// Loaded resources shared by every command.
pub struct Resources {
    pub ctx: PromptContext,
    pub table: NormalizationTable,
    pub labels: LabelSet,
    pub format: DepFormat,
    pub sidecar: Option<GenreSidecar>,
    /// Hashes of the vocabulary, normalization and template inputs.
    pub hashes: Vec<FileHash>,
}

impl Resources {
    pub fn load(cfg: &ProjectConfig) -> Result<Self, RunError> {
        let mut hashes = Vec::new();
        let vocab = match &cfg.data.vocab {
            Some(p) => {
                let (bytes, h) = read_file(p)?;
                hashes.push(h);
                FeatureVocab::from_toml(&String::from_utf8_lossy(&bytes))
                    .map_err(|e| RunError::Data(format!("{}: {e}", p.display())))?
            }
            None => FeatureVocab::default(),
        };
        let table = match &cfg.data.normalization {
            Some(p) => {
                let (bytes, h) = read_file(p)?;
                hashes.push(h);
                NormalizationTable::from_toml(&String::from_utf8_lossy(&bytes))
                    .map_err(|e| RunError::Data(format!("{}: {e}", p.display())))?
            }
            None => NormalizationTable::default(),
        };
        let templates = match &cfg.data.templates {
            Some(dir) => Templates::load_dir(dir).map_err(|e| RunError::Data(e.to_string()))?,
            None => Templates::default(),
        };
        for task in Task::ALL {
            hashes.push(FileHash {
                path: format!("<template:{task}>"),
                sha256: sha256_hex(templates.get(task).as_bytes()),
            });
        }
        let sidecar = match &cfg.data.genres {
            Some(p) => {
                let (bytes, h) = read_file(p)?;
                hashes.push(h);
                Some(GenreSidecar::parse(&bytes).map_err(|e| RunError::Data(format!("{}: {e}", p.display())))?)
            }
            None => None,
        };
        Ok(Resources {
            ctx: PromptContext { templates, vocab },
            table,
            labels: cfg.labels(),
            format: cfg.dep_format(),
            sidecar,
            hashes,
        })
    }

    /// Reads the gold corpus a task uses for `split`.
    pub fn corpus(&self, cfg: &ProjectConfig, task: Task, split: Split) -> Result<(Corpus, FileHash), RunError> {
        let paths = if task.is_parsing() { &cfg.data.dep } else { &cfg.data.morph };
        let path = paths.get(split).ok_or_else(|| {
            RunError::Usage(format!(
                "no {} file configured for the {split} split",
                if task.is_parsing() { "dependency" } else { "morphology" }
            ))
        })?;
        let (bytes, hash) = read_file(path)?;
        let mut corpus = if task.is_parsing() {
            parse_dependency_file(&bytes, &self.format, split)
        } else {
            parse_morph_file(&bytes, &self.ctx.vocab, split)
        }
        .map_err(|e| RunError::Data(format!("{}: {e}", path.display())))?;
        if let Some(sidecar) = &self.sidecar {
            sidecar.apply(&mut corpus);
        }
        Ok((corpus, hash))
    }

    pub fn vectors(cfg: &ProjectConfig, split: Split) -> Result<Option<(VectorSet, Vec<FileHash>)>, RunError> {
        let e = &cfg.data.embeddings;
        let paths = match split {
            Split::Train => &e.train,
            Split::Dev => &e.dev,
            Split::Test => &e.test,
        };
        let Some(paths) = paths else { return Ok(None) };
        let (bytes, h1) = read_file(&paths.vectors)?;
        let (ids, h2) = read_file(&paths.ids)?;
        let set = VectorSet::read(&bytes, &String::from_utf8_lossy(&ids))
            .map_err(|e| RunError::Data(format!("{}: {e}", paths.vectors.display())))?;
        Ok(Some((set, vec![h1, h2])))
    }
}
