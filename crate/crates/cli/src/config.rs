use std::path::{Path, PathBuf};

use flan::data::{
    generate, load_delimited, load_idx_images, load_sequences, tokenize_sequences, Alphabet, DatasetSchema,
    LoadOptions, SplitSpec, SyntheticSpec,
};
use flan::interpret::Provider;
use flan::metrics::MetricsConfig;
use flan::model::{EncoderSpec, FlanModel, OutputKind, PredictorSpec};
use flan::train::TrainConfig;
use flan::{Dataset64, Flan64, Rng};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Where the rows come from. Relative paths are resolved against the
/// directory of the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum Source {
    Delimited {
        path: PathBuf,
        schema: DatasetSchema,
    },
    Synthetic {
        spec: SyntheticSpec,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        patch: usize,
    },
    /// CSV with `first,second,label` columns; `max-lens[1] = 0` for
    /// single sequences.
    Sequences {
        path: PathBuf,
        alphabet: String,
        #[serde(rename = "max-lens")]
        max_lens: (usize, usize),
    },
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TaskConfig {
    pub source: Source,
    #[serde(default)]
    pub split: SplitSpec,
    /// Standardize numeric columns of delimited sources.
    #[serde(default = "default_true")]
    pub standardize: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder: EncoderSpec,
    pub predictor: PredictorSpec,
    pub output: OutputKind,
}

fn default_providers() -> Vec<Provider> {
    Provider::ALL.to_vec()
}

fn default_top_k() -> usize {
    5
}

fn default_ig_steps() -> usize {
    64
}

fn default_neighbors() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct InterpretConfig {
    #[serde(default = "default_providers")]
    pub providers: Vec<Provider>,
    /// Features kept in partial predictions and matched against examples.
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_ig_steps")]
    pub ig_steps: usize,
    #[serde(default = "default_neighbors")]
    pub neighbors: usize,
    /// Rows to explain; empty means the first five test rows.
    #[serde(default)]
    pub samples: Vec<usize>,
}

impl Default for InterpretConfig {
    fn default() -> Self {
        Self {
            providers: default_providers(),
            top_k: default_top_k(),
            ig_steps: default_ig_steps(),
            neighbors: default_neighbors(),
            samples: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RunConfig {
    pub task: TaskConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    #[serde(default)]
    pub interpret: InterpretConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    pub seeds: Vec<u64>,
}

/// A parsed config and the directory its relative paths refer to.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            CliError::config(field, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<LoadedConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let config = Self::from_json(&text)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig { config, base_dir })
    }

    /// Checks every block; nothing is computed before this passes.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(CliError::config("seeds", "at least one seed is required"));
        }
        for (i, s) in self.seeds.iter().enumerate() {
            if self.seeds[..i].contains(s) {
                return Err(CliError::config("seeds", format!("seed {s} repeated")));
            }
        }
        self.task.split.validate()?;
        match &self.task.source {
            Source::Delimited { schema, .. } => {
                if schema.columns.is_empty() {
                    return Err(CliError::config("task.source.schema.columns", "no columns"));
                }
                schema.partition()?;
            }
            Source::Synthetic { spec } => spec.validate()?,
            Source::Idx { patch, .. } if *patch == 0 => {
                return Err(CliError::config("task.source.patch", "must be positive"));
            }
            Source::Sequences { alphabet, max_lens, .. } => {
                Alphabet::new(alphabet)?;
                if max_lens.0 == 0 {
                    return Err(CliError::config("task.source.max-lens", "first length must be positive"));
                }
            }
            Source::Idx { .. } => {}
        }
        self.model.encoder.validate()?;
        if self.model.output.outputs() == 0 {
            return Err(CliError::config("model.output", "needs at least one output"));
        }
        if let OutputKind::ClassLogits { classes } = self.model.output {
            if classes < 2 {
                return Err(CliError::config("model.output.classes", "needs at least two classes"));
            }
        }
        self.train.validate()?;
        self.metrics.validate()?;
        let i = &self.interpret;
        if i.providers.is_empty() {
            return Err(CliError::config("interpret.providers", "at least one provider is required"));
        }
        if i.ig_steps == 0 {
            return Err(CliError::config("interpret.ig-steps", "must be positive"));
        }
        if i.top_k == 0 || i.neighbors == 0 {
            return Err(CliError::config("interpret", "top-k and neighbors must be positive"));
        }
        Ok(())
    }

    /// SHA-256 of the task block as written: identifies the data a
    /// checkpoint was trained on.
    pub fn task_hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.task).expect("task block serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn with_seed_override(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.seeds = vec![s];
        }
        self
    }
}

impl LoadedConfig {
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Dataset for one run: the split (and any standardization fitted on
    /// it) depends on `seed` unless the split fixes its own seed.
    pub fn dataset(&self, seed: u64) -> Result<Dataset64> {
        let task = &self.config.task;
        let data = match &task.source {
            Source::Delimited { path, schema } => load_delimited(
                self.resolve(path),
                schema,
                &LoadOptions {
                    split: task.split.clone(),
                    standardize: task.standardize,
                    seed,
                },
            )?,
            Source::Synthetic { spec } => generate(spec)?.resplit(&task.split, seed)?,
            Source::Idx { images, labels, patch } => {
                load_idx_images(self.resolve(images), self.resolve(labels), *patch, &task.split, seed)?
            }
            Source::Sequences {
                path,
                alphabet,
                max_lens,
            } => tokenize_sequences(
                &load_sequences(self.resolve(path))?,
                &Alphabet::new(alphabet)?,
                *max_lens,
                &task.split,
                seed,
            )?,
        };
        if let (OutputKind::BinaryLogit | OutputKind::ClassLogits { .. }, Some(labels)) =
            (self.config.model.output, data.class_labels())
        {
            let classes = self.config.model.output.classes();
            if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
                return Err(CliError::config(
                    "model.output",
                    format!("label {bad} does not fit a {classes}-class output"),
                ));
            }
        }
        Ok(data)
    }

    /// Freshly initialised model for `seed`.
    pub fn init_model(&self, data: &Dataset64, seed: u64) -> Result<Flan64> {
        let m = &self.config.model;
        Ok(FlanModel::new(
            data.partition.clone(),
            m.encoder.clone(),
            m.predictor.clone(),
            m.output,
            &mut Rng::stream(seed, 1),
        )?)
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.config.train.clone()
        }
    }
}
