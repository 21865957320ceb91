//! Experiment configuration, read from JSON.
//!
//! Every field except `data` has a default. A minimal config:
//!
//! ```json
//! { "data": { "synthetic": { "n_subjects": 40, "scans_per_class": [9, 13, 16, 14, 12, 14, 20] } } }
//! ```
//!
//! `data` is either `{"synthetic": <SynthConfig>}` or
//! `{"csv": {"path": "...", "class_names": [...]}}`. Relative paths are
//! resolved against the current directory.

use std::path::{Path, PathBuf};

use neurodecode_core::analysis::Linkage;
use neurodecode_core::data::{self, Dataset, SynthConfig};
use neurodecode_core::network::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    /// Hidden-layer widths of each model; `[]` is softmax regression.
    #[serde(default = "default_architectures")]
    pub architectures: Vec<Vec<usize>>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub psa: PsaConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Master seed; every other seed except the synthetic generator's is derived from it.
    #[serde(default)]
    pub seed: u64,
}

fn default_architectures() -> Vec<Vec<usize>> {
    vec![vec![], vec![500], vec![500, 500], vec![500, 500, 500]]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic(SynthConfig),
    Csv {
        path: PathBuf,
        #[serde(default)]
        class_names: Option<Vec<String>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub n_test: usize,
    pub n_valid: usize,
    /// Training subjects per fold; all remaining subjects when absent.
    pub n_train: Option<usize>,
    /// Training-set sizes for `sweep`.
    pub m_values: Vec<usize>,
    pub folds: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { n_test: 10, n_valid: 10, n_train: None, m_values: vec![10, 20, 40, 80], folds: 10 }
    }
}

/// Which split of the first fold supplies the reference distribution for PSA.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceSet {
    #[default]
    Test,
    Valid,
    Train,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsaConfig {
    pub m: usize,
    pub reference: ReferenceSet,
    pub linkage: Linkage,
}

impl Default for PsaConfig {
    fn default() -> Self {
        PsaConfig { m: 3, reference: ReferenceSet::Test, linkage: Linkage::Average }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let config: ExperimentConfig = io::read_json(path)?;
        config.validate()?;
        Ok(config)
    }

    /// Checks that do not need the dataset.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.architectures.is_empty() {
            return bad("architectures is empty".into());
        }
        if let Some(a) = self.architectures.iter().find(|a| a.contains(&0)) {
            return bad(format!("architecture {a:?} has a zero-width layer"));
        }
        self.train.validate()?;
        if let DataSource::Synthetic(s) = &self.data {
            s.validate()?;
        }
        let s = &self.split;
        if s.folds == 0 || s.n_test == 0 || s.n_valid == 0 {
            return bad("split.folds, split.n_test and split.n_valid must be at least 1".into());
        }
        if s.n_train == Some(0) || s.m_values.contains(&0) {
            return bad("training sets need at least one subject".into());
        }
        if self.psa.m == 0 {
            return bad("psa.m must be at least 1".into());
        }
        Ok(())
    }

    /// Checks against the subject count of the loaded dataset.
    pub fn validate_for(&self, subjects: usize) -> Result<()> {
        let s = &self.split;
        if s.folds * s.n_test > subjects {
            return Err(Error::Config(format!(
                "{} folds of {} test subjects need {} subjects but the dataset has {subjects}",
                s.folds,
                s.n_test,
                s.folds * s.n_test
            )));
        }
        let train = self.n_train(subjects);
        if s.n_test + s.n_valid + train > subjects || train == 0 {
            return Err(Error::Config(format!(
                "{} test + {} validation + {train} training subjects do not fit in {subjects}",
                s.n_test, s.n_valid
            )));
        }
        Ok(())
    }

    pub fn n_train(&self, subjects: usize) -> usize {
        let s = &self.split;
        s.n_train.unwrap_or_else(|| subjects.saturating_sub(s.n_test + s.n_valid))
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        let dataset = match &self.data {
            DataSource::Synthetic(s) => data::synthesize(s)?,
            DataSource::Csv { path, class_names } => io::read_dataset(path, class_names.clone())?,
        };
        self.validate_for(dataset.subjects().len())?;
        Ok(dataset)
    }
}
