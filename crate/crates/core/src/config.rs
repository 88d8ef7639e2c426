//! Sectioned TOML experiment configuration.
//!
//! ```toml
//! [train]
//! epochs = 30
//! window = { max_w = 5, max_h = 5 }
//!
//! [network]
//! residual_blocks = 4
//!
//! [synthetic]
//! classes = 20
//!
//! [data]
//! test_per_class = 2
//!
//! [eval]
//! aggregation = "min"
//! ```
//!
//! Every section and field is optional; omitted values take their defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{import_dataset, DatasetSplit, LabeledDataset};
use crate::error::{Error, Result};
use crate::eval::Protocol;
use crate::nn::Architecture;
use crate::synth::{generate, SyntheticSpec};
use crate::train::TrainConfig;

/// Where images come from and how they are split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Directory laid out as `<root>/<class>/<sample>.pgm`; synthetic data when absent.
    pub dir: Option<PathBuf>,
    /// Resize every imported image to `[width, height]`.
    pub resize: Option<[usize; 2]>,
    /// Held-out samples per class (the last ones in sample order).
    pub test_per_class: usize,
    /// When > 0, hold out whole classes instead (the last ones).
    pub test_classes: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dir: None,
            resize: None,
            test_per_class: 2,
            test_classes: 0,
        }
    }
}

impl DataConfig {
    pub fn load(&self, synthetic: &SyntheticSpec) -> Result<LabeledDataset> {
        match &self.dir {
            Some(dir) => import_dataset(dir, self.resize.map(|[w, h]| (w, h))),
            None => generate(synthetic),
        }
    }

    pub fn split(&self, ds: &LabeledDataset) -> DatasetSplit {
        if self.test_classes > 0 {
            ds.split_by_classes(self.test_classes)
        } else {
            ds.split_by_samples(self.test_per_class)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub network: Architecture,
    pub synthetic: SyntheticSpec,
    pub data: DataConfig,
    pub eval: Protocol,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.network.validate()?;
        if self.data.dir.is_none() {
            self.synthetic.validate()?;
            let w = self.train.window;
            self.synthetic.check_window(w.max_w.min(w.max_h))?;
        }
        if let Some([w, h]) = self.data.resize {
            if w == 0 || h == 0 || w % 4 != 0 || h % 4 != 0 {
                return Err(Error::Config(format!("data: resize {w}x{h} must be non-zero and divisible by 4")));
            }
        }
        Ok(())
    }
}
