//! Run configuration.
//!
//! Configs are TOML: flat `key = value` pairs grouped under section
//! headers. A complete example, identical to the `iris-bonpp` preset:
//!
//! ```toml
//! name = "iris-bonpp"
//!
//! [dataset]
//! kind = "iris"            # or "constructed"
//! path = "@builtin"        # bundled copy; any file path works too
//! features = [0, 1]        # sepal length, sepal width
//! standardize = true
//!
//! [classifier]
//! dims = [2, 100, 100, 50, 3]
//! dropout = 0.0            # only meaningful for baselines
//!
//! [generator]
//! dims = [2, 50, 50, 50, 2]
//!
//! [training]
//! mode = "bonpp"           # bon | bonpp | baseline
//! generators = 100
//! alpha = 2.0
//! beta = 1.025
//! lr_d = 0.001
//! lr_g = 0.0001
//! batch_size = 10
//! epochs = 1000
//! seed = 0
//! momentum = 0.0
//! gate_timing = "post_update"    # or "pre_update"
//! normalize_synthetic = false
//! batch_reduction = "mean"       # or "sum"
//! mas_update = "proximal"        # or "explicit"
//! exec = "parallel"              # or "sequential"; results are identical
//!
//! [export]
//! grid_resolution = 200
//! grid_margin = 0.15
//! cloud_epochs = []
//! ```
//!
//! A constructed dataset replaces the iris keys with a `[dataset.spec]`
//! table holding `seed`, two `[[dataset.spec.blobs]]` entries (`center`,
//! `spread`, `count`) and any number of `[[dataset.spec.outliers]]`
//! entries (`point`, `label`).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{make_constructed, parse_iris, ConstructedSpec, Dataset, BUNDLED_IRIS};
use crate::engine::{BatchReduction, BonConfig, Mode};
use crate::error::{Error, Result};

/// Path value selecting the Iris table bundled with the crate.
pub const BUILTIN_IRIS: &str = "@builtin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSelector {
    Iris {
        path: String,
        features: [usize; 2],
        #[serde(default = "default_true")]
        standardize: bool,
    },
    Constructed {
        #[serde(default)]
        standardize: bool,
        spec: ConstructedSpec,
    },
}

fn default_true() -> bool {
    true
}

impl DatasetSelector {
    pub fn load(&self) -> Result<Dataset> {
        let (ds, standardize) = match self {
            DatasetSelector::Iris {
                path,
                features,
                standardize,
            } => {
                let text = if path == BUILTIN_IRIS {
                    BUNDLED_IRIS.to_string()
                } else {
                    fs::read_to_string(path).map_err(|e| Error::io(path, e))?
                };
                (parse_iris(&text, (features[0], features[1]))?, *standardize)
            }
            DatasetSelector::Constructed { spec, standardize } => (make_constructed(spec)?, *standardize),
        };
        if standardize {
            ds.standardize()
        } else {
            Ok(ds)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierSpec {
    pub dims: Vec<usize>,
    #[serde(default)]
    pub dropout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub dims: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExportSpec {
    pub grid_resolution: usize,
    /// Fraction of the data range added on each side of the grid.
    pub grid_margin: f64,
    /// Completed-epoch counts at which synthetic clouds and model
    /// snapshots are written.
    pub cloud_epochs: Vec<usize>,
}

impl Default for ExportSpec {
    fn default() -> Self {
        ExportSpec {
            grid_resolution: 200,
            grid_margin: 0.15,
            cloud_epochs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub dataset: DatasetSelector,
    pub classifier: ClassifierSpec,
    pub generator: GeneratorSpec,
    pub training: BonConfig,
    #[serde(default)]
    pub export: ExportSpec,
}

pub const PRESETS: &[&str] = &[
    "iris-bonpp",
    "iris-baseline",
    "constructed-bon",
    "constructed-bonpp",
    "constructed-baseline",
];

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config is always serializable")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// The Iris experiment with the published hyperparameters.
    pub fn iris_bonpp() -> Self {
        RunConfig {
            name: "iris-bonpp".into(),
            dataset: DatasetSelector::Iris {
                path: BUILTIN_IRIS.into(),
                features: [0, 1],
                standardize: true,
            },
            classifier: ClassifierSpec {
                dims: vec![2, 100, 100, 50, 3],
                dropout: 0.0,
            },
            generator: GeneratorSpec {
                dims: vec![2, 50, 50, 50, 2],
            },
            training: BonConfig {
                mode: Mode::Bonpp,
                generators: 100,
                alpha: 2.0,
                beta: 1.025,
                lr_d: 0.001,
                lr_g: 0.0001,
                // summing 101 loss terms over 10 samples at this rate
                // blows the classifier up after about 200 epochs
                batch_reduction: BatchReduction::Mean,
                batch_size: 10,
                epochs: 1000,
                ..BonConfig::default()
            },
            export: ExportSpec::default(),
        }
    }

    /// The Iris classifier alone, trained identically, with dropout `p`.
    pub fn iris_baseline(dropout: f64) -> Self {
        let mut cfg = Self::iris_bonpp();
        cfg.name = format!("iris-baseline-{dropout}");
        cfg.classifier.dropout = dropout;
        cfg.training.mode = Mode::Baseline;
        cfg
    }

    /// The two-blob set with one outlier, trained for 500 epochs.
    ///
    /// The classifier learns slowly (`lr_d = 1e-6`) so that most points stay
    /// misclassified for the first epochs. Generators then train on nearly
    /// every sample, which is the regime where their output collapses.
    pub fn constructed(mode: Mode) -> Self {
        let mut training = BonConfig {
            mode,
            generators: 10,
            alpha: 2.0,
            beta: 1.025,
            lr_d: 1e-6,
            lr_g: 1e-3,
            batch_size: 10,
            epochs: 500,
            ..BonConfig::default()
        };
        if mode == Mode::Bon {
            training.alpha = 1.0;
        }
        let name = match mode {
            Mode::Bon => "constructed-bon",
            Mode::Bonpp => "constructed-bonpp",
            Mode::Baseline => "constructed-baseline",
        };
        RunConfig {
            name: name.into(),
            dataset: DatasetSelector::Constructed {
                standardize: false,
                spec: ConstructedSpec::default(),
            },
            classifier: ClassifierSpec {
                dims: vec![2, 100, 100, 50, 2],
                dropout: 0.0,
            },
            generator: GeneratorSpec {
                dims: vec![2, 50, 50, 50, 2],
            },
            training,
            export: ExportSpec {
                cloud_epochs: if mode.uses_generators() { vec![50, 150, 500] } else { Vec::new() },
                ..ExportSpec::default()
            },
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        Some(match name {
            "iris-bonpp" => Self::iris_bonpp(),
            "iris-baseline" => Self::iris_baseline(0.0),
            "constructed-bon" => Self::constructed(Mode::Bon),
            "constructed-bonpp" => Self::constructed(Mode::Bonpp),
            "constructed-baseline" => Self::constructed(Mode::Baseline),
            _ => return None,
        })
    }

    /// Checks everything that can be checked without loading data.
    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        let c = &self.classifier.dims;
        if c.len() < 2 || c.contains(&0) {
            return Err(Error::Config(format!("bad classifier dims {c:?}")));
        }
        if !(0.0..1.0).contains(&self.classifier.dropout) {
            return Err(Error::Config(format!(
                "dropout must lie in [0, 1), got {}",
                self.classifier.dropout
            )));
        }
        let g = &self.generator.dims;
        if self.training.mode.uses_generators() {
            if g.len() < 2 || g.contains(&0) {
                return Err(Error::Config(format!("bad generator dims {g:?}")));
            }
            if g[0] != c[0] || g[g.len() - 1] != c[0] {
                return Err(Error::Config(format!(
                    "generator dims {g:?} must map the classifier input dim {} to itself",
                    c[0]
                )));
            }
        }
        if self.export.grid_resolution < 2 {
            return Err(Error::Config("grid resolution must be at least 2".into()));
        }
        if !(self.export.grid_margin >= 0.0) {
            return Err(Error::Config("grid margin must be non-negative".into()));
        }
        if let Some(e) = self
            .export
            .cloud_epochs
            .iter()
            .find(|&&e| e == 0 || e > self.training.epochs)
        {
            return Err(Error::Config(format!(
                "cloud epoch {e} outside 1..={}",
                self.training.epochs
            )));
        }
        if let DatasetSelector::Iris { features, .. } = &self.dataset {
            if features.iter().any(|&f| f >= 4) {
                return Err(Error::Config(format!("iris feature indices {features:?} out of range")));
            }
        }
        Ok(())
    }

    /// Loads the dataset and checks it against the network shapes.
    pub fn load_dataset(&self) -> Result<Dataset> {
        let ds = self.dataset.load()?;
        let c = &self.classifier.dims;
        if c[0] != ds.feature_dim() || c[c.len() - 1] != ds.class_count() {
            return Err(Error::Config(format!(
                "classifier dims {c:?} do not fit {} features and {} classes",
                ds.feature_dim(),
                ds.class_count()
            )));
        }
        if self.training.batch_size > ds.len() {
            return Err(Error::Config(format!(
                "batch size {} exceeds dataset size {}",
                self.training.batch_size,
                ds.len()
            )));
        }
        Ok(ds)
    }
}
