use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

/// Per-feature affine map applied by [`Dataset::standardize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    pub fn apply(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn invert(&self, standardized: &[f64]) -> Vec<f64> {
        standardized
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(z, (m, s))| z * s + m)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature,mean,std\n");
        for (i, (m, s)) in self.mean.iter().zip(&self.std).enumerate() {
            writeln!(out, "{i},{m:?},{s:?}").unwrap();
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut mean = Vec::new();
        let mut std = Vec::new();
        for (idx, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            let parse = |s: &str| {
                s.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: idx + 1,
                    message: format!("{s:?}: {e}"),
                })
            };
            if cols.len() != 3 {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: "expected feature,mean,std".into(),
                });
            }
            mean.push(parse(cols[1])?);
            std.push(parse(cols[2])?);
        }
        Ok(Standardization { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    class_count: usize,
    feature_dim: usize,
    stats: Option<Standardization>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, class_count: usize) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Config("dataset must contain at least one sample".into()))?;
        let feature_dim = first.features.len();
        for s in &samples {
            if s.features.len() != feature_dim {
                return Err(Error::shape("sample features", feature_dim, s.features.len()));
            }
            if s.label >= class_count {
                return Err(Error::Label {
                    label: s.label,
                    classes: class_count,
                });
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric("non-finite feature value".into()));
            }
        }
        Ok(Dataset {
            samples,
            class_count,
            feature_dim,
            stats: None,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn stats(&self) -> Option<&Standardization> {
        self.stats.as_ref()
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// Features mapped back to raw units, if the set was standardized.
    pub fn raw_features(&self, i: usize) -> Vec<f64> {
        let f = &self.samples[i].features;
        match &self.stats {
            Some(st) => st.invert(f),
            None => f.clone(),
        }
    }

    /// Rescales every feature to zero mean and unit (population) variance.
    ///
    /// Standardizing an already standardized set composes the two maps, so
    /// the stored stats always describe the transform from the original
    /// raw units.
    pub fn standardize(&self) -> Result<Dataset> {
        let m = self.samples.len();
        if m < 2 {
            return Err(Error::Config("standardization needs at least two samples".into()));
        }
        let d = self.feature_dim;
        let mut mean = vec![0.0; d];
        for s in &self.samples {
            for (acc, v) in mean.iter_mut().zip(&s.features) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= m as f64);
        let mut var = vec![0.0; d];
        for s in &self.samples {
            for ((acc, v), mu) in var.iter_mut().zip(&s.features).zip(&mean) {
                *acc += (v - mu) * (v - mu);
            }
        }
        let std: Vec<f64> = var.iter().map(|v| (v / m as f64).sqrt()).collect();
        if let Some(j) = std.iter().position(|&s| s == 0.0 || !s.is_finite()) {
            return Err(Error::Config(format!("feature {j} has zero variance")));
        }
        let local = Standardization { mean, std };
        let samples = self
            .samples
            .iter()
            .map(|s| Sample {
                features: local.apply(&s.features),
                label: s.label,
            })
            .collect();
        let stats = match &self.stats {
            None => local,
            Some(prev) => Standardization {
                mean: prev
                    .mean
                    .iter()
                    .zip(&prev.std)
                    .zip(&local.mean)
                    .map(|((m0, s0), m1)| m0 + s0 * m1)
                    .collect(),
                std: prev.std.iter().zip(&local.std).map(|(s0, s1)| s0 * s1).collect(),
            },
        };
        Ok(Dataset {
            samples,
            class_count: self.class_count,
            feature_dim: d,
            stats: Some(stats),
        })
    }

    /// Header `x0,...,x{d-1},label`, one row per sample, shortest
    /// round-trip decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for j in 0..self.feature_dim {
            write!(out, "x{j},").unwrap();
        }
        out.push_str("label\n");
        for s in &self.samples {
            for v in &s.features {
                write!(out, "{v:?},").unwrap();
            }
            writeln!(out, "{}", s.label).unwrap();
        }
        out
    }

    /// Parses the format written by [`to_csv`](Self::to_csv). The class
    /// count is one more than the largest label.
    pub fn from_csv(text: &str) -> Result<Dataset> {
        let mut samples = Vec::new();
        for (idx, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let err = |message: String| Error::Parse {
                line: idx + 1,
                message,
            };
            let (label, feats) = cols.split_last().ok_or_else(|| err("empty row".into()))?;
            let label = label
                .parse::<usize>()
                .map_err(|e| err(format!("bad label {label:?}: {e}")))?;
            let features = feats
                .iter()
                .map(|c| c.parse::<f64>().map_err(|e| err(format!("bad value {c:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            samples.push(Sample { features, label });
        }
        let classes = samples.iter().map(|s| s.label + 1).max().unwrap_or(0);
        Dataset::new(samples, classes)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Bounding box of the raw-unit features, per dimension.
    pub fn raw_bounds(&self) -> Vec<(f64, f64)> {
        let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); self.feature_dim];
        for i in 0..self.len() {
            for (b, v) in bounds.iter_mut().zip(self.raw_features(i)) {
                b.0 = b.0.min(v);
                b.1 = b.1.max(v);
            }
        }
        bounds
    }
}
