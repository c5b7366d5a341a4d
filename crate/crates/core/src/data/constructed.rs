//! Seeded two-class blob dataset with explicit outliers.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::dataset::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub center: [f64; 2],
    pub spread: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outlier {
    pub point: [f64; 2],
    pub label: usize,
}

/// One isotropic Gaussian blob per class (blob index = label), followed by
/// the outliers in listed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstructedSpec {
    pub blobs: [Blob; 2],
    #[serde(default)]
    pub outliers: Vec<Outlier>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ConstructedSpec {
    fn default() -> Self {
        ConstructedSpec {
            blobs: [
                Blob {
                    center: [-1.0, -1.0],
                    spread: 0.5,
                    count: 50,
                },
                Blob {
                    center: [1.0, 1.0],
                    spread: 0.5,
                    count: 50,
                },
            ],
            outliers: vec![Outlier {
                point: [-1.2, -0.8],
                label: 1,
            }],
            seed: 0,
        }
    }
}

pub fn make_constructed(spec: &ConstructedSpec) -> Result<Dataset> {
    let mut rng = seed::derived_rng(spec.seed, &[seed::TAG_DATASET]);
    let mut samples = Vec::new();
    for (label, blob) in spec.blobs.iter().enumerate() {
        if !(blob.spread >= 0.0) || !blob.spread.is_finite() {
            return Err(Error::Config(format!(
                "blob {label} spread must be a finite non-negative number, got {}",
                blob.spread
            )));
        }
        for _ in 0..blob.count {
            let features = blob
                .center
                .iter()
                .map(|c| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    c + blob.spread * z
                })
                .collect();
            samples.push(Sample { features, label });
        }
    }
    for o in &spec.outliers {
        if o.label >= 2 {
            return Err(Error::Label {
                label: o.label,
                classes: 2,
            });
        }
        samples.push(Sample {
            features: o.point.to_vec(),
            label: o.label,
        });
    }
    Dataset::new(samples, 2)
}
