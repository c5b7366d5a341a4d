//! Iris CSV ingestion: four numeric columns followed by the species name.

use std::fs;
use std::path::Path;

use crate::data::dataset::{Dataset, Sample};
use crate::error::{Error, Result};

/// The canonical 150-row Iris table, bundled with the crate.
pub const BUNDLED_IRIS: &str = include_str!("../../data/iris.csv");

/// Reads an Iris file, keeping the two feature columns named by
/// `feature_indices`. Species map to labels in order of first appearance.
pub fn load_iris(path: &Path, feature_indices: (usize, usize)) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_iris(&text, feature_indices)
}

pub fn parse_iris(text: &str, (fa, fb): (usize, usize)) -> Result<Dataset> {
    if fa >= 4 || fb >= 4 {
        return Err(Error::Config(format!(
            "feature indices ({fa}, {fb}) out of range for 4 columns"
        )));
    }
    let mut species: Vec<String> = Vec::new();
    let mut samples = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            line: idx + 1,
            message,
        };
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 5 {
            return Err(err(format!("expected 5 columns, found {}", cols.len())));
        }
        let mut values = [0.0f64; 4];
        for (v, c) in values.iter_mut().zip(&cols[..4]) {
            *v = c
                .parse::<f64>()
                .map_err(|e| err(format!("bad value {c:?}: {e}")))?;
        }
        let name = cols[4];
        let label = match species.iter().position(|s| s == name) {
            Some(l) => l,
            None => {
                species.push(name.to_string());
                species.len() - 1
            }
        };
        samples.push(Sample {
            features: vec![values[fa], values[fb]],
            label,
        });
    }
    let classes = species.len();
    Dataset::new(samples, classes)
}
