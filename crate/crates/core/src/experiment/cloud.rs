//! Synthetic point clouds: one row per (sample, generator) pair.

use std::fmt::Write as _;

use crate::data::Dataset;
use crate::engine::{argmax, GeneratorPopulation};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::nn::{mse_value, MlpNetwork};

#[derive(Debug, Clone, PartialEq)]
pub struct CloudRow {
    pub sample: usize,
    pub generator: usize,
    pub label: usize,
    /// Raw units.
    pub source: Vec<f64>,
    /// Raw units.
    pub synthetic: Vec<f64>,
    /// MSE in the classifier's input space, as used in training.
    pub mse: f64,
    /// Whether the classifier currently gets the synthetic point wrong.
    pub misclassified: bool,
    pub predicted: usize,
}

/// Rows are ordered by sample, then generator.
pub fn synthetic_cloud(
    pop: &GeneratorPopulation,
    ds: &Dataset,
    d: &MlpNetwork,
    exec: Exec,
) -> Result<Vec<CloudRow>> {
    let per_sample = exec.map(ds.len(), |i| -> Result<Vec<CloudRow>> {
        let s = &ds.samples()[i];
        let source = ds.raw_features(i);
        pop.generators()
            .enumerate()
            .map(|(k, g)| {
                let synth = g.predict(&s.features)?;
                let predicted = argmax(&d.predict(&synth)?);
                let mse = mse_value(&synth, &s.features);
                let synthetic = match ds.stats() {
                    Some(st) => st.invert(&synth),
                    None => synth,
                };
                Ok(CloudRow {
                    sample: i,
                    generator: k,
                    label: s.label,
                    source: source.clone(),
                    synthetic,
                    mse,
                    misclassified: predicted != s.label,
                    predicted,
                })
            })
            .collect()
    });
    let mut rows = Vec::with_capacity(ds.len() * pop.len());
    for r in per_sample {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Header `sample,generator,label,src_x0..,syn_x0..,mse,gate,predicted`.
pub fn cloud_to_csv(rows: &[CloudRow]) -> String {
    let dim = rows.first().map_or(0, |r| r.source.len());
    let mut out = String::from("sample,generator,label");
    for j in 0..dim {
        write!(out, ",src_x{j}").unwrap();
    }
    for j in 0..dim {
        write!(out, ",syn_x{j}").unwrap();
    }
    out.push_str(",mse,gate,predicted\n");
    for r in rows {
        write!(out, "{},{},{}", r.sample, r.generator, r.label).unwrap();
        for v in r.source.iter().chain(&r.synthetic) {
            write!(out, ",{v:?}").unwrap();
        }
        writeln!(out, ",{:?},{},{}", r.mse, u8::from(r.misclassified), r.predicted).unwrap();
    }
    out
}

pub fn cloud_from_csv(text: &str) -> Result<Vec<CloudRow>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let dim = header.split(',').filter(|h| h.starts_with("src_x")).count();
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |m: String| Error::Parse {
            line: idx + 2,
            message: m,
        };
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 + 2 * dim {
            return Err(err(format!("expected {} columns, found {}", 6 + 2 * dim, cols.len())));
        }
        let u = |s: &str| s.parse::<usize>().map_err(|e| err(format!("{s:?}: {e}")));
        let f = |s: &str| s.parse::<f64>().map_err(|e| err(format!("{s:?}: {e}")));
        rows.push(CloudRow {
            sample: u(cols[0])?,
            generator: u(cols[1])?,
            label: u(cols[2])?,
            source: cols[3..3 + dim].iter().map(|s| f(s)).collect::<Result<_>>()?,
            synthetic: cols[3 + dim..3 + 2 * dim].iter().map(|s| f(s)).collect::<Result<_>>()?,
            mse: f(cols[3 + 2 * dim])?,
            misclassified: u(cols[4 + 2 * dim])? == 1,
            predicted: u(cols[5 + 2 * dim])?,
        });
    }
    Ok(rows)
}
