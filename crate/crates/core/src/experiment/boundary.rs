//! Dense classifier evaluation over a 2D grid.

use std::fmt::Write as _;

use crate::data::Standardization;
use crate::engine::argmax;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::nn::MlpNetwork;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub resolution: usize,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub x1: f64,
    pub x2: f64,
    pub class: usize,
    pub probs: Vec<f64>,
}

/// Cells are stored row by row: `x2` is the outer index, `x1` the inner.
/// Coordinates are in raw (unstandardized) units.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryGrid {
    pub x1_range: (f64, f64),
    pub x2_range: (f64, f64),
    pub resolution: usize,
    pub cells: Vec<GridCell>,
}

fn axis(lo: f64, hi: f64, r: usize) -> Vec<f64> {
    (0..r).map(|i| lo + (hi - lo) * i as f64 / (r - 1) as f64).collect()
}

/// Evaluates `d` on an `R x R` grid covering `bounds` (raw units) widened
/// by `margin` times the range on every side. `stats` maps raw coordinates
/// into the classifier's input space.
pub fn boundary_grid(
    d: &MlpNetwork,
    bounds: &[(f64, f64)],
    stats: Option<&Standardization>,
    spec: GridSpec,
    exec: Exec,
) -> Result<BoundaryGrid> {
    if d.input_dim() != 2 {
        return Err(Error::UnsupportedDimension(d.input_dim()));
    }
    if bounds.len() != 2 {
        return Err(Error::UnsupportedDimension(bounds.len()));
    }
    if spec.resolution < 2 {
        return Err(Error::Config("grid resolution must be at least 2".into()));
    }
    let widen = |(lo, hi): (f64, f64)| {
        let pad = (hi - lo) * spec.margin;
        (lo - pad, hi + pad)
    };
    let (r1, r2) = (widen(bounds[0]), widen(bounds[1]));
    let xs = axis(r1.0, r1.1, spec.resolution);
    let ys = axis(r2.0, r2.1, spec.resolution);
    let rows = exec.map(spec.resolution, |row| -> Result<Vec<GridCell>> {
        let x2 = ys[row];
        xs.iter()
            .map(|&x1| {
                let raw = [x1, x2];
                let input = match stats {
                    Some(st) => st.apply(&raw),
                    None => raw.to_vec(),
                };
                let probs = d.predict(&input)?;
                Ok(GridCell {
                    x1,
                    x2,
                    class: argmax(&probs),
                    probs,
                })
            })
            .collect()
    });
    let mut cells = Vec::with_capacity(spec.resolution * spec.resolution);
    for r in rows {
        cells.extend(r?);
    }
    Ok(BoundaryGrid {
        x1_range: r1,
        x2_range: r2,
        resolution: spec.resolution,
        cells,
    })
}

impl BoundaryGrid {
    pub fn class_count(&self) -> usize {
        self.cells.first().map_or(0, |c| c.probs.len())
    }

    /// Header `x1,x2,class,p0,...`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x1,x2,class");
        for j in 0..self.class_count() {
            write!(out, ",p{j}").unwrap();
        }
        out.push('\n');
        for c in &self.cells {
            write!(out, "{:?},{:?},{}", c.x1, c.x2, c.class).unwrap();
            for p in &c.probs {
                write!(out, ",{p:?}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut cells = Vec::new();
        for (idx, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let err = |m: String| Error::Parse {
                line: idx + 1,
                message: m,
            };
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() < 4 {
                return Err(err("expected x1,x2,class and probabilities".into()));
            }
            let f = |s: &str| s.parse::<f64>().map_err(|e| err(format!("{s:?}: {e}")));
            cells.push(GridCell {
                x1: f(cols[0])?,
                x2: f(cols[1])?,
                class: cols[2].parse().map_err(|e| err(format!("class: {e}")))?,
                probs: cols[3..].iter().map(|s| f(s)).collect::<Result<_>>()?,
            });
        }
        let resolution = (cells.len() as f64).sqrt().round() as usize;
        if resolution * resolution != cells.len() || resolution < 2 {
            return Err(Error::Config(format!("{} cells do not form a square grid", cells.len())));
        }
        let first = &cells[0];
        let last = &cells[cells.len() - 1];
        Ok(BoundaryGrid {
            x1_range: (first.x1, last.x1),
            x2_range: (first.x2, last.x2),
            resolution,
            cells,
        })
    }

    /// Number of cells predicted as `class` whose centre lies within
    /// `radius` of `center`.
    pub fn count_class_within(&self, center: [f64; 2], radius: f64, class: usize) -> usize {
        self.cells
            .iter()
            .filter(|c| c.class == class)
            .filter(|c| (c.x1 - center[0]).hypot(c.x2 - center[1]) <= radius)
            .count()
    }
}
