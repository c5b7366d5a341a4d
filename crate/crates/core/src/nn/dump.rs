//! Text model dumps.
//!
//! ```text
//! mlp v1
//! 2 50 50 50 2
//! 0.123456789
//! ...
//! ```
//!
//! The second line lists the layer dims separated by single spaces. Every
//! following line holds one parameter in the flat ordering documented on
//! [`MlpNetwork`], printed in shortest round-trip decimal form so loading
//! restores the exact bits. Output mode and dropout are not stored; the
//! caller supplies them on load.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::network::{param_count, MlpNetwork, OutputMode};

pub const HEADER: &str = "mlp v1";

pub fn to_string(net: &MlpNetwork) -> String {
    let mut out = String::with_capacity(net.params().len() * 22 + 32);
    out.push_str(HEADER);
    out.push('\n');
    let dims: Vec<String> = net.dims().iter().map(|d| d.to_string()).collect();
    out.push_str(&dims.join(" "));
    out.push('\n');
    for p in net.params() {
        writeln!(out, "{p:?}").expect("writing to a String cannot fail");
    }
    out
}

pub fn parse(text: &str, output_mode: OutputMode) -> Result<MlpNetwork> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == HEADER => {}
        other => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected '{HEADER}' header, found {:?}", other.map(|(_, l)| l)),
            })
        }
    }
    let (_, dims_line) = lines.next().ok_or(Error::Parse {
        line: 2,
        message: "missing layer dims".into(),
    })?;
    let dims = dims_line
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Parse {
            line: 2,
            message: format!("bad layer dims: {e}"),
        })?;
    let mut params = Vec::with_capacity(param_count(&dims));
    for (idx, line) in lines {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v = t.parse::<f64>().map_err(|e| Error::Parse {
            line: idx + 1,
            message: format!("bad parameter {t:?}: {e}"),
        })?;
        params.push(v);
    }
    MlpNetwork::from_params(&dims, output_mode, 0.0, params)
}

pub fn save(net: &MlpNetwork, path: &Path) -> Result<()> {
    fs::write(path, to_string(net)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path, output_mode: OutputMode) -> Result<MlpNetwork> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text, output_mode)
}
