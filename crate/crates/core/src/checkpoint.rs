//! Plain-text parameter fragments.
//!
//! ```text
//! block <name> <ndim> <dim0> <dim1> ...
//! <row-major values, one row of the last axis per line>
//! ```
//!
//! Values are written with 17 significant digits, which round-trips every
//! `f64` exactly. Optimizer state is stored in sibling blocks named
//! `<name>:m`, `<name>:v` and `<name>:t`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::nn::{ParamBlock, Parameterized};

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint at line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("checkpoint has no block named {0}")]
    MissingBlock(String),
    #[error("block {name} has shape {found:?}, expected {expected:?}")]
    ShapeMismatch { name: String, expected: Vec<usize>, found: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawBlock {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_block(out: &mut String, name: &str, shape: &[usize], values: &[f64]) {
    let dims: Vec<String> = shape.iter().map(usize::to_string).collect();
    let _ = writeln!(out, "block {name} {} {}", shape.len(), dims.join(" "));
    let row = shape.last().copied().unwrap_or(1).max(1);
    for chunk in values.chunks(row) {
        let line: Vec<String> = chunk.iter().map(|&v| format_value(v)).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    if values.is_empty() {
        out.push('\n');
    }
}

/// Serialises every block of `model`, optionally with Adam state.
pub fn encode_params<M: Parameterized + ?Sized>(model: &M, with_optimizer: bool) -> String {
    let mut out = String::new();
    model.visit(&mut |b| {
        write_block(&mut out, &b.name, &b.shape, &b.values);
        if with_optimizer {
            write_block(&mut out, &format!("{}:m", b.name), &b.shape, &b.adam_m);
            write_block(&mut out, &format!("{}:v", b.name), &b.shape, &b.adam_v);
            write_block(&mut out, &format!("{}:t", b.name), &[1], &[b.step_count as f64]);
        }
    });
    out
}

pub fn parse_blocks(text: &str) -> Result<BTreeMap<String, RawBlock>, CheckpointError> {
    let mut blocks = BTreeMap::new();
    let mut lines = text.lines().enumerate().peekable();
    while let Some((ln, line)) = lines.next() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let malformed = |message: &str| CheckpointError::Malformed { line: ln + 1, message: message.to_string() };
        let mut parts = line.split_whitespace();
        if parts.next() != Some("block") {
            return Err(malformed("expected `block` header"));
        }
        let name = parts.next().ok_or_else(|| malformed("missing block name"))?.to_string();
        let ndim: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| malformed("bad ndim"))?;
        let shape: Vec<usize> = parts.map(|s| s.parse::<usize>()).collect::<Result<_, _>>().map_err(|_| malformed("bad dims"))?;
        if shape.len() != ndim {
            return Err(malformed("dimension count mismatch"));
        }
        let expected: usize = shape.iter().product();
        let mut values = Vec::with_capacity(expected);
        while values.len() < expected {
            let (vl, vline) = lines.next().ok_or_else(|| malformed("truncated values"))?;
            for tok in vline.split_whitespace() {
                values.push(tok.parse::<f64>().map_err(|_| CheckpointError::Malformed {
                    line: vl + 1,
                    message: format!("bad value {tok:?}"),
                })?);
            }
        }
        if values.len() != expected {
            return Err(malformed("value count mismatch"));
        }
        blocks.insert(name, RawBlock { shape, values });
    }
    Ok(blocks)
}

/// Copies stored values (and optimizer state, when present) into the
/// identically named blocks of `model`.
pub fn load_params<M: Parameterized + ?Sized>(
    model: &mut M,
    blocks: &BTreeMap<String, RawBlock>,
) -> Result<(), CheckpointError> {
    let mut failure = None;
    model.visit_mut(&mut |b: &mut ParamBlock| {
        if failure.is_some() {
            return;
        }
        match blocks.get(&b.name) {
            None => failure = Some(CheckpointError::MissingBlock(b.name.clone())),
            Some(raw) if raw.shape != b.shape => {
                failure = Some(CheckpointError::ShapeMismatch {
                    name: b.name.clone(),
                    expected: b.shape.clone(),
                    found: raw.shape.clone(),
                })
            }
            Some(raw) => {
                b.values.clone_from(&raw.values);
                if let (Some(m), Some(v), Some(t)) = (
                    blocks.get(&format!("{}:m", b.name)),
                    blocks.get(&format!("{}:v", b.name)),
                    blocks.get(&format!("{}:t", b.name)),
                ) {
                    b.adam_m.clone_from(&m.values);
                    b.adam_v.clone_from(&v.values);
                    b.step_count = t.values[0] as u64;
                }
            }
        }
    });
    failure.map_or(Ok(()), Err)
}
