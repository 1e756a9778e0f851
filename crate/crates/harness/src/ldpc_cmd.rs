//! Code construction and standalone decoding.

use anyhow::{bail, Context, Result};
use flashread_core::ldpc::{build_code, min_sum_decode, CodeSpec, DecodeOutcome, DEFAULT_MAX_ITERATIONS};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdpcBuildConfig {
    pub n: usize,
    pub col_weight: usize,
    pub row_weight: usize,
    pub seed: u64,
    pub max_iterations: usize,
    pub check_scale: f64,
}

impl Default for LdpcBuildConfig {
    fn default() -> Self {
        Self { n: 4096, col_weight: 3, row_weight: 17, seed: 1, max_iterations: DEFAULT_MAX_ITERATIONS, check_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CodeSummary {
    pub n: usize,
    pub m: usize,
    pub rank: usize,
    pub k: usize,
    pub rate: f64,
    pub four_cycles: usize,
    pub max_iterations: usize,
    pub check_scale: f64,
}

pub fn summarize(code: &CodeSpec) -> CodeSummary {
    CodeSummary {
        n: code.n(),
        m: code.m(),
        rank: code.rank(),
        k: code.k(),
        rate: code.rate(),
        four_cycles: code.four_cycles(),
        max_iterations: code.max_iterations(),
        check_scale: code.check_scale(),
    }
}

pub fn run_ldpc_build(config: &LdpcBuildConfig) -> Result<CodeSpec> {
    Ok(build_code(config.n, config.col_weight, config.row_weight, config.seed)?
        .with_max_iterations(config.max_iterations)?
        .with_check_scale(config.check_scale)?)
}

/// Parses one LLR per line (`#` comments and blank lines allowed).
pub fn parse_llrs(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let l = line.split('#').next().unwrap_or("").trim();
        if l.is_empty() {
            continue;
        }
        let v: f64 = l.parse().with_context(|| format!("line {}: bad LLR `{l}`", i + 1))?;
        if v.is_nan() {
            bail!("line {}: NaN LLR", i + 1);
        }
        out.push(v);
    }
    Ok(out)
}

pub fn run_ldpc_decode(code: &CodeSpec, llr: &[f64]) -> Result<DecodeOutcome> {
    Ok(min_sum_decode(code, llr)?)
}
