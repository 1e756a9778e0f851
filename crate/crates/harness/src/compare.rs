//! Strategy comparison on one page: estimation accuracy and LDPC failure
//! rates with estimated and with exact ("genie") soft information.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use flashread_core::channel::{AnalyticReader, CellArray, ReadNoiseModel, VoltageModel};
use flashread_core::estimation::ParameterEstimate;
use flashread_core::infotheory::llr_table;
use flashread_core::ldpc::{self, min_sum_decode, CodeSpec};
use flashread_core::policy::load_policy;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{check_sorted, check_trials, PageSpec};
use crate::output::{finite_or_none, fmt_f64};
use crate::seeds::stream_rng;
use crate::stats::median;
use crate::strategy::{CellReader, Strategy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StrategySpec {
    S1,
    S2,
    Policy { path: PathBuf, name: Option<String> },
    Custom { name: String, thresholds: Vec<f64> },
}

impl StrategySpec {
    pub fn resolve(&self) -> Result<Strategy> {
        Ok(match self {
            StrategySpec::S1 => Strategy::s1(),
            StrategySpec::S2 => Strategy::s2(),
            StrategySpec::Policy { path, name } => {
                let tables = load_policy(path).with_context(|| format!("loading policy {}", path.display()))?;
                Strategy::Policy { name: name.clone().unwrap_or_else(|| "S3".into()), tables: Box::new(tables) }
            }
            StrategySpec::Custom { name, thresholds } => {
                check_sorted(thresholds)?;
                Strategy::Fixed { name: name.clone(), thresholds: thresholds.clone() }
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReadSource {
    /// Noisy samples of the exact mixture cdf.
    Analytic,
    /// Fraction of ones in a programmed block of cells, plus read noise.
    Cells,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CodeSource {
    Build {
        n: usize,
        col_weight: usize,
        row_weight: usize,
        seed: u64,
        #[serde(default = "default_iterations")]
        max_iterations: usize,
        #[serde(default = "default_scale")]
        check_scale: f64,
    },
    File {
        path: PathBuf,
    },
}

fn default_iterations() -> usize {
    ldpc::DEFAULT_MAX_ITERATIONS
}

fn default_scale() -> f64 {
    1.0
}

impl Default for CodeSource {
    fn default() -> Self {
        CodeSource::Build {
            n: 4096,
            col_weight: 3,
            row_weight: 17,
            seed: 1,
            max_iterations: default_iterations(),
            check_scale: default_scale(),
        }
    }
}

impl CodeSource {
    pub fn load(&self) -> Result<CodeSpec> {
        Ok(match self {
            CodeSource::Build { n, col_weight, row_weight, seed, max_iterations, check_scale } => {
                ldpc::build_code(*n, *col_weight, *row_weight, *seed)?
                    .with_max_iterations(*max_iterations)?
                    .with_check_scale(*check_scale)?
            }
            CodeSource::File { path } => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                CodeSpec::parse(&text)?
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub page: PageSpec,
    pub strategies: Vec<StrategySpec>,
    /// Trials for the estimation metrics.
    pub trials: usize,
    /// Leading trials that also run the LDPC decoder; 0 disables it.
    pub ldpc_trials: usize,
    pub seed: u64,
    /// Half-width of the uniform noise added to every read.
    pub read_noise: f64,
    pub read_source: ReadSource,
    pub code: CodeSource,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            page: PageSpec::default(),
            strategies: vec![StrategySpec::S1, StrategySpec::S2],
            trials: 5000,
            ldpc_trials: 500,
            seed: 0,
            read_noise: 0.02,
            read_source: ReadSource::Cells,
            code: CodeSource::default(),
        }
    }
}

impl CompareConfig {
    pub fn validate(&self) -> Result<()> {
        check_trials(self.trials)?;
        if self.ldpc_trials > self.trials {
            bail!("ldpc_trials ({}) exceeds trials ({})", self.ldpc_trials, self.trials);
        }
        if self.strategies.is_empty() {
            bail!("no strategies configured");
        }
        if !(self.read_noise >= 0.0 && self.read_noise < 0.5) {
            bail!("read noise half-width {} outside [0, 0.5)", self.read_noise);
        }
        Ok(())
    }
}

/// Table rows for one strategy. Error metrics are medians over trials,
/// with failed estimates counted as infinite error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyRow {
    pub strategy: String,
    pub mu_rel_err: f64,
    pub sigma_rel_err: f64,
    pub t_star_rel_err: f64,
    pub ber_rel_excess: f64,
    pub estimation_failures: usize,
    pub ldpc_fail_rate: Option<f64>,
    pub genie_ldpc_fail_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub page: String,
    pub t_star: f64,
    pub ber_at_t_star: f64,
    pub trials: usize,
    pub ldpc_trials: usize,
    pub code_rate: Option<f64>,
    pub rows: Vec<StrategyRow>,
}

#[derive(Debug, Clone, Copy)]
struct Trial {
    mu: f64,
    sigma: f64,
    t: f64,
    ber: f64,
    failed: bool,
    ldpc: Option<(bool, bool)>,
}

/// Mean relative error of the two levels' parameters, plus the threshold
/// and BER errors, for one estimate.
fn errors(truth: &VoltageModel, t_star: f64, ber_star: f64, est: &ParameterEstimate) -> (f64, f64, f64, f64) {
    let l = truth.levels();
    let mu = 0.5 * ((est.mu1 - l[0].mu).abs() / l[0].mu + (est.mu2 - l[1].mu).abs() / l[1].mu);
    let sigma = 0.5 * ((est.sigma1 - l[0].scale).abs() / l[0].scale + (est.sigma2 - l[1].scale).abs() / l[1].scale);
    let t = (est.t_star - t_star).abs() / t_star;
    let ber = truth.ber(est.t_star).map(|b| (b - ber_star).abs() / ber_star).unwrap_or(f64::INFINITY);
    (mu, sigma, t, ber)
}

/// Decoder failure with LLRs from `p_hat` at the thresholds the strategy read.
fn ldpc_fails(code: &CodeSpec, cells: &CellArray, codeword: &[u8], thresholds: &[f64], p_hat: &VoltageModel) -> bool {
    let Ok(tm) = p_hat.transition_matrix(thresholds) else {
        return true;
    };
    let Ok(table) = llr_table(&tm) else {
        return true;
    };
    let Ok(intervals) = cells.interval_indices(thresholds) else {
        return true;
    };
    // Level 1 stores bit 1, and table LLRs favour level 1 when positive.
    let llr: Vec<f64> = intervals.iter().map(|&j| -table.llr[j]).collect();
    match min_sum_decode(code, &llr) {
        Ok(out) => !(out.converged && out.bits == codeword),
        Err(_) => true,
    }
}

pub fn run_comparison(config: &CompareConfig, strategies: &[Strategy]) -> Result<CompareReport> {
    config.validate()?;
    let truth = config.page.model()?;
    let t_star = truth.optimal_threshold()?;
    let ber_star = truth.ber(t_star)?;
    let code = if config.ldpc_trials > 0 { Some(config.code.load()?) } else { None };
    let n_cells = code.as_ref().map_or(4096, |c| c.n());
    let noise = ReadNoiseModel::uniform(config.read_noise)?;
    let labels: Vec<String> = strategies.iter().map(|s| format!("reads/{}", s.name())).collect();

    let per_trial: Vec<Vec<Trial>> = (0..config.trials)
        .into_par_iter()
        .map(|i| {
            let with_ldpc = i < config.ldpc_trials;
            let needs_cells = with_ldpc || config.read_source == ReadSource::Cells;
            let mut rng = stream_rng(config.seed, "cells", i as u64);
            let (cells, codeword) = if needs_cells {
                let bits: Vec<u8> = match &code {
                    Some(c) if with_ldpc => {
                        c.encode(&ldpc::random_message(c, &mut rng)).expect("message length matches code")
                    }
                    _ => (0..n_cells).map(|_| rand::Rng::random_range(&mut rng, 0..2u8)).collect(),
                };
                let levels: Vec<usize> = bits.iter().map(|&b| 1 - b as usize).collect();
                (Some(CellArray::program(&truth, &levels, &mut rng).expect("levels 0 and 1 exist")), bits)
            } else {
                (None, Vec::new())
            };
            strategies
                .iter()
                .zip(&labels)
                .map(|(s, label)| {
                    let read_rng = stream_rng(config.seed, label, i as u64);
                    let run = match (&cells, config.read_source) {
                        (Some(c), ReadSource::Cells) => {
                            s.run(&mut CellReader { cells: c, noise, rng: read_rng })
                        }
                        _ => s.run(&mut AnalyticReader::new(&truth, noise, read_rng)),
                    };
                    let (mu, sigma, t, ber) = match &run.estimate {
                        Some(e) => errors(&truth, t_star, ber_star, e),
                        None => (f64::INFINITY, f64::INFINITY, f64::INFINITY, f64::INFINITY),
                    };
                    let ldpc = match (&code, &cells) {
                        (Some(code), Some(cells)) if with_ldpc => {
                            let ts: Vec<f64> = run.reads.iter().map(|r| r.t).collect();
                            let est_fail = match &run.estimate {
                                Some(e) => match e.to_model() {
                                    Ok(m) => ldpc_fails(code, cells, &codeword, &ts, &m),
                                    Err(_) => true,
                                },
                                None => true,
                            };
                            Some((est_fail, ldpc_fails(code, cells, &codeword, &ts, &truth)))
                        }
                        _ => None,
                    };
                    Trial { mu, sigma, t, ber, failed: run.estimate.is_none(), ldpc }
                })
                .collect()
        })
        .collect();

    let rows = strategies
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let col: Vec<Trial> = per_trial.iter().map(|t| t[k]).collect();
            let pick = |f: fn(&Trial) -> f64| median(&col.iter().map(f).collect::<Vec<_>>());
            let ldpc: Vec<(bool, bool)> = col.iter().filter_map(|t| t.ldpc).collect();
            let rate = |f: fn(&(bool, bool)) -> bool| {
                (!ldpc.is_empty()).then(|| ldpc.iter().filter(|x| f(x)).count() as f64 / ldpc.len() as f64)
            };
            StrategyRow {
                strategy: s.name().to_string(),
                mu_rel_err: pick(|t| t.mu),
                sigma_rel_err: pick(|t| t.sigma),
                t_star_rel_err: pick(|t| t.t),
                ber_rel_excess: pick(|t| t.ber),
                estimation_failures: col.iter().filter(|t| t.failed).count(),
                ldpc_fail_rate: rate(|x| x.0),
                genie_ldpc_fail_rate: rate(|x| x.1),
            }
        })
        .collect();
    Ok(CompareReport {
        page: config.page.label(),
        t_star,
        ber_at_t_star: ber_star,
        trials: config.trials,
        ldpc_trials: config.ldpc_trials,
        code_rate: code.as_ref().map(|c| c.rate()),
        rows,
    })
}

pub fn run_strategy_comparison(config: &CompareConfig) -> Result<CompareReport> {
    let strategies = config.strategies.iter().map(StrategySpec::resolve).collect::<Result<Vec<_>>>()?;
    run_comparison(config, &strategies)
}

const METRICS: [&str; 7] = [
    "mu_rel_err",
    "sigma_rel_err",
    "t_star_rel_err",
    "ber_rel_excess",
    "estimation_failures",
    "ldpc_fail_rate",
    "genie_ldpc_fail_rate",
];

fn metric(row: &StrategyRow, name: &str) -> Option<f64> {
    match name {
        "mu_rel_err" => Some(row.mu_rel_err),
        "sigma_rel_err" => Some(row.sigma_rel_err),
        "t_star_rel_err" => Some(row.t_star_rel_err),
        "ber_rel_excess" => Some(row.ber_rel_excess),
        "estimation_failures" => Some(row.estimation_failures as f64),
        "ldpc_fail_rate" => row.ldpc_fail_rate,
        "genie_ldpc_fail_rate" => row.genie_ldpc_fail_rate,
        _ => None,
    }
}

impl CompareReport {
    /// One `strategy,metric,value` row per cell.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["page", "strategy", "metric", "value"])?;
        for row in &self.rows {
            for m in METRICS {
                if let Some(v) = metric(row, m) {
                    w.write_record([self.page.as_str(), row.strategy.as_str(), m, &fmt_f64(v)])?;
                }
            }
        }
        Ok(w.into_inner()?)
    }

    /// Metrics as rows and strategies as columns.
    pub fn to_table_json(&self) -> serde_json::Value {
        let rows: Vec<serde_json::Value> = METRICS
            .iter()
            .filter(|m| self.rows.iter().any(|r| metric(r, m).is_some()))
            .map(|m| {
                let values: BTreeMap<&str, Option<f64>> =
                    self.rows.iter().map(|r| (r.strategy.as_str(), metric(r, m).and_then(finite_or_none))).collect();
                serde_json::json!({ "metric": m, "values": values })
            })
            .collect();
        serde_json::json!({
            "page": self.page,
            "t_star": self.t_star,
            "ber_at_t_star": self.ber_at_t_star,
            "trials": self.trials,
            "ldpc_trials": self.ldpc_trials,
            "code_rate": self.code_rate,
            "strategies": self.rows.iter().map(|r| r.strategy.as_str()).collect::<Vec<_>>(),
            "rows": rows,
        })
    }
}
