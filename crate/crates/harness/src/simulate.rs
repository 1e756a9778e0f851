//! Raw read simulation and offline estimation from recorded reads.

use std::collections::BTreeMap;

use anyhow::{bail, Context, Result};
use flashread_core::channel::{AnalyticReader, CellArray, ReadNoiseModel, ReadRecord, Reader};
use flashread_core::estimation::{estimate_from_reads, KnownParams};
use serde::{Deserialize, Serialize};

use crate::compare::ReadSource;
use crate::config::{check_sorted, check_trials, PageSpec};
use crate::output::fmt_f64;
use crate::seeds::stream_rng;
use crate::strategy::{CellReader, S1};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub page: PageSpec,
    pub thresholds: Vec<f64>,
    pub read_noise: f64,
    pub read_source: ReadSource,
    /// Block size when reading programmed cells.
    pub cells: usize,
    pub trials: usize,
    pub seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            page: PageSpec::default(),
            thresholds: S1.to_vec(),
            read_noise: 0.02,
            read_source: ReadSource::Analytic,
            cells: 4096,
            trials: 1,
            seed: 0,
        }
    }
}

/// `trial,t,y` rows.
pub fn run_simulate(config: &SimulateConfig) -> Result<Vec<u8>> {
    check_trials(config.trials)?;
    check_sorted(&config.thresholds)?;
    if config.cells == 0 {
        bail!("cells must be at least 1");
    }
    let truth = config.page.model()?;
    let noise = if config.read_noise == 0.0 { ReadNoiseModel::none() } else { ReadNoiseModel::uniform(config.read_noise)? };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["trial", "t", "y"])?;
    for i in 0..config.trials {
        let mut rng = stream_rng(config.seed, "simulate", i as u64);
        let reads: Vec<ReadRecord> = match config.read_source {
            ReadSource::Analytic => {
                let mut r = AnalyticReader::new(&truth, noise, rng);
                config.thresholds.iter().map(|&t| r.read(t)).collect()
            }
            ReadSource::Cells => {
                let levels: Vec<usize> = (0..config.cells).map(|_| rand::Rng::random_range(&mut rng, 0..2)).collect();
                let cells = CellArray::program(&truth, &levels, &mut rng)?;
                let mut r = CellReader { cells: &cells, noise, rng };
                config.thresholds.iter().map(|&t| r.read(t)).collect()
            }
        };
        for r in reads {
            w.write_record([i.to_string(), fmt_f64(r.t), fmt_f64(r.y)])?;
        }
    }
    Ok(w.into_inner()?)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    pub known: KnownParams,
}

#[derive(Debug, Deserialize)]
struct ReadRow {
    #[serde(default)]
    trial: u64,
    t: f64,
    y: f64,
}

/// Estimates every trial in a `trial,t,y` (or `t,y`) CSV.
pub fn run_estimate(config: &EstimateConfig, reads_csv: &[u8]) -> Result<Vec<u8>> {
    let mut by_trial: BTreeMap<u64, Vec<ReadRecord>> = BTreeMap::new();
    let mut rdr = csv::Reader::from_reader(reads_csv);
    for (line, row) in rdr.deserialize::<ReadRow>().enumerate() {
        let row = row.with_context(|| format!("reads row {}", line + 2))?;
        by_trial.entry(row.trial).or_default().push(ReadRecord::new(row.t, row.y)?);
    }
    if by_trial.is_empty() {
        bail!("no reads in input");
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["trial", "mu1", "sigma1", "mu2", "sigma2", "t_star", "status"])?;
    for (trial, mut reads) in by_trial {
        reads.sort_by(|a, b| a.t.total_cmp(&b.t));
        match estimate_from_reads(&reads, &config.known) {
            Ok(e) => w.write_record([
                trial.to_string(),
                fmt_f64(e.mu1),
                fmt_f64(e.sigma1),
                fmt_f64(e.mu2),
                fmt_f64(e.sigma2),
                fmt_f64(e.t_star),
                "ok".into(),
            ])?,
            Err(err) => {
                let mut rec = vec![trial.to_string()];
                rec.extend(std::iter::repeat_n(String::new(), 5));
                rec.push(err.to_string());
                w.write_record(rec)?;
            }
        }
    }
    Ok(w.into_inner()?)
}
