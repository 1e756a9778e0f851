//! Building, inspecting and running read policies.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use flashread_core::channel::{AnalyticReader, ReadNoiseModel};
use flashread_core::policy::{
    backward_recursion, execute_policy, DpConfig, EstimatorKind, PolicyTables, PriorSpec, RewardKind,
};
use serde::{Deserialize, Serialize};

use crate::config::{check_trials, PageSpec};
use crate::output::fmt_f64;
use crate::seeds::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorChoice {
    /// Default resolution (3360 grid points).
    Reference,
    /// CI resolution (240 grid points).
    Coarse,
    #[serde(untagged)]
    Custom(PriorSpec),
}

impl PriorChoice {
    pub fn spec(&self) -> PriorSpec {
        match self {
            PriorChoice::Reference => PriorSpec::reference(),
            PriorChoice::Coarse => PriorSpec::reference_coarse(),
            PriorChoice::Custom(s) => *s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyBuildConfig {
    pub prior: PriorChoice,
    /// Candidate thresholds are the `0.03 + 0.04 k` grid points in this range.
    pub threshold_range: (f64, f64),
    pub reward: RewardKind,
    pub estimator: EstimatorKind,
    /// Half-width of uniform noise added before the 0.04 y rounding;
    /// 0 makes the rounding itself the only read noise.
    pub read_noise: f64,
    pub mass_floor: f64,
    pub prune_non_monotone: bool,
    /// Store per-state values and masses in the policy file.
    pub keep_values: bool,
}

impl Default for PolicyBuildConfig {
    fn default() -> Self {
        let d = DpConfig::standard(0.55, 2.35).expect("constant grid");
        Self {
            prior: PriorChoice::Reference,
            threshold_range: (0.55, 2.35),
            reward: d.reward,
            estimator: d.estimator,
            read_noise: 0.0,
            mass_floor: d.mass_floor,
            prune_non_monotone: d.prune_non_monotone,
            keep_values: true,
        }
    }
}

impl PolicyBuildConfig {
    pub fn dp_config(&self) -> Result<DpConfig> {
        let (lo, hi) = self.threshold_range;
        if !(lo < hi) {
            bail!("empty threshold range ({lo}, {hi})");
        }
        let mut cfg = DpConfig::standard(lo, hi)?.with_read_noise(self.read_noise)?;
        cfg.reward = self.reward;
        cfg.estimator = self.estimator;
        cfg.mass_floor = self.mass_floor;
        cfg.prune_non_monotone = self.prune_non_monotone;
        Ok(cfg)
    }
}

/// Plain-data view of a policy for JSON output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicySummary {
    pub t1: f64,
    pub expected_reward: f64,
    pub reward: RewardKind,
    pub estimator: EstimatorKind,
    pub prior_points: usize,
    pub candidate_thresholds: usize,
    /// `(y1, t2)` pairs of the second-read policy.
    pub second_read: Vec<(f64, f64)>,
    pub states_per_stage: Vec<u64>,
    pub stored_states_per_stage: Vec<usize>,
    pub pruned_mass: Vec<f64>,
    /// `(t1, value)` for every candidate first read.
    pub first_read_values: Vec<(f64, f64)>,
}

pub fn summarize(t: &PolicyTables) -> PolicySummary {
    PolicySummary {
        t1: t.t1(),
        expected_reward: t.root_value,
        reward: t.config.reward,
        estimator: t.config.estimator,
        prior_points: t.prior.len(),
        candidate_thresholds: t.config.thresholds.len(),
        second_read: t.second_read_map(),
        states_per_stage: t.stats.states_per_stage.clone(),
        stored_states_per_stage: t.stages.iter().map(|s| s.len()).collect(),
        pruned_mass: t.stats.pruned_mass.clone(),
        first_read_values: t.config.thresholds.iter().copied().zip(t.stats.first_read_values.iter().copied()).collect(),
    }
}

pub fn run_policy_build(config: &PolicyBuildConfig) -> Result<PolicyTables> {
    let prior = config.prior.spec().grid()?;
    let dp = config.dp_config()?;
    let started = std::time::Instant::now();
    let tables = backward_recursion(&prior, &dp)?;
    log::info!(
        "policy built over {} prior points in {:.1?}: t1 = {:.2}",
        prior.len(),
        started.elapsed(),
        tables.t1()
    );
    Ok(if config.keep_values { tables } else { tables.without_values() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyRunConfig {
    pub policy: Option<PathBuf>,
    pub page: PageSpec,
    pub read_noise: f64,
    pub trials: usize,
    pub seed: u64,
}

impl Default for PolicyRunConfig {
    fn default() -> Self {
        Self { policy: None, page: PageSpec::default(), read_noise: 0.02, trials: 1, seed: 0 }
    }
}

/// One CSV row per trial: the reads in the order issued and the estimate.
pub fn run_policy(config: &PolicyRunConfig, tables: &PolicyTables) -> Result<Vec<u8>> {
    check_trials(config.trials)?;
    let truth = config.page.model()?;
    let noise = if config.read_noise == 0.0 { ReadNoiseModel::none() } else { ReadNoiseModel::uniform(config.read_noise)? };
    let h = tables.horizon();
    let mut header = vec!["trial".to_string()];
    for i in 1..=h {
        header.push(format!("t{i}"));
        header.push(format!("y{i}"));
    }
    header.extend(["mu1", "sigma1", "mu2", "sigma2", "t_star", "status"].map(String::from));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    for i in 0..config.trials {
        let mut reader = AnalyticReader::new(&truth, noise, stream_rng(config.seed, "policy-run", i as u64));
        let mut rec = vec![i.to_string()];
        let mut issued = Recorder { inner: &mut reader, log: Vec::new() };
        let result = execute_policy(tables, &mut issued);
        for r in &issued.log {
            rec.push(fmt_f64(r.t));
            rec.push(fmt_f64(r.y));
        }
        match result {
            Ok((_, e)) => {
                rec.extend([e.mu1, e.sigma1, e.mu2, e.sigma2, e.t_star].map(fmt_f64));
                rec.push("ok".into());
            }
            Err(err) => {
                rec.extend(std::iter::repeat_n(String::new(), 5));
                rec.push(err.to_string());
            }
        }
        w.write_record(&rec)?;
    }
    Ok(w.into_inner()?)
}

struct Recorder<'a, R> {
    inner: &'a mut R,
    log: Vec<flashread_core::channel::ReadRecord>,
}

impl<R: flashread_core::channel::Reader> flashread_core::channel::Reader for Recorder<'_, R> {
    fn read(&mut self, t: f64) -> flashread_core::channel::ReadRecord {
        let r = self.inner.read(t);
        self.log.push(r);
        r
    }
}

pub fn load(path: &std::path::Path) -> Result<PolicyTables> {
    flashread_core::policy::load_policy(path).with_context(|| format!("loading policy {}", path.display()))
}
