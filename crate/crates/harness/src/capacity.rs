//! Mutual information and the mismatched-decoding bound for one read set.

use anyhow::Result;
use flashread_core::infotheory::{kl_divergence, llr_table, mismatched_bound, mutual_information};
use serde::{Deserialize, Serialize};

use crate::config::{check_sorted, PageSpec};
use crate::strategy::S2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapacityConfig {
    /// The channel the cells actually see.
    pub page: PageSpec,
    /// The model the decoder believes; the true page when absent.
    pub estimate: Option<PageSpec>,
    pub thresholds: Vec<f64>,
}

impl Default for CapacityConfig {
    fn default() -> Self {
        Self { page: PageSpec::default(), estimate: None, thresholds: S2.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityReport {
    pub thresholds: Vec<f64>,
    /// Bits per cell.
    pub mutual_information: f64,
    pub mismatched_bound: f64,
    pub kl_divergence: f64,
    /// Natural-log LLRs of the estimated channel, one per read interval.
    pub llr: Vec<f64>,
}

pub fn run_capacity_report(config: &CapacityConfig) -> Result<CapacityReport> {
    check_sorted(&config.thresholds)?;
    let p = config.page.model()?.transition_matrix(&config.thresholds)?;
    let p_hat = config.estimate.unwrap_or(config.page).model()?.transition_matrix(&config.thresholds)?;
    Ok(CapacityReport {
        thresholds: config.thresholds.clone(),
        mutual_information: mutual_information(&p),
        mismatched_bound: mismatched_bound(&p, &p_hat)?,
        kl_divergence: kl_divergence(&p, &p_hat)?,
        llr: llr_table(&p_hat)?.llr,
    })
}
