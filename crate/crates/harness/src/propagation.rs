//! How estimation errors grow with the read-noise amplitude.

use anyhow::{bail, Result};
use flashread_core::channel::{AnalyticReader, ReadNoiseModel};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{check_sorted, check_trials, PageSpec};
use crate::output::fmt_f64;
use crate::seeds::stream_rng;
use crate::stats::{fit_slope, median, SlopeFit};
use crate::strategy::{Strategy, S1};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationConfig {
    pub page: PageSpec,
    pub thresholds: Vec<f64>,
    /// Half-widths of the uniform read noise.
    pub amplitudes: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            page: PageSpec::default(),
            thresholds: S1.to_vec(),
            amplitudes: (0..5).map(|i| 10f64.powf(-4.0 + 0.5 * i as f64)).collect(),
            trials: 1000,
            seed: 0,
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        check_trials(self.trials)?;
        check_sorted(&self.thresholds)?;
        if self.amplitudes.len() < 3 {
            bail!("need at least 3 noise amplitudes for a slope, got {}", self.amplitudes.len());
        }
        if self.amplitudes.iter().any(|&a| !(a > 0.0 && a < 0.5)) {
            bail!("amplitudes must lie in (0, 0.5): {:?}", self.amplitudes);
        }
        Ok(())
    }
}

/// Median relative errors at one amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AmplitudeRow {
    pub amplitude: f64,
    pub mu_rel_err: f64,
    pub sigma_rel_err: f64,
    pub t_star_rel_err: f64,
    pub ber_rel_excess: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropagationReport {
    pub rows: Vec<AmplitudeRow>,
    /// Log-log slopes against the amplitude.
    pub mu_slope: Option<SlopeFit>,
    pub sigma_slope: Option<SlopeFit>,
    pub t_star_slope: Option<SlopeFit>,
    pub ber_slope: Option<SlopeFit>,
    /// Largest median error with noiseless reads.
    pub noiseless_max_err: f64,
}

fn run_amplitude(config: &PropagationConfig, amplitude: f64, index: u64) -> Result<AmplitudeRow> {
    let truth = config.page.model()?;
    let t_star = truth.optimal_threshold()?;
    let ber_star = truth.ber(t_star)?;
    let noise = if amplitude == 0.0 { ReadNoiseModel::none() } else { ReadNoiseModel::uniform(amplitude)? };
    let strategy = Strategy::Fixed { name: "sweep".into(), thresholds: config.thresholds.clone() };
    let label = format!("propagation/{index}");
    let l = truth.levels();
    let errs: Vec<[f64; 4]> = (0..config.trials)
        .into_par_iter()
        .map(|i| {
            let mut reader = AnalyticReader::new(&truth, noise, stream_rng(config.seed, &label, i as u64));
            match strategy.run(&mut reader).estimate {
                None => [f64::INFINITY; 4],
                Some(e) => [
                    0.5 * ((e.mu1 - l[0].mu).abs() / l[0].mu + (e.mu2 - l[1].mu).abs() / l[1].mu),
                    0.5 * ((e.sigma1 - l[0].scale).abs() / l[0].scale + (e.sigma2 - l[1].scale).abs() / l[1].scale),
                    (e.t_star - t_star).abs() / t_star,
                    truth.ber(e.t_star).map(|b| (b - ber_star).abs() / ber_star).unwrap_or(f64::INFINITY),
                ],
            }
        })
        .collect();
    let col = |k: usize| median(&errs.iter().map(|e| e[k]).collect::<Vec<_>>());
    Ok(AmplitudeRow {
        amplitude,
        mu_rel_err: col(0),
        sigma_rel_err: col(1),
        t_star_rel_err: col(2),
        ber_rel_excess: col(3),
        failures: errs.iter().filter(|e| e[0].is_infinite()).count(),
    })
}

pub fn run_error_propagation(config: &PropagationConfig) -> Result<PropagationReport> {
    config.validate()?;
    let rows = config
        .amplitudes
        .iter()
        .enumerate()
        .map(|(i, &a)| run_amplitude(config, a, i as u64 + 1))
        .collect::<Result<Vec<_>>>()?;
    let control = run_amplitude(config, 0.0, 0)?;
    let x: Vec<f64> = rows.iter().map(|r| r.amplitude.log10()).collect();
    let fit = |f: fn(&AmplitudeRow) -> f64| {
        let y: Vec<f64> = rows.iter().map(|r| f(r).log10()).collect();
        fit_slope(&x, &y)
    };
    Ok(PropagationReport {
        mu_slope: fit(|r| r.mu_rel_err),
        sigma_slope: fit(|r| r.sigma_rel_err),
        t_star_slope: fit(|r| r.t_star_rel_err),
        ber_slope: fit(|r| r.ber_rel_excess),
        noiseless_max_err: [control.mu_rel_err, control.sigma_rel_err, control.t_star_rel_err, control.ber_rel_excess]
            .into_iter()
            .fold(0.0, f64::max),
        rows,
    })
}

impl PropagationReport {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["amplitude", "mu_rel_err", "sigma_rel_err", "t_star_rel_err", "ber_rel_excess", "failures"])?;
        for r in &self.rows {
            w.write_record([
                fmt_f64(r.amplitude),
                fmt_f64(r.mu_rel_err),
                fmt_f64(r.sigma_rel_err),
                fmt_f64(r.t_star_rel_err),
                fmt_f64(r.ber_rel_excess),
                r.failures.to_string(),
            ])?;
        }
        Ok(w.into_inner()?)
    }
}
