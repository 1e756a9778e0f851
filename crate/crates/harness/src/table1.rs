//! Decoding-failure grid for a length-2048 hard-decision code.

use anyhow::Result;
use flashread_core::errordist::{failure_rate, CodewordErrorModel, TailApprox};
use serde::{Deserialize, Serialize};

use crate::output::fmt_f64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Table1Config {
    pub n: u64,
    pub bit_error_rates: Vec<f64>,
    pub correctable: Vec<u64>,
}

impl Default for Table1Config {
    fn default() -> Self {
        Self { n: 2048, bit_error_rates: vec![0.008, 0.010, 0.012], correctable: vec![23, 25, 27] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Table1Cell {
    pub p_e: f64,
    pub alpha: u64,
    pub gaussian: f64,
    pub poisson: f64,
    pub exact: f64,
}

pub fn run_table1(config: &Table1Config) -> Result<Vec<Table1Cell>> {
    let mut out = Vec::new();
    for &alpha in &config.correctable {
        for &p_e in &config.bit_error_rates {
            let m = CodewordErrorModel::new(config.n, p_e, alpha)?;
            out.push(Table1Cell {
                p_e,
                alpha,
                gaussian: failure_rate(&m, TailApprox::Gaussian),
                poisson: failure_rate(&m, TailApprox::Poisson),
                exact: failure_rate(&m, TailApprox::Exact),
            });
        }
    }
    Ok(out)
}

pub fn to_csv(cells: &[Table1Cell]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["p_e", "alpha", "gaussian", "poisson", "exact"])?;
    for c in cells {
        w.write_record([fmt_f64(c.p_e), c.alpha.to_string(), fmt_f64(c.gaussian), fmt_f64(c.poisson), fmt_f64(c.exact)])?;
    }
    Ok(w.into_inner()?)
}
