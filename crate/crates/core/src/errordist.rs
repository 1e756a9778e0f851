//! Per-codeword error counts for a hard-decision code that corrects up to
//! `alpha` bit errors out of `n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::q_func;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodewordErrorModel {
    n: u64,
    p_e: f64,
    alpha: u64,
}

/// How to evaluate the decoding-failure tail `P(K > alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailApprox {
    /// `Q((alpha - n p) / sqrt(n p (1 - p)))`, no continuity correction.
    Gaussian,
    Poisson,
    Exact,
}

impl CodewordErrorModel {
    pub fn new(n: u64, p_e: f64, alpha: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("codeword length must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&p_e) {
            return Err(Error::InvalidParameter(format!("bit error probability {p_e} not in [0, 1]")));
        }
        Ok(Self { n, p_e, alpha })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn p_e(&self) -> f64 {
        self.p_e
    }

    pub fn alpha(&self) -> u64 {
        self.alpha
    }
}

fn ln_choose(n: u64, k: u64) -> f64 {
    libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
}

fn binomial_ln_pmf(n: u64, p: f64, k: u64) -> f64 {
    if p == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if p == 1.0 {
        return if k == n { 0.0 } else { f64::NEG_INFINITY };
    }
    ln_choose(n, k) + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p()
}

/// Binomial probability of exactly `k` errors.
pub fn error_count_pmf(m: &CodewordErrorModel, k: u64) -> Result<f64> {
    if k > m.n {
        return Err(Error::Precondition(format!("error count {k} exceeds codeword length {}", m.n)));
    }
    Ok(binomial_ln_pmf(m.n, m.p_e, k).exp())
}

/// Sums `exp(ln_term(k))` over `ks`, stopping once terms stop mattering.
fn tail_sum(ks: impl Iterator<Item = u64>, ln_term: impl Fn(u64) -> f64) -> f64 {
    let mut total = 0.0;
    let mut peaked = false;
    let mut prev = f64::NEG_INFINITY;
    for k in ks {
        let lt = ln_term(k);
        let term = lt.exp();
        total += term;
        if lt < prev {
            peaked = true;
        }
        if peaked && term < total * 1e-18 {
            break;
        }
        prev = lt;
    }
    total
}

/// Probability that more than `alpha` errors occur, i.e. that the decoder fails.
pub fn failure_rate(m: &CodewordErrorModel, approx: TailApprox) -> f64 {
    let (n, p, alpha) = (m.n, m.p_e, m.alpha);
    if alpha >= n {
        return 0.0;
    }
    let mean = n as f64 * p;
    match approx {
        TailApprox::Gaussian => {
            let var = mean * (1.0 - p);
            if var == 0.0 {
                return if mean > alpha as f64 { 1.0 } else { 0.0 };
            }
            q_func((alpha as f64 - mean) / var.sqrt())
        }
        TailApprox::Exact => {
            // Sum whichever side of alpha holds less mass.
            if alpha as f64 >= mean {
                tail_sum(alpha + 1..=n, |k| binomial_ln_pmf(n, p, k)).min(1.0)
            } else {
                let lower = tail_sum((0..=alpha).rev(), |k| binomial_ln_pmf(n, p, k));
                (1.0 - lower).max(0.0)
            }
        }
        TailApprox::Poisson => {
            if mean == 0.0 {
                return 0.0;
            }
            let ln_term = |k: u64| -mean + k as f64 * mean.ln() - libm::lgamma(k as f64 + 1.0);
            if alpha as f64 >= mean {
                tail_sum(alpha + 1.., ln_term).min(1.0)
            } else {
                (1.0 - tail_sum((0..=alpha).rev(), ln_term)).max(0.0)
            }
        }
    }
}

/// The nine-cell grid of gaussian failure rates for `n = 2048`.
pub fn table1() -> Vec<(f64, u64, f64)> {
    let mut out = Vec::new();
    for alpha in [23, 25, 27] {
        for p in [0.008, 0.010, 0.012] {
            let m = CodewordErrorModel::new(2048, p, alpha).expect("valid constants");
            out.push((p, alpha, failure_rate(&m, TailApprox::Gaussian)));
        }
    }
    out
}
