//! Noise-parameter estimation from a handful of threshold reads.
//!
//! Two reads where the upper level contributes nothing to the ones-fraction
//! give `Q((mu1 - t) / sigma1) = 2y`, which is linear in `(mu1, sigma1)`
//! after inverting `Q`. With level 1 known, two more reads recover level 2
//! from `2y - Q((mu1 - t) / sigma1)`.

use serde::{Deserialize, Serialize};

use crate::channel::{gaussian_intersection, ReadRecord, Reader, VoltageModel};
use crate::error::{Error, Result};
use crate::numerics::{q_func, q_inv};

/// Estimated level parameters and the resulting BER-optimal threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterEstimate {
    pub mu1: f64,
    pub sigma1: f64,
    pub mu2: f64,
    pub sigma2: f64,
    pub t_star: f64,
    pub diagnostics: Option<FirstOrderErrors>,
}

impl ParameterEstimate {
    pub fn from_params(mu1: f64, sigma1: f64, mu2: f64, sigma2: f64) -> Result<Self> {
        let t_star = estimate_t_star(mu1, sigma1, mu2, sigma2)?;
        Ok(Self { mu1, sigma1, mu2, sigma2, t_star, diagnostics: None })
    }

    pub fn to_model(&self) -> Result<VoltageModel> {
        VoltageModel::slc(self.mu1, self.sigma1, self.mu2, self.sigma2)
    }
}

/// Predicted first-order perturbations of the level-1 estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstOrderErrors {
    /// Read noise amplified through `Q^{-1}` at each level-1 read.
    pub n1: f64,
    pub n2: f64,
    /// Predicted `sigma1_hat - sigma1`.
    pub sigma1_shift: f64,
    /// Predicted `mu1_hat - mu1`.
    pub mu1_shift: f64,
}

/// Level parameters the caller already knows; each one saves a read.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KnownParams {
    pub mu1: Option<f64>,
    pub sigma1: Option<f64>,
}

impl KnownParams {
    /// Reads needed to pin down the unknown parameters.
    pub fn required_reads(&self) -> usize {
        2 + self.level1_reads()
    }

    pub fn level1_reads(&self) -> usize {
        match (self.mu1, self.sigma1) {
            (Some(_), Some(_)) => 0,
            (None, None) => 2,
            _ => 1,
        }
    }
}

/// Why a closed-form inversion failed. Cheap to construct; the public API
/// turns it into [`Error`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Failure {
    OutOfRange { read: usize, value: f64 },
    Degenerate,
    NonPositiveScale(f64),
    MeansOutOfOrder,
    NoThreshold,
}

impl Failure {
    fn into_error(self) -> Error {
        match self {
            Failure::OutOfRange { read, value } => {
                Error::OutOfRange(format!("read {read}: inverted argument {value} not in (0, 1)"))
            }
            Failure::Degenerate => Error::DegenerateReads("equal inverted values, zero denominator".into()),
            Failure::NonPositiveScale(s) => Error::InconsistentReads(format!("estimated scale {s} <= 0")),
            Failure::MeansOutOfOrder => Error::InconsistentReads("estimated mu1 >= mu2".into()),
            Failure::NoThreshold => Error::DegenerateEstimate("no pdf intersection between the means".into()),
        }
    }
}

fn checked_q_inv(arg: f64, read: usize) -> std::result::Result<f64, Failure> {
    if arg > 0.0 && arg < 1.0 {
        Ok(q_inv(arg).expect("argument checked"))
    } else {
        Err(Failure::OutOfRange { read, value: arg })
    }
}

/// Two-point inversion: given `Q((mu - t_i) / s) = a_i`, returns `(mu, s)`.
fn invert_pair(t1: f64, a1: f64, t2: f64, a2: f64, idx: (usize, usize)) -> std::result::Result<(f64, f64), Failure> {
    let x1 = checked_q_inv(a1, idx.0)?;
    let x2 = checked_q_inv(a2, idx.1)?;
    let den = x1 - x2;
    if den == 0.0 {
        return Err(Failure::Degenerate);
    }
    let s = (t2 - t1) / den;
    if !(s > 0.0) || !s.is_finite() {
        return Err(Failure::NonPositiveScale(s));
    }
    Ok((t2 + s * x2, s))
}

pub(crate) fn level1_core(t1: f64, y1: f64, t2: f64, y2: f64) -> std::result::Result<(f64, f64), Failure> {
    if t1 == t2 && y1 == y2 {
        return Err(Failure::Degenerate);
    }
    invert_pair(t1, 2.0 * y1, t2, 2.0 * y2, (0, 1))
}

pub(crate) fn level2_core(
    t3: f64,
    y3: f64,
    t4: f64,
    y4: f64,
    mu1: f64,
    sigma1: f64,
) -> std::result::Result<(f64, f64), Failure> {
    let q3 = q_func((mu1 - t3) / sigma1);
    let q4 = q_func((mu1 - t4) / sigma1);
    invert_pair(t3, 2.0 * y3 - q3, t4, 2.0 * y4 - q4, (2, 3))
}

/// Estimates from reads already sorted by threshold. Level 1 uses the
/// lowest reads, level 2 the two highest.
pub(crate) fn estimate_sorted_core(
    reads: &[(f64, f64)],
    known: &KnownParams,
) -> std::result::Result<[f64; 4], Failure> {
    let (mu1, s1, rest) = match (known.mu1, known.sigma1) {
        (Some(m), Some(s)) => (m, s, reads),
        (None, None) => {
            let (a, b) = (reads[0], reads[1]);
            let (m, s) = level1_core(a.0, a.1, b.0, b.1)?;
            (m, s, &reads[2..])
        }
        (Some(m), None) => {
            let b = reads[0];
            let (m, s) = invert_pair(m, 0.5, b.0, 2.0 * b.1, (0, 1))?;
            (m, s, &reads[1..])
        }
        (None, Some(s)) => {
            let b = reads[0];
            let x = checked_q_inv(2.0 * b.1, 0)?;
            (b.0 + s * x, s, &reads[1..])
        }
    };
    let (c, d) = (rest[0], rest[1]);
    let (mu2, s2) = level2_core(c.0, c.1, d.0, d.1, mu1, s1)?;
    if !(mu1 < mu2) {
        return Err(Failure::MeansOutOfOrder);
    }
    Ok([mu1, s1, mu2, s2])
}

/// Like [`estimate_sorted_core`], with the optimal threshold appended.
pub(crate) fn estimate_with_threshold_core(
    reads: &[(f64, f64)],
    known: &KnownParams,
) -> std::result::Result<[f64; 5], Failure> {
    let [mu1, s1, mu2, s2] = estimate_sorted_core(reads, known)?;
    let t = gaussian_intersection(mu1, s1, mu2, s2, 1.0).map_err(|_| Failure::NoThreshold)?;
    Ok([mu1, s1, mu2, s2, t])
}

/// `(mu1_hat, sigma1_hat)` from two reads clear of level 2.
pub fn estimate_level1(r1: ReadRecord, r2: ReadRecord) -> Result<(f64, f64)> {
    if !(r1.t < r2.t) {
        return Err(Error::Precondition(format!("level-1 reads need t1 < t2, got {} and {}", r1.t, r2.t)));
    }
    level1_core(r1.t, r1.y, r2.t, r2.y).map_err(Failure::into_error)
}

/// `(mu2_hat, sigma2_hat)` from two reads after cancelling level 1.
pub fn estimate_level2(r3: ReadRecord, r4: ReadRecord, mu1_hat: f64, sigma1_hat: f64) -> Result<(f64, f64)> {
    if !(r3.t < r4.t) {
        return Err(Error::Precondition(format!("level-2 reads need t3 < t4, got {} and {}", r3.t, r4.t)));
    }
    if !(sigma1_hat > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma1_hat = {sigma1_hat}")));
    }
    level2_core(r3.t, r3.y, r4.t, r4.y, mu1_hat, sigma1_hat).map_err(Failure::into_error)
}

/// BER-optimal threshold for estimated parameters (equiprobable levels).
pub fn estimate_t_star(mu1: f64, sigma1: f64, mu2: f64, sigma2: f64) -> Result<f64> {
    gaussian_intersection(mu1, sigma1, mu2, sigma2, 1.0)
}

/// Estimates all parameters from a fixed set of reads.
///
/// Reads are ordered by threshold; the lowest ones go to level 1 and the
/// two highest to level 2. The number of reads must equal
/// [`KnownParams::required_reads`].
pub fn estimate_from_reads(reads: &[ReadRecord], known: &KnownParams) -> Result<ParameterEstimate> {
    let need = known.required_reads();
    if reads.len() != need {
        return Err(Error::Precondition(format!("expected {need} reads, got {}", reads.len())));
    }
    let mut sorted: Vec<(f64, f64)> = reads.iter().map(|r| (r.t, r.y)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    if sorted.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::DegenerateReads("repeated threshold".into()));
    }
    let [mu1, s1, mu2, s2] = estimate_sorted_core(&sorted, known).map_err(Failure::into_error)?;
    ParameterEstimate::from_params(mu1, s1, mu2, s2)
}

/// Predicted first-order perturbation of `(sigma1_hat, mu1_hat)` for read
/// noise `(ny1, ny2)` at thresholds `t1 < t2`, given the true model.
pub fn first_order_errors(truth: &VoltageModel, t1: f64, t2: f64, ny1: f64, ny2: f64) -> Result<FirstOrderErrors> {
    if truth.num_levels() != 2 {
        return Err(Error::UnsupportedModel("first-order errors need an SLC model".into()));
    }
    let l = truth.levels()[0];
    let (mu, s) = (l.mu, l.scale);
    let amp = |t: f64| 2.0 * (2.0 * std::f64::consts::PI).sqrt() * ((t - mu).powi(2) / (2.0 * s * s)).exp();
    let n1 = amp(t1) * ny1;
    let n2 = amp(t2) * ny2;
    let sigma1_shift = -s * s / (t2 - t1) * (n2 - n1);
    let mu1_shift = -s * ((t2 - mu) * n1 - (t1 - mu) * n2) / (t2 - t1);
    Ok(FirstOrderErrors { n1, n2, sigma1_shift, mu1_shift })
}

/// Laplace analog of [`estimate_level1`]: `(mu1_hat, b1_hat)` from two reads
/// above `mu1` and clear of level 2.
pub fn laplace_estimate_level1(r1: ReadRecord, r2: ReadRecord) -> Result<(f64, f64)> {
    if !(r1.t < r2.t) {
        return Err(Error::Precondition("level-1 reads need t1 < t2".into()));
    }
    let (a, b) = (1.0 - 2.0 * r1.y, 1.0 - 2.0 * r2.y);
    if !(a > 0.0) || !(b > 0.0) {
        return Err(Error::OutOfRange(format!("1 - 2y must be positive, got {a} and {b}")));
    }
    let den = a.ln() - b.ln();
    if den == 0.0 {
        return Err(Error::DegenerateReads("equal reads".into()));
    }
    let b1 = (r2.t - r1.t) / den;
    if !(b1 > 0.0) {
        return Err(Error::InconsistentReads(format!("estimated scale {b1} <= 0")));
    }
    // 1 - 2y = e^{-(t - mu1)/b1} / 2
    let mu1 = r2.t + b1 * (2.0 * b).ln();
    Ok((mu1, b1))
}

/// Rough initial picture of the page used to place reads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelGuess {
    pub mu1: f64,
    pub sigma1: f64,
    pub mu2: f64,
    pub sigma2: f64,
}

impl LevelGuess {
    fn cdf(&self, t: f64) -> f64 {
        0.5 * (q_func((self.mu1 - t) / self.sigma1) + q_func((self.mu2 - t) / self.sigma2))
    }
}

/// Read-placement rules for [`progressive_read`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptivePlan {
    pub guess: LevelGuess,
    /// First threshold; defaults to the midpoint of the guessed means.
    pub first_threshold: Option<f64>,
    /// Level-1 cdf values targeted by the level-1 reads.
    pub level1_targets: (f64, f64),
    /// Level-2 cdf values targeted by the level-2 reads.
    pub level2_targets: (f64, f64),
    /// A read may serve level 1 only if `y <= low_water`.
    pub low_water: f64,
    /// Largest tolerated predicted level-2 share of `2y` at a level-1 read.
    pub isolation: f64,
    pub window: (f64, f64),
    pub known: KnownParams,
}

impl Default for AdaptivePlan {
    fn default() -> Self {
        Self {
            guess: LevelGuess { mu1: 1.0, sigma1: 0.17, mu2: 1.95, sigma2: 0.28 },
            first_threshold: None,
            level1_targets: (0.1, 0.7),
            level2_targets: (0.3, 0.9),
            low_water: 0.45,
            isolation: 0.01,
            window: (0.0, 3.0),
            known: KnownParams::default(),
        }
    }
}

/// Result of an adaptive read session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressiveOutcome {
    pub estimate: ParameterEstimate,
    /// Reads in issue order.
    pub reads: Vec<ReadRecord>,
    /// `false` when ones-fractions are not monotone in the threshold or a
    /// level-1 read turns out to carry more than `isolation` of level 2.
    pub consistent: bool,
}

/// Progressive read algorithm: picks each threshold from the earlier reads,
/// isolates each level with its own pair of reads and inverts.
pub fn progressive_read<R: Reader + ?Sized>(reader: &mut R, plan: &AdaptivePlan) -> Result<ProgressiveOutcome> {
    let g = plan.guess;
    let (wlo, whi) = plan.window;
    let clamp = |t: f64| t.clamp(wlo, whi);
    let mut reads: Vec<ReadRecord> = Vec::new();
    let fail = |reason: String, reads: &[ReadRecord]| Error::EstimationFailed { reason, reads: reads.to_vec() };

    let t_a = clamp(plan.first_threshold.unwrap_or(0.5 * (g.mu1 + g.mu2)));
    let r_a = reader.read(t_a);
    reads.push(r_a);

    // Slide the guessed mixture so that it reproduces the first read.
    let shift = {
        let (mut lo, mut hi) = (-(whi - wlo), whi - wlo);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if g.cdf(t_a - mid) > r_a.y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let (mu1_g, mu2_g) = (g.mu1 + shift, g.mu2 + shift);
    let level2_share = |t: f64| q_func((mu2_g - t) / g.sigma2);
    // Rightmost threshold whose predicted level-2 share stays below isolation.
    let isolation_edge = mu2_g - g.sigma2 * q_inv(plan.isolation.clamp(1e-300, 0.5)).unwrap_or(0.0);

    let n1 = plan.known.level1_reads();
    let first_is_level1 = n1 > 0 && r_a.y > 0.0 && r_a.y <= plan.low_water && level2_share(t_a) < plan.isolation;

    // Level-1 reads.
    let mut level1: Vec<ReadRecord> = Vec::new();
    if first_is_level1 {
        level1.push(r_a);
    }
    if level1.len() < n1 {
        let mut targets = [plan.level1_targets.0, plan.level1_targets.1];
        if !level1.is_empty() {
            // Keep the target farthest from the level-1 cdf already observed.
            let seen = 2.0 * r_a.y;
            targets.sort_by(|a, b| (b - seen).abs().total_cmp(&(a - seen).abs()));
        }
        for &target in targets.iter().take(n1 - level1.len()) {
            let x = q_inv(target.clamp(1e-12, 1.0 - 1e-12)).expect("clamped");
            let mut t = clamp((mu1_g + -g.sigma1 * x).min(isolation_edge));
            while reads.iter().any(|r| (r.t - t).abs() < 1e-9) {
                t = clamp(t - 0.25 * g.sigma1);
            }
            let r = reader.read(t);
            reads.push(r);
            level1.push(r);
        }
    }
    level1.sort_by(|a, b| a.t.total_cmp(&b.t));
    for r in &level1 {
        if !(r.y > 0.0 && 2.0 * r.y < 1.0) {
            return Err(fail(format!("read at {} (y = {}) cannot isolate level 1", r.t, r.y), &reads));
        }
    }

    let (mu1, s1) = match (plan.known.mu1, plan.known.sigma1, level1.as_slice()) {
        (Some(m), Some(s), _) => (m, s),
        (None, None, [a, b]) => estimate_level1(*a, *b).map_err(|e| fail(e.to_string(), &reads))?,
        (Some(m), None, [b]) => {
            if !(b.t > m) {
                return Err(fail("known-mean read must lie right of mu1".into(), &reads));
            }
            estimate_level1(ReadRecord { t: m, y: 0.25 }, *b).map_err(|e| fail(e.to_string(), &reads))?
        }
        (None, Some(s), [b]) => (b.t + s * q_inv(2.0 * b.y).map_err(|e| fail(e.to_string(), &reads))?, s),
        _ => return Err(fail("not enough level-1 reads inside the window".into(), &reads)),
    };

    // Level-2 reads: reuse the first read unless it served level 1.
    let mut level2: Vec<ReadRecord> = Vec::new();
    if !first_is_level1 {
        level2.push(r_a);
    }
    let level1_share = |t: f64| q_func((mu1 - t) / s1);
    let mut targets = [plan.level2_targets.0, plan.level2_targets.1];
    if let Some(first) = level2.first() {
        let seen = 2.0 * first.y - level1_share(first.t);
        targets.sort_by(|a, b| (b - seen).abs().total_cmp(&(a - seen).abs()));
    }
    let need2 = 2 - level2.len();
    for &target in targets.iter().take(need2) {
        let x = q_inv(target.clamp(1e-12, 1.0 - 1e-12)).expect("clamped");
        let mut t = clamp(mu2_g - g.sigma2 * x);
        while reads.iter().any(|r| (r.t - t).abs() < 1e-9) {
            t = clamp(t + 0.25 * g.sigma2);
        }
        let r = reader.read(t);
        reads.push(r);
        level2.push(r);
    }
    level2.sort_by(|a, b| a.t.total_cmp(&b.t));
    if level2.len() != 2 || level2[0].t == level2[1].t {
        return Err(fail("could not place two distinct level-2 reads".into(), &reads));
    }
    let (mu2, s2) = estimate_level2(level2[0], level2[1], mu1, s1).map_err(|e| fail(e.to_string(), &reads))?;
    if !(mu1 < mu2) {
        return Err(fail("estimated mu1 >= mu2".into(), &reads));
    }
    let estimate = ParameterEstimate::from_params(mu1, s1, mu2, s2).map_err(|e| fail(e.to_string(), &reads))?;

    let mut by_t = reads.clone();
    by_t.sort_by(|a, b| a.t.total_cmp(&b.t));
    let monotone = by_t.windows(2).all(|w| w[0].y <= w[1].y);
    let isolated = level1.iter().all(|r| q_func((mu2 - r.t) / s2) < plan.isolation);
    Ok(ProgressiveOutcome { estimate, reads, consistent: monotone && isolated })
}
