//! Read-threshold policies from a finite-horizon dynamic program over a
//! gridded prior on `(mu1, mu2, sigma1, sigma2)`.
//!
//! States are sets of quantized reads `(threshold index, y bin)`. A state
//! carries the unnormalized joint mass `P(x, reads)` of every prior point
//! consistent with it, so values are stored as `P(state) * E[reward | state]`
//! and no renormalization is needed inside the recursion.

mod engine;
mod format;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{ReadNoiseModel, ReadRecord, VoltageModel};
use crate::error::{Error, Result};
use crate::estimation::{estimate_with_threshold_core, KnownParams};
use crate::numerics::{norm_cdf, q_func, QuantizationGrid};

pub use engine::{backward_recursion, execute_policy, DpStats, PolicyTables, StageEntry};
pub use format::{from_bytes, load_policy, save_policy, to_bytes, POLICY_MAGIC, POLICY_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub mu1: f64,
    pub mu2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
}

impl ParameterVector {
    pub fn new(mu1: f64, mu2: f64, sigma1: f64, sigma2: f64) -> Result<Self> {
        if !(sigma1 > 0.0 && sigma2 > 0.0) || !(mu1 < mu2) {
            return Err(Error::InvalidParameter(format!(
                "need mu1 < mu2 and positive sigmas, got ({mu1}, {mu2}, {sigma1}, {sigma2})"
            )));
        }
        Ok(Self { mu1, mu2, sigma1, sigma2 })
    }

    pub fn to_model(&self) -> Result<VoltageModel> {
        VoltageModel::slc(self.mu1, self.sigma1, self.mu2, self.sigma2)
    }

    /// Noiseless ones-fraction at `t` for equiprobable levels.
    pub fn cdf_sample(&self, t: f64) -> f64 {
        0.5 * (norm_cdf((t - self.mu1) / self.sigma1) + norm_cdf((t - self.mu2) / self.sigma2))
    }

    fn as_array(&self) -> [f64; 4] {
        [self.mu1, self.mu2, self.sigma1, self.sigma2]
    }
}

/// Uniform prior range for one parameter, split into equal cells of about
/// `step` width; the grid points are the cell midpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(lo <= hi) || !(step > 0.0) {
            return Err(Error::Config(format!("bad prior axis lo={lo} hi={hi} step={step}")));
        }
        Ok(Self { lo, hi, step })
    }

    pub fn points(&self) -> Vec<f64> {
        let width = self.hi - self.lo;
        if width == 0.0 {
            return vec![self.lo];
        }
        let n = ((width / self.step).round() as usize).max(1);
        let cell = width / n as f64;
        (0..n).map(|i| self.lo + (i as f64 + 0.5) * cell).collect()
    }
}

/// Independent uniform priors on the four parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub mu1: Axis,
    pub mu2: Axis,
    pub sigma1: Axis,
    pub sigma2: Axis,
}

impl PriorSpec {
    /// Full-resolution discretization of the reference prior ranges
    /// (3360 points).
    pub fn reference() -> Self {
        Self {
            mu1: Axis { lo: 0.75, hi: 1.25, step: 0.05 },
            mu2: Axis { lo: 1.8, hi: 2.1, step: 0.05 },
            sigma1: Axis { lo: 0.1, hi: 0.24, step: 0.02 },
            sigma2: Axis { lo: 0.2, hi: 0.36, step: 0.02 },
        }
    }

    /// Same ranges, coarse enough for quick builds (480 points).
    pub fn reference_coarse() -> Self {
        Self {
            mu1: Axis { lo: 0.75, hi: 1.25, step: 0.05 },
            mu2: Axis { lo: 1.8, hi: 2.1, step: 0.1 },
            sigma1: Axis { lo: 0.1, hi: 0.24, step: 0.035 },
            sigma2: Axis { lo: 0.2, hi: 0.36, step: 0.04 },
        }
    }

    pub fn grid(&self) -> Result<PriorGrid> {
        let mut points = Vec::new();
        for &mu1 in &self.mu1.points() {
            for &mu2 in &self.mu2.points() {
                for &sigma1 in &self.sigma1.points() {
                    for &sigma2 in &self.sigma2.points() {
                        points.push(ParameterVector::new(mu1, mu2, sigma1, sigma2)?);
                    }
                }
            }
        }
        let n = points.len();
        PriorGrid::new(points, vec![1.0 / n as f64; n])
    }
}

/// Discrete distribution over parameter vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorGrid {
    points: Vec<ParameterVector>,
    masses: Vec<f64>,
}

impl PriorGrid {
    /// Masses are normalized; they must be nonnegative with a positive sum.
    pub fn new(points: Vec<ParameterVector>, masses: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != masses.len() {
            return Err(Error::Config("prior needs one mass per point and at least one point".into()));
        }
        if masses.iter().any(|&m| !(m >= 0.0) || !m.is_finite()) {
            return Err(Error::Config("prior masses must be finite and >= 0".into()));
        }
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Config("prior has zero total mass".into()));
        }
        let masses = masses.into_iter().map(|m| m / total).collect();
        Ok(Self { points, masses })
    }

    /// Trusted constructor that keeps the masses bit-for-bit.
    pub(crate) fn from_raw(points: Vec<ParameterVector>, masses: Vec<f64>) -> Self {
        Self { points, masses }
    }

    pub fn point_mass(x: ParameterVector) -> Self {
        Self { points: vec![x], masses: vec![1.0] }
    }

    pub fn points(&self) -> &[ParameterVector] {
        &self.points
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mean(&self) -> ParameterVector {
        let mut acc = [0.0; 4];
        for (x, &w) in self.points.iter().zip(&self.masses) {
            for (a, v) in acc.iter_mut().zip(x.as_array()) {
                *a += w * v;
            }
        }
        ParameterVector { mu1: acc[0], mu2: acc[1], sigma1: acc[2], sigma2: acc[3] }
    }

    /// SHA-256 over the little-endian points and masses.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for (x, &w) in self.points.iter().zip(&self.masses) {
            for v in x.as_array() {
                h.update(v.to_le_bytes());
            }
            h.update(w.to_le_bytes());
        }
        let mut out = [0u8; 32];
        out.copy_from_slice(&h.finalize());
        out
    }
}

/// Posterior after one read: mass times the likelihood of `r.y`.
pub fn bayes_update(prior: &PriorGrid, r: ReadRecord, noise: &ReadNoiseModel) -> Result<PriorGrid> {
    let masses: Vec<f64> = prior
        .points
        .iter()
        .zip(&prior.masses)
        .map(|(x, &w)| w * noise.likelihood(x.cdf_sample(r.t), r.y))
        .collect();
    if !(masses.iter().sum::<f64>() > 0.0) {
        return Err(Error::InconsistentObservation);
    }
    PriorGrid::new(prior.points.clone(), masses)
}

/// Reads in canonical order (sorted by threshold).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReadHistory {
    pub reads: Vec<ReadRecord>,
}

impl ReadHistory {
    pub fn new(mut reads: Vec<ReadRecord>) -> Self {
        reads.sort_by(|a, b| a.t.total_cmp(&b.t));
        Self { reads }
    }

    /// Whether ones-fractions never decrease with the threshold.
    pub fn is_monotone(&self) -> bool {
        self.reads.windows(2).all(|w| w[0].y <= w[1].y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    /// `1 - BER(t_hat)` under the true parameters.
    Hard,
    /// Mismatched-decoding rate `C_{P, P_hat}` in bits.
    Soft,
    /// `I(X; Y) - D(P || P_hat)` in bits, with `D` the row-averaged
    /// divergence between transition matrices. Equals `Soft` when the
    /// output marginals of `P` and `P_hat` agree, and is smaller otherwise.
    InfoMinusDivergence,
}

impl RewardKind {
    /// Reward assigned when the estimator fails or the estimate is unusable.
    pub fn floor(&self) -> f64 {
        match self {
            RewardKind::Hard => 0.5,
            RewardKind::Soft | RewardKind::InfoMinusDivergence => 0.0,
        }
    }
}

/// How the terminal history is turned into parameter estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Closed-form level-by-level inversion of the reads.
    Progressive,
    /// Posterior mean of the parameters under the prior grid.
    PosteriorMean,
}

/// Estimated channel seen by the decoder at a fixed set of thresholds.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Scored {
    pub t_star: f64,
    /// `log2(2 p_hat_ij / (p_hat_1j + p_hat_2j))` per interval and level.
    pub lr: [[f64; 2]; 5],
    /// `log2 p_hat_ij`.
    pub lp: [[f64; 2]; 5],
    pub intervals: usize,
}

pub(crate) fn interval_probs(cdf: &[f64], out: &mut [f64; 5]) {
    let mut prev = 0.0;
    for (j, &c) in cdf.iter().enumerate() {
        out[j] = (c - prev).max(0.0);
        prev = c;
    }
    out[cdf.len()] = (1.0 - prev).max(0.0);
}

pub(crate) fn score(est: &[f64; 5], thresholds: &[f64]) -> Scored {
    let [mu1, s1, mu2, s2, t_star] = *est;
    let mut c1 = [0.0; 4];
    let mut c2 = [0.0; 4];
    for (j, &t) in thresholds.iter().enumerate() {
        c1[j] = norm_cdf((t - mu1) / s1);
        c2[j] = norm_cdf((t - mu2) / s2);
    }
    score_from_cdfs(t_star, &c1, &c2, thresholds.len())
}

/// Scores an estimate given its level cdfs at the `m` sorted thresholds.
pub(crate) fn score_from_cdfs(t_star: f64, c1: &[f64; 4], c2: &[f64; 4], m: usize) -> Scored {
    let (mut p1, mut p2) = ([0.0; 5], [0.0; 5]);
    interval_probs(&c1[..m], &mut p1);
    interval_probs(&c2[..m], &mut p2);
    let mut lr = [[f64::NEG_INFINITY; 2]; 5];
    let mut lp = [[f64::NEG_INFINITY; 2]; 5];
    for j in 0..=m {
        let s = p1[j] + p2[j];
        if s > 0.0 {
            lr[j] = [(2.0 * p1[j] / s).log2(), (2.0 * p2[j] / s).log2()];
            lp[j] = [p1[j].log2(), p2[j].log2()];
        }
    }
    Scored { t_star, lr, lp, intervals: m + 1 }
}

/// Reward at the true parameters `x`, whose per-interval probabilities are
/// `p1`, `p2` at the scored thresholds.
pub(crate) fn reward_at(kind: RewardKind, x: &ParameterVector, p1: &[f64; 5], p2: &[f64; 5], s: &Scored) -> f64 {
    let floor = kind.floor();
    match kind {
        RewardKind::Soft => {
            let mut acc = 0.0;
            for j in 0..s.intervals {
                for (p, l) in [(p1[j], s.lr[j][0]), (p2[j], s.lr[j][1])] {
                    if p > 0.0 {
                        if l == f64::NEG_INFINITY {
                            return floor;
                        }
                        acc += p * l;
                    }
                }
            }
            (0.5 * acc).max(floor)
        }
        RewardKind::InfoMinusDivergence => {
            let mut acc = 0.0;
            for j in 0..s.intervals {
                let m = p1[j] + p2[j];
                for (p, l) in [(p1[j], s.lp[j][0]), (p2[j], s.lp[j][1])] {
                    if p > 0.0 {
                        if l == f64::NEG_INFINITY {
                            return floor;
                        }
                        acc += p * (1.0 + l - m.log2());
                    }
                }
            }
            (0.5 * acc).max(floor)
        }
        RewardKind::Hard => {
            let t = s.t_star;
            let ber = 0.5 * (q_func((t - x.mu1) / x.sigma1) + q_func((x.mu2 - t) / x.sigma2));
            (1.0 - ber).max(floor)
        }
    }
}

/// `(mu1, sigma1, mu2, sigma2, t_star)` for reads sorted by threshold.
pub(crate) fn run_estimator(
    kind: EstimatorKind,
    known: &KnownParams,
    reads: &[(f64, f64)],
    posterior_mean: Option<[f64; 4]>,
) -> Option<[f64; 5]> {
    match kind {
        EstimatorKind::Progressive => estimate_with_threshold_core(reads, known).ok(),
        EstimatorKind::PosteriorMean => {
            let [mu1, mu2, s1, s2] = posterior_mean?;
            let t = crate::channel::gaussian_intersection(mu1, s1, mu2, s2, 1.0).ok()?;
            Some([mu1, s1, mu2, s2, t])
        }
    }
}

/// Expected terminal reward of `history` under `posterior`.
///
/// Estimator failures score the reward floor for every grid point.
pub fn expected_reward(
    posterior: &PriorGrid,
    history: &ReadHistory,
    reward: RewardKind,
    estimator: EstimatorKind,
    known: &KnownParams,
) -> f64 {
    let reads: Vec<(f64, f64)> = history.reads.iter().map(|r| (r.t, r.y)).collect();
    let mean = posterior.mean();
    let est = run_estimator(estimator, known, &reads, Some([mean.mu1, mean.mu2, mean.sigma1, mean.sigma2]));
    let Some(est) = est else {
        return reward.floor();
    };
    let ts: Vec<f64> = reads.iter().map(|r| r.0).collect();
    let scored = score(&est, &ts);
    let mut total = 0.0;
    for (x, &w) in posterior.points.iter().zip(&posterior.masses) {
        if w == 0.0 {
            continue;
        }
        let c1: Vec<f64> = ts.iter().map(|&t| norm_cdf((t - x.mu1) / x.sigma1)).collect();
        let c2: Vec<f64> = ts.iter().map(|&t| norm_cdf((t - x.mu2) / x.sigma2)).collect();
        let (mut p1, mut p2) = ([0.0; 5], [0.0; 5]);
        interval_probs(&c1, &mut p1);
        interval_probs(&c2, &mut p2);
        total += w * reward_at(reward, x, &p1, &p2, &scored);
    }
    total
}

/// Everything the recursion needs besides the prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpConfig {
    /// Candidate thresholds, strictly increasing.
    pub thresholds: Vec<f64>,
    /// Grid the observed ones-fractions are quantized to.
    pub y_grid: QuantizationGrid,
    pub noise: ReadNoiseModel,
    pub reward: RewardKind,
    pub estimator: EstimatorKind,
    pub known: KnownParams,
    /// Number of reads, at most 4.
    pub horizon: usize,
    /// States whose joint probability falls below this are dropped.
    pub mass_floor: f64,
    /// Drop histories whose ones-fractions decrease with the threshold.
    pub prune_non_monotone: bool,
}

impl DpConfig {
    /// Thresholds on the grid `0.03 + 0.04 k` inside `[lo, hi]` and y
    /// quantized in steps of 0.04. Rounding to that grid is the read noise:
    /// the true ones-fraction lies within ±0.02 of the observed bin, with no
    /// further perturbation. Use [`DpConfig::with_read_noise`] to add
    /// uniform noise before quantization.
    pub fn standard(lo: f64, hi: f64) -> Result<Self> {
        let tgrid = QuantizationGrid::new(0.03, 0.04)?;
        let y_grid = QuantizationGrid::new(0.0, 0.04)?;
        Ok(Self {
            thresholds: tgrid.points_in(lo, hi),
            y_grid,
            noise: ReadNoiseModel::none().with_quantization(y_grid),
            reward: RewardKind::InfoMinusDivergence,
            estimator: EstimatorKind::Progressive,
            known: KnownParams::default(),
            horizon: 4,
            mass_floor: 1e-9,
            prune_non_monotone: true,
        })
    }

    /// Adds uniform noise of half-width `h` ahead of the y quantization
    /// (`h = 0` keeps rounding as the only perturbation).
    pub fn with_read_noise(mut self, h: f64) -> Result<Self> {
        let base = if h == 0.0 { ReadNoiseModel::none() } else { ReadNoiseModel::uniform(h)? };
        self.noise = base.with_quantization(self.y_grid);
        Ok(self)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() || self.thresholds.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("thresholds must be nonempty and strictly increasing".into()));
        }
        if self.thresholds.len() > u8::MAX as usize {
            return Err(Error::Config("at most 255 candidate thresholds".into()));
        }
        if !(1..=4).contains(&self.horizon) || self.horizon > self.thresholds.len() {
            return Err(Error::Config(format!("horizon {} must be in 1..=4 and <= #thresholds", self.horizon)));
        }
        if self.estimator == EstimatorKind::Progressive && self.horizon != self.known.required_reads() {
            return Err(Error::Config(format!(
                "the progressive estimator needs exactly {} reads with these known parameters",
                self.known.required_reads()
            )));
        }
        let bins = self.y_grid.index_of(1.0) - self.y_grid.index_of(0.0) + 1;
        if bins > 64 {
            return Err(Error::Config("y grid has more than 64 bins on [0, 1]".into()));
        }
        if !(self.mass_floor >= 0.0) {
            return Err(Error::Config("mass floor must be >= 0".into()));
        }
        Ok(())
    }
}
