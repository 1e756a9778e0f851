//! Ground-truth cell voltage models and the read channel.
//!
//! A read at threshold `t` reports the fraction of cells whose voltage lies
//! below `t` (those cells read as bit 1). In the analytic mode that fraction
//! is the mixture cdf at `t` plus read noise; [`CellArray`] provides an
//! explicit per-cell Monte Carlo mode.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{norm_cdf, phi, QuantizationGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Laplace,
}

/// Location and scale of one programmed level (σ for Gaussian, b for Laplace).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelParams {
    pub mu: f64,
    pub scale: f64,
}

impl LevelParams {
    pub fn new(mu: f64, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite() && mu.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "level needs finite mu and positive scale, got mu={mu}, scale={scale}"
            )));
        }
        Ok(Self { mu, scale })
    }
}

/// Per-level voltage distributions of a page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageModel {
    family: Family,
    levels: Vec<LevelParams>,
    priors: Vec<f64>,
}

impl VoltageModel {
    pub fn new(family: Family, levels: Vec<LevelParams>, priors: Option<Vec<f64>>) -> Result<Self> {
        if levels.len() < 2 {
            return Err(Error::InvalidParameter("a model needs at least two levels".into()));
        }
        for l in &levels {
            LevelParams::new(l.mu, l.scale)?;
        }
        if levels.windows(2).any(|w| w[0].mu >= w[1].mu) {
            return Err(Error::InvalidParameter("level means must be strictly increasing".into()));
        }
        let priors = match priors {
            Some(p) => {
                if p.len() != levels.len() || p.iter().any(|&v| !(v >= 0.0)) {
                    return Err(Error::InvalidParameter("one non-negative prior per level required".into()));
                }
                let sum: f64 = p.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidParameter(format!("priors sum to {sum}, expected 1")));
                }
                p
            }
            None => vec![1.0 / levels.len() as f64; levels.len()],
        };
        Ok(Self { family, levels, priors })
    }

    /// Two-level Gaussian page with equiprobable levels.
    pub fn slc(mu1: f64, sigma1: f64, mu2: f64, sigma2: f64) -> Result<Self> {
        Self::new(
            Family::Gaussian,
            vec![LevelParams::new(mu1, sigma1)?, LevelParams::new(mu2, sigma2)?],
            None,
        )
    }

    pub fn slc_laplace(mu1: f64, b1: f64, mu2: f64, b2: f64) -> Result<Self> {
        Self::new(
            Family::Laplace,
            vec![LevelParams::new(mu1, b1)?, LevelParams::new(mu2, b2)?],
            None,
        )
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn levels(&self) -> &[LevelParams] {
        &self.levels
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// P(V < t) for cells programmed to `level`.
    pub fn level_cdf(&self, level: usize, t: f64) -> f64 {
        let l = self.levels[level];
        family_cdf(self.family, l, t)
    }

    pub fn level_pdf(&self, level: usize, t: f64) -> f64 {
        let l = self.levels[level];
        match self.family {
            Family::Gaussian => phi((t - l.mu) / l.scale) / l.scale,
            Family::Laplace => (-(t - l.mu).abs() / l.scale).exp() / (2.0 * l.scale),
        }
    }

    /// Noiseless ones-fraction of a read at `t`: the mixture cdf.
    pub fn cdf_sample(&self, t: f64) -> f64 {
        self.priors
            .iter()
            .enumerate()
            .map(|(i, &p)| p * self.level_cdf(i, t))
            .sum()
    }

    fn require_slc(&self, op: &str) -> Result<()> {
        if self.levels.len() != 2 {
            return Err(Error::UnsupportedModel(format!(
                "{op} needs a two-level model, got {} levels",
                self.levels.len()
            )));
        }
        Ok(())
    }

    /// Bit-error rate of a single read at `t` (level 1 is written as bit 1).
    pub fn ber(&self, t: f64) -> Result<f64> {
        self.require_slc("ber")?;
        Ok(self.priors[0] * (1.0 - self.level_cdf(0, t)) + self.priors[1] * self.level_cdf(1, t))
    }

    /// BER-minimizing threshold: the level-pdf intersection between the means.
    pub fn optimal_threshold(&self) -> Result<f64> {
        self.require_slc("optimal_threshold")?;
        let (a, b) = (self.levels[0], self.levels[1]);
        let prior_ratio = self.priors[0] / self.priors[1];
        match self.family {
            Family::Gaussian => gaussian_intersection(a.mu, a.scale, b.mu, b.scale, prior_ratio),
            Family::Laplace => laplace_intersection(a.mu, a.scale, b.mu, b.scale, prior_ratio),
        }
    }

    pub fn t_mean(&self) -> Result<f64> {
        self.require_slc("t_mean")?;
        Ok(0.5 * (self.levels[0].mu + self.levels[1].mu))
    }

    /// Threshold at equal standardized distance from both means; splits
    /// the cells evenly when the levels are Gaussian and equiprobable.
    pub fn t_median(&self) -> Result<f64> {
        self.require_slc("t_median")?;
        let (a, b) = (self.levels[0], self.levels[1]);
        Ok((a.mu * b.scale + b.mu * a.scale) / (a.scale + b.scale))
    }

    pub fn transition_matrix(&self, thresholds: &[f64]) -> Result<TransitionMatrix> {
        self.require_slc("transition_matrix")?;
        check_sorted(thresholds)?;
        let row = |level: usize| -> Vec<f64> {
            let mut prev = 0.0;
            let mut out = Vec::with_capacity(thresholds.len() + 1);
            for &t in thresholds {
                let c = self.level_cdf(level, t);
                out.push((c - prev).max(0.0));
                prev = c;
            }
            out.push((1.0 - prev).max(0.0));
            out
        };
        TransitionMatrix::new(thresholds.to_vec(), row(0), row(1))
    }

    /// Parses the plain-text model format (see `docs/formats.md`).
    pub fn parse(text: &str) -> Result<Self> {
        let mut family = Family::Gaussian;
        let mut levels = Vec::new();
        let mut priors = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap_or_default();
            let rest: Vec<&str> = parts.collect();
            let bad = |msg: &str| Error::Format(format!("line {}: {msg}", lineno + 1));
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(&format!("not a number: {s}")));
            match key {
                "family" => {
                    family = match rest.first().copied() {
                        Some("gaussian") => Family::Gaussian,
                        Some("laplace") => Family::Laplace,
                        other => return Err(bad(&format!("unknown family {other:?}"))),
                    }
                }
                "level" => {
                    if rest.len() != 2 {
                        return Err(bad("expected `level <mu> <scale>`"));
                    }
                    levels.push(LevelParams::new(num(rest[0])?, num(rest[1])?)?);
                }
                "priors" => {
                    priors = Some(rest.iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?);
                }
                other => return Err(bad(&format!("unknown key {other}"))),
            }
        }
        Self::new(family, levels, priors)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let fam = match self.family {
            Family::Gaussian => "gaussian",
            Family::Laplace => "laplace",
        };
        let _ = writeln!(out, "family {fam}");
        for l in &self.levels {
            let _ = writeln!(out, "level {} {}", l.mu, l.scale);
        }
        let priors: Vec<String> = self.priors.iter().map(|p| p.to_string()).collect();
        let _ = writeln!(out, "priors {}", priors.join(" "));
        out
    }
}

fn family_cdf(family: Family, l: LevelParams, t: f64) -> f64 {
    match family {
        Family::Gaussian => norm_cdf((t - l.mu) / l.scale),
        Family::Laplace => {
            let z = (t - l.mu) / l.scale;
            if z < 0.0 {
                0.5 * z.exp()
            } else {
                1.0 - 0.5 * (-z).exp()
            }
        }
    }
}

/// Intersection of `p1 N(mu1, s1)` and `p2 N(mu2, s2)` inside `(mu1, mu2)`.
///
/// Solves `2 log(s2 p1 / (s1 p2)) = ((t-mu1)/s1)^2 - ((t-mu2)/s2)^2`; with
/// equal scales the quadratic term vanishes and the equation is linear.
pub fn gaussian_intersection(mu1: f64, s1: f64, mu2: f64, s2: f64, prior_ratio: f64) -> Result<f64> {
    gaussian_intersection_core(mu1, s1, mu2, s2, prior_ratio).ok_or_else(|| {
        Error::DegenerateEstimate(format!(
            "no pdf crossing inside (mu1, mu2) for ({mu1}, {s1}, {mu2}, {s2})"
        ))
    })
}

pub(crate) fn gaussian_intersection_core(mu1: f64, s1: f64, mu2: f64, s2: f64, prior_ratio: f64) -> Option<f64> {
    if !(s1 > 0.0 && s2 > 0.0) || !(mu1 < mu2) {
        return None;
    }
    let (v1, v2) = (s1 * s1, s2 * s2);
    let a = 1.0 / v1 - 1.0 / v2;
    let b = 2.0 * (mu2 / v2 - mu1 / v1);
    let c = mu1 * mu1 / v1 - mu2 * mu2 / v2 - 2.0 * (s2 * prior_ratio / s1).ln();
    let inside = |t: f64| t > mu1 && t < mu2;
    if a.abs() <= 1e-14 * (1.0 / v1).max(1.0 / v2) {
        let t = -c / b;
        return inside(t).then_some(t);
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let mid = 0.5 * (mu1 + mu2);
    let mut best: Option<f64> = None;
    for t in [q / a, c / q] {
        if t.is_finite() && inside(t) && best.is_none_or(|x| (t - mid).abs() < (x - mid).abs()) {
            best = Some(t);
        }
    }
    best
}

/// Laplace analog of [`gaussian_intersection`]; the log-pdfs are linear
/// between the means so the crossing has a closed form.
pub fn laplace_intersection(mu1: f64, b1: f64, mu2: f64, b2: f64, prior_ratio: f64) -> Result<f64> {
    if !(b1 > 0.0 && b2 > 0.0) || !(mu1 < mu2) {
        return Err(Error::DegenerateEstimate(format!(
            "need mu1 < mu2 and positive scales, got ({mu1}, {b1}, {mu2}, {b2})"
        )));
    }
    // log(p1/b1) - (t-mu1)/b1 = log(p2/b2) - (mu2-t)/b2
    let t = (mu1 / b1 + mu2 / b2 + (prior_ratio * b2 / b1).ln()) / (1.0 / b1 + 1.0 / b2);
    if t > mu1 && t < mu2 {
        Ok(t)
    } else {
        Err(Error::DegenerateEstimate(format!("crossing {t} outside ({mu1}, {mu2})")))
    }
}

fn check_sorted(thresholds: &[f64]) -> Result<()> {
    if thresholds.iter().any(|t| !t.is_finite()) {
        return Err(Error::Precondition("thresholds must be finite".into()));
    }
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Precondition(format!(
            "thresholds must be strictly increasing, got {thresholds:?}"
        )));
    }
    Ok(())
}

/// One threshold read: threshold and observed ones-fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadRecord {
    pub t: f64,
    pub y: f64,
}

impl ReadRecord {
    pub fn new(t: f64, y: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&y) || !t.is_finite() {
            return Err(Error::InvalidParameter(format!("read ({t}, {y}) needs finite t and y in [0, 1]")));
        }
        Ok(Self { t, y })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NoiseKind {
    None,
    Uniform { lo: f64, hi: f64 },
}

/// Additive perturbation of the observed ones-fraction, optionally followed
/// by quantization of `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadNoiseModel {
    pub kind: NoiseKind,
    pub y_quantization: Option<QuantizationGrid>,
}

impl ReadNoiseModel {
    pub fn none() -> Self {
        Self { kind: NoiseKind::None, y_quantization: None }
    }

    /// Zero-mean uniform noise on `[-half_width, half_width]`.
    pub fn uniform(half_width: f64) -> Result<Self> {
        Self::new(NoiseKind::Uniform { lo: -half_width, hi: half_width }, None)
    }

    pub fn new(kind: NoiseKind, y_quantization: Option<QuantizationGrid>) -> Result<Self> {
        if let NoiseKind::Uniform { lo, hi } = kind {
            if !(lo < hi) || ((lo + hi) / 2.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "uniform read noise must satisfy lo < hi and be zero-mean, got ({lo}, {hi})"
                )));
            }
        }
        Ok(Self { kind, y_quantization })
    }

    pub fn with_quantization(mut self, grid: QuantizationGrid) -> Self {
        self.y_quantization = Some(grid);
        self
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            NoiseKind::None => 0.0,
            NoiseKind::Uniform { lo, hi } => rng.random_range(lo..hi),
        }
    }

    /// Turns a noiseless cdf value into an observation.
    pub fn observe<R: Rng + ?Sized>(&self, cdf: f64, rng: &mut R) -> f64 {
        let noisy = cdf + self.sample(rng);
        let q = match self.y_quantization {
            Some(g) => g.quantize(noisy),
            None => noisy,
        };
        q.clamp(0.0, 1.0)
    }

    /// Density of the additive noise at `n` (`None` for a point mass).
    pub fn density(&self, n: f64) -> Option<f64> {
        match self.kind {
            NoiseKind::None => None,
            NoiseKind::Uniform { lo, hi } => Some(if n >= lo && n <= hi { 1.0 / (hi - lo) } else { 0.0 }),
        }
    }

    /// Likelihood of observing `y` when the noiseless ones-fraction is `cdf`.
    ///
    /// With a quantization grid this is the exact probability of the
    /// quantized outcome; otherwise it is the noise density at `y - cdf`
    /// (an indicator for noiseless reads).
    pub fn likelihood(&self, cdf: f64, y: f64) -> f64 {
        if let Some(grid) = self.y_quantization {
            let target = grid.index_of(y);
            return self
                .outcome_distribution(cdf, &grid)
                .into_iter()
                .filter(|&(k, _)| k == target)
                .map(|(_, p)| p)
                .sum();
        }
        match self.density(y - cdf) {
            Some(d) => d,
            None => {
                if (y - cdf).abs() <= 1e-12 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Exact distribution of the quantized, clamped observation index.
    ///
    /// Each entry is `(grid index, probability)`; indices are clamped to the
    /// grid points covering `[0, 1]`.
    pub fn outcome_distribution(&self, cdf: f64, grid: &QuantizationGrid) -> Vec<(i64, f64)> {
        let kmin = grid.index_of(0.0);
        let kmax = grid.index_of(1.0);
        let clamp = |k: i64| k.clamp(kmin, kmax);
        match self.kind {
            NoiseKind::None => vec![(clamp(grid.index_of(cdf)), 1.0)],
            NoiseKind::Uniform { lo, hi } => {
                let (a, b) = (cdf + lo, cdf + hi);
                let width = hi - lo;
                let first = grid.index_of(a);
                let last = grid.index_of(b);
                let mut out: Vec<(i64, f64)> = Vec::with_capacity((last - first + 1) as usize);
                for k in first..=last {
                    let edge_lo = grid.value(k) - 0.5 * grid.step();
                    let edge_hi = edge_lo + grid.step();
                    let overlap = (b.min(edge_hi) - a.max(edge_lo)).max(0.0);
                    if overlap <= 0.0 {
                        continue;
                    }
                    let k = clamp(k);
                    match out.last_mut() {
                        Some(last) if last.0 == k => last.1 += overlap / width,
                        _ => out.push((k, overlap / width)),
                    }
                }
                out
            }
        }
    }
}

/// Simulates a single analytic read.
pub fn read<R: Rng + ?Sized>(model: &VoltageModel, t: f64, noise: &ReadNoiseModel, rng: &mut R) -> ReadRecord {
    ReadRecord { t, y: noise.observe(model.cdf_sample(t), rng) }
}

/// Source of threshold reads.
pub trait Reader {
    fn read(&mut self, t: f64) -> ReadRecord;
}

/// Analytic reader over a ground-truth model with seeded read noise.
pub struct AnalyticReader<'a, R> {
    pub model: &'a VoltageModel,
    pub noise: ReadNoiseModel,
    pub rng: R,
    pub issued: usize,
}

impl<'a, R: Rng> AnalyticReader<'a, R> {
    pub fn new(model: &'a VoltageModel, noise: ReadNoiseModel, rng: R) -> Self {
        Self { model, noise, rng, issued: 0 }
    }
}

impl<R: Rng> Reader for AnalyticReader<'_, R> {
    fn read(&mut self, t: f64) -> ReadRecord {
        self.issued += 1;
        read(self.model, t, &self.noise, &mut self.rng)
    }
}

/// DMC transition probabilities from the two levels to the `M + 1` read
/// intervals `(-inf, t1], (t1, t2], ..., (tM, inf)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    thresholds: Vec<f64>,
    rows: [Vec<f64>; 2],
}

impl TransitionMatrix {
    pub fn new(thresholds: Vec<f64>, row1: Vec<f64>, row2: Vec<f64>) -> Result<Self> {
        check_sorted(&thresholds)?;
        let cols = thresholds.len() + 1;
        for row in [&row1, &row2] {
            if row.len() != cols {
                return Err(Error::InvalidParameter(format!(
                    "row has {} entries, expected {cols}",
                    row.len()
                )));
            }
            if row.iter().any(|&p| !(p >= 0.0)) {
                return Err(Error::InvalidParameter("transition probabilities must be >= 0".into()));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParameter(format!("row sums to {sum}")));
            }
        }
        Ok(Self { thresholds, rows: [row1, row2] })
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn row(&self, level: usize) -> &[f64] {
        &self.rows[level]
    }

    pub fn get(&self, level: usize, interval: usize) -> f64 {
        self.rows[level][interval]
    }

    pub fn num_intervals(&self) -> usize {
        self.thresholds.len() + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Page {
    Lower,
    Middle,
    Upper,
}

/// Threshold layout for multi-level page reads.
///
/// Thresholds are indexed A, B, C, ... between adjacent levels. Each page
/// uses a subset of them; a read shifts every threshold of the page by its
/// multiplier times the scalar `delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageLayout {
    pub base_thresholds: Vec<f64>,
    pub lower_multipliers: Vec<f64>,
    pub middle_multipliers: Vec<f64>,
    pub upper_multipliers: Vec<f64>,
}

impl PageLayout {
    /// Base thresholds midway between adjacent level means.
    pub fn for_model(model: &VoltageModel) -> Result<Self> {
        let n = model.num_levels();
        if n != 4 && n != 8 {
            return Err(Error::Precondition(format!("page reads need 4 or 8 levels, got {n}")));
        }
        let base_thresholds = model.levels().windows(2).map(|w| 0.5 * (w[0].mu + w[1].mu)).collect();
        let (lower, middle, upper) = if n == 8 {
            (vec![1.0], vec![1.0, -1.5], vec![1.0; 4])
        } else {
            (vec![1.0], Vec::new(), vec![1.0; 2])
        };
        Ok(Self {
            base_thresholds,
            lower_multipliers: lower,
            middle_multipliers: middle,
            upper_multipliers: upper,
        })
    }

    /// Threshold indices used by `page` and the bit read in each region
    /// delimited by them (Gray mapping, lowest region first).
    pub fn page_structure(num_levels: usize, page: Page) -> Result<(Vec<usize>, Vec<u8>)> {
        match (num_levels, page) {
            (8, Page::Lower) => Ok((vec![3], vec![1, 0])),
            (8, Page::Middle) => Ok((vec![1, 5], vec![1, 0, 1])),
            (8, Page::Upper) => Ok((vec![0, 2, 4, 6], vec![1, 0, 1, 0, 1])),
            (4, Page::Lower) => Ok((vec![1], vec![1, 0])),
            (4, Page::Upper) => Ok((vec![0, 2], vec![1, 0, 1])),
            (n, p) => Err(Error::Precondition(format!("page {p:?} is not defined for {n} levels"))),
        }
    }

    /// Shifted thresholds for a page read with parameter `delta`.
    pub fn thresholds(&self, num_levels: usize, page: Page, delta: f64) -> Result<Vec<f64>> {
        let (idx, _) = Self::page_structure(num_levels, page)?;
        let mult = match page {
            Page::Lower => &self.lower_multipliers,
            Page::Middle => &self.middle_multipliers,
            Page::Upper => &self.upper_multipliers,
        };
        if mult.len() != idx.len() || self.base_thresholds.len() + 1 != num_levels {
            return Err(Error::Precondition("page layout does not match the model".into()));
        }
        let ts: Vec<f64> = idx
            .iter()
            .zip(mult)
            .map(|(&i, &m)| self.base_thresholds[i] + m * delta)
            .collect();
        check_sorted(&ts)?;
        Ok(ts)
    }
}

/// Bit stored by `level` on `page` under the Gray mapping.
pub fn page_bit(num_levels: usize, page: Page, level: usize) -> Result<u8> {
    let (idx, bits) = PageLayout::page_structure(num_levels, page)?;
    let region = idx.iter().filter(|&&i| i < level).count();
    Ok(bits[region])
}

/// Noiseless ones-fraction of a page read.
pub fn page_ones_fraction(model: &VoltageModel, layout: &PageLayout, page: Page, delta: f64) -> Result<f64> {
    let n = model.num_levels();
    let ts = layout.thresholds(n, page, delta)?;
    let (_, bits) = PageLayout::page_structure(n, page)?;
    let mut total = 0.0;
    for level in 0..n {
        let mut prev = 0.0;
        for (region, &bit) in bits.iter().enumerate() {
            let c = if region < ts.len() { model.level_cdf(level, ts[region]) } else { 1.0 };
            if bit == 1 {
                total += model.priors()[level] * (c - prev);
            }
            prev = c;
        }
    }
    Ok(total)
}

/// Reads one page of a multi-level model; the record's `t` is the shift `delta`.
pub fn page_read<R: Rng + ?Sized>(
    model: &VoltageModel,
    layout: &PageLayout,
    page: Page,
    delta: f64,
    noise: &ReadNoiseModel,
    rng: &mut R,
) -> Result<ReadRecord> {
    let y = page_ones_fraction(model, layout, page, delta)?;
    Ok(ReadRecord { t: delta, y: noise.observe(y, rng) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PageReadRequest {
    pub page: Page,
    pub delta: f64,
}

/// Five page reads (two lower, three upper) covering all four MLC levels.
pub fn mlc_estimation_schedule(spread: f64) -> Vec<PageReadRequest> {
    let r = |page, delta| PageReadRequest { page, delta };
    vec![
        r(Page::Lower, -spread),
        r(Page::Lower, spread),
        r(Page::Upper, -spread),
        r(Page::Upper, 0.0),
        r(Page::Upper, spread),
    ]
}

/// Six page reads (one lower, two middle, three upper) covering all eight TLC levels.
pub fn tlc_estimation_schedule(spread: f64) -> Vec<PageReadRequest> {
    let r = |page, delta| PageReadRequest { page, delta };
    vec![
        r(Page::Lower, 0.0),
        r(Page::Middle, -spread),
        r(Page::Middle, spread),
        r(Page::Upper, -spread),
        r(Page::Upper, 0.0),
        r(Page::Upper, spread),
    ]
}

/// Explicit per-cell voltages for Monte Carlo reads.
#[derive(Debug, Clone)]
pub struct CellArray {
    voltages: Vec<f64>,
}

impl CellArray {
    /// Programs one cell per entry of `levels` (level indices into `model`).
    pub fn program<R: Rng + ?Sized>(model: &VoltageModel, levels: &[usize], rng: &mut R) -> Result<Self> {
        let mut voltages = Vec::with_capacity(levels.len());
        for &level in levels {
            let l = *model
                .levels()
                .get(level)
                .ok_or_else(|| Error::Precondition(format!("level {level} not in model")))?;
            let v = match model.family() {
                Family::Gaussian => {
                    let n = Normal::new(l.mu, l.scale).expect("scale validated");
                    n.sample(rng)
                }
                Family::Laplace => {
                    let u: f64 = rng.random_range(-0.5..0.5);
                    l.mu - l.scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
                }
            };
            voltages.push(v);
        }
        Ok(Self { voltages })
    }

    pub fn from_voltages(voltages: Vec<f64>) -> Self {
        Self { voltages }
    }

    pub fn voltages(&self) -> &[f64] {
        &self.voltages
    }

    pub fn len(&self) -> usize {
        self.voltages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voltages.is_empty()
    }

    /// Bits returned by a read at `t` (cells below `t` read as 1).
    pub fn read_bits(&self, t: f64) -> Vec<bool> {
        self.voltages.iter().map(|&v| v < t).collect()
    }

    pub fn ones_fraction(&self, t: f64) -> f64 {
        if self.voltages.is_empty() {
            return 0.0;
        }
        self.voltages.iter().filter(|&&v| v < t).count() as f64 / self.voltages.len() as f64
    }

    /// Read-interval index of every cell for sorted thresholds.
    pub fn interval_indices(&self, thresholds: &[f64]) -> Result<Vec<usize>> {
        check_sorted(thresholds)?;
        Ok(self
            .voltages
            .iter()
            .map(|&v| thresholds.partition_point(|&t| t <= v))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::q_func;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fresh() -> VoltageModel {
        VoltageModel::slc(1.0, 0.12, 2.0, 0.22).unwrap()
    }

    fn worn() -> VoltageModel {
        VoltageModel::slc(1.0, 0.18, 2.0, 0.32).unwrap()
    }

    /// Grid search over the closed-form BER; independent of the quadratic solve.
    fn grid_argmin_ber(m: &VoltageModel) -> (f64, f64) {
        let (a, b) = (m.levels()[0], m.levels()[1]);
        let ber = |t: f64| 0.5 * (q_func((b.mu - t) / b.scale) + 1.0 - q_func((a.mu - t) / a.scale));
        let mut best = (a.mu, f64::INFINITY);
        let mut t = a.mu;
        while t < b.mu {
            let v = ber(t);
            if v < best.1 {
                best = (t, v);
            }
            t += 1e-4;
        }
        best
    }

    #[test]
    fn cdf_sample_examples() {
        let m = fresh();
        assert!(m.cdf_sample(-10.0).abs() < 1e-12);
        let oracle = 0.5 * q_func(-7.5) + 0.5 * q_func(0.1 / 0.22);
        assert!((m.cdf_sample(1.9) - oracle).abs() < 1e-12);
        assert!((m.cdf_sample(1.9) - 0.6624).abs() < 1e-3);
        let sym = VoltageModel::slc(1.0, 0.2, 2.0, 0.2).unwrap();
        assert!((sym.cdf_sample(1.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn noiseless_read_is_exact_and_quantized_read_rounds() {
        let m = fresh();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = read(&m, 1.9, &ReadNoiseModel::none(), &mut rng);
        assert_eq!(r.y, m.cdf_sample(1.9));
        let q = ReadNoiseModel::none().with_quantization(QuantizationGrid::new(0.0, 0.04).unwrap());
        let r = read(&m, 1.9, &q, &mut rng);
        assert!((r.y - 0.68).abs() < 1e-12);
    }

    #[test]
    fn uniform_read_noise_is_unbiased() {
        let m = fresh();
        let noise = ReadNoiseModel::uniform(0.02).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| read(&m, 1.4, &noise, &mut rng).y).sum::<f64>() / n as f64;
        let se = 0.04 / 12f64.sqrt() / (n as f64).sqrt();
        assert!((mean - m.cdf_sample(1.4)).abs() < 3.0 * se);
    }

    #[test]
    fn read_is_deterministic_per_seed() {
        let m = worn();
        let noise = ReadNoiseModel::uniform(0.02).unwrap();
        let a = read(&m, 1.3, &noise, &mut ChaCha8Rng::seed_from_u64(3));
        let b = read(&m, 1.3, &noise, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
    }

    #[test]
    fn ber_examples() {
        let m = VoltageModel::slc(1.0, 0.25, 2.0, 0.25).unwrap();
        assert!((m.ber(1.5).unwrap() - q_func(2.0)).abs() < 1e-12);
        assert!((m.ber(1.5).unwrap() - 0.02275).abs() < 1e-4);
        assert!((fresh().ber(-50.0).unwrap() - 0.5).abs() < 1e-12);
        let t = fresh().optimal_threshold().unwrap();
        let b = fresh().ber(t).unwrap();
        assert!((b - 0.0015).abs() < 0.3 * 0.0015, "{b}");
        let tlc = VoltageModel::new(
            Family::Gaussian,
            (0..8).map(|i| LevelParams::new(i as f64, 0.1).unwrap()).collect(),
            None,
        )
        .unwrap();
        assert!(matches!(tlc.ber(0.5), Err(Error::UnsupportedModel(_))));
    }

    #[test]
    fn optimal_threshold_matches_grid_search() {
        for (m, expected) in [(fresh(), 1.37), (worn(), 1.39)] {
            let t = m.optimal_threshold().unwrap();
            let (tg, _) = grid_argmin_ber(&m);
            assert!((t - tg).abs() < 2e-4);
            assert!((t - expected).abs() < 0.02);
            // pdf intersection
            let (a, b) = (m.levels()[0], m.levels()[1]);
            let lhs = phi((b.mu - t) / b.scale) / b.scale;
            let rhs = phi((a.mu - t) / a.scale) / a.scale;
            assert!((lhs - rhs).abs() < 1e-9);
        }
        let sym = VoltageModel::slc(1.0, 0.2, 2.2, 0.2).unwrap();
        assert!((sym.optimal_threshold().unwrap() - 1.6).abs() < 1e-12);
    }

    #[test]
    fn optimal_threshold_beats_grid_and_heuristics() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let mu1 = rng.random_range(0.5..1.5);
            let s1 = rng.random_range(0.05..0.3);
            let mu2 = mu1 + rng.random_range(0.6..1.5);
            let s2 = rng.random_range(0.05..0.4);
            let m = VoltageModel::slc(mu1, s1, mu2, s2).unwrap();
            let t = m.optimal_threshold().unwrap();
            let best = m.ber(t).unwrap();
            assert!(best <= m.ber(m.t_mean().unwrap()).unwrap() + 1e-15);
            assert!(best <= m.ber(m.t_median().unwrap()).unwrap() + 1e-15);
            let mut x = mu1 - 3.0 * s1;
            while x < mu2 + 3.0 * s2 {
                assert!(best <= m.ber(x).unwrap() + 1e-15);
                x += 1e-3;
            }
        }
    }

    #[test]
    fn mean_and_median_thresholds() {
        let m = fresh();
        assert_eq!(m.t_mean().unwrap(), 1.5);
        let med = m.t_median().unwrap();
        assert!((med - 1.3529).abs() < 1e-4);
        assert!((m.cdf_sample(med) - 0.5).abs() < 1e-9);
        let sym = VoltageModel::slc(1.0, 0.2, 2.0, 0.2).unwrap();
        assert!((sym.t_mean().unwrap() - sym.t_median().unwrap()).abs() < 1e-12);
    }

    #[test]
    fn transition_matrix_examples() {
        let m = fresh();
        let p = m.transition_matrix(&[]).unwrap();
        assert_eq!(p.row(0), &[1.0]);
        assert_eq!(p.row(1), &[1.0]);
        let med = m.t_median().unwrap();
        let p = m.transition_matrix(&[med]).unwrap();
        assert!(((p.get(0, 0) + p.get(1, 0)) / 2.0 - 0.5).abs() < 1e-9);
        let p = m.transition_matrix(&[1.2, 1.35, 1.45, 1.6]).unwrap();
        let expected = [0.9522, 0.0461, 0.0016, 0.0001, 0.0000];
        // oracle: direct Q differences
        let f = |t: f64| q_func((1.0 - t) / 0.12);
        let oracle = [f(1.2), f(1.35) - f(1.2), f(1.45) - f(1.35), f(1.6) - f(1.45), 1.0 - f(1.6)];
        for j in 0..5 {
            assert!((p.get(0, j) - expected[j]).abs() < 1e-3);
            assert!((p.get(0, j) - oracle[j]).abs() < 1e-12);
        }
        assert!(matches!(m.transition_matrix(&[1.5, 1.2]), Err(Error::Precondition(_))));
    }

    #[test]
    fn single_threshold_matrix_gives_ber() {
        let m = worn();
        for t in [1.1, 1.3, 1.39, 1.7] {
            let p = m.transition_matrix(&[t]).unwrap();
            // interval 0 reads as 1; level 1 is bit 1
            let ber = 0.5 * (p.get(1, 0) + p.get(0, 1));
            assert!((ber - m.ber(t).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn monte_carlo_matches_cdf() {
        let m = worn();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 1_000_000;
        let levels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let cells = CellArray::program(&m, &levels, &mut rng).unwrap();
        for t in [1.0, 1.4, 1.9] {
            let p = m.cdf_sample(t);
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((cells.ones_fraction(t) - p).abs() < 4.0 * se, "t={t}");
        }
    }

    #[test]
    fn laplace_cells_follow_laplace_cdf() {
        let m = VoltageModel::slc_laplace(1.0, 0.1, 2.0, 0.15).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 400_000;
        let levels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let cells = CellArray::program(&m, &levels, &mut rng).unwrap();
        for t in [0.9, 1.1, 1.5, 2.1] {
            let p = m.cdf_sample(t);
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((cells.ones_fraction(t) - p).abs() < 4.0 * se, "t={t}");
        }
        let t = m.optimal_threshold().unwrap();
        assert!((m.level_pdf(0, t) - m.level_pdf(1, t)).abs() < 1e-12);
    }

    #[test]
    fn outcome_distribution_integrates_noise_over_bins() {
        let grid = QuantizationGrid::new(0.0, 0.04).unwrap();
        let noise = ReadNoiseModel::uniform(0.02).unwrap().with_quantization(grid);
        let d = noise.outcome_distribution(0.33, &grid);
        // [0.31, 0.35] splits into bin 8 (0.30..0.34) and bin 9 (0.34..0.38)
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].0, 8);
        assert!((d[0].1 - 0.75).abs() < 1e-12);
        assert!((d[1].1 - 0.25).abs() < 1e-12);
        assert_eq!(noise.outcome_distribution(0.0, &grid), vec![(0, 1.0)]);
        // bin 26 lies above 1 and folds into bin 25
        let top = noise.outcome_distribution(0.999, &grid);
        assert_eq!(top.len(), 2);
        assert_eq!((top[0].0, top[1].0), (24, 25));
        assert!((top[0].1 - 0.025).abs() < 1e-9 && (top[1].1 - 0.975).abs() < 1e-9);
        assert!((noise.likelihood(0.33, 0.36) - 0.25).abs() < 1e-12);
    }

    fn tlc() -> VoltageModel {
        let levels = (0..8).map(|i| LevelParams::new(1.0 + i as f64, 0.15).unwrap()).collect();
        VoltageModel::new(Family::Gaussian, levels, None).unwrap()
    }

    #[test]
    fn gray_mapping_pages_are_balanced_and_gray() {
        for n in [4usize, 8] {
            let pages: &[Page] = if n == 8 { &[Page::Lower, Page::Middle, Page::Upper] } else { &[Page::Lower, Page::Upper] };
            let code: Vec<Vec<u8>> = (0..n).map(|l| pages.iter().map(|&p| page_bit(n, p, l).unwrap()).collect()).collect();
            for w in code.windows(2) {
                let diff = w[0].iter().zip(&w[1]).filter(|(a, b)| a != b).count();
                assert_eq!(diff, 1);
            }
            for (i, _) in pages.iter().enumerate() {
                assert_eq!(code.iter().filter(|c| c[i] == 1).count(), n / 2);
            }
        }
    }

    #[test]
    fn page_reads() {
        let m = VoltageModel::new(
            Family::Gaussian,
            (0..8).map(|i| LevelParams::new(i as f64, 1e-3).unwrap()).collect(),
            None,
        )
        .unwrap();
        let layout = PageLayout::for_model(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for page in [Page::Lower, Page::Middle, Page::Upper] {
            let r = page_read(&m, &layout, page, 0.0, &ReadNoiseModel::none(), &mut rng).unwrap();
            assert!((r.y - 0.5).abs() < 1e-12);
        }

        let m = tlc();
        let layout = PageLayout::for_model(&m).unwrap();
        let lower = page_ones_fraction(&m, &layout, Page::Lower, 0.1).unwrap();
        assert!((lower - m.cdf_sample(layout.base_thresholds[3] + 0.1)).abs() < 1e-15);

        // middle page: cells between shifted B and F read 0
        let delta = 0.02;
        let tb = layout.base_thresholds[1] + delta;
        let tf = layout.base_thresholds[5] - 1.5 * delta;
        let between = m.cdf_sample(tf) - m.cdf_sample(tb);
        let y = page_ones_fraction(&m, &layout, Page::Middle, delta).unwrap();
        assert!((y - (1.0 - between)).abs() < 1e-12);

        let mlc = VoltageModel::new(
            Family::Gaussian,
            (0..4).map(|i| LevelParams::new(i as f64, 0.1).unwrap()).collect(),
            None,
        )
        .unwrap();
        let layout = PageLayout::for_model(&mlc).unwrap();
        assert!(page_read(&mlc, &layout, Page::Middle, 0.0, &ReadNoiseModel::none(), &mut rng).is_err());
        assert!(PageLayout::for_model(&fresh()).is_err());
    }

    #[test]
    fn schedules_have_expected_read_counts() {
        assert_eq!(mlc_estimation_schedule(0.1).len(), 5);
        let tlc = tlc_estimation_schedule(0.1);
        assert_eq!(tlc.len(), 6);
        assert_eq!(tlc.iter().filter(|r| r.page == Page::Upper).count(), 3);
    }

    #[test]
    fn model_text_roundtrip() {
        let m = worn();
        let parsed = VoltageModel::parse(&m.to_text()).unwrap();
        assert_eq!(parsed, m);
        let text = "# worn page\nfamily laplace\nlevel 1 0.1\nlevel 2 0.2 # comment\n";
        let m = VoltageModel::parse(text).unwrap();
        assert_eq!(m.family(), Family::Laplace);
        assert!(VoltageModel::parse("level 2 0.1\nlevel 1 0.1\n").is_err());
        assert!(VoltageModel::parse("bogus 1\n").is_err());
    }

    #[test]
    fn interval_indices_follow_thresholds() {
        let cells = CellArray::from_voltages(vec![0.5, 1.25, 1.5, 3.0]);
        assert_eq!(cells.interval_indices(&[1.0, 1.5, 2.0]).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(cells.read_bits(1.3), vec![true, true, false, false]);
    }
}
