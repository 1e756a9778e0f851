use std::collections::{BTreeMap, HashMap};

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    bayes_update, interval_probs, reward_at, run_estimator, score, score_from_cdfs, DpConfig, EstimatorKind, PriorGrid,
    ReadHistory, Scored,
};
use crate::channel::gaussian_intersection_core;
use crate::numerics::{q_func, q_inv};
use crate::channel::{ReadRecord, Reader};
use crate::error::{Error, Result};
use crate::estimation::ParameterEstimate;

/// Up to four quantized reads `(threshold index, y bin)` sorted by threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub(crate) struct Reads {
    k: [u8; 4],
    b: [u8; 4],
    len: u8,
}

impl Reads {
    pub(crate) fn from_pairs(pairs: &[(u8, u8)]) -> Self {
        let mut r = Reads::default();
        for &(k, b) in pairs {
            r = r.insert(k, b);
        }
        r
    }

    pub(crate) fn key(&self) -> u64 {
        let mut key = 0u64;
        for i in 0..self.len as usize {
            key |= ((self.k[i] as u64) << 8 | self.b[i] as u64) << (16 * i);
        }
        key
    }

    pub(crate) fn pairs(&self) -> Vec<(u8, u8)> {
        (0..self.len as usize).map(|i| (self.k[i], self.b[i])).collect()
    }

    fn contains(&self, k: u8) -> bool {
        self.k[..self.len as usize].contains(&k)
    }

    fn insert(&self, k: u8, b: u8) -> Reads {
        let n = self.len as usize;
        let pos = self.k[..n].iter().position(|&x| x > k).unwrap_or(n);
        let mut out = *self;
        for i in (pos..n).rev() {
            out.k[i + 1] = self.k[i];
            out.b[i + 1] = self.b[i];
        }
        out.k[pos] = k;
        out.b[pos] = b;
        out.len += 1;
        out
    }

    fn monotone(&self) -> bool {
        self.b[..self.len as usize].windows(2).all(|w| w[0] <= w[1])
    }
}

pub(crate) fn decode_key(key: u64, len: usize) -> Vec<(u8, u8)> {
    (0..len).map(|i| (((key >> (16 * i + 8)) & 0xff) as u8, ((key >> (16 * i)) & 0xff) as u8)).collect()
}

type Support = Vec<(u32, f64)>;

#[derive(Debug, Clone, Copy)]
struct Entry {
    u: f64,
    mass: f64,
    action: u8,
}

/// Precomputed per-(grid point, threshold) quantities.
struct Model<'a> {
    cfg: &'a DpConfig,
    prior: &'a PriorGrid,
    nk: usize,
    f1: Vec<f64>,
    f2: Vec<f64>,
    out_start: Vec<u32>,
    out_len: Vec<u8>,
    out_bin: Vec<u8>,
    out_p: Vec<f64>,
    bin_y: Vec<f64>,
    /// `q_inv(2 y)` per bin, when `0 < 2y < 1`.
    bin_qinv: Vec<Option<f64>>,
    /// Four reads, nothing known: use the inlined inversion.
    fast: bool,
}

impl<'a> Model<'a> {
    fn new(cfg: &'a DpConfig, prior: &'a PriorGrid) -> Self {
        let nk = cfg.thresholds.len();
        let kmin = cfg.y_grid.index_of(0.0);
        let kmax = cfg.y_grid.index_of(1.0);
        let bin_y: Vec<f64> = (kmin..=kmax).map(|i| cfg.y_grid.value(i).clamp(0.0, 1.0)).collect();
        let bin_qinv = bin_y.iter().map(|&y| q_inv(2.0 * y).ok()).collect();
        let fast = cfg.estimator == EstimatorKind::Progressive
            && cfg.known.mu1.is_none()
            && cfg.known.sigma1.is_none();
        let g_n = prior.len();
        let mut m = Model {
            cfg,
            prior,
            nk,
            f1: Vec::with_capacity(g_n * nk),
            f2: Vec::with_capacity(g_n * nk),
            out_start: Vec::with_capacity(g_n * nk),
            out_len: Vec::with_capacity(g_n * nk),
            out_bin: Vec::new(),
            out_p: Vec::new(),
            bin_y,
            bin_qinv,
            fast,
        };
        for x in prior.points() {
            for &t in &cfg.thresholds {
                let c1 = crate::numerics::norm_cdf((t - x.mu1) / x.sigma1);
                let c2 = crate::numerics::norm_cdf((t - x.mu2) / x.sigma2);
                m.f1.push(c1);
                m.f2.push(c2);
                m.out_start.push(m.out_bin.len() as u32);
                let dist = cfg.noise.outcome_distribution(0.5 * (c1 + c2), &cfg.y_grid);
                let mut n = 0u8;
                for (idx, p) in dist {
                    if p > 0.0 {
                        m.out_bin.push((idx - kmin) as u8);
                        m.out_p.push(p);
                        n += 1;
                    }
                }
                m.out_len.push(n);
            }
        }
        m
    }

    #[inline]
    fn outcomes(&self, g: u32, k: usize) -> impl Iterator<Item = (u8, f64)> + '_ {
        let i = g as usize * self.nk + k;
        let s = self.out_start[i] as usize;
        let n = self.out_len[i] as usize;
        self.out_bin[s..s + n].iter().copied().zip(self.out_p[s..s + n].iter().copied())
    }

    fn root_support(&self) -> Support {
        self.prior.masses().iter().enumerate().filter(|(_, &w)| w > 0.0).map(|(g, &w)| (g as u32, w)).collect()
    }

    /// Splits a support by the outcome of a read at threshold `k`.
    fn refine(&self, support: &[(u32, f64)], k: usize) -> Vec<(u8, Support)> {
        let mut tmp: Vec<(u8, u32, f64)> = Vec::with_capacity(support.len() * 2);
        for &(g, u) in support {
            for (b, p) in self.outcomes(g, k) {
                tmp.push((b, g, u * p));
            }
        }
        tmp.sort_unstable_by_key(|e| (e.0, e.1));
        let mut out: Vec<(u8, Support)> = Vec::new();
        for (b, g, u) in tmp {
            match out.last_mut() {
                Some((lb, s)) if *lb == b => s.push((g, u)),
                _ => out.push((b, vec![(g, u)])),
            }
        }
        out
    }

    fn posterior_mean(&self, support: &[(u32, f64)]) -> Option<[f64; 4]> {
        let mut acc = [0.0; 5];
        for &(g, u) in support {
            let x = &self.prior.points()[g as usize];
            acc[0] += u * x.mu1;
            acc[1] += u * x.mu2;
            acc[2] += u * x.sigma1;
            acc[3] += u * x.sigma2;
            acc[4] += u;
        }
        (acc[4] > 0.0).then(|| [acc[0] / acc[4], acc[1] / acc[4], acc[2] / acc[4], acc[3] / acc[4]])
    }

    fn estimate(&self, reads: &Reads, posterior_mean: Option<[f64; 4]>) -> Option<[f64; 5]> {
        let mut buf = [(0.0, 0.0); 4];
        let n = reads.len as usize;
        for (slot, (&k, &b)) in buf.iter_mut().zip(reads.k.iter().zip(&reads.b)).take(n) {
            *slot = (self.cfg.thresholds[k as usize], self.bin_y[b as usize]);
        }
        run_estimator(self.cfg.estimator, &self.cfg.known, &buf[..n], posterior_mean)
    }

    /// Level-by-level inversion of four sorted reads, scored at their own
    /// thresholds. The fitted cdfs at the read points come out of the
    /// inversion itself, so only two extra tail evaluations are needed.
    fn fast_progressive(&self, reads: &Reads, ts: &[f64; 4]) -> Option<Scored> {
        let y = |i: usize| self.bin_y[reads.b[i] as usize];
        let x1 = self.bin_qinv[reads.b[0] as usize]?;
        let x2 = self.bin_qinv[reads.b[1] as usize]?;
        let s1 = (ts[1] - ts[0]) / (x1 - x2);
        if !(s1 > 0.0) || !s1.is_finite() {
            return None;
        }
        let mu1 = ts[1] + s1 * x2;
        let q3 = q_func((mu1 - ts[2]) / s1);
        let q4 = q_func((mu1 - ts[3]) / s1);
        let (a3, a4) = (2.0 * y(2) - q3, 2.0 * y(3) - q4);
        if !(a3 > 0.0 && a3 < 1.0 && a4 > 0.0 && a4 < 1.0) {
            return None;
        }
        let (x3, x4) = (q_inv(a3).ok()?, q_inv(a4).ok()?);
        let s2 = (ts[3] - ts[2]) / (x3 - x4);
        if !(s2 > 0.0) || !s2.is_finite() {
            return None;
        }
        let mu2 = ts[3] + s2 * x4;
        let t_star = gaussian_intersection_core(mu1, s1, mu2, s2, 1.0)?;
        let c1 = [2.0 * y(0), 2.0 * y(1), q3, q4];
        let c2 = [q_func((mu2 - ts[0]) / s2), q_func((mu2 - ts[1]) / s2), a3, a4];
        Some(score_from_cdfs(t_star, &c1, &c2, 4))
    }

    /// Best last read for a state one read short of the horizon.
    fn evaluate_terminal(&self, reads: &Reads, support: &[(u32, f64)]) -> (f64, u8) {
        #[derive(Clone, Copy)]
        enum Status {
            Pruned,
            Failed,
            Ok(Scored),
        }
        let floor = self.cfg.reward.floor();
        let pm = self.cfg.estimator == EstimatorKind::PosteriorMean;
        let mut best = (f64::NEG_INFINITY, 0u8);
        let mut per_bin: Vec<(u8, Support)> = Vec::new();
        let mut status = [Status::Pruned; 64];
        for k in 0..self.nk {
            let k8 = k as u8;
            if reads.contains(k8) {
                continue;
            }
            let full_k = reads.insert(k8, 0);
            let n = full_k.len as usize;
            let mut ts = [0.0; 4];
            for (t, &k) in ts.iter_mut().zip(&full_k.k).take(n) {
                *t = self.cfg.thresholds[k as usize];
            }
            let mut seen = 0u64;
            for &(g, _) in support {
                for (b, _) in self.outcomes(g, k) {
                    seen |= 1 << b;
                }
            }
            if pm {
                per_bin = self.refine(support, k);
            }
            let mut bits = seen;
            while bits != 0 {
                let b = bits.trailing_zeros() as u8;
                bits &= bits - 1;
                let r = reads.insert(k8, b);
                let st = if self.cfg.prune_non_monotone && !r.monotone() {
                    Status::Pruned
                } else if self.fast {
                    self.fast_progressive(&r, &ts).map_or(Status::Failed, Status::Ok)
                } else {
                    let mean = if pm {
                        per_bin.iter().find(|(pb, _)| *pb == b).and_then(|(_, s)| self.posterior_mean(s))
                    } else {
                        None
                    };
                    match self.estimate(&r, mean) {
                        Some(est) => Status::Ok(score(&est, &ts[..n])),
                        None => Status::Failed,
                    }
                };
                status[b as usize] = st;
            }
            let mut total = 0.0;
            let (mut c1, mut c2) = ([0.0; 4], [0.0; 4]);
            let (mut p1, mut p2) = ([0.0; 5], [0.0; 5]);
            for &(g, u) in support {
                let base = g as usize * self.nk;
                for i in 0..n {
                    c1[i] = self.f1[base + full_k.k[i] as usize];
                    c2[i] = self.f2[base + full_k.k[i] as usize];
                }
                interval_probs(&c1[..n], &mut p1);
                interval_probs(&c2[..n], &mut p2);
                let x = &self.prior.points()[g as usize];
                for (b, p) in self.outcomes(g, k) {
                    let r = match &status[b as usize] {
                        Status::Pruned => 0.0,
                        Status::Failed => floor,
                        Status::Ok(s) => reward_at(self.cfg.reward, x, &p1, &p2, s),
                    };
                    total += u * p * r;
                }
            }
            if total > best.0 {
                best = (total, k8);
            }
        }
        best
    }

    /// Best next read given the values of the following stage.
    fn evaluate_inner(&self, reads: &Reads, support: &[(u32, f64)], next: &HashMap<u64, Entry>) -> (f64, u8) {
        let mut best = (f64::NEG_INFINITY, 0u8);
        for k in 0..self.nk {
            let k8 = k as u8;
            if reads.contains(k8) {
                continue;
            }
            let mut seen = 0u64;
            for &(g, _) in support {
                for (b, _) in self.outcomes(g, k) {
                    seen |= 1 << b;
                }
            }
            let mut total = 0.0;
            let mut bits = seen;
            while bits != 0 {
                let b = bits.trailing_zeros() as u8;
                bits &= bits - 1;
                if let Some(e) = next.get(&reads.insert(k8, b).key()) {
                    total += e.u;
                }
            }
            if total > best.0 {
                best = (total, k8);
            }
        }
        best
    }

    fn evaluate(&self, reads: &Reads, support: &[(u32, f64)], next: Option<&HashMap<u64, Entry>>) -> Entry {
        let (u, action) = match next {
            None => self.evaluate_terminal(reads, support),
            Some(map) => self.evaluate_inner(reads, support, map),
        };
        Entry { u, mass: support.iter().map(|s| s.1).sum(), action }
    }

    /// Depth-first enumeration of every state with `target` reads whose
    /// threshold indices exceed those already in `reads`.
    fn visit(
        &self,
        reads: Reads,
        support: &[(u32, f64)],
        min_k: usize,
        target: usize,
        next: Option<&HashMap<u64, Entry>>,
        out: &mut Vec<(u64, Entry)>,
    ) {
        if reads.len as usize == target {
            out.push((reads.key(), self.evaluate(&reads, support, next)));
            return;
        }
        for k in min_k..self.nk {
            self.descend(reads, support, k, target, next, out);
        }
    }

    fn descend(
        &self,
        reads: Reads,
        support: &[(u32, f64)],
        k: usize,
        target: usize,
        next: Option<&HashMap<u64, Entry>>,
        out: &mut Vec<(u64, Entry)>,
    ) {
        for (b, child) in self.refine(support, k) {
            let mass: f64 = child.iter().map(|s| s.1).sum();
            if mass < self.cfg.mass_floor {
                continue;
            }
            if self.cfg.prune_non_monotone && reads.len > 0 && b < reads.b[reads.len as usize - 1] {
                continue;
            }
            self.visit(reads.insert(k as u8, b), &child, k + 1, target, next, out);
        }
    }

    fn stage(&self, target: usize, next: Option<&HashMap<u64, Entry>>) -> HashMap<u64, Entry> {
        let root = self.root_support();
        if target == 0 {
            let mut out = Vec::new();
            self.visit(Reads::default(), &root, 0, 0, next, &mut out);
            return out.into_iter().collect();
        }
        let parts: Vec<Vec<(u64, Entry)>> = (0..self.nk)
            .into_par_iter()
            .map(|k| {
                let mut out = Vec::new();
                self.descend(Reads::default(), &root, k, target, next, &mut out);
                out
            })
            .collect();
        let mut map = HashMap::with_capacity(parts.iter().map(Vec::len).sum());
        for part in parts {
            map.extend(part);
        }
        map
    }

    /// Follows the optimal policy from the root, recording every reachable
    /// state and the mass lost to pruning at each read.
    #[allow(clippy::too_many_arguments)]
    fn walk(
        &self,
        maps: &[HashMap<u64, Entry>],
        reads: Reads,
        support: &[(u32, f64)],
        k: usize,
        tables: &mut [BTreeMap<u64, StageEntry>],
        pruned: &mut [f64],
    ) {
        let horizon = self.cfg.horizon;
        let s = reads.len as usize;
        for (b, child) in self.refine(support, k) {
            let mass: f64 = child.iter().map(|x| x.1).sum();
            let r = reads.insert(k as u8, b);
            if s + 1 == horizon {
                if self.cfg.prune_non_monotone && !r.monotone() {
                    pruned[s] += mass;
                }
                continue;
            }
            match maps[s + 1].get(&r.key()) {
                None => pruned[s] += mass,
                Some(e) => {
                    tables[s].insert(
                        r.key(),
                        StageEntry { action: e.action, value: Some(e.u / e.mass), mass: Some(e.mass) },
                    );
                    self.walk(maps, r, &child, e.action as usize, tables, pruned);
                }
            }
        }
    }
}

/// One stored policy decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    /// Index of the next threshold.
    pub action: u8,
    /// Expected terminal reward from this state.
    pub value: Option<f64>,
    /// Probability of reaching this state under the policy.
    pub mass: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DpStats {
    /// States evaluated at each depth `0..horizon`.
    pub states_per_stage: Vec<u64>,
    /// Probability mass dropped at each read under the optimal policy.
    pub pruned_mass: Vec<f64>,
    /// Expected reward of each candidate first threshold, followed optimally.
    pub first_read_values: Vec<f64>,
}

/// Optimal policy restricted to the states it can reach.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTables {
    pub config: DpConfig,
    pub prior: PriorGrid,
    pub t1_index: u8,
    /// Expected terminal reward of the whole policy.
    pub root_value: f64,
    /// `stages[i]` maps states with `i + 1` reads to the next threshold.
    pub stages: Vec<BTreeMap<u64, StageEntry>>,
    pub stats: DpStats,
}

impl PolicyTables {
    pub fn t1(&self) -> f64 {
        self.config.thresholds[self.t1_index as usize]
    }

    pub fn horizon(&self) -> usize {
        self.config.horizon
    }

    /// Index of the y bin holding `y`.
    pub fn y_bin(&self, y: f64) -> u8 {
        let g = &self.config.y_grid;
        let (lo, hi) = (g.index_of(0.0), g.index_of(1.0));
        (g.index_of(y).clamp(lo, hi) - lo) as u8
    }

    pub fn bin_value(&self, bin: u8) -> f64 {
        let g = &self.config.y_grid;
        g.value(g.index_of(0.0) + bin as i64).clamp(0.0, 1.0)
    }

    /// Threshold index closest to `t`.
    pub fn threshold_index(&self, t: f64) -> u8 {
        let ts = &self.config.thresholds;
        let mut best = 0;
        for (i, &c) in ts.iter().enumerate() {
            if (c - t).abs() < (ts[best] - t).abs() {
                best = i;
            }
        }
        best as u8
    }

    /// Next threshold index after the given `(threshold index, y bin)` reads.
    pub fn action(&self, reads: &[(u8, u8)]) -> Option<u8> {
        if reads.is_empty() {
            return Some(self.t1_index);
        }
        let stage = self.stages.get(reads.len() - 1)?;
        stage.get(&Reads::from_pairs(reads).key()).map(|e| e.action)
    }

    /// Second threshold as a function of the first observation, as
    /// `(y bin value, t2)` pairs.
    pub fn second_read_map(&self) -> Vec<(f64, f64)> {
        let Some(stage) = self.stages.first() else {
            return Vec::new();
        };
        stage
            .iter()
            .map(|(&key, e)| {
                let (_, b) = decode_key(key, 1)[0];
                (self.bin_value(b), self.config.thresholds[e.action as usize])
            })
            .collect()
    }

    /// Drops the value and mass columns; the policy itself is unchanged.
    pub fn without_values(mut self) -> Self {
        for stage in &mut self.stages {
            for e in stage.values_mut() {
                e.value = None;
                e.mass = None;
            }
        }
        self
    }

    pub fn has_values(&self) -> bool {
        self.stages.iter().flat_map(|s| s.values()).all(|e| e.value.is_some())
    }

    /// Human-readable summary.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("horizon {}\n", self.config.horizon));
        s.push_str(&format!("reward {:?}, estimator {:?}\n", self.config.reward, self.config.estimator));
        s.push_str(&format!("prior points {}\n", self.prior.len()));
        s.push_str(&format!("t1 {:.4}\n", self.t1()));
        s.push_str(&format!("expected reward {:.6}\n", self.root_value));
        for (i, stage) in self.stages.iter().enumerate() {
            s.push_str(&format!("stage {} states {}\n", i + 2, stage.len()));
        }
        for (i, m) in self.stats.pruned_mass.iter().enumerate() {
            s.push_str(&format!("pruned mass at read {} {:.3e}\n", i + 1, m));
        }
        for (y, t) in self.second_read_map() {
            s.push_str(&format!("y1 {y:.2} -> t2 {t:.4}\n"));
        }
        s
    }

    /// Nearest stored state with the same thresholds (L1 distance on bins),
    /// or over all states when no state shares the thresholds.
    fn nearest(&self, reads: &Reads) -> Option<u8> {
        let stage = self.stages.get(reads.len as usize - 1)?;
        let n = reads.len as usize;
        let mut best: Option<(u64, u8)> = None;
        for (&key, e) in stage {
            let other = decode_key(key, n);
            let mut d = 0u64;
            for (i, &(ok, ob)) in other.iter().enumerate().take(n) {
                d += (ok as i64 - reads.k[i] as i64).unsigned_abs() * 1_000_000;
                d += (ob as i64 - reads.b[i] as i64).unsigned_abs();
            }
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, e.action));
            }
        }
        best.map(|b| b.1)
    }
}

/// Solves the recursion and keeps the policy on its reachable states.
pub fn backward_recursion(prior: &PriorGrid, config: &DpConfig) -> Result<PolicyTables> {
    config.validate()?;
    let model = Model::new(config, prior);
    let horizon = config.horizon;
    let mut maps: Vec<HashMap<u64, Entry>> = vec![HashMap::new(); horizon];
    for target in (0..horizon).rev() {
        let next = if target + 1 == horizon { None } else { Some(&maps[target + 1]) };
        let map = model.stage(target, next);
        if map.is_empty() {
            return Err(Error::Config(format!("no feasible states with {target} reads; grid too coarse")));
        }
        maps[target] = map;
    }
    let root = maps[0][&0];
    if !root.u.is_finite() {
        return Err(Error::Config("no feasible first read".into()));
    }
    let mut stages = vec![BTreeMap::new(); horizon - 1];
    let mut pruned = vec![0.0; horizon];
    model.walk(&maps, Reads::default(), &model.root_support(), root.action as usize, &mut stages, &mut pruned);
    let mut first = vec![0.0; config.thresholds.len()];
    if horizon > 1 {
        // summed in key order so the result does not depend on hash order
        let mut keys: Vec<u64> = maps[1].keys().copied().collect();
        keys.sort_unstable();
        for key in keys {
            first[decode_key(key, 1)[0].0 as usize] += maps[1][&key].u / root.mass;
        }
    }
    let stats = DpStats {
        states_per_stage: maps.iter().map(|m| m.len() as u64).collect(),
        pruned_mass: pruned,
        first_read_values: first,
    };
    Ok(PolicyTables {
        config: config.clone(),
        prior: prior.clone(),
        t1_index: root.action,
        root_value: root.u / root.mass,
        stages,
        stats,
    })
}

/// Runs a policy online: each threshold follows from the quantized
/// outcomes of the earlier reads. Returns the quantized history and the
/// estimate computed from it.
pub fn execute_policy<R: Reader + ?Sized>(
    tables: &PolicyTables,
    reader: &mut R,
) -> Result<(ReadHistory, ParameterEstimate)> {
    let cfg = &tables.config;
    let mut reads = Reads::default();
    let mut raw: Vec<ReadRecord> = Vec::with_capacity(cfg.horizon);
    let mut k = tables.t1_index;
    for step in 0..cfg.horizon {
        let r = reader.read(cfg.thresholds[k as usize]);
        raw.push(r);
        reads = reads.insert(k, tables.y_bin(r.y));
        if step + 1 == cfg.horizon {
            break;
        }
        k = match tables.stages[step].get(&reads.key()) {
            Some(e) => e.action,
            None => {
                let fallback = tables.nearest(&reads).ok_or_else(|| Error::EstimationFailed {
                    reason: "policy table is empty".into(),
                    reads: raw.clone(),
                })?;
                debug!("history {:?} not in policy table; using nearest stored state", reads.pairs());
                if reads.contains(fallback) {
                    // the neighbour's action was already used here: take the closest unused threshold
                    (0..cfg.thresholds.len() as u8)
                        .filter(|c| !reads.contains(*c))
                        .min_by_key(|c| (*c as i32 - fallback as i32).abs())
                        .expect("horizon <= number of thresholds")
                } else {
                    fallback
                }
            }
        };
    }
    let history = ReadHistory::new(
        reads.pairs().iter().map(|&(k, b)| ReadRecord { t: cfg.thresholds[k as usize], y: tables.bin_value(b) }).collect(),
    );
    let pairs: Vec<(f64, f64)> = history.reads.iter().map(|r| (r.t, r.y)).collect();
    let mean = match cfg.estimator {
        EstimatorKind::Progressive => None,
        EstimatorKind::PosteriorMean => {
            let mut post = tables.prior.clone();
            for r in &history.reads {
                post = bayes_update(&post, *r, &cfg.noise)
                    .map_err(|e| Error::EstimationFailed { reason: e.to_string(), reads: raw.clone() })?;
            }
            let m = post.mean();
            Some([m.mu1, m.mu2, m.sigma1, m.sigma2])
        }
    };
    let est = run_estimator(cfg.estimator, &cfg.known, &pairs, mean).ok_or_else(|| Error::EstimationFailed {
        reason: "estimator rejected the policy's reads".into(),
        reads: raw.clone(),
    })?;
    let [mu1, s1, mu2, s2, t] = est;
    Ok((history, ParameterEstimate { mu1, sigma1: s1, mu2, sigma2: s2, t_star: t, diagnostics: None }))
}
