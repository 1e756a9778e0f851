//! Binary policy files. All numbers are little-endian; see `docs/formats.md`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use super::engine::{DpStats, PolicyTables, StageEntry};
use super::{DpConfig, EstimatorKind, ParameterVector, PriorGrid, RewardKind};
use crate::channel::{NoiseKind, ReadNoiseModel};
use crate::error::{Error, Result};
use crate::estimation::KnownParams;
use crate::numerics::QuantizationGrid;

pub const POLICY_MAGIC: &[u8; 8] = b"FRPOLICY";
pub const POLICY_VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn opt_f64(&mut self, v: Option<f64>) {
        self.u8(v.is_some() as u8);
        self.f64(v.unwrap_or(0.0));
    }
    fn grid(&mut self, g: &QuantizationGrid) {
        self.f64(g.origin());
        self.f64(g.step());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format(format!("truncated policy file at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn opt_f64(&mut self) -> Result<Option<f64>> {
        let flag = self.u8()?;
        let v = self.f64()?;
        match flag {
            0 => Ok(None),
            1 => Ok(Some(v)),
            _ => Err(Error::Format("bad option flag".into())),
        }
    }
    fn grid(&mut self) -> Result<QuantizationGrid> {
        let origin = self.f64()?;
        let step = self.f64()?;
        QuantizationGrid::new(origin, step).map_err(|e| Error::Format(e.to_string()))
    }
}

pub fn to_bytes(t: &PolicyTables) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(POLICY_MAGIC);
    w.u32(POLICY_VERSION);

    let c = &t.config;
    w.u32(c.thresholds.len() as u32);
    for &x in &c.thresholds {
        w.f64(x);
    }
    w.grid(&c.y_grid);
    match c.noise.kind {
        NoiseKind::None => {
            w.u8(0);
            w.f64(0.0);
            w.f64(0.0);
        }
        NoiseKind::Uniform { lo, hi } => {
            w.u8(1);
            w.f64(lo);
            w.f64(hi);
        }
    }
    w.u8(c.noise.y_quantization.is_some() as u8);
    w.grid(&c.noise.y_quantization.unwrap_or(c.y_grid));
    w.u8(match c.reward {
        RewardKind::Hard => 0,
        RewardKind::Soft => 1,
        RewardKind::InfoMinusDivergence => 2,
    });
    w.u8(match c.estimator {
        EstimatorKind::Progressive => 0,
        EstimatorKind::PosteriorMean => 1,
    });
    w.opt_f64(c.known.mu1);
    w.opt_f64(c.known.sigma1);
    w.u8(c.horizon as u8);
    w.f64(c.mass_floor);
    w.u8(c.prune_non_monotone as u8);

    w.0.extend_from_slice(&t.prior.digest());
    w.u32(t.prior.len() as u32);
    for (x, &m) in t.prior.points().iter().zip(t.prior.masses()) {
        for v in [x.mu1, x.mu2, x.sigma1, x.sigma2, m] {
            w.f64(v);
        }
    }

    w.u8(t.t1_index);
    w.f64(t.root_value);
    let values = t.has_values();
    w.u8(values as u8);
    w.u8(t.stages.len() as u8);
    for stage in &t.stages {
        w.u32(stage.len() as u32);
        for (&key, e) in stage {
            w.u64(key);
            w.u8(e.action);
            if values {
                w.f64(e.value.unwrap_or(0.0));
                w.f64(e.mass.unwrap_or(0.0));
            }
        }
    }

    w.u8(t.stats.states_per_stage.len() as u8);
    for &n in &t.stats.states_per_stage {
        w.u64(n);
    }
    w.u8(t.stats.pruned_mass.len() as u8);
    for &m in &t.stats.pruned_mass {
        w.f64(m);
    }
    w.u32(t.stats.first_read_values.len() as u32);
    for &v in &t.stats.first_read_values {
        w.f64(v);
    }
    w.0
}

pub fn from_bytes(buf: &[u8]) -> Result<PolicyTables> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != POLICY_MAGIC {
        return Err(Error::Format("not a policy file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != POLICY_VERSION {
        return Err(Error::Format(format!("policy file version {version}, expected {POLICY_VERSION}")));
    }

    let n = r.u32()? as usize;
    let mut thresholds = Vec::with_capacity(n.min(256));
    for _ in 0..n {
        thresholds.push(r.f64()?);
    }
    let y_grid = r.grid()?;
    let kind = match r.u8()? {
        0 => {
            r.f64()?;
            r.f64()?;
            NoiseKind::None
        }
        1 => NoiseKind::Uniform { lo: r.f64()?, hi: r.f64()? },
        k => return Err(Error::Format(format!("unknown noise kind {k}"))),
    };
    let has_q = r.u8()? == 1;
    let q = r.grid()?;
    let noise = ReadNoiseModel::new(kind, has_q.then_some(q)).map_err(|e| Error::Format(e.to_string()))?;
    let reward = match r.u8()? {
        0 => RewardKind::Hard,
        1 => RewardKind::Soft,
        2 => RewardKind::InfoMinusDivergence,
        k => return Err(Error::Format(format!("unknown reward kind {k}"))),
    };
    let estimator = match r.u8()? {
        0 => EstimatorKind::Progressive,
        1 => EstimatorKind::PosteriorMean,
        k => return Err(Error::Format(format!("unknown estimator kind {k}"))),
    };
    let known = KnownParams { mu1: r.opt_f64()?, sigma1: r.opt_f64()? };
    let horizon = r.u8()? as usize;
    let mass_floor = r.f64()?;
    let prune_non_monotone = r.u8()? == 1;
    let config = DpConfig {
        thresholds,
        y_grid,
        noise,
        reward,
        estimator,
        known,
        horizon,
        mass_floor,
        prune_non_monotone,
    };
    config.validate().map_err(|e| Error::Format(e.to_string()))?;

    let mut digest = [0u8; 32];
    digest.copy_from_slice(r.take(32)?);
    let g = r.u32()? as usize;
    if g > buf.len() / 40 {
        return Err(Error::Format("truncated policy file (prior)".into()));
    }
    let mut points = Vec::with_capacity(g);
    let mut masses = Vec::with_capacity(g);
    for _ in 0..g {
        let (mu1, mu2, s1, s2, m) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?, r.f64()?);
        points.push(ParameterVector::new(mu1, mu2, s1, s2).map_err(|e| Error::Format(e.to_string()))?);
        masses.push(m);
    }
    let prior = PriorGrid::from_raw(points, masses);
    if prior.digest() != digest {
        return Err(Error::Format("prior digest mismatch".into()));
    }

    let t1_index = r.u8()?;
    let root_value = r.f64()?;
    let values = r.u8()? == 1;
    let n_stages = r.u8()? as usize;
    if n_stages + 1 != horizon {
        return Err(Error::Format(format!("{n_stages} stages for horizon {horizon}")));
    }
    let mut stages = Vec::with_capacity(n_stages);
    for _ in 0..n_stages {
        let count = r.u32()? as usize;
        let mut stage = BTreeMap::new();
        for _ in 0..count {
            let key = r.u64()?;
            let action = r.u8()?;
            let (value, mass) = if values { (Some(r.f64()?), Some(r.f64()?)) } else { (None, None) };
            stage.insert(key, StageEntry { action, value, mass });
        }
        stages.push(stage);
    }

    let mut stats = DpStats::default();
    for _ in 0..r.u8()? {
        stats.states_per_stage.push(r.u64()?);
    }
    for _ in 0..r.u8()? {
        stats.pruned_mass.push(r.f64()?);
    }
    let n_first = r.u32()? as usize;
    if n_first != config.thresholds.len() {
        return Err(Error::Format(format!("{n_first} first-read values for {} thresholds", config.thresholds.len())));
    }
    for _ in 0..n_first {
        stats.first_read_values.push(r.f64()?);
    }
    if r.pos != buf.len() {
        return Err(Error::Format(format!("{} trailing bytes in policy file", buf.len() - r.pos)));
    }
    Ok(PolicyTables { config, prior, t1_index, root_value, stages, stats })
}

/// Writes the policy atomically (temporary file, then rename).
pub fn save_policy(tables: &PolicyTables, path: &Path) -> Result<()> {
    let bytes = to_bytes(tables);
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_policy(path: &Path) -> Result<PolicyTables> {
    from_bytes(&std::fs::read(path)?)
}
