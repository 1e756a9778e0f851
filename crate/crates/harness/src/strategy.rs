//! Read strategies: fixed threshold sets or a precomputed policy.

use flashread_core::channel::{CellArray, ReadNoiseModel, ReadRecord, Reader};
use flashread_core::estimation::{estimate_from_reads, KnownParams, ParameterEstimate};
use flashread_core::policy::{execute_policy, PolicyTables};
use rand::Rng;

/// Spread-out reads that favour estimation accuracy.
pub const S1: [f64; 4] = [0.85, 1.15, 1.75, 2.125];
/// Reads packed around the crossing point that favour soft information.
pub const S2: [f64; 4] = [1.2, 1.35, 1.45, 1.6];

#[derive(Debug, Clone)]
pub enum Strategy {
    Fixed { name: String, thresholds: Vec<f64> },
    Policy { name: String, tables: Box<PolicyTables> },
}

/// Reads issued by one strategy and what the estimator made of them.
#[derive(Debug, Clone)]
pub struct StrategyRun {
    /// Sorted by threshold.
    pub reads: Vec<ReadRecord>,
    pub estimate: Option<ParameterEstimate>,
}

impl Strategy {
    pub fn s1() -> Self {
        Strategy::Fixed { name: "S1".into(), thresholds: S1.to_vec() }
    }

    pub fn s2() -> Self {
        Strategy::Fixed { name: "S2".into(), thresholds: S2.to_vec() }
    }

    pub fn name(&self) -> &str {
        match self {
            Strategy::Fixed { name, .. } | Strategy::Policy { name, .. } => name,
        }
    }

    pub fn run<R: Reader + ?Sized>(&self, reader: &mut R) -> StrategyRun {
        match self {
            Strategy::Fixed { thresholds, .. } => {
                let mut reads: Vec<ReadRecord> = thresholds.iter().map(|&t| reader.read(t)).collect();
                reads.sort_by(|a, b| a.t.total_cmp(&b.t));
                let estimate = estimate_from_reads(&reads, &KnownParams::default()).ok();
                StrategyRun { reads, estimate }
            }
            Strategy::Policy { tables, .. } => {
                let mut log = RecordingReader { inner: reader, reads: Vec::new() };
                let estimate = execute_policy(tables, &mut log).ok().map(|(_, e)| e);
                let mut reads = log.reads;
                reads.sort_by(|a, b| a.t.total_cmp(&b.t));
                StrategyRun { reads, estimate }
            }
        }
    }
}

/// Keeps the raw observations a policy saw (the policy itself only
/// returns the quantized history).
struct RecordingReader<'a, R: ?Sized> {
    inner: &'a mut R,
    reads: Vec<ReadRecord>,
}

impl<R: Reader + ?Sized> Reader for RecordingReader<'_, R> {
    fn read(&mut self, t: f64) -> ReadRecord {
        let r = self.inner.read(t);
        self.reads.push(r);
        r
    }
}

/// Reads a programmed block: the observed fraction of ones plus read noise.
pub struct CellReader<'a, R> {
    pub cells: &'a CellArray,
    pub noise: ReadNoiseModel,
    pub rng: R,
}

impl<R: Rng> Reader for CellReader<'_, R> {
    fn read(&mut self, t: f64) -> ReadRecord {
        let y = self.noise.observe(self.cells.ones_fraction(t), &mut self.rng);
        ReadRecord { t, y }
    }
}
