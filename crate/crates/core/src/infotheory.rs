//! Information measures for the binary-input read channel with equiprobable
//! inputs. Capacities are in bits; LLRs use natural logarithms.

use serde::{Deserialize, Serialize};

use crate::channel::TransitionMatrix;
use crate::error::{Error, Result};

/// Saturation magnitude for LLRs of intervals one level never reaches.
pub const LLR_MAX: f64 = 30.0;

/// `a * log2(b)` with `0 * log 0 = 0`.
#[inline]
fn xlog2(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a * b.log2()
    }
}

/// Mutual information between the stored bit and the read interval.
pub fn mutual_information(p: &TransitionMatrix) -> f64 {
    mutual_information_rows(p.row(0), p.row(1))
}

pub(crate) fn mutual_information_rows(p1: &[f64], p2: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&a, &b) in p1.iter().zip(p2) {
        acc += xlog2(a, a) + xlog2(b, b) - xlog2(a + b, 0.5 * (a + b));
    }
    (0.5 * acc).clamp(0.0, 1.0)
}

fn check_shape(p: &TransitionMatrix, p_hat: &TransitionMatrix) -> Result<()> {
    if p.thresholds() != p_hat.thresholds() {
        return Err(Error::Precondition("true and estimated matrices use different thresholds".into()));
    }
    Ok(())
}

fn check_support(p1: &[f64], p2: &[f64], q1: &[f64], q2: &[f64]) -> Result<()> {
    for j in 0..p1.len() {
        for (p, q) in [(p1[j], q1[j]), (p2[j], q2[j])] {
            if p > 0.0 && q == 0.0 {
                return Err(Error::SupportMismatch { interval: j, p });
            }
        }
    }
    Ok(())
}

/// Achievable rate when decoding with the estimated channel `p_hat` while
/// the true channel is `p`.
pub fn mismatched_bound(p: &TransitionMatrix, p_hat: &TransitionMatrix) -> Result<f64> {
    check_shape(p, p_hat)?;
    mismatched_bound_rows(p.row(0), p.row(1), p_hat.row(0), p_hat.row(1))
}

pub(crate) fn mismatched_bound_rows(p1: &[f64], p2: &[f64], q1: &[f64], q2: &[f64]) -> Result<f64> {
    check_support(p1, p2, q1, q2)?;
    let mut acc = 0.0;
    for j in 0..p1.len() {
        acc += xlog2(p1[j], q1[j]) + xlog2(p2[j], q2[j]) - xlog2(p1[j] + p2[j], 0.5 * (q1[j] + q2[j]));
    }
    Ok(0.5 * acc)
}

/// Row-averaged relative entropy `D(P || P_hat)` in bits.
pub fn kl_divergence(p: &TransitionMatrix, p_hat: &TransitionMatrix) -> Result<f64> {
    check_shape(p, p_hat)?;
    let (p1, p2, q1, q2) = (p.row(0), p.row(1), p_hat.row(0), p_hat.row(1));
    check_support(p1, p2, q1, q2)?;
    let mut acc = 0.0;
    for j in 0..p1.len() {
        if p1[j] > 0.0 {
            acc += p1[j] * (p1[j] / q1[j]).log2();
        }
        if p2[j] > 0.0 {
            acc += p2[j] * (p2[j] / q2[j]).log2();
        }
    }
    Ok((0.5 * acc).max(0.0))
}

/// Per-interval log-likelihood ratios `ln(p1k / p2k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlrTable {
    pub thresholds: Vec<f64>,
    pub llr: Vec<f64>,
}

impl LlrTable {
    /// LLR of the interval containing voltage `v`.
    pub fn lookup(&self, v: f64) -> f64 {
        self.llr[self.thresholds.partition_point(|&t| t <= v)]
    }
}

pub fn llr_table(p_hat: &TransitionMatrix) -> Result<LlrTable> {
    let (q1, q2) = (p_hat.row(0), p_hat.row(1));
    let mut llr = Vec::with_capacity(q1.len());
    for j in 0..q1.len() {
        let v = match (q1[j] > 0.0, q2[j] > 0.0) {
            (false, false) => return Err(Error::EmptyInterval(j)),
            (true, false) => LLR_MAX,
            (false, true) => -LLR_MAX,
            (true, true) => (q1[j] / q2[j]).ln().clamp(-LLR_MAX, LLR_MAX),
        };
        llr.push(v);
    }
    Ok(LlrTable { thresholds: p_hat.thresholds().to_vec(), llr })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::VoltageModel;
    use proptest::prelude::*;

    fn tm(r1: &[f64], r2: &[f64], t: &[f64]) -> TransitionMatrix {
        TransitionMatrix::new(t.to_vec(), r1.to_vec(), r2.to_vec()).unwrap()
    }

    fn h2(p: f64) -> f64 {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }

    #[test]
    fn mutual_information_examples() {
        let same = tm(&[0.3, 0.7], &[0.3, 0.7], &[1.0]);
        assert!(mutual_information(&same).abs() < 1e-15);
        let bsc = tm(&[0.9, 0.1], &[0.1, 0.9], &[1.0]);
        assert!((mutual_information(&bsc) - (1.0 - h2(0.1))).abs() < 1e-12);
        assert!((mutual_information(&bsc) - 0.5310).abs() < 1e-4);
        let perfect = tm(&[1.0, 0.0], &[0.0, 1.0], &[1.0]);
        assert_eq!(mutual_information(&perfect), 1.0);
    }

    #[test]
    fn kl_example_and_identity() {
        let p = tm(&[0.7, 0.3], &[0.3, 0.7], &[1.0]);
        let q = tm(&[0.8, 0.2], &[0.2, 0.8], &[1.0]);
        let oracle = 0.7 * (0.7f64 / 0.8).log2() + 0.3 * (0.3f64 / 0.2).log2();
        let d = kl_divergence(&p, &q).unwrap();
        assert!((d - oracle).abs() < 1e-12);
        assert!((d - 0.0411).abs() < 1e-3);
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        // column sums match, so the bound splits into I - D
        let c = mismatched_bound(&p, &q).unwrap();
        assert!((c - (mutual_information(&p) - d)).abs() < 1e-12);
        assert!((mismatched_bound(&p, &p).unwrap() - mutual_information(&p)).abs() < 1e-12);
    }

    #[test]
    fn support_mismatch_is_an_error() {
        let p = tm(&[0.7, 0.3], &[0.3, 0.7], &[1.0]);
        let q = tm(&[1.0, 0.0], &[0.3, 0.7], &[1.0]);
        assert!(matches!(mismatched_bound(&p, &q), Err(Error::SupportMismatch { interval: 1, .. })));
        assert!(matches!(kl_divergence(&p, &q), Err(Error::SupportMismatch { .. })));
        let other = tm(&[0.7, 0.3], &[0.3, 0.7], &[1.1]);
        assert!(matches!(mismatched_bound(&p, &other), Err(Error::Precondition(_))));
    }

    #[test]
    fn llr_examples() {
        let m = VoltageModel::slc(1.0, 0.12, 2.0, 0.22).unwrap();
        let t = m.t_median().unwrap();
        let l = llr_table(&m.transition_matrix(&[t]).unwrap()).unwrap();
        assert!(l.llr[0] > 0.0 && l.llr[1] < 0.0);

        let eq = tm(&[0.5, 0.5], &[0.5, 0.5], &[1.0]);
        assert_eq!(llr_table(&eq).unwrap().llr, vec![0.0, 0.0]);

        let l = llr_table(&m.transition_matrix(&[1.2, 1.35, 1.45, 1.6]).unwrap()).unwrap();
        let (outer, inner) = (l.llr[0].abs().min(l.llr[4].abs()), l.llr[1..4].iter().map(|v| v.abs()));
        for v in inner {
            assert!(v < outer);
        }
        assert_eq!(l.lookup(0.0), l.llr[0]);
        assert_eq!(l.lookup(1.4), l.llr[2]);

        let sat = tm(&[1.0, 0.0, 0.0], &[0.0, 0.5, 0.5], &[1.0, 2.0]);
        assert_eq!(llr_table(&sat).unwrap().llr, vec![LLR_MAX, -LLR_MAX, -LLR_MAX]);
        let empty = tm(&[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0], &[1.0, 2.0]);
        assert!(matches!(llr_table(&empty), Err(Error::EmptyInterval(1))));
    }

    #[test]
    fn estimated_matrix_never_beats_truth_with_matched_marginals() {
        let m = VoltageModel::slc(1.0, 0.12, 2.0, 0.22).unwrap();
        let t = [1.2, 1.35, 1.45, 1.6];
        let p = m.transition_matrix(&t).unwrap();
        let est = VoltageModel::slc(1.01, 0.125, 1.98, 0.21).unwrap();
        let q = est.transition_matrix(&t).unwrap();
        // Move the truth toward the estimate along a direction that keeps
        // column sums fixed.
        let diff: Vec<f64> = q.row(0).iter().zip(p.row(0)).map(|(a, b)| a - b).collect();
        let (r1, r2) = marginal_preserving(p.row(0), p.row(1), &diff, 0.99);
        assert!(r1.iter().zip(p.row(0)).any(|(a, b)| a != b));
        let q = tm(&r1, &r2, &t);
        assert!(mismatched_bound(&p, &q).unwrap() <= mutual_information(&p) + 1e-9);
    }

    fn random_matrix(raw1: &[f64], raw2: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n1: f64 = raw1.iter().sum();
        let n2: f64 = raw2.iter().sum();
        (raw1.iter().map(|x| x / n1).collect(), raw2.iter().map(|x| x / n2).collect())
    }

    /// Shifts mass `d_j` from row 2 to row 1 in each column, with `sum d = 0`,
    /// keeping column sums unchanged.
    fn marginal_preserving(p1: &[f64], p2: &[f64], raw: &[f64], scale: f64) -> (Vec<f64>, Vec<f64>) {
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        let mut d: Vec<f64> = raw.iter().map(|x| x - mean).collect();
        let mut lim = f64::INFINITY;
        for j in 0..d.len() {
            if d[j] > 0.0 {
                lim = lim.min(p2[j] / d[j]);
            } else if d[j] < 0.0 {
                lim = lim.min(p1[j] / -d[j]);
            }
        }
        let k = scale * lim.min(1.0);
        for v in d.iter_mut() {
            *v *= k;
        }
        ((0..d.len()).map(|j| p1[j] + d[j]).collect(), (0..d.len()).map(|j| p2[j] - d[j]).collect())
    }

    proptest! {
        #[test]
        fn gibbs_and_decomposition(
            raw1 in prop::collection::vec(0.01f64..1.0, 4),
            raw2 in prop::collection::vec(0.01f64..1.0, 4),
            shift in prop::collection::vec(0.0f64..1.0, 4),
            scale in 0.0f64..0.99,
        ) {
            let t = [1.0, 2.0, 3.0];
            let (p1, p2) = random_matrix(&raw1, &raw2);
            let (q1, q2) = marginal_preserving(&p1, &p2, &shift, scale);
            let p = tm(&p1, &p2, &t);
            let q = TransitionMatrix::new(t.to_vec(), q1, q2).unwrap();
            let d = kl_divergence(&p, &q).unwrap();
            let c = mismatched_bound(&p, &q).unwrap();
            let i = mutual_information(&p);
            prop_assert!(d >= 0.0);
            prop_assert!((c - (i - d)).abs() < 1e-9);
            prop_assert!(c <= i + 1e-9);
        }

        #[test]
        fn concave_in_estimate_with_matched_marginals(
            raw1 in prop::collection::vec(0.01f64..1.0, 4),
            raw2 in prop::collection::vec(0.01f64..1.0, 4),
            sa in prop::collection::vec(0.0f64..1.0, 4),
            sb in prop::collection::vec(0.0f64..1.0, 4),
        ) {
            let t = [1.0, 2.0, 3.0];
            let (p1, p2) = random_matrix(&raw1, &raw2);
            let p = tm(&p1, &p2, &t);
            let (a1, a2) = marginal_preserving(&p1, &p2, &sa, 0.9);
            let (b1, b2) = marginal_preserving(&p1, &p2, &sb, 0.9);
            let mid1: Vec<f64> = a1.iter().zip(&b1).map(|(x, y)| 0.5 * (x + y)).collect();
            let mid2: Vec<f64> = a2.iter().zip(&b2).map(|(x, y)| 0.5 * (x + y)).collect();
            let ca = mismatched_bound(&p, &tm(&a1, &a2, &t)).unwrap();
            let cb = mismatched_bound(&p, &tm(&b1, &b2, &t)).unwrap();
            let cm = mismatched_bound(&p, &tm(&mid1, &mid2, &t)).unwrap();
            prop_assert!(cm >= 0.5 * (ca + cb) - 1e-9);
        }

        #[test]
        fn refinement_never_loses_information(
            mu1 in 0.8f64..1.2, s1 in 0.05f64..0.3, gap in 0.3f64..1.5, s2 in 0.05f64..0.4,
            ts in prop::collection::vec(0.5f64..3.0, 1..5), extra in 0.5f64..3.0,
        ) {
            let m = VoltageModel::slc(mu1, s1, mu1 + gap, s2).unwrap();
            let mut t = ts.clone();
            t.sort_by(f64::total_cmp);
            t.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
            let base = mutual_information(&m.transition_matrix(&t).unwrap());
            if t.iter().all(|x| (x - extra).abs() > 1e-6) {
                t.push(extra);
                t.sort_by(f64::total_cmp);
                let finer = mutual_information(&m.transition_matrix(&t).unwrap());
                prop_assert!(finer >= base - 1e-12);
            }
        }
    }
}
