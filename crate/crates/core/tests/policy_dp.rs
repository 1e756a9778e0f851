use flashread_core::channel::{AnalyticReader, ReadNoiseModel, ReadRecord, VoltageModel};
use flashread_core::estimation::KnownParams;
use flashread_core::numerics::QuantizationGrid;
use flashread_core::policy::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_prior(known_level1: bool) -> PriorGrid {
    let mut points = Vec::new();
    let (mu1s, s1s): (&[f64], &[f64]) = if known_level1 { (&[1.0], &[0.15]) } else { (&[0.9, 1.0, 1.1], &[0.12, 0.17, 0.22]) };
    for &mu1 in mu1s {
        for &mu2 in &[1.85, 1.95, 2.05] {
            for &s1 in s1s {
                for &s2 in &[0.22, 0.28, 0.34] {
                    points.push(ParameterVector::new(mu1, mu2, s1, s2).unwrap());
                }
            }
        }
    }
    let n = points.len();
    PriorGrid::new(points, vec![1.0; n]).unwrap()
}

fn small_config(reward: RewardKind, estimator: EstimatorKind, known: KnownParams) -> DpConfig {
    let y_grid = QuantizationGrid::new(0.0, 0.2).unwrap();
    DpConfig {
        thresholds: (0..8).map(|k| 0.95 + 0.15 * k as f64).collect(),
        y_grid,
        noise: ReadNoiseModel::uniform(0.1).unwrap().with_quantization(y_grid),
        reward,
        estimator,
        known,
        horizon: 2,
        mass_floor: 0.0,
        prune_non_monotone: false,
    }
}

/// Bin values reachable at threshold `t` under `prior`, with per-point probabilities.
fn outcomes(cfg: &DpConfig, x: &ParameterVector, t: f64) -> Vec<(f64, f64)> {
    cfg.noise
        .outcome_distribution(x.cdf_sample(t), &cfg.y_grid)
        .into_iter()
        .filter(|&(_, p)| p > 0.0)
        .map(|(i, p)| (cfg.y_grid.value(i).clamp(0.0, 1.0), p))
        .collect()
}

/// Unnormalized value of reading `t1 -> y1` then `t2`: sum over second
/// outcomes of P(y1, y2) times the posterior expected reward.
fn branch_value(prior: &PriorGrid, cfg: &DpConfig, t1: f64, y1: f64, t2: f64) -> f64 {
    let mut ys: Vec<f64> = Vec::new();
    for x in prior.points() {
        for (y, _) in outcomes(cfg, x, t2) {
            if !ys.iter().any(|v| (v - y).abs() < 1e-12) {
                ys.push(y);
            }
        }
    }
    let mut total = 0.0;
    for y2 in ys {
        let r1 = ReadRecord { t: t1, y: y1 };
        let r2 = ReadRecord { t: t2, y: y2 };
        let joint: f64 = prior
            .points()
            .iter()
            .zip(prior.masses())
            .map(|(x, &w)| w * cfg.noise.likelihood(x.cdf_sample(t1), y1) * cfg.noise.likelihood(x.cdf_sample(t2), y2))
            .sum();
        if joint == 0.0 {
            continue;
        }
        let post = bayes_update(&bayes_update(prior, r1, &cfg.noise).unwrap(), r2, &cfg.noise).unwrap();
        let history = ReadHistory::new(vec![r1, r2]);
        total += joint * expected_reward(&post, &history, cfg.reward, cfg.estimator, &cfg.known);
    }
    total
}

/// Best value over every deterministic two-read strategy, enumerated one
/// strategy at a time, plus the value of the strategy `tables` encodes.
fn enumerate(prior: &PriorGrid, cfg: &DpConfig, tables: &PolicyTables) -> (f64, f64) {
    let ts = &cfg.thresholds;
    let mut best = f64::NEG_INFINITY;
    let mut of_policy = f64::NAN;
    for (k1, &t1) in ts.iter().enumerate() {
        let mut y1s: Vec<f64> = Vec::new();
        for x in prior.points() {
            for (y, _) in outcomes(cfg, x, t1) {
                if !y1s.iter().any(|v| (v - y).abs() < 1e-12) {
                    y1s.push(y);
                }
            }
        }
        let seconds: Vec<usize> = (0..ts.len()).filter(|&k| k != k1).collect();
        // table[i][j]: value of answering y1s[i] with seconds[j]
        let table: Vec<Vec<f64>> = y1s
            .iter()
            .map(|&y1| seconds.iter().map(|&k2| branch_value(prior, cfg, t1, y1, ts[k2])).collect())
            .collect();
        let radix = seconds.len();
        let count = radix.pow(y1s.len() as u32);
        for code in 0..count {
            let mut c = code;
            let mut v = 0.0;
            for row in &table {
                v += row[c % radix];
                c /= radix;
            }
            best = best.max(v);
        }
        if k1 as u8 == tables.t1_index {
            let mut v = 0.0;
            for (i, &y1) in y1s.iter().enumerate() {
                let b = tables.y_bin(y1);
                let k2 = tables.action(&[(k1 as u8, b)]).expect("reachable first read has an action");
                let j = seconds.iter().position(|&k| k == k2 as usize).unwrap();
                v += table[i][j];
            }
            of_policy = v;
        }
    }
    (best, of_policy)
}

fn check_against_enumeration(prior: &PriorGrid, cfg: &DpConfig) {
    let tables = backward_recursion(prior, cfg).unwrap();
    let (best, of_policy) = enumerate(prior, cfg, &tables);
    assert!((tables.root_value - best).abs() < 1e-12, "dp {} vs enumeration {best}", tables.root_value);
    assert!((of_policy - best).abs() < 1e-12, "policy value {of_policy} vs best {best}");
}

#[test]
fn recursion_matches_strategy_enumeration_soft() {
    let prior = small_prior(false);
    check_against_enumeration(&prior, &small_config(RewardKind::Soft, EstimatorKind::PosteriorMean, KnownParams::default()));
}

#[test]
fn recursion_matches_strategy_enumeration_hard() {
    let prior = small_prior(false);
    check_against_enumeration(&prior, &small_config(RewardKind::Hard, EstimatorKind::PosteriorMean, KnownParams::default()));
}

#[test]
fn recursion_matches_strategy_enumeration_known_level1() {
    let prior = small_prior(true);
    let known = KnownParams { mu1: Some(1.0), sigma1: Some(0.15) };
    check_against_enumeration(&prior, &small_config(RewardKind::Soft, EstimatorKind::Progressive, known));
}

fn coarse_tables() -> (PriorGrid, PolicyTables) {
    let prior = small_prior(false);
    let mut cfg = small_config(RewardKind::Soft, EstimatorKind::PosteriorMean, KnownParams::default());
    cfg.horizon = 3;
    let tables = backward_recursion(&prior, &cfg).unwrap();
    (prior, tables)
}

#[test]
fn policy_file_roundtrip() {
    let (_, tables) = coarse_tables();
    let bytes = to_bytes(&tables);
    assert_eq!(&bytes[..8], POLICY_MAGIC);
    assert_eq!(from_bytes(&bytes).unwrap(), tables);

    let lean = tables.clone().without_values();
    assert!(!lean.has_values());
    let lean_bytes = to_bytes(&lean);
    assert!(lean_bytes.len() < bytes.len());
    assert_eq!(from_bytes(&lean_bytes).unwrap(), lean);

    let dir = std::env::temp_dir().join(format!("flashread-policy-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("p.policy");
    save_policy(&tables, &path).unwrap();
    assert_eq!(load_policy(&path).unwrap(), tables);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn corrupt_policy_files_are_rejected() {
    let (_, tables) = coarse_tables();
    let bytes = to_bytes(&tables);
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(from_bytes(&bad).is_err());
    let mut bad = bytes.clone();
    bad[8] = 9;
    assert!(from_bytes(&bad).is_err());
    for cut in [4, 12, 40, bytes.len() / 2, bytes.len() - 1] {
        assert!(from_bytes(&bytes[..cut]).is_err(), "cut at {cut}");
    }
    let mut long = bytes.clone();
    long.push(0);
    assert!(from_bytes(&long).is_err());
}

#[test]
fn executing_a_policy_is_deterministic() {
    let (_, tables) = coarse_tables();
    let model = VoltageModel::slc(1.0, 0.12, 2.0, 0.22).unwrap();
    let run = |seed| {
        let mut reader = AnalyticReader::new(&model, tables.config.noise, ChaCha8Rng::seed_from_u64(seed));
        execute_policy(&tables, &mut reader).unwrap()
    };
    let (h1, e1) = run(3);
    let (h2, e2) = run(3);
    assert_eq!(h1, h2);
    assert_eq!(e1, e2);
    assert_eq!(h1.reads.len(), 3);
    // the first read is always t1, and later ones follow the tables
    let t1 = tables.t1();
    assert!(h1.reads.iter().any(|r| (r.t - t1).abs() < 1e-12));
    assert!(e1.t_star > e1.mu1 && e1.t_star < e1.mu2);
}

#[test]
fn stats_cover_every_first_read() {
    let (_, tables) = coarse_tables();
    let v = &tables.stats.first_read_values;
    assert_eq!(v.len(), tables.config.thresholds.len());
    let best = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!((best - tables.root_value).abs() < 1e-12);
    assert_eq!(v[tables.t1_index as usize], best);
    assert_eq!(tables.stats.states_per_stage[0], 1);
    assert!(tables.stats.pruned_mass.iter().all(|&m| m == 0.0));
}

#[test]
fn invalid_configs_are_rejected() {
    let prior = small_prior(false);
    let mut cfg = small_config(RewardKind::Soft, EstimatorKind::Progressive, KnownParams::default());
    assert!(backward_recursion(&prior, &cfg).is_err(), "progressive needs four reads");
    cfg.estimator = EstimatorKind::PosteriorMean;
    cfg.horizon = 5;
    assert!(backward_recursion(&prior, &cfg).is_err());
    cfg.horizon = 2;
    cfg.thresholds = vec![1.0, 1.0, 1.2];
    assert!(backward_recursion(&prior, &cfg).is_err());
}
