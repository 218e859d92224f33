use std::collections::HashSet;

use infexplore::harness::{derive_seed, run_trials, summarize, write_csv, ExperimentConfig, Mode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn csv_for(cfg: &ExperimentConfig) -> Vec<u8> {
    let (rows, _) = run_trials(cfg).unwrap();
    let mut out = Vec::new();
    write_csv(&rows, &mut out).unwrap();
    out
}

#[test]
fn csv_identical_across_thread_counts() {
    let mut cfg = ExperimentConfig::new(Mode::FixedBudget, "uniform:0,1");
    cfg.alpha = Some(0.9);
    cfg.beta = Some(0.8);
    cfg.budget = Some(20_000);
    cfg.trials = 64;
    cfg.master_seed = 99;
    let mut outputs = Vec::new();
    for threads in [1, 2, 7] {
        cfg.threads = Some(threads);
        outputs.push(csv_for(&cfg));
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
    let text = String::from_utf8(outputs.remove(0)).unwrap();
    assert!(text.starts_with("trial,seed,true_mean,samples,arms,success,ns\n"));
    assert_eq!(text.lines().count(), 65);
}

#[test]
fn summary_recomputable_from_rows() {
    let mut cfg = ExperimentConfig::new(Mode::FixedConfidence, "uniform:0,1");
    cfg.eta = Some(0.2);
    cfg.eps = Some(0.2);
    cfg.delta = Some(0.2);
    cfg.trials = 40;
    let (rows, summary) = run_trials(&cfg).unwrap();
    assert_eq!(rows.len(), 40);
    assert!(rows.iter().enumerate().all(|(i, r)| r.trial == i as u64 && r.seed == derive_seed(0, i as u64)));
    let mean_success = rows.iter().filter(|r| r.success).count() as f64 / 40.0;
    assert!((summary.failure_rate - (1.0 - mean_success)).abs() < 1e-15);
    assert_eq!(summary, summarize(&cfg, &rows));
    let mean = rows.iter().map(|r| r.samples as f64).sum::<f64>() / 40.0;
    assert!((summary.mean_samples - mean).abs() < 1e-9);
    assert!(summary.failure_ci.0 <= summary.failure_rate && summary.failure_rate <= summary.failure_ci.1);
}

#[test]
fn derived_seeds_do_not_collide() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1_000_000 {
        let s: u64 = rng.random();
        let i: u64 = rng.random();
        assert_ne!(derive_seed(s, 0), derive_seed(s, 1));
        assert_ne!(derive_seed(s, i), derive_seed(s.wrapping_add(1), i));
    }
    let seen: HashSet<u64> = (0..100_000).map(|i| derive_seed(7, i)).collect();
    assert_eq!(seen.len(), 100_000);
}

#[test]
fn deterministic_single_trial() {
    let mut cfg = ExperimentConfig::new(Mode::FixedBudget, "atoms:1.0@1.0");
    cfg.alpha = Some(0.9);
    cfg.beta = Some(0.8);
    cfg.budget = Some(1000);
    let (_, summary) = run_trials(&cfg).unwrap();
    assert_eq!(summary.success_rate, 1.0);
}
