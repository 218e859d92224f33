use infexplore::adversary::{
    batch_set, declaration_probability, run_adversarial, sample_conditioned, strength_report, AdversarySettings,
    BatchCompressed, Declaration, PosteriorGrid,
};
use infexplore::fixed_budget::{build_schedule, fixed_budget_arm, BudgetSchedule, BudgetScheduleParams, ScheduleKnobs};
use infexplore::fixed_confidence::{accept_loop, estimate_quantile};
use infexplore::reservoir::{admissible_reservoir, BanditEnv, Reservoir};
use infexplore::stats::binom_pmf;
use infexplore::ArmSource;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const RHO: f64 = 0.25;
const ALPHA: f64 = 0.6;
const BETA: f64 = 0.4;
const ETA: f64 = 0.3;

fn schedule(budget: u64) -> BudgetSchedule {
    build_schedule(BudgetScheduleParams { budget, knobs: ScheduleKnobs::default(), alpha: ALPHA, beta: BETA }).unwrap()
}

fn adversarial_fixed_budget(budget: u64, seed: u64) -> infexplore::adversary::AdversarialRun {
    let s = schedule(budget);
    let settings = AdversarySettings::new(budget, RHO, ALPHA, BETA, ETA, seed);
    run_adversarial(&settings, Box::new(|src| fixed_budget_arm(src, &s, budget, None).map(Some))).unwrap()
}

#[test]
fn toy_ledgers_are_consistent() {
    for seed in 0..200 {
        let run = adversarial_fixed_budget(200, seed);
        assert!(run.aborted.is_none(), "seed {seed}: {:?}", run.aborted);
        let mut prev = 0.0;
        for e in run.ledger.entries() {
            assert!(e.holds, "seed {seed}: declaration {} failed on its path", e.declaration);
            assert!(e.p_t > 0.0 && e.p_t <= 1.0);
            assert!(e.batch_size <= 20);
            // Additivity: each entry adds exactly ln(1/P_t).
            assert_eq!(e.cum_cost, prev + (-e.ln_p_t));
            assert!(e.cum_cost >= prev);
            prev = e.cum_cost;
        }
        assert!(run.record.true_mean.unwrap() < BETA);
        assert!(!run.record.success);
    }
}

#[test]
fn failure_frequency_respects_cost_floor() {
    let budget = 200;
    let max_cost = (0..200u64)
        .into_par_iter()
        .map(|seed| adversarial_fixed_budget(budget, seed).ledger.total_cost())
        .reduce(|| 0.0, f64::max);
    let s = schedule(budget);
    let adm = admissible_reservoir(ALPHA, BETA, ETA, RHO).unwrap();
    let runs = 100_000u64;
    let failures: u64 = (0..runs)
        .into_par_iter()
        .map(|seed| {
            let mut env = BanditEnv::new(adm.reservoir.clone(), seed ^ 0xa5a5_a5a5).with_budget(budget);
            let arm = fixed_budget_arm(&mut env, &s, budget, None).unwrap();
            u64::from(env.true_mean(arm) < BETA)
        })
        .sum();
    let freq = failures as f64 / runs as f64;
    let floor = (-max_cost).exp() / 3.0;
    assert!(freq >= floor, "failure frequency {freq} below e^-cost/3 = {floor} (max cost {max_cost})");
}

#[test]
fn never_pulling_algorithm_pays_prior_mass() {
    let settings = AdversarySettings::new(1000, RHO, ALPHA, BETA, ETA, 1);
    let run = run_adversarial(&settings, Box::new(|src: &mut dyn ArmSource| Ok(Some(src.fresh_arm())))).unwrap();
    assert_eq!(run.ledger.entries().len(), 1);
    let adm = admissible_reservoir(ALPHA, BETA, ETA, RHO).unwrap();
    let mass = adm.reservoir.cdf(BETA);
    assert!((run.ledger.total_cost() + mass.ln()).abs() <= 1e-9);
    let report = strength_report(ALPHA, BETA, RHO, 1000, &run.ledger).unwrap();
    assert!((report.failure_floor - mass).abs() <= 1e-9);
}

#[test]
fn strength_sequence_finite_and_positive() {
    for budget in [1_000u64, 10_000, 100_000] {
        let run = adversarial_fixed_budget(budget, 3);
        assert!(run.aborted.is_none());
        let r = strength_report(ALPHA, BETA, RHO, budget, &run.ledger).unwrap();
        assert!(r.cost > 0.0 && r.cost.is_finite());
        assert!(r.normalized_cost > 0.0 && r.normalized_cost.is_finite());
        if budget == 10_000 {
            let set = batch_set(budget, RHO).unwrap();
            for e in run.ledger.entries() {
                if let Declaration::BatchMeanAtMost { .. } = e.declaration {
                    assert!(e.pulls_before >= set.dense_end() - 1);
                    assert!(e.p_t >= 0.05, "step-2 probability {}", e.p_t);
                }
            }
        }
    }
}

#[test]
fn grid_refinement_drift() {
    let adm = admissible_reservoir(ALPHA, BETA, ETA, RHO).unwrap();
    let align = [ALPHA, BETA];
    let coarse = PosteriorGrid::from_reservoir(&adm.reservoir, 2048, &align).unwrap();
    let fine = PosteriorGrid::from_reservoir(&adm.reservoir, 8192, &align).unwrap();
    for (n, r) in [(0u64, 0u64), (3, 2), (6, 4), (10, 6)] {
        let (c, f) = (coarse.with_counts(n, r), fine.with_counts(n, r));
        for d in [Declaration::BatchMeanAtMost { bound: 0.5 }, Declaration::MeanStaysBelow { beta: BETA }] {
            let pc = declaration_probability(&c, 5, &d).unwrap();
            let pf = declaration_probability(&f, 5, &d).unwrap();
            assert!((pc - pf).abs() <= 1e-6, "n={n} r={r} {d}: {pc} vs {pf}");
        }
        assert!((c.mass_below(BETA) - f.mass_below(BETA)).abs() <= 1e-6);
        assert!((c.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-10);
    }
}

fn uniform_grid(lo: f64, hi: f64, cells: usize) -> (PosteriorGrid, Vec<f64>) {
    let h = (hi - lo) / cells as f64;
    let nodes: Vec<(f64, f64)> = (0..cells).map(|i| (lo + (i as f64 + 0.5) * h, 1.0)).collect();
    (PosteriorGrid::from_nodes(&nodes).unwrap(), nodes.iter().map(|n| n.0).collect())
}

#[test]
fn declaration_probability_matches_double_sum() {
    let (post, points) = uniform_grid(0.4, 0.6, 512);
    let d = Declaration::BatchMeanAtMost { bound: 0.5 };
    let mut oracle = 0.0;
    for &p in &points {
        for k in 0..=5u64 {
            oracle += binom_pmf(10, p, k).unwrap() / points.len() as f64;
        }
    }
    let got = declaration_probability(&post, 10, &d).unwrap();
    assert!((got - oracle).abs() <= 1e-10, "{got} vs {oracle}");
}

#[test]
fn conditioned_sampling_matches_enumeration() {
    let (post, points) = uniform_grid(0.2, 0.8, 512);
    let d = Declaration::BatchMeanAtMost { bound: 0.4 };
    let batch = 5u64;
    let mut exact = [0.0; 6];
    for &p in &points {
        for k in 0..=2u64 {
            exact[k as usize] += binom_pmf(batch, p, k).unwrap();
        }
    }
    let z: f64 = exact.iter().sum();
    exact.iter_mut().for_each(|v| *v /= z);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let draws = 100_000;
    let mut counts = vec![0u64; 6];
    for _ in 0..draws {
        let s = sample_conditioned(&post, batch, &d, &mut rng).unwrap();
        assert_eq!(s.rewards.iter().filter(|&&r| r).count() as u64, s.successes);
        counts[s.successes as usize] += 1;
    }
    let tv: f64 = exact.iter().zip(&counts).map(|(e, &c)| (e - c as f64 / draws as f64).abs()).sum::<f64>() / 2.0;
    assert!(tv <= 0.01, "total variation {tv}");
}

#[test]
fn unconstrained_sampling_matches_posterior_mean() {
    let (post, _) = uniform_grid(0.3, 0.7, 512);
    let d = Declaration::BatchMeanAtMost { bound: 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (batch, draws) = (8u64, 10_000);
    let means: Vec<f64> =
        (0..draws).map(|_| sample_conditioned(&post, batch, &d, &mut rng).unwrap().successes as f64 / batch as f64).collect();
    let m = means.iter().sum::<f64>() / draws as f64;
    let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (draws - 1) as f64;
    assert!((m - post.mean()).abs() <= 3.0 * (var / draws as f64).sqrt());
}

#[test]
fn compression_inflation_on_fixed_confidence_run() {
    for rho in [0.2, 0.25] {
        let budget = 1_000_000;
        let set = batch_set(budget, rho).unwrap();
        let env = BanditEnv::new(Reservoir::uniform(0.0, 1.0).unwrap(), 9);
        let mut wrapped = BatchCompressed::new(env, set, None);
        let est = estimate_quantile(&mut wrapped, 0.2, 0.1, 0.2, 0.2, 4.0).unwrap();
        accept_loop(&mut wrapped, 0.2, 0.2, 0.2, est.alpha_hat, 4.0).unwrap();
        assert!(wrapped.inflation() <= 1.0 + rho, "rho {rho}: inflation {}", wrapped.inflation());
    }
}

proptest! {
    #[test]
    fn batch_sets_increase_slowly(exp in 3.0f64..9.0, rho in 0.05f64..0.4) {
        let n = 10f64.powf(exp) as u64;
        if let Ok(set) = batch_set(n, rho) {
            let e = set.entries();
            prop_assert_eq!(e[0], 1);
            for w in e.windows(2) {
                prop_assert!(w[1] > w[0]);
                prop_assert!(w[1] as f64 / (w[0] + 1) as f64 <= 1.0 + rho + 1e-12);
            }
        }
    }
}
