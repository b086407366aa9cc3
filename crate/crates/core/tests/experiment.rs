use std::collections::BTreeMap;

use simstore::algos::{train, Algorithm, TrainSpec};
use simstore::config::Days;
use simstore::experiment::{
    collect_dataset, evaluate_policy, normalize, random_search, read_reports, render_table, reference_policies,
    run_episode, write_reports, CollectionLevel, CollectionPreset, Distribution, SearchConfig, SearchSpace,
};
use simstore::policy::{wrap_autoclose, FraudAll, Oracle, Policy, RandomPolicy};
use simstore::{Action, Error, SimConfig};

fn small_sim() -> SimConfig {
    SimConfig {
        num_initial_customers: 120,
        sim_duration: Days(10.0),
        ..SimConfig::desk_scale()
    }
}

#[test]
fn day_zero_behavior_passes_about_ninety_percent() {
    let sim = SimConfig::desk_scale();
    let mut passes = 0usize;
    let mut total = 0usize;
    for seed in 0..3 {
        let data = collect_dataset(&sim, &CollectionPreset::medium(), seed).unwrap();
        for r in data.records.iter().filter(|r| r.time < 1.0) {
            total += 1;
            passes += usize::from(r.action == Action::Pass);
        }
    }
    let rate = passes as f64 / total as f64;
    assert!(total > 500, "{total} day-zero orders");
    assert!((rate - 0.9).abs() < 0.03, "pass rate {rate}");
}

#[test]
fn collection_refits_every_day() {
    let sim = small_sim();
    let data = collect_dataset(&sim, &CollectionPreset::medium(), 3).unwrap();
    assert!(data.retrain_times.len() <= 10);
    assert!(data.retrain_times.windows(2).all(|w| w[1] - w[0] >= 1.0 - 1e-9));
    assert!(data.retrain_times.iter().all(|t| (t - t.round()).abs() < 1e-9));
}

#[test]
fn expert_collection_earns_more_than_medium() {
    let sim = SimConfig::desk_scale();
    let seeds = [21u64, 22, 23, 24, 25];
    let nets: Vec<(f64, f64)> = std::thread::scope(|s| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let sim = &sim;
                s.spawn(move || {
                    let m = collect_dataset(sim, &CollectionPreset::medium(), seed).unwrap();
                    let e = collect_dataset(sim, &CollectionPreset::expert(), seed).unwrap();
                    (m.ledger.net_revenue(), e.ledger.net_revenue())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let medium: f64 = nets.iter().map(|n| n.0).sum::<f64>() / seeds.len() as f64;
    let expert: f64 = nets.iter().map(|n| n.1).sum::<f64>() / seeds.len() as f64;
    assert!(expert > medium, "expert {expert} medium {medium}");
}

#[test]
fn zero_duration_collects_nothing() {
    let sim = SimConfig {
        sim_duration: Days(0.0),
        ..SimConfig::desk_scale()
    };
    let data = collect_dataset(&sim, &CollectionPreset::medium(), 1).unwrap();
    assert!(data.records.is_empty());
    assert_eq!(data.ledger.net_revenue(), 0.0);
}

#[test]
fn collection_is_reproducible() {
    let sim = small_sim();
    for level in [CollectionLevel::Medium, CollectionLevel::Expert] {
        let preset = CollectionPreset::for_level(level);
        let a = collect_dataset(&sim, &preset, 9).unwrap();
        let b = collect_dataset(&sim, &preset, 9).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.retrain_times, b.retrain_times);
        let c = collect_dataset(&sim, &preset, 10).unwrap();
        assert_ne!(a.records, c.records);
    }
}

#[test]
fn cadence_must_divide_the_horizon() {
    let sim = small_sim();
    let preset = CollectionPreset {
        retrain_every: Days(3.0),
        ..CollectionPreset::medium()
    };
    assert!(matches!(collect_dataset(&sim, &preset, 1), Err(Error::Config(_))));
}

#[test]
fn reference_anchors() {
    let sim = small_sim();
    let seeds = [3, 4, 5];
    let fa = evaluate_policy(&FraudAll, &sim, &seeds).unwrap();
    assert!(fa.per_seed.iter().all(|s| s.net_revenue == 0.0 && s.normalized == 0.0));
    let or = evaluate_policy(&Oracle, &sim, &seeds).unwrap();
    assert_eq!(or.normalized_mean, 100.0);
    assert_eq!(or.normalized_sd, 0.0);
}

#[test]
fn oracle_dominates_every_policy_per_seed() {
    let sim = small_sim();
    let seeds = [6, 7, 8];
    let data = collect_dataset(&sim, &CollectionPreset::medium(), 6).unwrap();
    let mut spec = TrainSpec::defaults(Algorithm::Bc);
    spec.max_epochs = 5;
    let bc = train(&data.records, &spec, 1).unwrap().policy();
    let mut reports = vec![evaluate_policy(&bc, &sim, &seeds).unwrap()];
    for p in [0.0, 0.5, 0.9, 1.0] {
        reports.push(evaluate_policy(&RandomPolicy::new(p, 1).unwrap(), &sim, &seeds).unwrap());
    }
    for r in &reports {
        for s in &r.per_seed {
            assert!(s.oracle >= s.net_revenue, "{}: {} > oracle {}", r.policy, s.net_revenue, s.oracle);
        }
    }
}

#[test]
fn oracle_needs_the_outcome_channel() {
    let sim = small_sim();
    let (mut env, _) = simstore::SimStore::reset(&sim, 1).unwrap();
    let pending = *env.pending().unwrap();
    let ctx = env.decision_context(false).unwrap();
    assert!(matches!(Oracle.act(&pending.observation, &ctx), Err(Error::Contract(_))));
    let ctx = env.decision_context(true).unwrap();
    let a = Oracle.act(&pending.observation, &ctx).unwrap();
    assert_eq!(a == Action::Fraud, pending.order.fraudulent);
    env.step(a).unwrap();
}

#[test]
fn random_one_passes_everything() {
    let sim = small_sim();
    let mut p = RandomPolicy::new(1.0, 3).unwrap();
    let out = run_episode(&mut p, &sim, 2).unwrap();
    assert!(out.orders > 0);
    assert_eq!(out.frauded, 0);
    let refs = reference_policies(1.0, 3).unwrap();
    let names: Vec<String> = refs.iter().map(|p| p.name()).collect();
    assert_eq!(names.len(), 3);
    assert!(names.iter().any(|n| n == "oracle") && names.iter().any(|n| n == "fraud_all"));
}

#[test]
fn normalization_is_a_linear_map() {
    assert_eq!(normalize(50.0, 0.0, 100.0).unwrap(), 50.0);
    assert_eq!(normalize(-10.0, -30.0, 10.0).unwrap(), 50.0);
    assert_eq!(normalize(0.0, 0.0, 8.0).unwrap(), 0.0);
    assert!(matches!(normalize(1.0, 2.0, 2.0), Err(Error::Evaluation(_))));
}

#[test]
fn normalized_scores_ignore_the_price_scale() {
    let base = small_sim();
    let scaled = SimConfig {
        item_price_mean: base.item_price_mean * 7.0,
        item_price_sd: base.item_price_sd * 7.0,
        ..base.clone()
    };
    let seeds = [11, 12, 13];
    for p in [0.3, 0.8] {
        let policy = RandomPolicy::new(p, 5).unwrap();
        let a = evaluate_policy(&policy, &base, &seeds).unwrap();
        let b = evaluate_policy(&policy, &scaled, &seeds).unwrap();
        assert!(
            (a.normalized_mean - b.normalized_mean).abs() < 1e-6,
            "{} vs {}",
            a.normalized_mean,
            b.normalized_mean
        );
    }
}

#[test]
fn evaluation_closes_accounts_after_a_chargeback() {
    let sim = small_sim();
    let pass_all = RandomPolicy::new(1.0, 0).unwrap();
    let wrapped = evaluate_policy(&pass_all, &sim, &[1]).unwrap();
    let mut raw = pass_all.clone();
    let unwrapped = run_episode(&mut raw, &sim, 1).unwrap();
    let mut closed = wrap_autoclose(pass_all);
    let closed_run = run_episode(&mut closed, &sim, 1).unwrap();
    assert_eq!(wrapped.per_seed[0].net_revenue, closed_run.net_revenue());
    assert!(closed_run.net_revenue() > unwrapped.net_revenue());
}

#[test]
fn reports_round_trip_and_render() {
    let sim = small_sim();
    let dir = tempfile::tempdir().unwrap();
    let mut a = evaluate_policy(&RandomPolicy::new(0.9, 1).unwrap(), &sim, &[1, 2]).unwrap();
    a.dataset = Some("medium".into());
    let mut b = evaluate_policy(&FraudAll, &sim, &[1, 2]).unwrap();
    b.dataset = Some("expert".into());
    let path = dir.path().join("reports.jsonl");
    write_reports(&path, &[a.clone(), b.clone()]).unwrap();
    assert_eq!(read_reports(&path).unwrap(), vec![a, b]);
    let table = render_table(&read_reports(&path).unwrap(), &["medium", "expert"]);
    assert!(table.contains("medium") && table.contains("expert"));
    assert!(table.contains("0.00 ± 0.00"));
}

fn search_data() -> Vec<simstore::dataset::TransitionRecord> {
    collect_dataset(&small_sim(), &CollectionPreset::medium(), 4).unwrap().records
}

fn constant_overrides() -> BTreeMap<String, Distribution> {
    let mut o = BTreeMap::new();
    o.insert("max_epochs".to_string(), Distribution::Choice(vec![toml::Value::Integer(3)]));
    o.insert("learning_rate".to_string(), Distribution::Choice(vec![toml::Value::Float(1e-3)]));
    o
}

#[test]
fn search_with_one_trial_returns_it() {
    let records = search_data();
    let space = SearchSpace::default_for(Algorithm::Bc).with_overrides(&constant_overrides()).unwrap();
    let config = SearchConfig {
        budget: 1,
        eval_seeds: vec![1, 2],
        workers: 2,
    };
    let res = random_search(&records, &space, &small_sim(), &config, 5).unwrap();
    assert_eq!(res.leaderboard.len(), 1);
    let (spec, ck, report) = res.best.unwrap();
    assert_eq!(spec, TrainSpec::from_table(Algorithm::Bc, &res.leaderboard[0].params).unwrap());
    assert_eq!(ck.spec, spec);
    assert_eq!(Some(report.normalized_mean), res.leaderboard[0].normalized_mean);
}

#[test]
fn constant_space_repeats_one_configuration() {
    let records = search_data();
    let mut space = SearchSpace::default_for(Algorithm::Bc);
    let mut rng = simstore::rng::stream(0, simstore::rng::Stream::Search);
    let fixed = space.sample(&mut rng);
    space.params = fixed
        .iter()
        .map(|(k, v)| (k.clone(), Distribution::Choice(vec![v.clone()])))
        .collect();
    space = space.with_overrides(&constant_overrides()).unwrap();
    let config = SearchConfig {
        budget: 4,
        eval_seeds: vec![1, 2],
        workers: 2,
    };
    let res = random_search(&records, &space, &small_sim(), &config, 6).unwrap();
    assert_eq!(res.leaderboard.len(), 4);
    let first = &res.leaderboard[0].params;
    assert!(res.leaderboard.iter().all(|t| &t.params == first && t.error.is_none()));
    let means: Vec<f64> = res.leaderboard.iter().map(|t| t.normalized_mean.unwrap()).collect();
    assert!(means.windows(2).all(|w| w[0] >= w[1]), "ranked {means:?}");
}

#[test]
fn search_is_independent_of_worker_count() {
    let records = search_data();
    let space = SearchSpace::default_for(Algorithm::Bc).with_overrides(&constant_overrides()).unwrap();
    let run = |workers| {
        let config = SearchConfig {
            budget: 3,
            eval_seeds: vec![1],
            workers,
        };
        random_search(&records, &space, &small_sim(), &config, 8).unwrap().leaderboard
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn search_rejects_foreign_hyperparameters() {
    let mut o = BTreeMap::new();
    o.insert("beta".to_string(), Distribution::Uniform([0.0, 1.0]));
    assert!(SearchSpace::default_for(Algorithm::Dqn).with_overrides(&o).is_err());
    assert!(SearchSpace::default_for(Algorithm::Modqn).with_overrides(&o).is_ok());
}
