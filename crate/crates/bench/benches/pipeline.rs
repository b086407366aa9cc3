use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use simstore::algos::{train, Algorithm, TrainSpec};
use simstore::experiment::{collect_dataset, run_episode, CollectionPreset};
use simstore::gbt::{fit_gbt, GbtHyperparams};
use simstore::neural::Mlp;
use simstore::policy::{AutoClose, RandomPolicy};
use simstore::{Days, SimConfig, NUM_FEATURES};

fn small_sim() -> SimConfig {
    SimConfig {
        num_initial_customers: 100,
        sim_duration: Days(10.0),
        ..SimConfig::desk_scale()
    }
}

fn simulate(c: &mut Criterion) {
    let sim = small_sim();
    c.bench_function("episode_100_customers_10_days", |b| {
        b.iter(|| {
            let mut policy = AutoClose::new(RandomPolicy::new(0.9, 3).unwrap());
            run_episode(&mut policy, &sim, 3).unwrap()
        })
    });
}

fn mlp(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let net = Mlp::new(&[NUM_FEATURES, 256, 256, 2], &mut rng);
    let x = Array2::from_shape_fn((128, NUM_FEATURES), |_| rng.random_range(-1.0..1.0));
    let g = Array2::from_shape_fn((128, 2), |_| rng.random_range(-1.0..1.0));
    c.bench_function("mlp_forward_128x256x256", |b| b.iter(|| net.forward(x.view()).unwrap()));
    c.bench_function("mlp_forward_backward_128x256x256", |b| {
        b.iter(|| {
            let cache = net.forward(x.view()).unwrap();
            net.backward(&cache, g.view())
        })
    });
}

fn gbt(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = Array2::from_shape_fn((2000, NUM_FEATURES), |_| rng.random_range(-1.0..1.0));
    let y: Vec<f64> = x.rows().into_iter().map(|r| f64::from(r[0] - r[1] > 0.0)).collect();
    let hp = GbtHyperparams {
        max_trees: 25,
        max_depth: 3,
        learning_rate: 0.1,
        ..GbtHyperparams::default()
    };
    c.bench_function("gbt_fit_2000_rows_25_trees", |b| {
        b.iter_batched(
            || ChaCha8Rng::seed_from_u64(3),
            |mut r| fit_gbt(x.view(), &y, None, &hp, &mut r).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn training(c: &mut Criterion) {
    let sim = small_sim();
    let records = collect_dataset(&sim, &CollectionPreset::medium(), 7).unwrap().records;
    let mut group = c.benchmark_group("train_one_epoch");
    group.sample_size(10);
    for alg in [Algorithm::Dqn, Algorithm::Bc, Algorithm::Cql] {
        let mut spec = TrainSpec::defaults(alg);
        spec.max_epochs = 1;
        group.bench_function(alg.as_str(), |b| b.iter(|| train(&records, &spec, 11).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, simulate, mlp, gbt, training);
criterion_main!(benches);
