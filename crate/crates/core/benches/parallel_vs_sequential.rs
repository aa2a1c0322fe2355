use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use movimpute::aid::{draw_ou_paths, OuAidParams};
use movimpute::experiments::{simulate_dataset, Imputation, StudyConfig};
use movimpute::impute::{run_process_imputation, ImputationConfig, ProcessModel};
use movimpute::parallel::set_sequential;
use movimpute::Point;

fn workload(c: &mut Criterion) {
    let mut cfg = StudyConfig::study2();
    cfg.scale = 0.5;
    cfg.imputations = vec![Imputation::Draws(64)];
    let regime = cfg.regimes[0].clone();
    let ds = simulate_dataset(&cfg, &regime, 0).unwrap();
    let params = OuAidParams {
        ou_autocorrelation: 50.0,
        ou_sigma: 50.0,
        obs_variance: regime.sigma_s_sq,
        initial_position: ds.data.locations()[0],
        initial_position_variance: 1e2,
    };
    let set = draw_ou_paths(&params, &ds.data, &ds.grid, 64, 1).unwrap();
    let icfg = ImputationConfig::new(
        ProcessModel::Drift {
            center: Point::zeros(),
            beta_prior_variance: 1e5,
        },
        500,
    );

    let mut group = c.benchmark_group("imputation");
    group.sample_size(10);
    for (label, sequential) in [("parallel", false), ("sequential", true)] {
        set_sequential(sequential);
        group.bench_function(BenchmarkId::new("draw_ou_paths_k64", label), |b| {
            b.iter(|| draw_ou_paths(&params, &ds.data, &ds.grid, 64, 1).unwrap())
        });
        group.bench_function(BenchmarkId::new("chain_k64", label), |b| {
            b.iter(|| run_process_imputation(&set, &ds.data, &icfg, 7).unwrap())
        });
    }
    set_sequential(false);
    group.finish();
}

criterion_group!(benches, workload);
criterion_main!(benches);
