use criterion::{criterion_group, criterion_main, Criterion};
use wesn_core::harness::{run_experiment, Execution, ExperimentConfig};

fn bench_config() -> ExperimentConfig {
    ExperimentConfig::parse(
        "detectors = wesn, lmmse-lmmse\nn_antennas = 2\npilots = mimo-comb\nn_subcarriers = 64\ncp_len = 8\n\
         tau_max = 5\nreadout_delay = 4\nn_neurons = 16\nbuffer_len = 8\npa_power_db = -10\nn_trials = 16\n",
    )
    .expect("bench config")
}

fn trials(c: &mut Criterion) {
    let cfg = bench_config();
    let mut g = c.benchmark_group("trials");
    g.sample_size(10);
    g.bench_function("sequential", |b| b.iter(|| run_experiment(&cfg, Execution::Sequential).unwrap()));
    g.bench_function("parallel", |b| b.iter(|| run_experiment(&cfg, Execution::Parallel { jobs: 0 }).unwrap()));
    g.finish();
}

criterion_group!(benches, trials);
criterion_main!(benches);
