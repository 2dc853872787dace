//! Sequential against rayon execution for the four data-parallel kernels.
//! With `--no-default-features` both arms run sequentially.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use orthoglass::ensemble_sim::{amp_replicates, Placement};
use orthoglass::oracle::quenched_free_energy;
use orthoglass::rs_core::{rs_constants, ModelSpec};
use orthoglass::spectral_law::{FieldLaw, SpectralLaw};
use orthoglass::state_evolution::{se_run, SE_ORDER};
use orthoglass::validation::hciz_mc_inputs;
use orthoglass::variational::hciz_monte_carlo;
use orthoglass::Execution;
use std::hint::black_box;

const ARMS: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn model() -> ModelSpec {
    ModelSpec::new(0.1, SpectralLaw::Rademacher, FieldLaw::point_mass(0.3)).unwrap()
}

fn enumeration(c: &mut Criterion) {
    let m = model();
    let mut g = c.benchmark_group("enumeration_n16_x4");
    g.sample_size(10);
    for (name, exec) in ARMS {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| quenched_free_energy(&m, 16, 4, 1, Placement::Quantile, exec).unwrap())
        });
    }
    g.finish();
}

fn hciz_mc(c: &mut Criterion) {
    let (a, b, d) = hciz_mc_inputs(200);
    let mut g = c.benchmark_group("hciz_mc_n200_40k");
    g.sample_size(10);
    for (name, exec) in ARMS {
        g.bench_function(BenchmarkId::from_parameter(name), |bch| {
            bch.iter(|| hciz_monte_carlo(&a, &b, &d, 40_000, 40, 7, exec).unwrap())
        });
    }
    g.finish();
}

fn state_evolution(c: &mut Criterion) {
    let m = ModelSpec::new(0.1, SpectralLaw::Semicircle, FieldLaw::gaussian(0.2, 0.5)).unwrap();
    let k = rs_constants(&m).unwrap();
    let mut g = c.benchmark_group("se_t8");
    g.sample_size(10);
    for (name, exec) in ARMS {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(se_run(&m, &k, 8, SE_ORDER, exec).unwrap()))
        });
    }
    g.finish();
}

fn amp(c: &mut Criterion) {
    let m = model();
    let k = rs_constants(&m).unwrap();
    let seeds: Vec<u64> = (1..=4).collect();
    let mut g = c.benchmark_group("amp_n1000_t6_x4");
    g.sample_size(10);
    for (name, exec) in ARMS {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(amp_replicates(&m, &k, 1000, 6, &seeds, Placement::Quantile, exec).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, enumeration, hciz_mc, state_evolution, amp);
criterion_main!(benches);
