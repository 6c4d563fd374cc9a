use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use gwp_lab::basis::{build_basis, eval_phi0, grid_for_packet};
use gwp_lab::harness::{self, ExperimentConfig, SolverSettings};
use gwp_lab::reference::Propagator;
use gwp_lab::{par, Grid, PacketParams, Potential};

fn pools() -> Vec<(&'static str, usize)> {
    let all = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    vec![("sequential", 1), ("parallel", all)]
}

fn split_step_2d(c: &mut Criterion) {
    let pot = Potential::GaussianWell { dim: 2, depth: 1.0, width: 1.0 };
    let params = PacketParams::standard(vec![0.5, -0.3], vec![0.2, 0.0], 0.01).unwrap();
    let grid = Grid::new(vec![0.0, 0.0], vec![3.0, 3.0], vec![256, 256]).unwrap();
    let psi = eval_phi0(&params, &grid).unwrap();
    let prop = Propagator::new(&grid, &pot, 1e-3, params.eps);
    let mut group = c.benchmark_group("strang_step_256x256");
    for (name, threads) in pools() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &threads, |b, &t| {
            let mut values = psi.values().to_vec();
            b.iter(|| par::with_threads(t, || prop.steps(&mut values, 10)));
        });
    }
    group.finish();
}

fn basis_2d(c: &mut Criterion) {
    let params = PacketParams::standard(vec![0.0, 0.0], vec![0.0, 0.0], 0.01).unwrap();
    let grid = grid_for_packet(&params, 4).unwrap();
    let mut group = c.benchmark_group("build_basis_order4_2d");
    group.sample_size(10);
    for (name, threads) in pools() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &threads, |b, &t| {
            b.iter(|| par::with_threads(t, || build_basis(&params, 4, &grid).unwrap()));
        });
    }
    group.finish();
}

fn small_sweep(c: &mut Criterion) {
    let cfg = ExperimentConfig {
        eps_list: (4..=7).map(|k| 0.5f64.powi(k)).collect(),
        t_end: 0.5,
        snapshots: 5,
        solver: SolverSettings {
            dt: 2e-3,
            ..SolverSettings::default()
        },
        ..ExperimentConfig::default()
    };
    let mut group = c.benchmark_group("epsilon_sweep_4");
    group.sample_size(10);
    for (name, threads) in pools() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &threads, |b, &t| {
            b.iter(|| par::with_threads(t, || harness::epsilon_sweep(&cfg).unwrap()));
        });
    }
    group.finish();
}

criterion_group!(benches, split_step_2d, basis_2d, small_sweep);
criterion_main!(benches);
