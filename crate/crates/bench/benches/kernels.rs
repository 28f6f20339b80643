use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use skewdiff_core::densities::physical_density;
use skewdiff_core::homogenize::{effective_dispersion, LayeredCrossSection};
use skewdiff_core::network::simulate_network_path;
use skewdiff_core::paths::{terminal_positions, EulerTransformedStepper, SimConfig, SkewDiffusionStepper};
use skewdiff_core::pde::{solve_interface_pde, Boundary, Grid, PdeProblem};
use skewdiff_core::{InterfaceMedium, NetworkPosition, RiverNetwork};

fn densities(c: &mut Criterion) {
    let m = InterfaceMedium::conservative(4.0, 1.0).unwrap();
    let ys: Vec<f64> = (0..1000).map(|k| -5.0 + 0.01 * k as f64).collect();
    let mut g = c.benchmark_group("density");
    g.throughput(Throughput::Elements(ys.len() as u64));
    g.bench_function("physical_1000_points", |b| {
        b.iter(|| ys.iter().map(|&y| physical_density(&m, black_box(0.7), 0.3, y).unwrap()).sum::<f64>())
    });
    g.finish();
}

fn samplers(c: &mut Criterion) {
    let m = InterfaceMedium::conservative(4.0, 1.0).unwrap();
    let config = SimConfig::new(200, 1e-3, 1.0, 1);
    let steps = 200 * 1000;
    let mut g = c.benchmark_group("sampler");
    g.throughput(Throughput::Elements(steps));
    g.sample_size(10);
    g.bench_function("exact_step", |b| b.iter(|| terminal_positions(&SkewDiffusionStepper::new(m), 0.0, black_box(&config)).unwrap()));
    g.bench_function("euler_transformed", |b| {
        b.iter(|| terminal_positions(&EulerTransformedStepper::new(m), 0.0, black_box(&config)).unwrap())
    });
    g.finish();
}

fn pde(c: &mut Criterion) {
    let m = InterfaceMedium::conservative(4.0, 1.0).unwrap();
    let mut g = c.benchmark_group("pde_backward_euler");
    g.sample_size(10);
    for n in [200usize, 800] {
        let grid = Grid::around_origin(-6.0, 6.0, n).unwrap();
        let p = PdeProblem::new(m.profile(), grid, Boundary::Neumann, Boundary::Neumann).unwrap();
        let u0 = p.grid.delta(0.25).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| solve_interface_pde(&p, black_box(&u0), 0.5, 1e-3, &[]).unwrap())
        });
    }
    g.finish();
}

fn homogenization(c: &mut Criterion) {
    let cs = LayeredCrossSection::single_interface_parabolic(2.0, 0.5, 1.0, 1.0).unwrap();
    c.bench_function("taylor_aris_two_layers", |b| b.iter(|| effective_dispersion(black_box(&cs)).unwrap()));
}

fn network(c: &mut Criterion) {
    let net = RiverNetwork::parse("out ROOT 1 0.5 1 1\nleft out 1 0.25 1 0.5\nright out 1 0.25 1 2\n").unwrap();
    let start = NetworkPosition { edge_id: "left".into(), x: 0.5 };
    let config = SimConfig::new(100, 1e-3, 1.0, 2);
    let mut g = c.benchmark_group("network");
    g.sample_size(10);
    g.throughput(Throughput::Elements(100 * 1000));
    g.bench_function("y_network_paths", |b| b.iter(|| simulate_network_path(&net, black_box(&start), &config).unwrap()));
    g.finish();
}

criterion_group!(benches, densities, samplers, pde, homogenization, network);
criterion_main!(benches);
