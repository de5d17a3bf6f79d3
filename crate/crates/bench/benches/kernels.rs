use std::f64::consts::PI;
use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};

use oscille_core::cell::{solve_cell, tabulate_effective, XGrid};
use oscille_core::corrector::{build_r0, corrector_apply, CorrectorInputs};
use oscille_core::fem::{assemble, solve_resolvent};
use oscille_core::field::{preset_coefficient, tau_eps, Point, Preset};
use oscille_core::mesh::{build_cell_mesh, build_domain_mesh};
use oscille_core::norms::{besov_seminorm, w1p_full};
use oscille_core::smoothing::{extend, mollify, steklov};
use oscille_core::{BoundarySpec, GridFunction};

fn cell_problems(c: &mut Criterion) {
    let field = preset_coefficient(Preset::SineProduct2D, &[2.0, 1.0], 2).unwrap();
    let mesh = build_cell_mesh(64, 2).unwrap();
    c.bench_function("cell problem 2D m=64", |b| b.iter(|| solve_cell(&field, black_box([0.5, 0.5]), &mesh).unwrap()));
}

fn resolvent(c: &mut Criterion) {
    let field = preset_coefficient(Preset::LocallyPeriodic2D, &[2.0, 1.0, 0.5], 2).unwrap();
    let mesh = build_domain_mesh(&[(0.0, 1.0), (0.0, 1.0)], 1.0 / 128.0).unwrap();
    let sampler = |x: Point| Ok(tau_eps(&field, 1.0 / 16.0, x));
    let f = GridFunction::from_fn(mesh, |_| 1.0);
    let mut group = c.benchmark_group("resolvent 2D 129x129");
    group.sample_size(10);
    group.bench_function("assemble", |b| b.iter(|| assemble(&mesh, &sampler, -1.0, &BoundarySpec::dirichlet()).unwrap()));
    let sys = assemble(&mesh, &sampler, -1.0, &BoundarySpec::dirichlet()).unwrap();
    group.bench_function("solve", |b| b.iter(|| solve_resolvent(&sys, &f, 1e-10).unwrap()));
    group.finish();
}

fn smoothing_and_corrector(c: &mut Criterion) {
    let mesh = build_domain_mesh(&[(0.0, 1.0), (0.0, 1.0)], 1.0 / 192.0).unwrap();
    let u = GridFunction::from_fn(mesh, |x| (PI * x[0]).sin() * (PI * x[1]).sin());
    let ext = extend(&u, 0.2).unwrap();
    c.bench_function("steklov 2D eps=1/16", |b| b.iter(|| steklov(&ext, black_box(1.0 / 16.0)).unwrap()));
    c.bench_function("mollify 2D delta=1/16", |b| b.iter(|| mollify(&ext, black_box(1.0 / 16.0)).unwrap()));

    let field = preset_coefficient(Preset::LocallyPeriodic2D, &[2.0, 1.0, 0.5], 2).unwrap();
    let grid = XGrid::covering(&[(0.0, 1.0), (0.0, 1.0)], 1.0 / 16.0, 1.0 / 16.0).unwrap();
    let table = Arc::new(tabulate_effective(&field, &grid, &build_cell_mesh(32, 2).unwrap()).unwrap());
    let inputs = CorrectorInputs::new(build_r0(&u, 1.0 / 16.0, 1.0).unwrap(), table, 1.0 / 16.0).unwrap();
    let mut group = c.benchmark_group("corrector");
    group.sample_size(10);
    group.bench_function("apply 2D eps=1/16 rho=12", |b| b.iter(|| corrector_apply(&inputs).unwrap()));
    group.finish();
}

fn norms(c: &mut Criterion) {
    let mesh = build_domain_mesh(&[(0.0, 1.0), (0.0, 1.0)], 1.0 / 256.0).unwrap();
    let u = GridFunction::from_fn(mesh, |x| (3.0 * x[0]).sin() * x[1]);
    c.bench_function("W1p norm 2D 257x257", |b| b.iter(|| w1p_full(&u, 2.0).unwrap()));
    c.bench_function("Besov seminorm 2D 257x257", |b| b.iter(|| besov_seminorm(&u, 0.5, 2.0).unwrap()));
}

criterion_group!(benches, cell_problems, resolvent, smoothing_and_corrector, norms);
criterion_main!(benches);
