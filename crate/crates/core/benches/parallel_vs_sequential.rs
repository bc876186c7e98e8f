use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use linkhodge::links::verify_localization;
use linkhodge::operators::boundary_vec;
use linkhodge::recurrence::{mc_return_probability, LatticeWalk};
use linkhodge::{Execution, Family};

const MODES: [Execution; 2] = [Execution::Sequential, Execution::Parallel];

fn mc_walks(c: &mut Criterion) {
    let mut g = c.benchmark_group("mc_walks");
    g.sample_size(10);
    let walk = LatticeWalk {
        dim: 3,
        escape_radius: 32.0,
    };
    for mode in MODES {
        g.bench_with_input(
            BenchmarkId::new("z3_return", format!("{mode:?}")),
            &mode,
            |b, &mode| b.iter(|| mc_return_probability(&walk, 40_000, 1_000_000, 7, mode)),
        );
    }
    g.finish();
}

fn trial_sweeps(c: &mut Criterion) {
    let mut g = c.benchmark_group("trial_sweeps");
    g.sample_size(10);
    let torus = Family::TorusGrid { p: 12, q: 12 }
        .generate(0)
        .unwrap()
        .complex;
    let vertices = torus.simplices(0).to_vec();
    for mode in MODES {
        g.bench_with_input(
            BenchmarkId::new("localization", format!("{mode:?}")),
            &mode,
            |b, &mode| {
                b.iter(|| {
                    mode.map_slice(&vertices, |rho| {
                        verify_localization(&torus, rho, 2, 11)
                            .unwrap()
                            .max_residual()
                    })
                })
            },
        );
    }
    let cone = Family::ConeOverTree { branching: 2 }
        .generate(16)
        .unwrap()
        .complex;
    let ones = vec![1.0; cone.count(2)];
    for mode in MODES {
        g.bench_with_input(
            BenchmarkId::new("boundary_apply", format!("{mode:?}")),
            &mode,
            |b, &mode| b.iter(|| boundary_vec(&cone, 1, &ones, mode)),
        );
    }
    g.finish();
}

criterion_group!(benches, mc_walks, trial_sweeps);
criterion_main!(benches);
