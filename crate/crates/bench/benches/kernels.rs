use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};

use bimembrane::free_boundary::{extract_boundaries, marching_squares};
use bimembrane::frequency::{default_radii, frequency_trace, planted_profile, SIGMA};
use bimembrane::presets::{BoundaryPreset, LinearPreset};
use bimembrane::solver::{solve, SolveOptions};
use bimembrane::thin_limits::{solve_two_membrane, LinearOptions};
use bimembrane::{energy, project_cone, reference_plane_pair, Domain, GridSpec, Params, SmoothingSpec, Vec2};

fn params() -> Params {
    Params::new(0.7, 0.3).unwrap()
}

fn disk() -> Domain {
    Domain::Disk { radius: 1.0 }
}

fn kernels(c: &mut Criterion) {
    let h = 1.0 / 64.0;
    let spec = GridSpec::centered(1.0, h).unwrap();
    let plane = reference_plane_pair(params(), Vec2::E_Y.rotated(0.3), spec, disk());

    c.bench_function("energy_1_64", |b| {
        let s = SmoothingSpec::polynomial(4.0 * h);
        b.iter(|| energy(black_box(&plane), &s))
    });

    c.bench_function("project_cone_1e4", |b| {
        let pts: Vec<(f64, f64)> = (0..10_000)
            .map(|k| {
                let t = k as f64 * 0.618_033_988_749;
                (3.0 * (t.sin()), 3.0 * (1.7 * t).cos())
            })
            .collect();
        b.iter(|| pts.iter().map(|&(a, bb)| project_cone(a, bb).0).sum::<f64>())
    });

    c.bench_function("marching_squares_1_64", |b| b.iter(|| marching_squares(black_box(&plane.u), 1e-8)));

    c.bench_function("extract_boundaries_1_64", |b| b.iter(|| extract_boundaries(black_box(&plane))));

    let coarse = GridSpec::centered(1.0, 1.0 / 32.0).unwrap();
    let data = BoundaryPreset::PerturbedPlane { amplitude: 0.2 }.data(coarse, disk(), params());
    let mut group = c.benchmark_group("solve");
    group.sample_size(10);
    group.bench_function("perturbed_plane_1_32", |b| {
        let opts = SolveOptions::for_spacing(coarse.h);
        b.iter(|| solve(black_box(&data), params(), &opts).unwrap())
    });
    group.bench_function("signorini_1_64", |b| {
        let (dh, dw) = LinearPreset::Signorini.data(spec, 0.7, 0.3).unwrap();
        b.iter_batched(
            || (dh.clone(), dw.clone()),
            |(dh, dw)| solve_two_membrane(&dh, &dw, 0.7, 0.3, &LinearOptions::default()).unwrap(),
            BatchSize::SmallInput,
        )
    });
    group.bench_function("frequency_trace_planted_1_64", |b| {
        let wf = planted_profile(1.5, 1.0, spec, disk(), params(), Vec2::ZERO, Vec2::E_Y).unwrap();
        let radii = default_radii(h);
        b.iter(|| frequency_trace(black_box(&wf), &radii, SIGMA).unwrap())
    });
    group.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
