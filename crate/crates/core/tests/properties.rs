//! Property tests for the structural invariants of every module.

use bimembrane::energy::{inner, project_cone};
use bimembrane::flatness::{audit_certificate, measure_flatness};
use bimembrane::free_boundary::{extract_boundaries_with, marching_squares, ExtractOptions, Phase};
use bimembrane::frequency::{default_radii, frequency_trace, planted_profile, SIGMA};
use bimembrane::solver::{solve, BoundaryData, SolveOptions};
use bimembrane::thin_limits::{recombine, solve_mixed, solve_two_membrane, split, LinearOptions};
use bimembrane::{
    blowup_rescale, energy, first_variation, gradient, laplacian, project_pair, reference_plane_pair, Domain,
    FieldPair, GridSpec, Params, ScalarField, SmoothingSpec, Vec2,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn disk() -> Domain {
    Domain::Disk { radius: 1.0 }
}

fn grid(n: usize) -> GridSpec {
    GridSpec::centered(1.0, 1.0 / n as f64).unwrap()
}

fn random_field(spec: GridSpec, domain: Domain, seed: u64, amp: f64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vals: Vec<f64> = (0..spec.len()).map(|_| rng.gen_range(-amp..amp)).collect();
    ScalarField::from_fn(spec, domain, |p| {
        let (i, j) = spec.to_lattice(p);
        vals[spec.idx(i.round() as usize, j.round() as usize)]
    })
}

fn params_strategy() -> impl Strategy<Value = Params> {
    (0.5f64..0.95).prop_map(|lu| Params::new(lu, 1.0 - lu).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

    #[test]
    fn stencils_exact_on_affine_and_quadratic(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -2.0f64..2.0,
                                             q in -2.0f64..2.0, s in -2.0f64..2.0, t in -2.0f64..2.0) {
        let spec = grid(16);
        let f = ScalarField::from_fn(spec, disk(), |p| a * p.x + b * p.y + c);
        let g = gradient(&f).unwrap();
        let lap = laplacian(&f).unwrap();
        for k in f.interior_nodes() {
            prop_assert!((g.gx[k] - a).abs() < 1e-11 && (g.gy[k] - b).abs() < 1e-11);
            prop_assert!(lap.get(k).abs() < 1e-9);
        }
        let f = ScalarField::from_fn(spec, disk(), |p| q * p.x * p.x + s * p.x * p.y + t * p.y * p.y);
        let lap = laplacian(&f).unwrap();
        for k in f.interior_nodes() {
            prop_assert!((lap.get(k) - 2.0 * (q + t)).abs() < 1e-9);
        }
    }

    #[test]
    fn blowup_composes_multiplicatively(r in 0.4f64..0.9, s in 0.4f64..0.9, cx in -0.05f64..0.05) {
        let spec = grid(64);
        let f = ScalarField::from_fn(spec, disk(), |p| (1.3 * p.x).sin() + p.y * p.y);
        let center = Vec2::new(cx, 0.0);
        let out = GridSpec::centered(0.9, 1.0 / 64.0).unwrap();
        let once = blowup_rescale(&f, center, r, out).unwrap();
        let direct = blowup_rescale(&f, center, r * s, out).unwrap();
        let inner_out = GridSpec::centered(0.5, 1.0 / 64.0).unwrap();
        let nested = ScalarField::from_fn(inner_out, Domain::Disk { radius: 0.5 }, |p| {
            once.sample(p * s).map(|v| v / s).unwrap_or(f64::NAN)
        });
        let h2 = (1.0f64 / 64.0).powi(2);
        for (k, i, j) in nested.masked_nodes() {
            let p = inner_out.node(i, j);
            if let Some(d) = direct.sample(p) {
                prop_assert!((nested.get(k) - d).abs() <= 20.0 * h2 / (r * s), "at {:?}", p);
            }
        }
    }

    #[test]
    fn plane_pair_is_ordered(p in params_strategy(), angle in -3.2f64..3.2) {
        let pair = reference_plane_pair(p, Vec2::E_Y.rotated(angle), grid(16), disk());
        prop_assert!(pair.is_ordered());
    }

    #[test]
    fn projection_feasible_and_idempotent(seed in any::<u64>()) {
        let spec = grid(8);
        let p = Params::new(0.7, 0.3).unwrap();
        let pair = FieldPair::new(random_field(spec, disk(), seed, 2.0), random_field(spec, disk(), !seed, 2.0), p).unwrap();
        let once = project_pair(&pair);
        prop_assert!(once.is_ordered());
        prop_assert_eq!(project_pair(&once), once.clone());
        for (k, _, _) in pair.u.masked_nodes() {
            let (a, b) = project_cone(pair.u.get(k), pair.v.get(k));
            prop_assert_eq!((a, b), (once.u.get(k), once.v.get(k)));
        }
    }

    #[test]
    fn first_variation_matches_difference_quotient(seed in any::<u64>(), delta_cells in 1.0f64..8.0) {
        let spec = grid(24);
        let h = spec.h;
        let p = Params::new(0.7, 0.3).unwrap();
        let pair = reference_plane_pair(p, Vec2::E_Y.rotated(0.2), spec, disk());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (k1, k2, ph) = (rng.gen_range(1.0..4.0), rng.gen_range(1.0..4.0), rng.gen_range(0.0..6.3));
        let phi = ScalarField::from_fn(spec, disk(), |q| (k1 * q.x + ph).sin() * (k2 * q.y).cos() * (1.0 - q.norm_squared()));
        let phi = phi.map_nodes(|k, _, v| if pair.u.interior_nodes().contains(&k) { v } else { 0.0 });
        let sm = SmoothingSpec::polynomial(delta_cells * h);
        let (gu, gv) = first_variation(&pair, &sm);
        let dir = inner(&gu, &phi) + inner(&gv, &phi);
        let t = 1e-6;
        let moved = FieldPair::new(
            pair.u.map_nodes(|k, _, v| v + t * phi.get(k)),
            pair.v.map_nodes(|k, _, v| v + t * phi.get(k)),
            p,
        ).unwrap();
        let fd = (energy(&moved, &sm).total_smoothed - energy(&pair, &sm).total_smoothed) / t;
        prop_assert!((fd - dir).abs() <= 1e-3 * dir.abs().max(1e-3), "fd {} vs {}", fd, dir);
    }

    #[test]
    fn split_recombine_inverse(seed in any::<u64>(), lh in 0.1f64..5.0, lw in 0.1f64..5.0) {
        let spec = grid(8);
        let d = Domain::HalfDisk { radius: 1.0 };
        let (w1, w2) = (random_field(spec, d, seed, 3.0), random_field(spec, d, seed ^ 0x55, 3.0));
        let pair = recombine(&w1, &w2, lh, lw).unwrap();
        let (a, b) = split(&pair);
        for (k, _, _) in w1.masked_nodes() {
            prop_assert!((a.get(k) - w1.get(k)).abs() <= 1e-12 * (1.0 + w1.get(k).abs() + w2.get(k).abs()));
            prop_assert!((b.get(k) - w2.get(k)).abs() <= 1e-12 * (1.0 + w1.get(k).abs() + w2.get(k).abs()) * (lh + lw));
        }
    }
}

trait NormSq {
    fn norm_squared(self) -> f64;
}

impl NormSq for Vec2 {
    fn norm_squared(self) -> f64 {
        self.dot(self)
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn solver_output_feasible_deterministic_and_descending(angle in -0.6f64..0.6, amp in 0.0f64..0.3) {
        let spec = grid(16);
        let p = Params::new(0.7, 0.3).unwrap();
        let nu = Vec2::E_Y.rotated(angle);
        let psi = move |q: Vec2| (q.dot(nu) + amp * (q.x * q.x - q.y * q.y)).max(0.0);
        let data = BoundaryData::from_fns(spec, disk(), |q| p.gamma_u() * psi(q), |q| p.gamma_v() * psi(q));
        let opts = SolveOptions::for_spacing(spec.h);
        let a = solve(&data, p, &opts).unwrap();
        let b = solve(&data, p, &opts).unwrap();
        prop_assert!(a.pair.is_ordered());
        prop_assert_eq!(&a.pair, &b.pair);
        prop_assert_eq!(&a.energy_trace, &b.energy_trace);
        for w in a.energy_trace.windows(2) {
            if w[0].delta == w[1].delta && w[0].delta > 0.0 {
                prop_assert!(w[1].total_smoothed <= w[0].total_smoothed + 1e-12 * w[0].total_smoothed.max(1.0));
            }
        }
        // {v > τ} ⊆ {u > τ}
        for (k, _, _) in a.pair.u.masked_nodes() {
            prop_assert!(a.pair.v.get(k) <= a.pair.u.get(k));
        }
    }

    #[test]
    fn classification_follows_polyline_distance(offset_cells in 0.0f64..4.0, angle in -0.5f64..0.5) {
        let spec = grid(32);
        let h = spec.h;
        let p = Params::new(0.7, 0.3).unwrap();
        let nu = Vec2::E_Y.rotated(angle);
        let off = offset_cells * h;
        let u = ScalarField::from_fn(spec, disk(), |q| p.gamma_u() * (q.dot(nu) + off).max(0.0));
        let v = ScalarField::from_fn(spec, disk(), |q| p.gamma_v() * q.dot(nu).max(0.0));
        let pair = FieldPair::new(u, v, p).unwrap();
        let opts = ExtractOptions::default();
        let set = extract_boundaries_with(&pair, &opts);
        let interior: Vec<_> = set.samples.iter().filter(|s| s.location.norm() < 0.8).collect();
        prop_assert!(!interior.is_empty());
        for s in interior {
            let two = s.phase == Phase::TwoPhase;
            // the crossing next to a clipped node can sit up to h off the true line
            if off < opts.kappa * h - h {
                prop_assert!(two, "{:?} at offset {}", s.phase, off);
            } else if off > opts.kappa * h + h {
                prop_assert!(!two, "{:?} at offset {}", s.phase, off);
            }
        }
        // each cell contributes at most two segments
        let mut count = std::collections::HashMap::new();
        for line in marching_squares(&pair.u, 1e-12) {
            for (a, b) in line.segments() {
                let m = (a + b) * 0.5;
                let (i, j) = spec.to_lattice(m);
                *count.entry((i.floor() as i64, j.floor() as i64)).or_insert(0) += 1;
            }
        }
        prop_assert!(count.values().all(|&c| c <= 2));
    }

    #[test]
    fn flatness_certificates_verify_and_rotate(angle in -1.0f64..1.0, amp in 0.0f64..0.1) {
        let spec = grid(64);
        let h = spec.h;
        let p = Params::new(0.7, 0.3).unwrap();
        let nu = Vec2::E_Y.rotated(angle);
        let psi = move |q: Vec2| {
            let s = q.dot(nu);
            let t = q.dot(nu.perp());
            (s + amp * (3.0 * t).sin()).max(0.0)
        };
        let pair = FieldPair::new(
            ScalarField::from_fn(spec, disk(), |q| p.gamma_u() * psi(q)),
            ScalarField::from_fn(spec, disk(), |q| p.gamma_v() * psi(q)),
            p,
        ).unwrap();
        let cert = measure_flatness(&pair, Vec2::ZERO, 0.5).unwrap();
        prop_assert!(audit_certificate(&pair, &cert) <= 1e-9);
        // the fitted normal tracks the rotation
        prop_assert!(cert.nu.dist(nu) <= 0.05 + 2.0 * amp, "{:?} vs {:?}", cert.nu, nu);
        prop_assert!(cert.epsilon <= 2.0 * amp + 2.0 * h / 0.5 + 1e-9);
    }

    #[test]
    fn planted_frequency_rows_consistent(lambda in 1.0f64..2.5, amp in 0.5f64..8.0) {
        let spec = grid(64);
        let p = Params::new(0.7, 0.3).unwrap();
        let wf = planted_profile(lambda, amp, spec, disk(), p, Vec2::ZERO, Vec2::E_Y).unwrap();
        let trace = frequency_trace(&wf, &default_radii(spec.h), SIGMA).unwrap();
        for row in &trace.rows {
            prop_assert!(row.dhtilde_bulk >= 0.0);
            // exactly one truncation branch is active
            prop_assert_eq!(row.truncated, row.htilde < row.r.powf(3.0 + SIGMA));
            if row.truncated {
                prop_assert_eq!(row.ntilde, 0.5 * (3.0 + SIGMA));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 4, ..ProptestConfig::default() })]

    #[test]
    fn separated_two_membrane_matches_mixed_solves(top in 0.5f64..2.0, tilt in -0.3f64..0.3) {
        let spec = grid(16);
        let d = Domain::HalfDisk { radius: 1.0 };
        let dh = ScalarField::from_fn(spec, d, |q| top + tilt * q.x);
        let dw = ScalarField::from_fn(spec, d, |q| -top + tilt * q.y);
        let opts = LinearOptions::default();
        let pair = solve_two_membrane(&dh, &dw, 0.6, 0.4, &opts).unwrap();
        let (mh, mw) = (solve_mixed(&dh, &opts).unwrap(), solve_mixed(&dw, &opts).unwrap());
        prop_assert!(pair.h.sup_diff(&mh) <= 1e-6 && pair.w.sup_diff(&mw) <= 1e-6);
    }
}
