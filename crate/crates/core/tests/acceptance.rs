//! Acceptance run: every criterion prints one PASS/FAIL line, and the
//! binary exits nonzero if any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use bpkit::algebra::{section_frame, Chirality, SectionFrame, VectorFieldSystem};
use bpkit::audit::{algebra_audit, AuditOptions};
use bpkit::bodies::{convexity_check, perturbed_body, StarBody, SymmetryTag};
use bpkit::bp::{
    bp_compare, check_dm_range, counterexample_search, dm_section_function, intersection_body_test,
    positivity_certificate, random_ordered_pair, theta_grid, CompareOptions, DmRoute, Membership, PairOptions,
    SearchOptions, Verdict, SIGNIFICANCE,
};
use bpkit::harmonic::{Component, Fiber, HarmonicSum, SphericalFunction};
use bpkit::sections::{
    brunn_check, inscribed_radius, krya_identity_check, section_identity_check, weighted_section, KryaCase,
    KryaOptions, SectionMethod, WeightedSectionRequest,
};
use bpkit::sphere::{random_unit, sphere_quadrature, QuadratureKind, QuadratureRule};
use bpkit::transforms::{
    cosine_transform, funk_hecke_multiplier, funk_transform, funk_transform_harmonic, generalized_radon,
    inverse_funk, radon_limit_constant, radon_transform, DirectOptions,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn quad(dim: usize, kind: QuadratureKind) -> QuadratureRule {
    sphere_quadrature(dim, kind).expect("valid rule")
}

fn frame(d: usize, n: usize, theta: &[f64]) -> SectionFrame {
    let sys = VectorFieldSystem::new(d, Chirality::Left).expect("valid block size");
    section_frame(&sys, n, theta).expect("unit theta")
}

fn axis(dim: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[k] = 1.0;
    v
}

/// Random even harmonic sum of degree at most `max_degree` built from
/// zonal pieces about random axes.
fn random_even_sum(rng: &mut ChaCha8Rng, dim: usize, max_degree: usize) -> HarmonicSum {
    let mut comps = vec![Component::zonal(0, 1.0, axis(dim, 0))];
    for degree in (2..=max_degree).step_by(2) {
        for _ in 0..2 {
            let coef = rng.random_range(-1.0..1.0);
            comps.push(Component::zonal(degree, coef, random_unit(rng, dim)));
        }
    }
    HarmonicSum::new(dim, comps)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let checks = algebra_audit(&AuditOptions::default()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed()).map(|c| c.name.as_str()).collect();
    let worst = checks.iter().map(|c| c.random_defect).fold(0.0, f64::max);
    let fewest = checks.iter().map(|c| c.random_cases).min().unwrap_or(0);
    check(
        failed.is_empty() && elapsed < Duration::from_secs(10) && fewest >= 1000,
        format!(
            "{} identities, worst random defect {worst:.1e}, failures {failed:?}, {:.2}s",
            checks.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut reciprocity: f64 = 0.0;
    for dim in [3usize, 4, 6, 8] {
        for alpha in [0.25, 0.5, 2.5, 4.5, -0.3] {
            let partner = 2.0 - dim as f64 - alpha;
            for j in (0..=12).step_by(2) {
                let a = funk_hecke_multiplier(dim, alpha, j).map_err(|e| e.to_string())?;
                let b = funk_hecke_multiplier(dim, partner, j).map_err(|e| e.to_string())?;
                reciprocity = reciprocity.max((a * b - 1.0).abs());
            }
        }
    }

    // Funk inversion, with the forward transform cross-checked against
    // direct integration over great subspheres.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut inversion: f64 = 0.0;
    let mut forward: f64 = 0.0;
    for dim in [3usize, 4, 6] {
        let rule = quad(dim - 1, QuadratureKind::Design { resolution: 6 });
        for _ in 0..5 {
            let f = random_even_sum(&mut rng, dim, 8);
            let g = funk_transform_harmonic(&f);
            let back = inverse_funk(&g).map_err(|e| e.to_string())?;
            let func = SphericalFunction::Harmonic(f.clone());
            for _ in 0..10 {
                let u = random_unit(&mut rng, dim);
                let scale = f.components().iter().map(|c| c.scaled(1.0).eval(dim, &u).abs()).sum::<f64>().max(1.0);
                inversion = inversion.max((back.eval(&u) - f.eval(&u)).abs() / scale);
                let direct = funk_transform(&func, &u, &rule).map_err(|e| e.to_string())?.mean;
                forward = forward.max((direct - g.eval(&u)).abs() / scale);
            }
        }
    }

    // Plane transform of M^alpha f against the generalized transform on the
    // complementary plane.
    let mut plane: f64 = 0.0;
    for dim in [3usize, 4] {
        let (i, alpha) = (2usize, 0.5);
        let f = random_even_sum(&mut rng, dim, 6);
        let transformed = SphericalFunction::Harmonic(cosine_transform(&f, alpha).map_err(|e| e.to_string())?);
        let func = SphericalFunction::Harmonic(f);
        let rule = quad(i, QuadratureKind::Design { resolution: 16 });
        for _ in 0..3 {
            let basis = nalgebra::linalg::QR::new(DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0))).q();
            let xi = basis.columns(0, i).into_owned();
            let perp = basis.columns(i, dim - i).into_owned();
            let lhs = radon_transform(&transformed, &xi, &rule).map_err(|e| e.to_string())?.mean;
            let rhs = generalized_radon(&func, &perp, alpha + i as f64 - 1.0, DirectOptions::default())
                .map_err(|e| e.to_string())?
                / radon_limit_constant(i);
            plane = plane.max((lhs - rhs).abs() / rhs.abs().max(1e-300));
        }
    }
    let elapsed = start.elapsed();
    check(
        reciprocity < 1e-8 && inversion < 1e-8 && forward < 1e-8 && plane < 1e-3 && elapsed < Duration::from_secs(120),
        format!(
            "reciprocity {reciprocity:.1e}, inversion {inversion:.1e} (forward {forward:.1e}), plane identity {plane:.1e}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn fiber_perturbed_ball(d: usize, n: usize, eps: f64, u: &[f64]) -> StarBody {
    let dim = d * n;
    let fiber = Arc::new(Fiber::new(frame(d, n, u).frame).expect("orthonormal frame"));
    let comps = vec![
        Component::fiber_zonal(2, 1.0, fiber.clone()).expect("even degree"),
        Component::fiber_zonal(4, 0.5, fiber).expect("even degree"),
    ];
    let phi = SphericalFunction::Harmonic(HarmonicSum::new(dim, comps));
    perturbed_body(&StarBody::ball(dim, 1.0).expect("ball"), eps, &phi, d).expect("positive perturbation")
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut deterministic: f64 = 0.0;
    for dim in [3usize, 4] {
        let phi = SphericalFunction::Harmonic(random_even_sum(&mut rng, dim, 4).scaled(0.2));
        let body = perturbed_body(&StarBody::ball(dim, 1.0).expect("ball"), 0.3, &phi, 1).map_err(|e| e.to_string())?;
        let rule = quad(dim - 1, QuadratureKind::Design { resolution: 12 });
        for _ in 0..5 {
            let f = frame(1, dim, &random_unit(&mut rng, dim));
            let r = section_identity_check(&body, &f, &rule, 8).map_err(|e| e.to_string())?;
            deterministic = deterministic.max(r.residual);
        }
    }
    let mut worst_z: f64 = 0.0;
    // With n = 2 the section subspace is a single fiber, on which the radial
    // function is constant: the estimate is exact and its error bar is zero,
    // so the bar is floored at rounding level.
    for (d, n) in [(2usize, 2usize), (2, 3), (4, 2)] {
        let dim = d * n;
        let body = fiber_perturbed_ball(d, n, 0.15, &random_unit(&mut rng, dim));
        for k in 0..4u64 {
            let rule = quad(dim - d, QuadratureKind::MonteCarlo { samples: 1_000_000, seed: 30 + k });
            let f = frame(d, n, &random_unit(&mut rng, dim));
            let r = section_identity_check(&body, &f, &rule, 8).map_err(|e| e.to_string())?;
            worst_z = worst_z.max(r.residual / r.direct.std_err.max(1e-12 * r.direct.value.abs()));
        }
    }
    let elapsed = start.elapsed();
    check(
        deterministic < 1e-6 && worst_z < 3.0 && elapsed < Duration::from_secs(600),
        format!(
            "d=1 residual {deterministic:.1e}, Monte Carlo residual {worst_z:.2} standard errors, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

/// Convex origin-symmetric perturbation of the unit ball in `R^3`.
fn random_convex_body(rng: &mut ChaCha8Rng, seed: u64) -> Result<StarBody, String> {
    let ball = StarBody::ball(3, 1.0).map_err(|e| e.to_string())?;
    let phi = SphericalFunction::Harmonic(HarmonicSum::new(
        3,
        vec![
            Component::zonal(2, rng.random_range(-1.0..1.0), random_unit(rng, 3)),
            Component::zonal(2, rng.random_range(-1.0..1.0), random_unit(rng, 3)),
            Component::zonal(4, rng.random_range(-0.5..0.5), random_unit(rng, 3)),
        ],
    ));
    let mut eps = 0.3;
    for _ in 0..20 {
        if let Ok(body) = perturbed_body(&ball, eps, &phi, 1) {
            if convexity_check(&body, 20_000, seed).is_none() {
                return Ok(body);
            }
        }
        eps *= 0.5;
    }
    Err("no convex perturbation found".into())
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let ball = StarBody::ball(3, 1.0).map_err(|e| e.to_string())?;
    let pole = frame(1, 3, &axis(3, 2));
    let opts = KryaOptions::default();
    let boundary = krya_identity_check(&ball, &pole, 2.0, 0.0, KryaCase::Boundary, opts).map_err(|e| e.to_string())?;
    let positive =
        krya_identity_check(&ball, &pole, 2.5, 0.0, KryaCase::PositiveAlpha, opts).map_err(|e| e.to_string())?;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let outer = quad(1, QuadratureKind::Design { resolution: 4 });
    let middle = quad(2, QuadratureKind::Design { resolution: 12 });
    let betas = [0.0, -0.25, -0.5, -1.0, -1.5];
    let mut violations = 0;
    let mut runs = 0;
    let mut slope: f64 = 0.0;
    for b in 0..20u64 {
        let body = random_convex_body(&mut rng, 400 + b)?;
        let f = frame(1, 3, &random_unit(&mut rng, 3));
        let r = inscribed_radius(&body);
        let grid: Vec<f64> = (1..=6).map(|k| r * k as f64 / 7.0).collect();
        for beta in betas {
            let report = brunn_check(&body, &f.basis_h, beta, &grid, &outer, &middle).map_err(|e| e.to_string())?;
            violations += report.violations;
            runs += 1;
        }
        if b < 5 {
            let h = 1e-3;
            let at = |t: f64| {
                weighted_section(WeightedSectionRequest {
                    body: &body,
                    xi: &f.basis_h,
                    beta: -0.5,
                    t,
                    outer: &outer,
                    middle: &middle,
                })
                .map(|e| e.value)
                .map_err(|e| e.to_string())
            };
            slope = slope.max(((at(h)? - at(-h)?) / (2.0 * h)).abs());
        }
    }
    let elapsed = start.elapsed();
    check(
        boundary.residual < 1e-4 && positive.residual < 1e-4 && violations == 0 && runs == 100 && slope < 1e-6,
        format!(
            "boundary residual {:.1e} (value {:.6}, expected {:.6}), positive-alpha residual {:.1e}, Brunn violations {violations}/{runs} scans, evenness slope {slope:.1e}, {:.2}s",
            boundary.residual,
            boundary.weighted_side,
            PI.sqrt(),
            positive.residual,
            elapsed.as_secs_f64()
        ),
    )
}

/// Default sampling with coarser deterministic rules: the ordered pairs are
/// separated by margins many orders of magnitude above the rule error.
fn table_options(seed: u64) -> CompareOptions {
    let mut opts = CompareOptions::default().with_seed(seed);
    opts.section = SectionMethod::Auto {
        resolution: 12,
        samples: 200_000,
        seed,
    };
    opts.volume.resolution = 24;
    opts
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let cases = [(1usize, 2usize), (1, 3), (1, 4), (2, 2), (2, 3), (4, 2)];
    let mut summary = Vec::new();
    let mut total_violations = 0;
    let mut reversals = 0;
    for (d, n) in cases {
        let tag = SymmetryTag::new(d, n);
        let grid = theta_grid(tag.dim(), 128, 5).map_err(|e| e.to_string())?;
        let mut violations = 0;
        let mut worst_vol_z = f64::NEG_INFINITY;
        for p in 0..100u64 {
            let seed = 1000 * d as u64 + 100 * n as u64 + p;
            let pair = random_ordered_pair(tag, 0, seed, &PairOptions::default()).map_err(|e| e.to_string())?;
            let rep = bp_compare(&pair.k, &pair.l, d, &grid, &table_options(seed)).map_err(|e| e.to_string())?;
            violations += rep.violations;
            let vol_z = rep.vol_diff / rep.vol_sigma.max(1e-300);
            worst_vol_z = worst_vol_z.max(vol_z);
            if rep.verdict == Verdict::Counterexample || vol_z > SIGNIFICANCE {
                reversals += 1;
            }
        }
        total_violations += violations;
        summary.push(format!("({d},{n}) worst vol z {worst_vol_z:.1}"));
    }
    let elapsed = start.elapsed();
    check(
        total_violations == 0 && reversals == 0 && elapsed < Duration::from_secs(1800),
        format!(
            "600 pairs, section violations {total_violations}, volume reversals {reversals}; {}; {:.1}s",
            summary.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

/// `rho_L = 1 + 0.35 P_2` about the last axis of `R^5`, whose certificate is negative.
fn five_dim_body() -> StarBody {
    let pole = axis(5, 4);
    let sum = HarmonicSum::new(5, vec![Component::zonal(0, 1.0, pole.clone()), Component::zonal(2, 0.35, pole)]);
    StarBody::harmonic_power(1.0, sum, "L5")
        .and_then(|b| b.with_symmetry(SymmetryTag::new(1, 5)))
        .expect("positive radial function")
}

/// `rho_L^2 = 1 + 0.18 (4 s - 1)` where `s` is the squared projection onto
/// the quaternionic line through the first axis of `R^8`.
fn eight_dim_body() -> StarBody {
    let u = axis(8, 0);
    let fiber = Arc::new(Fiber::new(frame(2, 4, &u).frame).expect("orthonormal frame"));
    let sum = HarmonicSum::new(
        8,
        vec![
            Component::fiber_zonal(0, 1.0, fiber.clone()).expect("even degree"),
            Component::fiber_zonal(2, 0.18 * 7.0, fiber).expect("even degree"),
        ],
    );
    StarBody::harmonic_power(2.0, sum, "L8")
        .and_then(|b| b.with_symmetry(SymmetryTag::new(2, 4)))
        .expect("positive radial function")
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let l = five_dim_body();
    let opts = SearchOptions::default().with_seed(6);
    let first = counterexample_search(&l, 1, 1.0, &opts).map_err(|e| e.to_string())?;
    let again = counterexample_search(&l, 1, 1.0, &opts).map_err(|e| e.to_string())?;
    let report = first.report.as_ref().ok_or("no convex K in the schedule")?;
    let rerun = again.report.as_ref().ok_or("rerun found no convex K")?;
    let reproducible = first.eps == again.eps
        && report.rows.iter().zip(&rerun.rows).all(|(a, b)| a.margin == b.margin)
        && report.vol_diff == rerun.vol_diff;
    let elapsed = start.elapsed();
    check(
        first.verdict == Verdict::Counterexample
            && report.min_z >= SIGNIFICANCE
            && report.volume_z() >= SIGNIFICANCE
            && report.grid_size() == opts.grid_size
            && reproducible
            && elapsed < Duration::from_secs(1200),
        format!(
            "verdict {}, eps {:.3e}, certificate {:.4}, section z >= {:.3e} on {} directions, volume z {:.3e}, reproducible {reproducible}, {:.1}s (two runs)",
            first.verdict,
            first.eps.unwrap_or(f64::NAN),
            first.certificate.minimum,
            report.min_z,
            report.grid_size(),
            report.volume_z(),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let l = eight_dim_body();
    let mut minima = Vec::new();
    for seed in [1u64, 2, 3] {
        let grid = theta_grid(8, 4096, seed).map_err(|e| e.to_string())?;
        minima.push(positivity_certificate(&l, 2, 2.0, &grid, 12).map_err(|e| e.to_string())?.minimum);
    }
    let stable = minima.iter().all(|m| *m < 0.0);
    let out = counterexample_search(&l, 2, 2.0, &SearchOptions::default().with_seed(7)).map_err(|e| e.to_string())?;
    let (min_z, vol_z) = out.report.as_ref().map_or((f64::NAN, f64::NAN), |r| (r.min_z, r.volume_z()));
    let acceptable = match out.verdict {
        Verdict::Counterexample => min_z >= SIGNIFICANCE && vol_z >= SIGNIFICANCE,
        Verdict::Inconclusive => out.certificate.minimum < 0.0,
        Verdict::Consistent => false,
    };
    let elapsed = start.elapsed();
    check(
        stable && acceptable,
        format!(
            "certificate minima {minima:.4?} over seeds 1..3, verdict {}, eps {:.3e}, section z {min_z:.3e}, volume z {vol_z:.3e}, {:.1}s",
            out.verdict,
            out.eps.unwrap_or(f64::NAN),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut worst: f64 = 0.0;
    for (d, dim) in [(1usize, 6usize), (2, 8)] {
        let tag = SymmetryTag::new(d, dim / d);
        let grid = theta_grid(dim, 256, 8).map_err(|e| e.to_string())?;
        for seed in 0..3u64 {
            let body = random_ordered_pair(tag, 1, 80 + seed, &PairOptions::default())
                .map_err(|e| e.to_string())?
                .k;
            for m in [0usize, 1] {
                let a = dm_section_function(&body, d, m, DmRoute::Multiplier).map_err(|e| e.to_string())?;
                let b = dm_section_function(&body, d, m, DmRoute::Riesz).map_err(|e| e.to_string())?;
                for t in &grid {
                    let (x, y) = (a.eval(t), b.eval(t));
                    worst = worst.max((x - y).abs() / x.abs().max(1.0));
                }
            }
        }
    }
    // The guard admits exactly max(N - 2d - 2, 0) <= 2m < N - d.
    let mut guard_errors = Vec::new();
    for d in [1usize, 2, 4, 8] {
        for n in 2..=8 {
            let dim = d * n;
            for m in 0..dim {
                let expected = (dim as i64 - 2 * d as i64 - 2).max(0) <= 2 * m as i64 && 2 * m < dim - d;
                if check_dm_range(dim, d, m).is_ok() != expected {
                    guard_errors.push((dim, d, m));
                }
            }
        }
    }
    let spot = check_dm_range(6, 1, 1).is_ok()
        && check_dm_range(6, 1, 0).is_err()
        && check_dm_range(8, 2, 1).is_ok()
        && check_dm_range(8, 2, 3).is_err();
    check(
        worst < 1e-6 && guard_errors.is_empty() && spot,
        format!("route mismatch {worst:.1e}, guard disagreements {guard_errors:?}"),
    )
}

fn criterion_9() -> Outcome {
    let mut misses = Vec::new();
    for dim in [3usize, 4, 5, 6, 8] {
        let grid = theta_grid(dim, 512, 9).map_err(|e| e.to_string())?;
        let ball = StarBody::ball(dim, 1.0).map_err(|e| e.to_string())?;
        for lambda in [0.5, 1.0, 2.0, dim as f64 - 1.0] {
            let rep = intersection_body_test(&ball, lambda, 8, &grid).map_err(|e| e.to_string())?;
            if rep.verdict != Membership::Member {
                misses.push((dim, lambda));
            }
        }
    }
    let grid = theta_grid(5, 4096, 9).map_err(|e| e.to_string())?;
    let l = five_dim_body();
    let low = intersection_body_test(&l, 1.0, 8, &grid).map_err(|e| e.to_string())?;
    let high = intersection_body_test(&l, 1.0, 12, &grid).map_err(|e| e.to_string())?;
    check(
        misses.is_empty() && low.verdict == Membership::NonMember && high.verdict == low.verdict,
        format!(
            "ball misses {misses:?}; N=5 body at lambda=1: degree 8 {:?} (min {:.4}), degree 12 {:?} (min {:.4})",
            low.verdict, low.minimum, high.verdict, high.minimum
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(u32, fn() -> Outcome); 9] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
    ];
    let mut failures = 0;
    for (k, run) in criteria {
        match run() {
            Ok(detail) => println!("criterion {k}: PASS  {detail}"),
            Err(detail) => {
                failures += 1;
                println!("criterion {k}: FAIL  {detail}");
            }
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
