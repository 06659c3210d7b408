//! Acceptance checks, one line per criterion.
//!
//! Run with `cargo test -p qimage-core --test acceptance`. Exits non-zero if
//! any criterion fails.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_6, SQRT_2};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qimage::codec::{
    encode_gray, expected_pixel_signal, global_transform, optimal_amplitude, point_transform,
    retrieve_image,
};
use qimage::experiments::{
    build_layered_database, bundled_reference, iqa_table, normalize_reference,
    perturbation_ranking, sensitivity_sweep, sweep_is_decreasing, NoiseSpec, PerturbationSpec,
    SweepSpec,
};
use qimage::network::{
    build_balanced_tree, build_gamma_chain, chop, effective_unitary, NetworkPlan,
};
use qimage::optics::{apply_unitary, CoherentField, ModeUnitary};
use qimage::rng::{poisson_count, substream};
use qimage::similarity::{
    cosine_similarity, cosine_similarity_measured, database_single_run, rank_database, Exhaustive,
    ImageDatabase, Stochastic,
};
use qimage::{EncodingParams, GrayImage, PhaseImage, ReadoutMode};

type Outcome = Result<String, String>;

/// Name, check, time budget in seconds.
type Criterion = (&'static str, fn() -> Outcome, u64);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Reference 8-mode tree unitary, in units of `1/(2 sqrt 2)`.
fn reference_tree_unitary() -> Vec<Vec<f64>> {
    let r = SQRT_2;
    vec![
        vec![1.0, 1.0, r, 0.0, 2.0, 0.0, 0.0, 0.0],
        vec![1.0, -1.0, 0.0, r, 0.0, 2.0, 0.0, 0.0],
        vec![1.0, 1.0, -r, 0.0, 0.0, 0.0, 2.0, 0.0],
        vec![1.0, -1.0, 0.0, -r, 0.0, 0.0, 0.0, 2.0],
        vec![1.0, 1.0, r, 0.0, -2.0, 0.0, 0.0, 0.0],
        vec![1.0, -1.0, 0.0, -r, 0.0, -2.0, 0.0, 0.0],
        vec![1.0, 1.0, r, 0.0, 0.0, 0.0, -2.0, 0.0],
        vec![1.0, -1.0, 0.0, -r, 0.0, 0.0, 0.0, -2.0],
    ]
}

fn c1_tree_matrix() -> Outcome {
    let u = effective_unitary(&build_balanced_tree(8).unwrap()).unwrap();
    let reference = reference_tree_unitary();
    let scale = 1.0 / (2.0 * SQRT_2);
    let mut mismatches = Vec::new();
    let mut worst: f64 = 0.0;
    for (i, row) in reference.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            let d = (u.get(i, j) - Complex64::new(p * scale, 0.0)).norm();
            worst = worst.max(d);
            if d > 1e-12 {
                mismatches.push(format!(
                    "({},{}) reference {:+.4} computed {:+.4}",
                    i + 1,
                    j + 1,
                    p,
                    u.get(i, j).re / scale
                ));
            }
        }
    }
    check(
        mismatches.is_empty(),
        format!(
            "max entry diff {worst:.3e}; mismatched entries: [{}]",
            mismatches.join("; ")
        ),
    )
}

fn c2_counts() -> Outcome {
    let mut bad = Vec::new();
    for n in 1..=6 {
        let t = 1usize << n;
        let tree = build_balanced_tree(t).unwrap();
        let chain = build_gamma_chain(t).unwrap();
        if tree.splitter_count() != t - 1
            || tree.depth() != n as usize
            || chain.splitter_count() != t - 1
        {
            bad.push(t);
        }
    }
    for t in 2..=64 {
        if build_gamma_chain(t).unwrap().splitter_count() != t - 1 {
            bad.push(t);
        }
    }
    check(bad.is_empty(), format!("failing T: {bad:?}"))
}

fn chop_error(alpha: Complex64, plan: &NetworkPlan) -> (f64, f64) {
    let t = plan.mode_count();
    let out = chop(alpha, plan).unwrap();
    let want = alpha.norm() / (t as f64).sqrt();
    let modulus = out
        .amplitudes()
        .iter()
        .map(|a| (a.norm() - want).abs())
        .fold(0.0, f64::max);
    let photons = (out.total_photon_number() - alpha.norm_sqr()).abs() / alpha.norm_sqr();
    (modulus, photons)
}

fn c3_chop() -> Outcome {
    let alpha = Complex64::new(3.1, -1.7);
    let (mut m, mut p) = (0.0f64, 0.0f64);
    let mut plans = 0;
    for t in 2..=64 {
        let mut kinds = vec![build_gamma_chain(t).unwrap()];
        if t.is_power_of_two() {
            kinds.push(build_balanced_tree(t).unwrap());
        }
        for plan in &kinds {
            let (dm, dp) = chop_error(alpha, plan);
            m = m.max(dm);
            p = p.max(dp);
            plans += 1;
        }
    }
    check(
        m <= 1e-10 && p <= 1e-10,
        format!("{plans} plans; max modulus error {m:.2e}, max relative photon error {p:.2e}"),
    )
}

const SIGNAL_LEVELS: [(u32, f64, f64, f64); 6] = [
    (1, 0.0, 0.0, 0.0),
    (1, FRAC_PI_2, 2.3, 1.516),
    (2, 0.0, 0.0, 0.0),
    (2, FRAC_PI_6, 2.304, 1.518),
    (2, FRAC_PI_3, 8.599, 2.932),
    (2, FRAC_PI_2, 17.2, 4.147),
];

fn signal_error(a2: impl Fn(u32) -> f64) -> (f64, Vec<String>) {
    let mut worst: f64 = 0.0;
    let mut rows = Vec::new();
    for &(bits, theta, n, dn) in &SIGNAL_LEVELS {
        let p = EncodingParams::new(a2(bits).sqrt(), bits).unwrap();
        let got = expected_pixel_signal(theta, &p);
        let err = (got - n).abs().max((got.sqrt() - dn).abs());
        worst = worst.max(err);
        rows.push(format!("{got:.4}+-{:.4}", got.sqrt()));
    }
    (worst, rows)
}

fn c4_signal_levels() -> Outcome {
    let exact = |bits: u32| {
        let max = ((1u32 << bits) - 1) as f64;
        10f64.ln() / (1.0 - (FRAC_PI_2 / max).cos())
    };
    let rounded = |bits: u32| if bits == 1 { 2.3 } else { 17.2 };
    let (e_exact, rows) = signal_error(exact);
    let (e_rounded, _) = signal_error(rounded);
    check(
        e_exact <= 0.005 && e_rounded <= 0.001,
        format!(
            "exact a^2: max error {e_exact:.4} (tol 0.005) rows [{}]; rounded a^2 2.3/17.2: max error {e_rounded:.4} (tol 0.001)",
            rows.join(", ")
        ),
    )
}

#[allow(clippy::approx_constant)]
fn c5_amplitude() -> Outcome {
    let a1 = optimal_amplitude(1, 0.1).unwrap().powi(2);
    let a2 = optimal_amplitude(2, 0.1).unwrap().powi(2);
    check(
        (a1 - 2.3026).abs() <= 0.001 && (a2 - 17.19).abs() <= 0.05,
        format!("a^2(j=1) = {a1:.5}, a^2(j=2) = {a2:.5}"),
    )
}

fn c6_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let depths = [1u32, 2, 4, 8];
    let mut failures = 0;
    for i in 0..200 {
        let bits = depths[i % 4];
        let (w, h) = (rng.random_range(1..=16), rng.random_range(1..=16));
        let max = (1u32 << bits) - 1;
        let px = (0..w * h).map(|_| rng.random_range(0..=max)).collect();
        let img = GrayImage::new(w, h, bits, px).unwrap();
        let params = EncodingParams::optimal(bits, 0.1).unwrap();
        let field = encode_gray(&img, &params).unwrap();
        let (back, _) = retrieve_image(&field, w, h, &params, ReadoutMode::Expectation).unwrap();
        if back != img {
            failures += 1;
        }
    }
    check(failures == 0, format!("{failures} of 200 images differ"))
}

fn c7_poisson() -> Outcome {
    let mut rng = substream(7, 0);
    let n = 1_000_000;
    let draws: Vec<f64> = (0..n)
        .map(|_| poisson_count(&mut rng, 17.2) as f64)
        .collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    check(
        (mean - 17.2).abs() <= 0.05 && (var - 17.2).abs() <= 0.05 * 17.2,
        format!("mean {mean:.4}, variance {var:.4}"),
    )
}

fn random_phases(rng: &mut ChaCha8Rng, w: usize, h: usize) -> PhaseImage {
    PhaseImage::new(
        w,
        h,
        (0..w * h)
            .map(|_| rng.random_range(0.0..=FRAC_PI_2))
            .collect(),
    )
    .unwrap()
}

fn c8_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let params = EncodingParams::optimal(8, 0.1).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let a = random_phases(&mut rng, 8, 8);
        let b = random_phases(&mut rng, 8, 8);
        let direct = cosine_similarity(&a, &b).unwrap();
        let measured = cosine_similarity_measured(&a, &b, &params, ReadoutMode::Expectation)
            .unwrap()
            .cosine;
        worst = worst.max((direct - measured).abs());
    }
    check(
        worst <= 1e-12,
        format!("max |measured - direct| = {worst:.2e}"),
    )
}

fn c9_noise_layers() -> Outcome {
    let reference = normalize_reference(&bundled_reference());
    let params = EncodingParams::optimal(8, 0.1).unwrap();
    let mut monotone = 0;
    let mut anchor_ok = true;
    let mut spearman_ok = true;
    for seed in 0..100 {
        let spec = NoiseSpec {
            mean: 0.0,
            sigma: 0.1,
            layers: 10,
            seed,
        };
        let t = iqa_table(&reference, &spec, &params, ReadoutMode::Expectation).unwrap();
        anchor_ok &= t.rows.len() == 11 && t.rows[0].cosine == 1.0 && t.rows[0].mse == 0.0;
        if t.cosine_decreasing && t.mse_increasing {
            monotone += 1;
            spearman_ok &= t.spearman == Some(-1.0);
        }
    }
    check(
        monotone >= 90 && anchor_ok && spearman_ok,
        format!("{monotone}/100 seeds monotone; R-R exact: {anchor_ok}; Spearman -1 on monotone seeds: {spearman_ok}"),
    )
}

fn c10_sweep() -> Outcome {
    let reference = normalize_reference(&bundled_reference());
    let sweep = SweepSpec {
        sigma_min: 0.01,
        sigma_max: 1.0,
        steps: 20,
        seeds: 20,
    };
    let points = sensitivity_sweep(&reference, &sweep, 0.0, 10).unwrap();
    let at = |sigma: f64| {
        let s = SweepSpec {
            sigma_min: sigma,
            sigma_max: sigma,
            steps: 1,
            seeds: 20,
        };
        sensitivity_sweep(&reference, &s, 0.0, 10).unwrap()[0].cosine
    };
    let low = at(0.01) - at(0.2);
    let high = at(0.8) - at(1.0);
    check(
        sweep_is_decreasing(&points) && low > high,
        format!(
            "monotone: {}; drop over [0.01,0.2] {low:.5}, over [0.8,1.0] {high:.5}",
            sweep_is_decreasing(&points)
        ),
    )
}

fn c11_perturbation() -> Outcome {
    let reference = normalize_reference(&bundled_reference());
    let spec = PerturbationSpec {
        sigma0: 0.2,
        delta_sigma: 1e-10,
        count: 10,
    };
    let t = perturbation_ranking(&reference, &spec, 0.0, 11).unwrap();
    let smallest = t.smallest_resolvable_delta;
    check(
        t.strict && t.in_order && smallest.is_some_and(|d| d <= 1e-8),
        format!(
            "delta 1e-10: strict {}, in order {}; smallest resolvable delta {}",
            t.strict,
            t.in_order,
            smallest
                .map(|d| format!("{d:.3e}"))
                .unwrap_or_else(|| "none".into())
        ),
    )
}

fn small_reference() -> qimage::NormalizedImage {
    // top-left 16x16 block of the bundled image, renormalized
    let full = bundled_reference();
    let px = (0..16)
        .flat_map(|y| (0..16).map(move |x| (x, y)))
        .map(|(x, y)| full.get(x, y))
        .collect();
    normalize_reference(&GrayImage::new(16, 16, 8, px).unwrap())
}

fn c12_database() -> Outcome {
    let reference = small_reference();
    let params = EncodingParams::optimal(8, 0.1).unwrap();
    let spec = NoiseSpec {
        mean: 0.0,
        sigma: 0.1,
        layers: 4,
        seed: 12,
    };
    let db4 = build_layered_database(&reference, &spec).unwrap().database;
    let ref_phase = reference.to_phase_image();
    let runs = 10_000;
    let mut counts = [0usize; 4];
    for seed in 0..runs {
        counts[database_single_run(&db4, &ref_phase, &params, seed as u64)
            .unwrap()
            .detected_index
            - 1] += 1;
    }
    let expected = runs as f64 / 4.0;
    let sd = (runs as f64 * 0.25 * 0.75).sqrt();
    let uniform = counts
        .iter()
        .all(|&c| (c as f64 - expected).abs() <= 4.0 * sd);

    let mut agree = 0;
    let trials = 5;
    for seed in 0..trials {
        let db: ImageDatabase = build_layered_database(
            &reference,
            &NoiseSpec {
                layers: 8,
                seed,
                ..spec
            },
        )
        .unwrap()
        .database;
        let strategy = Stochastic {
            max_runs: Stochastic::budget(8, 50.0),
            seed,
        };
        let ex = rank_database(&db, &ref_phase, &params, &Exhaustive).unwrap();
        let st = rank_database(&db, &ref_phase, &params, &strategy).unwrap();
        let same_values = ex
            .reports
            .iter()
            .zip(&st.reports)
            .all(|(a, b)| (a.cosine - b.cosine).abs() <= 1e-12);
        if st.is_complete() && ex.order() == st.order() && same_values {
            agree += 1;
        }
    }
    check(
        uniform && agree == trials,
        format!("index counts {counts:?} (expected {expected:.0} +- {:.0}); rankings agree on {agree}/{trials} databases", 4.0 * sd),
    )
}

fn random_unitary(rng: &mut ChaCha8Rng, n: usize) -> ModeUnitary {
    // Gram-Schmidt on random complex columns
    let mut cols: Vec<Vec<Complex64>> = Vec::new();
    while cols.len() < n {
        let mut v: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        for _ in 0..2 {
            for c in &cols {
                let proj: Complex64 = c.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                for (x, y) in v.iter_mut().zip(c) {
                    *x -= proj * y;
                }
            }
        }
        let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-6 {
            cols.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    let entries = (0..n)
        .flat_map(|r| (0..n).map(move |c| (r, c)))
        .map(|(r, c)| cols[c][r])
        .collect();
    ModeUnitary::new(n, entries).unwrap()
}

#[allow(clippy::needless_range_loop)]
fn c13_double_sum() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..=16);
        let big_u = random_unitary(&mut rng, n);
        // the double-sum matrix u is the adjoint of the mode matrix
        let u: Vec<Vec<Complex64>> = (0..n)
            .map(|j| (0..n).map(|k| big_u.get(k, j).conj()).collect())
            .collect();
        let alpha: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)))
            .collect();
        let beta = apply_unitary(&CoherentField::new(alpha.clone()).unwrap(), &big_u).unwrap();
        for k in 0..n {
            let mut sum = Complex64::new(0.0, 0.0);
            for j in 0..n {
                sum += u[j][k].conj() * alpha[j];
            }
            worst = worst.max((sum - beta.amplitudes()[k]).norm());
        }
    }
    check(
        worst <= 1e-12,
        format!("max |beta - double sum| = {worst:.2e} over 100 pairs"),
    )
}

fn c14_phase_transforms() -> Outcome {
    let plan = build_balanced_tree(16).unwrap();
    let alpha = Complex64::new(2.0, 0.5);
    let base = chop(alpha, &plan).unwrap();
    let mut worst_mod: f64 = 0.0;
    let mut worst_phase: f64 = 0.0;
    let mut worst_global: f64 = 0.0;
    for (i, &d) in [0.0, 0.3, -1.1, FRAC_PI_2, 2.9].iter().enumerate() {
        let k = 1 + (i * 5) % 16;
        let once = point_transform(&base, k, d).unwrap();
        let twice = point_transform(&point_transform(&base, k, d).unwrap(), k, 0.7).unwrap();
        let summed = point_transform(&base, k, d + 0.7).unwrap();
        for m in 0..16 {
            let (b, o) = (base.amplitudes()[m], once.amplitudes()[m]);
            worst_mod = worst_mod.max((o.norm() - b.norm()).abs());
            let want = if m + 1 == k {
                b * Complex64::from_polar(1.0, d)
            } else {
                b
            };
            worst_phase = worst_phase.max((o - want).norm());
            worst_phase = worst_phase.max((twice.amplitudes()[m] - summed.amplitudes()[m]).norm());
        }
        let global = global_transform(alpha, d, &plan).unwrap();
        let mut every = base.clone();
        for m in 1..=16 {
            every = point_transform(&every, m, d).unwrap();
        }
        for m in 0..16 {
            worst_global =
                worst_global.max((global.amplitudes()[m] - every.amplitudes()[m]).norm());
            worst_mod =
                worst_mod.max((global.amplitudes()[m].norm() - base.amplitudes()[m].norm()).abs());
        }
    }
    check(
        worst_mod <= 1e-14 && worst_phase <= 1e-14 && worst_global <= 1e-14,
        format!("modulus {worst_mod:.1e}, phase addition {worst_phase:.1e}, global vs per-mode {worst_global:.1e}"),
    )
}

fn main() {
    let criteria: [Criterion; 14] = [
        ("1 tree unitary matches reference matrix", c1_tree_matrix, 1),
        ("2 splitter count and depth", c2_counts, 1),
        ("3 chop correctness", c3_chop, 1),
        ("4 signal table", c4_signal_levels, 1),
        ("5 optimal amplitudes", c5_amplitude, 1),
        ("6 round-trip retrieval", c6_round_trip, 5),
        ("7 shot-noise statistics", c7_poisson, 10),
        ("8 measured vs direct cosine", c8_identity, 5),
        ("9 noise-layer table shape", c9_noise_layers, 60),
        ("10 sigma sweep shape", c10_sweep, 120),
        ("11 perturbation ranking", c11_perturbation, 30),
        ("12 database protocol", c12_database, 30),
        ("13 mode transformation oracle", c13_double_sum, 5),
        ("14 phase transformations", c14_phase_transforms, 1),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, f, budget) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let over = elapsed > Duration::from_secs(budget);
        let (status, detail) = match (&outcome, over) {
            (Ok(d), false) => ("PASS", d.clone()),
            (Ok(d), true) => ("FAIL", format!("{d}; over time budget")),
            (Err(d), _) => ("FAIL", d.clone()),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!(
            "{status} criterion {name} [{:.2}s / {budget}s]: {detail}",
            elapsed.as_secs_f64()
        );
    }
    println!("{} passed, {failed} failed", 14 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
