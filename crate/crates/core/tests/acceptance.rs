//! Release gate: every behavioral claim the artifact stands on, checked at
//! its stated tolerance, one verdict line per criterion on stdout.
//!
//! Statistical criteria run on seeds fixed here, in the order written, so
//! the whole suite is deterministic: a criterion either always passes or
//! always fails for a given build. Nothing is resampled on failure.

mod common;

use std::f64::consts::FRAC_PI_6;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use sureform::config::{canonical_deblur_config, canonical_denoise_config};
use sureform::conformal::{calibrate, score, ScoreSample};
use sureform::estimators::{
    polynomial_deblur_estimator, soft_threshold_denoiser, wiener_estimator, Estimator,
};
use sureform::harness::{
    prepare_data, run_experiment, run_experiment_with_data, ExperimentOutputs, RunOptions,
};
use sureform::image::Image;
use sureform::operators::{
    gaussian_blur_operator, identity_operator, CirculantOperator, NoiseModel,
};
use sureform::rng::{GaussianRng, RngSeed};
use sureform::sure::{
    divergence_exact, divergence_hutchinson, sure, DivergenceBackend, ProbeDistribution,
    SureSettings,
};
use sureform::synth::generate_smooth_image;

use common::{
    dense_dft, dense_gaussian_kernel, mean_and_var, quantile_k_exact_rational, random_normal_image,
    rel_diff,
};

/// Master seed for every acceptance-only random stream, fixed before the
/// first run of this suite.
const SEED: u64 = 20250815;

type Verdict = Result<String, String>;

fn main() {
    let base = std::env::temp_dir().join(format!("sureform-acceptance-{}", std::process::id()));
    let mut results: Vec<(u32, Verdict)> = Vec::new();

    eprintln!("running full-scale denoise and deblur experiments...");
    let shared = guard(|| shared_runs(&base));

    results.push((1, guard(criterion_1_sure_unbiasedness)));
    results.push((2, guard(criterion_2_identity_closed_form)));
    results.push((3, guard(criterion_3_hutchinson_vs_exact)));
    match &shared {
        Ok(s) => {
            results.push((4, guard(|| criterion_4_supervised_coverage(s))));
            results.push((5, guard(|| criterion_5_self_supervised_tracking(s))));
            results.push((6, guard(|| criterion_6_histogram_agreement(s))));
            results.push((9, guard(|| criterion_9_determinism(s))));
        }
        Err(e) => {
            for n in [4, 5, 6, 9] {
                results.push((n, Err(format!("full-scale runs unavailable: {e}"))));
            }
        }
    }
    results.push((7, guard(criterion_7_quantile_grid)));
    results.push((8, guard(criterion_8_operator_oracles)));
    results.push((10, guard(|| criterion_10_integrity(&base))));

    results.sort_by_key(|(n, _)| *n);
    let mut passed = 0;
    for (n, verdict) in &results {
        match verdict {
            Ok(detail) => {
                passed += 1;
                println!("PASS criterion {n}: {detail}");
            }
            Err(detail) => println!("FAIL criterion {n}: {detail}"),
        }
    }
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}

fn guard<T>(f: impl FnOnce() -> Result<T, String>) -> Result<T, String> {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|payload| {
        let text = payload
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| payload.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "opaque panic".to_string());
        Err(format!("panicked: {text}"))
    })
}

fn exact_settings() -> SureSettings {
    SureSettings {
        backend: DivergenceBackend::Exact,
        probes: 1,
        fd_step: 1e-4,
        probe_distribution: ProbeDistribution::Normal,
    }
}

fn blur_fixture(size: usize) -> CirculantOperator {
    gaussian_blur_operator(size, size, 2.0, 0.3, FRAC_PI_6, 1e-3).unwrap()
}

struct SharedRuns {
    denoise: ExperimentOutputs,
    denoise_dir_a: PathBuf,
    denoise_dir_b: PathBuf,
    deblur: ExperimentOutputs,
    test_samples: usize,
}

fn shared_runs(base: &Path) -> Result<SharedRuns, String> {
    let opts = RunOptions::default();
    let mut denoise_cfg = canonical_denoise_config();
    let denoise_dir_a = base.join("denoise-a");
    let denoise_dir_b = base.join("denoise-b");
    denoise_cfg.output_dir = denoise_dir_a.clone();
    let denoise = run_experiment(&denoise_cfg, &opts).map_err(|e| format!("denoise run: {e}"))?;
    denoise_cfg.output_dir = denoise_dir_b.clone();
    run_experiment(&denoise_cfg, &opts).map_err(|e| format!("denoise rerun: {e}"))?;

    let mut deblur_cfg = canonical_deblur_config();
    deblur_cfg.output_dir = base.join("deblur");
    let deblur = run_experiment(&deblur_cfg, &opts).map_err(|e| format!("deblur run: {e}"))?;
    if denoise_cfg.test_samples != 200 || deblur_cfg.test_samples != 200 {
        return Err("canonical experiments must use N = 200 test samples".to_string());
    }
    Ok(SharedRuns {
        denoise,
        denoise_dir_a,
        denoise_dir_b,
        deblur,
        test_samples: 200,
    })
}

/// Criterion 1: over 500 paired noise draws per fixture, the mean risk
/// estimate matches the mean true score within 4 standard errors of the
/// paired difference, in under 2 minutes per fixture.
fn criterion_1_sure_unbiasedness() -> Verdict {
    let draws = 500u64;
    let identity = identity_operator(64, 64).unwrap();
    let blur = blur_fixture(64);
    let fixtures: Vec<(&str, &CirculantOperator, NoiseModel, Estimator)> = vec![
        (
            "soft-threshold",
            &identity,
            NoiseModel::new(0.1).unwrap(),
            soft_threshold_denoiser(0.1).unwrap(),
        ),
        (
            "wiener",
            &blur,
            NoiseModel::new(0.01).unwrap(),
            wiener_estimator(&blur, 0.01, 1.0).unwrap(),
        ),
        (
            "polynomial-deblur",
            &blur,
            NoiseModel::new(0.01).unwrap(),
            polynomial_deblur_estimator(&blur, 3).unwrap(),
        ),
    ];
    let settings = exact_settings();
    let mut details = Vec::new();
    for (idx, (name, op, noise, est)) in fixtures.iter().enumerate() {
        let start = Instant::now();
        let truth =
            generate_smooth_image(64, 64, 8.0, RngSeed(SEED).derive(100 + idx as u64)).unwrap();
        let clean = op.apply(&truth).unwrap();
        let noise_stream = RngSeed(SEED).derive(110 + idx as u64);
        let diffs: Vec<f64> = (0..draws)
            .map(|j| {
                let y = noise.add_noise(&clean, noise_stream.derive(j));
                let estimate = sure(est, op, noise, &y, &settings, RngSeed(0))
                    .unwrap()
                    .value;
                let true_score = score(op, &truth, &est.reconstruct(&y).unwrap()).unwrap();
                estimate - true_score
            })
            .collect();
        let (mean, var) = mean_and_var(&diffs);
        let se = (var / draws as f64).sqrt();
        let elapsed = start.elapsed();
        if mean.abs() > 4.0 * se {
            return Err(format!(
                "{name}: |mean SURE − mean s| = {:.3e} exceeds 4·SE = {:.3e}",
                mean.abs(),
                4.0 * se
            ));
        }
        if elapsed.as_secs_f64() > 120.0 {
            return Err(format!(
                "{name}: took {:.1}s, over the 2 min budget",
                elapsed.as_secs_f64()
            ));
        }
        details.push(format!(
            "{name} |Δ|={:.2e} ≤ 4·SE={:.2e} in {:.1}s",
            mean.abs(),
            4.0 * se,
            elapsed.as_secs_f64()
        ));
    }
    Ok(format!(
        "500 paired draws per fixture; {}",
        details.join("; ")
    ))
}

/// Criterion 2: with x̂(y) = y and A = 𝕀 the estimate collapses to σ²
/// identically; verified to 1e-12 over random measurements and noise levels.
fn criterion_2_identity_closed_form() -> Verdict {
    let op = identity_operator(64, 64).unwrap();
    let est = soft_threshold_denoiser(0.0).unwrap();
    let settings = exact_settings();
    let mut worst = 0.0f64;
    for (i, sigma) in [0.05, 0.1, 0.7].iter().enumerate() {
        let noise = NoiseModel::new(*sigma).unwrap();
        for j in 0..10u64 {
            let y =
                generate_smooth_image(64, 64, 6.0, RngSeed(SEED).derive(120 + i as u64).derive(j))
                    .unwrap();
            let value = sure(&est, &op, &noise, &y, &settings, RngSeed(0))
                .unwrap()
                .value;
            worst = worst.max((value - sigma * sigma).abs());
        }
    }
    if worst <= 1e-12 {
        Ok(format!(
            "SURE(y) = σ² for identity estimator; max |SURE − σ²| = {worst:.2e} over 30 measurements"
        ))
    } else {
        Err(format!("max |SURE − σ²| = {worst:.2e} exceeds 1e-12"))
    }
}

/// Criterion 3: on 16×16 linear fixtures, K=1000 probes land within 5% of
/// the closed-form trace, and beat K=10 in at least 95 of 100 trials.
///
/// The 95/100 bar is stricter than the estimator's own statistics support.
/// For two independent zero-mean Gaussian probe averages whose standard
/// deviations differ by the factor √(1000/10) = 10, the chance that the
/// larger sample wins a single trial is (2/π)·arctan(10) ≈ 0.937, and the
/// measured per-trial win rate on these fixtures is 0.93 to 0.95, so a
/// 100-trial batch clears 95 wins only about a third of the time. A miss
/// here reflects that calibration, not a divergence-estimator defect; the
/// K=1000 relative-error check is the substantive accuracy gate, and the
/// seeded run keeps whichever verdict it produces stable across reruns.
fn criterion_3_hutchinson_vs_exact() -> Verdict {
    let op = blur_fixture(16);
    let fixtures: Vec<(&str, Estimator)> = vec![
        ("wiener", wiener_estimator(&op, 0.01, 1.0).unwrap()),
        (
            "polynomial-deblur",
            polynomial_deblur_estimator(&op, 3).unwrap(),
        ),
    ];
    let mut details = Vec::new();
    for (idx, (name, est)) in fixtures.iter().enumerate() {
        let y = generate_smooth_image(16, 16, 4.0, RngSeed(SEED).derive(130 + idx as u64)).unwrap();
        let exact = divergence_exact(est, &op, &y).unwrap().value;
        let base = RngSeed(SEED).derive(300 + idx as u64);
        let hutch = |probes: usize, seed: RngSeed| {
            divergence_hutchinson(est, &op, &y, probes, 1e-4, ProbeDistribution::Normal, seed)
                .unwrap()
                .value
        };
        let rel = (hutch(1000, base.derive(1)) - exact).abs() / exact.abs();
        if rel > 0.05 {
            return Err(format!(
                "{name}: K=1000 relative error {:.3}% exceeds 5%",
                rel * 100.0
            ));
        }
        let trials = 100u64;
        let improved = (0..trials)
            .filter(|&t| {
                let err_small = (hutch(10, base.derive(2).derive(t)) - exact).abs();
                let err_large = (hutch(1000, base.derive(3).derive(t)) - exact).abs();
                err_large < err_small
            })
            .count();
        if improved < 95 {
            return Err(format!(
                "{name}: K=1000 beat K=10 in only {improved}/100 trials (need ≥ 95); \
                 K=1000 rel err {:.3}%",
                rel * 100.0
            ));
        }
        details.push(format!(
            "{name} rel err {:.3}% at K=1000, improved {improved}/100 trials",
            rel * 100.0
        ));
    }
    Ok(details.join("; "))
}

/// Criterion 4: supervised coverage stays above (1−α) − 3·√(α(1−α)/200) at
/// every grid α in both full-scale experiments.
fn criterion_4_supervised_coverage(shared: &SharedRuns) -> Verdict {
    let mut min_margin = f64::INFINITY;
    for (label, outputs) in [("denoise", &shared.denoise), ("deblur", &shared.deblur)] {
        for row in &outputs.curve.rows {
            let bound = (1.0 - row.alpha) - 3.0 * (row.alpha * (1.0 - row.alpha) / 200.0).sqrt();
            let margin = row.coverage_supervised - bound;
            min_margin = min_margin.min(margin);
            if margin < 0.0 {
                return Err(format!(
                    "{label} α={}: coverage {:.4} below bound {bound:.4}",
                    row.alpha, row.coverage_supervised
                ));
            }
        }
    }
    Ok(format!(
        "coverage ≥ (1−α) − 3·√(α(1−α)/200) on all 38 grid points; min margin {min_margin:.4}"
    ))
}

/// Criterion 5: self-supervised coverage tracks supervised coverage within
/// 0.06 at every grid α in both experiments. Coverages are counts over the
/// N test samples, so the comparison runs in whole samples: a boundary gap
/// of exactly 0.06·N must not fail on f64 subtraction noise.
fn criterion_5_self_supervised_tracking(shared: &SharedRuns) -> Verdict {
    let n = shared.test_samples as f64;
    let slack = (0.06 * n).round() as i64;
    let mut max_gap = 0i64;
    for (label, outputs) in [("denoise", &shared.denoise), ("deblur", &shared.deblur)] {
        for row in &outputs.curve.rows {
            let gap = ((row.coverage_sure - row.coverage_supervised) * n).round() as i64;
            max_gap = max_gap.max(gap.abs());
            if gap.abs() > slack {
                return Err(format!(
                    "{label} α={}: |coverage gap| = {:.4} ({} of {} test samples) exceeds 0.06",
                    row.alpha,
                    gap.abs() as f64 / n,
                    gap.abs(),
                    shared.test_samples
                ));
            }
        }
    }
    Ok(format!(
        "|coverage_sure − coverage_supervised| ≤ 0.06 on all 38 grid points; max gap {:.4} ({max_gap} of {} test samples)",
        max_gap as f64 / n,
        shared.test_samples
    ))
}

/// Criterion 6: supervised and self-supervised calibration score means agree
/// within 4 combined standard errors in both experiments.
fn criterion_6_histogram_agreement(shared: &SharedRuns) -> Verdict {
    let mut details = Vec::new();
    for (label, outputs) in [("denoise", &shared.denoise), ("deblur", &shared.deblur)] {
        let sup: Vec<f64> = outputs.supervised.iter().map(|s| s.value).collect();
        let sure_vals: Vec<f64> = outputs.sure.iter().map(|s| s.value).collect();
        let (mean_sup, var_sup) = mean_and_var(&sup);
        let (mean_sure, var_sure) = mean_and_var(&sure_vals);
        let combined_se = (var_sup / sup.len() as f64 + var_sure / sure_vals.len() as f64).sqrt();
        let gap = (mean_sup - mean_sure).abs();
        if gap > 4.0 * combined_se {
            return Err(format!(
                "{label}: |Δmean| = {gap:.3e} exceeds 4·combined SE = {:.3e}",
                4.0 * combined_se
            ));
        }
        details.push(format!(
            "{label} |Δmean|={gap:.2e} ≤ 4·SE={:.2e}",
            4.0 * combined_se
        ));
    }
    Ok(details.join("; "))
}

/// Criterion 7: on scores {1..M} the calibrated threshold is the
/// k = ⌈(M+1)(1−α)⌉ order statistic (k itself), or +∞ when k > M, across
/// the full M × α acceptance grid. k comes from exact rational arithmetic.
fn criterion_7_quantile_grid() -> Verdict {
    let alphas: [(f64, u64, u64); 4] = [(0.01, 1, 100), (0.05, 1, 20), (0.1, 1, 10), (0.5, 1, 2)];
    let mut degenerate = 0;
    for m in [5usize, 50, 99, 100, 500] {
        let scores: Vec<ScoreSample> = (0..m)
            .map(|i| ScoreSample::supervised(i, (i + 1) as f64).unwrap())
            .collect();
        for (alpha, num, den) in alphas {
            let k = quantile_k_exact_rational(m as u64 + 1, num, den);
            let result = calibrate(&scores, alpha).unwrap();
            if k as usize > m {
                degenerate += 1;
                if !result.q_hat.is_infinite() {
                    return Err(format!(
                        "M={m} α={alpha}: expected +∞ (k={k} > M), got {}",
                        result.q_hat
                    ));
                }
            } else if result.q_hat != k as f64 {
                return Err(format!(
                    "M={m} α={alpha}: expected order statistic {k}, got {}",
                    result.q_hat
                ));
            }
        }
    }
    Ok(format!(
        "all 20 (M, α) pairs reproduce ⌈(M+1)(1−α)⌉ exactly ({degenerate} degenerate +∞ cases)"
    ))
}

/// Criterion 8: adjoint and linearity identities to 1e-10 relative on 100
/// random inputs, and the blur fixture's extremal symbol statistics against
/// the dense-DFT oracle to 1e-9 relative.
fn criterion_8_operator_oracles() -> Verdict {
    let op = blur_fixture(64);
    let dot = |a: &Image, b: &Image| -> f64 {
        a.pixels().iter().zip(b.pixels()).map(|(x, y)| x * y).sum()
    };
    let mut rng = GaussianRng::new(RngSeed(SEED).derive(400));
    let mut max_adjoint = 0.0f64;
    let mut max_linearity = 0.0f64;
    for i in 0..100u64 {
        let u = random_normal_image(64, 64, RngSeed(SEED).derive(401).derive(i));
        let v = random_normal_image(64, 64, RngSeed(SEED).derive(402).derive(i));
        let au = op.apply(&u).unwrap();
        let atv = op.apply_adjoint(&v).unwrap();
        let lhs = dot(&au, &v);
        let rhs = dot(&u, &atv);
        max_adjoint = max_adjoint.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()));

        let (a, b) = (4.0 * rng.uniform() - 2.0, 4.0 * rng.uniform() - 2.0);
        let mut combo = Image::zeros(64, 64).unwrap();
        for (slot, (x, y)) in combo
            .pixels_mut()
            .iter_mut()
            .zip(u.pixels().iter().zip(v.pixels()))
        {
            *slot = a * x + b * y;
        }
        let left = op.apply(&combo).unwrap();
        let av = op.apply(&v).unwrap();
        let mut residual = 0.0f64;
        let mut scale = 0.0f64;
        for ((l, x), y) in left.pixels().iter().zip(au.pixels()).zip(av.pixels()) {
            residual += (l - (a * x + b * y)).powi(2);
            scale += (a * x).powi(2) + (b * y).powi(2);
        }
        max_linearity = max_linearity.max((residual / scale).sqrt());
    }
    if max_adjoint > 1e-10 {
        return Err(format!(
            "adjoint identity off by {max_adjoint:.2e} relative"
        ));
    }
    if max_linearity > 1e-10 {
        return Err(format!("linearity off by {max_linearity:.2e} relative"));
    }

    let kernel = dense_gaussian_kernel(64, 64, 2.0, 0.3, FRAC_PI_6);
    let symbol = dense_dft(&kernel, 64, 64);
    let oracle_min = symbol
        .iter()
        .map(|c| c.norm())
        .fold(f64::INFINITY, f64::min);
    let oracle_max = symbol.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let min_rel = rel_diff(op.min_symbol_magnitude(), oracle_min);
    let cond_rel = rel_diff(op.condition_number(), oracle_max / oracle_min);
    if min_rel > 1e-9 || cond_rel > 1e-9 {
        return Err(format!(
            "dense-DFT oracle disagreement: min symbol {min_rel:.2e}, condition {cond_rel:.2e}"
        ));
    }
    Ok(format!(
        "adjoint ≤ {max_adjoint:.1e}, linearity ≤ {max_linearity:.1e} over 100 inputs; \
         min symbol and condition number match dense oracle to {:.1e}",
        min_rel.max(cond_rel)
    ))
}

/// Criterion 9: two runs of the full denoise experiment from the same config
/// produce byte-identical CSV artifacts.
fn criterion_9_determinism(shared: &SharedRuns) -> Verdict {
    for f in ["coverage.csv", "scores.csv", "histogram.csv"] {
        let a = fs::read(shared.denoise_dir_a.join(f)).map_err(|e| format!("{f}: {e}"))?;
        let b = fs::read(shared.denoise_dir_b.join(f)).map_err(|e| format!("{f}: {e}"))?;
        if a != b {
            return Err(format!("{f} differs between identical runs"));
        }
    }
    Ok("coverage.csv, scores.csv, histogram.csv byte-identical across reruns".to_string())
}

/// Criterion 10: replacing every truth image with noise leaves each
/// SURE-path output (per-sample scores, calibrated thresholds) byte-identical
/// in the written artifacts, while the supervised column changes.
fn criterion_10_integrity(base: &Path) -> Verdict {
    let opts = RunOptions::default();
    let mut config = canonical_denoise_config();
    config.output_dir = base.join("integrity-clean");
    let data = prepare_data(&config).map_err(|e| format!("prepare: {e}"))?;
    run_experiment_with_data(&config, &data, &opts).map_err(|e| format!("clean run: {e}"))?;

    let mut vandalized = data.clone();
    let mut rng = GaussianRng::new(RngSeed(SEED).derive(500));
    for truth in &mut vandalized.truths {
        let pixels = (0..truth.pixels().len()).map(|_| rng.uniform()).collect();
        *truth = Image::from_pixels(truth.width(), truth.height(), pixels).unwrap();
    }
    let clean_dir = config.output_dir.clone();
    config.output_dir = base.join("integrity-corrupt");
    run_experiment_with_data(&config, &vandalized, &opts)
        .map_err(|e| format!("corrupted run: {e}"))?;

    let column = |dir: &Path, file: &str, idx: usize| -> Result<Vec<String>, String> {
        Ok(fs::read_to_string(dir.join(file))
            .map_err(|e| format!("{file}: {e}"))?
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(idx).unwrap_or("").to_string())
            .collect())
    };
    let sure_scores_clean = column(&clean_dir, "scores.csv", 2)?;
    let sure_scores_corrupt = column(&config.output_dir, "scores.csv", 2)?;
    if sure_scores_clean != sure_scores_corrupt {
        return Err("per-sample SURE scores changed when truths were corrupted".to_string());
    }
    let q_clean = column(&clean_dir, "coverage.csv", 6)?;
    let q_corrupt = column(&config.output_dir, "coverage.csv", 6)?;
    if q_clean != q_corrupt {
        return Err("SURE-calibrated thresholds changed when truths were corrupted".to_string());
    }
    if column(&clean_dir, "scores.csv", 1)? == column(&config.output_dir, "scores.csv", 1)? {
        return Err(
            "supervised scores failed to register the corruption (test is vacuous)".to_string(),
        );
    }
    Ok(format!(
        "all {} SURE scores and {} thresholds byte-identical after replacing every truth image",
        sure_scores_clean.len(),
        q_clean.len()
    ))
}
