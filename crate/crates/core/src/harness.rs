//! End-to-end experiment driver: data preparation, score computation for
//! both calibration routes, coverage evaluation over the confidence grid,
//! and artifact output.
//!
//! Reproducibility contract: every random draw in a run is seeded from the
//! config's master seed through fixed stream/sample derivations, and all
//! parallel stages use order-preserving collects, so two runs of the same
//! config produce byte-identical CSV artifacts regardless of thread count.
//!
//! Integrity boundary: [`sure_scores`] takes measurements only. The
//! self-supervised route cannot read ground truth because no truth is in
//! scope; the signature, not reviewer discipline, enforces the separation.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, ImageSource, SyntheticSource};
use crate::conformal::{calibrate, calibrate_loo, score, ConformalError, ScoreSample};
use crate::estimators::{Estimator, EstimatorError};
use crate::formats::{read_image, write_image, write_table, FormatError};
use crate::image::{Image, ImageError};
use crate::operators::{CirculantOperator, NoiseModel, OperatorError};
use crate::plot::{
    freedman_diaconis_edges, histogram_counts, plot_coverage, plot_histogram, PlotError,
    MIN_HISTOGRAM_BINS,
};
use crate::rng::{GaussianRng, RngSeed};
use crate::sure::{sure, SureError, SureSettings};
use crate::synth::{generate_smooth_image, SynthError};

/// Seed-stream tags. Every truth image, noise draw, and probe sequence gets
/// an independent deterministic seed: master.derive(STREAM).derive(index).
pub const STREAM_TRUTH: u64 = 1;
pub const STREAM_NOISE: u64 = 2;
pub const STREAM_PROBE: u64 = 3;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Plot(#[from] PlotError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("computing the risk estimate for sample {index}: {source}")]
    SureAtSample {
        index: usize,
        #[source]
        source: SureError,
    },
    #[error("image directory {dir} holds {found} usable images, need {needed}")]
    NotEnoughImages {
        dir: String,
        found: usize,
        needed: usize,
    },
    #[error("loading {path}: {source}")]
    LoadImage {
        path: String,
        #[source]
        source: Box<HarnessError>,
    },
    #[error("expected {expected} samples, got {got}")]
    WrongSampleCount { expected: usize, got: usize },
    #[error("coverage evaluation needs at least one test sample")]
    EmptyTestSet,
    #[error("malformed coverage table {path}, line {line}: {detail}")]
    BadCoverageTable {
        path: String,
        line: usize,
        detail: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Truth/measurement pairs, calibration block first, test block after.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub truths: Vec<Image>,
    pub measurements: Vec<Image>,
    /// How many leading pairs belong to the calibration split.
    pub calibration_count: usize,
}

impl PreparedData {
    pub fn calibration(&self) -> (&[Image], &[Image]) {
        (
            &self.truths[..self.calibration_count],
            &self.measurements[..self.calibration_count],
        )
    }

    pub fn test(&self) -> (&[Image], &[Image]) {
        (
            &self.truths[self.calibration_count..],
            &self.measurements[self.calibration_count..],
        )
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Calibrate each calibration sample against the other M−1 scores and
    /// measure coverage on the calibration split itself, instead of the
    /// pooled quantile evaluated on fresh test pairs.
    pub leave_one_out: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    pub alpha: f64,
    /// Desired confidence 1 − α.
    pub nominal: f64,
    /// Quantile level actually used after the finite-sample correction.
    pub corrected_level: f64,
    pub coverage_supervised: f64,
    pub coverage_sure: f64,
    pub q_hat_supervised: f64,
    pub q_hat_sure: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageCurve {
    pub rows: Vec<CoverageRow>,
}

#[derive(Debug)]
pub struct ExperimentOutputs {
    pub curve: CoverageCurve,
    pub supervised: Vec<ScoreSample>,
    pub sure: Vec<ScoreSample>,
    pub output_dir: PathBuf,
}

/// Generate (or load) M + N truth images and their noisy measurements.
pub fn prepare_data(config: &ExperimentConfig) -> Result<PreparedData, HarnessError> {
    config.validate()?;
    let (op, noise) = config.operator.build()?;
    let total = config.calibration_samples + config.test_samples;
    let seed = RngSeed(config.seed);
    let truths: Vec<Image> = match &config.image_source {
        ImageSource::Synthetic(s) => (0..total)
            .into_par_iter()
            .map(|i| {
                let sample = seed.derive(STREAM_TRUTH).derive(i as u64);
                // Substreams: the length draw must not share a stream with
                // the field draw, or the first field variate would be a
                // deterministic function of the chosen length.
                let length = draw_correlation_length(s, sample.derive(1));
                generate_smooth_image(config.width(), config.height(), length, sample.derive(2))
                    .map_err(HarnessError::from)
            })
            .collect::<Result<_, _>>()?,
        ImageSource::PgmDirectory(s) => {
            load_pgm_directory(&s.path, total, config.width(), config.height())?
        }
    };
    let measurements: Vec<Image> = truths
        .par_iter()
        .enumerate()
        .map(|(i, truth)| {
            let clean = op.apply(truth)?;
            Ok(noise.add_noise(&clean, seed.derive(STREAM_NOISE).derive(i as u64)))
        })
        .collect::<Result<_, HarnessError>>()?;
    Ok(PreparedData {
        truths,
        measurements,
        calibration_count: config.calibration_samples,
    })
}

/// Log-uniform draw from the configured correlation-length range, so each
/// octave of spatial scale is equally represented in the truth ensemble.
fn draw_correlation_length(source: &SyntheticSource, seed: RngSeed) -> f64 {
    let (lo, hi) = (source.correlation_length_min, source.correlation_length_max);
    if lo == hi {
        return lo;
    }
    lo * (hi / lo).powf(GaussianRng::new(seed).uniform())
}

/// Load `total` PGM images from a directory in filename order and
/// center-crop each to `width` × `height`.
fn load_pgm_directory(
    dir: &Path,
    total: usize,
    width: usize,
    height: usize,
) -> Result<Vec<Image>, HarnessError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .collect::<Result<Vec<_>, _>>()
        .map_err(io_err(dir))?
        .into_iter()
        .map(|entry| entry.path())
        .filter(|p| {
            p.extension()
                .map(|e| e.eq_ignore_ascii_case("pgm"))
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    if paths.len() < total {
        return Err(HarnessError::NotEnoughImages {
            dir: dir.display().to_string(),
            found: paths.len(),
            needed: total,
        });
    }
    paths.truncate(total);
    paths
        .par_iter()
        .map(|path| {
            let load = || -> Result<Image, HarnessError> {
                let raw = read_image(path)?;
                Ok(raw.center_crop(width, height)?)
            };
            load().map_err(|source| HarnessError::LoadImage {
                path: path.display().to_string(),
                source: Box::new(source),
            })
        })
        .collect()
}

/// Self-supervised calibration scores. Deliberately takes measurements only:
/// each score is the unbiased risk estimate of the reconstruction error,
/// computed from y, the operator, and the noise level.
pub fn sure_scores(
    est: &Estimator,
    op: &CirculantOperator,
    noise: &NoiseModel,
    settings: &SureSettings,
    measurements: &[Image],
    master_seed: RngSeed,
) -> Result<Vec<ScoreSample>, HarnessError> {
    let probe_seed = master_seed.derive(STREAM_PROBE);
    measurements
        .par_iter()
        .enumerate()
        .map(|(i, y)| {
            let value = sure(est, op, noise, y, settings, probe_seed.derive(i as u64))
                .map_err(|source| HarnessError::SureAtSample { index: i, source })?
                .value;
            Ok(ScoreSample::sure(i, value)?)
        })
        .collect()
}

/// Supervised calibration scores: the exact measurement-space error of each
/// reconstruction against its ground truth.
pub fn supervised_scores(
    op: &CirculantOperator,
    est: &Estimator,
    truths: &[Image],
    measurements: &[Image],
) -> Result<Vec<ScoreSample>, HarnessError> {
    if truths.len() != measurements.len() {
        return Err(HarnessError::WrongSampleCount {
            expected: truths.len(),
            got: measurements.len(),
        });
    }
    truths
        .par_iter()
        .zip(measurements)
        .enumerate()
        .map(|(i, (x, y))| {
            let x_hat = est.reconstruct(y)?;
            Ok(ScoreSample::supervised(i, score(op, x, &x_hat)?)?)
        })
        .collect()
}

/// Raw error scores of the test pairs; membership in a calibrated set is
/// `score <= q_hat`, so coverage only needs these numbers.
pub fn test_scores(
    op: &CirculantOperator,
    est: &Estimator,
    truths: &[Image],
    measurements: &[Image],
) -> Result<Vec<f64>, HarnessError> {
    if truths.len() != measurements.len() {
        return Err(HarnessError::WrongSampleCount {
            expected: truths.len(),
            got: measurements.len(),
        });
    }
    truths
        .par_iter()
        .zip(measurements)
        .map(|(x, y)| {
            let x_hat = est.reconstruct(y)?;
            Ok(score(op, x, &x_hat)?)
        })
        .collect()
}

/// Split-conformal evaluation: one quantile per route from the calibration
/// scores, coverage measured on held-out test scores.
pub fn evaluate_pooled(
    alpha_grid: &[f64],
    supervised: &[ScoreSample],
    sure_samples: &[ScoreSample],
    test: &[f64],
) -> Result<CoverageCurve, HarnessError> {
    if test.is_empty() {
        return Err(HarnessError::EmptyTestSet);
    }
    let n = test.len() as f64;
    let coverage = |q: f64| test.iter().filter(|&&s| s <= q).count() as f64 / n;
    let mut rows = Vec::with_capacity(alpha_grid.len());
    for &alpha in alpha_grid {
        let cal_sup = calibrate(supervised, alpha)?;
        let cal_sure = calibrate(sure_samples, alpha)?;
        rows.push(CoverageRow {
            alpha,
            nominal: 1.0 - alpha,
            corrected_level: cal_sup.corrected_level,
            coverage_supervised: coverage(cal_sup.q_hat),
            coverage_sure: coverage(cal_sure.q_hat),
            q_hat_supervised: cal_sup.q_hat,
            q_hat_sure: cal_sure.q_hat,
        });
    }
    Ok(CoverageCurve { rows })
}

/// Leave-one-out evaluation on the calibration split itself: sample i's set
/// is thresholded by the quantile of the other M−1 scores, and coverage asks
/// whether sample i's true error clears its own threshold. The reported
/// q_hat is the lower median of the M per-sample thresholds (an averaged
/// median would go NaN whenever half the thresholds are +∞).
pub fn evaluate_loo(
    alpha_grid: &[f64],
    supervised: &[ScoreSample],
    sure_samples: &[ScoreSample],
) -> Result<CoverageCurve, HarnessError> {
    let m = supervised.len();
    if sure_samples.len() != m {
        return Err(HarnessError::WrongSampleCount {
            expected: m,
            got: sure_samples.len(),
        });
    }
    let per_route = |scores: &[ScoreSample], alpha: f64| -> Result<(f64, f64, f64), HarnessError> {
        let mut covered = 0usize;
        let mut thresholds = Vec::with_capacity(m);
        let mut corrected_level = f64::NAN;
        for (i, held_out) in supervised.iter().enumerate() {
            let cal = calibrate_loo(scores, alpha, i)?;
            if held_out.value <= cal.q_hat {
                covered += 1;
            }
            thresholds.push(cal.q_hat);
            corrected_level = cal.corrected_level;
        }
        thresholds.sort_unstable_by(f64::total_cmp);
        let median = thresholds[(m - 1) / 2];
        Ok((covered as f64 / m as f64, median, corrected_level))
    };
    let mut rows = Vec::with_capacity(alpha_grid.len());
    for &alpha in alpha_grid {
        let (coverage_supervised, q_hat_supervised, corrected_level) =
            per_route(supervised, alpha)?;
        let (coverage_sure, q_hat_sure, _) = per_route(sure_samples, alpha)?;
        rows.push(CoverageRow {
            alpha,
            nominal: 1.0 - alpha,
            corrected_level,
            coverage_supervised,
            coverage_sure,
            q_hat_supervised,
            q_hat_sure,
        });
    }
    Ok(CoverageCurve { rows })
}

/// Run the full experiment from a validated config: data, scores, coverage
/// curve, artifacts on disk.
pub fn run_experiment(
    config: &ExperimentConfig,
    options: &RunOptions,
) -> Result<ExperimentOutputs, HarnessError> {
    let data = prepare_data(config)?;
    run_experiment_with_data(config, &data, options)
}

/// Same as [`run_experiment`] but on caller-supplied data. The data must
/// hold exactly M + N pairs; the calibration split comes first.
pub fn run_experiment_with_data(
    config: &ExperimentConfig,
    data: &PreparedData,
    options: &RunOptions,
) -> Result<ExperimentOutputs, HarnessError> {
    config.validate()?;
    let total = config.calibration_samples + config.test_samples;
    if data.truths.len() != total || data.measurements.len() != total {
        return Err(HarnessError::WrongSampleCount {
            expected: total,
            got: data.truths.len().min(data.measurements.len()),
        });
    }
    if data.calibration_count != config.calibration_samples {
        return Err(HarnessError::WrongSampleCount {
            expected: config.calibration_samples,
            got: data.calibration_count,
        });
    }
    let (op, noise) = config.operator.build()?;
    let est = config.estimator.build(&op, &noise)?;
    let settings = config.sure.to_settings();
    let seed = RngSeed(config.seed);

    let (cal_truths, cal_measurements) = data.calibration();
    let supervised = supervised_scores(&op, &est, cal_truths, cal_measurements)?;
    let sure_samples = sure_scores(&est, &op, &noise, &settings, cal_measurements, seed)?;

    let curve = if options.leave_one_out {
        evaluate_loo(&config.alpha_grid, &supervised, &sure_samples)?
    } else {
        let (test_truths, test_measurements) = data.test();
        let test = test_scores(&op, &est, test_truths, test_measurements)?;
        evaluate_pooled(&config.alpha_grid, &supervised, &sure_samples, &test)?
    };

    write_artifacts(config, &curve, &supervised, &sure_samples)?;
    Ok(ExperimentOutputs {
        curve,
        supervised,
        sure: sure_samples,
        output_dir: config.output_dir.clone(),
    })
}

/// Write every artifact of a run into the config's output directory:
/// coverage.csv, scores.csv, histogram.csv, config_echo.json, coverage.svg,
/// histogram.svg.
fn write_artifacts(
    config: &ExperimentConfig,
    curve: &CoverageCurve,
    supervised: &[ScoreSample],
    sure_samples: &[ScoreSample],
) -> Result<(), HarnessError> {
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let coverage_rows: Vec<Vec<f64>> = curve
        .rows
        .iter()
        .map(|r| {
            vec![
                r.alpha,
                r.nominal,
                r.corrected_level,
                r.coverage_supervised,
                r.coverage_sure,
                r.q_hat_supervised,
                r.q_hat_sure,
            ]
        })
        .collect();
    write_table(dir.join("coverage.csv"), &COVERAGE_COLUMNS, &coverage_rows)?;

    let score_rows: Vec<Vec<f64>> = supervised
        .iter()
        .zip(sure_samples)
        .map(|(sup, su)| vec![sup.sample_id as f64, sup.value, su.value])
        .collect();
    write_table(
        dir.join("scores.csv"),
        &["sample_id", "score_supervised", "score_sure"],
        &score_rows,
    )?;

    let sup_values: Vec<f64> = supervised.iter().map(|s| s.value).collect();
    let sure_values: Vec<f64> = sure_samples.iter().map(|s| s.value).collect();
    let pooled: Vec<f64> = sup_values.iter().chain(&sure_values).copied().collect();
    let edges = freedman_diaconis_edges(&pooled, MIN_HISTOGRAM_BINS)?;
    let sup_counts = histogram_counts(&sup_values, &edges);
    let sure_counts = histogram_counts(&sure_values, &edges);
    let hist_rows: Vec<Vec<f64>> = (0..sup_counts.len())
        .map(|i| {
            vec![
                edges[i],
                edges[i + 1],
                sup_counts[i] as f64,
                sure_counts[i] as f64,
            ]
        })
        .collect();
    write_table(
        dir.join("histogram.csv"),
        &["bin_left", "bin_right", "count_supervised", "count_sure"],
        &hist_rows,
    )?;

    let echo_path = dir.join("config_echo.json");
    let mut echo = config.to_json_string()?;
    echo.push('\n');
    fs::write(&echo_path, echo).map_err(io_err(&echo_path))?;

    plot_coverage(curve, dir.join("coverage.svg"))?;
    plot_histogram(&sup_values, &sure_values, dir.join("histogram.svg"))?;
    Ok(())
}

/// Column order of coverage.csv, shared by the writer above and the reader
/// below.
const COVERAGE_COLUMNS: [&str; 7] = [
    "alpha",
    "nominal_level",
    "corrected_level",
    "coverage_supervised",
    "coverage_sure",
    "q_hat_supervised",
    "q_hat_sure",
];

/// Parse a coverage.csv back into a curve, e.g. to re-render the chart.
/// Accepts "inf" in the threshold columns ([`crate::formats::csv_float`]
/// writes degenerate thresholds that way).
pub fn read_coverage_csv(path: impl AsRef<Path>) -> Result<CoverageCurve, HarnessError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let bad = |line: usize, detail: String| HarnessError::BadCoverageTable {
        path: path.display().to_string(),
        line,
        detail,
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| bad(1, "empty file".to_string()))?;
    let expected = COVERAGE_COLUMNS.join(",");
    if header != expected {
        return Err(bad(1, format!("header {header:?}, expected {expected:?}")));
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != COVERAGE_COLUMNS.len() {
            return Err(bad(
                idx + 1,
                format!(
                    "{} fields, expected {}",
                    fields.len(),
                    COVERAGE_COLUMNS.len()
                ),
            ));
        }
        let mut values = [0.0f64; 7];
        for (slot, field) in values.iter_mut().zip(&fields) {
            *slot = field
                .parse::<f64>()
                .map_err(|e| bad(idx + 1, format!("{field:?}: {e}")))?;
        }
        rows.push(CoverageRow {
            alpha: values[0],
            nominal: values[1],
            corrected_level: values[2],
            coverage_supervised: values[3],
            coverage_sure: values[4],
            q_hat_supervised: values[5],
            q_hat_sure: values[6],
        });
    }
    if rows.is_empty() {
        return Err(bad(1, "no data rows".to_string()));
    }
    Ok(CoverageCurve { rows })
}

/// Write prepared pairs as flat float images (truth_NNNN.imgf64 /
/// measurement_NNNN.imgf64) for offline inspection or reuse.
pub fn write_dataset(data: &PreparedData, dir: impl AsRef<Path>) -> Result<(), HarnessError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (i, (truth, measurement)) in data.truths.iter().zip(&data.measurements).enumerate() {
        write_image(dir.join(format!("truth_{i:04}.imgf64")), truth)?;
        write_image(dir.join(format!("measurement_{i:04}.imgf64")), measurement)?;
    }
    Ok(())
}
