//! Experiment configuration: JSON schema, validation, and builders.
//!
//! A config file mirrors [`ExperimentConfig`] field for field; unknown keys
//! are rejected so typos fail loudly instead of silently running defaults.
//! Image dimensions and the noise sigma live inside the operator block (the
//! operator defines the measurement space) rather than being duplicated at
//! the top level.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{
    polynomial_deblur_estimator, soft_threshold_denoiser, wiener_estimator, Estimator,
    EstimatorError,
};
use crate::operators::{
    gaussian_blur_operator, identity_operator, CirculantOperator, NoiseModel, OperatorError,
};
use crate::sure::{
    DivergenceBackend, ProbeDistribution, SureSettings, DEFAULT_FD_STEP, DEFAULT_PROBES,
};

/// Default rank floor for blur operators; keeps the symbol bounded away
/// from zero so the score's quadratic form stays positive definite.
pub const DEFAULT_RANK_FLOOR: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("failed to serialize config: {0}")]
    Serialize(#[source] serde_json::Error),
    #[error("calibration_samples must be at least 2, got {0}")]
    TooFewCalibrationSamples(usize),
    #[error("test_samples must be at least 1")]
    NoTestSamples,
    #[error("alpha_grid {reason}")]
    BadAlphaGrid { reason: String },
    #[error("problem {problem:?} does not match operator type {operator}")]
    ProblemOperatorMismatch { problem: Problem, operator: String },
    #[error("soft_threshold estimator requires the identity operator")]
    SoftThresholdNeedsIdentity,
    #[error("sure.probes must be at least 1")]
    BadProbeCount,
    #[error("sure.fd_step {0} must be positive and finite")]
    BadFdStep(f64),
    #[error("synthetic correlation length {0} must be positive and finite")]
    BadCorrelationLength(f64),
    #[error("synthetic correlation-length range is inverted: min {min} > max {max}")]
    InvertedCorrelationRange { min: f64, max: f64 },
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

/// Which inverse problem the experiment runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    Denoise,
    Deblur,
}

/// Where truth images come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ImageSource {
    /// Gaussian random fields generated on the fly, each image with its own
    /// correlation length drawn from a configured range.
    Synthetic(SyntheticSource),
    /// Binary PGM files read from a directory (sorted by filename,
    /// center-cropped to the operator's grid).
    PgmDirectory(PgmDirectorySource),
}

/// Synthetic truth ensemble. Per-image correlation lengths are drawn
/// log-uniformly from `[correlation_length_min, correlation_length_max]` so
/// the ensemble mixes fine-textured and smooth content the way a set of
/// natural-image crops would. A degenerate range (min == max) pins every
/// image to one length; such homogeneous ensembles make all scores nearly
/// equal, which starves the calibration of spread and is rarely what an
/// experiment wants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSource {
    pub correlation_length_min: f64,
    pub correlation_length_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PgmDirectorySource {
    pub path: PathBuf,
}

/// Forward-operator block: grid size, operator parameters, noise sigma.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OperatorSpec {
    Identity(IdentityOperatorSpec),
    GaussianBlur(GaussianBlurOperatorSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentityOperatorSpec {
    pub width: usize,
    pub height: usize,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianBlurOperatorSpec {
    pub width: usize,
    pub height: usize,
    pub bandwidth_major: f64,
    pub bandwidth_minor: f64,
    pub angle: f64,
    #[serde(default = "default_rank_floor")]
    pub rank_floor: f64,
    pub sigma: f64,
}

fn default_rank_floor() -> f64 {
    DEFAULT_RANK_FLOOR
}

impl OperatorSpec {
    pub fn width(&self) -> usize {
        match self {
            OperatorSpec::Identity(s) => s.width,
            OperatorSpec::GaussianBlur(s) => s.width,
        }
    }

    pub fn height(&self) -> usize {
        match self {
            OperatorSpec::Identity(s) => s.height,
            OperatorSpec::GaussianBlur(s) => s.height,
        }
    }

    pub fn sigma(&self) -> f64 {
        match self {
            OperatorSpec::Identity(s) => s.sigma,
            OperatorSpec::GaussianBlur(s) => s.sigma,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            OperatorSpec::Identity(_) => "identity",
            OperatorSpec::GaussianBlur(_) => "gaussian_blur",
        }
    }

    /// Construct the operator and noise model this block describes.
    pub fn build(&self) -> Result<(CirculantOperator, NoiseModel), ConfigError> {
        let op = match self {
            OperatorSpec::Identity(s) => identity_operator(s.width, s.height)?,
            OperatorSpec::GaussianBlur(s) => gaussian_blur_operator(
                s.width,
                s.height,
                s.bandwidth_major,
                s.bandwidth_minor,
                s.angle,
                s.rank_floor,
            )?,
        };
        let noise = NoiseModel::new(self.sigma())?;
        Ok((op, noise))
    }
}

/// Estimator block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum EstimatorSpec {
    Wiener(WienerSpec),
    PolynomialDeblur(PolynomialDeblurSpec),
    SoftThreshold(SoftThresholdSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WienerSpec {
    pub prior_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolynomialDeblurSpec {
    pub degree: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoftThresholdSpec {
    pub threshold: f64,
}

impl EstimatorSpec {
    pub fn build(
        &self,
        op: &CirculantOperator,
        noise: &NoiseModel,
    ) -> Result<Estimator, ConfigError> {
        Ok(match self {
            EstimatorSpec::Wiener(s) => wiener_estimator(op, noise.sigma(), s.prior_power)?,
            EstimatorSpec::PolynomialDeblur(s) => polynomial_deblur_estimator(op, s.degree)?,
            EstimatorSpec::SoftThreshold(s) => soft_threshold_denoiser(s.threshold)?,
        })
    }
}

/// Divergence backend block for the risk estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SureSpec {
    pub backend: BackendSpec,
    #[serde(default = "default_probes")]
    pub probes: usize,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
    #[serde(default)]
    pub probe_distribution: ProbeSpec,
}

fn default_probes() -> usize {
    DEFAULT_PROBES
}

fn default_fd_step() -> f64 {
    DEFAULT_FD_STEP
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendSpec {
    Exact,
    Hutchinson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProbeSpec {
    #[default]
    Normal,
    Rademacher,
}

impl Default for SureSpec {
    fn default() -> Self {
        SureSpec {
            backend: BackendSpec::Hutchinson,
            probes: DEFAULT_PROBES,
            fd_step: DEFAULT_FD_STEP,
            probe_distribution: ProbeSpec::default(),
        }
    }
}

impl SureSpec {
    pub fn to_settings(&self) -> SureSettings {
        SureSettings {
            backend: match self.backend {
                BackendSpec::Exact => DivergenceBackend::Exact,
                BackendSpec::Hutchinson => DivergenceBackend::Hutchinson,
            },
            probes: self.probes,
            fd_step: self.fd_step,
            probe_distribution: match self.probe_distribution {
                ProbeSpec::Normal => ProbeDistribution::Normal,
                ProbeSpec::Rademacher => ProbeDistribution::Rademacher,
            },
        }
    }
}

/// Full experiment description; JSON mirrors this struct field for field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub image_source: ImageSource,
    pub operator: OperatorSpec,
    pub estimator: EstimatorSpec,
    /// Calibration sample size M.
    pub calibration_samples: usize,
    /// Test sample size N.
    pub test_samples: usize,
    /// Strictly increasing confidence parameters, each in (0, 1).
    pub alpha_grid: Vec<f64>,
    pub sure: SureSpec,
    /// Master seed; every random stream in the run derives from it.
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|source| ConfigError::Parse {
                path: origin.to_string(),
                source,
            })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text, &path.display().to_string())
    }

    pub fn to_json_string(&self) -> Result<String, ConfigError> {
        serde_json::to_string_pretty(self).map_err(ConfigError::Serialize)
    }

    pub fn width(&self) -> usize {
        self.operator.width()
    }

    pub fn height(&self) -> usize {
        self.operator.height()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.calibration_samples < 2 {
            return Err(ConfigError::TooFewCalibrationSamples(
                self.calibration_samples,
            ));
        }
        if self.test_samples == 0 {
            return Err(ConfigError::NoTestSamples);
        }
        if self.alpha_grid.is_empty() {
            return Err(ConfigError::BadAlphaGrid {
                reason: "is empty".to_string(),
            });
        }
        for &alpha in &self.alpha_grid {
            if !alpha.is_finite() || alpha <= 0.0 || alpha >= 1.0 {
                return Err(ConfigError::BadAlphaGrid {
                    reason: format!("contains {alpha}, outside (0, 1)"),
                });
            }
        }
        // Every entry is finite here, so >= is a complete ordering test.
        for window in self.alpha_grid.windows(2) {
            if window[0] >= window[1] {
                return Err(ConfigError::BadAlphaGrid {
                    reason: format!(
                        "is not strictly increasing at {} -> {}",
                        window[0], window[1]
                    ),
                });
            }
        }
        let operator_matches = matches!(
            (self.problem, &self.operator),
            (Problem::Denoise, OperatorSpec::Identity(_))
                | (Problem::Deblur, OperatorSpec::GaussianBlur(_))
        );
        if !operator_matches {
            return Err(ConfigError::ProblemOperatorMismatch {
                problem: self.problem,
                operator: self.operator.type_name().to_string(),
            });
        }
        if matches!(self.estimator, EstimatorSpec::SoftThreshold(_))
            && !matches!(self.operator, OperatorSpec::Identity(_))
        {
            return Err(ConfigError::SoftThresholdNeedsIdentity);
        }
        if self.sure.probes == 0 {
            return Err(ConfigError::BadProbeCount);
        }
        if !(self.sure.fd_step > 0.0 && self.sure.fd_step.is_finite()) {
            return Err(ConfigError::BadFdStep(self.sure.fd_step));
        }
        if let ImageSource::Synthetic(s) = &self.image_source {
            for len in [s.correlation_length_min, s.correlation_length_max] {
                if !(len > 0.0 && len.is_finite()) {
                    return Err(ConfigError::BadCorrelationLength(len));
                }
            }
            if s.correlation_length_min > s.correlation_length_max {
                return Err(ConfigError::InvertedCorrelationRange {
                    min: s.correlation_length_min,
                    max: s.correlation_length_max,
                });
            }
        }
        Ok(())
    }
}

/// The stock denoising experiment: 64x64 synthetic images with correlation
/// lengths mixed over 0.5..12 pixels, identity operator with sigma 0.1,
/// soft-threshold denoiser, 500 calibration and 200 test samples over a
/// 19-point alpha grid. Matches configs/denoise.json.
pub fn canonical_denoise_config() -> ExperimentConfig {
    ExperimentConfig {
        problem: Problem::Denoise,
        image_source: ImageSource::Synthetic(SyntheticSource {
            correlation_length_min: 0.5,
            correlation_length_max: 12.0,
        }),
        operator: OperatorSpec::Identity(IdentityOperatorSpec {
            width: 64,
            height: 64,
            sigma: 0.1,
        }),
        estimator: EstimatorSpec::SoftThreshold(SoftThresholdSpec { threshold: 0.1 }),
        calibration_samples: 500,
        test_samples: 200,
        alpha_grid: default_alpha_grid(),
        sure: SureSpec {
            backend: BackendSpec::Hutchinson,
            probes: 8,
            fd_step: DEFAULT_FD_STEP,
            probe_distribution: ProbeSpec::Normal,
        },
        seed: 20250815,
        output_dir: PathBuf::from("out/denoise"),
    }
}

/// The stock deblurring experiment: anisotropic Gaussian blur (2.0 and 0.3
/// pixel bandwidths at a pi/6 inclination), sigma 0.01, degree-3 Neumann
/// deblur polynomial with its closed-form divergence, truths mixed over
/// 0.5..12 pixel correlation lengths (pixel-scale texture through smooth
/// gradients). The mixed ensemble matters doubly here:
/// per-image risk-estimate noise is a fixed absolute size, so if all truths
/// look alike the score spread collapses and that noise dominates the
/// calibration quantiles. Matches configs/deblur.json.
pub fn canonical_deblur_config() -> ExperimentConfig {
    ExperimentConfig {
        problem: Problem::Deblur,
        image_source: ImageSource::Synthetic(SyntheticSource {
            correlation_length_min: 0.5,
            correlation_length_max: 12.0,
        }),
        operator: OperatorSpec::GaussianBlur(GaussianBlurOperatorSpec {
            width: 64,
            height: 64,
            bandwidth_major: 2.0,
            bandwidth_minor: 0.3,
            angle: std::f64::consts::FRAC_PI_6,
            rank_floor: DEFAULT_RANK_FLOOR,
            sigma: 0.01,
        }),
        estimator: EstimatorSpec::PolynomialDeblur(PolynomialDeblurSpec { degree: 3 }),
        calibration_samples: 500,
        test_samples: 200,
        alpha_grid: default_alpha_grid(),
        sure: SureSpec {
            backend: BackendSpec::Exact,
            probes: DEFAULT_PROBES,
            fd_step: DEFAULT_FD_STEP,
            probe_distribution: ProbeSpec::Normal,
        },
        seed: 20250815,
        output_dir: PathBuf::from("out/deblur"),
    }
}

/// 0.05, 0.10, ..., 0.95: dense enough to draw a coverage curve, small
/// enough to read as a table. Computed as exact integer ratios so each entry
/// is bit-identical to the parsed JSON literal ("0.15", not 3*0.05).
pub fn default_alpha_grid() -> Vec<f64> {
    (1..=19).map(|i| (i * 5) as f64 / 100.0).collect()
}
