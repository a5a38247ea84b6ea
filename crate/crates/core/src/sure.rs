//! Unbiased risk estimation from the measurement alone.
//!
//! For y = Ax + noise with noise ~ N(0, σ²I) and an estimator x̂, the
//! quantity
//!
//!   (1/m)‖y − A x̂(y)‖² − σ² + (2σ²/m)·div(A x̂(y))
//!
//! has the same expectation as the prediction error (1/m)‖Ax − A x̂(y)‖², so
//! it can stand in for a supervised score when no ground truth exists. The
//! divergence term is the trace of the Jacobian of y ↦ A x̂(y): linear
//! estimators supply it in closed form; anything else is handled by the
//! Hutchinson estimator with finite-difference Jacobian-vector products
//! (exact for linear maps, since the directional difference of a linear
//! function is its directional derivative at any step size).

use thiserror::Error;

use crate::estimators::{Estimator, EstimatorError};
use crate::image::Image;
use crate::operators::{CirculantOperator, NoiseModel, OperatorError};
use crate::rng::{GaussianRng, RngSeed};

/// Default probe count for the Hutchinson backend. One probe is cheap and,
/// at realistic pixel counts, already close; raise it per run when the
/// sample budget is tight.
pub const DEFAULT_PROBES: usize = 1;

/// Default relative finite-difference step; the absolute step is
/// `fd_step * (1 + ‖y‖_∞)`. Balances truncation against rounding for
/// unit-range intensities.
pub const DEFAULT_FD_STEP: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum SureError {
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("probe count must be at least 1")]
    BadProbeCount,
    #[error("finite-difference step {0} must be positive and finite")]
    BadFdStep(f64),
    #[error("divergence estimate is not finite ({value}); the estimator may be unstable at this fd_step")]
    NonFinite { value: f64 },
}

/// Which divergence computation to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivergenceBackend {
    /// Closed form; only for estimators that provide one.
    Exact,
    /// Stochastic trace estimation with finite-difference JVPs.
    Hutchinson,
}

/// Distribution of the Hutchinson probe vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProbeDistribution {
    /// i.i.d. standard normal entries (the default).
    #[default]
    Normal,
    /// i.i.d. ±1 entries; lower variance for trace estimation.
    Rademacher,
}

/// A computed divergence with its provenance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceEstimate {
    pub value: f64,
    pub backend: DivergenceBackend,
    /// Number of probes consumed; 0 for the exact backend.
    pub probes_used: usize,
    /// Relative step used for finite differences; None for the exact backend.
    pub fd_step: Option<f64>,
}

/// The risk estimate and its three addends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SureValue {
    /// residual_term - sigma_term + divergence_term, exactly as computed.
    pub value: f64,
    /// (1/m)‖y − A x̂(y)‖².
    pub residual_term: f64,
    /// σ².
    pub sigma_term: f64,
    /// (2σ²/m)·div.
    pub divergence_term: f64,
    pub divergence: DivergenceEstimate,
}

/// Settings for [`sure`]: divergence backend and its knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SureSettings {
    pub backend: DivergenceBackend,
    /// Hutchinson probe count K.
    pub probes: usize,
    /// Relative finite-difference step.
    pub fd_step: f64,
    pub probe_distribution: ProbeDistribution,
}

impl Default for SureSettings {
    fn default() -> Self {
        SureSettings {
            backend: DivergenceBackend::Hutchinson,
            probes: DEFAULT_PROBES,
            fd_step: DEFAULT_FD_STEP,
            probe_distribution: ProbeDistribution::default(),
        }
    }
}

/// Closed-form divergence of y ↦ A x̂(y). Errors if the estimator has none.
pub fn divergence_exact(
    est: &Estimator,
    op: &CirculantOperator,
    y: &Image,
) -> Result<DivergenceEstimate, SureError> {
    let value = est.exact_divergence(op, y)?;
    Ok(DivergenceEstimate {
        value,
        backend: DivergenceBackend::Exact,
        probes_used: 0,
        fd_step: None,
    })
}

/// Hutchinson divergence estimate:
/// (1/K) Σ_i ñ_iᵀ [h(y + ε ñ_i) − h(y)] / ε with h(y) = A x̂(y) and
/// ε = fd_step·(1 + ‖y‖_∞). Deterministic in `seed`.
pub fn divergence_hutchinson(
    est: &Estimator,
    op: &CirculantOperator,
    y: &Image,
    probes: usize,
    fd_step: f64,
    probe_distribution: ProbeDistribution,
    seed: RngSeed,
) -> Result<DivergenceEstimate, SureError> {
    if probes == 0 {
        return Err(SureError::BadProbeCount);
    }
    if !(fd_step > 0.0 && fd_step.is_finite()) {
        return Err(SureError::BadFdStep(fd_step));
    }
    let epsilon = fd_step * (1.0 + y.max_abs());
    let h_base = op.apply(&est.reconstruct(y)?)?;

    let mut rng = GaussianRng::new(seed);
    let mut probe = vec![0.0; y.len()];
    let mut perturbed = y.clone();
    let mut acc = 0.0;
    for _ in 0..probes {
        match probe_distribution {
            ProbeDistribution::Normal => rng.fill_standard_normal(&mut probe),
            ProbeDistribution::Rademacher => rng.fill_rademacher(&mut probe),
        }
        for ((p, &base), &n) in perturbed
            .pixels_mut()
            .iter_mut()
            .zip(y.pixels())
            .zip(&probe)
        {
            *p = base + epsilon * n;
        }
        let h_pert = op.apply(&est.reconstruct(&perturbed)?)?;
        let directional: f64 = probe
            .iter()
            .zip(h_pert.pixels())
            .zip(h_base.pixels())
            .map(|((n, &hp), &hb)| n * (hp - hb))
            .sum();
        acc += directional / epsilon;
    }
    let value = acc / probes as f64;
    if !value.is_finite() {
        return Err(SureError::NonFinite { value });
    }
    Ok(DivergenceEstimate {
        value,
        backend: DivergenceBackend::Hutchinson,
        probes_used: probes,
        fd_step: Some(fd_step),
    })
}

/// Assemble the risk estimate for one measurement.
pub fn sure(
    est: &Estimator,
    op: &CirculantOperator,
    noise: &NoiseModel,
    y: &Image,
    settings: &SureSettings,
    seed: RngSeed,
) -> Result<SureValue, SureError> {
    let divergence = match settings.backend {
        DivergenceBackend::Exact => divergence_exact(est, op, y)?,
        DivergenceBackend::Hutchinson => divergence_hutchinson(
            est,
            op,
            y,
            settings.probes,
            settings.fd_step,
            settings.probe_distribution,
            seed,
        )?,
    };
    let m = y.len() as f64;
    let ax_hat = op.apply(&est.reconstruct(y)?)?;
    let residual_term = y.mean_sq_diff(&ax_hat).expect("shapes match");
    let sigma_term = noise.variance();
    let divergence_term = 2.0 * noise.variance() / m * divergence.value;
    Ok(SureValue {
        value: residual_term - sigma_term + divergence_term,
        residual_term,
        sigma_term,
        divergence_term,
        divergence,
    })
}
