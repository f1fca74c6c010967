//! Divergence functionals on Gaussian moments: non-Standardness (the KL
//! divergence of a Gaussian to the standard normal), total correlation of a
//! covariance, and a Monte Carlo estimator for the moment-matching identity
//! `E_p[ln N(x; m, Sigma) - ln N(x; 0, I)] = S(m, Sigma)` on Gaussian
//! mixtures.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Covariance, HaarScalar, Spectrum};
use crate::rng::{domain, stream_rng};

/// Chunk granularity for Monte Carlo loops. Each chunk draws from its own
/// RNG stream, so results do not depend on how chunks are scheduled across
/// workers.
pub const MC_CHUNK: usize = 8192;

/// Minimum sample count accepted by the Monte Carlo estimators.
pub const MC_MIN_SAMPLES: usize = 10_000;

/// Mean vector and covariance of a Gaussian over `R^D`.
#[derive(Debug, Clone)]
pub struct GaussianMoments {
    mean: DVector<f64>,
    cov: Covariance<f64>,
}

impl GaussianMoments {
    pub fn new(mean: DVector<f64>, cov: Covariance<f64>) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::InvalidDimension(format!(
                "mean has length {} but covariance is {}-dimensional",
                mean.len(),
                cov.dim()
            )));
        }
        Ok(GaussianMoments { mean, cov })
    }

    pub fn standard(dim: usize) -> Self {
        GaussianMoments {
            mean: DVector::zeros(dim),
            cov: Covariance::new_unchecked(DMatrix::identity(dim, dim)),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &Covariance<f64> {
        &self.cov
    }
}

/// `S(m, Sigma) = (|m|^2 + tr Sigma - D - ln det Sigma) / 2`, the KL
/// divergence from `N(m, Sigma)` to `N(0, I)`. Zero exactly at the standard
/// normal, positive everywhere else, and invariant under rotations of a
/// zero-mean Gaussian.
pub fn non_standardness(moments: &GaussianMoments) -> Result<f64> {
    let d = moments.dim() as f64;
    Ok(0.5
        * (moments.mean.norm_squared() + moments.cov.trace() - d - moments.cov.log_det()?))
}

/// Zero-mean non-Standardness, generic over the scalar field so it applies
/// to unitary-group covariances too.
pub fn non_standardness_zero_mean<T: HaarScalar>(cov: &Covariance<T>) -> Result<f64> {
    let d = cov.dim() as f64;
    Ok(0.5 * (cov.trace() - d - cov.log_det()?))
}

/// Non-Standardness of a zero-mean Gaussian with the given eigenvalue
/// spectrum: `sum(lambda - 1 - ln lambda) / 2`. For a unit-mean spectrum this
/// collapses to `-ln det / 2`.
pub fn non_standardness_spectrum(spectrum: &Spectrum) -> f64 {
    spectrum
        .values()
        .iter()
        .map(|&v| v - 1.0 - v.ln())
        .sum::<f64>()
        / 2.0
}

/// Same quantity as [`non_standardness`] through the eigenvalue route
/// (`|m|^2 / 2 + sum(lambda - 1 - ln lambda) / 2`); an independent
/// implementation kept for cross-checking.
pub fn non_standardness_eigen(moments: &GaussianMoments) -> Result<f64> {
    let eig = moments.cov.eigenvalues();
    if eig[0] <= 0.0 {
        return Err(Error::InvalidCovariance(format!(
            "non-positive eigenvalue {:.3e}",
            eig[0]
        )));
    }
    Ok(0.5 * moments.mean.norm_squared()
        + 0.5 * eig.iter().map(|&v| v - 1.0 - v.ln()).sum::<f64>())
}

/// Total correlation `C(Sigma) = (ln det Diag(Sigma) - ln det Sigma) / 2`:
/// the KL divergence of the Gaussian to the product of its marginals. Zero
/// exactly when `Sigma` is diagonal.
pub fn correlation<T: HaarScalar>(cov: &Covariance<T>) -> Result<f64> {
    let mut log_det_diag = 0.0;
    for (i, &d) in cov.diagonal_real().iter().enumerate() {
        if !(d > 0.0) {
            return Err(Error::NonPositiveDiagonal { index: i, value: d });
        }
        log_det_diag += d.ln();
    }
    Ok(0.5 * (log_det_diag - cov.log_det()?))
}

/// Finite mixture of Gaussians used as a non-Gaussian test density with
/// exactly known first and second moments.
#[derive(Debug, Clone)]
pub struct MixtureOracle {
    weights: Vec<f64>,
    components: Vec<GaussianMoments>,
}

impl MixtureOracle {
    /// Weights must be non-negative with a positive sum; they are
    /// renormalized to sum to one. All components must share a dimension.
    pub fn new(weights: Vec<f64>, components: Vec<GaussianMoments>) -> Result<Self> {
        if components.is_empty() || weights.len() != components.len() {
            return Err(Error::InvalidOracle(format!(
                "{} weights for {} components",
                weights.len(),
                components.len()
            )));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidOracle("negative or non-finite weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidOracle("weights sum to zero".into()));
        }
        let dim = components[0].dim();
        if components.iter().any(|c| c.dim() != dim) {
            return Err(Error::InvalidOracle(
                "components have mismatched dimensions".into(),
            ));
        }
        let weights = weights.iter().map(|w| w / total).collect();
        Ok(MixtureOracle {
            weights,
            components,
        })
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[GaussianMoments] {
        &self.components
    }

    /// Exact mixture moments: `m = sum w_k m_k` and
    /// `Sigma = sum w_k (Sigma_k + m_k m_k^T) - m m^T`.
    pub fn moments(&self) -> Result<GaussianMoments> {
        let dim = self.dim();
        let mut mean = DVector::zeros(dim);
        for (w, c) in self.weights.iter().zip(&self.components) {
            mean += c.mean() * *w;
        }
        let mut cov = DMatrix::zeros(dim, dim);
        for (w, c) in self.weights.iter().zip(&self.components) {
            cov += (c.cov().matrix() + c.mean() * c.mean().transpose()) * *w;
        }
        cov -= &mean * mean.transpose();
        GaussianMoments::new(mean, Covariance::new(cov)?)
    }
}

/// Mean and standard error of a Monte Carlo estimate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

struct MixtureSampler<'a> {
    oracle: &'a MixtureOracle,
    factors: Vec<DMatrix<f64>>,
}

impl<'a> MixtureSampler<'a> {
    fn new(oracle: &'a MixtureOracle) -> Result<Self> {
        let mut factors = Vec::with_capacity(oracle.components.len());
        for c in &oracle.components {
            let chol = c.cov().matrix().clone().cholesky().ok_or_else(|| {
                Error::InvalidOracle("component covariance is not positive definite".into())
            })?;
            factors.push(chol.l());
        }
        Ok(MixtureSampler { oracle, factors })
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = self.oracle.weights.len() - 1;
        for (i, w) in self.oracle.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        let dim = self.oracle.dim();
        let z = DVector::from_fn(dim, |_, _| rng.sample(StandardNormal));
        self.oracle.components[k].mean() + &self.factors[k] * z
    }
}

/// Monte Carlo estimate of `E_p[ln N(x; m, Sigma) - ln N(x; 0, I)]` where
/// `p` is the mixture and `(m, Sigma)` its exact moments. The entropy of `p`
/// cancels in the difference, so the expectation equals `S(m, Sigma)` even
/// though `p` itself is not Gaussian.
///
/// `tag` separates concurrent estimates under the same seed. The estimate is
/// deterministic in `(seed, tag, n)` regardless of worker count.
pub fn mc_kl_gap(oracle: &MixtureOracle, n: usize, seed: u64, tag: u32) -> Result<McEstimate> {
    if n < MC_MIN_SAMPLES {
        return Err(Error::InvalidCount(format!(
            "{n} Monte Carlo samples requested; minimum is {MC_MIN_SAMPLES}"
        )));
    }
    let moments = oracle.moments()?;
    let log_det = moments.cov().log_det()?;
    let chol = moments
        .cov()
        .matrix()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidOracle("mixture covariance is not positive definite".into()))?;

    let sampler = MixtureSampler::new(oracle)?;
    let n_chunks = n.div_ceil(MC_CHUNK);
    let partials: Vec<(f64, f64)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, domain::MC_KL, tag as u64, c as u64);
            let lo = c * MC_CHUNK;
            let hi = n.min(lo + MC_CHUNK);
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for _ in lo..hi {
                let x = sampler.sample(&mut rng);
                let d = &x - moments.mean();
                let maha = d.dot(&chol.solve(&d));
                let t = 0.5 * (x.norm_squared() - log_det - maha);
                sum += t;
                sumsq += t * t;
            }
            (sum, sumsq)
        })
        .collect();

    let (sum, sumsq) = partials
        .iter()
        .fold((0.0, 0.0), |(s, s2), &(a, a2)| (s + a, s2 + a2));
    let nf = n as f64;
    let mean = sum / nf;
    let var = (sumsq - sum * sum / nf) / (nf - 1.0);
    Ok(McEstimate {
        mean,
        se: (var / nf).sqrt(),
        n,
    })
}
