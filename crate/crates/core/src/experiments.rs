//! Experiment drivers: the single-block protocol (one rotate-and-whiten
//! step averaged over a reusable rotation set, swept over spectra and
//! scales) and the deep protocol (stacked blocks applied until the
//! non-Standardness is exhausted), plus per-layer summaries comparing the
//! empirical contraction against the closed-form bounds.
//!
//! Determinism: every random object is drawn from a counter-addressed
//! stream, so results are independent of thread count and identical across
//! reruns with the same seed.

use nalgebra::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{bound_report, BoundReport, PrecisionPolicy};
use crate::divergence::{non_standardness_spectrum, non_standardness_zero_mean};
use crate::error::{Error, Result};
use crate::linalg::{sample_haar, BlockSplit, Covariance, Group, HaarScalar, Rotation, Spectrum};
use crate::rng::{domain, stream_rng};
use crate::spectra::scale_spectrum;
use crate::whitening::rotate_and_whiten;

/// Which rotation ensembles a run samples from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupChoice {
    Orthogonal,
    Unitary,
    Both,
}

impl GroupChoice {
    pub fn groups(self) -> &'static [Group] {
        match self {
            GroupChoice::Orthogonal => &[Group::Orthogonal],
            GroupChoice::Unitary => &[Group::Unitary],
            GroupChoice::Both => &[Group::Orthogonal, Group::Unitary],
        }
    }
}

/// The bounds a run evaluates. Serialized names match the output columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundKind {
    /// Arbitrary-precision tight bound (`thm1`).
    #[serde(rename = "thm1")]
    Precise,
    /// Variance and largest-eigenvalue bound (`thm2_varmax`).
    #[serde(rename = "thm2_varmax")]
    VarianceMatched,
    /// Loss-only bound through the geometric mean (`thm2_lossonly`).
    #[serde(rename = "thm2_lossonly")]
    LossOnly,
    /// Per-layer contraction rate (`gamma`).
    #[serde(rename = "gamma")]
    ContractionRate,
}

impl BoundKind {
    pub const ALL: [BoundKind; 4] = [
        BoundKind::Precise,
        BoundKind::VarianceMatched,
        BoundKind::LossOnly,
        BoundKind::ContractionRate,
    ];

    pub fn column(self) -> &'static str {
        match self {
            BoundKind::Precise => "thm1",
            BoundKind::VarianceMatched => "thm2_varmax",
            BoundKind::LossOnly => "thm2_lossonly",
            BoundKind::ContractionRate => "gamma",
        }
    }
}

/// Shared knobs for both protocols. Defaults are the desk-scale profile
/// (a couple of minutes on one core); [`ExperimentConfig::full_scale`]
/// matches the full-scale runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub layers: usize,
    pub n_rot: usize,
    pub n_scale: usize,
    pub n_vary: usize,
    pub v_max: f64,
    pub epsilon: f64,
    pub group: GroupChoice,
    pub seed: u64,
    pub stop_threshold: f64,
    /// Deep runs: fresh rotations per trajectory instead of sharing the
    /// per-layer rotation set across instances.
    pub independent_rotations: bool,
    /// Deep runs: keep per-layer eigenvalue spectra (needed by
    /// [`compare_bounds_per_layer`]).
    pub retain_spectra: bool,
    pub bound_set: Vec<BoundKind>,
    #[serde(flatten)]
    pub precision: PrecisionPolicy,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dim: 16,
            layers: 16,
            n_rot: 8,
            n_scale: 150,
            n_vary: 16,
            v_max: 1000.0,
            epsilon: 1e-5,
            group: GroupChoice::Both,
            seed: 0,
            stop_threshold: 1e-9,
            independent_rotations: false,
            retain_spectra: false,
            bound_set: BoundKind::ALL.to_vec(),
            precision: PrecisionPolicy::default(),
        }
    }
}

impl ExperimentConfig {
    /// The full-scale profile: D=48, L=32, 32 rotations, 128 instances per
    /// family.
    pub fn full_scale() -> Self {
        ExperimentConfig {
            dim: 48,
            layers: 32,
            n_rot: 32,
            n_vary: 128,
            ..ExperimentConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 || self.dim % 2 != 0 {
            return Err(Error::InvalidDimension(format!(
                "dimension must be even and >= 2, got {}",
                self.dim
            )));
        }
        if self.n_rot == 0 {
            return Err(Error::InvalidCount("n_rot must be positive".into()));
        }
        if !(self.stop_threshold > 0.0) || !self.stop_threshold.is_finite() {
            return Err(Error::InvalidInput(format!(
                "stop_threshold must be positive and finite, got {}",
                self.stop_threshold
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 0.01) {
            return Err(Error::InvalidInput(format!(
                "epsilon must lie in (0, 0.01], got {}",
                self.epsilon
            )));
        }
        if !(self.v_max > 1.0) || !self.v_max.is_finite() {
            return Err(Error::InvalidInput(format!(
                "v_max must be finite and > 1, got {}",
                self.v_max
            )));
        }
        if self.n_vary == 0 {
            return Err(Error::InvalidCount("n_vary must be positive".into()));
        }
        self.precision.validate()
    }

    pub fn wants(&self, kind: BoundKind) -> bool {
        self.bound_set.contains(&kind)
    }

    /// The precision policy to hand to [`crate::bounds::bound_report`]:
    /// present exactly when the tight bound is requested.
    pub fn precise_policy(&self) -> Option<&PrecisionPolicy> {
        self.wants(BoundKind::Precise).then_some(&self.precision)
    }
}

/// Mean, median, interquartile range (linear-interpolation quantiles) and
/// standard error of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub iqr: f64,
    pub se: f64,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> Result<SummaryStats> {
    if values.is_empty() {
        return Err(Error::InvalidCount("cannot summarize an empty sample".into()));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let se = if n > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    Ok(SummaryStats {
        n,
        mean,
        median: quantile(&sorted, 0.5),
        iqr: quantile(&sorted, 0.75) - quantile(&sorted, 0.25),
        se,
    })
}

/// One point of the single-block sweep: a spectrum at a given scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledSpectrumItem {
    pub spectrum_id: String,
    pub scale_s: f64,
    pub spectrum: Spectrum,
}

/// Expands a base spectrum over a scale schedule.
pub fn scaled_items(
    base: &Spectrum,
    spectrum_id: &str,
    schedule: &[f64],
) -> Result<Vec<ScaledSpectrumItem>> {
    schedule
        .iter()
        .map(|&s| {
            Ok(ScaledSpectrumItem {
                spectrum_id: spectrum_id.to_string(),
                scale_s: s,
                spectrum: scale_spectrum(base, s)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: Group,
    pub stats: SummaryStats,
}

/// Rotation-averaged outcome of one whitening step at one sweep point,
/// alongside the closed-form bounds for the same spectrum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SingleBlockRecord {
    pub spectrum_id: String,
    pub scale_s: f64,
    pub s_before: f64,
    pub groups: Vec<GroupSummary>,
    pub report: BoundReport,
}

fn rotation_set<T: HaarScalar>(
    dim: usize,
    n_rot: usize,
    seed: u64,
    dom: u64,
) -> Result<Vec<Rotation<T>>> {
    (0..n_rot)
        .map(|r| sample_haar(dim, &mut stream_rng(seed, dom, 0, r as u64)))
        .collect()
}

fn whitened_s_values<T: HaarScalar>(
    cov: &Covariance<T>,
    rotations: &[Rotation<T>],
    split: BlockSplit,
) -> Result<Vec<f64>> {
    rotations
        .iter()
        .map(|q| non_standardness_zero_mean(&rotate_and_whiten(cov, q, split)?))
        .collect()
}

/// Runs the single-block protocol: for every item, applies one
/// rotate-and-whiten step under each rotation of a set sampled once per
/// group (reused across all items and scales), and evaluates the requested
/// bounds on the input spectrum.
pub fn run_single_block(
    config: &ExperimentConfig,
    items: &[ScaledSpectrumItem],
) -> Result<Vec<SingleBlockRecord>> {
    config.validate()?;
    if items.is_empty() {
        return Err(Error::InvalidCount("no sweep items".into()));
    }
    for item in items {
        if item.spectrum.dim() != config.dim {
            return Err(Error::InvalidDimension(format!(
                "item {} has dimension {}, config says {}",
                item.spectrum_id,
                item.spectrum.dim(),
                config.dim
            )));
        }
    }
    let split = BlockSplit::half(config.dim)?;
    let want_o = config.group.groups().contains(&Group::Orthogonal);
    let want_u = config.group.groups().contains(&Group::Unitary);
    let rot_o: Vec<Rotation<f64>> = if want_o {
        rotation_set(config.dim, config.n_rot, config.seed, domain::SINGLE_BLOCK_ORTHOGONAL)?
    } else {
        Vec::new()
    };
    let rot_u: Vec<Rotation<Complex<f64>>> = if want_u {
        rotation_set(config.dim, config.n_rot, config.seed, domain::SINGLE_BLOCK_UNITARY)?
    } else {
        Vec::new()
    };

    items
        .par_iter()
        .map(|item| {
            let cov = item.spectrum.to_diagonal_covariance();
            let mut groups = Vec::new();
            if want_o {
                let vals = whitened_s_values(&cov, &rot_o, split)?;
                groups.push(GroupSummary {
                    group: Group::Orthogonal,
                    stats: summarize(&vals)?,
                });
            }
            if want_u {
                let vals = whitened_s_values(&cov.complexify(), &rot_u, split)?;
                groups.push(GroupSummary {
                    group: Group::Unitary,
                    stats: summarize(&vals)?,
                });
            }
            let report = bound_report(&item.spectrum, config.precise_policy())?;
            Ok(SingleBlockRecord {
                spectrum_id: item.spectrum_id.clone(),
                scale_s: item.scale_s,
                s_before: report.s_before,
                groups,
                report,
            })
        })
        .collect()
}

/// One trajectory of the deep protocol: an input spectrum pushed through
/// `layers` rotate-and-whiten steps under one rotation sequence.
///
/// `s_values[l]` is the non-Standardness entering layer `l`; `ratios[l]` is
/// `s_values[l+1] / s_values[l]`. A trajectory stops once the
/// non-Standardness falls below the stop threshold (`termination_layer`
/// records where); a whitening abort on a near-singular block additionally
/// sets `terminated_early`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub instance_id: usize,
    /// Index of the rotation stream this trajectory used.
    pub rotation_seed: u64,
    pub s_values: Vec<f64>,
    pub ratios: Vec<f64>,
    pub terminated_early: bool,
    pub termination_layer: Option<usize>,
    pub abort_note: Option<String>,
    /// Eigenvalue spectrum entering each layer, when retained.
    pub layer_spectra: Option<Vec<Spectrum>>,
}

fn layer_spectrum<T: HaarScalar>(cov: &Covariance<T>) -> Result<Spectrum> {
    Ok(Spectrum::new(cov.eigenvalues())?.normalized())
}

fn deep_trajectory<T: HaarScalar>(
    config: &ExperimentConfig,
    split: BlockSplit,
    spectrum: &Spectrum,
    instance: usize,
    r: usize,
    shared: Option<&[Vec<Rotation<T>>]>,
) -> Result<TrajectoryRecord> {
    let mut cov: Covariance<T> = {
        let real = spectrum.to_diagonal_covariance();
        Covariance::<T>::from_real(&real)
    };
    let mut record = TrajectoryRecord {
        instance_id: instance,
        rotation_seed: r as u64,
        s_values: vec![non_standardness_spectrum(spectrum)],
        ratios: Vec::new(),
        terminated_early: false,
        termination_layer: None,
        abort_note: None,
        layer_spectra: config.retain_spectra.then(Vec::new),
    };
    if let Some(spectra) = record.layer_spectra.as_mut() {
        spectra.push(spectrum.clone());
    }
    for layer in 0..config.layers {
        let s_in = *record.s_values.last().expect("nonempty");
        if s_in < config.stop_threshold {
            record.termination_layer = Some(layer);
            break;
        }
        let sampled;
        let q = match shared {
            Some(table) => &table[layer][r],
            None => {
                let b = (layer * config.n_rot + r) as u64;
                let mut rng = stream_rng(config.seed, domain::DEEP_INDEPENDENT, instance as u64, b);
                sampled = sample_haar(config.dim, &mut rng)?;
                &sampled
            }
        };
        match rotate_and_whiten(&cov, q, split) {
            Ok(next) => {
                cov = next;
                let s = non_standardness_zero_mean(&cov)?;
                record.ratios.push(s / s_in);
                record.s_values.push(s);
                if let Some(spectra) = record.layer_spectra.as_mut() {
                    spectra.push(layer_spectrum(&cov)?);
                }
            }
            Err(
                e @ (Error::NearSingularSchur { .. }
                | Error::IllConditionedPassiveBlock(_)
                | Error::NonPositiveDiagonal { .. }),
            ) => {
                record.terminated_early = true;
                record.termination_layer = Some(layer);
                record.abort_note = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(record)
}

fn run_deep_typed<T: HaarScalar>(
    config: &ExperimentConfig,
    spectra: &[Spectrum],
    dom: u64,
) -> Result<Vec<TrajectoryRecord>> {
    let split = BlockSplit::half(config.dim)?;
    let shared: Option<Vec<Vec<Rotation<T>>>> = if config.independent_rotations {
        None
    } else {
        Some(
            (0..config.layers)
                .map(|l| {
                    (0..config.n_rot)
                        .map(|r| {
                            sample_haar(
                                config.dim,
                                &mut stream_rng(config.seed, dom, l as u64, r as u64),
                            )
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?,
        )
    };
    let jobs: Vec<(usize, usize)> = (0..spectra.len())
        .flat_map(|i| (0..config.n_rot).map(move |r| (i, r)))
        .collect();
    jobs.par_iter()
        .map(|&(i, r)| {
            deep_trajectory::<T>(config, split, &spectra[i], i, r, shared.as_deref())
        })
        .collect()
}

/// Runs the deep protocol over the given input spectra. In the default
/// shared mode, layer `l` uses one rotation set drawn once and reused by
/// every instance, so trajectories with the same rotation index experience
/// the same network; the independent mode draws fresh rotations per
/// trajectory.
pub fn run_deep(config: &ExperimentConfig, spectra: &[Spectrum]) -> Result<Vec<TrajectoryRecord>> {
    config.validate()?;
    if config.layers == 0 {
        return Err(Error::InvalidCount("deep runs need at least one layer".into()));
    }
    if spectra.is_empty() {
        return Err(Error::InvalidCount("no input spectra".into()));
    }
    for s in spectra {
        if s.dim() != config.dim {
            return Err(Error::InvalidDimension(format!(
                "input spectrum has dimension {}, config says {}",
                s.dim(),
                config.dim
            )));
        }
        s.require_normalized()?;
    }
    let needed = config.layers * config.n_rot;
    if needed >= (1 << 24) || spectra.len() >= (1 << 24) {
        return Err(Error::InvalidCount(format!(
            "stream addressing supports < 2^24 rotations per axis, got {needed}"
        )));
    }
    match config.group {
        GroupChoice::Orthogonal => run_deep_typed::<f64>(config, spectra, domain::DEEP_SHARED),
        GroupChoice::Unitary => {
            run_deep_typed::<Complex<f64>>(config, spectra, domain::DEEP_SHARED)
        }
        GroupChoice::Both => Err(Error::InvalidInput(
            "deep runs use a single rotation ensemble; pick orthogonal or unitary".into(),
        )),
    }
}

/// Per-layer comparison of the empirical contraction against the bounds
/// evaluated on the layer's own spectra. `conjecture_margin` is the mean
/// loss-only bound ratio minus the mean empirical ratio; it is reported,
/// never asserted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerBoundRow {
    pub layer: usize,
    pub n_points: usize,
    pub mean_ratio: f64,
    pub ratio_iqr: f64,
    pub mean_varmax_ratio: f64,
    pub mean_lossonly_ratio: f64,
    pub mean_gamma: f64,
    pub mean_precise_ratio: Option<f64>,
    pub n_precise: usize,
    pub conjecture_margin: f64,
}

/// Aggregates trajectories into per-layer rows. Requires trajectories run
/// with spectra retention; transitions whose entering non-Standardness is
/// below the stop threshold are excluded.
pub fn compare_bounds_per_layer(
    config: &ExperimentConfig,
    records: &[TrajectoryRecord],
) -> Result<Vec<LayerBoundRow>> {
    if records.is_empty() {
        return Err(Error::InvalidCount("no trajectories".into()));
    }
    let mut jobs: Vec<(usize, f64, &Spectrum)> = Vec::new();
    for rec in records {
        let spectra = rec.layer_spectra.as_ref().ok_or_else(|| {
            Error::InvalidInput("per-layer comparison needs retain_spectra".into())
        })?;
        for (layer, ratio) in rec.ratios.iter().enumerate() {
            let s_in = rec.s_values[layer];
            if s_in < config.stop_threshold {
                continue;
            }
            jobs.push((layer, *ratio, &spectra[layer]));
        }
    }
    let evaluated: Vec<(usize, f64, BoundReport)> = jobs
        .par_iter()
        .map(|&(layer, ratio, spectrum)| {
            let report = bound_report(spectrum, config.precise_policy())?;
            Ok((layer, ratio, report))
        })
        .collect::<Result<_>>()?;

    let max_layer = evaluated.iter().map(|&(l, ..)| l).max().unwrap_or(0);
    let mut rows = Vec::new();
    for layer in 0..=max_layer {
        let points: Vec<&(usize, f64, BoundReport)> =
            evaluated.iter().filter(|&&(l, ..)| l == layer).collect();
        if points.is_empty() {
            continue;
        }
        let ratios: Vec<f64> = points.iter().map(|&&(_, r, _)| r).collect();
        let stats = summarize(&ratios)?;
        let mean_of = |f: &dyn Fn(&BoundReport) -> f64| {
            points.iter().map(|&&(_, _, ref rep)| f(rep)).sum::<f64>() / points.len() as f64
        };
        let mean_varmax = mean_of(&|rep| rep.varmax_bound / rep.s_before);
        let mean_lossonly = mean_of(&|rep| rep.lossonly_bound / rep.s_before);
        let mean_gamma = mean_of(&|rep| rep.gamma);
        let precise: Vec<f64> = points
            .iter()
            .filter_map(|&&(_, _, ref rep)| rep.precise_bound.map(|b| b / rep.s_before))
            .collect();
        rows.push(LayerBoundRow {
            layer,
            n_points: points.len(),
            mean_ratio: stats.mean,
            ratio_iqr: stats.iqr,
            mean_varmax_ratio: mean_varmax,
            mean_lossonly_ratio: mean_lossonly,
            mean_gamma,
            mean_precise_ratio: (!precise.is_empty())
                .then(|| precise.iter().sum::<f64>() / precise.len() as f64),
            n_precise: precise.len(),
            conjecture_margin: mean_lossonly - stats.mean,
        });
    }
    Ok(rows)
}
