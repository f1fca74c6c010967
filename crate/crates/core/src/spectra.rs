//! Generators for the toy eigenvalue spectra the experiments run on:
//! parametric families sampled from a bijective profile function, dataset
//! families with a varied value, interpolation toward the identity via a
//! scale parameter, and the tiny multiplicative perturbation that makes
//! eigenvalues pairwise distinct.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Spectrum;
use crate::rng::{domain, stream_rng};

/// Power profiles evaluate to 0 at the left grid endpoint; this floor keeps
/// the raw values positive before normalization.
pub const POWER_FLOOR: f64 = 1e-6;

/// Profile functions `mu: [0,1] -> R_+`, chosen bijective so the sampled
/// eigenvalues are pairwise distinct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ParametricFamily {
    /// `mu(x) = x^p + 1e-6`.
    Power { p: u32 },
    /// `mu(x) = 1/(1.1 - x)`.
    Reciprocal,
    /// `mu(x) = exp(x)`.
    Exponential,
}

impl ParametricFamily {
    /// The profile families the experiments ship with.
    pub const STANDARD: [ParametricFamily; 6] = [
        ParametricFamily::Power { p: 1 },
        ParametricFamily::Power { p: 2 },
        ParametricFamily::Power { p: 5 },
        ParametricFamily::Power { p: 8 },
        ParametricFamily::Reciprocal,
        ParametricFamily::Exponential,
    ];

    pub fn mu(self, x: f64) -> f64 {
        match self {
            ParametricFamily::Power { p } => x.powi(p as i32) + POWER_FLOOR,
            ParametricFamily::Reciprocal => 1.0 / (1.1 - x),
            ParametricFamily::Exponential => x.exp(),
        }
    }

    pub fn name(self) -> String {
        match self {
            ParametricFamily::Power { p } => format!("x^{p}"),
            ParametricFamily::Reciprocal => "1/(1.1-x)".into(),
            ParametricFamily::Exponential => "exp(x)".into(),
        }
    }
}

/// Samples the profile on the uniform grid `x_i = i/(D-1)` and normalizes to
/// mean 1. Non-bijective profiles (p = 0) produce duplicates and are
/// rejected.
pub fn generate_parametric(family: ParametricFamily, dim: usize) -> Result<Spectrum> {
    if dim < 2 {
        return Err(Error::InvalidDimension(format!(
            "parametric spectra need dim >= 2, got {dim}"
        )));
    }
    let raw: Vec<f64> = (0..dim)
        .map(|i| family.mu(i as f64 / (dim - 1) as f64))
        .collect();
    let spectrum = Spectrum::new(raw)?.normalized();
    if !spectrum.is_distinct() {
        return Err(Error::DegenerateEigenvalues(format!(
            "profile {} is not injective on the grid",
            family.name()
        )));
    }
    Ok(spectrum)
}

/// Largest admissible scale for [`scale_spectrum`]: eigenvalues stay
/// positive for `s < 1/(1 - lambda_min)`. Infinite when no eigenvalue is
/// below 1.
pub fn s_max(base: &Spectrum) -> f64 {
    let min = base.min();
    if min < 1.0 {
        1.0 / (1.0 - min)
    } else {
        f64::INFINITY
    }
}

/// Interpolates a normalized spectrum toward the identity:
/// `lambda_i = (nu_i - 1) s + 1`. Mean 1 is preserved for every `s`, and the
/// non-Standardness increases strictly with `s`.
pub fn scale_spectrum(base: &Spectrum, s: f64) -> Result<Spectrum> {
    base.require_normalized()?;
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::InvalidInput(format!(
            "scale must be positive and finite, got {s}"
        )));
    }
    if s >= s_max(base) {
        return Err(Error::PositivityViolation(format!(
            "scale {s} at or beyond s_max {}",
            s_max(base)
        )));
    }
    Spectrum::new(base.values().iter().map(|&v| (v - 1.0) * s + 1.0).collect())
}

/// The standard scale sweep: one third geometrically spaced in
/// `[0.001, 0.9] s_max`, two thirds linearly spaced in `(0.9, 0.999] s_max`,
/// concentrating points where the spectrum degenerates.
pub fn scale_schedule(base: &Spectrum, n_scale: usize) -> Result<Vec<f64>> {
    if n_scale == 0 || n_scale % 3 != 0 {
        return Err(Error::InvalidCount(format!(
            "scale count must be a positive multiple of 3, got {n_scale}"
        )));
    }
    let smax = s_max(base);
    if !smax.is_finite() {
        return Err(Error::InvalidInput(
            "scale schedule undefined for an all-ones spectrum (s_max is infinite)".into(),
        ));
    }
    let n_geo = n_scale / 3;
    let n_lin = n_scale - n_geo;
    let mut schedule = Vec::with_capacity(n_scale);
    let (g_lo, g_hi) = (0.001 * smax, 0.9 * smax);
    if n_geo == 1 {
        schedule.push(g_lo);
    } else {
        let log_step = (g_hi / g_lo).ln() / (n_geo - 1) as f64;
        for i in 0..n_geo {
            schedule.push(g_lo * (log_step * i as f64).exp());
        }
    }
    // Linear part covers (0.9, 0.999]: drop the shared 0.9 endpoint.
    for i in 1..=n_lin {
        let t = i as f64 / n_lin as f64;
        schedule.push((0.9 + t * 0.099) * smax);
    }
    Ok(schedule)
}

/// Dataset families: structured spectra with one varied value, plus two
/// random baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFamily {
    /// All eigenvalues 1 except a single varied one.
    SingleVaried,
    /// All eigenvalues varied except a single 1.
    AllButOneVaried,
    /// First half `v`, second half `1/v`.
    TwoHalves,
    /// Each eigenvalue uniform on `[0, 2]`.
    UniformRandom,
    /// Each eigenvalue log-uniform on `[1/v_max, v_max]`.
    LogUniformRandom,
}

pub const ALL_DATASET_FAMILIES: [DatasetFamily; 5] = [
    DatasetFamily::SingleVaried,
    DatasetFamily::AllButOneVaried,
    DatasetFamily::TwoHalves,
    DatasetFamily::UniformRandom,
    DatasetFamily::LogUniformRandom,
];

impl DatasetFamily {
    pub fn name(self) -> &'static str {
        match self {
            DatasetFamily::SingleVaried => "single-varied",
            DatasetFamily::AllButOneVaried => "all-but-one-varied",
            DatasetFamily::TwoHalves => "two-halves",
            DatasetFamily::UniformRandom => "uniform-random",
            DatasetFamily::LogUniformRandom => "log-uniform-random",
        }
    }

    fn stream_index(self) -> u64 {
        match self {
            DatasetFamily::SingleVaried => 0,
            DatasetFamily::AllButOneVaried => 1,
            DatasetFamily::TwoHalves => 2,
            DatasetFamily::UniformRandom => 3,
            DatasetFamily::LogUniformRandom => 4,
        }
    }
}

/// `n` points geometrically spaced over `[lo, hi]`, inclusive.
fn geomspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (llo + (lhi - llo) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// One family's spectra, each normalized to mean 1. The varied value sweeps
/// `n_vary` points geometrically spaced over `[1/v_max, v_max]`; the
/// all-ones spectrum (varied value exactly 1) is excluded. Random families
/// draw `n_vary` independent spectra from the given seed.
pub fn generate_dataset_family(
    kind: DatasetFamily,
    dim: usize,
    n_vary: usize,
    v_max: f64,
    seed: u64,
) -> Result<Vec<Spectrum>> {
    if dim < 2 || dim % 2 != 0 {
        return Err(Error::InvalidDimension(format!(
            "dataset families need an even dimension >= 2, got {dim}"
        )));
    }
    if !(v_max > 1.0) || !v_max.is_finite() {
        return Err(Error::InvalidInput(format!(
            "v_max must be finite and > 1, got {v_max}"
        )));
    }
    if n_vary == 0 {
        return Err(Error::InvalidCount("n_vary must be positive".into()));
    }
    let mut out = Vec::with_capacity(n_vary);
    match kind {
        DatasetFamily::SingleVaried | DatasetFamily::AllButOneVaried | DatasetFamily::TwoHalves => {
            for v in geomspace(1.0 / v_max, v_max, n_vary) {
                if v == 1.0 {
                    continue;
                }
                let values = match kind {
                    DatasetFamily::SingleVaried => {
                        let mut vals = vec![1.0; dim];
                        vals[0] = v;
                        vals
                    }
                    DatasetFamily::AllButOneVaried => {
                        let mut vals = vec![v; dim];
                        vals[dim - 1] = 1.0;
                        vals
                    }
                    DatasetFamily::TwoHalves => {
                        let mut vals = vec![v; dim];
                        for x in vals.iter_mut().skip(dim / 2) {
                            *x = 1.0 / v;
                        }
                        vals
                    }
                    _ => unreachable!(),
                };
                out.push(Spectrum::new(values)?.normalized());
            }
        }
        DatasetFamily::UniformRandom | DatasetFamily::LogUniformRandom => {
            for inst in 0..n_vary {
                let mut rng = stream_rng(seed, domain::SPECTRA, kind.stream_index(), inst as u64);
                let values: Vec<f64> = (0..dim)
                    .map(|_| match kind {
                        DatasetFamily::UniformRandom => loop {
                            let v = rng.random::<f64>() * 2.0;
                            if v > 0.0 {
                                break v;
                            }
                        },
                        DatasetFamily::LogUniformRandom => {
                            let span = 2.0 * v_max.ln();
                            (-v_max.ln() + rng.random::<f64>() * span).exp()
                        }
                        _ => unreachable!(),
                    })
                    .collect();
                if values.iter().all(|&v| v == values[0]) {
                    continue;
                }
                out.push(Spectrum::new(values)?.normalized());
            }
        }
    }
    Ok(out)
}

/// Breaks eigenvalue ties by sorting ascending and multiplying by a factor
/// rising linearly over `(1-eps, 1+eps)`, then renormalizing. Sorting first
/// guarantees the products stay strictly increasing, so the result is
/// pairwise distinct and satisfies the tight bound's precondition.
pub fn distinctness_perturb(spectrum: &Spectrum, epsilon: f64) -> Result<Spectrum> {
    if !(epsilon > 0.0 && epsilon <= 0.01) {
        return Err(Error::InvalidInput(format!(
            "perturbation strength must lie in (0, 0.01], got {epsilon}"
        )));
    }
    let d = spectrum.dim();
    if d < 2 {
        return Err(Error::InvalidDimension(
            "perturbation needs at least two eigenvalues".into(),
        ));
    }
    let sorted = spectrum.sorted();
    let values: Vec<f64> = sorted
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| v * (1.0 - epsilon + 2.0 * epsilon * i as f64 / (d - 1) as f64))
        .collect();
    let out = Spectrum::new(values)?.normalized();
    if !out.is_distinct() {
        return Err(Error::DegenerateEigenvalues(
            "perturbation failed to separate eigenvalues".into(),
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::non_standardness_spectrum;
    use approx::assert_relative_eq;

    #[test]
    fn parametric_families_are_normalized_and_distinct() {
        for family in ParametricFamily::STANDARD {
            for dim in [2usize, 5, 48] {
                let s = generate_parametric(family, dim).unwrap();
                assert!(s.is_normalized(), "{} D={dim}", family.name());
                assert!(s.is_distinct(), "{} D={dim}", family.name());
                assert_eq!(s.dim(), dim);
            }
        }
    }

    #[test]
    fn exponential_family_hand_value() {
        let s = generate_parametric(ParametricFamily::Exponential, 2).unwrap();
        let e = std::f64::consts::E;
        assert_relative_eq!(s.values()[0], 2.0 / (1.0 + e), max_relative = 1e-14);
        assert_relative_eq!(s.values()[1], 2.0 * e / (1.0 + e), max_relative = 1e-14);
    }

    #[test]
    fn power_family_respects_floor() {
        let s = generate_parametric(ParametricFamily::Power { p: 8 }, 48).unwrap();
        assert!(s.min() > 0.0);
        // Non-bijective profile (constant) must be rejected.
        assert!(matches!(
            generate_parametric(ParametricFamily::Power { p: 0 }, 4),
            Err(Error::DegenerateEigenvalues(_))
        ));
    }

    #[test]
    fn scaling_hand_value_and_limits() {
        let base = Spectrum::new(vec![0.5, 1.5]).unwrap();
        let s = scale_spectrum(&base, 0.5).unwrap();
        assert_relative_eq!(s.values()[0], 0.75, max_relative = 1e-14);
        assert_relative_eq!(s.values()[1], 1.25, max_relative = 1e-14);
        assert!(s.is_normalized());
        assert_relative_eq!(s_max(&base), 2.0, max_relative = 1e-14);
        assert!(matches!(
            scale_spectrum(&base, 2.0),
            Err(Error::PositivityViolation(_))
        ));
        assert!(matches!(
            scale_spectrum(&base, 0.0),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn non_standardness_increases_with_scale() {
        let base = generate_parametric(ParametricFamily::Power { p: 2 }, 8).unwrap();
        let smax = s_max(&base);
        let mut prev = 0.0;
        for i in 1..=20 {
            let s = 0.999 * smax * i as f64 / 20.0;
            let scaled = scale_spectrum(&base, s).unwrap();
            let ns = non_standardness_spectrum(&scaled);
            assert!(ns > prev, "S not increasing at scale {s}");
            assert!(scaled.geometric_mean() < 1.0);
            prev = ns;
        }
    }

    #[test]
    fn schedule_structure() {
        let base = Spectrum::new(vec![0.5, 1.5]).unwrap();
        let smax = s_max(&base);

        let tiny = scale_schedule(&base, 3).unwrap();
        assert_eq!(tiny.len(), 3);
        assert_relative_eq!(tiny[0], 0.001 * smax, max_relative = 1e-12);

        let sched = scale_schedule(&base, 150).unwrap();
        assert_eq!(sched.len(), 150);
        for w in sched.windows(2) {
            assert!(w[1] > w[0], "schedule not strictly increasing");
        }
        assert!(sched.iter().all(|&s| s < smax));
        assert_relative_eq!(sched[49], 0.9 * smax, max_relative = 1e-12);
        assert_relative_eq!(sched[149], 0.999 * smax, max_relative = 1e-12);

        assert!(matches!(
            scale_schedule(&base, 100),
            Err(Error::InvalidCount(_))
        ));
        let ones = Spectrum::new(vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            scale_schedule(&ones, 3),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn two_halves_hand_value() {
        let spectra =
            generate_dataset_family(DatasetFamily::TwoHalves, 4, 3, 2.0, 0).unwrap();
        // n_vary=3 over [1/2, 2] hits exactly 1 in the middle: excluded.
        assert_eq!(spectra.len(), 2);
        let last = &spectra[1];
        // (2, 2, 0.5, 0.5) has mean 1.25; normalized to (1.6, 1.6, 0.4, 0.4).
        assert_relative_eq!(last.values()[0], 1.6, max_relative = 1e-12);
        assert_relative_eq!(last.values()[2], 0.4, max_relative = 1e-12);
    }

    #[test]
    fn dataset_families_are_normalized() {
        for kind in ALL_DATASET_FAMILIES {
            let spectra = generate_dataset_family(kind, 8, 6, 100.0, 3).unwrap();
            assert!(!spectra.is_empty());
            for s in &spectra {
                assert!(s.is_normalized(), "{}", kind.name());
                assert_eq!(s.dim(), 8);
            }
        }
    }

    #[test]
    fn random_families_are_deterministic() {
        let a = generate_dataset_family(DatasetFamily::UniformRandom, 6, 4, 10.0, 9).unwrap();
        let b = generate_dataset_family(DatasetFamily::UniformRandom, 6, 4, 10.0, 9).unwrap();
        assert_eq!(a, b);
        let c = generate_dataset_family(DatasetFamily::UniformRandom, 6, 4, 10.0, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn dataset_family_input_validation() {
        assert!(generate_dataset_family(DatasetFamily::SingleVaried, 5, 4, 10.0, 0).is_err());
        assert!(generate_dataset_family(DatasetFamily::SingleVaried, 4, 4, 1.0, 0).is_err());
        assert!(generate_dataset_family(DatasetFamily::SingleVaried, 4, 0, 10.0, 0).is_err());
    }

    #[test]
    fn perturbation_separates_ties() {
        let tied = Spectrum::new(vec![1.0, 1.0, 1.0, 4.0]).unwrap().normalized();
        let out = distinctness_perturb(&tied, 1e-5).unwrap();
        assert!(out.is_distinct());
        assert!(out.is_normalized());
        let s0 = non_standardness_spectrum(&tied);
        let s1 = non_standardness_spectrum(&out);
        assert!(
            (s1 - s0).abs() <= 1e-4 * s0.max(1e-4),
            "perturbation moved S too far: {s0} -> {s1}"
        );
    }

    #[test]
    fn perturbation_preserves_order_of_distinct_input() {
        let s = Spectrum::new(vec![0.4, 0.8, 1.2, 1.6]).unwrap();
        let out = distinctness_perturb(&s, 1e-5).unwrap();
        for (a, b) in s.values().iter().zip(out.values()) {
            assert_relative_eq!(a, b, max_relative = 1e-4);
        }
        assert!(matches!(
            distinctness_perturb(&s, 0.5),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            distinctness_perturb(&s, 0.0),
            Err(Error::InvalidInput(_))
        ));
    }
}
