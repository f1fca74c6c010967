//! Closed-form upper bounds on the expected non-Standardness after one
//! whitening step under a Haar-random rotation, the per-layer contraction
//! rate for deep stacks, and the symmetric-polynomial primitives they share.
//!
//! Three bounds are provided for a normalized spectrum with S(Sigma) > 0:
//!
//! * a tight bound evaluated in arbitrary-precision arithmetic (the summands
//!   of its alternating sum grow like exp(D) while the sum itself stays
//!   O(D), so fixed precision silently fails as D grows);
//! * an interpretable bound driven by the spectrum variance and largest
//!   eigenvalue (`varmax`);
//! * a weaker bound that depends on the loss alone through the geometric
//!   mean of the spectrum (`lossonly`).
//!
//! The contraction rate `gamma` scales the `lossonly` bound to L layers.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::divergence::non_standardness_spectrum;
use crate::error::{Error, Result};
use crate::linalg::Spectrum;

/// Controls the precision ladder for the tight bound: evaluation starts at
/// `start_bits` of mantissa and doubles until two successive levels agree to
/// `rel_stability_target`, or `max_bits` is exceeded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrecisionPolicy {
    pub start_bits: usize,
    pub max_bits: usize,
    pub rel_stability_target: f64,
}

impl Default for PrecisionPolicy {
    fn default() -> Self {
        PrecisionPolicy {
            start_bits: 256,
            max_bits: 8192,
            rel_stability_target: 1e-9,
        }
    }
}

impl PrecisionPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.start_bits < 128 {
            return Err(Error::InvalidInput(format!(
                "start_bits must be at least 128, got {}",
                self.start_bits
            )));
        }
        if self.max_bits < self.start_bits {
            return Err(Error::InvalidInput(format!(
                "max_bits {} below start_bits {}",
                self.max_bits, self.start_bits
            )));
        }
        if !(self.rel_stability_target > 0.0) || !self.rel_stability_target.is_finite() {
            return Err(Error::InvalidInput(format!(
                "rel_stability_target must be positive and finite, got {}",
                self.rel_stability_target
            )));
        }
        Ok(())
    }
}

/// Elementary symmetric polynomial `e_k` via the Newton-triangle recurrence
/// `e_k <- e_k + b e_{k-1}`, which involves no cancellation for positive
/// inputs. Naive subset enumeration is kept in the tests as a cross-check.
pub fn elementary_symmetric(values: &[f64], k: usize) -> Result<f64> {
    if k > values.len() {
        return Err(Error::InvalidOrder {
            k,
            n: values.len(),
        });
    }
    let mut e = vec![0.0f64; k + 1];
    e[0] = 1.0;
    for &v in values {
        for j in (1..=k).rev() {
            e[j] += v * e[j - 1];
        }
    }
    Ok(e[k])
}

/// `R(a; {b_i}) = prod 1/(a - b_i)`. The sign alternates as `a` moves past
/// each `b_i`; the empty product is 1.
pub fn partial_fraction_r(a: f64, others: &[f64]) -> Result<f64> {
    let mut r = 1.0;
    for &b in others {
        let d = a - b;
        if d.abs() < 1e-300 {
            return Err(Error::DegenerateEigenvalues(format!(
                "pole collision at {a} vs {b}"
            )));
        }
        r /= d;
    }
    Ok(r)
}

/// Arbitrary-precision kernel. Scratch state (precision, constant cache) is
/// per-call and never shared across threads.
mod mp {
    use astro_float::{BigFloat, Consts, RoundingMode};

    const RM: RoundingMode = RoundingMode::ToEven;

    pub(super) struct Ctx {
        p: usize,
        cc: Consts,
    }

    impl Ctx {
        pub fn new(bits: usize) -> Self {
            Ctx {
                p: bits,
                cc: Consts::new().expect("constant cache allocation"),
            }
        }

        pub fn from_f64(&self, x: f64) -> BigFloat {
            BigFloat::from_f64(x, self.p)
        }

        pub fn add(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
            a.add(b, self.p, RM)
        }

        pub fn sub(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
            a.sub(b, self.p, RM)
        }

        pub fn mul(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
            a.mul(b, self.p, RM)
        }

        pub fn div(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
            a.div(b, self.p, RM)
        }

        pub fn powi(&self, a: &BigFloat, n: usize) -> BigFloat {
            a.powi(n, self.p, RM)
        }

        pub fn recip(&self, a: &BigFloat) -> BigFloat {
            self.div(&self.from_f64(1.0), a)
        }

        pub fn ln(&mut self, a: &BigFloat) -> BigFloat {
            a.ln(self.p, RM, &mut self.cc)
        }
    }

    /// Round-trip to f64 from the two most significant mantissa words.
    /// astro-float exposes no public f64 conversion; mantissa words are
    /// little-endian (most significant last) and normalized, so
    /// `(hi + lo/2^64) * 2^(e-64)` reconstructs the value.
    pub(super) fn to_f64(x: &BigFloat) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        if x.is_inf_pos() {
            return f64::INFINITY;
        }
        if x.is_inf_neg() {
            return f64::NEG_INFINITY;
        }
        if x.is_zero() {
            return 0.0;
        }
        let words = x.mantissa_digits().expect("finite nonzero BigFloat");
        let e = x.exponent().expect("finite nonzero BigFloat") as i32;
        let n = words.len();
        let hi = words[n - 1] as f64;
        let lo = if n > 1 { words[n - 2] as f64 } else { 0.0 };
        let mag = (hi + lo / 2f64.powi(64)) * 2f64.powi(e - 64);
        if x.is_negative() {
            -mag
        } else {
            mag
        }
    }

    /// `e_k` of the given values by the Newton triangle, all at the context
    /// precision.
    pub(super) fn esym(ctx: &Ctx, values: &[BigFloat], k: usize) -> BigFloat {
        let mut e: Vec<BigFloat> = (0..=k).map(|_| ctx.from_f64(0.0)).collect();
        e[0] = ctx.from_f64(1.0);
        for v in values {
            for j in (1..=k).rev() {
                let t = ctx.mul(v, &e[j - 1]);
                e[j] = ctx.add(&e[j], &t);
            }
        }
        e[k].clone()
    }

    /// `(N-K) (-1)^(K+1) sum_j a_j^(N-K-1) ln(a_j) prod_{i!=j} (a_j-a_i)^-1
    /// e_{K-1}(a_{!=j})`: the expected sum of inverse eigenvalues of the
    /// K x K corner of a Haar-conjugated Diag(a). The j-terms alternate in
    /// sign and grow like exp(N); evaluating at limited precision is exactly
    /// what the ladder above this kernel exists to control.
    pub(super) fn corner_inverse_trace_sum(ctx: &mut Ctx, a: &[BigFloat], k: usize) -> BigFloat {
        let n = a.len();
        let mut sum = ctx.from_f64(0.0);
        for j in 0..n {
            let others: Vec<BigFloat> = a
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != j)
                .map(|(_, v)| v.clone())
                .collect();
            let mut term = ctx.powi(&a[j], n - k - 1);
            let lg = ctx.ln(&a[j]);
            term = ctx.mul(&term, &lg);
            for o in &others {
                let d = ctx.sub(&a[j], o);
                term = ctx.div(&term, &d);
            }
            let e = esym(ctx, &others, k - 1);
            term = ctx.mul(&term, &e);
            sum = ctx.add(&sum, &term);
        }
        let scale = ctx.from_f64((n - k) as f64);
        let mut out = ctx.mul(&sum, &scale);
        if k % 2 == 0 {
            out = out.neg();
        }
        out
    }
}

fn check_distinct_positive(values: &[f64]) -> Result<()> {
    for (i, &v) in values.iter().enumerate() {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::PositivityViolation(format!(
                "value {v:e} at index {i} is not strictly positive"
            )));
        }
        for &w in &values[..i] {
            if v == w {
                return Err(Error::DegenerateEigenvalues(format!(
                    "duplicate value {v} in spectrum"
                )));
            }
        }
    }
    Ok(())
}

/// One evaluation of the corner-inverse-trace sum at a fixed precision.
/// Returns `None` when the result is non-finite or has the wrong (negative)
/// sign, both symptoms of insufficient precision.
fn corner_trace_at_bits(a: &[f64], k: usize, bits: usize) -> Option<f64> {
    let mut ctx = mp::Ctx::new(bits);
    let big: Vec<_> = a.iter().map(|&v| ctx.from_f64(v)).collect();
    let value = mp::to_f64(&mp::corner_inverse_trace_sum(&mut ctx, &big, k));
    (value.is_finite() && value > 0.0).then_some(value)
}

/// Like [`corner_trace_at_bits`] but on the inverted spectrum, rescaled by
/// `2/D`: the mean diagonal entry of the Schur complement after a
/// Haar-random rotation. The inverses are formed at working precision.
fn schur_diag_mean_at_bits(spectrum: &Spectrum, bits: usize) -> Option<f64> {
    let d = spectrum.dim();
    let mut ctx = mp::Ctx::new(bits);
    let big: Vec<_> = spectrum
        .values()
        .iter()
        .map(|&v| ctx.recip(&ctx.from_f64(v)))
        .collect();
    let sum = mp::corner_inverse_trace_sum(&mut ctx, &big, d / 2);
    let scale = ctx.from_f64(2.0 / d as f64);
    let value = mp::to_f64(&ctx.mul(&sum, &scale));
    (value.is_finite() && value > 0.0).then_some(value)
}

/// Runs `eval` at doubling precision until two successive usable values
/// agree to the relative target.
fn precision_ladder(
    policy: &PrecisionPolicy,
    mut eval: impl FnMut(usize) -> Option<f64>,
) -> Result<(f64, usize)> {
    policy.validate()?;
    let mut prev: Option<f64> = None;
    let mut bits = policy.start_bits;
    loop {
        let value = eval(bits);
        match (value, prev) {
            (Some(v), Some(p))
                if (v - p).abs() <= policy.rel_stability_target * v.abs().max(1e-300) =>
            {
                return Ok((v, bits));
            }
            _ => prev = value,
        }
        if bits >= policy.max_bits {
            return Err(Error::PrecisionExhausted(bits));
        }
        bits = (bits * 2).min(policy.max_bits);
    }
}

fn validate_tight_bound_input(spectrum: &Spectrum) -> Result<()> {
    if spectrum.dim() < 2 || spectrum.dim() % 2 != 0 {
        return Err(Error::InvalidDimension(format!(
            "tight bound needs an even dimension >= 2, got {}",
            spectrum.dim()
        )));
    }
    spectrum.require_normalized()?;
    if !spectrum.is_distinct() {
        return Err(Error::DegenerateEigenvalues(
            "tight bound needs pairwise distinct eigenvalues; perturb first".into(),
        ));
    }
    Ok(())
}

/// Tight upper bound on the expected non-Standardness after one rotate-and-
/// whiten step, averaged over the unitary group:
/// `S(Sigma) + (D/4) ln(X)` where `X` is the expected mean diagonal entry of
/// the Schur complement of the rotated covariance. `X < 1` by the
/// concavity of the logarithm, so the bound is strictly below `S(Sigma)`.
///
/// Returns the bound and the number of mantissa bits at which the ladder
/// stabilized.
pub fn precise_bound(spectrum: &Spectrum, policy: &PrecisionPolicy) -> Result<(f64, usize)> {
    validate_tight_bound_input(spectrum)?;
    let s = non_standardness_spectrum(spectrum);
    let d = spectrum.dim() as f64;
    let (x, bits) = precision_ladder(policy, |bits| schur_diag_mean_at_bits(spectrum, bits))?;
    Ok((s + d / 4.0 * x.ln(), bits))
}

/// The tight bound evaluated at one fixed precision, bypassing the ladder;
/// exposed so callers can probe ladder convergence level by level.
pub fn precise_bound_at_bits(spectrum: &Spectrum, bits: usize) -> Result<f64> {
    validate_tight_bound_input(spectrum)?;
    let s = non_standardness_spectrum(spectrum);
    let d = spectrum.dim() as f64;
    let x = schur_diag_mean_at_bits(spectrum, bits)
        .ok_or(Error::PrecisionExhausted(bits))?;
    Ok(s + d / 4.0 * x.ln())
}

/// Closed form for `E[tr(corner_K(Q Diag(a) Q*)^{-1})]` over Haar-unitary
/// `Q`: the expected sum of inverse eigenvalues of the leading K x K corner.
/// Strictly positive for positive input. Evaluated through the same
/// precision ladder as the tight bound (default policy).
pub fn expected_corner_inverse_trace(a_values: &[f64], k: usize) -> Result<f64> {
    let n = a_values.len();
    if k == 0 || k >= n {
        return Err(Error::InvalidOrder { k, n });
    }
    check_distinct_positive(a_values)?;
    let policy = PrecisionPolicy::default();
    let (value, _) = precision_ladder(&policy, |bits| corner_trace_at_bits(a_values, k, bits))?;
    Ok(value)
}

fn check_not_identity(spectrum: &Spectrum) -> Result<()> {
    if spectrum.values().iter().all(|&v| (v - 1.0).abs() <= 1e-12) {
        return Err(Error::UndefinedAtIdentity);
    }
    Ok(())
}

fn variance_coefficient(d: f64) -> f64 {
    d * d / ((d - 1.0) * (d + 2.0))
}

/// Interpretable bound driven by spectrum variance and largest eigenvalue:
/// `S + (D/4) ln(1 - D^2/(2(D-1)(D+2)) Var[lambda]/lambda_max)`.
pub fn varmax_bound(spectrum: &Spectrum) -> Result<f64> {
    spectrum.require_normalized()?;
    check_not_identity(spectrum)?;
    let d = spectrum.dim() as f64;
    if spectrum.dim() < 2 {
        return Err(Error::InvalidDimension(
            "bounds need dimension >= 2".into(),
        ));
    }
    let s = non_standardness_spectrum(spectrum);
    let y = 0.5 * variance_coefficient(d) * spectrum.variance() / spectrum.max();
    if y >= 1.0 {
        return Err(Error::PositivityViolation(format!(
            "variance bound log argument 1 - {y} is not positive"
        )));
    }
    Ok(s + d / 4.0 * (-y).ln_1p())
}

/// Weaker bound that depends on the spectrum only through `S` (equivalently
/// the geometric mean `g = exp(-2S/D)`):
/// `S + (D/4) ln(1 - D^2/((D-1)(D+2)) h (1-g))` with
/// `h = (1-sqrt(1-g^D))/(1+sqrt(1-g^D))`.
pub fn lossonly_bound(spectrum: &Spectrum) -> Result<f64> {
    spectrum.require_normalized()?;
    check_not_identity(spectrum)?;
    if spectrum.dim() < 2 {
        return Err(Error::InvalidDimension(
            "bounds need dimension >= 2".into(),
        ));
    }
    let d = spectrum.dim() as f64;
    let s = non_standardness_spectrum(spectrum);
    let one_minus_g = -(-2.0 * s / d).exp_m1();
    let one_minus_gd = -(-2.0 * s).exp_m1();
    let sq = one_minus_gd.sqrt();
    let h = (1.0 - sq) / (1.0 + sq);
    let y = variance_coefficient(d) * h * one_minus_g;
    if y >= 1.0 {
        return Err(Error::PositivityViolation(format!(
            "loss-only bound log argument 1 - {y} is not positive"
        )));
    }
    Ok(s + d / 4.0 * (-y).ln_1p())
}

/// Limit of [`gamma_rate`] as `s -> 0`:
/// `(D(D+2) - 4) / (2(D-1)(D+2))`. Equals 1/2 at D=2, peaks at 5/9 for D=4,
/// and falls back toward 1/2 as D grows.
pub fn gamma_limit(dim: usize) -> f64 {
    let d = dim as f64;
    (d * (d + 2.0) - 4.0) / (2.0 * (d - 1.0) * (d + 2.0))
}

/// Per-layer contraction rate: `gamma(s) = lossonly(s)/s` as a function of
/// the pre-layer non-Standardness alone. Monotone increasing in `s`, with
/// `gamma(0)` given by the analytic limit and `gamma(s) < 1` for all finite
/// `s`. Near zero it behaves like `gamma(0) + c sqrt(2s)`, a square-root
/// cusp rather than a differentiable minimum.
pub fn gamma_rate(s: f64, dim: usize) -> Result<f64> {
    if dim < 2 || dim % 2 != 0 {
        return Err(Error::InvalidDimension(format!(
            "contraction rate needs an even dimension >= 2, got {dim}"
        )));
    }
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::InvalidInput(format!(
            "non-Standardness must be finite and >= 0, got {s}"
        )));
    }
    if s == 0.0 {
        return Ok(gamma_limit(dim));
    }
    let d = dim as f64;
    let c = variance_coefficient(d);
    let one_minus_g = -(-2.0 * s / d).exp_m1();
    let one_minus_gd = -(-2.0 * s).exp_m1();
    let sq = one_minus_gd.sqrt();
    let h = (1.0 - sq) / (1.0 + sq);
    let y = c * h * one_minus_g;
    if y >= 1.0 {
        return Err(Error::PositivityViolation(format!(
            "contraction log argument 1 - {y} is not positive"
        )));
    }
    Ok(1.0 + d / (4.0 * s) * (-y).ln_1p())
}

/// `gamma(s0)^L * s0`: the L-layer bound obtained by telescoping the single
/// layer rate from the starting non-Standardness.
pub fn deep_bound(s0: f64, dim: usize, layers: usize) -> Result<f64> {
    let gamma = gamma_rate(s0, dim)?;
    Ok(gamma.powi(layers as i32) * s0)
}

/// Two-sided bracket on the arithmetic-geometric mean gap `1 - g` of a
/// normalized spectrum: `Var/(2 lambda_max) <= 1 - g <= Var/(2 lambda_min)`.
pub fn am_gm_gap_bounds(spectrum: &Spectrum) -> Result<(f64, f64)> {
    spectrum.require_normalized()?;
    let var = spectrum.variance();
    Ok((var / (2.0 * spectrum.max()), var / (2.0 * spectrum.min())))
}

/// Largest condition number attainable by a normalized spectrum with
/// geometric mean `g`: `(1 + sqrt(1-g^D)) / (1 - sqrt(1-g^D))`. Attained by
/// two-point spectra; returns infinity when `g^D` underflows.
pub fn kappa_max(g: f64, dim: usize) -> Result<f64> {
    if dim < 2 {
        return Err(Error::InvalidDimension(
            "condition bound needs dimension >= 2".into(),
        ));
    }
    if !(g > 0.0) || !g.is_finite() {
        return Err(Error::InvalidInput(format!(
            "geometric mean must be in (0, 1), got {g}"
        )));
    }
    if g >= 1.0 {
        return Err(Error::UndefinedAtIdentity);
    }
    let one_minus_gd = -((dim as f64) * g.ln()).exp_m1();
    let sq = one_minus_gd.sqrt();
    if sq >= 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok((1.0 + sq) / (1.0 - sq))
}

/// Test oracle for the gapped Vandermonde identity: the determinant of the
/// n x n matrix with rows `(a_i^e)` over exponents `{0..n} \ {k}` equals
/// `V(a) e_{n-k}(a)`. Returns (determinant, product form) for comparison.
pub fn vandermonde_gap_det(values: &[f64], k: usize) -> Result<(f64, f64)> {
    let n = values.len();
    if !(2..=8).contains(&n) {
        return Err(Error::InvalidDimension(format!(
            "gapped Vandermonde oracle supports 2..=8 values, got {n}"
        )));
    }
    if k == 0 || k >= n {
        return Err(Error::InvalidOrder { k, n });
    }
    for (i, &v) in values.iter().enumerate() {
        for &w in &values[..i] {
            if v == w {
                return Err(Error::DegenerateEigenvalues(format!(
                    "duplicate value {v}"
                )));
            }
        }
    }
    let exps: Vec<usize> = (0..=n).filter(|&e| e != k).collect();
    let lhs = DMatrix::from_fn(n, n, |i, c| values[i].powi(exps[c] as i32)).determinant();
    let mut vdm = 1.0;
    for j in 0..n {
        for i in 0..j {
            vdm *= values[j] - values[i];
        }
    }
    let rhs = vdm * elementary_symmetric(values, n - k)?;
    Ok((lhs, rhs))
}

/// All bounds for one spectrum. The tight bound is attempted only when a
/// precision policy is supplied, and failures are carried as a note instead
/// of failing the whole report (a run over many spectra should not die on
/// one degenerate input).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub s_before: f64,
    pub precise_bound: Option<f64>,
    pub precise_bound_bits: Option<usize>,
    pub precise_bound_note: Option<String>,
    pub varmax_bound: f64,
    pub lossonly_bound: f64,
    pub gamma: f64,
    pub geometric_mean: f64,
    pub var_lambda: f64,
    pub lambda_max: f64,
    pub lambda_min: f64,
}

pub fn bound_report(spectrum: &Spectrum, precision: Option<&PrecisionPolicy>) -> Result<BoundReport> {
    spectrum.require_normalized()?;
    let s_before = non_standardness_spectrum(spectrum);
    let varmax = varmax_bound(spectrum)?;
    let lossonly = lossonly_bound(spectrum)?;
    let gamma = gamma_rate(s_before, spectrum.dim())?;
    let (precise, bits, note) = match precision {
        None => (None, None, None),
        Some(policy) => match precise_bound(spectrum, policy) {
            Ok((b, bits)) => (Some(b), Some(bits), None),
            Err(e) => (None, None, Some(e.slug().to_string())),
        },
    };
    Ok(BoundReport {
        s_before,
        precise_bound: precise,
        precise_bound_bits: bits,
        precise_bound_note: note,
        varmax_bound: varmax,
        lossonly_bound: lossonly,
        gamma,
        geometric_mean: spectrum.geometric_mean(),
        var_lambda: spectrum.variance(),
        lambda_max: spectrum.max(),
        lambda_min: spectrum.min(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{sample_haar, schur_complement_active, BlockSplit, Rotation};
    use crate::rng::{domain, stream_rng};
    use approx::assert_relative_eq;
    use nalgebra::{Complex, DVector};
    use proptest::prelude::*;

    fn esym_naive(values: &[f64], k: usize) -> f64 {
        let n = values.len();
        assert!(n <= 12);
        let mut total = 0.0;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize == k {
                let mut p = 1.0;
                for (i, &v) in values.iter().enumerate() {
                    if mask & (1 << i) != 0 {
                        p *= v;
                    }
                }
                total += p;
            }
        }
        total
    }

    #[test]
    fn elementary_symmetric_basics() {
        assert_eq!(elementary_symmetric(&[7.0, 9.0], 0).unwrap(), 1.0);
        assert_relative_eq!(
            elementary_symmetric(&[1.0, 2.0, 3.0], 2).unwrap(),
            11.0,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            elementary_symmetric(&[1.0, 2.0, 3.0], 3).unwrap(),
            6.0,
            max_relative = 1e-15
        );
        assert!(matches!(
            elementary_symmetric(&[1.0], 2),
            Err(Error::InvalidOrder { k: 2, n: 1 })
        ));
    }

    #[test]
    fn elementary_symmetric_matches_enumeration() {
        let mut rng = stream_rng(31, domain::VALIDATE, 3, 0);
        let values: Vec<f64> = (0..8).map(|_| 0.1 + rng.random::<f64>() * 3.0).collect();
        for k in 0..=8 {
            assert_relative_eq!(
                elementary_symmetric(&values, k).unwrap(),
                esym_naive(&values, k),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn partial_fraction_hand_values() {
        assert_relative_eq!(
            partial_fraction_r(1.0, &[2.0, 3.0]).unwrap(),
            0.5,
            max_relative = 1e-15
        );
        assert_eq!(partial_fraction_r(5.0, &[]).unwrap(), 1.0);
        assert_relative_eq!(
            partial_fraction_r(2.0, &[1.0, 3.0]).unwrap(),
            -1.0,
            max_relative = 1e-15
        );
        assert!(matches!(
            partial_fraction_r(2.0, &[2.0]),
            Err(Error::DegenerateEigenvalues(_))
        ));
    }

    #[test]
    fn corner_trace_two_value_closed_form() {
        // N=2, K=1: the sum reduces to (ln a2 - ln a1)/(a2 - a1);
        // for a = (1, e) that is 1/(e - 1).
        let v = expected_corner_inverse_trace(&[1.0, std::f64::consts::E], 1).unwrap();
        assert_relative_eq!(v, 0.581976706869326424, max_relative = 1e-9);
    }

    #[test]
    fn corner_trace_continuity_toward_equal_values() {
        let v = expected_corner_inverse_trace(&[1.0, 1.0 + 1e-9], 1).unwrap();
        assert!((v - 1.0).abs() < 1e-6, "got {v}");
    }

    #[test]
    fn corner_trace_rejects_bad_input() {
        assert!(matches!(
            expected_corner_inverse_trace(&[1.0, 2.0], 0),
            Err(Error::InvalidOrder { .. })
        ));
        assert!(matches!(
            expected_corner_inverse_trace(&[1.0, 2.0], 2),
            Err(Error::InvalidOrder { .. })
        ));
        assert!(matches!(
            expected_corner_inverse_trace(&[1.0, 1.0, 2.0], 1),
            Err(Error::DegenerateEigenvalues(_))
        ));
        assert!(matches!(
            expected_corner_inverse_trace(&[1.0, -2.0, 3.0], 1),
            Err(Error::PositivityViolation(_))
        ));
    }

    /// Closed form vs Monte Carlo over Haar-unitary conjugations, all corner
    /// sizes at N=4.
    #[test]
    fn corner_trace_matches_monte_carlo() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let diag = nalgebra::DMatrix::from_diagonal(&DVector::from_row_slice(&a))
            .map(|x| Complex::new(x, 0.0));
        let n_samples = 20_000;
        let mut sums = [0.0f64; 3];
        let mut sumsqs = [0.0f64; 3];
        let mut rng = stream_rng(32, domain::VALIDATE, 3, 1);
        for _ in 0..n_samples {
            let q: Rotation<Complex<f64>> = sample_haar(4, &mut rng).unwrap();
            let b = q.matrix() * &diag * q.matrix().adjoint();
            for (ki, k) in [1usize, 2, 3].iter().enumerate() {
                let corner = b.view((0, 0), (*k, *k)).into_owned();
                let eig = corner.symmetric_eigen().eigenvalues;
                let t: f64 = eig.iter().map(|v| 1.0 / v).sum();
                sums[ki] += t;
                sumsqs[ki] += t * t;
            }
        }
        for (ki, k) in [1usize, 2, 3].iter().enumerate() {
            let nf = n_samples as f64;
            let mean = sums[ki] / nf;
            let var = (sumsqs[ki] - sums[ki] * sums[ki] / nf) / (nf - 1.0);
            let se = (var / nf).sqrt();
            let exact = expected_corner_inverse_trace(&a, *k).unwrap();
            assert!(
                (mean - exact).abs() < 4.0 * se,
                "K={k}: MC {mean} +/- {se} vs exact {exact}"
            );
            assert!(exact > 0.0);
        }
    }

    #[test]
    fn tight_bound_two_dim_closed_form() {
        // D=2 the expected Schur entry has the closed form
        // l1 l2 ln(l2/l1)/(l2 - l1), giving bound = S + ln(0.75 ln 3)/2.
        let s = Spectrum::new(vec![0.5, 1.5]).unwrap();
        let (bound, bits) = precise_bound(&s, &PrecisionPolicy::default()).unwrap();
        assert_relative_eq!(bound, 0.047023913808349508, max_relative = 1e-10);
        assert!(bits >= 256);
        assert_relative_eq!(
            precise_bound_at_bits(&s, 256).unwrap(),
            bound,
            max_relative = 1e-9
        );
    }

    #[test]
    fn tight_bound_below_s_and_permutation_invariant() {
        for values in [
            vec![0.5, 1.5],
            vec![0.4, 0.8, 1.2, 1.6],
            vec![0.2, 0.5, 0.7, 0.9, 1.2, 1.4, 1.6, 2.5],
        ] {
            let spec = Spectrum::new(values.clone()).unwrap().normalized();
            let s = non_standardness_spectrum(&spec);
            let (bound, _) = precise_bound(&spec, &PrecisionPolicy::default()).unwrap();
            assert!(bound < s, "bound {bound} not below S {s}");

            let mut rev = spec.values().to_vec();
            rev.reverse();
            let (bound_rev, _) =
                precise_bound(&Spectrum::new(rev).unwrap(), &PrecisionPolicy::default()).unwrap();
            assert_relative_eq!(bound, bound_rev, max_relative = 1e-9);
        }
    }

    /// The exp((bound-S)4/D) factor must equal the closed-form expected mean
    /// Schur diagonal, which in turn must match a Monte Carlo average of
    /// actual Schur complements over U(4).
    #[test]
    fn tight_bound_core_matches_schur_monte_carlo() {
        let spec = Spectrum::new(vec![0.4, 0.8, 1.2, 1.6]).unwrap();
        let d = spec.dim();
        let split = BlockSplit::half(d).unwrap();
        let s = non_standardness_spectrum(&spec);
        let (bound, _) = precise_bound(&spec, &PrecisionPolicy::default()).unwrap();
        let x_from_bound = ((bound - s) * 4.0 / d as f64).exp();

        let inv: Vec<f64> = spec.values().iter().map(|v| 1.0 / v).collect();
        let x_closed = expected_corner_inverse_trace(&inv, d / 2).unwrap() * 2.0 / d as f64;
        assert_relative_eq!(x_from_bound, x_closed, max_relative = 1e-9);

        let diag = spec.to_diagonal_covariance().complexify();
        let n_samples = 20_000;
        let mut rng = stream_rng(33, domain::VALIDATE, 3, 2);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n_samples {
            let q: Rotation<Complex<f64>> = sample_haar(d, &mut rng).unwrap();
            let rot = crate::linalg::rotate_covariance(&diag, &q).unwrap();
            let schur = schur_complement_active(&rot, split).unwrap();
            let t = (0..d / 2).map(|i| schur[(i, i)].re).sum::<f64>() * 2.0 / d as f64;
            sum += t;
            sumsq += t * t;
        }
        let nf = n_samples as f64;
        let mean = sum / nf;
        let se = ((sumsq - sum * sum / nf) / (nf - 1.0) / nf).sqrt();
        assert!(
            (mean - x_closed).abs() < 4.0 * se,
            "MC {mean} +/- {se} vs closed form {x_closed}"
        );
    }

    #[test]
    fn tight_bound_near_identity_ratio_hits_quadratic_limit() {
        // Second-order expansion around the identity: the expected mean
        // Schur diagonal is 1 - D sum(eps^2)/(2(D^2-1)) for lambda = 1+eps,
        // so bound/S -> 1 - D^2/(2(D^2-1)). That sits below the gamma limit:
        // the tight bound stays tighter than the loss-only rate as S -> 0.
        let dim = 4.0f64;
        let spec = Spectrum::new(vec![1.0 - 3e-4, 1.0 - 1e-4, 1.0 + 1e-4, 1.0 + 3e-4])
            .unwrap()
            .normalized();
        let s = non_standardness_spectrum(&spec);
        let (bound, _) = precise_bound(&spec, &PrecisionPolicy::default()).unwrap();
        let ratio = bound / s;
        let limit = 1.0 - dim * dim / (2.0 * (dim * dim - 1.0));
        assert!(
            (ratio - limit).abs() < 1e-3,
            "ratio {ratio} away from quadratic limit {limit}"
        );
        assert!(ratio < gamma_limit(4));
    }

    #[test]
    fn tight_bound_ladder_is_stable_beyond_acceptance() {
        let spec = Spectrum::new(vec![0.2, 0.5, 0.7, 0.9, 1.2, 1.4, 1.6, 2.5])
            .unwrap()
            .normalized();
        let (_, bits) = precise_bound(&spec, &PrecisionPolicy::default()).unwrap();
        let b1 = precise_bound_at_bits(&spec, bits).unwrap();
        let b2 = precise_bound_at_bits(&spec, bits * 2).unwrap();
        assert!((b1 - b2).abs() <= 1e-9 * b1.abs().max(1.0));
    }

    #[test]
    fn tight_bound_input_validation() {
        let policy = PrecisionPolicy::default();
        let odd = Spectrum::new(vec![0.5, 1.0, 1.5]).unwrap();
        assert!(matches!(
            precise_bound(&odd, &policy),
            Err(Error::InvalidDimension(_))
        ));
        let unnormalized = Spectrum::new(vec![1.0, 3.0]).unwrap();
        assert!(matches!(
            precise_bound(&unnormalized, &policy),
            Err(Error::InvalidInput(_))
        ));
        let degenerate = Spectrum::new(vec![0.5, 0.5, 1.5, 1.5]).unwrap();
        assert!(matches!(
            precise_bound(&degenerate, &policy),
            Err(Error::DegenerateEigenvalues(_))
        ));
        assert!(matches!(
            PrecisionPolicy {
                start_bits: 64,
                ..Default::default()
            }
            .validate(),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn ladder_exhaustion_with_single_level() {
        // start == max gives the ladder a single level: it can never see two
        // agreeing consecutive values.
        let spec = Spectrum::new(vec![0.5, 1.5]).unwrap();
        let policy = PrecisionPolicy {
            start_bits: 128,
            max_bits: 128,
            rel_stability_target: 1e-9,
        };
        assert!(matches!(
            precise_bound(&spec, &policy),
            Err(Error::PrecisionExhausted(128))
        ));
    }

    #[test]
    fn variance_bound_hand_values() {
        let s2 = Spectrum::new(vec![0.5, 1.5]).unwrap();
        assert_relative_eq!(
            varmax_bound(&s2).unwrap(),
            0.100335347731075581,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            lossonly_bound(&s2).unwrap(),
            0.120997988498498332,
            max_relative = 1e-12
        );
        let s4 = Spectrum::new(vec![0.4, 0.8, 1.2, 1.6]).unwrap();
        assert_relative_eq!(
            varmax_bound(&s4).unwrap(),
            0.186396134734388709,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            lossonly_bound(&s4).unwrap(),
            0.219435050337117318,
            max_relative = 1e-12
        );
    }

    #[test]
    fn bounds_reject_identity_and_unnormalized() {
        let id = Spectrum::new(vec![1.0, 1.0]).unwrap();
        assert!(matches!(varmax_bound(&id), Err(Error::UndefinedAtIdentity)));
        assert!(matches!(
            lossonly_bound(&id),
            Err(Error::UndefinedAtIdentity)
        ));
        let un = Spectrum::new(vec![2.0, 3.0]).unwrap();
        assert!(matches!(varmax_bound(&un), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn gamma_limits_by_dimension() {
        assert_relative_eq!(gamma_limit(2), 0.5, max_relative = 1e-15);
        assert_relative_eq!(gamma_limit(4), 5.0 / 9.0, max_relative = 1e-15);
        assert_relative_eq!(gamma_limit(16), 284.0 / 540.0, max_relative = 1e-15);
        assert!((gamma_limit(10_000) - 0.5).abs() < 1e-3);
        assert_eq!(gamma_rate(0.0, 4).unwrap(), gamma_limit(4));
        for d in (2..=48).step_by(2) {
            let lim = gamma_limit(d);
            assert!((0.5..=5.0 / 9.0 + 1e-15).contains(&lim), "D={d}: {lim}");
        }
    }

    #[test]
    fn gamma_square_root_cusp_at_zero() {
        // gamma approaches its limit like sqrt(2s), so continuity tests must
        // probe far closer than the cusp scale.
        let lim = gamma_limit(2);
        assert!((gamma_rate(1e-14, 2).unwrap() - lim).abs() < 1e-6);
        let at_1e8 = (gamma_rate(1e-8, 2).unwrap() - lim).abs();
        assert!(at_1e8 < 1e-3);
        assert!(at_1e8 > 5e-5, "cusp expected near 1.4e-4, got {at_1e8}");
    }

    #[test]
    fn gamma_monotone_and_below_one() {
        for dim in [2usize, 4, 16, 48] {
            let mut prev = gamma_limit(dim);
            for i in 0..60 {
                let s = 1e-6 * 10f64.powf(i as f64 * 7.0 / 59.0);
                let g = gamma_rate(s, dim).unwrap();
                assert!(g > prev, "D={dim} s={s}: {g} <= {prev}");
                assert!(g < 1.0, "D={dim} s={s}: {g} >= 1");
                prev = g;
            }
        }
        for s in [0.01, 0.1, 1.0, 10.0] {
            for dim in [2usize, 4, 48] {
                assert!(gamma_rate(s, dim).unwrap() < 1.0);
            }
        }
    }

    /// gamma(S) * S and the loss-only bound are the same quantity computed
    /// through different code paths.
    #[test]
    fn gamma_times_s_equals_lossonly() {
        for values in [vec![0.5, 1.5], vec![0.4, 0.8, 1.2, 1.6]] {
            let spec = Spectrum::new(values).unwrap();
            let s = non_standardness_spectrum(&spec);
            let lhs = gamma_rate(s, spec.dim()).unwrap() * s;
            assert_relative_eq!(lhs, lossonly_bound(&spec).unwrap(), max_relative = 1e-9);
        }
    }

    #[test]
    fn gamma_rejects_bad_input() {
        assert!(matches!(gamma_rate(-1.0, 4), Err(Error::InvalidInput(_))));
        assert!(matches!(
            gamma_rate(1.0, 3),
            Err(Error::InvalidDimension(_))
        ));
    }

    #[test]
    fn deep_bound_telescopes() {
        assert_eq!(deep_bound(0.7, 4, 0).unwrap(), 0.7);
        assert_eq!(deep_bound(0.0, 4, 10).unwrap(), 0.0);
        let mut prev = f64::INFINITY;
        for layers in 0..8 {
            let b = deep_bound(1.0, 16, layers).unwrap();
            assert!(b < prev);
            prev = b;
        }
        let g = gamma_rate(1.0, 16).unwrap();
        assert_relative_eq!(
            deep_bound(1.0, 16, 5).unwrap(),
            g.powi(5),
            max_relative = 1e-12
        );
    }

    #[test]
    fn am_gm_gap_hand_values_and_containment() {
        let s = Spectrum::new(vec![0.5, 1.5]).unwrap();
        let (lo, hi) = am_gm_gap_bounds(&s).unwrap();
        assert_relative_eq!(lo, 0.25 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(hi, 0.25, max_relative = 1e-14);
        let gap = 1.0 - s.geometric_mean();
        assert!(lo <= gap && gap <= hi);
        let id = Spectrum::new(vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(am_gm_gap_bounds(&id).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn kappa_max_hand_values() {
        let g = 0.75f64.sqrt();
        assert_relative_eq!(kappa_max(g, 2).unwrap(), 3.0, max_relative = 1e-12);
        assert!((kappa_max(1.0 - 1e-12, 4).unwrap() - 1.0).abs() < 1e-5);
        assert!(matches!(kappa_max(1.0, 4), Err(Error::UndefinedAtIdentity)));
        assert!(matches!(kappa_max(-0.5, 4), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn vandermonde_gap_hand_values() {
        let (l, r) = vandermonde_gap_det(&[2.0, 5.0], 1).unwrap();
        assert_relative_eq!(l, 21.0, max_relative = 1e-12);
        assert_relative_eq!(r, 21.0, max_relative = 1e-12);
        let (l, r) = vandermonde_gap_det(&[1.0, 2.0, 3.0], 1).unwrap();
        assert_relative_eq!(l, r, max_relative = 1e-10);
        assert_relative_eq!(l, 22.0, max_relative = 1e-10);
        let (l, r) = vandermonde_gap_det(&[1.0, 2.0, 3.0], 2).unwrap();
        assert_relative_eq!(l, r, max_relative = 1e-10);
        assert_relative_eq!(l, 12.0, max_relative = 1e-10);
        assert!(matches!(
            vandermonde_gap_det(&[1.0, 2.0], 0),
            Err(Error::InvalidOrder { .. })
        ));
        assert!(matches!(
            vandermonde_gap_det(&[1.0, 1.0], 1),
            Err(Error::DegenerateEigenvalues(_))
        ));
    }

    #[test]
    fn report_collects_all_bounds() {
        let spec = Spectrum::new(vec![0.5, 1.5]).unwrap();
        let report = bound_report(&spec, Some(&PrecisionPolicy::default())).unwrap();
        assert_relative_eq!(report.s_before, 0.143841036225890464, max_relative = 1e-12);
        assert_relative_eq!(
            report.precise_bound.unwrap(),
            0.047023913808349508,
            max_relative = 1e-9
        );
        assert!(report.precise_bound_bits.unwrap() >= 256);
        assert!(report.precise_bound_note.is_none());
        assert_relative_eq!(
            report.varmax_bound,
            varmax_bound(&spec).unwrap(),
            max_relative = 1e-15
        );
        assert!(report.varmax_bound <= report.lossonly_bound);
        assert!(report.lossonly_bound < report.s_before);
        assert_relative_eq!(report.geometric_mean, 0.75f64.sqrt(), max_relative = 1e-12);
        assert_eq!(report.lambda_max, 1.5);
        assert_eq!(report.lambda_min, 0.5);

        let skipped = bound_report(&spec, None).unwrap();
        assert!(skipped.precise_bound.is_none());
        assert!(skipped.precise_bound_note.is_none());

        let degenerate = Spectrum::new(vec![0.5, 0.5, 1.5, 1.5]).unwrap();
        let report = bound_report(&degenerate, Some(&PrecisionPolicy::default())).unwrap();
        assert!(report.precise_bound.is_none());
        assert!(report
            .precise_bound_note
            .as_deref()
            .unwrap()
            .contains("degenerate"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Bound ordering, AM-GM containment and condition-number cap on
        /// random normalized spectra.
        #[test]
        fn bound_chain_and_brackets(seed in 0u64..10_000, dim in 2usize..9) {
            let mut rng = stream_rng(seed, domain::VALIDATE, 3, 9);
            let values: Vec<f64> = (0..dim).map(|_| 0.05 + rng.random::<f64>() * 2.0).collect();
            let spec = Spectrum::new(values).unwrap().normalized();
            prop_assume!(spec.values().iter().any(|&v| (v - 1.0).abs() > 1e-6));
            let s = non_standardness_spectrum(&spec);
            let vm = varmax_bound(&spec).unwrap();
            let lo = lossonly_bound(&spec).unwrap();
            prop_assert!(vm <= lo + 1e-12 * lo.abs().max(1.0), "varmax {} > lossonly {}", vm, lo);
            prop_assert!(lo < s, "lossonly {} not below S {}", lo, s);

            let (gap_lo, gap_hi) = am_gm_gap_bounds(&spec).unwrap();
            let gap = 1.0 - spec.geometric_mean();
            prop_assert!(gap_lo <= gap + 1e-12 && gap <= gap_hi + 1e-12);

            let kappa = spec.condition_number();
            let cap = kappa_max(spec.geometric_mean(), spec.dim()).unwrap();
            prop_assert!(kappa <= cap * (1.0 + 1e-9), "kappa {} above cap {}", kappa, cap);
        }

        /// Gapped Vandermonde identity across sizes and gap positions.
        #[test]
        fn vandermonde_gap_identity(seed in 0u64..10_000, n in 2usize..7) {
            let mut rng = stream_rng(seed, domain::VALIDATE, 3, 10);
            let mut values: Vec<f64> = (0..n).map(|_| 0.5 + rng.random::<f64>() * 2.5).collect();
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            prop_assume!(values.windows(2).all(|w| w[1] - w[0] > 0.05));
            for k in 1..n {
                let (lhs, rhs) = vandermonde_gap_det(&values, k).unwrap();
                prop_assert!(
                    (lhs - rhs).abs() <= 1e-8 * rhs.abs().max(1e-12),
                    "n={} k={}: {} vs {}", n, k, lhs, rhs
                );
            }
        }
    }
}
