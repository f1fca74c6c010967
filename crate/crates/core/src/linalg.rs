//! Dense symmetric/Hermitian positive-definite matrix algebra, Haar-measure
//! sampling, and the two structural operations the whitening step is built
//! from: the active-block Schur complement and diagonal (Jacobi)
//! preconditioning.
//!
//! Everything is generic over the scalar field so the same code runs on the
//! orthogonal group (`f64`) and the unitary group (`Complex<f64>`).

use nalgebra::{Complex, ComplexField, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for the Hermitian-symmetry check at construction.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// A matrix counts as positive definite when `lambda_min > PD_RATIO * lambda_max`.
pub const PD_RATIO: f64 = 1e-12;
/// Condition-number ceiling for the passive block before the Schur complement
/// is considered meaningless.
pub const MAX_PASSIVE_CONDITION: f64 = 1e14;

/// Matrix group a rotation is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Orthogonal,
    Unitary,
}

impl Group {
    pub fn name(self) -> &'static str {
        match self {
            Group::Orthogonal => "orthogonal",
            Group::Unitary => "unitary",
        }
    }
}

/// Scalar fields the covariance machinery is instantiated at: `f64` for the
/// orthogonal group and `Complex<f64>` for the unitary group.
pub trait HaarScalar: ComplexField<RealField = f64> + Copy {
    const GROUP: Group;

    /// One entry of the Gaussian matrix fed to the QR-based Haar sampler.
    fn standard_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// `self / |self|`, or 1 when `self` is zero.
    fn unit_phase(self) -> Self;
}

impl HaarScalar for f64 {
    const GROUP: Group = Group::Orthogonal;

    fn standard_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }

    fn unit_phase(self) -> Self {
        if self < 0.0 {
            -1.0
        } else {
            1.0
        }
    }
}

impl HaarScalar for Complex<f64> {
    const GROUP: Group = Group::Unitary;

    fn standard_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Complex::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    }

    fn unit_phase(self) -> Self {
        let m = self.modulus();
        if m == 0.0 {
            Complex::new(1.0, 0.0)
        } else {
            self.unscale(m)
        }
    }
}

/// Ordered positive eigenvalues of a covariance; the sufficient statistic for
/// all closed-form bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    values: Vec<f64>,
}

impl Spectrum {
    /// Tolerance on `|mean - 1|` for a spectrum to count as normalized
    /// (unit trace per dimension).
    pub const NORMALIZED_TOL: f64 = 1e-12;

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidDimension("empty spectrum".into()));
        }
        for (i, &v) in values.iter().enumerate() {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::PositivityViolation(format!(
                    "eigenvalue {v:e} at index {i} is not strictly positive"
                )));
            }
        }
        Ok(Spectrum { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.dim() as f64
    }

    /// Rescaled copy with mean exactly renormalized to 1.
    pub fn normalized(&self) -> Spectrum {
        let m = self.mean();
        Spectrum {
            values: self.values.iter().map(|v| v / m).collect(),
        }
    }

    pub fn is_normalized(&self) -> bool {
        (self.mean() - 1.0).abs() <= Self::NORMALIZED_TOL
    }

    pub fn require_normalized(&self) -> Result<()> {
        if self.is_normalized() {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "spectrum mean {} is not 1; normalize first",
                self.mean()
            )))
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Population variance.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.dim() as f64
    }

    pub fn geometric_mean(&self) -> f64 {
        (self.log_det() / self.dim() as f64).exp()
    }

    /// `sum of ln(lambda_i)`, the log-determinant of the diagonal covariance.
    pub fn log_det(&self) -> f64 {
        self.values.iter().map(|v| v.ln()).sum()
    }

    pub fn condition_number(&self) -> f64 {
        self.max() / self.min()
    }

    /// Smallest pairwise gap between eigenvalues.
    pub fn min_gap(&self) -> f64 {
        if self.dim() < 2 {
            return f64::INFINITY;
        }
        let mut sorted = self.values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        sorted
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_distinct(&self) -> bool {
        self.min_gap() > 0.0
    }

    /// Copy with the values sorted ascending.
    pub fn sorted(&self) -> Spectrum {
        let mut values = self.values.clone();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Spectrum { values }
    }

    pub fn to_diagonal_covariance(&self) -> Covariance<f64> {
        Covariance::new_unchecked(DMatrix::from_diagonal(&DVector::from_row_slice(
            &self.values,
        )))
    }
}

/// Symmetric (real) or Hermitian (complex) positive-definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariance<T: HaarScalar> {
    m: DMatrix<T>,
}

impl<T: HaarScalar> Covariance<T> {
    /// Validating constructor: checks Hermitian symmetry to relative
    /// [`HERMITIAN_TOL`], then positive definiteness through a Hermitian
    /// eigensolver (`lambda_min > PD_RATIO * lambda_max`). The stored matrix
    /// is symmetrized exactly so later algebra cannot drift.
    pub fn new(m: DMatrix<T>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::InvalidDimension(format!(
                "covariance must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let mut scale = 0.0f64;
        let mut dev = 0.0f64;
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if !v.real().is_finite() || !v.imaginary().is_finite() {
                    return Err(Error::InvalidCovariance("non-finite entry".into()));
                }
                scale = scale.max(v.modulus());
                dev = dev.max((v - m[(j, i)].conjugate()).modulus());
            }
        }
        if scale == 0.0 || dev > HERMITIAN_TOL * scale {
            return Err(Error::InvalidCovariance(format!(
                "not Hermitian: max deviation {dev:.3e} at scale {scale:.3e}"
            )));
        }
        let mut m = m;
        symmetrize_in_place(&mut m);
        let eig = m.clone().symmetric_eigen().eigenvalues;
        let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(hi > 0.0 && lo > PD_RATIO * hi) {
            return Err(Error::InvalidCovariance(format!(
                "not positive definite: eigenvalue range [{lo:.3e}, {hi:.3e}]"
            )));
        }
        Ok(Covariance { m })
    }

    /// Wraps a matrix that is Hermitian positive definite by construction
    /// (rotations of SPD matrices, whitening outputs, diagonal spectra).
    pub(crate) fn new_unchecked(m: DMatrix<T>) -> Self {
        debug_assert_eq!(m.nrows(), m.ncols());
        Covariance { m }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.m
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.m[(i, i)].real()).sum()
    }

    pub fn diagonal_real(&self) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| self.m[(i, i)].real())
    }

    /// Owned copy of the `nrows x ncols` block starting at `(row, col)`.
    pub fn block(&self, row: usize, col: usize, nrows: usize, ncols: usize) -> DMatrix<T> {
        self.m.view((row, col), (nrows, ncols)).into_owned()
    }

    /// Eigenvalues sorted ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut eig: Vec<f64> = self
            .m
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .collect();
        eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        eig
    }

    /// Log-determinant via Cholesky (twice the sum of the log diagonal of L);
    /// numerically preferable to forming the determinant itself.
    pub fn log_det(&self) -> Result<f64> {
        let chol = self
            .m
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidCovariance("Cholesky factorization failed".into()))?;
        let l = chol.l();
        Ok(2.0 * (0..self.dim()).map(|i| l[(i, i)].real().ln()).sum::<f64>())
    }

    /// Log-determinant via the eigenvalue route; independent of [`log_det`]
    /// for cross-checking.
    ///
    /// [`log_det`]: Covariance::log_det
    pub fn log_det_eigen(&self) -> Result<f64> {
        let eig = self.eigenvalues();
        if eig[0] <= 0.0 {
            return Err(Error::InvalidCovariance(format!(
                "non-positive eigenvalue {:.3e}",
                eig[0]
            )));
        }
        Ok(eig.iter().map(|v| v.ln()).sum())
    }
}

impl Covariance<f64> {
    /// The same matrix over the complex field, for unitary-group experiments.
    pub fn complexify(&self) -> Covariance<Complex<f64>> {
        Covariance::new_unchecked(self.m.map(|x| Complex::new(x, 0.0)))
    }
}

impl<T: HaarScalar> Covariance<T> {
    /// Lifts a real covariance into the scalar field of the rotation group
    /// being sampled.
    pub fn from_real(real: &Covariance<f64>) -> Covariance<T> {
        Covariance::new_unchecked(real.m.map(T::from_real))
    }
}

/// Haar-distributed element of the orthogonal or unitary group.
#[derive(Debug, Clone)]
pub struct Rotation<T: HaarScalar> {
    q: DMatrix<T>,
}

impl<T: HaarScalar> Rotation<T> {
    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.q
    }

    pub fn group(&self) -> Group {
        T::GROUP
    }

    /// `max |Q Q* - I|`, for membership checks in tests.
    pub fn unitarity_error(&self) -> f64 {
        let n = self.dim();
        let prod = &self.q * self.q.adjoint();
        let mut dev = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let expect = if i == j { T::one() } else { T::zero() };
                dev = dev.max((prod[(i, j)] - expect).modulus());
            }
        }
        dev
    }

    pub fn abs_det(&self) -> f64 {
        self.q.clone().determinant().modulus()
    }
}

/// Haar sample via QR of an i.i.d. Gaussian matrix, with each column of Q
/// rescaled by the phase of the matching diagonal entry of R. Without the
/// phase correction the distribution is not Haar.
pub fn sample_haar<T: HaarScalar, R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<Rotation<T>> {
    if dim < 2 {
        return Err(Error::InvalidDimension(format!(
            "rotations need dim >= 2, got {dim}"
        )));
    }
    let g = DMatrix::from_fn(dim, dim, |_, _| T::standard_gaussian(rng));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        let phase = r[(j, j)].unit_phase();
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    Ok(Rotation { q })
}

/// Split of `[0, D)` into a passive block `[0, p)` and an active block
/// `[p, D)`. The experiments always use the even half split; the general
/// constructor exists because the Schur machinery is split-agnostic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSplit {
    dim: usize,
    passive: usize,
}

impl BlockSplit {
    pub fn half(dim: usize) -> Result<Self> {
        if dim < 2 || dim % 2 != 0 {
            return Err(Error::InvalidDimension(format!(
                "half split needs an even dimension >= 2, got {dim}"
            )));
        }
        Ok(BlockSplit {
            dim,
            passive: dim / 2,
        })
    }

    pub fn at(dim: usize, passive: usize) -> Result<Self> {
        if dim < 2 || passive == 0 || passive >= dim {
            return Err(Error::InvalidDimension(format!(
                "invalid split {passive}/{dim}"
            )));
        }
        Ok(BlockSplit { dim, passive })
    }

    pub fn dim(self) -> usize {
        self.dim
    }

    pub fn passive_dim(self) -> usize {
        self.passive
    }

    pub fn active_dim(self) -> usize {
        self.dim - self.passive
    }

    pub fn passive_range(self) -> std::ops::Range<usize> {
        0..self.passive
    }

    pub fn active_range(self) -> std::ops::Range<usize> {
        self.passive..self.dim
    }
}

/// `Sigma_aa - Sigma_ap Sigma_pp^{-1} Sigma_pa`: the conditional covariance
/// of the active half given the passive half. Equals the inverse of the
/// active block of the precision matrix.
///
/// The passive block is inverted through a Cholesky solve, never an explicit
/// inverse, and the result is symmetrized so drift cannot accumulate over
/// many layers.
pub fn schur_complement_active<T: HaarScalar>(
    cov: &Covariance<T>,
    split: BlockSplit,
) -> Result<DMatrix<T>> {
    if split.dim() != cov.dim() {
        return Err(Error::InvalidDimension(format!(
            "split dim {} does not match covariance dim {}",
            split.dim(),
            cov.dim()
        )));
    }
    let p = split.passive_dim();
    let a = split.active_dim();
    let pp = cov.block(0, 0, p, p);
    let pa = cov.block(0, p, p, a);
    let ap = cov.block(p, 0, a, p);
    let aa = cov.block(p, p, a, a);

    let eig = pp.clone().symmetric_eigen().eigenvalues;
    let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(cond <= MAX_PASSIVE_CONDITION) {
        return Err(Error::IllConditionedPassiveBlock(cond));
    }
    let chol = pp
        .cholesky()
        .ok_or(Error::IllConditionedPassiveBlock(cond))?;
    let y = chol.solve(&pa);
    let mut schur = aa - ap * y;
    symmetrize_in_place(&mut schur);
    Ok(schur)
}

/// Diagonal scaling `M(A)_ij = A_ij / sqrt(A_ii A_jj)`, returned together
/// with the scaler `Diag(A)^{-1/2}`. The result has exactly unit diagonal.
pub fn jacobi_precondition<T: HaarScalar>(
    mat: &DMatrix<T>,
) -> Result<(DMatrix<T>, DVector<f64>)> {
    if mat.nrows() != mat.ncols() {
        return Err(Error::InvalidDimension(format!(
            "jacobi preconditioning needs a square matrix, got {}x{}",
            mat.nrows(),
            mat.ncols()
        )));
    }
    let n = mat.nrows();
    let mut scaler = DVector::zeros(n);
    for i in 0..n {
        let d = mat[(i, i)].real();
        if !(d > 0.0) {
            return Err(Error::NonPositiveDiagonal { index: i, value: d });
        }
        scaler[i] = 1.0 / d.sqrt();
    }
    let mut m = DMatrix::from_fn(n, n, |i, j| {
        mat[(i, j)] * T::from_real(scaler[i] * scaler[j])
    });
    for i in 0..n {
        m[(i, i)] = T::one();
    }
    Ok((m, scaler))
}

/// `Q Sigma Q*`: the covariance after rotating the data. Eigenvalues and
/// trace are preserved.
pub fn rotate_covariance<T: HaarScalar>(
    cov: &Covariance<T>,
    q: &Rotation<T>,
) -> Result<Covariance<T>> {
    if q.dim() != cov.dim() {
        return Err(Error::InvalidDimension(format!(
            "rotation dim {} does not match covariance dim {}",
            q.dim(),
            cov.dim()
        )));
    }
    let mut out = q.matrix() * cov.matrix() * q.matrix().adjoint();
    symmetrize_in_place(&mut out);
    Ok(Covariance::new_unchecked(out))
}

/// In-place projection onto the Hermitian part, with an exactly real diagonal.
pub(crate) fn symmetrize_in_place<T: HaarScalar>(m: &mut DMatrix<T>) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)] = T::from_real(m[(i, i)].real());
        for j in (i + 1)..n {
            let v = (m[(i, j)] + m[(j, i)].conjugate()) * T::from_real(0.5);
            m[(i, j)] = v;
            m[(j, i)] = v.conjugate();
        }
    }
}
