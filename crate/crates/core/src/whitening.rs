//! The optimal single-block update: the moments it produces and the explicit
//! affine coupling parameters that realize it.
//!
//! One step takes a covariance split into a passive and an active half,
//! preconditions the passive block and the active conditional covariance
//! (Schur complement) to unit diagonal, and drops the cross-block
//! correlation. The induced map on samples is affine, `x -> A x + b` with
//! block-triangular `A`, which is exactly the form a coupling layer plus
//! ActNorm can represent.

use nalgebra::{DMatrix, DVector};

use crate::divergence::GaussianMoments;
use crate::error::{Error, Result};
use crate::linalg::{
    jacobi_precondition, rotate_covariance, schur_complement_active, symmetrize_in_place,
    BlockSplit, Covariance, HaarScalar, Rotation,
};

/// Diagonal entries of the passive block or Schur complement below this
/// threshold abort the step: the update would produce unbounded scales.
pub const NEAR_SINGULAR_DIAG: f64 = 1e-14;

/// Parameter blocks of a coupling step, for perturbation studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingBlock {
    /// Diagonal scale applied to the passive half.
    PassiveScale,
    /// Diagonal scale applied to the active half.
    ActiveScale,
    /// Linear dependence of the active half on the passive half.
    Linear,
    /// Additive shift.
    Shift,
}

/// Affine coupling parameters `x -> A x + b` with
/// `A = [[Diag(r), 0], [T, Diag(s)]]`. Scales are strictly positive, so
/// `det A = prod(r) * prod(s) > 0` and the map is invertible.
#[derive(Debug, Clone)]
pub struct CouplingParams {
    r: DVector<f64>,
    s: DVector<f64>,
    t: DMatrix<f64>,
    b: DVector<f64>,
}

impl CouplingParams {
    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn passive_dim(&self) -> usize {
        self.r.len()
    }

    pub fn active_dim(&self) -> usize {
        self.s.len()
    }

    pub fn passive_scale(&self) -> &DVector<f64> {
        &self.r
    }

    pub fn active_scale(&self) -> &DVector<f64> {
        &self.s
    }

    pub fn linear(&self) -> &DMatrix<f64> {
        &self.t
    }

    pub fn shift(&self) -> &DVector<f64> {
        &self.b
    }

    /// The full `D x D` matrix `A`.
    pub fn affine_matrix(&self) -> DMatrix<f64> {
        let p = self.passive_dim();
        let d = self.dim();
        let mut a = DMatrix::zeros(d, d);
        for i in 0..p {
            a[(i, i)] = self.r[i];
        }
        for i in 0..self.active_dim() {
            a[(p + i, p + i)] = self.s[i];
            for j in 0..p {
                a[(p + i, j)] = self.t[(i, j)];
            }
        }
        a
    }

    /// `ln det A = sum ln r + sum ln s`.
    pub fn log_det(&self) -> f64 {
        self.r.iter().map(|v| v.ln()).sum::<f64>() + self.s.iter().map(|v| v.ln()).sum::<f64>()
    }

    /// Moments of `A x + b` for `x ~ N(m, Sigma)`.
    pub fn push_forward(&self, moments: &GaussianMoments) -> Result<GaussianMoments> {
        if moments.dim() != self.dim() {
            return Err(Error::InvalidDimension(format!(
                "coupling parameters are {}-dimensional, moments {}-dimensional",
                self.dim(),
                moments.dim()
            )));
        }
        let a = self.affine_matrix();
        let mean = &a * moments.mean() + &self.b;
        let mut cov = &a * moments.cov().matrix() * a.transpose();
        symmetrize_in_place(&mut cov);
        GaussianMoments::new(mean, Covariance::new_unchecked(cov))
    }

    /// Copy with one parameter block multiplied by `factor`, for local
    /// optimality probes. Scale blocks require a positive factor to keep the
    /// map invertible.
    pub fn with_scaled_block(&self, block: CouplingBlock, factor: f64) -> Result<CouplingParams> {
        if !factor.is_finite() {
            return Err(Error::InvalidInput(format!(
                "non-finite perturbation factor {factor}"
            )));
        }
        let mut out = self.clone();
        match block {
            CouplingBlock::PassiveScale | CouplingBlock::ActiveScale => {
                if factor <= 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "scale blocks need a positive factor, got {factor}"
                    )));
                }
                match block {
                    CouplingBlock::PassiveScale => out.r *= factor,
                    CouplingBlock::ActiveScale => out.s *= factor,
                    _ => unreachable!(),
                }
            }
            CouplingBlock::Linear => out.t *= factor,
            CouplingBlock::Shift => out.b *= factor,
        }
        Ok(out)
    }
}

/// The unique (up to signs, which are fixed positive) coupling parameters
/// that map `N(m0, Sigma0)` to the whitened moments:
/// `R = Diag(Sigma0_pp)^{-1/2}`, `S = Diag(Schur)^{-1/2}`,
/// `T = -S Sigma0_ap Sigma0_pp^{-1}`, `b = -A m0`.
pub fn optimal_coupling_params(
    cov: &Covariance<f64>,
    mean: &DVector<f64>,
    split: BlockSplit,
) -> Result<CouplingParams> {
    if split.dim() != cov.dim() || mean.len() != cov.dim() {
        return Err(Error::InvalidDimension(format!(
            "split dim {}, covariance dim {}, mean length {}",
            split.dim(),
            cov.dim(),
            mean.len()
        )));
    }
    let p = split.passive_dim();
    let a = split.active_dim();
    let pp = cov.block(0, 0, p, p);
    let pa = cov.block(0, p, p, a);
    let schur = schur_complement_active(cov, split)?;

    let mut r = DVector::zeros(p);
    for i in 0..p {
        let d = pp[(i, i)];
        if d < NEAR_SINGULAR_DIAG {
            return Err(Error::NearSingularSchur { index: i, value: d });
        }
        r[i] = 1.0 / d.sqrt();
    }
    let mut s = DVector::zeros(a);
    for i in 0..a {
        let d = schur[(i, i)];
        if d < NEAR_SINGULAR_DIAG {
            return Err(Error::NearSingularSchur {
                index: p + i,
                value: d,
            });
        }
        s[i] = 1.0 / d.sqrt();
    }

    // Sigma0_ap Sigma0_pp^{-1} = (Sigma0_pp^{-1} Sigma0_pa)^T by symmetry.
    let chol = pp
        .cholesky()
        .ok_or(Error::IllConditionedPassiveBlock(f64::INFINITY))?;
    let x = chol.solve(&pa).transpose();
    let mut t = -x;
    for i in 0..a {
        for j in 0..p {
            t[(i, j)] *= s[i];
        }
    }

    let mut params = CouplingParams {
        r,
        s,
        t,
        b: DVector::zeros(split.dim()),
    };
    params.b = -(params.affine_matrix() * mean);
    Ok(params)
}

/// One whitening step:
/// `Sigma1 = blockdiag(M(Sigma0_pp), M(Schur))` with
/// `M(A)_ij = A_ij / sqrt(A_ii A_jj)`. The output has exactly unit diagonal
/// and exactly zero cross blocks, so its trace is `D` and the unit-variance
/// assumptions are preserved for the next layer.
pub fn whiten_step<T: HaarScalar>(
    cov: &Covariance<T>,
    split: BlockSplit,
) -> Result<Covariance<T>> {
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
    let schur = schur_complement_active(cov, split)?;
    for i in 0..p {
        let d = pp[(i, i)].real();
        if d < NEAR_SINGULAR_DIAG {
            return Err(Error::NearSingularSchur { index: i, value: d });
        }
    }
    for i in 0..a {
        let d = schur[(i, i)].real();
        if d < NEAR_SINGULAR_DIAG {
            return Err(Error::NearSingularSchur {
                index: p + i,
                value: d,
            });
        }
    }
    let (mp, _) = jacobi_precondition(&pp)?;
    let (ma, _) = jacobi_precondition(&schur)?;
    let mut out = DMatrix::zeros(split.dim(), split.dim());
    for i in 0..p {
        for j in 0..p {
            out[(i, j)] = mp[(i, j)];
        }
    }
    for i in 0..a {
        for j in 0..a {
            out[(p + i, p + j)] = ma[(i, j)];
        }
    }
    Ok(Covariance::new_unchecked(out))
}

/// Rotate, then whiten: one layer of the simulated network.
pub fn rotate_and_whiten<T: HaarScalar>(
    cov: &Covariance<T>,
    q: &Rotation<T>,
    split: BlockSplit,
) -> Result<Covariance<T>> {
    whiten_step(&rotate_covariance(cov, q)?, split)
}
