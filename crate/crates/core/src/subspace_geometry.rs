//! Principal angles between subspaces, norm-bounded random perturbations and
//! log-log regression.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg;

/// A subspace of `ℝᴰ` held as an orthonormal column basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    basis: DMatrix<f64>,
}

impl Subspace {
    /// Accepts `basis` if its columns are orthonormal to `1e-12 · d`.
    pub fn from_orthonormal(basis: DMatrix<f64>) -> Result<Self> {
        let d = basis.ncols();
        let gram = basis.tr_mul(&basis) - DMatrix::identity(d, d);
        if d > 0 && linalg::max_abs(&gram) > 1e-12 * d as f64 {
            return Err(Error::InvalidArgument("basis columns are not orthonormal".into()));
        }
        Ok(Self { basis })
    }

    pub(crate) fn from_orthonormal_unchecked(basis: DMatrix<f64>) -> Self {
        Self { basis }
    }

    /// Orthonormalizes the numerically independent part of the columns' span.
    pub fn from_span(columns: &DMatrix<f64>, tol: f64) -> Result<Self> {
        linalg::check_tol(tol)?;
        let f = linalg::svd(columns)?;
        let r = linalg::count_above(&f.singular_values, tol, linalg::RankRule::Relative);
        Ok(Self {
            basis: f.u.columns(0, r).into_owned(),
        })
    }

    pub fn full(dim: usize) -> Self {
        Self {
            basis: DMatrix::identity(dim, dim),
        }
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn orthogonal_complement(&self) -> Self {
        Self {
            basis: linalg::orthogonal_complement(&self.basis),
        }
    }

    /// Image under a linear map with orthonormal-preserving action (e.g. an orthogonal matrix).
    pub fn transformed(&self, orthogonal: &DMatrix<f64>) -> Self {
        Self {
            basis: orthogonal * &self.basis,
        }
    }
}

/// Largest principal angle between two subspaces of equal dimension.
///
/// Computed as `atan2(sin θ, cos θ)` with `sin θ = ‖(I − X₁X₁ᵀ)X₂‖₂` and
/// `cos θ = s_min(X₁ᵀX₂)`, which equals `arccos(s_min)` but keeps full
/// relative accuracy for tiny angles.
pub fn max_principal_angle(s1: &Subspace, s2: &Subspace) -> Result<f64> {
    if s1.ambient_dim() != s2.ambient_dim() {
        return Err(Error::AmbientMismatch(s1.ambient_dim(), s2.ambient_dim()));
    }
    if s1.dim() != s2.dim() {
        return Err(Error::SubspaceDimensionMismatch(s1.dim(), s2.dim()));
    }
    if s1.dim() == 0 {
        return Ok(0.0);
    }
    let (x1, x2) = (s1.basis(), s2.basis());
    let cross = x1.tr_mul(x2);
    let cos = linalg::singular_values(&cross)?.iter().copied().fold(f64::INFINITY, f64::min);
    let resid = x2 - x1 * &cross;
    let sin = linalg::spectral_norm(&resid)?;
    Ok(sin.atan2(cos.max(0.0)).clamp(0.0, std::f64::consts::FRAC_PI_2))
}

/// A dense random `rows × cols` matrix with spectral norm drawn uniformly
/// from `(0, delta)`.
pub fn perturbation<R: Rng + ?Sized>(rows: usize, cols: usize, delta: f64, rng: &mut R) -> DMatrix<f64> {
    assert!(delta >= 0.0, "delta must be nonnegative");
    if delta == 0.0 || rows == 0 || cols == 0 {
        return DMatrix::zeros(rows, cols);
    }
    loop {
        let dm = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..=1.0));
        // singular values only; cannot fail to converge on finite bounded input in practice
        let norm = linalg::spectral_norm(&dm).unwrap_or(0.0);
        let u: f64 = rng.random();
        if norm > 0.0 && u > 0.0 {
            // the shrink factor keeps ‖ΔM‖ strictly below delta after rounding
            return dm * (u * delta * (1.0 - 1e-12) / norm);
        }
    }
}

/// `M + ΔM` with `‖ΔM‖₂` uniform on `(0, delta)`.
pub fn perturb<R: Rng + ?Sized>(m: &DMatrix<f64>, delta: f64, rng: &mut R) -> DMatrix<f64> {
    m + perturbation(m.nrows(), m.ncols(), delta, rng)
}

/// `M + (ΔM + ΔMᵀ)/2`; the symmetric part keeps `‖·‖₂ < delta`.
pub fn perturb_symmetric<R: Rng + ?Sized>(m: &DMatrix<f64>, delta: f64, rng: &mut R) -> DMatrix<f64> {
    let d = perturbation(m.nrows(), m.ncols(), delta, rng);
    m + (&d + d.transpose()) * 0.5
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub num_points: usize,
}

/// Least-squares line through `(ln x, ln y)`.
pub fn loglog_fit(pairs: &[(f64, f64)]) -> Result<LogLogFit> {
    if pairs.len() < 2 {
        return Err(Error::InsufficientData(pairs.len()));
    }
    if let Some(&(x, y)) = pairs.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(Error::InvalidArgument(format!("log-log fit needs positive finite data, got ({x}, {y})")));
    }
    let pts: Vec<(f64, f64)> = pairs.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData(1));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LogLogFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
        num_points: pts.len(),
    })
}

pub fn loglog_slope(pairs: &[(f64, f64)]) -> Result<f64> {
    Ok(loglog_fit(pairs)?.slope)
}
