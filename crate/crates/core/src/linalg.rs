//! Dense helpers shared by the algorithm modules: sorted SVDs, numerical
//! rank, Householder-based orthogonal complements and null spaces.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the numerical-rank threshold scales with the largest singular value `s₁`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankRule {
    /// `tol · max(1, s₁)`: relative for large matrices, absolute for small ones.
    #[default]
    Mixed,
    /// `tol · s₁`.
    Relative,
    /// `tol`.
    Absolute,
}

impl RankRule {
    pub fn threshold(self, tol: f64, s1: f64) -> f64 {
        match self {
            RankRule::Mixed => tol * s1.max(1.0),
            RankRule::Relative => tol * s1,
            RankRule::Absolute => tol,
        }
    }
}

impl std::str::FromStr for RankRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mixed" => Ok(RankRule::Mixed),
            "relative" => Ok(RankRule::Relative),
            "absolute" => Ok(RankRule::Absolute),
            other => Err(Error::InvalidArgument(format!("unknown rank rule `{other}`"))),
        }
    }
}

pub(crate) fn check_tol(tol: f64) -> Result<()> {
    if tol.is_finite() && tol > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidTolerance(tol))
    }
}

fn to_faer(m: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Thin SVD with singular values sorted in descending order.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `rows × k` left singular vectors.
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    /// `k × cols` right singular vectors (transposed).
    pub v_t: DMatrix<f64>,
}

pub fn svd(m: &DMatrix<f64>) -> Result<Svd> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(Svd {
            u: DMatrix::zeros(rows, 0),
            singular_values: DVector::zeros(0),
            v_t: DMatrix::zeros(0, cols),
        });
    }
    let f = to_faer(m).thin_svd().map_err(|_| Error::SvdNoConvergence { rows, cols })?;
    let (u, v, s) = (f.U(), f.V(), f.S().column_vector());
    let k = s.nrows();
    let out = Svd {
        u: DMatrix::from_fn(rows, k, |i, j| u[(i, j)]),
        singular_values: DVector::from_fn(k, |i, _| s[i]),
        v_t: DMatrix::from_fn(k, cols, |i, j| v[(j, i)]),
    };
    let scale = out.singular_values.iter().copied().fold(0.0, f64::max);
    if !(reconstruction_error(m, &out) <= 1e3 * f64::EPSILON * scale * rows.max(cols) as f64) {
        return Err(Error::SvdNoConvergence { rows, cols });
    }
    Ok(out)
}

fn reconstruction_error(m: &DMatrix<f64>, f: &Svd) -> f64 {
    let mut us = f.u.clone();
    for (j, mut col) in us.column_iter_mut().enumerate() {
        col *= f.singular_values[j];
    }
    max_abs(&(us * &f.v_t - m))
}

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(DVector::zeros(0));
    }
    let s = to_faer(m)
        .singular_values()
        .map_err(|_| Error::SvdNoConvergence { rows, cols })?;
    Ok(DVector::from_vec(s))
}

pub fn spectral_norm(m: &DMatrix<f64>) -> Result<f64> {
    Ok(singular_values(m)?.iter().copied().fold(0.0, f64::max))
}

/// Number of singular values above the rule's threshold. Empty or zero → 0.
pub fn rank_with(m: &DMatrix<f64>, tol: f64, rule: RankRule) -> Result<usize> {
    check_tol(tol)?;
    let s = singular_values(m)?;
    Ok(count_above(&s, tol, rule))
}

pub(crate) fn count_above(s: &DVector<f64>, tol: f64, rule: RankRule) -> usize {
    let s1 = s.iter().copied().fold(0.0, f64::max);
    if s1 == 0.0 {
        return 0;
    }
    let thr = rule.threshold(tol, s1);
    s.iter().filter(|&&v| v > thr).count()
}

/// Householder reflections triangularizing the columns of `m`.
struct Reflections {
    dim: usize,
    // (v, tau) with H = I − tau·v·vᵀ acting on rows j.. of the ambient space
    reflectors: Vec<(DVector<f64>, f64)>,
}

impl Reflections {
    fn of_columns(m: &DMatrix<f64>) -> Self {
        let (dim, k) = m.shape();
        let mut work = m.clone();
        let mut reflectors = Vec::with_capacity(k.min(dim));
        for j in 0..k.min(dim) {
            let x = work.view((j, j), (dim - j, 1)).column(0).into_owned();
            let alpha = x.norm();
            if alpha == 0.0 {
                reflectors.push((DVector::zeros(dim - j), 0.0));
                continue;
            }
            let mut v = x;
            let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
            v[0] += sign * alpha;
            let vnorm2 = v.norm_squared();
            let tau = 2.0 / vnorm2;
            if j + 1 < k {
                let mut rest = work.view_mut((j, j + 1), (dim - j, k - j - 1));
                let w = rest.tr_mul(&v);
                rest.ger(-tau, &v, &w, 1.0);
            }
            reflectors.push((v, tau));
        }
        Self { dim, reflectors }
    }

    /// `Q · e` for the selected unit columns, `Q = H₀H₁⋯`.
    fn q_columns(&self, first: usize, count: usize) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, count);
        for c in 0..count {
            out[(first + c, c)] = 1.0;
        }
        for (j, (v, tau)) in self.reflectors.iter().enumerate().rev() {
            if *tau == 0.0 {
                continue;
            }
            let mut block = out.view_mut((j, 0), (self.dim - j, count));
            let w = block.tr_mul(v);
            block.ger(-*tau, v, &w, 1.0);
        }
        out
    }
}

/// Orthonormal basis (as columns) of the span of the columns of `m`,
/// assuming those columns are linearly independent.
pub fn orthonormal_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (dim, k) = m.shape();
    if k == 0 {
        return DMatrix::zeros(dim, 0);
    }
    Reflections::of_columns(m).q_columns(0, k.min(dim))
}

/// Orthonormal basis (as columns) of the orthogonal complement of the
/// column span of `m`, assuming independent columns.
///
/// Costs `O(k·dim·(dim − k))` for `k` columns, so it stays cheap when the
/// span is small or nearly the whole space.
pub fn orthogonal_complement(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (dim, k) = m.shape();
    if k == 0 {
        return DMatrix::identity(dim, dim);
    }
    if k >= dim {
        return DMatrix::zeros(dim, 0);
    }
    Reflections::of_columns(m).q_columns(k, dim - k)
}

/// Orthonormal basis (columns) of `{ v : m·v ≈ 0 }` at the given tolerance.
pub fn null_space(m: &DMatrix<f64>, tol: f64, rule: RankRule) -> Result<DMatrix<f64>> {
    check_tol(tol)?;
    let cols = m.ncols();
    if m.nrows() == 0 {
        return Ok(DMatrix::identity(cols, cols));
    }
    let f = svd(m)?;
    let r = count_above(&f.singular_values, tol, rule);
    let range = f.v_t.rows(0, r).transpose();
    Ok(orthogonal_complement(&range))
}

/// Rows spanning `{ y : yᵀ·m ≈ 0 }`, orthonormal.
pub fn left_null_rows(m: &DMatrix<f64>, tol: f64, rule: RankRule) -> Result<DMatrix<f64>> {
    Ok(null_space(&m.transpose(), tol, rule)?.transpose())
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of `R`'s diagonal folded into `Q`.
pub fn random_orthogonal<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn vstack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    if top.nrows() == 0 {
        return bottom.clone();
    }
    if bottom.nrows() == 0 {
        return top.clone();
    }
    assert_eq!(top.ncols(), bottom.ncols(), "vstack column mismatch");
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.rows_mut(0, top.nrows()).copy_from(top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    out
}

pub fn hstack(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = parts.first().map_or(0, |p| p.nrows());
    let cols = parts.iter().map(|p| p.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for p in parts {
        assert_eq!(p.nrows(), rows, "hstack row mismatch");
        out.columns_mut(at, p.ncols()).copy_from(*p);
        at += p.ncols();
    }
    out
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}
