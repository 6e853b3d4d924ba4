//! Singular linear-quadratic optimal control problems
//!
//! ```text
//! ẋ = Ax + Bu,   L = ½xᵀQx + xᵀNu + ½uᵀRu
//! ```
//!
//! and the quantities Pontryagin's principle derives from them.

use nalgebra::{DMatrix, DVector};

use crate::constraint_algorithm::ConstraintBlock;
use crate::error::{Error, Result};
use crate::linalg::{self, RankRule};

pub const DEFAULT_SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LqProblem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    q: DMatrix<f64>,
    n_cross: DMatrix<f64>,
    r: DMatrix<f64>,
}

fn check_shape(field: &str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(Error::Shape {
            field: field.to_owned(),
            rows,
            cols,
            found_rows: m.nrows(),
            found_cols: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(field.to_owned()));
    }
    Ok(())
}

fn check_symmetric(field: &str, m: &DMatrix<f64>, symmetry_tol: f64) -> Result<()> {
    let deviation = linalg::max_abs(&(m - m.transpose()));
    if deviation > symmetry_tol * linalg::max_abs(m).max(1.0) {
        return Err(Error::Asymmetric {
            field: field.to_owned(),
            deviation,
        });
    }
    Ok(())
}

impl LqProblem {
    /// Validates with the default symmetry tolerance.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        q: DMatrix<f64>,
        n_cross: DMatrix<f64>,
        r: DMatrix<f64>,
    ) -> Result<Self> {
        Self::validate(a, b, q, n_cross, r, DEFAULT_SYMMETRY_TOL)
    }

    /// Checks shapes and the symmetry of `Q` and `R`. Nothing is symmetrized;
    /// a matrix whose asymmetry exceeds `symmetry_tol · max(1, ‖M‖_max)` is rejected.
    pub fn validate(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        q: DMatrix<f64>,
        n_cross: DMatrix<f64>,
        r: DMatrix<f64>,
        symmetry_tol: f64,
    ) -> Result<Self> {
        let n = a.nrows();
        let m = b.ncols();
        if n == 0 {
            return Err(Error::EmptyDimension("n"));
        }
        if m == 0 {
            return Err(Error::EmptyDimension("m"));
        }
        check_shape("A", &a, n, n)?;
        check_shape("B", &b, n, m)?;
        check_shape("Q", &q, n, n)?;
        check_shape("N", &n_cross, n, m)?;
        check_shape("R", &r, m, m)?;
        check_symmetric("Q", &q, symmetry_tol)?;
        check_symmetric("R", &r, symmetry_tol)?;
        Ok(Self { a, b, q, n_cross, r })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// Dimension `2n + m` of the total space of `(x, p, u)`.
    pub fn total_dim(&self) -> usize {
        2 * self.n() + self.m()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// The cross-cost matrix `N`.
    pub fn n_cross(&self) -> &DMatrix<f64> {
        &self.n_cross
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    fn check_triple(&self, s: &CostateTriple) -> Result<()> {
        let n = self.n();
        for (field, len, want) in [("x", s.x.len(), n), ("p", s.p.len(), n), ("u", s.u.len(), self.m())] {
            if len != want {
                return Err(Error::Shape {
                    field: field.to_owned(),
                    rows: want,
                    cols: 1,
                    found_rows: len,
                    found_cols: 1,
                });
            }
        }
        Ok(())
    }

    /// `H = pᵀAx + pᵀBu − ½xᵀQx − xᵀNu − ½uᵀRu`.
    pub fn hamiltonian(&self, s: &CostateTriple) -> Result<f64> {
        self.check_triple(s)?;
        let (x, p, u) = (&s.x, &s.p, &s.u);
        Ok(p.dot(&(&self.a * x)) + p.dot(&(&self.b * u))
            - 0.5 * x.dot(&(&self.q * x))
            - x.dot(&(&self.n_cross * u))
            - 0.5 * u.dot(&(&self.r * u)))
    }

    /// `(ẋ, ṗ) = (Ax + Bu, −Aᵀp + Qx + Nu)`.
    pub fn dynamics_rhs(&self, s: &CostateTriple) -> Result<(DVector<f64>, DVector<f64>)> {
        self.check_triple(s)?;
        let xdot = &self.a * &s.x + &self.b * &s.u;
        let pdot = -self.a.tr_mul(&s.p) + &self.q * &s.x + &self.n_cross * &s.u;
        Ok((xdot, pdot))
    }

    /// `φ⁽¹⁾ = −Nᵀx + Bᵀp − Ru`, i.e. `∂H/∂u`.
    pub fn primary_constraint(&self) -> ConstraintBlock {
        ConstraintBlock::new(-self.n_cross.transpose(), self.b.transpose(), -&self.r, 1)
    }

    /// Optimal feedback `u = R⁻¹(Bᵀp − Nᵀx)` when `R` is numerically regular,
    /// judged by `s_min(R) > rank_tol · s_max(R)`.
    pub fn regular_feedback(&self, rank_tol: f64) -> Result<Feedback> {
        linalg::check_tol(rank_tol)?;
        let rank = linalg::rank_with(&self.r, rank_tol, RankRule::Relative)?;
        if rank < self.m() {
            return Ok(Feedback::Singular { rank });
        }
        let lu = self.r.clone().lu();
        let sol = lu
            .solve(&linalg::hstack(&[&-self.n_cross.transpose(), &self.b.transpose()]))
            .ok_or_else(|| Error::Singular("R".into()))?;
        Ok(Feedback::Regular(sol))
    }
}

/// Outcome of [`LqProblem::regular_feedback`].
#[derive(Debug, Clone, PartialEq)]
pub enum Feedback {
    /// `m × 2n` gain `K` with `u = K·[x; p]`.
    Regular(DMatrix<f64>),
    /// `R` is rank deficient; the constraint algorithm has to run.
    Singular { rank: usize },
}

impl Feedback {
    pub fn is_singular(&self) -> bool {
        matches!(self, Feedback::Singular { .. })
    }
}

/// A point `(x, p, u)` of the total space.
#[derive(Debug, Clone, PartialEq)]
pub struct CostateTriple {
    pub x: DVector<f64>,
    pub p: DVector<f64>,
    pub u: DVector<f64>,
}

impl CostateTriple {
    pub fn new(x: DVector<f64>, p: DVector<f64>, u: DVector<f64>) -> Self {
        Self { x, p, u }
    }

    pub fn zeros(n: usize, m: usize) -> Self {
        Self::new(DVector::zeros(n), DVector::zeros(n), DVector::zeros(m))
    }

    /// Splits a stacked `[x; p; u]` vector.
    pub fn from_stacked(z: &DVector<f64>, n: usize, m: usize) -> Result<Self> {
        if z.len() != 2 * n + m {
            return Err(Error::Shape {
                field: "z".into(),
                rows: 2 * n + m,
                cols: 1,
                found_rows: z.len(),
                found_cols: 1,
            });
        }
        Ok(Self::new(
            z.rows(0, n).into_owned(),
            z.rows(n, n).into_owned(),
            z.rows(2 * n, m).into_owned(),
        ))
    }

    pub fn stacked(&self) -> DVector<f64> {
        let mut z = DVector::zeros(self.x.len() + self.p.len() + self.u.len());
        z.rows_mut(0, self.x.len()).copy_from(&self.x);
        z.rows_mut(self.x.len(), self.p.len()).copy_from(&self.p);
        z.rows_mut(self.x.len() + self.p.len(), self.u.len()).copy_from(&self.u);
        z
    }
}
