//! Constant-coefficient implicit systems `A·ẋ = B·x`: the subspace chain
//! `M_{k+1} = { x ∈ M_k : Bx ∈ A·M_k }`, Weierstrass-form generators and a
//! probabilistic pencil-regularity test.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, RankRule};
use crate::subspace_geometry::Subspace;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearDae {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl LinearDae {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 {
            return Err(Error::EmptyDimension("n"));
        }
        for (field, m) in [("A", &a), ("B", &b)] {
            if m.shape() != (n, n) {
                return Err(Error::Shape {
                    field: field.into(),
                    rows: n,
                    cols: n,
                    found_rows: m.nrows(),
                    found_cols: m.ncols(),
                });
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(field.into()));
            }
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }
}

#[derive(Debug, Clone)]
pub struct DaeChain {
    /// `M₁ ⊇ M₂ ⊇ … ⊇ M_r`, the last one stable.
    pub subspaces: Vec<Subspace>,
    pub steps: usize,
}

impl DaeChain {
    pub fn final_subspace(&self) -> &Subspace {
        self.subspaces.last().expect("chain has at least one subspace")
    }

    pub fn dims(&self) -> Vec<usize> {
        self.subspaces.iter().map(Subspace::dim).collect()
    }
}

/// Refines `M₀ = ℝⁿ` until `dim M_{r+1} = dim M_r`; `r` is the step count.
///
/// At each level `C` spans the left null space of `A·Y` (`Y` a basis of
/// `M_k`) and the new subspace is `{ Yc : C·B·Y·c = 0 }`.
pub fn dae_constraint_chain(dae: &LinearDae, tol: f64) -> Result<DaeChain> {
    linalg::check_tol(tol)?;
    let rule = RankRule::Mixed;
    let n = dae.n();
    let mut basis = DMatrix::<f64>::identity(n, n);
    let mut subspaces: Vec<Subspace> = Vec::new();
    loop {
        let next = if basis.ncols() == 0 {
            basis.clone()
        } else {
            let c = linalg::left_null_rows(&(dae.a() * &basis), tol, rule)?;
            if c.nrows() == 0 {
                basis.clone()
            } else {
                let h = c * dae.b() * &basis;
                &basis * linalg::null_space(&h, tol, rule)?
            }
        };
        if !subspaces.is_empty() && next.ncols() == basis.ncols() {
            let steps = subspaces.len();
            return Ok(DaeChain { subspaces, steps });
        }
        subspaces.push(Subspace::from_orthonormal_unchecked(next.clone()));
        basis = next;
    }
}

/// Canonical data `E·A·F = I ⊕ N`, `E·B·F = W ⊕ I` of a regular pencil.
#[derive(Debug, Clone, PartialEq)]
pub struct WeierstrassSpec {
    pub w: DMatrix<f64>,
    pub nnil: DMatrix<f64>,
    /// `N^ν ≠ 0`, `N^{ν+1} = 0`; zero for `N = 0`.
    pub nu: usize,
    pub e: DMatrix<f64>,
    pub f: DMatrix<f64>,
}

fn nilpotent_shift_blocks(sizes: &[usize]) -> DMatrix<f64> {
    let q = sizes.iter().sum();
    let mut n = DMatrix::zeros(q, q);
    let mut at = 0;
    for &s in sizes {
        for i in 0..s.saturating_sub(1) {
            n[(at + i, at + i + 1)] = 1.0;
        }
        at += s;
    }
    n
}

impl WeierstrassSpec {
    pub fn new(w: DMatrix<f64>, nnil: DMatrix<f64>, nu: usize, e: DMatrix<f64>, f: DMatrix<f64>) -> Result<Self> {
        let (d, q) = (w.nrows(), nnil.nrows());
        let total = d + q;
        if total == 0 {
            return Err(Error::EmptyDimension("d + q"));
        }
        for (field, m, rows) in [("W", &w, d), ("N", &nnil, q), ("E", &e, total), ("F", &f, total)] {
            if m.shape() != (rows, rows) {
                return Err(Error::Shape {
                    field: field.into(),
                    rows,
                    cols: rows,
                    found_rows: m.nrows(),
                    found_cols: m.ncols(),
                });
            }
        }
        if q > 0 {
            let scale = linalg::max_abs(&nnil).max(1.0);
            let mut power = DMatrix::identity(q, q);
            for _ in 0..nu {
                power = &power * &nnil;
            }
            let nonzero = linalg::max_abs(&power) > 1e-12 * scale;
            let next_zero = linalg::max_abs(&(&power * &nnil)) <= 1e-12 * scale.powi(nu as i32 + 1);
            if !(nonzero && next_zero) {
                return Err(Error::InvalidArgument(format!("N does not have nilpotency index {nu}")));
            }
        } else if nu != 0 {
            return Err(Error::InvalidArgument("an empty nilpotent block has index 0".into()));
        }
        Ok(Self { w, nnil, nu, e, f })
    }

    /// Random canonical data: `W` uniform on `[−1, 1]`, `N` a direct sum of
    /// shift blocks the largest of which has size `ν + 1`, and Haar-orthogonal
    /// `E`, `F`. Requires `ν + 1 ≤ q` unless `q = 0`.
    pub fn random<R: Rng + ?Sized>(d: usize, q: usize, nu: usize, rng: &mut R) -> Result<Self> {
        if q == 0 && nu > 0 || q > 0 && nu + 1 > q {
            return Err(Error::InvalidArgument(format!("index {nu} does not fit a {q}x{q} nilpotent block")));
        }
        let mut sizes = Vec::new();
        if q > 0 {
            sizes.push(nu + 1);
            let mut left = q - nu - 1;
            while left > 0 {
                let s = rng.random_range(1..=left.min(nu + 1));
                sizes.push(s);
                left -= s;
            }
        }
        let w = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..=1.0));
        let e = linalg::random_orthogonal(d + q, rng);
        let f = linalg::random_orthogonal(d + q, rng);
        Self::new(w, nilpotent_shift_blocks(&sizes), nu, e, f)
    }

    pub fn d(&self) -> usize {
        self.w.nrows()
    }

    pub fn q(&self) -> usize {
        self.nnil.nrows()
    }
}

fn checked_inverse(field: &str, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = linalg::singular_values(m)?;
    let (smax, smin) = (s[0], s[s.len() - 1]);
    if !(smin > 1e-12 * smax) {
        return Err(Error::Singular(field.into()));
    }
    m.clone().try_inverse().ok_or_else(|| Error::Singular(field.into()))
}

/// `A = E⁻¹(I ⊕ N)F⁻¹`, `B = E⁻¹(W ⊕ I)F⁻¹`.
pub fn build_weierstrass(spec: &WeierstrassSpec) -> Result<LinearDae> {
    let (d, q) = (spec.d(), spec.q());
    let total = d + q;
    let e_inv = checked_inverse("E", &spec.e)?;
    let f_inv = checked_inverse("F", &spec.f)?;
    let mut a_can = DMatrix::zeros(total, total);
    a_can.view_mut((0, 0), (d, d)).fill_with_identity();
    a_can.view_mut((d, d), (q, q)).copy_from(&spec.nnil);
    let mut b_can = DMatrix::zeros(total, total);
    b_can.view_mut((0, 0), (d, d)).copy_from(&spec.w);
    b_can.view_mut((d, d), (q, q)).fill_with_identity();
    LinearDae::new(&e_inv * a_can * &f_inv, &e_inv * b_can * &f_inv)
}

/// Evaluates `det(λA − B)` at `trials` random `λ` and declares the pencil
/// regular as soon as one value exceeds `tol` times Hadamard's bound for it.
pub fn pencil_is_regular<R: Rng + ?Sized>(dae: &LinearDae, trials: usize, tol: f64, rng: &mut R) -> Result<bool> {
    linalg::check_tol(tol)?;
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    for _ in 0..trials {
        let lambda: f64 = rng.random_range(-2.0..2.0);
        let m = dae.a() * lambda - dae.b();
        let log_bound: f64 = m.row_iter().map(|r| r.norm().ln()).sum();
        if !log_bound.is_finite() {
            continue;
        }
        let det = m.lu().determinant();
        if det != 0.0 && det.abs().ln() > tol.ln() + log_bound {
            return Ok(true);
        }
    }
    Ok(false)
}
