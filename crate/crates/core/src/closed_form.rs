//! Unreduced ("tilde") constraint matrices and their explicit formulas.
//!
//! Without the SVD row reduction every level keeps `m` rows:
//!
//! ```text
//! σ̃ₖ₊₁ = σ̃ₖA + β̃ₖQ,   β̃ₖ₊₁ = −β̃ₖAᵀ,   ρ̃ₖ₊₁ = σ̃ₖB + β̃ₖN
//! ```
//!
//! The reduced blocks of the recursion are recovered by applying the
//! recorded selectors `Uᵏ⁻¹⋯U¹` on the left.

use nalgebra::DMatrix;

use crate::constraint_algorithm::ConstraintBlock;
use crate::error::{Error, Result};
use crate::lq_problem::LqProblem;

#[derive(Debug, Clone, PartialEq)]
pub struct TildeBlock {
    pub sigma_t: DMatrix<f64>,
    pub beta_t: DMatrix<f64>,
    pub rho_t: DMatrix<f64>,
    pub level: usize,
}

fn check_level(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("levels start at 1".into()));
    }
    Ok(())
}

/// Levels `1..=k_max` by the recurrence.
pub fn tilde_recurrence(problem: &LqProblem, k_max: usize) -> Result<Vec<TildeBlock>> {
    check_level(k_max)?;
    let mut out = Vec::with_capacity(k_max);
    out.push(TildeBlock {
        sigma_t: -problem.n_cross().transpose(),
        beta_t: problem.b().transpose(),
        rho_t: -problem.r(),
        level: 1,
    });
    for level in 2..=k_max {
        let prev = &out[level - 2];
        out.push(TildeBlock {
            sigma_t: &prev.sigma_t * problem.a() + &prev.beta_t * problem.q(),
            beta_t: -(&prev.beta_t * problem.a().transpose()),
            rho_t: &prev.sigma_t * problem.b() + &prev.beta_t * problem.n_cross(),
            level,
        });
    }
    Ok(out)
}

/// `[M⁰, M¹, …, Mᵏ]` by repeated multiplication.
fn powers(m: &DMatrix<f64>, k: usize) -> Vec<DMatrix<f64>> {
    let mut out = vec![DMatrix::identity(m.nrows(), m.ncols())];
    for i in 1..=k {
        let next = &out[i - 1] * m;
        out.push(next);
    }
    out
}

fn sign(i: usize) -> f64 {
    if i.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// `Σᵢ₌₀^{j−1} (−1)ⁱ (Aᵀ)ⁱ Q A^{j−1−i}`; zero for `j = 0`.
fn alternating_sum(a_pow: &[DMatrix<f64>], at_pow: &[DMatrix<f64>], q: &DMatrix<f64>, j: usize) -> DMatrix<f64> {
    let mut acc = DMatrix::zeros(q.nrows(), q.ncols());
    for i in 0..j {
        acc += (&at_pow[i] * q * &a_pow[j - 1 - i]) * sign(i);
    }
    acc
}

/// Level `k` from the explicit formulas. With `j = k − 1`:
///
/// ```text
/// β̃ₖ = (−1)ʲ Bᵀ(Aᵀ)ʲ
/// σ̃ₖ = −NᵀAʲ + Bᵀ Σᵢ₌₀^{j−1} (−1)ⁱ(Aᵀ)ⁱQA^{j−1−i}
/// ρ̃ₖ = −NᵀA^{j−1}B + (−1)^{j−1}Bᵀ(Aᵀ)^{j−1}N + Bᵀ[Σᵢ₌₀^{j−2} (−1)ⁱ(Aᵀ)ⁱQA^{j−2−i}]B
/// ```
pub fn tilde_closed_form(problem: &LqProblem, k: usize) -> Result<TildeBlock> {
    check_level(k)?;
    let (a, b, q, nc) = (problem.a(), problem.b(), problem.q(), problem.n_cross());
    if k == 1 {
        return Ok(TildeBlock {
            sigma_t: -nc.transpose(),
            beta_t: b.transpose(),
            rho_t: -problem.r(),
            level: 1,
        });
    }
    let j = k - 1;
    let a_pow = powers(a, j);
    let at_pow = powers(&a.transpose(), j);
    let bt = b.transpose();
    let beta_t = (&bt * &at_pow[j]) * sign(j);
    let sigma_t = -(nc.transpose() * &a_pow[j]) + &bt * alternating_sum(&a_pow, &at_pow, q, j);
    let rho_t = -(nc.transpose() * &a_pow[j - 1] * b)
        + (&bt * &at_pow[j - 1] * nc) * sign(j - 1)
        + &bt * alternating_sum(&a_pow, &at_pow, q, j - 1) * b;
    Ok(TildeBlock {
        sigma_t,
        beta_t,
        rho_t,
        level: k,
    })
}

/// Level-`k` reduced block `Uᵏ⁻¹⋯U¹ · (σ̃ₖ, β̃ₖ, ρ̃ₖ)` using selectors recorded
/// by the recursion (`u_selectors[0] = U¹`).
pub fn theorem2_blocks(problem: &LqProblem, u_selectors: &[DMatrix<f64>], k: usize) -> Result<ConstraintBlock> {
    check_level(k)?;
    if u_selectors.len() < k - 1 {
        return Err(Error::InvalidArgument(format!(
            "level {k} needs {} selectors, got {}",
            k - 1,
            u_selectors.len()
        )));
    }
    let m = problem.m();
    let mut transport = DMatrix::identity(m, m);
    for (index, sel) in u_selectors.iter().take(k - 1).enumerate() {
        if sel.ncols() != transport.nrows() {
            return Err(Error::Selector {
                index: index + 1,
                expected_cols: transport.nrows(),
                found_rows: sel.nrows(),
                found_cols: sel.ncols(),
            });
        }
        transport = sel * transport;
    }
    let t = tilde_closed_form(problem, k)?;
    Ok(ConstraintBlock::new(
        &transport * t.sigma_t,
        &transport * t.beta_t,
        &transport * t.rho_t,
        k,
    ))
}
