//! Generators, oracle bridges and property checks shared by the integration
//! tests and the acceptance harness.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use singular_lq::closed_form::{theorem2_blocks, tilde_closed_form, tilde_recurrence};
use singular_lq::constraint_algorithm::{
    independent_row_indices, independent_row_indices_reference, svd_split, ConstraintBlock,
};
use singular_lq::linalg::{self, random_orthogonal};
use singular_lq::subspace_geometry::{max_principal_angle, perturbation};
use singular_lq::{run_with, LqProblem, Options, RankRule, Recursion, Subspace};
use singular_lq_oracle::{lq_chain, LqChain, QMatrix, Rat};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn to_q(m: &DMatrix<f64>) -> QMatrix {
    QMatrix::from_fn(m.nrows(), m.ncols(), |i, j| Rat::from_float(m[(i, j)]).expect("finite"))
}

pub fn from_q(q: &QMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(q.rows(), q.cols(), &q.to_f64())
}

pub fn half_integer<R: Rng>(rng: &mut R) -> f64 {
    f64::from(rng.random_range(-2i32..=2)) / 2.0
}

pub fn half_integer_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| half_integer(rng))
}

pub fn half_integer_symmetric<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = half_integer(rng);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Symmetric `R` that is singular in most draws: either left random, or
/// with a random set of rows/columns zeroed, or with one row/column
/// duplicated, or zero.
pub fn singular_symmetric<R: Rng>(m: usize, rng: &mut R) -> DMatrix<f64> {
    let mut r = half_integer_symmetric(m, rng);
    match rng.random_range(0..4) {
        0 => {}
        1 => {
            let forced = rng.random_range(0..m);
            for i in 0..m {
                if i == forced || rng.random_bool(0.5) {
                    r.row_mut(i).fill(0.0);
                    r.column_mut(i).fill(0.0);
                }
            }
        }
        2 if m >= 2 => {
            let i = rng.random_range(0..m);
            let j = (i + rng.random_range(1..m)) % m;
            let row = r.row(i).into_owned();
            r.set_row(j, &row);
            let col = r.column(i).into_owned();
            r.set_column(j, &col);
        }
        _ => r.fill(0.0),
    }
    r
}

/// Problem with `n, m ≤ 4` and entries in `{−1, −½, 0, ½, 1}`.
pub fn rational_problem<R: Rng>(rng: &mut R) -> LqProblem {
    let n = rng.random_range(1..=4);
    let m = rng.random_range(1..=4);
    LqProblem::new(
        half_integer_matrix(n, n, rng),
        half_integer_matrix(n, m, rng),
        half_integer_symmetric(n, rng),
        half_integer_matrix(n, m, rng),
        singular_symmetric(m, rng),
    )
    .expect("valid by construction")
}

/// Dense problem with uniform entries and an `R` of random deficient rank.
pub fn float_singular_problem<R: Rng>(rng: &mut R) -> LqProblem {
    let n = rng.random_range(1..=5);
    let m = rng.random_range(1..=4);
    let uni = |r: usize, c: usize, rng: &mut R| DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..=1.0));
    let q = uni(n, n, rng);
    let w = random_orthogonal(m, rng);
    let rank = rng.random_range(0..m);
    let d = DMatrix::from_fn(m, m, |i, j| if i == j && i < rank { rng.random_range(0.5..2.0) } else { 0.0 });
    let r = w.transpose() * d * &w;
    LqProblem::new(
        uni(n, n, rng),
        uni(n, m, rng),
        (&q + q.transpose()) * 0.5,
        uni(n, m, rng),
        (&r + r.transpose()) * 0.5,
    )
    .expect("valid by construction")
}

pub fn oracle_chain(p: &LqProblem) -> LqChain {
    lq_chain(&to_q(p.a()), &to_q(p.b()), &to_q(p.q()), &to_q(p.n_cross()), &to_q(p.r()))
}

pub fn row_space(rows: &DMatrix<f64>) -> Subspace {
    Subspace::from_span(&rows.transpose(), 1e-12).expect("svd converges")
}

#[derive(Debug)]
pub struct OracleComparison {
    pub steps: usize,
    pub oracle_steps: usize,
    pub codim: usize,
    pub oracle_codim: usize,
    pub angle: Option<f64>,
    /// Smallest distance (decades) between a rank threshold and a singular value.
    pub margin: f64,
}

impl OracleComparison {
    pub fn agrees(&self, angle_tol: f64) -> bool {
        self.steps == self.oracle_steps && self.codim == self.oracle_codim && self.angle.is_some_and(|a| a < angle_tol)
    }
}

pub fn compare_with_oracle(p: &LqProblem, options: &Options) -> OracleComparison {
    let res = run_with(p, options).expect("run succeeds");
    let chain = oracle_chain(p);
    let exact_rows = from_q(&chain.constraints);
    let angle = if res.codim == exact_rows.nrows() {
        let ours = res.constraint_space();
        Some(max_principal_angle(&ours, &row_space(&exact_rows)).expect("same dims"))
    } else {
        None
    };
    OracleComparison {
        steps: res.steps,
        oracle_steps: chain.steps,
        codim: res.codim,
        oracle_codim: exact_rows.nrows(),
        angle,
        margin: res.rank_history.iter().map(|r| r.rank_margin()).fold(f64::INFINITY, f64::min),
    }
}

// ---- property checks: each returns the number of cases checked ----

/// Left-null residual, orthogonality and ordering of `svd_split`.
pub fn check_svd_split(cases: usize, seed: u64) -> Result<usize, String> {
    let mut rng = rng(seed);
    for case in 0..cases {
        let l = rng.random_range(1..=7);
        let m = rng.random_range(1..=7);
        let r0 = rng.random_range(0..=l.min(m));
        let scale = 10f64.powf(rng.random_range(-3.0..3.0));
        let x = DMatrix::from_fn(l, r0, |_, _| rng.random_range(-1.0..=1.0));
        let y = DMatrix::from_fn(r0, m, |_, _| rng.random_range(-1.0..=1.0));
        let rho = x * y * scale;
        let tol = 10f64.powf(-rng.random_range(6.0..12.0));
        let s = svd_split(&rho, tol).map_err(|e| e.to_string())?;
        let orth = linalg::max_abs(&(s.u_full.tr_mul(&s.u_full) - DMatrix::identity(l, l)));
        if orth > 1e-12 * l as f64 {
            return Err(format!("case {case}: U not orthogonal ({orth:e})"));
        }
        if s.singular_values.as_slice().windows(2).any(|w| w[0] < w[1]) {
            return Err(format!("case {case}: singular values not sorted"));
        }
        if s.singular_values.iter().filter(|&&v| v > s.threshold).count() != s.rank {
            return Err(format!("case {case}: rank disagrees with threshold"));
        }
        let s1 = s.singular_values.iter().copied().fold(0.0, f64::max);
        let resid = linalg::max_abs(&(&s.u_bottom * &rho));
        if resid > s.threshold + 1e-14 * s1 {
            return Err(format!("case {case}: left-null residual {resid:e} above {:e}", s.threshold));
        }
    }
    Ok(cases)
}

fn rational_stack<R: Rng>(rng: &mut R) -> DMatrix<f64> {
    let rows = rng.random_range(1..=8);
    let cols = rng.random_range(1..=6);
    let mut m = half_integer_matrix(rows, cols, rng);
    for i in 1..rows {
        if rng.random_bool(0.4) {
            let j = rng.random_range(0..i);
            let k = rng.random_range(0..i);
            let c = half_integer(rng);
            let combo = m.row(j) * 2.0 + m.row(k) * c;
            m.set_row(i, &combo);
        }
    }
    m
}

/// `independent_rows` keeps exactly rank-many rows spanning the input's row
/// space (checked over the rationals) and agrees with the literal filter.
pub fn check_independent_rows(cases: usize, seed: u64) -> Result<usize, String> {
    let mut rng = rng(seed);
    for case in 0..cases {
        let m = rational_stack(&mut rng);
        let kept = independent_row_indices(&m, 1e-10, RankRule::Mixed).map_err(|e| e.to_string())?;
        let exact = to_q(&m);
        if kept.len() != exact.rank() {
            return Err(format!("case {case}: kept {} rows, exact rank {}", kept.len(), exact.rank()));
        }
        if !exact.select_rows(&kept).same_row_space(&exact) {
            return Err(format!("case {case}: kept rows span a different space"));
        }
        let reference = independent_row_indices_reference(&m, 1e-10, RankRule::Mixed).map_err(|e| e.to_string())?;
        if reference != kept {
            return Err(format!("case {case}: reference filter kept {reference:?}, fast filter {kept:?}"));
        }
    }
    Ok(cases)
}

/// Worst residual of `d/dt Φ` along the dynamics with `u̇` from the recorded
/// partial feedback, measured off the row space of `Φ`, relative to the size
/// of the derivative rows.
pub fn stability_residual(p: &LqProblem, options: &Options) -> Result<f64, String> {
    let res = run_with(p, options).map_err(|e| e.to_string())?;
    if res.codim == 0 {
        return Ok(0.0);
    }
    let gain = res.control_rate_gain().map_err(|e| e.to_string())?;
    let basis = res.constraint_space();
    let q = basis.basis();
    let mut worst: f64 = 0.0;
    for i in 0..res.codim {
        let row = res.phi.matrix().rows(i, 1).into_owned();
        let blk = ConstraintBlock::from_stacked(&row, p.n(), p.m(), 1);
        let deriv = blk.drift(p) + &blk.rho * &gain;
        let off = &deriv - (&deriv * q) * q.transpose();
        worst = worst.max(off.norm() / deriv.norm().max(1.0));
    }
    Ok(worst)
}

pub fn check_constraint_stability(cases: usize, seed: u64) -> Result<usize, String> {
    let mut rng = rng(seed);
    let options = Options {
        tol: 1e-9,
        ..Options::default()
    };
    for case in 0..cases {
        let p = if case % 2 == 0 {
            rational_problem(&mut rng)
        } else {
            float_singular_problem(&mut rng)
        };
        let worst = stability_residual(&p, &options)?;
        if worst > 1e-8 {
            return Err(format!("case {case}: derivative leaves the row space by {worst:e}"));
        }
    }
    Ok(cases)
}

fn random_basis<R: Rng>(dim: usize, d: usize, rng: &mut R) -> DMatrix<f64> {
    random_orthogonal(dim, rng).columns(0, d).into_owned()
}

/// Symmetry, basis invariance, range and orthogonal-complement axioms.
pub fn check_principal_angles(cases: usize, seed: u64) -> Result<usize, String> {
    use std::f64::consts::FRAC_PI_2;
    let mut rng = rng(seed);
    for case in 0..cases {
        let dim = rng.random_range(2..=9);
        let d = rng.random_range(1..dim);
        let x = Subspace::from_orthonormal(random_basis(dim, d, &mut rng)).map_err(|e| e.to_string())?;
        let y = Subspace::from_orthonormal(random_basis(dim, d, &mut rng)).map_err(|e| e.to_string())?;
        let xy = max_principal_angle(&x, &y).map_err(|e| e.to_string())?;
        let yx = max_principal_angle(&y, &x).map_err(|e| e.to_string())?;
        if (xy - yx).abs() > 1e-10 {
            return Err(format!("case {case}: asymmetric ({xy} vs {yx})"));
        }
        if !(0.0..=FRAC_PI_2).contains(&xy) {
            return Err(format!("case {case}: angle {xy} out of range"));
        }
        let w = random_orthogonal(d, &mut rng);
        let x2 = Subspace::from_orthonormal(x.basis() * w).map_err(|e| e.to_string())?;
        let moved = max_principal_angle(&x2, &y).map_err(|e| e.to_string())?;
        if (moved - xy).abs() > 1e-10 {
            return Err(format!("case {case}: basis change moved the angle ({xy} vs {moved})"));
        }
        let self_angle = max_principal_angle(&x, &x2).map_err(|e| e.to_string())?;
        if self_angle > 1e-12 {
            return Err(format!("case {case}: angle to itself {self_angle:e}"));
        }
        if 2 * d <= dim {
            let perp = x.orthogonal_complement();
            let part = Subspace::from_orthonormal(perp.basis().columns(0, d).into_owned()).map_err(|e| e.to_string())?;
            let right = max_principal_angle(&x, &part).map_err(|e| e.to_string())?;
            if (right - FRAC_PI_2).abs() > 1e-12 {
                return Err(format!("case {case}: complement at {right}"));
            }
        }
    }
    Ok(cases)
}

/// `0 < ‖ΔM‖₂ < δ` with the norm taken from nalgebra's own SVD.
pub fn check_perturbation_bound(draws: usize, seed: u64) -> Result<usize, String> {
    let mut rng = rng(seed);
    for case in 0..draws {
        let rows = rng.random_range(1..=8);
        let cols = rng.random_range(1..=8);
        let delta = 10f64.powf(rng.random_range(-16.0..=0.0));
        let dm = perturbation(rows, cols, delta, &mut rng);
        let norm = dm.clone().singular_values().max();
        if !(norm > 0.0 && norm < delta) {
            return Err(format!("draw {case}: norm {norm:e} for delta {delta:e}"));
        }
    }
    Ok(draws)
}

pub fn literal(tol: f64) -> Options {
    Options {
        tol,
        recursion: Recursion::Literal,
        ..Options::default()
    }
}

fn block_gap(a: [&DMatrix<f64>; 3], b: [&DMatrix<f64>; 3]) -> f64 {
    let scale = a.iter().map(|m| linalg::max_abs(m)).fold(1.0, f64::max);
    a.iter().zip(b).map(|(x, y)| linalg::max_abs(&(*x - y))).fold(0.0, f64::max) / scale
}

/// Largest relative gap between the tilde recurrence and the explicit
/// formulas over levels `1..=k_max`.
pub fn closed_form_gap(p: &LqProblem, k_max: usize) -> Result<f64, String> {
    let rec = tilde_recurrence(p, k_max).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for t in &rec {
        let c = tilde_closed_form(p, t.level).map_err(|e| e.to_string())?;
        worst = worst.max(block_gap([&t.sigma_t, &t.beta_t, &t.rho_t], [&c.sigma_t, &c.beta_t, &c.rho_t]));
    }
    Ok(worst)
}

/// Largest relative gap between the blocks of a literal run and the
/// transported explicit formulas.
pub fn transported_gap(p: &LqProblem, tol: f64) -> Result<f64, String> {
    let res = run_with(p, &literal(tol)).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for block in &res.blocks {
        let t = theorem2_blocks(p, &res.selectors, block.level).map_err(|e| e.to_string())?;
        worst = worst.max(block_gap([&block.sigma, &block.beta, &block.rho], [&t.sigma, &t.beta, &t.rho]));
    }
    Ok(worst)
}

/// Random float problems with a rank-deficient `R` for the closed-form checks.
pub fn check_closed_forms(cases: usize, seed: u64) -> Result<usize, String> {
    let mut rng = rng(seed);
    for case in 0..cases {
        let p = float_singular_problem(&mut rng);
        let gap = closed_form_gap(&p, 8)?;
        if gap > 1e-12 {
            return Err(format!("case {case}: recurrence vs explicit gap {gap:e}"));
        }
        let gap = transported_gap(&p, 1e-9)?;
        if gap > 1e-10 {
            return Err(format!("case {case}: transported gap {gap:e}"));
        }
    }
    Ok(cases)
}
