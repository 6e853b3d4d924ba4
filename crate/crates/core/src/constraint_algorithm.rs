//! The recursive constraint algorithm over the total space `(x, p, u)`.
//!
//! Each level splits `ρ⁽ᵏ⁾` by an SVD into a part that fixes components of
//! `u̇` (partial feedback) and a left-null part whose rows become the next
//! constraint block. The accumulated rows, filtered down to independent ones,
//! form `Φ`; its kernel is the set of consistent initial conditions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, RankRule};
use crate::lq_problem::{CostateTriple, LqProblem};
use crate::subspace_geometry::Subspace;

/// One constraint level `φ⁽ᵏ⁾ = σx + βp + ρu`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintBlock {
    pub sigma: DMatrix<f64>,
    pub beta: DMatrix<f64>,
    pub rho: DMatrix<f64>,
    pub level: usize,
}

impl ConstraintBlock {
    pub fn new(sigma: DMatrix<f64>, beta: DMatrix<f64>, rho: DMatrix<f64>, level: usize) -> Self {
        assert!(
            sigma.nrows() == beta.nrows() && beta.nrows() == rho.nrows() && sigma.ncols() == beta.ncols(),
            "inconsistent constraint block"
        );
        Self { sigma, beta, rho, level }
    }

    /// Cuts a `rows × (2n+m)` matrix into its `σ | β | ρ` columns.
    pub fn from_stacked(rows: &DMatrix<f64>, n: usize, m: usize, level: usize) -> Self {
        assert_eq!(rows.ncols(), 2 * n + m, "row width must be 2n + m");
        Self::new(
            rows.columns(0, n).into_owned(),
            rows.columns(n, n).into_owned(),
            rows.columns(2 * n, m).into_owned(),
            level,
        )
    }

    pub fn rows(&self) -> usize {
        self.rho.nrows()
    }

    pub fn stacked(&self) -> DMatrix<f64> {
        linalg::hstack(&[&self.sigma, &self.beta, &self.rho])
    }

    pub fn evaluate(&self, s: &CostateTriple) -> DVector<f64> {
        &self.sigma * &s.x + &self.beta * &s.p + &self.rho * &s.u
    }

    /// Coefficients of `σẋ + βṗ` along the dynamics, as a row block over `(x, p, u)`:
    /// `[σA + βQ | −βAᵀ | σB + βN]`.
    pub fn drift(&self, problem: &LqProblem) -> DMatrix<f64> {
        row_drift(&self.sigma, &self.beta, problem)
    }
}

fn row_drift(sigma: &DMatrix<f64>, beta: &DMatrix<f64>, problem: &LqProblem) -> DMatrix<f64> {
    let sx = sigma * problem.a() + beta * problem.q();
    let sp = -(beta * problem.a().transpose());
    let su = sigma * problem.b() + beta * problem.n_cross();
    linalg::hstack(&[&sx, &sp, &su])
}

/// The accumulated constraint rows `Φ`, each `[σ | β | ρ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintMatrix {
    rows: DMatrix<f64>,
    n: usize,
    m: usize,
}

impl ConstraintMatrix {
    pub fn new(rows: DMatrix<f64>, n: usize, m: usize) -> Result<Self> {
        if rows.ncols() != 2 * n + m {
            return Err(Error::Shape {
                field: "phi".into(),
                rows: rows.nrows(),
                cols: 2 * n + m,
                found_rows: rows.nrows(),
                found_cols: rows.ncols(),
            });
        }
        Ok(Self { rows, n, m })
    }

    pub fn void(n: usize, m: usize) -> Self {
        Self {
            rows: DMatrix::zeros(0, 2 * n + m),
            n,
            m,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.rows
    }

    pub fn codim(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_void(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn ambient_dim(&self) -> usize {
        2 * self.n + self.m
    }

    /// Appends rows below the current ones (no filtering).
    pub fn append(&self, rows: &DMatrix<f64>) -> Self {
        Self {
            rows: linalg::vstack(&self.rows, rows),
            n: self.n,
            m: self.m,
        }
    }

    fn select(&self, keep: &[usize]) -> Self {
        Self {
            rows: self.rows.select_rows(keep),
            n: self.n,
            m: self.m,
        }
    }
}

/// SVD of one `ρ⁽ᵏ⁾` block, split at its numerical rank.
#[derive(Debug, Clone)]
pub struct SvdSplit {
    /// Orthogonal `l × l` factor `U⁽ᵏ⁾`.
    pub u_full: DMatrix<f64>,
    /// Descending; `min(l, m)` of them.
    pub singular_values: DVector<f64>,
    pub rank: usize,
    /// First `r` rows of `U⁽ᵏ⁾ᵀ`.
    pub u_top: DMatrix<f64>,
    /// Last `l − r` rows of `U⁽ᵏ⁾ᵀ`; spans the numerical left null space of `ρ`.
    pub u_bottom: DMatrix<f64>,
    /// First `r` rows of `V⁽ᵏ⁾ᵀ`.
    pub vt_top: DMatrix<f64>,
    pub threshold: f64,
}

/// Numerical rank with the default [`RankRule`].
pub fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> Result<usize> {
    linalg::rank_with(m, tol, RankRule::default())
}

pub fn svd_split(rho: &DMatrix<f64>, tol: f64) -> Result<SvdSplit> {
    svd_split_with(rho, tol, RankRule::default())
}

pub fn svd_split_with(rho: &DMatrix<f64>, tol: f64, rule: RankRule) -> Result<SvdSplit> {
    linalg::check_tol(tol)?;
    let l = rho.nrows();
    if l == 0 {
        return Err(Error::InvalidArgument("cannot split an empty block".into()));
    }
    let f = linalg::svd(rho)?;
    let s1 = f.singular_values.iter().copied().fold(0.0, f64::max);
    let threshold = rule.threshold(tol, s1);
    let rank = linalg::count_above(&f.singular_values, tol, rule);
    let top_cols = f.u.columns(0, rank).into_owned();
    let bottom_cols = linalg::orthogonal_complement(&top_cols);
    Ok(SvdSplit {
        u_full: linalg::hstack(&[&top_cols, &bottom_cols]),
        singular_values: f.singular_values,
        rank,
        u_top: top_cols.transpose(),
        u_bottom: bottom_cols.transpose(),
        vt_top: f.v_t.rows(0, rank).into_owned(),
        threshold,
    })
}

/// One step of the plain recursion: the level `k + 1` block
/// `u_bottom · [σA + βQ | −βAᵀ | σB + βN]`.
pub fn step(block: &ConstraintBlock, split: &SvdSplit, problem: &LqProblem) -> Result<ConstraintBlock> {
    if split.rank == block.rows() {
        return Err(Error::FullRankBlock {
            level: block.level,
            rank: split.rank,
        });
    }
    if split.u_bottom.ncols() != block.rows() {
        return Err(Error::Selector {
            index: block.level,
            expected_cols: block.rows(),
            found_rows: split.u_bottom.nrows(),
            found_cols: split.u_bottom.ncols(),
        });
    }
    let next = &split.u_bottom * block.drift(problem);
    Ok(ConstraintBlock::from_stacked(&next, problem.n(), problem.m(), block.level + 1))
}

/// Indices of the rows kept by the greedy top-down independence filter.
///
/// A row is kept when its component orthogonal to the rows already kept
/// (two passes of classical Gram–Schmidt) exceeds the rank threshold of the
/// whole input. This matches the SVD-rank formulation of
/// [`independent_row_indices_reference`] at a fraction of its cost.
pub fn independent_row_indices(phi: &DMatrix<f64>, tol: f64, rule: RankRule) -> Result<Vec<usize>> {
    linalg::check_tol(tol)?;
    if phi.nrows() == 0 || phi.ncols() == 0 {
        return Ok(Vec::new());
    }
    let s1 = linalg::spectral_norm(phi)?;
    if s1 == 0.0 {
        return Ok(Vec::new());
    }
    let threshold = rule.threshold(tol, s1);
    let width = phi.ncols();
    let mut basis = DMatrix::<f64>::zeros(width, width.min(phi.nrows()));
    let mut kept = Vec::new();
    for i in 0..phi.nrows() {
        let mut w = phi.row(i).transpose();
        let q = basis.columns(0, kept.len());
        for _ in 0..2 {
            let coeffs = q.tr_mul(&w);
            w -= q * coeffs;
        }
        let gamma = w.norm();
        if gamma > threshold {
            basis.set_column(kept.len(), &(w / gamma));
            kept.push(i);
            if kept.len() == width {
                break;
            }
        }
    }
    Ok(kept)
}

/// Literal greedy filter: keep row `i` iff appending it raises the numerical
/// rank of the kept set. Quadratic in SVDs; kept as a reference.
pub fn independent_row_indices_reference(
    phi: &DMatrix<f64>,
    tol: f64,
    rule: RankRule,
) -> Result<Vec<usize>> {
    linalg::check_tol(tol)?;
    let mut kept: Vec<usize> = Vec::new();
    let mut rank = 0;
    for i in 0..phi.nrows() {
        let mut candidate = kept.clone();
        candidate.push(i);
        let r = linalg::rank_with(&phi.select_rows(&candidate), tol, rule)?;
        if r > rank {
            kept = candidate;
            rank = r;
        }
    }
    Ok(kept)
}

/// Keeps the numerically independent rows of `Φ`, preserving their order.
pub fn independent_rows(phi: &ConstraintMatrix, tol: f64) -> Result<ConstraintMatrix> {
    independent_rows_with(phi, tol, RankRule::default())
}

pub fn independent_rows_with(phi: &ConstraintMatrix, tol: f64, rule: RankRule) -> Result<ConstraintMatrix> {
    let keep = independent_row_indices(phi.matrix(), tol, rule)?;
    Ok(phi.select(&keep))
}

/// How the next block is propagated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Recursion {
    /// Tracks the control-rate components fixed at earlier levels and
    /// substitutes them into later ones, so a block whose `ρ` only acts on
    /// already-determined directions still yields its constraints.
    #[default]
    Coupled,
    /// The bare recursion `u_bottom · [σA + βQ | −βAᵀ | σB + βN]`.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Options {
    pub tol: f64,
    pub rank_rule: RankRule,
    pub recursion: Recursion,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            rank_rule: RankRule::default(),
            recursion: Recursion::default(),
        }
    }
}

impl Options {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HaltReason {
    /// `ρ` became regular: every remaining control rate is determined.
    Feedback,
    /// The rank of `Φ` stopped increasing.
    Stagnation,
    /// The last block was numerically zero.
    Exhausted,
}

impl std::fmt::Display for HaltReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HaltReason::Feedback => "feedback",
            HaltReason::Stagnation => "stagnation",
            HaltReason::Exhausted => "exhausted",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankRecord {
    pub level: usize,
    pub rho_rows: usize,
    pub rho_rank: usize,
    /// Rows of `Φ` when this level's `ρ` was examined.
    pub phi_rank: usize,
    pub rho_singular_values: Vec<f64>,
    pub rank_threshold: f64,
}

impl RankRecord {
    /// Distance in decades between the threshold and the nearest singular
    /// value; small values flag a tolerance-sensitive rank decision.
    pub fn rank_margin(&self) -> f64 {
        self.rho_singular_values
            .iter()
            .map(|s| (s.max(f64::MIN_POSITIVE) / self.rank_threshold.max(f64::MIN_POSITIVE)).log10().abs())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Control-rate equations fixed at one level:
/// `Σ_r · V_rᵀ u̇ = −(σ_d x + β_d p + ρ_d u)`.
#[derive(Debug, Clone)]
pub struct PartialFeedback {
    pub level: usize,
    pub u_top: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub vt_top: DMatrix<f64>,
    pub sigma_drift: DMatrix<f64>,
    pub beta_drift: DMatrix<f64>,
    pub rho_drift: DMatrix<f64>,
}

impl PartialFeedback {
    /// `(V_rᵀ, G)` with `V_rᵀ u̇ = G·[x; p; u]`.
    pub fn rate_rows(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let drift = linalg::hstack(&[&self.sigma_drift, &self.beta_drift, &self.rho_drift]);
        let mut g = -drift;
        for (i, mut row) in g.row_iter_mut().enumerate() {
            row /= self.singular_values[i];
        }
        (self.vt_top.clone(), g)
    }
}

#[derive(Debug, Clone)]
pub struct AlgorithmResult {
    pub phi: ConstraintMatrix,
    pub steps: usize,
    pub codim: usize,
    pub halt_reason: HaltReason,
    pub rank_history: Vec<RankRecord>,
    pub partial_feedback: Vec<PartialFeedback>,
    /// Blocks in level order, starting with the primary constraint.
    pub blocks: Vec<ConstraintBlock>,
    /// The `u_bottom` factor used to produce each block after the first.
    pub selectors: Vec<DMatrix<f64>>,
    pub options: Options,
}

impl AlgorithmResult {
    /// Orthonormal basis of `ker Φ`.
    pub fn final_submanifold(&self) -> Subspace {
        final_submanifold(self)
    }

    /// Orthonormal basis of the row space of `Φ`.
    pub fn constraint_space(&self) -> Subspace {
        Subspace::from_orthonormal_unchecked(linalg::orthonormal_columns(&self.phi.matrix().transpose()))
    }

    /// `m × (2n+m)` gain `K` with `u̇ = K·[x; p; u]` collecting every recorded
    /// partial feedback; directions left undetermined get zero rate.
    pub fn control_rate_gain(&self) -> Result<DMatrix<f64>> {
        let width = self.phi.ambient_dim();
        let m = self.phi.m();
        let mut dirs = DMatrix::zeros(0, m);
        let mut rates = DMatrix::zeros(0, width);
        for fb in &self.partial_feedback {
            let (d, g) = fb.rate_rows();
            dirs = linalg::vstack(&dirs, &d);
            rates = linalg::vstack(&rates, &g);
        }
        if dirs.nrows() == 0 {
            return Ok(DMatrix::zeros(m, width));
        }
        let f = linalg::svd(&dirs)?;
        let r = linalg::count_above(&f.singular_values, 1e-12, RankRule::Relative);
        let mut pinv = DMatrix::zeros(m, dirs.nrows());
        for i in 0..r {
            pinv += f.v_t.row(i).transpose() * f.u.column(i).transpose() / f.singular_values[i];
        }
        Ok(pinv * rates)
    }
}

/// Kernel of `Φ`; the whole space when `Φ` is void.
pub fn final_submanifold(result: &AlgorithmResult) -> Subspace {
    Subspace::from_orthonormal_unchecked(linalg::orthogonal_complement(&result.phi.matrix().transpose()))
}

/// Runs with the default rank rule and recursion.
pub fn run(problem: &LqProblem, tol: f64) -> Result<AlgorithmResult> {
    run_with(problem, &Options::with_tol(tol))
}

pub fn run_with(problem: &LqProblem, options: &Options) -> Result<AlgorithmResult> {
    let Options { tol, rank_rule, recursion } = *options;
    linalg::check_tol(tol)?;
    let (n, m) = (problem.n(), problem.m());
    let width = problem.total_dim();

    let mut block = problem.primary_constraint();
    let mut phi = independent_rows_with(&ConstraintMatrix::new(block.stacked(), n, m)?, tol, rank_rule)?;
    let mut blocks = vec![block.clone()];
    let mut selectors = Vec::new();
    let mut history = Vec::new();
    let mut feedback = Vec::new();
    // Control-rate directions fixed so far (orthonormal rows) and their
    // rates: fixed_dirs · u̇ = fixed_rates · [x; p; u].
    let mut fixed_dirs = DMatrix::<f64>::zeros(0, m);
    let mut fixed_rates = DMatrix::<f64>::zeros(0, width);

    let mut p = 0;
    let mut k = 1;
    let halt_reason = loop {
        let (rho_eff, drift) = match recursion {
            Recursion::Literal => (block.rho.clone(), block.drift(problem)),
            Recursion::Coupled => {
                let proj = DMatrix::identity(m, m) - fixed_dirs.tr_mul(&fixed_dirs);
                let coupling = &block.rho * fixed_dirs.transpose() * &fixed_rates;
                (&block.rho * proj, block.drift(problem) + coupling)
            }
        };
        let split = svd_split_with(&rho_eff, tol, rank_rule)?;
        history.push(RankRecord {
            level: k,
            rho_rows: block.rows(),
            rho_rank: split.rank,
            phi_rank: phi.codim(),
            rho_singular_values: split.singular_values.iter().copied().collect(),
            rank_threshold: split.threshold,
        });
        if split.rank > 0 {
            let top = &split.u_top * &drift;
            let fb = PartialFeedback {
                level: k,
                u_top: split.u_top.clone(),
                singular_values: split.singular_values.rows(0, split.rank).into_owned(),
                vt_top: split.vt_top.clone(),
                sigma_drift: top.columns(0, n).into_owned(),
                beta_drift: top.columns(n, n).into_owned(),
                rho_drift: top.columns(2 * n, m).into_owned(),
            };
            let (d, g) = fb.rate_rows();
            fixed_dirs = linalg::vstack(&fixed_dirs, &d);
            fixed_rates = linalg::vstack(&fixed_rates, &g);
            feedback.push(fb);
        }
        if split.rank == block.rows() {
            break HaltReason::Feedback;
        }
        if phi.codim() <= p {
            let empty = phi.is_void() || linalg::rank_with(&block.stacked(), tol, rank_rule)? == 0;
            break if empty { HaltReason::Exhausted } else { HaltReason::Stagnation };
        }
        k += 1;
        p = phi.codim();
        let next = &split.u_bottom * drift;
        block = ConstraintBlock::from_stacked(&next, n, m, k);
        phi = independent_rows_with(&phi.append(&next), tol, rank_rule)?;
        selectors.push(split.u_bottom);
        blocks.push(block.clone());
    };
    if phi.codim() <= p {
        k -= 1;
    }
    let steps = k.max(1);
    let codim = phi.codim();
    Ok(AlgorithmResult {
        phi,
        steps,
        codim,
        halt_reason,
        rank_history: history,
        partial_feedback: feedback,
        blocks,
        selectors,
        options: *options,
    })
}
