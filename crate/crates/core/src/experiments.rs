//! The three problem families used to probe stability, and the sweep driver
//! that perturbs them and measures how far the consistent subspace moves.

use std::fmt;
use std::io::{self, Write};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::constraint_algorithm::{run_with, AlgorithmResult, Options};
use crate::error::{Error, Result};
use crate::linalg;
use crate::lq_problem::LqProblem;
use crate::subspace_geometry::{self as geo, perturb, perturb_symmetric, perturbation, LogLogFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    /// Generic small matrices with a rank-one `R`; index 3.
    SmallIndexSmall,
    /// `A = Q = I`, `B = (1,…,1)ᵀ`, `N = 0`, `R = 0`; index 3 for any `n`.
    SmallIndexLarge,
    /// Nilpotent shift `A`, `Q = A + Aᵀ`, `N = B`, `R = 0`; index `n`.
    LargeIndex,
}

impl Family {
    pub fn number(self) -> u8 {
        match self {
            Family::SmallIndexSmall => 1,
            Family::SmallIndexLarge => 2,
            Family::LargeIndex => 3,
        }
    }

    pub fn from_number(k: u8) -> Result<Self> {
        match k {
            1 => Ok(Family::SmallIndexSmall),
            2 => Ok(Family::SmallIndexLarge),
            3 => Ok(Family::LargeIndex),
            _ => Err(Error::InvalidArgument(format!("unknown family {k}; expected 1, 2 or 3"))),
        }
    }

    pub fn min_size(self) -> usize {
        match self {
            Family::SmallIndexLarge => 1,
            _ => 2,
        }
    }

    /// Decades `1e-16 … 1e-1` (families 1, 2) or `1e-16 … 1e-5` (family 3).
    pub fn default_deltas(self) -> Vec<f64> {
        match self {
            Family::LargeIndex => decade_range(-16, -5),
            _ => decade_range(-16, -1),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// `10^lo, 10^(lo+1), …, 10^hi`, each parsed from its decimal literal so the
/// values are the correctly rounded ones.
pub fn decade_range(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|e| format!("1e{e}").parse().expect("valid literal")).collect()
}

fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..=1.0))
}

/// Symmetric matrix whose upper triangle is uniform on `[−1, 1]`.
fn uniform_symmetric<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = rng.random_range(-1.0..=1.0);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Family-1 data, kept factored so that `N = BV` can be rebuilt after
/// perturbing `B` and `V`.
#[derive(Debug, Clone)]
pub struct Family1Data {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub r: DMatrix<f64>,
    /// Smallest singular value of the third-level `ρ` restricted to the
    /// control directions left free by `R`.
    pub halting_margin: f64,
}

pub const FAMILY1_MIN_MARGIN: f64 = 1e-3;
const FAMILY1_MAX_RESAMPLES: usize = 10_000;

impl Family1Data {
    pub fn problem(&self) -> Result<LqProblem> {
        LqProblem::new(
            self.a.clone(),
            self.b.clone(),
            self.q.clone(),
            &self.b * &self.v,
            self.r.clone(),
        )
    }
}

/// Draws a family-1 instance with `m = n`:
/// `A` uniform, `B` Haar-orthogonal, `Q`, `V` symmetric uniform, `N = BV`,
/// `R = Uᵀ diag(r₁₁, 0, …, 0) U`. `V` is redrawn until the third-level
/// `ρ = BᵀQB − NᵀAB − BᵀAᵀN`, restricted to `ker R`, is comfortably regular.
pub fn gen_experiment1_data<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Family1Data> {
    if n < 2 {
        return Err(Error::InvalidArgument("family 1 needs n >= 2".into()));
    }
    let a = uniform(n, n, rng);
    let b = linalg::random_orthogonal(n, rng);
    let q = uniform_symmetric(n, rng);
    let u = linalg::random_orthogonal(n, rng);
    let r11: f64 = rng.random_range(0.5..1.5);
    let mut d = DMatrix::zeros(n, n);
    d[(0, 0)] = r11;
    let r = u.transpose() * d * &u;
    // symmetrize exactly; the product is symmetric only up to rounding
    let r = (&r + r.transpose()) * 0.5;
    let free = u.rows(1, n - 1).into_owned();
    let btqb = b.transpose() * &q * &b;
    for _ in 0..FAMILY1_MAX_RESAMPLES {
        let v = uniform_symmetric(n, rng);
        let nc = &b * &v;
        let rho3 = &btqb - nc.transpose() * &a * &b - b.transpose() * a.transpose() * &nc;
        let restricted = &free * rho3 * free.transpose();
        let s = linalg::singular_values(&restricted)?;
        let margin = s[s.len() - 1];
        if margin > FAMILY1_MIN_MARGIN {
            return Ok(Family1Data {
                a,
                b,
                q,
                v,
                r,
                halting_margin: margin,
            });
        }
    }
    Err(Error::InvalidArgument("could not draw a regular family-1 instance".into()))
}

pub fn gen_experiment1<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<LqProblem> {
    gen_experiment1_data(n, rng)?.problem()
}

pub fn gen_experiment2(n: usize) -> Result<LqProblem> {
    if n < 1 {
        return Err(Error::EmptyDimension("n"));
    }
    LqProblem::new(
        DMatrix::identity(n, n),
        DMatrix::from_element(n, 1, 1.0),
        DMatrix::identity(n, n),
        DMatrix::zeros(n, 1),
        DMatrix::zeros(1, 1),
    )
}

/// Upper shift matrix: ones on the superdiagonal.
pub fn upper_shift(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if j == i + 1 { 1.0 } else { 0.0 })
}

pub fn gen_experiment3(n: usize) -> Result<LqProblem> {
    if n < 2 {
        return Err(Error::InvalidArgument("family 3 needs n >= 2".into()));
    }
    let a = upper_shift(n);
    let b = DMatrix::from_element(n, 1, 1.0);
    LqProblem::new(a.clone(), b.clone(), &a + a.transpose(), b, DMatrix::zeros(1, 1))
}

/// An unperturbed instance of one family.
#[derive(Debug, Clone)]
pub enum Instance {
    One(Family1Data),
    Two(LqProblem),
    Three(LqProblem),
}

impl Instance {
    pub fn generate(family: Family, n: usize, cell_seed: u64) -> Result<Self> {
        if n < family.min_size() {
            return Err(Error::InvalidArgument(format!(
                "family {family} needs n >= {}",
                family.min_size()
            )));
        }
        Ok(match family {
            Family::SmallIndexSmall => {
                Instance::One(gen_experiment1_data(n, &mut ChaCha8Rng::seed_from_u64(cell_seed))?)
            }
            Family::SmallIndexLarge => Instance::Two(gen_experiment2(n)?),
            Family::LargeIndex => Instance::Three(gen_experiment3(n)?),
        })
    }

    pub fn problem(&self) -> Result<LqProblem> {
        match self {
            Instance::One(d) => d.problem(),
            Instance::Two(p) | Instance::Three(p) => Ok(p.clone()),
        }
    }

    /// Perturbs the family's free matrices, each independently with spectral
    /// norm below `delta`:
    /// - family 1: `A`, `B`, `Q`, `V` (`Q`, `V` symmetrically), `N = B̃Ṽ`, `R` exact;
    /// - family 2: `A`, `B`, `N`;
    /// - family 3: `A`, `B`, `R`, then `Q̃ = Ã + Ãᵀ` and `Ñ = B̃`.
    pub fn perturbed<R: Rng + ?Sized>(&self, delta: f64, rng: &mut R) -> Result<LqProblem> {
        match self {
            Instance::One(d) => {
                let a = perturb(&d.a, delta, rng);
                let b = perturb(&d.b, delta, rng);
                let q = perturb_symmetric(&d.q, delta, rng);
                let v = perturb_symmetric(&d.v, delta, rng);
                let nc = &b * v;
                LqProblem::new(a, b, q, nc, d.r.clone())
            }
            Instance::Two(p) => {
                let a = perturb(p.a(), delta, rng);
                let b = perturb(p.b(), delta, rng);
                let nc = perturb(p.n_cross(), delta, rng);
                LqProblem::new(a, b, p.q().clone(), nc, p.r().clone())
            }
            Instance::Three(p) => {
                let a = perturb(p.a(), delta, rng);
                let b = perturb(p.b(), delta, rng);
                let r = perturbation(1, 1, delta, rng);
                LqProblem::new(a.clone(), b.clone(), &a + a.transpose(), b, r)
            }
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one `(family, n, trial)` cell; every `δ` of the cell shares the
/// same unperturbed instance.
pub fn cell_seed(seed: u64, family: Family, n: usize, trial: usize) -> u64 {
    let h = splitmix(seed ^ u64::from(family.number()));
    let h = splitmix(h ^ n as u64);
    splitmix(h ^ trial as u64)
}

fn perturbation_rng(cell_seed: u64, delta: f64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(cell_seed ^ delta.to_bits()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Alpha {
    Angle(f64),
    /// The perturbed subspace has a different dimension.
    Mismatch,
}

impl Alpha {
    pub fn angle(self) -> Option<f64> {
        match self {
            Alpha::Angle(a) => Some(a),
            Alpha::Mismatch => None,
        }
    }
}

impl fmt::Display for Alpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Alpha::Angle(a) => write!(f, "{a:.16e}"),
            Alpha::Mismatch => f.write_str("mismatch"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub family: Family,
    pub n: usize,
    pub delta: f64,
    pub tol: f64,
    /// Cell seed; with `(family, n, delta, tol)` it regenerates the record.
    pub seed: u64,
    pub trial: usize,
    pub exact_steps: usize,
    pub exact_codim: usize,
    pub steps: usize,
    pub codim: usize,
    pub alpha: Alpha,
}

/// Angle between the consistent subspaces of two runs, compared through
/// whichever of kernel or row space is smaller.
pub fn subspace_angle(exact: &AlgorithmResult, perturbed: &AlgorithmResult) -> Result<Alpha> {
    if exact.codim != perturbed.codim {
        return Ok(Alpha::Mismatch);
    }
    let total = exact.phi.ambient_dim();
    let angle = if exact.codim <= total - exact.codim {
        geo::max_principal_angle(&exact.constraint_space(), &perturbed.constraint_space())?
    } else {
        geo::max_principal_angle(&exact.final_submanifold(), &perturbed.final_submanifold())?
    };
    Ok(Alpha::Angle(angle))
}

#[allow(clippy::too_many_arguments)]
fn measure(
    family: Family,
    n: usize,
    trial: usize,
    seed: u64,
    instance: &Instance,
    exact: &AlgorithmResult,
    delta: f64,
    options: &Options,
) -> Result<ExperimentRecord> {
    let problem = instance.perturbed(delta, &mut perturbation_rng(seed, delta))?;
    let res = run_with(&problem, options)?;
    Ok(ExperimentRecord {
        family,
        n,
        delta,
        tol: options.tol,
        seed,
        trial,
        exact_steps: exact.steps,
        exact_codim: exact.codim,
        steps: res.steps,
        codim: res.codim,
        alpha: subspace_angle(exact, &res)?,
    })
}

/// Recomputes a single record from its provenance fields.
pub fn run_cell(family: Family, n: usize, delta: f64, options: &Options, seed: u64) -> Result<ExperimentRecord> {
    let instance = Instance::generate(family, n, seed)?;
    let exact = run_with(&instance.problem()?, options)?;
    measure(family, n, 0, seed, &instance, &exact, delta, options)
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub family: Family,
    pub sizes: Vec<usize>,
    pub deltas: Vec<f64>,
    pub options: Options,
    pub trials: usize,
    pub seed: u64,
    /// Worker threads; `None` uses rayon's default pool.
    pub jobs: Option<usize>,
}

/// Runs every `(n, δ, trial)` cell. Records come out ordered by `n`, then
/// `δ`, then trial, independent of the thread count.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<ExperimentRecord>> {
    if config.sizes.is_empty() || config.deltas.is_empty() {
        return Err(Error::InvalidArgument("sizes and deltas must be nonempty".into()));
    }
    if config.trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    if let Some(&d) = config.deltas.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
        return Err(Error::InvalidArgument(format!("delta must be nonnegative, got {d}")));
    }
    linalg::check_tol(config.options.tol)?;
    let family = config.family;
    let cells: Vec<(usize, usize)> = config
        .sizes
        .iter()
        .flat_map(|&n| (0..config.trials).map(move |t| (n, t)))
        .collect();
    let work = || -> Result<Vec<Vec<ExperimentRecord>>> {
        cells
            .par_iter()
            .map(|&(n, trial)| {
                let seed = cell_seed(config.seed, family, n, trial);
                let instance = Instance::generate(family, n, seed)?;
                let exact = run_with(&instance.problem()?, &config.options)?;
                config
                    .deltas
                    .iter()
                    .map(|&delta| measure(family, n, trial, seed, &instance, &exact, delta, &config.options))
                    .collect()
            })
            .collect()
    };
    let per_cell = match config.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    let mut out = Vec::with_capacity(cells.len() * config.deltas.len());
    for trials in per_cell.chunks(config.trials) {
        for di in 0..config.deltas.len() {
            out.extend(trials.iter().map(|cell| cell[di].clone()));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Delta,
    N,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Delta => "delta",
            Axis::N => "n",
        })
    }
}

/// Fit of `ln α` against `ln δ` or `ln n`.
///
/// Cells with a dimension mismatch, a changed step count or `α = 0` are
/// dropped; the remaining `ln α` are averaged per axis value before fitting.
pub fn slope_report(records: &[ExperimentRecord], axis: Axis) -> Result<LogLogFit> {
    let mut groups: Vec<(f64, f64, usize)> = Vec::new();
    for rec in records {
        let Some(alpha) = rec.alpha.angle() else { continue };
        if rec.steps != rec.exact_steps || !(alpha > 0.0) {
            continue;
        }
        let x = match axis {
            Axis::Delta => rec.delta,
            Axis::N => rec.n as f64,
        };
        match groups.iter_mut().find(|g| g.0 == x) {
            Some(g) => {
                g.1 += alpha.ln();
                g.2 += 1;
            }
            None => groups.push((x, alpha.ln(), 1)),
        }
    }
    let pairs: Vec<(f64, f64)> = groups.iter().map(|&(x, s, c)| (x, (s / c as f64).exp())).collect();
    let usable = pairs.iter().filter(|p| p.0 > 0.0).count();
    if usable < 2 {
        return Err(Error::InsufficientData(usable));
    }
    geo::loglog_fit(&pairs)
}

pub const RECORDS_HEADER: &str = "family,n,delta,tol,seed,exact_steps,steps,codim,alpha";
pub const SLOPES_HEADER: &str = "family,axis,slope,r_squared,num_points";

pub fn write_records_csv<W: Write>(records: &[ExperimentRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "{RECORDS_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{:e},{:e},{},{},{},{},{}",
            r.family, r.n, r.delta, r.tol, r.seed, r.exact_steps, r.steps, r.codim, r.alpha
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub struct SlopeSummary {
    pub family: Family,
    pub axis: Axis,
    pub fit: LogLogFit,
}

pub fn write_slopes_csv<W: Write>(slopes: &[SlopeSummary], mut out: W) -> io::Result<()> {
    writeln!(out, "{SLOPES_HEADER}")?;
    for s in slopes {
        writeln!(
            out,
            "{},{},{:.6},{:.6},{}",
            s.family, s.axis, s.fit.slope, s.fit.r_squared, s.fit.num_points
        )?;
    }
    Ok(())
}
