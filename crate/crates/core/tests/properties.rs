mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use singular_lq::constraint_algorithm::{
    independent_rows_with, numerical_rank, svd_split_with, ConstraintBlock, ConstraintMatrix, HaltReason, RankRecord,
};
use singular_lq::lq_problem::Feedback;
use singular_lq::subspace_geometry::max_principal_angle;
use singular_lq::{linalg, run_with, CostateTriple, LqProblem, Options, RankRule, Recursion, Subspace};

#[test]
fn svd_split_residual() {
    check_svd_split(300, 1).unwrap();
}

#[test]
fn independent_rows_preserve_row_space() {
    check_independent_rows(300, 2).unwrap();
}

#[test]
fn constraint_stability() {
    check_constraint_stability(300, 3).unwrap();
}

#[test]
fn principal_angle_axioms() {
    check_principal_angles(300, 4).unwrap();
}

#[test]
fn perturbation_norm_bound() {
    check_perturbation_bound(1000, 5).unwrap();
}

fn random_triple<R: Rng>(n: usize, m: usize, rng: &mut R) -> CostateTriple {
    let v = |k: usize, rng: &mut R| DVector::from_fn(k, |_, _| rng.random_range(-1.0..=1.0));
    CostateTriple::new(v(n, rng), v(n, rng), v(m, rng))
}

fn central_difference(p: &LqProblem, s: &CostateTriple, h: f64) -> DVector<f64> {
    let z = s.stacked();
    DVector::from_fn(z.len(), |i, _| {
        let mut plus = z.clone();
        let mut minus = z.clone();
        plus[i] += h;
        minus[i] -= h;
        let hp = p.hamiltonian(&CostateTriple::from_stacked(&plus, p.n(), p.m()).unwrap()).unwrap();
        let hm = p.hamiltonian(&CostateTriple::from_stacked(&minus, p.n(), p.m()).unwrap()).unwrap();
        (hp - hm) / (2.0 * h)
    })
}

#[test]
fn dynamics_and_primary_constraint_are_gradients_of_h() {
    let mut rng = rng(6);
    for _ in 0..200 {
        let p = float_singular_problem(&mut rng);
        let (n, m) = (p.n(), p.m());
        let s = random_triple(n, m, &mut rng);
        let (xdot, pdot) = p.dynamics_rhs(&s).unwrap();
        let phi1 = p.primary_constraint().evaluate(&s);
        let mut analytic = DVector::zeros(2 * n + m);
        analytic.rows_mut(0, n).copy_from(&-pdot);
        analytic.rows_mut(n, n).copy_from(&xdot);
        analytic.rows_mut(2 * n, m).copy_from(&phi1);
        for h in [1e-4, 1e-5] {
            let err = (central_difference(&p, &s, h) - &analytic).amax();
            assert!(err <= 10.0 * h * h, "h = {h}: error {err:e}");
        }
    }
}

#[test]
fn hamiltonian_and_dynamics_match_exact_evaluation() {
    let mut rng = rng(7);
    for _ in 0..200 {
        let p = rational_problem(&mut rng);
        let (n, m) = (p.n(), p.m());
        let x = half_integer_matrix(n, 1, &mut rng);
        let pp = half_integer_matrix(n, 1, &mut rng);
        let u = half_integer_matrix(m, 1, &mut rng);
        let s = CostateTriple::new(x.column(0).into(), pp.column(0).into(), u.column(0).into());
        let (qa, qb, qq, qn, qr) = (to_q(p.a()), to_q(p.b()), to_q(p.q()), to_q(p.n_cross()), to_q(p.r()));
        let (qx, qp, qu) = (to_q(&x), to_q(&pp), to_q(&u));
        let h = singular_lq_oracle::lq_hamiltonian(&qa, &qb, &qq, &qn, &qr, &qx, &qp, &qu);
        let got = p.hamiltonian(&s).unwrap();
        let want = num_traits::ToPrimitive::to_f64(&h).unwrap();
        assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
        let (ex, ep) = singular_lq_oracle::lq_dynamics(&qa, &qb, &qq, &qn, &qx, &qp, &qu);
        let (xdot, pdot) = p.dynamics_rhs(&s).unwrap();
        assert!((DVector::from_vec(ex.to_f64()) - xdot).amax() < 1e-12);
        assert!((DVector::from_vec(ep.to_f64()) - pdot).amax() < 1e-12);
    }
}

fn uni<R: Rng>(r: usize, c: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..=1.0))
}

#[test]
fn regular_feedback_satisfies_primary_constraint() {
    let mut rng = rng(8);
    for _ in 0..200 {
        let n = rng.random_range(1..=5);
        let m = rng.random_range(1..=4);
        let w = linalg::random_orthogonal(m, &mut rng);
        let d = DMatrix::from_fn(m, m, |i, j| if i == j { rng.random_range(0.1..2.0) } else { 0.0 });
        let r = w.transpose() * d * &w;
        let p = LqProblem::new(
            uni(n, n, &mut rng),
            uni(n, m, &mut rng),
            DMatrix::zeros(n, n),
            uni(n, m, &mut rng),
            (&r + r.transpose()) * 0.5,
        )
        .unwrap();
        let Feedback::Regular(k) = p.regular_feedback(1e-6).unwrap() else {
            panic!("R is regular")
        };
        let s = random_triple(n, m, &mut rng);
        let xp = DVector::from_iterator(2 * n, s.x.iter().chain(s.p.iter()).copied());
        let u = &k * xp;
        let resid = p.primary_constraint().evaluate(&CostateTriple::new(s.x.clone(), s.p.clone(), u));
        assert!(resid.amax() <= 1e-10 * 10.0, "{:e}", resid.amax());
    }
}

#[test]
fn numerical_rank_matches_exact_rank() {
    let mut rng = rng(9);
    for _ in 0..200 {
        let rows = rng.random_range(1..=6);
        let cols = rng.random_range(1..=6);
        let inner = rng.random_range(1..=rows.min(cols));
        let m = half_integer_matrix(rows, inner, &mut rng) * half_integer_matrix(inner, cols, &mut rng);
        assert_eq!(numerical_rank(&m, 1e-12).unwrap(), to_q(&m).rank());
    }
    let dense = DMatrix::from_fn(5, 3, |_, _| rng.random_range(-1.0..=1.0));
    assert_eq!(numerical_rank(&dense, 1e-12).unwrap(), to_q(&dense).rank());
    assert_eq!(numerical_rank(&DMatrix::zeros(3, 3), 1e-3).unwrap(), 0);
    assert_eq!(numerical_rank(&DMatrix::zeros(0, 3), 1e-3).unwrap(), 0);
    assert!(numerical_rank(&dense, 0.0).is_err());
}

/// Hand trace of the pseudocode built only from the public building blocks.
fn pseudocode_trace(p: &LqProblem, tol: f64) -> (Vec<(usize, usize)>, usize, usize) {
    let (n, m) = (p.n(), p.m());
    let rule = RankRule::Mixed;
    let mut block = p.primary_constraint();
    let mut phi = independent_rows_with(&ConstraintMatrix::new(block.stacked(), n, m).unwrap(), tol, rule).unwrap();
    let mut trace = Vec::new();
    let (mut pk, mut k) = (0, 1);
    loop {
        let split = svd_split_with(&block.rho, tol, rule).unwrap();
        trace.push((split.rank, phi.codim()));
        if split.rank == block.rows() || phi.codim() <= pk {
            break;
        }
        k += 1;
        pk = phi.codim();
        block = singular_lq::constraint_algorithm::step(&block, &split, p).unwrap();
        phi = independent_rows_with(&phi.append(&block.stacked()), tol, rule).unwrap();
    }
    if phi.codim() <= pk {
        k -= 1;
    }
    (trace, k.max(1), phi.codim())
}

#[test]
fn run_follows_the_pseudocode() {
    let mut rng = rng(10);
    for case in 0..300 {
        let p = if case % 2 == 0 {
            rational_problem(&mut rng)
        } else {
            float_singular_problem(&mut rng)
        };
        let res = run_with(&p, &literal(1e-9)).unwrap();
        let (trace, steps, codim) = pseudocode_trace(&p, 1e-9);
        let recorded: Vec<(usize, usize)> = res.rank_history.iter().map(|r: &RankRecord| (r.rho_rank, r.phi_rank)).collect();
        assert_eq!(recorded, trace, "case {case}");
        assert_eq!((res.steps, res.codim), (steps, codim), "case {case}");
    }
}

#[test]
fn codim_is_monotone_and_steps_bounded() {
    let mut rng = rng(11);
    for _ in 0..300 {
        let p = rational_problem(&mut rng);
        for recursion in [Recursion::Coupled, Recursion::Literal] {
            let res = run_with(&p, &Options { tol: 1e-9, recursion, ..Options::default() }).unwrap();
            let ranks: Vec<usize> = res.rank_history.iter().map(|r| r.phi_rank).collect();
            assert!(ranks.windows(2).all(|w| w[0] <= w[1]), "{ranks:?}");
            assert!(res.codim >= *ranks.last().unwrap());
            assert!(res.steps >= 1 && res.steps <= p.total_dim() + 1);
            assert_eq!(res.codim, numerical_rank(res.phi.matrix(), 1e-9).unwrap());
        }
    }
}

#[test]
fn kernel_is_equivariant_under_control_rotations() {
    let mut rng = rng(12);
    for case in 0..200 {
        let p = if case % 2 == 0 {
            rational_problem(&mut rng)
        } else {
            float_singular_problem(&mut rng)
        };
        let (n, m) = (p.n(), p.m());
        let v = linalg::random_orthogonal(m, &mut rng);
        let r = v.transpose() * p.r() * &v;
        let rotated = LqProblem::new(
            p.a().clone(),
            p.b() * &v,
            p.q().clone(),
            p.n_cross() * &v,
            (&r + r.transpose()) * 0.5,
        )
        .unwrap();
        let opts = Options { tol: 1e-9, ..Options::default() };
        let base = run_with(&p, &opts).unwrap();
        let turned = run_with(&rotated, &opts).unwrap();
        assert_eq!((base.steps, base.codim), (turned.steps, turned.codim), "case {case}");
        // u = V u'  ⇒  (x, p, u') = T (x, p, u) with T = I ⊕ I ⊕ Vᵀ
        let mut t = DMatrix::identity(2 * n + m, 2 * n + m);
        t.view_mut((2 * n, 2 * n), (m, m)).copy_from(&v.transpose());
        let mapped = base.final_submanifold().transformed(&t);
        let angle = max_principal_angle(&mapped, &turned.final_submanifold()).unwrap();
        assert!(angle < 1e-8, "case {case}: {angle:e}");
    }
}

#[test]
fn literal_recursion_can_miss_constraints() {
    // ρ⁽²⁾ only acts on the control direction already fixed at level 1, so
    // the plain recursion stops while the extended chain still refines.
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
    let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
    let r = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
    let nc = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
    let p = LqProblem::new(a, b, DMatrix::zeros(2, 2), nc, r).unwrap();
    let exact = oracle_chain(&p);
    let coupled = compare_with_oracle(&p, &Options::with_tol(1e-9));
    assert!(coupled.agrees(1e-9), "{coupled:?}");
    let lit = run_with(&p, &literal(1e-9)).unwrap();
    assert!(lit.codim <= exact.constraints.rows());
}

#[test]
fn halt_reasons() {
    let z = |r, c| DMatrix::<f64>::zeros(r, c);
    let p = LqProblem::new(DMatrix::identity(2, 2), DMatrix::identity(2, 2), z(2, 2), z(2, 2), DMatrix::identity(2, 2)).unwrap();
    assert_eq!(run_with(&p, &Options::default()).unwrap().halt_reason, HaltReason::Feedback);
    let p = LqProblem::new(DMatrix::identity(2, 2), z(2, 1), z(2, 2), z(2, 1), z(1, 1)).unwrap();
    assert_eq!(run_with(&p, &Options::default()).unwrap().halt_reason, HaltReason::Exhausted);
    // secondary constraint −p = 0 repeats the primary one
    let one = DMatrix::from_element(1, 1, 1.0);
    let p = LqProblem::new(one.clone(), one, z(1, 1), z(1, 1), z(1, 1)).unwrap();
    let res = run_with(&p, &Options::default()).unwrap();
    assert_eq!((res.steps, res.codim, res.halt_reason), (1, 1, HaltReason::Stagnation));
}

#[test]
fn final_submanifold_of_a_void_phi_is_everything() {
    let z = |r, c| DMatrix::<f64>::zeros(r, c);
    let p = LqProblem::new(z(3, 3), z(3, 2), z(3, 3), z(3, 2), z(2, 2)).unwrap();
    let res = run_with(&p, &Options::default()).unwrap();
    assert!(res.phi.is_void());
    let k = res.final_submanifold();
    assert_eq!(max_principal_angle(&k, &Subspace::full(8)).unwrap(), 0.0);
    let _ = ConstraintBlock::from_stacked(&z(0, 8), 3, 2, 1);
}
