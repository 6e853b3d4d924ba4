use num_bigint::BigInt;
use num_traits::One;

use crate::matrix::{QMatrix, Rat};

/// Exact constraint chain of a linear-quadratic problem.
#[derive(Debug, Clone)]
pub struct LqChain {
    /// Index `r` of the first level with `M_r = M_{r+1}`.
    pub steps: usize,
    /// Row basis (RREF) of the constraints cutting out the final subspace.
    pub constraints: QMatrix,
    /// Codimension of `M_1, M_2, …` in `(x, p, u)` space.
    pub codims: Vec<usize>,
}

/// Runs the chain `M_{k+1} = { z ∈ M_k : ∃ ż ∈ M_k with ẋ, ṗ given by the
/// Hamiltonian flow }` on `z = (x, p, u)`; the control rate `u̇` is free.
///
/// `a, q` are n×n, `b, n_mat` are n×m and `r` is m×m.
pub fn lq_chain(a: &QMatrix, b: &QMatrix, q: &QMatrix, n_mat: &QMatrix, r: &QMatrix) -> LqChain {
    let n = a.rows();
    let m = b.cols();
    // ẋ = [A 0 B] z,  ṗ = [Q −Aᵀ N] z
    let dx = a.hstack(&QMatrix::zeros(n, n)).hstack(b);
    let dp = q.hstack(&(-&a.transpose())).hstack(n_mat);

    let primary = (-&n_mat.transpose())
        .hstack(&b.transpose())
        .hstack(&(-r));
    let mut phi = primary.row_basis();
    let mut steps = 1;
    let mut codims = vec![phi.rows()];
    loop {
        let px = phi.columns(0, n);
        let pp = phi.columns(n, 2 * n);
        let pu = phi.columns(2 * n, 2 * n + m);
        let w = pu.left_kernel_rows();
        let next = if w.rows() == 0 || phi.rows() == 0 {
            phi.clone()
        } else {
            let drift = &(&px * &dx) + &(&pp * &dp);
            phi.vstack(&(&w * &drift)).row_basis()
        };
        if next.rows() == phi.rows() {
            return LqChain {
                steps,
                constraints: phi,
                codims,
            };
        }
        phi = next;
        steps += 1;
        codims.push(phi.rows());
    }
}

/// Exact chain for the constant linear system `A ẋ = B x`.
#[derive(Debug, Clone)]
pub struct DaeChain {
    pub steps: usize,
    /// `dim M_1, dim M_2, …` up to and including the first repeat.
    pub dims: Vec<usize>,
    /// Basis of the final subspace, one vector per column.
    pub basis: QMatrix,
}

pub fn dae_chain(a: &QMatrix, b: &QMatrix) -> DaeChain {
    let n = a.cols();
    let mut basis = QMatrix::identity(n);
    let mut dims = Vec::new();
    loop {
        let next = if basis.cols() == 0 {
            basis.clone()
        } else {
            let c = (a * &basis).left_kernel_rows();
            if c.rows() == 0 {
                basis.clone()
            } else {
                let k = (&(&c * b) * &basis).kernel();
                &basis * &k
            }
        };
        let stable = !dims.is_empty() && next.cols() == basis.cols();
        if stable {
            dims.push(next.cols());
            return DaeChain {
                steps: dims.len() - 1,
                dims,
                basis,
            };
        }
        dims.push(next.cols());
        basis = next;
    }
}

fn half() -> Rat {
    Rat::new(BigInt::one(), BigInt::from(2))
}

fn scalar(m: &QMatrix) -> Rat {
    assert_eq!((m.rows(), m.cols()), (1, 1));
    m.get(0, 0).clone()
}

/// `H = pᵀAx + pᵀBu − ½xᵀQx − xᵀNu − ½uᵀRu` with column vectors `x, p, u`.
#[allow(clippy::too_many_arguments)]
pub fn lq_hamiltonian(
    a: &QMatrix,
    b: &QMatrix,
    q: &QMatrix,
    n_mat: &QMatrix,
    r: &QMatrix,
    x: &QMatrix,
    p: &QMatrix,
    u: &QMatrix,
) -> Rat {
    let pt = p.transpose();
    let xt = x.transpose();
    let ut = u.transpose();
    scalar(&(&(&pt * a) * x)) + scalar(&(&(&pt * b) * u))
        - half() * scalar(&(&(&xt * q) * x))
        - scalar(&(&(&xt * n_mat) * u))
        - half() * scalar(&(&(&ut * r) * u))
}

/// `(Ax + Bu, −Aᵀp + Qx + Nu)`.
#[allow(clippy::too_many_arguments)]
pub fn lq_dynamics(
    a: &QMatrix,
    b: &QMatrix,
    q: &QMatrix,
    n_mat: &QMatrix,
    x: &QMatrix,
    p: &QMatrix,
    u: &QMatrix,
) -> (QMatrix, QMatrix) {
    let xdot = &(a * x) + &(b * u);
    let pdot = &(&(&(-&a.transpose()) * p) + &(q * x)) + &(n_mat * u);
    (xdot, pdot)
}
