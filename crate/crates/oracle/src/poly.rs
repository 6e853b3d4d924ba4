use num_traits::Zero;

use crate::matrix::{QMatrix, Rat};

/// Polynomial in λ with rational coefficients, lowest degree first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Poly(pub Vec<Rat>);

impl Poly {
    fn trim(mut self) -> Self {
        while self.0.last().is_some_and(Zero::is_zero) {
            self.0.pop();
        }
        self
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(Zero::is_zero)
    }

    fn mul(&self, other: &Poly) -> Poly {
        if self.0.is_empty() || other.0.is_empty() {
            return Poly(Vec::new());
        }
        let mut out = vec![Rat::zero(); self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out).trim()
    }

    fn add_signed(&mut self, other: &Poly, negate: bool) {
        if self.0.len() < other.0.len() {
            self.0.resize(other.0.len(), Rat::zero());
        }
        for (i, c) in other.0.iter().enumerate() {
            if negate {
                self.0[i] -= c;
            } else {
                self.0[i] += c;
            }
        }
    }
}

fn permutations(n: usize) -> Vec<(Vec<usize>, bool)> {
    // Heap's algorithm; each swap flips the parity.
    let mut perm: Vec<usize> = (0..n).collect();
    let mut out = vec![(perm.clone(), false)];
    let mut c = vec![0; n];
    let mut odd = false;
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            odd = !odd;
            out.push((perm.clone(), odd));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

/// Exact `det(λA − B)` by Leibniz expansion. Intended for n ≤ 6.
pub fn pencil_determinant(a: &QMatrix, b: &QMatrix) -> Poly {
    let n = a.rows();
    assert!(a.cols() == n && b.rows() == n && b.cols() == n);
    let mut total = Poly(Vec::new());
    for (perm, odd) in permutations(n) {
        let mut term = Poly(vec![num_traits::One::one()]);
        for (i, &j) in perm.iter().enumerate() {
            let entry = Poly(vec![-b.get(i, j).clone(), a.get(i, j).clone()]).trim();
            term = term.mul(&entry);
            if term.0.is_empty() {
                break;
            }
        }
        total.add_signed(&term, odd);
    }
    total.trim()
}
