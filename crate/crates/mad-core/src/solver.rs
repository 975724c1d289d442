//! Dense LU with partial pivoting (faer backend) plus a cheap reciprocal
//! condition estimate used by the resolvent-singularity guard.

use faer::linalg::solvers::Solve;
use faer::Mat;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// LU factorization of a real square matrix.
pub struct LuReal {
    lu: faer::linalg::solvers::PartialPivLu<f64>,
    n: usize,
    norm1: f64,
}

/// LU factorization of a complex square matrix.
pub struct LuComplex {
    lu: faer::linalg::solvers::PartialPivLu<Complex64>,
    n: usize,
    norm1: f64,
}

fn norm1_real(a: &DMatrix<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn norm1_complex(a: &DMatrix<Complex64>) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Deterministic quasi-random start vector for the inverse-power estimate.
fn seed_vector(n: usize) -> Vec<f64> {
    let mut x = 0x9e3779b97f4a7c15u64;
    (0..n)
        .map(|_| {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((x >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
        .collect()
}

impl LuReal {
    pub fn new(a: &DMatrix<f64>) -> Self {
        let n = a.nrows();
        let norm1 = norm1_real(a);
        let m = Mat::<f64>::from_fn(n, n, |i, j| a[(i, j)]);
        LuReal {
            lu: m.partial_piv_lu(),
            n,
            norm1,
        }
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let rhs = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        let x = self.lu.solve(&rhs);
        DVector::from_fn(self.n, |i, _| x[(i, 0)])
    }

    /// Reciprocal condition estimate: inverse-power iteration bounds the
    /// dominant eigenvalue magnitude of `A^-1`; combined with the 1-norm of A.
    pub fn rcond_est(&self) -> f64 {
        let mut v = DVector::from_vec(seed_vector(self.n));
        v /= v.norm();
        let mut growth = 0.0f64;
        for _ in 0..6 {
            let w = self.solve_vec(&v);
            let nw = w.norm();
            if !nw.is_finite() || nw == 0.0 {
                return if nw == 0.0 { 1.0 } else { 0.0 };
            }
            growth = nw;
            v = w / nw;
        }
        1.0 / (self.norm1 * growth).max(f64::MIN_POSITIVE)
    }
}

impl LuComplex {
    pub fn new(a: &DMatrix<Complex64>) -> Self {
        let n = a.nrows();
        let norm1 = norm1_complex(a);
        let m = Mat::<Complex64>::from_fn(n, n, |i, j| a[(i, j)]);
        LuComplex {
            lu: m.partial_piv_lu(),
            n,
            norm1,
        }
    }

    pub fn solve_vec(&self, b: &DVector<Complex64>) -> DVector<Complex64> {
        let rhs = Mat::<Complex64>::from_fn(self.n, 1, |i, _| b[i]);
        let x = self.lu.solve(&rhs);
        DVector::from_fn(self.n, |i, _| x[(i, 0)])
    }

    pub fn rcond_est(&self) -> f64 {
        let r = seed_vector(self.n);
        let mut v = DVector::from_fn(self.n, |i, _| Complex64::new(r[i], r[(i * 7 + 3) % self.n]));
        let nv = v.norm();
        v /= Complex64::new(nv, 0.0);
        let mut growth = 0.0f64;
        for _ in 0..6 {
            let w = self.solve_vec(&v);
            let nw = w.norm();
            if !nw.is_finite() || nw == 0.0 {
                return if nw == 0.0 { 1.0 } else { 0.0 };
            }
            growth = nw;
            v = w / Complex64::new(nw, 0.0);
        }
        1.0 / (self.norm1 * growth).max(f64::MIN_POSITIVE)
    }
}
