//! Laplace kernel and its derivatives.
//!
//! The fundamental solution used throughout is `gamma0(x) = -1/(4*pi*|x|)`,
//! so `S[1] = -1` on the unit sphere and all single-layer entries are negative.

use crate::error::{CoreError, Result};
use nalgebra::{Matrix3, Vector3};

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

#[inline]
fn check_nonzero(x: &Vector3<f64>) -> Result<f64> {
    let r = x.norm();
    if r == 0.0 {
        return Err(CoreError::SingularPoint);
    }
    Ok(r)
}

/// Fundamental solution of the Laplacian, `-1/(4*pi*|x|)`.
pub fn gamma0(x: &Vector3<f64>) -> Result<f64> {
    let r = check_nonzero(x)?;
    Ok(-1.0 / (FOUR_PI * r))
}

/// Gradient of `gamma0`: `x/(4*pi*|x|^3)`.
pub fn grad_gamma0(x: &Vector3<f64>) -> Result<Vector3<f64>> {
    let r = check_nonzero(x)?;
    Ok(x / (FOUR_PI * r.powi(3)))
}

/// Hessian of `gamma0`: `I/(4*pi*|x|^3) - 3 x x^T/(4*pi*|x|^5)`.
///
/// Symmetric and trace-free away from the origin.
pub fn hess_gamma0(x: &Vector3<f64>) -> Result<Matrix3<f64>> {
    let r = check_nonzero(x)?;
    let r3 = r.powi(3);
    let r5 = r.powi(5);
    let mut h = Matrix3::identity() / (FOUR_PI * r3);
    h -= 3.0 * x * x.transpose() / (FOUR_PI * r5);
    Ok(h)
}

/// Unchecked variants for assembly loops where the geometry guarantees x != 0.
pub(crate) mod raw {
    use super::*;

    #[inline(always)]
    pub fn gamma0(x: &Vector3<f64>) -> f64 {
        -1.0 / (FOUR_PI * x.norm())
    }

    #[inline(always)]
    pub fn grad_gamma0(x: &Vector3<f64>) -> Vector3<f64> {
        let r = x.norm();
        x / (FOUR_PI * r * r * r)
    }

}

/// Columns of the third derivative of `gamma0` contracted with a vector:
/// column k holds `(d/dx_k hess_gamma0(x)) * m`.
///
/// Used for position Jacobians in the Gauss-Newton inversion.
pub fn third_gamma0_apply(x: &Vector3<f64>, m: &Vector3<f64>) -> Result<Matrix3<f64>> {
    let r = check_nonzero(x)?;
    let r5 = r.powi(5);
    let r7 = r.powi(7);
    let xm = x.dot(m);
    let mut out = Matrix3::zeros();
    for k in 0..3 {
        // d/dx_k [delta_ij/r^3 - 3 x_i x_j / r^5] * m_j
        let col = -3.0 * x[k] * m / (FOUR_PI * r5)
            - 3.0 * (m[k] * x + xm * Vector3::ith(k, 1.0)) / (FOUR_PI * r5)
            + 15.0 * xm * x[k] * x / (FOUR_PI * r7);
        out.set_column(k, &col);
    }
    Ok(out)
}
