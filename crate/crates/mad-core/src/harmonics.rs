//! Complex spherical harmonics, surface gradients, the exterior vector basis
//! `N_{n+1}^m`, the addition-formula expansion of the kernel gradient, and
//! scalar transforms on Gauss-Legendre product grids.
//!
//! Convention: orthonormal complex harmonics with the Condon-Shortley phase,
//! so `Y_0^0 = 1/(2 sqrt(pi))`, `Y_1^0 = sqrt(3/4pi) cos(theta)`,
//! `Y_1^1 = -sqrt(3/8pi) sin(theta) e^{i phi}` and
//! `conj(Y_n^m) = (-1)^m Y_n^{-m}`.

use crate::error::{CoreError, Result};
use nalgebra::{DMatrix, Matrix3, Vector3};
use num_complex::Complex64;

const POLE_TOL: f64 = 1e-8;

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // evaluate P_n(x) and P_n'(x) by upward recurrence
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    // ascending in x = cos(theta)
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| nodes[a].partial_cmp(&nodes[b]).unwrap());
    (
        idx.iter().map(|&i| nodes[i]).collect(),
        idx.iter().map(|&i| weights[i]).collect(),
    )
}

/// Quadrature grid on the unit sphere: Gauss-Legendre in cos(theta) times a
/// uniform azimuthal rule. Integrates products of harmonics exactly up to
/// degree `n_theta - 1` per factor.
#[derive(Debug, Clone)]
pub struct SphereGrid {
    pub directions: Vec<Vector3<f64>>,
    pub weights: Vec<f64>,
    pub n_theta: usize,
    pub n_phi: usize,
}

impl SphereGrid {
    pub fn new(n_theta: usize, n_phi: usize) -> Self {
        let (ct, w) = gauss_legendre(n_theta);
        let mut directions = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        let dphi = 2.0 * std::f64::consts::PI / n_phi as f64;
        for (i, &c) in ct.iter().enumerate() {
            let s = (1.0 - c * c).sqrt();
            for k in 0..n_phi {
                let phi = dphi * k as f64;
                directions.push(Vector3::new(s * phi.cos(), s * phi.sin(), c));
                weights.push(w[i] * dphi);
            }
        }
        SphereGrid {
            directions,
            weights,
            n_theta,
            n_phi,
        }
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Fully normalized associated Legendre values `Pbar_n^m(cos theta)` for all
/// n in [m, n_max], with the Condon-Shortley phase folded in so that
/// `Y_n^m = Pbar_n^m e^{i m phi}` for m >= 0.
fn legendre_column(n_max: usize, m: usize, cos_t: f64, sin_t: f64) -> Vec<f64> {
    debug_assert!(m <= n_max);
    let mut out = Vec::with_capacity(n_max - m + 1);
    // sectoral seed Pbar_m^m
    let mut pmm = 1.0 / (4.0 * std::f64::consts::PI).sqrt();
    for k in 1..=m {
        let kf = k as f64;
        pmm *= -((2.0 * kf + 1.0) / (2.0 * kf)).sqrt() * sin_t;
    }
    out.push(pmm);
    if n_max == m {
        return out;
    }
    let mut pm1 = pmm;
    let mut p = ((2 * m + 3) as f64).sqrt() * cos_t * pmm;
    out.push(p);
    for n in (m + 2)..=n_max {
        let nf = n as f64;
        let mf = m as f64;
        let a = ((4.0 * nf * nf - 1.0) / (nf * nf - mf * mf)).sqrt();
        let b = (((2.0 * nf + 1.0) * ((nf - 1.0) * (nf - 1.0) - mf * mf))
            / ((2.0 * nf - 3.0) * (nf * nf - mf * mf)))
            .sqrt();
        let pn = a * cos_t * p - b * pm1;
        pm1 = p;
        p = pn;
        out.push(p);
    }
    out
}

fn check_direction(x: &Vector3<f64>) -> Result<(f64, f64, f64)> {
    let norm = x.norm();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(CoreError::NotUnit(norm));
    }
    let cos_t = x.z.clamp(-1.0, 1.0);
    let sin_t = (x.x * x.x + x.y * x.y).sqrt();
    let phi = if sin_t == 0.0 { 0.0 } else { x.y.atan2(x.x) };
    Ok((cos_t, sin_t, phi))
}

fn check_indices(n: i64, m: i64) -> Result<()> {
    if n < 0 || m.abs() > n {
        return Err(CoreError::InvalidHarmonic { n, m });
    }
    Ok(())
}

/// `Y_n^m` at a unit direction.
pub fn sph_harm(n: u32, m: i32, x: &Vector3<f64>) -> Result<Complex64> {
    check_indices(n as i64, m as i64)?;
    let (cos_t, sin_t, phi) = check_direction(x)?;
    let ma = m.unsigned_abs() as usize;
    let p = *legendre_column(n as usize, ma, cos_t, sin_t)
        .last()
        .unwrap();
    let e = Complex64::from_polar(1.0, ma as f64 * phi);
    let y = p * e;
    if m >= 0 {
        Ok(y)
    } else {
        // Y_n^{-m} = (-1)^m conj(Y_n^m)
        Ok(y.conj() * if ma % 2 == 0 { 1.0 } else { -1.0 })
    }
}

/// `d Pbar_n^m / d theta` from the same recurrence data.
fn legendre_theta_deriv(n: usize, m: usize, cos_t: f64, sin_t: f64) -> f64 {
    let col = legendre_column(n, m, cos_t, sin_t);
    let p_n = *col.last().unwrap();
    let p_nm1 = if n > m { col[col.len() - 2] } else { 0.0 };
    let nf = n as f64;
    let mf = m as f64;
    let c = if n > m {
        ((2.0 * nf + 1.0) / (2.0 * nf - 1.0) * (nf * nf - mf * mf)).sqrt()
    } else {
        0.0
    };
    (nf * cos_t * p_n - c * p_nm1) / sin_t
}

/// Surface gradient of `Y_n^m` (tangent vector):
/// `(d Y/d theta) e_theta + (i m Y / sin theta) e_phi`.
pub fn surf_grad_sph_harm(n: u32, m: i32, x: &Vector3<f64>) -> Result<Vector3<Complex64>> {
    check_indices(n as i64, m as i64)?;
    let (cos_t, sin_t, phi) = check_direction(x)?;
    if sin_t < POLE_TOL {
        if m != 0 {
            return Err(CoreError::PoleEvaluation(POLE_TOL));
        }
        // zonal harmonics have vanishing surface gradient at the poles
        return Ok(Vector3::from_element(Complex64::new(0.0, 0.0)));
    }
    if n == 0 {
        return Ok(Vector3::from_element(Complex64::new(0.0, 0.0)));
    }
    let ma = m.unsigned_abs() as usize;
    let dp = legendre_theta_deriv(n as usize, ma, cos_t, sin_t);
    let p = *legendre_column(n as usize, ma, cos_t, sin_t)
        .last()
        .unwrap();
    let e = Complex64::from_polar(1.0, ma as f64 * phi);
    let (mut y, mut dtheta) = (p * e, dp * e);
    if m < 0 {
        let sign = if ma % 2 == 0 { 1.0 } else { -1.0 };
        y = y.conj() * sign;
        dtheta = dtheta.conj() * sign;
    }
    let dphi_y = Complex64::new(0.0, m as f64) * y;
    let e_theta = Vector3::new(cos_t * phi.cos(), cos_t * phi.sin(), -sin_t);
    let e_phi = Vector3::new(-phi.sin(), phi.cos(), 0.0);
    let g = Vector3::new(
        dtheta * e_theta.x + dphi_y / sin_t * e_phi.x,
        dtheta * e_theta.y + dphi_y / sin_t * e_phi.y,
        dtheta * e_theta.z + dphi_y / sin_t * e_phi.z,
    );
    Ok(g)
}

/// Exterior-gradient angular profile `N_{n+1}^m = (n+1) Y_n^m x - grad_S Y_n^m`.
pub fn vector_n(n: u32, m: i32, x: &Vector3<f64>) -> Result<Vector3<Complex64>> {
    let y = sph_harm(n, m, x)?;
    let g = surf_grad_sph_harm(n, m, x)?;
    let s = (n + 1) as f64 * y;
    Ok(Vector3::new(
        s * x.x - g.x,
        s * x.y - g.y,
        s * x.z - g.z,
    ))
}

/// Truncated addition formula for `1/(4 pi |x - y|)`:
/// `sum_{n<=n_max} sum_m Y_n^m(xh) conj(Y_n^m(yh)) |y|^n / ((2n+1)|x|^{n+1})`.
pub fn addition_partial(x: &Vector3<f64>, y: &Vector3<f64>, n_max: u32) -> Result<f64> {
    let rx = x.norm();
    let ry = y.norm();
    if rx <= ry || ry < 0.0 {
        return Err(CoreError::RadiusOrder { x: rx, y: ry });
    }
    let xh = x / rx;
    let yh = if ry == 0.0 { Vector3::z() } else { y / ry };
    let mut sum = Complex64::new(0.0, 0.0);
    let mut radial = 1.0 / rx; // |y|^n / |x|^{n+1}
    for n in 0..=n_max {
        let mut band = Complex64::new(0.0, 0.0);
        for m in -(n as i32)..=(n as i32) {
            band += sph_harm(n, m, &xh)? * sph_harm(n, m, &yh)?.conj();
        }
        sum += band * radial / (2.0 * n as f64 + 1.0);
        radial *= ry / rx;
    }
    Ok(sum.re)
}

/// Truncated expansion of `grad gamma0(x - z)` on `|x| = R1 > |z|`:
/// `sum N_{n+1}^m(xh) conj(Y_n^m(zh)) |z|^n / ((2n+1) R1^{n+2})`.
///
/// With `gamma0 = -1/(4 pi |x|)` this equals `grad_gamma0(x - z)` as written:
/// the monopole term is `xh/(4 pi R1^2)`.
///
/// Evaluation points on the coordinate axis are handled by rotating both
/// arguments into a generic frame; each degree band is rotation-equivariant,
/// so the truncated sum is unchanged.
pub fn grad_gamma_expansion(x: &Vector3<f64>, z: &Vector3<f64>, n_max: u32) -> Result<Vector3<f64>> {
    let r1 = x.norm();
    let rz = z.norm();
    if r1 <= rz {
        return Err(CoreError::RadiusOrder { x: r1, y: rz });
    }
    if x.z.abs() > (1.0 - 1e-6) * r1 {
        // cyclic axis permutation (a proper rotation) and its inverse
        let rot = |v: &Vector3<f64>| Vector3::new(v.z, v.x, v.y);
        let unrot = |v: Vector3<f64>| Vector3::new(v.y, v.z, v.x);
        let g = grad_gamma_expansion(&rot(x), &rot(z), n_max)?;
        return Ok(unrot(g));
    }
    let xh = x / r1;
    let zh = if rz == 0.0 { Vector3::z() } else { z / rz };
    let mut sum = Vector3::from_element(Complex64::new(0.0, 0.0));
    let mut radial = 1.0 / (r1 * r1); // |z|^n / R1^{n+2}
    for n in 0..=n_max {
        let mut band = Vector3::from_element(Complex64::new(0.0, 0.0));
        for m in -(n as i32)..=(n as i32) {
            let nv = vector_n(n, m, &xh)?;
            let yz = sph_harm(n, m, &zh)?.conj();
            band.x += nv.x * yz;
            band.y += nv.y * yz;
            band.z += nv.z * yz;
        }
        let f = radial / (2.0 * n as f64 + 1.0);
        sum.x += band.x * f;
        sum.y += band.y * f;
        sum.z += band.z * f;
        radial *= rz / r1;
    }
    Ok(Vector3::new(sum.x.re, sum.y.re, sum.z.re))
}

/// Scalar spherical-harmonic analysis: `a_{n,m} = sum_q w_q f_q conj(Y_n^m)`.
///
/// Requires `grid.n_theta >= n_max + 1` so products up to degree `n_max` are
/// integrated exactly.
pub fn sht_forward(
    grid: &SphereGrid,
    samples: &[Complex64],
    n_max: u32,
) -> Result<Vec<Complex64>> {
    if grid.n_theta < n_max as usize + 1 {
        return Err(CoreError::InsufficientGridOrder {
            need: n_max as usize + 1,
            have: grid.n_theta,
        });
    }
    assert_eq!(samples.len(), grid.len());
    let mut coeffs = vec![Complex64::new(0.0, 0.0); ((n_max + 1) * (n_max + 1)) as usize];
    for (q, dir) in grid.directions.iter().enumerate() {
        let wf = grid.weights[q] * samples[q];
        for n in 0..=n_max {
            for m in -(n as i32)..=(n as i32) {
                let y = sph_harm(n, m, dir)?;
                coeffs[sh_index(n, m)] += wf * y.conj();
            }
        }
    }
    Ok(coeffs)
}

/// Flat index of (n, m) in a degree-major coefficient list.
pub fn sh_index(n: u32, m: i32) -> usize {
    (n * n) as usize + (m + n as i32) as usize
}

/// `Q(xh)` with columns `[2 Y1, -(1/sin theta) dY1/dphi, -dY1/dtheta]`,
/// `Y1 = (Y_1^{-1}, Y_1^0, Y_1^1)^T`. Nonsingular away from the poles.
pub fn q_matrix(x: &Vector3<f64>) -> Result<Matrix3<Complex64>> {
    let (_, sin_t, _) = check_direction(x)?;
    if sin_t < POLE_TOL {
        return Err(CoreError::PoleEvaluation(POLE_TOL));
    }
    let mut q = Matrix3::zeros();
    for (row, m) in (-1i32..=1).enumerate() {
        let y = sph_harm(1, m, x)?;
        let g = surf_grad_sph_harm(1, m, x)?;
        // decompose grad_S Y = (dY/dtheta) e_theta + (1/sin)(dY/dphi) e_phi
        let (cos_t, _, phi) = check_direction(x)?;
        let e_theta = Vector3::new(cos_t * phi.cos(), cos_t * phi.sin(), -sin_t);
        let e_phi = Vector3::new(-phi.sin(), phi.cos(), 0.0);
        let dtheta = g.x * e_theta.x + g.y * e_theta.y + g.z * e_theta.z;
        let dphi_scaled = g.x * e_phi.x + g.y * e_phi.y + g.z * e_phi.z; // (1/sin) dY/dphi
        q[(row, 0)] = 2.0 * y;
        q[(row, 1)] = -dphi_scaled;
        q[(row, 2)] = -dtheta;
    }
    Ok(q)
}

/// Vector multipole coefficients `d^{n,m}` on a measurement radius.
#[derive(Debug, Clone)]
pub struct MultipoleSet {
    pub coeffs: Vec<Vector3<Complex64>>,
    pub n_max: u32,
    pub r1: f64,
}

impl MultipoleSet {
    pub fn zeros(n_max: u32, r1: f64) -> Self {
        assert!(r1 > 0.0);
        MultipoleSet {
            coeffs: vec![
                Vector3::from_element(Complex64::new(0.0, 0.0));
                ((n_max + 1) * (n_max + 1)) as usize
            ],
            n_max,
            r1,
        }
    }

    pub fn get(&self, n: u32, m: i32) -> Vector3<Complex64> {
        self.coeffs[sh_index(n, m)]
    }

    pub fn set(&mut self, n: u32, m: i32, v: Vector3<Complex64>) {
        self.coeffs[sh_index(n, m)] = v;
    }
}

/// Gram-type matrix coupling the degree-n vector basis to degree-(n+1)
/// scalar harmonics: entry (q-row, (m, i)-column) is
/// `int (N_{n+1}^m)_i conj(Y_{n+1}^q) ds`.
///
/// The components of `N_{n+1}^m` are pure degree-(n+1) harmonics, so this
/// matrix captures them exactly on a grid of order >= n+2.
pub fn n_basis_degree_matrix(n: u32, grid: &SphereGrid) -> Result<DMatrix<Complex64>> {
    let p = n + 1;
    if grid.n_theta < p as usize + 1 {
        return Err(CoreError::InsufficientGridOrder {
            need: p as usize + 1,
            have: grid.n_theta,
        });
    }
    let rows = (2 * p + 1) as usize;
    let cols = 3 * (2 * n + 1) as usize;
    let mut g = DMatrix::from_element(rows, cols, Complex64::new(0.0, 0.0));
    for (qi, dir) in grid.directions.iter().enumerate() {
        let w = grid.weights[qi];
        for (mi, m) in (-(n as i32)..=(n as i32)).enumerate() {
            let nv = vector_n(n, m, dir)?;
            for (qrow, q) in (-(p as i32)..=(p as i32)).enumerate() {
                let yq = sph_harm(p, q, dir)?.conj();
                for i in 0..3 {
                    g[(qrow, 3 * mi + i)] += w * nv[i] * yq;
                }
            }
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn dir(theta: f64, phi: f64) -> Vector3<f64> {
        Vector3::new(
            theta.sin() * phi.cos(),
            theta.sin() * phi.sin(),
            theta.cos(),
        )
    }

    #[test]
    fn gauss_legendre_exactness() {
        let (x, w) = gauss_legendre(8);
        let total: f64 = w.iter().sum();
        assert_relative_eq!(total, 2.0, epsilon = 1e-14);
        // integrates x^14 exactly (degree 2n-1 = 15)
        let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(14)).sum();
        assert_relative_eq!(q, 2.0 / 15.0, epsilon = 1e-13);
    }

    #[test]
    fn grid_weight_sum() {
        let g = SphereGrid::new(12, 24);
        assert_relative_eq!(g.total_weight(), 4.0 * PI, epsilon = 1e-12);
        assert_eq!(g.len(), 12 * 24);
    }

    #[test]
    fn y00_constant() {
        for d in [dir(0.3, 1.0), dir(2.0, -0.5), Vector3::z()] {
            let y = sph_harm(0, 0, &d).unwrap();
            assert_relative_eq!(y.re, 1.0 / (2.0 * PI.sqrt()), epsilon = 1e-14);
            assert_relative_eq!(y.im, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn y10_at_north_pole() {
        let y = sph_harm(1, 0, &Vector3::z()).unwrap();
        assert_relative_eq!(y.re, (3.0 / (4.0 * PI)).sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn degree_one_explicit_forms() {
        let d = dir(1.1, 0.7);
        let (st, ct, phi) = (1.1f64.sin(), 1.1f64.cos(), 0.7f64);
        let y10 = sph_harm(1, 0, &d).unwrap();
        assert_relative_eq!(y10.re, (3.0 / (4.0 * PI)).sqrt() * ct, epsilon = 1e-13);
        let y11 = sph_harm(1, 1, &d).unwrap();
        let expect = -(3.0 / (8.0 * PI)).sqrt() * st * Complex64::from_polar(1.0, phi);
        assert_relative_eq!((y11 - expect).norm(), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn conjugation_symmetry() {
        for n in 0..6u32 {
            for m in 0..=(n as i32) {
                let d = dir(0.9, 2.3);
                let a = sph_harm(n, m, &d).unwrap();
                let b = sph_harm(n, -m, &d).unwrap();
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                assert_relative_eq!((a.conj() * sign - b).norm(), 0.0, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn orthonormality_on_grid() {
        let grid = SphereGrid::new(8, 16);
        let n_max = 4u32;
        let dim = ((n_max + 1) * (n_max + 1)) as usize;
        let mut gram = DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));
        for (q, d) in grid.directions.iter().enumerate() {
            let w = grid.weights[q];
            let mut ys = Vec::with_capacity(dim);
            for n in 0..=n_max {
                for m in -(n as i32)..=(n as i32) {
                    ys.push(sph_harm(n, m, d).unwrap());
                }
            }
            for a in 0..dim {
                for b in 0..dim {
                    gram[(a, b)] += w * ys[a] * ys[b].conj();
                }
            }
        }
        for a in 0..dim {
            for b in 0..dim {
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!(
                    (gram[(a, b)] - expect).norm() < 1e-12,
                    "gram[{a},{b}] = {}",
                    gram[(a, b)]
                );
            }
        }
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(sph_harm(1, 2, &Vector3::z()).is_err());
        assert!(sph_harm(1, 0, &Vector3::new(0.0, 0.0, 2.0)).is_err());
        assert!(surf_grad_sph_harm(2, 1, &Vector3::z()).is_err());
        assert!(q_matrix(&Vector3::z()).is_err());
    }

    #[test]
    fn surf_grad_zero_for_constant() {
        let g = surf_grad_sph_harm(0, 0, &dir(1.2, 0.4)).unwrap();
        assert_eq!(g.x.norm() + g.y.norm() + g.z.norm(), 0.0);
    }

    #[test]
    fn surf_grad_tangency() {
        for (n, m) in [(1u32, 0i32), (2, 1), (3, -2), (5, 4)] {
            let d = dir(1.0, 0.5);
            let g = surf_grad_sph_harm(n, m, &d).unwrap();
            let radial = g.x * d.x + g.y * d.y + g.z * d.z;
            assert!(radial.norm() < 1e-12, "radial component {radial}");
        }
    }

    #[test]
    fn surf_grad_matches_finite_differences() {
        // oracle: central differences along theta and phi
        let (n, m) = (2u32, 1i32);
        let (theta, phi) = (1.0f64, 0.5f64);
        let h = 1e-6;
        let fd_theta = (sph_harm(n, m, &dir(theta + h, phi)).unwrap()
            - sph_harm(n, m, &dir(theta - h, phi)).unwrap())
            / (2.0 * h);
        let fd_phi = (sph_harm(n, m, &dir(theta, phi + h)).unwrap()
            - sph_harm(n, m, &dir(theta, phi - h)).unwrap())
            / (2.0 * h);
        let d = dir(theta, phi);
        let e_theta = Vector3::new(
            theta.cos() * phi.cos(),
            theta.cos() * phi.sin(),
            -theta.sin(),
        );
        let e_phi = Vector3::new(-phi.sin(), phi.cos(), 0.0);
        let expect = Vector3::new(
            fd_theta * e_theta.x + fd_phi / theta.sin() * e_phi.x,
            fd_theta * e_theta.y + fd_phi / theta.sin() * e_phi.y,
            fd_theta * e_theta.z + fd_phi / theta.sin() * e_phi.z,
        );
        let g = surf_grad_sph_harm(n, m, &d).unwrap();
        let err = ((g.x - expect.x).norm().powi(2)
            + (g.y - expect.y).norm().powi(2)
            + (g.z - expect.z).norm().powi(2))
        .sqrt();
        assert!(err < 1e-6, "surface gradient FD error {err}");
    }

    #[test]
    fn vector_n_monopole_profile() {
        let d = dir(0.8, -1.3);
        let nv = vector_n(0, 0, &d).unwrap();
        let expect = d / (2.0 * PI.sqrt());
        for i in 0..3 {
            assert_relative_eq!(nv[i].re, expect[i], epsilon = 1e-13);
            assert_relative_eq!(nv[i].im, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn vector_n_radial_part() {
        for (n, m) in [(1u32, 1i32), (2, -1), (4, 3)] {
            let d = dir(1.3, 2.2);
            let nv = vector_n(n, m, &d).unwrap();
            let radial = nv.x * d.x + nv.y * d.y + nv.z * d.z;
            let expect = (n + 1) as f64 * sph_harm(n, m, &d).unwrap();
            assert!((radial - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn vector_n_is_solid_harmonic_gradient() {
        // -grad(Y_n^m(xh)/r^{n+1}) at r = R1 equals N_{n+1}^m / R1^{n+2},
        // checked by central finite differences of the solid harmonic.
        let (n, m) = (2u32, 1i32);
        let r1 = 1.7;
        let d = dir(1.1, 0.6);
        let x = r1 * d;
        let h = 1e-6;
        let solid = |p: Vector3<f64>| {
            let r = p.norm();
            sph_harm(n, m, &(p / r)).unwrap() / r.powi(n as i32 + 1)
        };
        let mut fd = Vector3::from_element(Complex64::new(0.0, 0.0));
        for k in 0..3 {
            let e = Vector3::ith(k, h);
            fd[k] = -(solid(x + e) - solid(x - e)) / (2.0 * h);
        }
        let expect = vector_n(n, m, &d).unwrap() / Complex64::new(r1.powi(n as i32 + 2), 0.0);
        let err = ((fd.x - expect.x).norm().powi(2)
            + (fd.y - expect.y).norm().powi(2)
            + (fd.z - expect.z).norm().powi(2))
        .sqrt();
        assert!(err < 1e-8, "solid-harmonic gradient mismatch {err}");
    }

    #[test]
    fn addition_formula_reference() {
        let x = Vector3::new(2.0, 0.0, 0.0);
        let y = Vector3::new(0.5, 0.0, 0.0);
        let got = addition_partial(&x, &y, 20).unwrap();
        let expect = 1.0 / (4.0 * PI * 1.5);
        assert!((got - expect).abs() < 1e-10, "got {got}, expect {expect}");
    }

    #[test]
    fn addition_formula_monopole_limit() {
        let x = Vector3::new(0.3, -1.1, 0.7);
        let got = addition_partial(&x, &Vector3::zeros(), 0).unwrap();
        assert_relative_eq!(got, 1.0 / (4.0 * PI * x.norm()), epsilon = 1e-14);
    }

    #[test]
    fn addition_truncation_monotone() {
        let x = Vector3::new(1.1, 0.4, -0.3);
        let y = Vector3::new(0.2, -0.3, 0.25);
        let exact = 1.0 / (4.0 * PI * (x - y).norm());
        let mut prev = f64::INFINITY;
        for n_max in [2u32, 5, 10, 15, 20] {
            let err = (addition_partial(&x, &y, n_max).unwrap() - exact).abs();
            assert!(err < prev, "not monotone at {n_max}: {err} !< {prev}");
            prev = err;
        }
        assert!(addition_partial(&y, &x, 4).is_err());
    }

    #[test]
    fn grad_expansion_monopole_and_kernel_match() {
        use crate::kernels::grad_gamma0;
        // z = 0: only the monopole term, equal to grad_gamma0(x)
        let x = 2.0 * dir(1.2, 0.3);
        let g0 = grad_gamma_expansion(&x, &Vector3::zeros(), 0).unwrap();
        let expect = grad_gamma0(&x).unwrap();
        assert!((g0 - expect).norm() < 1e-13);

        // generic z against the direct kernel
        let z = Vector3::new(0.0, 0.0, 0.5);
        let x2 = Vector3::new(0.0, 0.0, 2.0);
        let g = grad_gamma_expansion(&x2, &z, 25).unwrap();
        let e = grad_gamma0(&(x2 - z)).unwrap();
        assert!((g - e).norm() < 1e-9, "mismatch {}", (g - e).norm());

        // off-axis
        let z3 = Vector3::new(0.3, -0.2, 0.4);
        let x3 = 2.0 * dir(1.0, 2.0);
        let g3 = grad_gamma_expansion(&x3, &z3, 30).unwrap();
        let e3 = grad_gamma0(&(x3 - z3)).unwrap();
        assert!((g3 - e3).norm() < 1e-9 * e3.norm());
    }

    #[test]
    fn grad_expansion_geometric_rate() {
        use crate::kernels::grad_gamma0;
        let z = Vector3::new(0.0, 0.2, 0.45);
        let x = 2.0 * dir(0.9, -0.4);
        let exact = grad_gamma0(&(x - z)).unwrap();
        let e10 = (grad_gamma_expansion(&x, &z, 10).unwrap() - exact).norm();
        let e11 = (grad_gamma_expansion(&x, &z, 11).unwrap() - exact).norm();
        let rate = e11 / e10;
        let expect = z.norm() / x.norm();
        assert!(
            (rate - expect).abs() < 0.12,
            "rate {rate} vs |z|/|x| = {expect}"
        );
    }

    #[test]
    fn sht_isolates_modes() {
        let grid = SphereGrid::new(6, 12);
        let f: Vec<Complex64> = grid
            .directions
            .iter()
            .map(|d| sph_harm(3, 2, d).unwrap())
            .collect();
        let coeffs = sht_forward(&grid, &f, 4).unwrap();
        for n in 0..=4u32 {
            for m in -(n as i32)..=(n as i32) {
                let c = coeffs[sh_index(n, m)];
                let expect = if (n, m) == (3, 2) { 1.0 } else { 0.0 };
                assert!(
                    (c - expect).norm() < 1e-12,
                    "coeff ({n},{m}) = {c}"
                );
            }
        }
    }

    #[test]
    fn sht_linearity_and_zero() {
        let grid = SphereGrid::new(5, 10);
        let zero = vec![Complex64::new(0.0, 0.0); grid.len()];
        let coeffs = sht_forward(&grid, &zero, 3).unwrap();
        assert!(coeffs.iter().all(|c| c.norm() == 0.0));

        let f: Vec<Complex64> = grid
            .directions
            .iter()
            .map(|d| sph_harm(1, 0, d).unwrap() + 2.0 * sph_harm(2, 0, d).unwrap())
            .collect();
        let c = sht_forward(&grid, &f, 3).unwrap();
        assert!((c[sh_index(1, 0)] - 1.0).norm() < 1e-12);
        assert!((c[sh_index(2, 0)] - 2.0).norm() < 1e-12);
        assert!(sht_forward(&grid, &f, 5).is_err());
    }

    #[test]
    fn q_matrix_nonsingular_everywhere() {
        // deterministic pseudo-random directions away from the poles
        let mut state = 0x243f6a8885a308d3u64;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let theta = 0.05 + 3.04 * next();
            let phi = 2.0 * PI * next();
            let q = q_matrix(&dir(theta, phi)).unwrap();
            let det = q.determinant();
            assert!(det.norm() > 1e-3, "det {det} at theta={theta}");
        }
        let q = q_matrix(&Vector3::x()).unwrap();
        assert!(q.iter().all(|v| v.is_finite()));
        assert!(q.determinant().norm() > 1e-3);
    }

    #[test]
    fn n_basis_matrix_roundtrip() {
        // N-basis components are pure degree-(n+1) harmonics: expanding and
        // re-synthesizing reproduces the pointwise values.
        let n = 1u32;
        let grid = SphereGrid::new(6, 12);
        let g = n_basis_degree_matrix(n, &grid).unwrap();
        let p = n + 1;
        let d = dir(0.9, 1.7);
        for (mi, m) in (-(n as i32)..=(n as i32)).enumerate() {
            let direct = vector_n(n, m, &d).unwrap();
            for i in 0..3 {
                // g holds <(N)_i, Y_q>; synthesis is sum_q <f, Y_q> Y_q
                let mut synth = Complex64::new(0.0, 0.0);
                for (qrow, q) in (-(p as i32)..=(p as i32)).enumerate() {
                    synth += g[(qrow, 3 * mi + i)] * sph_harm(p, q, &d).unwrap();
                }
                assert!(
                    (synth - direct[i]).norm() < 1e-12,
                    "component {i} of N_{{{n}}}^{{{m}}}"
                );
            }
        }
    }
}
