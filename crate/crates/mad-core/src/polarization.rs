//! Polarization and moment tensors of a small inclusion, from NP resolvents
//! on the reference shape, with closed-form ball evaluation.

use crate::error::{CoreError, Result};
use crate::layer::{assemble_adjoint_np, BoundaryDensity, BoundaryOperator, ResolventSolver, Sign};
use crate::mesh::{ShapeSpec, SurfaceMesh};
use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use std::sync::Arc;

/// Relative threshold below which the shell contrast `eps_s - eps0` is
/// treated as degenerate and the eps-resolvent factor becomes the identity.
const EPS_DEGENERATE: f64 = 1e-12;

/// Background/shell material parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MediumParams {
    pub mu0: f64,
    pub eps0: f64,
    pub eps_s: f64,
    pub omega: f64,
}

impl MediumParams {
    pub fn new(mu0: f64, eps0: f64, eps_s: f64, omega: f64) -> Result<Self> {
        if mu0 <= 0.0 || eps0 <= 0.0 || eps_s <= 0.0 {
            return Err(CoreError::InvalidParams(
                "mu0, eps0, eps_s must be positive".into(),
            ));
        }
        if omega < 0.0 {
            return Err(CoreError::InvalidParams("omega must be >= 0".into()));
        }
        Ok(MediumParams {
            mu0,
            eps0,
            eps_s,
            omega,
        })
    }

    /// Shell contrast parameter `(eps_s + eps0) / (2 (eps_s - eps0))`.
    pub fn lambda_eps(&self) -> f64 {
        (self.eps_s + self.eps0) / (2.0 * (self.eps_s - self.eps0))
    }

    pub fn eps_degenerate(&self) -> bool {
        (self.eps_s - self.eps0).abs() < EPS_DEGENERATE * self.eps0
    }
}

/// A small magnetized inclusion `delta * Omega + z`.
#[derive(Debug, Clone)]
pub struct Anomaly {
    pub center: Vector3<f64>,
    pub delta: f64,
    pub shape: ShapeSpec,
    pub mu: f64,
    pub eps: f64,
    pub sigma: f64,
}

impl Anomaly {
    pub fn validate(&self, med: &MediumParams) -> Result<()> {
        if self.delta <= 0.0 {
            return Err(CoreError::InvalidParams("delta must be positive".into()));
        }
        if self.mu <= 0.0 || self.eps <= 0.0 || self.sigma < 0.0 {
            return Err(CoreError::InvalidParams(
                "mu, eps must be positive and sigma >= 0".into(),
            ));
        }
        if self.mu == med.mu0 {
            return Err(CoreError::InvalidParams(
                "anomaly permeability equals background mu0".into(),
            ));
        }
        if self.sigma > 0.0 && med.omega == 0.0 {
            return Err(CoreError::InvalidParams(
                "gamma undefined at omega=0 with sigma > 0".into(),
            ));
        }
        Ok(())
    }

    /// Complex permittivity `gamma = eps + i sigma / omega`.
    pub fn gamma(&self, med: &MediumParams) -> Complex64 {
        if self.sigma == 0.0 {
            Complex64::new(self.eps, 0.0)
        } else {
            Complex64::new(self.eps, self.sigma / med.omega)
        }
    }

    /// `lambda_mu = (mu + mu0) / (2 (mu - mu0))`.
    pub fn lambda_mu(&self, med: &MediumParams) -> f64 {
        (self.mu + med.mu0) / (2.0 * (self.mu - med.mu0))
    }

    /// `lambda_gamma = (gamma + eps_s) / (2 (gamma - eps_s))`.
    pub fn lambda_gamma(&self, med: &MediumParams) -> Result<Complex64> {
        let g = self.gamma(med);
        let den = g - med.eps_s;
        if den.norm() < EPS_DEGENERATE * med.eps_s {
            return Err(CoreError::InvalidParams(
                "gamma equals eps_s: lambda_gamma undefined".into(),
            ));
        }
        Ok((g + med.eps_s) / (2.0 * den))
    }
}

/// Which leading-order tensor the forward model uses.
///
/// `Full` is the frequency bookkeeping combination `mu0 M - eps0 D - P0`;
/// `Magnetostatic` is the classical transmission-problem dipole tensor
/// `-(mu - mu0) M_static`, the normalization validated against the analytic
/// ball solution and the finite-size oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorModel {
    Full,
    Magnetostatic,
}

/// The four 3x3 tensors of one anomaly. `p == mu0 * m - eps0 * d - p0`
/// holds exactly as stored.
#[derive(Debug, Clone)]
pub struct PolarizationTensors {
    pub p0: Matrix3<f64>,
    pub d: Matrix3<Complex64>,
    pub m: Matrix3<Complex64>,
    pub p: Matrix3<Complex64>,
}

impl PolarizationTensors {
    pub fn combine(
        p0: Matrix3<f64>,
        d: Matrix3<Complex64>,
        m: Matrix3<Complex64>,
        med: &MediumParams,
    ) -> Self {
        let p = m * Complex64::new(med.mu0, 0.0)
            - d * Complex64::new(med.eps0, 0.0)
            - p0.map(|x| Complex64::new(x, 0.0));
        PolarizationTensors { p0, d, m, p }
    }
}

/// Area-weighted first moment `int y phi(y) ds` over panel centroids.
fn moment_column(mesh: &SurfaceMesh, phi: &BoundaryDensity) -> Vector3<Complex64> {
    let mut out = Vector3::from_element(Complex64::new(0.0, 0.0));
    for j in 0..mesh.num_triangles() {
        let w = phi.values[j] * mesh.areas[j];
        out.x += w * mesh.centroids[j].x;
        out.y += w * mesh.centroids[j].y;
        out.z += w * mesh.centroids[j].z;
    }
    out
}

/// Shared assembly for the tensor family on one reference mesh.
pub struct PolarizationContext {
    pub mesh: Arc<SurfaceMesh>,
    pub kstar: BoundaryOperator,
}

impl PolarizationContext {
    pub fn new(mesh: Arc<SurfaceMesh>) -> Self {
        let kstar = assemble_adjoint_np(&mesh);
        PolarizationContext { mesh, kstar }
    }

    /// The eps-factor pair `(eps_s/(eps_s-eps0)) (lambda_eps I - K*)^-1 [nu_k]`,
    /// replaced by `nu_k` itself in the degenerate shell limit.
    fn eps_factor_columns(&self, med: &MediumParams) -> Result<[BoundaryDensity; 3]> {
        let cols = if med.eps_degenerate() {
            [
                BoundaryDensity::normal_component(&self.mesh, 0),
                BoundaryDensity::normal_component(&self.mesh, 1),
                BoundaryDensity::normal_component(&self.mesh, 2),
            ]
        } else {
            let solver = ResolventSolver::new(
                &self.kstar,
                Complex64::new(med.lambda_eps(), 0.0),
                Sign::Minus,
            )?;
            let scale = Complex64::new(med.eps_s / (med.eps_s - med.eps0), 0.0);
            let mut out = Vec::with_capacity(3);
            for k in 0..3 {
                let rhs = BoundaryDensity::normal_component(&self.mesh, k);
                let mut phi = solver.solve(&rhs)?;
                phi.values *= scale;
                out.push(phi);
            }
            match <[BoundaryDensity; 3]>::try_from(out) {
                Ok(a) => a,
                Err(_) => unreachable!(),
            }
        };
        Ok(cols)
    }

    /// `P0`: columns `int y (lambda_eps I - K*)^-1 [nu_k] ds`; zero in the
    /// degenerate shell limit.
    pub fn tensor_p0(&self, med: &MediumParams) -> Result<Matrix3<f64>> {
        if med.eps_degenerate() {
            return Ok(Matrix3::zeros());
        }
        let solver = ResolventSolver::new(
            &self.kstar,
            Complex64::new(med.lambda_eps(), 0.0),
            Sign::Minus,
        )?;
        let mut p0 = Matrix3::zeros();
        for k in 0..3 {
            let rhs = BoundaryDensity::normal_component(&self.mesh, k);
            let phi = solver.solve(&rhs)?;
            let col = moment_column(&self.mesh, &phi);
            for i in 0..3 {
                p0[(i, k)] = col[i].re;
            }
        }
        Ok(p0)
    }

    /// `D`: columns `(1/(gamma-eps_s)) int y (lambda_gamma I + K*)^-1 R_eps [nu_k] ds`.
    pub fn tensor_d(&self, anomaly: &Anomaly, med: &MediumParams) -> Result<Matrix3<Complex64>> {
        anomaly.validate(med)?;
        let lambda_gamma = anomaly.lambda_gamma(med)?;
        let pref = 1.0 / (anomaly.gamma(med) - med.eps_s);
        let r_eps = self.eps_factor_columns(med)?;
        let solver = ResolventSolver::new(&self.kstar, lambda_gamma, Sign::Plus)?;
        let mut d = Matrix3::zeros();
        for (k, rhs) in r_eps.iter().enumerate() {
            let phi = solver.solve(rhs)?;
            let col = moment_column(&self.mesh, &phi);
            for i in 0..3 {
                d[(i, k)] = pref * col[i];
            }
        }
        Ok(d)
    }

    /// `M`: columns `(1/(mu-mu0)) int y (lambda_mu I - K*)^-1 R_eps [nu_k] ds`.
    pub fn tensor_m(&self, anomaly: &Anomaly, med: &MediumParams) -> Result<Matrix3<Complex64>> {
        anomaly.validate(med)?;
        let lambda_mu = anomaly.lambda_mu(med);
        let pref = Complex64::new(1.0 / (anomaly.mu - med.mu0), 0.0);
        let r_eps = self.eps_factor_columns(med)?;
        let solver =
            ResolventSolver::new(&self.kstar, Complex64::new(lambda_mu, 0.0), Sign::Minus)?;
        let mut m = Matrix3::zeros();
        for (k, rhs) in r_eps.iter().enumerate() {
            let phi = solver.solve(rhs)?;
            let col = moment_column(&self.mesh, &phi);
            for i in 0..3 {
                m[(i, k)] = pref * col[i];
            }
        }
        Ok(m)
    }

    /// All four tensors; `p = mu0 m - eps0 d - p0` exactly as stored.
    /// The shared eps-resolvent is factored once.
    pub fn tensor_p(&self, anomaly: &Anomaly, med: &MediumParams) -> Result<PolarizationTensors> {
        anomaly.validate(med)?;
        let (p0, r_eps) = if med.eps_degenerate() {
            (
                Matrix3::zeros(),
                [
                    BoundaryDensity::normal_component(&self.mesh, 0),
                    BoundaryDensity::normal_component(&self.mesh, 1),
                    BoundaryDensity::normal_component(&self.mesh, 2),
                ],
            )
        } else {
            let eps_solver = ResolventSolver::new(
                &self.kstar,
                Complex64::new(med.lambda_eps(), 0.0),
                Sign::Minus,
            )?;
            let scale = Complex64::new(med.eps_s / (med.eps_s - med.eps0), 0.0);
            let mut p0 = Matrix3::zeros();
            let mut cols = Vec::with_capacity(3);
            for k in 0..3 {
                let rhs = BoundaryDensity::normal_component(&self.mesh, k);
                let phi = eps_solver.solve(&rhs)?;
                let col = moment_column(&self.mesh, &phi);
                for i in 0..3 {
                    p0[(i, k)] = col[i].re;
                }
                let mut scaled = phi;
                scaled.values *= scale;
                cols.push(scaled);
            }
            let arr = match <[BoundaryDensity; 3]>::try_from(cols) {
                Ok(a) => a,
                Err(_) => unreachable!(),
            };
            (p0, arr)
        };

        let pref_d = 1.0 / (anomaly.gamma(med) - med.eps_s);
        let d_solver = ResolventSolver::new(&self.kstar, anomaly.lambda_gamma(med)?, Sign::Plus)?;
        let pref_m = Complex64::new(1.0 / (anomaly.mu - med.mu0), 0.0);
        let m_solver = ResolventSolver::new(
            &self.kstar,
            Complex64::new(anomaly.lambda_mu(med), 0.0),
            Sign::Minus,
        )?;
        let mut d = Matrix3::zeros();
        let mut m = Matrix3::zeros();
        for (k, rhs) in r_eps.iter().enumerate() {
            let col_d = moment_column(&self.mesh, &d_solver.solve(rhs)?);
            let col_m = moment_column(&self.mesh, &m_solver.solve(rhs)?);
            for i in 0..3 {
                d[(i, k)] = pref_d * col_d[i];
                m[(i, k)] = pref_m * col_m[i];
            }
        }
        Ok(PolarizationTensors::combine(p0, d, m, med))
    }

    /// Classical magnetostatic dipole tensor `-(mu - mu0) M_static`
    /// = `-int y (lambda_mu I - K*)^-1 [nu] ds`, the combination that
    /// reproduces the transmission-problem exterior field.
    pub fn tensor_p_static(&self, anomaly: &Anomaly, med: &MediumParams) -> Result<Matrix3<f64>> {
        anomaly.validate(med)?;
        let lambda_mu = anomaly.lambda_mu(med);
        let solver =
            ResolventSolver::new(&self.kstar, Complex64::new(lambda_mu, 0.0), Sign::Minus)?;
        let mut p = Matrix3::zeros();
        for k in 0..3 {
            let rhs = BoundaryDensity::normal_component(&self.mesh, k);
            let phi = solver.solve(&rhs)?;
            let col = moment_column(&self.mesh, &phi);
            for i in 0..3 {
                p[(i, k)] = -col[i].re;
            }
        }
        Ok(p)
    }
}

/// `P0` on a mesh (one-shot; see [`PolarizationContext`] for reuse).
pub fn tensor_p0(mesh: &Arc<SurfaceMesh>, med: &MediumParams) -> Result<Matrix3<f64>> {
    PolarizationContext::new(mesh.clone()).tensor_p0(med)
}

pub fn tensor_d(
    mesh: &Arc<SurfaceMesh>,
    anomaly: &Anomaly,
    med: &MediumParams,
) -> Result<Matrix3<Complex64>> {
    PolarizationContext::new(mesh.clone()).tensor_d(anomaly, med)
}

pub fn tensor_m(
    mesh: &Arc<SurfaceMesh>,
    anomaly: &Anomaly,
    med: &MediumParams,
) -> Result<Matrix3<Complex64>> {
    PolarizationContext::new(mesh.clone()).tensor_m(anomaly, med)
}

pub fn tensor_p(
    mesh: &Arc<SurfaceMesh>,
    anomaly: &Anomaly,
    med: &MediumParams,
) -> Result<PolarizationTensors> {
    PolarizationContext::new(mesh.clone()).tensor_p(anomaly, med)
}

/// Unit-ball volume.
pub const BALL_VOLUME: f64 = 4.0 * std::f64::consts::PI / 3.0;

/// Scalar Moebius coefficients of the ball tensor in the permeability:
/// `p(mu) = (a mu + b)/(c mu + d)` with `P = p(mu) I` (volume factor
/// included, anomaly scale excluded).
pub fn ball_p_scalar_coefficients(
    gamma: Complex64,
    med: &MediumParams,
    model: TensorModel,
) -> (Complex64, Complex64, Complex64, Complex64) {
    match model {
        TensorModel::Full => {
            // P/|Omega| = T1/(mu + 2 mu0) + W, continuous at eps_s = eps0
            let t1 = 9.0 * med.mu0 * med.eps_s / (med.eps_s + 2.0 * med.eps0);
            let w = -9.0 * med.eps0 * med.eps_s
                / ((2.0 * gamma + med.eps_s) * (med.eps_s + 2.0 * med.eps0))
                - 3.0 * (med.eps_s - med.eps0) / (med.eps_s + 2.0 * med.eps0);
            (
                w * BALL_VOLUME,
                (w * 2.0 * med.mu0 + t1) * BALL_VOLUME,
                Complex64::new(1.0, 0.0),
                Complex64::new(2.0 * med.mu0, 0.0),
            )
        }
        TensorModel::Magnetostatic => (
            Complex64::new(-3.0 * BALL_VOLUME, 0.0),
            Complex64::new(3.0 * med.mu0 * BALL_VOLUME, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(2.0 * med.mu0, 0.0),
        ),
    }
}

/// Closed-form ball tensor, term by term through the sphere eigenrelation
/// `K*[nu] = nu/6`:
///
/// `P = [9 mu0 eps_s/((mu+2mu0)(eps_s+2eps0))
///       - 9 eps0 eps_s/((2gamma+eps_s)(eps_s+2eps0))
///       - 3(eps_s-eps0)/(eps_s+2eps0)] |Omega| I`.
///
/// The expression is continuous at the degenerate shell limit, which it
/// attains exactly.
pub fn ball_p_closed_form(
    anomaly: &Anomaly,
    med: &MediumParams,
    model: TensorModel,
) -> Result<Matrix3<Complex64>> {
    if !anomaly.shape.is_ball() {
        return Err(CoreError::InvalidShape(
            "closed form requires the unit-ball shape".into(),
        ));
    }
    anomaly.validate(med)?;
    let gamma = anomaly.gamma(med);
    let (a, b, c, d) = ball_p_scalar_coefficients(gamma, med, model);
    let mu = Complex64::new(anomaly.mu, 0.0);
    let p = (a * mu + b) / (c * mu + d);
    Ok(Matrix3::from_diagonal(&Vector3::from_element(p)))
}

/// SVD-based singularity check: singular iff the smallest singular value is
/// below `1e-10` times the largest.
pub fn check_nonsingular(p: &Matrix3<Complex64>) -> bool {
    let svd = p.svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    smax > 0.0 && smin >= 1e-10 * smax
}
