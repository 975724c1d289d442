//! Brute-force validation: exact magnetostatic transmission solve on the
//! finite-size anomaly mesh, and the measured gap to the dipole asymptotics.

use crate::background::BackgroundField;
use crate::error::Result;
use crate::harmonics::SphereGrid;
use crate::kernels;
use crate::layer::{
    assemble_adjoint_np, eval_grad_single_layer, BoundaryDensity, ResolventSolver, Sign,
};
use crate::mesh::{make_mesh, scale_translate, SurfaceMesh};
use crate::polarization::{ball_p_closed_form, Anomaly, MediumParams, PolarizationContext, TensorModel};
use nalgebra::{DVector, Matrix3, Vector3};
use num_complex::Complex64;
use std::sync::Arc;

/// Solution of the permeability transmission problem on one inclusion.
pub struct TransmissionSolution {
    pub mesh: Arc<SurfaceMesh>,
    pub density: BoundaryDensity,
    /// Set when the background is negligible on the inclusion boundary
    /// (the solve proceeds; the exterior perturbation is then near zero).
    pub background_weak: bool,
}

impl TransmissionSolution {
    /// Exterior perturbation `grad S[phi](x)`.
    pub fn eval(&self, x: &Vector3<f64>) -> Result<Vector3<f64>> {
        let g = eval_grad_single_layer(&self.mesh, &self.density, x)?;
        Ok(Vector3::new(g.x.re, g.y.re, g.z.re))
    }
}

/// Solves `(lambda_mu I - K*) phi = nu . H0` on the true anomaly boundary
/// `delta Omega + z`, with the background evaluated at element centroids.
pub fn solve_transmission(
    anomaly: &Anomaly,
    med: &MediumParams,
    bg: &BackgroundField,
) -> Result<TransmissionSolution> {
    anomaly.validate(med)?;
    let reference = make_mesh(&anomaly.shape)?;
    let mesh = Arc::new(scale_translate(&reference, anomaly.delta, &anomaly.center)?);
    let kstar = assemble_adjoint_np(&mesh);
    let mut rhs_values = DVector::zeros(mesh.num_triangles());
    let mut max_h = 0.0f64;
    for j in 0..mesh.num_triangles() {
        let h = bg.eval(&mesh.centroids[j])?;
        max_h = max_h.max(h.norm());
        rhs_values[j] = mesh.normals[j].dot(&h);
    }
    let background_weak = max_h < 1e-14;
    let rhs = BoundaryDensity::from_real(mesh.clone(), rhs_values)?;
    let solver = ResolventSolver::new(
        &kstar,
        Complex64::new(anomaly.lambda_mu(med), 0.0),
        Sign::Minus,
    )?;
    let density = solver.solve(&rhs)?;
    Ok(TransmissionSolution {
        mesh,
        density,
        background_weak,
    })
}

/// Magnetostatic dipole tensor of the anomaly shape: the exact ball closed
/// form, or the boundary-element tensor for other shapes.
pub fn static_tensor(anomaly: &Anomaly, med: &MediumParams) -> Result<Matrix3<f64>> {
    if anomaly.shape.is_ball() {
        Ok(ball_p_closed_form(anomaly, med, TensorModel::Magnetostatic)?.map(|c| c.re))
    } else {
        let mesh = Arc::new(make_mesh(&anomaly.shape)?);
        PolarizationContext::new(mesh).tensor_p_static(anomaly, med)
    }
}

/// Relative sup-norm gap between the dipole asymptotics (magnetostatic
/// tensor `P_static`, background frozen at the center) and the transmission
/// oracle, over a measurement grid at radius `r1`:
/// `max_q |dH_asym - dH_oracle| / max_q |dH_oracle|`.
pub fn asymptotic_error(
    anomaly: &Anomaly,
    med: &MediumParams,
    bg: &BackgroundField,
    grid: &SphereGrid,
    r1: f64,
) -> Result<f64> {
    let oracle = solve_transmission(anomaly, med, bg)?;
    let p_static = static_tensor(anomaly, med)?;
    let h0 = bg.eval(&anomaly.center)?;
    let moment = anomaly.delta.powi(3) * (p_static.transpose() * h0);
    let mut max_diff = 0.0f64;
    let mut max_oracle = 0.0f64;
    for dir in &grid.directions {
        let x = dir * r1;
        let exact = oracle.eval(&x)?;
        let asym = kernels::hess_gamma0(&(x - anomaly.center))? * moment;
        max_diff = max_diff.max((asym - exact).norm());
        max_oracle = max_oracle.max(exact.norm());
    }
    Ok(max_diff / max_oracle.max(f64::MIN_POSITIVE))
}

/// Least-squares dipole moment fitted to the oracle exterior field on a grid.
pub fn fit_dipole_moment(
    solution: &TransmissionSolution,
    center: &Vector3<f64>,
    grid: &SphereGrid,
    r1: f64,
) -> Result<Vector3<f64>> {
    let mut ata = Matrix3::<f64>::zeros();
    let mut atb = Vector3::<f64>::zeros();
    for dir in &grid.directions {
        let x = dir * r1;
        let h = kernels::hess_gamma0(&(x - center))?;
        let b = solution.eval(&x)?;
        ata += h.transpose() * h;
        atb += h.transpose() * b;
    }
    Ok(ata.try_inverse().expect("dipole normal matrix singular") * atb)
}
