//! Steady background field: uniform, point dipole, or reconstructed from a
//! normal trace on a core boundary through the exterior Neumann problem.

use crate::error::{CoreError, Result};
use crate::kernels;
use crate::layer::{
    assemble_adjoint_np, eval_grad_single_layer_unchecked, BoundaryDensity, ResolventSolver, Sign,
};
use crate::mesh::SurfaceMesh;
use nalgebra::{DVector, Vector3};
use num_complex::Complex64;
use std::sync::Arc;

/// Curl- and divergence-free background field H0.
#[derive(Clone)]
pub enum BackgroundField {
    Uniform {
        h: Vector3<f64>,
    },
    /// `H(x) = hess_gamma0(x - center) . moment`.
    Dipole {
        moment: Vector3<f64>,
        center: Vector3<f64>,
    },
    /// Gradient of a single-layer potential on the core boundary with density
    /// `(I/2 + K*)^-1 [g]`, `g` the normal trace of the field on the core.
    CoreTrace(Arc<CoreTraceField>),
}

pub struct CoreTraceField {
    pub mesh: Arc<SurfaceMesh>,
    pub density: BoundaryDensity,
    /// Surface mean subtracted from the supplied trace (zero-flux repair).
    pub mean_removed: f64,
}

impl std::fmt::Debug for BackgroundField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BackgroundField::Uniform { h } => write!(f, "Uniform({h:?})"),
            BackgroundField::Dipole { moment, center } => {
                write!(f, "Dipole(moment={moment:?}, center={center:?})")
            }
            BackgroundField::CoreTrace(ct) => write!(
                f,
                "CoreTrace({} panels, mean_removed={:.3e})",
                ct.mesh.num_triangles(),
                ct.mean_removed
            ),
        }
    }
}

impl BackgroundField {
    pub fn uniform(h: Vector3<f64>) -> Self {
        BackgroundField::Uniform { h }
    }

    pub fn dipole(moment: Vector3<f64>, center: Vector3<f64>) -> Self {
        BackgroundField::Dipole { moment, center }
    }

    /// Builds the core-trace branch from per-panel samples of `nu . H0` on
    /// the core mesh. A nonzero surface mean is unphysical for the normal
    /// trace of a divergence-free field on a closed surface; it is removed
    /// and recorded.
    pub fn core_trace(mesh: Arc<SurfaceMesh>, g: DVector<f64>) -> Result<Self> {
        if g.len() != mesh.num_triangles() {
            return Err(CoreError::InvalidParams(format!(
                "trace length {} != panel count {}",
                g.len(),
                mesh.num_triangles()
            )));
        }
        let total_area: f64 = mesh.total_area;
        let mean = g
            .iter()
            .zip(&mesh.areas)
            .map(|(v, a)| v * a)
            .sum::<f64>()
            / total_area;
        let g0 = DVector::from_fn(g.len(), |i, _| g[i] - mean);
        let kstar = assemble_adjoint_np(&mesh);
        let solver = ResolventSolver::new(&kstar, Complex64::new(0.5, 0.0), Sign::Plus)?;
        let rhs = BoundaryDensity::from_real(mesh.clone(), g0)?;
        let density = solver.solve(&rhs)?;
        Ok(BackgroundField::CoreTrace(Arc::new(CoreTraceField {
            mesh,
            density,
            mean_removed: mean,
        })))
    }

    /// Field value. The core-trace branch requires `x` at least two element
    /// diameters away from the core surface.
    pub fn eval(&self, x: &Vector3<f64>) -> Result<Vector3<f64>> {
        match self {
            BackgroundField::Uniform { h } => Ok(*h),
            BackgroundField::Dipole { moment, center } => {
                Ok(kernels::hess_gamma0(&(x - center))? * moment)
            }
            BackgroundField::CoreTrace(ct) => {
                let min_dist = ct
                    .mesh
                    .centroids
                    .iter()
                    .map(|c| (x - c).norm())
                    .fold(f64::INFINITY, f64::min);
                let limit = 2.0 * ct.mesh.max_element_diameter();
                if min_dist < limit {
                    return Err(CoreError::InsideCore);
                }
                let g = eval_grad_single_layer_unchecked(&ct.mesh, &ct.density, x);
                Ok(Vector3::new(g.x.re, g.y.re, g.z.re))
            }
        }
    }
}

/// Central finite-difference divergence and curl norm at a probe point.
pub fn validate_harmonic(
    bg: &BackgroundField,
    probe: &Vector3<f64>,
    h: f64,
) -> Result<(f64, f64)> {
    let mut jac = [[0.0; 3]; 3];
    for k in 0..3 {
        let e = Vector3::ith(k, h);
        let fp = bg.eval(&(probe + e))?;
        let fm = bg.eval(&(probe - e))?;
        for i in 0..3 {
            jac[i][k] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    let div = jac[0][0] + jac[1][1] + jac[2][2];
    let curl = Vector3::new(
        jac[2][1] - jac[1][2],
        jac[0][2] - jac[2][0],
        jac[1][0] - jac[0][1],
    );
    Ok((div, curl.norm()))
}

/// Errors when the background is negligible at any of the given points
/// (the inversion theory needs a nonvanishing background at the centers).
pub fn nonvanishing_guard(bg: &BackgroundField, points: &[Vector3<f64>]) -> Result<()> {
    if points.is_empty() {
        return Ok(());
    }
    let reference = points
        .iter()
        .map(|p| bg.eval(p).map(|v| v.norm()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0f64, f64::max)
        .max(match bg {
            BackgroundField::Uniform { h } => h.norm(),
            _ => 0.0,
        });
    for p in points {
        let v = bg.eval(p)?;
        if v.norm() < 1e-10 * reference.max(f64::MIN_POSITIVE) {
            return Err(CoreError::BackgroundVanishes([p.x, p.y, p.z]));
        }
    }
    Ok(())
}
