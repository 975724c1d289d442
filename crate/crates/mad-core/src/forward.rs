//! Leading-order perturbed field, direct multipole coefficients, measurement
//! sampling on the sphere, and noise synthesis.

use crate::background::{nonvanishing_guard, BackgroundField};
use crate::error::{CoreError, Result};
use crate::harmonics::{
    n_basis_degree_matrix, sh_index, sph_harm, vector_n, MultipoleSet, SphereGrid,
};
use crate::kernels;
use crate::mesh::make_mesh;
use crate::polarization::{
    ball_p_closed_form, Anomaly, MediumParams, PolarizationContext, PolarizationTensors,
    TensorModel, BALL_VOLUME,
};
use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::io::{BufRead, Write};
use std::sync::Arc;

/// Measurement sphere and noise configuration.
#[derive(Debug, Clone)]
pub struct Measurement {
    pub r1: f64,
    pub n_theta: usize,
    pub n_phi: usize,
    pub noise_level: f64,
    pub seed: u64,
}

/// A complete forward configuration.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub medium: MediumParams,
    pub background: BackgroundField,
    pub anomalies: Vec<Anomaly>,
    pub measurement: Measurement,
    pub model: TensorModel,
}

impl Scenario {
    /// Enforces the sparse-anomaly geometry: pairwise separation at least ten
    /// times the larger scale, every anomaly strictly inside the measurement
    /// sphere, valid material parameters.
    pub fn validate(&self) -> Result<()> {
        if self.measurement.r1 <= 0.0 {
            return Err(CoreError::ScenarioInvariant(
                "measurement radius must be positive".into(),
            ));
        }
        if self.measurement.noise_level < 0.0 {
            return Err(CoreError::NegativeNoise(self.measurement.noise_level));
        }
        for (l, a) in self.anomalies.iter().enumerate() {
            a.validate(&self.medium)?;
            if a.center.norm() + a.delta >= self.measurement.r1 {
                return Err(CoreError::ScenarioInvariant(format!(
                    "anomaly {l} not strictly inside the measurement sphere"
                )));
            }
            for (k, b) in self.anomalies.iter().enumerate().skip(l + 1) {
                let sep = (a.center - b.center).norm();
                let need = 10.0 * a.delta.max(b.delta);
                if sep < need {
                    return Err(CoreError::ScenarioInvariant(format!(
                        "anomalies {l} and {k} too close: {sep:.3e} < {need:.3e}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Per-anomaly tensors. Unit-ball shapes use the exact closed form (the
    /// route the mesh tensors are checked against); ellipsoids go through the
    /// boundary-element machinery on their reference mesh.
    pub fn compute_tensors(&self) -> Result<Vec<PolarizationTensors>> {
        self.validate()?;
        let mut out = Vec::with_capacity(self.anomalies.len());
        for a in &self.anomalies {
            out.push(self.tensor_for(a)?);
        }
        Ok(out)
    }

    fn tensor_for(&self, a: &Anomaly) -> Result<PolarizationTensors> {
        let med = &self.medium;
        match self.model {
            TensorModel::Full => {
                if a.shape.is_ball() {
                    let gamma = a.gamma(med);
                    let vol = BALL_VOLUME;
                    let p0_s = 3.0 * (med.eps_s - med.eps0) / (med.eps_s + 2.0 * med.eps0) * vol;
                    let d_s = 9.0 * med.eps_s
                        / ((2.0 * gamma + med.eps_s) * (med.eps_s + 2.0 * med.eps0))
                        * vol;
                    let m_s = 9.0 * med.eps_s
                        / ((a.mu + 2.0 * med.mu0) * (med.eps_s + 2.0 * med.eps0))
                        * vol;
                    let p0 = Matrix3::from_diagonal_element(p0_s);
                    let d = Matrix3::from_diagonal(&Vector3::from_element(d_s));
                    let m = Matrix3::from_diagonal(&Vector3::from_element(Complex64::new(m_s, 0.0)));
                    let t = PolarizationTensors::combine(p0, d, m, med);
                    debug_assert!(
                        (t.p[(0, 0)] - ball_p_closed_form(a, med, TensorModel::Full)?[(0, 0)])
                            .norm()
                            < 1e-12
                    );
                    Ok(t)
                } else {
                    let mesh = Arc::new(make_mesh(&a.shape)?);
                    PolarizationContext::new(mesh).tensor_p(a, med)
                }
            }
            TensorModel::Magnetostatic => {
                let p = if a.shape.is_ball() {
                    ball_p_closed_form(a, med, TensorModel::Magnetostatic)?
                } else {
                    let mesh = Arc::new(make_mesh(&a.shape)?);
                    PolarizationContext::new(mesh)
                        .tensor_p_static(a, med)?
                        .map(|x| Complex64::new(x, 0.0))
                };
                // store M = P/mu0 so the combination identity stays exact
                let m = p / Complex64::new(med.mu0, 0.0);
                Ok(PolarizationTensors::combine(
                    Matrix3::zeros(),
                    Matrix3::zeros(),
                    m,
                    med,
                ))
            }
        }
    }

    /// Effective dipole moments `m_l = delta_l^3 P_l^T H0(z_l)`, the quantity
    /// every downstream consumer (multipoles, sampling, inversion) shares.
    pub fn effective_moments(
        &self,
        tensors: &[PolarizationTensors],
    ) -> Result<Vec<Vector3<Complex64>>> {
        assert_eq!(tensors.len(), self.anomalies.len());
        let mut out = Vec::with_capacity(self.anomalies.len());
        for (a, t) in self.anomalies.iter().zip(tensors) {
            let h = self.background.eval(&a.center)?;
            let m = t.p.transpose() * to_complex_vec(&h) * Complex64::new(a.delta.powi(3), 0.0);
            out.push(m);
        }
        Ok(out)
    }

    pub fn grid(&self) -> SphereGrid {
        SphereGrid::new(self.measurement.n_theta, self.measurement.n_phi)
    }
}

/// Field samples (the perturbation `delta H`) on the measurement sphere.
#[derive(Debug, Clone)]
pub struct FieldSamples {
    pub grid: SphereGrid,
    pub r1: f64,
    pub values: Vec<Vector3<Complex64>>,
}

impl FieldSamples {
    pub fn node_position(&self, q: usize) -> Vector3<f64> {
        self.grid.directions[q] * self.r1
    }

    /// Root-mean-square field magnitude over nodes.
    pub fn rms(&self) -> f64 {
        let s: f64 = self
            .values
            .iter()
            .map(|v| v.x.norm_sqr() + v.y.norm_sqr() + v.z.norm_sqr())
            .sum();
        (s / self.values.len() as f64).sqrt()
    }

    pub fn is_effectively_real(&self) -> bool {
        let scale = self.rms().max(f64::MIN_POSITIVE);
        self.values
            .iter()
            .all(|v| v.x.im.abs() + v.y.im.abs() + v.z.im.abs() < 1e-12 * scale)
    }
}

pub(crate) fn to_complex_vec(m: &Vector3<f64>) -> Vector3<Complex64> {
    Vector3::new(
        Complex64::new(m.x, 0.0),
        Complex64::new(m.y, 0.0),
        Complex64::new(m.z, 0.0),
    )
}

/// Dipole-sum perturbation `sum_l hess_gamma0(x - z_l) m_l` with the
/// effective moments `m_l` (anomaly scale included).
pub fn perturbation_from_moments(
    centers: &[Vector3<f64>],
    moments: &[Vector3<Complex64>],
    x: &Vector3<f64>,
) -> Result<Vector3<Complex64>> {
    let mut out = Vector3::from_element(Complex64::new(0.0, 0.0));
    for (z, m) in centers.iter().zip(moments) {
        let h = kernels::hess_gamma0(&(x - z))?;
        for i in 0..3 {
            for j in 0..3 {
                out[i] += Complex64::new(h[(i, j)], 0.0) * m[j];
            }
        }
    }
    Ok(out)
}

/// Leading-order perturbation at a point; errors if the probe is within ten
/// anomaly scales of any center.
pub fn asymptotic_perturbation(
    scenario: &Scenario,
    tensors: &[PolarizationTensors],
    x: &Vector3<f64>,
) -> Result<Vector3<Complex64>> {
    for a in &scenario.anomalies {
        let dist = (x - a.center).norm();
        if dist < 10.0 * a.delta {
            return Err(CoreError::PointTooClose {
                dist,
                min_dist: 10.0 * a.delta,
            });
        }
    }
    let centers: Vec<Vector3<f64>> = scenario.anomalies.iter().map(|a| a.center).collect();
    let moments = scenario.effective_moments(tensors)?;
    perturbation_from_moments(&centers, &moments, x)
}

/// Direct multipole coefficients
/// `d^{n,m} = sum_l conj(Y_n^m(zh_l)) |z_l|^n m_l` with the effective moments.
pub fn multipole_direct(
    scenario: &Scenario,
    tensors: &[PolarizationTensors],
    n_max: u32,
) -> Result<MultipoleSet> {
    let centers: Vec<Vector3<f64>> = scenario.anomalies.iter().map(|a| a.center).collect();
    nonvanishing_guard(&scenario.background, &centers)?;
    let moments = scenario.effective_moments(tensors)?;
    multipoles_from_moments(&centers, &moments, n_max, scenario.measurement.r1)
}

pub fn multipoles_from_moments(
    centers: &[Vector3<f64>],
    moments: &[Vector3<Complex64>],
    n_max: u32,
    r1: f64,
) -> Result<MultipoleSet> {
    let mut d = MultipoleSet::zeros(n_max, r1);
    for (z, m) in centers.iter().zip(moments) {
        let rz = z.norm();
        let zh = if rz == 0.0 { Vector3::z() } else { z / rz };
        let mut radial = 1.0; // |z|^n, with 0^0 = 1 (removable limit at n = 0)
        for n in 0..=n_max {
            for mm in -(n as i32)..=(n as i32) {
                let y = sph_harm(n, mm, &zh)?.conj();
                let w = y * radial;
                let idx = sh_index(n, mm);
                d.coeffs[idx].x += w * m.x;
                d.coeffs[idx].y += w * m.y;
                d.coeffs[idx].z += w * m.z;
            }
            radial *= rz;
        }
    }
    Ok(d)
}

/// Scalar potential reconstruction on the measurement sphere:
/// `sum_{n,m} N_{n+1}^m(xh)^T d^{n,m} / ((2n+1) R1^{n+2})`.
pub fn reconstruct_scalar_from_multipoles(d: &MultipoleSet, xh: &Vector3<f64>) -> Result<Complex64> {
    let mut sum = Complex64::new(0.0, 0.0);
    let mut radial = 1.0 / (d.r1 * d.r1);
    for n in 0..=d.n_max {
        let f = radial / (2.0 * n as f64 + 1.0);
        for m in -(n as i32)..=(n as i32) {
            let nv = vector_n(n, m, xh)?;
            let c = d.get(n, m);
            sum += (nv.x * c.x + nv.y * c.y + nv.z * c.z) * f;
        }
        radial /= d.r1;
    }
    Ok(sum)
}

/// Vector field reconstruction from a multipole set: the gradient of the
/// reconstructed exterior potential, evaluated through the degree-(n+1)
/// scalar coefficients so only `Y` and `grad_S Y` are required.
pub fn reconstruct_field_from_multipoles(
    d: &MultipoleSet,
    grid: &SphereGrid,
) -> Result<Vec<Vector3<Complex64>>> {
    // the Gram matrices need exact degree-(n+1) quadrature; the evaluation
    // grid itself carries no order requirement
    let quad = SphereGrid::new(d.n_max as usize + 2, 2 * (d.n_max as usize + 2));
    // ghat_{p,q} = sum_m G_n[q,(m,.)] d^{n,m} / (2n+1), p = n+1
    let mut ghat: Vec<Vec<Complex64>> = Vec::with_capacity(d.n_max as usize + 1);
    for n in 0..=d.n_max {
        let g = n_basis_degree_matrix(n, &quad)?;
        let p = n + 1;
        let mut band = vec![Complex64::new(0.0, 0.0); (2 * p + 1) as usize];
        for (qrow, item) in band.iter_mut().enumerate() {
            let mut s = Complex64::new(0.0, 0.0);
            for (mi, m) in (-(n as i32)..=(n as i32)).enumerate() {
                let c = d.get(n, m);
                for i in 0..3 {
                    s += g[(qrow, 3 * mi + i)] * c[i];
                }
            }
            *item = s / (2.0 * n as f64 + 1.0);
        }
        ghat.push(band);
    }
    let mut out = Vec::with_capacity(grid.len());
    for dir in &grid.directions {
        let mut v = Vector3::from_element(Complex64::new(0.0, 0.0));
        for n in 0..=d.n_max {
            let p = n + 1;
            let rf = d.r1.powi(p as i32 + 2);
            for (qrow, q) in (-(p as i32)..=(p as i32)).enumerate() {
                let nv = vector_n(p, q, dir)?;
                let c = -ghat[n as usize][qrow] / rf;
                v.x += c * nv.x;
                v.y += c * nv.y;
                v.z += c * nv.z;
            }
        }
        out.push(v);
    }
    Ok(out)
}

/// Samples the perturbation on the measurement grid, then applies seeded
/// Gaussian noise when configured. Deterministic for a fixed scenario.
pub fn sample_measurements(
    scenario: &Scenario,
    tensors: &[PolarizationTensors],
) -> Result<FieldSamples> {
    scenario.validate()?;
    let grid = scenario.grid();
    let r1 = scenario.measurement.r1;
    let centers: Vec<Vector3<f64>> = scenario.anomalies.iter().map(|a| a.center).collect();
    let moments = scenario.effective_moments(tensors)?;
    let mut values = Vec::with_capacity(grid.len());
    for dir in &grid.directions {
        let x = dir * r1;
        values.push(perturbation_from_moments(&centers, &moments, &x)?);
    }
    let samples = FieldSamples { grid, r1, values };
    if scenario.measurement.noise_level > 0.0 {
        add_noise(
            &samples,
            scenario.measurement.noise_level,
            scenario.measurement.seed,
        )
    } else {
        Ok(samples)
    }
}

/// Perturbs each field component by independent Gaussian draws whose standard
/// deviation is `level` times the per-component RMS magnitude, so the total
/// relative perturbation concentrates at `level`. Imaginary parts receive
/// noise only when the field itself carries imaginary content. The generator
/// is a single seeded stream consumed in node order.
pub fn add_noise(samples: &FieldSamples, level: f64, seed: u64) -> Result<FieldSamples> {
    if level < 0.0 {
        return Err(CoreError::NegativeNoise(level));
    }
    if level == 0.0 {
        return Ok(samples.clone());
    }
    let complex_field = !samples.is_effectively_real();
    let n_dof = samples.values.len() as f64 * if complex_field { 6.0 } else { 3.0 };
    let total: f64 = samples
        .values
        .iter()
        .map(|v| v.x.norm_sqr() + v.y.norm_sqr() + v.z.norm_sqr())
        .sum();
    let sigma = level * (total / n_dof).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).map_err(|e| CoreError::InvalidParams(e.to_string()))?;
    let mut values = Vec::with_capacity(samples.values.len());
    for v in &samples.values {
        let mut w = *v;
        for i in 0..3 {
            let dre = normal.sample(&mut rng);
            let dim = if complex_field {
                normal.sample(&mut rng)
            } else {
                0.0
            };
            w[i] += Complex64::new(dre, dim);
        }
        values.push(w);
    }
    Ok(FieldSamples {
        grid: samples.grid.clone(),
        r1: samples.r1,
        values,
    })
}

const CSV_HEADER: &str = "x,y,z,re(Hx),im(Hx),re(Hy),im(Hy),re(Hz),im(Hz),weight";

/// Writes samples as CSV with full-precision scientific notation (the format
/// the byte-reproducibility contract is stated over).
pub fn write_samples_csv<W: Write>(samples: &FieldSamples, w: &mut W) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for (q, v) in samples.values.iter().enumerate() {
        let p = samples.node_position(q);
        writeln!(
            w,
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            p.x,
            p.y,
            p.z,
            v.x.re,
            v.x.im,
            v.y.re,
            v.y.im,
            v.z.re,
            v.z.im,
            samples.grid.weights[q]
        )?;
    }
    Ok(())
}

/// Reads samples written by [`write_samples_csv`], recovering the product
/// grid structure (distinct polar levels x uniform azimuths) and verifying it
/// against a regenerated Gauss-Legendre grid.
pub fn read_samples_csv<R: BufRead>(r: &mut R) -> Result<FieldSamples> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| CoreError::MalformedSamples("empty file".into()))??;
    if header.trim() != CSV_HEADER {
        return Err(CoreError::MalformedSamples(format!(
            "unexpected header: {header}"
        )));
    }
    let mut positions = Vec::new();
    let mut values = Vec::new();
    let mut weights = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| CoreError::MalformedSamples(e.to_string()))?;
        if f.len() != 10 {
            return Err(CoreError::MalformedSamples(format!(
                "expected 10 columns, got {}",
                f.len()
            )));
        }
        positions.push(Vector3::new(f[0], f[1], f[2]));
        values.push(Vector3::new(
            Complex64::new(f[3], f[4]),
            Complex64::new(f[5], f[6]),
            Complex64::new(f[7], f[8]),
        ));
        weights.push(f[9]);
    }
    if positions.is_empty() {
        return Err(CoreError::MalformedSamples("no sample rows".into()));
    }
    let r1 = positions[0].norm();
    for p in &positions {
        if (p.norm() - r1).abs() > 1e-9 * r1 {
            return Err(CoreError::MalformedSamples(
                "nodes not on a common sphere".into(),
            ));
        }
    }
    // infer the product structure: rows are written theta-major
    let z0 = positions[0].z / r1;
    let mut n_phi = 0;
    for p in &positions {
        if ((p.z / r1) - z0).abs() < 1e-12 {
            n_phi += 1;
        } else {
            break;
        }
    }
    if n_phi == 0 || positions.len() % n_phi != 0 {
        return Err(CoreError::MalformedSamples(
            "cannot infer grid structure".into(),
        ));
    }
    let n_theta = positions.len() / n_phi;
    let grid = SphereGrid::new(n_theta, n_phi);
    for (q, dir) in grid.directions.iter().enumerate() {
        if (dir * r1 - positions[q]).norm() > 1e-9 * r1
            || (grid.weights[q] - weights[q]).abs() > 1e-9
        {
            return Err(CoreError::MalformedSamples(
                "grid does not match a Gauss-Legendre product grid".into(),
            ));
        }
    }
    Ok(FieldSamples { grid, r1, values })
}
