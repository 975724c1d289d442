//! Named validation suites. Each check runs at the tolerances the toolkit is
//! accepted at and reports the measured value next to its bound; the CLI
//! `validate` command and the acceptance test target both drive these.

use crate::background::BackgroundField;
use crate::error::Result;
use crate::forward::{
    multipoles_from_moments, perturbation_from_moments, reconstruct_field_from_multipoles,
    reconstruct_scalar_from_multipoles, sample_measurements, to_complex_vec, FieldSamples,
    Measurement, Scenario,
};
use crate::harmonics::{
    addition_partial, grad_gamma_expansion, sph_harm, MultipoleSet, SphereGrid,
};
use crate::inversion::{
    extract_multipoles, recover_multi, recover_permeability_ball, recover_single,
    residual_certificate, BallKnowns, InversionConfig,
};
use crate::kernels::grad_gamma0;
use crate::layer::{
    assemble_adjoint_np, solve_resolvent, spectrum, BoundaryDensity, Sign,
};
use crate::mesh::{make_mesh, scale_translate, ShapeSpec};
use crate::oracle::{asymptotic_error, fit_dipole_moment, solve_transmission, static_tensor};
use crate::polarization::{
    ball_p_closed_form, Anomaly, MediumParams, PolarizationContext, TensorModel,
};
use nalgebra::{DVector, Vector3};
use num_complex::Complex64;
use std::sync::Arc;

/// One measured check.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub id: String,
    pub description: String,
    pub measured: f64,
    pub bound: String,
    pub pass: bool,
}

impl CheckResult {
    fn le(id: &str, description: &str, measured: f64, bound: f64) -> Self {
        CheckResult {
            id: id.into(),
            description: description.into(),
            measured,
            bound: format!("<= {bound:.3e}"),
            pass: measured <= bound,
        }
    }

    fn window(id: &str, description: &str, measured: f64, lo: f64, hi: f64) -> Self {
        CheckResult {
            id: id.into(),
            description: description.into(),
            measured,
            bound: format!("in [{lo}, {hi}]"),
            pass: measured >= lo && measured <= hi,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} [{}] {}: measured {:.6e} ({})",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.description,
            self.measured,
            self.bound
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Np,
    Tensors,
    Asymptotic,
    Harmonics,
    Inversion,
}

impl Suite {
    pub fn from_name(name: &str) -> Option<Suite> {
        match name {
            "np" => Some(Suite::Np),
            "tensors" => Some(Suite::Tensors),
            "asymptotic" => Some(Suite::Asymptotic),
            "harmonics" => Some(Suite::Harmonics),
            "inversion" => Some(Suite::Inversion),
            _ => None,
        }
    }

    pub fn all() -> [Suite; 5] {
        [
            Suite::Np,
            Suite::Tensors,
            Suite::Asymptotic,
            Suite::Harmonics,
            Suite::Inversion,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Np => "np",
            Suite::Tensors => "tensors",
            Suite::Asymptotic => "asymptotic",
            Suite::Harmonics => "harmonics",
            Suite::Inversion => "inversion",
        }
    }
}

pub fn run_suite(suite: Suite) -> Result<Vec<CheckResult>> {
    match suite {
        Suite::Np => np_suite(),
        Suite::Tensors => tensors_suite(),
        Suite::Asymptotic => asymptotic_suite(),
        Suite::Harmonics => harmonics_suite(),
        Suite::Inversion => inversion_suite(),
    }
}

fn np_identity_error(refinement: u32) -> Result<f64> {
    let mesh = Arc::new(make_mesh(&ShapeSpec::unit_ball(refinement))?);
    let k = assemble_adjoint_np(&mesh);
    let mut worst = 0.0f64;
    for comp in 0..3 {
        let nu = BoundaryDensity::normal_component(&mesh, comp);
        let got = k.apply(&nu);
        let target = DVector::from_fn(mesh.num_triangles(), |i, _| mesh.normals[i][comp] / 6.0);
        let err = (got.values.map(|v| v.re) - &target).norm() / target.norm();
        worst = worst.max(err);
    }
    Ok(worst)
}

fn np_suite() -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();

    let t0 = std::time::Instant::now();
    let e3 = np_identity_error(3)?;
    out.push(CheckResult::le(
        "1",
        "NP sphere identity |K*[nu] - nu/6| (refinement 3)",
        e3,
        2e-2,
    ));
    let e4 = np_identity_error(4)?;
    out.push(CheckResult::le(
        "1",
        "NP sphere identity improves at refinement 4",
        e4,
        e3,
    ));
    out.push(CheckResult::le(
        "1",
        "NP identity runtime (s)",
        t0.elapsed().as_secs_f64(),
        30.0,
    ));

    let mesh2 = Arc::new(make_mesh(&ShapeSpec::unit_ball(2))?);
    let k2 = assemble_adjoint_np(&mesh2);
    let eigs = spectrum(&k2);
    let overshoot = eigs
        .iter()
        .map(|e| {
            (e.re - 0.5).max(-0.5 - e.re).max(e.im.abs()).max(0.0)
        })
        .fold(0.0f64, f64::max);
    out.push(CheckResult::le(
        "np-spectrum",
        "NP spectrum within (-1/2, 1/2] up to discretization",
        overshoot,
        2e-2,
    ));

    // zero-mean density for the sign + resolvent with zero-mean data
    let rhs = BoundaryDensity::normal_component(&mesh2, 2);
    let phi = solve_resolvent(&k2, Complex64::new(2.0, 0.0), Sign::Plus, &rhs)?;
    let mean = phi.surface_integral().norm();
    out.push(CheckResult::le(
        "np-zeromean",
        "resolvent density mean / (|rhs| area)",
        mean / (rhs.values.norm() * mesh2.total_area),
        1e-8,
    ));

    // exact scale/translation invariance of the matrix
    let moved = Arc::new(scale_translate(
        &mesh2,
        0.05,
        &Vector3::new(0.4, -0.2, 0.8),
    )?);
    let km = assemble_adjoint_np(&moved);
    out.push(CheckResult::le(
        "np-invariance",
        "K* entrywise change under x -> delta x + z",
        (&km.matrix - &k2.matrix).amax(),
        1e-12,
    ));

    // criterion 9: core-trace reproduction of an analytic dipole
    let core = Arc::new(scale_translate(
        &Arc::new(make_mesh(&ShapeSpec::unit_ball(3))?),
        0.3,
        &Vector3::zeros(),
    )?);
    let dip = BackgroundField::dipole(Vector3::new(0.2, -0.5, 1.0), Vector3::zeros());
    let g = DVector::from_fn(core.num_triangles(), |i, _| {
        core.normals[i].dot(&dip.eval(&core.centroids[i]).unwrap())
    });
    let bg = BackgroundField::core_trace(core, g)?;
    let mut worst = 0.0f64;
    for x in [
        Vector3::new(1.0, 0.0, 0.0),
        Vector3::new(0.0, -1.2, 0.6),
        Vector3::new(1.4, 1.0, -0.8),
    ] {
        let got = bg.eval(&x)?;
        let expect = dip.eval(&x)?;
        worst = worst.max((got - expect).norm() / expect.norm());
    }
    out.push(CheckResult::le(
        "9",
        "core-trace field vs analytic dipole at exterior probes",
        worst,
        2e-2,
    ));

    Ok(out)
}

fn tensor_error_for(refinement: u32, anomaly: &Anomaly, med: &MediumParams) -> Result<f64> {
    let mesh = Arc::new(make_mesh(&ShapeSpec::unit_ball(refinement))?);
    let ctx = PolarizationContext::new(mesh);
    let t = ctx.tensor_p(anomaly, med)?;
    let closed = ball_p_closed_form(anomaly, med, TensorModel::Full)?;
    Ok((t.p - closed).norm() / closed.norm())
}

fn tensors_suite() -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let t0 = std::time::Instant::now();
    let med = MediumParams::new(1.0, 1.0, 1.5, 0.0)?;
    let real_case = Anomaly {
        center: Vector3::zeros(),
        delta: 1.0,
        shape: ShapeSpec::unit_ball(3),
        mu: 2.0,
        eps: 2.0,
        sigma: 0.0,
    };
    let med_cx = MediumParams::new(1.0, 1.0, 1.5, 1e-3)?;
    let complex_case = Anomaly {
        sigma: 1.0,
        ..real_case.clone()
    };

    let e2 = tensor_error_for(2, &real_case, &med)?;
    let e3 = tensor_error_for(3, &real_case, &med)?;
    let e4 = tensor_error_for(4, &real_case, &med)?;
    out.push(CheckResult::le(
        "2",
        "ball tensor vs closed form, real case (refinement 3)",
        e3,
        2e-2,
    ));
    out.push(CheckResult::le(
        "2",
        "ball tensor vs closed form, real case (refinement 4)",
        e4,
        1e-2,
    ));
    let monotone = if e2 > e3 && e3 > e4 { 1.0 } else { 0.0 };
    out.push(CheckResult::window(
        "2",
        "mesh-convergence monotone over refinements 2 -> 3 -> 4",
        monotone,
        1.0,
        1.0,
    ));

    let c3 = tensor_error_for(3, &complex_case, &med_cx)?;
    let c4 = tensor_error_for(4, &complex_case, &med_cx)?;
    out.push(CheckResult::le(
        "2",
        "ball tensor vs closed form, complex case (refinement 3)",
        c3,
        2e-2,
    ));
    out.push(CheckResult::le(
        "2",
        "ball tensor vs closed form, complex case (refinement 4)",
        c4,
        1e-2,
    ));
    out.push(CheckResult::le(
        "2",
        "ball tensor runtime (s)",
        t0.elapsed().as_secs_f64(),
        120.0,
    ));

    // criterion 3: degenerate shell limit
    let med_deg = MediumParams::new(1.0, 1.0, 1.0, 1e-3)?;
    let anom_deg = Anomaly {
        eps: 1.0,
        sigma: 1.0,
        ..real_case
    };
    let mesh3 = Arc::new(make_mesh(&ShapeSpec::unit_ball(3))?);
    let ctx3 = PolarizationContext::new(mesh3);
    let p0 = ctx3.tensor_p0(&med_deg)?;
    out.push(CheckResult::le(
        "3",
        "P0 exactly zero at eps_s = eps0",
        p0.norm(),
        0.0,
    ));
    let t = ctx3.tensor_p(&anom_deg, &med_deg)?;
    // reference: mu0 * (lenonsig tensor) = mu0/(mu-mu0) int y (lam_mu I - K*)^-1 [nu]
    let m_ref = ctx3.tensor_m(&anom_deg, &med_deg)?; // identity eps-factor in this limit
    let reference = m_ref * Complex64::new(med_deg.mu0, 0.0);
    let rel = (t.p - &reference).norm() / reference.norm();
    out.push(CheckResult::le(
        "3",
        "P vs mu0 * static magnetic tensor at eps_s = eps0",
        rel,
        2e-2,
    ));

    Ok(out)
}

fn asymptotic_suite() -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let t0 = std::time::Instant::now();
    let med = MediumParams::new(1.0, 1.0, 1.0, 0.0)?;
    let bg = BackgroundField::dipole(Vector3::new(0.0, 0.0, 12.0), Vector3::new(0.0, 0.0, -1.2));
    let grid = SphereGrid::new(12, 24);
    let anomaly = |delta: f64| Anomaly {
        center: Vector3::new(0.0, 0.0, 0.3),
        delta,
        shape: ShapeSpec::unit_ball(4),
        mu: 3.0,
        eps: 1.0,
        sigma: 0.0,
    };
    let e10 = asymptotic_error(&anomaly(0.1), &med, &bg, &grid, 2.0)?;
    let e05 = asymptotic_error(&anomaly(0.05), &med, &bg, &grid, 2.0)?;
    out.push(CheckResult::le(
        "4",
        "asymptotic vs oracle sup error at delta = 0.1",
        e10,
        0.15,
    ));
    out.push(CheckResult::le(
        "4",
        "asymptotic vs oracle sup error at delta = 0.05",
        e05,
        0.15,
    ));
    out.push(CheckResult::window(
        "4",
        "first-order remainder ratio e(0.1)/e(0.05)",
        e10 / e05,
        1.5,
        2.8,
    ));

    // dipole coefficients of the oracle field vs the tensor prediction
    let a = anomaly(0.05);
    let sol = solve_transmission(&a, &med, &bg)?;
    let fitted = fit_dipole_moment(&sol, &a.center, &grid, 2.0)?;
    let predict = a.delta.powi(3) * (static_tensor(&a, &med)?.transpose() * bg.eval(&a.center)?);
    out.push(CheckResult::le(
        "4",
        "oracle dipole moment vs tensor prediction (refinement 4)",
        (fitted - predict).norm() / predict.norm(),
        1e-2,
    ));
    out.push(CheckResult::le(
        "4",
        "asymptotic-vs-oracle runtime (s)",
        t0.elapsed().as_secs_f64(),
        300.0,
    ));

    Ok(out)
}

fn harmonics_suite() -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();

    let x = Vector3::new(2.0, 0.0, 0.0);
    let y = Vector3::new(0.5, 0.0, 0.0);
    let got = addition_partial(&x, &y, 20)?;
    let exact = 1.0 / (4.0 * std::f64::consts::PI * (x - y).norm());
    out.push(CheckResult::le(
        "8",
        "addition formula partial sum vs direct kernel (n_max = 20)",
        (got - exact).abs(),
        1e-10,
    ));

    let xe = Vector3::new(0.0, 0.0, 2.0);
    let z = Vector3::new(0.0, 0.0, 0.5);
    let ge = grad_gamma_expansion(&xe, &z, 25)?;
    let gref = grad_gamma0(&(xe - z))?;
    out.push(CheckResult::le(
        "8",
        "gradient-kernel expansion vs grad_gamma0 (n_max = 25)",
        (ge - gref).norm(),
        1e-9,
    ));

    // orthonormality on an adequate grid
    let grid = SphereGrid::new(8, 16);
    let n_max = 4u32;
    let dim = ((n_max + 1) * (n_max + 1)) as usize;
    let mut worst = 0.0f64;
    let mut ys = vec![Complex64::new(0.0, 0.0); dim * grid.len()];
    for (q, d) in grid.directions.iter().enumerate() {
        let mut idx = 0;
        for n in 0..=n_max {
            for m in -(n as i32)..=(n as i32) {
                ys[q * dim + idx] = sph_harm(n, m, d)?;
                idx += 1;
            }
        }
    }
    for a in 0..dim {
        for b in 0..dim {
            let mut s = Complex64::new(0.0, 0.0);
            for q in 0..grid.len() {
                s += grid.weights[q] * ys[q * dim + a] * ys[q * dim + b].conj();
            }
            let expect = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((s - expect).norm());
        }
    }
    out.push(CheckResult::le(
        "8",
        "orthonormality defect of Y up to degree 4",
        worst,
        1e-12,
    ));

    Ok(out)
}

fn criterion5(out: &mut Vec<CheckResult>) -> Result<()> {
    // direct multipoles reconstructed on the sphere vs the kernel sum
    let centers = [Vector3::new(0.0, 0.0, 0.5), Vector3::new(0.3, -0.2, -0.1)];
    let moments = [
        to_complex_vec(&Vector3::new(0.4, -1.0, 2.0)),
        to_complex_vec(&Vector3::new(-0.7, 0.1, 0.9)),
    ];
    let d = multipoles_from_moments(&centers, &moments, 25, 2.0)?;
    let grid = SphereGrid::new(10, 20);
    let mut worst = 0.0f64;
    for dir in &grid.directions {
        let xq = dir * 2.0;
        let recon = reconstruct_scalar_from_multipoles(&d, dir)?;
        let mut direct = Complex64::new(0.0, 0.0);
        for (zc, m) in centers.iter().zip(&moments) {
            let g = grad_gamma0(&(xq - zc))?;
            direct += g.x * m.x + g.y * m.y + g.z * m.z;
        }
        worst = worst.max((recon - direct).norm());
    }
    out.push(CheckResult::le(
        "5",
        "multipole reconstruction vs direct kernel (n_max = 25, |z| <= R1/4)",
        worst,
        1e-8,
    ));

    // extraction on exact synthetic samples: identifiable-subspace set
    let mut raw = MultipoleSet::zeros(3, 2.0);
    let mut seed = 0x5deece66du64;
    let mut next = || {
        seed = seed.wrapping_mul(6364136223846793005).wrapping_add(11);
        ((seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    };
    for c in raw.coeffs.iter_mut() {
        *c = Vector3::new(
            Complex64::new(next(), next()),
            Complex64::new(next(), next()),
            Complex64::new(next(), next()),
        );
    }
    let egrid = SphereGrid::new(10, 20);
    let synth = |set: &MultipoleSet| -> Result<FieldSamples> {
        Ok(FieldSamples {
            values: reconstruct_field_from_multipoles(set, &egrid)?,
            grid: egrid.clone(),
            r1: 2.0,
        })
    };
    let truth = extract_multipoles(&synth(&raw)?, 3)?.multipoles;
    let again = extract_multipoles(&synth(&truth)?, 3)?.multipoles;
    let mut worst_c = 0.0f64;
    for (a, b) in truth.coeffs.iter().zip(&again.coeffs) {
        for i in 0..3 {
            worst_c = worst_c.max((a[i] - b[i]).norm());
        }
    }
    out.push(CheckResult::le(
        "5",
        "extraction round trip on exact synthetic samples",
        worst_c,
        1e-10,
    ));
    // the monopole block of a generic physical set is always identifiable;
    // physical samples carry all degrees, so the analysis grid needs margin
    // over the formal order bound to push aliasing below the tolerance
    let pgrid = SphereGrid::new(16, 32);
    let d_phys = multipoles_from_moments(&centers, &moments, 3, 2.0)?;
    let phys_values: Vec<_> = pgrid
        .directions
        .iter()
        .map(|dir| perturbation_from_moments(&centers, &moments, &(dir * 2.0)).unwrap())
        .collect();
    let phys = FieldSamples {
        values: phys_values,
        grid: pgrid,
        r1: 2.0,
    };
    let ex = extract_multipoles(&phys, 3)?.multipoles;
    let mono_err = (ex.get(0, 0) - d_phys.get(0, 0)).norm();
    out.push(CheckResult::le(
        "5",
        "monopole coefficient from physical samples",
        mono_err,
        1e-10,
    ));
    Ok(())
}

fn single_scenario(noise: f64, seed: u64, n_theta: usize, n_phi: usize) -> Scenario {
    Scenario {
        medium: MediumParams::new(1.0, 1.0, 1.5, 0.0).unwrap(),
        background: BackgroundField::uniform(Vector3::new(0.1, -0.05, 1.0)),
        anomalies: vec![Anomaly {
            center: Vector3::new(0.1, -0.2, 0.5),
            delta: 0.05,
            shape: ShapeSpec::unit_ball(3),
            mu: 2.0,
            eps: 2.0,
            sigma: 0.0,
        }],
        measurement: Measurement {
            r1: 2.0,
            n_theta,
            n_phi,
            noise_level: noise,
            seed,
        },
        model: TensorModel::Full,
    }
}

fn criterion6(out: &mut Vec<CheckResult>) -> Result<()> {
    // noiseless end-to-end
    let s = single_scenario(0.0, 1, 16, 32);
    let tensors = s.compute_tensors()?;
    let samples = sample_measurements(&s, &tensors)?;
    let er = extract_multipoles(&samples, 3)?;
    let rec = recover_single(&er.multipoles)?;
    let z_true = s.anomalies[0].center;
    out.push(CheckResult::le(
        "6",
        "noiseless single-anomaly position error / R1",
        (rec.z_est - z_true).norm() / s.measurement.r1,
        1e-6,
    ));
    let knowns = BallKnowns {
        delta: s.anomalies[0].delta,
        eps: s.anomalies[0].eps,
        sigma: s.anomalies[0].sigma,
    };
    let mu = recover_permeability_ball(
        &rec.moment,
        &rec.z_est,
        &knowns,
        &s.medium,
        &s.background,
        TensorModel::Full,
    )?;
    out.push(CheckResult::le(
        "6",
        "noiseless permeability relative error",
        (mu - Complex64::new(s.anomalies[0].mu, 0.0)).norm() / s.anomalies[0].mu,
        1e-6,
    ));

    // 1% noise, 50 x 100 grid, median position error over 20 seeds
    let mut errors: Vec<f64> = Vec::with_capacity(20);
    let base = single_scenario(0.01, 0, 50, 100);
    let base_tensors = base.compute_tensors()?;
    for seed in 0..20u64 {
        let mut sc = base.clone();
        sc.measurement.seed = seed;
        let noisy = sample_measurements(&sc, &base_tensors)?;
        let er = extract_multipoles(&noisy, 2)?;
        let rec = recover_single(&er.multipoles)?;
        errors.push((rec.z_est - z_true).norm());
    }
    errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = (errors[9] + errors[10]) / 2.0;
    out.push(CheckResult::le(
        "6",
        "median position error with 1% noise / |z|",
        median / z_true.norm(),
        0.02,
    ));
    Ok(())
}

fn multi_scenario(count: usize) -> Scenario {
    let mut anomalies = vec![
        Anomaly {
            center: Vector3::new(0.5, 0.0, 0.0),
            delta: 0.02,
            shape: ShapeSpec::unit_ball(3),
            mu: 2.0,
            eps: 2.0,
            sigma: 0.0,
        },
        Anomaly {
            center: Vector3::new(-0.4, 0.3, 0.2),
            delta: 0.025,
            shape: ShapeSpec::unit_ball(3),
            mu: 3.0,
            eps: 1.5,
            sigma: 0.0,
        },
        Anomaly {
            center: Vector3::new(0.0, -0.5, -0.35),
            delta: 0.02,
            shape: ShapeSpec::unit_ball(3),
            mu: 1.5,
            eps: 2.5,
            sigma: 0.0,
        },
    ];
    anomalies.truncate(count);
    Scenario {
        medium: MediumParams::new(1.0, 1.0, 1.5, 0.0).unwrap(),
        background: BackgroundField::uniform(Vector3::new(0.2, 0.1, 1.0)),
        anomalies,
        measurement: Measurement {
            r1: 2.0,
            n_theta: 16,
            n_phi: 32,
            noise_level: 0.0,
            seed: 0,
        },
        model: TensorModel::Full,
    }
}

fn criterion7(out: &mut Vec<CheckResult>) -> Result<()> {
    let t0 = std::time::Instant::now();
    for count in [2usize, 3] {
        let s = multi_scenario(count);
        let tensors = s.compute_tensors()?;
        let samples = sample_measurements(&s, &tensors)?;
        let mut truth: Vec<Vector3<f64>> = s.anomalies.iter().map(|a| a.center).collect();
        truth.sort_by(|a, b| (a.x, a.y, a.z).partial_cmp(&(b.x, b.y, b.z)).unwrap());
        let mut successes = 0;
        let mut best_cert = f64::INFINITY;
        for seed in 0..20u64 {
            let cfg = InversionConfig {
                count,
                multistart: 32,
                seed,
                ..Default::default()
            };
            match recover_multi(&samples, &cfg, &s.background) {
                Ok(rec) => {
                    let worst = rec
                        .iter()
                        .zip(&truth)
                        .map(|(r, t)| (r.z_est - t).norm())
                        .fold(0.0f64, f64::max);
                    if worst <= 1e-4 * s.measurement.r1 {
                        successes += 1;
                    }
                    best_cert = best_cert.min(residual_certificate(&samples, &rec)?);
                }
                Err(_) => {}
            }
        }
        out.push(CheckResult::window(
            "7",
            &format!("multi-anomaly success rate over 20 runs (l0 = {count})"),
            successes as f64 / 20.0,
            0.8,
            1.0,
        ));
        out.push(CheckResult::le(
            "7",
            &format!("residual certificate at the optimum (l0 = {count})"),
            best_cert,
            1e-6,
        ));
    }
    out.push(CheckResult::le(
        "7",
        "multi-anomaly inversion runtime (s)",
        t0.elapsed().as_secs_f64(),
        600.0,
    ));
    Ok(())
}

fn inversion_suite() -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    criterion5(&mut out)?;
    criterion6(&mut out)?;
    criterion7(&mut out)?;
    Ok(out)
}

/// Determinism of the sample path at the core level: identical bytes from
/// repeated synthesis, identical recovery from repeated inversion.
pub fn determinism_check() -> Result<Vec<CheckResult>> {
    use crate::forward::write_samples_csv;
    let mut out = Vec::new();
    let s = single_scenario(0.01, 1234, 12, 24);
    let tensors = s.compute_tensors()?;
    let a = sample_measurements(&s, &tensors)?;
    let b = sample_measurements(&s, &tensors)?;
    let mut buf_a = Vec::new();
    let mut buf_b = Vec::new();
    write_samples_csv(&a, &mut buf_a)?;
    write_samples_csv(&b, &mut buf_b)?;
    out.push(CheckResult::le(
        "10",
        "byte-identical sample synthesis for fixed config and seed",
        if buf_a == buf_b { 0.0 } else { 1.0 },
        0.0,
    ));
    let cfg = InversionConfig {
        count: 1,
        multistart: 8,
        seed: 77,
        ..Default::default()
    };
    let r1 = recover_multi(&a, &cfg, &s.background)?;
    let r2 = recover_multi(&a, &cfg, &s.background)?;
    let same = r1.len() == r2.len()
        && r1.iter().zip(&r2).all(|(x, y)| {
            x.z_est == y.z_est && x.moment == y.moment && x.residual == y.residual
        });
    out.push(CheckResult::le(
        "10",
        "bitwise-identical inversion for fixed seeds",
        if same { 0.0 } else { 1.0 },
        0.0,
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    // The full suites run in the acceptance test target; here only the
    // plumbing is exercised on the cheapest suite.
    #[test]
    fn suite_names_resolve() {
        for s in Suite::all() {
            assert_eq!(Suite::from_name(s.name()), Some(s));
        }
        assert_eq!(Suite::from_name("nope"), None);
    }

    #[test]
    fn harmonics_suite_passes() {
        let results = run_suite(Suite::Harmonics).unwrap();
        assert!(!results.is_empty());
        for r in &results {
            assert!(r.pass, "{}", r.line());
            assert!(r.line().starts_with("PASS"));
        }
    }
}
