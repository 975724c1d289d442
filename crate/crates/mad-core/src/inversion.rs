//! Constructive inversion: multipole extraction from sphere samples,
//! single-anomaly position/moment/permeability recovery, and multi-anomaly
//! variable-projection Gauss-Newton with multistart.

use crate::background::BackgroundField;
use crate::error::{CoreError, Result};
use crate::forward::FieldSamples;
use crate::harmonics::{n_basis_degree_matrix, sh_index, sht_forward, MultipoleSet, SphereGrid};
use crate::kernels;
use crate::polarization::{ball_p_scalar_coefficients, MediumParams, TensorModel};
use nalgebra::{DMatrix, DVector, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;

/// One recovered inclusion: center, effective dipole moment
/// (`delta^3 P^T H0(z)`), optional permeability, and the fit residual.
#[derive(Debug, Clone)]
pub struct RecoveredAnomaly {
    pub z_est: Vector3<f64>,
    pub moment: Vector3<Complex64>,
    pub mu_est: Option<Complex64>,
    pub residual: f64,
    pub warnings: Vec<String>,
}

/// Inversion configuration (counts, tolerances, seeds).
#[derive(Debug, Clone)]
pub struct InversionConfig {
    pub n_max: u32,
    pub count: usize,
    pub multistart: usize,
    pub tol_grad: f64,
    pub tol_step: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Two recovered centers closer than this raise a "merged anomalies"
    /// warning (the CLI supplies five anomaly scales).
    pub merge_distance: Option<f64>,
}

impl Default for InversionConfig {
    fn default() -> Self {
        InversionConfig {
            n_max: 8,
            count: 1,
            multistart: 16,
            tol_grad: 1e-12,
            tol_step: 1e-14,
            max_iter: 200,
            seed: 0,
            merge_distance: None,
        }
    }
}

/// Multipole coefficients with per-degree fit diagnostics.
#[derive(Debug, Clone)]
pub struct ExtractionResult {
    pub multipoles: MultipoleSet,
    /// Condition number of the per-degree system, degree-indexed.
    pub conditions: Vec<f64>,
}

/// Recovers `d^{n,m}` from field samples, degree by degree.
///
/// The radial scalar `xh . dH` is analyzed on the grid; its degree-(n+1)
/// coefficients are the exact data content of the degree-n block (the vector
/// basis components are pure degree-(n+1) harmonics). Each small system is
/// solved in the least-squares sense; the returned block is the minimum-norm
/// representative of the (overparametrized) coefficient vectors.
pub fn extract_multipoles(samples: &FieldSamples, n_max: u32) -> Result<ExtractionResult> {
    let grid = &samples.grid;
    if grid.n_theta < n_max as usize + 2 {
        return Err(CoreError::InsufficientGridOrder {
            need: n_max as usize + 2,
            have: grid.n_theta,
        });
    }
    let r1 = samples.r1;
    let radial: Vec<Complex64> = samples
        .values
        .iter()
        .zip(&grid.directions)
        .map(|(v, xh)| v.x * xh.x + v.y * xh.y + v.z * xh.z)
        .collect();
    let f_coeffs = sht_forward(grid, &radial, n_max + 1)?;

    let mut d = MultipoleSet::zeros(n_max, r1);
    let mut conditions = Vec::with_capacity(n_max as usize + 1);
    for n in 0..=n_max {
        let p = n + 1;
        let rows = (2 * p + 1) as usize;
        // b_q = (2n+1) R1^{n+2} * uhat_{p,q},  uhat = -R1 f / (p+1)
        let mut b = DVector::from_element(rows, Complex64::new(0.0, 0.0));
        for (qrow, q) in (-(p as i32)..=(p as i32)).enumerate() {
            let f = f_coeffs[sh_index(p, q)];
            let uhat = -r1 * f / (p + 1) as f64;
            b[qrow] = uhat * (2.0 * n as f64 + 1.0) * r1.powi(n as i32 + 2);
        }
        let g = n_basis_degree_matrix(n, grid)?;
        let svd = g.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd
            .singular_values
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b));
        let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if !(cond < 1e12) {
            return Err(CoreError::RankDeficientFit {
                degree: n as usize,
                cond,
            });
        }
        conditions.push(cond);
        let sol = svd
            .solve(&DMatrix::from_column_slice(rows, 1, b.as_slice()), 1e-13)
            .map_err(|e| CoreError::InvalidParams(e.to_string()))?;
        for (mi, m) in (-(n as i32)..=(n as i32)).enumerate() {
            d.set(
                n,
                m,
                Vector3::new(sol[(3 * mi, 0)], sol[(3 * mi + 1, 0)], sol[(3 * mi + 2, 0)]),
            );
        }
    }
    Ok(ExtractionResult {
        multipoles: d,
        conditions,
    })
}

const TWO_SQRT_PI: f64 = 2.0 * 1.7724538509055159; // 2 sqrt(pi)

/// Position and effective moment of a single anomaly from its multipoles.
///
/// `c = 2 sqrt(pi) d^{0,0}`; the degree-1 block is matched against the
/// rank-one model `d^{1,m} = w_m c` in the degree-2 data content, which
/// reduces to the projection `w_m = d^{1,m}.conj(c)/|c|^2` whenever the block
/// already has that form, and recovers `w = |z| conj(Y_1(zh))` exactly from
/// extracted (minimum-norm) sets. The center follows from the degree-1
/// harmonic inversion.
pub fn recover_single(d: &MultipoleSet) -> Result<RecoveredAnomaly> {
    let scale = d.coeffs.iter().map(|c| c.norm()).fold(0.0f64, f64::max);
    let d00 = d.get(0, 0);
    if d00.norm() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(CoreError::MomentVanishes);
    }
    let c = d00 * Complex64::new(TWO_SQRT_PI, 0.0);

    if d.n_max == 0 {
        return Ok(RecoveredAnomaly {
            z_est: Vector3::zeros(),
            moment: c,
            mu_est: None,
            residual: 0.0,
            warnings: vec!["degree-1 block absent: position not recoverable".into()],
        });
    }

    // degree-2 data content of the degree-1 block
    let quad = SphereGrid::new(4, 8);
    let g1 = n_basis_degree_matrix(1, &quad)?;
    let rows = g1.nrows();
    let mut b = DVector::from_element(rows, Complex64::new(0.0, 0.0));
    for (mi, m) in (-1i32..=1).enumerate() {
        let dm = d.get(1, m);
        for q in 0..rows {
            for i in 0..3 {
                b[q] += g1[(q, 3 * mi + i)] * dm[i];
            }
        }
    }
    // B w = b with B[:, m] = G1 (e_m x c)
    let mut bmat = DMatrix::from_element(rows, 3, Complex64::new(0.0, 0.0));
    for mi in 0..3 {
        for q in 0..rows {
            for i in 0..3 {
                bmat[(q, mi)] += g1[(q, 3 * mi + i)] * c[i];
            }
        }
    }
    let svd = bmat.clone().svd(true, true);
    let w = svd
        .solve(&DMatrix::from_column_slice(rows, 1, b.as_slice()), 1e-13)
        .map_err(|e| CoreError::InvalidParams(e.to_string()))?;
    let fit = &bmat * &w;
    let bnorm = b.norm();
    let residual = if bnorm > 0.0 {
        (fit - DMatrix::from_column_slice(rows, 1, b.as_slice())).norm() / bnorm
    } else {
        0.0
    };
    let mut warnings = Vec::new();
    if residual > 1e-6 {
        warnings.push(format!(
            "data inconsistent with single-dipole model (degree-1 residual {residual:.3e})"
        ));
    }

    // w_m = |z| conj(Y_1^m(zh)) in the fixed convention:
    //   z3 = sqrt(4 pi/3) w_0, z1 + i z2 = sqrt(8 pi/3) w_{-1},
    //   z1 - i z2 = -sqrt(8 pi/3) w_{+1}
    let (wm1, w0, wp1) = (w[(0, 0)], w[(1, 0)], w[(2, 0)]);
    let wnorm = (wm1.norm_sqr() + w0.norm_sqr() + wp1.norm_sqr()).sqrt();
    let z_est = if wnorm < 1e-10 * d.r1 {
        Vector3::zeros()
    } else {
        let c43 = (4.0 * std::f64::consts::PI / 3.0).sqrt();
        let c83 = (8.0 * std::f64::consts::PI / 3.0).sqrt();
        let z3 = c43 * w0;
        let zplus = c83 * wm1; // z1 + i z2
        let zminus = -c83 * wp1; // z1 - i z2
        let z1 = (zplus + zminus) / 2.0;
        let z2 = (zplus - zminus) / (2.0 * Complex64::i());
        let imag = z1.im.abs().max(z2.im.abs()).max(z3.im.abs());
        if imag > 1e-6 * d.r1 {
            warnings.push(format!(
                "imaginary residue {imag:.3e} in reconstructed coordinates"
            ));
        }
        Vector3::new(z1.re, z2.re, z3.re)
    };

    Ok(RecoveredAnomaly {
        z_est,
        moment: c,
        mu_est: None,
        residual,
        warnings,
    })
}

/// Known ball parameters for the permeability inversion.
#[derive(Debug, Clone, Copy)]
pub struct BallKnowns {
    pub delta: f64,
    pub eps: f64,
    pub sigma: f64,
}

/// Permeability of a single ball anomaly from its recovered moment, by
/// inverting the scalar Moebius relation of the ball closed form.
pub fn recover_permeability_ball(
    c: &Vector3<Complex64>,
    z: &Vector3<f64>,
    knowns: &BallKnowns,
    med: &MediumParams,
    bg: &BackgroundField,
    model: TensorModel,
) -> Result<Complex64> {
    let h = bg.eval(z)?;
    let hnorm2 = h.norm_squared();
    if hnorm2 < f64::MIN_POSITIVE {
        return Err(CoreError::BackgroundVanishes([z.x, z.y, z.z]));
    }
    // scalar moment: c = p delta^3 H for an isotropic (ball) tensor
    let proj = (c.x * h.x + c.y * h.y + c.z * h.z) / hnorm2;
    let cnorm = (c.x.norm_sqr() + c.y.norm_sqr() + c.z.norm_sqr()).sqrt();
    if cnorm > 0.0 {
        let mut aniso2 = 0.0;
        for i in 0..3 {
            aniso2 += (c[i] - proj * h[i]).norm_sqr();
        }
        if aniso2.sqrt() / cnorm > 0.05 {
            return Err(CoreError::ShapeAssumption);
        }
    }
    let p = proj / knowns.delta.powi(3);
    let gamma = if knowns.sigma == 0.0 {
        Complex64::new(knowns.eps, 0.0)
    } else {
        if med.omega == 0.0 {
            return Err(CoreError::InvalidParams(
                "gamma undefined at omega=0 with sigma > 0".into(),
            ));
        }
        Complex64::new(knowns.eps, knowns.sigma / med.omega)
    };
    let (a, b, cc, dd) = ball_p_scalar_coefficients(gamma, med, model);
    let den = p * cc - a;
    if den.norm() < 1e-12 * (a.norm() + (p * cc).norm()).max(f64::MIN_POSITIVE) {
        return Err(CoreError::Unidentifiable);
    }
    Ok((b - p * dd) / den)
}

fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

/// Low-discrepancy start points inside a ball of the given radius.
fn multistart_points(count: usize, radius: f64, seed: u64) -> Vec<Vector3<f64>> {
    let offset = 13 + (seed % 8192);
    let mut out = Vec::with_capacity(count);
    let mut i = 0u64;
    while out.len() < count {
        let u = halton(offset + i, 2);
        let v = halton(offset + i, 3);
        let w = halton(offset + i, 5);
        i += 1;
        let p = Vector3::new(2.0 * u - 1.0, 2.0 * v - 1.0, 2.0 * w - 1.0) * radius;
        if p.norm() <= radius {
            out.push(p);
        }
    }
    out
}

/// Weighted linear least squares for the moments at fixed positions, plus
/// the residual vector. The design blocks are the (real) Hessian kernels, so
/// real and imaginary parts decouple.
struct MomentFit {
    moments: Vec<Vector3<Complex64>>,
    residual: DVector<Complex64>,
    design: DMatrix<f64>,
    chol: nalgebra::linalg::Cholesky<f64, nalgebra::Dyn>,
}

impl MomentFit {
    /// Least-squares solve `A x ~ y` through the cached normal equations.
    fn lstsq(&self, y: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(&(self.design.transpose() * y))
    }
}

fn fit_moments(
    samples: &FieldSamples,
    sqrt_w: &[f64],
    centers: &[Vector3<f64>],
) -> Result<MomentFit> {
    let q_count = samples.values.len();
    let l0 = centers.len();
    let mut design = DMatrix::zeros(3 * q_count, 3 * l0);
    for (q, dir) in samples.grid.directions.iter().enumerate() {
        let x = dir * samples.r1;
        for (l, z) in centers.iter().enumerate() {
            let h = kernels::hess_gamma0(&(x - z))?;
            for i in 0..3 {
                for j in 0..3 {
                    design[(3 * q + i, 3 * l + j)] = sqrt_w[q] * h[(i, j)];
                }
            }
        }
    }
    let mut b = DVector::from_element(3 * q_count, Complex64::new(0.0, 0.0));
    for (q, v) in samples.values.iter().enumerate() {
        for i in 0..3 {
            b[3 * q + i] = v[i] * sqrt_w[q];
        }
    }
    let mut gram = design.transpose() * &design;
    // tiny Tikhonov floor keeps coincident trial centers factorizable
    let floor = 1e-14 * gram.trace().max(f64::MIN_POSITIVE);
    for k in 0..3 * l0 {
        gram[(k, k)] += floor;
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| CoreError::InvalidParams("moment normal matrix not SPD".into()))?;
    let bre = b.map(|v| v.re);
    let bim = b.map(|v| v.im);
    let xre = chol.solve(&(design.transpose() * &bre));
    let xim = chol.solve(&(design.transpose() * &bim));
    let x = DVector::from_fn(3 * l0, |i, _| Complex64::new(xre[i], xim[i]));
    let model_re = &design * xre;
    let model_im = &design * xim;
    let residual = DVector::from_fn(3 * q_count, |i, _| {
        b[i] - Complex64::new(model_re[i], model_im[i])
    });
    let moments = (0..l0)
        .map(|l| Vector3::new(x[3 * l], x[3 * l + 1], x[3 * l + 2]))
        .collect();
    Ok(MomentFit {
        moments,
        residual,
        design,
        chol,
    })
}

struct GnOutcome {
    centers: Vec<Vector3<f64>>,
    moments: Vec<Vector3<Complex64>>,
    objective: f64,
    converged: bool,
}

/// Damped Gauss-Newton on the positions with the moments eliminated
/// (variable projection, Kaufman Jacobian).
fn gauss_newton(
    samples: &FieldSamples,
    sqrt_w: &[f64],
    start: Vec<Vector3<f64>>,
    cfg: &InversionConfig,
    data_norm: f64,
) -> Result<GnOutcome> {
    let l0 = start.len();
    let mut centers = start;
    let inner_limit = 0.98 * samples.r1;
    let mut fit = fit_moments(samples, sqrt_w, &centers)?;
    let mut objective = fit.residual.norm_squared();
    let mut converged = false;

    for _ in 0..cfg.max_iter {
        // Kaufman Jacobian: columns -P_perp (dA/dz) m, realified
        let q_count = samples.values.len();
        let mut jac = DMatrix::from_element(3 * q_count, 3 * l0, Complex64::new(0.0, 0.0));
        for (q, dir) in samples.grid.directions.iter().enumerate() {
            let x = dir * samples.r1;
            for (l, z) in centers.iter().enumerate() {
                let m = fit.moments[l];
                let mre = Vector3::new(m.x.re, m.y.re, m.z.re);
                let mim = Vector3::new(m.x.im, m.y.im, m.z.im);
                let tre = kernels::third_gamma0_apply(&(x - z), &mre)?;
                let tim = kernels::third_gamma0_apply(&(x - z), &mim)?;
                for i in 0..3 {
                    for k in 0..3 {
                        // d model / d (z_l)_k = -third_k(x - z_l) m_l
                        jac[(3 * q + i, 3 * l + k)] = Complex64::new(
                            -sqrt_w[q] * tre[(i, k)],
                            -sqrt_w[q] * tim[(i, k)],
                        );
                    }
                }
            }
        }
        // project out the moment space: J <- J - A A^+ J (per real/imag part)
        let jre = jac.map(|v| v.re);
        let jim = jac.map(|v| v.im);
        let mut proj_re = jre.clone();
        let mut proj_im = jim.clone();
        for c in 0..3 * l0 {
            let col_re: DVector<f64> = jre.column(c).into();
            let col_im: DVector<f64> = jim.column(c).into();
            let pre = &fit.design * fit.lstsq(&col_re);
            let pim = &fit.design * fit.lstsq(&col_im);
            for rr in 0..3 * q_count {
                proj_re[(rr, c)] -= pre[rr];
                proj_im[(rr, c)] -= pim[rr];
            }
        }
        // stacked real system for the step
        let mut jtj = DMatrix::<f64>::zeros(3 * l0, 3 * l0);
        let mut jtr = DVector::<f64>::zeros(3 * l0);
        for a in 0..3 * l0 {
            for bcol in 0..3 * l0 {
                let mut s = 0.0;
                for rr in 0..3 * q_count {
                    s += proj_re[(rr, a)] * proj_re[(rr, bcol)]
                        + proj_im[(rr, a)] * proj_im[(rr, bcol)];
                }
                jtj[(a, bcol)] = s;
            }
            let mut s = 0.0;
            for rr in 0..3 * q_count {
                s += proj_re[(rr, a)] * fit.residual[rr].re + proj_im[(rr, a)] * fit.residual[rr].im;
            }
            jtr[a] = s;
        }
        let grad_norm = jtr.norm();
        if grad_norm < cfg.tol_grad * data_norm.max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
        let mut lm = 1e-12 * jtj.trace().max(f64::MIN_POSITIVE);
        let mut improved = false;
        for _ in 0..12 {
            let mut damped = jtj.clone();
            for k in 0..3 * l0 {
                damped[(k, k)] += lm;
            }
            let step = match damped.clone().cholesky() {
                Some(ch) => ch.solve(&jtr),
                None => {
                    lm *= 10.0;
                    continue;
                }
            };
            let mut trial = centers.clone();
            for l in 0..l0 {
                trial[l] += Vector3::new(step[3 * l], step[3 * l + 1], step[3 * l + 2]);
                let r = trial[l].norm();
                if r > inner_limit {
                    trial[l] *= inner_limit / r;
                }
            }
            let trial_fit = fit_moments(samples, sqrt_w, &trial)?;
            let trial_obj = trial_fit.residual.norm_squared();
            if trial_obj < objective {
                let step_norm = step.norm();
                centers = trial;
                fit = trial_fit;
                objective = trial_obj;
                improved = true;
                if step_norm < cfg.tol_step * samples.r1 {
                    converged = true;
                }
                break;
            }
            lm = (lm * 10.0).max(1e-10);
        }
        if converged || !improved {
            if !improved {
                // stalled line search at a stationary point counts as converged
                converged = grad_norm < 1e-6 * data_norm.max(f64::MIN_POSITIVE);
            }
            break;
        }
    }
    Ok(GnOutcome {
        centers,
        moments: fit.moments,
        objective,
        converged,
    })
}

/// Multi-anomaly recovery by multistart variable projection.
///
/// The anomaly count is taken from `cfg.count`; starts are drawn from a
/// Halton sequence inside `0.8 R1`. Output is sorted lexicographically by the
/// recovered centers, independent of initialization.
pub fn recover_multi(
    samples: &FieldSamples,
    cfg: &InversionConfig,
    _bg: &BackgroundField,
) -> Result<Vec<RecoveredAnomaly>> {
    assert!(cfg.count >= 1 && cfg.multistart >= 1);
    let sqrt_w: Vec<f64> = samples.grid.weights.iter().map(|w| w.sqrt()).collect();
    let data_norm = {
        let mut s = 0.0;
        for (q, v) in samples.values.iter().enumerate() {
            s += (v.x.norm_sqr() + v.y.norm_sqr() + v.z.norm_sqr()) * samples.grid.weights[q];
        }
        s.sqrt()
    };
    let all_points = multistart_points(cfg.multistart * cfg.count, 0.8 * samples.r1, cfg.seed);
    let outcomes: Vec<Result<GnOutcome>> = (0..cfg.multistart)
        .into_par_iter()
        .map(|s| {
            let start: Vec<Vector3<f64>> =
                all_points[s * cfg.count..(s + 1) * cfg.count].to_vec();
            gauss_newton(samples, &sqrt_w, start, cfg, data_norm)
        })
        .collect();

    let mut best: Option<GnOutcome> = None;
    for o in outcomes {
        let o = o?;
        if !o.converged {
            continue;
        }
        let better = match &best {
            None => true,
            Some(b) => {
                o.objective < b.objective * (1.0 - 1e-12)
                    || ((o.objective - b.objective).abs() <= 1e-12 * b.objective.max(1e-300)
                        && lex_key(&o.centers) < lex_key(&b.centers))
            }
        };
        if better {
            best = Some(o);
        }
    }
    let best = best.ok_or(CoreError::NoConvergentStart(cfg.multistart))?;

    let rel_residual = best.objective.sqrt() / data_norm.max(f64::MIN_POSITIVE);
    let mut order: Vec<usize> = (0..cfg.count).collect();
    order.sort_by(|&a, &b| {
        lex3(&best.centers[a])
            .partial_cmp(&lex3(&best.centers[b]))
            .unwrap()
    });
    let mut out: Vec<RecoveredAnomaly> = order
        .iter()
        .map(|&l| RecoveredAnomaly {
            z_est: best.centers[l],
            moment: best.moments[l],
            mu_est: None,
            residual: rel_residual,
            warnings: Vec::new(),
        })
        .collect();
    if let Some(dist) = cfg.merge_distance {
        for a in 0..out.len() {
            for b in (a + 1)..out.len() {
                if (out[a].z_est - out[b].z_est).norm() < dist {
                    let msg = format!("merged anomalies: centers {a} and {b} within {dist:.3e}");
                    out[a].warnings.push(msg.clone());
                    out[b].warnings.push(msg);
                }
            }
        }
    }
    Ok(out)
}

fn lex3(v: &Vector3<f64>) -> (f64, f64, f64) {
    (v.x, v.y, v.z)
}

fn lex_key(centers: &[Vector3<f64>]) -> Vec<(f64, f64, f64)> {
    let mut k: Vec<_> = centers.iter().map(lex3).collect();
    k.sort_by(|a, b| a.partial_cmp(b).unwrap());
    k
}

/// Relative weighted l2 misfit between samples and the dipole model rebuilt
/// from recovered anomalies.
pub fn residual_certificate(samples: &FieldSamples, recovered: &[RecoveredAnomaly]) -> Result<f64> {
    let centers: Vec<Vector3<f64>> = recovered.iter().map(|r| r.z_est).collect();
    let moments: Vec<Vector3<Complex64>> = recovered.iter().map(|r| r.moment).collect();
    let mut num = 0.0;
    let mut den = 0.0;
    for (q, dir) in samples.grid.directions.iter().enumerate() {
        let x = dir * samples.r1;
        let model = crate::forward::perturbation_from_moments(&centers, &moments, &x)?;
        let v = samples.values[q];
        let w = samples.grid.weights[q];
        for i in 0..3 {
            num += (v[i] - model[i]).norm_sqr() * w;
            den += v[i].norm_sqr() * w;
        }
    }
    Ok((num / den.max(f64::MIN_POSITIVE)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{
        multipoles_from_moments, reconstruct_field_from_multipoles, sample_measurements,
        FieldSamples, Measurement, Scenario,
    };
    use crate::mesh::ShapeSpec;
    use crate::polarization::Anomaly;
    use approx::assert_relative_eq;

    fn cvec(x: f64, y: f64, z: f64) -> Vector3<Complex64> {
        Vector3::new(
            Complex64::new(x, 0.0),
            Complex64::new(y, 0.0),
            Complex64::new(z, 0.0),
        )
    }

    fn samples_from_multipoles(d: &MultipoleSet, n_theta: usize, n_phi: usize) -> FieldSamples {
        let grid = SphereGrid::new(n_theta, n_phi);
        let values = reconstruct_field_from_multipoles(d, &grid).unwrap();
        FieldSamples {
            grid,
            r1: d.r1,
            values,
        }
    }

    #[test]
    fn extraction_zero_field() {
        let grid = SphereGrid::new(6, 12);
        let samples = FieldSamples {
            values: vec![Vector3::from_element(Complex64::new(0.0, 0.0)); grid.len()],
            grid,
            r1: 2.0,
        };
        let er = extract_multipoles(&samples, 2).unwrap();
        assert!(er.multipoles.coeffs.iter().all(|c| c.norm() == 0.0));
        assert!(er.conditions.iter().all(|c| *c < 1e3));
    }

    #[test]
    fn extraction_grid_order_guard() {
        let grid = SphereGrid::new(4, 8);
        let samples = FieldSamples {
            values: vec![Vector3::from_element(Complex64::new(0.0, 0.0)); grid.len()],
            grid,
            r1: 2.0,
        };
        assert!(matches!(
            extract_multipoles(&samples, 4),
            Err(CoreError::InsufficientGridOrder { .. })
        ));
    }

    #[test]
    fn extraction_identifiable_roundtrip() {
        // ground truth built inside the identifiable subspace: project a
        // generic set through extraction once, re-synthesize, extract again
        let mut raw = MultipoleSet::zeros(3, 2.0);
        let mut seed = 7u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        for c in raw.coeffs.iter_mut() {
            *c = Vector3::new(
                Complex64::new(next(), next()),
                Complex64::new(next(), next()),
                Complex64::new(next(), next()),
            );
        }
        let first = extract_multipoles(&samples_from_multipoles(&raw, 10, 20), 3).unwrap();
        let truth = first.multipoles;
        let second = extract_multipoles(&samples_from_multipoles(&truth, 10, 20), 3).unwrap();
        for (a, b) in truth.coeffs.iter().zip(&second.multipoles.coeffs) {
            for i in 0..3 {
                assert!(
                    (a[i] - b[i]).norm() < 1e-10,
                    "coefficient mismatch {}",
                    (a[i] - b[i]).norm()
                );
            }
        }
        // and the monopole block is recovered exactly from the generic set
        let d00 = second.multipoles.get(0, 0);
        assert!((d00 - raw.get(0, 0)).norm() < 1e-10);
    }

    #[test]
    fn extraction_matches_multipole_direct_physical() {
        // physical single-anomaly samples: d^{0,0} agrees with the direct
        // coefficients, and the reconstructed field content matches
        let centers = [Vector3::new(0.1, -0.2, 0.4)];
        let moments = [cvec(0.5, 1.0, -0.8)];
        let d_true = multipoles_from_moments(&centers, &moments, 6, 2.0).unwrap();
        let grid = SphereGrid::new(12, 24);
        let values: Vec<Vector3<Complex64>> = grid
            .directions
            .iter()
            .map(|dir| {
                crate::forward::perturbation_from_moments(&centers, &moments, &(dir * 2.0))
                    .unwrap()
            })
            .collect();
        let samples = FieldSamples {
            grid,
            r1: 2.0,
            values,
        };
        let er = extract_multipoles(&samples, 5).unwrap();
        let d00 = er.multipoles.get(0, 0);
        assert!((d00 - d_true.get(0, 0)).norm() < 1e-10);
    }

    #[test]
    fn single_recovery_exact() {
        let z = Vector3::new(0.0, 0.0, 0.5);
        let m = cvec(0.0, 0.0, 1.0);
        let d = multipoles_from_moments(&[z], &[m], 2, 2.0).unwrap();
        let rec = recover_single(&d).unwrap();
        assert!((rec.z_est - z).norm() < 1e-12, "z error {}", (rec.z_est - z).norm());
        for i in 0..3 {
            assert!((rec.moment[i] - m[i]).norm() < 1e-13);
        }
        assert!(rec.residual < 1e-12);
        assert!(rec.warnings.is_empty());

        // generic position and complex moment
        let z2 = Vector3::new(-0.3, 0.45, 0.2);
        let m2 = Vector3::new(
            Complex64::new(0.7, 0.2),
            Complex64::new(-0.1, 0.5),
            Complex64::new(1.1, -0.4),
        );
        let d2 = multipoles_from_moments(&[z2], &[m2], 3, 2.0).unwrap();
        let rec2 = recover_single(&d2).unwrap();
        assert!((rec2.z_est - z2).norm() < 1e-12);
    }

    #[test]
    fn single_recovery_from_extracted_minimum_norm_set() {
        // the rank-one refit must survive the extraction null-space projection
        let z = Vector3::new(0.25, -0.35, 0.4);
        let m = cvec(1.0, 0.4, -0.6);
        let grid = SphereGrid::new(12, 24);
        let values: Vec<Vector3<Complex64>> = grid
            .directions
            .iter()
            .map(|dir| {
                crate::forward::perturbation_from_moments(&[z], &[m], &(dir * 2.0)).unwrap()
            })
            .collect();
        let samples = FieldSamples {
            grid,
            r1: 2.0,
            values,
        };
        let er = extract_multipoles(&samples, 4).unwrap();
        let rec = recover_single(&er.multipoles).unwrap();
        assert!(
            (rec.z_est - z).norm() < 1e-10,
            "position error {}",
            (rec.z_est - z).norm()
        );
    }

    #[test]
    fn single_recovery_origin() {
        let d = multipoles_from_moments(&[Vector3::zeros()], &[cvec(1.0, 0.0, 0.5)], 2, 2.0)
            .unwrap();
        let rec = recover_single(&d).unwrap();
        assert_eq!(rec.z_est, Vector3::zeros());
    }

    #[test]
    fn single_recovery_rejects_vanishing_moment() {
        let d = MultipoleSet::zeros(2, 2.0);
        assert!(matches!(recover_single(&d), Err(CoreError::MomentVanishes)));
    }

    #[test]
    fn single_recovery_flags_two_anomaly_data() {
        let centers = [Vector3::new(0.5, 0.0, 0.0), Vector3::new(-0.4, 0.3, 0.2)];
        let moments = [cvec(0.0, 0.0, 1.0), cvec(1.0, -0.5, 0.3)];
        let d = multipoles_from_moments(&centers, &moments, 2, 2.0).unwrap();
        let rec = recover_single(&d).unwrap();
        assert!(
            rec.warnings.iter().any(|w| w.contains("inconsistent")),
            "expected inconsistency warning, got {:?}",
            rec.warnings
        );
    }

    #[test]
    fn permeability_roundtrip_full_model() {
        let med = MediumParams::new(1.0, 1.0, 1.5, 0.0).unwrap();
        let bg = BackgroundField::uniform(Vector3::new(0.2, -0.1, 1.0));
        let z = Vector3::new(0.0, 0.0, 0.5);
        let knowns = BallKnowns {
            delta: 0.1,
            eps: 2.0,
            sigma: 0.0,
        };
        let anomaly = Anomaly {
            center: z,
            delta: knowns.delta,
            shape: ShapeSpec::unit_ball(3),
            mu: 2.0,
            eps: knowns.eps,
            sigma: knowns.sigma,
        };
        let p =
            crate::polarization::ball_p_closed_form(&anomaly, &med, TensorModel::Full).unwrap();
        let h = bg.eval(&z).unwrap();
        let c = Vector3::new(
            p[(0, 0)] * h.x * knowns.delta.powi(3),
            p[(1, 1)] * h.y * knowns.delta.powi(3),
            p[(2, 2)] * h.z * knowns.delta.powi(3),
        );
        let mu = recover_permeability_ball(&c, &z, &knowns, &med, &bg, TensorModel::Full).unwrap();
        assert!(
            (mu - Complex64::new(2.0, 0.0)).norm() < 1e-9,
            "mu_est = {mu}"
        );
    }

    #[test]
    fn permeability_zero_moment_solves_vanishing_case() {
        let med = MediumParams::new(1.0, 1.0, 1.5, 0.0).unwrap();
        let bg = BackgroundField::uniform(Vector3::z());
        let knowns = BallKnowns {
            delta: 0.1,
            eps: 2.0,
            sigma: 0.0,
        };
        let c = Vector3::from_element(Complex64::new(0.0, 0.0));
        let mu = recover_permeability_ball(
            &c,
            &Vector3::zeros(),
            &knowns,
            &med,
            &bg,
            TensorModel::Full,
        )
        .unwrap();
        // the returned mu makes the ball tensor vanish
        let (a, b, cc, dd) =
            ball_p_scalar_coefficients(Complex64::new(2.0, 0.0), &med, TensorModel::Full);
        let p_at_mu = (a * mu + b) / (cc * mu + dd);
        assert!(p_at_mu.norm() < 1e-12);
    }

    #[test]
    fn permeability_rejects_anisotropic_moment() {
        let med = MediumParams::new(1.0, 1.0, 1.5, 0.0).unwrap();
        let bg = BackgroundField::uniform(Vector3::z());
        let knowns = BallKnowns {
            delta: 0.1,
            eps: 2.0,
            sigma: 0.0,
        };
        let c = cvec(1.0, 0.0, 0.0); // orthogonal to H0 = e3
        assert!(matches!(
            recover_permeability_ball(&c, &Vector3::zeros(), &knowns, &med, &bg, TensorModel::Full),
            Err(CoreError::ShapeAssumption)
        ));
    }

    fn synthetic_samples(
        centers: &[Vector3<f64>],
        moments: &[Vector3<Complex64>],
        n_theta: usize,
        n_phi: usize,
        r1: f64,
    ) -> FieldSamples {
        let grid = SphereGrid::new(n_theta, n_phi);
        let values = grid
            .directions
            .iter()
            .map(|dir| {
                crate::forward::perturbation_from_moments(centers, moments, &(dir * r1)).unwrap()
            })
            .collect();
        FieldSamples {
            grid,
            r1,
            values,
        }
    }

    #[test]
    fn multi_recovery_two_anomalies_noiseless() {
        let centers = [Vector3::new(0.5, 0.0, 0.0), Vector3::new(-0.4, 0.3, 0.2)];
        let moments = [cvec(0.0, 0.1, 1.0), cvec(0.8, -0.4, 0.2)];
        let samples = synthetic_samples(&centers, &moments, 12, 24, 2.0);
        let cfg = InversionConfig {
            count: 2,
            multistart: 16,
            seed: 3,
            ..Default::default()
        };
        let rec = recover_multi(&samples, &cfg, &BackgroundField::uniform(Vector3::z())).unwrap();
        assert_eq!(rec.len(), 2);
        // output is sorted lexicographically: (-0.4, ...) before (0.5, ...)
        assert!((rec[0].z_est - centers[1]).norm() < 1e-6, "z0 {}", rec[0].z_est);
        assert!((rec[1].z_est - centers[0]).norm() < 1e-6);
        for (r, m) in [(&rec[0], &moments[1]), (&rec[1], &moments[0])] {
            for i in 0..3 {
                assert!((r.moment[i] - m[i]).norm() < 1e-6 * m.norm());
            }
        }
        let cert = residual_certificate(&samples, &rec).unwrap();
        assert!(cert < 1e-8, "certificate {cert}");
    }

    #[test]
    fn multi_recovery_single_agrees_with_direct_path() {
        let z = Vector3::new(0.2, -0.3, 0.4);
        let m = cvec(0.5, 1.0, -0.2);
        let samples = synthetic_samples(&[z], &[m], 12, 24, 2.0);
        let cfg = InversionConfig {
            count: 1,
            multistart: 8,
            seed: 5,
            ..Default::default()
        };
        let rec = recover_multi(&samples, &cfg, &BackgroundField::uniform(Vector3::z())).unwrap();
        let er = extract_multipoles(&samples, 2).unwrap();
        let single = recover_single(&er.multipoles).unwrap();
        assert!((rec[0].z_est - single.z_est).norm() < 1e-8);
        for i in 0..3 {
            assert!((rec[0].moment[i] - single.moment[i]).norm() < 1e-8);
        }
    }

    #[test]
    fn multi_recovery_merged_warning() {
        // one effective dipole fitted with count = 2 lands two centers close
        // together; the merge warning must fire
        let z = Vector3::new(0.3, 0.0, 0.2);
        let m = cvec(0.0, 0.0, 1.0);
        let samples = synthetic_samples(&[z], &[m], 10, 20, 2.0);
        let cfg = InversionConfig {
            count: 2,
            multistart: 12,
            seed: 11,
            max_iter: 120,
            merge_distance: Some(0.25),
            ..Default::default()
        };
        match recover_multi(&samples, &cfg, &BackgroundField::uniform(Vector3::z())) {
            Ok(rec) => {
                if (rec[0].z_est - rec[1].z_est).norm() < 0.25 {
                    assert!(rec
                        .iter()
                        .any(|r| r.warnings.iter().any(|w| w.contains("merged"))));
                }
                // the combined model still explains the single dipole
                let cert = residual_certificate(&samples, &rec).unwrap();
                assert!(cert < 1e-3, "certificate {cert}");
            }
            Err(CoreError::NoConvergentStart(_)) => {
                // acceptable degenerate outcome for an overparametrized fit
            }
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn residual_certificate_ablation() {
        let centers = [Vector3::new(0.5, 0.0, 0.0), Vector3::new(-0.4, 0.3, 0.2)];
        let moments = [cvec(0.0, 0.1, 1.0), cvec(0.8, -0.4, 0.2)];
        let samples = synthetic_samples(&centers, &moments, 12, 24, 2.0);
        let full: Vec<RecoveredAnomaly> = centers
            .iter()
            .zip(&moments)
            .map(|(z, m)| RecoveredAnomaly {
                z_est: *z,
                moment: *m,
                mu_est: None,
                residual: 0.0,
                warnings: vec![],
            })
            .collect();
        let r_full = residual_certificate(&samples, &full).unwrap();
        let r_ablate = residual_certificate(&samples, &full[..1].to_vec()).unwrap();
        assert!(r_full < 1e-12);
        assert!(
            r_ablate > 10.0 * r_full.max(1e-10),
            "ablated {r_ablate} vs {r_full}"
        );
    }

    #[test]
    fn end_to_end_through_scenario() {
        // forward -> extract -> recover on the physical pipeline
        let scenario = Scenario {
            medium: MediumParams::new(1.0, 1.0, 1.5, 0.0).unwrap(),
            background: BackgroundField::uniform(Vector3::z()),
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
                n_theta: 16,
                n_phi: 32,
                noise_level: 0.0,
                seed: 1,
            },
            model: TensorModel::Full,
        };
        let tensors = scenario.compute_tensors().unwrap();
        let samples = sample_measurements(&scenario, &tensors).unwrap();
        let er = extract_multipoles(&samples, 3).unwrap();
        let rec = recover_single(&er.multipoles).unwrap();
        let z_err = (rec.z_est - scenario.anomalies[0].center).norm();
        assert!(z_err < 1e-6 * 2.0, "position error {z_err}");

        let knowns = BallKnowns {
            delta: 0.05,
            eps: 2.0,
            sigma: 0.0,
        };
        let mu = recover_permeability_ball(
            &rec.moment,
            &rec.z_est,
            &knowns,
            &scenario.medium,
            &scenario.background,
            TensorModel::Full,
        )
        .unwrap();
        assert!(
            (mu - Complex64::new(2.0, 0.0)).norm() < 1e-6 * 2.0,
            "mu_est {mu}"
        );
        assert_relative_eq!(mu.im, 0.0, epsilon = 1e-6);
    }
}
