//! Subcommand implementations over the core library.

use crate::config::RunConfig;
use crate::report::{
    matrix_entries, real_matrix_entries, write_atomic, RecoveredEntry, RunReport,
};
use anyhow::{bail, Context};
use mad_core::forward::{read_samples_csv, sample_measurements, write_samples_csv};
use mad_core::inversion::{
    extract_multipoles, recover_multi, recover_permeability_ball, recover_single,
    residual_certificate, BallKnowns, RecoveredAnomaly,
};
use mad_core::polarization::{ball_p_closed_form, PolarizationContext};
use mad_core::validate::{run_suite, Suite};
use mad_core::mesh::make_mesh;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

pub struct CommandIo {
    pub out_dir: PathBuf,
}

impl CommandIo {
    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

#[derive(Serialize)]
struct TensorEntry {
    anomaly: usize,
    p0: Vec<Vec<[f64; 2]>>,
    d: Vec<Vec<[f64; 2]>>,
    m: Vec<Vec<[f64; 2]>>,
    p: Vec<Vec<[f64; 2]>>,
    nonsingular: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    closed_form_relative_error: Option<f64>,
}

#[derive(Serialize)]
struct TensorsPayload {
    tensors: Vec<TensorEntry>,
}

pub fn cmd_tensors(config: RunConfig, io: &CommandIo) -> anyhow::Result<i32> {
    let t0 = Instant::now();
    let scenario = config.build_scenario()?;
    let mut entries = Vec::new();
    for (idx, anomaly) in scenario.anomalies.iter().enumerate() {
        // mesh-based tensors: the spec surface for this command
        let mesh = Arc::new(make_mesh(&anomaly.shape)?);
        let ctx = PolarizationContext::new(mesh);
        let t = ctx.tensor_p(anomaly, &scenario.medium)?;
        let closed_form_relative_error = if anomaly.shape.is_ball() {
            let closed = ball_p_closed_form(
                anomaly,
                &scenario.medium,
                mad_core::polarization::TensorModel::Full,
            )?;
            Some((t.p - closed).norm() / closed.norm())
        } else {
            None
        };
        entries.push(TensorEntry {
            anomaly: idx,
            p0: real_matrix_entries(&t.p0),
            d: matrix_entries(&t.d),
            m: matrix_entries(&t.m),
            p: matrix_entries(&t.p),
            nonsingular: mad_core::polarization::check_nonsingular(&t.p),
            closed_form_relative_error,
        });
    }
    let report = RunReport::new("tensors", config, TensorsPayload { tensors: entries });
    let path = io.path("report-tensors.json");
    write_atomic(&path, report.to_json()?.as_bytes())?;
    eprintln!(
        "tensors: wrote {} in {:.2}s",
        path.display(),
        t0.elapsed().as_secs_f64()
    );
    Ok(0)
}

#[derive(Serialize)]
struct SimulatePayload {
    samples_path: String,
    nodes: usize,
    rms_field: f64,
    noise_level: f64,
    noise_seed: u64,
}

pub fn cmd_simulate(config: RunConfig, io: &CommandIo) -> anyhow::Result<i32> {
    let t0 = Instant::now();
    let scenario = config.build_scenario()?;
    let tensors = scenario.compute_tensors()?;
    let samples = sample_measurements(&scenario, &tensors)?;
    let mut csv = Vec::new();
    write_samples_csv(&samples, &mut csv)?;
    let samples_path = io.path("samples.csv");
    write_atomic(&samples_path, &csv)?;
    let payload = SimulatePayload {
        // file name only: the report must not depend on where it was written
        samples_path: "samples.csv".into(),
        nodes: samples.values.len(),
        rms_field: samples.rms(),
        noise_level: scenario.measurement.noise_level,
        noise_seed: scenario.measurement.seed,
    };
    let report = RunReport::new("simulate", config, payload);
    write_atomic(&io.path("report-simulate.json"), report.to_json()?.as_bytes())?;
    eprintln!(
        "simulate: wrote {} ({} nodes) in {:.2}s",
        samples_path.display(),
        samples.values.len(),
        t0.elapsed().as_secs_f64()
    );
    Ok(0)
}

#[derive(Serialize)]
struct InvertPayload {
    recovered: Vec<RecoveredEntry>,
    residual_certificate: f64,
    residual_threshold: f64,
    extraction_conditions: Vec<f64>,
}

pub fn cmd_invert(config: RunConfig, samples_path: &Path, io: &CommandIo) -> anyhow::Result<i32> {
    let t0 = Instant::now();
    let file = std::fs::File::open(samples_path)
        .with_context(|| format!("opening samples {}", samples_path.display()))?;
    let mut reader = std::io::BufReader::new(file);
    let samples = read_samples_csv(&mut reader)?;

    // grid mismatch guard against the configured measurement
    if (samples.r1 - config.measurement.radius).abs() > 1e-9 * config.measurement.radius {
        bail!(
            "grid mismatch: samples radius {} vs configured {}",
            samples.r1,
            config.measurement.radius
        );
    }
    if samples.grid.n_theta != config.measurement.grid_theta
        || samples.grid.n_phi != config.measurement.grid_phi
    {
        bail!(
            "grid mismatch: samples grid {}x{} vs configured {}x{}",
            samples.grid.n_theta,
            samples.grid.n_phi,
            config.measurement.grid_theta,
            config.measurement.grid_phi
        );
    }

    let background = config.build_background()?;
    let inv = config.inversion_config();
    let medium = mad_core::polarization::MediumParams::new(
        config.medium.mu0,
        config.medium.eps0,
        config.medium.eps_s,
        config.medium.omega,
    )?;

    let er = extract_multipoles(&samples, inv.n_max.min(samples.grid.n_theta as u32 - 2))?;
    let mut recovered: Vec<RecoveredAnomaly> = if inv.count == 1 {
        vec![recover_single(&er.multipoles)?]
    } else {
        recover_multi(&samples, &inv, &background)?
    };

    // permeability for a single known ball anomaly
    if inv.count == 1 && config.anomalies.len() == 1 && config.anomalies[0].shape == "unit-ball" {
        let a = &config.anomalies[0];
        let knowns = BallKnowns {
            delta: a.delta,
            eps: a.eps,
            sigma: a.sigma,
        };
        match recover_permeability_ball(
            &recovered[0].moment,
            &recovered[0].z_est,
            &knowns,
            &medium,
            &background,
            config.tensor_model(),
        ) {
            Ok(mu) => recovered[0].mu_est = Some(mu),
            Err(e) => recovered[0]
                .warnings
                .push(format!("permeability not recovered: {e}")),
        }
    }

    let cert = residual_certificate(&samples, &recovered)?;

    // overcount diagnostic: a moment far below the strongest one explains no
    // data beyond the residual floor
    let max_moment = recovered
        .iter()
        .map(|r| r.moment.norm())
        .fold(0.0f64, f64::max);
    for r in recovered.iter_mut() {
        if max_moment > 0.0 && r.moment.norm() < (0.02f64).max(3.0 * cert) * max_moment {
            r.warnings.push("possible overcount".into());
        }
    }

    let threshold = config.inversion.residual_threshold;
    let payload = InvertPayload {
        recovered: recovered.iter().map(RecoveredEntry::from).collect(),
        residual_certificate: cert,
        residual_threshold: threshold,
        extraction_conditions: er.conditions.clone(),
    };
    let report = RunReport::new("invert", config, payload);
    write_atomic(&io.path("report-invert.json"), report.to_json()?.as_bytes())?;
    eprintln!(
        "invert: certificate {:.3e} in {:.2}s",
        cert,
        t0.elapsed().as_secs_f64()
    );
    Ok(if cert > threshold { 1 } else { 0 })
}

#[derive(Serialize)]
struct ValidateCheck {
    id: String,
    description: String,
    measured: f64,
    bound: String,
    pass: bool,
}

#[derive(Serialize)]
struct ValidatePayload {
    suite: String,
    checks: Vec<ValidateCheck>,
    all_pass: bool,
}

pub fn cmd_validate(suite_name: &str, io: &CommandIo) -> anyhow::Result<i32> {
    let t0 = Instant::now();
    let suite = Suite::from_name(suite_name)
        .ok_or_else(|| anyhow::anyhow!("usage: unknown suite {suite_name:?}; expected one of np | tensors | asymptotic | harmonics | inversion"))?;
    let results = run_suite(suite)?;
    let mut all_pass = true;
    for r in &results {
        println!("{}", r.line());
        all_pass &= r.pass;
    }
    let payload = ValidatePayload {
        suite: suite_name.into(),
        checks: results
            .iter()
            .map(|r| ValidateCheck {
                id: r.id.clone(),
                description: r.description.clone(),
                measured: r.measured,
                bound: r.bound.clone(),
                pass: r.pass,
            })
            .collect(),
        all_pass,
    };
    #[derive(Serialize)]
    struct ValidateReport {
        version: &'static str,
        command: &'static str,
        #[serde(flatten)]
        payload: ValidatePayload,
    }
    let report = ValidateReport {
        version: env!("CARGO_PKG_VERSION"),
        command: "validate",
        payload,
    };
    write_atomic(
        &io.path(&format!("report-validate-{suite_name}.json")),
        serde_json::to_string_pretty(&report)?.as_bytes(),
    )?;
    eprintln!(
        "validate {}: {} in {:.2}s",
        suite_name,
        if all_pass { "all pass" } else { "FAILURES" },
        t0.elapsed().as_secs_f64()
    );
    Ok(if all_pass { 0 } else { 1 })
}
