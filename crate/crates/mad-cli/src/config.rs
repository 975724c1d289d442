//! Run configuration: one JSON document describing medium, background,
//! anomalies, measurement and inversion settings.

use anyhow::{anyhow, bail, Context};
use mad_core::background::BackgroundField;
use mad_core::forward::{Measurement, Scenario};
use mad_core::mesh::{make_mesh, scale_translate, ShapeSpec};
use mad_core::polarization::{Anomaly, MediumParams, TensorModel};
use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub medium: MediumSection,
    #[serde(default = "default_model")]
    pub model: String,
    pub background: BackgroundSection,
    pub anomalies: Vec<AnomalySection>,
    pub measurement: MeasurementSection,
    #[serde(default)]
    pub inversion: InversionSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_model() -> String {
    "full".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MediumSection {
    pub mu0: f64,
    pub eps0: f64,
    pub eps_s: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum BackgroundSection {
    #[serde(rename = "uniform")]
    Uniform { h: [f64; 3] },
    #[serde(rename = "dipole")]
    Dipole { moment: [f64; 3], center: [f64; 3] },
    #[serde(rename = "core-trace")]
    CoreTrace {
        core: CoreSection,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        trace: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        trace_dipole: Option<TraceDipoleSection>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoreSection {
    pub shape: String,
    #[serde(default = "default_refinement")]
    pub refinement: u32,
    pub delta: f64,
    #[serde(default)]
    pub center: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceDipoleSection {
    pub moment: [f64; 3],
    pub center: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnomalySection {
    pub center: [f64; 3],
    pub delta: f64,
    pub shape: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semi_axes: Option<[f64; 3]>,
    #[serde(default = "default_refinement")]
    pub refinement: u32,
    pub mu: f64,
    pub eps: f64,
    pub sigma: f64,
}

fn default_refinement() -> u32 {
    3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasurementSection {
    pub radius: f64,
    pub grid_theta: usize,
    pub grid_phi: usize,
    pub noise: NoiseSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseSection {
    pub level: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InversionSection {
    #[serde(default = "default_n_max")]
    pub n_max: u32,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "default_multistart")]
    pub multistart: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_residual_threshold")]
    pub residual_threshold: f64,
}

impl Default for InversionSection {
    fn default() -> Self {
        InversionSection {
            n_max: default_n_max(),
            count: default_count(),
            multistart: default_multistart(),
            tol: default_tol(),
            seed: 0,
            max_iter: default_max_iter(),
            residual_threshold: default_residual_threshold(),
        }
    }
}

fn default_n_max() -> u32 {
    8
}
fn default_count() -> usize {
    1
}
fn default_multistart() -> usize {
    16
}
fn default_tol() -> f64 {
    1e-12
}
fn default_max_iter() -> usize {
    200
}
fn default_residual_threshold() -> f64 {
    0.05
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: String,
}

fn default_dir() -> String {
    ".".into()
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> anyhow::Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| "parsing config JSON".to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Schema-level validation with field-path messages; scenario-level
    /// invariants are re-checked by the core on construction.
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.medium.mu0 <= 0.0 || self.medium.eps0 <= 0.0 || self.medium.eps_s <= 0.0 {
            bail!("medium: mu0, eps0 and eps_s must be positive");
        }
        if self.medium.omega < 0.0 {
            bail!("medium.omega: must be >= 0");
        }
        if self.model != "full" && self.model != "magnetostatic" {
            bail!("model: expected \"full\" or \"magnetostatic\", got {:?}", self.model);
        }
        if self.anomalies.is_empty() {
            bail!("anomalies: at least one anomaly required");
        }
        for (i, a) in self.anomalies.iter().enumerate() {
            if a.delta <= 0.0 {
                bail!("anomalies[{i}].delta: must be positive");
            }
            if a.mu <= 0.0 {
                bail!("anomalies[{i}].mu: must be positive");
            }
            if a.mu == self.medium.mu0 {
                bail!("anomalies[{i}].mu: equals medium.mu0 (contrast required)");
            }
            if a.eps <= 0.0 {
                bail!("anomalies[{i}].eps: must be positive");
            }
            if a.sigma < 0.0 {
                bail!("anomalies[{i}].sigma: must be >= 0");
            }
            if a.sigma > 0.0 && self.medium.omega == 0.0 {
                bail!("anomalies[{i}].sigma: gamma undefined at omega=0");
            }
            match a.shape.as_str() {
                "unit-ball" => {}
                "ellipsoid" => {
                    let ax = a
                        .semi_axes
                        .ok_or_else(|| anyhow!("anomalies[{i}].semi_axes: required for ellipsoid"))?;
                    if ax.iter().any(|v| *v <= 0.0) {
                        bail!("anomalies[{i}].semi_axes: must be positive");
                    }
                }
                other => bail!("anomalies[{i}].shape: unknown shape {other:?}"),
            }
            if a.refinement > 7 {
                bail!("anomalies[{i}].refinement: out of range (max 7)");
            }
        }
        if self.measurement.radius <= 0.0 {
            bail!("measurement.radius: must be positive");
        }
        for (i, a) in self.anomalies.iter().enumerate() {
            let z = Vector3::from(a.center);
            if z.norm() + a.delta >= self.measurement.radius {
                bail!("anomalies[{i}]: not strictly inside the measurement sphere");
            }
        }
        if self.measurement.grid_theta < 2 || self.measurement.grid_phi < 4 {
            bail!("measurement: grid_theta >= 2 and grid_phi >= 4 required");
        }
        if self.measurement.noise.level < 0.0 {
            bail!("measurement.noise.level: must be >= 0");
        }
        if self.inversion.count < 1 || self.inversion.multistart < 1 {
            bail!("inversion: count >= 1 and multistart >= 1 required");
        }
        if let BackgroundSection::CoreTrace {
            core,
            trace,
            trace_dipole,
        } = &self.background
        {
            if core.shape != "unit-ball" {
                bail!("background.core.shape: only unit-ball cores supported");
            }
            if core.delta <= 0.0 {
                bail!("background.core.delta: must be positive");
            }
            if trace.is_none() && trace_dipole.is_none() {
                bail!("background: core-trace requires trace samples or trace_dipole");
            }
        }
        Ok(())
    }

    pub fn tensor_model(&self) -> TensorModel {
        if self.model == "magnetostatic" {
            TensorModel::Magnetostatic
        } else {
            TensorModel::Full
        }
    }

    pub fn shape_spec(a: &AnomalySection) -> ShapeSpec {
        match a.shape.as_str() {
            "unit-ball" => ShapeSpec::unit_ball(a.refinement),
            _ => {
                let ax = a.semi_axes.expect("validated");
                ShapeSpec::ellipsoid(ax[0], ax[1], ax[2], a.refinement)
            }
        }
    }

    pub fn build_background(&self) -> anyhow::Result<BackgroundField> {
        Ok(match &self.background {
            BackgroundSection::Uniform { h } => BackgroundField::uniform(Vector3::from(*h)),
            BackgroundSection::Dipole { moment, center } => {
                BackgroundField::dipole(Vector3::from(*moment), Vector3::from(*center))
            }
            BackgroundSection::CoreTrace {
                core,
                trace,
                trace_dipole,
            } => {
                let base = make_mesh(&ShapeSpec::unit_ball(core.refinement))?;
                let mesh = Arc::new(scale_translate(
                    &base,
                    core.delta,
                    &Vector3::from(core.center),
                )?);
                let g = if let Some(values) = trace {
                    if values.len() != mesh.num_triangles() {
                        bail!(
                            "background.trace: length {} != panel count {}",
                            values.len(),
                            mesh.num_triangles()
                        );
                    }
                    DVector::from_vec(values.clone())
                } else {
                    let td = trace_dipole.as_ref().expect("validated");
                    let dip = BackgroundField::dipole(
                        Vector3::from(td.moment),
                        Vector3::from(td.center),
                    );
                    DVector::from_fn(mesh.num_triangles(), |i, _| {
                        mesh.normals[i].dot(&dip.eval(&mesh.centroids[i]).unwrap())
                    })
                };
                BackgroundField::core_trace(mesh, g)?
            }
        })
    }

    pub fn build_scenario(&self) -> anyhow::Result<Scenario> {
        let medium = MediumParams::new(
            self.medium.mu0,
            self.medium.eps0,
            self.medium.eps_s,
            self.medium.omega,
        )?;
        let anomalies = self
            .anomalies
            .iter()
            .map(|a| Anomaly {
                center: Vector3::from(a.center),
                delta: a.delta,
                shape: Self::shape_spec(a),
                mu: a.mu,
                eps: a.eps,
                sigma: a.sigma,
            })
            .collect();
        let scenario = Scenario {
            medium,
            background: self.build_background()?,
            anomalies,
            measurement: Measurement {
                r1: self.measurement.radius,
                n_theta: self.measurement.grid_theta,
                n_phi: self.measurement.grid_phi,
                noise_level: self.measurement.noise.level,
                seed: self.measurement.noise.seed,
            },
            model: self.tensor_model(),
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn inversion_config(&self) -> mad_core::inversion::InversionConfig {
        let max_delta = self
            .anomalies
            .iter()
            .map(|a| a.delta)
            .fold(0.0f64, f64::max);
        mad_core::inversion::InversionConfig {
            n_max: self.inversion.n_max,
            count: self.inversion.count,
            multistart: self.inversion.multistart,
            tol_grad: self.inversion.tol,
            tol_step: self.inversion.tol * 1e-2,
            max_iter: self.inversion.max_iter,
            seed: self.inversion.seed,
            merge_distance: Some(5.0 * max_delta),
        }
    }
}
