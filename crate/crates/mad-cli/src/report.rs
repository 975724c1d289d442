//! Deterministic JSON reports. Wall-clock timings go to stderr, never into
//! the report, so a fixed config and seeds regenerate identical bytes.

use crate::config::RunConfig;
use mad_core::inversion::RecoveredAnomaly;
use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct Conventions {
    pub harmonics: &'static str,
    pub kernel: &'static str,
    pub units: &'static str,
}

impl Default for Conventions {
    fn default() -> Self {
        Conventions {
            harmonics: "orthonormal complex spherical harmonics with Condon-Shortley phase",
            kernel: "gamma0(x) = -1/(4*pi*|x|)",
            units: "dimensionless shared unit system; lengths via delta, centers, radius",
        }
    }
}

#[derive(Debug, Serialize)]
pub struct RunReport<T: Serialize> {
    pub version: &'static str,
    pub command: &'static str,
    pub conventions: Conventions,
    pub config: RunConfig,
    #[serde(flatten)]
    pub payload: T,
}

impl<T: Serialize> RunReport<T> {
    pub fn new(command: &'static str, config: RunConfig, payload: T) -> Self {
        RunReport {
            version: env!("CARGO_PKG_VERSION"),
            command,
            conventions: Conventions::default(),
            config,
            payload,
        }
    }

    pub fn to_json(&self) -> anyhow::Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// A 3x3 complex matrix as nested [re, im] pairs.
pub fn matrix_entries(m: &Matrix3<Complex64>) -> Vec<Vec<[f64; 2]>> {
    (0..3)
        .map(|i| (0..3).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

pub fn real_matrix_entries(m: &Matrix3<f64>) -> Vec<Vec<[f64; 2]>> {
    (0..3)
        .map(|i| (0..3).map(|j| [m[(i, j)], 0.0]).collect())
        .collect()
}

#[derive(Debug, Serialize)]
pub struct RecoveredEntry {
    pub center: [f64; 3],
    pub moment_re: [f64; 3],
    pub moment_im: [f64; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_re: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_im: Option<f64>,
    pub residual: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl RecoveredEntry {
    pub fn from(r: &RecoveredAnomaly) -> Self {
        RecoveredEntry {
            center: [r.z_est.x, r.z_est.y, r.z_est.z],
            moment_re: [r.moment.x.re, r.moment.y.re, r.moment.z.re],
            moment_im: [r.moment.x.im, r.moment.y.im, r.moment.z.im],
            mu_re: r.mu_est.map(|m| m.re),
            mu_im: r.mu_est.map(|m| m.im),
            residual: r.residual,
            flags: r.warnings.clone(),
        }
    }
}

/// Atomic file write: temp file in the target directory, then rename.
pub fn write_atomic(path: &std::path::Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = path.parent().unwrap_or_else(|| std::path::Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().unwrap_or_default().to_string_lossy()
    ));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
