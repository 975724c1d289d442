//! Magnetostatic anomaly detection toolkit.
//!
//! Builds the leading-order forward model for geomagnetic field perturbations
//! caused by small magnetized inclusions (boundary-integral polarization
//! tensors over a Neumann-Poincare resolvent calculus), a brute-force
//! transmission-problem oracle, and the constructive inversion that recovers
//! inclusion positions, dipole moments and (single ball) permeability from
//! field samples on a surrounding sphere.
//!
//! Conventions fixed across the crate and echoed in CLI reports:
//! - Laplace kernel `gamma0(x) = -1/(4 pi |x|)`.
//! - Orthonormal complex spherical harmonics with Condon-Shortley phase.
//! - Dimensionless geometry; one shared unit system for lengths and fields.

pub mod background;
pub mod error;
pub mod forward;
pub mod harmonics;
pub mod inversion;
pub mod kernels;
pub mod layer;
pub mod mesh;
pub mod oracle;
pub mod polarization;
pub mod solver;
pub mod validate;

pub use background::{nonvanishing_guard, validate_harmonic, BackgroundField};
pub use error::{CoreError, Result};
pub use forward::{
    add_noise, asymptotic_perturbation, multipole_direct, read_samples_csv,
    reconstruct_scalar_from_multipoles, sample_measurements, write_samples_csv, FieldSamples,
    Measurement, Scenario,
};
pub use harmonics::{
    addition_partial, grad_gamma_expansion, q_matrix, sh_index, sht_forward, sph_harm,
    surf_grad_sph_harm, vector_n, MultipoleSet, SphereGrid,
};
pub use inversion::{
    extract_multipoles, recover_multi, recover_permeability_ball, recover_single,
    residual_certificate, BallKnowns, InversionConfig, RecoveredAnomaly,
};
pub use layer::{
    assemble_adjoint_np, assemble_single_layer, eval_grad_single_layer, eval_single_layer,
    solve_resolvent, BoundaryDensity, BoundaryOperator, OperatorKind, ResolventSolver, Sign,
};
pub use mesh::{
    enclosed_volume, make_mesh, scale_translate, ShapeKind, ShapeSpec, SurfaceClass, SurfaceMesh,
};
pub use oracle::{asymptotic_error, solve_transmission, TransmissionSolution};
pub use polarization::{
    ball_p_closed_form, check_nonsingular, tensor_d, tensor_m, tensor_p, tensor_p0, Anomaly,
    MediumParams, PolarizationTensors, TensorModel,
};
