//! Field sources for scoring generated boundaries.
//!
//! Geometry (aspect ratio) is always computed here. Rotational transform and
//! the field strength on the surface need an MHD equilibrium, which is
//! outside this crate; they come from one of:
//!
//! * [`FieldSource::Synthetic`]: an exactly quasisymmetric model field
//!   `B0 (1 + ε cos(θ − N·nfp·φ))` laid on the surface grid. Useful for
//!   exercising the pipeline; it says nothing about the real equilibrium.
//! * [`FieldSource::External`]: a user command implementing the adapter
//!   contract below.
//!
//! # Adapter contract
//!
//! The command receives one [`EvaluatorRequest`] as JSON on stdin and must
//! print one [`EvaluatorResponse`] as JSON on stdout, exiting with status 0.
//! A nonzero status means the solver failed for that surface; the sample is
//! then marked invalid rather than aborting the run.

use std::io::Write;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qsmetrics::{FieldJson, FieldOnSurface};
use crate::surface::{build_grid, geometry_from_grid, FourierSurface, SurfaceJson};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldSource {
    #[default]
    None,
    Synthetic {
        b0: f64,
        epsilon: f64,
    },
    External {
        /// Program followed by its arguments.
        command: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatorRequest {
    pub surface: SurfaceJson,
    pub helicity: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatorResponse {
    #[serde(default)]
    pub mean_iota: Option<f64>,
    #[serde(default)]
    pub aspect_ratio: Option<f64>,
    #[serde(default)]
    pub field: Option<FieldJson>,
}

/// Measured properties of one surface.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub aspect_ratio: f64,
    pub mean_iota: Option<f64>,
    pub field: Option<FieldOnSurface>,
}

/// Grid on which helical lines of `θ − N·nfp·φ` pass through nodes.
///
/// Uses the default toroidal resolution in both directions, so the
/// helical stride equals `nfp`.
pub fn field_grid(s: &FourierSurface, helicity: u32) -> (usize, usize) {
    let (n_phi, n_theta) = s.default_resolution();
    if helicity == 0 {
        (n_phi, n_theta)
    } else {
        (n_phi, n_phi)
    }
}

/// The exactly quasisymmetric model field, weighted by the surface's `‖n‖`.
pub fn synthetic_field(s: &FourierSurface, helicity: u32, b0: f64, epsilon: f64) -> Result<FieldOnSurface> {
    if !(b0 > 0.0) || !(epsilon.abs() < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "synthetic field needs b0 > 0 and |epsilon| < 1, got ({b0}, {epsilon})"
        )));
    }
    let (n_phi, n_theta) = field_grid(s, helicity);
    let grid = build_grid(s, n_phi, n_theta)?;
    let nfp = s.nfp() as f64;
    let n = helicity as f64;
    FieldOnSurface::from_surface_grid(&grid, s.nfp(), helicity, |phi, theta| {
        b0 * (1.0 + epsilon * (theta - n * nfp * phi).cos())
    })
}

/// Run an adapter command on one surface.
pub fn run_external(command: &[String], request: &EvaluatorRequest) -> Result<EvaluatorResponse> {
    let (program, args) = command
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("external evaluator command is empty".into()))?;
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| Error::External(format!("cannot start {program}: {e}")))?;
    let input = serde_json::to_vec(request)?;
    // a child that exits without reading stdin is reported through its status
    if let Some(mut stdin) = child.stdin.take() {
        let _ = stdin.write_all(&input);
    }
    let output = child
        .wait_with_output()
        .map_err(|e| Error::External(format!("{program}: {e}")))?;
    if !output.status.success() {
        return Err(Error::External(format!(
            "{program} exited with {}: {}",
            output.status,
            String::from_utf8_lossy(&output.stderr).trim()
        )));
    }
    serde_json::from_slice(&output.stdout)
        .map_err(|e| Error::External(format!("{program} produced invalid output: {e}")))
}

/// Geometric aspect ratio plus whatever the field source provides.
///
/// An external aspect ratio, when given, takes precedence over the
/// geometric one, matching the solver-based protocol.
pub fn evaluate_surface(s: &FourierSurface, helicity: u32, source: &FieldSource) -> Result<Evaluation> {
    let (n_phi, n_theta) = s.default_resolution();
    let aspect_ratio = geometry_from_grid(&build_grid(s, n_phi, n_theta)?)?.aspect_ratio;
    match source {
        FieldSource::None => Ok(Evaluation {
            aspect_ratio,
            mean_iota: None,
            field: None,
        }),
        FieldSource::Synthetic { b0, epsilon } => Ok(Evaluation {
            aspect_ratio,
            mean_iota: None,
            field: Some(synthetic_field(s, helicity, *b0, *epsilon)?),
        }),
        FieldSource::External { command } => {
            let response = run_external(
                command,
                &EvaluatorRequest {
                    surface: s.to_json(),
                    helicity,
                },
            )?;
            let field = response.field.as_ref().map(FieldOnSurface::from_json).transpose()?;
            Ok(Evaluation {
                aspect_ratio: response.aspect_ratio.unwrap_or(aspect_ratio),
                mean_iota: response.mean_iota,
                field,
            })
        }
    }
}
