//! Quasisymmetry deviation and relative constraint errors.
//!
//! Field-strength data is supplied on a uniform full-torus `(φ, θ)` grid in
//! Boozer-like angles together with area-element weights `‖n‖`. The
//! quasisymmetric part `B_QS` is the weighted average of `B` along lines of
//! constant `η = θ − N·nfp·φ`; `J_QS` is the weighted L2 ratio of the
//! remainder to that part.

use std::f64::consts::PI;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surface::SurfaceGrid;

/// Field strength and area weights on a φ-major grid
/// (`index = i_phi * n_theta + i_theta`).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldOnSurface {
    nfp: u32,
    helicity: u32,
    n_phi: usize,
    n_theta: usize,
    b: Vec<f64>,
    weights: Vec<f64>,
}

impl FieldOnSurface {
    pub fn new(
        nfp: u32,
        helicity: u32,
        n_phi: usize,
        n_theta: usize,
        b: Vec<f64>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if nfp == 0 {
            return Err(Error::InvalidArgument("nfp must be at least 1".into()));
        }
        if helicity > 1 {
            return Err(Error::InvalidArgument(format!(
                "helicity must be 0 or 1, got {helicity}"
            )));
        }
        if n_phi == 0 || n_theta == 0 {
            return Err(Error::InvalidArgument("empty field grid".into()));
        }
        for len in [b.len(), weights.len()] {
            if len != n_phi * n_theta {
                return Err(Error::Dimension {
                    expected: n_phi * n_theta,
                    found: len,
                });
            }
        }
        if let Some(v) = b.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "field strength must be positive and finite, found {v}"
            )));
        }
        if let Some(v) = weights.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "area weights must be positive and finite, found {v}"
            )));
        }
        Ok(FieldOnSurface {
            nfp,
            helicity,
            n_phi,
            n_theta,
            b,
            weights,
        })
    }

    /// Field `b(φ, θ)` sampled on a surface grid, weighted by its `‖n‖`.
    pub fn from_surface_grid(
        grid: &SurfaceGrid,
        nfp: u32,
        helicity: u32,
        b: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let values = (0..grid.n_phi)
            .flat_map(|i| (0..grid.n_theta).map(move |k| (i, k)))
            .map(|(i, k)| b(grid.phi(i), grid.theta(k)))
            .collect();
        Self::new(
            nfp,
            helicity,
            grid.n_phi,
            grid.n_theta,
            values,
            grid.normal_norms.clone(),
        )
    }

    /// Assemble from scattered `(φ, θ, B, ‖n‖)` rows covering a uniform
    /// `[0, 2π)²` grid, in any order.
    pub fn from_rows(nfp: u32, helicity: u32, rows: &[FieldRow]) -> Result<Self> {
        let n_phi = distinct(rows.iter().map(|r| r.phi));
        let n_theta = distinct(rows.iter().map(|r| r.theta));
        if n_phi * n_theta != rows.len() {
            return Err(Error::InvalidArgument(format!(
                "{} rows do not form a full {n_phi}x{n_theta} grid",
                rows.len()
            )));
        }
        let mut b = vec![f64::NAN; rows.len()];
        let mut weights = vec![f64::NAN; rows.len()];
        for r in rows {
            let i = grid_index(r.phi, n_phi)?;
            let k = grid_index(r.theta, n_theta)?;
            let idx = i * n_theta + k;
            if !b[idx].is_nan() {
                return Err(Error::InvalidArgument(format!(
                    "duplicate grid node at phi={}, theta={}",
                    r.phi, r.theta
                )));
            }
            b[idx] = r.b;
            weights[idx] = r.norm_n;
        }
        Self::new(nfp, helicity, n_phi, n_theta, b, weights)
    }

    /// CSV with header `phi,theta,B,norm_n`.
    pub fn read_csv<R: BufRead>(reader: R, nfp: u32, helicity: u32) -> Result<Self> {
        let mut rows = Vec::new();
        for (k, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<field csv>", e))?;
            if k == 0 || line.trim().is_empty() {
                continue;
            }
            let cols: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::MalformedLine {
                    line: k + 1,
                    message: e.to_string(),
                })?;
            if cols.len() != 4 {
                return Err(Error::MalformedLine {
                    line: k + 1,
                    message: format!("expected 4 columns, found {}", cols.len()),
                });
            }
            rows.push(FieldRow {
                phi: cols[0],
                theta: cols[1],
                b: cols[2],
                norm_n: cols[3],
            });
        }
        Self::from_rows(nfp, helicity, &rows)
    }

    pub fn from_json(json: &FieldJson) -> Result<Self> {
        Self::from_rows(json.nfp, json.helicity, &json.rows)
    }

    pub fn to_json(&self) -> FieldJson {
        let mut rows = Vec::with_capacity(self.b.len());
        for i in 0..self.n_phi {
            for k in 0..self.n_theta {
                let idx = i * self.n_theta + k;
                rows.push(FieldRow {
                    phi: 2.0 * PI * i as f64 / self.n_phi as f64,
                    theta: 2.0 * PI * k as f64 / self.n_theta as f64,
                    b: self.b[idx],
                    norm_n: self.weights[idx],
                });
            }
        }
        FieldJson {
            nfp: self.nfp,
            helicity: self.helicity,
            rows,
        }
    }

    pub fn nfp(&self) -> u32 {
        self.nfp
    }

    pub fn helicity(&self) -> u32 {
        self.helicity
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_phi, self.n_theta)
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Field scaled by a positive constant.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(
            self.nfp,
            self.helicity,
            self.n_phi,
            self.n_theta,
            self.b.iter().map(|v| v * c).collect(),
            self.weights.clone(),
        )
    }

    /// θ-index shift per φ step along a line of constant helical angle.
    fn helical_stride(&self) -> Result<usize> {
        let turns = self.helicity as usize * self.nfp as usize * self.n_theta;
        if !turns.is_multiple_of(self.n_phi) {
            return Err(Error::NonClosingHelicalGrid {
                n_phi: self.n_phi,
                n_theta: self.n_theta,
                nfp: self.nfp,
                helicity: self.helicity,
            });
        }
        Ok((turns / self.n_phi) % self.n_theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldRow {
    pub phi: f64,
    pub theta: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub norm_n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldJson {
    pub nfp: u32,
    pub helicity: u32,
    pub rows: Vec<FieldRow>,
}

fn distinct(values: impl Iterator<Item = f64>) -> usize {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    v.len()
}

fn grid_index(angle: f64, n: usize) -> Result<usize> {
    let pos = angle.rem_euclid(2.0 * PI) * n as f64 / (2.0 * PI);
    let k = pos.round();
    if (pos - k).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!(
            "angle {angle} is not on a uniform {n}-point grid"
        )));
    }
    Ok(k as usize % n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QsReport {
    pub j_qs: f64,
    pub b_qs: Vec<f64>,
    pub b_nonqs: Vec<f64>,
}

/// Weighted average of `B` along each line of constant helical angle,
/// broadcast back onto the grid.
///
/// For helicity 1 the lines only pass through grid nodes when `n_phi`
/// divides `nfp·n_theta`; other grids are rejected.
pub fn qs_projection(f: &FieldOnSurface) -> Result<Vec<f64>> {
    let stride = f.helical_stride()?;
    let (n_phi, n_theta) = (f.n_phi, f.n_theta);
    let line = |i: usize, k: usize| (k + n_theta - (stride * i) % n_theta) % n_theta;

    let mut num = vec![0.0; n_theta];
    let mut den = vec![0.0; n_theta];
    for i in 0..n_phi {
        for k in 0..n_theta {
            let idx = i * n_theta + k;
            let l = line(i, k);
            num[l] += f.b[idx] * f.weights[idx];
            den[l] += f.weights[idx];
        }
    }
    let avg: Vec<f64> = num.iter().zip(&den).map(|(n, d)| n / d).collect();
    Ok((0..n_phi)
        .flat_map(|i| (0..n_theta).map(move |k| (i, k)))
        .map(|(i, k)| avg[line(i, k)])
        .collect())
}

pub fn qs_report(f: &FieldOnSurface) -> Result<QsReport> {
    let b_qs = qs_projection(f)?;
    let b_nonqs: Vec<f64> = f.b.iter().zip(&b_qs).map(|(b, q)| b - q).collect();
    let (mut num, mut den) = (0.0, 0.0);
    for ((r, q), w) in b_nonqs.iter().zip(&b_qs).zip(&f.weights) {
        num += r * r * w;
        den += q * q * w;
    }
    if !(den > 0.0) {
        return Err(Error::ZeroField);
    }
    Ok(QsReport {
        j_qs: (num / den).sqrt(),
        b_qs,
        b_nonqs,
    })
}

pub fn j_qs(f: &FieldOnSurface) -> Result<f64> {
    qs_report(f).map(|r| r.j_qs)
}

/// Signed relative error `(value − target) / target`.
pub fn relative_error(value: f64, target: f64) -> Result<f64> {
    if target == 0.0 || !target.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "constraint target must be non-zero and finite, got {target}"
        )));
    }
    Ok((value - target) / target)
}

/// `(c_A, c_ι)` relative to the targets.
pub fn constraint_errors(
    aspect_ratio: f64,
    aspect_target: f64,
    mean_iota: f64,
    iota_target: f64,
) -> Result<(f64, f64)> {
    Ok((
        relative_error(aspect_ratio, aspect_target)?,
        relative_error(mean_iota, iota_target)?,
    ))
}
