//! Tensor-product Fourier representation of stellarator-symmetric boundaries.
//!
//! A surface with `nfp` field periods is described by three coefficient
//! tables. With the poloidal basis
//! `w = {1, cos θ, .., cos mθ, sin θ, .., sin mθ}` and the toroidal basis
//! `v = {1, cos nfp·φ, .., cos n·nfp·φ, sin nfp·φ, .., sin n·nfp·φ}`
//! (indices `0..=2m` and `0..=2n`), the rotating-frame components are
//!
//! ```text
//! x̂(φ,θ) = Σ x_ij w_i(θ) v_j(φ)   over (i ≤ m, j ≤ n) ∪ (i > m, j > n)
//! ŷ(φ,θ) = Σ y_ij w_i(θ) v_j(φ)   over (i ≤ m, j > n) ∪ (i > m, j ≤ n)
//! z(φ,θ) = Σ z_ij w_i(θ) v_j(φ)   over the same blocks as ŷ
//! ```
//!
//! and the Cartesian point is `(x̂ cos φ − ŷ sin φ, x̂ sin φ + ŷ cos φ, z)`.
//! Restricting each table to these blocks is what makes every surface
//! stellarator symmetric.

use std::f64::consts::PI;
use std::io::Write;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TWO_PI: f64 = 2.0 * PI;

/// Number of coefficients in a packed surface vector.
pub fn feature_length(m_pol: usize, n_tor: usize) -> usize {
    let x_len = (m_pol + 1) * (n_tor + 1) + m_pol * n_tor;
    let yz_len = (m_pol + 1) * n_tor + m_pol * (n_tor + 1);
    x_len + 2 * yz_len
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    X,
    Y,
    Z,
}

impl Component {
    /// The two `(i-range, j-range)` blocks holding the legal indices.
    fn blocks(self, m_pol: usize, n_tor: usize) -> [(Range<usize>, Range<usize>); 2] {
        let low_i = 0..m_pol + 1;
        let high_i = m_pol + 1..2 * m_pol + 1;
        let low_j = 0..n_tor + 1;
        let high_j = n_tor + 1..2 * n_tor + 1;
        match self {
            Component::X => [(low_i, low_j), (high_i, high_j)],
            Component::Y | Component::Z => [(low_i, high_j), (high_i, low_j)],
        }
    }

    fn len(self, m_pol: usize, n_tor: usize) -> usize {
        self.blocks(m_pol, n_tor)
            .iter()
            .map(|(ri, rj)| ri.len() * rj.len())
            .sum()
    }
}

/// Coefficients of one component, storing only the legal `(i, j)` entries in
/// block-major, row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffTable {
    component: Component,
    m_pol: usize,
    n_tor: usize,
    values: Vec<f64>,
}

impl CoeffTable {
    pub fn zeros(component: Component, m_pol: usize, n_tor: usize) -> Self {
        CoeffTable {
            component,
            m_pol,
            n_tor,
            values: vec![0.0; component.len(m_pol, n_tor)],
        }
    }

    pub fn component(&self) -> Component {
        self.component
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn index_of(&self, i: usize, j: usize) -> Option<usize> {
        let mut offset = 0;
        for (ri, rj) in self.component.blocks(self.m_pol, self.n_tor) {
            if ri.contains(&i) && rj.contains(&j) {
                return Some(offset + (i - ri.start) * rj.len() + (j - rj.start));
            }
            offset += ri.len() * rj.len();
        }
        None
    }

    /// Coefficient at `(i, j)`, or `None` when the index is outside the
    /// stellarator-symmetric blocks.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.index_of(i, j).map(|k| self.values[k])
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        let k = self.index_of(i, j).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "index ({i}, {j}) is not a legal {:?} coefficient for m_pol={}, n_tor={}",
                self.component, self.m_pol, self.n_tor
            ))
        })?;
        self.values[k] = value;
        Ok(())
    }

    /// Legal entries as `(i, j, value)` in storage order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.component
            .blocks(self.m_pol, self.n_tor)
            .into_iter()
            .flat_map(|(ri, rj)| ri.flat_map(move |i| rj.clone().map(move |j| (i, j))))
            .zip(self.values.iter())
            .map(|((i, j), &v)| (i, j, v))
    }

    /// Value and angular derivatives `(f, ∂f/∂φ, ∂f/∂θ)` at one node.
    fn eval(&self, basis: &Basis) -> (f64, f64, f64) {
        let (mut f, mut f_phi, mut f_theta) = (0.0, 0.0, 0.0);
        for (i, j, c) in self.entries() {
            if c == 0.0 {
                continue;
            }
            f += c * basis.w[i] * basis.v[j];
            f_phi += c * basis.w[i] * basis.dv[j];
            f_theta += c * basis.dw[i] * basis.v[j];
        }
        (f, f_phi, f_theta)
    }
}

/// Basis function values and derivatives at one `(φ, θ)`.
struct Basis {
    w: Vec<f64>,
    dw: Vec<f64>,
    v: Vec<f64>,
    dv: Vec<f64>,
}

impl Basis {
    fn new(m_pol: usize, n_tor: usize, nfp: u32, phi: f64, theta: f64) -> Self {
        let mut w = vec![0.0; 2 * m_pol + 1];
        let mut dw = vec![0.0; 2 * m_pol + 1];
        w[0] = 1.0;
        for i in 1..=m_pol {
            let k = i as f64;
            let (s, c) = (k * theta).sin_cos();
            w[i] = c;
            w[m_pol + i] = s;
            dw[i] = -k * s;
            dw[m_pol + i] = k * c;
        }
        let mut v = vec![0.0; 2 * n_tor + 1];
        let mut dv = vec![0.0; 2 * n_tor + 1];
        v[0] = 1.0;
        for j in 1..=n_tor {
            let k = (j as f64) * f64::from(nfp);
            let (s, c) = (k * phi).sin_cos();
            v[j] = c;
            v[n_tor + j] = s;
            dv[j] = -k * s;
            dv[n_tor + j] = k * c;
        }
        Basis { w, dw, v, dv }
    }
}

/// Position and tangent vectors at one surface node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub position: [f64; 3],
    pub d_phi: [f64; 3],
    pub d_theta: [f64; 3],
}

impl SurfacePoint {
    /// Unnormalized normal `∂r/∂φ × ∂r/∂θ`.
    pub fn normal(&self) -> [f64; 3] {
        cross(self.d_phi, self.d_theta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourierSurface {
    nfp: u32,
    m_pol: usize,
    n_tor: usize,
    x: CoeffTable,
    y: CoeffTable,
    z: CoeffTable,
}

impl FourierSurface {
    pub fn zeros(nfp: u32, m_pol: usize, n_tor: usize) -> Result<Self> {
        if nfp == 0 {
            return Err(Error::InvalidArgument("nfp must be at least 1".into()));
        }
        Ok(FourierSurface {
            nfp,
            m_pol,
            n_tor,
            x: CoeffTable::zeros(Component::X, m_pol, n_tor),
            y: CoeffTable::zeros(Component::Y, m_pol, n_tor),
            z: CoeffTable::zeros(Component::Z, m_pol, n_tor),
        })
    }

    /// Circular-cross-section torus `x̂ = R + r cos θ`, `z = r sin θ`.
    pub fn circular_torus(
        nfp: u32,
        m_pol: usize,
        n_tor: usize,
        major_radius: f64,
        minor_radius: f64,
    ) -> Result<Self> {
        if m_pol == 0 {
            return Err(Error::InvalidArgument(
                "a circular cross-section needs m_pol >= 1".into(),
            ));
        }
        let mut s = Self::zeros(nfp, m_pol, n_tor)?;
        s.x.set(0, 0, major_radius)?;
        s.x.set(1, 0, minor_radius)?;
        s.z.set(m_pol + 1, 0, minor_radius)?;
        Ok(s)
    }

    pub fn nfp(&self) -> u32 {
        self.nfp
    }

    pub fn m_pol(&self) -> usize {
        self.m_pol
    }

    pub fn n_tor(&self) -> usize {
        self.n_tor
    }

    pub fn table(&self, component: Component) -> &CoeffTable {
        match component {
            Component::X => &self.x,
            Component::Y => &self.y,
            Component::Z => &self.z,
        }
    }

    pub fn table_mut(&mut self, component: Component) -> &mut CoeffTable {
        match component {
            Component::X => &mut self.x,
            Component::Y => &mut self.y,
            Component::Z => &mut self.z,
        }
    }

    /// Flatten to `x̂` blocks, then `ŷ` blocks, then `z` blocks.
    pub fn pack(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(feature_length(self.m_pol, self.n_tor));
        out.extend_from_slice(&self.x.values);
        out.extend_from_slice(&self.y.values);
        out.extend_from_slice(&self.z.values);
        out
    }

    pub fn unpack(v: &[f64], nfp: u32, m_pol: usize, n_tor: usize) -> Result<Self> {
        let expected = feature_length(m_pol, n_tor);
        if v.len() != expected {
            return Err(Error::Dimension {
                expected,
                found: v.len(),
            });
        }
        let mut s = Self::zeros(nfp, m_pol, n_tor)?;
        let nx = s.x.len();
        let ny = s.y.len();
        s.x.values.copy_from_slice(&v[..nx]);
        s.y.values.copy_from_slice(&v[nx..nx + ny]);
        s.z.values.copy_from_slice(&v[nx + ny..]);
        Ok(s)
    }

    /// Multiply every coefficient by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut s = self.clone();
        for t in [&mut s.x, &mut s.y, &mut s.z] {
            t.values.iter_mut().for_each(|c| *c *= factor);
        }
        s
    }

    pub fn evaluate(&self, phi: f64, theta: f64) -> [f64; 3] {
        self.evaluate_with_derivatives(phi, theta).position
    }

    /// Position plus analytic tangents, from term-by-term differentiation.
    pub fn evaluate_with_derivatives(&self, phi: f64, theta: f64) -> SurfacePoint {
        let phi = phi.rem_euclid(TWO_PI);
        let theta = theta.rem_euclid(TWO_PI);
        let basis = Basis::new(self.m_pol, self.n_tor, self.nfp, phi, theta);
        let (sin, cos) = phi.sin_cos();
        rotate(sin, cos, self.x.eval(&basis), self.y.eval(&basis), self.z.eval(&basis))
    }

    /// Quadrature resolution `(4·n_tor·nfp + 16, 4·m_pol + 16)` over the full torus.
    pub fn default_resolution(&self) -> (usize, usize) {
        (
            4 * self.n_tor * self.nfp as usize + 16,
            4 * self.m_pol + 16,
        )
    }

    pub fn to_json(&self) -> SurfaceJson {
        let table = |t: &CoeffTable| t.entries().collect();
        SurfaceJson {
            nfp: self.nfp,
            m_pol: self.m_pol,
            n_tor: self.n_tor,
            x: table(&self.x),
            y: table(&self.y),
            z: table(&self.z),
        }
    }

    pub fn from_json(json: &SurfaceJson) -> Result<Self> {
        let mut s = Self::zeros(json.nfp, json.m_pol, json.n_tor)?;
        for (component, entries) in [
            (Component::X, &json.x),
            (Component::Y, &json.y),
            (Component::Z, &json.z),
        ] {
            for &(i, j, v) in entries {
                s.table_mut(component).set(i, j, v)?;
            }
        }
        Ok(s)
    }
}

/// Exchange format: each table is a list of `[i, j, value]` triples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceJson {
    pub nfp: u32,
    pub m_pol: usize,
    pub n_tor: usize,
    pub x: Vec<(usize, usize, f64)>,
    pub y: Vec<(usize, usize, f64)>,
    pub z: Vec<(usize, usize, f64)>,
}

/// Surface sampled on a uniform full-torus grid, stored φ-major
/// (`index = i_phi * n_theta + i_theta`).
#[derive(Debug, Clone)]
pub struct SurfaceGrid {
    pub n_phi: usize,
    pub n_theta: usize,
    pub points: Vec<[f64; 3]>,
    pub d_phi: Vec<[f64; 3]>,
    pub d_theta: Vec<[f64; 3]>,
    pub normals: Vec<[f64; 3]>,
    pub normal_norms: Vec<f64>,
}

impl SurfaceGrid {
    pub fn phi(&self, i: usize) -> f64 {
        TWO_PI * i as f64 / self.n_phi as f64
    }

    pub fn theta(&self, k: usize) -> f64 {
        TWO_PI * k as f64 / self.n_theta as f64
    }

    /// Area of one quadrature cell in `(φ, θ)`.
    pub fn cell(&self) -> f64 {
        (TWO_PI / self.n_phi as f64) * (TWO_PI / self.n_theta as f64)
    }

    /// CSV with header `phi,theta,x,y,z,norm_n`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "phi,theta,x,y,z,norm_n")?;
        for i in 0..self.n_phi {
            for k in 0..self.n_theta {
                let idx = i * self.n_theta + k;
                let [x, y, z] = self.points[idx];
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    self.phi(i),
                    self.theta(k),
                    x,
                    y,
                    z,
                    self.normal_norms[idx]
                )?;
            }
        }
        Ok(())
    }
}

/// Evaluate points, analytic tangents and normals on a uniform grid.
///
/// The double sums are separable, so each φ row first contracts the toroidal
/// index and then every θ node only sums over the poloidal index.
pub fn build_grid(s: &FourierSurface, n_phi: usize, n_theta: usize) -> Result<SurfaceGrid> {
    if n_phi < 4 || n_theta < 4 {
        return Err(Error::InvalidArgument(format!(
            "grid resolution must be at least 4x4, got {n_phi}x{n_theta}"
        )));
    }
    let n_w = 2 * s.m_pol + 1;
    let thetas: Vec<Basis> = (0..n_theta)
        .map(|k| Basis::new(s.m_pol, s.n_tor, s.nfp, 0.0, TWO_PI * k as f64 / n_theta as f64))
        .collect();
    let rows: Vec<Vec<SurfacePoint>> = (0..n_phi)
        .into_par_iter()
        .map(|i| {
            let phi = TWO_PI * i as f64 / n_phi as f64;
            let basis = Basis::new(s.m_pol, s.n_tor, s.nfp, phi, 0.0);
            // per poloidal index: Σ_j c_ij v_j and Σ_j c_ij v_j'
            let contract = |t: &CoeffTable| {
                let mut g = vec![0.0; n_w];
                let mut g_phi = vec![0.0; n_w];
                for (i, j, c) in t.entries() {
                    g[i] += c * basis.v[j];
                    g_phi[i] += c * basis.dv[j];
                }
                (g, g_phi)
            };
            let (gx, gx_p) = contract(&s.x);
            let (gy, gy_p) = contract(&s.y);
            let (gz, gz_p) = contract(&s.z);
            let (sin, cos) = phi.sin_cos();
            thetas
                .iter()
                .map(|tb| {
                    let sum = |g: &[f64], w: &[f64]| g.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
                    let (xh, xh_p, xh_t) = (sum(&gx, &tb.w), sum(&gx_p, &tb.w), sum(&gx, &tb.dw));
                    let (yh, yh_p, yh_t) = (sum(&gy, &tb.w), sum(&gy_p, &tb.w), sum(&gy, &tb.dw));
                    let (z, z_p, z_t) = (sum(&gz, &tb.w), sum(&gz_p, &tb.w), sum(&gz, &tb.dw));
                    rotate(sin, cos, (xh, xh_p, xh_t), (yh, yh_p, yh_t), (z, z_p, z_t))
                })
                .collect()
        })
        .collect();
    let nodes: Vec<SurfacePoint> = rows.into_iter().flatten().collect();
    let normals: Vec<[f64; 3]> = nodes.iter().map(SurfacePoint::normal).collect();
    Ok(SurfaceGrid {
        n_phi,
        n_theta,
        points: nodes.iter().map(|p| p.position).collect(),
        d_phi: nodes.iter().map(|p| p.d_phi).collect(),
        d_theta: nodes.iter().map(|p| p.d_theta).collect(),
        normal_norms: normals.iter().map(|n| norm(*n)).collect(),
        normals,
    })
}

/// Rotate rotating-frame values `(f, f_φ, f_θ)` of `x̂`, `ŷ`, `z` into Cartesian.
fn rotate(
    sin: f64,
    cos: f64,
    (xh, xh_p, xh_t): (f64, f64, f64),
    (yh, yh_p, yh_t): (f64, f64, f64),
    (z, z_p, z_t): (f64, f64, f64),
) -> SurfacePoint {
    SurfacePoint {
        position: [xh * cos - yh * sin, xh * sin + yh * cos, z],
        d_phi: [
            xh_p * cos - xh * sin - yh_p * sin - yh * cos,
            xh_p * sin + xh * cos + yh_p * cos - yh * sin,
            z_p,
        ],
        d_theta: [xh_t * cos - yh_t * sin, xh_t * sin + yh_t * cos, z_t],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometrySummary {
    pub area: f64,
    pub volume: f64,
    pub minor_radius: f64,
    pub major_radius: f64,
    pub aspect_ratio: f64,
}

/// Area, volume and aspect ratio by trapezoidal quadrature.
///
/// The minor radius comes from the cross-sectional area averaged over the
/// cylindrical angle, `r = sqrt(Ā/π)`, and the major radius from the volume,
/// `R = V / (2π Ā)`. The average area is computed on the `(φ, θ)` grid via
/// the change of variables to the cylindrical angle `Φ(φ, θ)`:
/// `Ā = |∬ ρ (Z_θ Φ_φ − Z_φ Φ_θ) dφ dθ| / 2π`.
pub fn geometry(s: &FourierSurface, n_phi: usize, n_theta: usize) -> Result<GeometrySummary> {
    let grid = build_grid(s, n_phi, n_theta)?;
    geometry_from_grid(&grid)
}

/// [`geometry`] at the surface's default resolution.
pub fn geometry_default(s: &FourierSurface) -> Result<GeometrySummary> {
    let (n_phi, n_theta) = s.default_resolution();
    geometry(s, n_phi, n_theta)
}

pub fn geometry_from_grid(grid: &SurfaceGrid) -> Result<GeometrySummary> {
    let max_norm = grid.normal_norms.iter().cloned().fold(0.0, f64::max);
    let min_norm = grid
        .normal_norms
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if !(max_norm > 0.0) || !max_norm.is_finite() || min_norm <= 1e-12 * max_norm {
        return Err(Error::DegenerateSurface(format!(
            "normal norm ranges over [{min_norm:e}, {max_norm:e}]"
        )));
    }

    let mut area = 0.0;
    let mut volume = 0.0;
    let mut section = 0.0;
    for idx in 0..grid.points.len() {
        let p = grid.points[idx];
        let n = grid.normals[idx];
        let rp = grid.d_phi[idx];
        let rt = grid.d_theta[idx];
        area += grid.normal_norms[idx];
        volume += dot(p, n);

        let rho2 = p[0] * p[0] + p[1] * p[1];
        if rho2 <= 0.0 {
            return Err(Error::DegenerateSurface(
                "surface touches the symmetry axis".into(),
            ));
        }
        let cyl_phi = (p[0] * rp[1] - p[1] * rp[0]) / rho2;
        let cyl_theta = (p[0] * rt[1] - p[1] * rt[0]) / rho2;
        section += rho2.sqrt() * (rt[2] * cyl_phi - rp[2] * cyl_theta);
    }
    let cell = grid.cell();
    area *= cell;
    volume *= cell / 3.0;
    let mean_section = (section * cell).abs() / TWO_PI;

    if !(volume > 0.0) {
        return Err(Error::InwardOrientation { volume });
    }
    if !(mean_section > 0.0) {
        return Err(Error::DegenerateSurface(
            "zero mean cross-sectional area".into(),
        ));
    }
    let minor_radius = (mean_section / PI).sqrt();
    let major_radius = volume / (TWO_PI * mean_section);
    Ok(GeometrySummary {
        area,
        volume,
        minor_radius,
        major_radius,
        aspect_ratio: major_radius / minor_radius,
    })
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}
