//! Synthetic torus-family boundaries with controlled aspect ratio.
//!
//! Each surface is a rotating ellipse around a slightly helical axis:
//!
//! ```text
//! x̂ = R0 + a[cos θ + e cos(θ − nfp φ) + τ cos 2θ + d_r cos(nfp φ)]
//! z  =      a[sin θ − e sin(θ − nfp φ) + d_z sin(nfp φ)]
//! ```
//!
//! The minor-radius scale `a` is tuned by fixed-point iteration until the
//! measured aspect ratio equals the drawn target. The stored rotational
//! transform is a placeholder label: it is drawn uniformly and sets the
//! ellipticity through `e = elongation_per_iota · ι`, so it is a learnable
//! function of the shape but not a physical transform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Conditions, Dataset, Record};
use crate::error::{Error, Result};
use crate::surface::{feature_length, geometry_default, Component, FourierSurface};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub count: usize,
    pub nfp: u32,
    pub helicity: u32,
    pub m_pol: usize,
    pub n_tor: usize,
    pub aspect_range: (f64, f64),
    pub iota_range: (f64, f64),
    pub major_radius_range: (f64, f64),
    pub elongation_per_iota: f64,
    /// Largest axis excursion, in units of the minor-radius scale.
    pub axis_excursion: f64,
    /// Largest |τ|.
    pub triangularity: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            count: 1000,
            nfp: 2,
            helicity: 0,
            m_pol: 10,
            n_tor: 10,
            aspect_range: (3.0, 10.0),
            iota_range: (0.2, 0.8),
            major_radius_range: (0.9, 1.1),
            elongation_per_iota: 0.4,
            axis_excursion: 0.3,
            triangularity: 0.1,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        let ordered = |(lo, hi): (f64, f64)| lo > 0.0 && lo <= hi && hi.is_finite();
        if self.m_pol < 2 || self.n_tor < 1 {
            return Err(Error::InvalidArgument(format!(
                "synthetic family needs m_pol >= 2 and n_tor >= 1, got ({}, {})",
                self.m_pol, self.n_tor
            )));
        }
        if self.nfp == 0 || self.helicity > 1 {
            return Err(Error::InvalidArgument(format!(
                "invalid nfp/helicity ({}, {})",
                self.nfp, self.helicity
            )));
        }
        if !ordered(self.aspect_range) || self.aspect_range.0 <= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "aspect range must satisfy 1 < lo <= hi, got {:?}",
                self.aspect_range
            )));
        }
        if !ordered(self.iota_range) || !ordered(self.major_radius_range) {
            return Err(Error::InvalidArgument(
                "iota and major-radius ranges must be positive and ordered".into(),
            ));
        }
        if self.elongation_per_iota * self.iota_range.1 >= 0.9 {
            return Err(Error::InvalidArgument(
                "ellipticity would reach 0.9; reduce elongation_per_iota".into(),
            ));
        }
        Ok(())
    }
}

/// Shape parameters of one family member.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyShape {
    pub major_radius: f64,
    pub scale: f64,
    pub ellipticity: f64,
    pub triangularity: f64,
    pub axis_radial: f64,
    pub axis_vertical: f64,
}

impl FamilyShape {
    pub fn surface(&self, nfp: u32, m_pol: usize, n_tor: usize) -> Result<FourierSurface> {
        let mut s = FourierSurface::zeros(nfp, m_pol, n_tor)?;
        let (m, n) = (m_pol, n_tor);
        let a = self.scale;
        let e = self.ellipticity;
        let x = s.table_mut(Component::X);
        x.set(0, 0, self.major_radius)?;
        x.set(1, 0, a)?;
        x.set(1, 1, e * a)?;
        x.set(m + 1, n + 1, e * a)?;
        x.set(2, 0, self.triangularity * a)?;
        x.set(0, 1, self.axis_radial * a)?;
        let z = s.table_mut(Component::Z);
        z.set(m + 1, 0, a)?;
        z.set(m + 1, 1, -e * a)?;
        z.set(1, n + 1, e * a)?;
        z.set(0, n + 1, self.axis_vertical * a)?;
        Ok(s)
    }
}

/// Adjust `shape.scale` until the surface's aspect ratio equals `target`.
pub fn fit_aspect_ratio(
    mut shape: FamilyShape,
    target: f64,
    nfp: u32,
    m_pol: usize,
    n_tor: usize,
) -> Result<(FourierSurface, f64)> {
    shape.scale = shape.major_radius / target;
    for _ in 0..30 {
        let surface = shape.surface(nfp, m_pol, n_tor)?;
        let aspect = geometry_default(&surface)?.aspect_ratio;
        if ((aspect - target) / target).abs() < 1e-10 {
            return Ok((surface, aspect));
        }
        shape.scale *= aspect / target;
    }
    let surface = shape.surface(nfp, m_pol, n_tor)?;
    let aspect = geometry_default(&surface)?.aspect_ratio;
    Ok((surface, aspect))
}

/// Generate `config.count` records; record `k` uses RNG stream `k`, so the
/// output does not depend on thread scheduling.
pub fn synth_dataset(config: &SynthConfig) -> Result<Dataset> {
    config.validate()?;
    let records = (0..config.count)
        .into_par_iter()
        .map(|k| synth_record(config, k))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(feature_length(config.m_pol, config.n_tor), records)
}

fn synth_record(config: &SynthConfig, k: usize) -> Result<Record> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(k as u64);
    let uniform = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| lo + (hi - lo) * rng.random::<f64>();
    let target = uniform(&mut rng, config.aspect_range);
    let iota = uniform(&mut rng, config.iota_range);
    let shape = FamilyShape {
        major_radius: uniform(&mut rng, config.major_radius_range),
        scale: 1.0,
        ellipticity: config.elongation_per_iota * iota,
        triangularity: config.triangularity * (2.0 * rng.random::<f64>() - 1.0),
        axis_radial: config.axis_excursion * rng.random::<f64>(),
        axis_vertical: config.axis_excursion * rng.random::<f64>(),
    };
    let (surface, aspect) = fit_aspect_ratio(shape, target, config.nfp, config.m_pol, config.n_tor)?;
    Ok(Record {
        id: format!("synth-{k:06}"),
        features: surface.pack(),
        conditions: Conditions::new(iota, aspect, config.nfp, config.helicity),
    })
}
