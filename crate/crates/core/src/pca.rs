//! Principal component analysis on raw coefficient vectors.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default embedding dimension.
pub const DEFAULT_N_R: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub n_x: usize,
    pub n_r: usize,
    pub mean: Vec<f64>,
    /// `n_r × n_x`, row-major; rows are orthonormal.
    pub components: Vec<f64>,
    /// Population variance along each component, non-increasing.
    pub variance_spectrum: Vec<f64>,
    /// Total population variance of the fitted data.
    pub total_variance: f64,
}

/// Centered SVD of the data; keeps the top `n_r` right singular vectors.
///
/// Each component's largest-magnitude entry is made positive so repeated fits
/// agree exactly.
pub fn fit<R: AsRef<[f64]>>(data: &[R], n_r: usize) -> Result<PcaModel> {
    let full = decompose(data)?;
    let max = full.rank_bound();
    if n_r == 0 || n_r > max {
        return Err(Error::InvalidArgument(format!(
            "n_r must be in 1..={max} for {} rows of dimension {}, got {n_r}",
            data.len(),
            full.n_x
        )));
    }
    Ok(full.truncate(n_r))
}

/// Cumulative explained-variance fraction for `n_r = 1..=max_nr`.
pub fn explained_variance_curve<R: AsRef<[f64]>>(data: &[R], max_nr: usize) -> Result<Vec<(usize, f64)>> {
    let full = decompose(data)?;
    let max = full.rank_bound();
    if max_nr == 0 || max_nr > max {
        return Err(Error::InvalidArgument(format!(
            "max_nr must be in 1..={max}, got {max_nr}"
        )));
    }
    let mut acc = 0.0;
    Ok(full.variance_spectrum[..max_nr]
        .iter()
        .enumerate()
        .map(|(k, v)| {
            acc += v;
            (k + 1, full.fraction(acc))
        })
        .collect())
}

/// All directions of the centered data, sorted by variance.
struct FullDecomposition {
    n_rows: usize,
    n_x: usize,
    mean: Vec<f64>,
    directions: Vec<Vec<f64>>,
    variance_spectrum: Vec<f64>,
    total_variance: f64,
}

impl FullDecomposition {
    fn rank_bound(&self) -> usize {
        (self.n_rows - 1).min(self.n_x)
    }

    fn fraction(&self, explained: f64) -> f64 {
        if self.total_variance > 0.0 {
            (explained / self.total_variance).min(1.0)
        } else {
            1.0
        }
    }

    fn truncate(self, n_r: usize) -> PcaModel {
        PcaModel {
            n_x: self.n_x,
            n_r,
            mean: self.mean,
            components: self.directions[..n_r].concat(),
            variance_spectrum: self.variance_spectrum[..n_r].to_vec(),
            total_variance: self.total_variance,
        }
    }
}

fn decompose<R: AsRef<[f64]>>(data: &[R]) -> Result<FullDecomposition> {
    let n_rows = data.len();
    if n_rows < 2 {
        return Err(Error::InvalidArgument(format!(
            "PCA needs at least 2 rows, got {n_rows}"
        )));
    }
    let n_x = data[0].as_ref().len();
    if n_x == 0 {
        return Err(Error::InvalidArgument("PCA needs non-empty rows".into()));
    }
    let mut mean = vec![0.0; n_x];
    for row in data {
        let row = row.as_ref();
        if row.len() != n_x {
            return Err(Error::Dimension {
                expected: n_x,
                found: row.len(),
            });
        }
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n_rows as f64);

    let centered = DMatrix::from_fn(n_rows, n_x, |i, j| data[i].as_ref()[j] - mean[j]);
    let total_variance = centered.iter().map(|v| v * v).sum::<f64>() / n_rows as f64;
    let svd = centered.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::InvalidArgument("SVD did not converge".into()))?;

    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });

    let mut directions = Vec::with_capacity(order.len());
    let mut variance_spectrum = Vec::with_capacity(order.len());
    for &k in &order {
        let mut dir: Vec<f64> = v_t.row(k).iter().copied().collect();
        let pivot = dir
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (j, v)| if v.abs() > best.1 { (j, v.abs()) } else { best })
            .0;
        if dir[pivot] < 0.0 {
            dir.iter_mut().for_each(|v| *v = -*v);
        }
        directions.push(dir);
        let s = svd.singular_values[k];
        variance_spectrum.push(s * s / n_rows as f64);
    }
    Ok(FullDecomposition {
        n_rows,
        n_x,
        mean,
        directions,
        variance_spectrum,
        total_variance,
    })
}

impl PcaModel {
    pub fn component(&self, k: usize) -> &[f64] {
        &self.components[k * self.n_x..(k + 1) * self.n_x]
    }

    /// `components · (x − mean)`.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        check(self.n_x, x.len())?;
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        Ok((0..self.n_r)
            .map(|k| self.component(k).iter().zip(&centered).map(|(c, v)| c * v).sum())
            .collect())
    }

    /// `componentsᵀ · code + mean`.
    pub fn decode(&self, code: &[f64]) -> Result<Vec<f64>> {
        check(self.n_r, code.len())?;
        let mut out = self.mean.clone();
        for (k, &c) in code.iter().enumerate() {
            out.iter_mut()
                .zip(self.component(k))
                .for_each(|(o, v)| *o += c * v);
        }
        Ok(out)
    }

    /// Fraction of the fitted data's variance captured by the kept components.
    pub fn explained_fraction(&self) -> f64 {
        if self.total_variance > 0.0 {
            (self.variance_spectrum.iter().sum::<f64>() / self.total_variance).min(1.0)
        } else {
            1.0
        }
    }
}

fn check(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Dimension { expected, found });
    }
    Ok(())
}
