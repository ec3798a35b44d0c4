//! Per-sample evaluation rows and boxplot-style summaries.
//!
//! Quantiles use linear interpolation between order statistics: for sorted
//! values `v[0..n]` and probability `p`, position `h = (n − 1)·p` and
//! `q = v[⌊h⌋] + (h − ⌊h⌋)(v[⌊h⌋+1] − v[⌊h⌋])`.
//!
//! Invalid samples (degenerate surfaces, failed evaluations) stay in the
//! row file with `valid = false`; summaries exclude them from quantiles and
//! report their fraction.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::dataset::{ConditionRow, ConditionSet};
use crate::ddpm::GeneratedSurface;
use crate::error::{Error, Result};
use crate::evaluator::{evaluate_surface, FieldSource};
use crate::qsmetrics::{j_qs, relative_error};
use crate::surface::FourierSurface;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// Bound on `|c_A|` and `|c_ι|`.
    pub constraint: f64,
    pub j_qs: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            constraint: 0.05,
            j_qs: 0.01,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.constraint > 0.0) || !(self.j_qs > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "thresholds must be positive, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// One evaluated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRow {
    pub sample_id: String,
    pub set: ConditionSet,
    pub nfp: u32,
    pub helicity: u32,
    pub target_aspect_ratio: f64,
    pub target_mean_iota: f64,
    pub aspect_ratio: Option<f64>,
    pub c_aspect: Option<f64>,
    pub mean_iota: Option<f64>,
    pub c_iota: Option<f64>,
    pub j_qs: Option<f64>,
    pub valid: bool,
    /// Reason for invalidity; empty for valid rows.
    pub note: String,
}

impl EvaluationRow {
    pub fn condition_row(&self) -> ConditionRow {
        ConditionRow {
            set: self.set,
            nfp: self.nfp,
            helicity: self.helicity,
            aspect_ratio: self.target_aspect_ratio,
            mean_iota: self.target_mean_iota,
        }
    }

    /// A row for a sample that could not be scored.
    pub fn failed(sample_id: &str, row: &ConditionRow, note: String) -> Self {
        EvaluationRow {
            sample_id: sample_id.to_string(),
            set: row.set,
            nfp: row.nfp,
            helicity: row.helicity,
            target_aspect_ratio: row.aspect_ratio,
            target_mean_iota: row.mean_iota,
            aspect_ratio: None,
            c_aspect: None,
            mean_iota: None,
            c_iota: None,
            j_qs: None,
            valid: false,
            note,
        }
    }
}

/// Score one surface against its condition row. Failures produce an
/// invalid row rather than an error.
pub fn evaluate_sample(
    sample_id: &str,
    row: &ConditionRow,
    surface: &FourierSurface,
    source: &FieldSource,
) -> EvaluationRow {
    let scored = || -> Result<EvaluationRow> {
        let e = evaluate_surface(surface, row.helicity, source)?;
        let c_iota = e
            .mean_iota
            .map(|i| relative_error(i, row.mean_iota))
            .transpose()?;
        let j = e.field.as_ref().map(j_qs).transpose()?;
        let values = [Some(e.aspect_ratio), e.mean_iota, j];
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("evaluated metrics".into()));
        }
        Ok(EvaluationRow {
            aspect_ratio: Some(e.aspect_ratio),
            c_aspect: Some(relative_error(e.aspect_ratio, row.aspect_ratio)?),
            mean_iota: e.mean_iota,
            c_iota,
            j_qs: j,
            valid: true,
            note: String::new(),
            ..EvaluationRow::failed(sample_id, row, String::new())
        })
    };
    scored().unwrap_or_else(|e| EvaluationRow::failed(sample_id, row, e.to_string()))
}

/// Evaluate generated samples in parallel; output order matches input.
pub fn evaluate_generated(samples: &[GeneratedSurface], source: &FieldSource) -> Vec<EvaluationRow> {
    samples
        .par_iter()
        .map(|g| evaluate_sample(&g.id, &g.row, &g.surface, source))
        .collect()
}

/// Quantile `p ∈ [0, 1]` of already sorted values.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() || !(0.0..=1.0).contains(&p) {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// 25th, 50th and 75th percentiles.
pub fn quartiles(values: &[f64]) -> Option<[f64; 3]> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some([
        quantile_sorted(&v, 0.25)?,
        quantile_sorted(&v, 0.5)?,
        quantile_sorted(&v, 0.75)?,
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    CAspect,
    CIota,
    JQs,
}

impl Metric {
    fn value(self, row: &EvaluationRow) -> Option<f64> {
        match self {
            Metric::CAspect => row.c_aspect,
            Metric::CIota => row.c_iota,
            Metric::JQs => row.j_qs,
        }
    }

    fn satisfied(self, v: f64, t: &Thresholds) -> bool {
        match self {
            Metric::CAspect | Metric::CIota => v.abs() < t.constraint,
            Metric::JQs => v < t.j_qs,
        }
    }
}

/// Quartiles of one metric over one condition group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub group: String,
    pub set: ConditionSet,
    pub nfp: u32,
    pub helicity: u32,
    pub target_aspect_ratio: f64,
    pub target_mean_iota: f64,
    pub metric: Metric,
    pub n_samples: usize,
    pub n_invalid: usize,
    pub invalid_fraction: f64,
    /// Valid samples carrying this metric.
    pub n_values: usize,
    pub q25: Option<f64>,
    pub q50: Option<f64>,
    pub q75: Option<f64>,
    /// Fraction of `n_values` meeting the threshold.
    pub fraction_within: Option<f64>,
}

/// Group rows by condition (in order of first appearance) and summarize
/// each metric. `c_A` is always summarized; `c_ι` and `J_QS` only when some
/// row in the group carries them.
pub fn summarize(rows: &[EvaluationRow], thresholds: &Thresholds) -> Vec<SummaryRow> {
    let mut groups: Vec<(ConditionRow, Vec<&EvaluationRow>)> = Vec::new();
    for r in rows {
        let key = r.condition_row();
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    let mut out = Vec::new();
    for (key, members) in &groups {
        let n_samples = members.len();
        let n_invalid = members.iter().filter(|r| !r.valid).count();
        for metric in [Metric::CAspect, Metric::CIota, Metric::JQs] {
            let values: Vec<f64> = members
                .iter()
                .filter(|r| r.valid)
                .filter_map(|r| metric.value(r))
                .collect();
            let present = members.iter().any(|r| metric.value(r).is_some());
            if metric != Metric::CAspect && !present {
                continue;
            }
            let q = quartiles(&values);
            let within = values.iter().filter(|v| metric.satisfied(**v, thresholds)).count();
            out.push(SummaryRow {
                group: key.label(),
                set: key.set,
                nfp: key.nfp,
                helicity: key.helicity,
                target_aspect_ratio: key.aspect_ratio,
                target_mean_iota: key.mean_iota,
                metric,
                n_samples,
                n_invalid,
                invalid_fraction: n_invalid as f64 / n_samples as f64,
                n_values: values.len(),
                q25: q.map(|q| q[0]),
                q50: q.map(|q| q[1]),
                q75: q.map(|q| q[2]),
                fraction_within: (!values.is_empty()).then(|| within as f64 / values.len() as f64),
            });
        }
    }
    out
}

pub fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned, R: Read>(input: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}
