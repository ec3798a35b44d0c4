//! Coefficient/condition records: JSON-Lines I/O, z-score normalization,
//! seeded splitting and batching, and the reference condition table.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of conditioning scalars: (mean iota, aspect ratio, nfp, helicity).
pub const N_CONDITIONS: usize = 4;

/// Default standard-deviation floor for [`fit_normalizer`].
pub const DEFAULT_SCALE_FLOOR: f64 = 1e-8;

/// Condition vector `(ῑ, A, nfp, N)`; nfp and N are stored as reals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conditions(pub [f64; N_CONDITIONS]);

impl Conditions {
    pub fn new(mean_iota: f64, aspect_ratio: f64, nfp: u32, helicity: u32) -> Self {
        Conditions([mean_iota, aspect_ratio, f64::from(nfp), f64::from(helicity)])
    }

    pub fn mean_iota(&self) -> f64 {
        self.0[0]
    }

    pub fn aspect_ratio(&self) -> f64 {
        self.0[1]
    }

    pub fn nfp(&self) -> f64 {
        self.0[2]
    }

    pub fn helicity(&self) -> f64 {
        self.0[3]
    }

    fn validate(&self, id: &str) -> Result<()> {
        let bad = |message: String| {
            Err(Error::InvalidConditions {
                id: id.to_string(),
                message,
            })
        };
        let [iota, aspect, nfp, helicity] = self.0;
        if !(nfp >= 1.0 && nfp.fract() == 0.0) {
            return bad(format!("nfp must be a positive integer, got {nfp}"));
        }
        if helicity != 0.0 && helicity != 1.0 {
            return bad(format!("helicity must be 0 or 1, got {helicity}"));
        }
        if !(aspect > 1.0) {
            return bad(format!("aspect ratio must exceed 1, got {aspect}"));
        }
        if !(iota > 0.0) {
            return bad(format!("mean iota must be positive, got {iota}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub id: String,
    pub features: Vec<f64>,
    pub conditions: Conditions,
}

/// On-disk record layout, one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordJson {
    pub id: String,
    pub nfp: u32,
    pub helicity: u32,
    pub aspect_ratio: f64,
    pub mean_iota: f64,
    pub coeffs: Vec<f64>,
}

impl From<&Record> for RecordJson {
    fn from(r: &Record) -> Self {
        RecordJson {
            id: r.id.clone(),
            nfp: r.conditions.nfp() as u32,
            helicity: r.conditions.helicity() as u32,
            aspect_ratio: r.conditions.aspect_ratio(),
            mean_iota: r.conditions.mean_iota(),
            coeffs: r.features.clone(),
        }
    }
}

impl From<RecordJson> for Record {
    fn from(j: RecordJson) -> Self {
        Record {
            conditions: Conditions::new(j.mean_iota, j.aspect_ratio, j.nfp, j.helicity),
            id: j.id,
            features: j.coeffs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_x: usize,
    records: Vec<Record>,
}

impl Dataset {
    pub fn new(n_x: usize, records: Vec<Record>) -> Result<Self> {
        for r in &records {
            if r.features.len() != n_x {
                return Err(Error::FeatureLength {
                    id: r.id.clone(),
                    expected: n_x,
                    found: r.features.len(),
                });
            }
        }
        Ok(Dataset { n_x, records })
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn into_records(self) -> Vec<Record> {
        self.records
    }

    /// Seeded shuffle of the records into batches for one epoch.
    pub fn batches(
        &self,
        batch_size: usize,
        seed: u64,
        epoch: u64,
    ) -> Result<impl Iterator<Item = Vec<&Record>> + '_> {
        let order = batch_indices(self.len(), batch_size, seed, epoch)?;
        Ok(order
            .into_iter()
            .map(move |b| b.into_iter().map(|i| &self.records[i]).collect()))
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for r in &self.records {
            serde_json::to_writer(&mut out, &RecordJson::from(r))?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// Read a JSON-Lines dataset; blank lines are skipped.
pub fn load_dataset(path: impl AsRef<Path>, expected_nx: usize) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(file), expected_nx).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_dataset<R: BufRead>(reader: R, expected_nx: usize) -> Result<Dataset> {
    let mut records = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<reader>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let json: RecordJson = serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            line: k + 1,
            message: e.to_string(),
        })?;
        if json.coeffs.len() != expected_nx {
            return Err(Error::FeatureLength {
                id: json.id,
                expected: expected_nx,
                found: json.coeffs.len(),
            });
        }
        if let Some(bad) = json.coeffs.iter().find(|c| !c.is_finite()) {
            return Err(Error::MalformedLine {
                line: k + 1,
                message: format!("non-finite coefficient {bad}"),
            });
        }
        let record = Record::from(json);
        record.conditions.validate(&record.id)?;
        records.push(record);
    }
    Dataset::new(expected_nx, records)
}

/// Per-dimension z-score parameters for features and conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    pub condition_mean: Vec<f64>,
    pub condition_scale: Vec<f64>,
}

/// Mean and population standard deviation per dimension; deviations below
/// `floor` are replaced by 1 so constant dimensions are only centered.
pub fn fit_normalizer(data: &Dataset, floor: f64) -> Result<Normalizer> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(floor > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "scale floor must be positive, got {floor}"
        )));
    }
    let (feature_mean, feature_scale) =
        moments(data.records().iter().map(|r| r.features.as_slice()), data.n_x(), floor);
    let (condition_mean, condition_scale) = moments(
        data.records().iter().map(|r| r.conditions.0.as_slice()),
        N_CONDITIONS,
        floor,
    );
    Ok(Normalizer {
        feature_mean,
        feature_scale,
        condition_mean,
        condition_scale,
    })
}

fn moments<'a>(
    rows: impl Iterator<Item = &'a [f64]> + Clone,
    dim: usize,
    floor: f64,
) -> (Vec<f64>, Vec<f64>) {
    let mut n = 0usize;
    let mut mean = vec![0.0; dim];
    for row in rows.clone() {
        n += 1;
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; dim];
    for row in rows {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let scale = var
        .into_iter()
        .map(|s| {
            let sd = (s / n as f64).sqrt();
            if sd < floor {
                1.0
            } else {
                sd
            }
        })
        .collect();
    (mean, scale)
}

impl Normalizer {
    pub fn n_features(&self) -> usize {
        self.feature_mean.len()
    }

    pub fn normalize(&self, rec: &Record) -> Result<Record> {
        Ok(Record {
            id: rec.id.clone(),
            features: self.normalize_features(&rec.features)?,
            conditions: self.normalize_conditions(&rec.conditions),
        })
    }

    pub fn denormalize(&self, rec: &Record) -> Result<Record> {
        Ok(Record {
            id: rec.id.clone(),
            features: self.denormalize_features(&rec.features)?,
            conditions: self.denormalize_conditions(&rec.conditions),
        })
    }

    pub fn normalize_features(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x.len())?;
        Ok(x.iter()
            .zip(&self.feature_mean)
            .zip(&self.feature_scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect())
    }

    pub fn denormalize_features(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check(z.len())?;
        Ok(z.iter()
            .zip(&self.feature_mean)
            .zip(&self.feature_scale)
            .map(|((v, m), s)| v * s + m)
            .collect())
    }

    pub fn normalize_conditions(&self, c: &Conditions) -> Conditions {
        let mut out = [0.0; N_CONDITIONS];
        for k in 0..N_CONDITIONS {
            out[k] = (c.0[k] - self.condition_mean[k]) / self.condition_scale[k];
        }
        Conditions(out)
    }

    pub fn denormalize_conditions(&self, c: &Conditions) -> Conditions {
        let mut out = [0.0; N_CONDITIONS];
        for k in 0..N_CONDITIONS {
            out[k] = c.0[k] * self.condition_scale[k] + self.condition_mean[k];
        }
        Conditions(out)
    }

    fn check(&self, found: usize) -> Result<()> {
        if found != self.n_features() {
            return Err(Error::Dimension {
                expected: self.n_features(),
                found,
            });
        }
        Ok(())
    }
}

/// Deterministic disjoint train/validation split.
pub fn split(data: &Dataset, fractions: (f64, f64), seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, validation) = fractions;
    if !(train >= 0.0 && validation >= 0.0) || (train + validation - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split fractions must be non-negative and sum to 1, got ({train}, {validation})"
        )));
    }
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((train * n as f64).round() as usize).min(n);
    let mut in_train = vec![false; n];
    order[..n_train].iter().for_each(|&i| in_train[i] = true);

    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (r, keep) in data.records().iter().zip(in_train) {
        if keep {
            a.push(r.clone());
        } else {
            b.push(r.clone());
        }
    }
    Ok((Dataset::new(data.n_x, a)?, Dataset::new(data.n_x, b)?))
}

/// Shuffled index batches for one epoch, seeded by `(seed, epoch)`.
pub fn batch_indices(n: usize, batch_size: usize, seed: u64, epoch: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionSet {
    InSample,
    OutOfSample,
}

/// One row of the reference condition table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRow {
    pub set: ConditionSet,
    pub nfp: u32,
    pub helicity: u32,
    pub aspect_ratio: f64,
    pub mean_iota: f64,
}

impl ConditionRow {
    pub fn conditions(&self) -> Conditions {
        Conditions::new(self.mean_iota, self.aspect_ratio, self.nfp, self.helicity)
    }

    /// Short label such as `nfp3-QH`.
    pub fn label(&self) -> String {
        let kind = if self.helicity == 0 { "QA" } else { "QH" };
        format!("nfp{}-{}", self.nfp, kind)
    }
}

/// Raw text of the shipped condition-table fixture.
pub const CONDITION_TABLE_CSV: &str = include_str!("../fixtures/table1_conditions.csv");

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionTable {
    pub in_sample: Vec<ConditionRow>,
    pub out_of_sample: Vec<ConditionRow>,
}

impl ConditionTable {
    /// The seven in-sample and eight out-of-sample generation conditions.
    pub fn reference() -> Self {
        Self::parse_csv(CONDITION_TABLE_CSV).expect("shipped condition table is well formed")
    }

    /// Parse `set,nfp,helicity,aspect_ratio,mean_iota` rows (`set` is `in` or `out`).
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut table = ConditionTable {
            in_sample: Vec::new(),
            out_of_sample: Vec::new(),
        };
        for (k, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |message: String| Error::MalformedLine {
                line: k + 1,
                message,
            };
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 5 {
                return Err(malformed(format!("expected 5 columns, found {}", cols.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| malformed(format!("{s}: {e}")));
            let int = |s: &str| s.parse::<u32>().map_err(|e| malformed(format!("{s}: {e}")));
            let row = ConditionRow {
                set: match cols[0] {
                    "in" => ConditionSet::InSample,
                    "out" => ConditionSet::OutOfSample,
                    other => return Err(malformed(format!("unknown set {other}"))),
                },
                nfp: int(cols[1])?,
                helicity: int(cols[2])?,
                aspect_ratio: num(cols[3])?,
                mean_iota: num(cols[4])?,
            };
            row.conditions().validate(&format!("line {}", k + 1))?;
            match row.set {
                ConditionSet::InSample => table.in_sample.push(row),
                ConditionSet::OutOfSample => table.out_of_sample.push(row),
            }
        }
        Ok(table)
    }

    pub fn rows(&self, set: ConditionSet) -> &[ConditionRow] {
        match set {
            ConditionSet::InSample => &self.in_sample,
            ConditionSet::OutOfSample => &self.out_of_sample,
        }
    }
}
