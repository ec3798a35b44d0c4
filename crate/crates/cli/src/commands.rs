use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use stellagen_core::dataset::{load_dataset, ConditionRow, ConditionSet, ConditionTable};
use stellagen_core::ddpm::{generate_surfaces, train_pipeline, Checkpoint, GeneratedSurface};
use stellagen_core::evaluator::{synthetic_field, EvaluatorRequest, EvaluatorResponse};
use stellagen_core::pca::{self, PcaModel};
use stellagen_core::report::{self, evaluate_sample, EvaluationRow, Metric, SummaryRow};
use stellagen_core::surface::{feature_length, geometry_default, FourierSurface};
use stellagen_core::synth::synth_dataset;

use crate::config::RunConfig;

/// One generated boundary as written by `sample`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub set: ConditionSet,
    pub nfp: u32,
    pub helicity: u32,
    pub aspect_ratio: f64,
    pub mean_iota: f64,
    pub m_pol: usize,
    pub n_tor: usize,
    pub coeffs: Vec<f64>,
}

impl From<&GeneratedSurface> for SampleRecord {
    fn from(g: &GeneratedSurface) -> Self {
        SampleRecord {
            id: g.id.clone(),
            set: g.row.set,
            nfp: g.row.nfp,
            helicity: g.row.helicity,
            aspect_ratio: g.row.aspect_ratio,
            mean_iota: g.row.mean_iota,
            m_pol: g.surface.m_pol(),
            n_tor: g.surface.n_tor(),
            coeffs: g.coeffs.clone(),
        }
    }
}

impl SampleRecord {
    fn row(&self) -> ConditionRow {
        ConditionRow {
            set: self.set,
            nfp: self.nfp,
            helicity: self.helicity,
            aspect_ratio: self.aspect_ratio,
            mean_iota: self.mean_iota,
        }
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> anyhow::Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer(&mut w, value)?;
    w.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    serde_json::from_reader(open(path)?).with_context(|| format!("invalid JSON in {}", path.display()))
}

/// `table1-in`, `table1-out`, `table1` (both) or a CSV file in the same format.
pub fn condition_rows(selector: &str) -> anyhow::Result<Vec<ConditionRow>> {
    let reference = ConditionTable::reference();
    let all = |t: &ConditionTable| [t.in_sample.clone(), t.out_of_sample.clone()].concat();
    Ok(match selector {
        "table1-in" => reference.in_sample,
        "table1-out" => reference.out_of_sample,
        "table1" => all(&reference),
        path => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read conditions {path}"))?;
            all(&ConditionTable::parse_csv(&text)?)
        }
    })
}

pub fn synth_data(config: &RunConfig, out: &Path) -> anyhow::Result<()> {
    let data = synth_dataset(&config.synth)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    data.write_jsonl(out)?;
    let aspect: Vec<f64> = data.records().iter().map(|r| r.conditions.aspect_ratio()).collect();
    let (lo, hi) = aspect
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    eprintln!(
        "wrote {} records (n_x = {}, A in [{lo:.4}, {hi:.4}]) to {}",
        data.len(),
        data.n_x(),
        out.display()
    );
    Ok(())
}

pub fn ingest(config: &RunConfig, input: &Path, out: &Path) -> anyhow::Result<()> {
    let data = load_dataset(input, feature_length(config.m_pol, config.n_tor))?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    data.write_jsonl(out)?;
    eprintln!("ingested {} records, n_x = {}, into {}", data.len(), data.n_x(), out.display());
    Ok(())
}

pub fn pca_fit(config: &RunConfig, out: &Path, curve: Option<&Path>) -> anyhow::Result<()> {
    let data = load_dataset(&config.paths.dataset, feature_length(config.m_pol, config.n_tor))?;
    let rows: Vec<&[f64]> = data.records().iter().map(|r| r.features.as_slice()).collect();
    let model = pca::fit(&rows, config.n_r)?;
    write_json(&model, out)?;
    if let Some(path) = curve {
        let max = (rows.len() - 1).min(data.n_x());
        let mut w = create(path)?;
        writeln!(w, "n_r,explained_fraction")?;
        for (k, f) in pca::explained_variance_curve(&rows, max)? {
            writeln!(w, "{k},{f}")?;
        }
        w.flush()?;
    }
    eprintln!(
        "n_r = {}: explained variance fraction {:.6}",
        model.n_r,
        model.explained_fraction()
    );
    Ok(())
}

pub fn train(config: &RunConfig, pca_path: Option<&Path>, out: &Path) -> anyhow::Result<()> {
    let data = load_dataset(&config.paths.dataset, feature_length(config.m_pol, config.n_tor))?;
    let pipeline = config.pipeline();
    let model: PcaModel = match pca_path {
        Some(p) => read_json(p)?,
        None => {
            let rows: Vec<&[f64]> = data.records().iter().map(|r| r.features.as_slice()).collect();
            pca::fit(&rows, config.n_r)?
        }
    };
    let (checkpoint, outcome) = train_pipeline(&data, model, config.m_pol, config.n_tor, &pipeline)?;
    checkpoint.save(out)?;
    if let (Some(first), Some(last)) = (outcome.epoch_losses.first(), outcome.epoch_losses.last()) {
        eprintln!(
            "trained {} epochs: loss {first:.5} -> {last:.5}; checkpoint {}",
            outcome.epoch_losses.len(),
            out.display()
        );
    }
    Ok(())
}

pub fn sample(
    config: &RunConfig,
    checkpoint: &Path,
    rows: &[ConditionRow],
    n: usize,
    out: &Path,
) -> anyhow::Result<()> {
    let ddpm = Checkpoint::load(checkpoint)?.into_ddpm()?;
    let generated = generate_surfaces(&ddpm, rows, n, config.seed)?;
    let mut w = create(out)?;
    for g in &generated {
        serde_json::to_writer(&mut w, &SampleRecord::from(g))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    eprintln!(
        "wrote {} surfaces ({} conditions x {n}) to {}",
        generated.len(),
        rows.len(),
        out.display()
    );
    Ok(())
}

pub fn read_samples(path: &Path) -> anyhow::Result<Vec<SampleRecord>> {
    let mut out = Vec::new();
    for (k, line) in open(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .with_context(|| format!("{}: line {}", path.display(), k + 1))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn evaluate(config: &RunConfig, samples: &Path, out: &Path) -> anyhow::Result<()> {
    use rayon::prelude::*;
    let records = read_samples(samples)?;
    let rows: Vec<EvaluationRow> = records
        .par_iter()
        .map(|r| match FourierSurface::unpack(&r.coeffs, r.nfp, r.m_pol, r.n_tor) {
            Ok(s) => evaluate_sample(&r.id, &r.row(), &s, &config.field_source),
            Err(e) => EvaluationRow::failed(&r.id, &r.row(), e.to_string()),
        })
        .collect();
    report::write_csv(&rows, create(out)?)?;
    let invalid = rows.iter().filter(|r| !r.valid).count();
    eprintln!("evaluated {} samples ({invalid} invalid) into {}", rows.len(), out.display());
    Ok(())
}

pub fn report(config: &RunConfig, input: &Path, out: &Path) -> anyhow::Result<()> {
    let rows: Vec<EvaluationRow> = report::read_csv(open(input)?)?;
    let summary = report::summarize(&rows, &config.thresholds);
    report::write_csv(&summary, create(out)?)?;
    print_summary(&summary, io::stdout().lock())?;
    Ok(())
}

fn print_summary<W: Write>(rows: &[SummaryRow], mut w: W) -> io::Result<()> {
    let fmt = |v: Option<f64>, metric: Metric| match (v, metric) {
        (None, _) => "-".to_string(),
        (Some(v), Metric::JQs) => format!("{v:.2e}"),
        (Some(v), _) => format!("{v:+.4}"),
    };
    writeln!(
        w,
        "{:<12} {:<13} {:<8} {:>5} {:>8} {:>9} {:>9} {:>9} {:>7}",
        "group", "set", "metric", "n", "invalid", "q25", "median", "q75", "within"
    )?;
    for r in rows {
        let metric = match r.metric {
            Metric::CAspect => "c_A",
            Metric::CIota => "c_iota",
            Metric::JQs => "J_QS",
        };
        let set = match r.set {
            ConditionSet::InSample => "in-sample",
            ConditionSet::OutOfSample => "out-of-sample",
        };
        writeln!(
            w,
            "{:<12} {:<13} {:<8} {:>5} {:>7.1}% {:>9} {:>9} {:>9} {:>7}",
            r.group,
            set,
            metric,
            r.n_samples,
            100.0 * r.invalid_fraction,
            fmt(r.q25, r.metric),
            fmt(r.q50, r.metric),
            fmt(r.q75, r.metric),
            r.fraction_within
                .map_or("-".to_string(), |f| format!("{:.1}%", 100.0 * f)),
        )?;
    }
    Ok(())
}

/// Reference implementation of the evaluator adapter: geometric aspect
/// ratio, an exactly quasisymmetric model field and a fixed transform.
pub fn field_stub(iota: Option<f64>, epsilon: f64) -> anyhow::Result<()> {
    let mut input = String::new();
    io::stdin().read_to_string(&mut input)?;
    let request: EvaluatorRequest = serde_json::from_str(&input).context("invalid evaluator request")?;
    let surface = FourierSurface::from_json(&request.surface)?;
    if request.helicity > 1 {
        bail!("helicity must be 0 or 1, got {}", request.helicity);
    }
    let response = EvaluatorResponse {
        mean_iota: iota,
        aspect_ratio: Some(geometry_default(&surface)?.aspect_ratio),
        field: Some(synthetic_field(&surface, request.helicity, 1.0, epsilon)?.to_json()),
    };
    serde_json::to_writer(io::stdout().lock(), &response)?;
    Ok(())
}
