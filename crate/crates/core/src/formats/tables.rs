use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::classifier::{AttributeMetrics, ClassifierMetrics, DepthAblationRow, LossRecord};
use crate::error::{Error, Result};
use crate::eval::MetricsPoint;
use crate::transformer::TransformLossRecord;
use crate::video::LandmarkTrack;
use crate::world::{LatentCode, LatentDataset, LatentSample, LatentShape};

fn malformed(offset: u64, message: impl Into<String>) -> Error {
    Error::Malformed {
        format: "CSV",
        offset: offset as usize,
        message: message.into(),
    }
}

fn reader(bytes: &[u8]) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(bytes)
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>, comments: &[String]) -> Result<Vec<u8>> {
    let body = w.into_inner().map_err(|e| Error::InvalidArgument(format!("csv buffer: {e}")))?;
    let mut out = Vec::new();
    for c in comments {
        out.extend_from_slice(format!("# {c}\n").as_bytes());
    }
    out.extend(body);
    Ok(out)
}

fn offset_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.byte())
}

fn field<T: std::str::FromStr>(record: &csv::StringRecord, col: usize, name: &str) -> Result<T> {
    let raw = record
        .get(col)
        .ok_or_else(|| malformed(offset_of(record), format!("missing column {name}")))?;
    raw.trim()
        .parse()
        .map_err(|_| malformed(offset_of(record), format!("column {name}: cannot parse {raw:?}")))
}

fn records(bytes: &[u8]) -> Result<(csv::StringRecord, Vec<csv::StringRecord>)> {
    let mut r = reader(bytes);
    let header = r.headers()?.clone();
    let rows = r.records().collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((header, rows))
}

fn latent_columns(len: usize) -> impl Iterator<Item = String> {
    (0..len).map(|i| format!("w_{i}"))
}

/// Train/test index sets persisted next to the dataset CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl DatasetSplit {
    pub fn of(dataset: &LatentDataset) -> Self {
        Self {
            train: dataset.train.clone(),
            test: dataset.test.clone(),
        }
    }
}

/// Header `attr_0..attr_{N-1}, w_0..w_{L*D-1}`; one row per sample.
pub fn encode_dataset(dataset: &LatentDataset) -> Result<Vec<u8>> {
    let mut w = writer();
    let n = dataset.num_attributes();
    let header: Vec<String> = (0..n).map(|i| format!("attr_{i}")).chain(latent_columns(dataset.shape.flat_len())).collect();
    w.write_record(&header)?;
    for s in &dataset.samples {
        let row: Vec<String> = s.labels.iter().map(u8::to_string).chain(s.code.flat().iter().map(f64::to_string)).collect();
        w.write_record(&row)?;
    }
    finish(w, &[])
}

pub fn decode_dataset(bytes: &[u8], shape: LatentShape, attribute_names: Vec<String>, split: DatasetSplit) -> Result<LatentDataset> {
    let (header, rows) = records(bytes)?;
    let n = header.iter().take_while(|h| h.starts_with("attr_")).count();
    if n != attribute_names.len() {
        return Err(malformed(0, format!("{n} label columns but {} attribute names", attribute_names.len())));
    }
    if header.len() != n + shape.flat_len() {
        return Err(malformed(0, format!("expected {} latent columns, found {}", shape.flat_len(), header.len() - n)));
    }
    let mut samples = Vec::with_capacity(rows.len());
    for row in &rows {
        let labels = (0..n)
            .map(|i| match field::<u8>(row, i, &header[i])? {
                v @ (0 | 1) => Ok(v),
                v => Err(malformed(offset_of(row), format!("label {v} is not 0 or 1"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        let values = (n..header.len()).map(|i| field::<f64>(row, i, &header[i])).collect::<Result<Vec<f64>>>()?;
        let code = LatentCode::from_flat(shape, values).map_err(|e| malformed(offset_of(row), e.to_string()))?;
        samples.push(LatentSample { code, labels });
    }
    LatentDataset::from_parts(shape, attribute_names, samples, split.train, split.test)
}

pub fn encode_correlation(names: &[String], matrix: &[Vec<f64>]) -> Result<Vec<u8>> {
    let mut w = writer();
    w.write_record(std::iter::once("attribute".to_string()).chain(names.iter().cloned()))?;
    for (name, row) in names.iter().zip(matrix) {
        w.write_record(std::iter::once(name.clone()).chain(row.iter().map(f64::to_string)))?;
    }
    finish(w, &[])
}

/// Latent codes keyed by one or more integer columns, e.g. `index` or
/// `frame`, optionally preceded by `#` comment lines.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTable {
    pub key_names: Vec<String>,
    pub rows: Vec<(Vec<u64>, LatentCode)>,
    pub comments: Vec<String>,
}

impl LatentTable {
    pub fn indexed(key: &str, codes: impl IntoIterator<Item = LatentCode>) -> Self {
        Self {
            key_names: vec![key.to_string()],
            rows: codes.into_iter().enumerate().map(|(i, c)| (vec![i as u64], c)).collect(),
            comments: Vec::new(),
        }
    }

    pub fn codes(&self) -> Vec<LatentCode> {
        self.rows.iter().map(|(_, c)| c.clone()).collect()
    }
}

pub fn encode_latents(table: &LatentTable) -> Result<Vec<u8>> {
    let mut w = writer();
    let flat = table.rows.first().map_or(0, |(_, c)| c.flat().len());
    w.write_record(table.key_names.iter().cloned().chain(latent_columns(flat)))?;
    for (keys, code) in &table.rows {
        if keys.len() != table.key_names.len() || code.flat().len() != flat {
            return Err(Error::InvalidArgument("latent table rows are not uniform".into()));
        }
        w.write_record(keys.iter().map(u64::to_string).chain(code.flat().iter().map(f64::to_string)))?;
    }
    finish(w, &table.comments)
}

/// Columns not named `w_*` are keys; the latent columns must match `shape`.
pub fn decode_latents(bytes: &[u8], shape: LatentShape) -> Result<LatentTable> {
    let comments = std::str::from_utf8(bytes)
        .unwrap_or("")
        .lines()
        .take_while(|l| l.starts_with('#'))
        .map(|l| l.trim_start_matches('#').trim().to_string())
        .collect();
    let (header, rows) = records(bytes)?;
    let keys = header.iter().take_while(|h| !h.starts_with("w_")).count();
    // A table written without rows carries no latent columns.
    if header.len() - keys != shape.flat_len() && !(rows.is_empty() && header.len() == keys) {
        return Err(malformed(0, format!("expected {} latent columns, found {}", shape.flat_len(), header.len() - keys)));
    }
    let mut out = Vec::with_capacity(rows.len());
    for row in &rows {
        let key_values = (0..keys).map(|i| field::<u64>(row, i, &header[i])).collect::<Result<Vec<_>>>()?;
        let values = (keys..header.len()).map(|i| field::<f64>(row, i, &header[i])).collect::<Result<Vec<_>>>()?;
        let code = LatentCode::from_flat(shape, values).map_err(|e| malformed(offset_of(row), e.to_string()))?;
        out.push((key_values, code));
    }
    Ok(LatentTable {
        key_names: header.iter().take(keys).map(String::from).collect(),
        rows: out,
        comments,
    })
}

pub fn encode_landmarks(track: &LandmarkTrack) -> Result<Vec<u8>> {
    let mut w = writer();
    w.write_record(["frame", "point", "x", "y"])?;
    for t in 0..track.frames() {
        for p in 0..track.points() {
            let [x, y] = track.get(t, p);
            w.write_record([t.to_string(), p.to_string(), x.to_string(), y.to_string()])?;
        }
    }
    finish(w, &[])
}

/// Rows may come in any order but must cover every `(frame, point)` once.
pub fn decode_landmarks(bytes: &[u8]) -> Result<LandmarkTrack> {
    let (header, rows) = records(bytes)?;
    let expected = ["frame", "point", "x", "y"];
    if header.iter().map(str::trim).ne(expected) {
        return Err(malformed(0, format!("expected header {}", expected.join(","))));
    }
    let mut cells = BTreeMap::new();
    for row in &rows {
        let key: (usize, usize) = (field(row, 0, "frame")?, field(row, 1, "point")?);
        let xy = [field::<f64>(row, 2, "x")?, field::<f64>(row, 3, "y")?];
        if cells.insert(key, xy).is_some() {
            return Err(malformed(offset_of(row), format!("duplicate landmark {key:?}")));
        }
    }
    let frames = cells.keys().map(|k| k.0 + 1).max().unwrap_or(0);
    let points = cells.keys().map(|k| k.1 + 1).max().unwrap_or(0);
    if cells.len() != frames * points {
        return Err(malformed(0, format!("track has {} rows, expected {frames} x {points}", cells.len())));
    }
    LandmarkTrack::new(frames, points, cells.into_values().collect())
}

pub fn encode_classifier_log(log: &[LossRecord]) -> Result<Vec<u8>> {
    let mut w = writer();
    for r in log {
        w.serialize(r)?;
    }
    if log.is_empty() {
        w.write_record(["iteration", "loss"])?;
    }
    finish(w, &[])
}

pub fn encode_transformer_log(log: &[TransformLossRecord]) -> Result<Vec<u8>> {
    let mut w = writer();
    for r in log {
        w.serialize(r)?;
    }
    if log.is_empty() {
        w.write_record(["iteration", "l_cls", "l_attr", "l_rec", "total"])?;
    }
    finish(w, &[])
}

fn metric_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| x.to_string())
}

fn metric_cells(m: &AttributeMetrics) -> [String; 5] {
    [m.recall, m.specificity, m.precision, m.accuracy, m.f1].map(metric_cell)
}

const METRIC_COLUMNS: [&str; 5] = ["recall", "specificity", "precision", "accuracy", "f1"];

/// One row per attribute plus a `macro` row; zero-denominator ratios are
/// written as `undefined` and left out of the macro average.
pub fn encode_classifier_metrics(names: &[String], metrics: &ClassifierMetrics) -> Result<Vec<u8>> {
    let mut w = writer();
    w.write_record(["attribute"].into_iter().chain(METRIC_COLUMNS).chain(["tp", "fp", "fn", "tn"]))?;
    for ((name, m), c) in names.iter().zip(&metrics.per_attribute).zip(&metrics.counts) {
        let counts = [c.tp, c.fp, c.fn_, c.tn].map(|v| v.to_string());
        w.write_record(std::iter::once(name.clone()).chain(metric_cells(m)).chain(counts))?;
    }
    let totals = metrics.counts.iter().fold([0; 4], |acc, c| [acc[0] + c.tp, acc[1] + c.fp, acc[2] + c.fn_, acc[3] + c.tn]);
    w.write_record(std::iter::once("macro".to_string()).chain(metric_cells(&metrics.macro_avg)).chain(totals.map(|v| v.to_string())))?;
    finish(w, &[])
}

/// Macro-averaged held-out metrics per classifier depth.
pub fn encode_depth_table(rows: &[DepthAblationRow]) -> Result<Vec<u8>> {
    let mut w = writer();
    w.write_record(["depth"].into_iter().chain(METRIC_COLUMNS))?;
    for r in rows {
        w.write_record(std::iter::once(r.depth.to_string()).chain(metric_cells(&r.metrics.macro_avg)))?;
    }
    finish(w, &[])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub attribute: String,
    pub factor: f64,
    pub change_rate: f64,
    pub preservation_rate: f64,
    pub identity_score: f64,
    pub scenario: String,
}

impl ReportRow {
    pub fn new(attribute: &str, scenario: &str, p: &MetricsPoint) -> Self {
        Self {
            attribute: attribute.to_string(),
            factor: p.factor,
            change_rate: p.change_rate,
            preservation_rate: p.preservation_rate,
            identity_score: p.identity_score,
            scenario: scenario.to_string(),
        }
    }
}

pub const REPORT_NOTES: [&str; 2] = [
    "identity_score: cosine similarity of the oracle world's identity projection (stand-in embedding)",
    "preservation_rate: macro average over non-target attributes",
];

pub fn encode_report(rows: &[ReportRow]) -> Result<Vec<u8>> {
    let mut w = writer();
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["attribute", "factor", "change_rate", "preservation_rate", "identity_score", "scenario"])?;
    }
    finish(w, &REPORT_NOTES.map(String::from))
}

pub fn decode_report(bytes: &[u8]) -> Result<Vec<ReportRow>> {
    let mut r = reader(bytes);
    Ok(r.deserialize().collect::<std::result::Result<Vec<ReportRow>, _>>()?)
}
