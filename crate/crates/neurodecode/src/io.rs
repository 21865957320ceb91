//! On-disk formats.
//!
//! | file | layout |
//! |------|--------|
//! | dataset CSV | `subject_id,label,f0,...,f{d-1}`; `label` is the class index |
//! | `psm_<class>_<rank>.csv` | header `f0,...`, one row |
//! | `psms.csv` | `class_index,class,rank,f0,...`, one row per PSM |
//! | `sensitivity_map_<class>.csv` | `feature,value` |
//! | `similarity.csv` | `label,<label>...`, one row per PSM |
//! | `threshold_<class>_<rank>.csv` | `feature,value,sign` |
//! | `sweep.csv` | `M,mean,sd` |
//!
//! Everything else is pretty-printed JSON. Floats are written in shortest
//! round-trip form, so reading a file back gives bit-identical values.

use std::fs;
use std::path::{Path, PathBuf};

use neurodecode_core::analysis::{PsmCollection, PsmEntry, SimilarityMatrix, ThresholdedMap};
use neurodecode_core::data::{Dataset, Sample};
use neurodecode_core::sensitivity::SensitivityMap;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Class name made safe for use in a file name.
pub fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

pub fn psm_file(class_name: &str, rank: usize) -> String {
    format!("psm_{}_{rank}.csv", file_stem(class_name))
}

pub fn threshold_file(class_name: &str, rank: usize) -> String {
    format!("threshold_{}_{rank}.csv", file_stem(class_name))
}

fn feature_header(d: usize) -> impl Iterator<Item = String> {
    (0..d).map(|i| format!("f{i}"))
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))
}

struct CsvOut {
    path: PathBuf,
    w: csv::Writer<fs::File>,
}

impl CsvOut {
    fn create(path: &Path) -> Result<Self> {
        Ok(CsvOut { path: path.to_path_buf(), w: writer(path)? })
    }

    fn row<I, T>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        self.w.write_record(fields).map_err(|e| Error::csv(&self.path, e))
    }

    fn finish(mut self) -> Result<()> {
        self.w.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    let mut out = CsvOut::create(path)?;
    out.row(["subject_id".to_string(), "label".to_string()].into_iter().chain(feature_header(dataset.d())))?;
    for s in dataset.samples() {
        out.row(
            [s.subject_id.clone(), s.label.to_string()]
                .into_iter()
                .chain(s.features.iter().map(f64::to_string)),
        )?;
    }
    out.finish()
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(|e| Error::csv(path, e))
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn parse_f64(path: &Path, line: u64, field: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{} line {line}: '{field}' is not a number", path.display())))?;
    if !v.is_finite() {
        return Err(Error::Config(format!("{} line {line}: non-finite value {field}", path.display())));
    }
    Ok(v)
}

fn check_feature_header(path: &Path, header: &[&str], expected_prefix: &[&str]) -> Result<usize> {
    let n = expected_prefix.len();
    let bad = || {
        Error::Config(format!(
            "{}: header must be {},f0,f1,... but is {}",
            path.display(),
            expected_prefix.join(","),
            header.join(",")
        ))
    };
    if header.len() <= n || header[..n] != *expected_prefix {
        return Err(bad());
    }
    for (i, h) in header[n..].iter().enumerate() {
        if *h != format!("f{i}") {
            return Err(bad());
        }
    }
    Ok(header.len() - n)
}

/// Reads a dataset CSV. Without `class_names`, classes are named after the
/// largest label present (see [`Dataset::default_class_names`]).
pub fn read_dataset(path: &Path, class_names: Option<Vec<String>>) -> Result<Dataset> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    let header: Vec<&str> = header.iter().collect();
    let d = check_feature_header(path, &header, &["subject_id", "label"])?;
    let mut samples = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let line = line_of(&record);
        let subject_id = record[0].trim().to_string();
        let label: usize = record[1].trim().parse().map_err(|_| {
            Error::Config(format!(
                "{} line {line}: label '{}' is not a class index",
                path.display(),
                &record[1]
            ))
        })?;
        let features = record.iter().skip(2).map(|f| parse_f64(path, line, f)).collect::<Result<Vec<_>>>()?;
        samples.push(Sample { subject_id, features, label });
    }
    let names = match class_names {
        Some(names) => names,
        None => {
            let k = samples.iter().map(|s| s.label + 1).max().unwrap_or(0);
            Dataset::default_class_names(k)
        }
    };
    Dataset::new(d, names, samples)
        .map_err(|e| Error::Context { context: path.display().to_string(), source: Box::new(e.into()) })
}

pub fn write_psm(path: &Path, vector: &[f64]) -> Result<()> {
    let mut out = CsvOut::create(path)?;
    out.row(feature_header(vector.len()))?;
    out.row(vector.iter().map(f64::to_string))?;
    out.finish()
}

pub fn write_psm_collection(path: &Path, collection: &PsmCollection) -> Result<()> {
    let d = collection.entries().first().map_or(0, |e| e.vector.len());
    let mut out = CsvOut::create(path)?;
    out.row(["class_index", "class", "rank"].into_iter().map(String::from).chain(feature_header(d)))?;
    for e in collection.entries() {
        out.row(
            [e.class_index.to_string(), e.class_name.clone(), e.rank.to_string()]
                .into_iter()
                .chain(e.vector.iter().map(f64::to_string)),
        )?;
    }
    out.finish()
}

pub fn read_psm_collection(path: &Path) -> Result<PsmCollection> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    let header: Vec<&str> = header.iter().collect();
    check_feature_header(path, &header, &["class_index", "class", "rank"])?;
    let mut entries = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let line = line_of(&record);
        let int = |i: usize| -> Result<usize> {
            record[i].trim().parse().map_err(|_| {
                Error::Config(format!("{} line {line}: '{}' is not an integer", path.display(), &record[i]))
            })
        };
        entries.push(PsmEntry {
            class_index: int(0)?,
            class_name: record[1].to_string(),
            rank: int(2)?,
            vector: record.iter().skip(3).map(|f| parse_f64(path, line, f)).collect::<Result<_>>()?,
        });
    }
    PsmCollection::new(entries)
        .map_err(|e| Error::Context { context: path.display().to_string(), source: Box::new(e.into()) })
}

pub fn write_sensitivity_map(path: &Path, map: &SensitivityMap) -> Result<()> {
    let mut out = CsvOut::create(path)?;
    out.row(["feature", "value"])?;
    for (i, v) in map.values.iter().enumerate() {
        out.row([format!("f{i}"), v.to_string()])?;
    }
    out.finish()
}

pub fn write_similarity(path: &Path, sim: &SimilarityMatrix) -> Result<()> {
    let mut out = CsvOut::create(path)?;
    out.row(std::iter::once("label".to_string()).chain(sim.labels.iter().cloned()))?;
    for (i, label) in sim.labels.iter().enumerate() {
        out.row(std::iter::once(label.clone()).chain(sim.values.row(i).iter().map(f64::to_string)))?;
    }
    out.finish()
}

pub fn write_threshold(path: &Path, psm: &[f64], map: &ThresholdedMap) -> Result<()> {
    let mut out = CsvOut::create(path)?;
    out.row(["feature", "value", "sign"])?;
    for (i, (v, s)) in psm.iter().zip(&map.signs).enumerate() {
        out.row([format!("f{i}"), v.to_string(), s.to_string()])?;
    }
    out.finish()
}

/// One `M,mean,sd` row per training-set size.
pub fn write_sweep(path: &Path, rows: &[(usize, f64, f64)]) -> Result<()> {
    let mut out = CsvOut::create(path)?;
    out.row(["M", "mean", "sd"])?;
    for (m, mean, sd) in rows {
        out.row([m.to_string(), mean.to_string(), sd.to_string()])?;
    }
    out.finish()
}
