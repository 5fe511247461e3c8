//! Columnar dataset files: one CSV row per (triple, link) plus a JSON
//! metadata sidecar next to the CSV (`<file>.meta.json`).

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fc_engine::AzConfig;
use crate::features::{ContentRow, DatasetTriple, MobilityRow};
use crate::roadnet::LinkId;

pub const HEADER: [&str; 10] =
    ["triple_id", "link_id", "n_vehicles", "nu", "lambda", "t_lambda", "tx", "v_c", "availability", "label_bit"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("dataset schema error at row {row}: {message}")]
    Schema { row: usize, message: String },
    #[error("dataset metadata error: {0}")]
    Meta(String),
}

impl DatasetError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        DatasetError::Io { path: path.to_path_buf(), source }
    }

    fn schema(row: usize, message: impl Into<String>) -> Self {
        DatasetError::Schema { row, message: message.into() }
    }
}

/// Where a triple came from, enough to regenerate its mobility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripleOrigin {
    pub run: u64,
    pub interval: usize,
    /// Strategy index for sweep datasets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<usize>,
    pub seeding_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub n_links: usize,
    /// Interval length in seconds.
    pub interval: f64,
    pub scenario_hash: String,
    pub s_des: f64,
    pub zoi: Vec<LinkId>,
    /// How labels were produced: `sweep`, `brute` or `greedy`.
    pub label_policy: String,
    pub n_triples: usize,
    #[serde(default)]
    pub origins: Vec<TripleOrigin>,
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Nine significant digits.
fn fmt(v: f64) -> String {
    format!("{v:.8e}")
}

pub fn write_dataset(triples: &[DatasetTriple], out: impl Write) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for (id, t) in triples.iter().enumerate() {
        for (link, ((m, c), bit)) in t.p_mob.iter().zip(&t.p_com).zip(t.label.bits()).enumerate() {
            w.write_record([
                id.to_string(),
                link.to_string(),
                fmt(m.n_vehicles),
                fmt(m.nu),
                fmt(m.lambda),
                fmt(m.t_lambda),
                fmt(m.tx),
                fmt(c.v_c),
                fmt(c.availability),
                (*bit as u8).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes the CSV and, when given, its metadata sidecar.
pub fn export_dataset(triples: &[DatasetTriple], meta: Option<&DatasetMeta>, path: &Path) -> Result<(), DatasetError> {
    let file = File::create(path).map_err(|e| DatasetError::io(path, e))?;
    write_dataset(triples, BufWriter::new(file)).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => DatasetError::io(path, io),
        other => DatasetError::schema(0, format!("{other:?}")),
    })?;
    if let Some(meta) = meta {
        let mp = meta_path(path);
        let text = serde_json::to_string_pretty(meta).expect("metadata serializes");
        std::fs::write(&mp, text).map_err(|e| DatasetError::io(&mp, e))?;
    }
    Ok(())
}

pub fn read_dataset(input: impl Read) -> Result<Vec<DatasetTriple>, DatasetError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers().map_err(|e| DatasetError::schema(0, e.to_string()))?;
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(DatasetError::schema(0, format!("expected header {}", HEADER.join(","))));
    }
    let mut triples: Vec<DatasetTriple> = Vec::new();
    let mut current: Option<(usize, Vec<MobilityRow>, Vec<ContentRow>, Vec<bool>)> = None;
    let finish = |(_, p_mob, p_com, bits): (usize, Vec<MobilityRow>, Vec<ContentRow>, Vec<bool>)| DatasetTriple {
        p_mob,
        p_com,
        label: AzConfig::from_bits(bits),
    };
    for (i, record) in r.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| DatasetError::schema(row, e.to_string()))?;
        if record.len() != HEADER.len() {
            return Err(DatasetError::schema(row, format!("{} fields, expected {}", record.len(), HEADER.len())));
        }
        let int = |k: usize| {
            record[k].trim().parse::<usize>().map_err(|_| DatasetError::schema(row, format!("bad {}: {:?}", HEADER[k], &record[k])))
        };
        let float = |k: usize| {
            record[k]
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| DatasetError::schema(row, format!("bad {}: {:?}", HEADER[k], &record[k])))
        };
        let (triple_id, link_id) = (int(0)?, int(1)?);
        let bit = match record[9].trim() {
            "0" => false,
            "1" => true,
            other => return Err(DatasetError::schema(row, format!("bad label_bit: {other:?}"))),
        };
        let m = MobilityRow { n_vehicles: float(2)?, nu: float(3)?, lambda: float(4)?, t_lambda: float(5)?, tx: float(6)? };
        let c = ContentRow { v_c: float(7)?, availability: float(8)? };

        let starts_new = current.as_ref().map_or(true, |(id, ..)| *id != triple_id);
        if starts_new {
            let expected = triples.len() + current.is_some() as usize;
            if triple_id != expected {
                return Err(DatasetError::schema(row, format!("triple_id {triple_id}, expected {expected}")));
            }
            if let Some(done) = current.take() {
                triples.push(finish(done));
            }
            current = Some((triple_id, Vec::new(), Vec::new(), Vec::new()));
        }
        let (_, p_mob, p_com, bits) = current.as_mut().expect("open triple");
        if link_id != bits.len() {
            return Err(DatasetError::schema(row, format!("link_id {link_id}, expected {}", bits.len())));
        }
        p_mob.push(m);
        p_com.push(c);
        bits.push(bit);
    }
    if let Some(done) = current.take() {
        triples.push(finish(done));
    }
    if let Some(first) = triples.first() {
        let n = first.n_links();
        if let Some(bad) = triples.iter().position(|t| t.n_links() != n) {
            return Err(DatasetError::schema(0, format!("triple {bad} has {} links, expected {n}", triples[bad].n_links())));
        }
    }
    Ok(triples)
}

pub fn import_dataset(path: &Path) -> Result<Vec<DatasetTriple>, DatasetError> {
    let file = File::open(path).map_err(|e| DatasetError::io(path, e))?;
    read_dataset(std::io::BufReader::new(file))
}

/// Reads the metadata sidecar of a dataset file, if one exists.
pub fn import_meta(path: &Path) -> Result<Option<DatasetMeta>, DatasetError> {
    let mp = meta_path(path);
    if !mp.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&mp).map_err(|e| DatasetError::io(&mp, e))?;
    serde_json::from_str(&text).map(Some).map_err(|e| DatasetError::Meta(e.to_string()))
}
