//! File interfaces shared with external predictors: mobility inputs,
//! per-link predictions and learning-curve data.
//!
//! Predictions: `triple_id,link_id,probability,bit`, one row per link, with
//! `bit = probability > 0.5`. Mobility inputs: `triple_id,link_id,n_vehicles,
//! nu,lambda,t_lambda,tx`; any extra trailing columns (as in dataset files)
//! are ignored.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use fcaz_core::fc_engine::AzConfig;
use fcaz_core::features::MobilityRow;

use crate::cv::CurvePoint;
use crate::MlError;

pub const PREDICTION_HEADER: [&str; 4] = ["triple_id", "link_id", "probability", "bit"];
pub const MOBILITY_HEADER: [&str; 7] = ["triple_id", "link_id", "n_vehicles", "nu", "lambda", "t_lambda", "tx"];
pub const CURVE_HEADER: [&str; 5] = ["train_size", "precision", "recall", "fscore", "macro_fscore"];

fn schema(row: usize, message: impl Into<String>) -> MlError {
    MlError::Schema { row, message: message.into() }
}

fn csv_err(e: csv::Error) -> MlError {
    schema(e.position().map_or(0, |p| p.line() as usize), e.to_string())
}

fn open(path: &Path) -> Result<BufReader<File>, MlError> {
    File::open(path).map(BufReader::new).map_err(|e| MlError::Io { path: path.into(), source: e })
}

fn create(path: &Path) -> Result<BufWriter<File>, MlError> {
    File::create(path).map(BufWriter::new).map_err(|e| MlError::Io { path: path.into(), source: e })
}

/// One predicted triple: per-link probabilities and the thresholded bits.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub probabilities: Vec<f64>,
    pub bits: AzConfig,
}

impl PredictionRow {
    pub fn from_probabilities(probabilities: Vec<f64>) -> Self {
        let bits = AzConfig::from_bits(probabilities.iter().map(|&p| p > 0.5).collect());
        PredictionRow { probabilities, bits }
    }
}

pub fn write_predictions(rows: &[PredictionRow], out: impl Write) -> Result<(), MlError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PREDICTION_HEADER).map_err(csv_err)?;
    for (id, row) in rows.iter().enumerate() {
        for (link, (p, b)) in row.probabilities.iter().zip(row.bits.bits()).enumerate() {
            w.write_record([id.to_string(), link.to_string(), format!("{p:.8e}"), (*b as u8).to_string()])
                .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| schema(0, e.to_string()))
}

/// Splits rows into triples, checking that ids are contiguous from zero.
struct Grouper<T> {
    triples: Vec<Vec<T>>,
}

impl<T> Grouper<T> {
    fn push(&mut self, row: usize, triple_id: usize, link_id: usize, value: T) -> Result<(), MlError> {
        let n = self.triples.len();
        if triple_id == n && link_id == 0 {
            self.triples.push(Vec::new());
        } else if triple_id + 1 != n {
            return Err(schema(row, format!("triple_id {triple_id} out of sequence after {n} triples")));
        }
        let links = self.triples.last_mut().expect("open triple");
        if links.len() != link_id {
            return Err(schema(row, format!("link_id {link_id}, expected {}", links.len())));
        }
        links.push(value);
        Ok(())
    }

    fn finish(self) -> Result<Vec<Vec<T>>, MlError> {
        if let Some(first) = self.triples.first() {
            let n = first.len();
            if let Some(bad) = self.triples.iter().position(|t| t.len() != n) {
                return Err(schema(0, format!("triple {bad} has {} links, expected {n}", self.triples[bad].len())));
            }
        }
        Ok(self.triples)
    }
}

fn check_header(r: &mut csv::Reader<impl Read>, expected: &[&str], prefix: bool) -> Result<(), MlError> {
    let header = r.headers().map_err(csv_err)?;
    let got: Vec<&str> = header.iter().collect();
    let ok = if prefix { got.len() >= expected.len() && got[..expected.len()] == *expected } else { got == expected };
    if ok {
        Ok(())
    } else {
        Err(schema(0, format!("expected header {}", expected.join(","))))
    }
}

fn field<T: std::str::FromStr>(record: &csv::StringRecord, k: usize, name: &str, row: usize) -> Result<T, MlError> {
    record.get(k).and_then(|v| v.trim().parse().ok()).ok_or_else(|| schema(row, format!("bad {name}: {:?}", record.get(k))))
}

pub fn read_predictions(input: impl Read) -> Result<Vec<PredictionRow>, MlError> {
    let mut r = csv::Reader::from_reader(input);
    check_header(&mut r, &PREDICTION_HEADER, false)?;
    let mut g = Grouper { triples: Vec::new() };
    for (i, record) in r.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(csv_err)?;
        let p: f64 = field(&record, 2, "probability", row)?;
        if !(0.0..=1.0).contains(&p) {
            return Err(schema(row, format!("probability {p} outside [0, 1]")));
        }
        let bit = match record.get(3).map(str::trim) {
            Some("0") => false,
            Some("1") => true,
            other => return Err(schema(row, format!("bad bit: {other:?}"))),
        };
        if bit != (p > 0.5) {
            return Err(schema(row, format!("bit {} disagrees with probability {p}", bit as u8)));
        }
        g.push(row, field(&record, 0, "triple_id", row)?, field(&record, 1, "link_id", row)?, (p, bit))?;
    }
    Ok(g.finish()?
        .into_iter()
        .map(|links| PredictionRow {
            probabilities: links.iter().map(|l| l.0).collect(),
            bits: AzConfig::from_bits(links.iter().map(|l| l.1).collect()),
        })
        .collect())
}

pub fn export_predictions(rows: &[PredictionRow], path: &Path) -> Result<(), MlError> {
    write_predictions(rows, create(path)?)
}

pub fn import_predictions(path: &Path) -> Result<Vec<PredictionRow>, MlError> {
    read_predictions(open(path)?)
}

pub fn write_mobility(triples: &[Vec<MobilityRow>], out: impl Write) -> Result<(), MlError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MOBILITY_HEADER).map_err(csv_err)?;
    for (id, t) in triples.iter().enumerate() {
        for (link, m) in t.iter().enumerate() {
            let mut rec = vec![id.to_string(), link.to_string()];
            rec.extend([m.n_vehicles, m.nu, m.lambda, m.t_lambda, m.tx].iter().map(|v| format!("{v:.8e}")));
            w.write_record(rec).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| schema(0, e.to_string()))
}

/// Reads mobility rows from a mobility CSV or a full dataset CSV.
pub fn read_mobility(input: impl Read) -> Result<Vec<Vec<MobilityRow>>, MlError> {
    let mut r = csv::Reader::from_reader(input);
    check_header(&mut r, &MOBILITY_HEADER, true)?;
    let mut g = Grouper { triples: Vec::new() };
    for (i, record) in r.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(csv_err)?;
        let mut v = [0.0f64; 5];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = field(&record, k + 2, MOBILITY_HEADER[k + 2], row)?;
            if !slot.is_finite() {
                return Err(schema(row, format!("non-finite {}", MOBILITY_HEADER[k + 2])));
            }
        }
        let m = MobilityRow { n_vehicles: v[0], nu: v[1], lambda: v[2], t_lambda: v[3], tx: v[4] };
        g.push(row, field(&record, 0, "triple_id", row)?, field(&record, 1, "link_id", row)?, m)?;
    }
    g.finish()
}

pub fn import_mobility(path: &Path) -> Result<Vec<Vec<MobilityRow>>, MlError> {
    read_mobility(open(path)?)
}

pub fn write_curve(points: &[CurvePoint], out: impl Write) -> Result<(), MlError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CURVE_HEADER).map_err(csv_err)?;
    for p in points {
        let s = &p.scores;
        w.write_record([
            p.train_size.to_string(),
            format!("{:.8}", s.precision),
            format!("{:.8}", s.recall),
            format!("{:.8}", s.fscore),
            format!("{:.8}", s.macro_fscore),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| schema(0, e.to_string()))
}

pub fn export_curve(points: &[CurvePoint], path: &Path) -> Result<(), MlError> {
    write_curve(points, create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prediction_rows_threshold_at_one_half() {
        let row = PredictionRow::from_probabilities(vec![0.51, 0.49, 0.5]);
        assert_eq!(row.bits.to_string(), "100");
    }

    #[test]
    fn predictions_round_trip() {
        let rows = vec![
            PredictionRow::from_probabilities(vec![0.9, 0.1]),
            PredictionRow::from_probabilities(vec![0.3, 0.7]),
        ];
        let mut buf = Vec::new();
        write_predictions(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("triple_id,link_id,probability,bit\n0,0,9.00000000e-1,1\n"));
        assert_eq!(read_predictions(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn prediction_schema_errors() {
        let bad = [
            "triple_id,link_id,prob,bit\n",
            "triple_id,link_id,probability,bit\n0,0,0.9,0\n",
            "triple_id,link_id,probability,bit\n0,0,1.5,1\n",
            "triple_id,link_id,probability,bit\n0,0,0.9,1\n2,0,0.9,1\n",
            "triple_id,link_id,probability,bit\n0,0,0.9,1\n0,2,0.9,1\n",
            "triple_id,link_id,probability,bit\n0,0,0.9,1\n0,1,0.9,1\n1,0,0.9,1\n",
            "triple_id,link_id,probability,bit\n0,1,0.9,1\n",
        ];
        for text in bad {
            assert!(matches!(read_predictions(text.as_bytes()), Err(MlError::Schema { .. })), "{text:?}");
        }
        assert!(read_predictions("triple_id,link_id,probability,bit\n".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn mobility_reads_dataset_columns() {
        let text = "triple_id,link_id,n_vehicles,nu,lambda,t_lambda,tx,v_c,availability,label_bit\n\
                    0,0,1,2,3,4,100,0,0,1\n0,1,5,6,7,8,100,0,0,0\n";
        let m = read_mobility(text.as_bytes()).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m[0][1], MobilityRow { n_vehicles: 5.0, nu: 6.0, lambda: 7.0, t_lambda: 8.0, tx: 100.0 });
        let mut buf = Vec::new();
        write_mobility(&m, &mut buf).unwrap();
        assert_eq!(read_mobility(buf.as_slice()).unwrap(), m);
    }
}
