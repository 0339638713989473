//! Long-format CSV data and versioned JSON model files.
//!
//! Data files have the header `subject_id,process,time,value` (any column
//! order) with `process` either `X` (predictor) or `Y` (response).

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::LongitudinalSample;
use crate::error::{Error, Result};
use crate::model::ModelBundle;

pub const COLUMNS: [&str; 4] = ["subject_id", "process", "time", "value"];

/// Observations grouped by subject, in order of first appearance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub x: Vec<LongitudinalSample>,
    pub y: Vec<LongitudinalSample>,
}

impl Dataset {
    /// Subject ids in order of first appearance in either process.
    pub fn subject_ids(&self) -> Vec<String> {
        let mut seen = std::collections::HashSet::new();
        self.x
            .iter()
            .chain(&self.y)
            .filter(|s| seen.insert(s.subject_id.clone()))
            .map(|s| s.subject_id.clone())
            .collect()
    }
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::input(format!("cannot open {}: {e}", path.display())))?;
    parse_dataset(file)
}

/// Row numbers in messages count the header as row 1.
pub fn parse_dataset(reader: impl Read) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::input(format!("row 1: unreadable header: {e}")))?
        .clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::input("empty file"));
    }
    let mut col = HashMap::new();
    for (i, name) in header.iter().enumerate() {
        if col.insert(name.to_string(), i).is_some() {
            return Err(Error::input(format!("row 1: duplicate column {name:?}")));
        }
    }
    let idx: Vec<usize> = COLUMNS
        .iter()
        .map(|c| {
            col.get(*c)
                .copied()
                .ok_or_else(|| Error::input(format!("row 1: missing column {c:?}")))
        })
        .collect::<Result<_>>()?;

    let mut order_x: Vec<String> = Vec::new();
    let mut order_y: Vec<String> = Vec::new();
    let mut obs_x: HashMap<String, (Vec<f64>, Vec<f64>)> = HashMap::new();
    let mut obs_y: HashMap<String, (Vec<f64>, Vec<f64>)> = HashMap::new();
    let mut rows = 0usize;
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| Error::input(format!("row {row}: {e}")))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let field = |i: usize| rec.get(idx[i]).unwrap_or("");
        if field(0) == COLUMNS[0] && field(1) == COLUMNS[1] {
            return Err(Error::input(format!("row {row}: repeated header")));
        }
        let id = field(0).to_string();
        if id.is_empty() {
            return Err(Error::input(format!("row {row}: empty subject_id")));
        }
        let number = |i: usize| -> Result<f64> {
            let v: f64 = field(i)
                .parse()
                .map_err(|_| Error::input(format!("row {row}: {} {:?} is not a number", COLUMNS[i], field(i))))?;
            if !v.is_finite() {
                return Err(Error::input(format!("row {row}: {} is not finite", COLUMNS[i])));
            }
            Ok(v)
        };
        let (t, v) = (number(2)?, number(3)?);
        let (order, map) = match field(1) {
            "X" | "x" => (&mut order_x, &mut obs_x),
            "Y" | "y" => (&mut order_y, &mut obs_y),
            p => return Err(Error::input(format!("row {row}: process must be X or Y, got {p:?}"))),
        };
        let entry = map.entry(id.clone()).or_insert_with(|| {
            order.push(id);
            (Vec::new(), Vec::new())
        });
        entry.0.push(t);
        entry.1.push(v);
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::input("empty file: no observations"));
    }
    let build = |order: Vec<String>, mut map: HashMap<String, (Vec<f64>, Vec<f64>)>| -> Result<Vec<LongitudinalSample>> {
        order
            .into_iter()
            .map(|id| {
                let (t, v) = map.remove(&id).expect("every ordered id has observations");
                LongitudinalSample::new(id, t, v)
            })
            .collect()
    };
    Ok(Dataset {
        x: build(order_x, obs_x)?,
        y: build(order_y, obs_y)?,
    })
}

/// Writes the long format; `noise` adds a trailing column when given.
pub fn write_dataset(
    writer: impl Write,
    x: &[LongitudinalSample],
    y: &[LongitudinalSample],
    noise: Option<(&[Vec<f64>], &[Vec<f64>])>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = COLUMNS.to_vec();
    if noise.is_some() {
        header.push("noise");
    }
    w.write_record(&header).map_err(csv_err)?;
    for (proc_name, samples, nz) in [("X", x, noise.map(|n| n.0)), ("Y", y, noise.map(|n| n.1))] {
        for (i, s) in samples.iter().enumerate() {
            for j in 0..s.len() {
                let mut rec = vec![
                    s.subject_id.clone(),
                    proc_name.to_string(),
                    fmt_f64(s.times[j]),
                    fmt_f64(s.values[j]),
                ];
                if let Some(nz) = nz {
                    rec.push(fmt_f64(nz[i][j]));
                }
                w.write_record(&rec).map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Shortest decimal that parses back to the same value.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub const MODEL_FORMAT: &str = "sparsefun-model";
pub const MODEL_VERSION: u32 = 1;

/// Settings and versions recorded alongside a model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub seed: u64,
    pub folds: usize,
    pub lambda_grid: Vec<f64>,
    /// Command-line arguments that produced the model, if any.
    pub command: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub provenance: Provenance,
    pub model: ModelBundle,
}

impl ModelFile {
    pub fn new(model: ModelBundle, provenance: Provenance) -> Self {
        ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            provenance,
            model,
        }
    }
}

/// Floats are written as shortest round-trip decimals, so a reload evaluates
/// bit-identically.
pub fn save_model(path: &Path, file: &ModelFile) -> Result<()> {
    let out = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(out);
    serde_json::to_writer(&mut w, file)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::input(format!("cannot read model {}: {e}", path.display())))?;
    parse_model(&text)
}

pub fn parse_model(text: &str) -> Result<ModelFile> {
    let file: ModelFile =
        serde_json::from_str(text).map_err(|e| Error::input(format!("malformed model file: {e}")))?;
    if file.format != MODEL_FORMAT {
        return Err(Error::input(format!("not a model file (format {:?})", file.format)));
    }
    if file.version != MODEL_VERSION {
        return Err(Error::input(format!(
            "unsupported model version {} (expected {MODEL_VERSION})",
            file.version
        )));
    }
    file.model.validate()?;
    Ok(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_any_column_order() {
        let text = "time,value,subject_id,process\n0.1,2.0,a,X\n0.2,3.0,a,Y\n0.5,1.0,b,X\n0.7,1.5,b,Y\n0.3,2.5,a,X\n";
        let d = parse_dataset(text.as_bytes()).unwrap();
        assert_eq!(d.x.len(), 2);
        assert_eq!(d.x[0].times, vec![0.1, 0.3]);
        assert_eq!(d.y[1].values, vec![1.5]);
        assert_eq!(d.subject_ids(), vec!["a", "b"]);
    }

    #[test]
    fn errors_carry_row_numbers() {
        let cases = [
            ("subject_id,process,time\na,X,0.1\n", "missing column"),
            ("subject_id,process,time,value,time\na,X,0.1,1,2\n", "duplicate column"),
            ("subject_id,process,time,value\na,X,0.1,1\na,X,NaN,1\n", "row 3"),
            ("subject_id,process,time,value\na,Z,0.1,1\n", "row 2"),
            ("subject_id,process,time,value\na,X,0.1,abc\n", "row 2"),
            ("subject_id,process,time,value\na,X,0.1,1\nsubject_id,process,time,value\n", "row 3"),
            ("subject_id,process,time,value\n", "empty"),
            ("", "empty"),
        ];
        for (text, needle) in cases {
            let msg = parse_dataset(text.as_bytes()).unwrap_err().to_string();
            assert!(msg.contains(needle), "{text:?}: {msg}");
        }
    }

    #[test]
    fn dataset_round_trip() {
        let x = vec![LongitudinalSample::new("a", vec![0.1, 1.0 / 3.0], vec![2.0, -1e-300]).unwrap()];
        let y = vec![LongitudinalSample::new("a", vec![0.7], vec![std::f64::consts::PI]).unwrap()];
        let mut buf = Vec::new();
        write_dataset(&mut buf, &x, &y, None).unwrap();
        let d = parse_dataset(buf.as_slice()).unwrap();
        assert_eq!(d.x, x);
        assert_eq!(d.y, y);
    }
}
