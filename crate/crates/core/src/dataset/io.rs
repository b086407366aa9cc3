//! Line-delimited JSON transition files.
//!
//! The first line is a header naming the format and the observation
//! columns; each following line is one record. An empty file is an empty
//! dataset.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::TransitionRecord;
use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::features::{Observation, FEATURE_NAMES};
use crate::sim::Action;

pub const FORMAT_NAME: &str = "simstore-transitions";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    columns: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    o: Vec<f64>,
    t: f64,
    a: u8,
    c: u64,
    r: f64,
    y_hat: u8,
    o_next: Option<Vec<f64>>,
    terminal: bool,
}

impl From<&TransitionRecord> for Line {
    fn from(r: &TransitionRecord) -> Self {
        Line {
            o: r.obs.to_array().to_vec(),
            t: r.time,
            a: r.action.into(),
            c: r.customer_id,
            r: r.reward,
            y_hat: r.inferred_fraud as u8,
            o_next: r.next_obs.map(|o| o.to_array().to_vec()),
            terminal: r.terminal,
        }
    }
}

impl Line {
    fn into_record(self) -> Result<TransitionRecord> {
        let inferred_fraud = match self.y_hat {
            0 => false,
            1 => true,
            v => return Err(Error::Data(format!("y_hat must be 0 or 1, got {v}"))),
        };
        let rec = TransitionRecord {
            obs: Observation::from_array(&self.o)?,
            time: self.t,
            action: Action::try_from(self.a)?,
            customer_id: self.c,
            reward: self.r,
            inferred_fraud,
            next_obs: self.o_next.as_deref().map(Observation::from_array).transpose()?,
            terminal: self.terminal,
        };
        rec.validate()?;
        Ok(rec)
    }
}

pub fn write_dataset(path: &Path, records: &[TransitionRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = Header {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        columns: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
    };
    let mut write_line = |s: String| -> Result<()> {
        w.write_all(s.as_bytes())
            .and_then(|_| w.write_all(b"\n"))
            .map_err(|e| Error::io(path, e))
    };
    write_line(serde_json::to_string(&header).expect("header serializes"))?;
    for r in records {
        write_line(serde_json::to_string(&Line::from(r)).expect("record serializes"))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Vec<TransitionRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut out = Vec::new();
    let mut header_seen = false;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        if !header_seen {
            let h: Header = serde_json::from_str(&line).map_err(|e| parse_err(lineno, format!("bad header: {e}")))?;
            if h.format != FORMAT_NAME || h.version != FORMAT_VERSION {
                return Err(parse_err(
                    lineno,
                    format!("unsupported format {} v{}", h.format, h.version),
                ));
            }
            if h.columns.iter().map(String::as_str).ne(FEATURE_NAMES.iter().copied()) {
                return Err(parse_err(lineno, "observation columns do not match".into()));
            }
            header_seen = true;
            continue;
        }
        let l: Line = serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        out.push(l.into_record().map_err(|e| parse_err(lineno, e.to_string()))?);
    }
    Ok(out)
}

/// Provenance written next to a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub level: String,
    pub seed: u64,
    pub num_records: usize,
    pub sim_config: SimConfig,
}

pub fn metadata_path(dataset: &Path) -> PathBuf {
    let mut s = dataset.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn write_metadata(dataset: &Path, meta: &DatasetMetadata) -> Result<PathBuf> {
    let path = metadata_path(dataset);
    let text = serde_json::to_string_pretty(meta).expect("metadata serializes");
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn read_metadata(dataset: &Path) -> Result<DatasetMetadata> {
    let path = metadata_path(dataset);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path,
        line: e.line(),
        msg: e.to_string(),
    })
}
