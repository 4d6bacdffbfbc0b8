//! JSON-lines dataset files. The first line is a header with format name,
//! version, provenance and a checksum over the record lines; each further
//! line is one grounded query with its answer sets as ascending id lists.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{Dataset, GroundedQueryRecord, Provenance};
use crate::graph::EntityId;
use crate::query::{parse_grounded, serialize_grounded};
use crate::symbolic::EntitySet;

pub const FORMAT_NAME: &str = "cqa-dataset";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("unsupported format {name:?} version {version}")]
    Version { name: String, version: u32 },
    #[error("provenance hash mismatch: header says {stored}, content gives {computed}")]
    Provenance { stored: String, computed: String },
    #[error("checksum mismatch: header says {stored}, records give {computed}")]
    Checksum { stored: String, computed: String },
    #[error("header announces {expected} records, found {found}")]
    Count { expected: usize, found: usize },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    provenance: Provenance,
    provenance_hash: String,
    records: usize,
    checksum: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    #[serde(rename = "type")]
    type_formula: String,
    query: String,
    train_answers: Vec<u32>,
    valid_answers: Vec<u32>,
    test_answers: Vec<u32>,
}

fn ids(s: &EntitySet) -> Vec<u32> {
    s.iter().map(|e| e.0).collect()
}

fn record_line(r: &GroundedQueryRecord) -> String {
    serde_json::to_string(&RecordLine {
        type_formula: r.type_formula.clone(),
        query: serialize_grounded(&r.query),
        train_answers: ids(&r.train_answers),
        valid_answers: ids(&r.valid_answers),
        test_answers: ids(&r.test_answers),
    })
    .expect("record serializes")
}

pub fn write_dataset(mut w: impl Write, ds: &Dataset) -> Result<(), DatasetError> {
    let lines: Vec<String> = ds.records.iter().map(record_line).collect();
    let mut h = Sha256::new();
    for l in &lines {
        h.update(l.as_bytes());
        h.update(b"\n");
    }
    let header = Header {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        provenance: ds.provenance.clone(),
        provenance_hash: ds.provenance.hash(),
        records: lines.len(),
        checksum: hex::encode(h.finalize()),
    };
    writeln!(w, "{}", serde_json::to_string(&header).expect("header serializes"))?;
    for l in lines {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}

fn answer_set(ids: &[u32], universe: usize, line: usize, field: &str) -> Result<EntitySet, DatasetError> {
    let bad = |reason: String| DatasetError::Malformed { line, reason };
    if let Some(w) = ids.windows(2).find(|w| w[0] >= w[1]) {
        return Err(bad(format!("{field} not strictly ascending at {} then {}", w[0], w[1])));
    }
    if let Some(&last) = ids.last() {
        if last as usize >= universe {
            return Err(bad(format!("{field} id {last} out of range ({universe} entities)")));
        }
    }
    Ok(EntitySet::from_ids(universe, ids.iter().map(|&i| EntityId(i))))
}

fn parse_record(text: &str, line: usize, prov: &Provenance) -> Result<GroundedQueryRecord, DatasetError> {
    let bad = |reason: String| DatasetError::Malformed { line, reason };
    let rl: RecordLine = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    let query = parse_grounded(&rl.query).map_err(|e| bad(format!("query: {e}")))?;
    query.validate(prov.num_entities, prov.num_relations).map_err(|e| bad(format!("query: {e}")))?;
    if serialize_grounded(&query) != rl.query {
        return Err(bad("query is not in canonical form".into()));
    }
    let shape = query.shape().to_string();
    if shape != rl.type_formula {
        return Err(bad(format!("query has type {shape}, record says {}", rl.type_formula)));
    }
    let n = prov.num_entities;
    Ok(GroundedQueryRecord {
        type_formula: rl.type_formula,
        query,
        train_answers: answer_set(&rl.train_answers, n, line, "train_answers")?,
        valid_answers: answer_set(&rl.valid_answers, n, line, "valid_answers")?,
        test_answers: answer_set(&rl.test_answers, n, line, "test_answers")?,
    })
}

/// Reads a dataset, verifying the header, checksum and every record.
/// Errors carry 1-based line numbers.
pub fn read_dataset(r: impl BufRead) -> Result<Dataset, DatasetError> {
    let mut lines = r.lines();
    let first = lines
        .next()
        .transpose()?
        .ok_or_else(|| DatasetError::Malformed { line: 1, reason: "missing header".into() })?;
    let header: Header = serde_json::from_str(&first)
        .map_err(|e| DatasetError::Malformed { line: 1, reason: format!("header: {e}") })?;
    if header.format != FORMAT_NAME || header.version != FORMAT_VERSION {
        return Err(DatasetError::Version { name: header.format, version: header.version });
    }
    let computed = header.provenance.hash();
    if computed != header.provenance_hash {
        return Err(DatasetError::Provenance { stored: header.provenance_hash, computed });
    }
    let mut h = Sha256::new();
    let mut records = Vec::with_capacity(header.records.min(1 << 20));
    for (i, l) in lines.enumerate() {
        let l = l?;
        let line = i + 2;
        if l.trim().is_empty() {
            return Err(DatasetError::Malformed { line, reason: "blank line".into() });
        }
        h.update(l.as_bytes());
        h.update(b"\n");
        records.push(parse_record(&l, line, &header.provenance)?);
    }
    if records.len() != header.records {
        return Err(DatasetError::Count { expected: header.records, found: records.len() });
    }
    let computed = hex::encode(h.finalize());
    if computed != header.checksum {
        return Err(DatasetError::Checksum { stored: header.checksum, computed });
    }
    Ok(Dataset { provenance: header.provenance, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{split_edges, synthetic, Layer};
    use crate::query::builtin_query_types;
    use crate::sampler::{sample_dataset, SamplerConfig};

    fn sample() -> Dataset {
        let l = split_edges(&synthetic(60, 4, 300, 2), (8, 1, 1), 2).unwrap();
        let cfg = SamplerConfig { per_type_count: 3, seed: 1, ..Default::default() };
        sample_dataset(&l, &builtin_query_types().in_distribution, &cfg, "toy").dataset
    }

    fn bytes(ds: &Dataset) -> Vec<u8> {
        let mut v = Vec::new();
        write_dataset(&mut v, ds).unwrap();
        v
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let ds = sample();
        let b = bytes(&ds);
        let back = read_dataset(&b[..]).unwrap();
        assert_eq!(back, ds);
        assert_eq!(bytes(&back), b);
        assert_eq!(back.provenance.source_layer, Layer::Train);
    }

    fn tamper(f: impl Fn(&str) -> String) -> DatasetError {
        let text = String::from_utf8(bytes(&sample())).unwrap();
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        lines[2] = f(&lines[2]);
        read_dataset(lines.join("\n").as_bytes()).unwrap_err()
    }

    #[test]
    fn unsorted_answers_name_the_line() {
        let e = tamper(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            v["test_answers"] = serde_json::json!([5, 3]);
            v.to_string()
        });
        assert!(matches!(e, DatasetError::Malformed { line: 3, .. }), "{e}");
    }

    #[test]
    fn wrong_type_and_checksum() {
        let e = tamper(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            v["type"] = serde_json::json!("(p,(p,(p,(e))))");
            v.to_string()
        });
        assert!(matches!(e, DatasetError::Malformed { line: 3, .. }), "{e}");
        let e = tamper(|l| l.replace("\"test_answers\":[", "\"test_answers\":[0,"));
        assert!(matches!(e, DatasetError::Checksum { .. } | DatasetError::Malformed { .. }), "{e}");
    }

    #[test]
    fn rejects_bad_header() {
        assert!(read_dataset(&b""[..]).is_err());
        assert!(matches!(read_dataset(&b"{\"nope\":1}\n"[..]).unwrap_err(), DatasetError::Malformed { line: 1, .. }));
    }
}
