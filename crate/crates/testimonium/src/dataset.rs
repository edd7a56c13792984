//! JSONL persistence for generated header streams plus the ground-truth
//! sidecar. The sidecar is optional: a dataset replays fine without it, it
//! just loses the junction-set comparison.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chain::{hash_header, BlockHeader, ClientId, Hash32, TransactionId};
use crate::sim::{ChainAnnotations, ChainRecord, GeneratedChain, HeaderAnnotation, SimError};

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct DatasetLine {
    hash: Hash32,
    #[serde(flatten)]
    header: BlockHeader,
    submitter_hint: ClientId,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct AnnotationMetaLine {
    #[serde(with = "hex_key")]
    validator_key: [u8; 32],
    true_head: Hash32,
    junctions: Vec<Hash32>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct AnnotationLine {
    hash: Hash32,
    is_valid: bool,
    on_true_main_chain: bool,
    tx_ids: Vec<TransactionId>,
}

mod hex_key {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("key must be 32 bytes"))
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".ann");
    s.into()
}

/// One JSON object per line, headers in submission order. The ground truth
/// goes to `<path>.ann`.
pub fn write_dataset(path: &Path, chain: &GeneratedChain) -> Result<(), SimError> {
    let mut out = BufWriter::new(File::create(path)?);
    for record in &chain.records {
        let line = DatasetLine {
            hash: record.hash,
            header: record.header.clone(),
            submitter_hint: record.submitter_hint,
        };
        serde_json::to_writer(&mut out, &line).map_err(io_err)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;

    let ann = &chain.annotations;
    let mut out = BufWriter::new(File::create(sidecar_path(path))?);
    let meta = AnnotationMetaLine {
        validator_key: ann.validator_key,
        true_head: ann.true_head,
        junctions: ann.junctions.iter().copied().collect(),
    };
    serde_json::to_writer(&mut out, &meta).map_err(io_err)?;
    out.write_all(b"\n")?;
    for (hash, a) in &ann.per_header {
        let line = AnnotationLine {
            hash: *hash,
            is_valid: a.is_valid,
            on_true_main_chain: a.on_true_main_chain,
            tx_ids: a.tx_ids.clone(),
        };
        serde_json::to_writer(&mut out, &line).map_err(io_err)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn io_err(e: serde_json::Error) -> SimError {
    SimError::Io(std::io::Error::other(e))
}

/// Parses a header stream, recomputing and checking every content hash.
/// Reads the `<path>.ann` sidecar when present; annotations stay empty
/// otherwise.
pub fn read_dataset(path: &Path) -> Result<GeneratedChain, SimError> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: DatasetLine = serde_json::from_str(&line).map_err(|e| SimError::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        let computed = hash_header(&parsed.header);
        if computed != parsed.hash {
            return Err(SimError::Parse {
                line: i + 1,
                msg: format!("stated hash {} != computed {computed}", parsed.hash),
            });
        }
        records.push(ChainRecord {
            header: parsed.header,
            hash: computed,
            submitter_hint: parsed.submitter_hint,
        });
    }
    if records.is_empty() {
        return Err(SimError::Parse {
            line: 0,
            msg: "dataset holds no headers".into(),
        });
    }

    let mut annotations = ChainAnnotations::default();
    let sidecar = sidecar_path(path);
    if sidecar.exists() {
        let reader = BufReader::new(File::open(&sidecar)?);
        let mut lines = reader.lines().enumerate();
        let (_, first) = lines.next().ok_or(SimError::Parse {
            line: 1,
            msg: "empty annotation sidecar".into(),
        })?;
        let meta: AnnotationMetaLine =
            serde_json::from_str(&first?).map_err(|e| SimError::Parse {
                line: 1,
                msg: e.to_string(),
            })?;
        annotations.validator_key = meta.validator_key;
        annotations.true_head = meta.true_head;
        annotations.junctions = meta.junctions.into_iter().collect();
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let a: AnnotationLine = serde_json::from_str(&line).map_err(|e| SimError::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
            annotations.per_header.insert(
                a.hash,
                HeaderAnnotation {
                    is_valid: a.is_valid,
                    on_true_main_chain: a.on_true_main_chain,
                    tx_ids: a.tx_ids,
                },
            );
        }
    }

    Ok(GeneratedChain {
        records,
        annotations,
    })
}

/// Line-level parser used by the reader; exposed for fuzzing.
pub fn parse_dataset_line(line: &str) -> Result<(Hash32, BlockHeader, ClientId), String> {
    let parsed: DatasetLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if hash_header(&parsed.header) != parsed.hash {
        return Err("stated hash does not match header content".into());
    }
    Ok((parsed.hash, parsed.header, parsed.submitter_hint))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_chain, ChainGenConfig};

    fn sample_chain() -> GeneratedChain {
        generate_chain(&ChainGenConfig {
            length: 60,
            branch_probability: 0.15,
            invalid_header_rate: 0.3,
            random_seed: 11,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain.jsonl");
        let chain = sample_chain();
        write_dataset(&path, &chain).unwrap();
        let loaded = read_dataset(&path).unwrap();
        assert_eq!(loaded.records.len(), chain.records.len());
        for (a, b) in loaded.records.iter().zip(&chain.records) {
            assert_eq!(a.hash, b.hash);
            assert_eq!(a.header, b.header);
            assert_eq!(a.submitter_hint, b.submitter_hint);
        }
        assert_eq!(loaded.annotations.validator_key, chain.annotations.validator_key);
        assert_eq!(loaded.annotations.true_head, chain.annotations.true_head);
        assert_eq!(loaded.annotations.junctions, chain.annotations.junctions);
        assert_eq!(
            loaded.annotations.per_header.len(),
            chain.annotations.per_header.len()
        );
    }

    #[test]
    fn missing_sidecar_leaves_annotations_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain.jsonl");
        let chain = sample_chain();
        write_dataset(&path, &chain).unwrap();
        std::fs::remove_file(sidecar_path(&path)).unwrap();
        let loaded = read_dataset(&path).unwrap();
        assert!(loaded.annotations.per_header.is_empty());
        assert_eq!(loaded.records.len(), chain.records.len());
    }

    #[test]
    fn tampered_hash_is_rejected_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain.jsonl");
        write_dataset(&path, &sample_chain()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        // flip one hex digit of the stated hash, keeping the length valid
        let hash_start = lines[2].find("\"hash\":\"").unwrap() + 8;
        let mut chars: Vec<char> = lines[2].chars().collect();
        chars[hash_start] = if chars[hash_start] == 'f' { '0' } else { 'f' };
        lines[2] = chars.into_iter().collect();
        std::fs::write(&path, lines.join("\n")).unwrap();
        match read_dataset(&path) {
            Err(SimError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn garbage_line_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain.jsonl");
        write_dataset(&path, &sample_chain()).unwrap();
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str("{not json\n");
        std::fs::write(&path, text).unwrap();
        match read_dataset(&path) {
            Err(SimError::Parse { line, .. }) => assert_eq!(line, 61),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn parse_line_rejects_mismatched_hash() {
        let chain = sample_chain();
        let good = serde_json::to_string(&DatasetLine {
            hash: chain.records[1].hash,
            header: chain.records[1].header.clone(),
            submitter_hint: chain.records[1].submitter_hint,
        })
        .unwrap();
        assert!(parse_dataset_line(&good).is_ok());
        let bad = serde_json::to_string(&DatasetLine {
            hash: chain.records[0].hash,
            header: chain.records[1].header.clone(),
            submitter_hint: chain.records[1].submitter_hint,
        })
        .unwrap();
        assert!(parse_dataset_line(&bad).is_err());
    }
}
