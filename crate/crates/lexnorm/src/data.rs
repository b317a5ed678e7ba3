//! On-disk formats: JSONL datasets, atomic file writes, content hashes.
//!
//! Labeled rows carry the raw and normalized sentence strings plus the
//! aligned word lists; `input` and `output` always have equal length, with
//! 1-n expansions kept inside a single `output` element ("kt" ↔ "kinh tế").
//! Unlabeled rows carry provenance fields and the word list only; their gold
//! normalizations, when they exist (synthetic corpora), live in a separate
//! sealed sidecar file that only evaluation opens.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text_prep::WordPair;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledRow {
    pub original: String,
    pub normalized: String,
    pub input: Vec<String>,
    pub output: Vec<String>,
}

impl LabeledRow {
    pub fn from_pair(pair: &WordPair) -> LabeledRow {
        LabeledRow {
            original: pair.source_words.join(" "),
            normalized: pair.flat_target().join(" "),
            input: pair.source_words.clone(),
            output: pair.target_words.clone(),
        }
    }

    pub fn to_pair(&self) -> Result<WordPair> {
        let pair = WordPair {
            source_words: self.input.clone(),
            target_words: self.output.clone(),
        };
        pair.validate()?;
        Ok(pair)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnlabeledRow {
    pub dataset: String,
    #[serde(rename = "type")]
    pub subset: String,
    pub sent_idx: u64,
    pub idx: u64,
    pub original: String,
    pub input: Vec<String>,
}

impl UnlabeledRow {
    pub fn synthetic(sent_idx: u64, words: &[String]) -> UnlabeledRow {
        UnlabeledRow {
            dataset: "synthetic".into(),
            subset: "unlabeled".into(),
            sent_idx,
            idx: 0,
            original: words.join(" "),
            input: words.to_vec(),
        }
    }
}

/// Write bytes to a temporary sibling and rename into place, so readers never
/// observe a half-written file and an interrupted run leaves the previous
/// version intact.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension(format!(
        "{}.tmp{}",
        path.extension().and_then(|e| e.to_str()).unwrap_or(""),
        std::process::id()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut buf, row)?;
        buf.push(b'\n');
    }
    atomic_write(path, &buf)
}

/// Strict reader: any malformed line is an error.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line).map_err(|e| {
            Error::Data(format!("{}:{}: {e}", path.display(), i + 1))
        })?);
    }
    Ok(rows)
}

/// Tolerant reader: malformed lines are collected as (line number, message)
/// and skipped, so batch processing can continue past bad rows.
pub fn read_jsonl_lossy<T: for<'de> Deserialize<'de>>(
    path: &Path,
) -> Result<(Vec<(usize, T)>, Vec<(usize, String)>)> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut rows = Vec::new();
    let mut bad = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(row) => rows.push((i + 1, row)),
            Err(e) => bad.push((i + 1, e.to_string())),
        }
    }
    Ok((rows, bad))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    let bytes = fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labeled_row_round_trips_a_pair() {
        let pair = WordPair {
            source_words: vec!["kt".into(), "đi".into()],
            target_words: vec!["kinh tế".into(), "đi".into()],
        };
        let row = LabeledRow::from_pair(&pair);
        assert_eq!(row.original, "kt đi");
        assert_eq!(row.normalized, "kinh tế đi");
        assert_eq!(row.to_pair().unwrap(), pair);
    }

    #[test]
    fn unlabeled_row_uses_type_field_name() {
        let row = UnlabeledRow::synthetic(3, &["a".into()]);
        let json = serde_json::to_string(&row).unwrap();
        assert!(json.contains("\"type\":\"unlabeled\""), "{json}");
        let back: UnlabeledRow = serde_json::from_str(&json).unwrap();
        assert_eq!(back, row);
    }

    #[test]
    fn jsonl_round_trip_and_lossy_reader() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.jsonl");
        let rows = vec![
            LabeledRow::from_pair(&WordPair::identity(&["xin".into()])),
            LabeledRow::from_pair(&WordPair::identity(&["chào".into()])),
        ];
        write_jsonl(&path, &rows).unwrap();
        let back: Vec<LabeledRow> = read_jsonl(&path).unwrap();
        assert_eq!(back, rows);

        let mut content = fs::read_to_string(&path).unwrap();
        content.insert_str(0, "{not json}\n");
        fs::write(&path, content).unwrap();
        let (good, bad) = read_jsonl_lossy::<LabeledRow>(&path).unwrap();
        assert_eq!(good.len(), 2);
        assert_eq!(bad.len(), 1);
        assert_eq!(bad[0].0, 1);
        assert!(read_jsonl::<LabeledRow>(&path).is_err());
    }
}
