//! Caption records as JSON Lines: one object per line, UTF-8, no header.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::data::types::{validate_records, CaptionRecord};
use crate::error::{Error, Result};

/// Reads and validates a JSONL caption file. Blank lines are rejected:
/// every line must be one JSON object.
pub fn read_captions(path: &Path) -> Result<Vec<CaptionRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let record: CaptionRecord = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        record
            .validate()
            .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        records.push(record);
    }
    validate_records(&records)?;
    Ok(records)
}

/// Writes records as JSONL. Field order matches the struct declaration,
/// and absent optional fields are omitted, so output is deterministic.
pub fn write_captions(records: &[CaptionRecord], path: &Path) -> Result<()> {
    validate_records(records)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::Validation(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str) -> CaptionRecord {
        CaptionRecord {
            id: id.into(),
            caption: format!("a photo of {id}"),
            generated_caption: Some(format!("an image showing {id}")),
            itm_original: Some(0.4),
            itm_generated: Some(0.7),
            class_hint: Some("cat".into()),
            source: None,
        }
    }

    #[test]
    fn round_trip_preserves_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("caps.jsonl");
        let records = vec![rec("a"), rec("b")];
        write_captions(&records, &path).unwrap();
        let back = read_captions(&path).unwrap();
        assert_eq!(back, records);
    }

    #[test]
    fn write_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("1.jsonl");
        let p2 = dir.path().join("2.jsonl");
        let records = vec![rec("a"), rec("b")];
        write_captions(&records, &p1).unwrap();
        write_captions(&records, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn missing_id_is_a_parse_error_naming_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("caps.jsonl");
        std::fs::write(&path, "{\"caption\": \"no id here\"}\n").unwrap();
        let err = read_captions(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 1"), "{msg}");
        assert!(msg.contains("id"), "{msg}");
    }

    #[test]
    fn second_bad_line_is_reported_as_line_two() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("caps.jsonl");
        let good = serde_json::to_string(&rec("a")).unwrap();
        std::fs::write(&path, format!("{good}\nnot json\n")).unwrap();
        let err = read_captions(&path).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn duplicate_ids_across_lines_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("caps.jsonl");
        let line = serde_json::to_string(&rec("a")).unwrap();
        std::fs::write(&path, format!("{line}\n{line}\n")).unwrap();
        let err = read_captions(&path).unwrap_err();
        assert!(matches!(err, Error::DuplicateId { .. }), "{err}");
    }

    #[test]
    fn unfiltered_records_omit_optional_fields_in_json() {
        let r = CaptionRecord {
            id: "a".into(),
            caption: "plain".into(),
            generated_caption: None,
            itm_original: None,
            itm_generated: None,
            class_hint: None,
            source: None,
        };
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(s, "{\"id\":\"a\",\"caption\":\"plain\"}");
    }
}
