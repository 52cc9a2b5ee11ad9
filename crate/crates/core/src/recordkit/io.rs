//! `records.jsonl`: one JSON record per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::record::Record;
use crate::error::{HaloError, Result};

pub fn read_records<R: Read>(reader: R) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| HaloError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        record
            .validate()
            .map_err(|message| HaloError::Parse { line: i + 1, message })?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_records<W: Write>(writer: W, records: &[Record]) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_records(path: &Path) -> Result<Vec<Record>> {
    read_records(File::open(path)?)
}

pub fn save_records(records: &[Record], path: &Path) -> Result<()> {
    write_records(File::create(path)?, records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recordkit::record::Visit;

    #[test]
    fn truncated_line_reports_its_number() {
        let mut text = String::new();
        for i in 0..6 {
            text.push_str(&format!("{{\"patient_id\":\"p{i}\",\"labels\":[],\"visits\":[]}}\n"));
        }
        text.push_str("{\"patient_id\":\"p6\",\"labels\":[\n");
        let err = read_records(text.as_bytes()).unwrap_err();
        assert!(matches!(err, HaloError::Parse { line: 7, .. }), "{err}");
        assert!(err.to_string().starts_with("line 7"));
    }

    #[test]
    fn empty_input_is_empty_list() {
        assert!(read_records(&b""[..]).unwrap().is_empty());
    }

    #[test]
    fn schema_fields() {
        let mut r = Record::new("p1");
        r.labels.insert("L".into());
        let mut v = Visit::with_codes(["a"]);
        v.labs.insert("hb".into(), 12.5);
        r.visits.push(v);
        let mut buf = Vec::new();
        write_records(&mut buf, &[r.clone()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "{\"patient_id\":\"p1\",\"labels\":[\"L\"],\"visits\":[{\"codes\":[\"a\"],\"labs\":{\"hb\":12.5},\"gap_days\":null}]}\n"
        );
        assert_eq!(read_records(text.as_bytes()).unwrap(), vec![r]);
    }

    #[test]
    fn negative_gap_rejected() {
        let text = "{\"patient_id\":\"p\",\"visits\":[{\"codes\":[],\"gap_days\":-1}]}\n";
        assert!(read_records(text.as_bytes()).is_err());
    }
}
