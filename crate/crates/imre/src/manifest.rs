//! Pair manifest, one JSON object per line.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub pair_id: usize,
    pub h_i_path: String,
    pub h_f_path: String,
    pub label: String,
    pub split: String,
}

pub fn write_manifest(entries: &[ManifestEntry], mut w: impl Write) -> Result<()> {
    for e in entries {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n").map_err(|e| Error::format("manifest", e.to_string()))?;
    }
    w.flush().map_err(|e| Error::format("manifest", e.to_string()))
}

pub fn read_manifest(r: impl BufRead) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::format("manifest", e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(&line)
            .map_err(|e| Error::format("manifest", format!("line {}: {e}", i + 1)))?;
        if entry.split != "train" && entry.split != "test" {
            return Err(Error::format("manifest", format!("line {}: unknown split `{}`", i + 1, entry.split)));
        }
        out.push(entry);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lines_round_trip() {
        let entries = vec![
            ManifestEntry {
                pair_id: 0,
                h_i_path: "operators/op_0000.imo".into(),
                h_f_path: "operators/op_0001.imo".into(),
                label: "rot_x".into(),
                split: "train".into(),
            },
            ManifestEntry {
                pair_id: 1,
                h_i_path: "a".into(),
                h_f_path: "b".into(),
                label: "scale".into(),
                split: "test".into(),
            },
        ];
        let mut buf = Vec::new();
        write_manifest(&entries, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with(r#"{"pair_id":0,"h_i_path":"operators/op_0000.imo""#));
        assert_eq!(read_manifest(buf.as_slice()).unwrap(), entries);
    }

    #[test]
    fn bad_lines_are_reported() {
        assert!(read_manifest(&b"{\"pair_id\":0}\n"[..]).is_err());
        let bad_split = br#"{"pair_id":0,"h_i_path":"a","h_f_path":"b","label":"x","split":"dev"}"#;
        assert!(read_manifest(&bad_split[..]).is_err());
    }
}
