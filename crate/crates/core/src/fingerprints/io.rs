//! Text formats: sparse fingerprints as `molecule_id<TAB>id:radius,...` lines
//! and folded fingerprints as `id,nbits,hex` CSV rows.

use std::io::{BufRead, Write};

use super::{FingerprintError, FoldedFingerprint};

pub fn write_sparse_tsv<W: Write>(
    mut out: W,
    rows: &[(String, Vec<(u64, u32)>)],
) -> Result<(), FingerprintError> {
    for (id, entries) in rows {
        let body: Vec<String> = entries.iter().map(|(i, r)| format!("{i}:{r}")).collect();
        writeln!(out, "{id}\t{}", body.join(","))?;
    }
    Ok(())
}

pub fn read_sparse_tsv<R: BufRead>(input: R) -> Result<Vec<(String, Vec<(u64, u32)>)>, FingerprintError> {
    let mut rows = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: &str| FingerprintError::Format {
            line: n + 1,
            reason: reason.to_string(),
        };
        let (id, body) = line.split_once('\t').ok_or_else(|| bad("missing tab"))?;
        let mut entries = Vec::new();
        for item in body.split(',').filter(|s| !s.is_empty()) {
            let (i, r) = item.split_once(':').ok_or_else(|| bad("entry without ':'"))?;
            let i = i.parse().map_err(|_| bad("bad identifier"))?;
            let r = r.parse().map_err(|_| bad("bad radius"))?;
            entries.push((i, r));
        }
        rows.push((id.to_string(), entries));
    }
    Ok(rows)
}

pub fn write_folded_csv<W: Write>(out: W, rows: &[(String, FoldedFingerprint)]) -> Result<(), FingerprintError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "nbits", "bits"])?;
    for (id, fp) in rows {
        w.write_record([id.as_str(), &fp.nbits().to_string(), &fp.to_hex()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_folded_csv<R: std::io::Read>(input: R) -> Result<Vec<(String, FoldedFingerprint)>, FingerprintError> {
    let mut r = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |reason: String| FingerprintError::Format { line: n + 2, reason };
        if rec.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", rec.len())));
        }
        let nbits: usize = rec[1].parse().map_err(|_| bad("bad nbits".into()))?;
        let fp = FoldedFingerprint::from_hex(nbits, &rec[2]).map_err(bad)?;
        rows.push((rec[0].to_string(), fp));
    }
    Ok(rows)
}
