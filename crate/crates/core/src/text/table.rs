//! Embedding-table files.
//!
//! Text form: a header line `dim=<d> count=<n>` followed by one row per sentence,
//! `key<TAB>f1 f2 ... fd`, where `key` is the 16-digit lowercase hex [`SentenceKey`].
//!
//! Binary form (selected by a `.bin` extension): the same header line terminated by
//! `\n`, then `n` records of a little-endian `u64` key followed by `d` little-endian
//! `f32` values.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{SentenceKey, TextEncoder, TripleEmbedding, TripleSentence};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    rows: BTreeMap<SentenceKey, Vec<f32>>,
}

fn is_binary(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "bin")
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let mut dim = None;
    let mut count = None;
    for field in line.split_whitespace() {
        match field.split_once('=') {
            Some(("dim", v)) => dim = v.parse().ok(),
            Some(("count", v)) => count = v.parse().ok(),
            _ => return None,
        }
    }
    Some((dim?, count?))
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            rows: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Inserts or replaces a row.
    pub fn insert(&mut self, key: SentenceKey, vector: Vec<f32>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Shape {
                what: "embedding table row",
                expected: self.dim,
                actual: vector.len(),
            });
        }
        self.rows.insert(key, vector);
        Ok(())
    }

    pub fn get(&self, key: SentenceKey) -> Option<&[f32]> {
        self.rows.get(&key).map(Vec::as_slice)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let bad = |message: String| Error::EmbeddingTable {
            path: path.to_path_buf(),
            message,
        };
        let header_end = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("missing header line".into()))?;
        let header =
            std::str::from_utf8(&bytes[..header_end]).map_err(|_| bad("header is not UTF-8".into()))?;
        let (dim, count) = parse_header(header.trim_end_matches('\r'))
            .ok_or_else(|| bad(format!("bad header `{header}`")))?;
        let body = &bytes[header_end + 1..];
        let mut table = EmbeddingTable::new(dim);

        if is_binary(path) {
            let record = 8 + 4 * dim;
            if body.len() != record * count {
                return Err(bad(format!(
                    "expected {count} records of {record} bytes, found {} bytes",
                    body.len()
                )));
            }
            for rec in body.chunks_exact(record) {
                let key = u64::from_le_bytes(rec[..8].try_into().unwrap());
                let v = rec[8..]
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                    .collect();
                table.rows.insert(SentenceKey(key), v);
            }
        } else {
            let text = std::str::from_utf8(body).map_err(|_| bad("body is not UTF-8".into()))?;
            let mut rows_read = 0;
            for (i, line) in text.lines().enumerate() {
                let line = line.trim_end_matches('\r');
                if line.trim().is_empty() {
                    continue;
                }
                let lineno = i + 2;
                let (key, values) = line
                    .split_once('\t')
                    .ok_or_else(|| bad(format!("line {lineno}: expected key<TAB>values")))?;
                let key = SentenceKey::parse(key.trim())
                    .ok_or_else(|| bad(format!("line {lineno}: bad key `{key}`")))?;
                let v: Vec<f32> = values
                    .split_whitespace()
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad(format!("line {lineno}: unparsable float")))?;
                if v.len() != dim {
                    return Err(bad(format!(
                        "line {lineno}: {} values, header says dim={dim}",
                        v.len()
                    )));
                }
                table.rows.insert(key, v);
                rows_read += 1;
            }
            if rows_read != count {
                return Err(bad(format!("header says count={count}, found {rows_read} rows")));
            }
        }
        if table.rows.values().flatten().any(|x| !x.is_finite()) {
            return Err(bad("table contains non-finite values".into()));
        }
        Ok(table)
    }

    /// Writes rows in key order, so equal tables produce equal files.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = format!("dim={} count={}\n", self.dim, self.rows.len()).into_bytes();
        if is_binary(path) {
            for (key, v) in &self.rows {
                out.extend_from_slice(&key.0.to_le_bytes());
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        } else {
            let mut s = String::new();
            for (key, v) in &self.rows {
                let _ = write!(s, "{key}\t");
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        s.push(' ');
                    }
                    let _ = write!(s, "{x}");
                }
                s.push('\n');
            }
            out.extend_from_slice(s.as_bytes());
        }
        fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

/// Looks sentences up in a precomputed table.
#[derive(Debug, Clone)]
pub struct TableEncoder {
    table: EmbeddingTable,
}

impl TableEncoder {
    pub fn new(table: EmbeddingTable) -> Self {
        Self { table }
    }

    pub fn open(path: &Path) -> Result<Self> {
        EmbeddingTable::read(path).map(Self::new)
    }

    pub fn table(&self) -> &EmbeddingTable {
        &self.table
    }
}

impl TextEncoder for TableEncoder {
    fn dim(&self) -> usize {
        self.table.dim
    }

    fn encode(&self, sentence: &TripleSentence) -> Result<TripleEmbedding> {
        let key = sentence.key();
        self.table
            .get(key)
            .map(|v| TripleEmbedding(v.iter().map(|&x| f64::from(x)).collect()))
            .ok_or_else(|| Error::MissingEmbedding {
                key: key.to_string(),
                sentence: sentence.text.clone(),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::Variant;
    use proptest::prelude::*;

    fn sentence(text: &str) -> TripleSentence {
        TripleSentence {
            text: text.into(),
            variant: Variant::Names,
        }
    }

    #[test]
    fn lookup_and_miss() {
        let mut t = EmbeddingTable::new(3);
        let s = sentence("Obama presidentOf U.S.");
        t.insert(s.key(), vec![0.5, -1.0, 2.0]).unwrap();
        assert!(t.insert(SentenceKey(1), vec![1.0]).is_err());
        let enc = TableEncoder::new(t);
        assert_eq!(enc.encode(&s).unwrap().0, vec![0.5, -1.0, 2.0]);
        match enc.encode(&sentence("unknown")) {
            Err(Error::MissingEmbedding { key, sentence }) => {
                assert_eq!(key, SentenceKey::of("unknown").to_string());
                assert_eq!(sentence, "unknown");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_mismatch_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("t.tsv");
        fs::write(&p, "dim=2 count=2\n0000000000000001\t1 2\n").unwrap();
        assert!(EmbeddingTable::read(&p).is_err());
        fs::write(&p, "dim=2 count=1\n0000000000000001\t1 2 3\n").unwrap();
        assert!(EmbeddingTable::read(&p).is_err());
        fs::write(&p, "dim=2 count=0\n").unwrap();
        assert!(EmbeddingTable::read(&p).unwrap().is_empty());
    }

    #[test]
    fn duplicate_keys_collapse() {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("t.tsv");
        fs::write(&p, "dim=1 count=2\n0000000000000001\t1\n0000000000000001\t2\n").unwrap();
        let t = EmbeddingTable::read(&p).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.get(SentenceKey(1)).unwrap(), &[2.0]);
    }

    proptest! {
        #[test]
        fn file_round_trip(
            rows in prop::collection::btree_map(any::<u64>(), prop::collection::vec(-1e6f32..1e6, 4), 0..20),
            binary in any::<bool>(),
        ) {
            let mut t = EmbeddingTable::new(4);
            for (k, v) in &rows {
                t.insert(SentenceKey(*k), v.clone()).unwrap();
            }
            let tmp = tempfile::tempdir().unwrap();
            let p = tmp.path().join(if binary { "t.bin" } else { "t.tsv" });
            t.write(&p).unwrap();
            prop_assert_eq!(EmbeddingTable::read(&p).unwrap(), t);
        }
    }
}
