//! TSV ingestion and serialization.
//!
//! Layout of a dataset directory:
//!
//! ```text
//! entities.tsv      entity_key \t name
//! relations.tsv     relation_key \t name
//! descriptions.tsv  entity_key \t description     (optional)
//! train.tsv         subject \t relation \t object \t start \t end
//! valid.tsv
//! test.tsv
//! manifest.txt      key=value lines written by `write_dataset`
//! ```
//!
//! Unknown endpoints are `-`. Dense ids are assigned in first-occurrence order of
//! the entity and relation files.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{
    parse_endpoint, Dataset, EntityId, EntityRecord, Quadruple, RelationId, RelationRecord, SplitKind,
    TimeInterval,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct IngestConfig {
    pub entities: String,
    pub relations: String,
    pub descriptions: String,
    pub train: String,
    pub valid: String,
    pub test: String,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            entities: "entities.tsv".into(),
            relations: "relations.tsv".into(),
            descriptions: "descriptions.tsv".into(),
            train: "train.tsv".into(),
            valid: "valid.tsv".into(),
            test: "test.tsv".into(),
        }
    }
}

impl IngestConfig {
    pub fn split_file(&self, kind: SplitKind) -> &str {
        match kind {
            SplitKind::Train => &self.train,
            SplitKind::Valid => &self.valid,
            SplitKind::Test => &self.test,
        }
    }
}

pub const MANIFEST_FILE: &str = "manifest.txt";

struct Lines {
    path: PathBuf,
    reader: BufReader<fs::File>,
    line_no: usize,
}

impl Lines {
    fn open(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        Ok(Self {
            path: path.to_path_buf(),
            reader: BufReader::new(file),
            line_no: 0,
        })
    }

    /// Next non-blank line with its 1-based number.
    fn next_line(&mut self) -> Result<Option<(usize, String)>> {
        let mut buf = String::new();
        loop {
            buf.clear();
            let n = self
                .reader
                .read_line(&mut buf)
                .map_err(|e| Error::io(format!("reading {}", self.path.display()), e))?;
            if n == 0 {
                return Ok(None);
            }
            self.line_no += 1;
            let line = buf.trim_end_matches(['\n', '\r']);
            if !line.trim().is_empty() {
                return Ok(Some((self.line_no, line.to_string())));
            }
        }
    }

    fn error(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Ingestion {
            file: self.path.clone(),
            line,
            message: message.into(),
        }
    }
}

fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Reads `key \t text` lines. Returns records in file order.
fn read_named(path: &Path, what: &str) -> Result<Vec<(String, String)>> {
    let mut lines = Lines::open(path)?;
    let mut seen = HashMap::new();
    let mut out = Vec::new();
    while let Some((no, line)) = lines.next_line()? {
        let Some((key, name)) = line.split_once('\t') else {
            return Err(lines.error(no, format!("expected `{what}_id<TAB>name`")));
        };
        let key = key.trim().to_string();
        let name = collapse_whitespace(name);
        if key.is_empty() {
            return Err(lines.error(no, format!("empty {what} id")));
        }
        if name.is_empty() {
            return Err(lines.error(no, format!("{what} `{key}` has an empty name")));
        }
        if seen.insert(key.clone(), no).is_some() {
            return Err(lines.error(no, format!("duplicate {what} id `{key}`")));
        }
        out.push((key, name));
    }
    Ok(out)
}

pub fn load_dataset(dir: &Path, config: &IngestConfig) -> Result<Dataset> {
    let entity_rows = read_named(&dir.join(&config.entities), "entity")?;
    let relation_rows = read_named(&dir.join(&config.relations), "relation")?;

    let mut entities: Vec<EntityRecord> = entity_rows
        .into_iter()
        .enumerate()
        .map(|(i, (key, name))| EntityRecord {
            id: EntityId(i as u32),
            key,
            name,
            description: String::new(),
        })
        .collect();
    let relations: Vec<RelationRecord> = relation_rows
        .into_iter()
        .enumerate()
        .map(|(i, (key, name))| RelationRecord {
            id: RelationId(i as u32),
            key,
            name,
        })
        .collect();
    let entity_ids: HashMap<String, EntityId> = entities.iter().map(|e| (e.key.clone(), e.id)).collect();
    let relation_ids: HashMap<String, RelationId> = relations.iter().map(|r| (r.key.clone(), r.id)).collect();

    let desc_path = dir.join(&config.descriptions);
    if desc_path.exists() {
        let mut lines = Lines::open(&desc_path)?;
        while let Some((no, line)) = lines.next_line()? {
            let (key, text) = line.split_once('\t').unwrap_or((line.as_str(), ""));
            let key = key.trim();
            let id = entity_ids.get(key).ok_or_else(|| Error::Resolution {
                file: desc_path.clone(),
                line: no,
                kind: "entity",
                key: key.to_string(),
            })?;
            entities[id.index()].description = collapse_whitespace(text);
        }
    }

    let mut splits = Vec::with_capacity(3);
    for kind in SplitKind::ALL {
        let path = dir.join(config.split_file(kind));
        splits.push(read_quadruples(&path, &entity_ids, &relation_ids)?);
    }
    let test = splits.pop().unwrap();
    let valid = splits.pop().unwrap();
    let train = splits.pop().unwrap();
    Dataset::from_parts(entities, relations, train, valid, test)
}

fn read_quadruples(
    path: &Path,
    entity_ids: &HashMap<String, EntityId>,
    relation_ids: &HashMap<String, RelationId>,
) -> Result<Vec<Quadruple>> {
    let mut lines = Lines::open(path)?;
    let mut out = Vec::new();
    while let Some((no, line)) = lines.next_line()? {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(lines.error(no, format!("expected 5 columns, found {}", cols.len())));
        }
        let entity = |key: &str| {
            entity_ids
                .get(key.trim())
                .copied()
                .ok_or_else(|| Error::Resolution {
                    file: path.to_path_buf(),
                    line: no,
                    kind: "entity",
                    key: key.trim().to_string(),
                })
        };
        let subject = entity(cols[0])?;
        let relation = relation_ids
            .get(cols[1].trim())
            .copied()
            .ok_or_else(|| Error::Resolution {
                file: path.to_path_buf(),
                line: no,
                kind: "relation",
                key: cols[1].trim().to_string(),
            })?;
        let object = entity(cols[2])?;
        let start = parse_endpoint(cols[3]).map_err(|e| lines.error(no, e.to_string()))?;
        let end = parse_endpoint(cols[4]).map_err(|e| lines.error(no, e.to_string()))?;
        let interval = TimeInterval::new(start, end).map_err(|e| lines.error(no, e.to_string()))?;
        out.push(Quadruple {
            subject,
            relation,
            object,
            interval,
        });
    }
    Ok(out)
}

/// Key-value summary of a written dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub granularity: String,
    pub t_min: i32,
    pub t_max: i32,
    /// (file name, hex sha256) in write order.
    pub checksums: Vec<(String, String)>,
}

impl Manifest {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "granularity={}", self.granularity);
        let _ = writeln!(s, "t_min={}", self.t_min);
        let _ = writeln!(s, "t_max={}", self.t_max);
        for (file, sum) in &self.checksums {
            let _ = writeln!(s, "sha256.{file}={sum}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut granularity = None;
        let mut t_min = None;
        let mut t_max = None;
        let mut checksums = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("bad manifest line `{line}`")))?;
            let num = |v: &str| {
                v.parse::<i32>()
                    .map_err(|_| Error::Config(format!("bad manifest value `{line}`")))
            };
            match k {
                "granularity" => granularity = Some(v.to_string()),
                "t_min" => t_min = Some(num(v)?),
                "t_max" => t_max = Some(num(v)?),
                _ => match k.strip_prefix("sha256.") {
                    Some(file) => checksums.push((file.to_string(), v.to_string())),
                    None => return Err(Error::Config(format!("unknown manifest key `{k}`"))),
                },
            }
        }
        let missing = |k: &str| Error::Config(format!("manifest lacks `{k}`"));
        Ok(Self {
            granularity: granularity.ok_or_else(|| missing("granularity"))?,
            t_min: t_min.ok_or_else(|| missing("t_min"))?,
            t_max: t_max.ok_or_else(|| missing("t_max"))?,
            checksums,
        })
    }
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    f.write_all(contents.as_bytes())
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn render_quadruples(ds: &Dataset, quads: &[Quadruple]) -> String {
    let show = |y: Option<i32>| y.map_or_else(|| "-".to_string(), |y| y.to_string());
    let mut s = String::new();
    for q in quads {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}",
            ds.entity(q.subject).key,
            ds.relation(q.relation).key,
            ds.entity(q.object).key,
            show(q.interval.start()),
            show(q.interval.end())
        );
    }
    s
}

/// Writes `ds` in the layout read by [`load_dataset`] and returns the manifest.
pub fn write_dataset(ds: &Dataset, dir: &Path, config: &IngestConfig) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;

    let mut files: Vec<(String, String)> = Vec::new();
    let mut ents = String::new();
    let mut descs = String::new();
    for e in &ds.entities {
        let _ = writeln!(ents, "{}\t{}", e.key, e.name);
        if !e.description.is_empty() {
            let _ = writeln!(descs, "{}\t{}", e.key, e.description);
        }
    }
    let mut rels = String::new();
    for r in &ds.relations {
        let _ = writeln!(rels, "{}\t{}", r.key, r.name);
    }
    files.push((config.entities.clone(), ents));
    files.push((config.relations.clone(), rels));
    files.push((config.descriptions.clone(), descs));
    for kind in SplitKind::ALL {
        files.push((
            config.split_file(kind).to_string(),
            render_quadruples(ds, ds.split(kind)),
        ));
    }

    let mut checksums = Vec::new();
    for (name, contents) in &files {
        write_file(&dir.join(name), contents)?;
        checksums.push((name.clone(), hex::encode(Sha256::digest(contents.as_bytes()))));
    }
    let manifest = Manifest {
        granularity: "year".into(),
        t_min: ds.range.min,
        t_max: ds.range.max,
        checksums,
    };
    write_file(&dir.join(MANIFEST_FILE), &manifest.render())?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::IntervalKind;

    fn write_raw(dir: &Path, train: &str) {
        fs::write(
            dir.join("entities.tsv"),
            "12\tBarack Obama\n47\tUnited_States\n5\tX\n",
        )
        .unwrap();
        fs::write(dir.join("relations.tsv"), "3\tpresidentOf\n").unwrap();
        fs::write(dir.join("descriptions.tsv"), "12\t44th president\n").unwrap();
        fs::write(dir.join("train.tsv"), train).unwrap();
        fs::write(dir.join("valid.tsv"), "5\t3\t47\t2001\t2002\n").unwrap();
        fs::write(dir.join("test.tsv"), "").unwrap();
    }

    #[test]
    fn loads_rows() {
        let tmp = tempfile::tempdir().unwrap();
        write_raw(
            tmp.path(),
            "12\t3\t47\t2009\t2017\n12\t3\t47\t2009\t-\n5\t3\t12\t-\t2003-05-01\n",
        );
        let ds = load_dataset(tmp.path(), &IngestConfig::default()).unwrap();
        assert_eq!(ds.train.len(), 3);
        let q = ds.train[0];
        assert_eq!(ds.entity(q.subject).key, "12");
        assert_eq!(ds.entity(q.object).name, "United_States");
        assert_eq!(q.interval, TimeInterval::closed(2009, 2017).unwrap());
        assert_eq!(ds.train[1].interval.kind(), IntervalKind::RightOpen);
        assert_eq!(ds.train[1].interval.start(), Some(2009));
        assert_eq!(ds.train[2].interval.end(), Some(2003));
        assert_eq!(ds.entities[0].description, "44th president");
        assert_eq!(ds.entities[1].description, "");
        assert_eq!((ds.range.min, ds.range.max), (2003, 2017));
        assert_eq!(
            ds.entities.iter().map(|e| e.id.0).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn both_unknown_is_an_ingestion_error() {
        let tmp = tempfile::tempdir().unwrap();
        write_raw(tmp.path(), "12\t3\t47\t2009\t2017\n12\t3\t47\t-\t-\n");
        match load_dataset(tmp.path(), &IngestConfig::default()) {
            Err(Error::Ingestion { file, line, .. }) => {
                assert!(file.ends_with("train.tsv"));
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_rows() {
        for bad in [
            "12\t3\t47\t2009\n",
            "12\t3\t47\tabc\t2010\n",
            "12\t3\t47\t2011\t2010\n",
        ] {
            let tmp = tempfile::tempdir().unwrap();
            write_raw(tmp.path(), bad);
            assert!(matches!(
                load_dataset(tmp.path(), &IngestConfig::default()),
                Err(Error::Ingestion { line: 1, .. })
            ));
        }
    }

    #[test]
    fn dangling_ids() {
        let tmp = tempfile::tempdir().unwrap();
        write_raw(tmp.path(), "12\t3\t99\t2009\t2017\n");
        assert!(matches!(
            load_dataset(tmp.path(), &IngestConfig::default()),
            Err(Error::Resolution { kind: "entity", .. })
        ));
        write_raw(tmp.path(), "12\t4\t47\t2009\t2017\n");
        assert!(matches!(
            load_dataset(tmp.path(), &IngestConfig::default()),
            Err(Error::Resolution { kind: "relation", .. })
        ));
    }

    #[test]
    fn round_trip_preserves_ids_and_facts() {
        let tmp = tempfile::tempdir().unwrap();
        write_raw(tmp.path(), "12\t3\t47\t2009\t2017\n47\t3\t5\t2009\t-\n");
        let cfg = IngestConfig::default();
        let ds = load_dataset(tmp.path(), &cfg).unwrap();
        let out = tmp.path().join("out");
        let manifest = write_dataset(&ds, &out, &cfg).unwrap();
        let again = load_dataset(&out, &cfg).unwrap();
        assert_eq!(ds.entities, again.entities);
        assert_eq!(ds.relations, again.relations);
        assert_eq!(ds.train, again.train);
        assert_eq!(ds.valid, again.valid);
        assert_eq!(ds.test, again.test);

        let parsed = Manifest::parse(&fs::read_to_string(out.join(MANIFEST_FILE)).unwrap()).unwrap();
        assert_eq!(parsed, manifest);
        assert_eq!((parsed.t_min, parsed.t_max), (2009, 2017));
        let train_sum = &parsed.checksums.iter().find(|(f, _)| f == "train.tsv").unwrap().1;
        assert_eq!(*train_sum, file_sha256(&out.join("train.tsv")).unwrap());
    }
}
