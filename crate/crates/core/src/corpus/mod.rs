//! Corpus types, the line-delimited interchange format and linearization.

mod dataset;
mod xml;

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::records::{read_records, write_records};

pub use dataset::{
    extract_e2e_dataset, extract_reg_dataset, extract_task_dataset, lex_reg_instances, reg_contexts, structured_predicates, DatasetInstance,
    InstanceMeta, RegInstance, Splits, Task, TaskDataset,
};

pub const TRIPLE_OPEN: &str = "<TRIPLE>";
pub const TRIPLE_CLOSE: &str = "</TRIPLE>";
pub const SNT_OPEN: &str = "<SNT>";
pub const SNT_CLOSE: &str = "</SNT>";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "[String; 3]", try_from = "[String; 3]")]
pub struct Triple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

impl Triple {
    pub fn new(subject: &str, predicate: &str, object: &str) -> Result<Self> {
        let t = Triple {
            subject: subject.to_owned(),
            predicate: predicate.to_owned(),
            object: object.to_owned(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("subject", &self.subject), ("predicate", &self.predicate), ("object", &self.object)] {
            if v.is_empty() {
                return Err(Error::InvalidTriple(format!("empty {name}")));
            }
            if v.contains(char::is_whitespace) {
                return Err(Error::InvalidTriple(format!("whitespace in {name} `{v}`")));
            }
        }
        Ok(())
    }

    /// Parses `subject | predicate | object`, replacing inner whitespace
    /// with underscores.
    pub fn parse(line: &str) -> Result<Self> {
        let parts: Vec<&str> = line.split(" | ").collect();
        if parts.len() != 3 {
            return Err(Error::InvalidTriple(format!("expected `s | p | o`, got `{line}`")));
        }
        let norm = |s: &str| s.split_whitespace().collect::<Vec<_>>().join("_");
        Triple::new(&norm(parts[0]), &norm(parts[1]), &norm(parts[2]))
    }

    pub fn entities(&self) -> [&str; 2] {
        [&self.subject, &self.object]
    }

    fn canonical_key(&self) -> (&[u8], &[u8], &[u8]) {
        (self.predicate.as_bytes(), self.subject.as_bytes(), self.object.as_bytes())
    }
}

impl From<Triple> for [String; 3] {
    fn from(t: Triple) -> Self {
        [t.subject, t.predicate, t.object]
    }
}

impl TryFrom<[String; 3]> for Triple {
    type Error = Error;

    fn try_from([s, p, o]: [String; 3]) -> Result<Self> {
        Triple::new(&s, &p, &o)
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} | {} | {}", self.subject, self.predicate, self.object)
    }
}

/// The input unit of every generator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripleSet {
    pub triples: Vec<Triple>,
    pub domain: String,
    pub seen: bool,
}

/// Distinct entities in first-occurrence order over (subject, object) pairs.
pub fn entity_order(triples: &[Triple]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for t in triples {
        for e in t.entities() {
            if !out.iter().any(|x| x == e) {
                out.push(e.to_owned());
            }
        }
    }
    out
}

pub fn predicates(triples: &[Triple]) -> Vec<String> {
    triples.iter().map(|t| t.predicate.clone()).collect()
}

/// Contiguous sentence intervals over an ordered triple list, as lists of
/// positions, e.g. `[[0, 1], [2]]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Partition(pub Vec<Vec<usize>>);

impl Partition {
    pub fn from_sizes(sizes: &[usize]) -> Self {
        let mut start = 0;
        Partition(
            sizes
                .iter()
                .map(|&n| {
                    let s: Vec<usize> = (start..start + n).collect();
                    start += n;
                    s
                })
                .collect(),
        )
    }

    pub fn singletons(n: usize) -> Self {
        Partition((0..n).map(|i| vec![i]).collect())
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.0.iter().map(Vec::len).collect()
    }

    pub fn sentences(&self) -> usize {
        self.0.len()
    }

    /// Checks that the intervals are contiguous, disjoint, non-empty and
    /// cover `0..n` in order.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut next = 0;
        for (k, s) in self.0.iter().enumerate() {
            if s.is_empty() {
                return Err(Error::InvalidPartition(format!("sentence {k} is empty")));
            }
            for &i in s {
                if i != next {
                    return Err(Error::InvalidPartition(format!(
                        "sentence {k}: expected position {next}, found {i} (overlap, gap or disorder)"
                    )));
                }
                next += 1;
            }
        }
        if next != n {
            return Err(Error::InvalidPartition(format!("covers {next} of {n} triples")));
        }
        Ok(())
    }

    /// Shifts every position by `offset`.
    pub fn shifted(&self, offset: usize) -> Partition {
        Partition(self.0.iter().map(|s| s.iter().map(|i| i + offset).collect()).collect())
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reference {
    pub entity: String,
    /// Cased, tokenized, space separated.
    pub refex: String,
}

/// One verbalization with its gold intermediate annotations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexEntry {
    pub text: String,
    /// Indices into the parent triple list, in verbalization order.
    pub order: Vec<usize>,
    /// Sentence intervals over positions of `order`.
    pub breaks: Partition,
    /// Delexicalized template, tokens separated by single spaces.
    pub template: String,
    /// One reference per entity slot of `template`, left to right.
    pub references: Vec<Reference>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entry {
    pub eid: String,
    pub domain: String,
    pub split: Split,
    pub triples: Vec<Triple>,
    pub lexes: Vec<LexEntry>,
}

impl Entry {
    pub fn size(&self) -> usize {
        self.triples.len()
    }

    pub fn ordered(&self, lex: &LexEntry) -> Vec<Triple> {
        lex.order.iter().map(|&i| self.triples[i].clone()).collect()
    }

    /// Checks the structural invariants of the entry and one of its lexes.
    pub fn validate_lex(&self, lex: &LexEntry) -> Result<()> {
        let n = self.triples.len();
        let mut seen = vec![false; n];
        if lex.order.len() != n {
            return Err(Error::InvalidPartition(format!("order has {} of {n} triples", lex.order.len())));
        }
        for &i in &lex.order {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidPartition(format!("order {:?} is not a permutation", lex.order)));
            }
        }
        lex.breaks.validate(n)?;
        let template = crate::lexicalization::Template::parse_str(&lex.template)?;
        let slots = template.entity_slots().count();
        if slots != lex.references.len() {
            return Err(Error::Config(format!(
                "template has {slots} entity slots but {} references",
                lex.references.len()
            )));
        }
        let entities = entity_order(&self.ordered(lex));
        for (k, r) in template.entity_slots().zip(&lex.references) {
            match entities.get(k - 1) {
                Some(e) if *e == r.entity => {}
                _ => {
                    return Err(Error::Binding {
                        index: k,
                        available: entities.len(),
                    })
                }
            }
            if r.refex.trim().is_empty() {
                return Err(Error::Empty(format!("refex for {}", r.entity)));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.triples.is_empty() || self.triples.len() > 7 {
            return Err(Error::InvalidTriple(format!("{} triples in {}", self.triples.len(), self.eid)));
        }
        for t in &self.triples {
            t.validate()?;
        }
        if self.lexes.is_empty() {
            return Err(Error::Empty(format!("no verbalizations in {}", self.eid)));
        }
        self.lexes.iter().try_for_each(|l| self.validate_lex(l))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Xml,
    Jsonl,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xml" => Ok(Format::Xml),
            "jsonl" => Ok(Format::Jsonl),
            other => Err(Error::Config(format!("unknown corpus format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ImportStats {
    pub files: usize,
    pub entries: usize,
    pub lexes: usize,
    pub skipped_lexes: usize,
    pub skipped_entries: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub entries: Vec<Entry>,
}

impl Corpus {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &Entry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn train_domains(&self) -> BTreeSet<String> {
        self.split(Split::Train).map(|e| e.domain.clone()).collect()
    }

    pub fn unseen_domains(&self) -> BTreeSet<String> {
        let seen = self.train_domains();
        self.entries
            .iter()
            .filter(|e| !seen.contains(&e.domain))
            .map(|e| e.domain.clone())
            .collect()
    }

    pub fn triple_set(&self, entry: &Entry) -> TripleSet {
        self.triple_set_with(entry, &self.train_domains())
    }

    pub fn triple_set_with(&self, entry: &Entry, train_domains: &BTreeSet<String>) -> TripleSet {
        TripleSet {
            triples: entry.triples.clone(),
            domain: entry.domain.clone(),
            seen: train_domains.contains(&entry.domain),
        }
    }

    pub fn find(&self, eid: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.eid == eid)
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        Ok(Corpus {
            entries: read_records(path)?,
        })
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        write_records(path, &self.entries)
    }
}

fn corpus_files(dir: &Path, extension: &str) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = walkdir::WalkDir::new(dir)
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file() && e.path().extension().is_some_and(|x| x == extension))
        .map(|e| e.into_path())
        .collect();
    files.sort();
    Ok(files)
}

/// Loads every corpus file under `path` (recursively). Lexicalizations whose
/// annotations are missing or inconsistent are skipped and counted; entries
/// left without lexicalizations are skipped too.
pub fn import_webnlg(path: &Path, format: Format) -> Result<(Corpus, ImportStats)> {
    if !path.exists() {
        return Err(Error::NoCorpusFiles(path.to_owned()));
    }
    let files = if path.is_file() {
        vec![path.to_owned()]
    } else {
        corpus_files(path, if format == Format::Xml { "xml" } else { "jsonl" })?
    };
    if files.is_empty() {
        return Err(Error::NoCorpusFiles(path.to_owned()));
    }
    let mut stats = ImportStats {
        files: files.len(),
        ..ImportStats::default()
    };
    let mut entries = Vec::new();
    for f in &files {
        let raw = match format {
            Format::Xml => xml::read_file(f, &mut stats)?,
            Format::Jsonl => Corpus::read_jsonl(f)?.entries,
        };
        for mut e in raw {
            let before = e.lexes.len();
            let eid = e.eid.clone();
            let checked: Vec<LexEntry> = e
                .lexes
                .drain(..)
                .collect::<Vec<_>>()
                .into_iter()
                .filter(|l| {
                    let ok = Entry {
                        lexes: Vec::new(),
                        ..e.clone()
                    }
                    .validate_lex(l);
                    if let Err(err) = &ok {
                        warn!("{}: skipping lexicalization of {eid}: {err}", f.display());
                    }
                    ok.is_ok()
                })
                .collect();
            stats.skipped_lexes += before - checked.len();
            e.lexes = checked;
            if e.lexes.is_empty() || e.validate().is_err() {
                warn!("{}: skipping entry {eid} without usable verbalizations", f.display());
                stats.skipped_entries += 1;
                continue;
            }
            stats.lexes += e.lexes.len();
            entries.push(e);
        }
    }
    stats.entries = entries.len();
    Ok((Corpus { entries }, stats))
}

fn render_triple(t: &Triple, out: &mut Vec<String>) {
    out.push(TRIPLE_OPEN.to_owned());
    out.push(t.subject.clone());
    out.push(t.predicate.clone());
    out.push(t.object.clone());
    out.push(TRIPLE_CLOSE.to_owned());
}

/// Triples sorted by (predicate, subject, object) in byte order, rendered as
/// `<TRIPLE> s p o </TRIPLE>`.
pub fn canonical_order(triples: &[Triple]) -> Vec<Triple> {
    let mut sorted = triples.to_vec();
    sorted.sort_by(|a, b| a.canonical_key().cmp(&b.canonical_key()));
    sorted
}

pub fn canonical_linearize(triples: &[Triple]) -> Result<Vec<String>> {
    linearize_ordered(&canonical_order(triples))
}

pub fn linearize_ordered(triples: &[Triple]) -> Result<Vec<String>> {
    if triples.is_empty() {
        return Err(Error::Empty("triple list".into()));
    }
    let mut out = Vec::with_capacity(triples.len() * 5);
    for t in triples {
        render_triple(t, &mut out);
    }
    Ok(out)
}

pub fn linearize_structured(triples: &[Triple], partition: &Partition) -> Result<Vec<String>> {
    if triples.is_empty() {
        return Err(Error::Empty("triple list".into()));
    }
    partition.validate(triples.len())?;
    let mut out = Vec::with_capacity(triples.len() * 5 + partition.sentences() * 2);
    for s in &partition.0 {
        out.push(SNT_OPEN.to_owned());
        for &i in s {
            render_triple(&triples[i], &mut out);
        }
        out.push(SNT_CLOSE.to_owned());
    }
    Ok(out)
}

fn bad(message: String) -> Error {
    Error::InvalidTriple(message)
}

/// Inverse of [`linearize_ordered`].
pub fn delinearize<S: AsRef<str>>(tokens: &[S]) -> Result<Vec<Triple>> {
    let toks: Vec<&str> = tokens.iter().map(AsRef::as_ref).collect();
    if toks.is_empty() || toks.len() % 5 != 0 {
        return Err(bad(format!("{} tokens do not form whole triples", toks.len())));
    }
    toks.chunks(5)
        .map(|c| match c {
            [TRIPLE_OPEN, s, p, o, TRIPLE_CLOSE] => Triple::new(s, p, o),
            other => Err(bad(format!("malformed triple group {other:?}"))),
        })
        .collect()
}

/// Inverse of [`linearize_structured`].
pub fn delinearize_structured<S: AsRef<str>>(tokens: &[S]) -> Result<(Vec<Triple>, Partition)> {
    let toks: Vec<&str> = tokens.iter().map(AsRef::as_ref).collect();
    let mut triples = Vec::new();
    let mut sentences = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        if toks[i] != SNT_OPEN {
            return Err(bad(format!("expected {SNT_OPEN} at {i}")));
        }
        let close = toks[i..]
            .iter()
            .position(|t| *t == SNT_CLOSE)
            .map(|p| p + i)
            .ok_or_else(|| bad("unterminated sentence".into()))?;
        let inner = delinearize(&toks[i + 1..close])?;
        sentences.push((triples.len()..triples.len() + inner.len()).collect());
        triples.extend(inner);
        i = close + 1;
    }
    if triples.is_empty() {
        return Err(Error::Empty("structured sequence".into()));
    }
    Ok((triples, Partition(sentences)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triple_serializes_as_array() {
        let t = Triple::new("A", "p", "\"x_y\"").unwrap();
        assert_eq!(serde_json::to_string(&t).unwrap(), r#"["A","p","\"x_y\""]"#);
        assert!(serde_json::from_str::<Triple>(r#"["A","p q","o"]"#).is_err());
    }

    #[test]
    fn partition_validation() {
        assert!(Partition(vec![vec![0, 1], vec![2]]).validate(3).is_ok());
        assert!(Partition(vec![vec![0], vec![0, 1]]).validate(2).is_err());
        assert!(Partition(vec![vec![0], vec![2]]).validate(3).is_err());
        assert!(Partition(vec![vec![0, 1]]).validate(3).is_err());
        assert_eq!(Partition::from_sizes(&[2, 1]), Partition(vec![vec![0, 1], vec![2]]));
    }
}
