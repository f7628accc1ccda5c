//! Line-delimited JSON persistence shared by the majority tables.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn write_records<'a, T, I>(path: &Path, records: I) -> Result<()>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Candidate outputs for one key with their training counts, in first-seen
/// order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally<V> {
    pub entries: Vec<(V, usize)>,
}

impl<V> Default for Tally<V> {
    fn default() -> Self {
        Tally { entries: Vec::new() }
    }
}

impl<V: PartialEq> Tally<V> {
    pub fn add(&mut self, v: V) {
        self.add_n(v, 1);
    }

    pub fn add_n(&mut self, v: V, n: usize) {
        if n == 0 {
            return;
        }
        match self.entries.iter_mut().find(|(x, _)| *x == v) {
            Some((_, c)) => *c += n,
            None => self.entries.push((v, n)),
        }
    }

    /// Highest count; ties resolved by `tie`, which orders preferred values
    /// first.
    pub fn best_by(&self, mut tie: impl FnMut(&V, &V) -> std::cmp::Ordering) -> Option<&V> {
        self.entries
            .iter()
            .min_by(|a, b| b.1.cmp(&a.1).then_with(|| tie(&a.0, &b.0)))
            .map(|(v, _)| v)
    }

    pub fn distinct(&self) -> impl Iterator<Item = &V> {
        self.entries.iter().map(|(v, _)| v)
    }

    pub fn total(&self) -> usize {
        self.entries.iter().map(|(_, c)| c).sum()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Record<K, V> {
    key: K,
    values: Vec<(V, usize)>,
}

pub fn save_table<K, V>(path: &Path, table: &BTreeMap<K, Tally<V>>) -> Result<()>
where
    K: Serialize + Clone,
    V: Serialize + Clone,
{
    let records: Vec<Record<K, V>> = table
        .iter()
        .map(|(k, t)| Record {
            key: k.clone(),
            values: t.entries.clone(),
        })
        .collect();
    write_records(path, &records)
}

pub fn load_table<K, V>(path: &Path) -> Result<BTreeMap<K, Tally<V>>>
where
    K: DeserializeOwned + Ord,
    V: DeserializeOwned,
{
    Ok(read_records::<Record<K, V>>(path)?
        .into_iter()
        .map(|r| (r.key, Tally { entries: r.values }))
        .collect())
}
