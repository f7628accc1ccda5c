//! Text structuring: grouping ordered triples into sentences.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{delinearize, linearize_ordered, predicates, DatasetInstance, Partition, Triple, SNT_CLOSE, SNT_OPEN};
use crate::engine::NeuralEngine;
use crate::error::{Error, Result};
use crate::records::{load_table, save_table, Tally};

/// Splits `<SNT> a b </SNT> <SNT> c </SNT>` into its predicates and sentence
/// partition. Returns `None` unless the bracketing is well formed with
/// non-empty sentences.
pub fn parse_structured<S: AsRef<str>>(tokens: &[S]) -> Option<(Vec<String>, Partition)> {
    let mut preds = Vec::new();
    let mut sentences = Vec::new();
    let mut current: Option<Vec<usize>> = None;
    for t in tokens.iter().map(AsRef::as_ref) {
        match (t, &mut current) {
            (SNT_OPEN, None) => current = Some(Vec::new()),
            (SNT_CLOSE, Some(s)) if !s.is_empty() => sentences.push(current.take()?),
            (SNT_OPEN | SNT_CLOSE, _) => return None,
            (p, Some(s)) => {
                s.push(preds.len());
                preds.push(p.to_owned());
            }
            (_, None) => return None,
        }
    }
    if current.is_some() || sentences.is_empty() {
        return None;
    }
    Some((preds, Partition(sentences)))
}

fn prefer(a: &Partition, b: &Partition) -> std::cmp::Ordering {
    a.sentences().cmp(&b.sentences()).then_with(|| a.cmp(b))
}

/// Sentence partitions counted per ordered predicate sequence.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StructModel {
    pub table: BTreeMap<Vec<String>, Tally<Partition>>,
    sub_keys: BTreeMap<Vec<String>, Tally<Partition>>,
}

impl StructModel {
    pub fn from_table(table: BTreeMap<Vec<String>, Tally<Partition>>) -> Self {
        let mut sub_keys: BTreeMap<Vec<String>, Tally<Partition>> = BTreeMap::new();
        for (key, tally) in &table {
            let Some(best) = tally.best_by(prefer) else { continue };
            let count = tally.entries.iter().find(|(p, _)| p == best).map_or(0, |e| e.1);
            for i in 0..best.sentences() {
                for j in i..best.sentences() {
                    let start = best.0[i][0];
                    let end = *best.0[j].last().unwrap_or(&start) + 1;
                    let sub = Partition(best.0[i..=j].iter().map(|s| s.iter().map(|x| x - start).collect()).collect());
                    sub_keys.entry(key[start..end].to_vec()).or_default().add_n(sub, count);
                }
            }
        }
        StructModel { table, sub_keys }
    }

    /// Highest-count partition of a stored key; ties go to fewer sentences,
    /// then the smaller partition.
    pub fn majority(&self, key: &[String]) -> Option<&Partition> {
        self.table.get(key)?.best_by(prefer)
    }

    fn lookup_prefix(&self, key: &[String]) -> Option<&Partition> {
        self.majority(key).or_else(|| self.sub_keys.get(key)?.best_by(prefer))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_table(path, &self.table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::from_table(load_table(path)?))
    }
}

/// Draws one of the `2^(n-1)` contiguous partitions uniformly.
pub fn structure_random(n: usize, seed: u64) -> Partition {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sentences: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        if i == 0 || rng.gen_bool(0.5) {
            sentences.push(vec![i]);
        } else if let Some(s) = sentences.last_mut() {
            s.push(i);
        }
    }
    Partition(sentences)
}

pub fn structure_majority_train(ds: &[DatasetInstance]) -> Result<StructModel> {
    let mut table: BTreeMap<Vec<String>, Tally<Partition>> = BTreeMap::new();
    for inst in ds {
        let key = predicates(&delinearize(&inst.source)?);
        let tally = table.entry(key.clone()).or_default();
        for t in &inst.targets {
            match parse_structured(t) {
                Some((p, partition)) if p == key => tally.add(partition),
                _ => return Err(Error::InvalidPartition(format!("malformed structuring target {t:?}"))),
            }
        }
    }
    Ok(StructModel::from_table(table))
}

/// Stored partition for a seen sequence; otherwise a greedy cover by the
/// longest stored prefixes.
pub fn structure_majority(m: &StructModel, ordered: &[Triple]) -> Partition {
    let key = predicates(ordered);
    if let Some(p) = m.majority(&key) {
        return p.clone();
    }
    let mut sentences = Vec::new();
    let mut offset = 0;
    while offset < key.len() {
        let found = (offset + 1..=key.len())
            .rev()
            .find_map(|end| m.lookup_prefix(&key[offset..end]).map(|p| (end, p)));
        match found {
            Some((end, p)) => {
                sentences.extend(p.shifted(offset).0);
                offset = end;
            }
            None => {
                sentences.push(vec![offset]);
                offset += 1;
            }
        }
    }
    Partition(sentences)
}

/// Decoded partition, or one sentence per triple (flag set) when the decode
/// does not reproduce the input predicates in well-formed brackets.
pub fn structure_neural(engine: &NeuralEngine, ordered: &[Triple]) -> Result<(Partition, bool)> {
    let decoded = engine.decode(&linearize_ordered(ordered)?)?;
    Ok(match parse_structured(&decoded) {
        Some((p, partition)) if p == predicates(ordered) => (partition, false),
        _ => (Partition::singletons(ordered.len()), true),
    })
}
