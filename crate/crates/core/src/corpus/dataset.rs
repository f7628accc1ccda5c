//! Per-stage dataset extraction.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    canonical_linearize, linearize_ordered, linearize_structured, predicates, Corpus, Entry, LexEntry, Split,
    SNT_CLOSE, SNT_OPEN,
};
use crate::error::{Error, Result};
use crate::lexicalization::template::{normalize_template_tokens, Template, Token};
use crate::text::{lowercase_all, tokenize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Ordering,
    Structuring,
    Lexicalization,
    Reg,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ordering" => Ok(Task::Ordering),
            "structuring" => Ok(Task::Structuring),
            "lexicalization" | "lex" => Ok(Task::Lexicalization),
            "reg" => Ok(Task::Reg),
            other => Err(Error::UnknownTask(other.to_owned())),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Ordering => "ordering",
            Task::Structuring => "structuring",
            Task::Lexicalization => "lexicalization",
            Task::Reg => "reg",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub eid: String,
    pub domain: String,
    pub seen: bool,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetInstance {
    pub source: Vec<String>,
    pub targets: Vec<Vec<String>>,
    pub meta: InstanceMeta,
}

impl DatasetInstance {
    /// Number of distinct targets.
    pub fn distinct_targets(&self) -> usize {
        self.targets.iter().collect::<BTreeSet<_>>().len()
    }
}

/// One referring expression with its delexicalized contexts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegInstance {
    pub entity: String,
    /// Cased tokens.
    pub refex: Vec<String>,
    pub pre_context: Vec<String>,
    pub post_context: Vec<String>,
    pub meta: InstanceMeta,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TaskDataset {
    Seq(Vec<DatasetInstance>),
    Reg(Vec<RegInstance>),
}

impl TaskDataset {
    /// Number of distinct inputs (triple sets for ordering, reference slots
    /// for REG).
    pub fn inputs(&self) -> usize {
        match self {
            TaskDataset::Seq(v) => v.len(),
            TaskDataset::Reg(v) => v.len(),
        }
    }

    /// Number of distinct (input, target) pairs.
    pub fn instances(&self) -> usize {
        match self {
            TaskDataset::Seq(v) => v.iter().map(DatasetInstance::distinct_targets).sum(),
            TaskDataset::Reg(v) => v.len(),
        }
    }

    pub fn as_seq(&self) -> Option<&[DatasetInstance]> {
        match self {
            TaskDataset::Seq(v) => Some(v),
            TaskDataset::Reg(_) => None,
        }
    }

    pub fn as_reg(&self) -> Option<&[RegInstance]> {
        match self {
            TaskDataset::Reg(v) => Some(v),
            TaskDataset::Seq(_) => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits<T> {
    pub train: T,
    pub dev: T,
    pub test: T,
}

impl<T> Splits<T> {
    pub fn get(&self, split: Split) -> &T {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    fn get_mut(&mut self, split: Split) -> &mut T {
        match split {
            Split::Train => &mut self.train,
            Split::Dev => &mut self.dev,
            Split::Test => &mut self.test,
        }
    }

    pub fn map<U>(self, mut f: impl FnMut(T) -> U) -> Splits<U> {
        Splits {
            train: f(self.train),
            dev: f(self.dev),
            test: f(self.test),
        }
    }
}

fn meta(entry: &Entry, train_domains: &BTreeSet<String>) -> InstanceMeta {
    InstanceMeta {
        eid: entry.eid.clone(),
        domain: entry.domain.clone(),
        seen: train_domains.contains(&entry.domain),
        size: entry.size(),
    }
}

/// `<SNT> p1 p2 </SNT> <SNT> p3 </SNT>` for an ordered, partitioned set.
pub fn structured_predicates(entry: &Entry, lex: &LexEntry) -> Vec<String> {
    let preds = predicates(&entry.ordered(lex));
    let mut out = Vec::new();
    for s in &lex.breaks.0 {
        out.push(SNT_OPEN.to_owned());
        out.extend(s.iter().map(|&i| preds[i].clone()));
        out.push(SNT_CLOSE.to_owned());
    }
    out
}

fn push_target(
    out: &mut Vec<DatasetInstance>,
    start: usize,
    source: Vec<String>,
    target: Vec<String>,
    m: InstanceMeta,
    dedup: bool,
) {
    if let Some(inst) = out[start..].iter_mut().find(|i| i.source == source) {
        if !(dedup && inst.targets.contains(&target)) {
            inst.targets.push(target);
        }
        return;
    }
    out.push(DatasetInstance {
        source,
        targets: vec![target],
        meta: m,
    });
}

fn extract_seq(c: &Corpus, task: Task) -> Result<Splits<Vec<DatasetInstance>>> {
    let train_domains = c.train_domains();
    let mut splits: Splits<Vec<DatasetInstance>> = Splits::default();
    for entry in &c.entries {
        let dedup = entry.split != Split::Train;
        let out = splits.get_mut(entry.split);
        let start = out.len();
        for lex in &entry.lexes {
            let ordered = entry.ordered(lex);
            let (source, target) = match task {
                Task::Ordering if entry.size() > 1 => (canonical_linearize(&entry.triples)?, predicates(&ordered)),
                Task::Structuring if entry.size() > 1 => {
                    (linearize_ordered(&ordered)?, structured_predicates(entry, lex))
                }
                Task::Lexicalization => (
                    linearize_structured(&ordered, &lex.breaks)?,
                    normalize_template_tokens(&lex.template),
                ),
                _ => continue,
            };
            push_target(out, start, source, target, meta(entry, &train_domains), dedup);
        }
    }
    Ok(splits)
}

/// Source and text pairs for the end-to-end model: the canonical
/// linearization with raw entity names, and each verbalization tokenized.
pub fn extract_e2e_dataset(c: &Corpus) -> Result<Splits<Vec<DatasetInstance>>> {
    let train_domains = c.train_domains();
    let mut splits: Splits<Vec<DatasetInstance>> = Splits::default();
    for entry in &c.entries {
        let dedup = entry.split != Split::Train;
        let out = splits.get_mut(entry.split);
        let start = out.len();
        let source = canonical_linearize(&entry.triples)?;
        for lex in &entry.lexes {
            push_target(out, start, source.clone(), tokenize(&lex.text), meta(entry, &train_domains), dedup);
        }
    }
    Ok(splits)
}

/// Pre- and post-contexts of segment `slot`: every other segment flattened
/// and lowercased.
pub fn reg_contexts(segments: &[Vec<String>], slot: usize) -> (Vec<String>, Vec<String>) {
    let flat = |s: &[Vec<String>]| lowercase_all(&s.iter().flatten().collect::<Vec<_>>());
    (flat(&segments[..slot]), flat(&segments[slot + 1..]))
}

/// REG instances of one verbalization. Earlier slots show their gold
/// references, later slots their entity identifiers.
pub fn lex_reg_instances(entry: &Entry, lex: &LexEntry, m: &InstanceMeta) -> Result<Vec<RegInstance>> {
    let template = Template::parse_str(&lex.template)?;
    let mut segments: Vec<Vec<String>> = Vec::with_capacity(template.len());
    let mut slot_positions = Vec::new();
    let mut refs = lex.references.iter();
    for tok in &template.tokens {
        match tok {
            Token::Entity(_) => {
                let r = refs.next().ok_or_else(|| Error::Empty(format!("references of {}", entry.eid)))?;
                slot_positions.push(segments.len());
                segments.push(vec![r.entity.clone()]);
            }
            other => segments.push(vec![match other.as_word() {
                Some(w) => w.to_lowercase(),
                None => other.to_string(),
            }]),
        }
    }
    let mut out = Vec::with_capacity(slot_positions.len());
    for (&pos, r) in slot_positions.iter().zip(&lex.references) {
        let (pre_context, post_context) = reg_contexts(&segments, pos);
        out.push(RegInstance {
            entity: r.entity.clone(),
            refex: r.refex.split_whitespace().map(str::to_owned).collect(),
            pre_context,
            post_context,
            meta: m.clone(),
        });
        segments[pos] = out.last().map(|i| i.refex.clone()).unwrap_or_default();
    }
    Ok(out)
}

pub fn extract_reg_dataset(c: &Corpus) -> Result<Splits<Vec<RegInstance>>> {
    let train_domains = c.train_domains();
    let mut splits: Splits<Vec<RegInstance>> = Splits::default();
    for entry in &c.entries {
        let m = meta(entry, &train_domains);
        for lex in &entry.lexes {
            splits.get_mut(entry.split).extend(lex_reg_instances(entry, lex, &m)?);
        }
    }
    Ok(splits)
}

/// Ordering and structuring skip single-triple sets, where the task is
/// trivial. Training targets keep one entry per verbalization; development
/// and test targets are deduplicated.
pub fn extract_task_dataset(c: &Corpus, task: Task) -> Result<Splits<TaskDataset>> {
    Ok(match task {
        Task::Reg => extract_reg_dataset(c)?.map(TaskDataset::Reg),
        _ => extract_seq(c, task)?.map(TaskDataset::Seq),
    })
}
