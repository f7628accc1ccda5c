//! Template lexicalization: retrieval over sentence windows, a neural
//! generator and entity binding.

pub mod template;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use template::{BoundTemplate, Template, Token, VpTag};

use crate::corpus::{
    delinearize_structured, entity_order, linearize_structured, DatasetInstance, Partition, Triple,
    SNT_CLOSE, SNT_OPEN,
};
use crate::engine::NeuralEngine;
use crate::error::{Error, Result};
use crate::records::{load_table, save_table, Tally};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LookupMode {
    Random,
    Majority,
}

/// Sentence-partitioned predicate key: `<SNT> p1 p2 </SNT> <SNT> p3 </SNT>`.
pub fn structured_key(ordered: &[Triple], sentences: &[Vec<usize>]) -> Vec<String> {
    let mut key = Vec::new();
    for s in sentences {
        key.push(SNT_OPEN.to_owned());
        key.extend(s.iter().map(|&i| ordered[i].predicate.clone()));
        key.push(SNT_CLOSE.to_owned());
    }
    key
}

/// Gold templates counted per structured key.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TemplateStore {
    pub table: BTreeMap<Vec<String>, Tally<Template>>,
    /// Gold templates rejected by the parser during training.
    pub skipped: usize,
}

impl TemplateStore {
    /// Highest-count template; ties go to the smallest serialization.
    pub fn majority(&self, key: &[String]) -> Option<&Template> {
        self.table.get(key)?.best_by(|a, b| a.serialize().cmp(&b.serialize()))
    }

    /// A uniform draw over the distinct templates of `key`.
    pub fn random(&self, key: &[String], rng: &mut ChaCha8Rng) -> Option<&Template> {
        let t = self.table.get(key)?;
        if t.entries.is_empty() {
            return None;
        }
        Some(&t.entries[rng.gen_range(0..t.entries.len())].0)
    }

    pub fn contains(&self, key: &[String]) -> bool {
        self.table.get(key).is_some_and(|t| !t.entries.is_empty())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_table(path, &self.table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(TemplateStore {
            table: load_table(path)?,
            skipped: 0,
        })
    }
}

pub fn template_store_train(ds: &[DatasetInstance]) -> Result<TemplateStore> {
    let mut store = TemplateStore::default();
    for inst in ds {
        let (ordered, partition) = delinearize_structured(&inst.source)?;
        let key = structured_key(&ordered, &partition.0);
        for t in &inst.targets {
            match Template::parse(t) {
                Ok(t) => store.table.entry(key.clone()).or_default().add(t),
                Err(e) => {
                    warn!("skipping gold template of {}: {e}", inst.meta.eid);
                    store.skipped += 1;
                }
            }
        }
    }
    Ok(store)
}

/// Splits a camelCase or snake_case predicate into lowercase words.
pub fn predicate_words(predicate: &str) -> Vec<String> {
    let mut words: Vec<String> = Vec::new();
    let mut current = String::new();
    let mut prev_lower = false;
    for c in predicate.chars() {
        if c == '_' || c == ' ' {
            if !current.is_empty() {
                words.push(std::mem::take(&mut current));
            }
            prev_lower = false;
            continue;
        }
        if c.is_uppercase() && prev_lower && !current.is_empty() {
            words.push(std::mem::take(&mut current));
        }
        prev_lower = c.is_lowercase() || c.is_ascii_digit();
        current.extend(c.to_lowercase());
    }
    if !current.is_empty() {
        words.push(current);
    }
    words
}

/// Renumbers window-local entity tags to their rank among `global`.
fn renumber(t: &Template, window: &[Triple], global: &[String]) -> Result<Vec<Token<usize>>> {
    let local = entity_order(window);
    t.tokens
        .iter()
        .cloned()
        .map(|tok| {
            tok.map_entity(|k| {
                let e = local.get(k - 1).ok_or(Error::Binding {
                    index: k,
                    available: local.len(),
                })?;
                Ok(global.iter().position(|g| g == e).map_or(k, |p| p + 1))
            })
        })
        .collect()
}

fn fallback_clause(t: &Triple, global: &[String]) -> Vec<Token<usize>> {
    let rank = |e: &str| global.iter().position(|g| g == e).map_or(1, |p| p + 1);
    let mut out = vec![Token::Entity(rank(&t.subject))];
    out.extend(predicate_words(&t.predicate).into_iter().map(Token::Word));
    out.push(Token::Entity(rank(&t.object)));
    out.push(Token::Word(".".into()));
    out
}

/// One step of the window search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: usize,
    pub end: usize,
    pub matched: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicalized {
    pub template: Template,
    /// Sentences verbalized by the synthetic fallback clause.
    pub fallback_sentences: Vec<usize>,
    /// Every `[start, end)` window probed, in order.
    pub windows: Vec<Window>,
}

/// Retrieval over sentence windows: the longest stored window starting at
/// the current sentence contributes its template; a sentence with no stored
/// window gets one fallback clause per triple.
pub fn lexicalize_lookup(
    ordered: &[Triple],
    partition: &Partition,
    store: &TemplateStore,
    mode: LookupMode,
    seed: u64,
) -> Result<Lexicalized> {
    if ordered.is_empty() {
        return Err(Error::Empty("triple list".into()));
    }
    partition.validate(ordered.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let global = entity_order(ordered);
    let sentences = &partition.0;
    let n = sentences.len();
    let (mut start, mut end) = (0, n);
    let mut tokens = Vec::new();
    let mut fallback_sentences = Vec::new();
    let mut windows = Vec::new();
    while start < n {
        let snts = &sentences[start..end];
        let key = structured_key(ordered, snts);
        let found = match mode {
            LookupMode::Majority => store.majority(&key),
            LookupMode::Random => store.random(&key, &mut rng),
        };
        let window_triples: Vec<Triple> = snts.iter().flatten().map(|&i| ordered[i].clone()).collect();
        let renumbered = found.map(|t| renumber(t, &window_triples, &global));
        windows.push(Window {
            start,
            end,
            matched: matches!(renumbered, Some(Ok(_))),
        });
        match renumbered {
            Some(Ok(toks)) => {
                tokens.extend(toks);
                start = end;
                end = n;
            }
            _ => {
                end -= 1;
                if start == end {
                    debug!("no stored template for sentence {start}; using fallback clauses");
                    for &i in &sentences[start] {
                        tokens.extend(fallback_clause(&ordered[i], &global));
                    }
                    fallback_sentences.push(start);
                    start += 1;
                    end = n;
                }
            }
        }
    }
    Ok(Lexicalized {
        template: Template { tokens },
        fallback_sentences,
        windows,
    })
}

/// True when the tags of `t` are exactly `ENTITY-1..=ENTITY-n` for the `n`
/// entities of `ordered`.
pub fn covers_entities(t: &Template, ordered: &[Triple]) -> bool {
    let n = entity_order(ordered).len();
    t.entity_slots().collect::<BTreeSet<_>>() == (1..=n).collect()
}

/// Decoded template, or the majority lookup (flag set) when the decode does
/// not parse or does not mention every entity.
pub fn lexicalize_neural(
    engine: &NeuralEngine,
    store: &TemplateStore,
    ordered: &[Triple],
    partition: &Partition,
) -> Result<(Template, bool)> {
    let decoded = engine.decode(&linearize_structured(ordered, partition)?)?;
    match Template::parse(&decoded) {
        Ok(t) if covers_entities(&t, ordered) => return Ok((t, false)),
        Ok(_) => debug!("decoded template misses entity slots; using majority lookup"),
        Err(e) => debug!("decoded template does not parse ({e}); using majority lookup"),
    }
    let fallback = lexicalize_lookup(ordered, partition, store, LookupMode::Majority, 0)?;
    Ok((fallback.template, true))
}

/// Replaces `ENTITY-k` by the k-th distinct entity of `ordered`.
pub fn bind_entities(t: &Template, ordered: &[Triple]) -> Result<BoundTemplate> {
    let entities = entity_order(ordered);
    t.tokens
        .iter()
        .cloned()
        .map(|tok| {
            tok.map_entity(|k| {
                entities.get(k - 1).cloned().ok_or(Error::Binding {
                    index: k,
                    available: entities.len(),
                })
            })
        })
        .collect()
}
