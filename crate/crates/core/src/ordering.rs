//! Discourse ordering: the sequence in which input triples are verbalized.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{canonical_linearize, canonical_order, delinearize, predicates, DatasetInstance, Triple};
use crate::engine::NeuralEngine;
use crate::error::Result;
use crate::records::{load_table, save_table, Tally};

/// Sorted predicate list of a triple set.
pub fn predicate_multiset(triples: &[Triple]) -> Vec<String> {
    let mut p = predicates(triples);
    p.sort();
    p
}

/// Gold predicate orders counted per predicate multiset.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OrderModel {
    pub table: BTreeMap<Vec<String>, Tally<Vec<String>>>,
}

impl OrderModel {
    /// Highest-count order for `key`; ties go to the lexicographically
    /// smallest space-joined order.
    pub fn majority(&self, key: &[String]) -> Option<&Vec<String>> {
        self.table.get(key)?.best_by(|a, b| a.join(" ").cmp(&b.join(" ")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_table(path, &self.table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(OrderModel {
            table: load_table(path)?,
        })
    }
}

pub fn order_random(triples: &[Triple], seed: u64) -> Vec<Triple> {
    let mut out = triples.to_vec();
    out.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    out
}

pub fn order_majority_train(ds: &[DatasetInstance]) -> Result<OrderModel> {
    let mut m = OrderModel::default();
    for inst in ds {
        let key = predicate_multiset(&delinearize(&inst.source)?);
        let tally = m.table.entry(key).or_default();
        for t in &inst.targets {
            tally.add(t.clone());
        }
    }
    Ok(m)
}

/// Rearranges `triples` to follow a predicate sequence, taking the first
/// remaining triple for repeated predicates.
pub fn arrange_by_predicates(triples: &[Triple], order: &[String]) -> Vec<Triple> {
    let mut pool: Vec<Option<&Triple>> = triples.iter().map(Some).collect();
    let mut out = Vec::with_capacity(triples.len());
    for p in order {
        if let Some(slot) = pool.iter_mut().find(|t| t.is_some_and(|t| t.predicate == *p)) {
            out.extend(slot.take().cloned());
        }
    }
    out.extend(pool.into_iter().flatten().cloned());
    out
}

pub fn order_majority(m: &OrderModel, triples: &[Triple]) -> Vec<Triple> {
    match m.majority(&predicate_multiset(triples)) {
        Some(order) => arrange_by_predicates(triples, order),
        None => triples.to_vec(),
    }
}

/// Realizes a predicted predicate sequence over the input. Repeated
/// predicates take a uniformly drawn remaining match, unknown predicates are
/// skipped and unconsumed triples follow in canonical order. The flag is
/// true when the prediction needed repair.
pub fn realize_predicted_order(triples: &[Triple], predicted: &[String], seed: u64) -> (Vec<Triple>, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut remaining: Vec<Triple> = triples.to_vec();
    let mut out = Vec::with_capacity(triples.len());
    let mut repaired = false;
    for p in predicted {
        let matches: Vec<usize> = (0..remaining.len()).filter(|&i| remaining[i].predicate == *p).collect();
        if matches.is_empty() {
            repaired = true;
            continue;
        }
        let pick = matches[rng.gen_range(0..matches.len())];
        out.push(remaining.remove(pick));
    }
    if !remaining.is_empty() {
        repaired = true;
        out.extend(canonical_order(&remaining));
    }
    (out, repaired)
}

pub fn order_neural(engine: &NeuralEngine, triples: &[Triple], seed: u64) -> Result<(Vec<Triple>, bool)> {
    let predicted = engine.decode(&canonical_linearize(triples)?)?;
    Ok(realize_predicted_order(triples, &predicted, seed))
}
