//! Baseline evaluations over extracted datasets and full pipeline runs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{
    delinearize, delinearize_structured, extract_reg_dataset, extract_task_dataset, predicates, Corpus, DatasetInstance,
    InstanceMeta, RegInstance, Split, Splits, Task, TaskDataset,
};
use crate::error::{Error, Result};
use crate::eval::{accuracy, bleu, corpus_bleu, Cell, EvalReport, TableRow};
use crate::lexicalization::{lexicalize_lookup, structured_key, template_store_train, LookupMode, TemplateStore};
use crate::ordering::{order_majority, order_majority_train, order_random};
use crate::pipeline::{instance_seed, run_split, PipelineConfig, PipelineModels, RunRecord};
use crate::realization::rules_extract;
use crate::reg::only_names;
use crate::structuring::{structure_majority, structure_majority_train, structure_random};
use crate::text::{tokenize, uncased_tokens};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Random,
    Majority,
}

fn seq(ds: &Splits<TaskDataset>, split: Split) -> Result<&[DatasetInstance]> {
    ds.get(split)
        .as_seq()
        .ok_or_else(|| Error::Config("expected a sequence dataset".into()))
}

fn golds(test: &[DatasetInstance]) -> (Vec<Vec<Vec<String>>>, Vec<InstanceMeta>) {
    (
        test.iter().map(|i| i.targets.clone()).collect(),
        test.iter().map(|i| i.meta.clone()).collect(),
    )
}

/// Accuracy of an ordering baseline on the test split.
pub fn ordering_accuracy(ds: &Splits<TaskDataset>, baseline: Baseline, seed: u64) -> Result<EvalReport> {
    let test = seq(ds, Split::Test)?;
    let model = match baseline {
        Baseline::Majority => Some(order_majority_train(seq(ds, Split::Train)?)?),
        Baseline::Random => None,
    };
    let mut preds = Vec::with_capacity(test.len());
    for (i, inst) in test.iter().enumerate() {
        let triples = delinearize(&inst.source)?;
        let ordered = match &model {
            Some(m) => order_majority(m, &triples),
            None => order_random(&triples, instance_seed(seed, i as u64)),
        };
        preds.push(predicates(&ordered));
    }
    let (g, meta) = golds(test);
    accuracy(&preds, &g, &meta)
}

/// Accuracy of a structuring baseline on the test split.
pub fn structuring_accuracy(ds: &Splits<TaskDataset>, baseline: Baseline, seed: u64) -> Result<EvalReport> {
    let test = seq(ds, Split::Test)?;
    let model = match baseline {
        Baseline::Majority => Some(structure_majority_train(seq(ds, Split::Train)?)?),
        Baseline::Random => None,
    };
    let mut preds = Vec::with_capacity(test.len());
    for (i, inst) in test.iter().enumerate() {
        let ordered = delinearize(&inst.source)?;
        let partition = match &model {
            Some(m) => structure_majority(m, &ordered),
            None => structure_random(ordered.len(), instance_seed(seed, i as u64)),
        };
        preds.push(structured_key(&ordered, &partition.0));
    }
    let (g, meta) = golds(test);
    accuracy(&preds, &g, &meta)
}

/// BLEU of retrieved templates against the gold templates of the test split.
pub fn lexicalization_bleu(ds: &Splits<TaskDataset>, mode: LookupMode, seed: u64) -> Result<EvalReport> {
    let store = template_store_train(seq(ds, Split::Train)?)?;
    lexicalization_bleu_with(&store, seq(ds, Split::Test)?, mode, seed)
}

pub fn lexicalization_bleu_with(
    store: &TemplateStore,
    test: &[DatasetInstance],
    mode: LookupMode,
    seed: u64,
) -> Result<EvalReport> {
    let mut hyps = Vec::with_capacity(test.len());
    for (i, inst) in test.iter().enumerate() {
        let (ordered, partition) = delinearize_structured(&inst.source)?;
        let l = lexicalize_lookup(&ordered, &partition, store, mode, instance_seed(seed, i as u64))?;
        hyps.push(l.template.uncased().to_tokens());
    }
    let (g, meta) = golds(test);
    bleu(&hyps, &g, &meta)
}

/// Accuracy of name-only references on the test split.
pub fn only_names_accuracy(test: &[RegInstance]) -> Result<EvalReport> {
    let preds: Vec<Vec<String>> = test.iter().map(|i| tokenize(&only_names(&i.entity))).collect();
    let g: Vec<Vec<Vec<String>>> = test.iter().map(|i| vec![i.refex.clone()]).collect();
    let meta: Vec<InstanceMeta> = test.iter().map(|i| i.meta.clone()).collect();
    accuracy(&preds, &g, &meta)
}

/// Tables and rules of the all-majority pipeline, trained on the train split.
pub fn train_majority_models(c: &Corpus) -> Result<PipelineModels> {
    let ordering = extract_task_dataset(c, Task::Ordering)?;
    let structuring = extract_task_dataset(c, Task::Structuring)?;
    let lex = extract_task_dataset(c, Task::Lexicalization)?;
    Ok(PipelineModels {
        order: order_majority_train(seq(&ordering, Split::Train)?)?,
        structure: structure_majority_train(seq(&structuring, Split::Train)?)?,
        templates: template_store_train(seq(&lex, Split::Train)?)?,
        rules: rules_extract(c).0,
        ..Default::default()
    })
}

type RunReferences = (Vec<Vec<String>>, Vec<Vec<Vec<String>>>, Vec<InstanceMeta>);

fn run_references(c: &Corpus, records: &[RunRecord]) -> Result<RunReferences> {
    let train_domains = c.train_domains();
    let by_eid: BTreeMap<&str, _> = c.entries.iter().map(|e| (e.eid.as_str(), e)).collect();
    let (mut hyps, mut refs, mut meta) = (Vec::new(), Vec::new(), Vec::new());
    for r in records {
        let entry = by_eid
            .get(r.eid.as_str())
            .ok_or_else(|| Error::Config(format!("run record {} has no corpus entry", r.eid)))?;
        if entry.lexes.is_empty() {
            continue;
        }
        hyps.push(uncased_tokens(&r.text));
        refs.push(entry.lexes.iter().map(|l| uncased_tokens(&l.text)).collect());
        meta.push(InstanceMeta {
            eid: entry.eid.clone(),
            domain: entry.domain.clone(),
            seen: train_domains.contains(&entry.domain),
            size: entry.size(),
        });
    }
    Ok((hyps, refs, meta))
}

/// BLEU of run texts against every verbalization of their entries.
pub fn run_bleu(c: &Corpus, records: &[RunRecord]) -> Result<EvalReport> {
    let (hyps, refs, meta) = run_references(c, records)?;
    bleu(&hyps, &refs, &meta)
}

/// Share of run texts equal (uncased, tokenized) to one of their references.
pub fn run_accuracy(c: &Corpus, records: &[RunRecord]) -> Result<EvalReport> {
    let (hyps, refs, meta) = run_references(c, records)?;
    accuracy(&hyps, &refs, &meta)
}

/// Single-number BLEU of a run, for quick checks.
pub fn run_bleu_all(c: &Corpus, records: &[RunRecord]) -> Result<f64> {
    let by_eid: BTreeMap<&str, _> = c.entries.iter().map(|e| (e.eid.as_str(), e)).collect();
    let mut hyps = Vec::new();
    let mut refs = Vec::new();
    for r in records {
        if let Some(e) = by_eid.get(r.eid.as_str()) {
            hyps.push(uncased_tokens(&r.text));
            refs.push(e.lexes.iter().map(|l| uncased_tokens(&l.text)).collect::<Vec<_>>());
        }
    }
    corpus_bleu(&hyps, &refs)
}

/// Results of the deterministic baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResults {
    pub ordering_random: Vec<EvalReport>,
    pub ordering_majority: EvalReport,
    pub structuring_random: Vec<EvalReport>,
    pub structuring_majority: EvalReport,
    pub lexicalization_random: Vec<EvalReport>,
    pub lexicalization_majority: EvalReport,
    pub reg_only_names: EvalReport,
    pub pipeline_majority: EvalReport,
}

/// Runs every baseline; random engines once per seed.
pub fn baselines(c: &Corpus, seeds: &[u64]) -> Result<BaselineResults> {
    let ordering = extract_task_dataset(c, Task::Ordering)?;
    let structuring = extract_task_dataset(c, Task::Structuring)?;
    let lex = extract_task_dataset(c, Task::Lexicalization)?;
    let reg = extract_reg_dataset(c)?;
    let models = train_majority_models(c)?;
    let records = run_split(c, Split::Test, &PipelineConfig::majority(), &models)?;
    let per_seed = |f: &dyn Fn(u64) -> Result<EvalReport>| seeds.iter().map(|&s| f(s)).collect::<Result<Vec<_>>>();
    Ok(BaselineResults {
        ordering_random: per_seed(&|s| ordering_accuracy(&ordering, Baseline::Random, s))?,
        ordering_majority: ordering_accuracy(&ordering, Baseline::Majority, 0)?,
        structuring_random: per_seed(&|s| structuring_accuracy(&structuring, Baseline::Random, s))?,
        structuring_majority: structuring_accuracy(&structuring, Baseline::Majority, 0)?,
        lexicalization_random: per_seed(&|s| lexicalization_bleu_with(&models.templates, seq(&lex, Split::Test)?, LookupMode::Random, s))?,
        lexicalization_majority: lexicalization_bleu_with(&models.templates, seq(&lex, Split::Test)?, LookupMode::Majority, 0)?,
        reg_only_names: only_names_accuracy(&reg.test)?,
        pipeline_majority: run_bleu(c, &records)?,
    })
}

impl BaselineResults {
    /// Accuracy and BLEU rows, laid out as model × (all, seen, unseen).
    pub fn render(&self) -> String {
        let row = |label: &str, cells: [Cell; 3]| TableRow {
            label: label.to_owned(),
            cells: cells.to_vec(),
        };
        let header = ["Model", "All", "Seen", "Unseen"];
        let mut out = crate::eval::render_table(
            "Discourse ordering (accuracy)",
            &header,
            &[
                row("Random", Cell::across(&self.ordering_random)),
                row("Majority", Cell::of(&self.ordering_majority)),
            ],
            2,
        );
        out.push('\n');
        out += &crate::eval::render_table(
            "Text structuring (accuracy)",
            &header,
            &[
                row("Random", Cell::across(&self.structuring_random)),
                row("Majority", Cell::of(&self.structuring_majority)),
            ],
            2,
        );
        out.push('\n');
        out += &crate::eval::render_table(
            "Lexicalization (BLEU)",
            &header,
            &[
                row("Random", Cell::across(&self.lexicalization_random)),
                row("Majority", Cell::of(&self.lexicalization_majority)),
            ],
            2,
        );
        out.push('\n');
        out += &crate::eval::render_table(
            "Referring expressions (accuracy)",
            &header,
            &[row("OnlyNames", Cell::of(&self.reg_only_names))],
            2,
        );
        out.push('\n');
        let mut bleu_row = row("Majority pipeline", Cell::of(&self.pipeline_majority)).cells;
        bleu_row.push(Cell::Score(None));
        out += &crate::eval::render_table(
            "Pipeline (BLEU)",
            &["Model", "All", "Seen", "Unseen", "METEOR"],
            &[TableRow {
                label: "Majority".into(),
                cells: bleu_row,
            }],
            2,
        );
        out
    }
}
