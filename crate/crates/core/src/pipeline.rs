//! The five-stage generator, its oracle mode and the end-to-end mode.

use std::collections::BTreeSet;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::corpus::{canonical_linearize, entity_order, Corpus, Entry, LexEntry, Partition, Split, Triple, TripleSet};
use crate::engine::NeuralEngine;
use crate::error::{Error, Result};
use crate::lexicalization::{
    bind_entities, lexicalize_lookup, lexicalize_neural, BoundTemplate, LookupMode, Template, TemplateStore, Token,
    Window,
};
use crate::ordering::{order_majority, order_neural, order_random, predicate_multiset, OrderModel};
use crate::realization::{realize, RuleTable};
use crate::reg::{reg_resolve, RegModel, RegPolicy, SlotTrace};
use crate::structuring::{structure_majority, structure_neural, structure_random, StructModel};
use crate::text::{detokenize, tokenize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageEngine {
    Random,
    Majority,
    Neural,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegEngine {
    #[serde(alias = "only_names")]
    OnlyNames,
    Neural,
}

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ordering,
    Structuring,
    Lexicalization,
    Reg,
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ordering" => Ok(Stage::Ordering),
            "structuring" => Ok(Stage::Structuring),
            "lexicalization" | "lex" => Ok(Stage::Lexicalization),
            "reg" => Ok(Stage::Reg),
            other => Err(Error::UnknownTask(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub ordering: StageEngine,
    pub structuring: StageEngine,
    pub lexicalization: StageEngine,
    pub reg: RegEngine,
    pub seed: u64,
    /// Gold values replace every stage up to and including this one.
    #[serde(default)]
    pub oracle_upto: Option<Stage>,
}

impl PipelineConfig {
    pub fn majority() -> Self {
        PipelineConfig {
            ordering: StageEngine::Majority,
            structuring: StageEngine::Majority,
            lexicalization: StageEngine::Majority,
            reg: RegEngine::OnlyNames,
            seed: 0,
            oracle_upto: None,
        }
    }

    pub fn oracle() -> Self {
        PipelineConfig {
            oracle_upto: Some(Stage::Reg),
            ..Self::majority()
        }
    }

    fn is_oracle(&self, stage: Stage) -> bool {
        self.oracle_upto.is_some_and(|s| stage <= s)
    }
}

/// Trained tables and networks available to a run. Tables default to empty.
#[derive(Debug, Default)]
pub struct PipelineModels {
    pub order: OrderModel,
    pub structure: StructModel,
    pub templates: TemplateStore,
    pub rules: RuleTable,
    pub order_net: Option<NeuralEngine>,
    pub structure_net: Option<NeuralEngine>,
    pub lex_net: Option<NeuralEngine>,
    pub reg: Option<RegModel>,
    pub seen_entities: BTreeSet<String>,
}

impl PipelineModels {
    pub fn check(&self, cfg: &PipelineConfig) -> Result<()> {
        let need = |used: bool, present: bool, what: &str| {
            if used && !present {
                Err(Error::MissingModel(what.to_owned()))
            } else {
                Ok(())
            }
        };
        need(cfg.ordering == StageEngine::Neural, self.order_net.is_some(), "neural ordering")?;
        need(cfg.structuring == StageEngine::Neural, self.structure_net.is_some(), "neural structuring")?;
        need(cfg.lexicalization == StageEngine::Neural, self.lex_net.is_some(), "neural lexicalization")?;
        need(cfg.reg == RegEngine::Neural, self.reg.is_some(), "neural reg")
    }
}

/// Gold intermediate values of one verbalization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gold {
    pub ordered: Vec<Triple>,
    pub partition: Partition,
    pub template: Template,
    pub refexes: Vec<String>,
}

impl Gold {
    pub fn from_lex(entry: &Entry, lex: &LexEntry) -> Result<Self> {
        Ok(Gold {
            ordered: entry.ordered(lex),
            partition: lex.breaks.clone(),
            template: Template::parse_str(&lex.template)?,
            refexes: lex.references.iter().map(|r| r.refex.clone()).collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fallbacks {
    pub ordering: bool,
    pub structuring: bool,
    pub lexicalization: bool,
    pub binding: bool,
    pub reg: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineTrace {
    pub input: Vec<Triple>,
    pub ordered: Vec<Triple>,
    pub partition: Partition,
    pub template: Template,
    pub windows: Vec<Window>,
    pub referenced: Vec<String>,
    pub slots: Vec<SlotTrace>,
    pub text: String,
    pub fallbacks: Fallbacks,
}

/// Mixes a run seed with an instance index.
pub fn instance_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn order_stage(ts: &TripleSet, cfg: &PipelineConfig, m: &PipelineModels) -> (Vec<Triple>, bool) {
    let triples = &ts.triples;
    match cfg.ordering {
        StageEngine::Random => (order_random(triples, cfg.seed), false),
        StageEngine::Majority => {
            let seen = m.order.majority(&predicate_multiset(triples)).is_some();
            (order_majority(&m.order, triples), !seen)
        }
        StageEngine::Neural => match m.order_net.as_ref().map(|e| order_neural(e, triples, cfg.seed)) {
            Some(Ok(r)) => r,
            Some(Err(e)) => {
                warn!("neural ordering failed ({e}); keeping input order");
                (triples.clone(), true)
            }
            None => (triples.clone(), true),
        },
    }
}

fn structure_stage(ordered: &[Triple], cfg: &PipelineConfig, m: &PipelineModels) -> (Partition, bool) {
    match cfg.structuring {
        StageEngine::Random => (structure_random(ordered.len(), cfg.seed.wrapping_add(1)), false),
        StageEngine::Majority => {
            let key: Vec<String> = ordered.iter().map(|t| t.predicate.clone()).collect();
            (structure_majority(&m.structure, ordered), m.structure.majority(&key).is_none())
        }
        StageEngine::Neural => match m.structure_net.as_ref().map(|e| structure_neural(e, ordered)) {
            Some(Ok(r)) => r,
            Some(Err(e)) => {
                warn!("neural structuring failed ({e}); one sentence per triple");
                (Partition::singletons(ordered.len()), true)
            }
            None => (Partition::singletons(ordered.len()), true),
        },
    }
}

fn lookup(ordered: &[Triple], partition: &Partition, store: &TemplateStore, mode: LookupMode, seed: u64) -> (Template, Vec<Window>, bool) {
    match lexicalize_lookup(ordered, partition, store, mode, seed) {
        Ok(l) => {
            let fb = !l.fallback_sentences.is_empty();
            (l.template, l.windows, fb)
        }
        Err(e) => {
            warn!("template lookup failed ({e}); using fallback clauses");
            let empty = TemplateStore::default();
            let single = Partition::singletons(ordered.len());
            let l = lexicalize_lookup(ordered, &single, &empty, mode, seed).unwrap_or_else(|_| crate::lexicalization::Lexicalized {
                template: Template { tokens: Vec::new() },
                fallback_sentences: Vec::new(),
                windows: Vec::new(),
            });
            (l.template, l.windows, true)
        }
    }
}

fn lex_stage(ordered: &[Triple], partition: &Partition, cfg: &PipelineConfig, m: &PipelineModels) -> (Template, Vec<Window>, bool) {
    let seed = cfg.seed.wrapping_add(2);
    match cfg.lexicalization {
        StageEngine::Random => lookup(ordered, partition, &m.templates, LookupMode::Random, seed),
        StageEngine::Majority => lookup(ordered, partition, &m.templates, LookupMode::Majority, seed),
        StageEngine::Neural => match m.lex_net.as_ref().map(|e| lexicalize_neural(e, &m.templates, ordered, partition)) {
            Some(Ok((t, fb))) => (t, Vec::new(), fb),
            Some(Err(e)) => {
                warn!("neural lexicalization failed ({e}); using majority lookup");
                let (t, w, _) = lookup(ordered, partition, &m.templates, LookupMode::Majority, seed);
                (t, w, true)
            }
            None => {
                let (t, w, _) = lookup(ordered, partition, &m.templates, LookupMode::Majority, seed);
                (t, w, true)
            }
        },
    }
}

/// Binds entity slots; an out-of-range tag switches to the majority template
/// and then to fallback clauses.
fn bind_stage(template: Template, ordered: &[Triple], partition: &Partition, m: &PipelineModels) -> (Template, BoundTemplate, bool) {
    if let Ok(b) = bind_entities(&template, ordered) {
        return (template, b, false);
    }
    warn!("template binds entities that are not in the input; using majority lookup");
    for store in [&m.templates, &TemplateStore::default()] {
        let (t, _, _) = lookup(ordered, partition, store, LookupMode::Majority, 0);
        if let Ok(b) = bind_entities(&t, ordered) {
            return (t, b, true);
        }
    }
    (Template { tokens: Vec::new() }, Vec::new(), true)
}

fn gold_references(bt: &BoundTemplate, refexes: &[String]) -> Option<(Vec<Token<String>>, Vec<SlotTrace>)> {
    let mut refs = refexes.iter();
    let mut out = Vec::with_capacity(bt.len());
    let mut slots = Vec::new();
    for t in bt {
        match t {
            Token::Entity(e) => {
                let refex = tokenize(refs.next()?);
                slots.push(SlotTrace {
                    entity: e.clone(),
                    policy: RegPolicy::OnlyNames,
                    refex: refex.clone(),
                    pre_context: Vec::new(),
                    post_context: Vec::new(),
                });
                out.extend(refex.into_iter().map(Token::Word));
            }
            other => out.push(other.clone()),
        }
    }
    refs.next().is_none().then_some((out, slots))
}

/// Runs every stage over `ts`, taking gold values for the stages covered by
/// `cfg.oracle_upto`.
pub fn run_pipeline_with(
    ts: &TripleSet,
    cfg: &PipelineConfig,
    models: &PipelineModels,
    gold: Option<&Gold>,
) -> Result<(String, PipelineTrace)> {
    models.check(cfg)?;
    if ts.triples.is_empty() {
        return Err(Error::Empty("triple set".into()));
    }
    let gold = match (cfg.oracle_upto, gold) {
        (Some(_), None) => return Err(Error::Config("oracle mode needs gold annotations".into())),
        (_, g) => g,
    };
    let mut fallbacks = Fallbacks::default();
    let ordered = match gold.filter(|_| cfg.is_oracle(Stage::Ordering)) {
        Some(g) => g.ordered.clone(),
        None => {
            let (o, fb) = order_stage(ts, cfg, models);
            fallbacks.ordering = fb;
            o
        }
    };
    let partition = match gold.filter(|_| cfg.is_oracle(Stage::Structuring)) {
        Some(g) => g.partition.clone(),
        None => {
            let (p, fb) = structure_stage(&ordered, cfg, models);
            fallbacks.structuring = fb;
            p
        }
    };
    let (template, windows) = match gold.filter(|_| cfg.is_oracle(Stage::Lexicalization)) {
        Some(g) => (g.template.clone(), Vec::new()),
        None => {
            let (t, w, fb) = lex_stage(&ordered, &partition, cfg, models);
            fallbacks.lexicalization = fb;
            (t, w)
        }
    };
    let (template, bound, bind_fb) = bind_stage(template, &ordered, &partition, models);
    fallbacks.binding = bind_fb;
    let gold_refs = gold
        .filter(|_| cfg.is_oracle(Stage::Reg) && !bind_fb)
        .and_then(|g| gold_references(&bound, &g.refexes));
    let (referenced, slots) = match gold_refs {
        Some(r) => r,
        None => {
            if cfg.is_oracle(Stage::Reg) {
                fallbacks.reg = true;
            }
            let model = models.reg.as_ref().filter(|_| cfg.reg == RegEngine::Neural);
            let (r, s) = reg_resolve(&bound, model, &models.seen_entities);
            if cfg.reg == RegEngine::Neural && s.iter().any(|t| t.policy == RegPolicy::OnlyNames && models.seen_entities.contains(&t.entity)) {
                fallbacks.reg = true;
            }
            (r, s)
        }
    };
    let text = realize(&referenced, &models.rules);
    let trace = PipelineTrace {
        input: ts.triples.clone(),
        ordered,
        partition,
        template,
        windows,
        referenced: referenced.iter().map(ToString::to_string).collect(),
        slots,
        text: text.clone(),
        fallbacks,
    };
    Ok((text, trace))
}

pub fn run_pipeline(ts: &TripleSet, cfg: &PipelineConfig, models: &PipelineModels) -> Result<(String, PipelineTrace)> {
    run_pipeline_with(ts, cfg, models, None)
}

/// Decodes text straight from the canonical linearization. The flag is set
/// when the decode is empty or fails.
pub fn run_e2e(ts: &TripleSet, engine: &NeuralEngine) -> (String, bool) {
    let decoded = canonical_linearize(&ts.triples).and_then(|src| engine.decode(&src));
    match decoded {
        Ok(tokens) if !tokens.is_empty() => (detokenize(&tokens), false),
        Ok(_) => (String::new(), true),
        Err(e) => {
            warn!("end-to-end decode failed: {e}");
            (String::new(), true)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum RunConfig {
    Pipeline(PipelineConfig),
    E2e { seed: u64 },
}

/// One line of a run artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub eid: String,
    pub config: RunConfig,
    pub text: String,
    #[serde(default)]
    pub trace: Option<PipelineTrace>,
    #[serde(default)]
    pub empty_decode: bool,
}

/// Runs the pipeline over every entry of a split. Oracle mode reads gold
/// values from each entry's first verbalization.
pub fn run_split(c: &Corpus, split: Split, cfg: &PipelineConfig, models: &PipelineModels) -> Result<Vec<RunRecord>> {
    models.check(cfg)?;
    let train_domains = c.train_domains();
    let mut out = Vec::new();
    for (i, entry) in c.split(split).enumerate() {
        let ts = c.triple_set_with(entry, &train_domains);
        let gold = match (cfg.oracle_upto, entry.lexes.first()) {
            (Some(_), Some(lex)) => Some(Gold::from_lex(entry, lex)?),
            (Some(_), None) => continue,
            _ => None,
        };
        let run_cfg = PipelineConfig {
            seed: instance_seed(cfg.seed, i as u64),
            ..*cfg
        };
        let (text, trace) = run_pipeline_with(&ts, &run_cfg, models, gold.as_ref())?;
        out.push(RunRecord {
            eid: entry.eid.clone(),
            config: RunConfig::Pipeline(*cfg),
            text,
            trace: Some(trace),
            empty_decode: false,
        });
    }
    Ok(out)
}

pub fn run_split_e2e(c: &Corpus, split: Split, engine: &NeuralEngine, seed: u64) -> Vec<RunRecord> {
    let train_domains = c.train_domains();
    c.split(split)
        .map(|entry| {
            let (text, empty) = run_e2e(&c.triple_set_with(entry, &train_domains), engine);
            RunRecord {
                eid: entry.eid.clone(),
                config: RunConfig::E2e { seed },
                text,
                trace: None,
                empty_decode: empty,
            }
        })
        .collect()
}

/// True when `text` still contains an entity, verb or determiner tag.
pub fn has_tags(text: &str) -> bool {
    text.split_whitespace().any(|w| {
        let w = w.trim_matches(|c: char| !c.is_alphanumeric() && c != '[' && c != ']' && c != '-');
        w.strip_prefix("ENTITY-").is_some_and(|n| !n.is_empty() && n.chars().all(|c| c.is_ascii_digit()))
    }) || text.contains("VP[")
        || text.contains("DT[")
}

/// Consistency violations of a trace against its input.
pub fn trace_violations(ts: &TripleSet, trace: &PipelineTrace) -> Vec<String> {
    let mut v = Vec::new();
    let mut a = ts.triples.clone();
    let mut b = trace.ordered.clone();
    a.sort();
    b.sort();
    if a != b || trace.input != ts.triples {
        v.push("ordering is not a permutation of the input".to_owned());
    }
    if trace.partition.validate(trace.ordered.len()).is_err() {
        v.push(format!("partition {} does not cover the ordered triples in order", trace.partition));
    }
    if trace.template.max_entity() > entity_order(&trace.ordered).len() {
        v.push("template names more entities than the input has".to_owned());
    }
    if trace.slots.len() != trace.template.entity_slots().count() {
        v.push("not every entity slot has a reference".to_owned());
    }
    if trace.referenced.iter().any(|t| t.starts_with("ENTITY-")) {
        v.push("referenced template still has entity slots".to_owned());
    }
    if trace.text.trim().is_empty() {
        v.push("empty text".to_owned());
    }
    if has_tags(&trace.text) {
        v.push("text contains tags".to_owned());
    }
    v
}
