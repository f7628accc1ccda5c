mod common;

use std::sync::OnceLock;

use d2t_core::corpus::{extract_reg_dataset, extract_task_dataset, Split, Task, Triple, TripleSet};
use d2t_core::engine::NeuralEngine;
use d2t_core::experiments::{run_bleu, train_majority_models};
use d2t_core::pipeline::{
    has_tags, run_e2e, run_pipeline, run_pipeline_with, run_split, run_split_e2e, trace_violations, Gold,
    PipelineConfig, PipelineModels, RegEngine, RunRecord, Stage, StageEngine,
};
use d2t_core::reg::{reg_train, RegConfig};
use d2t_core::text::{tokenize, uncased_tokens};
use d2t_core::Error;
use d2t_neural::{Arch, ModelConfig, Seq2SeqModel, TrainingConfig, Vocab};
use proptest::prelude::*;

fn synthetic_models() -> &'static PipelineModels {
    static M: OnceLock<PipelineModels> = OnceLock::new();
    M.get_or_init(|| train_majority_models(common::synthetic()).unwrap())
}

fn garbage_engine() -> NeuralEngine {
    let vocab = Vocab::build([common::strings("foo <SNT> ENTITY-9 VP[tense=past]")].iter());
    let model = Seq2SeqModel::new(ModelConfig::desk(Arch::Gru).without_dropout(), vocab, 5).unwrap();
    let mut e = NeuralEngine::new(vec![model], None).unwrap();
    e.max_len = 10;
    e
}

fn cfg(ordering: StageEngine, structuring: StageEngine, lexicalization: StageEngine, seed: u64) -> PipelineConfig {
    PipelineConfig { ordering, structuring, lexicalization, reg: RegEngine::OnlyNames, seed, oracle_upto: None }
}

const DRAGO_TEXT: &str = "Massimo Drago played for the club SSD Potenza Calcio and his own club was Calcio Catania. \
                         He is currently managing AC Cesena.";

#[test]
fn figure_entry_is_regenerated_exactly() {
    let c = common::sample();
    let mut models = train_majority_models(c).unwrap();
    let drago: Vec<_> = extract_reg_dataset(c)
        .unwrap()
        .train
        .into_iter()
        .filter(|i| i.meta.eid == "train/3/SportsTeam/Id9000")
        .collect();
    let reg_cfg = RegConfig { epochs: 200, batch_size: 10, dropout: 0.0, patience: 1000, learning_rate: 5e-3, ..RegConfig::desk() };
    let (reg, _) = reg_train(&drago, &drago, &reg_cfg, 4).unwrap();
    models.seen_entities = reg.seen_entities();
    models.reg = Some(reg);

    let entry = &c.entries[0];
    let ts = c.triple_set(entry);
    let config = PipelineConfig { reg: RegEngine::Neural, ..PipelineConfig::majority() };
    let (text, trace) = run_pipeline(&ts, &config, &models).unwrap();
    let gold = Gold::from_lex(entry, &entry.lexes[0]).unwrap();
    assert_eq!(trace.ordered, gold.ordered);
    assert_eq!(trace.partition, gold.partition);
    assert_eq!(trace.template, gold.template);
    assert_eq!(trace.fallbacks, Default::default());
    assert_eq!(uncased_tokens(&text), uncased_tokens(DRAGO_TEXT), "{text}");

    let (oracle_text, _) = run_pipeline_with(&ts, &PipelineConfig::oracle(), &models, Some(&gold)).unwrap();
    assert_eq!(oracle_text, DRAGO_TEXT);
}

#[test]
fn single_triple_with_empty_models_uses_fallbacks() {
    let ts = TripleSet {
        triples: vec![Triple::new("Alan_Bean", "occupation", "Test_pilot").unwrap()],
        domain: "Astronaut".into(),
        seen: false,
    };
    let (text, trace) = run_pipeline(&ts, &PipelineConfig::majority(), &PipelineModels::default()).unwrap();
    assert_eq!(text, "Alan Bean occupation Test pilot.");
    assert!(trace.fallbacks.ordering && trace.fallbacks.structuring && trace.fallbacks.lexicalization);
    assert!(!trace.fallbacks.binding);
    assert!(trace_violations(&ts, &trace).is_empty());
}

#[test]
fn empty_input_and_missing_models_are_errors() {
    let empty = TripleSet { triples: vec![], domain: String::new(), seen: false };
    assert!(matches!(run_pipeline(&empty, &PipelineConfig::majority(), synthetic_models()), Err(Error::Empty(_))));
    let ts = common::synthetic().triple_set(&common::synthetic().entries[0]);
    let neural = PipelineConfig { reg: RegEngine::Neural, ..PipelineConfig::majority() };
    assert!(matches!(run_pipeline(&ts, &neural, &PipelineModels::default()), Err(Error::MissingModel(_))));
    assert!(matches!(run_pipeline(&ts, &PipelineConfig::oracle(), synthetic_models()), Err(Error::Config(_))));
}

#[test]
fn runs_are_deterministic() {
    let c = common::synthetic();
    let random = cfg(StageEngine::Random, StageEngine::Random, StageEngine::Random, 17);
    for config in [PipelineConfig::majority(), random] {
        let a = run_split(c, Split::Test, &config, synthetic_models()).unwrap();
        let b = run_split(c, Split::Test, &config, synthetic_models()).unwrap();
        assert_eq!(a, b);
    }
    let other = run_split(c, Split::Test, &cfg(StageEngine::Random, StageEngine::Random, StageEngine::Random, 18), synthetic_models()).unwrap();
    assert_ne!(run_split(c, Split::Test, &random, synthetic_models()).unwrap(), other);
}

#[test]
fn traces_are_consistent_on_every_test_entry() {
    let c = common::synthetic();
    let engines = [StageEngine::Random, StageEngine::Majority];
    for &o in &engines {
        for &s in &engines {
            for &l in &engines {
                for r in run_split(c, Split::Test, &cfg(o, s, l, 3), synthetic_models()).unwrap() {
                    let ts = c.triple_set(c.find(&r.eid).unwrap());
                    let v = trace_violations(&ts, r.trace.as_ref().unwrap());
                    assert!(v.is_empty(), "{} {:?}: {v:?}", r.eid, (o, s, l));
                }
            }
        }
    }
}

#[test]
fn oracle_run_reproduces_gold_text() {
    let c = common::synthetic();
    let records = run_split(c, Split::Test, &PipelineConfig::oracle(), synthetic_models()).unwrap();
    assert_eq!(records.len(), c.split(Split::Test).count());
    for r in &records {
        let gold = &c.find(&r.eid).unwrap().lexes[0].text;
        assert_eq!(uncased_tokens(&r.text), uncased_tokens(gold), "{}", r.eid);
    }
    let bleu = run_bleu(c, &records).unwrap();
    assert!((bleu.all.score.unwrap() - 100.0).abs() < 1e-9);
}

#[test]
fn partial_oracle_keeps_gold_up_to_the_stage() {
    let c = common::synthetic();
    let upto_order = PipelineConfig { oracle_upto: Some(Stage::Ordering), ..PipelineConfig::majority() };
    for r in run_split(c, Split::Test, &upto_order, synthetic_models()).unwrap().iter().take(30) {
        let e = c.find(&r.eid).unwrap();
        assert_eq!(r.trace.as_ref().unwrap().ordered, e.ordered(&e.lexes[0]));
    }
}

#[test]
fn neural_stages_with_unusable_output_fall_back() {
    let mut models = train_majority_models(common::synthetic()).unwrap();
    models.order_net = Some(garbage_engine());
    models.structure_net = Some(garbage_engine());
    models.lex_net = Some(garbage_engine());
    let neural = cfg(StageEngine::Neural, StageEngine::Neural, StageEngine::Neural, 1);
    let c = common::synthetic();
    for r in run_split(c, Split::Test, &neural, &models).unwrap().iter().take(20) {
        let trace = r.trace.as_ref().unwrap();
        assert!(trace.fallbacks.ordering && trace.fallbacks.structuring && trace.fallbacks.lexicalization);
        assert!(trace_violations(&c.triple_set(c.find(&r.eid).unwrap()), trace).is_empty());
    }
}

#[test]
fn run_records_roundtrip_through_json() {
    let c = common::synthetic();
    let records = run_split(c, Split::Dev, &PipelineConfig::majority(), synthetic_models()).unwrap();
    let line = serde_json::to_string(&records[0]).unwrap();
    assert!(line.contains("\"mode\":\"pipeline\""));
    let back: RunRecord = serde_json::from_str(&line).unwrap();
    assert_eq!(back, records[0]);
}

fn e2e_engine() -> &'static (NeuralEngine, Vec<d2t_core::corpus::DatasetInstance>) {
    static E: OnceLock<(NeuralEngine, Vec<d2t_core::corpus::DatasetInstance>)> = OnceLock::new();
    E.get_or_init(|| {
        let c = common::synthetic();
        let ds = extract_task_dataset(c, Task::Ordering).unwrap();
        let mut data: Vec<_> = ds.train.as_seq().unwrap().iter().take(8).cloned().collect();
        for inst in &mut data {
            let e = c.find(&inst.meta.eid).unwrap();
            inst.targets = vec![tokenize(&e.lexes[0].text)];
        }
        let tcfg = TrainingConfig {
            learning_rate: 3e-3,
            max_updates: 400,
            eval_every: 100,
            patience: 100,
            batch_size: 8,
            ..TrainingConfig::default()
        };
        let (engine, _) = NeuralEngine::train(&data, &[], &ModelConfig::desk(Arch::Gru).without_dropout(), &tcfg, None, &[1]).unwrap();
        (engine, data)
    })
}

#[test]
fn end_to_end_memorizes_its_training_texts() {
    let (engine, data) = e2e_engine();
    let c = common::synthetic();
    let mut correct = 0;
    for inst in data {
        let e = c.find(&inst.meta.eid).unwrap();
        let (text, empty) = run_e2e(&c.triple_set(e), engine);
        assert!(!empty);
        if uncased_tokens(&text) == uncased_tokens(&e.lexes[0].text) {
            correct += 1;
        }
    }
    assert!(correct >= 7, "{correct}/8");
}

#[test]
fn end_to_end_is_total_on_unseen_inputs() {
    let (engine, _) = e2e_engine();
    let c = common::synthetic();
    let records = run_split_e2e(c, Split::Test, engine, 0);
    assert_eq!(records.len(), c.split(Split::Test).count());
    for r in &records {
        assert_eq!(r.empty_decode, r.text.is_empty());
    }
}

#[test]
fn engine_save_load_decodes_identically() {
    let (engine, data) = e2e_engine();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e2e.json");
    engine.save(&path).unwrap();
    let mut back = NeuralEngine::load(&[&path]).unwrap();
    back.beam = engine.beam;
    back.max_len = engine.max_len;
    for inst in data.iter().take(3) {
        assert_eq!(back.decode(&inst.source).unwrap(), engine.decode(&inst.source).unwrap());
    }
}

fn triple_sets() -> impl Strategy<Value = TripleSet> {
    let preds = vec!["birthPlace", "occupation", "club", "manager", "location", "cityServed", "birthDate", "nationality"];
    let ents = vec!["Alan_Bean", "Aarhus", "1930-09-08", "Test_pilot", "A.C._Cesena", "\"12.5\"", "Drago"];
    prop::collection::vec((prop::sample::select(ents.clone()), prop::sample::select(preds), prop::sample::select(ents)), 1..8)
        .prop_map(|v| TripleSet {
            triples: v.into_iter().map(|(s, p, o)| Triple::new(s, p, o).unwrap()).collect(),
            domain: "Astronaut".into(),
            seen: true,
        })
}

fn engine() -> impl Strategy<Value = StageEngine> {
    prop::sample::select(vec![StageEngine::Random, StageEngine::Majority])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]
    #[test]
    fn pipeline_is_total_and_tag_free(ts in triple_sets(), o in engine(), s in engine(), l in engine(), seed in any::<u64>()) {
        let (text, trace) = run_pipeline(&ts, &cfg(o, s, l, seed), synthetic_models()).unwrap();
        prop_assert!(!text.trim().is_empty());
        prop_assert!(!has_tags(&text), "{}", text);
        let v = trace_violations(&ts, &trace);
        prop_assert!(v.is_empty(), "{:?}", v);
    }
}
