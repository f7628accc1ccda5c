use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use d2t_core::corpus::{extract_task_dataset, Corpus, DatasetInstance, Split, Task, TaskDataset};
use d2t_core::experiments::{
    lexicalization_bleu, only_names_accuracy, ordering_accuracy, run_bleu, structuring_accuracy,
    train_majority_models, Baseline,
};
use d2t_core::lexicalization::LookupMode;
use d2t_core::pipeline::{run_split, trace_violations, PipelineConfig, RegEngine, StageEngine};
use d2t_core::text::uncased_tokens;
use d2t_core::corpus::extract_reg_dataset;
use d2t_core::eval::mean_std;
use d2t_neural::beam::{beam_search, ensemble_decode, greedy};
use d2t_neural::bpe::BpeModel;
use d2t_neural::gradcheck::grad_check;
use d2t_neural::{train, Arch, ModelConfig, Pair, Seq2SeqModel, TrainingConfig, Vocab};
use d2t_repro::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const OVERFIT_BUDGET: Duration = Duration::from_secs(600);
const ARCHS: [Arch; 2] = [Arch::Gru, Arch::Transformer];

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn corpus() -> Result<Corpus, String> {
    let path = corpus_path().ok_or_else(|| format!("corpus unavailable: {CORPUS_ENV} is not set"))?;
    let (c, stats) = load_corpus(&path).map_err(|e| format!("corpus unavailable at {}: {e}", path.display()))?;
    eprintln!(
        "corpus: {} entries, {} lexicalizations ({} skipped) from {} files",
        stats.entries, stats.lexes, stats.skipped_lexes, stats.files
    );
    Ok(c)
}

fn with_corpus(c: &Result<Corpus, String>, f: impl FnOnce(&Corpus) -> d2t_core::Result<Outcome>) -> Outcome {
    match c {
        Ok(c) => f(c).unwrap_or_else(|e| Outcome::fail(format!("error: {e}"))),
        Err(why) => Outcome::fail(why.clone()),
    }
}

fn split_counts(ds: &d2t_core::corpus::Splits<TaskDataset>, f: impl Fn(&TaskDataset) -> usize) -> Counts {
    [f(&ds.train), f(&ds.dev), f(&ds.test)]
}

fn criterion_1(c: &Corpus) -> d2t_core::Result<Outcome> {
    let ordering = extract_task_dataset(c, Task::Ordering)?;
    let checks = [
        compare_counts("ordering instances", split_counts(&ordering, TaskDataset::instances), ORDERING_INSTANCES),
        compare_counts("ordering sets", split_counts(&ordering, TaskDataset::inputs), ORDERING_SETS),
        compare_counts(
            "structuring",
            split_counts(&extract_task_dataset(c, Task::Structuring)?, TaskDataset::instances),
            STRUCTURING_INSTANCES,
        ),
        compare_counts(
            "lexicalization",
            split_counts(&extract_task_dataset(c, Task::Lexicalization)?, TaskDataset::instances),
            LEXICALIZATION_INSTANCES,
        ),
        compare_counts(
            "reg",
            split_counts(&extract_task_dataset(c, Task::Reg)?, TaskDataset::instances),
            REG_INSTANCES,
        ),
    ];
    Ok(Outcome::new(
        checks.iter().all(|o| o.pass),
        checks.iter().map(|o| o.detail.as_str()).collect::<Vec<_>>().join("; "),
    ))
}

fn criterion_7(c: &Corpus) -> d2t_core::Result<Outcome> {
    let ordering = extract_task_dataset(c, Task::Ordering)?;
    let structuring = extract_task_dataset(c, Task::Structuring)?;
    let mut o = Vec::new();
    let mut s = Vec::new();
    for seed in RANDOM_SEEDS {
        o.extend(ordering_accuracy(&ordering, Baseline::Random, seed)?.all.score);
        s.extend(structuring_accuracy(&structuring, Baseline::Random, seed)?.all.score);
    }
    let (om, osd) = mean_std(&o).unwrap_or((f64::NAN, f64::NAN));
    let (sm, ssd) = mean_std(&s).unwrap_or((f64::NAN, f64::NAN));
    Ok(Outcome::new(
        within(om, ORDERING_RANDOM_ALL, RANDOM_TOLERANCE) && within(sm, STRUCTURING_RANDOM_ALL, RANDOM_TOLERANCE),
        format!(
            "ordering {om:.4}±{osd:.4} (target {ORDERING_RANDOM_ALL}±{RANDOM_TOLERANCE}), \
             structuring {sm:.4}±{ssd:.4} (target {STRUCTURING_RANDOM_ALL}±{RANDOM_TOLERANCE}) over {} seeds",
            RANDOM_SEEDS.len()
        ),
    ))
}

fn criterion_13(c: &Corpus) -> d2t_core::Result<Outcome> {
    let models = train_majority_models(c)?;
    let random = PipelineConfig {
        ordering: StageEngine::Random,
        structuring: StageEngine::Random,
        lexicalization: StageEngine::Random,
        reg: RegEngine::OnlyNames,
        seed: 1,
        oracle_upto: None,
    };
    let train_domains = c.train_domains();
    let mut runs = 0;
    let mut violations = Vec::new();
    for cfg in [PipelineConfig::majority(), random, PipelineConfig::oracle()] {
        for r in run_split(c, Split::Test, &cfg, &models)? {
            runs += 1;
            let entry = c.find(&r.eid).expect("run records name corpus entries");
            let trace = r.trace.as_ref().expect("pipeline runs carry traces");
            for v in trace_violations(&c.triple_set_with(entry, &train_domains), trace) {
                violations.push(format!("{}: {v}", r.eid));
            }
        }
    }
    Ok(Outcome::new(
        violations.is_empty(),
        format!("{} violations over {runs} runs{}", violations.len(), violations.first().map(|v| format!("; first: {v}")).unwrap_or_default()),
    ))
}

fn desk_vocab(symbols: usize) -> Vocab {
    let mut toks: Vec<String> = vec!["<unk>".into(), "<s>".into(), "</s>".into()];
    toks.extend((0..symbols).map(|i| format!("s{i}")));
    Vocab::from_tokens(toks)
}

fn random_pairs(rng: &mut ChaCha8Rng, n: usize, symbols: usize, copy: bool) -> Vec<Pair> {
    (0..n)
        .map(|_| {
            let src: Vec<usize> = (0..rng.gen_range(3..8)).map(|_| rng.gen_range(3..3 + symbols)).collect();
            let tgt = if copy { src.clone() } else { (0..rng.gen_range(1..7)).map(|_| rng.gen_range(3..3 + symbols)).collect() };
            Pair { src, tgt }
        })
        .collect()
}

fn criterion_8() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for arch in ARCHS {
        let mut m = Seq2SeqModel::new(ModelConfig::desk(arch).without_dropout(), desk_vocab(17), 21).expect("desk config");
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut arch_worst: f64 = 0.0;
        for b in 0..3 {
            let batch = random_pairs(&mut rng, 2, 17, false);
            let r = grad_check(&mut m, &batch, 1e-5, 150, 100 + b);
            arch_worst = arch_worst.max(r.max_relative_error);
        }
        worst = worst.max(arch_worst);
        parts.push(format!("{arch} max relative error {arch_worst:.2e}"));
    }
    Outcome::new(worst < 1e-4, format!("{} over 3 batches each (threshold 1e-4)", parts.join(", ")))
}

fn arch_training(arch: Arch, batch_size: usize, updates: u64) -> TrainingConfig {
    let base = match arch {
        Arch::Gru => TrainingConfig { learning_rate: 3e-3, ..TrainingConfig::default() },
        Arch::Transformer => TrainingConfig {
            learning_rate: 1e-3,
            warmup_steps: 200,
            label_smoothing: 0.0,
            ..TrainingConfig::transformer()
        },
    };
    TrainingConfig { max_updates: updates, eval_every: updates, patience: 1, batch_size, ..base }
}

/// Trains in rounds until `accuracy` reaches `goal` or `budget` runs out.
fn train_until(
    m: &mut Seq2SeqModel,
    pairs: &[Pair],
    cfg: &TrainingConfig,
    goal: f64,
    budget: Duration,
    accuracy: impl Fn(&Seq2SeqModel) -> f64,
) -> (f64, Duration) {
    let start = Instant::now();
    let mut acc = 0.0;
    for round in 0.. {
        if train(m, pairs, &[], cfg, round).is_err() {
            break;
        }
        acc = accuracy(m);
        if acc >= goal || start.elapsed() >= budget {
            break;
        }
    }
    (acc, start.elapsed())
}

fn criterion_9() -> Outcome {
    let c = match Corpus::read_jsonl(&fixture("lex_subset.jsonl")) {
        Ok(c) => c,
        Err(e) => return Outcome::fail(format!("lexicalization subset unavailable: {e}")),
    };
    let data: Vec<DatasetInstance> = match extract_task_dataset(&c, Task::Lexicalization) {
        Ok(ds) => ds.train.as_seq().unwrap_or_default().to_vec(),
        Err(e) => return Outcome::fail(format!("error: {e}")),
    };
    let domains: std::collections::BTreeSet<&str> = c.entries.iter().map(|e| e.domain.as_str()).collect();
    let mut pass = data.len() == 200 && domains.len() == 1;
    let mut parts = vec![format!("{} instances from {:?}", data.len(), domains)];
    for arch in ARCHS {
        let cfg = TrainingConfig { beam: 5, max_decode_len: 60, ..arch_training(arch, 20, 150) };
        let vocab = Vocab::build(data.iter().flat_map(|i| std::iter::once(&i.source).chain(&i.targets)));
        let mut m = Seq2SeqModel::new(ModelConfig::desk(arch).without_dropout(), vocab, 1).expect("desk config");
        let pairs: Vec<Pair> = data.iter().map(|i| m.pair(&i.source, &i.targets[0])).collect();
        let (acc, took) = train_until(&mut m, &pairs, &cfg, 0.95, OVERFIT_BUDGET, |m| {
            let hits = data
                .iter()
                .zip(&pairs)
                .filter(|(_, p)| beam_search(m, &p.src, cfg.beam, cfg.max_decode_len).is_ok_and(|h| h[0].tokens == p.tgt))
                .count();
            hits as f64 / data.len() as f64
        });
        pass &= acc >= 0.95 && took <= OVERFIT_BUDGET;
        parts.push(format!("{arch} {:.1}% in {:.0}s", 100.0 * acc, took.as_secs_f64()));
    }
    Outcome::new(pass, format!("{} (goal 95% within {}s each)", parts.join(", "), OVERFIT_BUDGET.as_secs()))
}

fn criterion_10() -> Outcome {
    let pairs = random_pairs(&mut ChaCha8Rng::seed_from_u64(1), 500, 10, true);
    let mut pass = true;
    let mut parts = Vec::new();
    for arch in ARCHS {
        let mut m = Seq2SeqModel::new(ModelConfig::desk(arch), desk_vocab(10), 7).expect("desk config");
        let cfg = arch_training(arch, 10, 500);
        let (acc, took) = train_until(&mut m, &pairs, &cfg, 0.99, OVERFIT_BUDGET, |m| {
            let hits = pairs.iter().filter(|p| beam_search(m, &p.src, 5, 20).is_ok_and(|h| h[0].tokens == p.tgt)).count();
            hits as f64 / pairs.len() as f64
        });
        pass &= acc >= 0.99;
        parts.push(format!("{arch} {:.1}% in {:.0}s", 100.0 * acc, took.as_secs_f64()));
    }
    Outcome::new(pass, format!("{} on 500 pairs (goal 99%)", parts.join(", ")))
}

fn criterion_11(c: &Result<Corpus, String>) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let inputs = random_pairs(&mut rng, 50, 17, false);
    let mut mismatches = 0;
    for arch in ARCHS {
        let m = Seq2SeqModel::new(ModelConfig::desk(arch), desk_vocab(17), 32).expect("desk config");
        for p in &inputs {
            let (Ok(beam), Ok(g)) = (beam_search(&m, &p.src, 1, 12), greedy(&m, &p.src, 12)) else {
                mismatches += 1;
                continue;
            };
            if beam[0].tokens != g.tokens || (beam[0].log_prob - g.log_prob).abs() > 1e-9 {
                mismatches += 1;
            }
            let (Ok(plain), Ok(single)) = (beam_search(&m, &p.src, 3, 12), ensemble_decode(&[&m], &p.src, 3, 12)) else {
                mismatches += 1;
                continue;
            };
            if plain.len() != single.len()
                || plain.iter().zip(&single).any(|(a, b)| a.tokens != b.tokens || (a.score - b.score).abs() > 1e-9)
            {
                mismatches += 1;
            }
        }
    }
    let (templates, source) = match c {
        Ok(c) => (c.entries.iter().flat_map(|e| &e.lexes).map(|l| l.template.clone()).collect::<Vec<_>>(), "corpus"),
        Err(_) => match Corpus::read_jsonl(&fixture("synthetic.jsonl")) {
            Ok(s) => (s.entries.iter().flat_map(|e| &e.lexes).map(|l| l.template.clone()).collect(), "synthetic fixture"),
            Err(e) => return Outcome::fail(format!("no templates: {e}")),
        },
    };
    let bpe = match BpeModel::train(&templates, 2000, 2) {
        Ok(b) => b,
        Err(e) => return Outcome::fail(format!("error: {e}")),
    };
    let broken = templates
        .iter()
        .filter(|t| {
            let toks: Vec<&str> = t.split_whitespace().collect();
            bpe.decode(&bpe.encode(&toks)) != toks
        })
        .count();
    Outcome::new(
        mismatches == 0 && broken == 0,
        format!(
            "{mismatches} beam/greedy or ensemble mismatches on 50 inputs per architecture; \
             {broken} of {} {source} templates fail the BPE roundtrip",
            templates.len()
        ),
    )
}

fn criterion_12() -> Outcome {
    let c = match Corpus::read_jsonl(&fixture("synthetic.jsonl")) {
        Ok(c) => c,
        Err(e) => return Outcome::fail(format!("fixture unavailable: {e}")),
    };
    let seen = c.train_domains();
    let mut curated = Corpus {
        entries: c.split(Split::Test).filter(|e| seen.contains(&e.domain)).take(50).cloned().collect(),
    };
    let models = match train_majority_models(&c) {
        Ok(m) => m,
        Err(e) => return Outcome::fail(format!("error: {e}")),
    };
    curated.entries.extend(c.split(Split::Train).cloned());
    let records = match run_split(&curated, Split::Test, &PipelineConfig::oracle(), &models) {
        Ok(r) => r,
        Err(e) => return Outcome::fail(format!("error: {e}")),
    };
    let matched = records
        .iter()
        .filter(|r| {
            let e = curated.find(&r.eid).expect("records name entries");
            uncased_tokens(&r.text) == uncased_tokens(&e.lexes[0].text)
        })
        .count();
    Outcome::new(
        records.len() == 50 && matched == records.len(),
        format!("{matched}/{} oracle texts equal their gold text (uncased tokens)", records.len()),
    )
}

fn main() -> ExitCode {
    let c = corpus();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut run = |n: usize, name: &'static str, f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let o = f();
        println!("{} {n:>2} {name}: {} [{:.0}s]", if o.pass { "PASS" } else { "FAIL" }, o.detail, t.elapsed().as_secs_f64());
        results.push((n, name, o));
    };
    run(1, "dataset extraction counts", &|| with_corpus(&c, criterion_1));
    run(2, "majority ordering accuracy", &|| {
        with_corpus(&c, |c| {
            Ok(compare_report(&ordering_accuracy(&extract_task_dataset(c, Task::Ordering)?, Baseline::Majority, 0)?, ORDERING_MAJORITY, ACCURACY_TOLERANCE))
        })
    });
    run(3, "majority structuring accuracy", &|| {
        with_corpus(&c, |c| {
            Ok(compare_report(&structuring_accuracy(&extract_task_dataset(c, Task::Structuring)?, Baseline::Majority, 0)?, STRUCTURING_MAJORITY, ACCURACY_TOLERANCE))
        })
    });
    run(4, "majority lexicalization BLEU", &|| {
        with_corpus(&c, |c| {
            Ok(compare_report(&lexicalization_bleu(&extract_task_dataset(c, Task::Lexicalization)?, LookupMode::Majority, 0)?, LEXICALIZATION_MAJORITY, LEXICALIZATION_TOLERANCE))
        })
    });
    run(5, "OnlyNames REG accuracy", &|| {
        with_corpus(&c, |c| Ok(compare_report(&only_names_accuracy(&extract_reg_dataset(c)?.test)?, REG_ONLY_NAMES, ACCURACY_TOLERANCE)))
    });
    run(6, "majority pipeline BLEU", &|| {
        with_corpus(&c, |c| {
            let models = train_majority_models(c)?;
            let records = run_split(c, Split::Test, &PipelineConfig::majority(), &models)?;
            Ok(compare_report(&run_bleu(c, &records)?, PIPELINE_MAJORITY, PIPELINE_TOLERANCE))
        })
    });
    run(7, "random baselines over five seeds", &|| with_corpus(&c, criterion_7));
    run(8, "gradient check", &criterion_8);
    run(9, "overfit lexicalization subset", &criterion_9);
    run(10, "copy task", &criterion_10);
    run(11, "decoding laws", &|| criterion_11(&c));
    run(12, "oracle pipeline on curated fixture", &criterion_12);
    run(13, "pipeline invariants on the full test set", &|| with_corpus(&c, criterion_13));
    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!("{} of {} criteria pass", results.len() - failed.len(), results.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failing: {failed:?}");
        ExitCode::FAILURE
    }
}
