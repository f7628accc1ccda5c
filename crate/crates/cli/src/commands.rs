use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use d2t_core::corpus::{
    extract_e2e_dataset, extract_reg_dataset, extract_task_dataset, import_webnlg, Corpus, DatasetInstance, Format,
    Split, Splits, Task, TaskDataset,
};
use d2t_core::engine::{BpeSettings, NeuralEngine};
use d2t_core::eval::{render_domains, render_table, Cell, EvalReport, TableRow};
use d2t_core::experiments::{baselines, run_accuracy, run_bleu, train_majority_models};
use d2t_core::lexicalization::{template_store_train, TemplateStore};
use d2t_core::ordering::{order_majority_train, OrderModel};
use d2t_core::pipeline::{run_split, run_split_e2e, PipelineConfig, RegEngine, RunConfig, RunRecord, Stage, StageEngine};
use d2t_core::realization::{rules_extract, RuleTable};
use d2t_core::records::{read_records, write_records};
use d2t_core::reg::{reg_train, RegConfig, RegModel};
use d2t_core::structuring::{structure_majority_train, StructModel};
use d2t_neural::{Arch, ModelConfig, TrainingConfig};
use log::info;
use serde::Serialize;
use serde_json::Value;

use crate::args::*;
use crate::manifest::{manifest_path, unix_now, CorpusVersion, RunManifest};
use crate::UsageError;

pub const ORDER_TABLE: &str = "ordering.table.jsonl";
pub const STRUCTURE_TABLE: &str = "structuring.table.jsonl";
pub const TEMPLATES: &str = "templates.jsonl";
pub const RULES: &str = "rules.json";
pub const RUN_FILE: &str = "run.jsonl";

/// Process-wide settings shared by every subcommand.
pub struct Ctx {
    pub command: &'static str,
    pub seed: u64,
    pub argv: Vec<String>,
    pub started: u64,
}

impl Ctx {
    fn manifest<A: Serialize>(&self, args: &A, seeds: Vec<u64>) -> Result<RunManifest> {
        let mut config = serde_json::to_value(args)?;
        if let Value::Object(m) = &mut config {
            m.insert("seed".into(), self.seed.into());
        }
        Ok(RunManifest {
            command: self.command.to_owned(),
            argv: self.argv.clone(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            seeds,
            corpus: None,
            started_unix: self.started,
            finished_unix: 0,
        })
    }
}

fn finish(mut m: RunManifest, path: &Path) -> Result<()> {
    m.finished_unix = unix_now();
    m.write(path)?;
    eprintln!("manifest: {}", path.display());
    Ok(())
}

fn require<T: Clone>(v: &Option<T>, flag: &str) -> Result<T> {
    v.clone().ok_or_else(|| UsageError(format!("missing required {flag}")).into())
}

fn read_corpus(path: &Path) -> Result<(Corpus, CorpusVersion)> {
    let c = Corpus::read_jsonl(path).with_context(|| format!("reading corpus {}", path.display()))?;
    let v = CorpusVersion::of(path, c.entries.len())?;
    Ok((c, v))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn import(a: ImportArgs, ctx: &Ctx) -> Result<()> {
    let (src, format) = match (&a.xml, &a.jsonl) {
        (Some(x), None) => (x.clone(), Format::Xml),
        (None, Some(j)) => (j.clone(), Format::Jsonl),
        _ => bail!(UsageError("exactly one of --xml or --jsonl is required".into())),
    };
    let out = require(&a.out, "--out")?;
    let (corpus, stats) = import_webnlg(&src, format)?;
    corpus.write_jsonl(&out)?;
    println!(
        "imported {} entries ({} verbalizations) from {} files; skipped {} verbalizations, {} entries",
        stats.entries, stats.lexes, stats.files, stats.skipped_lexes, stats.skipped_entries
    );
    let mut m = ctx.manifest(&a, vec![ctx.seed])?;
    m.inputs.push(src);
    m.outputs.push(out.clone());
    m.corpus = Some(CorpusVersion::of(&out, corpus.entries.len())?);
    finish(m, &manifest_path(&out, false))
}

fn split_files(out: &Path) -> [(Split, PathBuf); 3] {
    Split::ALL.map(|s| (s, out.join(format!("{s}.jsonl"))))
}

pub fn extract(a: ExtractArgs, ctx: &Ctx) -> Result<()> {
    let corpus_path = require(&a.corpus, "--corpus")?;
    let task = require(&a.task, "--task")?;
    let out = require(&a.out, "--out")?;
    let (c, version) = read_corpus(&corpus_path)?;
    create_dir(&out)?;
    let data: Splits<TaskDataset> = match task {
        ExtractTask::Ordering => extract_task_dataset(&c, Task::Ordering)?,
        ExtractTask::Structuring => extract_task_dataset(&c, Task::Structuring)?,
        ExtractTask::Lex => extract_task_dataset(&c, Task::Lexicalization)?,
        ExtractTask::Reg => extract_reg_dataset(&c)?.map(TaskDataset::Reg),
        ExtractTask::E2e => extract_e2e_dataset(&c)?.map(TaskDataset::Seq),
    };
    let mut m = ctx.manifest(&a, vec![ctx.seed])?;
    println!("{:<6} {:>9} {:>10}", "split", "inputs", "instances");
    for (split, path) in split_files(&out) {
        let d = data.get(split);
        match d {
            TaskDataset::Seq(v) => write_records(&path, v)?,
            TaskDataset::Reg(v) => write_records(&path, v)?,
        }
        println!("{:<6} {:>9} {:>10}", split.to_string(), d.inputs(), d.instances());
        m.outputs.push(path);
    }
    m.inputs.push(corpus_path);
    m.corpus = Some(version);
    finish(m, &manifest_path(&out, true))
}

fn seq_splits(c: &Corpus, task: TaskArg) -> Result<Splits<Vec<DatasetInstance>>> {
    let t = match task {
        TaskArg::Ordering => Task::Ordering,
        TaskArg::Structuring => Task::Structuring,
        TaskArg::Lex => Task::Lexicalization,
        TaskArg::E2e => return Ok(extract_e2e_dataset(c)?),
        _ => unreachable!("not a sequence task"),
    };
    Ok(extract_task_dataset(c, t)?.map(|d| d.as_seq().map(<[_]>::to_vec).unwrap_or_default()))
}

pub fn train(mut a: TrainArgs, ctx: &Ctx) -> Result<()> {
    let corpus_path = require(&a.corpus, "--corpus")?;
    let task = require(&a.task, "--task")?;
    let out = require(&a.out, "--out")?;
    let engine = *a.engine.get_or_insert(TrainEngine::Neural);
    let profile = *a.profile.get_or_insert(Profile::Desk);
    if a.seeds.is_empty() {
        a.seeds.push(ctx.seed);
    }
    if engine == TrainEngine::Majority && matches!(task, TaskArg::Reg | TaskArg::E2e) {
        bail!(UsageError(format!("--task {} has no majority engine", task_name(task))));
    }
    let (c, version) = read_corpus(&corpus_path)?;
    create_dir(&out)?;
    let mut outputs = Vec::new();

    match (task, engine) {
        (TaskArg::Realization, _) => {
            let (rules, stats) = rules_extract(&c);
            let p = out.join(RULES);
            rules.save(&p)?;
            println!("realization rules from {} aligned verbalizations ({} skipped)", stats.aligned, stats.skipped);
            outputs.push(p);
        }
        (_, TrainEngine::Majority) => {
            let train_set = seq_splits(&c, task)?.train;
            let (p, n) = match task {
                TaskArg::Ordering => {
                    let p = out.join(ORDER_TABLE);
                    order_majority_train(&train_set)?.save(&p)?;
                    (p, train_set.len())
                }
                TaskArg::Structuring => {
                    let p = out.join(STRUCTURE_TABLE);
                    structure_majority_train(&train_set)?.save(&p)?;
                    (p, train_set.len())
                }
                _ => {
                    let p = out.join(TEMPLATES);
                    template_store_train(&train_set)?.save(&p)?;
                    (p, train_set.len())
                }
            };
            println!("majority table from {n} training inputs: {}", p.display());
            outputs.push(p);
        }
        (TaskArg::Reg, TrainEngine::Neural) => {
            let data = extract_reg_dataset(&c)?;
            let mut cfg = match profile {
                Profile::Desk => RegConfig::desk(),
                Profile::Paper => RegConfig::paper(),
            };
            if let Some(e) = a.epochs {
                cfg.epochs = e;
            }
            if let Some(b) = a.batch_size {
                cfg.batch_size = b;
            }
            if let Some(lr) = a.learning_rate {
                cfg.learning_rate = lr;
            }
            let mut reports = Vec::new();
            for &seed in &a.seeds {
                let (model, report) = reg_train(&data.train, &data.dev, &cfg, seed)?;
                let p = out.join(format!("reg-{seed}.ckpt"));
                model.save(&p)?;
                info!("saved {}", p.display());
                outputs.push(p);
                reports.push(report);
            }
            let p = out.join("train_report.json");
            write_json(&p, &reports)?;
            outputs.push(p);
        }
        (_, TrainEngine::Neural) => {
            let arch = match *a.arch.get_or_insert(ArchArg::Gru) {
                ArchArg::Gru => Arch::Gru,
                ArchArg::Transformer => Arch::Transformer,
            };
            let model_cfg = match profile {
                Profile::Desk => ModelConfig::desk(arch),
                Profile::Paper => ModelConfig::paper(arch),
            };
            let mut tcfg = match arch {
                Arch::Gru => TrainingConfig::default(),
                Arch::Transformer => TrainingConfig::transformer(),
            };
            if let Some(n) = a.max_updates {
                tcfg.max_updates = n;
            }
            if let Some(n) = a.eval_every {
                tcfg.eval_every = n;
            }
            if let Some(n) = a.batch_size {
                tcfg.batch_size = n;
            }
            if let Some(lr) = a.learning_rate {
                tcfg.learning_rate = lr;
            }
            let (default_merges, default_threshold) = match (task, profile) {
                (TaskArg::Lex | TaskArg::E2e, Profile::Desk) => (2_000, 5),
                (TaskArg::Lex | TaskArg::E2e, Profile::Paper) => (20_000, 50),
                (_, Profile::Desk) => (0, 5),
                (_, Profile::Paper) => (0, 50),
            };
            let merges = *a.bpe_merges.get_or_insert(default_merges);
            let threshold = *a.bpe_threshold.get_or_insert(default_threshold);
            let bpe = (merges > 0).then_some(BpeSettings { merges, threshold });
            let data = seq_splits(&c, task)?;
            let (engine, reports) = NeuralEngine::train(&data.train, &data.dev, &model_cfg, &tcfg, bpe, &a.seeds)?;
            for (model, seed) in engine.models.iter().zip(&a.seeds) {
                let p = out.join(format!("model-{seed}.ckpt"));
                NeuralEngine::new(vec![model.clone()], engine.bpe.clone())?.save(&p)?;
                println!("{}: best dev loss at update {}", p.display(), reports[outputs.len()].best_update);
                outputs.push(p);
            }
            let p = out.join("train_report.json");
            write_json(&p, &reports)?;
            outputs.push(p);
        }
    }

    let mut m = ctx.manifest(&a, a.seeds.clone())?;
    m.inputs.push(corpus_path);
    m.outputs = outputs;
    m.corpus = Some(version);
    finish(m, &out.join(format!("{}.manifest.json", task_name(task))))
}

fn task_name(t: TaskArg) -> &'static str {
    match t {
        TaskArg::Ordering => "ordering",
        TaskArg::Structuring => "structuring",
        TaskArg::Lex => "lex",
        TaskArg::Reg => "reg",
        TaskArg::E2e => "e2e",
        TaskArg::Realization => "realization",
    }
}

fn stage_engine(e: EngineArg) -> StageEngine {
    match e {
        EngineArg::Random => StageEngine::Random,
        EngineArg::Majority => StageEngine::Majority,
        EngineArg::Neural => StageEngine::Neural,
    }
}

fn load_engine(paths: &[PathBuf], flag: &str, beam: Option<usize>, inputs: &mut Vec<PathBuf>) -> Result<NeuralEngine> {
    if paths.is_empty() {
        bail!(UsageError(format!("a neural engine needs {flag}")));
    }
    let mut e = NeuralEngine::load(paths).with_context(|| format!("loading {flag}"))?;
    if let Some(b) = beam {
        e.beam = b;
    }
    inputs.extend(paths.iter().cloned());
    Ok(e)
}

fn load_tables(dir: &Path, models: &mut d2t_core::pipeline::PipelineModels, inputs: &mut Vec<PathBuf>) -> Result<()> {
    let mut found = false;
    let p = dir.join(ORDER_TABLE);
    if p.exists() {
        models.order = OrderModel::load(&p)?;
        inputs.push(p);
        found = true;
    }
    let p = dir.join(STRUCTURE_TABLE);
    if p.exists() {
        models.structure = StructModel::load(&p)?;
        inputs.push(p);
        found = true;
    }
    let p = dir.join(TEMPLATES);
    if p.exists() {
        models.templates = TemplateStore::load(&p)?;
        inputs.push(p);
        found = true;
    }
    let p = dir.join(RULES);
    if p.exists() {
        models.rules = RuleTable::load(&p)?;
        inputs.push(p);
        found = true;
    }
    if !found {
        bail!("{} holds no tables or rules", dir.display());
    }
    Ok(())
}

pub fn run(mut a: RunArgs, ctx: &Ctx) -> Result<()> {
    let corpus_path = require(&a.corpus, "--corpus")?;
    let out = require(&a.out, "--out")?;
    let mode = *a.mode.get_or_insert(Mode::Pipeline);
    let split = match *a.split.get_or_insert(SplitArg::Test) {
        SplitArg::Train => Split::Train,
        SplitArg::Dev => Split::Dev,
        SplitArg::Test => Split::Test,
    };
    let (c, version) = read_corpus(&corpus_path)?;
    let mut inputs = vec![corpus_path];

    let records: Vec<RunRecord> = match mode {
        Mode::E2e => {
            let engine = load_engine(&a.e2e_model, "--e2e-model", a.beam, &mut inputs)?;
            run_split_e2e(&c, split, &engine, ctx.seed)
        }
        Mode::Pipeline => {
            let cfg = PipelineConfig {
                ordering: stage_engine(*a.ordering.get_or_insert(EngineArg::Majority)),
                structuring: stage_engine(*a.structuring.get_or_insert(EngineArg::Majority)),
                lexicalization: stage_engine(*a.lex.get_or_insert(EngineArg::Majority)),
                reg: match *a.reg.get_or_insert(RegArg::OnlyNames) {
                    RegArg::OnlyNames => RegEngine::OnlyNames,
                    RegArg::Neural => RegEngine::Neural,
                },
                seed: ctx.seed,
                oracle_upto: a.oracle_upto.map(|s| match s {
                    StageArg::Ordering => Stage::Ordering,
                    StageArg::Structuring => Stage::Structuring,
                    StageArg::Lex => Stage::Lexicalization,
                    StageArg::Reg => Stage::Reg,
                }),
            };
            let mut models = train_majority_models(&c)?;
            if let Some(dir) = &a.tables {
                load_tables(dir, &mut models, &mut inputs)?;
            }
            if cfg.ordering == StageEngine::Neural {
                models.order_net = Some(load_engine(&a.ordering_model, "--ordering-model", a.beam, &mut inputs)?);
            }
            if cfg.structuring == StageEngine::Neural {
                models.structure_net =
                    Some(load_engine(&a.structuring_model, "--structuring-model", a.beam, &mut inputs)?);
            }
            if cfg.lexicalization == StageEngine::Neural {
                models.lex_net = Some(load_engine(&a.lex_model, "--lex-model", a.beam, &mut inputs)?);
            }
            if cfg.reg == RegEngine::Neural {
                let p = a.reg_model.clone().ok_or_else(|| UsageError("--reg neural needs --reg-model".into()))?;
                let m = RegModel::load(&p).with_context(|| format!("loading {}", p.display()))?;
                models.seen_entities = m.seen_entities();
                models.reg = Some(m);
                inputs.push(p);
            }
            run_split(&c, split, &cfg, &models)?
        }
    };

    create_dir(&out)?;
    let run_file = out.join(RUN_FILE);
    write_records(&run_file, &records)?;
    println!("{} texts written to {}", records.len(), run_file.display());
    let mut m = ctx.manifest(&a, vec![ctx.seed])?;
    m.inputs = inputs;
    m.outputs.push(run_file);
    m.corpus = Some(version);
    finish(m, &manifest_path(&out, true))
}

fn run_label(records: &[RunRecord]) -> String {
    let name = |e: StageEngine| match e {
        StageEngine::Random => "random",
        StageEngine::Majority => "majority",
        StageEngine::Neural => "neural",
    };
    match records.first().map(|r| &r.config) {
        Some(RunConfig::Pipeline(p)) => {
            let reg = match p.reg {
                RegEngine::OnlyNames => "onlynames",
                RegEngine::Neural => "neural",
            };
            let mut label = format!(
                "{}/{}/{}/{reg}",
                name(p.ordering),
                name(p.structuring),
                name(p.lexicalization)
            );
            if let Some(s) = p.oracle_upto {
                label += &format!(" (oracle to {s:?})").to_lowercase();
            }
            label
        }
        Some(RunConfig::E2e { .. }) => "end-to-end".into(),
        None => "empty run".into(),
    }
}

pub fn render_eval(report: &EvalReport, label: &str, metric: Metric) -> String {
    let (title, header): (&str, &[&str]) = match metric {
        Metric::Bleu => ("BLEU", &["Model", "All", "Seen", "Unseen", "METEOR"]),
        Metric::Accuracy => ("Accuracy", &["Model", "All", "Seen", "Unseen"]),
    };
    let mut cells = Cell::of(report).to_vec();
    if metric == Metric::Bleu {
        cells.push(Cell::Score(None));
    }
    cells.push(Cell::Count(report.all.count));
    let mut header = header.to_vec();
    header.push("N");
    let mut text = render_table(
        title,
        &header,
        &[TableRow {
            label: label.to_owned(),
            cells,
        }],
        2,
    );
    text.push('\n');
    text += &render_domains(report, 2);
    text
}

pub fn eval(mut a: EvalArgs, ctx: &Ctx) -> Result<()> {
    let run = require(&a.run, "--run")?;
    let refs = require(&a.refs, "--refs")?;
    let metric = *a.metric.get_or_insert(Metric::Bleu);
    let run_file = if run.is_dir() { run.join(RUN_FILE) } else { run.clone() };
    let records: Vec<RunRecord> = read_records(&run_file).with_context(|| format!("reading run {}", run_file.display()))?;
    let (c, version) = read_corpus(&refs)?;
    let report = match metric {
        Metric::Bleu => run_bleu(&c, &records)?,
        Metric::Accuracy => run_accuracy(&c, &records)?,
    };
    let text = render_eval(&report, &run_label(&records), metric);
    print!("{text}");
    if let Some(out) = &a.out {
        create_dir(out)?;
        let json = out.join("report.json");
        let txt = out.join("report.txt");
        write_json(&json, &report)?;
        fs::write(&txt, &text)?;
        let mut m = ctx.manifest(&a, vec![ctx.seed])?;
        m.inputs = vec![run_file, refs];
        m.outputs = vec![json, txt];
        m.corpus = Some(version);
        finish(m, &manifest_path(out, true))?;
    }
    Ok(())
}

pub fn report(mut a: ReportArgs, ctx: &Ctx) -> Result<()> {
    let corpus_path = require(&a.corpus, "--corpus")?;
    if a.seeds.is_empty() {
        a.seeds = vec![1, 2, 3, 4, 5];
    }
    let (c, version) = read_corpus(&corpus_path)?;
    let results = baselines(&c, &a.seeds)?;
    let text = results.render();
    print!("{text}");
    if let Some(out) = &a.out {
        create_dir(out)?;
        let json = out.join("baselines.json");
        let txt = out.join("report.txt");
        write_json(&json, &results)?;
        fs::write(&txt, &text)?;
        let mut m = ctx.manifest(&a, a.seeds.clone())?;
        m.inputs.push(corpus_path);
        m.outputs = vec![json, txt];
        m.corpus = Some(version);
        finish(m, &manifest_path(out, true))?;
    }
    Ok(())
}
