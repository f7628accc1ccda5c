use std::sync::OnceLock;
use std::time::Instant;

use d2t_neural::beam::{beam_search, ensemble_decode};
use d2t_neural::train::{train, TrainingConfig};
use d2t_neural::{Arch, ModelConfig, NeuralError, Pair, Seq2SeqModel, Vocab};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SYMBOLS: usize = 10;

fn copy_vocab() -> Vocab {
    let mut toks: Vec<String> = vec!["<unk>".into(), "<s>".into(), "</s>".into()];
    toks.extend((0..SYMBOLS).map(|i| format!("s{i}")));
    Vocab::from_tokens(toks)
}

fn copy_pairs(n: usize, seed: u64) -> Vec<Pair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.gen_range(3..8);
            let src: Vec<usize> = (0..len).map(|_| rng.gen_range(3..3 + SYMBOLS)).collect();
            Pair {
                tgt: src.clone(),
                src,
            }
        })
        .collect()
}

fn copy_config() -> TrainingConfig {
    TrainingConfig {
        learning_rate: 3e-3,
        max_updates: 800,
        eval_every: 100,
        patience: 5,
        batch_size: 10,
        ..TrainingConfig::default()
    }
}

fn train_copy(seed: u64) -> Seq2SeqModel {
    let pairs = copy_pairs(200, 1);
    let mut m = Seq2SeqModel::new(ModelConfig::desk(Arch::Gru), copy_vocab(), seed).unwrap();
    let t = Instant::now();
    let report = train(&mut m, &pairs, &[], &copy_config(), seed).unwrap();
    eprintln!(
        "copy model seed {seed}: {} updates, best dev loss {:.5} in {:.1}s",
        report.updates,
        report.best_dev_loss,
        t.elapsed().as_secs_f64()
    );
    m
}

fn copy_models() -> &'static [Seq2SeqModel; 2] {
    static MODELS: OnceLock<[Seq2SeqModel; 2]> = OnceLock::new();
    MODELS.get_or_init(|| [train_copy(7), train_copy(8)])
}

#[test]
fn copy_task_reaches_sequence_accuracy() {
    let m = &copy_models()[0];
    let pairs = copy_pairs(200, 1);
    let correct = pairs
        .iter()
        .filter(|p| beam_search(m, &p.src, 5, 100).unwrap()[0].tokens == p.tgt)
        .count();
    let acc = correct as f64 / pairs.len() as f64;
    assert!(acc >= 0.99, "copy accuracy {acc}");
}

#[test]
fn wider_beam_never_scores_lower() {
    let m = &copy_models()[0];
    for p in copy_pairs(20, 2) {
        let one = beam_search(m, &p.src, 1, 100).unwrap();
        let five = beam_search(m, &p.src, 5, 100).unwrap();
        assert!(five[0].score >= one[0].score - 1e-12, "{} < {}", five[0].score, one[0].score);
    }
}

#[test]
fn two_seed_ensemble_still_copies() {
    let [a, b] = copy_models();
    let pairs = copy_pairs(50, 3);
    let correct = pairs
        .iter()
        .filter(|p| ensemble_decode(&[a, b], &p.src, 5, 100).unwrap()[0].tokens == p.tgt)
        .count();
    assert!(correct as f64 / pairs.len() as f64 >= 0.9, "{correct}/50");
}

#[test]
fn frozen_rate_with_patience_one_stops_after_two_evaluations() {
    let pairs = copy_pairs(20, 4);
    let mut m = Seq2SeqModel::new(ModelConfig::desk(Arch::Gru), copy_vocab(), 1).unwrap();
    let cfg = TrainingConfig {
        learning_rate: 0.0,
        eval_every: 2,
        patience: 1,
        batch_size: 5,
        ..TrainingConfig::default()
    };
    let report = train(&mut m, &pairs, &pairs[..5], &cfg, 1).unwrap();
    assert_eq!(report.evaluations.len(), 2);
    assert!(report.stopped_early);
    assert_eq!(report.updates, 4);
}

#[test]
fn same_seed_gives_bit_identical_parameters() {
    let pairs = copy_pairs(30, 5);
    let cfg = TrainingConfig {
        max_updates: 6,
        eval_every: 3,
        batch_size: 5,
        ..TrainingConfig::transformer()
    };
    for arch in [Arch::Gru, Arch::Transformer] {
        let run = || {
            let mut m = Seq2SeqModel::new(ModelConfig::desk(arch), copy_vocab(), 11).unwrap();
            let r = train(&mut m, &pairs, &[], &cfg, 11).unwrap();
            (m, r)
        };
        let (a, ra) = run();
        let (b, rb) = run();
        assert_eq!(ra, rb);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}

#[test]
fn divergence_is_reported() {
    let pairs = copy_pairs(10, 6);
    let mut m = Seq2SeqModel::new(ModelConfig::desk(Arch::Gru), copy_vocab(), 1).unwrap();
    let id = m.params.ids().next().unwrap();
    m.params.get_mut(id).data.iter_mut().for_each(|x| *x = f64::NAN);
    let err = train(&mut m, &pairs, &[], &copy_config(), 1).unwrap_err();
    assert!(matches!(err, NeuralError::Diverged { update: 1, .. }), "{err}");
}

#[test]
fn empty_training_set_is_rejected() {
    let mut m = Seq2SeqModel::new(ModelConfig::desk(Arch::Gru), copy_vocab(), 1).unwrap();
    assert!(train(&mut m, &[], &[], &copy_config(), 1).is_err());
}
