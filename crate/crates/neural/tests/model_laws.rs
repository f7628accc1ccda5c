use d2t_neural::beam::{beam_search, ensemble_decode, greedy};
use d2t_neural::checkpoint::Seq2SeqCheckpoint;
use d2t_neural::graph::Graph;
use d2t_neural::layers::Dropout;
use d2t_neural::model::Net;
use d2t_neural::vocab::{BOS_ID, EOS_ID};
use d2t_neural::{Arch, ModelConfig, Seq2SeqModel, StepDecoder, Vocab};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn vocab(n: usize) -> Vocab {
    let mut toks: Vec<String> = vec!["<unk>".into(), "<s>".into(), "</s>".into()];
    toks.extend((0..n).map(|i| format!("w{i}")));
    Vocab::from_tokens(toks)
}

fn small(arch: Arch) -> ModelConfig {
    ModelConfig {
        emb_dim: 16,
        hidden_dim: 24,
        heads: 2,
        ..ModelConfig::desk(arch).without_dropout()
    }
}

fn random_seq(rng: &mut ChaCha8Rng, vocab_len: usize, len: usize) -> Vec<usize> {
    (0..len).map(|_| rng.gen_range(3..vocab_len)).collect()
}

fn embedding_ids(m: &Seq2SeqModel) -> (usize, usize, usize) {
    match &m.net {
        Net::Gru(n) => (n.source_embedding().0, n.target_embedding().0, n.output_embedding().0),
        Net::Transformer(n) => (n.source_embedding().0, n.target_embedding().0, n.output_embedding().0),
    }
}

#[test]
fn tied_embeddings_share_one_matrix() {
    for arch in [Arch::Gru, Arch::Transformer] {
        let m = Seq2SeqModel::new(small(arch), vocab(10), 1).unwrap();
        let (s, t, o) = embedding_ids(&m);
        assert_eq!((s, s), (t, o));

        let untied = Seq2SeqModel::new(
            ModelConfig {
                tied_embeddings: false,
                ..small(arch)
            },
            vocab(10),
            1,
        )
        .unwrap();
        let v = 13;
        let e = 16;
        assert_eq!(
            untied.params.num_scalars() - m.params.num_scalars(),
            2 * v * e,
            "{arch}"
        );
    }
}

#[test]
fn mutating_shared_embedding_moves_encoder_decoder_and_output() {
    for arch in [Arch::Gru, Arch::Transformer] {
        let m = Seq2SeqModel::new(small(arch), vocab(10), 2).unwrap();
        let emb = embedding_ids(&m).0;
        let src = [5, 6, 7];
        let (mem_before, st) = m.start(&src);
        let (lp_before, _) = m.step(&mem_before, &st, BOS_ID);

        // Row 5 only appears in the source: the encoder must see the change.
        let mut a = m.clone();
        a.params.get_mut(d2t_neural::params::ParamId(emb)).row_mut(5)[0] += 0.5;
        let (mem_a, st_a) = a.start(&src);
        let (lp_a, _) = a.step(&mem_a, &st_a, BOS_ID);
        assert_ne!(lp_before, lp_a, "{arch}: encoder input ignored the shared matrix");

        // Row of BOS feeds the decoder input only.
        let mut b = m.clone();
        b.params.get_mut(d2t_neural::params::ParamId(emb)).row_mut(BOS_ID)[0] += 0.5;
        let (mem_b, st_b) = b.start(&[8, 9, 10]);
        let (mem_m, st_m) = m.start(&[8, 9, 10]);
        let (lp_b, _) = b.step(&mem_b, &st_b, BOS_ID);
        let (lp_m, _) = m.step(&mem_m, &st_m, BOS_ID);
        assert_ne!(lp_b, lp_m, "{arch}: decoder input ignored the shared matrix");

        // Row of token 12 never enters as input here, so only its output
        // logit moves.
        let mut c = m.clone();
        c.params.get_mut(d2t_neural::params::ParamId(emb)).row_mut(12)[0] += 0.5;
        let (mem_c, st_c) = c.start(&src);
        let (lp_c, _) = c.step(&mem_c, &st_c, BOS_ID);
        let shift = |lp: &[f64], k: usize| lp[k] - lp[3];
        assert_ne!(shift(&lp_c, 12), shift(&lp_before, 12), "{arch}: output projection not shared");
        assert!((shift(&lp_c, 4) - shift(&lp_before, 4)).abs() < 1e-12, "{arch}");
        assert_eq!(c.output_embedding().row(12)[0], m.output_embedding().row(12)[0] + 0.5);
    }
}

#[test]
fn teacher_forced_loss_matches_incremental_decoding() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for arch in [Arch::Gru, Arch::Transformer] {
        let m = Seq2SeqModel::new(small(arch), vocab(12), 4).unwrap();
        for _ in 0..5 {
            let src = random_seq(&mut rng, 15, 4);
            let tgt = random_seq(&mut rng, 15, 5);
            let mut g = Graph::new(&m.params);
            let l = m.loss(&mut g, &src, &tgt, &mut Dropout::inactive(), 0.0);
            let forced = g.scalar(l);

            let (mem, mut st) = m.start(&src);
            let mut prev = BOS_ID;
            let mut stepped = 0.0;
            for &t in tgt.iter().chain(std::iter::once(&EOS_ID)) {
                let (lp, next) = m.step(&mem, &st, prev);
                stepped -= lp[t];
                st = next;
                prev = t;
            }
            assert!(
                (forced - stepped).abs() < 1e-9 * forced.abs().max(1.0),
                "{arch}: {forced} vs {stepped}"
            );
        }
    }
}

#[test]
fn beam_of_one_is_greedy() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for arch in [Arch::Gru, Arch::Transformer] {
        let m = Seq2SeqModel::new(small(arch), vocab(12), 6).unwrap();
        for _ in 0..20 {
            let len = rng.gen_range(1..8);
            let src = random_seq(&mut rng, 15, len);
            let b = beam_search(&m, &src, 1, 12).unwrap();
            let g = greedy(&m, &src, 12).unwrap();
            assert_eq!(b[0].tokens, g.tokens, "{arch}");
            assert!((b[0].log_prob - g.log_prob).abs() < 1e-12);
        }
    }
}

#[test]
fn hypotheses_are_sorted_and_bounded() {
    let m = Seq2SeqModel::new(small(Arch::Gru), vocab(12), 7).unwrap();
    let hyps = beam_search(&m, &[4, 5, 6], 4, 6).unwrap();
    assert!(!hyps.is_empty());
    for w in hyps.windows(2) {
        assert!(w[0].score >= w[1].score);
    }
    for h in &hyps {
        assert!(h.tokens.len() <= 6);
        assert!(!h.tokens.contains(&EOS_ID));
    }
}

#[test]
fn empty_source_is_an_error() {
    let m = Seq2SeqModel::new(small(Arch::Gru), vocab(4), 8).unwrap();
    assert!(beam_search(&m, &[], 5, 10).is_err());
    assert!(greedy(&m, &[], 10).is_err());
}

#[test]
fn singleton_and_duplicated_ensembles_match_single_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for arch in [Arch::Gru, Arch::Transformer] {
        let m = Seq2SeqModel::new(small(arch), vocab(12), 10).unwrap();
        let copies = [m.clone(), m.clone(), m.clone()];
        let triple: Vec<&Seq2SeqModel> = copies.iter().collect();
        for _ in 0..5 {
            let src = random_seq(&mut rng, 15, 5);
            let single = beam_search(&m, &src, 3, 10).unwrap();
            let one = ensemble_decode(&[&m], &src, 3, 10).unwrap();
            assert_eq!(single, one, "{arch}");
            let three = ensemble_decode(&triple, &src, 3, 10).unwrap();
            assert_eq!(single[0].tokens, three[0].tokens);
            assert!((single[0].score - three[0].score).abs() < 1e-9);
        }
    }
}

#[test]
fn ensemble_rejects_vocabulary_mismatch() {
    let a = Seq2SeqModel::new(small(Arch::Gru), vocab(12), 1).unwrap();
    let b = Seq2SeqModel::new(small(Arch::Gru), vocab(13), 1).unwrap();
    assert!(ensemble_decode(&[&a, &b], &[4], 2, 5).is_err());
}

#[test]
fn checkpoint_roundtrip_preserves_decoding() {
    let dir = std::env::temp_dir().join(format!("d2t-neural-ckpt-{}", std::process::id()));
    for arch in [Arch::Gru, Arch::Transformer] {
        let m = Seq2SeqModel::new(small(arch), vocab(12), 11).unwrap();
        let path = dir.join(format!("{arch}.ckpt"));
        let ckpt = Seq2SeqCheckpoint { model: m, bpe: None };
        ckpt.save(&path).unwrap();
        assert_eq!(d2t_neural::checkpoint::peek_kind(&path).unwrap(), "seq2seq");
        let back = Seq2SeqCheckpoint::load(&path).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.model.vocab.id("w3"), ckpt.model.vocab.id("w3"));
        let src = [4, 9, 5];
        assert_eq!(
            beam_search(&back.model, &src, 3, 8).unwrap(),
            beam_search(&ckpt.model, &src, 3, 8).unwrap()
        );
    }
    let _ = std::fs::remove_dir_all(dir);
}

#[test]
fn checkpoint_rejects_wrong_kind_and_garbage() {
    let dir = std::env::temp_dir().join(format!("d2t-neural-bad-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join("x.ckpt");
    d2t_neural::checkpoint::write(&p, "other", &vec![1, 2, 3]).unwrap();
    assert!(Seq2SeqCheckpoint::load(&p).is_err());
    std::fs::write(&p, "not a checkpoint\n{}").unwrap();
    assert!(Seq2SeqCheckpoint::load(&p).is_err());
    let _ = std::fs::remove_dir_all(dir);
}
