//! Beam search, greedy decoding and probability-space ensembling.

use crate::error::NeuralError;
use crate::model::{Seq2SeqModel, StepDecoder};
use crate::vocab::{BOS_ID, EOS_ID};

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Output ids without the end-of-sequence marker.
    pub tokens: Vec<usize>,
    /// Summed log-probability, including the end-of-sequence step when
    /// `finished`.
    pub log_prob: f64,
    /// `log_prob` divided by the number of scored steps.
    pub score: f64,
    pub finished: bool,
}

struct Live<S> {
    tokens: Vec<usize>,
    log_prob: f64,
    state: S,
}

fn finish(tokens: Vec<usize>, log_prob: f64, steps: usize, finished: bool) -> Hypothesis {
    Hypothesis {
        tokens,
        log_prob,
        score: log_prob / steps.max(1) as f64,
        finished,
    }
}

fn check_source(src: &[usize]) -> Result<(), NeuralError> {
    if src.is_empty() {
        return Err(NeuralError::EmptyInput("source sequence".into()));
    }
    Ok(())
}

/// Length-bounded beam search. Candidates are pruned on cumulative
/// log-probability; finished hypotheses are ranked by length-normalized
/// score. Returns at least one hypothesis, best first.
pub fn beam_search<M: StepDecoder>(
    model: &M,
    src: &[usize],
    beam: usize,
    max_len: usize,
) -> Result<Vec<Hypothesis>, NeuralError> {
    check_source(src)?;
    if beam == 0 {
        return Err(NeuralError::Config("beam size must be at least 1".into()));
    }
    let (memory, state) = model.start(src);
    let mut live = vec![Live {
        tokens: Vec::new(),
        log_prob: 0.0,
        state,
    }];
    let mut done: Vec<Hypothesis> = Vec::new();
    let mut steps = 0;
    while !live.is_empty() && done.len() < beam {
        if steps == max_len {
            for h in live.drain(..) {
                let n = h.tokens.len();
                done.push(finish(h.tokens, h.log_prob, n, false));
            }
            break;
        }
        steps += 1;
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        let mut next_states = Vec::with_capacity(live.len());
        for (i, h) in live.iter().enumerate() {
            let prev = h.tokens.last().copied().unwrap_or(BOS_ID);
            let (logp, next) = model.step(&memory, &h.state, prev);
            next_states.push(next);
            for (tok, lp) in logp.iter().enumerate() {
                candidates.push((h.log_prob + lp, i, tok));
            }
        }
        // Stable order on ties: lower hypothesis index, then lower token id.
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let width = beam - done.len();
        let mut next_live = Vec::with_capacity(width);
        for &(lp, i, tok) in candidates.iter().take(width) {
            if tok == EOS_ID {
                done.push(finish(live[i].tokens.clone(), lp, steps, true));
            } else {
                let mut tokens = live[i].tokens.clone();
                tokens.push(tok);
                next_live.push(Live {
                    tokens,
                    log_prob: lp,
                    state: next_states[i].clone(),
                });
            }
        }
        live = next_live;
    }
    done.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(done)
}

/// Argmax decoding, one token at a time.
pub fn greedy<M: StepDecoder>(model: &M, src: &[usize], max_len: usize) -> Result<Hypothesis, NeuralError> {
    check_source(src)?;
    let (memory, mut state) = model.start(src);
    let mut tokens = Vec::new();
    let mut log_prob = 0.0;
    let mut prev = BOS_ID;
    for step in 1..=max_len {
        let (logp, next) = model.step(&memory, &state, prev);
        let (best, lp) = logp
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        log_prob += lp;
        if best == EOS_ID {
            return Ok(finish(tokens, log_prob, step, true));
        }
        tokens.push(best);
        state = next;
        prev = best;
    }
    let n = tokens.len();
    Ok(finish(tokens, log_prob, n, false))
}

/// Averages member next-token distributions in probability space.
pub struct Ensemble<'a> {
    members: Vec<&'a Seq2SeqModel>,
}

impl<'a> Ensemble<'a> {
    pub fn new(members: &[&'a Seq2SeqModel]) -> Result<Self, NeuralError> {
        let first = members
            .first()
            .ok_or_else(|| NeuralError::EmptyInput("ensemble needs at least one model".into()))?;
        for m in &members[1..] {
            if m.vocab.tokens() != first.vocab.tokens() {
                return Err(NeuralError::Incompatible("vocabularies differ".into()));
            }
            if m.arch() != first.arch() {
                return Err(NeuralError::Incompatible(format!(
                    "architectures differ: {} vs {}",
                    first.arch(),
                    m.arch()
                )));
            }
        }
        Ok(Ensemble {
            members: members.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

impl StepDecoder for Ensemble<'_> {
    type Memory = Vec<<Seq2SeqModel as StepDecoder>::Memory>;
    type State = Vec<<Seq2SeqModel as StepDecoder>::State>;

    fn output_size(&self) -> usize {
        self.members[0].output_size()
    }

    fn start(&self, src: &[usize]) -> (Self::Memory, Self::State) {
        self.members.iter().map(|m| m.start(src)).unzip()
    }

    fn step(&self, memory: &Self::Memory, state: &Self::State, prev: usize) -> (Vec<f64>, Self::State) {
        let mut outs: Vec<Vec<f64>> = Vec::with_capacity(self.members.len());
        let mut states = Vec::with_capacity(self.members.len());
        for ((m, mem), st) in self.members.iter().zip(memory).zip(state) {
            let (lp, next) = m.step(mem, st, prev);
            outs.push(lp);
            states.push(next);
        }
        if outs.len() == 1 {
            return (outs.pop().unwrap_or_default(), states);
        }
        let ln_n = (outs.len() as f64).ln();
        let averaged = (0..outs[0].len())
            .map(|k| {
                let max = outs.iter().map(|o| o[k]).fold(f64::NEG_INFINITY, f64::max);
                if max == f64::NEG_INFINITY {
                    return max;
                }
                let s: f64 = outs.iter().map(|o| (o[k] - max).exp()).sum();
                max + s.ln() - ln_n
            })
            .collect();
        (averaged, states)
    }
}

/// Beam search over the probability-averaged ensemble of `models`.
pub fn ensemble_decode(
    models: &[&Seq2SeqModel],
    src: &[usize],
    beam: usize,
    max_len: usize,
) -> Result<Vec<Hypothesis>, NeuralError> {
    let e = Ensemble::new(models)?;
    beam_search(&e, src, beam, max_len)
}
