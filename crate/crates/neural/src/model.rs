//! Encoder-decoder models behind one interface.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::NeuralError;
use crate::graph::{Graph, NodeId};
use crate::gru::{GruMemory, GruNet};
use crate::layers::Dropout;
use crate::matrix::Matrix;
use crate::params::ParamStore;
use crate::transformer::TransformerNet;
use crate::vocab::{Vocab, BOS_ID, EOS_ID};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Gru,
    Transformer,
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::Gru => "gru",
            Arch::Transformer => "transformer",
        })
    }
}

impl FromStr for Arch {
    type Err = NeuralError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gru" => Ok(Arch::Gru),
            "transformer" => Ok(Arch::Transformer),
            other => Err(NeuralError::Config(format!("unknown architecture `{other}`"))),
        }
    }
}

/// Network shape. For the GRU `hidden_dim` is the recurrent state size; for
/// the Transformer it is the inner feed-forward size and `emb_dim` is the
/// model dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    pub emb_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub tied_embeddings: bool,
    pub layer_norm: bool,
    pub dropout_embedding: f64,
    pub dropout_hidden: f64,
}

impl ModelConfig {
    /// Small shapes that train on a laptop CPU in minutes.
    pub fn desk(arch: Arch) -> Self {
        ModelConfig {
            arch,
            emb_dim: 64,
            hidden_dim: if arch == Arch::Gru { 64 } else { 128 },
            layers: 2,
            heads: 2,
            tied_embeddings: true,
            layer_norm: true,
            dropout_embedding: 0.1,
            dropout_hidden: if arch == Arch::Gru { 0.2 } else { 0.1 },
        }
    }

    /// Full-size settings (300/512 GRU; 6×512/2048/8-head Transformer).
    pub fn paper(arch: Arch) -> Self {
        match arch {
            Arch::Gru => ModelConfig {
                arch,
                emb_dim: 300,
                hidden_dim: 512,
                layers: 1,
                heads: 1,
                tied_embeddings: true,
                layer_norm: true,
                dropout_embedding: 0.1,
                dropout_hidden: 0.2,
            },
            Arch::Transformer => ModelConfig {
                arch,
                emb_dim: 512,
                hidden_dim: 2048,
                layers: 6,
                heads: 8,
                tied_embeddings: true,
                layer_norm: true,
                dropout_embedding: 0.1,
                dropout_hidden: 0.1,
            },
        }
    }

    pub fn without_dropout(mut self) -> Self {
        self.dropout_embedding = 0.0;
        self.dropout_hidden = 0.0;
        self
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.emb_dim == 0 || self.hidden_dim == 0 || self.layers == 0 || self.heads == 0 {
            return Err(NeuralError::Config("dimensions must be positive".into()));
        }
        if self.arch == Arch::Transformer && self.emb_dim % self.heads != 0 {
            return Err(NeuralError::Config(format!(
                "model dimension {} not divisible by {} heads",
                self.emb_dim, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_embedding) || !(0.0..1.0).contains(&self.dropout_hidden) {
            return Err(NeuralError::Config("dropout must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Incremental decoding interface used by beam search and ensembling.
pub trait StepDecoder {
    type Memory;
    type State: Clone;

    fn output_size(&self) -> usize;

    /// Encodes the source and returns the decoder's initial state.
    fn start(&self, src: &[usize]) -> (Self::Memory, Self::State);

    /// Consumes `prev` and returns the log-probabilities of the next token
    /// together with the state after `prev`.
    fn step(&self, memory: &Self::Memory, state: &Self::State, prev: usize) -> (Vec<f64>, Self::State);
}

/// Anything trainable with the shared optimizer loop.
pub trait Trainable {
    type Example;

    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;

    /// Summed token loss of one example and the number of predicted tokens.
    fn example_loss<'p>(
        &'p self,
        g: &mut Graph<'p>,
        example: &Self::Example,
        dropout: &mut Dropout,
        label_smoothing: f64,
    ) -> (NodeId, usize);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Net {
    Gru(GruNet),
    Transformer(TransformerNet),
}

/// A source/target pair of token ids (without BOS/EOS).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pair {
    pub src: Vec<usize>,
    pub tgt: Vec<usize>,
}

/// An encoder-decoder over one shared vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seq2SeqModel {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub params: ParamStore,
    pub net: Net,
    pub updates: u64,
}

pub enum Memory {
    Gru(GruMemory),
    Transformer(Matrix),
}

#[derive(Clone)]
pub enum State {
    /// Recurrent decoder state.
    Gru(Matrix),
    /// Tokens consumed so far (the decoder is re-run over the prefix).
    Transformer(Vec<usize>),
}

impl Seq2SeqModel {
    pub fn new(config: ModelConfig, vocab: Vocab, seed: u64) -> Result<Self, NeuralError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let net = match config.arch {
            Arch::Gru => Net::Gru(GruNet::new(&config, vocab.len(), &mut params, &mut rng)),
            Arch::Transformer => Net::Transformer(TransformerNet::new(
                &config,
                vocab.len(),
                &mut params,
                &mut rng,
            )),
        };
        Ok(Seq2SeqModel {
            config,
            vocab,
            params,
            net,
            updates: 0,
        })
    }

    pub fn arch(&self) -> Arch {
        self.config.arch
    }

    pub fn encode_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        self.vocab.encode(tokens)
    }

    pub fn pair<S: AsRef<str>, T: AsRef<str>>(&self, src: &[S], tgt: &[T]) -> Pair {
        Pair {
            src: self.vocab.encode(src),
            tgt: self.vocab.encode(tgt),
        }
    }

    /// Teacher-forced summed loss over `tgt` followed by end-of-sequence.
    pub fn loss<'p>(
        &'p self,
        g: &mut Graph<'p>,
        src: &[usize],
        tgt: &[usize],
        dropout: &mut Dropout,
        label_smoothing: f64,
    ) -> NodeId {
        let mut inputs = Vec::with_capacity(tgt.len() + 1);
        inputs.push(BOS_ID);
        inputs.extend_from_slice(tgt);
        let mut targets = tgt.to_vec();
        targets.push(EOS_ID);
        let logits = match &self.net {
            Net::Gru(n) => n.logits(g, &self.config, src, &inputs, dropout),
            Net::Transformer(n) => n.logits(g, &self.config, src, &inputs, dropout),
        };
        g.cross_entropy(logits, &targets, label_smoothing)
    }

    /// The matrix used as output projection (shared with the embeddings when
    /// tied).
    pub fn output_embedding(&self) -> &Matrix {
        match &self.net {
            Net::Gru(n) => self.params.get(n.output_embedding()),
            Net::Transformer(n) => self.params.get(n.output_embedding()),
        }
    }
}

impl Trainable for Seq2SeqModel {
    type Example = Pair;

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn example_loss<'p>(
        &'p self,
        g: &mut Graph<'p>,
        example: &Pair,
        dropout: &mut Dropout,
        label_smoothing: f64,
    ) -> (NodeId, usize) {
        let l = self.loss(g, &example.src, &example.tgt, dropout, label_smoothing);
        (l, example.tgt.len() + 1)
    }
}

impl StepDecoder for Seq2SeqModel {
    type Memory = Memory;
    type State = State;

    fn output_size(&self) -> usize {
        self.vocab.len()
    }

    fn start(&self, src: &[usize]) -> (Memory, State) {
        match &self.net {
            Net::Gru(n) => {
                let (mem, s0) = n.encode_for_decoding(&self.params, &self.config, src);
                (Memory::Gru(mem), State::Gru(s0))
            }
            Net::Transformer(n) => {
                let mem = n.encode_for_decoding(&self.params, &self.config, src);
                (Memory::Transformer(mem), State::Transformer(Vec::new()))
            }
        }
    }

    fn step(&self, memory: &Memory, state: &State, prev: usize) -> (Vec<f64>, State) {
        match (&self.net, memory, state) {
            (Net::Gru(n), Memory::Gru(m), State::Gru(s)) => {
                let (lp, s2) = n.decode_step(&self.params, &self.config, m, s, prev);
                (lp, State::Gru(s2))
            }
            (Net::Transformer(n), Memory::Transformer(m), State::Transformer(consumed)) => {
                let mut prefix = consumed.clone();
                prefix.push(prev);
                let lp = n.decode_step(&self.params, &self.config, m, &prefix);
                (lp, State::Transformer(prefix))
            }
            _ => unreachable!("memory/state do not match the network"),
        }
    }
}
