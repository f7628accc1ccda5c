//! Bidirectional GRU encoder with an attentional conditional-GRU decoder.
//!
//! The decoder runs two GRU transitions per output token: the first consumes
//! the previous target embedding, attention is computed from its state, and
//! the second consumes the attended context. A deep-output readout combines
//! decoder state, context and previous embedding before projecting onto the
//! (optionally tied) output embedding matrix.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{Graph, NodeId};
use crate::layers::{AdditiveAttention, Dropout, GruCell, Linear};
use crate::matrix::{log_softmax, Matrix};
use crate::model::ModelConfig;
use crate::params::{ParamId, ParamStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruNet {
    src_emb: ParamId,
    tgt_emb: ParamId,
    out_emb: ParamId,
    enc_fwd: GruCell,
    enc_bwd: GruCell,
    init: Linear,
    dec_input: GruCell,
    attention: AdditiveAttention,
    dec_context: GruCell,
    readout_state: Linear,
    readout_ctx: Linear,
    readout_prev: Linear,
    out_bias: ParamId,
}

/// Encoder annotations and their attention-key projection.
pub struct GruMemory {
    pub annotations: Matrix,
    pub keys: Matrix,
}

impl GruNet {
    pub fn new(cfg: &ModelConfig, vocab: usize, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Self {
        let (e, h) = (cfg.emb_dim, cfg.hidden_dim);
        let ln = cfg.layer_norm;
        let src_emb = store.add_normal("embedding", vocab, e, 0.1, rng);
        let (tgt_emb, out_emb) = if cfg.tied_embeddings {
            (src_emb, src_emb)
        } else {
            (
                store.add_normal("decoder.embedding", vocab, e, 0.1, rng),
                store.add_normal("output.embedding", vocab, e, 0.1, rng),
            )
        };
        GruNet {
            src_emb,
            tgt_emb,
            out_emb,
            enc_fwd: GruCell::new(store, "encoder.forward", e, h, ln, rng),
            enc_bwd: GruCell::new(store, "encoder.backward", e, h, ln, rng),
            init: Linear::new(store, "decoder.init", 2 * h, h, true, rng),
            dec_input: GruCell::new(store, "decoder.gru1", e, h, ln, rng),
            attention: AdditiveAttention::new(store, "decoder.attention", 2 * h, h, h, rng),
            dec_context: GruCell::new(store, "decoder.gru2", 2 * h, h, ln, rng),
            readout_state: Linear::new(store, "readout.state", h, e, true, rng),
            readout_ctx: Linear::new(store, "readout.context", 2 * h, e, false, rng),
            readout_prev: Linear::new(store, "readout.prev", e, e, false, rng),
            out_bias: store.add_zeros("output.bias", 1, vocab),
        }
    }

    pub fn output_embedding(&self) -> ParamId {
        self.out_emb
    }

    pub fn source_embedding(&self) -> ParamId {
        self.src_emb
    }

    pub fn target_embedding(&self) -> ParamId {
        self.tgt_emb
    }

    fn run_direction(g: &mut Graph, cell: &GruCell, projected: NodeId, len: usize, reverse: bool) -> Vec<NodeId> {
        let mut h = g.constant(Matrix::zeros(1, cell.hidden));
        let mut states = vec![h; len];
        let order: Vec<usize> = if reverse {
            (0..len).rev().collect()
        } else {
            (0..len).collect()
        };
        for t in order {
            let x = g.slice_rows(projected, t, 1);
            h = cell.step(g, x, h);
            states[t] = h;
        }
        states
    }

    /// Returns (annotations `T × 2H`, attention keys, initial decoder state).
    fn encode(&self, g: &mut Graph, cfg: &ModelConfig, src: &[usize], dropout: &mut Dropout) -> (NodeId, NodeId, NodeId) {
        assert!(!src.is_empty(), "empty source sequence");
        let emb = g.param(self.src_emb);
        let x = g.gather(emb, src);
        let x = dropout.apply(g, x, cfg.dropout_embedding);
        let pf = self.enc_fwd.project_input(g, x);
        let pb = self.enc_bwd.project_input(g, x);
        let fwd = Self::run_direction(g, &self.enc_fwd, pf, src.len(), false);
        let bwd = Self::run_direction(g, &self.enc_bwd, pb, src.len(), true);
        let f = g.concat_rows(&fwd);
        let b = g.concat_rows(&bwd);
        let ann = g.concat_cols(&[f, b]);
        let keys = self.attention.project_keys(g, ann);
        let mean = g.mean_rows(ann);
        let s0 = self.init.forward(g, mean);
        let s0 = g.tanh(s0);
        (ann, keys, s0)
    }

    /// One decoder transition; returns (new state, context).
    fn transition(&self, g: &mut Graph, ann: NodeId, keys: NodeId, projected_prev: NodeId, s: NodeId) -> (NodeId, NodeId) {
        let s1 = self.dec_input.step(g, projected_prev, s);
        let ctx = self.attention.attend(g, ann, keys, s1);
        let pc = self.dec_context.project_input(g, ctx);
        let s2 = self.dec_context.step(g, pc, s1);
        (s2, ctx)
    }

    fn readout(&self, g: &mut Graph, cfg: &ModelConfig, states: NodeId, ctxs: NodeId, prev_emb: NodeId, dropout: &mut Dropout) -> NodeId {
        let a = self.readout_state.forward(g, states);
        let b = self.readout_ctx.forward(g, ctxs);
        let c = self.readout_prev.forward(g, prev_emb);
        let ab = g.add(a, b);
        let abc = g.add(ab, c);
        let r = g.tanh(abc);
        let r = dropout.apply(g, r, cfg.dropout_hidden);
        let out = g.param(self.out_emb);
        let logits = g.matmul_bt(r, out);
        let bias = g.param(self.out_bias);
        g.add_row(logits, bias)
    }

    /// Teacher-forced logits, one row per decoder input token.
    pub fn logits(&self, g: &mut Graph, cfg: &ModelConfig, src: &[usize], inputs: &[usize], dropout: &mut Dropout) -> NodeId {
        let (ann, keys, s0) = self.encode(g, cfg, src, dropout);
        let emb = g.param(self.tgt_emb);
        let y = g.gather(emb, inputs);
        let y = dropout.apply(g, y, cfg.dropout_embedding);
        let yp = self.dec_input.project_input(g, y);
        let mut s = s0;
        let mut states = Vec::with_capacity(inputs.len());
        let mut ctxs = Vec::with_capacity(inputs.len());
        for t in 0..inputs.len() {
            let row = g.slice_rows(yp, t, 1);
            let (s2, ctx) = self.transition(g, ann, keys, row, s);
            states.push(s2);
            ctxs.push(ctx);
            s = s2;
        }
        let states = g.concat_rows(&states);
        let ctxs = g.concat_rows(&ctxs);
        self.readout(g, cfg, states, ctxs, y, dropout)
    }

    pub fn encode_for_decoding(&self, params: &ParamStore, cfg: &ModelConfig, src: &[usize]) -> (GruMemory, Matrix) {
        let mut g = Graph::new(params);
        let (ann, keys, s0) = self.encode(&mut g, cfg, src, &mut Dropout::inactive());
        (
            GruMemory {
                annotations: g.value(ann).clone(),
                keys: g.value(keys).clone(),
            },
            g.value(s0).clone(),
        )
    }

    pub fn decode_step(&self, params: &ParamStore, cfg: &ModelConfig, mem: &GruMemory, state: &Matrix, prev: usize) -> (Vec<f64>, Matrix) {
        let mut g = Graph::new(params);
        let mut dropout = Dropout::inactive();
        let ann = g.constant(mem.annotations.clone());
        let keys = g.constant(mem.keys.clone());
        let s = g.constant(state.clone());
        let emb = g.param(self.tgt_emb);
        let y = g.gather(emb, &[prev]);
        let yp = self.dec_input.project_input(&mut g, y);
        let (s2, ctx) = self.transition(&mut g, ann, keys, yp, s);
        let logits = self.readout(&mut g, cfg, s2, ctx, y, &mut dropout);
        (log_softmax(&g.value(logits).data), g.value(s2).clone())
    }
}
