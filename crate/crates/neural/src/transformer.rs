//! Transformer encoder-decoder with sinusoidal positions and pre-norm
//! residual blocks.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{Graph, NodeId};
use crate::layers::{Dropout, LayerNorm, Linear};
use crate::matrix::{log_softmax, Matrix};
use crate::model::ModelConfig;
use crate::params::{ParamId, ParamStore};

const MASKED: f64 = -1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiHeadAttention {
    pub heads: usize,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
}

impl MultiHeadAttention {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize, rng: &mut ChaCha8Rng) -> Self {
        MultiHeadAttention {
            heads,
            query: Linear::new(store, &format!("{name}.query"), dim, dim, true, rng),
            key: Linear::new(store, &format!("{name}.key"), dim, dim, false, rng),
            value: Linear::new(store, &format!("{name}.value"), dim, dim, true, rng),
            output: Linear::new(store, &format!("{name}.output"), dim, dim, true, rng),
        }
    }

    /// Scaled dot-product attention of `queries` (`Tq × d`) over `memory`
    /// (`Tk × d`); `mask` is an additive `Tq × Tk` matrix.
    pub fn forward(
        &self,
        g: &mut Graph,
        queries: NodeId,
        memory: NodeId,
        mask: Option<NodeId>,
        dropout_p: f64,
        dropout: &mut Dropout,
    ) -> NodeId {
        let q = self.query.forward(g, queries);
        let k = self.key.forward(g, memory);
        let v = self.value.forward(g, memory);
        let dim = g.value(q).cols;
        let dk = dim / self.heads;
        let scale = 1.0 / (dk as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = g.slice_cols(q, h * dk, dk);
            let kh = g.slice_cols(k, h * dk, dk);
            let vh = g.slice_cols(v, h * dk, dk);
            let scores = g.matmul_bt(qh, kh);
            let mut scores = g.scale(scores, scale);
            if let Some(m) = mask {
                scores = g.add(scores, m);
            }
            let p = g.softmax_rows(scores);
            let p = dropout.apply(g, p, dropout_p);
            outs.push(g.matmul(p, vh));
        }
        let cat = if outs.len() == 1 { outs[0] } else { g.concat_cols(&outs) };
        self.output.forward(g, cat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedForward {
    pub inner: Linear,
    pub outer: Linear,
}

impl FeedForward {
    pub fn forward(&self, g: &mut Graph, x: NodeId, dropout_p: f64, dropout: &mut Dropout) -> NodeId {
        let h = self.inner.forward(g, x);
        let h = g.relu(h);
        let h = dropout.apply(g, h, dropout_p);
        self.outer.forward(g, h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderLayer {
    ln_attn: LayerNorm,
    attn: MultiHeadAttention,
    ln_ff: LayerNorm,
    ff: FeedForward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderLayer {
    ln_self: LayerNorm,
    self_attn: MultiHeadAttention,
    ln_cross: LayerNorm,
    cross_attn: MultiHeadAttention,
    ln_ff: LayerNorm,
    ff: FeedForward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerNet {
    src_emb: ParamId,
    tgt_emb: ParamId,
    out_emb: ParamId,
    encoder: Vec<EncoderLayer>,
    decoder: Vec<DecoderLayer>,
    enc_norm: LayerNorm,
    dec_norm: LayerNorm,
    out_bias: ParamId,
}

pub fn sinusoidal_positions(len: usize, dim: usize) -> Matrix {
    let mut pe = Matrix::zeros(len, dim);
    for pos in 0..len {
        for i in 0..dim {
            let exponent = (2 * (i / 2)) as f64 / dim as f64;
            let angle = pos as f64 / 10000f64.powf(exponent);
            pe.set(pos, i, if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    pe
}

fn causal_mask(len: usize) -> Matrix {
    let mut m = Matrix::zeros(len, len);
    for i in 0..len {
        for j in i + 1..len {
            m.set(i, j, MASKED);
        }
    }
    m
}

fn residual_block(
    g: &mut Graph,
    x: NodeId,
    ln: &LayerNorm,
    sublayer: impl FnOnce(&mut Graph, NodeId, &mut Dropout) -> NodeId,
    dropout_p: f64,
    dropout: &mut Dropout,
) -> NodeId {
    let normed = ln.forward(g, x);
    let y = sublayer(g, normed, dropout);
    let y = dropout.apply(g, y, dropout_p);
    g.add(x, y)
}

impl TransformerNet {
    pub fn new(cfg: &ModelConfig, vocab: usize, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Self {
        let (d, ffd, heads) = (cfg.emb_dim, cfg.hidden_dim, cfg.heads);
        let std = (d as f64).powf(-0.5);
        let src_emb = store.add_normal("embedding", vocab, d, std, rng);
        let (tgt_emb, out_emb) = if cfg.tied_embeddings {
            (src_emb, src_emb)
        } else {
            (
                store.add_normal("decoder.embedding", vocab, d, std, rng),
                store.add_normal("output.embedding", vocab, d, std, rng),
            )
        };
        let ff = |store: &mut ParamStore, name: &str, rng: &mut ChaCha8Rng| FeedForward {
            inner: Linear::new(store, &format!("{name}.inner"), d, ffd, true, rng),
            outer: Linear::new(store, &format!("{name}.outer"), ffd, d, true, rng),
        };
        let encoder = (0..cfg.layers)
            .map(|l| {
                let n = format!("encoder.{l}");
                EncoderLayer {
                    ln_attn: LayerNorm::new(store, &format!("{n}.ln_attn"), d),
                    attn: MultiHeadAttention::new(store, &format!("{n}.attn"), d, heads, rng),
                    ln_ff: LayerNorm::new(store, &format!("{n}.ln_ff"), d),
                    ff: ff(store, &format!("{n}.ff"), rng),
                }
            })
            .collect();
        let decoder = (0..cfg.layers)
            .map(|l| {
                let n = format!("decoder.{l}");
                DecoderLayer {
                    ln_self: LayerNorm::new(store, &format!("{n}.ln_self"), d),
                    self_attn: MultiHeadAttention::new(store, &format!("{n}.self_attn"), d, heads, rng),
                    ln_cross: LayerNorm::new(store, &format!("{n}.ln_cross"), d),
                    cross_attn: MultiHeadAttention::new(store, &format!("{n}.cross_attn"), d, heads, rng),
                    ln_ff: LayerNorm::new(store, &format!("{n}.ln_ff"), d),
                    ff: ff(store, &format!("{n}.ff"), rng),
                }
            })
            .collect();
        TransformerNet {
            src_emb,
            tgt_emb,
            out_emb,
            encoder,
            decoder,
            enc_norm: LayerNorm::new(store, "encoder.ln_final", d),
            dec_norm: LayerNorm::new(store, "decoder.ln_final", d),
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

    fn embed(&self, g: &mut Graph, cfg: &ModelConfig, table: ParamId, ids: &[usize], dropout: &mut Dropout) -> NodeId {
        let d = cfg.emb_dim;
        let t = g.param(table);
        let x = g.gather(t, ids);
        let x = g.scale(x, (d as f64).sqrt());
        let pe = g.constant(sinusoidal_positions(ids.len(), d));
        let x = g.add(x, pe);
        dropout.apply(g, x, cfg.dropout_embedding)
    }

    pub fn encode(&self, g: &mut Graph, cfg: &ModelConfig, src: &[usize], dropout: &mut Dropout) -> NodeId {
        assert!(!src.is_empty(), "empty source sequence");
        let p = cfg.dropout_hidden;
        let mut x = self.embed(g, cfg, self.src_emb, src, dropout);
        for layer in &self.encoder {
            x = residual_block(g, x, &layer.ln_attn, |g, h, dr| layer.attn.forward(g, h, h, None, p, dr), p, dropout);
            x = residual_block(g, x, &layer.ln_ff, |g, h, dr| layer.ff.forward(g, h, p, dr), p, dropout);
        }
        self.enc_norm.forward(g, x)
    }

    fn decode(&self, g: &mut Graph, cfg: &ModelConfig, memory: NodeId, inputs: &[usize], dropout: &mut Dropout) -> NodeId {
        let p = cfg.dropout_hidden;
        let mut y = self.embed(g, cfg, self.tgt_emb, inputs, dropout);
        let mask = g.constant(causal_mask(inputs.len()));
        for layer in &self.decoder {
            y = residual_block(g, y, &layer.ln_self, |g, h, dr| layer.self_attn.forward(g, h, h, Some(mask), p, dr), p, dropout);
            y = residual_block(g, y, &layer.ln_cross, |g, h, dr| layer.cross_attn.forward(g, h, memory, None, p, dr), p, dropout);
            y = residual_block(g, y, &layer.ln_ff, |g, h, dr| layer.ff.forward(g, h, p, dr), p, dropout);
        }
        let y = self.dec_norm.forward(g, y);
        let out = g.param(self.out_emb);
        let logits = g.matmul_bt(y, out);
        let bias = g.param(self.out_bias);
        g.add_row(logits, bias)
    }

    pub fn logits(&self, g: &mut Graph, cfg: &ModelConfig, src: &[usize], inputs: &[usize], dropout: &mut Dropout) -> NodeId {
        let memory = self.encode(g, cfg, src, dropout);
        self.decode(g, cfg, memory, inputs, dropout)
    }

    pub fn encode_for_decoding(&self, params: &ParamStore, cfg: &ModelConfig, src: &[usize]) -> Matrix {
        let mut g = Graph::new(params);
        let m = self.encode(&mut g, cfg, src, &mut Dropout::inactive());
        g.value(m).clone()
    }

    /// Log-probabilities of the token following `prefix` (which starts with
    /// the begin-of-sequence id).
    pub fn decode_step(&self, params: &ParamStore, cfg: &ModelConfig, memory: &Matrix, prefix: &[usize]) -> Vec<f64> {
        let mut g = Graph::new(params);
        let mem = g.constant(memory.clone());
        let logits = self.decode(&mut g, cfg, mem, prefix, &mut Dropout::inactive());
        let lv = g.value(logits);
        log_softmax(lv.row(lv.rows - 1))
    }

    /// First encoder self-attention block in isolation; used to gradient
    /// check the attention sublayer on its own.
    pub fn first_attention(&self) -> &MultiHeadAttention {
        &self.encoder[0].attn
    }
}
