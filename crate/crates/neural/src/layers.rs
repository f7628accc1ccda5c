//! Parameterized building blocks shared by the encoder-decoders.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{Graph, NodeId};
use crate::params::{ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        bias: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let w = store.add_glorot(format!("{name}.w"), input, output, rng);
        let b = bias.then(|| store.add_zeros(format!("{name}.b"), 1, output));
        Linear { w, b }
    }

    pub fn forward(&self, g: &mut Graph, x: NodeId) -> NodeId {
        let w = g.param(self.w);
        let y = g.matmul(x, w);
        match self.b {
            Some(b) => {
                let b = g.param(b);
                g.add_row(y, b)
            }
            None => y,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        LayerNorm {
            gain: store.add_ones(format!("{name}.gain"), 1, dim),
            bias: store.add_zeros(format!("{name}.bias"), 1, dim),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: NodeId) -> NodeId {
        let n = g.layer_norm(x);
        let gain = g.param(self.gain);
        let scaled = g.mul_row(n, gain);
        let bias = g.param(self.bias);
        g.add_row(scaled, bias)
    }
}

/// A GRU cell whose input and recurrent projections are optionally layer
/// normalized before gating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GruCell {
    pub hidden: usize,
    pub input_proj: Linear,
    pub recurrent: Linear,
    pub ln_input: Option<LayerNorm>,
    pub ln_recurrent: Option<LayerNorm>,
}

impl GruCell {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        layer_norm: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        GruCell {
            hidden,
            input_proj: Linear::new(store, &format!("{name}.input"), input, 3 * hidden, true, rng),
            recurrent: Linear::new(store, &format!("{name}.recurrent"), hidden, 3 * hidden, true, rng),
            ln_input: layer_norm.then(|| LayerNorm::new(store, &format!("{name}.ln_input"), 3 * hidden)),
            ln_recurrent: layer_norm
                .then(|| LayerNorm::new(store, &format!("{name}.ln_recurrent"), 3 * hidden)),
        }
    }

    /// Input projection for any number of rows at once (one per timestep).
    pub fn project_input(&self, g: &mut Graph, x: NodeId) -> NodeId {
        let p = self.input_proj.forward(g, x);
        match &self.ln_input {
            Some(ln) => ln.forward(g, p),
            None => p,
        }
    }

    /// One recurrence step from a `1 × 3H` projected input.
    pub fn step(&self, g: &mut Graph, projected: NodeId, h: NodeId) -> NodeId {
        let hd = self.hidden;
        let mut hu = self.recurrent.forward(g, h);
        if let Some(ln) = &self.ln_recurrent {
            hu = ln.forward(g, hu);
        }
        let x_rz = g.slice_cols(projected, 0, 2 * hd);
        let h_rz = g.slice_cols(hu, 0, 2 * hd);
        let pre = g.add(x_rz, h_rz);
        let rz = g.sigmoid(pre);
        let r = g.slice_cols(rz, 0, hd);
        let z = g.slice_cols(rz, hd, hd);
        let x_n = g.slice_cols(projected, 2 * hd, hd);
        let h_n = g.slice_cols(hu, 2 * hd, hd);
        let gated = g.mul(r, h_n);
        let pre_n = g.add(x_n, gated);
        let n = g.tanh(pre_n);
        // h' = (1 - z) * n + z * h
        let diff = g.sub(h, n);
        let keep = g.mul(z, diff);
        g.add(n, keep)
    }
}

/// Additive (concatenative) attention over a fixed set of annotations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdditiveAttention {
    pub keys: Linear,
    pub query: Linear,
    pub v: ParamId,
}

impl AdditiveAttention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        key_dim: usize,
        query_dim: usize,
        att_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        AdditiveAttention {
            keys: Linear::new(store, &format!("{name}.keys"), key_dim, att_dim, false, rng),
            query: Linear::new(store, &format!("{name}.query"), query_dim, att_dim, true, rng),
            v: store.add_glorot(format!("{name}.v"), att_dim, 1, rng),
        }
    }

    /// Precomputes the key projection of the `T × K` annotations.
    pub fn project_keys(&self, g: &mut Graph, annotations: NodeId) -> NodeId {
        self.keys.forward(g, annotations)
    }

    /// Returns the `1 × K` context vector for a `1 × Q` query.
    pub fn attend(
        &self,
        g: &mut Graph,
        annotations: NodeId,
        projected_keys: NodeId,
        query: NodeId,
    ) -> NodeId {
        let q = self.query.forward(g, query);
        let summed = g.add_row(projected_keys, q);
        let e = g.tanh(summed);
        let v = g.param(self.v);
        let scores = g.matmul(e, v);
        let row = g.transpose(scores);
        let alpha = g.softmax_rows(row);
        g.matmul(alpha, annotations)
    }
}

/// Dropout source: active only when training with a seeded generator.
pub struct Dropout<'r> {
    rng: Option<&'r mut ChaCha8Rng>,
}

impl<'r> Dropout<'r> {
    pub fn inactive() -> Self {
        Dropout { rng: None }
    }

    pub fn active(rng: &'r mut ChaCha8Rng) -> Self {
        Dropout { rng: Some(rng) }
    }

    pub fn is_active(&self) -> bool {
        self.rng.is_some()
    }

    pub fn apply(&mut self, g: &mut Graph, x: NodeId, p: f64) -> NodeId {
        match self.rng.as_deref_mut() {
            Some(rng) if p > 0.0 => g.dropout(x, p, rng),
            _ => x,
        }
    }
}
