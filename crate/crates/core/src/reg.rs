//! Referring expression generation: names, literal rules and a neural
//! generator conditioned on the surrounding template.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use d2t_neural::beam::beam_search;
use d2t_neural::checkpoint;
use d2t_neural::graph::{Graph, NodeId};
use d2t_neural::layers::{AdditiveAttention, Dropout, GruCell, Linear};
use d2t_neural::matrix::{log_softmax, Matrix};
use d2t_neural::params::{ParamId, ParamStore};
use d2t_neural::vocab::{BOS, BOS_ID, EOS, EOS_ID};
use d2t_neural::{train, NeuralError, StepDecoder, TrainReport, Trainable, TrainingConfig, Vocab};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{reg_contexts, RegInstance};
use crate::error::{Error, Result};
use crate::lexicalization::{BoundTemplate, Token};
use crate::text::tokenize;

const MONTHS: [&str; 12] = [
    "January",
    "February",
    "March",
    "April",
    "May",
    "June",
    "July",
    "August",
    "September",
    "October",
    "November",
    "December",
];

fn unquote(entity: &str) -> &str {
    entity
        .strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .unwrap_or(entity)
}

/// The identifier with quotes stripped and underscores as spaces.
pub fn only_names(entity: &str) -> String {
    unquote(entity).replace('_', " ")
}

fn all_digits(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

/// Dates (`yyyy-mm-dd`) as `Month d, yyyy`; integers and decimals as their
/// digits; `None` for anything else.
pub fn realize_literal(entity: &str) -> Option<String> {
    let s = unquote(entity);
    let parts: Vec<&str> = s.split('-').collect();
    if let [y, m, d] = parts[..] {
        if y.len() == 4 && m.len() == 2 && d.len() == 2 && all_digits(y) && all_digits(m) && all_digits(d) {
            let month: usize = m.parse().ok()?;
            let day: u32 = d.parse().ok()?;
            if (1..=12).contains(&month) && (1..=31).contains(&day) {
                return Some(format!("{} {day}, {y}", MONTHS[month - 1]));
            }
        }
    }
    let unsigned = s.strip_prefix('-').unwrap_or(s);
    let numeric = match unsigned.split_once('.') {
        Some((int, frac)) => all_digits(int) && all_digits(frac),
        None => all_digits(unsigned),
    };
    numeric.then(|| s.to_owned())
}

/// Shapes and training settings of the neural generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegConfig {
    pub emb_dim: usize,
    pub hidden_dim: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beam: usize,
    pub patience: usize,
    pub learning_rate: f64,
    /// Tokens kept on each side of the slot.
    pub context_window: usize,
    pub max_len: usize,
}

impl RegConfig {
    pub fn desk() -> Self {
        RegConfig {
            emb_dim: 64,
            hidden_dim: 64,
            dropout: 0.2,
            epochs: 60,
            batch_size: 80,
            beam: 5,
            patience: 10,
            learning_rate: 1e-3,
            context_window: 40,
            max_len: 20,
        }
    }

    pub fn paper() -> Self {
        RegConfig {
            emb_dim: 300,
            hidden_dim: 512,
            ..Self::desk()
        }
    }
}

impl Default for RegConfig {
    fn default() -> Self {
        Self::desk()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RegNet {
    word_emb: ParamId,
    entity_emb: ParamId,
    pre_fwd: GruCell,
    pre_bwd: GruCell,
    post_fwd: GruCell,
    post_bwd: GruCell,
    init: Linear,
    decoder: GruCell,
    pre_att: AdditiveAttention,
    post_att: AdditiveAttention,
    readout_state: Linear,
    readout_pre: Linear,
    readout_post: Linear,
    readout_entity: Linear,
    readout_prev: Linear,
    out_bias: ParamId,
}

/// Encoded contexts for incremental decoding.
pub struct RegMemory {
    pre: Matrix,
    pre_keys: Matrix,
    post: Matrix,
    post_keys: Matrix,
    entity: Matrix,
}

/// One training example: context token ids, entity index and target ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegExample {
    pub pre: Vec<usize>,
    pub post: Vec<usize>,
    pub entity: usize,
    pub target: Vec<usize>,
}

/// The neural referring expression generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegModel {
    pub config: RegConfig,
    pub vocab: Vocab,
    pub entities: Vec<String>,
    #[serde(skip)]
    entity_index: BTreeMap<String, usize>,
    params: ParamStore,
    net: RegNet,
    pub updates: u64,
}

pub const REG_KIND: &str = "neuralreg";

fn bigru(g: &mut Graph, fwd: &GruCell, bwd: &GruCell, x: NodeId, len: usize) -> NodeId {
    let pf = fwd.project_input(g, x);
    let pb = bwd.project_input(g, x);
    let run = |g: &mut Graph, cell: &GruCell, p: NodeId, rev: bool| {
        let mut h = g.constant(Matrix::zeros(1, cell.hidden));
        let mut states = vec![h; len];
        let steps: Vec<usize> = if rev { (0..len).rev().collect() } else { (0..len).collect() };
        for t in steps {
            let row = g.slice_rows(p, t, 1);
            h = cell.step(g, row, h);
            states[t] = h;
        }
        g.concat_rows(&states)
    };
    let f = run(g, fwd, pf, false);
    let b = run(g, bwd, pb, true);
    g.concat_cols(&[f, b])
}

impl RegNet {
    fn new(cfg: &RegConfig, vocab: usize, entities: usize, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Self {
        let (e, h) = (cfg.emb_dim, cfg.hidden_dim);
        RegNet {
            word_emb: store.add_normal("embedding", vocab, e, 0.1, rng),
            entity_emb: store.add_normal("entity.embedding", entities.max(1), e, 0.1, rng),
            pre_fwd: GruCell::new(store, "pre.forward", e, h, true, rng),
            pre_bwd: GruCell::new(store, "pre.backward", e, h, true, rng),
            post_fwd: GruCell::new(store, "post.forward", e, h, true, rng),
            post_bwd: GruCell::new(store, "post.backward", e, h, true, rng),
            init: Linear::new(store, "decoder.init", 4 * h + e, h, true, rng),
            decoder: GruCell::new(store, "decoder.gru", e, h, true, rng),
            pre_att: AdditiveAttention::new(store, "attention.pre", 2 * h, h, h, rng),
            post_att: AdditiveAttention::new(store, "attention.post", 2 * h, h, h, rng),
            readout_state: Linear::new(store, "readout.state", h, e, true, rng),
            readout_pre: Linear::new(store, "readout.pre", 2 * h, e, false, rng),
            readout_post: Linear::new(store, "readout.post", 2 * h, e, false, rng),
            readout_entity: Linear::new(store, "readout.entity", e, e, false, rng),
            readout_prev: Linear::new(store, "readout.prev", e, e, false, rng),
            out_bias: store.add_zeros("output.bias", 1, vocab),
        }
    }

    /// Returns (pre annotations, pre keys, post annotations, post keys,
    /// entity embedding, initial state).
    fn encode(
        &self,
        g: &mut Graph,
        ex: &RegExample,
        p: f64,
        dropout: &mut Dropout,
    ) -> (NodeId, NodeId, NodeId, NodeId, NodeId, NodeId) {
        let emb = g.param(self.word_emb);
        let pre_x = g.gather(emb, &ex.pre);
        let pre_x = dropout.apply(g, pre_x, p);
        let post_x = g.gather(emb, &ex.post);
        let post_x = dropout.apply(g, post_x, p);
        let pre = bigru(g, &self.pre_fwd, &self.pre_bwd, pre_x, ex.pre.len());
        let post = bigru(g, &self.post_fwd, &self.post_bwd, post_x, ex.post.len());
        let pre_keys = self.pre_att.project_keys(g, pre);
        let post_keys = self.post_att.project_keys(g, post);
        let ent_table = g.param(self.entity_emb);
        let entity = g.gather(ent_table, &[ex.entity]);
        let pre_mean = g.mean_rows(pre);
        let post_mean = g.mean_rows(post);
        let joined = g.concat_cols(&[pre_mean, post_mean, entity]);
        let s0 = self.init.forward(g, joined);
        let s0 = g.tanh(s0);
        (pre, pre_keys, post, post_keys, entity, s0)
    }

    #[allow(clippy::too_many_arguments)]
    fn step(
        &self,
        g: &mut Graph,
        mem: (NodeId, NodeId, NodeId, NodeId, NodeId),
        prev_emb: NodeId,
        s: NodeId,
        p: f64,
        dropout: &mut Dropout,
    ) -> (NodeId, NodeId) {
        let (pre, pre_keys, post, post_keys, entity) = mem;
        let x = self.decoder.project_input(g, prev_emb);
        let s1 = self.decoder.step(g, x, s);
        let c_pre = self.pre_att.attend(g, pre, pre_keys, s1);
        let c_post = self.post_att.attend(g, post, post_keys, s1);
        let parts = [
            self.readout_state.forward(g, s1),
            self.readout_pre.forward(g, c_pre),
            self.readout_post.forward(g, c_post),
            self.readout_entity.forward(g, entity),
            self.readout_prev.forward(g, prev_emb),
        ];
        let mut r = parts[0];
        for &q in &parts[1..] {
            r = g.add(r, q);
        }
        let r = g.tanh(r);
        let r = dropout.apply(g, r, p);
        let out = g.param(self.word_emb);
        let logits = g.matmul_bt(r, out);
        let bias = g.param(self.out_bias);
        (g.add_row(logits, bias), s1)
    }
}

impl RegModel {
    fn new(config: RegConfig, vocab: Vocab, entities: Vec<String>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let net = RegNet::new(&config, vocab.len(), entities.len(), &mut params, &mut rng);
        let mut m = RegModel {
            config,
            vocab,
            entities,
            entity_index: BTreeMap::new(),
            params,
            net,
            updates: 0,
        };
        m.reindex();
        m
    }

    fn reindex(&mut self) {
        self.vocab.reindex();
        self.entity_index = self.entities.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
    }

    pub fn knows(&self, entity: &str) -> bool {
        self.entity_index.contains_key(entity)
    }

    pub fn seen_entities(&self) -> BTreeSet<String> {
        self.entities.iter().cloned().collect()
    }

    fn window<'a>(&self, pre: &'a [String], post: &'a [String]) -> (Vec<&'a str>, Vec<&'a str>) {
        let w = self.config.context_window;
        let mut p: Vec<&str> = vec![BOS];
        p.extend(pre[pre.len().saturating_sub(w)..].iter().map(String::as_str));
        let mut q: Vec<&str> = post[..post.len().min(w)].iter().map(String::as_str).collect();
        q.push(EOS);
        (p, q)
    }

    fn example(&self, pre: &[String], post: &[String], entity: &str, target: &[String]) -> Result<RegExample> {
        let entity = *self
            .entity_index
            .get(entity)
            .ok_or_else(|| Error::UnknownEntity(entity.to_owned()))?;
        let (p, q) = self.window(pre, post);
        Ok(RegExample {
            pre: self.vocab.encode(&p),
            post: self.vocab.encode(&q),
            entity,
            target: self.vocab.encode(target),
        })
    }

    /// Beam-decoded lowercase reference tokens.
    pub fn generate(&self, pre: &[String], post: &[String], entity: &str) -> Result<Vec<String>> {
        if self.updates == 0 {
            return Err(NeuralError::Untrained.into());
        }
        let ex = self.example(pre, post, entity, &[])?;
        let mut src = vec![ex.entity, ex.pre.len()];
        src.extend(&ex.pre);
        src.extend(&ex.post);
        let hyps = beam_search(self, &src, self.config.beam, self.config.max_len)?;
        let best = hyps.into_iter().next().map(|h| h.tokens).unwrap_or_default();
        Ok(self.vocab.decode(&best))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::write(path, REG_KIND, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut m: RegModel = checkpoint::read(path, REG_KIND)?;
        m.reindex();
        Ok(m)
    }
}

impl Trainable for RegModel {
    type Example = RegExample;

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn example_loss<'p>(
        &'p self,
        g: &mut Graph<'p>,
        ex: &RegExample,
        dropout: &mut Dropout,
        label_smoothing: f64,
    ) -> (NodeId, usize) {
        let p = self.config.dropout;
        let (pre, pk, post, qk, entity, s0) = self.net.encode(g, ex, p, dropout);
        let emb = g.param(self.net.word_emb);
        let mut inputs = vec![BOS_ID];
        inputs.extend(&ex.target);
        let mut targets = ex.target.clone();
        targets.push(EOS_ID);
        let y = g.gather(emb, &inputs);
        let mut s = s0;
        let mut rows = Vec::with_capacity(inputs.len());
        for t in 0..inputs.len() {
            let prev = g.slice_rows(y, t, 1);
            let (logits, s1) = self.net.step(g, (pre, pk, post, qk, entity), prev, s, p, dropout);
            rows.push(logits);
            s = s1;
        }
        let logits = g.concat_rows(&rows);
        (g.cross_entropy(logits, &targets, label_smoothing), targets.len())
    }
}

impl StepDecoder for RegModel {
    type Memory = RegMemory;
    type State = Matrix;

    fn output_size(&self) -> usize {
        self.vocab.len()
    }

    fn start(&self, src: &[usize]) -> (RegMemory, Matrix) {
        let pre_len = src[1];
        let ex = RegExample {
            entity: src[0],
            pre: src[2..2 + pre_len].to_vec(),
            post: src[2 + pre_len..].to_vec(),
            target: Vec::new(),
        };
        let mut g = Graph::new(&self.params);
        let (pre, pk, post, qk, entity, s0) = self.net.encode(&mut g, &ex, 0.0, &mut Dropout::inactive());
        (
            RegMemory {
                pre: g.value(pre).clone(),
                pre_keys: g.value(pk).clone(),
                post: g.value(post).clone(),
                post_keys: g.value(qk).clone(),
                entity: g.value(entity).clone(),
            },
            g.value(s0).clone(),
        )
    }

    fn step(&self, mem: &RegMemory, state: &Matrix, prev: usize) -> (Vec<f64>, Matrix) {
        let mut g = Graph::new(&self.params);
        let m = (
            g.constant(mem.pre.clone()),
            g.constant(mem.pre_keys.clone()),
            g.constant(mem.post.clone()),
            g.constant(mem.post_keys.clone()),
            g.constant(mem.entity.clone()),
        );
        let s = g.constant(state.clone());
        let emb = g.param(self.net.word_emb);
        let y = g.gather(emb, &[prev]);
        let (logits, s1) = self.net.step(&mut g, m, y, s, 0.0, &mut Dropout::inactive());
        (log_softmax(&g.value(logits).data), g.value(s1).clone())
    }
}

fn lower(tokens: &[String]) -> Vec<String> {
    tokens.iter().map(|t| t.to_lowercase()).collect()
}

/// Trains the generator on `train_set`, selecting parameters by loss on
/// `dev_set`. Zero epochs yields an untrained model.
pub fn reg_train(
    train_set: &[RegInstance],
    dev_set: &[RegInstance],
    cfg: &RegConfig,
    seed: u64,
) -> Result<(RegModel, Option<TrainReport>)> {
    if train_set.is_empty() {
        return Err(Error::Empty("REG training set".into()));
    }
    let entities: Vec<String> = train_set
        .iter()
        .map(|i| i.entity.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let lowered: Vec<Vec<String>> = train_set
        .iter()
        .flat_map(|i| [i.pre_context.clone(), i.post_context.clone(), lower(&i.refex)])
        .collect();
    let vocab = Vocab::build(lowered.iter());
    let mut model = RegModel::new(cfg.clone(), vocab, entities, seed);
    if cfg.epochs == 0 {
        return Ok((model, None));
    }
    let examples = |set: &[RegInstance]| -> Vec<RegExample> {
        set.iter()
            .filter_map(|i| model.example(&i.pre_context, &i.post_context, &i.entity, &lower(&i.refex)).ok())
            .collect()
    };
    let train_ex = examples(train_set);
    let dev_ex = examples(dev_set);
    let per_epoch = train_ex.len().div_ceil(cfg.batch_size).max(1) as u64;
    let tcfg = TrainingConfig {
        learning_rate: cfg.learning_rate,
        max_updates: u64::MAX,
        max_epochs: Some(cfg.epochs),
        eval_every: per_epoch,
        patience: cfg.patience.max(1),
        beam: cfg.beam,
        max_decode_len: cfg.max_len,
        batch_size: cfg.batch_size,
        ..TrainingConfig::default()
    };
    let report = train(&mut model, &train_ex, &dev_ex, &tcfg, seed)?;
    model.updates = report.updates;
    Ok((model, Some(report)))
}

/// How one slot was realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegPolicy {
    Literal,
    Neural,
    OnlyNames,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotTrace {
    pub entity: String,
    pub policy: RegPolicy,
    pub refex: Vec<String>,
    pub pre_context: Vec<String>,
    pub post_context: Vec<String>,
}

/// A template whose entity slots have been replaced by words.
pub type ReferencedTemplate = Vec<Token<String>>;

fn segment_of(tok: &Token<String>) -> Vec<String> {
    match tok {
        Token::Word(w) => vec![w.to_lowercase()],
        Token::Entity(e) => vec![e.clone()],
        other => vec![other.to_string()],
    }
}

/// Realizes every entity slot left to right. Literal rules take precedence;
/// seen entities go to the model when present; the rest get their names.
/// Each slot sees earlier slots realized and later slots as identifiers.
pub fn reg_resolve(
    bt: &BoundTemplate,
    model: Option<&RegModel>,
    seen_entities: &BTreeSet<String>,
) -> (ReferencedTemplate, Vec<SlotTrace>) {
    let mut segments: Vec<Vec<String>> = bt.iter().map(segment_of).collect();
    let mut realized: Vec<Vec<Token<String>>> = bt.iter().map(|t| vec![t.clone()]).collect();
    let mut traces = Vec::new();
    for (pos, tok) in bt.iter().enumerate() {
        let Token::Entity(entity) = tok else { continue };
        let (pre, post) = reg_contexts(&segments, pos);
        let (policy, refex) = if let Some(lit) = realize_literal(entity) {
            (RegPolicy::Literal, tokenize(&lit))
        } else {
            match model.filter(|m| seen_entities.contains(entity) && m.knows(entity)) {
                Some(m) => match m.generate(&pre, &post, entity) {
                    Ok(r) if !r.is_empty() => (RegPolicy::Neural, r),
                    _ => (RegPolicy::OnlyNames, tokenize(&only_names(entity))),
                },
                None => (RegPolicy::OnlyNames, tokenize(&only_names(entity))),
            }
        };
        segments[pos] = refex.clone();
        realized[pos] = refex.iter().cloned().map(Token::Word).collect();
        traces.push(SlotTrace {
            entity: entity.clone(),
            policy,
            refex,
            pre_context: pre,
            post_context: post,
        });
    }
    (realized.into_iter().flatten().collect(), traces)
}
