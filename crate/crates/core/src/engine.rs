//! Adapter from token-sequence tasks to trained sequence-to-sequence models.

use std::path::Path;

use d2t_neural::beam::{beam_search, ensemble_decode};
use d2t_neural::bpe::BpeModel;
use d2t_neural::{train, ModelConfig, Pair, Seq2SeqCheckpoint, Seq2SeqModel, TrainReport, TrainingConfig, Vocab};
use log::info;
use serde::{Deserialize, Serialize};

use crate::corpus::DatasetInstance;
use crate::error::{Error, Result};

/// Subword settings for a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BpeSettings {
    pub merges: usize,
    pub threshold: usize,
}

/// One or more models of one architecture sharing a vocabulary, decoded as
/// an ensemble.
#[derive(Debug, Clone)]
pub struct NeuralEngine {
    pub models: Vec<Seq2SeqModel>,
    pub bpe: Option<BpeModel>,
    pub beam: usize,
    pub max_len: usize,
}

impl NeuralEngine {
    pub fn new(models: Vec<Seq2SeqModel>, bpe: Option<BpeModel>) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::MissingModel("engine without models".into()));
        }
        Ok(NeuralEngine {
            models,
            bpe,
            beam: 5,
            max_len: 100,
        })
    }

    pub fn load(paths: &[impl AsRef<Path>]) -> Result<Self> {
        let mut models = Vec::new();
        let mut bpe = None;
        for p in paths {
            let c = Seq2SeqCheckpoint::load(p.as_ref())?;
            if models.is_empty() {
                bpe = c.bpe;
            }
            models.push(c.model);
        }
        Self::new(models, bpe)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let first = self.models.first().ok_or_else(|| Error::MissingModel("empty engine".into()))?;
        Seq2SeqCheckpoint {
            model: first.clone(),
            bpe: self.bpe.clone(),
        }
        .save(path)?;
        Ok(())
    }

    fn segment(&self, tokens: &[String]) -> Vec<String> {
        match &self.bpe {
            Some(b) => b.encode(tokens),
            None => tokens.to_vec(),
        }
    }

    /// Beam-decodes the best target for `source`, merging subwords.
    pub fn decode(&self, source: &[String]) -> Result<Vec<String>> {
        let first = &self.models[0];
        let src = first.encode_tokens(&self.segment(source));
        let hyps = if self.models.len() == 1 {
            beam_search(first, &src, self.beam, self.max_len)?
        } else {
            let refs: Vec<&Seq2SeqModel> = self.models.iter().collect();
            ensemble_decode(&refs, &src, self.beam, self.max_len)?
        };
        let best = hyps.into_iter().next().map(|h| h.tokens).unwrap_or_default();
        let subwords = first.vocab.decode(&best);
        Ok(match &self.bpe {
            Some(b) => b.decode(&subwords),
            None => subwords,
        })
    }

    fn pairs(&self, data: &[DatasetInstance]) -> Vec<Pair> {
        let m = &self.models[0];
        data.iter()
            .flat_map(|inst| {
                let src = self.segment(&inst.source);
                inst.targets
                    .iter()
                    .map(move |t| (src.clone(), t))
                    .collect::<Vec<_>>()
            })
            .map(|(src, t)| m.pair(&src, &self.segment(t)))
            .collect()
    }

    /// Builds the vocabulary (and subword model) from `train_set` and trains
    /// one model per seed.
    pub fn train(
        train_set: &[DatasetInstance],
        dev_set: &[DatasetInstance],
        model: &ModelConfig,
        cfg: &TrainingConfig,
        bpe: Option<BpeSettings>,
        seeds: &[u64],
    ) -> Result<(Self, Vec<TrainReport>)> {
        if train_set.is_empty() {
            return Err(Error::Empty("training set".into()));
        }
        if seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let bpe = match bpe {
            Some(s) => {
                let lines: Vec<String> = train_set
                    .iter()
                    .flat_map(|i| std::iter::once(&i.source).chain(&i.targets))
                    .map(|t| t.join(" "))
                    .collect();
                Some(BpeModel::train(&lines, s.merges, s.threshold)?)
            }
            None => None,
        };
        let seg = |t: &[String]| match &bpe {
            Some(b) => b.encode(t),
            None => t.to_vec(),
        };
        let seqs: Vec<Vec<String>> = train_set
            .iter()
            .flat_map(|i| std::iter::once(seg(&i.source)).chain(i.targets.iter().map(|t| seg(t))))
            .collect();
        let vocab = Vocab::build(seqs.iter());
        let mut engine = NeuralEngine::new(vec![Seq2SeqModel::new(model.clone(), vocab.clone(), seeds[0])?], bpe)?;
        engine.beam = cfg.beam;
        engine.max_len = cfg.max_decode_len;
        let train_pairs = engine.pairs(train_set);
        let dev_pairs = engine.pairs(dev_set);
        let mut models = Vec::with_capacity(seeds.len());
        let mut reports = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let mut m = Seq2SeqModel::new(model.clone(), vocab.clone(), seed)?;
            let report = train(&mut m, &train_pairs, &dev_pairs, cfg, seed)?;
            info!(
                "seed {seed}: {} updates, best dev loss {:.4} at update {}",
                report.updates, report.best_dev_loss, report.best_update
            );
            models.push(m);
            reports.push(report);
        }
        engine.models = models;
        Ok((engine, reports))
    }
}
