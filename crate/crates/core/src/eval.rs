//! Gold-set accuracy, multi-reference corpus BLEU and seen/unseen/domain
//! breakdowns.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::InstanceMeta;
use crate::error::{Error, Result};
use crate::text::{lowercase_all, uncased_tokens};

pub const MAX_NGRAM: usize = 4;

/// One row of a breakdown. `score` is `None` for an empty bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub name: String,
    pub score: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: String,
    pub all: Bucket,
    pub seen: Bucket,
    pub unseen: Bucket,
    pub domains: Vec<Bucket>,
    /// Instances without a domain label; counted in `all` only.
    pub unlabeled: usize,
}

impl EvalReport {
    pub fn scores(&self) -> [Option<f64>; 3] {
        [self.all.score, self.seen.score, self.unseen.score]
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::LengthMismatch(a, b))
    }
}

/// Partitions instances by seen flag and by domain and evaluates `metric`
/// over each bucket. Domains are listed in sorted order.
pub fn breakdown<F>(metric: &str, meta: &[InstanceMeta], mut score: F) -> Result<EvalReport>
where
    F: FnMut(&[usize]) -> Result<f64>,
{
    let mut bucket = |name: &str, idx: Vec<usize>| -> Result<Bucket> {
        Ok(Bucket {
            name: name.to_owned(),
            score: if idx.is_empty() { None } else { Some(score(&idx)?) },
            count: idx.len(),
        })
    };
    let all: Vec<usize> = (0..meta.len()).collect();
    let seen: Vec<usize> = all.iter().copied().filter(|&i| meta[i].seen).collect();
    let unseen: Vec<usize> = all.iter().copied().filter(|&i| !meta[i].seen).collect();
    let mut by_domain: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut unlabeled = 0;
    for (i, m) in meta.iter().enumerate() {
        if m.domain.is_empty() {
            unlabeled += 1;
        } else {
            by_domain.entry(&m.domain).or_default().push(i);
        }
    }
    let mut domains = Vec::with_capacity(by_domain.len());
    for (d, idx) in by_domain {
        domains.push(bucket(d, idx)?);
    }
    Ok(EvalReport {
        metric: metric.to_owned(),
        all: bucket("all", all)?,
        seen: bucket("seen", seen)?,
        unseen: bucket("unseen", unseen)?,
        domains,
        unlabeled,
    })
}

/// Fraction of predictions equal to some member of their gold set, compared
/// lowercased.
pub fn accuracy_score(preds: &[Vec<String>], golds: &[Vec<Vec<String>>]) -> Result<f64> {
    check_lengths(preds.len(), golds.len())?;
    if preds.is_empty() {
        return Err(Error::Empty("prediction list".into()));
    }
    let mut correct = 0;
    for (p, g) in preds.iter().zip(golds) {
        if g.is_empty() {
            return Err(Error::Empty("gold set".into()));
        }
        let p = lowercase_all(p);
        if g.iter().any(|r| lowercase_all(r) == p) {
            correct += 1;
        }
    }
    Ok(correct as f64 / preds.len() as f64)
}

pub fn accuracy(preds: &[Vec<String>], golds: &[Vec<Vec<String>>], meta: &[InstanceMeta]) -> Result<EvalReport> {
    check_lengths(preds.len(), golds.len())?;
    check_lengths(preds.len(), meta.len())?;
    breakdown("accuracy", meta, |idx| {
        let p: Vec<Vec<String>> = idx.iter().map(|&i| preds[i].clone()).collect();
        let g: Vec<Vec<Vec<String>>> = idx.iter().map(|&i| golds[i].clone()).collect();
        accuracy_score(&p, &g)
    })
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Sufficient statistics of corpus BLEU: clipped matches and totals per
/// order, hypothesis length and closest reference length.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [usize; MAX_NGRAM],
    pub totals: [usize; MAX_NGRAM],
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn sentence(hyp: &[String], refs: &[Vec<String>]) -> Self {
        let mut s = BleuStats {
            hyp_len: hyp.len(),
            ref_len: refs
                .iter()
                .map(Vec::len)
                .min_by_key(|&r| (r.abs_diff(hyp.len()), r))
                .unwrap_or(0),
            ..Default::default()
        };
        for n in 1..=MAX_NGRAM {
            let hyp_counts = ngram_counts(hyp, n);
            let mut max_ref: HashMap<&[String], usize> = HashMap::new();
            for r in refs {
                for (g, c) in ngram_counts(r, n) {
                    let m = max_ref.entry(g).or_insert(0);
                    *m = (*m).max(c);
                }
            }
            s.totals[n - 1] = hyp.len().saturating_sub(n - 1);
            s.matches[n - 1] = hyp_counts
                .iter()
                .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
                .sum();
        }
        s
    }

    pub fn add(&mut self, other: &BleuStats) {
        for n in 0..MAX_NGRAM {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    /// Score in 0..=100 without smoothing.
    pub fn score(&self) -> f64 {
        if self.hyp_len == 0 || self.matches.iter().any(|&m| m == 0) {
            return 0.0;
        }
        let log_p: f64 = (0..MAX_NGRAM)
            .map(|n| (self.matches[n] as f64 / self.totals[n] as f64).ln())
            .sum::<f64>()
            / MAX_NGRAM as f64;
        let (c, r) = (self.hyp_len as f64, self.ref_len as f64);
        let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
        100.0 * bp * log_p.exp()
    }
}

/// Corpus-level BLEU over tokenized hypotheses and reference sets, compared
/// lowercased.
pub fn corpus_bleu(hyps: &[Vec<String>], refs: &[Vec<Vec<String>>]) -> Result<f64> {
    check_lengths(hyps.len(), refs.len())?;
    if hyps.is_empty() {
        return Err(Error::Empty("hypothesis list".into()));
    }
    let mut total = BleuStats::default();
    for (h, r) in hyps.iter().zip(refs) {
        let r: Vec<Vec<String>> = r.iter().map(|x| lowercase_all(x)).collect();
        total.add(&BleuStats::sentence(&lowercase_all(h), &r));
    }
    Ok(total.score())
}

/// BLEU over raw texts, tokenized and lowercased first.
pub fn corpus_bleu_text(hyps: &[String], refs: &[Vec<String>]) -> Result<f64> {
    let h: Vec<Vec<String>> = hyps.iter().map(|t| uncased_tokens(t)).collect();
    let r: Vec<Vec<Vec<String>>> = refs
        .iter()
        .map(|rs| rs.iter().map(|t| uncased_tokens(t)).collect())
        .collect();
    corpus_bleu(&h, &r)
}

pub fn bleu(hyps: &[Vec<String>], refs: &[Vec<Vec<String>>], meta: &[InstanceMeta]) -> Result<EvalReport> {
    check_lengths(hyps.len(), refs.len())?;
    check_lengths(hyps.len(), meta.len())?;
    breakdown("bleu", meta, |idx| {
        let h: Vec<Vec<String>> = idx.iter().map(|&i| hyps[i].clone()).collect();
        let r: Vec<Vec<Vec<String>>> = idx.iter().map(|&i| refs[i].clone()).collect();
        corpus_bleu(&h, &r)
    })
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

/// A table cell: a single score or a mean with its spread over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Score(Option<f64>),
    Spread { mean: f64, std: f64 },
    Count(usize),
}

impl Cell {
    pub fn render(&self, decimals: usize) -> String {
        match self {
            Cell::Score(Some(x)) => format!("{x:.decimals$}"),
            Cell::Score(None) => "n/a".into(),
            Cell::Spread { mean, std } => format!("{mean:.decimals$}±{std:.decimals$}"),
            Cell::Count(n) => n.to_string(),
        }
    }

    /// Aggregates per-seed reports bucket by bucket.
    pub fn across(reports: &[EvalReport]) -> [Cell; 3] {
        let pick = |k: usize| {
            let xs: Vec<f64> = reports.iter().filter_map(|r| r.scores()[k]).collect();
            mean_std(&xs).map_or(Cell::Score(None), |(mean, std)| Cell::Spread { mean, std })
        };
        [pick(0), pick(1), pick(2)]
    }

    pub fn of(report: &EvalReport) -> [Cell; 3] {
        report.scores().map(Cell::Score)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub label: String,
    pub cells: Vec<Cell>,
}

/// Plain-text table with a header row and right-aligned cells.
pub fn render_table(title: &str, header: &[&str], rows: &[TableRow], decimals: usize) -> String {
    let mut grid: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for r in rows {
        let mut line = vec![r.label.clone()];
        line.extend(r.cells.iter().map(|c| c.render(decimals)));
        grid.push(line);
    }
    let cols = grid.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| grid.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = format!("{title}\n");
    for (i, r) in grid.iter().enumerate() {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
        if i == 0 {
            let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (cols.saturating_sub(1))));
        }
    }
    out
}

/// Per-domain rows of a report.
pub fn render_domains(report: &EvalReport, decimals: usize) -> String {
    let rows: Vec<TableRow> = report
        .domains
        .iter()
        .map(|b| TableRow {
            label: b.name.clone(),
            cells: vec![Cell::Score(b.score), Cell::Count(b.count)],
        })
        .collect();
    let mut text = render_table(&format!("{} by domain", report.metric), &["Domain", "Score", "N"], &rows, decimals);
    if report.unlabeled > 0 {
        let _ = writeln!(text, "unlabeled instances: {}", report.unlabeled);
    }
    text
}
