//! Byte-pair encoding subword segmentation.
//!
//! Merges are learned over whitespace-separated words without an
//! end-of-word marker; segmented words carry a `@@` suffix on every subword
//! except the last. Input words are escaped (`&` and `@`) before
//! segmentation so that any token sequence survives `decode(encode(x))`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::NeuralError;

pub const CONTINUATION: &str = "@@";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpeModel {
    pub merges: Vec<(String, String)>,
    pub merge_target: usize,
    pub threshold: usize,
    #[serde(skip)]
    ranks: HashMap<(String, String), usize>,
}

fn escape(word: &str) -> String {
    word.replace('&', "&amp;").replace('@', "&#64;")
}

fn unescape(word: &str) -> String {
    let mut out = String::with_capacity(word.len());
    let mut rest = word;
    while let Some(pos) = rest.find('&') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if let Some(t) = tail.strip_prefix("&#64;") {
            out.push('@');
            rest = t;
        } else if let Some(t) = tail.strip_prefix("&amp;") {
            out.push('&');
            rest = t;
        } else {
            out.push('&');
            rest = &tail[1..];
        }
    }
    out.push_str(rest);
    out
}

fn chars_of(word: &str) -> Vec<String> {
    word.chars().map(String::from).collect()
}

impl BpeModel {
    /// Learns up to `merges` merge operations from whitespace-tokenized
    /// lines. Pairs occurring fewer than `threshold` times are never merged.
    /// Ties between equally frequent pairs go to the lexicographically
    /// smallest pair.
    pub fn train<S: AsRef<str>>(
        lines: &[S],
        merges: usize,
        threshold: usize,
    ) -> Result<Self, NeuralError> {
        if merges == 0 {
            return Err(NeuralError::Config("BPE merge count must be positive".into()));
        }
        let mut word_freq: HashMap<String, usize> = HashMap::new();
        for line in lines {
            for w in line.as_ref().split_whitespace() {
                *word_freq.entry(escape(w)).or_default() += 1;
            }
        }
        if word_freq.is_empty() {
            return Err(NeuralError::EmptyInput("BPE training corpus".into()));
        }
        let mut words: Vec<(Vec<String>, usize)> = word_freq
            .into_iter()
            .map(|(w, f)| (chars_of(&w), f))
            .collect();
        words.sort();

        let mut learned = Vec::new();
        while learned.len() < merges {
            let mut pair_counts: HashMap<(&str, &str), usize> = HashMap::new();
            for (syms, f) in &words {
                for w in syms.windows(2) {
                    *pair_counts.entry((&w[0], &w[1])).or_default() += f;
                }
            }
            let best = pair_counts
                .into_iter()
                .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)));
            let Some(((l, r), count)) = best else { break };
            if count < threshold.max(1) {
                break;
            }
            let (l, r) = (l.to_owned(), r.to_owned());
            let joined = format!("{l}{r}");
            for (syms, _) in &mut words {
                if syms.len() < 2 {
                    continue;
                }
                let mut out = Vec::with_capacity(syms.len());
                let mut i = 0;
                while i < syms.len() {
                    if i + 1 < syms.len() && syms[i] == l && syms[i + 1] == r {
                        out.push(joined.clone());
                        i += 2;
                    } else {
                        out.push(std::mem::take(&mut syms[i]));
                        i += 1;
                    }
                }
                *syms = out;
            }
            learned.push((l, r));
        }
        Ok(BpeModel::from_merges(learned, merges, threshold))
    }

    pub fn from_merges(merges: Vec<(String, String)>, merge_target: usize, threshold: usize) -> Self {
        let mut m = BpeModel {
            merges,
            merge_target,
            threshold,
            ranks: HashMap::new(),
        };
        m.reindex();
        m
    }

    pub fn reindex(&mut self) {
        self.ranks = self
            .merges
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i))
            .collect();
    }

    fn segment_word(&self, word: &str) -> Vec<String> {
        let mut syms = chars_of(&escape(word));
        loop {
            let best = syms
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| {
                    self.ranks
                        .get(&(w[0].clone(), w[1].clone()))
                        .map(|&rank| (rank, i))
                })
                .min();
            let Some((rank, _)) = best else { break };
            let (l, r) = &self.merges[rank];
            let mut out = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && &syms[i] == l && &syms[i + 1] == r {
                    out.push(format!("{l}{r}"));
                    i += 2;
                } else {
                    out.push(std::mem::take(&mut syms[i]));
                    i += 1;
                }
            }
            syms = out;
        }
        syms
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<String> {
        let mut out = Vec::new();
        for tok in tokens {
            let segs = self.segment_word(tok.as_ref());
            let last = segs.len().saturating_sub(1);
            for (i, s) in segs.into_iter().enumerate() {
                if i < last {
                    out.push(format!("{s}{CONTINUATION}"));
                } else {
                    out.push(s);
                }
            }
        }
        out
    }

    pub fn decode<S: AsRef<str>>(&self, subwords: &[S]) -> Vec<String> {
        let mut out = Vec::new();
        let mut current = String::new();
        for s in subwords {
            let s = s.as_ref();
            match s.strip_suffix(CONTINUATION) {
                Some(stem) => current.push_str(stem),
                None => {
                    current.push_str(s);
                    out.push(unescape(&current));
                    current.clear();
                }
            }
        }
        if !current.is_empty() {
            out.push(unescape(&current));
        }
        out
    }

    /// The subword inventory reachable from the merge list.
    pub fn merged_symbols(&self) -> impl Iterator<Item = String> + '_ {
        self.merges.iter().map(|(l, r)| format!("{l}{r}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy() -> BpeModel {
        BpeModel::train(&["low low lower"], 2, 1).unwrap()
    }

    #[test]
    fn toy_corpus_learns_expected_merges() {
        let m = toy();
        assert_eq!(
            m.merges,
            vec![
                ("l".to_string(), "o".to_string()),
                ("lo".to_string(), "w".to_string())
            ]
        );
    }

    #[test]
    fn toy_model_segments_lower() {
        assert_eq!(toy().encode(&["lower"]), vec!["low@@", "e@@", "r"]);
        assert_eq!(toy().encode(&["low"]), vec!["low"]);
    }

    #[test]
    fn threshold_above_counts_learns_nothing() {
        let m = BpeModel::train(&["low low lower"], 10, 4).unwrap();
        assert!(m.merges.is_empty());
        assert_eq!(m.encode(&["low"]), vec!["l@@", "o@@", "w"]);
    }

    #[test]
    fn errors_on_bad_input() {
        assert!(BpeModel::train::<&str>(&[], 5, 1).is_err());
        assert!(BpeModel::train(&["a b"], 0, 1).is_err());
    }

    #[test]
    fn unseen_word_falls_back_to_characters() {
        let m = toy();
        let enc = m.encode(&["xyz"]);
        assert_eq!(enc, vec!["x@@", "y@@", "z"]);
        assert_eq!(m.decode(&enc), vec!["xyz"]);
    }

    #[test]
    fn escaping_keeps_marker_like_words_intact() {
        let m = toy();
        let toks = ["a@@", "b", "&#64;", "&amp;", "@"];
        assert_eq!(m.decode(&m.encode(&toks)), toks);
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(words in prop::collection::vec("[a-z@&#;0-9_\\[\\]=,.]{1,12}", 0..12)) {
            let m = BpeModel::train(&["low low lower new newest wid@@er", "a&b"], 20, 1).unwrap();
            prop_assert_eq!(m.decode(&m.encode(&words)), words);
        }
    }
}
