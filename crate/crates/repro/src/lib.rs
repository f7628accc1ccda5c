//! Published reference numbers for the augmented WebNLG v1.5 benchmark and
//! helpers for comparing reproduced results against them.

use std::path::{Path, PathBuf};

use d2t_core::corpus::{import_webnlg, Corpus, Format, ImportStats};
use d2t_core::eval::EvalReport;

/// Directory (or single file) holding the corpus.
pub const CORPUS_ENV: &str = "D2T_WEBNLG_DIR";

/// Instance counts per split (train, dev, test).
pub type Counts = [usize; 3];

pub const ORDERING_INSTANCES: Counts = [13_757, 1_730, 3_839];
pub const ORDERING_SETS: Counts = [5_152, 644, 1_408];
pub const STRUCTURING_INSTANCES: Counts = [14_010, 1_752, 3_955];
pub const LEXICALIZATION_INSTANCES: Counts = [18_295, 2_288, 5_012];
pub const REG_INSTANCES: Counts = [67_144, 8_294, 19_210];

/// Scores in (all, seen, unseen) order.
pub type Triplet = [f64; 3];

pub const ORDERING_MAJORITY: Triplet = [0.48, 0.51, 0.44];
pub const STRUCTURING_MAJORITY: Triplet = [0.27, 0.45, 0.06];
pub const LEXICALIZATION_MAJORITY: Triplet = [44.82, 45.65, 39.43];
pub const REG_ONLY_NAMES: Triplet = [0.51, 0.53, 0.50];
pub const PIPELINE_MAJORITY: Triplet = [43.82, 44.79, 41.13];
pub const ORDERING_RANDOM_ALL: f64 = 0.31;
pub const STRUCTURING_RANDOM_ALL: f64 = 0.29;

pub const ACCURACY_TOLERANCE: f64 = 0.02;
pub const LEXICALIZATION_TOLERANCE: f64 = 1.5;
pub const PIPELINE_TOLERANCE: f64 = 2.0;
pub const RANDOM_TOLERANCE: f64 = 0.04;
pub const RANDOM_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

/// Result of one check: pass flag and a one-line explanation.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }

    pub fn fail(detail: impl Into<String>) -> Self {
        Self::new(false, detail)
    }
}

pub fn within(value: f64, target: f64, tolerance: f64) -> bool {
    (value - target).abs() <= tolerance + 1e-9
}

/// Compares the (all, seen, unseen) scores of a report against a target.
pub fn compare_report(report: &EvalReport, target: Triplet, tolerance: f64) -> Outcome {
    let got = report.scores();
    let mut pass = true;
    let mut parts = Vec::new();
    for ((name, g), t) in ["all", "seen", "unseen"].iter().zip(got).zip(target) {
        match g {
            Some(v) => {
                pass &= within(v, t, tolerance);
                parts.push(format!("{name} {v:.4} (target {t}±{tolerance})"));
            }
            None => {
                pass = false;
                parts.push(format!("{name} n/a (target {t})"));
            }
        }
    }
    Outcome::new(pass, parts.join(", "))
}

pub fn compare_counts(what: &str, got: Counts, target: Counts) -> Outcome {
    Outcome::new(
        got == target,
        format!("{what} train/dev/test {}/{}/{} (target {}/{}/{})", got[0], got[1], got[2], target[0], target[1], target[2]),
    )
}

/// Location of the corpus named by [`CORPUS_ENV`].
pub fn corpus_path() -> Option<PathBuf> {
    std::env::var_os(CORPUS_ENV).map(PathBuf::from)
}

/// Imports the corpus at `path`: line-delimited records when the path is a
/// `.jsonl` file or a directory containing any, XML otherwise.
pub fn load_corpus(path: &Path) -> d2t_core::Result<(Corpus, ImportStats)> {
    let jsonl = if path.is_file() {
        path.extension().is_some_and(|e| e == "jsonl")
    } else {
        std::fs::read_dir(path)
            .map(|d| d.flatten().any(|e| e.path().extension().is_some_and(|x| x == "jsonl")))
            .unwrap_or(false)
    };
    import_webnlg(path, if jsonl { Format::Jsonl } else { Format::Xml })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_band_is_inclusive() {
        assert!(within(0.50, 0.48, 0.02));
        assert!(within(0.46, 0.48, 0.02));
        assert!(!within(0.4599, 0.48, 0.02));
    }

    #[test]
    fn count_mismatch_fails() {
        assert!(compare_counts("x", [1, 2, 3], [1, 2, 3]).pass);
        assert!(!compare_counts("x", [1, 2, 4], [1, 2, 3]).pass);
    }
}
