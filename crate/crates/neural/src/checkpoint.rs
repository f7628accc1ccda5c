//! Line-based checkpoint container: a header line naming the format version
//! and payload kind, followed by one JSON document.
//!
//! ```text
//! D2T-CHECKPOINT v1 seq2seq
//! {"config": ..., "vocab": ..., "params": ...}
//! ```

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bpe::BpeModel;
use crate::error::NeuralError;
use crate::model::Seq2SeqModel;

pub const MAGIC: &str = "D2T-CHECKPOINT";
pub const VERSION: u32 = 1;

pub fn write<T: Serialize>(path: &Path, kind: &str, payload: &T) -> Result<(), NeuralError> {
    if kind.is_empty() || kind.contains(char::is_whitespace) {
        return Err(NeuralError::Checkpoint(format!("invalid kind `{kind}`")));
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(f, "{MAGIC} v{VERSION} {kind}")?;
    serde_json::to_writer(&mut f, payload)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

fn parse_header(line: &str) -> Result<String, NeuralError> {
    let mut parts = line.split_whitespace();
    match (parts.next(), parts.next(), parts.next(), parts.next()) {
        (Some(MAGIC), Some(v), Some(kind), None) => {
            let version: u32 = v
                .strip_prefix('v')
                .and_then(|n| n.parse().ok())
                .ok_or_else(|| NeuralError::Checkpoint(format!("bad version `{v}`")))?;
            if version != VERSION {
                return Err(NeuralError::Checkpoint(format!("unsupported version {version}")));
            }
            Ok(kind.to_owned())
        }
        _ => Err(NeuralError::Checkpoint("missing checkpoint header".into())),
    }
}

/// Reads only the header and returns the payload kind.
pub fn peek_kind(path: &Path) -> Result<String, NeuralError> {
    let mut line = String::new();
    BufReader::new(fs::File::open(path)?).read_line(&mut line)?;
    parse_header(&line)
}

pub fn read<T: DeserializeOwned>(path: &Path, expected_kind: &str) -> Result<T, NeuralError> {
    let mut reader = BufReader::new(fs::File::open(path)?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let kind = parse_header(&line)?;
    if kind != expected_kind {
        return Err(NeuralError::Checkpoint(format!(
            "expected a `{expected_kind}` checkpoint, found `{kind}`"
        )));
    }
    Ok(serde_json::from_reader(reader)?)
}

/// A sequence-to-sequence model together with its optional subword model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seq2SeqCheckpoint {
    pub model: Seq2SeqModel,
    pub bpe: Option<BpeModel>,
}

pub const SEQ2SEQ_KIND: &str = "seq2seq";

impl Seq2SeqCheckpoint {
    pub fn save(&self, path: &Path) -> Result<(), NeuralError> {
        write(path, SEQ2SEQ_KIND, self)
    }

    pub fn load(path: &Path) -> Result<Self, NeuralError> {
        let mut c: Seq2SeqCheckpoint = read(path, SEQ2SEQ_KIND)?;
        c.restore_indices();
        Ok(c)
    }

    /// Rebuilds lookup tables skipped during serialization.
    pub fn restore_indices(&mut self) {
        self.model.vocab.reindex();
        if let Some(b) = &mut self.bpe {
            b.reindex();
        }
    }
}
