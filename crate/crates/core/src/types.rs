//! Preference-pair domain types and the line-delimited dataset format.

use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A generated token sequence. Sequences are non-empty and, by convention,
/// end with the dedicated stop token (vocabulary id `n - 1`); the length
/// `|y|` counts every emitted token including that stop token, so
/// length-normalization divisors are never zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSeq {
    tokens: Vec<usize>,
}

impl TokenSeq {
    pub fn new(tokens: Vec<usize>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::input("token sequence must be non-empty"));
        }
        Ok(Self { tokens })
    }

    pub fn tokens(&self) -> &[usize] {
        &self.tokens
    }

    /// `|y|`, including the stop token.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // by construction
    }

    /// Check token ids and length against a vocabulary / length budget.
    pub fn validate_for(&self, vocab: usize, t_max: usize) -> Result<()> {
        if self.tokens.len() > t_max {
            return Err(Error::input(format!(
                "sequence length {} exceeds T_max {t_max}",
                self.tokens.len()
            )));
        }
        if let Some(&bad) = self.tokens.iter().find(|&&t| t >= vocab) {
            return Err(Error::input(format!(
                "token id {bad} out of range for vocabulary size {vocab}"
            )));
        }
        Ok(())
    }
}

impl fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.tokens)
    }
}

/// One preference observation: a prompt context plus winning and losing
/// responses, with optional oracle scores and an optional per-pair margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub ctx: usize,
    pub yw: TokenSeq,
    pub yl: TokenSeq,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
}

impl PreferencePair {
    pub fn new(ctx: usize, yw: TokenSeq, yl: TokenSeq) -> Self {
        Self {
            ctx,
            yw,
            yl,
            score_w: None,
            score_l: None,
            offset: None,
        }
    }

    pub fn with_scores(mut self, score_w: f64, score_l: f64) -> Self {
        self.score_w = Some(score_w);
        self.score_l = Some(score_l);
        self
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = Some(offset);
        self
    }

    /// Winner and loser drew the same score; best/worst construction flags
    /// such pairs instead of dropping them.
    pub fn is_degenerate(&self) -> bool {
        match (self.score_w, self.score_l) {
            (Some(w), Some(l)) => w == l,
            _ => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let (Some(w), Some(l)) = (self.score_w, self.score_l) {
            if !(w.is_finite() && l.is_finite()) {
                return Err(Error::input("pair scores must be finite"));
            }
            if w < l {
                return Err(Error::input(format!(
                    "score_w {w} < score_l {l}: winner must not score below loser"
                )));
            }
        }
        if let Some(o) = self.offset {
            if !o.is_finite() {
                return Err(Error::input("pair offset must be finite"));
            }
        }
        Ok(())
    }
}

/// How a dataset was constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    BestWorstOfK,
    RejectionSampled,
    Loaded,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Provenance::BestWorstOfK => "BestWorstOfK",
            Provenance::RejectionSampled => "RejectionSampled",
            Provenance::Loaded => "Loaded",
        };
        f.write_str(s)
    }
}

/// An ordered, non-empty collection of preference pairs sharing one
/// vocabulary size and context count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceDataset {
    pub vocab: usize,
    pub contexts: usize,
    pub provenance: Provenance,
    pub pairs: Vec<PreferencePair>,
}

/// First line of the dataset file; the remaining lines are pair records.
#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    format: String,
    vocab: usize,
    contexts: usize,
    provenance: Provenance,
}

const DATASET_FORMAT: &str = "preference-pairs-v1";

impl PreferenceDataset {
    pub fn new(
        vocab: usize,
        contexts: usize,
        provenance: Provenance,
        pairs: Vec<PreferencePair>,
    ) -> Result<Self> {
        let ds = Self {
            vocab,
            contexts,
            provenance,
            pairs,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::input("dataset must contain at least one pair"));
        }
        if self.vocab < 2 {
            return Err(Error::input(
                "vocabulary needs at least one token plus stop",
            ));
        }
        for (i, pair) in self.pairs.iter().enumerate() {
            pair.validate()
                .map_err(|e| Error::input(format!("pair {i}: {e}")))?;
            if pair.ctx >= self.contexts {
                return Err(Error::input(format!(
                    "pair {i}: context {} out of range ({} contexts)",
                    pair.ctx, self.contexts
                )));
            }
            for y in [&pair.yw, &pair.yl] {
                if let Some(&bad) = y.tokens().iter().find(|&&t| t >= self.vocab) {
                    return Err(Error::input(format!(
                        "pair {i}: token id {bad} out of range for vocabulary {}",
                        self.vocab
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn degenerate_count(&self) -> usize {
        self.pairs.iter().filter(|p| p.is_degenerate()).count()
    }

    /// Split off the last `fraction` of pairs (by index) as a held-out set.
    pub fn split_holdout(&self, fraction: f64) -> Result<(PreferenceDataset, PreferenceDataset)> {
        if !(0.0..1.0).contains(&fraction) || fraction <= 0.0 {
            return Err(Error::config(format!(
                "holdout fraction must lie in (0, 1), got {fraction}"
            )));
        }
        let n_holdout = ((self.pairs.len() as f64) * fraction).floor() as usize;
        if n_holdout == 0 || n_holdout >= self.pairs.len() {
            return Err(Error::config(format!(
                "holdout fraction {fraction} leaves an empty split for {} pairs",
                self.pairs.len()
            )));
        }
        let cut = self.pairs.len() - n_holdout;
        let train = PreferenceDataset {
            vocab: self.vocab,
            contexts: self.contexts,
            provenance: self.provenance,
            pairs: self.pairs[..cut].to_vec(),
        };
        let held = PreferenceDataset {
            vocab: self.vocab,
            contexts: self.contexts,
            provenance: self.provenance,
            pairs: self.pairs[cut..].to_vec(),
        };
        Ok((train, held))
    }

    /// Write as line-delimited JSON: a header record, then one pair per line.
    pub fn save<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        let header = DatasetHeader {
            format: DATASET_FORMAT.to_string(),
            vocab: self.vocab,
            contexts: self.contexts,
            provenance: self.provenance,
        };
        serde_json::to_writer(&mut w, &header).map_err(|e| Error::format(e.to_string()))?;
        w.write_all(b"\n")?;
        for pair in &self.pairs {
            serde_json::to_writer(&mut w, pair).map_err(|e| Error::format(e.to_string()))?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_to_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.save(file)
    }

    pub fn load<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::format("empty dataset file"))??;
        let header: DatasetHeader = serde_json::from_str(&header_line)
            .map_err(|e| Error::format(format!("bad dataset header: {e}")))?;
        if header.format != DATASET_FORMAT {
            return Err(Error::format(format!(
                "unknown dataset format {:?}",
                header.format
            )));
        }
        let mut pairs = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let pair: PreferencePair = serde_json::from_str(&line)
                .map_err(|e| Error::format(format!("line {}: {e}", lineno + 2)))?;
            pairs.push(pair);
        }
        PreferenceDataset::new(header.vocab, header.contexts, header.provenance, pairs)
    }

    pub fn load_from_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::load(file)
    }
}
