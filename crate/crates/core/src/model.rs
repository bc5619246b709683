//! Domain types shared by every pipeline stage.
//!
//! Texts are carried byte-exact: nothing in this crate normalizes, folds case
//! or collapses whitespace. Record identity is the 0-based record index, not
//! the text, so duplicate contents are legal here.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("language code {0:?} is not 2-3 lowercase ASCII letters")]
    BadLanguageCode(String),
    #[error("language pair {0:?} must be written as SRC-TGT")]
    BadLanguagePair(String),
    #[error("source and target language are both {0}")]
    SameLanguage(String),
    #[error("{side} text contains control character {ch:?} at byte offset {offset}")]
    EmbeddedControlChar { side: Side, ch: char, offset: usize },
    #[error("both sides are empty after trimming")]
    EmptyBothSides,
    #[error("{kind} score {value} is out of range")]
    ScoreOutOfRange { kind: ScoreKind, value: f64 },
    #[error("score {0} is not finite")]
    NonFiniteScore(f64),
    #[error("threshold {0} must be within [0, 1]")]
    ThresholdOutOfRange(f64),
    #[error("{label} label requires a {expected} origin, got {found}")]
    LabelOrigin {
        label: Label,
        expected: CorpusCategory,
        found: CorpusCategory,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Source,
    Target,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Source => "source",
            Side::Target => "target",
        })
    }
}

/// An ISO-639 style code: two or three lowercase ASCII letters, stored inline.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LangCode {
    bytes: [u8; 3],
    len: u8,
}

impl LangCode {
    pub fn new(code: &str) -> Result<Self, ValidationError> {
        let raw = code.as_bytes();
        if !(2..=3).contains(&raw.len()) || !raw.iter().all(u8::is_ascii_lowercase) {
            return Err(ValidationError::BadLanguageCode(code.to_string()));
        }
        let mut bytes = [0u8; 3];
        bytes[..raw.len()].copy_from_slice(raw);
        Ok(Self {
            bytes,
            len: raw.len() as u8,
        })
    }

    pub fn as_str(&self) -> &str {
        // Only ASCII lowercase bytes are ever stored.
        std::str::from_utf8(&self.bytes[..self.len as usize]).expect("ascii code")
    }
}

impl fmt::Debug for LangCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.as_str())
    }
}

impl fmt::Display for LangCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A translation direction such as `eng-hau`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LanguagePair {
    pub src: LangCode,
    pub tgt: LangCode,
}

impl LanguagePair {
    pub fn new(src: &str, tgt: &str) -> Result<Self, ValidationError> {
        let src = LangCode::new(src)?;
        let tgt = LangCode::new(tgt)?;
        if src == tgt {
            return Err(ValidationError::SameLanguage(src.to_string()));
        }
        Ok(Self { src, tgt })
    }

    /// Placeholder direction (`xx-yy`) used when a command is not told which
    /// pair it is processing.
    pub fn unspecified() -> Self {
        Self::new("xx", "yy").expect("valid placeholder")
    }
}

impl fmt::Display for LanguagePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.src, self.tgt)
    }
}

impl FromStr for LanguagePair {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (src, tgt) = s
            .split_once('-')
            .ok_or_else(|| ValidationError::BadLanguagePair(s.to_string()))?;
        Self::new(src, tgt)
    }
}

/// One aligned source/target record.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SentencePair {
    pub index: u64,
    pub source: String,
    pub target: String,
    pub pair: LanguagePair,
}

fn check_text(text: &str, side: Side) -> Result<(), ValidationError> {
    match text.find(['\t', '\n', '\r']) {
        Some(offset) => Err(ValidationError::EmbeddedControlChar {
            side,
            ch: text[offset..].chars().next().expect("found char"),
            offset,
        }),
        None => Ok(()),
    }
}

/// Checks format-level invariants and builds a [`SentencePair`].
///
/// A pair with exactly one empty side is accepted; rejecting it is the
/// heuristic filter's job.
pub fn validate_pair(
    raw_source: &str,
    raw_target: &str,
    index: u64,
    pair: LanguagePair,
) -> Result<SentencePair, ValidationError> {
    check_text(raw_source, Side::Source)?;
    check_text(raw_target, Side::Target)?;
    if raw_source.trim().is_empty() && raw_target.trim().is_empty() {
        return Err(ValidationError::EmptyBothSides);
    }
    Ok(SentencePair {
        index,
        source: raw_source.to_string(),
        target: raw_target.to_string(),
        pair,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    /// Unbounded alignment score (LASER-style margin); higher is better aligned.
    Alignment,
    /// Quality probability in `[0, 1]`.
    Probability,
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreKind::Alignment => "alignment",
            ScoreKind::Probability => "probability",
        })
    }
}

impl ScoreKind {
    pub fn check(self, value: f64) -> Result<f64, ValidationError> {
        if !value.is_finite() {
            return Err(ValidationError::NonFiniteScore(value));
        }
        if self == ScoreKind::Probability && !(0.0..=1.0).contains(&value) {
            return Err(ValidationError::ScoreOutOfRange { kind: self, value });
        }
        Ok(value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredPair {
    pub pair_index: u64,
    pub score: f64,
    pub kind: ScoreKind,
}

impl ScoredPair {
    pub fn new(pair_index: u64, score: f64, kind: ScoreKind) -> Result<Self, ValidationError> {
        Ok(Self {
            pair_index,
            score: kind.check(score)?,
            kind,
        })
    }
}

/// Curated ("true parallel") versus automatically aligned bitext.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusCategory {
    Clean,
    Noisy,
}

impl fmt::Display for CorpusCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorpusCategory::Clean => "clean",
            CorpusCategory::Noisy => "noisy",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    /// On-disk encoding: `1` positive, `0` negative.
    pub fn as_digit(self) -> &'static str {
        match self {
            Label::Positive => "1",
            Label::Negative => "0",
        }
    }

    pub fn from_digit(s: &str) -> Option<Self> {
        match s {
            "1" => Some(Label::Positive),
            "0" => Some(Label::Negative),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Positive => "positive",
            Label::Negative => "negative",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn file_name(self) -> &'static str {
        match self {
            Split::Train => "train.tsv",
            Split::Dev => "dev.tsv",
            Split::Test => "test.tsv",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

/// A classifier-training record. `origin` records which corpus category the
/// pair came from; positives must be clean and negatives noisy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledPair {
    pub pair: SentencePair,
    pub label: Label,
    pub split: Split,
    pub origin: CorpusCategory,
}

impl LabeledPair {
    pub fn new(
        pair: SentencePair,
        label: Label,
        split: Split,
        origin: CorpusCategory,
    ) -> Result<Self, ValidationError> {
        let expected = match label {
            Label::Positive => CorpusCategory::Clean,
            Label::Negative => CorpusCategory::Noisy,
        };
        if origin != expected {
            return Err(ValidationError::LabelOrigin {
                label,
                expected,
                found: origin,
            });
        }
        Ok(Self {
            pair,
            label,
            split,
            origin,
        })
    }
}

/// Keep a pair iff its quality probability is at least `threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterPolicy {
    threshold: f64,
}

impl FilterPolicy {
    pub fn new(threshold: f64) -> Result<Self, ValidationError> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(ValidationError::ThresholdOutOfRange(threshold));
        }
        Ok(Self { threshold })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    #[inline]
    pub fn keeps(&self, score: f64) -> bool {
        score >= self.threshold
    }
}
