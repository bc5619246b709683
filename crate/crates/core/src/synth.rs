//! Seeded synthetic bitext for fixtures and benchmarks.
//!
//! Records mix word-like text in several scripts with numeric and
//! punctuation-only junk, occasional empty sides and exact repeats. Each
//! record also gets an unbounded alignment score; junk and mismatched pairs
//! tend to score lower.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::{format_score, AtomicWriter, IngestError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub pairs: u64,
    pub seed: u64,
    /// Probability that one or both sides are numbers/punctuation only.
    pub junk_rate: f64,
    /// Probability that a record repeats an earlier one verbatim.
    pub duplicate_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            pairs: 1000,
            seed: 0,
            junk_rate: 0.02,
            duplicate_rate: 0.01,
        }
    }
}

const SYLLABLES: &[&str] = &[
    "ka", "ba", "sa", "nu", "lo", "mi", "ta", "re", "wa", "zo", "ɗa", "ƙi", "ŋo", "ɛ", "ẹ", "ṣe", "gb", "ny", "tsh",
    "aŵ", "é", "ü", "ß", "ò", "ñ",
];
const WORDS_EN: &[&str] = &[
    "the",
    "news",
    "health",
    "water",
    "people",
    "city",
    "market",
    "school",
    "report",
    "today",
    "children",
    "government",
    "said",
    "new",
    "year",
    "rain",
    "road",
    "village",
    "football",
    "church",
];
const PUNCT: &[&str] = &[
    ".", ",", "!", "?", ";", ":", "-", "(", ")", "«", "»", "“", "”", "…", "/", "%", "#", "*",
];
const SYMBOLS: &[&str] = &["$", "£", "€", "+", "=", "©", "°"];

pub struct SynthRecord {
    pub source: String,
    pub target: String,
    pub alignment: f64,
}

/// Infinite deterministic record generator.
pub struct SynthGenerator {
    rng: ChaCha8Rng,
    config: SynthConfig,
    recent: Vec<(String, String)>,
}

impl SynthGenerator {
    pub fn new(config: SynthConfig) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            recent: Vec::new(),
        }
    }

    fn sentence(&mut self, english: bool) -> String {
        let n = self.rng.gen_range(1..12);
        let mut words = Vec::with_capacity(n);
        for _ in 0..n {
            let w = if english {
                WORDS_EN.choose(&mut self.rng).unwrap().to_string()
            } else {
                let k = self.rng.gen_range(1..4);
                (0..k).map(|_| *SYLLABLES.choose(&mut self.rng).unwrap()).collect()
            };
            words.push(w);
            if self.rng.gen_bool(0.1) {
                words.push(self.rng.gen_range(0..3000).to_string());
            }
            if self.rng.gen_bool(0.03) {
                words.push(SYMBOLS.choose(&mut self.rng).unwrap().to_string());
            }
        }
        let mut s = words.join(" ");
        if self.rng.gen_bool(0.8) {
            s.push_str(PUNCT[self.rng.gen_range(0..4)]);
        }
        s
    }

    fn junk(&mut self) -> String {
        match self.rng.gen_range(0..5) {
            0 => String::new(),
            1 => self.rng.gen_range(0..100_000).to_string(),
            2 => format!("{}/{}", self.rng.gen_range(1..32), self.rng.gen_range(1..13)),
            3 => (0..self.rng.gen_range(1..5))
                .map(|_| *PUNCT.choose(&mut self.rng).unwrap())
                .collect::<Vec<_>>()
                .join(" "),
            _ => format!("{} .", self.rng.gen_range(1..10)),
        }
    }

    fn alignment(&mut self, good: bool) -> f64 {
        let base = if good { 1.1 } else { 0.6 };
        let noise: f64 = self.rng.gen_range(-0.4..0.4);
        // Quantize so scores survive a round-trip through text unchanged.
        ((base + noise) * 1e6).round() / 1e6
    }
}

impl Iterator for SynthGenerator {
    type Item = SynthRecord;

    fn next(&mut self) -> Option<SynthRecord> {
        if !self.recent.is_empty() && self.rng.gen_bool(self.config.duplicate_rate) {
            let (s, t) = self.recent.choose(&mut self.rng).unwrap().clone();
            let alignment = self.alignment(true);
            return Some(SynthRecord {
                source: s,
                target: t,
                alignment,
            });
        }
        let junk = self.rng.gen_bool(self.config.junk_rate);
        let (mut source, mut target) = (self.sentence(true), self.sentence(false));
        if junk {
            match self.rng.gen_range(0..3) {
                0 => source = self.junk(),
                1 => target = self.junk(),
                _ => {
                    source = self.junk();
                    target = self.junk();
                }
            }
            if source.trim().is_empty() && target.trim().is_empty() {
                target = "0".to_string();
            }
        }
        let alignment = self.alignment(!junk);
        if self.recent.len() < 256 {
            self.recent.push((source.clone(), target.clone()));
        } else {
            let slot = self.rng.gen_range(0..256);
            self.recent[slot] = (source.clone(), target.clone());
        }
        Some(SynthRecord {
            source,
            target,
            alignment,
        })
    }
}

/// Writes `config.pairs` records as parallel TSV and, optionally, their
/// alignment scores as a positional score file.
pub fn write_synthetic(config: SynthConfig, corpus: &Path, scores: Option<&Path>) -> Result<u64, IngestError> {
    let mut out = AtomicWriter::create(corpus)?;
    let mut score_out = scores.map(AtomicWriter::create).transpose()?;
    for rec in SynthGenerator::new(config).take(config.pairs as usize) {
        out.write_fields(&[&rec.source, &rec.target])?;
        if let Some(w) = score_out.as_mut() {
            w.write_line(&format_score(rec.alignment))?;
        }
    }
    if let Some(w) = score_out {
        w.commit()?;
    }
    out.commit()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_pair, LanguagePair};

    #[test]
    fn same_seed_same_records() {
        let cfg = SynthConfig {
            pairs: 200,
            seed: 7,
            ..Default::default()
        };
        let a: Vec<_> = SynthGenerator::new(cfg)
            .take(200)
            .map(|r| (r.source, r.target, r.alignment))
            .collect();
        let b: Vec<_> = SynthGenerator::new(cfg)
            .take(200)
            .map(|r| (r.source, r.target, r.alignment))
            .collect();
        assert_eq!(a, b);
        let c: Vec<_> = SynthGenerator::new(SynthConfig { seed: 8, ..cfg })
            .take(200)
            .map(|r| (r.source, r.target, r.alignment))
            .collect();
        assert_ne!(a, c);
    }

    #[test]
    fn records_are_valid_pairs() {
        let pair = LanguagePair::new("eng", "hau").unwrap();
        let cfg = SynthConfig {
            junk_rate: 0.5,
            ..Default::default()
        };
        for (i, r) in SynthGenerator::new(cfg).take(2000).enumerate() {
            validate_pair(&r.source, &r.target, i as u64, pair).unwrap();
            assert!(r.alignment.is_finite());
        }
    }
}
