#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use bitext_forge::cli::run_with;
use bitext_forge::mining::SplitSizes;
use bitext_forge::{validate_pair, LanguagePair, ScoreKind, ScoredPair, SentencePair};
use rand::Rng;
use sha2::{Digest, Sha256};
use unicode_categories::UnicodeCategories;

pub fn eng_hau() -> LanguagePair {
    LanguagePair::new("eng", "hau").unwrap()
}

pub fn pair(index: u64, source: &str, target: &str) -> SentencePair {
    validate_pair(source, target, index, eng_hau()).unwrap()
}

pub fn alignment(index: u64, score: f64) -> ScoredPair {
    ScoredPair::new(index, score, ScoreKind::Alignment).unwrap()
}

/// Pool whose texts are unique per index, with scores drawn from a small grid
/// so that ties are common.
pub fn scored_pool<R: Rng>(rng: &mut R, n: usize) -> Vec<(SentencePair, ScoredPair)> {
    (0..n as u64)
        .map(|i| {
            let score = rng.gen_range(0..50) as f64 / 10.0 - 1.0;
            (pair(i, &format!("src {i}"), &format!("tgt {i}")), alignment(i, score))
        })
        .collect()
}

pub fn sha256_file(path: &Path) -> [u8; 32] {
    Sha256::digest(fs::read(path).unwrap()).into()
}

pub struct CliRun {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn cli(args: &[&str]) -> CliRun {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("bitext-forge").chain(args.iter().copied());
    let code = run_with(argv, &mut out, &mut err);
    CliRun {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

// Characters whose category is stable across Unicode versions.
const LETTERS: &[char] = &[
    'a', 'Z', 'ɓ', 'ɗ', 'ƙ', 'ŋ', 'é', 'ß', 'ع', 'ب', 'ሀ', 'ἀ', 'ж', '中', 'ǅ', 'ʰ',
];
const DIGITS: &[char] = &['0', '7', '9', '٣', '٩', '४', '½', '²', 'Ⅻ'];
const PUNCT: &[char] = &[
    '.', ',', '!', '?', '-', '(', ')', '«', '»', '“', '”', '…', '،', '_', '/', '%', '¿',
];
const SYMBOLS: &[char] = &['$', '£', '€', '+', '=', '©', '°', '^', '`', '~', '|'];
const MARKS: &[char] = &['\u{301}', '\u{323}', '\u{64e}'];
const SPACES: &[char] = &[' ', ' ', ' ', '\u{a0}', '\u{3000}', '\u{2009}', '\u{85}'];
const CONTROLS: &[char] = &['\u{1}', '\u{7}', '\u{1b}', '\u{7f}'];

pub fn random_text<R: Rng>(rng: &mut R) -> String {
    // Each string draws from a random subset of pools so that all-junk
    // strings are common.
    let pools: Vec<&[char]> = [LETTERS, DIGITS, PUNCT, SYMBOLS, MARKS, SPACES, CONTROLS]
        .into_iter()
        .enumerate()
        .filter(|(i, _)| rng.gen_bool(if *i == 0 { 0.3 } else { 0.6 }))
        .map(|(_, p)| p)
        .collect();
    if pools.is_empty() {
        return String::new();
    }
    let len = rng.gen_range(0..12);
    (0..len)
        .map(|_| {
            let pool = pools[rng.gen_range(0..pools.len())];
            pool[rng.gen_range(0..pool.len())]
        })
        .collect()
}

/// Independent reading of the rule over the `unicode_categories` tables.
pub fn junk_oracle(text: &str, number: bool, punct: bool, symbol: bool, empty_is_junk: bool) -> bool {
    let visible: Vec<char> = text
        .chars()
        .filter(|c| !c.is_whitespace() && !c.is_other_control())
        .collect();
    if visible.is_empty() {
        return empty_is_junk;
    }
    visible
        .iter()
        .all(|c| (number && c.is_number()) || (punct && c.is_punctuation()) || (symbol && c.is_symbol()))
}

/// Stable sort by score, optional first-occurrence text dedup, then
/// contiguous train/dev/test slices.
pub fn oracle_negatives(pool: &[(SentencePair, ScoredPair)], needed: SplitSizes, dedup: bool) -> Option<[Vec<u64>; 3]> {
    let mut sorted: Vec<&(SentencePair, ScoredPair)> = pool.iter().collect();
    sorted.sort_by(|a, b| a.1.score.partial_cmp(&b.1.score).unwrap());
    let mut seen = HashSet::new();
    let picked: Vec<u64> = sorted
        .into_iter()
        .filter(|(p, _)| !dedup || seen.insert((p.source.clone(), p.target.clone())))
        .map(|(p, _)| p.index)
        .take(needed.total())
        .collect();
    if picked.len() < needed.total() {
        return None;
    }
    let (train, rest) = picked.split_at(needed.train);
    let (dev, test) = rest.split_at(needed.dev);
    Some([train.to_vec(), dev.to_vec(), test.to_vec()])
}

/// Kept sizes, pairwise intersections in `(i < j)` order, and the all-set intersection.
pub fn oracle_overlap(sets: &[Vec<u64>]) -> (Vec<u64>, Vec<u64>, u64) {
    let sets: Vec<BTreeSet<u64>> = sets.iter().map(|s| s.iter().copied().collect()).collect();
    let kept = sets.iter().map(|s| s.len() as u64).collect();
    let mut pairwise = Vec::new();
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            pairwise.push(sets[i].intersection(&sets[j]).count() as u64);
        }
    }
    let all = sets[0].iter().filter(|x| sets.iter().all(|s| s.contains(x))).count() as u64;
    (kept, pairwise, all)
}
