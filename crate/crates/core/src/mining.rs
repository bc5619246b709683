//! Classifier training data: curated pairs as positives, the lowest-scoring
//! automatically aligned pairs as negatives, balanced per split.
//!
//! Candidates are ranked by `(alignment score, record index)` ascending, so
//! ties go to the lower index. The ranked prefix is then cut into contiguous
//! blocks (train takes the worst-scored block, then dev, then test) unless
//! round-robin assignment is requested.

use std::collections::{HashMap, HashSet};
use std::ops::{Index, IndexMut};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::ingest::{IngestError, ParallelReader, ScoreReader};
use crate::model::{CorpusCategory, Label, LabeledPair, LanguagePair, ScoreKind, ScoredPair, SentencePair, Split};

#[derive(Debug, Error)]
pub enum MiningError {
    #[error("need {needed} negatives but only {available} candidates are available")]
    InsufficientCandidates { needed: usize, available: usize },
    #[error("positive pair at {second_split} index {index} also appears in the {first_split} split")]
    SplitLeakage {
        first_split: Split,
        second_split: Split,
        index: u64,
    },
    #[error("candidate at record {index} carries a {kind} score; negatives are mined from alignment scores")]
    WrongScoreKind { index: u64, kind: ScoreKind },
    #[error("candidate record {pair_index} is paired with the score for record {score_index}")]
    IndexMismatch { pair_index: u64, score_index: u64 },
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// One value per split.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PerSplit<T> {
    pub train: T,
    pub dev: T,
    pub test: T,
}

impl<T> PerSplit<T> {
    pub fn new(train: T, dev: T, test: T) -> Self {
        Self { train, dev, test }
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> PerSplit<U> {
        PerSplit {
            train: f(&self.train),
            dev: f(&self.dev),
            test: f(&self.test),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Split, &T)> {
        Split::ALL.into_iter().map(move |s| (s, &self[s]))
    }
}

impl<T> Index<Split> for PerSplit<T> {
    type Output = T;

    fn index(&self, split: Split) -> &T {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }
}

impl<T> IndexMut<Split> for PerSplit<T> {
    fn index_mut(&mut self, split: Split) -> &mut T {
        match split {
            Split::Train => &mut self.train,
            Split::Dev => &mut self.dev,
            Split::Test => &mut self.test,
        }
    }
}

pub type SplitSizes = PerSplit<usize>;

impl SplitSizes {
    pub fn total(&self) -> usize {
        self.train + self.dev + self.test
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum NegativeAssignment {
    /// Ascending-score blocks: train, then dev, then test.
    #[default]
    Contiguous,
    /// Deal ranked negatives train, dev, test, train, ... skipping full splits.
    RoundRobin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MiningOptions {
    pub dedup: bool,
    pub assignment: NegativeAssignment,
}

impl Default for MiningOptions {
    fn default() -> Self {
        Self {
            dedup: true,
            assignment: NegativeAssignment::Contiguous,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MiningReport {
    pub positives: PerSplit<usize>,
    pub negatives: PerSplit<usize>,
    pub duplicates_dropped: u64,
    /// Highest alignment score among the selected negatives.
    pub score_cutoff: Option<f64>,
}

type TextKey = (String, String);

fn text_key(p: &SentencePair) -> TextKey {
    (p.source.clone(), p.target.clone())
}

/// Walks candidates in rank order and keeps the first `needed` acceptable ones.
struct Picker<'a> {
    needed: usize,
    dedup: bool,
    exclude: &'a HashSet<TextKey>,
    seen: HashSet<TextKey>,
    picked: Vec<(SentencePair, f64)>,
    duplicates_dropped: u64,
}

impl<'a> Picker<'a> {
    fn new(needed: usize, dedup: bool, exclude: &'a HashSet<TextKey>) -> Self {
        Self {
            needed,
            dedup,
            exclude,
            seen: HashSet::new(),
            picked: Vec::with_capacity(needed),
            duplicates_dropped: 0,
        }
    }

    fn done(&self) -> bool {
        self.picked.len() >= self.needed
    }

    fn offer(&mut self, pair: &SentencePair, score: f64) {
        if self.done() {
            return;
        }
        if self.dedup {
            let key = text_key(pair);
            if self.exclude.contains(&key) || self.seen.contains(&key) {
                self.duplicates_dropped += 1;
                return;
            }
            self.seen.insert(key);
        }
        self.picked.push((pair.clone(), score));
    }

    fn finish(
        self,
        needed: SplitSizes,
        assignment: NegativeAssignment,
        available: usize,
    ) -> Result<(PerSplit<Vec<SentencePair>>, MiningReport), MiningError> {
        if !self.done() {
            return Err(MiningError::InsufficientCandidates {
                needed: self.needed,
                available,
            });
        }
        let score_cutoff = self
            .picked
            .iter()
            .map(|(_, s)| *s)
            .fold(None, |m: Option<f64>, s| Some(m.map_or(s, |m| m.max(s))));
        let splits = assign(self.picked.into_iter().map(|(p, _)| p), needed, assignment);
        let report = MiningReport {
            positives: needed,
            negatives: splits.map(Vec::len),
            duplicates_dropped: self.duplicates_dropped,
            score_cutoff,
        };
        Ok((splits, report))
    }
}

fn assign<I>(ranked: I, needed: SplitSizes, assignment: NegativeAssignment) -> PerSplit<Vec<SentencePair>>
where
    I: Iterator<Item = SentencePair>,
{
    let mut out = PerSplit::new(
        Vec::with_capacity(needed.train),
        Vec::with_capacity(needed.dev),
        Vec::with_capacity(needed.test),
    );
    match assignment {
        NegativeAssignment::Contiguous => {
            let mut splits = Split::ALL.into_iter().filter(|&s| needed[s] > 0);
            let mut current = splits.next();
            for p in ranked {
                let Some(s) = current else { break };
                out[s].push(p);
                if out[s].len() == needed[s] {
                    current = splits.next();
                }
            }
        }
        NegativeAssignment::RoundRobin => {
            let mut turn = 0usize;
            for p in ranked {
                let Some(s) = (0..3)
                    .map(|k| Split::ALL[(turn + k) % 3])
                    .find(|&s| out[s].len() < needed[s])
                else {
                    break;
                };
                out[s].push(p);
                turn = (Split::ALL.iter().position(|&x| x == s).unwrap() + 1) % 3;
            }
        }
    }
    out
}

/// Rank order over `(score, index)` ascending. Ties on score resolve by
/// lower record index, which is unique, so the parallel unstable sort gives
/// the same order as a sequential stable sort.
fn rank(keys: &[(f64, u64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.par_sort_unstable_by(|&a, &b| keys[a].0.total_cmp(&keys[b].0).then(keys[a].1.cmp(&keys[b].1)));
    order
}

fn check_candidates(candidates: &[(SentencePair, ScoredPair)]) -> Result<(), MiningError> {
    for (p, s) in candidates {
        if s.kind != ScoreKind::Alignment {
            return Err(MiningError::WrongScoreKind {
                index: p.index,
                kind: s.kind,
            });
        }
        if s.pair_index != p.index {
            return Err(MiningError::IndexMismatch {
                pair_index: p.index,
                score_index: s.pair_index,
            });
        }
    }
    Ok(())
}

fn select_excluding(
    candidates: &[(SentencePair, ScoredPair)],
    needed: SplitSizes,
    options: &MiningOptions,
    exclude: &HashSet<TextKey>,
) -> Result<(PerSplit<Vec<SentencePair>>, MiningReport), MiningError> {
    check_candidates(candidates)?;
    let keys: Vec<(f64, u64)> = candidates.iter().map(|(p, s)| (s.score, p.index)).collect();
    let mut picker = Picker::new(needed.total(), options.dedup, exclude);
    if !options.dedup && needed.total() <= candidates.len() {
        // Without dedup only the lowest `total` ranks matter.
        let mut order: Vec<usize> = (0..keys.len()).collect();
        let cmp = |a: &usize, b: &usize| keys[*a].0.total_cmp(&keys[*b].0).then(keys[*a].1.cmp(&keys[*b].1));
        if needed.total() > 0 && needed.total() < order.len() {
            order.select_nth_unstable_by(needed.total() - 1, cmp);
        }
        order.truncate(needed.total());
        order.sort_unstable_by(cmp);
        for i in order {
            picker.offer(&candidates[i].0, candidates[i].1.score);
        }
    } else {
        for i in rank(&keys) {
            if picker.done() {
                break;
            }
            picker.offer(&candidates[i].0, candidates[i].1.score);
        }
    }
    let available = candidates.len() - picker.duplicates_dropped as usize;
    picker.finish(needed, options.assignment, available)
}

/// Selects the `needed.total()` lowest-scored candidates and splits them.
pub fn select_negatives(
    candidates: &[(SentencePair, ScoredPair)],
    needed: SplitSizes,
    dedup: bool,
) -> Result<(PerSplit<Vec<SentencePair>>, MiningReport), MiningError> {
    select_negatives_with(
        candidates,
        needed,
        &MiningOptions {
            dedup,
            ..MiningOptions::default()
        },
    )
}

pub fn select_negatives_with(
    candidates: &[(SentencePair, ScoredPair)],
    needed: SplitSizes,
    options: &MiningOptions,
) -> Result<(PerSplit<Vec<SentencePair>>, MiningReport), MiningError> {
    select_excluding(candidates, needed, options, &HashSet::new())
}

/// Checks that no text pair appears in two positive splits and returns the
/// set of all positive texts.
fn positive_texts(positives: &PerSplit<Vec<SentencePair>>) -> Result<HashSet<TextKey>, MiningError> {
    let mut first_seen: HashMap<TextKey, Split> = HashMap::new();
    for (split, pairs) in positives.iter() {
        for p in pairs {
            let key = text_key(p);
            match first_seen.get(&key) {
                Some(&other) if other != split => {
                    return Err(MiningError::SplitLeakage {
                        first_split: other,
                        second_split: split,
                        index: p.index,
                    })
                }
                Some(_) => {}
                None => {
                    first_seen.insert(key, split);
                }
            }
        }
    }
    Ok(first_seen.into_keys().collect())
}

pub type ClassifierDataset = PerSplit<Vec<LabeledPair>>;

fn assemble(positives: PerSplit<Vec<SentencePair>>, negatives: PerSplit<Vec<SentencePair>>) -> ClassifierDataset {
    let mut positives = positives;
    let mut negatives = negatives;
    let mut out = ClassifierDataset::default();
    for split in Split::ALL {
        let pos = std::mem::take(&mut positives[split]);
        let neg = std::mem::take(&mut negatives[split]);
        out[split] = pos
            .into_iter()
            .map(|p| LabeledPair::new(p, Label::Positive, split, CorpusCategory::Clean))
            .chain(
                neg.into_iter()
                    .map(|p| LabeledPair::new(p, Label::Negative, split, CorpusCategory::Noisy)),
            )
            .collect::<Result<_, _>>()
            .expect("labels match origins by construction");
    }
    out
}

/// Builds balanced per-split labeled data from clean positives and a scored
/// noisy pool. With `dedup`, noisy candidates whose text duplicates a positive
/// or an already chosen negative are skipped.
pub fn build_classifier_dataset(
    positives: PerSplit<Vec<SentencePair>>,
    noisy_pool: &[(SentencePair, ScoredPair)],
    options: &MiningOptions,
) -> Result<(ClassifierDataset, MiningReport), MiningError> {
    let exclude = positive_texts(&positives)?;
    let needed = positives.map(Vec::len);
    let exclude = if options.dedup { exclude } else { HashSet::new() };
    let (negatives, report) = select_excluding(noisy_pool, needed, options, &exclude)?;
    Ok((assemble(positives, negatives), report))
}

/// File-backed variant of [`build_classifier_dataset`] for pools too large
/// to hold in memory. Scores are read in full; pair texts are fetched only
/// for a ranked prefix, which is widened until enough distinct candidates
/// are found. Results equal the in-memory builder on the same data.
pub fn build_classifier_dataset_from_files(
    positives: PerSplit<Vec<SentencePair>>,
    noisy: &Path,
    scores: &Path,
    pair: LanguagePair,
    options: &MiningOptions,
) -> Result<(ClassifierDataset, MiningReport), MiningError> {
    let exclude = positive_texts(&positives)?;
    let exclude = if options.dedup { exclude } else { HashSet::new() };
    let needed = positives.map(Vec::len);
    let total = needed.total();

    let keys: Vec<(f64, u64)> = ScoreReader::open(scores, ScoreKind::Alignment)?
        .map(|s| s.map(|s| (s.score, s.pair_index)))
        .collect::<Result<_, _>>()?;
    let order = rank(&keys);

    let mut picker = Picker::new(total, options.dedup, &exclude);
    let mut fetched: HashMap<u64, SentencePair> = HashMap::new();
    let mut offered = 0usize;
    let mut window = if options.dedup { total + total / 16 + 16 } else { total };
    let mut verified = false;
    loop {
        let upto = window.min(order.len());
        let mut wanted: Vec<u64> = order[offered..upto].iter().map(|&i| keys[i].1).collect();
        wanted.sort_unstable();
        let mut next = wanted.iter().peekable();
        let mut count = 0u64;
        for p in ParallelReader::tsv(noisy, pair)? {
            let p = p?;
            count += 1;
            while next.peek().is_some_and(|&&w| w < p.index) {
                next.next();
            }
            if next.peek() == Some(&&p.index) {
                fetched.insert(p.index, p);
                next.next();
            } else if verified && next.peek().is_none() {
                break;
            }
        }
        if !verified {
            if count != keys.len() as u64 {
                return Err(IngestError::ScoreCountMismatch {
                    path: scores.to_path_buf(),
                    expected: count,
                    found: keys.len() as u64,
                }
                .into());
            }
            verified = true;
        }
        for &i in &order[offered..upto] {
            let (score, index) = keys[i];
            let p = fetched.remove(&index).expect("fetched in this pass");
            picker.offer(&p, score);
            if picker.done() {
                break;
            }
        }
        offered = upto;
        if picker.done() || upto == order.len() {
            break;
        }
        window = (window * 2).max(upto + 1);
    }
    let available = order.len() - picker.duplicates_dropped as usize;
    let (negatives, report) = picker.finish(needed, options.assignment, available)?;
    Ok((assemble(positives, negatives), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_pair;

    fn eng_hau() -> LanguagePair {
        LanguagePair::new("eng", "hau").unwrap()
    }

    fn pool(scores: &[f64]) -> Vec<(SentencePair, ScoredPair)> {
        scores
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let i = i as u64;
                (
                    validate_pair(&format!("s{i}"), &format!("t{i}"), i, eng_hau()).unwrap(),
                    ScoredPair::new(i, s, ScoreKind::Alignment).unwrap(),
                )
            })
            .collect()
    }

    fn indices(v: &[SentencePair]) -> Vec<u64> {
        v.iter().map(|p| p.index).collect()
    }

    #[test]
    fn picks_lowest_scores() {
        let (neg, report) = select_negatives(&pool(&[0.9, 0.1, 0.5, 0.2]), SplitSizes::new(2, 0, 0), true).unwrap();
        assert_eq!(indices(&neg.train), vec![1, 3]);
        assert_eq!(report.score_cutoff, Some(0.2));
        assert_eq!(report.negatives, SplitSizes::new(2, 0, 0));
    }

    #[test]
    fn ties_go_to_lower_index() {
        let (neg, _) = select_negatives(&pool(&[0.3, 0.3, 0.3]), SplitSizes::new(2, 0, 0), false).unwrap();
        assert_eq!(indices(&neg.train), vec![0, 1]);
    }

    #[test]
    fn contiguous_blocks() {
        let scores = [0.6, 0.1, 0.5, 0.2, 0.4, 0.3];
        // Full sort oracle: indices by ascending score.
        let mut oracle: Vec<u64> = (0..6).collect();
        oracle.sort_by(|&a, &b| scores[a as usize].partial_cmp(&scores[b as usize]).unwrap());
        let (neg, _) = select_negatives(&pool(&scores), SplitSizes::new(2, 2, 2), true).unwrap();
        assert_eq!(indices(&neg.train), oracle[0..2]);
        assert_eq!(indices(&neg.dev), oracle[2..4]);
        assert_eq!(indices(&neg.test), oracle[4..6]);
    }

    #[test]
    fn round_robin_deals_in_rank_order() {
        let scores = [0.6, 0.1, 0.5, 0.2, 0.4, 0.3, 0.7];
        let options = MiningOptions {
            dedup: false,
            assignment: NegativeAssignment::RoundRobin,
        };
        let (neg, _) = select_negatives_with(&pool(&scores), SplitSizes::new(3, 1, 2), &options).unwrap();
        // ranked: 1, 3, 5, 4, 2, 0
        assert_eq!(indices(&neg.train), vec![1, 4, 0]);
        assert_eq!(indices(&neg.dev), vec![3]);
        assert_eq!(indices(&neg.test), vec![5, 2]);
    }

    #[test]
    fn negative_scores_are_ranked_first() {
        let (neg, r) = select_negatives(&pool(&[0.0, -1.5, 2.0]), SplitSizes::new(1, 0, 0), true).unwrap();
        assert_eq!(indices(&neg.train), vec![1]);
        assert_eq!(r.score_cutoff, Some(-1.5));
    }

    #[test]
    fn insufficient_pool() {
        let err = select_negatives(&pool(&[0.1; 5]), SplitSizes::new(3, 2, 2), true).unwrap_err();
        assert!(matches!(
            err,
            MiningError::InsufficientCandidates {
                needed: 7,
                available: 5
            }
        ));
    }

    #[test]
    fn dedup_skips_repeated_text() {
        let mut p = pool(&[0.1, 0.2, 0.3]);
        p[1].0.source = "s0".into();
        p[1].0.target = "t0".into();
        let (neg, r) = select_negatives(&p, SplitSizes::new(2, 0, 0), true).unwrap();
        assert_eq!(indices(&neg.train), vec![0, 2]);
        assert_eq!(r.duplicates_dropped, 1);
        let (neg, _) = select_negatives(&p, SplitSizes::new(2, 0, 0), false).unwrap();
        assert_eq!(indices(&neg.train), vec![0, 1]);
        assert!(matches!(
            select_negatives(&p, SplitSizes::new(3, 0, 0), true),
            Err(MiningError::InsufficientCandidates {
                needed: 3,
                available: 2
            })
        ));
    }

    #[test]
    fn rejects_probability_scores() {
        let mut p = pool(&[0.1]);
        p[0].1.kind = ScoreKind::Probability;
        assert!(matches!(
            select_negatives(&p, SplitSizes::new(1, 0, 0), true),
            Err(MiningError::WrongScoreKind { .. })
        ));
    }

    fn positives(n: PerSplit<usize>) -> PerSplit<Vec<SentencePair>> {
        let mut k = 0u64;
        n.map(|&count| {
            (0..count)
                .map(|_| {
                    k += 1;
                    validate_pair(&format!("clean {k}"), &format!("tsabta {k}"), k, eng_hau()).unwrap()
                })
                .collect()
        })
    }

    #[test]
    fn dataset_is_balanced() {
        let pos = positives(SplitSizes::new(3, 2, 1));
        let (ds, report) = build_classifier_dataset(
            pos,
            &pool(&[0.5, 0.4, 0.3, 0.2, 0.1, 0.0, 0.9]),
            &MiningOptions::default(),
        )
        .unwrap();
        for (split, rows) in ds.iter() {
            let positives = rows.iter().filter(|r| r.label == Label::Positive).count();
            let negatives = rows.iter().filter(|r| r.label == Label::Negative).count();
            assert_eq!(positives, negatives, "{split}");
            assert!(rows.iter().all(|r| r.split == split));
        }
        assert_eq!(report.positives, report.negatives);
        assert_eq!(ds.train.len(), 6);
    }

    #[test]
    fn empty_positive_split_draws_nothing() {
        let pos = positives(SplitSizes::new(0, 1, 0));
        let (ds, _) = build_classifier_dataset(pos, &pool(&[0.5, 0.1]), &MiningOptions::default()).unwrap();
        assert!(ds.train.is_empty());
        assert_eq!(ds.dev.len(), 2);
    }

    #[test]
    fn too_small_pool_for_positives() {
        let pos = positives(SplitSizes::new(3, 2, 2));
        assert!(matches!(
            build_classifier_dataset(pos, &pool(&[0.1; 5]), &MiningOptions::default()),
            Err(MiningError::InsufficientCandidates { .. })
        ));
    }

    #[test]
    fn leakage_between_positive_splits() {
        let mut pos = positives(SplitSizes::new(1, 1, 0));
        pos.dev[0].source = pos.train[0].source.clone();
        pos.dev[0].target = pos.train[0].target.clone();
        assert!(matches!(
            build_classifier_dataset(pos, &pool(&[0.1; 5]), &MiningOptions::default()),
            Err(MiningError::SplitLeakage {
                first_split: Split::Train,
                second_split: Split::Dev,
                ..
            })
        ));
    }

    #[test]
    fn noisy_copy_of_positive_is_skipped() {
        let pos = positives(SplitSizes::new(1, 0, 0));
        let mut p = pool(&[0.1, 0.2]);
        p[0].0.source = pos.train[0].source.clone();
        p[0].0.target = pos.train[0].target.clone();
        let (ds, r) = build_classifier_dataset(pos, &p, &MiningOptions::default()).unwrap();
        assert_eq!(ds.train[1].pair.index, 1);
        assert_eq!(r.duplicates_dropped, 1);
    }
}
