//! Streaming stage runners.
//!
//! Input is read in fixed-size chunks, each chunk is split into `shards`
//! contiguous slices processed in parallel, and results are written back in
//! input order. Memory is bounded by the chunk size, and output bytes do not
//! depend on the shard count.

use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::heuristic::{check_pair, HeuristicOutcome, HeuristicRuleSet};
use crate::ingest::{AtomicWriter, IngestError, ParallelReader, ScoredTsvReader};
use crate::model::{FilterPolicy, LanguagePair, SentencePair};
use crate::scoring::{open_scorer, ScorerSpec, ScoringError};

/// Records held in memory per chunk.
pub const CHUNK_RECORDS: usize = 16_384;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
}

/// Applies `f` to every item, splitting the slice into `shards` contiguous
/// parts that run in parallel. Output order equals input order.
pub fn map_sharded<T, U, F>(items: &[T], shards: usize, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync,
{
    if items.is_empty() {
        return Vec::new();
    }
    let size = items.len().div_ceil(shards.max(1));
    let parts: Vec<Vec<U>> = items
        .par_chunks(size)
        .map(|part| part.iter().map(&f).collect())
        .collect();
    parts.into_iter().flatten().collect()
}

/// Pulls up to `size` items from a fallible iterator.
fn next_chunk<T, E, I>(iter: &mut I, size: usize) -> Result<Vec<T>, E>
where
    I: Iterator<Item = Result<T, E>>,
{
    let mut chunk = Vec::with_capacity(size.min(CHUNK_RECORDS));
    for item in iter.by_ref() {
        chunk.push(item?);
        if chunk.len() == size {
            break;
        }
    }
    Ok(chunk)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StageCounts {
    pub total: u64,
    pub kept: u64,
}

/// Heuristic stage: kept pairs go to `kept`, removed ones (with their reason)
/// to `removed` when given.
pub fn run_heuristic(
    input: &Path,
    pair: LanguagePair,
    rules: &HeuristicRuleSet,
    shards: usize,
    kept: &mut AtomicWriter,
    mut removed: Option<&mut AtomicWriter>,
) -> Result<StageCounts, PipelineError> {
    let mut reader = ParallelReader::tsv(input, pair)?;
    let mut counts = StageCounts::default();
    loop {
        let chunk: Vec<SentencePair> = next_chunk(&mut reader, CHUNK_RECORDS)?;
        if chunk.is_empty() {
            break;
        }
        let outcomes: Vec<HeuristicOutcome> = map_sharded(&chunk, shards, |p| check_pair(p, rules));
        for (p, o) in chunk.iter().zip(outcomes) {
            counts.total += 1;
            match o.reason {
                None => {
                    counts.kept += 1;
                    kept.write_pair(p)?;
                }
                Some(reason) => {
                    if let Some(w) = removed.as_deref_mut() {
                        w.write_fields(&[&p.source, &p.target, reason.as_str()])?;
                    }
                }
            }
        }
    }
    Ok(counts)
}

/// Scoring stage: writes `<source>\t<target>\t<score>` for every input pair.
pub fn run_scoring(
    input: &Path,
    pair: LanguagePair,
    spec: &ScorerSpec,
    shards: usize,
    out: &mut AtomicWriter,
) -> Result<u64, PipelineError> {
    let mut reader = ParallelReader::tsv(input, pair)?;
    let mut scorer = open_scorer(spec, shards)?;
    let mut total = 0;
    loop {
        let chunk: Vec<SentencePair> = next_chunk(&mut reader, CHUNK_RECORDS)?;
        if chunk.is_empty() {
            break;
        }
        let scores = scorer.score_batch(&chunk, shards)?;
        for (p, s) in chunk.iter().zip(scores) {
            out.write_scored(p, s)?;
            total += 1;
        }
    }
    scorer.finish()?;
    Ok(total)
}

pub struct ThresholdOutputs<'a> {
    pub kept: &'a mut AtomicWriter,
    pub removed: Option<&'a mut AtomicWriter>,
    pub kept_indices: Option<&'a mut AtomicWriter>,
}

/// Threshold stage over a scored TSV. Kept pairs are written as plain
/// parallel TSV; removed pairs keep their score column.
pub fn run_threshold(
    input: &Path,
    pair: LanguagePair,
    policy: &FilterPolicy,
    shards: usize,
    out: ThresholdOutputs<'_>,
) -> Result<StageCounts, PipelineError> {
    let ThresholdOutputs {
        kept,
        mut removed,
        mut kept_indices,
    } = out;
    let mut reader = ScoredTsvReader::open(input, pair)?;
    let mut counts = StageCounts::default();
    loop {
        let chunk: Vec<(SentencePair, f64)> = next_chunk(&mut reader, CHUNK_RECORDS)?;
        if chunk.is_empty() {
            break;
        }
        let keep: Vec<bool> = map_sharded(&chunk, shards, |(_, s)| policy.keeps(*s));
        for ((p, s), k) in chunk.iter().zip(keep) {
            counts.total += 1;
            if k {
                counts.kept += 1;
                kept.write_pair(p)?;
                if let Some(w) = kept_indices.as_deref_mut() {
                    w.write_line(&p.index.to_string())?;
                }
            } else if let Some(w) = removed.as_deref_mut() {
                w.write_scored(p, *s)?;
            }
        }
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sharded_map_preserves_order() {
        let items: Vec<u32> = (0..1000).collect();
        for shards in [1, 2, 3, 7, 8, 2000] {
            let out = map_sharded(&items, shards, |x| x * 2);
            assert_eq!(out, items.iter().map(|x| x * 2).collect::<Vec<_>>());
        }
        assert!(map_sharded(&Vec::<u32>::new(), 4, |x| *x).is_empty());
    }

    #[test]
    fn chunks_stop_at_first_error() {
        let mut it = vec![Ok(1), Ok(2), Err("bad"), Ok(4)].into_iter();
        assert_eq!(next_chunk(&mut it, 1), Ok(vec![1]));
        assert_eq!(next_chunk(&mut it, 5), Err("bad"));
    }
}
