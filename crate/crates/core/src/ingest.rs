//! Streaming readers and writers for the on-disk record formats.
//!
//! Every reader is a single-consumer iterator that holds one line in memory at
//! a time. Line numbers in diagnostics are 0-based; a final line without a
//! trailing LF is accepted, but writers always terminate records with LF.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;
use thiserror::Error;

use crate::manifest::{CorpusSource, ManifestEntry};
use crate::model::{validate_pair, Label, LanguagePair, ScoreKind, ScoredPair, SentencePair, ValidationError};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}:{line}: expected {expected} tab-separated fields, found {found}", path.display())]
    ColumnCount {
        path: PathBuf,
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("{}:{line}: invalid UTF-8 at byte offset {offset}", path.display())]
    Encoding { path: PathBuf, line: u64, offset: u64 },
    #[error("{} has {left} lines but {} has {right}", left_path.display(), right_path.display())]
    LineCountMismatch {
        left_path: PathBuf,
        left: u64,
        right_path: PathBuf,
        right: u64,
    },
    #[error("{}:{line}: {source}", path.display())]
    Invalid {
        path: PathBuf,
        line: u64,
        source: ValidationError,
    },
    #[error("{}:{line}: cannot parse {text:?} as a score", path.display())]
    ScoreParse { path: PathBuf, line: u64, text: String },
    #[error("{}:{line}: score {value} is not finite", path.display())]
    NonFiniteScore { path: PathBuf, line: u64, value: f64 },
    #[error("{}:{line}: {kind} score {value} is outside [0, 1]", path.display())]
    Range {
        path: PathBuf,
        line: u64,
        kind: ScoreKind,
        value: f64,
    },
    #[error("{}: expected {expected} scores, found {found}", path.display())]
    ScoreCountMismatch { path: PathBuf, expected: u64, found: u64 },
    #[error("{}:{line}: label must be 0 or 1, found {text:?}", path.display())]
    BadLabel { path: PathBuf, line: u64, text: String },
    #[error("{}:{line}: cannot parse {text:?} as a record index", path.display())]
    BadIndex { path: PathBuf, line: u64, text: String },
    #[error("{}: {message}", path.display())]
    Manifest { path: PathBuf, message: String },
}

impl IngestError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        IngestError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T, E = IngestError> = std::result::Result<T, E>;

/// Reads LF-terminated UTF-8 lines while tracking line number and byte offset.
pub(crate) struct LineReader {
    inner: BufReader<File>,
    path: PathBuf,
    buf: Vec<u8>,
    line: u64,
    offset: u64,
}

impl LineReader {
    pub(crate) fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| IngestError::io(path, e))?;
        Ok(Self {
            inner: BufReader::with_capacity(1 << 16, file),
            path: path.to_path_buf(),
            buf: Vec::with_capacity(256),
            line: 0,
            offset: 0,
        })
    }

    pub(crate) fn path(&self) -> &Path {
        &self.path
    }

    /// Returns the next line's 0-based number and text (without its LF),
    /// plus the file path for diagnostics.
    pub(crate) fn next_line(&mut self) -> Result<Option<(u64, &str, &Path)>> {
        self.buf.clear();
        let n = self
            .inner
            .read_until(b'\n', &mut self.buf)
            .map_err(|e| IngestError::io(&self.path, e))?;
        if n == 0 {
            return Ok(None);
        }
        let start = self.offset;
        let line = self.line;
        self.offset += n as u64;
        self.line += 1;
        if self.buf.last() == Some(&b'\n') {
            self.buf.pop();
        }
        match std::str::from_utf8(&self.buf) {
            Ok(text) => Ok(Some((line, text, &self.path))),
            Err(e) => Err(IngestError::Encoding {
                path: self.path.clone(),
                line,
                offset: start + e.valid_up_to() as u64,
            }),
        }
    }

    /// Counts the lines left in the file without decoding them.
    fn count_remaining(&mut self) -> Result<u64> {
        let mut n = 0;
        loop {
            self.buf.clear();
            let read = self
                .inner
                .read_until(b'\n', &mut self.buf)
                .map_err(|e| IngestError::io(&self.path, e))?;
            if read == 0 {
                return Ok(n);
            }
            n += 1;
        }
    }

    fn lines_read(&self) -> u64 {
        self.line
    }
}

fn split_fields<'a>(text: &'a str, expected: usize, path: &Path, line: u64) -> Result<Vec<&'a str>> {
    let fields: Vec<&str> = text.split('\t').collect();
    if fields.len() != expected {
        return Err(IngestError::ColumnCount {
            path: path.to_path_buf(),
            line,
            expected,
            found: fields.len(),
        });
    }
    Ok(fields)
}

fn make_pair(src: &str, tgt: &str, line: u64, pair: LanguagePair, path: &Path) -> Result<SentencePair> {
    validate_pair(src, tgt, line, pair).map_err(|source| IngestError::Invalid {
        path: path.to_path_buf(),
        line,
        source,
    })
}

enum ParallelSource {
    Tsv(LineReader),
    TwoFile(LineReader, LineReader),
}

/// Streams [`SentencePair`]s from a TSV file or a pair of line-aligned files.
/// Record index equals the 0-based line number. The stream ends after the
/// first error.
pub struct ParallelReader {
    source: ParallelSource,
    pair: LanguagePair,
    done: bool,
}

impl ParallelReader {
    pub fn tsv(path: &Path, pair: LanguagePair) -> Result<Self> {
        Ok(Self {
            source: ParallelSource::Tsv(LineReader::open(path)?),
            pair,
            done: false,
        })
    }

    pub fn two_file(source: &Path, target: &Path, pair: LanguagePair) -> Result<Self> {
        Ok(Self {
            source: ParallelSource::TwoFile(LineReader::open(source)?, LineReader::open(target)?),
            pair,
            done: false,
        })
    }

    fn read_next(&mut self) -> Result<Option<SentencePair>> {
        match &mut self.source {
            ParallelSource::Tsv(lines) => match lines.next_line()? {
                None => Ok(None),
                Some((line, text, path)) => {
                    let f = split_fields(text, 2, path, line)?;
                    make_pair(f[0], f[1], line, self.pair, path).map(Some)
                }
            },
            ParallelSource::TwoFile(left, right) => {
                let l = left.next_line()?.map(|(n, t, _)| (n, t.to_string()));
                let r = right.next_line()?.map(|(_, t, _)| t.to_string());
                match (l, r) {
                    (None, None) => Ok(None),
                    (Some((line, src)), Some(tgt)) => make_pair(&src, &tgt, line, self.pair, left.path()).map(Some),
                    _ => {
                        // One side ran out: report full line counts of both files.
                        let left_total = left.lines_read() + left.count_remaining()?;
                        let right_total = right.lines_read() + right.count_remaining()?;
                        Err(IngestError::LineCountMismatch {
                            left_path: left.path().to_path_buf(),
                            left: left_total,
                            right_path: right.path().to_path_buf(),
                            right: right_total,
                        })
                    }
                }
            }
        }
    }
}

impl Iterator for ParallelReader {
    type Item = Result<SentencePair>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.read_next() {
            Ok(Some(p)) => Some(Ok(p)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Streams the pairs declared by a manifest entry.
pub fn read_parallel(entry: &ManifestEntry) -> Result<ParallelReader> {
    match &entry.source {
        CorpusSource::Tsv(path) => ParallelReader::tsv(path, entry.pair),
        CorpusSource::TwoFile(src, tgt) => ParallelReader::two_file(src, tgt, entry.pair),
    }
}

fn parse_score(text: &str, kind: ScoreKind, path: &Path, line: u64) -> Result<f64> {
    let trimmed = text.trim_matches(|c: char| c.is_ascii_whitespace());
    let value: f64 = trimmed.parse().map_err(|_| IngestError::ScoreParse {
        path: path.to_path_buf(),
        line,
        text: text.to_string(),
    })?;
    kind.check(value).map_err(|e| match e {
        ValidationError::NonFiniteScore(value) => IngestError::NonFiniteScore {
            path: path.to_path_buf(),
            line,
            value,
        },
        _ => IngestError::Range {
            path: path.to_path_buf(),
            line,
            kind,
            value,
        },
    })
}

/// Streams a positional score file: line `i` scores record `i`.
pub struct ScoreReader {
    lines: LineReader,
    kind: ScoreKind,
    done: bool,
}

impl ScoreReader {
    pub fn open(path: &Path, kind: ScoreKind) -> Result<Self> {
        Ok(Self {
            lines: LineReader::open(path)?,
            kind,
            done: false,
        })
    }

    pub fn path(&self) -> &Path {
        self.lines.path()
    }

    /// Number of scores consumed so far.
    pub fn consumed(&self) -> u64 {
        self.lines.lines_read()
    }
}

impl Iterator for ScoreReader {
    type Item = Result<ScoredPair>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let kind = self.kind;
        let item = match self.lines.next_line() {
            Ok(None) => None,
            Ok(Some((line, text, path))) => Some(parse_score(text, kind, path, line).map(|score| ScoredPair {
                pair_index: line,
                score,
                kind,
            })),
            Err(e) => Some(Err(e)),
        };
        if !matches!(item, Some(Ok(_))) {
            self.done = true;
        }
        item
    }
}

/// Reads a whole score file, checking that it holds exactly `expected_count` lines.
pub fn read_scores(path: &Path, expected_count: u64, kind: ScoreKind) -> Result<Vec<ScoredPair>> {
    let scores = ScoreReader::open(path, kind)?.collect::<Result<Vec<_>>>()?;
    if scores.len() as u64 != expected_count {
        return Err(IngestError::ScoreCountMismatch {
            path: path.to_path_buf(),
            expected: expected_count,
            found: scores.len() as u64,
        });
    }
    Ok(scores)
}

/// Streams three-column records `<source>\t<target>\t<annotation>`.
pub struct AnnotatedReader<T> {
    lines: LineReader,
    pair: LanguagePair,
    parse: fn(&str, &Path, u64) -> Result<T>,
    done: bool,
}

/// Scored TSV: `<source>\t<target>\t<probability>`.
pub type ScoredTsvReader = AnnotatedReader<f64>;
/// Labeled TSV: `<source>\t<target>\t<0|1>`.
pub type LabeledTsvReader = AnnotatedReader<Label>;

impl ScoredTsvReader {
    pub fn open(path: &Path, pair: LanguagePair) -> Result<Self> {
        Ok(Self {
            lines: LineReader::open(path)?,
            pair,
            parse: |text, path, line| parse_score(text, ScoreKind::Probability, path, line),
            done: false,
        })
    }
}

impl LabeledTsvReader {
    pub fn open(path: &Path, pair: LanguagePair) -> Result<Self> {
        Ok(Self {
            lines: LineReader::open(path)?,
            pair,
            parse: |text, path, line| {
                Label::from_digit(text).ok_or_else(|| IngestError::BadLabel {
                    path: path.to_path_buf(),
                    line,
                    text: text.to_string(),
                })
            },
            done: false,
        })
    }
}

impl<T> AnnotatedReader<T> {
    fn read_next(&mut self) -> Result<Option<(SentencePair, T)>> {
        let Some((line, text, path)) = self.lines.next_line()? else {
            return Ok(None);
        };
        let f = split_fields(text, 3, path, line)?;
        let pair = make_pair(f[0], f[1], line, self.pair, path)?;
        let note = (self.parse)(f[2], path, line)?;
        Ok(Some((pair, note)))
    }
}

impl<T> Iterator for AnnotatedReader<T> {
    type Item = Result<(SentencePair, T)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.read_next() {
            Ok(Some(r)) => Some(Ok(r)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Reads a file of record indices, one per line.
pub fn read_indices(path: &Path) -> Result<Vec<u64>> {
    let mut lines = LineReader::open(path)?;
    let mut out = Vec::new();
    while let Some((line, text, _)) = lines.next_line()? {
        let idx = text.trim().parse().map_err(|_| IngestError::BadIndex {
            path: path.to_path_buf(),
            line,
            text: text.to_string(),
        })?;
        out.push(idx);
    }
    Ok(out)
}

/// Renders a score with exactly six fractional digits (ties to even).
pub fn format_score(score: f64) -> String {
    format!("{score:.6}")
}

/// Writes to a temporary file beside `dest` and renames it into place on
/// [`commit`](AtomicWriter::commit). Dropping without committing discards the
/// output.
pub struct AtomicWriter {
    out: BufWriter<NamedTempFile>,
    dest: PathBuf,
    records: u64,
}

impl AtomicWriter {
    pub fn create(dest: &Path) -> Result<Self> {
        let dir = match dest.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let tmp = NamedTempFile::new_in(dir).map_err(|e| IngestError::io(dest, e))?;
        Ok(Self {
            out: BufWriter::with_capacity(1 << 16, tmp),
            dest: dest.to_path_buf(),
            records: 0,
        })
    }

    /// Writes one LF-terminated record of tab-joined fields.
    pub fn write_fields(&mut self, fields: &[&str]) -> Result<()> {
        let res = (|| {
            for (i, f) in fields.iter().enumerate() {
                if i > 0 {
                    self.out.write_all(b"\t")?;
                }
                self.out.write_all(f.as_bytes())?;
            }
            self.out.write_all(b"\n")
        })();
        res.map_err(|e| IngestError::io(&self.dest, e))?;
        self.records += 1;
        Ok(())
    }

    pub fn write_pair(&mut self, p: &SentencePair) -> Result<()> {
        self.write_fields(&[&p.source, &p.target])
    }

    pub fn write_scored(&mut self, p: &SentencePair, score: f64) -> Result<()> {
        self.write_fields(&[&p.source, &p.target, &format_score(score)])
    }

    pub fn write_labeled(&mut self, p: &SentencePair, label: Label) -> Result<()> {
        self.write_fields(&[&p.source, &p.target, label.as_digit()])
    }

    pub fn write_line(&mut self, text: &str) -> Result<()> {
        self.write_fields(&[text])
    }

    pub fn write_raw(&mut self, bytes: &[u8]) -> Result<()> {
        self.out.write_all(bytes).map_err(|e| IngestError::io(&self.dest, e))
    }

    pub fn records(&self) -> u64 {
        self.records
    }

    /// Flushes, syncs and renames the temporary file onto the destination.
    pub fn commit(self) -> Result<u64> {
        let dest = self.dest;
        let tmp = self
            .out
            .into_inner()
            .map_err(|e| IngestError::io(&dest, e.into_error()))?;
        tmp.as_file().sync_all().map_err(|e| IngestError::io(&dest, e))?;
        tmp.persist(&dest).map_err(|e| IngestError::io(&dest, e.error))?;
        Ok(self.records)
    }
}

/// Writes pairs as canonical `source TAB target LF` records; returns the count.
pub fn write_parallel<I>(pairs: I, path: &Path) -> Result<u64>
where
    I: IntoIterator<Item = SentencePair>,
{
    let mut w = AtomicWriter::create(path)?;
    for p in pairs {
        w.write_pair(&p)?;
    }
    w.commit()
}
