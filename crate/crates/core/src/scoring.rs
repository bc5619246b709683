//! Quality probabilities for sentence pairs.
//!
//! Three scorer kinds share one interface: a deterministic built-in baseline,
//! a positional score file, and an external process speaking the line
//! protocol below. Scores are always probabilities in `[0, 1]`; an external
//! model must apply its own sigmoid.
//!
//! External scorer protocol (UTF-8 lines over stdin/stdout):
//!
//! 1. on startup the scorer writes `BITEXT-SCORER 1 <deterministic|nondeterministic>`
//! 2. for every request `source TAB target LF` it writes one decimal in
//!    `[0, 1]` with at most 6 fractional digits, then flushes
//! 3. end of input means shutdown; the scorer must exit 0
//!
//! Anything else is a protocol error.

use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;
use unicode_general_category::{get_general_category, GeneralCategory};

use crate::ingest::{IngestError, ScoreReader};
use crate::model::{ScoreKind, ScoredPair, SentencePair};

pub const HANDSHAKE_PREFIX: &str = "BITEXT-SCORER 1 ";

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("baseline weights must be non-negative and sum to 1, got {0} and {1}")]
    BadWeights(f64, f64),
    #[error("unrecognised scorer {0:?}; expected builtin[:W1,W2], file:PATH or cmd:ARGV")]
    BadSpec(String),
    #[error("score for request line {line} is {value}, outside [0, 1]")]
    Range { line: u64, value: f64 },
    #[error("scorer `{command}`: {message}")]
    Process { command: String, message: String },
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

impl ScoringError {
    /// True for failures attributable to an external scorer process.
    pub fn is_protocol(&self) -> bool {
        matches!(self, ScoringError::Range { .. } | ScoringError::Process { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineParams {
    length_ratio_weight: f64,
    letter_fraction_weight: f64,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self {
            length_ratio_weight: 0.5,
            letter_fraction_weight: 0.5,
        }
    }
}

impl BaselineParams {
    pub fn new(length_ratio_weight: f64, letter_fraction_weight: f64) -> Result<Self, ScoringError> {
        let ok = length_ratio_weight >= 0.0
            && letter_fraction_weight >= 0.0
            && ((length_ratio_weight + letter_fraction_weight) - 1.0).abs() <= 1e-9;
        if !ok {
            return Err(ScoringError::BadWeights(length_ratio_weight, letter_fraction_weight));
        }
        Ok(Self {
            length_ratio_weight,
            letter_fraction_weight,
        })
    }

    pub fn weights(&self) -> (f64, f64) {
        (self.length_ratio_weight, self.letter_fraction_weight)
    }
}

fn is_letter(c: char) -> bool {
    use GeneralCategory::*;
    matches!(
        get_general_category(c),
        UppercaseLetter | LowercaseLetter | TitlecaseLetter | ModifierLetter | OtherLetter
    )
}

/// Weighted sum of the length ratio (shorter over longer side, in Unicode
/// scalars) and the share of letters among all non-whitespace characters.
pub fn baseline_score(pair: &SentencePair, params: &BaselineParams) -> f64 {
    let s = pair.source.chars().count();
    let t = pair.target.chars().count();
    let ratio = if s == 0 || t == 0 {
        0.0
    } else {
        s.min(t) as f64 / s.max(t) as f64
    };
    let (mut letters, mut visible) = (0usize, 0usize);
    for c in pair.source.chars().chain(pair.target.chars()) {
        if !c.is_whitespace() {
            visible += 1;
            if is_letter(c) {
                letters += 1;
            }
        }
    }
    let fraction = if visible == 0 {
        0.0
    } else {
        letters as f64 / visible as f64
    };
    (params.length_ratio_weight * ratio + params.letter_fraction_weight * fraction).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScorerSpec {
    Builtin(BaselineParams),
    ScoreFile(PathBuf),
    External(Vec<String>),
}

impl FromStr for ScorerSpec {
    type Err = ScoringError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ScoringError::BadSpec(s.to_string());
        if s == "builtin" {
            return Ok(ScorerSpec::Builtin(BaselineParams::default()));
        }
        if let Some(w) = s.strip_prefix("builtin:") {
            let (a, b) = w.split_once(',').ok_or_else(bad)?;
            let a: f64 = a.trim().parse().map_err(|_| bad())?;
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            return Ok(ScorerSpec::Builtin(BaselineParams::new(a, b)?));
        }
        if let Some(path) = s.strip_prefix("file:") {
            if path.is_empty() {
                return Err(bad());
            }
            return Ok(ScorerSpec::ScoreFile(PathBuf::from(path)));
        }
        if let Some(cmd) = s.strip_prefix("cmd:") {
            let argv = shell_words::split(cmd).map_err(|_| bad())?;
            if argv.is_empty() {
                return Err(bad());
            }
            return Ok(ScorerSpec::External(argv));
        }
        Err(bad())
    }
}

impl fmt::Display for ScorerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScorerSpec::Builtin(p) => write!(f, "builtin:{},{}", p.length_ratio_weight, p.letter_fraction_weight),
            ScorerSpec::ScoreFile(p) => write!(f, "file:{}", p.display()),
            ScorerSpec::External(argv) => write!(f, "cmd:{}", shell_words::join(argv)),
        }
    }
}

/// Scores consecutive batches of a pair stream. `shards` is the number of
/// independent workers a batch may be split across; results never depend on it.
pub trait Scorer {
    fn score_batch(&mut self, batch: &[SentencePair], shards: usize) -> Result<Vec<f64>, ScoringError>;

    /// Checks end-of-stream conditions (trailing scores, process exit status).
    fn finish(self: Box<Self>) -> Result<(), ScoringError>;
}

pub fn open_scorer(spec: &ScorerSpec, shards: usize) -> Result<Box<dyn Scorer>, ScoringError> {
    Ok(match spec {
        ScorerSpec::Builtin(params) => Box::new(BuiltinScorer { params: *params }),
        ScorerSpec::ScoreFile(path) => Box::new(FileScorer {
            reader: ScoreReader::open(path, ScoreKind::Probability)?,
            path: path.clone(),
            requested: 0,
        }),
        ScorerSpec::External(argv) => Box::new(ExternalScorer::spawn(argv, shards)?),
    })
}

fn shard_len(len: usize, shards: usize) -> usize {
    len.div_ceil(shards.max(1)).max(1)
}

struct BuiltinScorer {
    params: BaselineParams,
}

impl Scorer for BuiltinScorer {
    fn score_batch(&mut self, batch: &[SentencePair], shards: usize) -> Result<Vec<f64>, ScoringError> {
        let params = self.params;
        let parts: Vec<Vec<f64>> = batch
            .par_chunks(shard_len(batch.len(), shards))
            .map(|chunk| chunk.iter().map(|p| baseline_score(p, &params)).collect())
            .collect();
        Ok(parts.concat())
    }

    fn finish(self: Box<Self>) -> Result<(), ScoringError> {
        Ok(())
    }
}

struct FileScorer {
    reader: ScoreReader,
    path: PathBuf,
    requested: u64,
}

impl Scorer for FileScorer {
    fn score_batch(&mut self, batch: &[SentencePair], _shards: usize) -> Result<Vec<f64>, ScoringError> {
        let mut out = Vec::with_capacity(batch.len());
        for _ in batch {
            self.requested += 1;
            match self.reader.next() {
                Some(s) => out.push(s?.score),
                None => {
                    return Err(IngestError::ScoreCountMismatch {
                        path: self.path.clone(),
                        expected: self.requested,
                        found: self.reader.consumed(),
                    }
                    .into())
                }
            }
        }
        Ok(out)
    }

    fn finish(mut self: Box<Self>) -> Result<(), ScoringError> {
        let mut extra = 0;
        for s in self.reader.by_ref() {
            s?;
            extra += 1;
        }
        if extra > 0 {
            return Err(IngestError::ScoreCountMismatch {
                path: self.path.clone(),
                expected: self.requested,
                found: self.requested + extra,
            }
            .into());
        }
        Ok(())
    }
}

/// Parses one response: an optional sign, digits, and at most 6 fractional
/// digits. Returns `None` for anything that is not such a decimal.
fn parse_response(text: &str) -> Option<f64> {
    let body = text.strip_prefix('-').unwrap_or(text);
    let (int, frac) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if !digits(int) || frac.is_some_and(|f| !digits(f) || f.len() > 6) {
        return None;
    }
    text.parse().ok()
}

struct PluginProcess {
    child: Child,
    stdin: Option<BufWriter<ChildStdin>>,
    stdout: BufReader<ChildStdout>,
    deterministic: bool,
}

impl PluginProcess {
    fn spawn(argv: &[String], command: &str) -> Result<Self, ScoringError> {
        let perr = |message: String| ScoringError::Process {
            command: command.to_string(),
            message,
        };
        let mut child = Command::new(&argv[0])
            .args(&argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| perr(format!("cannot start: {e}")))?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let mut stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut line = String::new();
        let read = stdout.read_line(&mut line);
        let mut proc = Self {
            child,
            stdin: Some(stdin),
            stdout,
            deterministic: false,
        };
        match read {
            Ok(0) => return Err(perr("exited without a handshake".into())),
            Err(e) => return Err(perr(format!("unreadable handshake: {e}"))),
            Ok(_) => {}
        }
        let line = line.strip_suffix('\n').unwrap_or(&line);
        proc.deterministic = match line.strip_prefix(HANDSHAKE_PREFIX) {
            Some("deterministic") => true,
            Some("nondeterministic") => false,
            _ => return Err(perr(format!("bad handshake {line:?}"))),
        };
        Ok(proc)
    }

    /// Sends `batch` and reads one response per request. `first_line` is the
    /// stream position of the first request, used in diagnostics.
    fn score(&mut self, batch: &[SentencePair], first_line: u64, command: &str) -> Result<Vec<f64>, ScoringError> {
        let perr = |message: String| ScoringError::Process {
            command: command.to_string(),
            message,
        };
        let Self {
            child, stdin, stdout, ..
        } = self;
        let stdin = stdin.as_mut().expect("open until finish");
        let result = std::thread::scope(|scope| {
            let writer = scope.spawn(move || -> std::io::Result<()> {
                for p in batch {
                    stdin.write_all(p.source.as_bytes())?;
                    stdin.write_all(b"\t")?;
                    stdin.write_all(p.target.as_bytes())?;
                    stdin.write_all(b"\n")?;
                }
                stdin.flush()
            });
            let mut read_all = || {
                let mut out = Vec::with_capacity(batch.len());
                let mut line = String::new();
                for k in 0..batch.len() {
                    let n = first_line + k as u64;
                    line.clear();
                    match stdout.read_line(&mut line) {
                        Ok(0) => return Err(perr(format!("closed its output before answering line {n}"))),
                        Err(e) => return Err(perr(format!("unreadable response to line {n}: {e}"))),
                        Ok(_) => {}
                    }
                    let text = line.strip_suffix('\n').unwrap_or(&line);
                    let value =
                        parse_response(text).ok_or_else(|| perr(format!("malformed response {text:?} to line {n}")))?;
                    if !(0.0..=1.0).contains(&value) {
                        return Err(ScoringError::Range { line: n, value });
                    }
                    out.push(value);
                }
                Ok(out)
            };
            let out = read_all();
            if out.is_err() {
                // Unblock the writer if it is stuck on a full pipe.
                let _ = child.kill();
            }
            let written = writer.join().expect("writer thread");
            let out = out?;
            written.map_err(|e| perr(format!("write failed: {e}")))?;
            Ok(out)
        });
        if result.is_err() {
            // A failed exchange leaves the process unusable.
            self.stdin = None;
            let _ = self.child.kill();
            let _ = self.child.wait();
        }
        result
    }

    fn shutdown(&mut self, command: &str) -> Result<(), ScoringError> {
        let perr = |message: String| ScoringError::Process {
            command: command.to_string(),
            message,
        };
        if let Some(mut stdin) = self.stdin.take() {
            stdin.flush().map_err(|e| perr(format!("write failed: {e}")))?;
        }
        let mut rest = Vec::new();
        self.stdout
            .read_to_end(&mut rest)
            .map_err(|e| perr(format!("read failed: {e}")))?;
        let status = self.child.wait().map_err(|e| perr(format!("wait failed: {e}")))?;
        if !rest.is_empty() {
            return Err(perr(format!("{} unexpected bytes after the last response", rest.len())));
        }
        if !status.success() {
            return Err(perr(format!("exited with {status}")));
        }
        Ok(())
    }
}

impl Drop for PluginProcess {
    fn drop(&mut self) {
        if self.stdin.is_some() {
            let _ = self.child.kill();
            let _ = self.child.wait();
        }
    }
}

/// Runs one plugin instance per shard. A plugin that declares itself
/// nondeterministic is run as a single instance so results match a
/// sequential run.
struct ExternalScorer {
    command: String,
    procs: Vec<PluginProcess>,
    position: u64,
}

impl ExternalScorer {
    fn spawn(argv: &[String], shards: usize) -> Result<Self, ScoringError> {
        let command = shell_words::join(argv);
        let first = PluginProcess::spawn(argv, &command)?;
        let mut procs = vec![first];
        if procs[0].deterministic {
            for _ in 1..shards.max(1) {
                let p = PluginProcess::spawn(argv, &command)?;
                if !p.deterministic {
                    return Err(ScoringError::Process {
                        command,
                        message: "instances disagree on determinism".into(),
                    });
                }
                procs.push(p);
            }
        }
        Ok(Self {
            command,
            procs,
            position: 0,
        })
    }
}

impl Scorer for ExternalScorer {
    fn score_batch(&mut self, batch: &[SentencePair], _shards: usize) -> Result<Vec<f64>, ScoringError> {
        let size = shard_len(batch.len(), self.procs.len());
        let start = self.position;
        let command = self.command.as_str();
        let results: Vec<Result<Vec<f64>, ScoringError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = batch
                .chunks(size)
                .zip(self.procs.iter_mut())
                .enumerate()
                .map(|(k, (chunk, proc))| {
                    let first = start + (k * size) as u64;
                    scope.spawn(move || proc.score(chunk, first, command))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("scorer thread")).collect()
        });
        let mut out = Vec::with_capacity(batch.len());
        for r in results {
            out.extend(r?);
        }
        self.position += batch.len() as u64;
        Ok(out)
    }

    fn finish(mut self: Box<Self>) -> Result<(), ScoringError> {
        let command = self.command.clone();
        for p in &mut self.procs {
            p.shutdown(&command)?;
        }
        Ok(())
    }
}

/// Scores a whole in-memory stream; output `i` belongs to input record `i`.
pub fn score_stream(pairs: &[SentencePair], spec: &ScorerSpec, shards: usize) -> Result<Vec<ScoredPair>, ScoringError> {
    let mut scorer = open_scorer(spec, shards)?;
    let scores = scorer.score_batch(pairs, shards)?;
    scorer.finish()?;
    Ok(pairs
        .iter()
        .zip(scores)
        .map(|(p, score)| ScoredPair {
            pair_index: p.index,
            score,
            kind: ScoreKind::Probability,
        })
        .collect())
}

/// The file a spec reads scores from, if any.
pub fn spec_input_path(spec: &ScorerSpec) -> Option<&Path> {
    match spec {
        ScorerSpec::ScoreFile(p) => Some(p),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_pair, LanguagePair};

    fn pair(s: &str, t: &str) -> SentencePair {
        validate_pair(s, t, 0, LanguagePair::new("eng", "hau").unwrap()).unwrap()
    }

    #[test]
    fn baseline_examples() {
        let p = BaselineParams::default();
        assert_eq!(baseline_score(&pair("abc", "abc"), &p), 1.0);
        // r = 2/4, f = 1 -> 0.5 * 0.5 + 0.5 * 1.0
        assert!((baseline_score(&pair("abcd", "ab"), &p) - 0.75).abs() < 1e-12);
        // r = 1, f = 0
        assert!((baseline_score(&pair("123", "456"), &p) - 0.5).abs() < 1e-12);
        // r = 0 for an empty side, f = 1
        assert!((baseline_score(&pair("", "ab"), &p) - 0.5).abs() < 1e-12);
        assert_eq!(baseline_score(&pair("", "12"), &p), 0.0);
    }

    #[test]
    fn weights_are_validated() {
        assert!(BaselineParams::new(0.3, 0.7).is_ok());
        assert!(BaselineParams::new(0.3, 0.6).is_err());
        assert!(BaselineParams::new(-0.5, 1.5).is_err());
        assert!(BaselineParams::new(1.0, 0.0).is_ok());
    }

    #[test]
    fn spec_parsing() {
        assert_eq!(
            "builtin".parse::<ScorerSpec>().unwrap(),
            ScorerSpec::Builtin(BaselineParams::default())
        );
        assert_eq!(
            "builtin:0.2,0.8".parse::<ScorerSpec>().unwrap(),
            ScorerSpec::Builtin(BaselineParams::new(0.2, 0.8).unwrap())
        );
        assert_eq!(
            "file:s.txt".parse::<ScorerSpec>().unwrap(),
            ScorerSpec::ScoreFile("s.txt".into())
        );
        assert_eq!(
            r#"cmd:python3 "my scorer.py" --x"#.parse::<ScorerSpec>().unwrap(),
            ScorerSpec::External(vec!["python3".into(), "my scorer.py".into(), "--x".into()])
        );
        assert!("cmd:".parse::<ScorerSpec>().is_err());
        assert!("laser".parse::<ScorerSpec>().is_err());
        assert!("builtin:0.9,0.9".parse::<ScorerSpec>().is_err());
    }

    #[test]
    fn response_grammar() {
        assert_eq!(parse_response("0.5"), Some(0.5));
        assert_eq!(parse_response("1"), Some(1.0));
        assert_eq!(parse_response("0.123456"), Some(0.123456));
        assert_eq!(parse_response("1.5"), Some(1.5));
        assert_eq!(parse_response("-0.5"), Some(-0.5));
        assert_eq!(parse_response("0.1234567"), None);
        assert_eq!(parse_response("1e-3"), None);
        assert_eq!(parse_response(".5"), None);
        assert_eq!(parse_response("0.5 "), None);
        assert_eq!(parse_response("nan"), None);
        assert_eq!(parse_response(""), None);
    }

    #[test]
    fn builtin_stream_is_deterministic() {
        let pairs: Vec<_> = ["a", "bb", "123"].iter().map(|s| pair(s, "xyz")).collect();
        let spec = ScorerSpec::Builtin(BaselineParams::default());
        let a = score_stream(&pairs, &spec, 1).unwrap();
        let b = score_stream(&pairs, &spec, 3).unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(a, b);
    }
}
