//! `bitext-forge` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error (with
//! `file:line` diagnostics, lines 0-based), 3 external scorer protocol error.
//! Every output file is written to a temporary sibling and renamed into place.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::analysis::{confusion, overlap, retention, AnalysisError, RetentionReport};
use crate::heuristic::HeuristicRuleSet;
use crate::ingest::{read_indices, AtomicWriter, IngestError, LabeledTsvReader, ParallelReader, ScoreReader};
use crate::manifest::{manifest_stats, CorpusManifest, ManifestStats};
use crate::mining::{build_classifier_dataset_from_files, MiningError, MiningOptions, NegativeAssignment, PerSplit};
use crate::model::{FilterPolicy, LanguagePair, ScoreKind, Split};
use crate::pipeline::{run_heuristic, run_scoring, run_threshold, PipelineError, ThresholdOutputs};
use crate::scoring::{spec_input_path, ScorerSpec, ScoringError};
use crate::synth::{write_synthetic, SynthConfig};

pub const THREADS_ENV: &str = "BITEXT_FORGE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "bitext-forge", version, about = "Filter noisy web-mined parallel corpora")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Language pair of the input, e.g. eng-hau
    #[arg(long, default_value = "xx-yy", value_parser = parse_pair)]
    pair: LanguagePair,
    /// Print the machine-readable report as JSON
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Clean/noisy record counts for every corpus in a manifest
    Stats {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Drop pairs where either side is only numbers and/or punctuation
    HeuristicFilter {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Sidecar for removed pairs: source, target, reason
        #[arg(long)]
        removed: Option<PathBuf>,
        /// Unicode general-category classes treated as junk (subset of NPSMC)
        #[arg(long, default_value = "NP", value_parser = parse_rules)]
        junk_categories: HeuristicRuleSet,
        /// Keep sides that are empty after stripping whitespace
        #[arg(long)]
        keep_empty: bool,
        #[arg(long)]
        shards: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Build balanced classifier data: clean positives, lowest-scored noisy negatives
    BuildClsData {
        #[arg(long)]
        clean_train: PathBuf,
        #[arg(long)]
        clean_dev: PathBuf,
        #[arg(long)]
        clean_test: PathBuf,
        #[arg(long)]
        noisy: PathBuf,
        /// Alignment scores for the noisy corpus, one per line
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        no_dedup: bool,
        #[arg(long, value_enum, default_value_t = Assignment::Contiguous)]
        assignment: Assignment,
        #[command(flatten)]
        common: Common,
    },
    /// Attach a quality probability to every pair
    Score {
        #[arg(long = "in")]
        input: PathBuf,
        /// builtin[:W1,W2] | file:PATH | cmd:"ARGV"
        #[arg(long, value_parser = parse_scorer)]
        scorer: ScorerSpec,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        shards: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Keep pairs whose score is at least the threshold (inclusive)
    Filter {
        #[arg(long = "in")]
        input: PathBuf,
        /// Keep iff score >= threshold; must lie in [0, 1]
        #[arg(long, value_parser = parse_threshold)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        removed: Option<PathBuf>,
        /// Also write the kept record indices, one per line (input for `overlap`)
        #[arg(long)]
        kept_indices: Option<PathBuf>,
        #[arg(long)]
        shards: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Intersections between kept sets of several filters
    Overlap {
        #[arg(long = "name", required = true)]
        names: Vec<String>,
        /// Kept record indices, one per line, as written by `filter --kept-indices`
        #[arg(long = "kept", required = true)]
        kept: Vec<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Precision, recall and F1 of scores against labeled pairs
    EvalCls {
        /// Labeled TSV: source, target, 1|0
        #[arg(long)]
        labeled: PathBuf,
        /// Probabilities, one per line, aligned with the labeled file
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, value_parser = parse_threshold)]
        threshold: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Generate a seeded synthetic corpus (and alignment scores)
    Synth {
        #[arg(long)]
        pairs: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long, default_value_t = 0.02)]
        junk_rate: f64,
        #[arg(long, default_value_t = 0.01)]
        duplicate_rate: f64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Assignment {
    Contiguous,
    RoundRobin,
}

fn parse_pair(s: &str) -> Result<LanguagePair, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_rules(s: &str) -> Result<HeuristicRuleSet, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_scorer(s: &str) -> Result<ScorerSpec, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_threshold(s: &str) -> Result<f64, String> {
    let t: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    FilterPolicy::new(t).map(|p| p.threshold()).map_err(|e| e.to_string())
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
    Protocol(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Protocol(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Protocol(m) => m,
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ScoringError> for CliError {
    fn from(e: ScoringError) -> Self {
        match e {
            ScoringError::BadSpec(_) | ScoringError::BadWeights(..) => CliError::Usage(e.to_string()),
            e if e.is_protocol() => CliError::Protocol(e.to_string()),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Ingest(e) => e.into(),
            PipelineError::Scoring(e) => e.into(),
        }
    }
}

impl From<MiningError> for CliError {
    fn from(e: MiningError) -> Self {
        match e {
            MiningError::Ingest(e) => e.into(),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::DuplicateSetName(_) | AnalysisError::SetCount(_) => CliError::Usage(e.to_string()),
            e => CliError::Data(e.to_string()),
        }
    }
}

/// Absolute form of a path that may not exist yet.
fn normalize(path: &Path) -> PathBuf {
    if let Ok(p) = fs::canonicalize(path) {
        return p;
    }
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let parent = fs::canonicalize(parent).unwrap_or_else(|_| parent.to_path_buf());
    match path.file_name() {
        Some(name) => parent.join(name),
        None => parent,
    }
}

fn check_paths(inputs: &[&Path], outputs: &[&Path]) -> Result<(), CliError> {
    let ins: Vec<PathBuf> = inputs.iter().map(|p| normalize(p)).collect();
    let mut outs: Vec<PathBuf> = Vec::new();
    for o in outputs {
        let n = normalize(o);
        if ins.contains(&n) {
            return Err(CliError::Usage(format!("output {} is also an input", o.display())));
        }
        if outs.contains(&n) {
            return Err(CliError::Usage(format!("output {} given twice", o.display())));
        }
        outs.push(n);
    }
    Ok(())
}

fn configure_threads() -> Result<(), CliError> {
    let Some(raw) = std::env::var_os(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .to_str()
        .and_then(|s| s.trim().parse().ok())
        .filter(|&n| n >= 1)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer")))?;
    // The global pool can only be configured once per process.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn shard_count(shards: Option<usize>) -> Result<usize, CliError> {
    match shards {
        Some(0) => Err(CliError::Usage("--shards must be at least 1".into())),
        Some(n) => Ok(n),
        None => Ok(rayon::current_num_threads()),
    }
}

fn emit_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    writeln!(out, "{text}").map_err(|e| CliError::Data(e.to_string()))
}

fn emit_text(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Data(e.to_string()))
}

fn render_stats(stats: &ManifestStats) -> String {
    let mut s = String::new();
    for e in &stats.entries {
        s.push_str(&format!("{}\t{}\t{}\t{}\n", e.name, e.pair, e.category, e.records));
    }
    s.push('\n');
    for p in stats.pairs.iter().chain(std::iter::once(&stats.overall)) {
        let pct = p.noisy_percent.map_or("n/a".to_string(), |v| format!("{v:.1}"));
        s.push_str(&format!(
            "{}\tclean {}\tnoisy {}\ttotal {}\tnoisy% {}\n",
            p.pair, p.clean, p.noisy, p.total, pct
        ));
    }
    s
}

#[derive(Serialize)]
struct ScoreSummary {
    records: u64,
    scorer: String,
}

fn read_pairs(path: &Path, pair: LanguagePair) -> Result<Vec<crate::model::SentencePair>, CliError> {
    Ok(ParallelReader::tsv(path, pair)?.collect::<Result<Vec<_>, _>>()?)
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Stats { manifest, json } => {
            let m = CorpusManifest::load(&manifest)?;
            let stats = manifest_stats(&m)?;
            if json {
                emit_json(out, &stats)
            } else {
                emit_text(out, &render_stats(&stats))
            }
        }
        Command::HeuristicFilter {
            input,
            out: kept_path,
            removed,
            junk_categories,
            keep_empty,
            shards,
            common,
        } => {
            let shards = shard_count(shards)?;
            let mut outputs = vec![kept_path.as_path()];
            outputs.extend(removed.as_deref());
            check_paths(&[&input], &outputs)?;
            let mut rules = junk_categories;
            rules.treat_empty_as_junk = !keep_empty;
            let mut kept = AtomicWriter::create(&kept_path)?;
            let mut removed_w = removed.as_deref().map(AtomicWriter::create).transpose()?;
            let counts = run_heuristic(&input, common.pair, &rules, shards, &mut kept, removed_w.as_mut())?;
            if let Some(w) = removed_w {
                w.commit()?;
            }
            kept.commit()?;
            let report = RetentionReport {
                rows: vec![retention(&common.pair.to_string(), counts.total, counts.kept)?],
            };
            if common.json {
                emit_json(out, &report.rows[0])
            } else {
                emit_text(out, &report.render())
            }
        }
        Command::BuildClsData {
            clean_train,
            clean_dev,
            clean_test,
            noisy,
            scores,
            out_dir,
            no_dedup,
            assignment,
            common,
        } => {
            fs::create_dir_all(&out_dir).map_err(|e| CliError::Data(format!("{}: {e}", out_dir.display())))?;
            let targets: Vec<PathBuf> = Split::ALL
                .iter()
                .map(|s| out_dir.join(s.file_name()))
                .chain(std::iter::once(out_dir.join("mining_report.json")))
                .collect();
            let target_refs: Vec<&Path> = targets.iter().map(PathBuf::as_path).collect();
            check_paths(&[&clean_train, &clean_dev, &clean_test, &noisy, &scores], &target_refs)?;
            let positives = PerSplit::new(
                read_pairs(&clean_train, common.pair)?,
                read_pairs(&clean_dev, common.pair)?,
                read_pairs(&clean_test, common.pair)?,
            );
            let options = MiningOptions {
                dedup: !no_dedup,
                assignment: match assignment {
                    Assignment::Contiguous => NegativeAssignment::Contiguous,
                    Assignment::RoundRobin => NegativeAssignment::RoundRobin,
                },
            };
            let (dataset, report) =
                build_classifier_dataset_from_files(positives, &noisy, &scores, common.pair, &options)?;
            let mut writers = Vec::new();
            for (split, rows) in dataset.iter() {
                let mut w = AtomicWriter::create(&out_dir.join(split.file_name()))?;
                for r in rows {
                    w.write_labeled(&r.pair, r.label)?;
                }
                writers.push(w);
            }
            let mut rw = AtomicWriter::create(&out_dir.join("mining_report.json"))?;
            let body = serde_json::to_string_pretty(&report).map_err(|e| CliError::Data(e.to_string()))?;
            rw.write_raw(body.as_bytes())?;
            rw.write_raw(b"\n")?;
            for w in writers {
                w.commit()?;
            }
            rw.commit()?;
            if common.json {
                emit_json(out, &report)
            } else {
                let mut s = String::new();
                for (split, n) in report.positives.iter() {
                    s.push_str(&format!(
                        "{split}\tpositives {n}\tnegatives {}\n",
                        report.negatives[split]
                    ));
                }
                s.push_str(&format!("duplicates dropped\t{}\n", report.duplicates_dropped));
                if let Some(c) = report.score_cutoff {
                    s.push_str(&format!("score cutoff\t{c}\n"));
                }
                emit_text(out, &s)
            }
        }
        Command::Score {
            input,
            scorer,
            out: out_path,
            shards,
            common,
        } => {
            let shards = shard_count(shards)?;
            let mut inputs = vec![input.as_path()];
            inputs.extend(spec_input_path(&scorer));
            check_paths(&inputs, &[&out_path])?;
            let mut w = AtomicWriter::create(&out_path)?;
            let records = run_scoring(&input, common.pair, &scorer, shards, &mut w)?;
            w.commit()?;
            let summary = ScoreSummary {
                records,
                scorer: scorer.to_string(),
            };
            if common.json {
                emit_json(out, &summary)
            } else {
                emit_text(out, &format!("scored {records} pairs with {}\n", summary.scorer))
            }
        }
        Command::Filter {
            input,
            threshold,
            out: kept_path,
            removed,
            kept_indices,
            shards,
            common,
        } => {
            let shards = shard_count(shards)?;
            let policy = FilterPolicy::new(threshold).map_err(|e| CliError::Usage(e.to_string()))?;
            let mut outputs = vec![kept_path.as_path()];
            outputs.extend(removed.as_deref());
            outputs.extend(kept_indices.as_deref());
            check_paths(&[&input], &outputs)?;
            let mut kept = AtomicWriter::create(&kept_path)?;
            let mut removed_w = removed.as_deref().map(AtomicWriter::create).transpose()?;
            let mut index_w = kept_indices.as_deref().map(AtomicWriter::create).transpose()?;
            let counts = run_threshold(
                &input,
                common.pair,
                &policy,
                shards,
                ThresholdOutputs {
                    kept: &mut kept,
                    removed: removed_w.as_mut(),
                    kept_indices: index_w.as_mut(),
                },
            )?;
            for w in [removed_w, index_w].into_iter().flatten() {
                w.commit()?;
            }
            kept.commit()?;
            let report = RetentionReport {
                rows: vec![retention(&common.pair.to_string(), counts.total, counts.kept)?],
            };
            if common.json {
                emit_json(out, &report.rows[0])
            } else {
                emit_text(out, &report.render())
            }
        }
        Command::Overlap { names, kept, json } => {
            if names.len() != kept.len() {
                return Err(CliError::Usage(format!(
                    "{} --name values but {} --kept files",
                    names.len(),
                    kept.len()
                )));
            }
            let mut sets = Vec::with_capacity(names.len());
            for (name, path) in names.into_iter().zip(&kept) {
                sets.push((name, read_indices(path)?));
            }
            let report = overlap(&sets)?;
            if json {
                emit_json(out, &report)
            } else {
                emit_text(out, &report.render())
            }
        }
        Command::EvalCls {
            labeled,
            scores,
            threshold,
            common,
        } => {
            let policy = FilterPolicy::new(threshold).map_err(|e| CliError::Usage(e.to_string()))?;
            let labels: Vec<_> = LabeledTsvReader::open(&labeled, common.pair)?
                .map(|r| r.map(|(_, l)| l))
                .collect::<Result<_, _>>()?;
            let probs: Vec<f64> = ScoreReader::open(&scores, ScoreKind::Probability)?
                .map(|r| r.map(|s| s.score))
                .collect::<Result<_, _>>()?;
            let report = confusion(&labels, &probs, &policy)?;
            if common.json {
                emit_json(out, &report)
            } else {
                emit_text(out, &report.render())
            }
        }
        Command::Synth {
            pairs,
            seed,
            out: out_path,
            scores,
            junk_rate,
            duplicate_rate,
        } => {
            for (name, rate) in [("junk-rate", junk_rate), ("duplicate-rate", duplicate_rate)] {
                if !(0.0..=1.0).contains(&rate) {
                    return Err(CliError::Usage(format!("--{name} must be within [0, 1]")));
                }
            }
            let mut outputs = vec![out_path.as_path()];
            outputs.extend(scores.as_deref());
            check_paths(&[], &outputs)?;
            let config = SynthConfig {
                pairs,
                seed,
                junk_rate,
                duplicate_rate,
            };
            let n = write_synthetic(config, &out_path, scores.as_deref())?;
            emit_text(out, &format!("wrote {n} synthetic pairs\n"))
        }
    }
}

/// Runs one command, writing reports to `out` and diagnostics to `err`.
/// Returns the process exit code.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => {
                    let _ = write!(err, "{e}");
                    1
                }
            };
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.code()
        }
    }
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}
