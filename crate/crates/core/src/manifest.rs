//! Corpus manifests: which files make up the clean and noisy bitext of each
//! language pair.
//!
//! ```json
//! { "entries": [ { "name": "MAFAND-MT", "src": "eng", "tgt": "hau",
//!                  "category": "clean", "format": "tsv",
//!                  "paths": ["mafand.tsv"], "scores": null } ] }
//! ```
//!
//! Relative paths are resolved against the manifest's directory.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::percent_one_decimal;
use crate::ingest::{read_parallel, IngestError, LineReader, Result};
use crate::model::{CorpusCategory, LanguagePair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusFormat {
    Tsv,
    TwoFile,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CorpusSource {
    Tsv(PathBuf),
    TwoFile(PathBuf, PathBuf),
}

impl CorpusSource {
    pub fn format(&self) -> CorpusFormat {
        match self {
            CorpusSource::Tsv(_) => CorpusFormat::Tsv,
            CorpusSource::TwoFile(..) => CorpusFormat::TwoFile,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub name: String,
    pub pair: LanguagePair,
    pub category: CorpusCategory,
    pub source: CorpusSource,
    pub score_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CorpusManifest {
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    entries: Vec<RawEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    name: String,
    src: String,
    tgt: String,
    category: CorpusCategory,
    format: CorpusFormat,
    paths: Vec<String>,
    #[serde(default)]
    scores: Option<String>,
}

impl CorpusManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base).map_err(|message| IngestError::Manifest {
            path: path.to_path_buf(),
            message,
        })
    }

    /// Parses manifest JSON, resolving relative paths against `base`.
    pub fn parse(json: &str, base: &Path) -> std::result::Result<Self, String> {
        let raw: RawManifest = serde_json::from_str(json).map_err(|e| e.to_string())?;
        let mut names = HashSet::new();
        let mut entries = Vec::with_capacity(raw.entries.len());
        for (i, e) in raw.entries.into_iter().enumerate() {
            if !names.insert(e.name.clone()) {
                return Err(format!("entry {i}: duplicate name {:?}", e.name));
            }
            let pair = LanguagePair::new(&e.src, &e.tgt).map_err(|err| format!("entry {i} ({}): {err}", e.name))?;
            let resolve = |p: &String| base.join(p);
            let source = match (e.format, e.paths.as_slice()) {
                (CorpusFormat::Tsv, [p]) => CorpusSource::Tsv(resolve(p)),
                (CorpusFormat::TwoFile, [s, t]) => CorpusSource::TwoFile(resolve(s), resolve(t)),
                (CorpusFormat::Tsv, ps) => {
                    return Err(format!(
                        "entry {i} ({}): tsv format takes 1 path, got {}",
                        e.name,
                        ps.len()
                    ))
                }
                (CorpusFormat::TwoFile, ps) => {
                    return Err(format!(
                        "entry {i} ({}): two-file format takes 2 paths, got {}",
                        e.name,
                        ps.len()
                    ))
                }
            };
            entries.push(ManifestEntry {
                name: e.name,
                pair,
                category: e.category,
                source,
                score_path: e.scores.as_ref().map(resolve),
            });
        }
        Ok(Self { entries })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntryStats {
    pub name: String,
    pub pair: String,
    pub category: CorpusCategory,
    pub records: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairStats {
    pub pair: String,
    pub clean: u64,
    pub noisy: u64,
    pub total: u64,
    /// Share of noisy records, one decimal; `None` for an empty pair.
    pub noisy_percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestStats {
    pub entries: Vec<EntryStats>,
    pub pairs: Vec<PairStats>,
    pub overall: PairStats,
}

fn pair_stats(pair: String, clean: u64, noisy: u64) -> PairStats {
    let total = clean + noisy;
    PairStats {
        pair,
        clean,
        noisy,
        total,
        noisy_percent: percent_one_decimal(noisy, total).map(|tenths| tenths as f64 / 10.0),
    }
}

/// Reads every corpus in the manifest (validating each record) and tallies
/// clean/noisy sizes. Score files, when declared, must match their corpus
/// line for line.
pub fn manifest_stats(manifest: &CorpusManifest) -> Result<ManifestStats> {
    let mut entries = Vec::new();
    let mut per_pair: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for e in &manifest.entries {
        let mut records = 0u64;
        for p in read_parallel(e)? {
            p?;
            records += 1;
        }
        if let Some(scores) = &e.score_path {
            let mut lines = LineReader::open(scores)?;
            let mut found = 0;
            while lines.next_line()?.is_some() {
                found += 1;
            }
            if found != records {
                return Err(IngestError::ScoreCountMismatch {
                    path: scores.clone(),
                    expected: records,
                    found,
                });
            }
        }
        let slot = per_pair.entry(e.pair.to_string()).or_default();
        match e.category {
            CorpusCategory::Clean => slot.0 += records,
            CorpusCategory::Noisy => slot.1 += records,
        }
        entries.push(EntryStats {
            name: e.name.clone(),
            pair: e.pair.to_string(),
            category: e.category,
            records,
        });
    }
    let (clean, noisy) = per_pair.values().fold((0, 0), |(c, n), (pc, pn)| (c + pc, n + pn));
    Ok(ManifestStats {
        entries,
        pairs: per_pair
            .into_iter()
            .map(|(pair, (c, n))| pair_stats(pair, c, n))
            .collect(),
        overall: pair_stats("all".to_string(), clean, noisy),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{ "entries": [
        { "name": "MAFAND-MT", "src": "eng", "tgt": "hau", "category": "clean",
          "format": "tsv", "paths": ["mafand.tsv"], "scores": null },
        { "name": "web_mined", "src": "eng", "tgt": "hau", "category": "noisy",
          "format": "two-file", "paths": ["wmt.eng", "wmt.hau"], "scores": "wmt.scores" }
    ] }"#;

    #[test]
    fn parses_and_resolves_paths() {
        let m = CorpusManifest::parse(SAMPLE, Path::new("/data")).unwrap();
        assert_eq!(m.entries.len(), 2);
        assert_eq!(m.entries[0].source, CorpusSource::Tsv("/data/mafand.tsv".into()));
        assert_eq!(m.entries[1].source.format(), CorpusFormat::TwoFile);
        assert_eq!(m.entries[1].category, CorpusCategory::Noisy);
        assert_eq!(m.entries[1].score_path.as_deref(), Some(Path::new("/data/wmt.scores")));
    }

    #[test]
    fn rejects_bad_entries() {
        let dup = SAMPLE.replace("web_mined", "MAFAND-MT");
        assert!(CorpusManifest::parse(&dup, Path::new(""))
            .unwrap_err()
            .contains("duplicate"));
        let bad_paths = SAMPLE.replace(r#"["mafand.tsv"]"#, r#"["a", "b"]"#);
        assert!(CorpusManifest::parse(&bad_paths, Path::new("")).is_err());
        let bad_cat = SAMPLE.replace(r#""clean""#, r#""gold""#);
        assert!(CorpusManifest::parse(&bad_cat, Path::new("")).is_err());
        let bad_lang = SAMPLE.replace(r#""hau", "category": "clean""#, r#""eng", "category": "clean""#);
        assert!(CorpusManifest::parse(&bad_lang, Path::new("")).is_err());
    }

    #[test]
    fn stats_split_clean_and_noisy() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("mafand.tsv"), "a\tb\n").unwrap();
        std::fs::write(dir.path().join("wmt.eng"), "1\n2\n3\n").unwrap();
        std::fs::write(dir.path().join("wmt.hau"), "x\ny\nz\n").unwrap();
        std::fs::write(dir.path().join("wmt.scores"), "0.1\n0.2\n0.3\n").unwrap();
        let mpath = dir.path().join("m.json");
        std::fs::write(&mpath, SAMPLE).unwrap();
        let m = CorpusManifest::load(&mpath).unwrap();
        let stats = manifest_stats(&m).unwrap();
        assert_eq!(stats.pairs.len(), 1);
        assert_eq!(stats.pairs[0].clean, 1);
        assert_eq!(stats.pairs[0].noisy, 3);
        assert_eq!(stats.pairs[0].noisy_percent, Some(75.0));

        std::fs::write(dir.path().join("wmt.scores"), "0.1\n").unwrap();
        assert!(matches!(
            manifest_stats(&m),
            Err(IngestError::ScoreCountMismatch {
                expected: 3,
                found: 1,
                ..
            })
        ));
    }
}
