//! Threshold filtering and the three report shapes: retention, filter
//! overlap, and binary classification metrics.
//!
//! Percentages are rounded half-to-even at one decimal. Where both operands
//! are counts, the rounding is done in exact integer arithmetic.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::model::{FilterPolicy, Label, LabeledPair};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("{labels} labels but {scores} scores")]
    LengthMismatch { labels: usize, scores: usize },
    #[error("set name {0:?} given twice")]
    DuplicateSetName(String),
    #[error("overlap needs 2 to 8 sets, got {0}")]
    SetCount(usize),
    #[error("kept count {kept} exceeds total {total}")]
    KeptExceedsTotal { total: u64, kept: u64 },
}

/// `100 * part / whole` in tenths of a percent, rounded half to even.
/// `None` when `whole` is zero.
pub fn percent_one_decimal(part: u64, whole: u64) -> Option<u64> {
    if whole == 0 {
        return None;
    }
    let num = 1000u128 * part as u128;
    let whole = whole as u128;
    let (q, r) = (num / whole, num % whole);
    let q = match (2 * r).cmp(&whole) {
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => q + (q & 1),
        std::cmp::Ordering::Less => q,
    };
    Some(q as u64)
}

pub fn render_tenths(tenths: u64) -> String {
    format!("{}.{}", tenths / 10, tenths % 10)
}

/// Renders a fraction in `[0, 1]` as a one-decimal percentage, e.g.
/// `0.9690 -> "96.9"`.
pub fn render_percent(fraction: f64) -> String {
    format!("{:.1}", fraction * 100.0)
}

fn group_thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

/// Kept and removed items with their scores.
pub type Partition<T> = (Vec<(T, f64)>, Vec<(T, f64)>);

/// Keeps items scoring at least the threshold; both outputs keep input order.
pub fn apply_threshold<T, I>(scored: I, policy: &FilterPolicy) -> Partition<T>
where
    I: IntoIterator<Item = (T, f64)>,
{
    scored.into_iter().partition(|(_, s)| policy.keeps(*s))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RetentionRow {
    pub pair: String,
    pub before: u64,
    pub kept: u64,
    /// Tenths of a percent; rendered as `99.9`, or `"n/a"` for an empty total.
    #[serde(serialize_with = "serialize_percent")]
    pub percent: Option<u64>,
}

fn serialize_percent<S: Serializer>(tenths: &Option<u64>, s: S) -> Result<S::Ok, S::Error> {
    match tenths {
        Some(t) => s.serialize_f64(*t as f64 / 10.0),
        None => s.serialize_str("n/a"),
    }
}

impl RetentionRow {
    pub fn percent_text(&self) -> String {
        self.percent.map_or_else(|| "n/a".to_string(), render_tenths)
    }
}

pub fn retention(pair: &str, total_before: u64, kept: u64) -> Result<RetentionRow, AnalysisError> {
    if kept > total_before {
        return Err(AnalysisError::KeptExceedsTotal {
            total: total_before,
            kept,
        });
    }
    Ok(RetentionRow {
        pair: pair.to_string(),
        before: total_before,
        kept,
        percent: percent_one_decimal(kept, total_before),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct RetentionReport {
    pub rows: Vec<RetentionRow>,
}

impl RetentionReport {
    pub fn render(&self) -> String {
        let mut rows = vec![[
            "pair".to_string(),
            "before".to_string(),
            "kept".to_string(),
            "% of original".to_string(),
        ]];
        for r in &self.rows {
            rows.push([
                r.pair.clone(),
                group_thousands(r.before),
                group_thousands(r.kept),
                r.percent_text(),
            ]);
        }
        render_table(&rows, &[false, true, true, true])
    }
}

fn render_table<const N: usize>(rows: &[[String; N]], right_align: &[bool; N]) -> String {
    let mut widths = [0usize; N];
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (i, cell) in row.iter().enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            let pad = widths[i] - cell.chars().count();
            if right_align[i] {
                line.extend(std::iter::repeat_n(' ', pad));
                line.push_str(cell);
            } else {
                line.push_str(cell);
                line.extend(std::iter::repeat_n(' ', pad));
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PairwiseOverlap {
    pub a: String,
    pub b: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OverlapReport {
    pub scorers: Vec<String>,
    /// Distinct kept records per scorer (the diagonal).
    pub kept: Vec<u64>,
    /// Every unordered pair `a < b` in input order.
    pub pairwise: Vec<PairwiseOverlap>,
    /// Records kept by every scorer.
    pub all: u64,
}

fn intersect_sorted(a: &[u64], b: &[u64]) -> Vec<u64> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

/// Intersection sizes between kept-record sets identified by record index.
pub fn overlap(kept_sets: &[(String, Vec<u64>)]) -> Result<OverlapReport, AnalysisError> {
    if !(2..=8).contains(&kept_sets.len()) {
        return Err(AnalysisError::SetCount(kept_sets.len()));
    }
    let mut names = HashSet::new();
    for (name, _) in kept_sets {
        if !names.insert(name.as_str()) {
            return Err(AnalysisError::DuplicateSetName(name.clone()));
        }
    }
    let sets: Vec<Vec<u64>> = kept_sets
        .iter()
        .map(|(_, v)| {
            let mut v = v.clone();
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect();
    let mut pairwise = Vec::new();
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            pairwise.push(PairwiseOverlap {
                a: kept_sets[i].0.clone(),
                b: kept_sets[j].0.clone(),
                count: intersect_sorted(&sets[i], &sets[j]).len() as u64,
            });
        }
    }
    let all = sets[1..]
        .iter()
        .fold(sets[0].clone(), |acc, s| intersect_sorted(&acc, s));
    Ok(OverlapReport {
        scorers: kept_sets.iter().map(|(n, _)| n.clone()).collect(),
        kept: sets.iter().map(|s| s.len() as u64).collect(),
        pairwise,
        all: all.len() as u64,
    })
}

impl OverlapReport {
    pub fn count(&self, a: &str, b: &str) -> Option<u64> {
        if a == b {
            let i = self.scorers.iter().position(|n| n == a)?;
            return Some(self.kept[i]);
        }
        self.pairwise
            .iter()
            .find(|p| (p.a == a && p.b == b) || (p.a == b && p.b == a))
            .map(|p| p.count)
    }

    /// Upper-triangular matrix with kept counts on the diagonal.
    pub fn render(&self) -> String {
        let n = self.scorers.len();
        let mut rows: Vec<Vec<String>> = Vec::new();
        let mut header = vec![String::new()];
        header.extend(self.scorers.iter().cloned());
        rows.push(header);
        for (i, a) in self.scorers.iter().enumerate() {
            let mut row = vec![a.clone()];
            for (j, b) in self.scorers.iter().enumerate() {
                row.push(if j < i {
                    "-".to_string()
                } else {
                    group_thousands(self.count(a, b).unwrap_or(0))
                });
            }
            rows.push(row);
        }
        let mut last = vec!["sents. in ALL".to_string()];
        last.extend(std::iter::repeat_n(String::new(), n - 1));
        last.push(group_thousands(self.all));
        rows.push(last);

        let widths: Vec<usize> = (0..=n)
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for r in &rows {
            let mut line = format!("{:<w$}", r[0], w = widths[0]);
            for c in 1..=n {
                let _ = write!(line, "  {:>w$}", r[c], w = widths[c]);
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub threshold: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ClassificationReport {
    pub fn from_counts(threshold: f64, tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        // Harmonic mean of precision and recall, in count form.
        let f1 = ratio(2 * tp, 2 * tp + fp + fn_);
        Self {
            threshold,
            tp,
            fp,
            fn_,
            tn,
            precision,
            recall,
            f1,
        }
    }

    /// F1 as a one-decimal percentage. Uses the count identity
    /// `F1 = 2tp / (2tp + fp + fn)` so rounding is exact.
    pub fn f1_percent(&self) -> String {
        let tenths = percent_one_decimal(2 * self.tp, 2 * self.tp + self.fp + self.fn_).unwrap_or(0);
        render_tenths(tenths)
    }

    pub fn render(&self) -> String {
        let rows = [
            ["threshold".to_string(), self.threshold.to_string()],
            ["tp".to_string(), self.tp.to_string()],
            ["fp".to_string(), self.fp.to_string()],
            ["fn".to_string(), self.fn_.to_string()],
            ["tn".to_string(), self.tn.to_string()],
            ["precision".to_string(), self.precision.to_string()],
            ["recall".to_string(), self.recall.to_string()],
            ["F1".to_string(), format!("{} ({})", self.f1, self.f1_percent())],
        ];
        render_table(&rows, &[false, false])
    }
}

/// Confusion counts with `prediction = score >= threshold`.
pub fn confusion(
    labels: &[Label],
    scores: &[f64],
    policy: &FilterPolicy,
) -> Result<ClassificationReport, AnalysisError> {
    if labels.len() != scores.len() {
        return Err(AnalysisError::LengthMismatch {
            labels: labels.len(),
            scores: scores.len(),
        });
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (label, &score) in labels.iter().zip(scores) {
        match (*label == Label::Positive, policy.keeps(score)) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(ClassificationReport::from_counts(policy.threshold(), tp, fp, fn_, tn))
}

pub fn classification_metrics(
    labeled: &[LabeledPair],
    scores: &[f64],
    policy: &FilterPolicy,
) -> Result<ClassificationReport, AnalysisError> {
    let labels: Vec<Label> = labeled.iter().map(|l| l.label).collect();
    confusion(&labels, scores, policy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retention_rows_render_one_decimal() {
        assert_eq!(
            retention("eng-hau", 9_133_859, 9_122_559).unwrap().percent_text(),
            "99.9"
        );
        assert_eq!(
            retention("eng-zul", 4_243_962, 4_142_146).unwrap().percent_text(),
            "97.6"
        );
        assert_eq!(retention("fra-wol", 237_348, 237_348).unwrap().percent_text(), "100.0");
        assert_eq!(retention("x", 0, 0).unwrap().percent_text(), "n/a");
        assert!(retention("x", 1, 2).is_err());
    }

    #[test]
    fn noisy_share_of_all_training_data() {
        // Automatically aligned vs all records across the eight pairs.
        assert_eq!(percent_one_decimal(58_051_506, 58_503_351), Some(992));
    }

    #[test]
    fn half_even_rounding() {
        assert_eq!(percent_one_decimal(1, 8), Some(125)); // 12.5 exactly
        assert_eq!(percent_one_decimal(1, 16), Some(62)); // 6.25 -> 6.2
        assert_eq!(percent_one_decimal(3, 16), Some(188)); // 18.75 -> 18.8
        assert_eq!(percent_one_decimal(1, 3), Some(333));
        assert_eq!(render_percent(0.9690), "96.9");
    }

    #[test]
    fn retention_json() {
        let r = RetentionReport {
            rows: vec![
                retention("eng-hau", 10, 9).unwrap(),
                retention("eng-ibo", 0, 0).unwrap(),
            ],
        };
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"[{"pair":"eng-hau","before":10,"kept":9,"percent":90.0},{"pair":"eng-ibo","before":0,"kept":0,"percent":"n/a"}]"#
        );
        assert!(r.render().contains("90.0"));
    }

    #[test]
    fn threshold_is_inclusive() {
        let policy = FilterPolicy::new(0.7).unwrap();
        let (kept, removed) = apply_threshold(vec![(0, 0.71), (1, 0.70), (2, 0.69)], &policy);
        assert_eq!(kept.iter().map(|k| k.0).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(removed.len(), 1);
        let (kept, _) = apply_threshold(vec![(0, 0.0), (1, 0.3)], &FilterPolicy::new(0.0).unwrap());
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn three_way_overlap() {
        let sets = vec![
            ("A".to_string(), vec![1, 2, 3]),
            ("B".to_string(), vec![2, 3, 4]),
            ("C".to_string(), vec![3, 4, 5]),
        ];
        let r = overlap(&sets).unwrap();
        assert_eq!(r.count("A", "B"), Some(2));
        assert_eq!(r.count("A", "C"), Some(1));
        assert_eq!(r.count("B", "C"), Some(2));
        assert_eq!(r.count("C", "C"), Some(3));
        assert_eq!(r.all, 1);
        let text = r.render();
        assert!(text.contains("sents. in ALL"));
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["all"], 1);
        assert_eq!(json["kept"], serde_json::json!([3, 3, 3]));
    }

    #[test]
    fn identical_and_disjoint_sets() {
        let same = vec![("A".to_string(), vec![1, 2]), ("B".to_string(), vec![2, 1])];
        let r = overlap(&same).unwrap();
        assert_eq!((r.kept.clone(), r.pairwise[0].count, r.all), (vec![2, 2], 2, 2));
        let disjoint = vec![("A".to_string(), vec![1]), ("B".to_string(), vec![2])];
        let r = overlap(&disjoint).unwrap();
        assert_eq!((r.pairwise[0].count, r.all), (0, 0));
    }

    #[test]
    fn overlap_errors() {
        let dup = vec![("A".to_string(), vec![1]), ("A".to_string(), vec![2])];
        assert_eq!(overlap(&dup), Err(AnalysisError::DuplicateSetName("A".into())));
        assert_eq!(overlap(&dup[..1]), Err(AnalysisError::SetCount(1)));
    }

    #[test]
    fn confusion_fixture() {
        let r = ClassificationReport::from_counts(0.5, 4, 1, 1, 4);
        assert!((r.precision - 0.8).abs() < 1e-9);
        assert!((r.recall - 0.8).abs() < 1e-9);
        assert!((r.f1 - 0.8).abs() < 1e-9);
        assert_eq!(r.f1_percent(), "80.0");
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["fn"], 1);
    }

    #[test]
    fn zero_denominators() {
        let r = ClassificationReport::from_counts(0.5, 0, 0, 0, 7);
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
        assert_eq!(r.f1_percent(), "0.0");
        let r = ClassificationReport::from_counts(0.5, 0, 3, 2, 0);
        assert_eq!(r.f1, 0.0);
    }

    #[test]
    fn confusion_counts_predictions() {
        use Label::*;
        let labels = [Positive, Positive, Negative, Negative];
        let r = confusion(&labels, &[0.9, 0.4, 0.5, 0.1], &FilterPolicy::new(0.5).unwrap()).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_, r.tn), (1, 1, 1, 1));
        assert!(matches!(
            confusion(&labels, &[0.1], &FilterPolicy::new(0.5).unwrap()),
            Err(AnalysisError::LengthMismatch { labels: 4, scores: 1 })
        ));
    }
}
