//! Rule-based cleanup: drop pairs where a side consists only of numbers
//! and/or punctuation.
//!
//! A side is judged after discarding whitespace (Unicode `White_Space`) and
//! control characters (`Cc`). What remains is junk when every character's
//! general category falls in the configured major classes (`N` and `P` by
//! default), or when nothing remains and empty sides count as junk. The whole
//! pair is removed if either side is junk.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;
use unicode_general_category::{get_general_category, GeneralCategory};

use crate::model::SentencePair;

/// Major Unicode general-category classes that may be declared junk.
/// Letters (`L`) can never be junk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JunkClass {
    Number,
    Punctuation,
    Symbol,
    Mark,
    Other,
}

impl JunkClass {
    fn bit(self) -> u8 {
        match self {
            JunkClass::Number => 1,
            JunkClass::Punctuation => 1 << 1,
            JunkClass::Symbol => 1 << 2,
            JunkClass::Mark => 1 << 3,
            JunkClass::Other => 1 << 4,
        }
    }

    fn letter(self) -> char {
        match self {
            JunkClass::Number => 'N',
            JunkClass::Punctuation => 'P',
            JunkClass::Symbol => 'S',
            JunkClass::Mark => 'M',
            JunkClass::Other => 'C',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error("letters (L) can never be junk")]
    LettersNotAllowed,
    #[error("unknown category class {0:?}; expected some of N, P, S, M, C")]
    UnknownClass(char),
}

/// Major class of a character, or `None` for letters and separators.
fn junk_class_of(c: char) -> Option<JunkClass> {
    use GeneralCategory::*;
    match get_general_category(c) {
        DecimalNumber | LetterNumber | OtherNumber => Some(JunkClass::Number),
        ConnectorPunctuation | DashPunctuation | OpenPunctuation | ClosePunctuation | InitialPunctuation
        | FinalPunctuation | OtherPunctuation => Some(JunkClass::Punctuation),
        MathSymbol | CurrencySymbol | ModifierSymbol | OtherSymbol => Some(JunkClass::Symbol),
        NonspacingMark | SpacingMark | EnclosingMark => Some(JunkClass::Mark),
        UppercaseLetter | LowercaseLetter | TitlecaseLetter | ModifierLetter | OtherLetter => None,
        SpaceSeparator | LineSeparator | ParagraphSeparator => None,
        // Cc, Cf, Cs, Co, Cn
        _ => Some(JunkClass::Other),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeuristicRuleSet {
    junk: u8,
    pub treat_empty_as_junk: bool,
}

impl Default for HeuristicRuleSet {
    fn default() -> Self {
        Self::new(&[JunkClass::Number, JunkClass::Punctuation], true)
    }
}

impl HeuristicRuleSet {
    pub fn new(classes: &[JunkClass], treat_empty_as_junk: bool) -> Self {
        Self {
            junk: classes.iter().fold(0, |acc, c| acc | c.bit()),
            treat_empty_as_junk,
        }
    }

    pub fn contains(&self, class: JunkClass) -> bool {
        self.junk & class.bit() != 0
    }

    /// Whether every junk class of `other` is also junk here.
    pub fn includes(&self, other: &HeuristicRuleSet) -> bool {
        self.junk & other.junk == other.junk
    }
}

impl FromStr for HeuristicRuleSet {
    type Err = RuleError;

    /// Parses a class string such as `NP` or `NPS`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut classes = Vec::new();
        for c in s.chars() {
            classes.push(match c.to_ascii_uppercase() {
                'N' => JunkClass::Number,
                'P' => JunkClass::Punctuation,
                'S' => JunkClass::Symbol,
                'M' => JunkClass::Mark,
                'C' => JunkClass::Other,
                'L' => return Err(RuleError::LettersNotAllowed),
                _ => return Err(RuleError::UnknownClass(c)),
            });
        }
        Ok(Self::new(&classes, true))
    }
}

impl fmt::Display for HeuristicRuleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for class in [
            JunkClass::Number,
            JunkClass::Punctuation,
            JunkClass::Symbol,
            JunkClass::Mark,
            JunkClass::Other,
        ] {
            if self.contains(class) {
                write!(f, "{}", class.letter())?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SideVerdict {
    Fine,
    Junk,
    Empty,
}

fn judge(text: &str, rules: &HeuristicRuleSet) -> SideVerdict {
    let mut seen = false;
    for c in text.chars().filter(|c| !c.is_whitespace() && !c.is_control()) {
        seen = true;
        match junk_class_of(c) {
            Some(class) if rules.contains(class) => {}
            _ => return SideVerdict::Fine,
        }
    }
    match (seen, rules.treat_empty_as_junk) {
        (true, _) => SideVerdict::Junk,
        (false, true) => SideVerdict::Empty,
        (false, false) => SideVerdict::Fine,
    }
}

pub fn is_junk_sentence(text: &str, rules: &HeuristicRuleSet) -> bool {
    judge(text, rules) != SideVerdict::Fine
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RemovalReason {
    SourceJunk,
    TargetJunk,
    BothJunk,
    /// At least one side is empty after stripping.
    Empty,
}

impl RemovalReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RemovalReason::SourceJunk => "source_junk",
            RemovalReason::TargetJunk => "target_junk",
            RemovalReason::BothJunk => "both_junk",
            RemovalReason::Empty => "empty",
        }
    }
}

impl fmt::Display for RemovalReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `kept` is exactly `reason.is_none()`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeuristicOutcome {
    pub reason: Option<RemovalReason>,
}

impl HeuristicOutcome {
    pub fn kept(&self) -> bool {
        self.reason.is_none()
    }
}

pub fn check_pair(pair: &SentencePair, rules: &HeuristicRuleSet) -> HeuristicOutcome {
    use SideVerdict::*;
    let reason = match (judge(&pair.source, rules), judge(&pair.target, rules)) {
        (Fine, Fine) => None,
        (Empty, _) | (_, Empty) => Some(RemovalReason::Empty),
        (Junk, Junk) => Some(RemovalReason::BothJunk),
        (Junk, Fine) => Some(RemovalReason::SourceJunk),
        (Fine, Junk) => Some(RemovalReason::TargetJunk),
    };
    HeuristicOutcome { reason }
}

/// Partitions pairs into kept and removed, both in input order.
pub fn filter_pairs<I>(pairs: I, rules: &HeuristicRuleSet) -> (Vec<SentencePair>, Vec<(SentencePair, HeuristicOutcome)>)
where
    I: IntoIterator<Item = SentencePair>,
{
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for p in pairs {
        let outcome = check_pair(&p, rules);
        if outcome.kept() {
            kept.push(p);
        } else {
            removed.push((p, outcome));
        }
    }
    (kept, removed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_pair, LanguagePair};

    fn pair(i: u64, s: &str, t: &str) -> SentencePair {
        validate_pair(s, t, i, LanguagePair::new("eng", "hau").unwrap()).unwrap()
    }

    #[test]
    fn numbers_and_punctuation_are_junk() {
        let r = HeuristicRuleSet::default();
        assert!(is_junk_sentence("24/7 !!!", &r));
        assert!(is_junk_sentence("١٢٣ ، ٤", &r));
        assert!(is_junk_sentence("« 12 »", &r));
        assert!(!is_junk_sentence("Sannu 2022.", &r));
        assert!(!is_junk_sentence("ɓ", &r));
    }

    #[test]
    fn symbols_depend_on_rules() {
        // '£' is Sc, outside the default {N, P}.
        assert!(!is_junk_sentence("£100", &HeuristicRuleSet::default()));
        assert!(is_junk_sentence("£100", &"NPS".parse().unwrap()));
    }

    #[test]
    fn empty_handling() {
        let r = HeuristicRuleSet::default();
        assert!(is_junk_sentence("", &r));
        assert!(is_junk_sentence(" \u{a0}\u{3000} ", &r));
        let lenient = HeuristicRuleSet::new(&[JunkClass::Number, JunkClass::Punctuation], false);
        assert!(!is_junk_sentence("  ", &lenient));
        assert!(is_junk_sentence("12", &lenient));
    }

    #[test]
    fn rule_parsing() {
        assert_eq!("NP".parse::<HeuristicRuleSet>().unwrap(), HeuristicRuleSet::default());
        assert_eq!("nps".parse::<HeuristicRuleSet>().unwrap().to_string(), "NPS");
        assert_eq!("NL".parse::<HeuristicRuleSet>(), Err(RuleError::LettersNotAllowed));
        assert_eq!("NZ".parse::<HeuristicRuleSet>(), Err(RuleError::UnknownClass('Z')));
    }

    #[test]
    fn reasons() {
        let r = HeuristicRuleSet::default();
        assert_eq!(check_pair(&pair(0, "hello", "sannu"), &r).reason, None);
        assert_eq!(
            check_pair(&pair(0, "12", "sannu"), &r).reason,
            Some(RemovalReason::SourceJunk)
        );
        assert_eq!(
            check_pair(&pair(0, "hello", "..."), &r).reason,
            Some(RemovalReason::TargetJunk)
        );
        assert_eq!(check_pair(&pair(0, "1", "2"), &r).reason, Some(RemovalReason::BothJunk));
        assert_eq!(check_pair(&pair(0, "", "2"), &r).reason, Some(RemovalReason::Empty));
    }

    #[test]
    fn ten_pairs_two_junk_targets() {
        let texts = [
            ("one", "daya"),
            ("two", "biyu"),
            ("three", "3."),
            ("four", "hudu"),
            ("five", "biyar"),
            ("six", "shida"),
            ("seven", "(7)"),
            ("eight", "takwas"),
            ("nine", "tara"),
            ("ten", "goma"),
        ];
        let pairs: Vec<_> = texts
            .iter()
            .enumerate()
            .map(|(i, (s, t))| pair(i as u64, s, t))
            .collect();
        // Brute-force expectation: a target with no letters at all.
        let expected_removed: Vec<u64> = texts
            .iter()
            .enumerate()
            .filter(|(_, (_, t))| !t.chars().any(char::is_alphabetic))
            .map(|(i, _)| i as u64)
            .collect();
        assert_eq!(expected_removed, vec![2, 6]);

        let (kept, removed) = filter_pairs(pairs, &HeuristicRuleSet::default());
        assert_eq!(kept.len(), 8);
        assert_eq!(
            removed.iter().map(|(p, _)| p.index).collect::<Vec<_>>(),
            expected_removed
        );
        assert!(removed.iter().all(|(_, o)| o.reason == Some(RemovalReason::TargetJunk)));
        assert!(kept.windows(2).all(|w| w[0].index < w[1].index));
    }

    #[test]
    fn all_junk_corpus() {
        let pairs: Vec<_> = (0..5).map(|i| pair(i, "123", "-")).collect();
        let (kept, removed) = filter_pairs(pairs, &HeuristicRuleSet::default());
        assert!(kept.is_empty());
        assert_eq!(removed.len(), 5);
    }
}
