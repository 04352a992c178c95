//! Hierarchical final-answer extraction.
//!
//! Three tiers are tried strictly in order and the first hit wins:
//!
//! 1. structural markup: `#### 42`, `<answer>42</answer>`, `\boxed{42}`
//! 2. assertion phrases: `the final answer is 42`, `answer: 42`, `ANSWER 42`
//! 3. bare fallback: the last numeric literal (numeric tasks) or an
//!    isolated trailing option letter (multiple choice)
//!
//! Tier 3 extractions are flagged so diagnostics can discount them; the
//! flag never changes the extracted value itself.

use super::text::{canonical_number, scan_numbers};
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

/// Compile-once pattern group.
struct TierPatterns {
    patterns: &'static [&'static str],
    cell: OnceLock<Vec<Regex>>,
}

impl TierPatterns {
    const fn new(patterns: &'static [&'static str]) -> Self {
        Self { patterns, cell: OnceLock::new() }
    }

    fn get(&self) -> &[Regex] {
        self.cell.get_or_init(|| {
            self.patterns
                .iter()
                .map(|p| Regex::new(p).expect("static pattern compiles"))
                .collect()
        })
    }
}

static NUMERIC_TIER1: TierPatterns = TierPatterns::new(&[
    r"####\s*(-?\d+(?:\.\d+)?)",
    r"<answer>\s*(-?\d+(?:\.\d+)?)\s*</answer>",
    r"\\boxed\{\s*(-?\d+(?:\.\d+)?)\s*\}",
]);

static NUMERIC_TIER2: TierPatterns = TierPatterns::new(&[
    r"(?i)(?:the\s+)?final\s+answer\s+is\s*:?\s*(-?\d+(?:\.\d+)?)",
    r"(?i)(?:the\s+)?answer\s+is\s*:?\s*(-?\d+(?:\.\d+)?)",
    r"(?i)answer\s*:?\s+(-?\d+(?:\.\d+)?)",
]);

static CHOICE_TIER1: TierPatterns = TierPatterns::new(&[
    r"\\boxed\{\s*([A-Ea-e])\s*\}",
    r"<answer>\s*([A-Ea-e])\s*</answer>",
]);

static CHOICE_TIER2: TierPatterns = TierPatterns::new(&[
    r"(?i)(?:the\s+)?(?:final\s+)?answer\s+is\s*:?\s*\(?([A-Ea-e])\)?(?:\s|[.,;:!)]|$)",
    r"(?i)answer\s*:\s*\(?([A-Ea-e])\)?(?:\s|[.,;:!)]|$)",
]);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskKind {
    Numeric,
    MultipleChoice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtractionTier {
    Structural,
    Assertion,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extraction {
    /// Canonical form: normalized decimal string or uppercase letter.
    pub answer: String,
    pub tier: ExtractionTier,
    /// True for tier-3 extractions; reliability discount for diagnostics.
    pub low_confidence: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerExtractor {
    pub task: TaskKind,
}

impl AnswerExtractor {
    pub fn new(task: TaskKind) -> Self {
        Self { task }
    }

    pub fn numeric() -> Self {
        Self { task: TaskKind::Numeric }
    }

    pub fn multiple_choice() -> Self {
        Self { task: TaskKind::MultipleChoice }
    }

    /// At most one canonical answer; `None` when no tier matches.
    pub fn extract(&self, text: &str) -> Option<Extraction> {
        match self.task {
            TaskKind::Numeric => self.extract_numeric(text),
            TaskKind::MultipleChoice => self.extract_choice(text),
        }
    }

    /// Bring a reference answer into the same canonical form extraction
    /// produces, so "18", "18.0" and "018" compare equal.
    pub fn canonicalize_gold(&self, gold: &str) -> String {
        match self.task {
            TaskKind::Numeric => canonical_number(gold.trim()),
            TaskKind::MultipleChoice => gold.trim().to_uppercase(),
        }
    }

    fn extract_numeric(&self, text: &str) -> Option<Extraction> {
        // the last structural marker wins within a tier
        for (set, tier) in [
            (&NUMERIC_TIER1, ExtractionTier::Structural),
            (&NUMERIC_TIER2, ExtractionTier::Assertion),
        ] {
            let mut best: Option<(usize, String)> = None;
            for re in set.get() {
                for cap in re.captures_iter(text) {
                    let m = cap.get(1).unwrap();
                    if best.as_ref().map(|(s, _)| m.start() >= *s).unwrap_or(true) {
                        best = Some((m.start(), m.as_str().to_string()));
                    }
                }
            }
            if let Some((_, raw)) = best {
                return Some(Extraction {
                    answer: canonical_number(&raw),
                    tier,
                    low_confidence: false,
                });
            }
        }
        scan_numbers(text).into_iter().last().map(|n| Extraction {
            answer: n,
            tier: ExtractionTier::Fallback,
            low_confidence: true,
        })
    }

    fn extract_choice(&self, text: &str) -> Option<Extraction> {
        for (set, tier) in [
            (&CHOICE_TIER1, ExtractionTier::Structural),
            (&CHOICE_TIER2, ExtractionTier::Assertion),
        ] {
            let mut best: Option<(usize, String)> = None;
            for re in set.get() {
                for cap in re.captures_iter(text) {
                    let m = cap.get(1).unwrap();
                    if best.as_ref().map(|(s, _)| m.start() >= *s).unwrap_or(true) {
                        best = Some((m.start(), m.as_str().to_uppercase()));
                    }
                }
            }
            if let Some((_, letter)) = best {
                return Some(Extraction { answer: letter, tier, low_confidence: false });
            }
        }
        // isolated trailing option letter
        let last = text.split_whitespace().last()?;
        let trimmed = last.trim_matches(|c: char| !c.is_ascii_alphanumeric());
        if trimmed.len() == 1 && matches!(trimmed.chars().next(), Some('A'..='E' | 'a'..='e')) {
            return Some(Extraction {
                answer: trimmed.to_uppercase(),
                tier: ExtractionTier::Fallback,
                low_confidence: true,
            });
        }
        None
    }
}
