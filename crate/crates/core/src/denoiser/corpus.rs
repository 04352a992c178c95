//! Synthetic subtraction-chain corpus.
//!
//! Each problem asks for `n1 - n2`; the solution chain names both operands,
//! computes the difference, and repeats it after an `ANSWER` marker:
//!
//! ```text
//! query:  compute 12 - 5          (or the inverted form: subtract 5 from 12)
//! chain:  a = 12 ; b = 5 ; c = a - b = 7 ; ANSWER 7
//! ```
//!
//! Two deliberate sources of diversity keep verification non-trivial.
//! Variable names come from one of three letter families, which is
//! information present only in the chain, never in the query. A configurable
//! fraction of queries uses the inverted surface form, whose operand order
//! is swapped; a model fit on the mixed corpus resolves that ambiguity only
//! statistically, so inverted queries are genuinely harder.
//!
//! Incorrect candidates carry exactly one injected fault: a wrong final
//! answer, a wrong intermediate value, a skipped derivation segment, or a
//! duplicated token that shifts every later position. Labels are exact
//! because the generator knows what it injected.
//!
//! The two value faults are built to read as fluent. The wrong final
//! answer copies one of the chain's earlier values, so it is something a
//! correct chain could plausibly assert at that position. The wrong
//! intermediate fabricates one operand assignment and then derives the
//! rest of the chain from it honestly, keeping the chain internally
//! coherent. Detectors that lean on visible chain context rate both as
//! unremarkable; recovering either fault requires re-deriving values from
//! the query itself.

use crate::error::{CoreError, Result};
use crate::rng::{derive_seed, rng_from_seed};
use crate::vocab::{Lexicon, TokenId, TokenSequence};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Tokens in every query.
pub const QUERY_LEN: usize = 4;
/// Tokens in a fault-free chain.
pub const CHAIN_LEN: usize = 18;

const FAMILIES: [[&str; 3]; 3] = [["a", "b", "c"], ["x", "y", "z"], ["u", "v", "w"]];
const STRUCTURE: [&str; 7] = ["compute", "-", "subtract", "from", "=", ";", "ANSWER"];

/// Chain offsets of the three difference occurrences and the operands.
const SLOT_N1: usize = 2;
const SLOT_N2: usize = 6;
const SLOT_DIFF: usize = 14;
const SLOT_ANSWER: usize = 17;
/// Segment removed by the skipped-step fault: `c = a - b = <n3> ;`.
const SKIP_RANGE: std::ops::Range<usize> = 8..16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FaultKind {
    WrongFinalAnswer,
    WrongIntermediate,
    SkippedStep,
    DuplicatedToken,
}

impl FaultKind {
    pub const ALL: [FaultKind; 4] = [
        FaultKind::WrongFinalAnswer,
        FaultKind::WrongIntermediate,
        FaultKind::SkippedStep,
        FaultKind::DuplicatedToken,
    ];
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticProblem {
    pub query: TokenSequence,
    pub gold_chain: TokenSequence,
    pub answer: i64,
    /// Uses the inverted query form.
    pub hard: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub problem: SyntheticProblem,
    pub candidate: TokenSequence,
    /// True when the candidate is the unmodified gold chain.
    pub label: bool,
    pub fault: Option<FaultKind>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusParams {
    pub n: usize,
    pub num_min: i64,
    pub num_max: i64,
    /// Probability that a record carries a fault.
    pub error_rate: f64,
    /// Probability that a query uses the inverted form.
    pub hard_fraction: f64,
    pub seed: u64,
}

impl Default for CorpusParams {
    fn default() -> Self {
        Self { n: 1000, num_min: 0, num_max: 40, error_rate: 0.4, hard_fraction: 0.25, seed: 0 }
    }
}

impl CorpusParams {
    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(CoreError::InvalidInput("corpus size must be >= 1".into()));
        }
        if self.num_min < 0 || self.num_max < self.num_min || self.num_max < 1 {
            return Err(CoreError::InvalidInput(format!(
                "number range [{}, {}] must satisfy 0 <= min <= max and max >= 1",
                self.num_min, self.num_max
            )));
        }
        for (name, v) in [("error_rate", self.error_rate), ("hard_fraction", self.hard_fraction)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(CoreError::InvalidInput(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Fixed-order lexicon: structure words, family letters, then digits
/// `0..=num_max`. Differences always land in `[0, num_max]`, so every
/// number a chain can contain is a single known token.
pub fn build_lexicon(num_max: i64) -> Lexicon {
    let mut lex = Lexicon::new();
    for t in STRUCTURE {
        lex.intern(t);
    }
    for fam in FAMILIES {
        for v in fam {
            lex.intern(v);
        }
    }
    for n in 0..=num_max {
        lex.intern(&n.to_string());
    }
    lex
}

fn num_id(lex: &Lexicon, n: i64) -> TokenId {
    lex.id(&n.to_string()).expect("number token interned at lexicon build")
}

fn build_query(lex: &Lexicon, n1: i64, n2: i64, hard: bool) -> TokenSequence {
    let ids = if hard {
        vec![
            lex.id("subtract").unwrap(),
            num_id(lex, n2),
            lex.id("from").unwrap(),
            num_id(lex, n1),
        ]
    } else {
        vec![
            lex.id("compute").unwrap(),
            num_id(lex, n1),
            lex.id("-").unwrap(),
            num_id(lex, n2),
        ]
    };
    debug_assert_eq!(ids.len(), QUERY_LEN);
    TokenSequence::new(ids)
}

fn build_chain(lex: &Lexicon, family: usize, n1: i64, n2: i64) -> TokenSequence {
    let [va, vb, vc] = FAMILIES[family].map(|v| lex.id(v).unwrap());
    let (eq, semi, ans, minus) = (
        lex.id("=").unwrap(),
        lex.id(";").unwrap(),
        lex.id("ANSWER").unwrap(),
        lex.id("-").unwrap(),
    );
    let n3 = n1 - n2;
    let ids = vec![
        va,
        eq,
        num_id(lex, n1),
        semi,
        vb,
        eq,
        num_id(lex, n2),
        semi,
        vc,
        eq,
        va,
        minus,
        vb,
        eq,
        num_id(lex, n3),
        semi,
        ans,
        num_id(lex, n3),
    ];
    debug_assert_eq!(ids.len(), CHAIN_LEN);
    debug_assert_eq!(ids[SLOT_N1], num_id(lex, n1));
    debug_assert_eq!(ids[SLOT_N2], num_id(lex, n2));
    debug_assert_eq!(ids[SLOT_DIFF], num_id(lex, n3));
    debug_assert_eq!(ids[SLOT_ANSWER], num_id(lex, n3));
    TokenSequence::new(ids)
}

fn wrong_number(rng: &mut impl Rng, lex: &Lexicon, num_max: i64, not: i64) -> TokenId {
    loop {
        let w = rng.gen_range(0..=num_max);
        if w != not {
            return num_id(lex, w);
        }
    }
}

fn inject_fault(
    rng: &mut impl Rng,
    lex: &Lexicon,
    num_max: i64,
    gold: &TokenSequence,
    n1: i64,
    n2: i64,
    kind: FaultKind,
) -> TokenSequence {
    let mut chain = gold.tokens().to_vec();
    match kind {
        FaultKind::WrongFinalAnswer => {
            // The final line repeats one of the chain's earlier values
            // instead of the computed difference, the way a transcription
            // slip copies the wrong line. Every token stays locally
            // plausible; only the query says which value belongs here.
            let gold_ans = n1 - n2;
            let mut opts = [n1, n2];
            if rng.gen::<bool>() {
                opts.swap(0, 1);
            }
            chain[SLOT_ANSWER] = match opts.iter().copied().find(|&v| v != gold_ans) {
                Some(v) => num_id(lex, v),
                // n1 = n2 = 0 leaves nothing to copy; any wrong number
                None => wrong_number(rng, lex, num_max, gold_ans),
            };
        }
        FaultKind::WrongIntermediate => {
            // One operand assignment retrieves the wrong value and the rest
            // of the chain is derived from it honestly: the difference still
            // matches the stated operands and the answer still repeats the
            // difference. Prefer reading the other query number twice (the
            // common retrieval slip, and every token of it stays plausible);
            // when the operands are equal that slip is invisible, so
            // fabricate instead. Corrupting n2 needs a replacement in
            // [0, n1], corrupting n1 one in [n2, num_max].
            let corrupt_n2 = n1 >= 1 && (n2 == num_max || rng.gen::<bool>());
            if corrupt_n2 {
                let w = if n1 != n2 {
                    n1
                } else {
                    loop {
                        let w = rng.gen_range(0..=n1);
                        if w != n2 {
                            break w;
                        }
                    }
                };
                chain[SLOT_N2] = num_id(lex, w);
                chain[SLOT_DIFF] = num_id(lex, n1 - w);
                chain[SLOT_ANSWER] = num_id(lex, n1 - w);
            } else {
                let w = if n2 != n1 {
                    n2
                } else {
                    loop {
                        let w = rng.gen_range(n2..=num_max);
                        if w != n1 {
                            break w;
                        }
                    }
                };
                chain[SLOT_N1] = num_id(lex, w);
                chain[SLOT_DIFF] = num_id(lex, w - n2);
                chain[SLOT_ANSWER] = num_id(lex, w - n2);
            }
        }
        FaultKind::SkippedStep => {
            chain.drain(SKIP_RANGE);
        }
        FaultKind::DuplicatedToken => {
            let i = rng.gen_range(0..chain.len());
            let dup = chain[i];
            chain.insert(i + 1, dup);
        }
    }
    TokenSequence::new(chain)
}

/// Generate `params.n` labeled records. Deterministic in `params.seed`;
/// record `i` depends only on the seed and `i`.
pub fn generate_corpus(params: &CorpusParams) -> Result<(Vec<CorpusRecord>, Lexicon)> {
    params.validate()?;
    let lex = build_lexicon(params.num_max);
    let mut records = Vec::with_capacity(params.n);
    for i in 0..params.n {
        let mut rng = rng_from_seed(derive_seed(params.seed, i as u64));
        let hard = rng.gen::<f64>() < params.hard_fraction;
        let family = rng.gen_range(0..FAMILIES.len());
        let n1 = rng.gen_range(params.num_min..=params.num_max);
        let n2 = rng.gen_range(params.num_min..=n1);
        let gold = build_chain(&lex, family, n1, n2);
        let query = build_query(&lex, n1, n2, hard);
        let fault = if rng.gen::<f64>() < params.error_rate {
            Some(FaultKind::ALL[rng.gen_range(0..FaultKind::ALL.len())])
        } else {
            None
        };
        let candidate = match fault {
            Some(kind) => inject_fault(&mut rng, &lex, params.num_max, &gold, n1, n2, kind),
            None => gold.clone(),
        };
        records.push(CorpusRecord {
            problem: SyntheticProblem { query, gold_chain: gold, answer: n1 - n2, hard },
            candidate,
            label: fault.is_none(),
            fault,
        });
    }
    Ok((records, lex))
}
