//! Count-table denoiser fit on correct chains.
//!
//! Four channels produce each masked-position distribution:
//!
//! * context channel: counts keyed by (position slot, nearest visible token
//!   to the left, nearest visible token to the right), with backoff to a
//!   per-slot marginal and then to uniform.
//! * query-relation channel: for slots that held numbers at fit time,
//!   counts of how the true token related to the two query numbers (equal
//!   to one of them, or one of the two ordered differences), keyed by the
//!   query's leading token so distinct surface forms keep distinct operand
//!   layouts. This is what lets a heavily masked chain be re-derived from
//!   the query alone; nearest-token features cannot reach across the
//!   sequence.
//! * chain-evidence channel: counts of how the true token related to the
//!   visible numbers at earlier chain positions (equal to one of them, an
//!   ordered difference, an ordered sum, or unrelated). Correct training
//!   chains are internally coherent, so this channel carries local
//!   propagation, each value judged by what it was derived from; it is
//!   silent when masking has removed the earlier values.
//!
//! Where the chain channel explains a slot the query channel yields to it:
//!   the relation weight shrinks by the chain row's explained mass. A slot
//!   whose visible predecessors account for its value is read as extending
//!   them; only slots the visible chain cannot explain are re-derived.
//! * agreement channel: co-occurrence counts between the target and
//!   distinctive visible chain tokens (those absent from at least half the
//!   training chains, e.g. variable names), letting one surviving token pin
//!   its companions.
//!
//! The last three are evidence reweightings (multiply, then renormalize),
//! so a certain context row stays certain and an absent channel changes
//! nothing. The split drives the verification geometry downstream: a chain
//! read with most tokens visible is judged by its own asserted values,
//! while a heavily masked chain must be re-derived from the query alone.
//!
//! Fitting corrupts each training chain at several mask rates with a fixed
//! internal seed, so the tables cover both dense and sparse contexts and
//! the fit is a pure function of corpus order and smoothing.

use super::{CorpusRecord, Denoiser, DenoiserOutput};
use crate::error::{CoreError, Result};
use crate::rng::{derive_seed, rng_from_seed};
use crate::vocab::{Lexicon, TokenId, TokenSequence, Vocabulary};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

const NONE_TOKEN: u32 = 0xFFFF;
const FIT_SEED: u64 = 0x5eed_f17_7ab1e;
const FIT_MASK_RATES: [f64; 7] = [0.15, 0.3, 0.45, 0.6, 0.75, 0.9, 1.0];
const FIT_SAMPLES_PER_RATE: usize = 2;
/// Weight of the query-relation channel at a slot that always held numbers.
const REL_MIX: f64 = 0.9;
/// Weight of the chain-evidence channel when chain numbers are visible.
const CHAIN_MIX: f64 = 0.75;
/// Weight of the agreement channel when distinctive tokens are visible.
const AGREE_MIX: f64 = 0.75;
/// A token present in more than this fraction of training chains carries no
/// identity information, so the agreement channel ignores it.
const AGREE_MAX_PRESENCE: f64 = 0.5;

const REL_EQ_Q0: usize = 0;
const REL_EQ_Q1: usize = 1;
const REL_DIFF_Q0_Q1: usize = 2;
const REL_DIFF_Q1_Q0: usize = 3;
const REL_OTHER: usize = 4;
const REL_KINDS: usize = 5;

const CH_EQ: usize = 0;
const CH_DIFF: usize = 1;
const CH_SUM: usize = 2;
const CH_OTHER: usize = 3;
const CH_KINDS: usize = 4;

fn pack_context(slot: u32, left: u32, right: u32) -> u64 {
    ((slot as u64) << 32) | ((left as u64) << 16) | right as u64
}

fn pack_agree(slot: u32, anchor: TokenId) -> u64 {
    ((slot as u64) << 32) | anchor as u64
}

fn pack_rel(slot: u32, form: TokenId) -> u64 {
    ((slot as u64) << 32) | form as u64
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct SparseCounts {
    total: u64,
    counts: Vec<(TokenId, u64)>,
}

impl SparseCounts {
    fn add(&mut self, tok: TokenId) {
        self.total += 1;
        match self.counts.binary_search_by_key(&tok, |(t, _)| *t) {
            Ok(i) => self.counts[i].1 += 1,
            Err(i) => self.counts.insert(i, (tok, 1)),
        }
    }

    fn count(&self, tok: TokenId) -> u64 {
        self.counts
            .binary_search_by_key(&tok, |(t, _)| *t)
            .map(|i| self.counts[i].1)
            .unwrap_or(0)
    }

    fn merge(&mut self, other: &SparseCounts) {
        self.total += other.total;
        for &(tok, n) in &other.counts {
            match self.counts.binary_search_by_key(&tok, |(t, _)| *t) {
                Ok(i) => self.counts[i].1 += n,
                Err(i) => self.counts.insert(i, (tok, n)),
            }
        }
    }
}

/// Serialization mirror with sorted vector tables.
#[derive(Clone, Serialize, Deserialize)]
pub struct TabularSnapshot {
    lexicon: Lexicon,
    period: usize,
    query_len: usize,
    smoothing: f64,
    context: Vec<(u64, SparseCounts)>,
    slot_marginal: Vec<(u32, SparseCounts)>,
    relations: Vec<(u64, [u64; REL_KINDS])>,
    chain_relations: Vec<(u32, [u64; CH_KINDS])>,
    agreements: Vec<(u64, SparseCounts)>,
    num_targets: Vec<(u32, (u64, u64))>,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(from = "TabularSnapshot", into = "TabularSnapshot")]
pub struct TabularDenoiser {
    lexicon: Lexicon,
    vocab: Vocabulary,
    period: usize,
    query_len: usize,
    smoothing: f64,
    context: HashMap<u64, SparseCounts>,
    slot_marginal: HashMap<u32, SparseCounts>,
    relations: HashMap<u64, [u64; REL_KINDS]>,
    chain_relations: HashMap<u32, [u64; CH_KINDS]>,
    /// (slot, visible distinctive token) -> truth counts.
    agreements: HashMap<u64, SparseCounts>,
    /// slot -> (number-token targets, all targets) seen at fit time.
    num_targets: HashMap<u32, (u64, u64)>,
    /// id -> parsed integer value for number tokens.
    token_values: Vec<Option<i64>>,
    number_ids: Vec<TokenId>,
}

impl From<TabularSnapshot> for TabularDenoiser {
    fn from(s: TabularSnapshot) -> Self {
        let mut lexicon = s.lexicon;
        lexicon.rebuild_index();
        let vocab = lexicon.vocabulary().expect("non-empty lexicon");
        let (token_values, number_ids) = index_numbers(&lexicon);
        Self {
            vocab,
            period: s.period,
            query_len: s.query_len,
            smoothing: s.smoothing,
            context: s.context.into_iter().collect(),
            slot_marginal: s.slot_marginal.into_iter().collect(),
            relations: s.relations.into_iter().collect(),
            chain_relations: s.chain_relations.into_iter().collect(),
            agreements: s.agreements.into_iter().collect(),
            num_targets: s.num_targets.into_iter().collect(),
            token_values,
            number_ids,
            lexicon,
        }
    }
}

impl From<TabularDenoiser> for TabularSnapshot {
    fn from(d: TabularDenoiser) -> Self {
        let mut context: Vec<_> = d.context.into_iter().collect();
        context.sort_by_key(|(k, _)| *k);
        let mut slot_marginal: Vec<_> = d.slot_marginal.into_iter().collect();
        slot_marginal.sort_by_key(|(k, _)| *k);
        let mut relations: Vec<_> = d.relations.into_iter().collect();
        relations.sort_by_key(|(k, _)| *k);
        let mut chain_relations: Vec<_> = d.chain_relations.into_iter().collect();
        chain_relations.sort_by_key(|(k, _)| *k);
        let mut agreements: Vec<_> = d.agreements.into_iter().collect();
        agreements.sort_by_key(|(k, _)| *k);
        let mut num_targets: Vec<_> = d.num_targets.into_iter().collect();
        num_targets.sort_by_key(|(k, _)| *k);
        Self {
            lexicon: d.lexicon,
            period: d.period,
            query_len: d.query_len,
            smoothing: d.smoothing,
            context,
            slot_marginal,
            relations,
            chain_relations,
            agreements,
            num_targets,
        }
    }
}

fn index_numbers(lexicon: &Lexicon) -> (Vec<Option<i64>>, Vec<TokenId>) {
    let mut values = Vec::with_capacity(lexicon.len());
    let mut ids = Vec::new();
    for id in 0..lexicon.len() as TokenId {
        let v = lexicon.token(id).and_then(|s| s.parse::<i64>().ok());
        if v.is_some() {
            ids.push(id);
        }
        values.push(v);
    }
    (values, ids)
}

fn classify_relation(value: i64, q0: i64, q1: i64) -> usize {
    if value == q0 {
        REL_EQ_Q0
    } else if value == q1 {
        REL_EQ_Q1
    } else if value == q0 - q1 {
        REL_DIFF_Q0_Q1
    } else if value == q1 - q0 {
        REL_DIFF_Q1_Q0
    } else {
        REL_OTHER
    }
}

/// Evidence reweighting: scale each entry by the channel's departure from
/// uniform, weighted by `w` in [0, 1). The row is renormalized later; a
/// certain (point-mass) row therefore stays certain, and `w = 0` or a
/// uniform channel changes nothing.
fn reweight(row: &mut [f64], channel: &[f64], w: f64) {
    let v = row.len() as f64;
    for (r, &c) in row.iter_mut().zip(channel) {
        *r *= 1.0 - w + w * c * v;
    }
}

/// Priority classification against visible chain numbers; `visible` holds
/// one entry per visible position, so repeats are distinct evidence.
fn classify_chain(value: i64, visible: &[i64]) -> usize {
    if visible.iter().any(|&u| u == value) {
        return CH_EQ;
    }
    let pair = |f: &dyn Fn(i64, i64) -> i64| {
        visible.iter().enumerate().any(|(i, &u)| {
            visible.iter().enumerate().any(|(j, &w)| i != j && f(u, w) == value)
        })
    };
    if pair(&|u, w| u - w) {
        CH_DIFF
    } else if pair(&|u, w| u + w) {
        CH_SUM
    } else {
        CH_OTHER
    }
}

/// Fit on the correct records of `records`. Incorrect records are ignored;
/// at least one correct record is required. Deterministic given record
/// order and `smoothing`.
pub fn fit_tabular(
    records: &[CorpusRecord],
    lexicon: &Lexicon,
    smoothing: f64,
) -> Result<TabularDenoiser> {
    if smoothing < 0.0 {
        return Err(CoreError::InvalidInput(format!("smoothing {smoothing} must be >= 0")));
    }
    if lexicon.len() >= NONE_TOKEN as usize {
        return Err(CoreError::InvalidInput("lexicon too large for context packing".into()));
    }
    let correct: Vec<&CorpusRecord> = records.iter().filter(|r| r.label).collect();
    if correct.is_empty() {
        return Err(CoreError::InvalidInput("fit needs at least one correct record".into()));
    }
    let query_len = correct[0].problem.query.len();
    let mut period = 0;
    for r in &correct {
        if r.problem.query.len() != query_len {
            return Err(CoreError::InvalidInput("queries must share one length".into()));
        }
        period = period.max(query_len + r.candidate.len());
    }

    let vocab = lexicon.vocabulary()?;
    let (token_values, number_ids) = index_numbers(lexicon);
    let mut model = TabularDenoiser {
        lexicon: lexicon.clone(),
        vocab,
        period,
        query_len,
        smoothing,
        context: HashMap::new(),
        slot_marginal: HashMap::new(),
        relations: HashMap::new(),
        chain_relations: HashMap::new(),
        agreements: HashMap::new(),
        num_targets: HashMap::new(),
        token_values,
        number_ids,
    };

    // distinctive = non-numeric and absent from enough training chains to
    // carry identity; the agreement channel only links such tokens
    let mut presence = vec![0usize; lexicon.len()];
    for rec in &correct {
        let mut seen = vec![false; lexicon.len()];
        let clean = rec.problem.query.concat(&rec.candidate);
        for i in 0..clean.len() {
            seen[clean.get(i) as usize] = true;
        }
        for (p, s) in presence.iter_mut().zip(&seen) {
            *p += usize::from(*s);
        }
    }
    let cutoff = (AGREE_MAX_PRESENCE * correct.len() as f64).floor() as usize;
    let distinctive: Vec<bool> = presence
        .iter()
        .enumerate()
        .map(|(t, &c)| c <= cutoff && model.token_values[t].is_none())
        .collect();

    let mask_id = model.vocab.mask_id();
    for (ci, rec) in correct.iter().enumerate() {
        let clean = rec.problem.query.concat(&rec.candidate);
        model.vocab.validate_content(&clean)?;
        let qnums = model.query_numbers(&clean);
        let chain_start = query_len;
        let rec_seed = derive_seed(FIT_SEED, ci as u64);
        for (gi, &rate) in FIT_MASK_RATES.iter().enumerate() {
            for si in 0..FIT_SAMPLES_PER_RATE {
                let mut rng = rng_from_seed(derive_seed(
                    rec_seed,
                    (gi * FIT_SAMPLES_PER_RATE + si) as u64,
                ));
                let mut view = clean.clone();
                let mut targets = Vec::new();
                for p in chain_start..clean.len() {
                    if rng.gen::<f64>() < rate {
                        view.set(p, mask_id);
                        targets.push(p);
                    }
                }
                for &p in &targets {
                    model.record_target(&view, &clean, p, qnums, &distinctive);
                }
            }
        }
    }
    Ok(model)
}

impl TabularDenoiser {
    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn query_len(&self) -> usize {
        self.query_len
    }

    /// Gold chain length implied by the fitted layout.
    pub fn chain_len(&self) -> usize {
        self.period - self.query_len
    }

    fn query_numbers(&self, seq: &TokenSequence) -> Option<(i64, i64)> {
        let mut found = Vec::new();
        for i in 0..self.query_len.min(seq.len()) {
            let tok = seq.get(i);
            if (tok as usize) < self.token_values.len() {
                if let Some(v) = self.token_values[tok as usize] {
                    found.push(v);
                }
            }
        }
        (found.len() >= 2).then(|| (found[0], found[1]))
    }

    fn neighbors(&self, view: &TokenSequence, p: usize) -> (u32, u32) {
        let mask = self.vocab.mask_id();
        let left = (0..p)
            .rev()
            .map(|j| view.get(j))
            .find(|&t| t != mask)
            .map(|t| t as u32)
            .unwrap_or(NONE_TOKEN);
        let right = (p + 1..view.len())
            .map(|j| view.get(j))
            .find(|&t| t != mask)
            .map(|t| t as u32)
            .unwrap_or(NONE_TOKEN);
        (left, right)
    }

    fn record_target(
        &mut self,
        view: &TokenSequence,
        clean: &TokenSequence,
        p: usize,
        qnums: Option<(i64, i64)>,
        distinctive: &[bool],
    ) {
        let slot = (p % self.period) as u32;
        let (left, right) = self.neighbors(view, p);
        let truth = clean.get(p);
        self.context
            .entry(pack_context(slot, left, right))
            .or_default()
            .add(truth);
        self.slot_marginal.entry(slot).or_default().add(truth);
        let entry = self.num_targets.entry(slot).or_insert((0, 0));
        entry.1 += 1;
        if let Some(value) = self.token_values[truth as usize] {
            entry.0 += 1;
            if let (Some((q0, q1)), Some(form)) = (qnums, self.query_form(view)) {
                self.relations.entry(pack_rel(slot, form)).or_insert([0; REL_KINDS])
                    [classify_relation(value, q0, q1)] += 1;
            }
            let visible = self.prior_chain_numbers(view, p);
            if !visible.is_empty() {
                self.chain_relations.entry(slot).or_insert([0; CH_KINDS])
                    [classify_chain(value, &visible)] += 1;
            }
        } else if distinctive.get(truth as usize).copied().unwrap_or(false) {
            let mask = self.vocab.mask_id();
            for ap in self.query_len..view.len() {
                let anchor = view.get(ap);
                if anchor != mask && distinctive.get(anchor as usize).copied().unwrap_or(false) {
                    self.agreements.entry(pack_agree(slot, anchor)).or_default().add(truth);
                }
            }
        }
    }

    /// The query's leading token, its surface-form marker. The relation
    /// table is keyed on it so one fit can hold distinct operand layouts.
    fn query_form(&self, view: &TokenSequence) -> Option<TokenId> {
        if self.query_len == 0 || view.len() == 0 {
            return None;
        }
        let tok = view.get(0);
        (tok != self.vocab.mask_id()).then_some(tok)
    }

    /// Values of the unmasked number tokens at chain positions before `p`.
    /// Restricting to earlier positions keeps the evidence causal: a value
    /// is judged by what it was derived from, never by its own copies
    /// later in the chain.
    fn prior_chain_numbers(&self, view: &TokenSequence, p: usize) -> Vec<i64> {
        let mask = self.vocab.mask_id();
        (self.query_len..p.min(view.len()))
            .filter_map(|q| {
                let tok = view.get(q);
                if tok == mask {
                    return None;
                }
                self.token_values.get(tok as usize).copied().flatten()
            })
            .collect()
    }

    fn smoothed_row(&self, counts: Option<&SparseCounts>) -> Vec<f64> {
        let v = self.vocab.size() as usize;
        let total = counts.map(|c| c.total).unwrap_or(0);
        if total == 0 && self.smoothing == 0.0 {
            return vec![1.0 / v as f64; v];
        }
        let denom = total as f64 + self.smoothing * v as f64;
        if denom <= 0.0 {
            return vec![1.0 / v as f64; v];
        }
        (0..v as TokenId)
            .map(|t| {
                let c = counts.map(|cs| cs.count(t)).unwrap_or(0);
                (c as f64 + self.smoothing) / denom
            })
            .collect()
    }

    fn context_row(&self, slot: u32, left: u32, right: u32) -> Vec<f64> {
        let ctx = self.context.get(&pack_context(slot, left, right));
        if ctx.map(|c| c.total).unwrap_or(0) > 0 {
            return self.smoothed_row(ctx);
        }
        let marginal = self.slot_marginal.get(&slot);
        if marginal.map(|c| c.total).unwrap_or(0) > 0 {
            return self.smoothed_row(marginal);
        }
        self.smoothed_row(None)
    }

    /// Relation-channel distribution and its evidence weight. The channel
    /// only encodes which query number a slot repeats; it does no
    /// arithmetic, so derived values must come from chain evidence. The
    /// weight decays as smoothing grows relative to the observed counts, so
    /// a heavily smoothed model degrades to the context channel alone.
    fn relation_row(&self, slot: u32, form: TokenId, q0: i64, q1: i64) -> Option<(Vec<f64>, f64)> {
        let rel = self.relations.get(&pack_rel(slot, form))?;
        let total: u64 = rel.iter().sum();
        if total == 0 || self.number_ids.is_empty() {
            return None;
        }
        let denom = total as f64 + self.smoothing * REL_KINDS as f64;
        let evidence = total as f64 / denom;
        let probs: Vec<f64> =
            rel.iter().map(|&c| (c as f64 + self.smoothing) / denom).collect();
        let mut row = vec![0.0; self.vocab.size() as usize];
        let uniform = 1.0 / self.number_ids.len() as f64;
        let mut spread = probs[REL_OTHER];
        for (kind, value) in [
            (REL_EQ_Q0, q0),
            (REL_EQ_Q1, q1),
            (REL_DIFF_Q0_Q1, q0 - q1),
            (REL_DIFF_Q1_Q0, q1 - q0),
        ] {
            match self.lexicon.id(&value.to_string()) {
                Some(tok) => row[tok as usize] += probs[kind],
                // value outside the vocabulary: spread that mass
                None => spread += probs[kind],
            }
        }
        for &id in &self.number_ids {
            row[id as usize] += spread * uniform;
        }
        Some((row, evidence))
    }

    /// Chain-evidence distribution and the fraction of its mass that the
    /// visible values actually explain; `None` when the slot has no
    /// fit-time counts or nothing numeric is visible earlier in the chain.
    /// Mass for relation kinds no visible pair can realize is spread
    /// uniformly and does not count as explained.
    fn chain_row(&self, slot: u32, visible: &[i64]) -> Option<(Vec<f64>, f64)> {
        if visible.is_empty() || self.number_ids.is_empty() {
            return None;
        }
        let rel = self.chain_relations.get(&slot)?;
        let total: u64 = rel.iter().sum();
        if total == 0 {
            return None;
        }
        let denom = total as f64 + self.smoothing * CH_KINDS as f64;
        let evidence = total as f64 / denom;
        let probs: Vec<f64> = rel.iter().map(|&c| (c as f64 + self.smoothing) / denom).collect();
        // bucket every number token by the same priority rule used at fit
        let mut buckets: [Vec<TokenId>; CH_KINDS] = Default::default();
        for &id in &self.number_ids {
            if let Some(x) = self.token_values[id as usize] {
                buckets[classify_chain(x, visible)].push(id);
            }
        }
        let mut row = vec![0.0; self.vocab.size() as usize];
        let mut spread = probs[CH_OTHER];
        let mut explained = 0.0;
        for kind in [CH_EQ, CH_DIFF, CH_SUM] {
            if buckets[kind].is_empty() {
                spread += probs[kind];
            } else {
                explained += probs[kind];
                let share = probs[kind] / buckets[kind].len() as f64;
                for &id in &buckets[kind] {
                    row[id as usize] += share;
                }
            }
        }
        let uniform = 1.0 / self.number_ids.len() as f64;
        for &id in &self.number_ids {
            row[id as usize] += spread * uniform;
        }
        Some((row, evidence * explained))
    }

    /// Pooled co-occurrence distribution from every visible distinctive
    /// anchor; `None` when no anchor has fit-time counts for the slot.
    fn agreement_row(&self, slot: u32, view: &TokenSequence) -> Option<(Vec<f64>, f64)> {
        let mask = self.vocab.mask_id();
        let mut merged = SparseCounts::default();
        for ap in self.query_len..view.len() {
            let anchor = view.get(ap);
            if anchor == mask {
                continue;
            }
            if let Some(c) = self.agreements.get(&pack_agree(slot, anchor)) {
                merged.merge(c);
            }
        }
        if merged.total == 0 {
            return None;
        }
        let evidence =
            merged.total as f64 / (merged.total as f64 + self.smoothing * self.vocab.size() as f64);
        Some((self.smoothed_row(Some(&merged)), evidence))
    }

    fn predict_position(&self, view: &TokenSequence, p: usize) -> Vec<f64> {
        let slot = (p % self.period) as u32;
        let (left, right) = self.neighbors(view, p);
        let mut row = self.context_row(slot, left, right);
        let (num, all) = self.num_targets.get(&slot).copied().unwrap_or((0, 0));
        if num > 0 && all > 0 {
            let num_share = num as f64 / all as f64;
            let visible = self.prior_chain_numbers(view, p);
            let chain = self.chain_row(slot, &visible);
            let chain_ev = chain.as_ref().map(|(_, e)| *e).unwrap_or(0.0);
            if let (Some((q0, q1)), Some(form)) = (self.query_numbers(view), self.query_form(view))
            {
                if let Some((rel_row, evidence)) = self.relation_row(slot, form, q0, q1) {
                    // Re-derivation from the query covers only what visible
                    // chain evidence cannot explain: when earlier values are
                    // on view the model extends them instead of recomputing.
                    let w = REL_MIX * evidence * num_share * (1.0 - chain_ev);
                    reweight(&mut row, &rel_row, w);
                }
            }
            // visible earlier chain values carry the arithmetic
            if let Some((ch_row, evidence)) = chain {
                reweight(&mut row, &ch_row, CHAIN_MIX * evidence * num_share);
            }
        }
        if all > num {
            let share = (all - num) as f64 / all.max(1) as f64;
            if let Some((ag_row, evidence)) = self.agreement_row(slot, view) {
                reweight(&mut row, &ag_row, AGREE_MIX * evidence * share);
            }
        }
        let sum: f64 = row.iter().sum();
        debug_assert!(sum > 0.0);
        for r in &mut row {
            *r /= sum;
        }
        row
    }
}

impl Denoiser for TabularDenoiser {
    fn predict(&self, observed: &TokenSequence) -> Result<DenoiserOutput> {
        self.vocab.validate(observed)?;
        let rows = observed
            .masked_positions(self.vocab.mask_id())
            .into_iter()
            .map(|p| (p, self.predict_position(observed, p)))
            .collect();
        Ok(DenoiserOutput::new(rows))
    }

    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn concurrent_callable(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::{generate_corpus, CorpusParams};

    fn small_corpus(n: usize, error_rate: f64, seed: u64) -> (Vec<CorpusRecord>, Lexicon) {
        generate_corpus(&CorpusParams { n, error_rate, seed, ..CorpusParams::default() }).unwrap()
    }

    #[test]
    fn single_chain_zero_smoothing_is_a_point_mass() {
        let (records, lex) = small_corpus(1, 0.0, 4);
        let model = fit_tabular(&records, &lex, 0.0).unwrap();
        let clean = records[0].problem.query.concat(&records[0].candidate);
        let mask = model.vocab.mask_id();
        // mask a few positions at a time and check the truth gets p = 1
        for start in [4usize, 9, 14, 19] {
            let mut view = clean.clone();
            for p in start..(start + 3).min(view.len()) {
                view.set(p, mask);
            }
            let out = model.predict(&view).unwrap();
            for (p, row) in out.rows() {
                let truth = clean.get(*p) as usize;
                assert!(
                    (row[truth] - 1.0).abs() < 1e-12,
                    "position {p}: p(truth) = {}",
                    row[truth]
                );
            }
        }
    }

    #[test]
    fn heavy_smoothing_approaches_uniform() {
        let (records, lex) = small_corpus(20, 0.0, 5);
        let sharp = fit_tabular(&records, &lex, 0.01).unwrap();
        let flat = fit_tabular(&records, &lex, 1e6).unwrap();
        let mut view = records[0].problem.query.concat(&records[0].candidate);
        let mask = sharp.vocab.mask_id();
        view.set(6, mask);
        let max_of = |m: &TabularDenoiser| {
            let out = m.predict(&view).unwrap();
            let row = out.row(6).unwrap();
            row.iter().cloned().fold(0.0, f64::max)
        };
        let uniform = 1.0 / sharp.vocab.size() as f64;
        assert!(max_of(&sharp) > 3.0 * uniform);
        assert!((max_of(&flat) - uniform).abs() < 0.1 * uniform);
    }

    #[test]
    fn rows_are_distributions_even_on_unseen_contexts() {
        let (records, lex) = small_corpus(10, 0.0, 6);
        let model = fit_tabular(&records, &lex, 0.0).unwrap();
        let mask = model.vocab.mask_id();
        // garbled over-length sequence full of rare contexts
        let mut weird: Vec<u32> = (0..30).map(|i| (i % model.vocab.size()) as u32).collect();
        for i in [0usize, 3, 7, 8, 9, 15, 22, 29] {
            weird[i] = mask;
        }
        let out = model.predict(&TokenSequence::new(weird)).unwrap();
        assert_eq!(out.rows().len(), 8);
        for (_, row) in out.rows() {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let (records, lex) = small_corpus(30, 0.0, 7);
        let a = fit_tabular(&records, &lex, 0.1).unwrap();
        let b = fit_tabular(&records, &lex, 0.1).unwrap();
        let mut view = records[3].problem.query.concat(&records[3].candidate);
        view.set(10, a.vocab.mask_id());
        view.set(18, a.vocab.mask_id());
        assert_eq!(a.predict(&view).unwrap(), b.predict(&view).unwrap());
    }

    #[test]
    fn serde_round_trip_preserves_predictions() {
        let (records, lex) = small_corpus(25, 0.0, 8);
        let model = fit_tabular(&records, &lex, 0.1).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: TabularDenoiser = serde_json::from_str(&json).unwrap();
        let mut view = records[5].problem.query.concat(&records[5].candidate);
        for p in [5usize, 11, 17, 21] {
            view.set(p, model.vocab.mask_id());
        }
        assert_eq!(model.predict(&view).unwrap(), back.predict(&view).unwrap());
        // snapshot bytes are order-stable
        let json2 = serde_json::to_string(&back).unwrap();
        assert_eq!(json, json2);
    }

    #[test]
    fn relation_channel_recovers_query_values() {
        let (records, lex) = small_corpus(300, 0.0, 9);
        let model = fit_tabular(&records, &lex, 0.1).unwrap();
        // fully mask a chain; operand and result slots should still put
        // visible mass on the query-determined values
        let rec = records.iter().find(|r| !r.problem.hard).unwrap();
        let clean = rec.problem.query.concat(&rec.candidate);
        let mut view = clean.clone();
        for p in model.query_len()..view.len() {
            view.set(p, model.vocab.mask_id());
        }
        let out = model.predict(&view).unwrap();
        let uniform = 1.0 / model.vocab.size() as f64;
        for p in [6usize, 10, 18, 21] {
            let truth = clean.get(p) as usize;
            let row = out.row(p).unwrap();
            assert!(
                row[truth] > 2.0 * uniform,
                "slot {p}: p(truth) = {} vs uniform {uniform}",
                row[truth]
            );
        }
    }

    #[test]
    fn fit_requires_correct_records() {
        let (mut records, lex) = small_corpus(10, 0.0, 10);
        for r in &mut records {
            r.label = false;
        }
        assert!(fit_tabular(&records, &lex, 0.1).is_err());
        assert!(fit_tabular(&records[..0], &lex, 0.1).is_err());
    }
}
