//! Synthetic dual-language corpus generator.
//!
//! Language A sentences are drawn from an order-2 Markov chain over a small
//! vocabulary with sparse transitions (each context allows only a few
//! successors), so the language has learnable structure. Language B is a
//! deterministic transform of A: a token bijection followed by a positional
//! reordering, optionally corrupted by per-token noise. The noiseless
//! transform is kept as a ground-truth map so oracle translations are
//! available for every sentence.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::corpus::{
    BilingualCorpus, LangTag, MonolingualCorpus, Sentence, Vocabulary, NUM_RESERVED,
};
use crate::error::{Error, Result};
use crate::numerics::{SeededRng, Tensor2D};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReorderRule {
    /// Reverse token order.
    Reverse,
    /// Rotate left by `k` positions (modulo sentence length).
    Rotate(usize),
    /// Swap tokens pairwise: positions (0,1), (2,3), ...
    SwapAdjacent,
}

impl std::fmt::Display for ReorderRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReorderRule::Reverse => write!(f, "reverse"),
            ReorderRule::Rotate(k) => write!(f, "rotate:{k}"),
            ReorderRule::SwapAdjacent => write!(f, "swap_adjacent"),
        }
    }
}

impl std::str::FromStr for ReorderRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reverse" => Ok(ReorderRule::Reverse),
            "swap_adjacent" => Ok(ReorderRule::SwapAdjacent),
            other => {
                if let Some(k) = other.strip_prefix("rotate:") {
                    let k: usize = k.parse().map_err(|_| {
                        Error::InvalidArgument(format!("bad rotate amount in {other:?}"))
                    })?;
                    Ok(ReorderRule::Rotate(k))
                } else {
                    Err(Error::InvalidArgument(format!(
                        "unknown reorder rule {other:?} (expected reverse, rotate:<k>, or swap_adjacent)"
                    )))
                }
            }
        }
    }
}

fn reorder_forward(rule: ReorderRule, tokens: &mut [u32]) {
    let n = tokens.len();
    if n < 2 {
        return;
    }
    match rule {
        ReorderRule::Reverse => tokens.reverse(),
        ReorderRule::Rotate(k) => tokens.rotate_left(k % n),
        ReorderRule::SwapAdjacent => {
            for i in (0..n - 1).step_by(2) {
                tokens.swap(i, i + 1);
            }
        }
    }
}

fn reorder_inverse(rule: ReorderRule, tokens: &mut [u32]) {
    let n = tokens.len();
    if n < 2 {
        return;
    }
    match rule {
        ReorderRule::Reverse => tokens.reverse(),
        ReorderRule::Rotate(k) => tokens.rotate_right(k % n),
        ReorderRule::SwapAdjacent => {
            for i in (0..n - 1).step_by(2) {
                tokens.swap(i, i + 1);
            }
        }
    }
}

/// Generation parameters for one synthetic language pair.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthLangSpec {
    /// Content tokens per language (excluding reserved ids).
    pub vocab_size: usize,
    /// Seed for the token bijection, independent of the corpus seed.
    pub bijection_seed: u64,
    pub reorder: ReorderRule,
    /// Per-token probability that a B-side token is resampled uniformly.
    pub noise: f64,
    pub len_min: usize,
    pub len_max: usize,
    /// Stopping probability of the truncated geometric length distribution.
    pub len_stop_p: f64,
    /// Successors allowed per Markov context.
    pub branching: usize,
    pub n_bilingual: usize,
    pub n_mono_a: usize,
    pub n_mono_b: usize,
    pub n_valid: usize,
    pub n_test: usize,
}

impl Default for SynthLangSpec {
    fn default() -> Self {
        SynthLangSpec {
            vocab_size: 60,
            bijection_seed: 7,
            reorder: ReorderRule::Reverse,
            noise: 0.1,
            len_min: 3,
            len_max: 12,
            len_stop_p: 0.25,
            branching: 6,
            n_bilingual: 4000,
            n_mono_a: 20000,
            n_mono_b: 20000,
            n_valid: 500,
            n_test: 500,
        }
    }
}

impl SynthLangSpec {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 {
            return Err(Error::InvalidArgument("vocab_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::InvalidArgument(format!(
                "noise must be in [0, 1], got {}",
                self.noise
            )));
        }
        if self.len_min == 0 || self.len_min > self.len_max {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= len_min <= len_max, got {}..{}",
                self.len_min, self.len_max
            )));
        }
        if !(self.len_stop_p > 0.0 && self.len_stop_p <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "len_stop_p must be in (0, 1], got {}",
                self.len_stop_p
            )));
        }
        if self.branching == 0 {
            return Err(Error::InvalidArgument("branching must be positive".into()));
        }
        Ok(())
    }

    fn total_sentences(&self) -> usize {
        self.n_bilingual + self.n_mono_a + self.n_mono_b + self.n_valid + self.n_test
    }

    /// Log probability of a sentence length under the truncated geometric:
    /// after `len_min` tokens the sentence stops with probability
    /// `len_stop_p` per token until `len_max` forces a stop.
    pub fn len_log_prob(&self, len: usize) -> f64 {
        if len < self.len_min || len > self.len_max {
            return f64::NEG_INFINITY;
        }
        let k = len - self.len_min;
        let range = self.len_max - self.len_min;
        let p = self.len_stop_p;
        if k < range {
            (1.0 - p).powi(k as i32).ln() + p.ln()
        } else {
            (1.0 - p).powi(range as i32).ln()
        }
    }

    /// Draws a length; exposed crate-wide for distribution oracles.
    pub(crate) fn sample_len(&self, rng: &mut SeededRng) -> usize {
        let mut len = self.len_min;
        while len < self.len_max && rng.uniform() >= self.len_stop_p {
            len += 1;
        }
        len
    }
}

/// Order-2 Markov chain over content token indices `0..v`.
#[derive(Clone, Debug)]
pub struct MarkovChain {
    v: usize,
    /// P(t0): one row of length v.
    init: Vec<f64>,
    /// P(t1 | t0): row per first token.
    pair: Tensor2D,
    /// P(t | prev2, prev1): row index `prev2 * v + prev1`.
    trans: Tensor2D,
}

impl MarkovChain {
    pub fn generate(v: usize, branching: usize, rng: &mut SeededRng) -> Self {
        let fill_row = |row: &mut [f64], support: usize, rng: &mut SeededRng| {
            let picks = rng.sample_indices(v, support.min(v));
            let mut total = 0.0;
            for &i in &picks {
                let w = 0.25 + rng.uniform();
                row[i] = w;
                total += w;
            }
            for x in row.iter_mut() {
                *x /= total;
            }
        };
        let mut init = vec![0.0; v];
        fill_row(&mut init, (2 * branching).min(v), rng);
        let mut pair = Tensor2D::zeros(v, v);
        for i in 0..v {
            fill_row(pair.row_mut(i), branching, rng);
        }
        let mut trans = Tensor2D::zeros(v * v, v);
        for i in 0..v * v {
            fill_row(trans.row_mut(i), branching, rng);
        }
        MarkovChain { v, init, pair, trans }
    }

    pub fn vocab_size(&self) -> usize {
        self.v
    }

    /// Draws a token sequence of the given length; exposed crate-wide for
    /// distribution oracles.
    pub(crate) fn sample_tokens(&self, len: usize, rng: &mut SeededRng) -> Vec<u32> {
        let mut toks: Vec<usize> = Vec::with_capacity(len);
        for t in 0..len {
            let dist = match t {
                0 => &self.init[..],
                1 => self.pair.row(toks[0]),
                _ => self.trans.row(toks[t - 2] * self.v + toks[t - 1]),
            };
            toks.push(rng.categorical(dist));
        }
        toks.into_iter().map(|t| t as u32).collect()
    }

    /// Log probability of a content-index token sequence under the chain
    /// (length not included).
    pub fn tokens_log_prob(&self, tokens: &[u32]) -> f64 {
        let mut lp = 0.0;
        for (t, &tok) in tokens.iter().enumerate() {
            let tok = tok as usize;
            let p = match t {
                0 => self.init[tok],
                1 => self.pair.get(tokens[0] as usize, tok),
                _ => self
                    .trans
                    .get(tokens[t - 2] as usize * self.v + tokens[t - 1] as usize, tok),
            };
            lp += p.ln();
        }
        lp
    }
}

/// The exact noiseless A<->B transform used to build the corpora.
#[derive(Clone, Debug)]
pub struct GroundTruthMap {
    a_to_b: Vec<u32>,
    b_to_a: Vec<u32>,
    reorder: ReorderRule,
}

impl GroundTruthMap {
    /// The map a spec's generated corpora are built with.
    pub fn from_spec(spec: &SynthLangSpec) -> Self {
        GroundTruthMap::new(spec.vocab_size, spec.bijection_seed, spec.reorder)
    }

    fn new(v: usize, bijection_seed: u64, reorder: ReorderRule) -> Self {
        let mut perm: Vec<u32> = (0..v as u32).collect();
        SeededRng::new(bijection_seed)
            .split_named("token-bijection")
            .shuffle(&mut perm);
        let mut inverse = vec![0u32; v];
        for (a, &b) in perm.iter().enumerate() {
            inverse[b as usize] = a as u32;
        }
        GroundTruthMap {
            a_to_b: perm,
            b_to_a: inverse,
            reorder,
        }
    }

    fn map_content(&self, table: &[u32], s: &Sentence) -> Result<Vec<u32>> {
        s.ids()
            .iter()
            .map(|&id| {
                let idx = (id as usize)
                    .checked_sub(NUM_RESERVED)
                    .filter(|&i| i < table.len())
                    .ok_or(Error::TokenOutOfRange {
                        id,
                        vocab_size: table.len() + NUM_RESERVED,
                    })?;
                Ok(table[idx] + NUM_RESERVED as u32)
            })
            .collect()
    }

    pub fn translate_a_to_b(&self, s: &Sentence) -> Result<Sentence> {
        let mut ids = self.map_content(&self.a_to_b, s)?;
        reorder_forward(self.reorder, &mut ids);
        Sentence::new(ids)
    }

    pub fn translate_b_to_a(&self, s: &Sentence) -> Result<Sentence> {
        let mut ids: Vec<u32> = s.ids().to_vec();
        reorder_inverse(self.reorder, &mut ids);
        let restored = Sentence::new(ids)?;
        Sentence::new(self.map_content(&self.b_to_a, &restored)?)
    }

    /// Two-column TSV: each line holds an A surface token and the B surface
    /// token it maps to, plus a trailing comment line naming the reorder
    /// rule.
    pub fn save_tsv(
        &self,
        vocab_a: &Vocabulary,
        vocab_b: &Vocabulary,
        path: impl AsRef<Path>,
    ) -> Result<()> {
        let mut out = String::new();
        for (a_idx, &b_idx) in self.a_to_b.iter().enumerate() {
            let a_tok = vocab_a.id_to_token((a_idx + NUM_RESERVED) as u32)?;
            let b_tok = vocab_b.id_to_token(b_idx + NUM_RESERVED as u32)?;
            out.push_str(&format!("{a_tok}\t{b_tok}\n"));
        }
        out.push_str(&format!("# reorder\t{}\n", self.reorder));
        fs::write(path, out)?;
        Ok(())
    }
}

/// Everything one generated language pair provides.
#[derive(Clone, Debug)]
pub struct SynthData {
    pub vocab_a: Vocabulary,
    pub vocab_b: Vocabulary,
    pub bilingual: BilingualCorpus,
    pub valid: BilingualCorpus,
    pub test: BilingualCorpus,
    pub mono_a: MonolingualCorpus,
    pub mono_b: MonolingualCorpus,
    pub map: GroundTruthMap,
    pub chain: MarkovChain,
    pub spec: SynthLangSpec,
}

fn token_name(prefix: char, idx: usize, width: usize) -> String {
    format!("{prefix}{idx:0width$}")
}

fn make_vocab(prefix: char, v: usize) -> Result<Vocabulary> {
    let width = (v.saturating_sub(1).max(1)).to_string().len().max(2);
    Vocabulary::from_tokens((0..v).map(|i| token_name(prefix, i, width)).collect())
}

/// Number of distinct A sentences the chain can emit, saturating. Only a
/// crude upper bound is needed to reject impossible corpus sizes early.
fn reachable_sentences(spec: &SynthLangSpec) -> u128 {
    let v = spec.vocab_size as u128;
    let b = (spec.branching as u128).min(v);
    let first = (2 * spec.branching as u128).min(v);
    let mut total: u128 = 0;
    for len in spec.len_min..=spec.len_max {
        let mut count = first;
        for _ in 1..len {
            count = count.saturating_mul(b);
        }
        total = total.saturating_add(count);
    }
    total
}

/// Generates the full language pair deterministically from `seed`. All
/// splits are disjoint: no A sentence appears twice anywhere (the unseen A
/// sources behind `mono_b` included), and `mono_b` never repeats a B side
/// seen in the parallel splits.
pub fn gen_language_pair(spec: &SynthLangSpec, seed: u64) -> Result<SynthData> {
    spec.validate()?;
    let needed = spec.total_sentences() as u128;
    let capacity = reachable_sentences(spec);
    if needed * 4 > capacity {
        return Err(Error::Capacity(format!(
            "requested {needed} sentences but the language only has about {capacity} distinct ones"
        )));
    }

    let root = SeededRng::new(seed);
    let chain = MarkovChain::generate(
        spec.vocab_size,
        spec.branching,
        &mut root.split_named("markov-chain"),
    );
    let map = GroundTruthMap::new(spec.vocab_size, spec.bijection_seed, spec.reorder);
    let vocab_a = make_vocab('a', spec.vocab_size)?;
    let vocab_b = make_vocab('b', spec.vocab_size)?;

    let mut sent_rng = root.split_named("sentences");
    let mut noise_rng = root.split_named("noise");

    let attempt_cap = 200 * spec.total_sentences() + 10_000;
    let mut attempts = 0usize;
    let mut used_a: HashSet<Vec<u32>> = HashSet::new();

    let next_unique_a = |rng: &mut SeededRng,
                             used: &mut HashSet<Vec<u32>>,
                             attempts: &mut usize|
     -> Result<Sentence> {
        loop {
            *attempts += 1;
            if *attempts > attempt_cap {
                return Err(Error::Capacity(
                    "could not generate enough distinct sentences; shrink the corpus or grow the language".into(),
                ));
            }
            let len = spec.sample_len(rng);
            let toks = chain.sample_tokens(len, rng);
            if used.insert(toks.clone()) {
                let ids = toks.into_iter().map(|t| t + NUM_RESERVED as u32).collect();
                return Sentence::new(ids);
            }
        }
    };

    let noisy_b = |a: &Sentence, rng: &mut SeededRng| -> Result<Sentence> {
        let clean = map.translate_a_to_b(a)?;
        if spec.noise == 0.0 {
            return Ok(clean);
        }
        let ids = clean
            .ids()
            .iter()
            .map(|&id| {
                if rng.uniform() < spec.noise {
                    rng.index(spec.vocab_size) as u32 + NUM_RESERVED as u32
                } else {
                    id
                }
            })
            .collect();
        Sentence::new(ids)
    };

    let gen_pairs = |n: usize,
                         sent_rng: &mut SeededRng,
                         noise_rng: &mut SeededRng,
                         used: &mut HashSet<Vec<u32>>,
                         attempts: &mut usize|
     -> Result<Vec<(Sentence, Sentence)>> {
        let mut pairs = Vec::with_capacity(n);
        for _ in 0..n {
            let a = next_unique_a(sent_rng, used, attempts)?;
            let b = noisy_b(&a, noise_rng)?;
            pairs.push((a, b));
        }
        Ok(pairs)
    };

    let bilingual = BilingualCorpus {
        pairs: gen_pairs(spec.n_bilingual, &mut sent_rng, &mut noise_rng, &mut used_a, &mut attempts)?,
    };
    let valid = BilingualCorpus {
        pairs: gen_pairs(spec.n_valid, &mut sent_rng, &mut noise_rng, &mut used_a, &mut attempts)?,
    };
    let test = BilingualCorpus {
        pairs: gen_pairs(spec.n_test, &mut sent_rng, &mut noise_rng, &mut used_a, &mut attempts)?,
    };

    let mut mono_a_sents = Vec::with_capacity(spec.n_mono_a);
    for _ in 0..spec.n_mono_a {
        mono_a_sents.push(next_unique_a(&mut sent_rng, &mut used_a, &mut attempts)?);
    }

    let mut seen_b: HashSet<Vec<u32>> = bilingual
        .pairs
        .iter()
        .chain(&valid.pairs)
        .chain(&test.pairs)
        .map(|(_, b)| b.ids().to_vec())
        .collect();
    let mut mono_b_sents = Vec::with_capacity(spec.n_mono_b);
    while mono_b_sents.len() < spec.n_mono_b {
        let a = next_unique_a(&mut sent_rng, &mut used_a, &mut attempts)?;
        let b = noisy_b(&a, &mut noise_rng)?;
        if seen_b.insert(b.ids().to_vec()) {
            mono_b_sents.push(b);
        }
    }

    Ok(SynthData {
        vocab_a,
        vocab_b,
        bilingual,
        valid,
        test,
        mono_a: MonolingualCorpus {
            lang: LangTag::A,
            sentences: mono_a_sents,
        },
        mono_b: MonolingualCorpus {
            lang: LangTag::B,
            sentences: mono_b_sents,
        },
        map,
        chain,
        spec: spec.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tiny_spec() -> SynthLangSpec {
        SynthLangSpec {
            vocab_size: 12,
            bijection_seed: 3,
            reorder: ReorderRule::Reverse,
            noise: 0.0,
            len_min: 2,
            len_max: 6,
            len_stop_p: 0.3,
            branching: 4,
            n_bilingual: 60,
            n_mono_a: 80,
            n_mono_b: 80,
            n_valid: 20,
            n_test: 20,
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = tiny_spec();
        let d1 = gen_language_pair(&spec, 11).unwrap();
        let d2 = gen_language_pair(&spec, 11).unwrap();
        assert_eq!(d1.bilingual.pairs, d2.bilingual.pairs);
        assert_eq!(d1.mono_a.sentences, d2.mono_a.sentences);
        assert_eq!(d1.mono_b.sentences, d2.mono_b.sentences);
        let d3 = gen_language_pair(&spec, 12).unwrap();
        assert_ne!(d1.bilingual.pairs, d3.bilingual.pairs);
    }

    #[test]
    fn splits_are_disjoint_and_sized() {
        let spec = tiny_spec();
        let d = gen_language_pair(&spec, 5).unwrap();
        assert_eq!(d.bilingual.len(), 60);
        assert_eq!(d.valid.len(), 20);
        assert_eq!(d.test.len(), 20);
        assert_eq!(d.mono_a.sentences.len(), 80);
        assert_eq!(d.mono_b.sentences.len(), 80);
        let mut all_a: Vec<&Sentence> = d
            .bilingual
            .pairs
            .iter()
            .chain(&d.valid.pairs)
            .chain(&d.test.pairs)
            .map(|(a, _)| a)
            .chain(&d.mono_a.sentences)
            .collect();
        let total = all_a.len();
        all_a.sort_by(|x, y| x.ids().cmp(y.ids()));
        all_a.dedup_by(|x, y| x.ids() == y.ids());
        assert_eq!(all_a.len(), total, "duplicate A sentence across splits");
    }

    #[test]
    fn noiseless_pairs_match_ground_truth() {
        let spec = tiny_spec();
        let d = gen_language_pair(&spec, 9).unwrap();
        for (a, b) in &d.bilingual.pairs {
            assert_eq!(&d.map.translate_a_to_b(a).unwrap(), b);
            assert_eq!(&d.map.translate_b_to_a(b).unwrap(), a);
        }
    }

    #[test]
    fn noise_corrupts_roughly_the_stated_fraction() {
        let mut spec = tiny_spec();
        spec.noise = 0.2;
        spec.n_bilingual = 400;
        spec.vocab_size = 30;
        let d = gen_language_pair(&spec, 9).unwrap();
        let mut toks = 0usize;
        let mut changed = 0usize;
        for (a, b) in &d.bilingual.pairs {
            let clean = d.map.translate_a_to_b(a).unwrap();
            toks += b.len();
            changed += clean
                .ids()
                .iter()
                .zip(b.ids())
                .filter(|(x, y)| x != y)
                .count();
        }
        // Effective change rate is noise * (1 - 1/v).
        let expect = 0.2 * (1.0 - 1.0 / 30.0);
        let rate = changed as f64 / toks as f64;
        assert!((rate - expect).abs() < 0.03, "rate {rate}, expect {expect}");
    }

    #[test]
    fn raw_length_sampler_matches_truncated_geometric() {
        let spec = SynthLangSpec::default();
        let mut rng = SeededRng::new(31);
        let n = 20_000;
        let lens: Vec<usize> = (0..n).map(|_| spec.sample_len(&mut rng)).collect();
        assert!(lens.iter().all(|&l| (3..=12).contains(&l)));
        // Closed-form mean, and per-length frequencies against the pmf.
        let p = spec.len_stop_p;
        let range = (spec.len_max - spec.len_min) as i32;
        let mean_expect =
            spec.len_min as f64 + (1.0 - p) * (1.0 - (1.0 - p).powi(range)) / p;
        let mean: f64 = lens.iter().sum::<usize>() as f64 / n as f64;
        assert!((mean - mean_expect).abs() < 0.06, "mean {mean} vs {mean_expect}");
        for len in spec.len_min..=spec.len_max {
            let freq = lens.iter().filter(|&&l| l == len).count() as f64 / n as f64;
            let expect = spec.len_log_prob(len).exp();
            let sigma = (expect * (1.0 - expect) / n as f64).sqrt();
            assert!(
                (freq - expect).abs() < 4.0 * sigma + 1e-3,
                "len {len}: freq {freq} vs pmf {expect}"
            );
        }
    }

    #[test]
    fn corpus_lengths_stay_in_bounds() {
        // Dedup biases kept lengths upward (short sentences collide more),
        // so only the hard bounds are asserted on the corpus itself.
        let spec = SynthLangSpec {
            n_bilingual: 2000,
            n_mono_a: 0,
            n_mono_b: 0,
            n_valid: 0,
            n_test: 0,
            ..SynthLangSpec::default()
        };
        let d = gen_language_pair(&spec, 31).unwrap();
        assert!(d
            .bilingual
            .pairs
            .iter()
            .all(|(a, _)| (3..=12).contains(&a.len())));
        // B sides keep A lengths.
        assert!(d.bilingual.pairs.iter().all(|(a, b)| a.len() == b.len()));
    }

    #[test]
    fn chain_with_length_model_is_a_probability_distribution() {
        // Enumerate every token sequence of every legal length and check the
        // total probability mass is 1.
        let spec = SynthLangSpec {
            vocab_size: 3,
            len_min: 1,
            len_max: 3,
            len_stop_p: 0.4,
            branching: 2,
            ..tiny_spec()
        };
        let chain = MarkovChain::generate(3, 2, &mut SeededRng::new(17).split_named("markov-chain"));
        let mut mass = 0.0;
        for len in 1..=3usize {
            let mut seq = vec![0u32; len];
            loop {
                let lp = chain.tokens_log_prob(&seq) + spec.len_log_prob(len);
                if lp.is_finite() {
                    mass += lp.exp();
                }
                // Odometer increment over the token alphabet.
                let mut pos = 0;
                loop {
                    if pos == len {
                        break;
                    }
                    seq[pos] += 1;
                    if seq[pos] < 3 {
                        break;
                    }
                    seq[pos] = 0;
                    pos += 1;
                }
                if pos == len {
                    break;
                }
            }
        }
        assert!((mass - 1.0).abs() < 1e-9, "total mass {mass}");
    }

    #[test]
    fn capacity_overflow_is_rejected() {
        let spec = SynthLangSpec {
            vocab_size: 2,
            branching: 1,
            len_min: 1,
            len_max: 2,
            n_bilingual: 500,
            ..tiny_spec()
        };
        assert!(matches!(
            gen_language_pair(&spec, 1),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn mono_b_avoids_parallel_b_sides() {
        let mut spec = tiny_spec();
        spec.noise = 0.1;
        let d = gen_language_pair(&spec, 23).unwrap();
        let parallel_b: HashSet<&[u32]> = d
            .bilingual
            .pairs
            .iter()
            .chain(&d.valid.pairs)
            .chain(&d.test.pairs)
            .map(|(_, b)| b.ids())
            .collect();
        assert!(d
            .mono_b
            .sentences
            .iter()
            .all(|b| !parallel_b.contains(b.ids())));
    }

    proptest! {
        #[test]
        fn ground_truth_roundtrips(seed in 0u64..500, len in 1usize..9) {
            let map = GroundTruthMap::new(10, seed, ReorderRule::Rotate(3));
            let mut rng = SeededRng::new(seed ^ 0xabc);
            let ids: Vec<u32> = (0..len).map(|_| rng.index(10) as u32 + 4).collect();
            let s = Sentence::new(ids).unwrap();
            let b = map.translate_a_to_b(&s).unwrap();
            prop_assert_eq!(map.translate_b_to_a(&b).unwrap(), s);
        }

        #[test]
        fn reorder_rules_roundtrip(rule_pick in 0usize..3, k in 0usize..7, len in 0usize..8) {
            let rule = match rule_pick {
                0 => ReorderRule::Reverse,
                1 => ReorderRule::Rotate(k),
                _ => ReorderRule::SwapAdjacent,
            };
            let orig: Vec<u32> = (0..len as u32).collect();
            let mut v = orig.clone();
            reorder_forward(rule, &mut v);
            // A reorder is a permutation.
            let mut sorted = v.clone();
            sorted.sort_unstable();
            prop_assert_eq!(&sorted, &orig);
            reorder_inverse(rule, &mut v);
            prop_assert_eq!(v, orig);
        }
    }

    #[test]
    fn reorder_rule_parsing_roundtrips() {
        for rule in [
            ReorderRule::Reverse,
            ReorderRule::Rotate(4),
            ReorderRule::SwapAdjacent,
        ] {
            let parsed: ReorderRule = rule.to_string().parse().unwrap();
            assert_eq!(parsed, rule);
        }
        assert!("spin".parse::<ReorderRule>().is_err());
    }
}
