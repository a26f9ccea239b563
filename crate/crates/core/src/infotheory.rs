//! Announcement probabilities and the eavesdropper's information about the
//! message bit.
//!
//! All information quantities are in bits and use the convention 0·log 0 = 0.
//! Eve describes every incoming particle as ½I, so the state Alice measures is
//! `Π(½I)`, i.e. the offset of the effective evolution.
//!
//! Three exact routes are provided:
//! - [`mutual_info_direct`] enumerates all 8^N announcement strings;
//! - [`mutual_info_factored`] splits the information by the number of
//!   bit-announcements and averages over the shots that carry them;
//! - [`grouped_bit_mi`] evaluates the information of a bit-announcement
//!   string from per-shot laws by a dynamic program over likelihood-ratio
//!   exponents, which is what the exposure search uses.

use std::collections::HashMap;

use itertools::Itertools;
use rand::Rng;
use statrs::distribution::{Binomial, Discrete};
use statrs::function::factorial::{ln_binomial, ln_factorial};

use crate::adversary::{shot_distribution, EvolutionString, Strategy};
use crate::error::{Error, Result};
use crate::protocol::{Announcement, Bit};
use crate::qubit::{expectation, EffectiveEvolution, QubitState};

/// Enumeration limits. Exceeding one is an error, never a truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnumerationCaps {
    /// Largest N accepted by [`mutual_info_direct`] (8^N strings).
    pub direct_max_shots: usize,
    /// Largest k accepted by [`bit_string_mi`] (4^k strings).
    pub bit_max_len: usize,
    /// Largest N accepted by [`mutual_info_factored`].
    pub factored_max_shots: usize,
}

impl Default for EnumerationCaps {
    fn default() -> Self {
        Self { direct_max_shots: 8, bit_max_len: 10, factored_max_shots: 12 }
    }
}

/// Probability that Alice makes announcement `ann` when the particle,
/// described by `prior` going in, undergoes `evo`, for message bit `b`.
pub fn announcement_prob(ann: &Announcement, evo: &EffectiveEvolution, prior: &QubitState, b: Bit, p_a: f64) -> f64 {
    let received = evo.apply(prior);
    match *ann {
        Announcement::Bit { basis, c } => {
            let sign = if c == Bit::Zero { 1.0 } else { -1.0 };
            p_a / 4.0 * (1.0 + sign * b.sign() * expectation(basis, &received))
        }
        Announcement::Result { basis, m } => (1.0 - p_a) / 4.0 * (1.0 + m.sign() * expectation(basis, &received)),
        Announcement::Null => 0.0,
    }
}

/// The eight announcement probabilities for one shot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnouncementDistribution {
    probs: [f64; 8],
}

impl AnnouncementDistribution {
    pub fn new(evo: &EffectiveEvolution, prior: &QubitState, b: Bit, p_a: f64) -> Self {
        let mut probs = [0.0; 8];
        for (p, ann) in probs.iter_mut().zip(Announcement::ALL.iter()) {
            *p = announcement_prob(ann, evo, prior, b, p_a);
        }
        Self { probs }
    }

    /// Indexed as [`Announcement::ALL`].
    pub fn probs(&self) -> &[f64; 8] {
        &self.probs
    }

    pub fn get(&self, ann: &Announcement) -> f64 {
        ann.index().map_or(0.0, |i| self.probs[i])
    }
}

/// Probability of a whole announcement string: the product of the per-shot
/// probabilities.
pub fn string_prob(
    announcements: &[Announcement],
    b: Bit,
    s: &EvolutionString,
    priors: &[QubitState],
    p_a: f64,
) -> Result<f64> {
    let n = announcements.len();
    if s.len() != n {
        return Err(Error::LengthMismatch { expected: n, found: s.len() });
    }
    if priors.len() != n {
        return Err(Error::LengthMismatch { expected: n, found: priors.len() });
    }
    Ok(announcements
        .iter()
        .zip(&s.evolutions)
        .zip(priors)
        .map(|((a, evo), rho)| announcement_prob(a, evo, rho, b, p_a))
        .product())
}

/// How a mutual-information value was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MiMethod {
    ExactDirect,
    ExactFactored,
    MonteCarlo { samples: usize, stderr: f64 },
}

impl MiMethod {
    pub fn name(&self) -> &'static str {
        match self {
            MiMethod::ExactDirect => "direct",
            MiMethod::ExactFactored => "factored",
            MiMethod::MonteCarlo { .. } => "mc",
        }
    }

    pub fn stderr(&self) -> f64 {
        match self {
            MiMethod::MonteCarlo { stderr, .. } => *stderr,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MutualInformationResult {
    /// Bits.
    pub value: f64,
    pub method: MiMethod,
}

fn xlog2x(x: f64) -> f64 {
    if x > 0.0 {
        x * x.log2()
    } else {
        0.0
    }
}

/// Σ_b ½ Σ_a P_b log P_b − Σ_a P log P over all strings of per-shot symbols,
/// where `laws[i][b][s]` is the probability of symbol `s` on shot `i`.
fn enumerate_mi<const M: usize>(laws: &[[[f64; M]; 2]]) -> f64 {
    fn walk<const M: usize>(laws: &[[[f64; M]; 2]], p0: f64, p1: f64, acc: &mut f64) {
        match laws.split_first() {
            None => {
                let p = 0.5 * (p0 + p1);
                *acc += 0.5 * xlog2x(p0) + 0.5 * xlog2x(p1) - xlog2x(p);
            }
            Some((shot, rest)) => {
                for (a0, a1) in shot[0].iter().zip(&shot[1]) {
                    let (q0, q1) = (p0 * a0, p1 * a1);
                    if q0 > 0.0 || q1 > 0.0 {
                        walk(rest, q0, q1, acc);
                    }
                }
            }
        }
    }
    let mut acc = 0.0;
    walk(laws, 1.0, 1.0, &mut acc);
    acc
}

fn eve_prior() -> QubitState {
    QubitState::maximally_mixed()
}

/// Eve's information about the message from the full announcement string,
/// by enumeration of all 8^N strings.
pub fn mutual_info_direct(s: &EvolutionString, p_a: f64) -> Result<MutualInformationResult> {
    mutual_info_direct_with(s, p_a, &EnumerationCaps::default())
}

pub fn mutual_info_direct_with(s: &EvolutionString, p_a: f64, caps: &EnumerationCaps) -> Result<MutualInformationResult> {
    check_p_a(p_a)?;
    if s.len() > caps.direct_max_shots {
        return Err(Error::Explosion { required: 8f64.powi(s.len() as i32), cap: 8f64.powi(caps.direct_max_shots as i32) });
    }
    let prior = eve_prior();
    let laws: Vec<[[f64; 8]; 2]> = s
        .evolutions
        .iter()
        .map(|evo| {
            [
                *AnnouncementDistribution::new(evo, &prior, Bit::Zero, p_a).probs(),
                *AnnouncementDistribution::new(evo, &prior, Bit::One, p_a).probs(),
            ]
        })
        .collect();
    Ok(MutualInformationResult { value: enumerate_mi(&laws), method: MiMethod::ExactDirect })
}

/// Per-shot law of a bit-announcement given that one is made: the Table II
/// bit rows divided by p_a, over the symbols (σ₁,0), (σ₁,1), (σ₃,0), (σ₃,1).
fn bit_symbol_law(evo: &EffectiveEvolution) -> [[f64; 4]; 2] {
    let rho = evo.apply(&eve_prior());
    let x = expectation(crate::qubit::PauliAxis::X, &rho);
    let z = expectation(crate::qubit::PauliAxis::Z, &rho);
    let law = |sign: f64| [0.25 * (1.0 + sign * x), 0.25 * (1.0 - sign * x), 0.25 * (1.0 + sign * z), 0.25 * (1.0 - sign * z)];
    [law(1.0), law(-1.0)]
}

/// Information between the message and a string of bit-announcements made
/// on the shots of `t`, by enumeration of all 4^k strings.
pub fn bit_string_mi(t: &EvolutionString) -> Result<f64> {
    bit_string_mi_with(t, &EnumerationCaps::default())
}

pub fn bit_string_mi_with(t: &EvolutionString, caps: &EnumerationCaps) -> Result<f64> {
    if t.len() > caps.bit_max_len {
        return Err(Error::Explosion { required: 4f64.powi(t.len() as i32), cap: 4f64.powi(caps.bit_max_len as i32) });
    }
    let laws: Vec<[[f64; 4]; 2]> = t.evolutions.iter().map(bit_symbol_law).collect();
    Ok(enumerate_mi(&laws))
}

/// What a bit-announcement on one shot can reveal: |Tr(σ₁ρ′)| and
/// |Tr(σ₃ρ′)| with ρ′ = Π(½I), sorted so that `lo ≤ hi`.
///
/// Flipping the sign of either component, or exchanging them, relabels the
/// symbols of that shot and leaves every information quantity unchanged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BitLaw {
    pub lo: f64,
    pub hi: f64,
}

/// Hashable identity of a [`BitLaw`] (components on a 1e−12 grid).
pub type LawKey = (i64, i64);

const LAW_GRID: f64 = 1e12;
const REVEAL_TOL: f64 = 1e-12;

impl BitLaw {
    pub fn of(evo: &EffectiveEvolution) -> Self {
        let rho = evo.apply(&eve_prior());
        Self::from_components(rho.bloch()[0], rho.bloch()[2])
    }

    pub fn from_components(x: f64, z: f64) -> Self {
        let (a, b) = (x.abs().min(1.0), z.abs().min(1.0));
        Self { lo: a.min(b), hi: a.max(b) }
    }

    pub fn is_null(&self) -> bool {
        self.hi < 1.0 / LAW_GRID
    }

    pub fn key(&self) -> LawKey {
        ((self.lo * LAW_GRID).round() as i64, (self.hi * LAW_GRID).round() as i64)
    }
}

/// Information between the message and a string of bit-announcements whose
/// shots follow the given laws (with multiplicities).
///
/// By the symmetry b ↔ 1−b (flip every announced bit) the information equals
/// 1 − E_{b=0}[log₂(1 + P₁/P₀)]. The log-ratio log(P₁/P₀) is an integer
/// combination of the per-axis constants log((1−t)/(1+t)), so the expectation
/// is a sum over integer exponent vectors, built shot by shot.
pub fn grouped_bit_mi(laws: &[(BitLaw, usize)]) -> f64 {
    let mut slot_mu: Vec<f64> = Vec::new();
    // Axes with equal t share a slot: their log-ratio steps are identical.
    let mut slot_of: HashMap<i64, usize> = HashMap::new();
    // Per law: for each of its two axes, (t, slot) where slot is None for an
    // uninformative (t = 0) or fully revealing (t = 1) axis.
    type AxisSlot = (f64, Option<usize>);
    let mut plan: Vec<([AxisSlot; 2], usize)> = Vec::new();
    for (law, count) in laws {
        if *count == 0 || law.is_null() {
            continue;
        }
        let mut axes = [(0.0, None); 2];
        for (axis, t) in axes.iter_mut().zip([law.lo, law.hi]) {
            let slot = if t > 1.0 / LAW_GRID && t < 1.0 - REVEAL_TOL {
                let slot = *slot_of.entry((t * LAW_GRID).round() as i64).or_insert_with(|| {
                    slot_mu.push(((1.0 - t) / (1.0 + t)).ln());
                    slot_mu.len() - 1
                });
                Some(slot)
            } else {
                None
            };
            *axis = (t, slot);
        }
        plan.push((axes, *count));
    }

    let mut states: HashMap<Vec<i32>, f64> = HashMap::from([(vec![0; slot_mu.len()], 1.0)]);
    for (axes, count) in &plan {
        for _ in 0..*count {
            let mut next: HashMap<Vec<i32>, f64> = HashMap::with_capacity(states.len() * 2);
            for (key, p) in &states {
                for &(t, slot) in axes {
                    match slot {
                        Some(i) => {
                            let mut agree = key.clone();
                            agree[i] += 1;
                            *next.entry(agree).or_default() += p * 0.25 * (1.0 + t);
                            let mut disagree = key.clone();
                            disagree[i] -= 1;
                            *next.entry(disagree).or_default() += p * 0.25 * (1.0 - t);
                        }
                        // Revealing axis: the agreeing symbol pins b (ratio 0,
                        // contributes nothing below); the other has probability 0.
                        None if t >= 1.0 - REVEAL_TOL => {}
                        None => *next.entry(key.clone()).or_default() += p * 0.5,
                    }
                }
            }
            states = next;
        }
    }

    let expected_penalty: f64 = states
        .iter()
        .map(|(key, p)| {
            let log_ratio: f64 = key.iter().zip(&slot_mu).map(|(k, mu)| f64::from(*k) * mu).sum();
            p * softplus(log_ratio) / std::f64::consts::LN_2
        })
        .sum();
    (1.0 - expected_penalty).clamp(0.0, 1.0)
}

/// ln(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Memo of [`grouped_bit_mi`] keyed on the multiset of laws.
#[derive(Debug, Default)]
pub struct BitInfoCache {
    memo: HashMap<Vec<(LawKey, usize)>, f64>,
    laws: HashMap<LawKey, BitLaw>,
}

impl BitInfoCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, law: BitLaw) -> LawKey {
        let key = law.key();
        self.laws.entry(key).or_insert(law);
        key
    }

    /// Information for a multiset given as (law key, count) pairs; null laws
    /// and zero counts are ignored.
    pub fn info(&mut self, multiset: &[(LawKey, usize)]) -> f64 {
        let mut canon: Vec<(LawKey, usize)> = multiset
            .iter()
            .filter(|(k, c)| *c > 0 && *k != (0, 0))
            .copied()
            .collect();
        canon.sort_unstable();
        if canon.is_empty() {
            return 0.0;
        }
        if let Some(v) = self.memo.get(&canon) {
            return *v;
        }
        let laws: Vec<(BitLaw, usize)> = canon
            .iter()
            .map(|(k, c)| (self.laws.get(k).copied().unwrap_or(BitLaw { lo: k.0 as f64 / LAW_GRID, hi: k.1 as f64 / LAW_GRID }), *c))
            .collect();
        let v = grouped_bit_mi(&laws);
        self.memo.insert(canon, v);
        v
    }

    pub fn len(&self) -> usize {
        self.memo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.memo.is_empty()
    }
}

/// (1/C(N,k)) Σ_T I_T over all k-shot subsets T of `s`, computed by counting
/// how many subsets share each multiset of laws.
pub fn averaged_bit_mi(s: &EvolutionString, k: usize, cache: &mut BitInfoCache) -> Result<f64> {
    let n = s.len();
    if k > n {
        return Err(Error::Domain(format!("k = {k} exceeds string length {n}")));
    }
    let mut counts: HashMap<LawKey, usize> = HashMap::new();
    for evo in &s.evolutions {
        let key = cache.register(BitLaw::of(evo));
        *counts.entry(key).or_default() += 1;
    }
    let null = counts.remove(&(0, 0)).unwrap_or(0);
    let groups: Vec<(LawKey, usize)> = counts.into_iter().sorted().collect();
    Ok(average_over_subsets(&groups, null, k, |multiset| cache.info(multiset)))
}

/// Σ over sub-multisets c (|c| = k, c_j ≤ n_j, remainder from the null group)
/// of Π C(n_j, c_j)·C(null, rest)/C(N, k) · f(c).
pub(crate) fn average_over_subsets<K: Copy, F: FnMut(&[(K, usize)]) -> f64>(
    groups: &[(K, usize)],
    null: usize,
    k: usize,
    mut f: F,
) -> f64 {
    let n: usize = null + groups.iter().map(|(_, c)| c).sum::<usize>();
    let ln_total = ln_binomial(n as u64, k as u64);
    let mut chosen: Vec<(K, usize)> = Vec::with_capacity(groups.len());
    let mut acc = 0.0;
    fn rec<K: Copy, F: FnMut(&[(K, usize)]) -> f64>(
        groups: &[(K, usize)],
        remaining: usize,
        null: usize,
        ln_weight: f64,
        ln_total: f64,
        chosen: &mut Vec<(K, usize)>,
        f: &mut F,
        acc: &mut f64,
    ) {
        match groups.split_first() {
            None => {
                if remaining <= null {
                    let w = ln_weight + ln_binomial(null as u64, remaining as u64) - ln_total;
                    *acc += w.exp() * f(chosen);
                }
            }
            Some(((key, count), rest)) => {
                for c in 0..=(*count).min(remaining) {
                    chosen.push((*key, c));
                    rec(rest, remaining - c, null, ln_weight + ln_binomial(*count as u64, c as u64), ln_total, chosen, f, acc);
                    chosen.pop();
                }
            }
        }
    }
    rec(groups, k, null, 0.0, ln_total, &mut chosen, &mut f, &mut acc);
    acc
}

/// Eve's information by the bit-announcement decomposition:
/// Σ_k p_a^k (1−p_a)^(N−k) Σ_T I_T, iterating the C(N,k) subsets T lazily
/// and memoizing I_T by the multiset of laws it contains.
pub fn mutual_info_factored(s: &EvolutionString, p_a: f64) -> Result<MutualInformationResult> {
    mutual_info_factored_with(s, p_a, &EnumerationCaps::default())
}

pub fn mutual_info_factored_with(s: &EvolutionString, p_a: f64, caps: &EnumerationCaps) -> Result<MutualInformationResult> {
    check_p_a(p_a)?;
    let n = s.len();
    if n > caps.factored_max_shots {
        return Err(Error::Explosion { required: 5f64.powi(n as i32), cap: 5f64.powi(caps.factored_max_shots as i32) });
    }
    let mut cache = BitInfoCache::new();
    let keys: Vec<LawKey> = s.evolutions.iter().map(|e| cache.register(BitLaw::of(e))).collect();
    let mut total = 0.0;
    for k in 0..=n {
        let weight = p_a.powi(k as i32) * (1.0 - p_a).powi((n - k) as i32);
        if weight == 0.0 {
            continue;
        }
        let mut sum_t = 0.0;
        for subset in (0..n).combinations(k) {
            let multiset: Vec<(LawKey, usize)> = subset
                .iter()
                .map(|&i| keys[i])
                .sorted()
                .dedup_with_count()
                .map(|(c, key)| (key, c))
                .collect();
            sum_t += cache.info(&multiset);
        }
        total += weight * sum_t;
    }
    Ok(MutualInformationResult { value: total, method: MiMethod::ExactFactored })
}

/// Monte Carlo estimate of Eve's information: draws b and an announcement
/// string, and averages the pointwise information log₂(2P_b/(P₀+P₁)),
/// evaluated exactly from the per-shot probabilities.
pub fn mutual_info_mc<R: Rng + ?Sized>(
    s: &EvolutionString,
    p_a: f64,
    samples: usize,
    rng: &mut R,
) -> Result<MutualInformationResult> {
    check_p_a(p_a)?;
    if samples < 1000 {
        return Err(Error::Domain(format!("Monte Carlo needs at least 1000 samples, got {samples}")));
    }
    let laws: Vec<[[f64; 8]; 2]> = s.evolutions.iter().map(|evo| announcement_laws(evo, p_a)).collect();
    let mut stats = Welford::default();
    for _ in 0..samples {
        stats.push(pointwise_info(&laws, rng));
    }
    Ok(stats.result(samples))
}

fn announcement_laws(evo: &EffectiveEvolution, p_a: f64) -> [[f64; 8]; 2] {
    let prior = eve_prior();
    [
        *AnnouncementDistribution::new(evo, &prior, Bit::Zero, p_a).probs(),
        *AnnouncementDistribution::new(evo, &prior, Bit::One, p_a).probs(),
    ]
}

/// Draws b and an announcement string from per-shot laws and returns
/// log₂(2P_b/(P₀+P₁)) for the drawn string.
fn pointwise_info<R: Rng + ?Sized>(laws: &[[[f64; 8]; 2]], rng: &mut R) -> f64 {
    let b = rng.random::<bool>() as usize;
    let other = 1 - b;
    // ln(P_other / P_b), −∞ once the string rules out the other bit.
    let mut log_ratio = 0.0f64;
    for shot in laws {
        let symbol = sample_index(&shot[b], rng);
        log_ratio += shot[other][symbol].ln() - shot[b][symbol].ln();
    }
    1.0 - softplus(log_ratio) / std::f64::consts::LN_2
}

/// Index drawn from a probability vector; zero-mass entries are never chosen.
fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let draw: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            acc += p;
            last = i;
            if draw < acc {
                return i;
            }
        }
    }
    last
}

#[derive(Default)]
struct Welford {
    mean: f64,
    m2: f64,
    n: usize,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn result(&self, samples: usize) -> MutualInformationResult {
        let n = self.n as f64;
        let var = if self.n > 1 { self.m2 / (n - 1.0) } else { 0.0 };
        MutualInformationResult { value: self.mean, method: MiMethod::MonteCarlo { samples, stderr: (var / n).sqrt() } }
    }
}

/// Exact route used by [`strategy_mutual_info`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExactRoute {
    Direct,
    Factored,
}

/// Eve's information about the bit averaged over her own measurement
/// record: Σ_S P(S) I_S(A:B), with S the string of realized per-shot
/// evolutions when every shot is attacked by `strategy`.
///
/// The information of a string depends only on the multiset of its
/// per-shot laws, so realized strings are grouped before evaluation.
pub fn strategy_mutual_info(
    strategy: &Strategy,
    n: usize,
    p_a: f64,
    route: ExactRoute,
    caps: &EnumerationCaps,
) -> Result<MutualInformationResult> {
    check_p_a(p_a)?;
    let max = match route {
        ExactRoute::Direct => caps.direct_max_shots,
        ExactRoute::Factored => caps.factored_max_shots,
    };
    if n > max {
        return Err(Error::Explosion { required: n as f64, cap: max as f64 });
    }
    let shot = shot_distribution(strategy, &QubitState::maximally_mixed())?;
    let mut slots: Vec<(LawKey, EffectiveEvolution, f64)> = Vec::new();
    for (evo, w) in shot {
        let key = BitLaw::of(&evo).key();
        match slots.iter_mut().find(|(k, _, _)| *k == key) {
            Some(slot) => slot.2 += w,
            None => slots.push((key, evo, w)),
        }
    }
    let mut total = 0.0;
    let mut method = MiMethod::ExactFactored;
    for counts in multisets(slots.len(), n) {
        let weight = multinomial(&counts, slots.iter().map(|s| s.2));
        if weight == 0.0 {
            continue;
        }
        let evolutions = counts.iter().enumerate().flat_map(|(i, &c)| std::iter::repeat_n(slots[i].1, c)).collect();
        let rep = EvolutionString { evolutions, weight: 1.0 };
        let r = match route {
            ExactRoute::Direct => mutual_info_direct_with(&rep, p_a, caps)?,
            ExactRoute::Factored => mutual_info_factored_with(&rep, p_a, caps)?,
        };
        method = r.method;
        total += weight * r.value;
    }
    Ok(MutualInformationResult { value: total, method })
}

/// Monte Carlo counterpart of [`strategy_mutual_info`]: each sample draws
/// Eve's realized string as well as b and the announcements.
pub fn strategy_mutual_info_mc<R: Rng + ?Sized>(
    strategy: &Strategy,
    n: usize,
    p_a: f64,
    samples: usize,
    rng: &mut R,
) -> Result<MutualInformationResult> {
    check_p_a(p_a)?;
    if samples < 1000 {
        return Err(Error::Domain(format!("Monte Carlo needs at least 1000 samples, got {samples}")));
    }
    let shot = shot_distribution(strategy, &QubitState::maximally_mixed())?;
    let weights: Vec<f64> = shot.iter().map(|(_, w)| *w).collect();
    let laws: Vec<[[f64; 8]; 2]> = shot.iter().map(|(evo, _)| announcement_laws(evo, p_a)).collect();
    let mut drawn = Vec::with_capacity(n);
    let mut stats = Welford::default();
    for _ in 0..samples {
        drawn.clear();
        drawn.extend((0..n).map(|_| laws[sample_index(&weights, rng)]));
        stats.push(pointwise_info(&drawn, rng));
    }
    Ok(stats.result(samples))
}

/// All count vectors of length `slots` summing to `n`.
fn multisets(slots: usize, n: usize) -> Vec<Vec<usize>> {
    (0..slots)
        .combinations_with_replacement(n)
        .map(|pick| {
            let mut counts = vec![0; slots];
            for i in pick {
                counts[i] += 1;
            }
            counts
        })
        .collect()
}

fn multinomial(counts: &[usize], probs: impl Iterator<Item = f64>) -> f64 {
    let n: usize = counts.iter().sum();
    let mut ln = ln_factorial(n as u64);
    for (&c, p) in counts.iter().zip(probs) {
        if c > 0 {
            if p == 0.0 {
                return 0.0;
            }
            ln += c as f64 * p.ln() - ln_factorial(c as u64);
        }
    }
    ln.exp()
}

/// C(N,k) p_a^k (1−p_a)^(N−k): the chance of exactly k bit-announcements.
pub fn binomial_pk(n: usize, k: usize, p_a: f64) -> Result<f64> {
    if k > n {
        return Err(Error::Domain(format!("k = {k} exceeds N = {n}")));
    }
    let dist = Binomial::new(p_a, n as u64).map_err(|e| Error::Domain(format!("binomial: {e}")))?;
    Ok(dist.pmf(k as u64))
}

fn check_p_a(p_a: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p_a) {
        return Err(Error::Domain(format!("p_a must lie in [0, 1], got {p_a}")));
    }
    Ok(())
}
