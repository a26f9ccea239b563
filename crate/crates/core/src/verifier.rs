//! Bob's analysis of a finished session: how well hypothesized eavesdropper
//! behaviour explains the result-announcements he saw, and how much such an
//! eavesdropper could have learned from the bit-announcements.
//!
//! A candidate explanation assigns a [`Hypothesis`] to every non-null shot.
//! A hypothesis has two faces:
//! - `bob_view`, the averaged map Bob must use since he does not see Eve's
//!   outcomes; it enters the likelihood of the result-announcements;
//! - `eve_view`, the distribution over the evolution Eve actually realized
//!   given her ½I description of the particle; it enters her information.
//!
//! The exposure of a candidate is the information about the message carried
//! by k̂ bit-announcements, averaged over all C(N, k̂) placements of them among
//! the N shots and over Eve's realized evolutions. Two search families are
//! offered:
//! - [`SearchFamily::Stationary`] applies one hypothesis to every shot. This
//!   is the default: it models an attacker with a fixed policy and keeps the
//!   candidate set meaningful on clean transcripts.
//! - [`SearchFamily::PerShot`] lets every shot carry its own hypothesis.
//!   Shots holding bit-announcements are unconstrained by the likelihood and
//!   shots whose preparation disagrees with Alice's basis barely are, so this
//!   family finds informative candidates on any transcript and gives a very
//!   pessimistic bound.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_8;
use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{breidbart_direction, shot_distribution, BasisPolicy, EvolutionString, Strategy};
use crate::error::{Error, Result};
use crate::infotheory::{announcement_prob, average_over_subsets, BitInfoCache, BitLaw, LawKey};
use crate::numfmt::Sig12;
use crate::protocol::{matched, Announcement, Bit, ShotRecord};
use crate::qubit::{BlochAxis, EffectiveEvolution, KrausChannel, Provenance, QubitState};

/// The result-announcements of a session together with Bob's preparations.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultEvidence {
    positions: Vec<usize>,
    announcements: Vec<Announcement>,
    priors: Vec<QubitState>,
    bit_count: usize,
    shots: usize,
}

impl ResultEvidence {
    /// `positions[i]` is the index, among the N non-null shots, of the shot
    /// that produced `announcements[i]`.
    pub fn new(
        positions: Vec<usize>,
        announcements: Vec<Announcement>,
        priors: Vec<QubitState>,
        shots: usize,
    ) -> Result<Self> {
        let r = positions.len();
        if announcements.len() != r {
            return Err(Error::LengthMismatch { expected: r, found: announcements.len() });
        }
        if priors.len() != r {
            return Err(Error::LengthMismatch { expected: r, found: priors.len() });
        }
        if r > shots {
            return Err(Error::Domain(format!("{r} result shots exceed N = {shots}")));
        }
        if announcements.iter().any(|a| !a.is_result()) {
            return Err(Error::Domain("evidence may only hold result-announcements".into()));
        }
        if positions.windows(2).any(|w| w[0] >= w[1]) || positions.last().is_some_and(|&p| p >= shots) {
            return Err(Error::Domain("result positions must be increasing and below N".into()));
        }
        Ok(Self { positions, announcements, priors, bit_count: shots - r, shots })
    }

    /// Collects the result shots of a transcript; null shots are dropped and
    /// do not count towards N.
    pub fn from_records(records: &[ShotRecord]) -> Result<Self> {
        let live: Vec<&ShotRecord> = records.iter().filter(|r| !r.announcement.is_null()).collect();
        let mut positions = Vec::new();
        let mut announcements = Vec::new();
        let mut priors = Vec::new();
        for (pos, rec) in live.iter().enumerate() {
            if rec.announcement.is_result() {
                positions.push(pos);
                announcements.push(rec.announcement);
                priors.push(rec.prepared.state());
            }
        }
        Self::new(positions, announcements, priors, live.len())
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn announcements(&self) -> &[Announcement] {
        &self.announcements
    }

    pub fn priors(&self) -> &[QubitState] {
        &self.priors
    }

    /// k̂, the number of bit-announcements.
    pub fn bit_count(&self) -> usize {
        self.bit_count
    }

    /// N, the number of non-null shots.
    pub fn shots(&self) -> usize {
        self.shots
    }

    pub fn result_count(&self) -> usize {
        self.positions.len()
    }
}

fn shot_log_likelihood(ann: &Announcement, evo: &EffectiveEvolution, prior: &QubitState, p_a: f64) -> f64 {
    // Result rows do not depend on the message bit.
    announcement_prob(ann, evo, prior, Bit::Zero, p_a).ln()
}

/// ln Pr(ŷ | U, 𝛒) for evolutions `u` on the result shots only.
pub fn log_result_likelihood(evidence: &ResultEvidence, u: &EvolutionString, p_a: f64) -> Result<f64> {
    if u.len() != evidence.result_count() {
        return Err(Error::LengthMismatch { expected: evidence.result_count(), found: u.len() });
    }
    Ok(evidence
        .announcements
        .iter()
        .zip(&evidence.priors)
        .zip(&u.evolutions)
        .map(|((a, rho), evo)| shot_log_likelihood(a, evo, rho, p_a))
        .sum())
}

/// Pr(ŷ | U, 𝛒), the product of the per-shot result probabilities.
pub fn result_likelihood(evidence: &ResultEvidence, u: &EvolutionString, p_a: f64) -> Result<f64> {
    log_result_likelihood(evidence, u, p_a).map(f64::exp)
}

/// Whether the full-length string `s` lies in Σ(ε), i.e. explains the
/// result-announcements with probability above ε. Compared in log space.
pub fn sigma_member(evidence: &ResultEvidence, s: &EvolutionString, p_a: f64, epsilon: f64) -> Result<bool> {
    if s.len() != evidence.shots() {
        return Err(Error::LengthMismatch { expected: evidence.shots(), found: s.len() });
    }
    let u = EvolutionString::new(evidence.positions.iter().map(|&i| s.evolutions[i]).collect());
    Ok(log_result_likelihood(evidence, &u, p_a)? > epsilon.ln())
}

/// Matched-basis error rate over result-announcements: the fraction of
/// shots measured in the preparation basis whose announced outcome differs
/// from the prepared eigenvalue, and the number of such shots.
pub fn matched_error_rate(records: &[ShotRecord]) -> (f64, usize) {
    let mut n = 0usize;
    let mut errors = 0usize;
    for rec in records {
        if let Announcement::Result { basis, m } = rec.announcement {
            if matched(rec.prepared, basis) {
                n += 1;
                if m != rec.prepared.eigenvalue() {
                    errors += 1;
                }
            }
        }
    }
    let rate = if n == 0 { 0.0 } else { errors as f64 / n as f64 };
    (rate, n)
}

/// One candidate per-shot explanation of what happened to a particle.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub label: String,
    pub bob_view: EffectiveEvolution,
    pub eve_view: Vec<(EffectiveEvolution, f64)>,
}

impl Hypothesis {
    /// A map Eve applies without learning anything new per shot.
    pub fn fixed(label: impl Into<String>, evo: EffectiveEvolution) -> Self {
        Self { label: label.into(), bob_view: evo, eve_view: vec![(evo, 1.0)] }
    }

    pub fn from_strategy(label: impl Into<String>, strategy: &Strategy) -> Result<Self> {
        Ok(Self {
            label: label.into(),
            bob_view: strategy.average_evolution()?,
            eve_view: shot_distribution(strategy, &QubitState::maximally_mixed())?,
        })
    }

    /// True when no realization can inform a bit-announcement.
    pub fn is_silent(&self) -> bool {
        self.eve_view.iter().all(|(e, _)| BitLaw::of(e).is_null())
    }
}

/// The built-in candidate dictionary: the identity, intercept-resend in
/// every shipped basis policy, depolarizing noise on a grid, rotations at
/// π/8 steps about each axis, bit and phase flips, and constant maps to the
/// six axis states and the two Breidbart states.
pub fn default_dictionary() -> Vec<Hypothesis> {
    let mut dict = vec![Hypothesis::fixed("identity", EffectiveEvolution::identity())];
    let strategies = [
        Strategy::InterceptResend(BasisPolicy::Fixed(crate::qubit::PauliAxis::X)),
        Strategy::InterceptResend(BasisPolicy::Fixed(crate::qubit::PauliAxis::Z)),
        Strategy::InterceptResend(BasisPolicy::Random),
        Strategy::InterceptResend(BasisPolicy::Breidbart),
        Strategy::BitFlip(1.0),
        Strategy::PhaseFlip(1.0),
    ];
    for s in &strategies {
        dict.push(Hypothesis::from_strategy(s.to_string(), s).expect("shipped strategy is valid"));
    }
    for lambda in [0.25, 0.5, 0.75, 1.0] {
        let ch = KrausChannel::depolarizing(lambda).expect("grid value in [0, 1]");
        dict.push(Hypothesis::fixed(format!("depolarize lambda={lambda}"), crate::qubit::channel_to_affine(&ch)));
    }
    for axis in [BlochAxis::X, BlochAxis::Y, BlochAxis::Z] {
        for step in 1..16 {
            let angle = step as f64 * FRAC_PI_8;
            let ch = KrausChannel::rotation(axis, angle);
            let name = format!("rotate axis={} angle={angle}", axis_name(axis));
            dict.push(Hypothesis::fixed(name, crate::qubit::channel_to_affine(&ch)));
        }
    }
    let n = breidbart_direction();
    let targets = [
        ("+x", [1.0, 0.0, 0.0]),
        ("-x", [-1.0, 0.0, 0.0]),
        ("+y", [0.0, 1.0, 0.0]),
        ("-y", [0.0, -1.0, 0.0]),
        ("+z", [0.0, 0.0, 1.0]),
        ("-z", [0.0, 0.0, -1.0]),
        ("+breidbart", n),
        ("-breidbart", [-n[0], -n[1], -n[2]]),
    ];
    for (name, r) in targets {
        let state = QubitState::new(r).expect("unit vector");
        dict.push(Hypothesis::fixed(format!("constant {name}"), EffectiveEvolution::constant(state, Provenance::Channel)));
    }
    dict
}

fn axis_name(axis: BlochAxis) -> &'static str {
    match axis {
        BlochAxis::X => "x",
        BlochAxis::Y => "y",
        BlochAxis::Z => "z",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchFamily {
    #[default]
    Stationary,
    PerShot,
}

impl fmt::Display for SearchFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SearchFamily::Stationary => "stationary",
            SearchFamily::PerShot => "per-shot",
        })
    }
}

impl std::str::FromStr for SearchFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stationary" => Ok(SearchFamily::Stationary),
            "per-shot" | "per_shot" | "pershot" => Ok(SearchFamily::PerShot),
            other => Err(Error::Parse(format!("unknown search family {other:?}"))),
        }
    }
}

/// Limits for the per-shot search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchBudget {
    /// Enumerate every assignment when dictionary^N is at most this.
    pub exhaustive_limit: f64,
    pub restarts: usize,
    /// Proposed moves per annealing restart.
    pub steps: usize,
    pub seed: u64,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self { exhaustive_limit: 1e5, restarts: 8, steps: 20_000, seed: 0 }
    }
}

/// How the likelihood level ε is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Absolute(f64),
    /// ε = δ · Pr(ŷ | all-identity). When the identity string cannot explain
    /// the transcript at all, the best likelihood attained in the search
    /// family is used as the reference instead.
    Relative(f64),
}

impl Threshold {
    fn validate(&self) -> Result<()> {
        match *self {
            Threshold::Absolute(e) if e.is_finite() && e >= 0.0 => Ok(()),
            Threshold::Absolute(e) => Err(Error::Domain(format!("epsilon must be a finite non-negative number, got {e}"))),
            Threshold::Relative(d) if d.is_finite() && d > 0.0 => Ok(()),
            Threshold::Relative(d) => Err(Error::Domain(format!("delta must be a finite positive number, got {d}"))),
        }
    }
}

/// Outcome of an exposure search.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureReport {
    pub family: SearchFamily,
    /// ln ε; ε itself underflows for long transcripts.
    pub log_epsilon: f64,
    /// I_E(ε) in bits; a lower bound on the maximum over all strings.
    pub exposure: f64,
    /// Dictionary index per non-null shot.
    pub argmax: Vec<usize>,
    pub argmax_labels: Vec<String>,
    pub argmax_log_likelihood: f64,
    /// Best log-likelihood seen among examined candidates.
    pub best_log_likelihood: f64,
    pub candidates_examined: u64,
    pub wall_time: Duration,
    pub shots: usize,
    pub bit_count: usize,
}

impl ExposureReport {
    pub fn epsilon(&self) -> f64 {
        self.log_epsilon.exp()
    }

    /// The maximizing string as Bob sees it.
    pub fn argmax_string(&self, dictionary: &[Hypothesis]) -> EvolutionString {
        EvolutionString::new(self.argmax.iter().map(|&h| dictionary[h].bob_view).collect())
    }
}

impl fmt::Display for ExposureReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "family={}", self.family)?;
        writeln!(f, "epsilon={}", Sig12(self.epsilon()))?;
        writeln!(f, "log_epsilon={}", Sig12(self.log_epsilon))?;
        writeln!(f, "exposure_bits={}", Sig12(self.exposure))?;
        writeln!(f, "shots={}", self.shots)?;
        writeln!(f, "bit_announcements={}", self.bit_count)?;
        let indices: Vec<String> = self.argmax.iter().map(usize::to_string).collect();
        writeln!(f, "argmax={}", indices.join(","))?;
        let mut labels = self.argmax_labels.clone();
        labels.dedup();
        writeln!(f, "argmax_labels={}", labels.join(";"))?;
        writeln!(f, "argmax_log_likelihood={}", Sig12(self.argmax_log_likelihood))?;
        writeln!(f, "best_log_likelihood={}", Sig12(self.best_log_likelihood))?;
        writeln!(f, "candidates_examined={}", self.candidates_examined)?;
        write!(f, "wall_time_s={:.6}", self.wall_time.as_secs_f64())
    }
}

/// A configured exposure search.
#[derive(Debug, Clone)]
pub struct ExposureSearch {
    pub dictionary: Vec<Hypothesis>,
    pub family: SearchFamily,
    pub threshold: Threshold,
    pub budget: SearchBudget,
}

impl ExposureSearch {
    pub fn new(threshold: Threshold) -> Self {
        Self { dictionary: default_dictionary(), family: SearchFamily::default(), threshold, budget: SearchBudget::default() }
    }

    pub fn family(mut self, family: SearchFamily) -> Self {
        self.family = family;
        self
    }

    pub fn budget(mut self, budget: SearchBudget) -> Self {
        self.budget = budget;
        self
    }

    pub fn dictionary(mut self, dictionary: Vec<Hypothesis>) -> Self {
        self.dictionary = dictionary;
        self
    }

    pub fn run(&self, evidence: &ResultEvidence, p_a: f64) -> Result<ExposureReport> {
        self.threshold.validate()?;
        if self.dictionary.is_empty() {
            return Err(Error::Domain("empty hypothesis dictionary".into()));
        }
        if self.budget.restarts == 0 || self.budget.steps == 0 {
            return Err(Error::Domain("search budget must be positive".into()));
        }
        let start = Instant::now();
        let table = LikelihoodTable::new(evidence, &self.dictionary, p_a);
        let log_epsilon = match self.threshold {
            Threshold::Absolute(e) => e.ln(),
            Threshold::Relative(delta) => {
                let identity = table.identity;
                let reference = if identity.is_finite() {
                    identity
                } else {
                    match self.family {
                        SearchFamily::Stationary => table.best_stationary(),
                        SearchFamily::PerShot => table.best_per_shot(),
                    }
                };
                delta.ln() + reference
            }
        };
        let outcome = match self.family {
            SearchFamily::Stationary => {
                let mut scorer = Scorer::new(&self.dictionary, evidence.bit_count());
                stationary_search(&table, &mut scorer, log_epsilon)
            }
            SearchFamily::PerShot => per_shot_search(&table, &self.dictionary, evidence, log_epsilon, &self.budget),
        }?;
        Ok(ExposureReport {
            family: self.family,
            log_epsilon,
            exposure: outcome.exposure,
            argmax_labels: outcome.assignment.iter().map(|&h| self.dictionary[h].label.clone()).collect(),
            argmax: outcome.assignment,
            argmax_log_likelihood: outcome.log_likelihood,
            best_log_likelihood: outcome.best_log_likelihood,
            candidates_examined: outcome.examined,
            wall_time: start.elapsed(),
            shots: evidence.shots(),
            bit_count: evidence.bit_count(),
        })
    }
}

/// Exposure under the default dictionary.
pub fn exposure(
    evidence: &ResultEvidence,
    p_a: f64,
    threshold: Threshold,
    family: SearchFamily,
    budget: SearchBudget,
) -> Result<ExposureReport> {
    ExposureSearch::new(threshold).family(family).budget(budget).run(evidence, p_a)
}

/// ln Pr(ŷ_i | h, ρ_i) for every result shot i and hypothesis h.
struct LikelihoodTable {
    /// Indexed [result shot][hypothesis].
    per_shot: Vec<Vec<f64>>,
    hypotheses: usize,
    identity: f64,
}

impl LikelihoodTable {
    fn new(evidence: &ResultEvidence, dictionary: &[Hypothesis], p_a: f64) -> Self {
        let per_shot: Vec<Vec<f64>> = evidence
            .announcements
            .iter()
            .zip(&evidence.priors)
            .map(|(a, rho)| dictionary.iter().map(|h| shot_log_likelihood(a, &h.bob_view, rho, p_a)).collect())
            .collect();
        let identity = evidence
            .announcements
            .iter()
            .zip(&evidence.priors)
            .map(|(a, rho)| shot_log_likelihood(a, &EffectiveEvolution::identity(), rho, p_a))
            .sum();
        Self { per_shot, hypotheses: dictionary.len(), identity }
    }

    fn stationary(&self, h: usize) -> f64 {
        self.per_shot.iter().map(|row| row[h]).sum()
    }

    fn best_stationary(&self) -> f64 {
        (0..self.hypotheses).map(|h| self.stationary(h)).fold(f64::NEG_INFINITY, f64::max)
    }

    fn best_per_shot(&self) -> f64 {
        self.per_shot.iter().map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)).sum()
    }
}

/// Exposure of an assignment, which depends only on how many shots carry
/// each hypothesis. Hypotheses whose realized laws coincide are merged into
/// one class before scoring. Memoized at both levels.
struct Scorer<'a> {
    dictionary: &'a [Hypothesis],
    /// Distinct informative law distributions, grouped by law.
    classes: Vec<Vec<(LawKey, f64)>>,
    /// Class per hypothesis; `None` when nothing can be learned from it.
    class_of: Vec<Option<usize>>,
    bit_count: usize,
    info: BitInfoCache,
    expected: HashMap<Vec<(usize, usize)>, f64>,
    by_counts: HashMap<Vec<usize>, f64>,
}

impl<'a> Scorer<'a> {
    fn new(dictionary: &'a [Hypothesis], bit_count: usize) -> Self {
        let mut info = BitInfoCache::new();
        let mut classes: Vec<Vec<(LawKey, f64)>> = Vec::new();
        let mut signatures: HashMap<Vec<(LawKey, i64)>, usize> = HashMap::new();
        let class_of = dictionary
            .iter()
            .map(|h| {
                let mut grouped: HashMap<LawKey, f64> = HashMap::new();
                for (evo, w) in &h.eve_view {
                    *grouped.entry(info.register(BitLaw::of(evo))).or_default() += w;
                }
                grouped.retain(|_, w| *w > 0.0);
                if grouped.keys().all(|k| *k == (0, 0)) {
                    return None;
                }
                let mut laws: Vec<_> = grouped.into_iter().collect();
                laws.sort_by_key(|l| l.0);
                let signature = laws.iter().map(|(k, w)| (*k, (w * 1e12).round() as i64)).collect();
                Some(*signatures.entry(signature).or_insert_with(|| {
                    classes.push(laws);
                    classes.len() - 1
                }))
            })
            .collect();
        Self { dictionary, classes, class_of, bit_count, info, expected: HashMap::new(), by_counts: HashMap::new() }
    }

    /// Exposure when `counts[h]` shots carry hypothesis h.
    fn score(&mut self, counts: &[usize]) -> f64 {
        let mut per_class = vec![0usize; self.classes.len() + 1];
        for (h, &c) in counts.iter().enumerate() {
            match self.class_of[h] {
                Some(class) => per_class[class] += c,
                None => per_class[self.classes.len()] += c,
            }
        }
        if let Some(v) = self.by_counts.get(&per_class) {
            return *v;
        }
        let null = per_class[self.classes.len()];
        let groups: Vec<(usize, usize)> =
            per_class[..self.classes.len()].iter().enumerate().filter(|(_, c)| **c > 0).map(|(i, c)| (i, *c)).collect();
        let value = average_over_subsets(&groups, null, self.bit_count, |chosen| self.expected_info(chosen));
        self.by_counts.insert(per_class, value);
        value
    }

    /// Expected information over Eve's realizations when `c` bit-announced
    /// shots fall in each listed class.
    fn expected_info(&mut self, chosen: &[(usize, usize)]) -> f64 {
        let key: Vec<(usize, usize)> = chosen.iter().copied().filter(|(_, c)| *c > 0).collect();
        if key.is_empty() {
            return 0.0;
        }
        if let Some(v) = self.expected.get(&key) {
            return *v;
        }
        let mut dist: HashMap<Vec<(LawKey, usize)>, f64> = HashMap::from([(Vec::new(), 1.0)]);
        for &(class, count) in &key {
            for _ in 0..count {
                let laws = &self.classes[class];
                let mut next: HashMap<Vec<(LawKey, usize)>, f64> = HashMap::with_capacity(dist.len() * laws.len());
                for (multiset, p) in &dist {
                    for (law, w) in laws {
                        let mut m = multiset.clone();
                        match m.binary_search_by(|(k, _)| k.cmp(law)) {
                            Ok(i) => m[i].1 += 1,
                            Err(i) => m.insert(i, (*law, 1)),
                        }
                        *next.entry(m).or_default() += p * w;
                    }
                }
                dist = next;
            }
        }
        let value = dist.iter().map(|(m, p)| p * self.info.info(m)).sum();
        self.expected.insert(key, value);
        value
    }

    fn hypotheses(&self) -> usize {
        self.dictionary.len()
    }
}

struct SearchOutcome {
    exposure: f64,
    assignment: Vec<usize>,
    log_likelihood: f64,
    best_log_likelihood: f64,
    examined: u64,
}

fn stationary_search(table: &LikelihoodTable, scorer: &mut Scorer<'_>, log_epsilon: f64) -> Result<SearchOutcome> {
    let shots = scorer.bit_count + table.per_shot.len();
    let mut best: Option<(f64, f64, usize)> = None;
    let mut best_ll = f64::NEG_INFINITY;
    for h in 0..scorer.hypotheses() {
        let ll = table.stationary(h);
        best_ll = best_ll.max(ll);
        if ll <= log_epsilon {
            continue;
        }
        let mut counts = vec![0; scorer.hypotheses()];
        counts[h] = shots;
        let a = scorer.score(&counts);
        if best.is_none_or(|(ba, bll, _)| a > ba + 1e-15 || (a >= ba - 1e-15 && ll > bll)) {
            best = Some((a, ll, h));
        }
    }
    let (exposure, log_likelihood, h) = best.ok_or(Error::EmptyCandidateSet)?;
    Ok(SearchOutcome {
        exposure,
        assignment: vec![h; shots],
        log_likelihood,
        best_log_likelihood: best_ll,
        examined: scorer.hypotheses() as u64,
    })
}

/// Per-shot assignment state: hypothesis per shot, running counts and
/// log-likelihood.
#[derive(Clone)]
struct Assignment {
    hyps: Vec<usize>,
    counts: Vec<usize>,
    log_likelihood: f64,
}

fn per_shot_search(
    table: &LikelihoodTable,
    dictionary: &[Hypothesis],
    evidence: &ResultEvidence,
    log_epsilon: f64,
    budget: &SearchBudget,
) -> Result<SearchOutcome> {
    let d = dictionary.len();
    let n = evidence.shots();
    // Row of log-likelihoods per shot; bit shots are unconstrained.
    let mut rows: Vec<Option<&[f64]>> = vec![None; n];
    for (i, &pos) in evidence.positions.iter().enumerate() {
        rows[pos] = Some(&table.per_shot[i]);
    }
    let ll_of = |shot: usize, h: usize| rows[shot].map_or(0.0, |r| r[h]);

    let best_possible = table.best_per_shot();
    if best_possible <= log_epsilon {
        return Err(Error::EmptyCandidateSet);
    }

    if (d as f64).powi(n as i32) <= budget.exhaustive_limit {
        let mut scorer = Scorer::new(dictionary, evidence.bit_count());
        let mut best: Option<(f64, Assignment)> = None;
        let mut examined = 0u64;
        let mut hyps = vec![0usize; n];
        loop {
            examined += 1;
            let ll: f64 = (0..n).map(|i| ll_of(i, hyps[i])).sum();
            if ll > log_epsilon {
                let mut counts = vec![0; d];
                for &h in &hyps {
                    counts[h] += 1;
                }
                let a = scorer.score(&counts);
                if best.as_ref().is_none_or(|(ba, b)| a > ba + 1e-15 || (a >= ba - 1e-15 && ll > b.log_likelihood)) {
                    best = Some((a, Assignment { hyps: hyps.clone(), counts, log_likelihood: ll }));
                }
            }
            // Odometer increment.
            let mut i = 0;
            while i < n {
                hyps[i] += 1;
                if hyps[i] < d {
                    break;
                }
                hyps[i] = 0;
                i += 1;
            }
            if i == n {
                break;
            }
        }
        let (exposure, a) = best.ok_or(Error::EmptyCandidateSet)?;
        return Ok(SearchOutcome {
            exposure,
            assignment: a.hyps,
            log_likelihood: a.log_likelihood,
            best_log_likelihood: best_possible,
            examined,
        });
    }

    // Start from the most likely hypothesis on every shot.
    let mut start = Assignment { hyps: vec![0; n], counts: vec![0; d], log_likelihood: 0.0 };
    for i in 0..n {
        let h = rows[i].map_or(0, |r| (0..d).max_by(|&a, &b| r[a].total_cmp(&r[b])).unwrap_or(0));
        start.hyps[i] = h;
        start.counts[h] += 1;
        start.log_likelihood += ll_of(i, h);
    }

    let results: Vec<(f64, Assignment, u64)> = (0..budget.restarts)
        .into_par_iter()
        .map(|restart| {
            let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
            rng.set_stream(restart as u64);
            let mut scorer = Scorer::new(dictionary, evidence.bit_count());
            anneal(&start, &ll_of, &mut scorer, log_epsilon, budget.steps, &mut rng)
        })
        .collect();

    let examined = results.iter().map(|r| r.2).sum();
    let (exposure, best, _) = results
        .into_iter()
        .reduce(|a, b| if b.0 > a.0 + 1e-15 || (b.0 >= a.0 - 1e-15 && b.1.log_likelihood > a.1.log_likelihood) { b } else { a })
        .expect("at least one restart");
    Ok(SearchOutcome {
        exposure,
        assignment: best.hyps,
        log_likelihood: best.log_likelihood,
        best_log_likelihood: best_possible,
        examined,
    })
}

const ANNEAL_T_START: f64 = 0.05;
const ANNEAL_T_END: f64 = 1e-4;

fn anneal<F: Fn(usize, usize) -> f64, R: Rng>(
    start: &Assignment,
    ll_of: &F,
    scorer: &mut Scorer<'_>,
    log_epsilon: f64,
    steps: usize,
    rng: &mut R,
) -> (f64, Assignment, u64) {
    let n = start.hyps.len();
    let d = scorer.hypotheses();
    let mut current = start.clone();
    let mut current_score = scorer.score(&current.counts);
    let mut best = (current_score, current.clone());
    let cooling = (ANNEAL_T_END / ANNEAL_T_START).powf(1.0 / steps.max(1) as f64);
    let mut temperature = ANNEAL_T_START;
    let mut examined = 1u64;
    for _ in 0..steps {
        temperature *= cooling;
        let shot = rng.random_range(0..n);
        let old = current.hyps[shot];
        let new = rng.random_range(0..d);
        if new == old {
            continue;
        }
        let ll = current.log_likelihood - ll_of(shot, old) + ll_of(shot, new);
        if ll.is_nan() || ll <= log_epsilon {
            continue;
        }
        current.counts[old] -= 1;
        current.counts[new] += 1;
        let score = scorer.score(&current.counts);
        examined += 1;
        let accept = score >= current_score || rng.random::<f64>() < ((score - current_score) / temperature).exp();
        if accept {
            current.hyps[shot] = new;
            current.log_likelihood = ll;
            current_score = score;
            if score > best.0 + 1e-15 || (score >= best.0 - 1e-15 && ll > best.1.log_likelihood) {
                best = (score, current.clone());
            }
        } else {
            current.counts[new] -= 1;
            current.counts[old] += 1;
        }
    }
    (best.0, best.1, examined)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{enact, string_distribution, StringPrior, DEFAULT_STRING_CAP};
    use crate::infotheory::averaged_bit_mi;
    use crate::protocol::{alice_announce, alice_measure, bob_prepare, role_rng, Outcome, PreparedState, Role};
    use crate::qubit::{channel_to_affine, PauliAxis};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::{any, prop_assert, proptest};

    /// A session without loss, driven directly by the protocol primitives.
    fn session(strategy: &Strategy, p_a: f64, n: usize, seed: u64) -> Vec<ShotRecord> {
        let mut bob = role_rng(seed, Role::BobPrepare);
        let mut meas = role_rng(seed, Role::AliceMeasure);
        let mut ann = role_rng(seed, Role::AliceAnnounce);
        let mut eve = role_rng(seed, Role::Eve);
        (0..n)
            .map(|i| {
                let (prep, state) = bob_prepare(&mut bob);
                let (received, _) = enact(strategy, i, &state, &mut eve).unwrap();
                let (basis, m) = alice_measure(&received, &mut meas);
                let a = alice_announce(Bit::One, basis, m, p_a, &mut ann);
                ShotRecord { index: i, prepared: prep, basis: Some(basis), m: Some(m), announcement: a }
            })
            .collect()
    }

    fn single(prep: PreparedState, basis: PauliAxis, m: Outcome) -> ResultEvidence {
        ResultEvidence::new(vec![0], vec![Announcement::Result { basis, m }], vec![prep.state()], 1).unwrap()
    }

    #[test]
    fn likelihood_examples() {
        let e = single(PreparedState::Z0, PauliAxis::Z, Outcome::Plus);
        assert_abs_diff_eq!(result_likelihood(&e, &EvolutionString::identity(1), 0.5).unwrap(), 0.25, epsilon = 1e-15);
        let e = single(PreparedState::Z0, PauliAxis::Z, Outcome::Minus);
        assert_eq!(result_likelihood(&e, &EvolutionString::identity(1), 0.5).unwrap(), 0.0);
        let full = channel_to_affine(&KrausChannel::depolarizing(1.0).unwrap());
        for prep in PreparedState::ALL {
            for a in Announcement::ALL.iter().filter(|a| a.is_result()) {
                let Announcement::Result { basis, m } = *a else { unreachable!() };
                let e = single(prep, basis, m);
                assert_abs_diff_eq!(result_likelihood(&e, &EvolutionString::repeat(full, 1), 0.3).unwrap(), 0.7 / 4.0, epsilon = 1e-15);
            }
        }
        assert!(matches!(result_likelihood(&e, &EvolutionString::identity(2), 0.5), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn likelihood_is_bit_independent() {
        let e = single(PreparedState::XPlus, PauliAxis::X, Outcome::Plus);
        let evo = EffectiveEvolution::constant(QubitState::new([0.3, 0.1, 0.2]).unwrap(), Provenance::Channel);
        let a = e.announcements()[0];
        let rho = e.priors()[0];
        assert_eq!(announcement_prob(&a, &evo, &rho, Bit::Zero, 0.4), announcement_prob(&a, &evo, &rho, Bit::One, 0.4));
    }

    #[test]
    fn evidence_from_records_skips_null_and_bits() {
        let records = session(&Strategy::Passive, 0.3, 40, 3);
        let mut with_null = records.clone();
        with_null.insert(5, ShotRecord { index: 99, prepared: PreparedState::Z0, basis: None, m: None, announcement: Announcement::Null });
        let a = ResultEvidence::from_records(&records).unwrap();
        let b = ResultEvidence::from_records(&with_null).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shots(), 40);
        assert_eq!(a.bit_count() + a.result_count(), 40);
        assert_eq!(a.bit_count(), records.iter().filter(|r| r.announcement.is_bit()).count());
    }

    #[test]
    fn identity_member_below_its_likelihood() {
        let records = session(&Strategy::Passive, 0.2, 30, 11);
        let e = ResultEvidence::from_records(&records).unwrap();
        let l = result_likelihood(&e, &EvolutionString::identity(e.result_count()), 0.2).unwrap();
        assert!(l > 0.0);
        let s = EvolutionString::identity(30);
        assert!(sigma_member(&e, &s, 0.2, l * 0.999).unwrap());
        assert!(!sigma_member(&e, &s, 0.2, l * 1.001).unwrap());
    }

    #[test]
    fn contradicting_map_never_member() {
        let e = single(PreparedState::Z0, PauliAxis::Z, Outcome::Plus);
        let to_one = EffectiveEvolution::constant(QubitState::one(), Provenance::Channel);
        for eps in [1e-300, 1e-10, 0.1] {
            assert!(!sigma_member(&e, &EvolutionString::repeat(to_one, 1), 0.5, eps).unwrap());
        }
    }

    #[test]
    fn intercept_resend_likelihood_decays_by_three_quarters() {
        let records = session(&Strategy::Passive, 0.1, 60, 21);
        let e = ResultEvidence::from_records(&records).unwrap();
        let matched_count = records
            .iter()
            .filter(|r| matches!(r.announcement, Announcement::Result { basis, .. } if matched(r.prepared, basis)))
            .count();
        let ir = Strategy::InterceptResend(BasisPolicy::Random).average_evolution().unwrap();
        let r = e.result_count();
        let ratio = result_likelihood(&e, &EvolutionString::repeat(ir, r), 0.1).unwrap()
            / result_likelihood(&e, &EvolutionString::identity(r), 0.1).unwrap();
        assert_abs_diff_eq!(ratio, 0.75f64.powi(matched_count as i32), epsilon = 1e-12);
    }

    #[test]
    fn error_rate_examples() {
        let (rate, n) = matched_error_rate(&session(&Strategy::Passive, 0.1, 2000, 1));
        assert_eq!(rate, 0.0);
        assert!(n > 800);
        let (rate, n) = matched_error_rate(&session(&Strategy::Depolarize(1.0), 0.1, 8000, 2));
        let sigma = (0.25 / n as f64).sqrt();
        assert!((rate - 0.5).abs() <= 3.0 * sigma, "{rate} over {n}");
        let (rate, n) = matched_error_rate(&session(&Strategy::InterceptResend(BasisPolicy::Random), 0.1, 8000, 3));
        let sigma = (0.25 * 0.75 / n as f64).sqrt();
        assert!((rate - 0.25).abs() <= 3.0 * sigma, "{rate} over {n}");
    }

    #[test]
    fn dictionary_is_physical_and_labelled() {
        let dict = default_dictionary();
        assert_eq!(dict[0].bob_view, EffectiveEvolution::identity());
        for h in &dict {
            let total: f64 = h.eve_view.iter().map(|(_, w)| w).sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
            assert!(!h.label.is_empty());
        }
    }

    #[test]
    fn stationary_exposure_matches_direct_average() {
        // Oracle: enumerate Eve's realized strings and average the subset
        // information for each.
        let strategy = Strategy::InterceptResend(BasisPolicy::Breidbart);
        let n = 5;
        let k = 2;
        let strings = string_distribution(&strategy, n, &StringPrior::EveMixed, DEFAULT_STRING_CAP).unwrap();
        let mut cache = BitInfoCache::new();
        let oracle: f64 = strings.iter().map(|s| s.weight * averaged_bit_mi(s, k, &mut cache).unwrap()).sum();

        let dict = vec![Hypothesis::from_strategy("breidbart", &strategy).unwrap()];
        let mut scorer = Scorer::new(&dict, k);
        assert_abs_diff_eq!(scorer.score(&[n]), oracle, epsilon = 1e-12);
    }

    #[test]
    fn random_intercept_exposure_is_closed_form() {
        let dict = vec![Hypothesis::from_strategy("ir", &Strategy::InterceptResend(BasisPolicy::Random)).unwrap()];
        for k in 0..6 {
            let mut scorer = Scorer::new(&dict, k);
            assert_abs_diff_eq!(scorer.score(&[10]), 1.0 - 0.5f64.powi(k as i32), epsilon = 1e-12);
        }
    }

    #[test]
    fn per_shot_scorer_matches_subset_oracle() {
        let dict = default_dictionary();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let n = rng.random_range(2..7);
            let k = rng.random_range(0..=n);
            // Only single-realization hypotheses, so the oracle is a plain subset average.
            let fixed: Vec<usize> = (0..dict.len()).filter(|&h| dict[h].eve_view.len() == 1).collect();
            let hyps: Vec<usize> = (0..n).map(|_| fixed[rng.random_range(0..fixed.len())]).collect();
            let s = EvolutionString::new(hyps.iter().map(|&h| dict[h].eve_view[0].0).collect());
            let mut cache = BitInfoCache::new();
            let oracle = averaged_bit_mi(&s, k, &mut cache).unwrap();
            let mut counts = vec![0; dict.len()];
            for &h in &hyps {
                counts[h] += 1;
            }
            let mut scorer = Scorer::new(&dict, k);
            assert_abs_diff_eq!(scorer.score(&counts), oracle, epsilon = 1e-10);
        }
    }

    #[test]
    fn passive_transcript_has_no_stationary_exposure() {
        let records = session(&Strategy::Passive, 0.1, 59, 5);
        let e = ResultEvidence::from_records(&records).unwrap();
        assert!(e.bit_count() > 0);
        let report = exposure(&e, 0.1, Threshold::Relative(0.1), SearchFamily::Stationary, SearchBudget::default()).unwrap();
        assert!(report.exposure <= 0.01, "{report}");
        assert!(report.argmax.iter().all(|&h| h == 0));
    }

    #[test]
    fn intercepted_transcript_exposes() {
        let records = session(&Strategy::InterceptResend(BasisPolicy::Random), 0.1, 59, 6);
        let e = ResultEvidence::from_records(&records).unwrap();
        assert!(e.bit_count() > 0);
        let report = exposure(&e, 0.1, Threshold::Relative(0.1), SearchFamily::Stationary, SearchBudget::default()).unwrap();
        assert!(report.exposure > 0.1, "{report}");
        let dict = default_dictionary();
        assert!(sigma_member(&e, &report.argmax_string(&dict), 0.1, report.epsilon()).unwrap() || report.epsilon() == 0.0);
        assert!(!sigma_member(&e, &EvolutionString::identity(e.shots()), 0.1, report.epsilon()).unwrap());
    }

    #[test]
    fn threshold_near_one_empties_the_set() {
        let records = session(&Strategy::Passive, 0.3, 12, 8);
        let e = ResultEvidence::from_records(&records).unwrap();
        for family in [SearchFamily::Stationary, SearchFamily::PerShot] {
            let r = exposure(&e, 0.3, Threshold::Absolute(0.999_999), family, SearchBudget::default());
            assert!(matches!(r, Err(Error::EmptyCandidateSet)));
        }
        let longer = ResultEvidence::from_records(&session(&Strategy::Passive, 0.3, 60, 8)).unwrap();
        assert!(matches!(
            exposure(&longer, 0.3, Threshold::Relative(1.5), SearchFamily::Stationary, SearchBudget::default()),
            Err(Error::EmptyCandidateSet)
        ));
        assert!(matches!(
            exposure(&e, 0.3, Threshold::Relative(-0.5), SearchFamily::Stationary, SearchBudget::default()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn identity_only_dictionary_has_zero_exposure() {
        let records = session(&Strategy::Passive, 0.4, 20, 9);
        let e = ResultEvidence::from_records(&records).unwrap();
        let search = ExposureSearch::new(Threshold::Absolute(0.0))
            .dictionary(vec![Hypothesis::fixed("identity", EffectiveEvolution::identity())]);
        assert_eq!(search.run(&e, 0.4).unwrap().exposure, 0.0);
    }

    #[test]
    fn exhaustive_per_shot_search() {
        // Two shots, tiny dictionary: check the winner against brute force.
        let dict = vec![
            Hypothesis::fixed("identity", EffectiveEvolution::identity()),
            Hypothesis::fixed("to +z", EffectiveEvolution::constant(QubitState::zero(), Provenance::Channel)),
            Hypothesis::from_strategy("ir", &Strategy::InterceptResend(BasisPolicy::Random)).unwrap(),
        ];
        let e = ResultEvidence::new(
            vec![1],
            vec![Announcement::Result { basis: PauliAxis::Z, m: Outcome::Minus }],
            vec![PreparedState::Z1.state()],
            2,
        )
        .unwrap();
        let report = ExposureSearch::new(Threshold::Absolute(0.0))
            .dictionary(dict.clone())
            .family(SearchFamily::PerShot)
            .run(&e, 0.5)
            .unwrap();
        assert_eq!(report.candidates_examined, 9);
        // Constant +z contradicts m = −1 on the result shot, intercept-resend
        // does not. Each intercepted shot reveals b with probability ½.
        assert_abs_diff_eq!(report.exposure, 0.5, epsilon = 1e-12);
        assert_ne!(report.argmax[0], 0);
        assert_eq!(report.argmax[1], 2);
    }

    #[test]
    fn per_shot_annealing_is_pessimistic_on_clean_transcripts() {
        let records = session(&Strategy::Passive, 0.1, 40, 12);
        let e = ResultEvidence::from_records(&records).unwrap();
        assert!(e.bit_count() > 0);
        let budget = SearchBudget { restarts: 2, steps: 3000, ..SearchBudget::default() };
        let stationary = exposure(&e, 0.1, Threshold::Relative(0.1), SearchFamily::Stationary, budget).unwrap();
        let per_shot = exposure(&e, 0.1, Threshold::Relative(0.1), SearchFamily::PerShot, budget).unwrap();
        assert!(per_shot.exposure >= stationary.exposure);
        assert!(per_shot.argmax_log_likelihood > per_shot.log_epsilon);
        let again = exposure(&e, 0.1, Threshold::Relative(0.1), SearchFamily::PerShot, budget).unwrap();
        assert_eq!(again.argmax, per_shot.argmax);
    }

    #[test]
    fn report_record_is_key_value() {
        let records = session(&Strategy::Passive, 0.3, 12, 8);
        let e = ResultEvidence::from_records(&records).unwrap();
        let text = exposure(&e, 0.3, Threshold::Relative(0.5), SearchFamily::Stationary, SearchBudget::default())
            .unwrap()
            .to_string();
        for key in ["epsilon=", "exposure_bits=", "argmax=", "candidates_examined=", "wall_time_s="] {
            assert!(text.lines().any(|l| l.starts_with(key)), "{key} missing in\n{text}");
        }
    }

    #[test]
    fn family_parses() {
        assert_eq!("per-shot".parse::<SearchFamily>().unwrap(), SearchFamily::PerShot);
        assert_eq!(SearchFamily::Stationary.to_string().parse::<SearchFamily>().unwrap(), SearchFamily::Stationary);
        assert!("greedy".parse::<SearchFamily>().is_err());
    }

    proptest! {
        #[test]
        fn likelihood_permutation_invariant(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let records = session(&Strategy::Depolarize(0.3), 0.3, 12, seed);
            let e = ResultEvidence::from_records(&records).unwrap();
            let dict = default_dictionary();
            let u: Vec<_> = (0..e.result_count()).map(|_| dict[rng.random_range(0..dict.len())].bob_view).collect();
            let base = log_result_likelihood(&e, &EvolutionString::new(u.clone()), 0.3).unwrap();
            let mut order: Vec<usize> = (0..u.len()).collect();
            for i in (1..order.len()).rev() {
                order.swap(i, rng.random_range(0..=i));
            }
            let permuted = ResultEvidence::new(
                (0..u.len()).collect(),
                order.iter().map(|&i| e.announcements()[i]).collect(),
                order.iter().map(|&i| e.priors()[i]).collect(),
                e.shots(),
            ).unwrap();
            let shuffled = log_result_likelihood(&permuted, &EvolutionString::new(order.iter().map(|&i| u[i]).collect()), 0.3).unwrap();
            prop_assert!(base == shuffled || (base - shuffled).abs() <= 1e-9 * base.abs().max(1.0));
        }

        #[test]
        fn membership_nests(seed in any::<u64>(), e1 in 0.0f64..1e-3, scale in 1.0f64..1e3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let records = session(&Strategy::Passive, 0.5, 8, seed);
            let e = ResultEvidence::from_records(&records).unwrap();
            let dict = default_dictionary();
            let s = EvolutionString::new((0..8).map(|_| dict[rng.random_range(0..dict.len())].bob_view).collect());
            if sigma_member(&e, &s, 0.5, e1 * scale).unwrap() {
                prop_assert!(sigma_member(&e, &s, 0.5, e1).unwrap());
            }
        }

        #[test]
        fn exposure_nonincreasing_in_epsilon(seed in 0u64..1000, a in 1e-12f64..1e-3, b in 1e-12f64..1e-3) {
            let records = session(&Strategy::InterceptResend(BasisPolicy::Random), 0.3, 12, seed);
            let e = ResultEvidence::from_records(&records).unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let run = |eps| exposure(&e, 0.3, Threshold::Absolute(eps), SearchFamily::Stationary, SearchBudget::default()).map(|r| r.exposure);
            match (run(lo), run(hi)) {
                (Ok(x), Ok(y)) => prop_assert!(y <= x + 1e-15),
                (Ok(_), Err(Error::EmptyCandidateSet)) | (Err(Error::EmptyCandidateSet), Err(Error::EmptyCandidateSet)) => {}
                other => prop_assert!(false, "unexpected {:?}", other.0.is_ok()),
            }
        }
    }
}
