//! Session orchestration: the in-process shot loop, the networked roles and
//! transcript persistence.
//!
//! The simulated particle is a Bloch vector. Only Eve and the transport look
//! at it directly; Alice's logic touches it solely through
//! [`alice_measure`]. This is a simulator, not a secure channel.

mod net;
mod transcript;
pub mod wire;

use std::fmt;

use rand::Rng;
use rayon::prelude::*;

use crate::adversary::{enact, Strategy};
use crate::error::Result;
use crate::numfmt::Sig12;
use crate::protocol::{
    alice_announce, alice_measure, bob_prepare, bob_reconstruct, matched, role_rng, Announcement, Bit, Reconstruction, Role,
    SessionParams, ShotRecord,
};

pub use net::{
    alice_session, bob_session, eve_session, run_alice, run_alice_on, run_bob, run_eve_proxy, run_eve_proxy_on, ProxyStats,
    SessionAbort, CONNECT_TIMEOUT, IO_TIMEOUT,
};
pub use transcript::{read_transcript, write_transcript, TRANSCRIPT_FORMAT};

/// Everything recorded about one session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionTranscript {
    pub params: SessionParams,
    /// Every attempted shot in order, null shots included.
    pub records: Vec<ShotRecord>,
    /// False when the session was aborted before both sides debriefed.
    pub complete: bool,
}

/// Counts derived from a transcript.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionStats {
    pub attempted: usize,
    pub non_null: usize,
    pub bit_announcements: usize,
    pub result_announcements: usize,
    pub null_announcements: usize,
    pub matched_bits: usize,
    pub conflicting_bits: usize,
    pub matched_results: usize,
    pub matched_result_errors: usize,
    /// p_a·N and (1−p_a)·N.
    pub expected_bit_announcements: f64,
    pub expected_result_announcements: f64,
}

impl SessionStats {
    pub fn error_rate(&self) -> f64 {
        if self.matched_results == 0 {
            0.0
        } else {
            self.matched_result_errors as f64 / self.matched_results as f64
        }
    }
}

impl SessionTranscript {
    pub fn non_null(&self) -> impl Iterator<Item = &ShotRecord> {
        self.records.iter().filter(|r| !r.announcement.is_null())
    }

    pub fn reconstruction(&self) -> Reconstruction {
        bob_reconstruct(&self.records)
    }

    /// Bob's decoded bit, `None` when undetermined.
    pub fn outcome(&self) -> Option<Bit> {
        self.reconstruction().bit
    }

    pub fn stats(&self) -> SessionStats {
        let rec = self.reconstruction();
        let mut s = SessionStats {
            attempted: self.records.len(),
            non_null: 0,
            bit_announcements: 0,
            result_announcements: 0,
            null_announcements: 0,
            matched_bits: rec.matched_bits(),
            conflicting_bits: rec.conflicts(),
            matched_results: 0,
            matched_result_errors: 0,
            expected_bit_announcements: self.params.p_a * self.params.shots as f64,
            expected_result_announcements: (1.0 - self.params.p_a) * self.params.shots as f64,
        };
        for r in &self.records {
            match r.announcement {
                Announcement::Bit { .. } => s.bit_announcements += 1,
                Announcement::Result { basis, m } => {
                    s.result_announcements += 1;
                    if matched(r.prepared, basis) {
                        s.matched_results += 1;
                        if m != r.prepared.eigenvalue() {
                            s.matched_result_errors += 1;
                        }
                    }
                }
                Announcement::Null => s.null_announcements += 1,
            }
        }
        s.non_null = s.bit_announcements + s.result_announcements;
        s
    }

    /// Key=value session summary.
    pub fn summary(&self) -> Summary<'_> {
        Summary(self)
    }
}

pub struct Summary<'a>(&'a SessionTranscript);

impl fmt::Display for Summary<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = self.0;
        let s = t.stats();
        writeln!(f, "p_a={}", Sig12(t.params.p_a))?;
        match t.params.c_m {
            Some(c) => writeln!(f, "c_m={}", Sig12(c))?,
            None => writeln!(f, "c_m=none")?,
        }
        writeln!(f, "shots={}", t.params.shots)?;
        writeln!(f, "seed={}", t.params.seed)?;
        writeln!(f, "loss={}", Sig12(t.params.loss))?;
        writeln!(f, "complete={}", t.complete)?;
        writeln!(f, "message={}", t.params.message)?;
        match t.outcome() {
            Some(b) => writeln!(f, "decoded={b}")?,
            None => writeln!(f, "decoded=undetermined")?,
        }
        writeln!(f, "attempted={}", s.attempted)?;
        writeln!(f, "bit_announcements={}", s.bit_announcements)?;
        writeln!(f, "expected_bit_announcements={}", Sig12(s.expected_bit_announcements))?;
        writeln!(f, "result_announcements={}", s.result_announcements)?;
        writeln!(f, "expected_result_announcements={}", Sig12(s.expected_result_announcements))?;
        writeln!(f, "null_announcements={}", s.null_announcements)?;
        writeln!(f, "matched_bits={}", s.matched_bits)?;
        writeln!(f, "conflicting_bits={}", s.conflicting_bits)?;
        writeln!(f, "matched_results={}", s.matched_results)?;
        writeln!(f, "matched_result_errors={}", s.matched_result_errors)?;
        write!(f, "error_rate={}", Sig12(s.error_rate()))
    }
}

/// Runs one session in process: until N shots arrive, Bob prepares, Eve
/// acts, the channel may lose the particle, and Alice measures and
/// announces. Every participant draws from its own seeded stream.
pub fn run_session(params: &SessionParams, strategy: &Strategy) -> Result<SessionTranscript> {
    params.validate()?;
    strategy.validate()?;
    let mut bob = role_rng(params.seed, Role::BobPrepare);
    let mut eve = role_rng(params.seed, Role::Eve);
    let mut channel = role_rng(params.seed, Role::Loss);
    let mut measure = role_rng(params.seed, Role::AliceMeasure);
    let mut announce = role_rng(params.seed, Role::AliceAnnounce);

    let mut records = Vec::with_capacity(params.shots);
    let mut delivered = 0;
    while delivered < params.shots {
        let index = records.len();
        let (prepared, state) = bob_prepare(&mut bob);
        let (received, _) = enact(strategy, index, &state, &mut eve)?;
        if is_lost(params.loss, &mut channel) {
            records.push(ShotRecord { index, prepared, basis: None, m: None, announcement: Announcement::Null });
            continue;
        }
        let (basis, m) = alice_measure(&received, &mut measure);
        let announcement = alice_announce(params.message, basis, m, params.p_a, &mut announce);
        records.push(ShotRecord { index, prepared, basis: Some(basis), m: Some(m), announcement });
        delivered += 1;
    }
    Ok(SessionTranscript { params: *params, records, complete: true })
}

/// The transport's loss draw for one particle.
pub(crate) fn is_lost<R: Rng + ?Sized>(loss: f64, rng: &mut R) -> bool {
    rng.random::<f64>() < loss
}

/// Runs independent sessions, one per seed, in parallel. Each session's
/// message bit follows its own seed unless `params.message` is forced by
/// `fixed_message`.
pub fn run_batch(params: &SessionParams, strategy: &Strategy, seeds: &[u64], fixed_message: Option<Bit>) -> Result<Vec<SessionTranscript>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let mut p = SessionParams { seed, message: crate::protocol::default_message(seed), ..*params };
            if let Some(b) = fixed_message {
                p.message = b;
            }
            run_session(&p, strategy)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::BasisPolicy;

    #[test]
    fn deterministic_per_seed() {
        let params = SessionParams::from_confidence(0.3, 0.95, 42).unwrap().loss(0.2).unwrap();
        let strategy = Strategy::InterceptResend(BasisPolicy::Random);
        let a = run_session(&params, &strategy).unwrap();
        let b = run_session(&params, &strategy).unwrap();
        assert_eq!(a, b);
        let mut x = Vec::new();
        let mut y = Vec::new();
        write_transcript(&a, &mut x).unwrap();
        write_transcript(&b, &mut y).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn record_counts() {
        let params = SessionParams::with_shots(0.4, 200, 3).unwrap().loss(0.3).unwrap();
        let t = run_session(&params, &Strategy::Passive).unwrap();
        let s = t.stats();
        assert_eq!(s.non_null, 200);
        assert_eq!(t.non_null().count(), 200);
        assert!(s.null_announcements > 0);
        assert_eq!(s.attempted, 200 + s.null_announcements);
        assert!(t.records.iter().all(ShotRecord::is_consistent));
        assert!(t.records.iter().enumerate().all(|(i, r)| r.index == i));
    }

    #[test]
    fn always_bit_announcing() {
        let params = SessionParams::with_shots(1.0, 50, 9).unwrap();
        let t = run_session(&params, &Strategy::Passive).unwrap();
        assert_eq!(t.stats().result_announcements, 0);
    }

    #[test]
    fn passive_decodes_correctly() {
        for seed in 0..50 {
            let params = SessionParams::from_confidence(0.5, 0.95, seed).unwrap();
            let t = run_session(&params, &Strategy::Passive).unwrap();
            assert_eq!(t.stats().conflicting_bits, 0);
            if let Some(b) = t.outcome() {
                assert_eq!(b, params.message);
            }
        }
    }

    #[test]
    fn batch_matches_single_runs() {
        let params = SessionParams::with_shots(0.2, 20, 0).unwrap();
        let seeds = [4, 8, 15];
        let batch = run_batch(&params, &Strategy::Passive, &seeds, None).unwrap();
        for (t, &seed) in batch.iter().zip(&seeds) {
            let single = SessionParams::with_shots(0.2, 20, seed).unwrap();
            assert_eq!(t, &run_session(&single, &Strategy::Passive).unwrap());
        }
    }

    #[test]
    fn summary_has_twelve_significant_digits() {
        let params = SessionParams::from_confidence(0.1, 0.95, 7).unwrap();
        let text = run_session(&params, &Strategy::Passive).unwrap().summary().to_string();
        assert!(text.contains("shots=59"));
        assert!(text.contains("p_a=0.100000000000"));
        assert!(text.lines().any(|l| l.starts_with("decoded=")));
    }
}
