//! Alice and Bob's side of a single shot, session parameters and message
//! reconstruction.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qubit::{expectation, PauliAxis, QubitState};

/// A classical bit: the message bit `b` or an announced bit `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Bit {
    Zero,
    One,
}

pub type MessageBit = Bit;

impl Bit {
    pub fn as_u8(self) -> u8 {
        match self {
            Bit::Zero => 0,
            Bit::One => 1,
        }
    }

    pub fn flip(self) -> Bit {
        match self {
            Bit::Zero => Bit::One,
            Bit::One => Bit::Zero,
        }
    }

    /// `1 − 2b`, the sign the message bit puts on a bit-announcement row.
    pub fn sign(self) -> f64 {
        match self {
            Bit::Zero => 1.0,
            Bit::One => -1.0,
        }
    }
}

impl From<Bit> for u8 {
    fn from(b: Bit) -> u8 {
        b.as_u8()
    }
}

impl TryFrom<u8> for Bit {
    type Error = Error;

    fn try_from(v: u8) -> Result<Bit> {
        match v {
            0 => Ok(Bit::Zero),
            1 => Ok(Bit::One),
            _ => Err(Error::Parse(format!("bit must be 0 or 1, got {v}"))),
        }
    }
}

impl fmt::Display for Bit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

/// Alice's measurement result m ∈ {+1, −1}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub fn value(self) -> i8 {
        match self {
            Outcome::Plus => 1,
            Outcome::Minus => -1,
        }
    }

    pub fn sign(self) -> f64 {
        f64::from(self.value())
    }

    /// `(1 − m)/2` as a bit.
    fn as_bit(self) -> Bit {
        match self {
            Outcome::Plus => Bit::Zero,
            Outcome::Minus => Bit::One,
        }
    }
}

impl From<Outcome> for i8 {
    fn from(m: Outcome) -> i8 {
        m.value()
    }
}

impl TryFrom<i8> for Outcome {
    type Error = Error;

    fn try_from(v: i8) -> Result<Outcome> {
        match v {
            1 => Ok(Outcome::Plus),
            -1 => Ok(Outcome::Minus),
            _ => Err(Error::Parse(format!("measurement result must be +1 or -1, got {v}"))),
        }
    }
}

/// The four states Bob may prepare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PreparedState {
    #[serde(rename = "Z0")]
    Z0,
    #[serde(rename = "Z1")]
    Z1,
    #[serde(rename = "X+")]
    XPlus,
    #[serde(rename = "X-")]
    XMinus,
}

impl PreparedState {
    pub const ALL: [PreparedState; 4] =
        [PreparedState::Z0, PreparedState::Z1, PreparedState::XPlus, PreparedState::XMinus];

    pub fn state(self) -> QubitState {
        match self {
            PreparedState::Z0 => QubitState::zero(),
            PreparedState::Z1 => QubitState::one(),
            PreparedState::XPlus => QubitState::plus(),
            PreparedState::XMinus => QubitState::minus(),
        }
    }

    /// The observable this state is an eigenstate of.
    pub fn basis(self) -> PauliAxis {
        match self {
            PreparedState::Z0 | PreparedState::Z1 => PauliAxis::Z,
            PreparedState::XPlus | PreparedState::XMinus => PauliAxis::X,
        }
    }

    /// The result Alice obtains when she measures in the matching basis.
    pub fn eigenvalue(self) -> Outcome {
        match self {
            PreparedState::Z0 | PreparedState::XPlus => Outcome::Plus,
            PreparedState::Z1 | PreparedState::XMinus => Outcome::Minus,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PreparedState::Z0 => "Z0",
            PreparedState::Z1 => "Z1",
            PreparedState::XPlus => "X+",
            PreparedState::XMinus => "X-",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            PreparedState::Z0 => 0,
            PreparedState::Z1 => 1,
            PreparedState::XPlus => 2,
            PreparedState::XMinus => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Self::ALL
            .get(code as usize)
            .copied()
            .ok_or_else(|| Error::Parse(format!("unknown preparation code {code}")))
    }
}

/// What Alice says at the end of a shot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Announcement {
    /// Basis plus the encoded bit `c`.
    Bit { basis: PauliAxis, c: Bit },
    /// Basis plus the raw measurement result.
    Result { basis: PauliAxis, m: Outcome },
    /// The particle never arrived.
    Null,
}

impl Announcement {
    /// The eight non-null announcements: bit-announcements first, σ₁ before σ₃.
    pub const ALL: [Announcement; 8] = [
        Announcement::Bit { basis: PauliAxis::X, c: Bit::Zero },
        Announcement::Bit { basis: PauliAxis::X, c: Bit::One },
        Announcement::Bit { basis: PauliAxis::Z, c: Bit::Zero },
        Announcement::Bit { basis: PauliAxis::Z, c: Bit::One },
        Announcement::Result { basis: PauliAxis::X, m: Outcome::Plus },
        Announcement::Result { basis: PauliAxis::X, m: Outcome::Minus },
        Announcement::Result { basis: PauliAxis::Z, m: Outcome::Plus },
        Announcement::Result { basis: PauliAxis::Z, m: Outcome::Minus },
    ];

    /// Position in [`Announcement::ALL`]; `None` for [`Announcement::Null`].
    pub fn index(&self) -> Option<usize> {
        Self::ALL.iter().position(|a| a == self)
    }

    pub fn basis(&self) -> Option<PauliAxis> {
        match self {
            Announcement::Bit { basis, .. } | Announcement::Result { basis, .. } => Some(*basis),
            Announcement::Null => None,
        }
    }

    pub fn is_bit(&self) -> bool {
        matches!(self, Announcement::Bit { .. })
    }

    pub fn is_result(&self) -> bool {
        matches!(self, Announcement::Result { .. })
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Announcement::Null)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Announcement::Bit { .. } => "bit",
            Announcement::Result { .. } => "result",
            Announcement::Null => "null",
        }
    }
}

/// One transcript row. `prepared` is Bob's secret, `basis`/`m` are Alice's
/// record (the basis is public once announced, `m` only for result shots).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShotRecord {
    pub index: usize,
    pub prepared: PreparedState,
    pub basis: Option<PauliAxis>,
    pub m: Option<Outcome>,
    pub announcement: Announcement,
}

impl ShotRecord {
    pub fn is_consistent(&self) -> bool {
        match self.announcement {
            Announcement::Null => self.basis.is_none() && self.m.is_none(),
            Announcement::Bit { basis, .. } => self.basis == Some(basis) && self.m.is_some(),
            Announcement::Result { basis, m } => self.basis == Some(basis) && self.m == Some(m),
        }
    }
}

/// Parameters shared by everyone taking part in a session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionParams {
    pub p_a: f64,
    /// Target delivery confidence, when N was derived from it.
    pub c_m: Option<f64>,
    /// Number of non-null shots.
    pub shots: usize,
    pub seed: u64,
    /// Probability that a particle is lost in transit.
    pub loss: f64,
    pub message: Bit,
}

impl SessionParams {
    /// Derives N from the confidence target; the message bit is drawn from the seed.
    pub fn from_confidence(p_a: f64, c_m: f64, seed: u64) -> Result<Self> {
        let shots = required_shots(c_m, p_a)?;
        Ok(Self { p_a, c_m: Some(c_m), shots, seed, loss: 0.0, message: default_message(seed) })
    }

    pub fn with_shots(p_a: f64, shots: usize, seed: u64) -> Result<Self> {
        let params = Self { p_a, c_m: None, shots, seed, loss: 0.0, message: default_message(seed) };
        params.validate()?;
        Ok(params)
    }

    pub fn loss(mut self, loss: f64) -> Result<Self> {
        self.loss = loss;
        self.validate()?;
        Ok(self)
    }

    pub fn message(mut self, message: Bit) -> Self {
        self.message = message;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_a) {
            return Err(Error::Domain(format!("p_a must lie in [0, 1], got {}", self.p_a)));
        }
        if self.shots == 0 {
            return Err(Error::Domain("shot count must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.loss) {
            return Err(Error::Domain(format!("loss must lie in [0, 1), got {}", self.loss)));
        }
        if let Some(c) = self.c_m {
            if !(c > 0.0 && c < 1.0) {
                return Err(Error::Domain(format!("C_m must lie in (0, 1), got {c}")));
            }
        }
        Ok(())
    }
}

/// Message bit used when the caller does not fix one.
pub fn default_message(seed: u64) -> Bit {
    if role_rng(seed, Role::Message).random::<bool>() {
        Bit::One
    } else {
        Bit::Zero
    }
}

/// Independent random streams, one per role, all split from the session seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Message = 0,
    BobPrepare = 1,
    AliceMeasure = 2,
    AliceAnnounce = 3,
    Eve = 4,
    Loss = 5,
}

pub fn role_rng(seed: u64, role: Role) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(role as u64);
    rng
}

/// Smallest N with N > log(1 − C_m)/log(1 − p_a/2).
pub fn required_shots(c_m: f64, p_a: f64) -> Result<usize> {
    if !(c_m > 0.0 && c_m < 1.0) {
        return Err(Error::Domain(format!("C_m must lie in (0, 1), got {c_m}")));
    }
    if !(p_a > 0.0 && p_a < 1.0) {
        return Err(Error::Domain(format!("p_a must lie in (0, 1), got {p_a}")));
    }
    let ratio = (-c_m).ln_1p() / (-p_a / 2.0).ln_1p();
    Ok(ratio.floor() as usize + 1)
}

/// c = (b + (1 − m)/2) mod 2
pub fn encode_bit(b: Bit, m: Outcome) -> Bit {
    xor(b, m.as_bit())
}

/// b = (c + (1 − m)/2) mod 2
pub fn decode_bit(c: Bit, m: Outcome) -> Bit {
    xor(c, m.as_bit())
}

fn xor(a: Bit, b: Bit) -> Bit {
    if a == b {
        Bit::Zero
    } else {
        Bit::One
    }
}

pub fn bob_prepare<R: Rng + ?Sized>(rng: &mut R) -> (PreparedState, QubitState) {
    let label = PreparedState::ALL[rng.random_range(0..4)];
    (label, label.state())
}

/// Alice picks σ₁ or σ₃ with equal probability and measures.
pub fn alice_measure<R: Rng + ?Sized>(received: &QubitState, rng: &mut R) -> (PauliAxis, Outcome) {
    let basis = if rng.random::<bool>() { PauliAxis::Z } else { PauliAxis::X };
    let p_plus = (1.0 + expectation(basis, received)) / 2.0;
    let m = if rng.random::<f64>() < p_plus { Outcome::Plus } else { Outcome::Minus };
    (basis, m)
}

pub fn alice_announce<R: Rng + ?Sized>(b: Bit, basis: PauliAxis, m: Outcome, p_a: f64, rng: &mut R) -> Announcement {
    if rng.random::<f64>() < p_a {
        Announcement::Bit { basis, c: encode_bit(b, m) }
    } else {
        Announcement::Result { basis, m }
    }
}

/// Bob's state is an eigenstate of the observable Alice measured.
pub fn matched(prep: PreparedState, basis: PauliAxis) -> bool {
    prep.basis() == basis
}

/// Bob's decision about the message bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Reconstruction {
    /// Majority decoded bit; `None` when undetermined.
    pub bit: Option<Bit>,
    /// Decoded votes for b = 0 and b = 1.
    pub votes: [usize; 2],
}

impl Reconstruction {
    pub fn matched_bits(&self) -> usize {
        self.votes[0] + self.votes[1]
    }

    /// Votes against the majority (or half of a tie).
    pub fn conflicts(&self) -> usize {
        self.votes[0].min(self.votes[1])
    }
}

pub fn bob_reconstruct(records: &[ShotRecord]) -> Reconstruction {
    let mut votes = [0usize; 2];
    for r in records {
        if let Announcement::Bit { basis, c } = r.announcement {
            if matched(r.prepared, basis) {
                votes[decode_bit(c, r.prepared.eigenvalue()).as_u8() as usize] += 1;
            }
        }
    }
    let bit = match votes[0].cmp(&votes[1]) {
        std::cmp::Ordering::Greater => Some(Bit::Zero),
        std::cmp::Ordering::Less => Some(Bit::One),
        std::cmp::Ordering::Equal => None,
    };
    Reconstruction { bit, votes }
}

impl FromStr for Bit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Bit> {
        match s.trim() {
            "0" => Ok(Bit::Zero),
            "1" => Ok(Bit::One),
            other => Err(Error::Parse(format!("bit must be 0 or 1, got {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits() -> [Bit; 2] {
        [Bit::Zero, Bit::One]
    }

    #[test]
    fn required_shots_examples() {
        // log(0.05)/log(0.75) = 10.41...
        assert_eq!(required_shots(0.95, 0.5).unwrap(), 11);
        // log(0.01)/log(0.95) = 89.78...
        assert_eq!(required_shots(0.99, 0.1).unwrap(), 90);
        assert_eq!(required_shots(0.95, 0.1).unwrap(), 59);
        assert_eq!(required_shots(1e-12, 0.3).unwrap(), 1);
    }

    #[test]
    fn required_shots_domain() {
        for (c, p) in [(0.0, 0.5), (1.0, 0.5), (0.5, 0.0), (0.5, 1.0), (f64::NAN, 0.5)] {
            assert!(matches!(required_shots(c, p), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn required_shots_grid() {
        let cs: Vec<f64> = (1..=10).map(|i| 0.05 + 0.094 * i as f64).collect();
        let ps: Vec<f64> = (1..=10).map(|i| 0.01 + 0.098 * (i - 1) as f64).collect();
        for &c in &cs {
            let mut prev = usize::MAX;
            for &p in &ps {
                let n = required_shots(c, p).unwrap();
                assert!(1.0 - (1.0 - p / 2.0).powi(n as i32) >= c, "c={c} p={p} n={n}");
                assert!(n <= prev);
                prev = n;
            }
        }
        for &p in &ps {
            let mut prev = 0;
            for &c in &cs {
                let n = required_shots(c, p).unwrap();
                assert!(n >= prev);
                prev = n;
            }
        }
    }

    #[test]
    fn bit_announcement_count_stays_bounded() {
        for c in [0.5, 0.8, 0.9, 0.95, 0.99, 0.999] {
            for i in 1..=50 {
                let p = 0.01 * i as f64;
                let n = required_shots(c, p).unwrap() as f64;
                assert!(p * n <= -2.0 * (1.0 - c).ln() + 2.0, "c={c} p={p}");
            }
        }
    }

    #[test]
    fn encode_decode_examples() {
        assert_eq!(encode_bit(Bit::Zero, Outcome::Plus), Bit::Zero);
        assert_eq!(encode_bit(Bit::One, Outcome::Minus), Bit::Zero);
        assert_eq!(encode_bit(Bit::Zero, Outcome::Minus), Bit::One);
        assert_eq!(decode_bit(Bit::Zero, Outcome::Plus), Bit::Zero);
        assert_eq!(decode_bit(Bit::Zero, Outcome::Minus), Bit::One);
        for b in bits() {
            for m in [Outcome::Plus, Outcome::Minus] {
                assert_eq!(decode_bit(encode_bit(b, m), m), b);
            }
        }
    }

    #[test]
    fn preparation_labels() {
        assert_eq!(PreparedState::Z0.state().bloch(), [0.0, 0.0, 1.0]);
        assert_eq!(PreparedState::XMinus.state().bloch(), [-1.0, 0.0, 0.0]);
        for p in PreparedState::ALL {
            assert_eq!(PreparedState::from_code(p.code()).unwrap(), p);
        }
    }

    #[test]
    fn bob_prepare_is_uniform() {
        let mut rng = role_rng(1, Role::BobPrepare);
        let n = 1_000_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            let (label, state) = bob_prepare(&mut rng);
            assert_eq!(label.state(), state);
            counts[label.code() as usize] += 1;
        }
        let sigma = (n as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 / 4.0).abs() <= 4.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn alice_measure_eigenstates() {
        let mut rng = role_rng(2, Role::AliceMeasure);
        for _ in 0..1000 {
            let (basis, m) = alice_measure(&QubitState::zero(), &mut rng);
            if basis == PauliAxis::Z {
                assert_eq!(m, Outcome::Plus);
            }
            let (basis, m) = alice_measure(&QubitState::plus(), &mut rng);
            if basis == PauliAxis::X {
                assert_eq!(m, Outcome::Plus);
            }
        }
    }

    #[test]
    fn alice_measure_mixed_is_fair() {
        let mut rng = role_rng(3, Role::AliceMeasure);
        let n = 100_000;
        let mut plus = [0usize; 2];
        let mut count = [0usize; 2];
        for _ in 0..n {
            let (basis, m) = alice_measure(&QubitState::maximally_mixed(), &mut rng);
            let i = (basis == PauliAxis::Z) as usize;
            count[i] += 1;
            plus[i] += (m == Outcome::Plus) as usize;
        }
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((count[0] as f64 - n as f64 / 2.0).abs() <= 4.0 * sigma);
        for i in 0..2 {
            let s = (count[i] as f64 * 0.25).sqrt();
            assert!((plus[i] as f64 - count[i] as f64 / 2.0).abs() <= 4.0 * s);
        }
    }

    #[test]
    fn alice_announce_degenerate_probabilities() {
        let mut rng = role_rng(4, Role::AliceAnnounce);
        for _ in 0..1000 {
            assert!(alice_announce(Bit::One, PauliAxis::X, Outcome::Plus, 1.0, &mut rng).is_bit());
            assert!(alice_announce(Bit::One, PauliAxis::X, Outcome::Plus, 0.0, &mut rng).is_result());
        }
        assert_eq!(
            alice_announce(Bit::One, PauliAxis::Z, Outcome::Minus, 1.0, &mut rng),
            Announcement::Bit { basis: PauliAxis::Z, c: Bit::Zero }
        );
    }

    #[test]
    fn alice_announce_fraction() {
        let mut rng = role_rng(5, Role::AliceAnnounce);
        let n = 100_000;
        let bits = (0..n)
            .filter(|_| alice_announce(Bit::Zero, PauliAxis::Z, Outcome::Plus, 0.3, &mut rng).is_bit())
            .count();
        let sigma = (n as f64 * 0.3 * 0.7).sqrt();
        assert!((bits as f64 - 0.3 * n as f64).abs() <= 4.0 * sigma);
    }

    #[test]
    fn matching_basis() {
        assert!(matched(PreparedState::Z0, PauliAxis::Z));
        assert!(!matched(PreparedState::Z0, PauliAxis::X));
        let hits = PreparedState::ALL
            .iter()
            .flat_map(|p| PauliAxis::ALL.iter().map(move |b| matched(*p, *b)))
            .filter(|m| *m)
            .count();
        assert_eq!(hits, 4); // half of the 8 equally likely pairs
    }

    fn record(prepared: PreparedState, announcement: Announcement) -> ShotRecord {
        ShotRecord { index: 0, prepared, basis: announcement.basis(), m: None, announcement }
    }

    #[test]
    fn reconstruct_examples() {
        let one = [record(PreparedState::Z0, Announcement::Bit { basis: PauliAxis::Z, c: Bit::One })];
        assert_eq!(bob_reconstruct(&one).bit, Some(Bit::One));

        let none = [
            record(PreparedState::Z0, Announcement::Bit { basis: PauliAxis::X, c: Bit::One }),
            record(PreparedState::Z0, Announcement::Result { basis: PauliAxis::Z, m: Outcome::Plus }),
            record(PreparedState::Z0, Announcement::Null),
        ];
        let r = bob_reconstruct(&none);
        assert_eq!(r.bit, None);
        assert_eq!(r.matched_bits(), 0);

        let zero = Announcement::Bit { basis: PauliAxis::X, c: Bit::Zero };
        let flipped = Announcement::Bit { basis: PauliAxis::X, c: Bit::One };
        let votes = [
            record(PreparedState::XPlus, zero),
            record(PreparedState::XPlus, zero),
            record(PreparedState::XMinus, flipped),
            record(PreparedState::XPlus, flipped),
        ];
        let r = bob_reconstruct(&votes);
        assert_eq!(r.votes, [3, 1]);
        assert_eq!(r.bit, Some(Bit::Zero));
        assert_eq!(r.conflicts(), 1);

        let tie = [record(PreparedState::XPlus, zero), record(PreparedState::XPlus, flipped)];
        assert_eq!(bob_reconstruct(&tie).bit, None);
    }

    #[test]
    fn announcement_table_order() {
        for (i, a) in Announcement::ALL.iter().enumerate() {
            assert_eq!(a.index(), Some(i));
        }
        assert_eq!(Announcement::Null.index(), None);
        assert_eq!(Announcement::ALL.iter().filter(|a| a.is_bit()).count(), 4);
    }

    #[test]
    fn role_streams_differ() {
        let a: u64 = role_rng(9, Role::BobPrepare).random();
        let b: u64 = role_rng(9, Role::AliceMeasure).random();
        let c: u64 = role_rng(9, Role::BobPrepare).random();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }
}
