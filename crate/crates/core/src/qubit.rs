//! Qubit state algebra in Bloch form.
//!
//! States are stored as Bloch vectors `r` with `ρ = ½(I + r·σ)`. Raw 2×2
//! complex matrices only appear at the boundary: Kraus operators of a
//! [`KrausChannel`] and measurement operators of a [`Povm`]. Every map a
//! particle can undergo on one shot is reduced to an [`EffectiveEvolution`],
//! an affine map `r ↦ M·r + t` on the Bloch ball.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Row-major 2×2 complex matrix.
pub type Mat2 = [[C64; 2]; 2];

/// Tolerance for Σ E†E = I on channels and POVMs.
pub const COMPLETENESS_TOL: f64 = 1e-10;
/// Slack allowed on |r| ≤ 1 for a state.
pub const STATE_TOL: f64 = 1e-12;
/// Slack allowed when checking that an affine map contracts the ball.
pub const CONTRACTION_TOL: f64 = 1e-9;
/// Largest outcome count accepted for a POVM.
pub const MAX_POVM_OUTCOMES: usize = 8;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

pub mod mat {
    //! Small helpers for 2×2 complex matrices.
    use super::{Mat2, C64, I, ONE, ZERO};

    pub fn identity() -> Mat2 {
        [[ONE, ZERO], [ZERO, ONE]]
    }

    pub fn zeros() -> Mat2 {
        [[ZERO; 2]; 2]
    }

    /// Pauli matrix by index: 0 → σ₁ (X), 1 → σ₂ (Y), 2 → σ₃ (Z).
    pub fn pauli(i: usize) -> Mat2 {
        match i {
            0 => [[ZERO, ONE], [ONE, ZERO]],
            1 => [[ZERO, -I], [I, ZERO]],
            2 => [[ONE, ZERO], [ZERO, -ONE]],
            _ => panic!("pauli index {i} out of range"),
        }
    }

    pub fn mul(a: &Mat2, b: &Mat2) -> Mat2 {
        let mut out = zeros();
        for (r, row) in out.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                *cell = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
        }
        out
    }

    pub fn adjoint(a: &Mat2) -> Mat2 {
        [[a[0][0].conj(), a[1][0].conj()], [a[0][1].conj(), a[1][1].conj()]]
    }

    pub fn add(a: &Mat2, b: &Mat2) -> Mat2 {
        [[a[0][0] + b[0][0], a[0][1] + b[0][1]], [a[1][0] + b[1][0], a[1][1] + b[1][1]]]
    }

    pub fn scale(a: &Mat2, s: C64) -> Mat2 {
        [[a[0][0] * s, a[0][1] * s], [a[1][0] * s, a[1][1] * s]]
    }

    pub fn trace(a: &Mat2) -> C64 {
        a[0][0] + a[1][1]
    }

    pub fn det(a: &Mat2) -> C64 {
        a[0][0] * a[1][1] - a[0][1] * a[1][0]
    }

    /// `A ρ A†`.
    pub fn sandwich(a: &Mat2, rho: &Mat2) -> Mat2 {
        mul(&mul(a, rho), &adjoint(a))
    }

    /// Largest elementwise deviation from the identity.
    pub fn identity_deviation(a: &Mat2) -> f64 {
        let id = identity();
        let mut worst = 0.0f64;
        for r in 0..2 {
            for c in 0..2 {
                worst = worst.max((a[r][c] - id[r][c]).norm());
            }
        }
        worst
    }

    /// Bloch components `Tr(σ_i A)` of a 2×2 matrix (A need not have unit trace).
    pub fn bloch_components(a: &Mat2) -> [f64; 3] {
        [2.0 * a[1][0].re, 2.0 * a[1][0].im, (a[0][0] - a[1][1]).re]
    }
}

/// One of the two observables Alice may measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PauliAxis {
    /// σ₁
    X,
    /// σ₃
    Z,
}

impl PauliAxis {
    pub const ALL: [PauliAxis; 2] = [PauliAxis::X, PauliAxis::Z];

    /// Index into a Bloch vector.
    pub fn component(self) -> usize {
        match self {
            PauliAxis::X => 0,
            PauliAxis::Z => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PauliAxis::X => "X",
            PauliAxis::Z => "Z",
        }
    }
}

/// Any of the three Bloch axes, used for rotations and eigenstates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlochAxis {
    X,
    Y,
    Z,
}

impl BlochAxis {
    pub const ALL: [BlochAxis; 3] = [BlochAxis::X, BlochAxis::Y, BlochAxis::Z];

    pub fn index(self) -> usize {
        match self {
            BlochAxis::X => 0,
            BlochAxis::Y => 1,
            BlochAxis::Z => 2,
        }
    }

    pub fn unit(self) -> [f64; 3] {
        let mut v = [0.0; 3];
        v[self.index()] = 1.0;
        v
    }
}

impl From<PauliAxis> for BlochAxis {
    fn from(axis: PauliAxis) -> Self {
        match axis {
            PauliAxis::X => BlochAxis::X,
            PauliAxis::Z => BlochAxis::Z,
        }
    }
}

fn norm3(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// A qubit density matrix stored as its Bloch vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitState {
    bloch: [f64; 3],
}

impl QubitState {
    pub fn new(bloch: [f64; 3]) -> Result<Self> {
        let n = norm3(&bloch);
        if !n.is_finite() || n > 1.0 + STATE_TOL {
            return Err(Error::InvalidState(n));
        }
        Ok(Self { bloch })
    }

    /// Builds a state from a vector known to be (numerically) in the ball,
    /// projecting tiny overshoots back onto the sphere.
    pub(crate) fn from_bloch_clamped(bloch: [f64; 3]) -> Self {
        let n = norm3(&bloch);
        if n > 1.0 {
            Self { bloch: [bloch[0] / n, bloch[1] / n, bloch[2] / n] }
        } else {
            Self { bloch }
        }
    }

    /// |0⟩⟨0|
    pub const fn zero() -> Self {
        Self { bloch: [0.0, 0.0, 1.0] }
    }

    /// |1⟩⟨1|
    pub const fn one() -> Self {
        Self { bloch: [0.0, 0.0, -1.0] }
    }

    /// |+⟩⟨+|
    pub const fn plus() -> Self {
        Self { bloch: [1.0, 0.0, 0.0] }
    }

    /// |−⟩⟨−|
    pub const fn minus() -> Self {
        Self { bloch: [-1.0, 0.0, 0.0] }
    }

    /// ½I, the eavesdropper's description of every incoming particle.
    pub const fn maximally_mixed() -> Self {
        Self { bloch: [0.0, 0.0, 0.0] }
    }

    /// Pure eigenstate of the given axis with eigenvalue `sign` (±1).
    pub fn eigenstate(axis: BlochAxis, sign: f64) -> Self {
        let mut bloch = [0.0; 3];
        bloch[axis.index()] = sign.signum();
        Self { bloch }
    }

    pub fn bloch(&self) -> [f64; 3] {
        self.bloch
    }

    pub fn norm(&self) -> f64 {
        norm3(&self.bloch)
    }

    pub fn to_matrix(&self) -> Mat2 {
        let [x, y, z] = self.bloch;
        [
            [C64::new((1.0 + z) / 2.0, 0.0), C64::new(x / 2.0, -y / 2.0)],
            [C64::new(x / 2.0, y / 2.0), C64::new((1.0 - z) / 2.0, 0.0)],
        ]
    }

    /// Reads the Bloch vector of a unit-trace Hermitian matrix.
    pub fn from_matrix(rho: &Mat2) -> Self {
        Self::from_bloch_clamped(mat::bloch_components(rho))
    }

    pub fn distance(&self, other: &QubitState) -> f64 {
        let d = [
            self.bloch[0] - other.bloch[0],
            self.bloch[1] - other.bloch[1],
            self.bloch[2] - other.bloch[2],
        ];
        norm3(&d)
    }
}

/// `Tr(σ ρ)` for Alice's observable.
pub fn expectation(axis: PauliAxis, state: &QubitState) -> f64 {
    state.bloch[axis.component()]
}

fn completeness_deviation(ops: &[Mat2]) -> f64 {
    let sum = ops
        .iter()
        .fold(mat::zeros(), |acc, op| mat::add(&acc, &mat::mul(&mat::adjoint(op), op)));
    mat::identity_deviation(&sum)
}

/// A trace-preserving quantum operation in Kraus form.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausChannel {
    operators: Vec<Mat2>,
}

impl KrausChannel {
    pub fn new(operators: Vec<Mat2>) -> Result<Self> {
        if operators.is_empty() {
            return Err(Error::EmptyOperators);
        }
        let dev = completeness_deviation(&operators);
        if dev.is_nan() || dev > COMPLETENESS_TOL {
            return Err(Error::ChannelNotTracePreserving(dev));
        }
        Ok(Self { operators })
    }

    pub fn operators(&self) -> &[Mat2] {
        &self.operators
    }

    pub fn identity() -> Self {
        Self { operators: vec![mat::identity()] }
    }

    /// ρ ↦ (1−λ)ρ + λ·½I, as Kraus operators √(1−3λ/4)·I and √(λ/4)·σ_i.
    pub fn depolarizing(lambda: f64) -> Result<Self> {
        check_probability("lambda", lambda)?;
        let a = C64::new((1.0 - 0.75 * lambda).sqrt(), 0.0);
        let b = C64::new((lambda / 4.0).sqrt(), 0.0);
        let mut ops = vec![mat::scale(&mat::identity(), a)];
        ops.extend((0..3).map(|i| mat::scale(&mat::pauli(i), b)));
        Self::new(ops)
    }

    /// Applies σ₃ with probability `p`.
    pub fn phase_flip(p: f64) -> Result<Self> {
        Self::pauli_flip(2, p)
    }

    /// Applies σ₁ with probability `p`.
    pub fn bit_flip(p: f64) -> Result<Self> {
        Self::pauli_flip(0, p)
    }

    fn pauli_flip(index: usize, p: f64) -> Result<Self> {
        check_probability("p", p)?;
        Self::new(vec![
            mat::scale(&mat::identity(), C64::new((1.0 - p).sqrt(), 0.0)),
            mat::scale(&mat::pauli(index), C64::new(p.sqrt(), 0.0)),
        ])
    }

    /// Unitary `exp(−i·angle·σ_axis/2)`, a Bloch rotation by `angle`.
    pub fn rotation(axis: BlochAxis, angle: f64) -> Self {
        let c = C64::new((angle / 2.0).cos(), 0.0);
        let s = C64::new(0.0, -(angle / 2.0).sin());
        let u = mat::add(
            &mat::scale(&mat::identity(), c),
            &mat::scale(&mat::pauli(axis.index()), s),
        );
        Self { operators: vec![u] }
    }

    /// Random channel with `rank` Kraus operators, from a Haar-like isometry.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, rank: usize) -> Self {
        Self { operators: random_isometry_blocks(rng, rank.max(1)) }
    }
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("{name} must lie in [0, 1], got {p}")));
    }
    Ok(())
}

/// Splits a random isometry C² → C^(2d) into d blocks of 2×2, so that the
/// blocks satisfy Σ B†B = V†V = I by construction.
fn random_isometry_blocks<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<Mat2> {
    let rows = 2 * d;
    let mut gauss = || C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
    let mut col0: Vec<C64> = (0..rows).map(|_| gauss()).collect();
    let mut col1: Vec<C64> = (0..rows).map(|_| gauss()).collect();

    let norm = |v: &[C64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let n0 = norm(&col0);
    col0.iter_mut().for_each(|z| *z /= n0);
    let overlap: C64 = col0.iter().zip(&col1).map(|(a, b)| a.conj() * b).sum();
    col1.iter_mut().zip(&col0).for_each(|(b, a)| *b -= overlap * a);
    let n1 = norm(&col1);
    col1.iter_mut().for_each(|z| *z /= n1);

    (0..d)
        .map(|k| {
            [
                [col0[2 * k], col1[2 * k]],
                [col0[2 * k + 1], col1[2 * k + 1]],
            ]
        })
        .collect()
}

/// ρ ↦ Σ_i E_i ρ E_i†.
pub fn apply_channel(ch: &KrausChannel, state: &QubitState) -> QubitState {
    let rho = state.to_matrix();
    let out = ch
        .operators
        .iter()
        .fold(mat::zeros(), |acc, e| mat::add(&acc, &mat::sandwich(e, &rho)));
    QubitState::from_matrix(&out)
}

/// A generalized measurement given by measurement operators F_i with
/// Σ F_i†F_i = I. Outcome `i` leaves the particle in F_iρF_i†/Tr(F_iρF_i†).
#[derive(Debug, Clone, PartialEq)]
pub struct Povm {
    effects: Vec<Mat2>,
}

impl Povm {
    pub fn new(effects: Vec<Mat2>) -> Result<Self> {
        if effects.is_empty() {
            return Err(Error::EmptyOperators);
        }
        if effects.len() > MAX_POVM_OUTCOMES {
            return Err(Error::TooManyOutcomes { found: effects.len(), max: MAX_POVM_OUTCOMES });
        }
        let dev = completeness_deviation(&effects);
        if dev.is_nan() || dev > COMPLETENESS_TOL {
            return Err(Error::PovmIncomplete(dev));
        }
        Ok(Self { effects })
    }

    /// Projective measurement along the Bloch direction `n`; outcome 0 is
    /// the +1 eigenvalue of n·σ.
    pub fn projective(n: [f64; 3]) -> Result<Self> {
        let len = norm3(&n);
        if (len - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("measurement direction must be a unit vector, norm {len}")));
        }
        let proj = |sign: f64| QubitState { bloch: [sign * n[0], sign * n[1], sign * n[2]] }.to_matrix();
        Self::new(vec![proj(1.0), proj(-1.0)])
    }

    /// Measurement of σ₁ or σ₃.
    pub fn pauli(axis: PauliAxis) -> Self {
        Self::projective(BlochAxis::from(axis).unit()).expect("unit axis")
    }

    /// Random POVM with `outcomes` measurement operators.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, outcomes: usize) -> Self {
        Self { effects: random_isometry_blocks(rng, outcomes.clamp(1, MAX_POVM_OUTCOMES)) }
    }

    pub fn effects(&self) -> &[Mat2] {
        &self.effects
    }

    pub fn outcomes(&self) -> usize {
        self.effects.len()
    }

    /// Born-rule probabilities Tr(F_iρF_i†).
    pub fn probabilities(&self, state: &QubitState) -> Vec<f64> {
        let rho = state.to_matrix();
        self.effects
            .iter()
            .map(|f| mat::trace(&mat::sandwich(f, &rho)).re.max(0.0))
            .collect()
    }

    /// Whether outcome `index` has a rank-1 operator, which makes its
    /// post-measurement state independent of the input.
    pub fn is_rank_one(&self, index: usize) -> bool {
        let f = &self.effects[index];
        let scale: f64 = f.iter().flatten().map(|z| z.norm_sqr()).sum();
        mat::det(f).norm() <= 1e-12 * scale.max(f64::MIN_POSITIVE)
    }
}

/// Result of one measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementOutcome {
    pub index: usize,
    pub post: QubitState,
    pub prob: f64,
}

/// Samples an outcome using a uniform `draw` in [0, 1).
pub fn measure(povm: &Povm, state: &QubitState, draw: f64) -> MeasurementOutcome {
    let probs = povm.probabilities(state);
    let total: f64 = probs.iter().sum();
    let target = draw.clamp(0.0, 1.0) * total;
    let mut acc = 0.0;
    let mut chosen = None;
    for (i, p) in probs.iter().enumerate() {
        if *p <= 0.0 {
            continue;
        }
        acc += p;
        chosen = Some(i);
        if target < acc {
            break;
        }
    }
    let index = chosen.expect("a complete POVM has an outcome with positive probability");
    measure_outcome(povm, state, index).expect("sampled outcome has positive probability")
}

/// Post-measurement state for a forced outcome.
pub fn measure_outcome(povm: &Povm, state: &QubitState, index: usize) -> Result<MeasurementOutcome> {
    let f = povm
        .effects
        .get(index)
        .ok_or(Error::OutcomeOutOfRange { index, outcomes: povm.outcomes() })?;
    let unnorm = mat::sandwich(f, &state.to_matrix());
    let prob = mat::trace(&unnorm).re;
    if prob < 1e-15 {
        return Err(Error::ZeroProbabilityOutcome(index));
    }
    let post = QubitState::from_matrix(&mat::scale(&unnorm, C64::new(1.0 / prob, 0.0)));
    Ok(MeasurementOutcome { index, post, prob })
}

/// Where an effective evolution came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    Identity,
    Channel,
    /// Constant map produced by a measurement outcome (rank-1 operator or an
    /// explicit resend rule).
    MeasurementOutcome(usize),
    /// Outcome of a higher-rank measurement operator, recorded as the
    /// constant map to the post-state realized on one particular input.
    NonAffine(usize),
}

/// The per-shot map Π acting on the Bloch vector as `r ↦ M·r + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveEvolution {
    linear: [[f64; 3]; 3],
    offset: [f64; 3],
    provenance: Provenance,
}

/// 26 unit directions (faces, edges and corners of the cube).
fn boundary_sample() -> impl Iterator<Item = [f64; 3]> {
    (-1i32..=1)
        .flat_map(|a| (-1i32..=1).flat_map(move |b| (-1i32..=1).map(move |c| [a, b, c])))
        .filter(|v| *v != [0, 0, 0])
        .map(|[a, b, c]| {
            let v = [a as f64, b as f64, c as f64];
            let n = norm3(&v);
            [v[0] / n, v[1] / n, v[2] / n]
        })
}

impl EffectiveEvolution {
    pub fn new(linear: [[f64; 3]; 3], offset: [f64; 3], provenance: Provenance) -> Result<Self> {
        let evo = Self { linear, offset, provenance };
        let worst = boundary_sample()
            .chain(std::iter::once([0.0; 3]))
            .map(|r| norm3(&evo.map_vector(&r)))
            .fold(0.0f64, f64::max);
        if !worst.is_finite() || worst > 1.0 + CONTRACTION_TOL {
            return Err(Error::NotContracting(worst));
        }
        Ok(evo)
    }

    pub fn identity() -> Self {
        Self {
            linear: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            offset: [0.0; 3],
            provenance: Provenance::Identity,
        }
    }

    /// The map that discards its input and outputs `state`.
    pub fn constant(state: QubitState, provenance: Provenance) -> Self {
        Self { linear: [[0.0; 3]; 3], offset: state.bloch(), provenance }
    }

    /// Realized evolution for outcome `index` of `povm` on `input`.
    ///
    /// Rank-1 outcomes give a true constant map; higher-rank outcomes are
    /// flagged [`Provenance::NonAffine`] and are only valid for `input`.
    pub fn from_outcome(povm: &Povm, index: usize, input: &QubitState) -> Result<Self> {
        let outcome = measure_outcome(povm, input, index)?;
        let provenance = if povm.is_rank_one(index) {
            Provenance::MeasurementOutcome(index)
        } else {
            Provenance::NonAffine(index)
        };
        Ok(Self::constant(outcome.post, provenance))
    }

    pub fn linear(&self) -> &[[f64; 3]; 3] {
        &self.linear
    }

    pub fn offset(&self) -> [f64; 3] {
        self.offset
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity() || (self.offset == [0.0; 3] && self.linear == Self::identity().linear)
    }

    fn map_vector(&self, r: &[f64; 3]) -> [f64; 3] {
        let mut out = self.offset;
        for (i, o) in out.iter_mut().enumerate() {
            *o += self.linear[i][0] * r[0] + self.linear[i][1] * r[1] + self.linear[i][2] * r[2];
        }
        out
    }

    pub fn apply(&self, state: &QubitState) -> QubitState {
        QubitState::from_bloch_clamped(self.map_vector(&state.bloch))
    }

    /// `next ∘ self`: apply `self` first, then `next`.
    pub fn then(&self, next: &EffectiveEvolution) -> EffectiveEvolution {
        let mut linear = [[0.0; 3]; 3];
        for (i, row) in linear.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| next.linear[i][k] * self.linear[k][j]).sum();
            }
        }
        let offset = next.map_vector(&self.offset);
        let provenance = match (self.provenance, next.provenance) {
            (Provenance::Identity, p) | (p, Provenance::Identity) => p,
            _ => Provenance::Channel,
        };
        EffectiveEvolution { linear, offset, provenance }
    }

    /// Convex combination Σ w_i Π_i (weights must sum to one).
    pub fn mixture(parts: &[(EffectiveEvolution, f64)]) -> EffectiveEvolution {
        let mut linear = [[0.0; 3]; 3];
        let mut offset = [0.0; 3];
        for (evo, w) in parts {
            for i in 0..3 {
                offset[i] += w * evo.offset[i];
                for j in 0..3 {
                    linear[i][j] += w * evo.linear[i][j];
                }
            }
        }
        let provenance = if parts.iter().all(|(e, _)| e.provenance == Provenance::Identity) {
            Provenance::Identity
        } else {
            Provenance::Channel
        };
        EffectiveEvolution { linear, offset, provenance }
    }
}

/// Affine Bloch representation of a channel: t = Tr(σ·Φ(½I)) and
/// M_ij = Tr(σ_i·Φ(½σ_j)).
pub fn channel_to_affine(ch: &KrausChannel) -> EffectiveEvolution {
    let image = |m: &Mat2| {
        ch.operators
            .iter()
            .fold(mat::zeros(), |acc, e| mat::add(&acc, &mat::sandwich(e, m)))
    };
    let half = C64::new(0.5, 0.0);
    let offset = mat::bloch_components(&image(&mat::scale(&mat::identity(), half)));
    let mut linear = [[0.0; 3]; 3];
    for j in 0..3 {
        let col = mat::bloch_components(&image(&mat::scale(&mat::pauli(j), half)));
        for i in 0..3 {
            linear[i][j] = col[i];
        }
    }
    let provenance = if ch.operators.len() == 1 && mat::identity_deviation(&ch.operators[0]) == 0.0 {
        Provenance::Identity
    } else {
        Provenance::Channel
    };
    EffectiveEvolution { linear, offset, provenance }
}
