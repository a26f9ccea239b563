//! Eavesdropper strategies and the effective evolutions they induce.
//!
//! On every shot Eve either applies a quantum operation or measures the
//! particle and resends a state chosen from her outcome. Strategies are
//! non-adaptive: the action on a shot never depends on earlier announcements.

use std::f64::consts::FRAC_PI_4;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::qubit::{
    apply_channel, channel_to_affine, measure, BlochAxis, EffectiveEvolution, KrausChannel, PauliAxis, Povm,
    Provenance, QubitState,
};

/// Default cap on the number of strings [`string_distribution`] may produce.
pub const DEFAULT_STRING_CAP: usize = 1_000_000;

/// Bloch direction of the Breidbart observable, halfway between σ₃ and σ₁.
pub fn breidbart_direction() -> [f64; 3] {
    [FRAC_PI_4.sin(), 0.0, FRAC_PI_4.cos()]
}

/// What Eve does to the particle on one shot.
#[derive(Debug, Clone, PartialEq)]
pub enum EveAction {
    Pass,
    Channel(KrausChannel),
    /// Measure, then resend `resend[i]` on outcome `i`.
    MeasureResend { povm: Povm, resend: Vec<QubitState> },
}

impl EveAction {
    pub fn measure_resend(povm: Povm, resend: Vec<QubitState>) -> Result<Self> {
        if resend.len() != povm.outcomes() {
            return Err(Error::LengthMismatch { expected: povm.outcomes(), found: resend.len() });
        }
        Ok(EveAction::MeasureResend { povm, resend })
    }

    /// Measure along `n` and resend the eigenstate that was observed.
    pub fn intercept_along(n: [f64; 3]) -> Result<Self> {
        let povm = Povm::projective(n)?;
        let resend = vec![QubitState::new(n)?, QubitState::new([-n[0], -n[1], -n[2]])?];
        Self::measure_resend(povm, resend)
    }

    /// The map seen by someone who does not know Eve's outcome: the outcome
    /// probabilities Tr(F_i†F_i ρ) are affine in the Bloch vector, so the
    /// averaged resend map is affine too.
    pub fn average_evolution(&self) -> EffectiveEvolution {
        match self {
            EveAction::Pass => EffectiveEvolution::identity(),
            EveAction::Channel(ch) => channel_to_affine(ch),
            EveAction::MeasureResend { povm, resend } => {
                let mut linear = [[0.0; 3]; 3];
                let mut offset = [0.0; 3];
                let basis = [
                    QubitState::maximally_mixed(),
                    QubitState::plus(),
                    QubitState::new([0.0, 1.0, 0.0]).expect("unit y"),
                    QubitState::zero(),
                ];
                let probs: Vec<Vec<f64>> = basis.iter().map(|s| povm.probabilities(s)).collect();
                for (i, out) in resend.iter().enumerate() {
                    let r = out.bloch();
                    for row in 0..3 {
                        offset[row] += probs[0][i] * r[row];
                        for col in 0..3 {
                            linear[row][col] += (probs[col + 1][i] - probs[0][i]) * r[row];
                        }
                    }
                }
                EffectiveEvolution::new(linear, offset, Provenance::Channel)
                    .expect("measure-and-resend is a physical channel")
            }
        }
    }

    /// Realized evolutions and their probabilities when the particle is
    /// described by `prior` going in.
    pub fn realized_distribution(&self, prior: &QubitState) -> Vec<(EffectiveEvolution, f64)> {
        match self {
            EveAction::Pass => vec![(EffectiveEvolution::identity(), 1.0)],
            EveAction::Channel(ch) => vec![(channel_to_affine(ch), 1.0)],
            EveAction::MeasureResend { povm, resend } => povm
                .probabilities(prior)
                .into_iter()
                .enumerate()
                .filter(|(_, p)| *p > 0.0)
                .map(|(i, p)| (EffectiveEvolution::constant(resend[i], Provenance::MeasurementOutcome(i)), p))
                .collect(),
        }
    }
}

/// How an intercept-resend attacker picks her measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BasisPolicy {
    Fixed(PauliAxis),
    /// σ₁ or σ₃ with probability ½ each.
    Random,
    /// The intermediate basis at π/8, resending the observed eigenstate.
    Breidbart,
}

/// A per-shot eavesdropping policy.
#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    Passive,
    InterceptResend(BasisPolicy),
    /// Depolarizing channel of strength λ.
    Depolarize(f64),
    Rotate { axis: BlochAxis, angle: f64 },
    BitFlip(f64),
    PhaseFlip(f64),
    /// Picks one component per shot with the given weights.
    Mix(Vec<(f64, Strategy)>),
}

impl Strategy {
    pub fn validate(&self) -> Result<()> {
        self.actions().map(|_| ())
    }

    /// The finite distribution over per-shot actions.
    pub fn actions(&self) -> Result<Vec<(EveAction, f64)>> {
        Ok(match self {
            Strategy::Passive => vec![(EveAction::Pass, 1.0)],
            Strategy::InterceptResend(BasisPolicy::Fixed(axis)) => {
                vec![(EveAction::intercept_along(BlochAxis::from(*axis).unit())?, 1.0)]
            }
            Strategy::InterceptResend(BasisPolicy::Random) => vec![
                (EveAction::intercept_along(BlochAxis::Z.unit())?, 0.5),
                (EveAction::intercept_along(BlochAxis::X.unit())?, 0.5),
            ],
            Strategy::InterceptResend(BasisPolicy::Breidbart) => {
                vec![(EveAction::intercept_along(breidbart_direction())?, 1.0)]
            }
            Strategy::Depolarize(l) => vec![(EveAction::Channel(KrausChannel::depolarizing(*l)?), 1.0)],
            Strategy::Rotate { axis, angle } => {
                if !angle.is_finite() {
                    return Err(Error::Domain(format!("rotation angle must be finite, got {angle}")));
                }
                vec![(EveAction::Channel(KrausChannel::rotation(*axis, *angle)), 1.0)]
            }
            Strategy::BitFlip(p) => vec![(EveAction::Channel(KrausChannel::bit_flip(*p)?), 1.0)],
            Strategy::PhaseFlip(p) => vec![(EveAction::Channel(KrausChannel::phase_flip(*p)?), 1.0)],
            Strategy::Mix(parts) => {
                if parts.is_empty() {
                    return Err(Error::Domain("mix needs at least one component".into()));
                }
                let total: f64 = parts.iter().map(|(w, _)| *w).sum();
                if parts.iter().any(|(w, _)| w.is_nan() || *w < 0.0) || (total - 1.0).abs() > 1e-9 {
                    return Err(Error::Domain(format!("mix weights must be nonnegative and sum to 1, got {total}")));
                }
                let mut out = Vec::new();
                for (w, s) in parts {
                    for (a, p) in s.actions()? {
                        if w * p > 0.0 {
                            out.push((a, w * p));
                        }
                    }
                }
                out
            }
        })
    }

    /// Draws the action for one shot.
    pub fn action_for<R: Rng + ?Sized>(&self, _shot: usize, rng: &mut R) -> Result<EveAction> {
        let mut actions = self.actions()?;
        if actions.len() == 1 {
            return Ok(actions.pop().expect("one action").0);
        }
        let draw: f64 = rng.random();
        let mut acc = 0.0;
        let last = actions.len() - 1;
        for (i, (a, p)) in actions.into_iter().enumerate() {
            acc += p;
            if draw < acc || i == last {
                return Ok(a);
            }
        }
        unreachable!("action list is nonempty")
    }

    /// The averaged per-shot map as seen by someone who knows neither Eve's
    /// action choice nor her outcomes.
    pub fn average_evolution(&self) -> Result<EffectiveEvolution> {
        let parts: Vec<_> = self.actions()?.iter().map(|(a, p)| (a.average_evolution(), *p)).collect();
        if parts.len() == 1 {
            return Ok(parts[0].0);
        }
        Ok(EffectiveEvolution::mixture(&parts))
    }

    pub fn is_passive(&self) -> bool {
        match self {
            Strategy::Passive => true,
            Strategy::Mix(parts) => parts.iter().all(|(w, s)| *w == 0.0 || s.is_passive()),
            _ => false,
        }
    }
}

/// Applies the strategy to the particle on one shot.
pub fn enact<R: Rng + ?Sized>(
    strategy: &Strategy,
    shot: usize,
    state: &QubitState,
    rng: &mut R,
) -> Result<(QubitState, EffectiveEvolution)> {
    Ok(match strategy.action_for(shot, rng)? {
        EveAction::Pass => (*state, EffectiveEvolution::identity()),
        EveAction::Channel(ch) => (apply_channel(&ch, state), channel_to_affine(&ch)),
        EveAction::MeasureResend { povm, resend } => {
            let outcome = measure(&povm, state, rng.random());
            let sent = resend[outcome.index];
            (sent, EffectiveEvolution::constant(sent, Provenance::MeasurementOutcome(outcome.index)))
        }
    })
}

/// Realized-evolution distribution for one shot, given the incoming state.
pub fn shot_distribution(strategy: &Strategy, prior: &QubitState) -> Result<Vec<(EffectiveEvolution, f64)>> {
    let mut out = Vec::new();
    for (action, w) in strategy.actions()? {
        for (evo, p) in action.realized_distribution(prior) {
            out.push((evo, w * p));
        }
    }
    Ok(out)
}

/// A string of per-shot effective evolutions, optionally weighted.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionString {
    pub evolutions: Vec<EffectiveEvolution>,
    pub weight: f64,
}

impl EvolutionString {
    pub fn new(evolutions: Vec<EffectiveEvolution>) -> Self {
        Self { evolutions, weight: 1.0 }
    }

    pub fn identity(n: usize) -> Self {
        Self::new(vec![EffectiveEvolution::identity(); n])
    }

    pub fn repeat(evo: EffectiveEvolution, n: usize) -> Self {
        Self::new(vec![evo; n])
    }

    pub fn len(&self) -> usize {
        self.evolutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.evolutions.is_empty()
    }
}

/// Description of the particle entering each shot.
#[derive(Debug, Clone, PartialEq)]
pub enum StringPrior {
    /// Eve's view: ½I on every shot.
    EveMixed,
    /// Known preparations, one per shot.
    Prepared(Vec<QubitState>),
}

/// All realizable evolution strings of length `n` with their probabilities.
pub fn string_distribution(
    strategy: &Strategy,
    n: usize,
    prior: &StringPrior,
    cap: usize,
) -> Result<Vec<EvolutionString>> {
    let per_shot: Vec<Vec<(EffectiveEvolution, f64)>> = match prior {
        StringPrior::EveMixed => {
            let d = shot_distribution(strategy, &QubitState::maximally_mixed())?;
            vec![d; n]
        }
        StringPrior::Prepared(states) => {
            if states.len() != n {
                return Err(Error::LengthMismatch { expected: n, found: states.len() });
            }
            states.iter().map(|s| shot_distribution(strategy, s)).collect::<Result<_>>()?
        }
    };
    let count: f64 = per_shot.iter().map(|d| d.len() as f64).product();
    if count > cap as f64 {
        return Err(Error::Explosion { required: count, cap: cap as f64 });
    }
    let mut strings = vec![EvolutionString { evolutions: Vec::with_capacity(n), weight: 1.0 }];
    for dist in &per_shot {
        let mut next = Vec::with_capacity(strings.len() * dist.len());
        for s in &strings {
            for (evo, p) in dist {
                let mut evolutions = s.evolutions.clone();
                evolutions.push(*evo);
                next.push(EvolutionString { evolutions, weight: s.weight * p });
            }
        }
        strings = next;
    }
    Ok(strings)
}

fn fmt_axis(axis: BlochAxis) -> &'static str {
    match axis {
        BlochAxis::X => "x",
        BlochAxis::Y => "y",
        BlochAxis::Z => "z",
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Passive => write!(f, "passive"),
            Strategy::InterceptResend(policy) => {
                let basis = match policy {
                    BasisPolicy::Fixed(PauliAxis::X) => "x",
                    BasisPolicy::Fixed(PauliAxis::Z) => "z",
                    BasisPolicy::Random => "random",
                    BasisPolicy::Breidbart => "breidbart",
                };
                write!(f, "intercept_resend basis={basis}")
            }
            Strategy::Depolarize(l) => write!(f, "depolarize lambda={l}"),
            Strategy::Rotate { axis, angle } => write!(f, "rotate axis={} angle={angle}", fmt_axis(*axis)),
            Strategy::BitFlip(p) => write!(f, "bit_flip p={p}"),
            Strategy::PhaseFlip(p) => write!(f, "phase_flip p={p}"),
            Strategy::Mix(parts) => {
                write!(f, "mix ")?;
                for (i, (w, s)) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, " + ")?;
                    }
                    write!(f, "{w}*{s}")?;
                }
                Ok(())
            }
        }
    }
}

fn parse_params<'a>(name: &str, tokens: &[&'a str]) -> Result<Vec<(&'a str, &'a str)>> {
    tokens
        .iter()
        .map(|t| {
            t.split_once('=')
                .ok_or_else(|| Error::Parse(format!("{name}: expected key=value, got {t:?}")))
        })
        .collect()
}

fn single_param<'a>(name: &str, key: &str, params: &[(&'a str, &'a str)]) -> Result<&'a str> {
    match params {
        [(k, v)] if *k == key => Ok(v),
        [] => Err(Error::Parse(format!("{name}: missing {key}="))),
        _ => Err(Error::Parse(format!("{name}: expected only {key}="))),
    }
}

fn parse_f64(name: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .map_err(|_| Error::Parse(format!("{name}: {v:?} is not a number")))
}

impl FromStr for Strategy {
    type Err = Error;

    /// Parses `name key=value ...`, or `mix w*spec + w*spec ...`.
    fn from_str(s: &str) -> Result<Strategy> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("mix ") {
            let parts = rest
                .split('+')
                .map(|part| {
                    let (w, spec) = part
                        .split_once('*')
                        .ok_or_else(|| Error::Parse(format!("mix component {part:?} needs weight*spec")))?;
                    Ok((parse_f64("mix", w.trim())?, spec.parse::<Strategy>()?))
                })
                .collect::<Result<Vec<_>>>()?;
            let strategy = Strategy::Mix(parts);
            strategy.validate()?;
            return Ok(strategy);
        }
        let tokens: Vec<&str> = s.split_whitespace().collect();
        let (name, rest) = tokens
            .split_first()
            .ok_or_else(|| Error::Parse("empty strategy".into()))?;
        let params = parse_params(name, rest)?;
        let strategy = match *name {
            "passive" if params.is_empty() => Strategy::Passive,
            "intercept_resend" => {
                let policy = match single_param(name, "basis", &params)? {
                    "x" | "X" => BasisPolicy::Fixed(PauliAxis::X),
                    "z" | "Z" => BasisPolicy::Fixed(PauliAxis::Z),
                    "random" => BasisPolicy::Random,
                    "breidbart" => BasisPolicy::Breidbart,
                    other => return Err(Error::Parse(format!("intercept_resend: unknown basis {other:?}"))),
                };
                Strategy::InterceptResend(policy)
            }
            "depolarize" => Strategy::Depolarize(parse_f64(name, single_param(name, "lambda", &params)?)?),
            "bit_flip" => Strategy::BitFlip(parse_f64(name, single_param(name, "p", &params)?)?),
            "phase_flip" => Strategy::PhaseFlip(parse_f64(name, single_param(name, "p", &params)?)?),
            "rotate" => {
                let mut axis = None;
                let mut angle = None;
                for (k, v) in params {
                    match k {
                        "axis" => {
                            axis = Some(match v {
                                "x" => BlochAxis::X,
                                "y" => BlochAxis::Y,
                                "z" => BlochAxis::Z,
                                other => return Err(Error::Parse(format!("rotate: unknown axis {other:?}"))),
                            })
                        }
                        "angle" => angle = Some(parse_f64(name, v)?),
                        other => return Err(Error::Parse(format!("rotate: unknown key {other:?}"))),
                    }
                }
                Strategy::Rotate {
                    axis: axis.ok_or_else(|| Error::Parse("rotate: missing axis=".into()))?,
                    angle: angle.ok_or_else(|| Error::Parse("rotate: missing angle=".into()))?,
                }
            }
            other => return Err(Error::Parse(format!("unknown strategy {other:?}"))),
        };
        strategy.validate()?;
        Ok(strategy)
    }
}
