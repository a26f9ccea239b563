//! Seeded fixtures shared by the benchmarks.

use qseal::acceptance::random_evolution_string;
use qseal::protocol::SessionParams;
use qseal::{run_session, EvolutionString, ResultEvidence, SessionTranscript, Strategy};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A mixed string of N evolutions drawn from channels, POVM outcomes and
/// intercept-resend branches.
pub fn evolution_string(n: usize, seed: u64) -> EvolutionString {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_evolution_string(&mut rng, n).expect("fixture evolutions are valid")
}

pub fn transcript(p_a: f64, shots: usize, strategy: &Strategy, seed: u64) -> SessionTranscript {
    let params = SessionParams::with_shots(p_a, shots, seed).expect("fixture parameters are valid");
    run_session(&params, strategy).expect("fixture session runs")
}

pub fn evidence(p_a: f64, shots: usize, strategy: &Strategy, seed: u64) -> ResultEvidence {
    ResultEvidence::from_records(&transcript(p_a, shots, strategy, seed).records).expect("fixture transcript is complete")
}
