//! Simulation and analysis toolkit for a two-party quantum seal: Bob sends
//! single qubits, Alice announces either a bit or a measurement result, and
//! an eavesdropper tries to learn the bit without being caught.
//!
//! - [`qubit`]: Bloch-vector states, channels, POVMs and their affine maps.
//! - [`protocol`]: the honest parties and session parameters.
//! - [`adversary`]: eavesdropping strategies and their per-shot evolutions.
//! - [`infotheory`]: announcement laws and Eve's information about the bit.
//! - [`verifier`]: likelihood tests on result announcements and exposure.
//! - [`simnet`]: in-process and TCP sessions, wire format and transcripts.
//! - [`acceptance`]: the end-to-end acceptance checks.

pub mod acceptance;
pub mod adversary;
pub mod error;
pub mod infotheory;
pub mod numfmt;
pub mod protocol;
pub mod qubit;
pub mod simnet;
pub mod verifier;

pub use adversary::{BasisPolicy, EvolutionString, Strategy};
pub use error::{Error, Result};
pub use numfmt::Sig12;
pub use infotheory::{EnumerationCaps, ExactRoute, MiMethod, MutualInformationResult};
pub use protocol::{required_shots, Announcement, Bit, SessionParams, ShotRecord};
pub use qubit::{EffectiveEvolution, QubitState};
pub use simnet::{read_transcript, run_session, write_transcript, SessionAbort, SessionTranscript};
pub use verifier::{ExposureReport, ExposureSearch, ResultEvidence, SearchBudget, SearchFamily, Threshold};
