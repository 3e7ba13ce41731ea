//! Factorized-transducer toolkit.
//!
//! Everything needed to study blank-factorized transducers with an explicit
//! internal language model (ILM) at desk scale, on synthetic corpora:
//!
//! - [`lattice`] — log-domain alignment lattice: full-sum loss, enumeration
//!   oracle, forward-backward gradients, and the band-restricted variant.
//! - [`factorization`] — per-cell blank/non-blank score assembly from
//!   factorized components, training normalization and the two-weight
//!   fused decode score.
//! - [`ilm`] — the explicit internal LM: scoring interface, a small
//!   trainable reference LM with manual gradients, text-only pretraining,
//!   and freezing.
//! - [`decode`] — frame-synchronous transducer beam search with ILM fusion,
//!   per-hypothesis Viterbi alignments, length-normalization toggle, and a
//!   shallow-fusion baseline mode.
//! - [`mwer`] — expected-word-error training over N-best lists, word edit
//!   distance, alignment-derived band construction, and the combined
//!   objective.
//! - [`harness`] — toy models, synthetic data, training recipes, sweep and
//!   evaluation machinery behind the `ftkit` CLI.
//!
//! The `examples/` directory has one runnable example per capability; see
//! the README for the tour.

pub mod decode;
pub mod factorization;
pub mod gradcheck;
pub mod harness;
pub mod ilm;
pub mod lattice;
pub mod math;
pub mod mwer;
pub mod rng;

pub use factorization::{FactorizedScores, FusionWeights};
pub use ilm::LanguageModel;
pub use lattice::{BandMask, LogProbLattice};
