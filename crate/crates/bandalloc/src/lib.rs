//! Throughput regions and operational schedules for opportunistic
//! spectrum sharing with buffered users.
//!
//! A set of licensed bands, each owned by one buffered primary transmitter,
//! is shared with a set of buffered secondary users: a user assigned to a
//! band senses it and transmits only when the primary queue is empty. This
//! crate answers, for the exclusive per-slot assignment discipline and two
//! baselines, the questions that matter for such a system:
//!
//! * **Which arrival rates are sustainable?** [`stability`] traces the
//!   envelope of the stable-throughput region by linear programming, with a
//!   closed form for the two-band, two-user case.
//! * **How do you actually run the optimum?** [`birkhoff`] converts optimal
//!   assignment marginals into a sampled per-slot permutation schedule.
//! * **Is coordination worth it?** [`baselines`] computes the envelopes of
//!   uncoordinated random selection and of static assignment, which the
//!   exclusive discipline provably contains.
//! * **Does theory match the queues?** [`sim`] replays any of the three
//!   systems slot by slot and classifies each queue's stability
//!   empirically.
//!
//! [`model`] holds the underlying per-slot probabilities (Rayleigh outage,
//! band availability) computed from physical link parameters or supplied
//! directly as tables.
//!
//! The `book/` directory of the repository is an mdBook walking through the
//! concepts; its code snippets compile and run as doc-tests of this crate.

// Validation deliberately writes `!(x > 0.0)` so that NaN fails the check;
// the suggested `x <= 0.0` would let NaN through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod birkhoff;
mod error;
pub mod model;
pub mod sim;
pub mod simplex;
pub mod stability;

pub use error::{Error, Result};

// Run every fenced Rust snippet in the book as a doc-test so the guide and
// the API cannot drift apart.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/stability.md")]
    mod stability {}
    #[doc = include_str!("../../../book/src/schedules.md")]
    mod schedules {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
