//! Differentially private answering of adaptively chosen convex-minimization
//! (CM) queries over a sensitive dataset.
//!
//! A CM query is a convex loss `l(theta; x)` over a parameter domain `Theta`;
//! its answer is the parameter minimizing the dataset-averaged loss. The
//! engine in [`engine`] answers long adaptive sequences of such queries under
//! an overall `(epsilon, delta)` differential-privacy budget by maintaining a
//! public hypothesis histogram over the data universe, routing each query
//! through a sparse-vector test, and spending privacy budget only on the few
//! queries where the hypothesis is materially wrong.
//!
//! Crate layout:
//!
//! - [`universe`]: finite data universes, datasets as index rows, histograms,
//!   and replace-one-row adjacency.
//! - [`loss`]: convex loss families with gradients, domains, and the scaling
//!   constant `S` that bounds update magnitudes and query sensitivity.
//! - [`erm`]: non-private empirical risk minimization and the two error
//!   functionals used throughout (excess risk of an answer, and of a
//!   hypothesis database).
//! - [`mech`]: the DP building blocks (Laplace noise, the online sparse-vector
//!   mechanism, a net-based exponential-mechanism oracle for a single CM
//!   query, and the adaptive-composition accountant).
//! - [`engine`]: the online multiplicative-weights engine tying it together.
//!
//! Randomness is always drawn from caller-supplied seeded generators; there is
//! no global mutable state. The noise primitives are research-grade (plain
//! floating-point samplers), not hardened against floating-point side channels.

pub mod engine;
pub mod erm;
pub mod loss;
pub mod mech;
pub mod universe;

pub use engine::{Engine, ParameterSchedule, Transcript, TranscriptRecord};
pub use loss::{LossFamily, LossQuery, ParameterDomain};
pub use mech::{Branch, PrivacyBudget};
pub use universe::{Dataset, Histogram, Universe};
