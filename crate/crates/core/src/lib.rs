//! Proof of sequential memory execution.
//!
//! A run fills a hypercube arena from a seed, then performs `K` steps of
//! dependent reads and one bound write each, committing the arena root
//! after every step. The prover opens a Fiat-Shamir sample of steps along
//! with the lineage of every block they read; the verifier re-executes
//! those steps from the openings alone.
//!
//! ```
//! use posme::{gen, prove, verify, Digest, Params, RunParams, Strictness};
//!
//! let seed = posme::hashing::derive_seed(b"task", b"nonce");
//! let run = RunParams::with_density(8, 4, 4).unwrap();
//! let (log, _) = gen(&seed, &run).unwrap();
//! let proof = prove(&log, 8, 2, Strictness::Toy).unwrap();
//! let params = Params::new(run, 8, 2).unwrap();
//! assert!(verify(&proof.to_bytes(), &seed, &params, Strictness::Toy).accepted);
//! ```

pub mod analysis;
pub mod arena;
pub mod bench;
mod codec;
pub mod commitment;
pub mod engine;
pub mod error;
pub mod hashing;
pub mod params;
pub mod proof;
pub mod prover;
pub mod rundir;
pub mod verifier;

pub use engine::{gen, RunLog};
pub use error::{FormatError, ParamError, RunError};
pub use hashing::{Digest, Dim, Vertex};
pub use params::{Params, RunParams, Strictness};
pub use proof::Proof;
pub use prover::{prove, ProveError};
pub use verifier::{verify, Check, VerifyReport};

/// Default float for analysis outputs.
pub type Real = f64;
/// Exact scalar for the rational-capable bounds.
pub type Exact = num_rational::Ratio<i64>;

pub type MixingReport = analysis::MixingReport<Real>;
pub type MixingReportF32 = analysis::MixingReport<f32>;
