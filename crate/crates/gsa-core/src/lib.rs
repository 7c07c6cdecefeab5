//! Core engine for two-round secure aggregation with groupwise keys.
//!
//! Users mask their input vectors with keys shared by groups of exactly `s`
//! users, survive arbitrary dropouts down to `u` survivors, and the server
//! recovers exactly the sum of the first-round survivors' inputs while
//! learning nothing else. All arithmetic is exact over a prime field `F_q`.
//!
//! The crate is organized bottom-up:
//!
//! - [`combin`]: subset enumeration and binomial conventions
//! - [`field`] / [`matrix`]: exact arithmetic and dense linear algebra over `F_q`
//! - [`params`]: scheme parameters and the achievable rate region
//! - [`family`] / [`usermatrix`] / [`witness`]: the coefficient-vector
//!   construction, per-user second-round matrices, and a deterministic
//!   decodability witness
//! - [`keys`] / [`rounds`] / [`transcript`]: key material, the two round
//!   encoders, and the server decoder
//! - [`view`] / [`leakage`] / [`sweep`]: independent verification of
//!   decodability and zero leakage
//! - [`fixture`]: JSON interchange for fixtures, key files, and transcripts

pub mod combin;
pub mod family;
pub mod field;
pub mod fixture;
pub mod keys;
pub mod leakage;
pub mod matrix;
pub mod params;
pub mod rounds;
pub mod sweep;
pub mod transcript;
pub mod usermatrix;
pub mod view;
pub mod witness;

pub use combin::Group;
pub use family::CoefficientFamily;
pub use matrix::FieldMatrix;
pub use params::SchemeParams;
pub use usermatrix::UserMatrixSet;
