//! Simulation and exact analysis of random walks with time-dependent and
//! random transition probabilities on finitely generated groups.
//!
//! The crate is organized bottom-up:
//!
//! * [`group`]: canonical forms, word metric and balls for lattices,
//!   the discrete Heisenberg group, free groups and cyclic quotients.
//! * [`measure`]: finitely supported probability measures with
//!   convolution, translation, total variation, entropy and moments.
//! * [`env`]: the stationary base system driving the step measures and the
//!   exact convolution stream along one environment orbit.
//! * [`walk`]: path sampling (quenched and annealed), the skew transform and
//!   finite-horizon conditional chains on free groups.
//! * [`entropy`]: entropy profiles, asymptotic entropy estimators, tail
//!   analysis, rate of escape, growth and the fundamental inequality.
//! * [`boundary`]: limit ends, ray deviation and hitting measures on the
//!   boundary of free groups.

pub mod boundary;
pub mod entropy;
pub mod env;
pub mod error;
pub mod group;
pub mod measure;
pub mod rng;
pub mod stats;
pub mod walk;

pub use env::{EnvState, EnvironmentKind, EnvironmentModel};
pub use error::{Error, Result};
pub use group::{GroupElement, GroupKind, GroupModel, Word, WordLength};
pub use measure::SparseMeasure;
pub use walk::{PathEnsemble, PathSample, SamplingMode};
