//! Random walk loop soups on `Z^d`, `d >= 3`.
//!
//! The crate provides lattice geometry, killed-walk potential theory on
//! finite carriers, exact loop masses, Poisson loop soup samplers, the
//! excursion decomposition between two sets, the renormalization geometry of
//! good and bad boxes and the exploration used for local uniqueness.

pub mod error;
pub mod excursions;
pub mod explore;
pub mod lattice;
pub mod loops;
pub mod potential;
pub mod renorm;
pub mod rng;
pub mod soup;
pub mod stats;

pub use error::{Error, Result};
