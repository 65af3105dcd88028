//! Abelian congruences, centrality, weak difference terms and difference algebras
//! for finite algebras given by operation tables.

pub mod algebra;
pub mod centrality;
pub mod closure;
pub mod congruence;
pub mod diffalg;
pub mod doc;
pub mod error;
pub mod fixtures;
pub mod genlab;
pub mod partition;
pub mod random;
pub mod report;
pub mod simdiv;
pub mod term;
pub mod wdt;

pub use error::{Error, Result};
