//! Truthful welfare auctions for interdependent values that are submodular
//! over binary signals (SOS).
//!
//! The crate builds a monotone allocation rule using only the probabilities
//! `0` and `1/2` whose expected welfare is at least half the optimum at every
//! signal profile, derives critical-signal payments that make it ex post
//! IC-IR, and ships exhaustive exact-arithmetic checkers for every property.
//! It also covers matroid winner constraints and an experimental extension
//! to integer signal grids.
//!
//! ```
//! use sos_auction::{allocation::allocate, valuation::Setting, signal::SignalSet};
//! use sos_auction::Rational;
//!
//! // v1 = 1 + s1, v2 = 10·s1 (bitmask order: {}, {1}, {2}, {1,2}).
//! let setting = Setting::from_integer_tables(&[&[1, 2, 1, 2], &[0, 10, 0, 10]]).unwrap();
//! let rule = allocate(&setting).unwrap().rule;
//! assert_eq!(rule.prob(1, SignalSet::from_bidders([0])), Rational::new(1, 2));
//! ```

pub mod allocation;
pub mod cli;
pub mod io;
pub mod lattice;
pub mod matroid;
pub mod payments;
pub mod rational;
pub mod seed;
pub mod signal;
pub mod valuation;
pub mod verification;

pub use rational::Rational;
