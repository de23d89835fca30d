//! Joint user-activity detection and channel estimation for cooperative
//! multi-cell grant-free access with temporally correlated (Markov) activity.
//!
//! The crate is organised bottom-up:
//!
//! - [`netgen`]: hexagonal multi-cell geometry, path loss and user-centric
//!   cooperation sets.
//! - [`traffic`]: two-state Markov activity traces.
//! - [`phy`]: pilots, block-fading channels and received pilot signals.
//! - [`window`]: the generalized sliding-window detection schedule.
//! - [`inference`]: the message-passing engine (activity refinement across
//!   frames and APs, GAMP channel estimation, EM noise learning, LLR decisions).
//! - [`fronthaul`]: quantize-and-forward and detect-and-forward schemes.
//! - [`se`]: state evolution for the GAMP channel estimator.
//! - [`oracle`]: exact references used to validate the approximations.
//! - [`harness`]: experiment configuration, Monte-Carlo trials and reports.

// `!(x > 0.0)` is used on purpose so that NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fronthaul;
pub mod harness;
pub mod inference;
pub mod netgen;
pub mod oracle;
pub mod phy;
pub mod rng;
pub mod se;
pub mod special;
pub mod traffic;
pub mod window;

pub use error::{Error, Result};
pub use num_complex::Complex64;
