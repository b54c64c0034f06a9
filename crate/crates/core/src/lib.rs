//! Multi-task game-state prediction for Rugby League.
//!
//! A wide-and-deep mixture density network predicts the joint distribution
//! of a tackle's outcome (meters, try on the tackle, try in the set, match
//! winner and final scoreline) from one set of parameters. Analytics for team
//! value over average, set momentum, big plays, scoreline traces and
//! last-tackle decisions are layered on top. A synthetic league generator with
//! known ground truth serves as the verification oracle.

pub mod analytics;
pub mod decision;
pub mod engine;
pub mod error;
pub mod features;
pub mod inference;
pub mod io;
pub mod mdn;
pub mod nn;
pub mod reports;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
