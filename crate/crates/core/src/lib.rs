//! Nonparametric estimation of insurance cash flows from censored policy and
//! claims registers.
//!
//! The pipeline turns policy/claims registers into a per-exposure-unit censored
//! sample of `(claim size, reporting delay)`, fits the quasi-empirical (qED)
//! self-consistent estimate of their joint distribution on a grid, and derives
//! net premiums, claim frequencies, claims reserves, IBNR schedules and OCR from
//! it. Classical triangle methods and a Monte Carlo accuracy study sit alongside
//! as cross-checks.
//!
//! ## Modules
//!
//! - [`data`]: register parsing, validation, censored-sample construction, grouping.
//! - [`estimator`]: the qED/EM fit on a grid and the resulting distribution.
//! - [`analytics`]: premiums, frequencies, reserves, IBNR windows and schedules, OCR.
//! - [`classical`]: chain-ladder, Bornhuetter–Ferguson, frequency–severity.
//! - [`simulation`]: synthetic portfolios and the IBNR accuracy study.

pub mod analytics;
pub mod classical;
pub mod data;
pub mod error;
pub mod estimator;
pub mod numeric;
pub mod simulation;

pub use error::{Error, Result};
