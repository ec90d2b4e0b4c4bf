//! Register ingestion and censored-sample construction.
//!
//! Policies and claims are read from CSV registers, checked for ordering
//! violations, expanded into one [`CensoredObservation`] per policy per time
//! unit, and grouped onto a [`Grid`] as counts per censoring pattern.

mod grid;
mod grouped;
mod records;
mod sample;
mod validate;

pub use grid::Grid;
pub use grouped::{group, group_counted, group_iter, CensoringSet, GroupedSample, PatternClass, PatternKey, Rect};
pub use records::{
    parse_registers, read_claims, read_policies, write_claims, write_policies, ClaimRecord,
    PolicyRecord, Registers,
};
pub use sample::{
    build_censored_sample, read_sample_csv, write_counted_sample_csv, write_sample_csv, Censoring, CensoredObservation, DelayInfo,
    SampleBuilder, SampleConfig, Status, TimeUnit,
};
pub use validate::{validate, ValidationReport, Violation, ViolationKind};
