//! Development-triangle reserving used as a cross-check.

mod methods;
mod triangle;

pub use methods::{
    bornhuetter_ferguson, chain_ladder, frequency_severity, reasonable_range, BornhuetterFerguson,
    ChainLadder, ReasonableRange,
};
pub use triangle::{build_count_triangle, build_triangle, read_payments, Payment, Period, Triangle};
