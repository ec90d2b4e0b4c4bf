//! Premiums, frequencies, reserves and IBNR statistics derived from a fitted
//! distribution estimate.

mod ibnr;
mod interval;
mod premium;
mod report;

pub use ibnr::{
    ibnr_schedule, portfolio_ibnr, window_stats, ExposureProfile, IbnrStats, OutstandingGroup,
    ScheduleRow, UnreportedGroup, Window, WindowStats,
};
pub use interval::{tolerance_interval, z_multiplier, QuantileMode};
pub use premium::{
    average_severity, claim_frequency_daily, claims_reserve, claims_reserve_from_premium,
    net_premium_daily,
};
pub use report::{ocr, reserve_report, write_schedule_csv, Ocr, ReportOptions, ReserveReport};
