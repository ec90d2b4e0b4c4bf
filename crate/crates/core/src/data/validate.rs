use std::collections::{HashMap, HashSet};
use std::fmt;

use chrono::NaiveDate;
use serde::Serialize;

use super::records::{ClaimRecord, PolicyRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    PolicyDurationNonpositive,
    NegativeDeductible,
    NonpositiveLimitation,
    PolicyStartsAfterReportingDate,
    DuplicatePolicyId,
    DuplicateClaimId,
    UnknownPolicy,
    ReportBeforeOccurrence,
    SettlementBeforeReport,
    OccurrenceBeforePolicyStart,
    OccurrenceAfterCoverage,
    ReportAfterLimitation,
    NegativePayment,
    SettledBelowDeductible,
}

impl ViolationKind {
    pub fn describe(self) -> &'static str {
        match self {
            ViolationKind::PolicyDurationNonpositive => "policy duration nonpositive",
            ViolationKind::NegativeDeductible => "negative deductible",
            ViolationKind::NonpositiveLimitation => "limitation period nonpositive",
            ViolationKind::PolicyStartsAfterReportingDate => {
                "policy starts on or after the reporting date"
            }
            ViolationKind::DuplicatePolicyId => "duplicate policy_id",
            ViolationKind::DuplicateClaimId => "duplicate claim_id",
            ViolationKind::UnknownPolicy => "claim references an unknown policy",
            ViolationKind::ReportBeforeOccurrence => "claim reported before it occurred",
            ViolationKind::SettlementBeforeReport => "claim settled before it was reported",
            ViolationKind::OccurrenceBeforePolicyStart => "claim occurred before the policy started",
            ViolationKind::OccurrenceAfterCoverage => {
                "claim occurred after the policy end or the reporting date"
            }
            ViolationKind::ReportAfterLimitation => "claim reported after the limitation period",
            ViolationKind::NegativePayment => "negative paid amount",
            ViolationKind::SettledBelowDeductible => "settled amount below the deductible",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Policy or claim identifier the violation concerns.
    pub record: String,
    /// 1-based source row, 0 when unknown.
    pub row: usize,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "row {} (`{}`): {}", self.row, self.record, self.kind.describe())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }
}

/// Checks the date orderings and cross-references the registers must satisfy.
///
/// Policy end dates are exclusive, so a claim must occur in
/// `[start, end) ∩ (-∞, t]`. Claims reported after `t` are legitimate: they
/// are simply not known yet at `t`.
pub fn validate(
    policies: &[PolicyRecord],
    claims: &[ClaimRecord],
    reporting_date: NaiveDate,
    default_limitation_days: u32,
) -> ValidationReport {
    let mut violations = Vec::new();
    let mut push = |kind, record: &str, row| {
        violations.push(Violation {
            kind,
            record: record.to_string(),
            row,
        })
    };

    let mut by_id: HashMap<&str, &PolicyRecord> = HashMap::new();
    for p in policies {
        if by_id.insert(&p.policy_id, p).is_some() {
            push(ViolationKind::DuplicatePolicyId, &p.policy_id, p.row);
        }
        if p.start_date >= p.end_date {
            push(ViolationKind::PolicyDurationNonpositive, &p.policy_id, p.row);
        }
        if p.deductible < 0.0 {
            push(ViolationKind::NegativeDeductible, &p.policy_id, p.row);
        }
        if p.limitation_days == Some(0) {
            push(ViolationKind::NonpositiveLimitation, &p.policy_id, p.row);
        }
        if p.start_date >= reporting_date {
            push(ViolationKind::PolicyStartsAfterReportingDate, &p.policy_id, p.row);
        }
    }

    let mut claim_ids = HashSet::new();
    for c in claims {
        let id = c.claim_id.as_str();
        if !claim_ids.insert(id) {
            push(ViolationKind::DuplicateClaimId, id, c.row);
        }
        if c.report_date < c.occurrence_date {
            push(ViolationKind::ReportBeforeOccurrence, id, c.row);
        }
        if c.settlement_date.is_some_and(|s| s < c.report_date) {
            push(ViolationKind::SettlementBeforeReport, id, c.row);
        }
        if c.paid_to_date < 0.0 {
            push(ViolationKind::NegativePayment, id, c.row);
        }
        let Some(p) = by_id.get(c.policy_id.as_str()) else {
            push(ViolationKind::UnknownPolicy, id, c.row);
            continue;
        };
        if c.occurrence_date < p.start_date {
            push(ViolationKind::OccurrenceBeforePolicyStart, id, c.row);
        }
        if c.occurrence_date >= p.end_date || c.occurrence_date > reporting_date {
            push(ViolationKind::OccurrenceAfterCoverage, id, c.row);
        }
        let limit = p.limitation_days.unwrap_or(default_limitation_days) as i64;
        if (c.report_date - c.occurrence_date).num_days() > limit {
            push(ViolationKind::ReportAfterLimitation, id, c.row);
        }
        let settled_by_t = c.settled && c.report_date <= reporting_date;
        if settled_by_t && c.paid_to_date < p.deductible {
            push(ViolationKind::SettledBelowDeductible, id, c.row);
        }
    }
    ValidationReport { violations }
}
