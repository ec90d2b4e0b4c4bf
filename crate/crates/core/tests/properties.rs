mod common;

use chrono::Days;
use proptest::prelude::*;

use qed_reserving::analytics::{
    average_severity, claim_frequency_daily, ibnr_schedule, net_premium_daily, portfolio_ibnr,
    reserve_report, window_stats, ExposureProfile, QuantileMode, ReportOptions, Window,
};
use qed_reserving::classical::{chain_ladder, Triangle};
use qed_reserving::data::{
    group, group_counted, Censoring, GroupedSample, PatternKey, SampleBuilder,
};
use qed_reserving::estimator::{fit, FitConfig};

fn builder(w: &common::World, t: chrono::NaiveDate) -> SampleBuilder {
    SampleBuilder::new(&w.policies, &w.claims_at(t), t, &common::config()).unwrap()
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sample_size_is_conserved(seed in any::<u64>()) {
        let w = common::world(seed, 8);
        let b = builder(&w, w.t);
        let expected: i64 = w
            .policies
            .iter()
            .map(|p| (p.end_date.min(w.t + Days::new(1)) - p.start_date).num_days().max(0))
            .sum();
        prop_assert_eq!(b.len() as i64, expected);
        prop_assert_eq!(b.observations().count() as i64, expected);
        let counted = b.counted_observations();
        prop_assert_eq!(counted.iter().map(|r| r.1).sum::<u64>() as i64, expected);
        let g = common::grid();
        let direct = group(&b.observations().collect::<Vec<_>>(), &g).unwrap();
        let merged = group_counted(counted, &g).unwrap();
        prop_assert_eq!(direct.len() as i64, expected);
        prop_assert_eq!(direct, merged);
    }

    #[test]
    fn each_unit_falls_in_one_consistent_case(seed in any::<u64>()) {
        let w = common::world(seed, 8);
        for obs in builder(&w, w.t).observations() {
            match obs.censoring {
                Censoring::Settled { amount, delay } => {
                    prop_assert!(delay <= obs.limitation && delay <= obs.elapsed);
                    prop_assert!(amount >= obs.deductible);
                }
                Censoring::Outstanding { delay, .. } => {
                    prop_assert!(delay <= obs.limitation && delay <= obs.elapsed);
                }
                Censoring::NotReported => prop_assert!(obs.elapsed < obs.limitation),
                Censoring::ZeroClaim => prop_assert!(obs.elapsed >= obs.limitation),
            }
        }
    }

    #[test]
    fn unreported_sets_cover_the_region_below_the_deductible(seed in any::<u64>()) {
        let w = common::world(seed, 8);
        let g = common::grid();
        for obs in builder(&w, w.t).observations() {
            let key = PatternKey::from_observation(&obs, &g).unwrap();
            let cells = key.censoring_set(&g).cells(&g);
            if let PatternKey::NotReported { deductible_split, limit_bin, .. } = key {
                prop_assert!(cells.contains(&g.atom()));
                for i in 0..deductible_split as usize {
                    prop_assert!(g.s_bounds(i).1 <= obs.deductible);
                    for j in 0..=limit_bin as usize {
                        prop_assert!(cells.contains(&g.cell(i, j)));
                    }
                }
            } else {
                prop_assert!(!cells.contains(&g.atom()) || key == PatternKey::ZeroClaim);
            }
        }
    }

    #[test]
    fn later_reporting_date_never_widens_a_set(seed in any::<u64>(), later in 1u64..120) {
        let w = common::world(seed, 6);
        let g = common::grid();
        let t2 = w.t + Days::new(later);
        let early: Vec<_> = builder(&w, w.t).observations().collect();
        let late: Vec<_> = builder(&w, t2).observations().collect();
        // Units are listed policy by policy in ascending order, so the earlier
        // sample is the per-policy prefix of the later one.
        let mut k_late = 0;
        let mut k_early = 0;
        for p in &w.policies {
            let days = |t: chrono::NaiveDate| {
                (p.end_date.min(t + Days::new(1)) - p.start_date).num_days().max(0) as usize
            };
            let (n_early, n_late) = (days(w.t), days(t2));
            for u in 0..n_early {
                let a = PatternKey::from_observation(&early[k_early + u], &g).unwrap();
                let b = PatternKey::from_observation(&late[k_late + u], &g).unwrap();
                let sa = a.censoring_set(&g).cells(&g);
                let sb = b.censoring_set(&g).cells(&g);
                prop_assert!(sb.iter().all(|c| sa.contains(c)), "{:?} -> {:?}", a, b);
            }
            k_early += n_early;
            k_late += n_late;
        }
    }

    #[test]
    fn grouping_is_independent_of_order_and_partition(seed in any::<u64>(), cut in 0usize..1000) {
        let w = common::world(seed, 8);
        let g = common::grid();
        let obs: Vec<_> = builder(&w, w.t).observations().collect();
        let all = group(&obs, &g).unwrap();
        let mut reversed = obs.clone();
        reversed.reverse();
        prop_assert_eq!(&group(&reversed, &g).unwrap(), &all);
        let cut = cut.min(obs.len());
        let mut merged = group(&obs[..cut], &g).unwrap();
        merged.merge(&group(&obs[cut..], &g).unwrap()).unwrap();
        prop_assert_eq!(&merged, &all);
        let mut regrouped = GroupedSample::new(g.clone());
        for (k, c) in all.patterns() {
            regrouped.insert(*k, *c).unwrap();
        }
        prop_assert_eq!(&regrouped, &all);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reserve_identities_hold(seed in any::<u64>(), step in 1u32..30) {
        let w = common::world(seed, 10);
        let g = common::grid();
        let b = builder(&w, w.t);
        let counted = b.counted_observations();
        let grouped = group_counted(counted.iter().copied(), &g).unwrap();
        prop_assume!(!grouped.is_empty());
        let est = fit(&grouped, &FitConfig::default()).unwrap();
        let profile = ExposureProfile::from_observations(b.observations());

        let premium = net_premium_daily(&est);
        if let Some(sev) = average_severity(&est) {
            prop_assert!(rel_close(sev * claim_frequency_daily(&est), premium, 1e-9));
        }
        let report = reserve_report(&est, &profile, &ReportOptions::default()).unwrap();
        prop_assert!(rel_close(
            report.claims_reserve,
            premium * report.exposure as f64 - report.paid_total,
            1e-9
        ));
        prop_assert!(rel_close(
            report.ocr_by_difference,
            report.claims_reserve - report.ibnr_mean,
            1e-9
        ));
        prop_assert!(report.ibnr_lower <= report.ibnr_mean && report.ibnr_mean <= report.ibnr_upper);
        prop_assert!(report.ibnr_lower >= 0.0);

        let edges: Vec<u32> = (0..=60).step_by(step as usize).collect();
        let rows = ibnr_schedule(&est, &profile, &edges, 0.95, QuantileMode::TwoSided).unwrap();
        let total = portfolio_ibnr(&est, &profile, Window::all()).unwrap();
        let mean: f64 = rows.iter().map(|r| r.mean).sum();
        let count: f64 = rows.iter().map(|r| r.expected_count).sum();
        prop_assert!(rel_close(mean, total.mean, 1e-9), "{} vs {}", mean, total.mean);
        prop_assert!(rel_close(count, total.expected_count, 1e-9));

        // Widening a window never lowers the report probability.
        for (obs, _) in counted.iter().filter(|(o, _)| matches!(o.censoring, Censoring::NotReported)).take(5) {
            let mut last = 0.0;
            for end in [1, 3, 7, 20, 60] {
                let s = window_stats(&est, obs, Window::new(0, Some(end)).unwrap()).unwrap();
                prop_assert!(s.report_probability >= last - 1e-15);
                last = s.report_probability;
            }
        }
    }
}

fn triangle_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..7).prop_flat_map(|n| {
        let rows: Vec<_> = (0..n)
            .map(|i| {
                (1.0f64..100.0, prop::collection::vec(1.0f64..1.6, n - i - 1))
            })
            .collect();
        rows.prop_map(|rows| {
            rows.into_iter()
                .map(|(first, links)| {
                    let mut row = vec![first];
                    for f in links {
                        row.push(row.last().unwrap() * f);
                    }
                    row
                })
                .collect()
        })
    })
}

fn to_triangle(rows: Vec<Vec<f64>>) -> Triangle {
    let n = rows.len();
    let labels: Vec<String> = (1..=n).map(|k| k.to_string()).collect();
    Triangle::new(labels.clone(), labels, rows).unwrap()
}

proptest! {
    #[test]
    fn chain_ladder_factors_lie_within_link_ratios(rows in triangle_strategy()) {
        let tri = to_triangle(rows.clone());
        let cl = chain_ladder(&tri).unwrap();
        for (j, f) in cl.factors.iter().enumerate() {
            let links: Vec<f64> = rows.iter().filter(|r| r.len() > j + 1).map(|r| r[j + 1] / r[j]).collect();
            let lo = links.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = links.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(*f >= lo - 1e-12 && *f <= hi + 1e-12);
        }
        for row in &cl.completed {
            prop_assert!(row.windows(2).all(|w| w[1] >= w[0]));
        }
        prop_assert!(cl.reserve >= -1e-9);
    }

    #[test]
    fn chain_ladder_is_scale_equivariant(rows in triangle_strategy(), c in 0.01f64..1000.0) {
        let tri = to_triangle(rows);
        let a = chain_ladder(&tri).unwrap();
        let b = chain_ladder(&tri.scaled(c)).unwrap();
        for (x, y) in a.factors.iter().zip(&b.factors) {
            prop_assert!(rel_close(*x, *y, 1e-12));
        }
        prop_assert!(rel_close(a.reserve * c, b.reserve, 1e-9));
    }
}
