mod common;

use breaklens::audit::{coefficient_audit, compare_series, search_vintage_date, weekly_candidates, DistanceMetric};
use breaklens::ingest::{aggregate_as_of, parse_timestamp, CategorySet, Flow, Hs2, RawTradeRecord, VintagePolicy};
use breaklens::MonthlySeries;
use chrono::Duration;
use common::*;
use rand::Rng;

fn noisy(seed: u64) -> MonthlySeries<f64> {
    random_series(&levels_spec(), &mut rng(seed))
}

#[test]
fn comparison_is_symmetric_and_affine_invariant() {
    for seed in 0..30 {
        let a = noisy(seed);
        let b = noisy(seed + 100);
        let ab = compare_series(&a, &b, aug17()).unwrap();
        let ba = compare_series(&b, &a, aug17()).unwrap();
        assert!(close(ab.correlation, ba.correlation, 1e-14));
        assert_eq!(ab.max_abs_diff, ba.max_abs_diff);
        assert!(close(ab.rms_diff, ba.rms_diff, 1e-12));
        assert_eq!(ab.mean_pre, (ba.mean_pre.1, ba.mean_pre.0));

        let moved = compare_series(&a.map(|v| 2.5 * v - 40.0), &b, aug17()).unwrap();
        assert!(close(moved.correlation, ab.correlation, 1e-12));
        let flipped = compare_series(&a.map(|v| -v), &b, aug17()).unwrap();
        assert!(close(flipped.correlation, -ab.correlation, 1e-12));
    }
}

#[test]
fn coefficient_audit_under_a_shift() {
    let spec = levels_spec();
    let a = noisy(7);
    let b = a.map(|v| v + 12.0);
    let audit = coefficient_audit(&a, &b, &spec).unwrap();
    assert!(close(
        audit.intercept.1.estimate - audit.intercept.0.estimate,
        12.0,
        1e-9
    ));
    for (x, y) in [audit.level_change, audit.slope_change, audit.pre_slope] {
        assert!(close(x.estimate, y.estimate, 1e-9));
        assert!(close(x.std_error, y.std_error, 1e-9));
    }
    assert!(close(audit.comparison.correlation, 1.0, 1e-12));
    assert!(close(audit.comparison.max_abs_diff, 12.0, 1e-9));
}

/// Records whose late arrivals make the reconstruction drift away from the
/// one as of `planted`.
fn planted_records() -> (Vec<RawTradeRecord>, MonthlySeries<f64>, chrono::DateTime<chrono::Utc>) {
    let mut r = rng(42);
    let start = parse_timestamp("2020-09-01T00:00:00Z").unwrap();
    let planted = parse_timestamp("2020-10-15T00:00:00Z").unwrap();
    let months = month_range((2016, 1), (2019, 12));
    let mut records = Vec::new();
    let mut late = 0i64;
    for (i, m) in months.iter().enumerate() {
        for partner in ["76", "170", "484"] {
            let submitted = if i % 5 == 0 && partner != "76" {
                // Late filings every third day over twelve weeks.
                late += 1;
                start + Duration::days((late * 3) % 84)
            } else {
                parse_timestamp("2020-01-15T00:00:00Z").unwrap()
            };
            records.push(RawTradeRecord {
                period: m,
                reporter: "862".into(),
                partner: partner.into(),
                hs2: Hs2::new(2).unwrap(),
                flow: Flow::MirrorImport,
                value_usd: r.random_range(1e6..9e6),
                first_submitted_at: submitted,
                last_updated_at: submitted,
            });
        }
    }
    let set = CategorySet::from_strs("S", &["02"]).unwrap();
    let target = aggregate_as_of(&records, Some(&VintagePolicy::as_of(planted)), &set, &months);
    (records, target, planted)
}

#[test]
fn search_finds_the_planted_vintage() {
    let (records, target, planted) = planted_records();
    let set = CategorySet::from_strs("S", &["02"]).unwrap();
    let cands = weekly_candidates(
        parse_timestamp("2020-09-03T00:00:00Z").unwrap(),
        parse_timestamp("2020-11-26T00:00:00Z").unwrap(),
    );
    assert!(cands.contains(&planted));
    for metric in [DistanceMetric::OneMinusCorrelation, DistanceMetric::RmsDifference] {
        let res = search_vintage_date(&records, &target, &cands, &set, metric).unwrap();
        assert_eq!(res.best, planted);
        let d: Vec<f64> = res.candidates.iter().map(|c| c.1).collect();
        let at = cands.iter().position(|c| *c == planted).unwrap();
        // RMS distance grows with every week away from the optimum.
        if metric == DistanceMetric::RmsDifference {
            assert!(d[..at].windows(2).all(|w| w[0] >= w[1]));
            assert!(d[at..].windows(2).all(|w| w[0] <= w[1]));
        }
        assert!(d[at].abs() < 1e-12);
    }
}

#[test]
fn search_is_order_free() {
    let (records, target, planted) = planted_records();
    let set = CategorySet::from_strs("S", &["02"]).unwrap();
    let mut cands = weekly_candidates(
        parse_timestamp("2020-09-03T00:00:00Z").unwrap(),
        parse_timestamp("2020-11-26T00:00:00Z").unwrap(),
    );
    cands.reverse();
    let res = search_vintage_date(&records, &target, &cands, &set, DistanceMetric::RmsDifference).unwrap();
    assert_eq!(res.best, planted);
    assert_eq!(res.candidates[0].0, *cands.first().unwrap());
}
