mod common;

use breaklens::ingest::{
    aggregate_as_of, aggregate_series, apply_vintage, parse_records, write_records, CategorySet, Flow, Hs2,
    RawTradeRecord, VintagePolicy,
};
use breaklens::Error;
use chrono::{DateTime, Duration, TimeZone, Utc};
use common::*;
use proptest::prelude::*;

fn epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2016, 1, 1, 0, 0, 0).unwrap()
}

fn record() -> impl Strategy<Value = RawTradeRecord> {
    (
        0i32..48,
        prop::sample::select(vec!["76", "170", "484"]),
        prop::sample::select(vec![2u8, 4, 10, 15, 21, 30, 87]),
        0u64..5_000_000_000,
        0i64..6 * 365 * 86_400,
        0i64..400 * 86_400,
    )
        .prop_map(|(m, partner, hs2, usd, submit, revise)| {
            let first = epoch() + Duration::seconds(submit);
            RawTradeRecord {
                period: aug17().offset(m - 24),
                reporter: "862".into(),
                partner: partner.into(),
                hs2: Hs2::new(hs2).unwrap(),
                flow: Flow::MirrorImport,
                value_usd: usd as f64,
                first_submitted_at: first,
                last_updated_at: first + Duration::seconds(revise),
            }
        })
}

fn cutoff() -> impl Strategy<Value = DateTime<Utc>> {
    (0i64..6 * 365 * 86_400).prop_map(|s| epoch() + Duration::seconds(s))
}

fn months() -> breaklens::MonthRange {
    month_range((2015, 8), (2019, 7))
}

fn all_codes() -> CategorySet {
    CategorySet::from_strs("ALL", &["02", "04", "10", "15", "21", "30", "87"]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn later_vintages_never_lose_value(
        records in prop::collection::vec(record(), 0..60),
        a in cutoff(),
        b in cutoff(),
    ) {
        let (early, late) = if a <= b { (a, b) } else { (b, a) };
        let set = all_codes();
        let s1 = aggregate_as_of(&records, Some(&VintagePolicy::as_of(early)), &set, &months());
        let s2 = aggregate_as_of(&records, Some(&VintagePolicy::as_of(late)), &set, &months());
        for ((_, x), (_, y)) in s1.iter().zip(s2.iter()) {
            prop_assert!(x.unwrap() <= y.unwrap());
        }
        let kept_early = apply_vintage(&records, &VintagePolicy::as_of(early));
        let kept_late = apply_vintage(&records, &VintagePolicy::as_of(late));
        prop_assert!(kept_early.iter().all(|r| kept_late.contains(r)));
        prop_assert!(kept_early.iter().all(|r| r.first_submitted_at <= early));
        prop_assert_eq!(
            kept_late.len() - kept_early.len(),
            records.iter().filter(|r| r.first_submitted_at > early && r.first_submitted_at <= late).count()
        );
    }

    #[test]
    fn aggregation_is_additive(
        left in prop::collection::vec(record(), 0..40),
        right in prop::collection::vec(record(), 0..40),
        when in cutoff(),
    ) {
        let policy = VintagePolicy::as_of(when);
        let both: Vec<RawTradeRecord> = left.iter().chain(&right).cloned().collect();
        let set = all_codes();
        let a = aggregate_as_of(&left, Some(&policy), &set, &months());
        let b = aggregate_as_of(&right, Some(&policy), &set, &months());
        let ab = aggregate_as_of(&both, Some(&policy), &set, &months());
        // Disjoint category sets add up to their union.
        let food = CategorySet::from_strs("F", &["02", "04", "10", "15", "21"]).unwrap();
        let rest = CategorySet::from_strs("R", &["30", "87"]).unwrap();
        let f = aggregate_as_of(&both, Some(&policy), &food, &months());
        let r = aggregate_as_of(&both, Some(&policy), &rest, &months());
        for m in months().iter() {
            let total = ab.get(m).unwrap();
            let tol = 1e-9 * (1.0 + total);
            prop_assert!(close(total, a.get(m).unwrap() + b.get(m).unwrap(), tol));
            prop_assert!(close(total, f.get(m).unwrap() + r.get(m).unwrap(), tol));
        }
    }

    #[test]
    fn write_then_parse_is_identity(records in prop::collection::vec(record(), 0..30)) {
        let mut buf = Vec::new();
        write_records(&mut buf, &records).unwrap();
        let back = parse_records(buf.as_slice()).unwrap();
        prop_assert_eq!(back, records);
    }
}

#[test]
fn missing_months_aggregate_to_zero() {
    let s = aggregate_series(&[], &all_codes(), &months());
    assert_eq!(s.len(), 48);
    assert!(s.iter().all(|(_, v)| v == Some(0.0)));
}

#[test]
fn parse_errors_name_row_and_field() {
    let header = "period,reporter_code,partner_code,hs2_code,value_usd,first_submitted_at,last_updated_at\n";
    let good = "201701,862,76,02,100,2017-03-01T00:00:00Z,2017-04-01T00:00:00Z\n";
    let cases = [
        ("2017-1,862,76,02,100,2017-03-01,2017-04-01\n", "period"),
        ("201701,862,76,2x,100,2017-03-01,2017-04-01\n", "hs2_code"),
        ("201701,862,76,02,-5,2017-03-01,2017-04-01\n", "value_usd"),
        ("201701,862,76,02,5,yesterday,2017-04-01\n", "first_submitted_at"),
        ("201701,862,76,02,5,2017-03-01,2017-02-01\n", "last_updated_at"),
    ];
    for (bad, field) in cases {
        let text = format!("{header}{good}{good}{bad}");
        match parse_records(text.as_bytes()) {
            Err(Error::Parse { row, field: f, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(f, field);
            }
            other => panic!("{field}: {other:?}"),
        }
    }
}
