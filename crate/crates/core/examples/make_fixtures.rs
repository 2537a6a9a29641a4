//! Regenerates the synthetic files under `tests/fixtures`.
//!
//!     cargo run -p breaklens-core --example make_fixtures -- crates/core/tests/fixtures

use std::path::PathBuf;

use breaklens::ingest::{
    aggregate_as_of, parse_timestamp, write_records, CategorySet, Flow, Hs2, RawTradeRecord, VintagePolicy,
};
use breaklens::series::write_series_file;
use breaklens::{Month, MonthRange, MonthlySeries};
use chrono::{DateTime, Duration, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const REPORTER: &str = "862";
const PARTNERS: [(&str, f64); 2] = [("76", 0.6), ("170", 0.4)];

/// Set-level mean path in USD millions, `t` in months from Aug 2017.
fn mean_path(pre: (f64, f64), post: (f64, f64), t: i32) -> f64 {
    let t = t as f64;
    if t < 0.0 {
        pre.0 + pre.1 * t
    } else {
        post.0 + post.1 * t
    }
}

struct Chapter {
    code: u8,
    weight: f64,
    pre: (f64, f64),
    post: (f64, f64),
}

fn chapters() -> Vec<Chapter> {
    let food = ((60.0, -2.5), (25.0, 0.4));
    let cereals = ((200.0, -3.0), (60.0, 0.5));
    let medicine = ((40.0, -1.5), (8.0, 0.2));
    let mk = |code, weight, (pre, post): ((f64, f64), (f64, f64))| Chapter {
        code,
        weight,
        pre,
        post,
    };
    vec![
        mk(2, 0.35, food),
        mk(4, 0.30, food),
        mk(7, 0.20, food),
        mk(21, 0.15, food),
        mk(10, 0.5, cereals),
        mk(15, 0.3, cereals),
        mk(19, 0.2, cereals),
        mk(30, 1.0, medicine),
    ]
}

fn end_of_month(m: Month) -> DateTime<Utc> {
    let next = m.next();
    parse_timestamp(&format!("{:04}-{:02}-01", next.year(), next.month())).expect("valid date") - Duration::seconds(1)
}

fn trade_records() -> Vec<RawTradeRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(201_708);
    let noise = Normal::<f64>::new(0.0, 0.08).expect("valid sd");
    let cutoff = Month::new(2017, 8).expect("valid month");
    let months = MonthRange::new(Month::new(2012, 1).unwrap(), Month::new(2020, 12).unwrap()).unwrap();
    let late = [
        parse_timestamp("2020-10-20T09:00:00Z").unwrap(),
        parse_timestamp("2020-11-16T09:00:00Z").unwrap(),
        parse_timestamp("2020-12-09T09:00:00Z").unwrap(),
    ];
    let mut out = Vec::new();
    for m in months.iter() {
        let t = m.since(cutoff);
        for ch in chapters() {
            for (k, &(partner, share)) in PARTNERS.iter().enumerate() {
                let level = mean_path(ch.pre, ch.post, t) * ch.weight * share;
                let mut usd = (level * noise.sample(&mut rng).exp() * 1e6).round();
                if ch.code == 30 && m == Month::new(2019, 11).unwrap() {
                    usd = 0.0;
                }
                let lag_days: i64 = rng.random_range(25..120);
                let mut first = end_of_month(m) + Duration::days(lag_days);
                // The second partner files its late-2019 data during 4Q20.
                if k == 1 && m.year() == 2019 && m.month() >= 7 {
                    first = late[(m.month() as usize - 7) % 3];
                }
                // 2020 data trickles in through 2021.
                if m.year() == 2020 && k == 1 {
                    first = first.max(parse_timestamp("2021-03-01T00:00:00Z").unwrap());
                }
                let revision_days: i64 = rng.random_range(0..200);
                out.push(RawTradeRecord {
                    period: m,
                    reporter: REPORTER.into(),
                    partner: partner.into(),
                    hs2: Hs2::new(ch.code).unwrap(),
                    flow: Flow::MirrorImport,
                    value_usd: usd,
                    first_submitted_at: first,
                    last_updated_at: first + Duration::days(revision_days),
                });
            }
        }
    }
    // A consignment reported in two rows.
    let split = out
        .iter()
        .position(|r| r.period == Month::new(2016, 3).unwrap() && r.hs2 == Hs2::new(2).unwrap())
        .expect("record present");
    let half = (out[split].value_usd / 2.0).round();
    out[split].value_usd -= half;
    let mut dup = out[split].clone();
    dup.value_usd = half;
    out.insert(split + 1, dup);
    out
}

/// 2017 chapter values proportional to the published food shares (percent).
fn share_records() -> Vec<RawTradeRecord> {
    let shares = [
        (2, 3.2),
        (3, 0.2),
        (4, 5.9),
        (6, 0.0),
        (7, 4.1),
        (8, 0.5),
        (10, 38.9),
        (11, 5.5),
        (12, 2.4),
        (13, 0.3),
        (14, 0.0),
        (15, 11.0),
        (16, 3.5),
        (17, 8.0),
        (18, 0.4),
        (19, 9.7),
        (20, 1.2),
        (21, 3.8),
        (22, 1.0),
        (24, 0.4),
    ];
    let stamp = parse_timestamp("2018-02-15T00:00:00Z").unwrap();
    let mut out = Vec::new();
    for (code, pct) in shares {
        for (partner, part) in PARTNERS {
            out.push(RawTradeRecord {
                period: Month::new(2017, 6).unwrap(),
                reporter: REPORTER.into(),
                partner: partner.into(),
                hs2: Hs2::new(code).unwrap(),
                flow: Flow::MirrorImport,
                value_usd: pct * part * 1e7,
                first_submitted_at: stamp,
                last_updated_at: stamp,
            });
        }
    }
    out
}

/// Two-decimal copy of a series, as read off a chart.
fn rounded(s: &MonthlySeries<f64>) -> MonthlySeries<f64> {
    s.map(|v| (v * 100.0).round() / 100.0)
}

fn main() -> breaklens::Result<()> {
    let dir = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "crates/core/tests/fixtures".into()),
    );
    std::fs::create_dir_all(&dir).expect("create fixture dir");

    let records = trade_records();
    write_records(std::fs::File::create(dir.join("trade.csv")).expect("create"), &records)?;
    write_records(
        std::fs::File::create(dir.join("table2_2017.csv")).expect("create"),
        &share_records(),
    )?;

    let window = MonthRange::new(Month::new(2015, 4).unwrap(), Month::new(2019, 12).unwrap())?;
    let oct = VintagePolicy::as_of(parse_timestamp("2020-10-01T00:00:00Z")?);
    for (name, set) in [
        ("extracted_food.csv", CategorySet::anova_food()),
        ("extracted_medicines.csv", CategorySet::medicines()),
    ] {
        let s = aggregate_as_of(&records, Some(&oct), &set, &window);
        write_series_file(&dir.join(name), &rounded(&s))?;
    }
    Ok(())
}
