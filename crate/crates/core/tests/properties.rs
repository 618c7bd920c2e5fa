mod common;

use proptest::prelude::*;
use rtbarrier_core::{
    build_clustered_sample, build_model_dataset, read_csv, Competition, Event, GGParams, Gender, GenderFilter,
    ModelFilter, RTRecord, Round,
};

fn params() -> impl Strategy<Value = GGParams> {
    (0.05f64..2.0, 0.02f64..1.0, prop_oneof![-4.0f64..-0.05, 0.05f64..4.0])
        .prop_map(|(mu, sigma, nu)| GGParams::new(mu, sigma, nu).unwrap())
}

proptest! {
    #[test]
    fn cdf_scale_equivariance(p in params(), c in 0.1f64..10.0, r in 0.2f64..5.0) {
        let scaled = GGParams::new(p.mu * c, p.sigma, p.nu).unwrap();
        let y = p.mu * r;
        let (a, b) = (p.cdf(y), scaled.cdf(c * y));
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300).max(1e-3), "{a} vs {b}");
    }

    #[test]
    fn cdf_nondecreasing(p in params(), r in 0.01f64..10.0, step in 1e-4f64..1.0) {
        let y = p.mu * r;
        prop_assert!(p.cdf(y + step * p.mu) >= p.cdf(y));
    }

    #[test]
    fn cdf_derivative_is_density(p in params(), q in 0.05f64..0.95) {
        let y = p.quantile(q).unwrap();
        let h = 1e-5 * y;
        let fd = (p.cdf(y + h) - p.cdf(y - h)) / (2.0 * h);
        let d = p.density(y).unwrap();
        prop_assert!((fd - d).abs() <= 1e-5 * d, "{fd} vs {d}");
    }

    #[test]
    fn gamma_special_case(mu in 0.05f64..5.0, sigma in 0.05f64..2.0, r in 0.05f64..5.0) {
        let p = GGParams::new(mu, sigma, 1.0).unwrap();
        let shape = 1.0 / (sigma * sigma);
        let scale = mu * sigma * sigma;
        let y = mu * r;
        let oracle = statrs::distribution::Gamma::new(shape, 1.0 / scale).unwrap();
        let expect = statrs::distribution::Continuous::ln_pdf(&oracle, y);
        prop_assert!((p.log_density(y).unwrap() - expect).abs() < 1e-10);
    }

    #[test]
    fn log_density_agrees_with_independent_form(p in params(), q in 0.01f64..0.99) {
        let y = p.quantile(q).unwrap();
        let expect = common::gg_log_density(y, p.mu, p.sigma, p.nu);
        prop_assert!((p.log_density(y).unwrap() - expect).abs() < 1e-9 * expect.abs().max(1.0));
    }
}

#[test]
fn log_density_finite_over_extreme_grid() {
    for &theta in &[1e-2f64, 1.0, 1e2, 1e4, 1e6] {
        for &nu in &[-2.0f64, -0.5, 0.5, 2.0] {
            let sigma = 1.0 / theta.sqrt() / nu.abs();
            let p = GGParams::new(1.0, sigma, nu).unwrap();
            for &r in &[1e-3, 0.1, 1.0, 10.0, 1e3] {
                let v = p.log_density(r).unwrap();
                assert!(!v.is_nan() && v < f64::INFINITY, "theta {theta} nu {nu} y {r}: {v}");
            }
        }
    }
}

fn record() -> impl Strategy<Value = RTRecord> {
    (
        0usize..8,
        prop_oneof![Just(Gender::Men), Just(Gender::Women)],
        prop_oneof![
            Just(Competition::National2022),
            Just(Competition::World2019),
            Just(Competition::World2022),
            Just(Competition::World2023),
            Just(Competition::WorldOther(2017)),
        ],
        prop_oneof![Just(Round::Heat), Just(Round::Semifinal), Just(Round::Final)],
        0usize..3,
        -50i32..300,
        any::<bool>(),
    )
        .prop_map(|(a, gender, competition, round, h, rt, dq)| {
            let year = match competition {
                Competition::World2019 => 2019,
                Competition::World2023 => 2023,
                Competition::WorldOther(y) => y,
                _ => 2022,
            };
            RTRecord {
                athlete_id: format!("a{a}"),
                gender,
                event: Event::Dash100,
                competition,
                year,
                round,
                heat_id: format!("{competition}-{gender}-{round}-{h}"),
                rt_seconds: rt as f64 / 1000.0,
                dq,
                line: 0,
            }
        })
}

proptest! {
    #[test]
    fn clustered_sample_invariants(records in proptest::collection::vec(record(), 0..80)) {
        let selections = [
            (Competition::National2022, Competition::World2022),
            (Competition::World2019, Competition::World2022),
            (Competition::World2023, Competition::World2022),
        ];
        for (t, c) in selections {
            for g in [GenderFilter::Men, GenderFilter::Women, GenderFilter::Pooled] {
                if let Ok(s) = build_clustered_sample(&records, t, c, g) {
                    prop_assert!(s.n_clusters() >= 2);
                    let mut total = 0;
                    for cl in s.clusters() {
                        let tc = cl.treatment_count();
                        prop_assert!(tc > 0 && tc < cl.len());
                        prop_assert!(cl.values.iter().all(|v| *v > 0.0));
                        total += cl.len();
                    }
                    prop_assert_eq!(s.n_observations(), total);
                    let expected = records
                        .iter()
                        .filter(|r| g.accepts(r.gender) && r.rt_seconds > 0.0)
                        .filter(|r| (r.competition == t || r.competition == c)
                            && s.clusters().iter().any(|cl| cl.athlete_id == r.athlete_id))
                        .count();
                    prop_assert_eq!(total, expected);
                }
            }
        }
    }

    #[test]
    fn model_filter_drops_negatives_and_is_idempotent(
        records in proptest::collection::vec(record(), 1..80),
        include_2022 in any::<bool>(),
        include_dq in any::<bool>(),
    ) {
        let filter = ModelFilter { include_2022, include_positive_dq: include_dq, ..ModelFilter::new(Gender::Men) };
        if let Ok(d) = build_model_dataset(&records, &filter) {
            prop_assert!(d.values().all(|v| v > 0.0));
            prop_assert!(include_2022 || !d.venues.contains(&2022));
            // Filter the surviving records again.
            let kept: Vec<RTRecord> = records.iter().filter(|r| {
                r.competition.is_world() && r.gender == Gender::Men && r.rt_seconds > 0.0
                    && filter.rounds.contains(&r.round) && (include_2022 || r.year != 2022)
                    && (include_dq || !r.dq)
            }).cloned().collect();
            prop_assert_eq!(kept.len(), d.len());
            prop_assert_eq!(build_model_dataset(&kept, &filter).unwrap(), d);
        }
    }

    #[test]
    fn csv_round_trip(records in proptest::collection::vec(record(), 1..40)) {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &records {
            w.serialize(r).unwrap();
        }
        let bytes = w.into_inner().unwrap();
        let back = read_csv(bytes.as_slice()).unwrap();
        prop_assert_eq!(back.len(), records.len());
        for (a, b) in back.iter().zip(&records) {
            prop_assert_eq!(&a.athlete_id, &b.athlete_id);
            prop_assert_eq!(a.competition, b.competition);
            prop_assert_eq!(a.rt_seconds, b.rt_seconds);
            prop_assert_eq!(a.dq, b.dq);
        }
    }
}
