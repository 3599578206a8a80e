use proptest::prelude::*;

use nlshape::artifacts::{field_csv, parse_field_csv};
use nlshape::config::Config;
use nlshape::geometry::Point;
use nlshape::mesh::io::{interface_csv, parse_interface_csv};
use nlshape::optimizer::{History, IterationRecord};
use nlshape::system::Objective;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6f64, any::<f64>().prop_filter("finite", |v| v.is_finite())]
}

fn record() -> impl Strategy<Value = IterationRecord> {
    (0usize..10_000, finite(), finite(), 0.0..1e9f64, 0.0..1.0f64, 0usize..40, 1e-3..1e6f64, 0usize..5).prop_map(
        |(iter, tracking, perimeter, grad_norm, alpha, ls_rounds, mu_max, restarts)| IterationRecord {
            iter,
            objective: Objective { tracking, perimeter },
            grad_norm,
            alpha,
            ls_rounds,
            mu_max,
            restarts,
        },
    )
}

proptest! {
    #[test]
    fn history_csv_round_trips(records in prop::collection::vec(record(), 0..20)) {
        let h = History { records };
        prop_assert_eq!(History::parse_csv(&h.to_csv()).unwrap(), h);
    }

    #[test]
    fn interface_csv_round_trips(coords in prop::collection::vec((finite(), finite()), 1..50)) {
        let pts: Vec<Point> = coords.into_iter().map(|(x, y)| Point::new(x, y)).collect();
        prop_assert_eq!(parse_interface_csv(&interface_csv(&pts)).unwrap(), pts);
    }

    #[test]
    fn field_csv_round_trips(values in prop::collection::vec(finite(), 0..100)) {
        prop_assert_eq!(parse_field_csv(&field_csv(&values)).unwrap(), values);
    }

    #[test]
    fn config_text_round_trips(
        delta in 0.01..0.3f64,
        eps in 1e-8..1.0f64,
        n in 4usize..60,
        seed in any::<u64>(),
        ratio in 0.0..0.9f64,
        calibrate in prop::option::of(0.01..2.0f64),
    ) {
        let calibrate = calibrate.map_or("off".to_string(), |c| c.to_string());
        let text = format!(
            "kernel.delta = {delta}\nproblem.eps = {eps}\nproblem.f1 = 100\nproblem.f2 = 1\nmesh.n = {n}\n\
             rng.seed = {seed}\nlame.mu_min_ratio = {ratio}\nlame.calibrate_step = {calibrate}\n"
        );
        let cfg = Config::parse(&text).unwrap();
        prop_assert_eq!(Config::parse(&cfg.to_text()).unwrap(), cfg);
    }
}
