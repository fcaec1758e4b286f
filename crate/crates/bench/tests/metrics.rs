use webplan_bench::{gamma, success_rate, MetricError};

/// Reactive, tree search and planner success rates (percent) per website and
/// per difficulty, with the expected gap closure.
const TABLE: [(&str, f64, f64, f64, f64); 6] = [
    ("classifieds", 16.8, 26.5, 22.6, 59.8),
    ("reddit", 15.3, 20.5, 18.6, 63.5),
    ("shopping", 19.4, 29.0, 26.5, 74.0),
    ("easy", 28.8, 42.3, 37.4, 63.7),
    ("medium", 16.4, 22.2, 24.1, 132.8),
    ("hard", 10.7, 14.9, 12.7, 47.6),
];

#[test]
fn gamma_reproduces_published_values() {
    for (row, reactive, tree, planner, want) in TABLE {
        let got = gamma(reactive, tree, planner).unwrap();
        assert!((got - want).abs() <= 0.1 + 1e-9, "{row}: got {got}, want {want}");
        // Fractions and percentages agree.
        let frac = gamma(reactive / 100.0, tree / 100.0, planner / 100.0).unwrap();
        assert!((frac - got).abs() <= 0.1 + 1e-9, "{row}");
    }
}

#[test]
fn gamma_needs_a_gap() {
    assert_eq!(gamma(0.5, 0.5, 0.7), Err(MetricError::DegenerateGap));
}

#[test]
fn rates_need_records() {
    assert_eq!(success_rate(&[]), Err(MetricError::EmptyInput));
}
