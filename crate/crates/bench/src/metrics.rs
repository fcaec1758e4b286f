//! Aggregate metrics over episode records.

use thiserror::Error;
use webplan_core::plan::RunRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("no records to aggregate")]
    EmptyInput,
    #[error("tree search and reactive success rates are equal; gap closure is undefined")]
    DegenerateGap,
}

/// Mean reward.
pub fn success_rate(records: &[RunRecord]) -> Result<f64, MetricError> {
    mean(records.iter().map(|r| f64::from(r.reward)))
}

/// Mean milestone fraction. Tasks without milestones already carry their
/// reward in `milestones_satisfied`.
pub fn completion_rate(records: &[RunRecord]) -> Result<f64, MetricError> {
    mean(records.iter().map(|r| r.milestones_satisfied))
}

/// Share of the reactive-to-tree-search gap closed by the planner, in
/// percent, rounded to one decimal. Inputs may be fractions or percentages
/// as long as all three use the same unit.
pub fn gamma(sr_reactive: f64, sr_tree: f64, sr_planner: f64) -> Result<f64, MetricError> {
    let gap = sr_tree - sr_reactive;
    if gap == 0.0 {
        return Err(MetricError::DegenerateGap);
    }
    Ok(round1(100.0 * (sr_planner - sr_reactive) / gap))
}

pub(crate) fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

pub(crate) fn mean(values: impl Iterator<Item = f64>) -> Result<f64, MetricError> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        return Err(MetricError::EmptyInput);
    }
    Ok(sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_endpoints() {
        assert_eq!(gamma(0.2, 0.4, 0.4), Ok(100.0));
        assert_eq!(gamma(0.2, 0.4, 0.2), Ok(0.0));
        assert_eq!(gamma(0.3, 0.3, 0.5), Err(MetricError::DegenerateGap));
    }

    #[test]
    fn empty_mean() {
        assert_eq!(success_rate(&[]), Err(MetricError::EmptyInput));
        assert_eq!(completion_rate(&[]), Err(MetricError::EmptyInput));
    }
}
