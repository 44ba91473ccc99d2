//! Trajectory error statistics against ground truth.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::se3::{wrap_angle, Pose};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("trajectory lengths differ: {estimate} estimated vs {truth} ground-truth poses")]
    LengthMismatch { estimate: usize, truth: usize },
    #[error("{labels} labels for {poses} poses")]
    LabelMismatch { labels: usize, poses: usize },
    #[error("trajectories are empty")]
    Empty,
}

/// Signed per-axis error of one estimate, `estimate - truth`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AxisError {
    pub t: f64,
    pub ex: f64,
    pub ey: f64,
    pub ez: f64,
    pub eyaw: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SegmentError {
    pub steps: usize,
    pub ate_mean: f64,
    pub ate_rmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryErrorReport {
    pub ate_mean: f64,
    pub ate_rmse: f64,
    pub series: Vec<AxisError>,
    pub segments: BTreeMap<String, SegmentError>,
}

impl TrajectoryErrorReport {
    /// Translation error norm at each step.
    pub fn translation_errors(&self) -> impl Iterator<Item = f64> + '_ {
        self.series.iter().map(|e| (e.ex * e.ex + e.ey * e.ey + e.ez * e.ez).sqrt())
    }
}

fn mean_and_rmse(errors: impl Iterator<Item = f64>) -> (usize, f64, f64) {
    let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
    for e in errors {
        n += 1;
        sum += e;
        sq += e * e;
    }
    (n, sum / n as f64, (sq / n as f64).sqrt())
}

/// Absolute translation error, step by step, without any alignment of the two
/// trajectories. `times` may be empty, in which case the step index is used.
pub fn ate(estimate: &[Pose], truth: &[Pose], times: &[f64]) -> Result<TrajectoryErrorReport, MetricsError> {
    ate_labeled::<&str>(estimate, truth, times, &[])
}

/// [`ate`] plus per-label segment statistics; `labels` is empty or one per pose.
pub fn ate_labeled<S: AsRef<str>>(
    estimate: &[Pose],
    truth: &[Pose],
    times: &[f64],
    labels: &[S],
) -> Result<TrajectoryErrorReport, MetricsError> {
    if estimate.len() != truth.len() {
        return Err(MetricsError::LengthMismatch { estimate: estimate.len(), truth: truth.len() });
    }
    if estimate.is_empty() {
        return Err(MetricsError::Empty);
    }
    if !labels.is_empty() && labels.len() != estimate.len() {
        return Err(MetricsError::LabelMismatch { labels: labels.len(), poses: estimate.len() });
    }
    if !times.is_empty() && times.len() != estimate.len() {
        return Err(MetricsError::LengthMismatch { estimate: estimate.len(), truth: times.len() });
    }
    let series: Vec<AxisError> = estimate
        .iter()
        .zip(truth)
        .enumerate()
        .map(|(i, (e, g))| {
            let d = e.position - g.position;
            AxisError {
                t: times.get(i).copied().unwrap_or(i as f64),
                ex: d.x,
                ey: d.y,
                ez: d.z,
                eyaw: wrap_angle(e.yaw() - g.yaw()),
            }
        })
        .collect();
    let mut report = TrajectoryErrorReport { ate_mean: 0.0, ate_rmse: 0.0, series, segments: BTreeMap::new() };
    let (_, mean, rmse) = mean_and_rmse(report.translation_errors());
    report.ate_mean = mean;
    report.ate_rmse = rmse;

    let errors: Vec<f64> = report.translation_errors().collect();
    let mut grouped: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (label, e) in labels.iter().zip(&errors) {
        grouped.entry(label.as_ref().to_string()).or_default().push(*e);
    }
    for (label, errs) in grouped {
        let (steps, ate_mean, ate_rmse) = mean_and_rmse(errs.into_iter());
        report.segments.insert(label, SegmentError { steps, ate_mean, ate_rmse });
    }
    Ok(report)
}
