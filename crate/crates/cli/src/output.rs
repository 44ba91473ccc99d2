//! CSV and JSON artifacts of a run.

use std::collections::BTreeMap;
use std::io::Write;

use haptic_loc::filter::EstimateMode;
use haptic_loc::metrics::{SegmentError, TrajectoryErrorReport};
use haptic_loc::se3::Pose;
use haptic_loc::LocalizationRun;
use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

#[derive(Debug, Serialize, Deserialize)]
pub struct PoseRow {
    pub k: usize,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub qw: f64,
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
    pub yaw: f64,
}

impl PoseRow {
    fn new(k: usize, t: f64, p: &Pose) -> Self {
        let q = p.orientation.quaternion();
        Self { k, t, x: p.position.x, y: p.position.y, z: p.position.z, qw: q.w, qx: q.i, qy: q.j, qz: q.k, yaw: p.yaw() }
    }

    pub fn pose(&self) -> Pose {
        let q = UnitQuaternion::from_quaternion(Quaternion::new(self.qw, self.qx, self.qy, self.qz));
        Pose::new(Vector3::new(self.x, self.y, self.z), q)
    }
}

pub fn write_poses<W: Write>(sink: W, poses: &[Pose], times: &[f64]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    for (k, (p, t)) in poses.iter().zip(times).enumerate() {
        w.serialize(PoseRow::new(k, *t, p))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_estimate<W: Write>(sink: W, poses: &[Pose], modes: &[EstimateMode], times: &[f64]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["k", "t", "x", "y", "z", "qw", "qx", "qy", "qz", "yaw", "mode"])?;
    for (k, ((p, m), t)) in poses.iter().zip(modes).zip(times).enumerate() {
        let r = PoseRow::new(k, *t, p);
        let mut rec: Vec<String> = vec![r.k.to_string()];
        rec.extend([r.t, r.x, r.y, r.z, r.qw, r.qx, r.qy, r.qz, r.yaw].iter().map(f64::to_string));
        rec.push(m.as_str().to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_poses<R: std::io::Read>(source: R) -> csv::Result<(Vec<Pose>, Vec<f64>)> {
    let mut poses = Vec::new();
    let mut times = Vec::new();
    for row in csv::Reader::from_reader(source).deserialize::<PoseRow>() {
        let row = row?;
        poses.push(row.pose());
        times.push(row.t);
    }
    Ok((poses, times))
}

/// Signed errors of the best, gated and odometry trajectories at every step.
pub fn write_error_trace<W: Write>(
    sink: W,
    best: &TrajectoryErrorReport,
    estimate: &TrajectoryErrorReport,
    odometry: &TrajectoryErrorReport,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["k".to_string(), "t".to_string()];
    for name in ["best", "estimate", "odometry"] {
        header.extend(["ex", "ey", "ez", "eyaw"].iter().map(|a| format!("{name}_{a}")));
    }
    w.write_record(&header)?;
    for (k, ((b, e), o)) in best.series.iter().zip(&estimate.series).zip(&odometry.series).enumerate() {
        let mut rec = vec![k.to_string(), b.t.to_string()];
        for s in [b, e, o] {
            rec.extend([s.ex, s.ey, s.ez, s.eyaw].iter().map(f64::to_string));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct ErrorSummary {
    pub ate_mean: f64,
    pub ate_rmse: f64,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub segments: BTreeMap<String, SegmentError>,
}

impl From<&TrajectoryErrorReport> for ErrorSummary {
    fn from(r: &TrajectoryErrorReport) -> Self {
        Self { ate_mean: r.ate_mean, ate_rmse: r.ate_rmse, segments: r.segments.clone() }
    }
}

#[derive(Debug, Serialize)]
pub struct RunMetrics {
    pub events: usize,
    /// Ancestry of the final best particle.
    pub best: ErrorSummary,
    /// Per-step gated estimate.
    pub estimate: ErrorSummary,
    pub odometry: ErrorSummary,
    /// `1 - best / odometry` on mean ATE.
    pub improvement: f64,
    pub full_pose_fraction: f64,
    pub resampled_steps: usize,
    pub all_outlier_steps: usize,
}

impl RunMetrics {
    pub fn new(run: &LocalizationRun, best: &TrajectoryErrorReport, estimate: &TrajectoryErrorReport, odometry: &TrajectoryErrorReport) -> Self {
        let steps = run.steps.len().max(1) as f64;
        Self {
            events: run.ground_truth.len(),
            best: best.into(),
            estimate: estimate.into(),
            odometry: odometry.into(),
            improvement: 1.0 - best.ate_mean / odometry.ate_mean,
            full_pose_fraction: run.steps.iter().filter(|s| s.mode == EstimateMode::FullPose).count() as f64 / steps,
            resampled_steps: run.steps.iter().filter(|s| s.resampled).count(),
            all_outlier_steps: run.steps.iter().filter(|s| s.all_outlier).count(),
        }
    }
}
