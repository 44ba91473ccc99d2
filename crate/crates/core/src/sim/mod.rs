//! Deterministic generation of ground truth, drifting odometry and contacts.
//!
//! The robot is kinematic: the base follows a planar path, one foot is moved
//! per support phase and placed at its nominal offset on the ground, and the
//! base height and tilt follow the plane through the four planted feet.

mod eventlog;
mod probe;
mod terrain;
mod walk;

use nalgebra::{Matrix3, UnitQuaternion, Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::{Foot, QuadrupedState};
use crate::maps::MapError;
use crate::se3::{wrap_angle, Covariance6, Pose};

pub use eventlog::{read_event_log, write_event_log, EventLogError};
pub use probe::{probe_walls, simulate_probing, ProbeAction, ProbeScript, WallSpec};
pub use terrain::{build_terrain, Segment, TerrainSpec, DEFAULT_BLOCK_HEIGHTS};
pub use walk::simulate_walk;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid terrain: {0}")]
    Terrain(String),
    #[error("invalid simulation input: {0}")]
    Invalid(String),
    #[error("waypoint ({x}, {y}) lies outside the map")]
    WaypointOffMap { x: f64, y: f64 },
    #[error("foot placement ({x}, {y}) lies outside the map")]
    FootOffMap { x: f64, y: f64 },
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Gait geometry of a statically stable crawl: one foot moves per support phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaitSpec {
    /// Distance a foot travels per swing; the base advances a quarter of it per phase.
    pub step_length: f64,
    /// Nominal foot positions in the base frame, ordered LF, RF, LH, RH.
    pub foot_offsets: [[f64; 3]; 4],
    /// Largest in-place heading change per support phase, radians.
    pub turn_step: f64,
    /// Seconds between support phases.
    pub phase_duration: f64,
}

impl Default for GaitSpec {
    fn default() -> Self {
        Self::new(0.24, 0.6, 0.4, 0.45)
    }
}

impl GaitSpec {
    pub fn new(step_length: f64, stance_length: f64, stance_width: f64, base_height: f64) -> Self {
        let (hl, hw) = (stance_length / 2.0, stance_width / 2.0);
        Self {
            step_length,
            foot_offsets: [[hl, hw, -base_height], [hl, -hw, -base_height], [-hl, hw, -base_height], [-hl, -hw, -base_height]],
            turn_step: 0.1,
            phase_duration: 0.5,
        }
    }

    pub fn stride(&self) -> f64 {
        self.step_length / 4.0
    }

    pub fn stance_width(&self) -> f64 {
        (self.foot_offsets[Foot::LF.index()][1] - self.foot_offsets[Foot::RF.index()][1]).abs()
    }

    pub fn base_height(&self) -> f64 {
        -self.foot_offsets.iter().map(|o| o[2]).sum::<f64>() / 4.0
    }

    fn offset(&self, foot: Foot) -> Vector3<f64> {
        Vector3::from(self.foot_offsets[foot.index()])
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.step_length > 0.0) {
            return Err(SimError::Invalid("step_length must be positive".into()));
        }
        if !(self.turn_step > 0.0) {
            return Err(SimError::Invalid("turn_step must be positive".into()));
        }
        Ok(())
    }
}

/// Odometry error model, per support phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    /// Standard deviations on `[x, y, z, yaw]` (meters, radians).
    pub std_dev: [f64; 4],
    /// Deterministic drift per phase on z (meters).
    pub bias_z: f64,
    /// Deterministic drift per phase on yaw (radians).
    pub bias_yaw: f64,
    /// Reported covariance is `inflation * std_dev^2`.
    pub cov_inflation: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { std_dev: [0.006, 0.006, 0.002, 0.002], bias_z: 0.001, bias_yaw: 0.0004, cov_inflation: 2.0 }
    }
}

impl NoiseSpec {
    pub fn zero() -> Self {
        Self { std_dev: [0.0; 4], bias_z: 0.0, bias_yaw: 0.0, cov_inflation: 1.0 }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.std_dev.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(SimError::Invalid("noise standard deviations must be finite and >= 0".into()));
        }
        if !(self.cov_inflation >= 0.0 && self.cov_inflation.is_finite()) {
            return Err(SimError::Invalid("cov_inflation must be finite and >= 0".into()));
        }
        if !(self.bias_z.is_finite() && self.bias_yaw.is_finite()) {
            return Err(SimError::Invalid("biases must be finite".into()));
        }
        Ok(())
    }

    /// Per-phase covariance reported alongside the odometry.
    pub fn reported_covariance(&self) -> Covariance6 {
        let [sx, sy, sz, syaw] = self.std_dev.map(|s| self.cov_inflation * s * s);
        Covariance6::from_diagonal([sx, sy, sz, 0.0, 0.0, syaw]).expect("diagonal of squares is PSD")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Walk,
    Probe,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Walk => "walk",
            EventKind::Probe => "probe",
        }
    }
}

/// One filter-trigger event: the true base pose and what the robot reports.
#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub k: usize,
    pub kind: EventKind,
    pub ground_truth: Pose,
    /// Odometry pose, reported covariance, kinematics and contacts.
    pub measured: QuadrupedState,
}

impl Event {
    /// The same kinematics and contacts attached to the true base pose.
    pub fn ground_truth_state(&self) -> QuadrupedState {
        QuadrupedState { odom_pose: self.ground_truth, ..self.measured.clone() }
    }

    /// Contact points in the world frame according to ground truth.
    pub fn true_contacts(&self) -> Vec<(Foot, Vector3<f64>)> {
        self.measured.in_contact().map(|(f, p)| (f, self.ground_truth.transform_point(p))).collect()
    }
}

/// Ordered events; the first one initializes the filter.
pub type EventLog = Vec<Event>;

/// Drift applied to ground truth to produce odometry: a world-frame yaw
/// rotation plus translation, `odom = Rz(yaw) * gt + offset`.
#[derive(Clone, Debug)]
struct Odometry {
    noise: NoiseSpec,
    distributions: [Normal<f64>; 4],
    yaw_error: f64,
    offset: Vector3<f64>,
    last_truth: Option<Vector3<f64>>,
}

impl Odometry {
    fn new(noise: &NoiseSpec, initial_offset: Vector3<f64>) -> Self {
        Self {
            distributions: noise.std_dev.map(|s| Normal::new(0.0, s).expect("validated std dev")),
            noise: noise.clone(),
            yaw_error: 0.0,
            offset: initial_offset,
            last_truth: None,
        }
    }

    fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        let (s, c) = self.yaw_error.sin_cos();
        Vector3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z)
    }

    /// Accumulate one phase of drift (when `moved`) and express `truth` as odometry.
    fn observe<R: Rng + ?Sized>(&mut self, truth: &Pose, moved: bool, rng: &mut R) -> Pose {
        if moved {
            if self.last_truth.is_some() {
                // displacement seen through the old yaw error, then the new error applied to the whole pose
                let before = self.rotate(&truth.position);
                let noise = Vector3::new(
                    self.distributions[0].sample(rng),
                    self.distributions[1].sample(rng),
                    self.distributions[2].sample(rng) + self.noise.bias_z,
                );
                self.yaw_error += self.distributions[3].sample(rng) + self.noise.bias_yaw;
                let after = self.rotate(&truth.position);
                self.offset += noise + before - after;
            }
        }
        self.last_truth = Some(truth.position);
        let orientation = if self.yaw_error != 0.0 {
            UnitQuaternion::new_normalize(
                (UnitQuaternion::from_axis_angle(&Vector3::z_axis(), self.yaw_error) * truth.orientation).into_inner(),
            )
        } else {
            truth.orientation
        };
        Pose::new(self.rotate(&truth.position) + self.offset, orientation)
    }
}

/// Planar walking state shared by both scenarios.
#[derive(Clone, Debug)]
struct Walker<'a, G: Fn(f64, f64) -> Option<f64>> {
    gait: &'a GaitSpec,
    ground: G,
    position: Vector2<f64>,
    heading: f64,
    feet: [Vector3<f64>; 4],
    next_swing: usize,
}

/// Crawl order: LH, LF, RH, RF.
const SWING_ORDER: [Foot; 4] = [Foot::LH, Foot::LF, Foot::RH, Foot::RF];

impl<'a, G: Fn(f64, f64) -> Option<f64>> Walker<'a, G> {
    fn new(gait: &'a GaitSpec, ground: G, position: Vector2<f64>, heading: f64) -> Result<Self, SimError> {
        let mut walker = Self { gait, ground, position, heading, feet: [Vector3::zeros(); 4], next_swing: 0 };
        for foot in Foot::ALL {
            walker.feet[foot.index()] = walker.placement(foot)?;
        }
        Ok(walker)
    }

    fn placement(&self, foot: Foot) -> Result<Vector3<f64>, SimError> {
        let offset = self.gait.offset(foot);
        let (s, c) = self.heading.sin_cos();
        let x = self.position.x + c * offset.x - s * offset.y;
        let y = self.position.y + s * offset.x + c * offset.y;
        let z = (self.ground)(x, y).ok_or(SimError::FootOffMap { x, y })?;
        Ok(Vector3::new(x, y, z))
    }

    /// Swing the next foot in the crawl cycle to its nominal place.
    fn swing(&mut self) -> Result<(), SimError> {
        let foot = SWING_ORDER[self.next_swing];
        self.feet[foot.index()] = self.placement(foot)?;
        self.next_swing = (self.next_swing + 1) % 4;
        Ok(())
    }

    /// Base pose from the planted feet: height above their mean, tilt from the
    /// least-squares plane through them.
    fn base_pose(&self) -> Pose {
        let mean_z = self.feet.iter().map(|f| f.z).sum::<f64>() / 4.0;
        let mut normal_eq = Matrix3::zeros();
        let mut rhs = Vector3::zeros();
        for f in &self.feet {
            let row = Vector3::new(1.0, f.x - self.position.x, f.y - self.position.y);
            normal_eq += row * row.transpose();
            rhs += row * f.z;
        }
        let (gx, gy) = match normal_eq.lu().solve(&rhs) {
            Some(sol) => (sol[1], sol[2]),
            None => (0.0, 0.0),
        };
        let normal = Vector3::new(-gx, -gy, 1.0).normalize();
        let (s, c) = self.heading.sin_cos();
        let local = Vector3::new(c * normal.x + s * normal.y, -s * normal.x + c * normal.y, normal.z);
        let roll = (-local.y).asin();
        let pitch = local.x.atan2(local.z);
        Pose::new(
            Vector3::new(self.position.x, self.position.y, mean_z + self.gait.base_height()),
            UnitQuaternion::from_euler_angles(roll, pitch, self.heading),
        )
    }

    fn foot_in_base(&self, base: &Pose) -> [Vector3<f64>; 4] {
        self.feet.map(|f| base.inverse_transform_point(&f))
    }

    /// Phases needed to turn to `target` heading and the per-phase increment.
    fn turn_plan(&self, target: f64) -> (usize, f64) {
        let error = wrap_angle(target - self.heading);
        if error.abs() < 1e-9 {
            return (0, 0.0);
        }
        let phases = (error.abs() / self.gait.turn_step).ceil() as usize;
        (phases, error / phases as f64)
    }
}

/// Shared bookkeeping that turns walker states into events.
struct Recorder<'r, R: Rng + ?Sized> {
    odometry: Odometry,
    reported_cov: Covariance6,
    phase_duration: f64,
    events: EventLog,
    rng: &'r mut R,
}

impl<'r, R: Rng + ?Sized> Recorder<'r, R> {
    fn new(noise: &NoiseSpec, initial_offset: Vector3<f64>, phase_duration: f64, rng: &'r mut R) -> Self {
        Self {
            odometry: Odometry::new(noise, initial_offset),
            reported_cov: noise.reported_covariance(),
            phase_duration,
            events: Vec::new(),
            rng,
        }
    }

    fn record(&mut self, kind: EventKind, truth: Pose, foot_in_base: [Vector3<f64>; 4], contact: [bool; 4]) {
        let moved = kind == EventKind::Walk;
        let odom_pose = self.odometry.observe(&truth, moved, self.rng);
        let k = self.events.len();
        self.events.push(Event {
            k,
            kind,
            ground_truth: truth,
            measured: QuadrupedState {
                odom_pose,
                odom_cov: self.reported_cov,
                foot_in_base,
                contact,
                timestamp: k as f64 * self.phase_duration,
            },
        });
    }

    fn record_walk<G: Fn(f64, f64) -> Option<f64>>(&mut self, walker: &Walker<'_, G>) {
        let base = walker.base_pose();
        self.record(EventKind::Walk, base, walker.foot_in_base(&base), [true; 4]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_noise_odometry_is_exact() {
        let mut odom = Odometry::new(&NoiseSpec::zero(), Vector3::zeros());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for k in 0..20 {
            let truth = Pose::from_xyz_rpy(0.1 * k as f64, -0.03 * k as f64, 0.45, 0.02, -0.1, 0.05 * k as f64);
            assert_eq!(odom.observe(&truth, true, &mut rng), truth);
        }
    }

    #[test]
    fn yaw_error_rotates_subsequent_motion() {
        let noise = NoiseSpec { std_dev: [0.0; 4], bias_z: 0.0, bias_yaw: 0.1, cov_inflation: 1.0 };
        let mut odom = Odometry::new(&noise, Vector3::zeros());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = odom.observe(&Pose::from_translation(0.0, 0.0, 0.0), true, &mut rng);
        let b = odom.observe(&Pose::from_translation(1.0, 0.0, 0.0), true, &mut rng);
        let c = odom.observe(&Pose::from_translation(2.0, 0.0, 0.0), true, &mut rng);
        assert_eq!(a.position, Vector3::zeros());
        // first step seen with zero yaw error, second with 0.1 rad
        assert!((b.position - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        let expected = Vector3::new(1.0 + 0.1f64.cos(), 0.1f64.sin(), 0.0);
        assert!((c.position - expected).norm() < 1e-12);
        assert!((c.yaw() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn reported_covariance_inflates_variances() {
        let noise = NoiseSpec { std_dev: [0.1, 0.2, 0.3, 0.4], bias_z: 0.0, bias_yaw: 0.0, cov_inflation: 2.0 };
        let d = noise.reported_covariance().diagonal();
        let expected = [0.02, 0.08, 0.18, 0.0, 0.0, 0.32];
        for (a, b) in d.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
