//! Point estimate from a weighted particle set, gated on particle spread.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::Particle;
use crate::se3::{wrap_angle, Pose};

/// Which parts of the estimate were taken from the particle set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMode {
    /// Weighted mean of the particles.
    FullPose,
    /// Particles too spread in x/y: odometry-propagated x, y, yaw with the weighted-mean z.
    ZOnly,
}

impl EstimateMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimateMode::FullPose => "full",
            EstimateMode::ZOnly => "z_only",
        }
    }
}

/// Weighted moments of a particle set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParticleStats {
    pub mean_position: Vector3<f64>,
    pub variance_position: Vector3<f64>,
    pub mean_roll: f64,
    pub mean_pitch: f64,
    /// Circular mean of yaw.
    pub mean_yaw: f64,
}

impl ParticleStats {
    /// Moments are accumulated relative to the first particle so that identical
    /// particles reproduce their pose and zero variance exactly.
    pub fn compute(particles: &[Particle]) -> Self {
        let reference = &particles[0].pose;
        let (r0, p0, y0) = reference.roll_pitch_yaw();
        let mut total = 0.0;
        let mut d1 = Vector3::zeros();
        let mut d2 = Vector3::zeros();
        let (mut roll, mut pitch, mut sin_sum, mut cos_sum) = (0.0, 0.0, 0.0, 0.0);
        for particle in particles {
            let w = particle.weight;
            let d = particle.pose.position - reference.position;
            total += w;
            d1 += w * d;
            d2 += w * d.component_mul(&d);
            let (r, p, y) = particle.pose.roll_pitch_yaw();
            roll += w * (r - r0);
            pitch += w * (p - p0);
            let dy = wrap_angle(y - y0);
            sin_sum += w * dy.sin();
            cos_sum += w * dy.cos();
        }
        let m1 = d1 / total;
        let variance_position = (d2 / total - m1.component_mul(&m1)).map(|v| v.max(0.0));
        Self {
            mean_position: reference.position + m1,
            variance_position,
            mean_roll: r0 + roll / total,
            mean_pitch: p0 + pitch / total,
            mean_yaw: wrap_angle(y0 + sin_sum.atan2(cos_sum)),
        }
    }

    pub fn mean_pose(&self) -> Pose {
        Pose::new(
            self.mean_position,
            UnitQuaternion::from_euler_angles(self.mean_roll, self.mean_pitch, self.mean_yaw),
        )
    }
}

/// Weighted-mean estimate with the multimodality gate.
///
/// Full pose is reported when the weighted x and y variances are each at most
/// `gate_factor` times the odometry sampling variances `odom_var_xy`.
/// Otherwise `propagated` (the previous estimate moved by odometry) is returned
/// with its z replaced by the weighted-mean z.
pub fn estimate_gate(
    particles: &[Particle],
    propagated: &Pose,
    odom_var_xy: (f64, f64),
    gate_factor: f64,
) -> (Pose, EstimateMode, ParticleStats) {
    let stats = ParticleStats::compute(particles);
    let var = stats.variance_position;
    if var.x <= gate_factor * odom_var_xy.0 && var.y <= gate_factor * odom_var_xy.1 {
        (stats.mean_pose(), EstimateMode::FullPose, stats)
    } else {
        let mut pose = *propagated;
        pose.position.z = stats.mean_position.z;
        (pose, EstimateMode::ZOnly, stats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn particle(pose: Pose, weight: f64) -> Particle {
        Particle { pose, weight, parent: 0 }
    }

    #[test]
    fn identical_particles_give_their_pose() {
        let pose = Pose::from_xyz_rpy(1.0, -2.0, 0.3, 0.05, -0.1, 2.0);
        let set = vec![particle(pose, 0.2); 5];
        let (est, mode, stats) = estimate_gate(&set, &Pose::identity(), (0.0, 0.0), 4.0);
        assert_eq!(mode, EstimateMode::FullPose);
        assert_eq!(stats.variance_position, Vector3::zeros());
        assert_eq!(est.position, pose.position);
        let (dt, dr) = est.distance(&pose);
        assert!(dt == 0.0 && dr < 1e-12);
    }

    #[test]
    fn one_hot_weights_pick_the_particle() {
        let a = Pose::from_xyz_rpy(1.0, 0.0, 0.0, 0.0, 0.0, 0.5);
        let b = Pose::from_xyz_rpy(5.0, 3.0, 1.0, 0.0, 0.0, -2.5);
        let set = vec![particle(a, 0.0), particle(b, 1.0), particle(a, 0.0)];
        let (est, mode, _) = estimate_gate(&set, &Pose::identity(), (1e-4, 1e-4), 4.0);
        assert_eq!(mode, EstimateMode::FullPose);
        let (dt, dr) = est.distance(&b);
        assert!(dt < 1e-12 && dr < 1e-9);
    }

    #[test]
    fn bimodal_clusters_fall_back_to_z_only() {
        // two equal clusters 1 m apart in y: weighted y variance is 0.25 m^2
        let mut set = Vec::new();
        for i in 0..50 {
            let jitter = (i as f64 - 25.0) * 1e-4;
            set.push(particle(Pose::from_xyz_rpy(2.0 + jitter, 0.0, 0.2, 0.0, 0.0, 0.0), 0.01));
            set.push(particle(Pose::from_xyz_rpy(2.0 - jitter, 1.0, 0.2, 0.0, 0.0, 0.0), 0.01));
        }
        let stats = ParticleStats::compute(&set);
        assert_relative_eq!(stats.variance_position.y, 0.25, epsilon = 1e-9);
        let propagated = Pose::from_xyz_rpy(2.1, 0.4, 0.5, 0.0, 0.0, 0.1);
        let (est, mode, _) = estimate_gate(&set, &propagated, (0.01f64.powi(2), 0.01f64.powi(2)), 4.0);
        assert_eq!(mode, EstimateMode::ZOnly);
        assert_eq!(est.position.x, 2.1);
        assert_eq!(est.position.y, 0.4);
        assert_relative_eq!(est.position.z, 0.2, epsilon = 1e-12);
        assert_eq!(est.orientation, propagated.orientation);
    }

    #[test]
    fn yaw_mean_is_circular() {
        let set = vec![
            particle(Pose::from_xyz_rpy(0.0, 0.0, 0.0, 0.0, 0.0, PI - 0.1), 0.5),
            particle(Pose::from_xyz_rpy(0.0, 0.0, 0.0, 0.0, 0.0, -PI + 0.1), 0.5),
        ];
        let stats = ParticleStats::compute(&set);
        assert_relative_eq!(stats.mean_yaw.abs(), PI, epsilon = 1e-9);
    }
}
