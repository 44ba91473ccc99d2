use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::se3::{Covariance6, Pose};

/// Leg identifiers in the fixed order used for all per-foot arrays.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Foot {
    LF = 0,
    RF = 1,
    LH = 2,
    RH = 3,
}

impl Foot {
    pub const ALL: [Foot; 4] = [Foot::LF, Foot::RF, Foot::LH, Foot::RH];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Foot::LF => "LF",
            Foot::RF => "RF",
            Foot::LH => "LH",
            Foot::RH => "RH",
        }
    }
}

/// One snapshot of the odometry estimator output plus leg kinematics.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadrupedState {
    pub odom_pose: Pose,
    pub odom_cov: Covariance6,
    /// Foot positions in the base frame, ordered LF, RF, LH, RH.
    pub foot_in_base: [Vector3<f64>; 4],
    pub contact: [bool; 4],
    pub timestamp: f64,
}

impl QuadrupedState {
    pub fn in_contact(&self) -> impl Iterator<Item = (Foot, &Vector3<f64>)> + '_ {
        Foot::ALL
            .into_iter()
            .filter(|f| self.contact[f.index()])
            .map(|f| (f, &self.foot_in_base[f.index()]))
    }

    pub fn is_four_support(&self) -> bool {
        self.contact.iter().all(|c| *c)
    }

    pub fn contact_count(&self) -> usize {
        self.contact.iter().filter(|c| **c).count()
    }
}
