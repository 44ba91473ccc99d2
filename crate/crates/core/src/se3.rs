//! Rigid-body poses, tangent-space covariances and Gaussian pose sampling.
//!
//! Orientation is kept as a unit quaternion. Roll, pitch and yaw follow the
//! Z-Y-X convention (`R = Rz(yaw) * Ry(pitch) * Rx(roll)`), and yaw is always
//! reported in `(-pi, pi]`.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Matrix4, Matrix6, Quaternion, SymmetricEigen, UnitQuaternion, Vector3, DMatrix};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum Se3Error {
    #[error("covariance is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("covariance is not positive semi-definite (min eigenvalue {0:e})")]
    NotPositiveSemiDefinite(f64),
    #[error("covariance contains non-finite entries")]
    NonFinite,
}

/// Wrap an angle to `(-pi, pi]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// A rigid transform in SE(3): world-frame position plus unit-quaternion orientation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            position: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self { position, orientation }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(Vector3::new(x, y, z), UnitQuaternion::identity())
    }

    pub fn from_xyz_rpy(x: f64, y: f64, z: f64, roll: f64, pitch: f64, yaw: f64) -> Self {
        Self::new(
            Vector3::new(x, y, z),
            UnitQuaternion::from_euler_angles(roll, pitch, yaw),
        )
    }

    /// Builds a pose from `[x, y, z, qw, qx, qy, qz]`, normalizing the quaternion.
    pub fn from_array(v: [f64; 7]) -> Self {
        Self::new(
            Vector3::new(v[0], v[1], v[2]),
            UnitQuaternion::new_normalize(Quaternion::new(v[3], v[4], v[5], v[6])),
        )
    }

    /// `[x, y, z, qw, qx, qy, qz]`
    pub fn to_array(&self) -> [f64; 7] {
        let q = self.orientation.quaternion();
        [
            self.position.x,
            self.position.y,
            self.position.z,
            q.w,
            q.i,
            q.j,
            q.k,
        ]
    }

    /// `self * other` in homogeneous-matrix terms.
    pub fn compose(&self, other: &Pose) -> Pose {
        let position = self.position + self.orientation * other.position;
        let orientation = renormalize(self.orientation * other.orientation);
        Pose { position, orientation }
    }

    pub fn inverse(&self) -> Pose {
        let orientation = self.orientation.inverse();
        Pose {
            position: -(orientation * self.position),
            orientation,
        }
    }

    /// The transform taking `self` to `other`: `self^-1 * other`.
    pub fn relative_to(&self, other: &Pose) -> Pose {
        self.inverse().compose(other)
    }

    pub fn transform_point(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.position + self.orientation * point
    }

    pub fn inverse_transform_point(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.orientation.inverse() * (point - self.position)
    }

    /// `(roll, pitch, yaw)` with yaw wrapped to `(-pi, pi]`.
    pub fn roll_pitch_yaw(&self) -> (f64, f64, f64) {
        let (r, p, y) = self.orientation.euler_angles();
        (r, p, wrap_angle(y))
    }

    pub fn yaw(&self) -> f64 {
        self.roll_pitch_yaw().2
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = self.orientation.to_homogeneous();
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.position);
        m
    }

    /// Translation distance and rotation angle between two poses.
    pub fn distance(&self, other: &Pose) -> (f64, f64) {
        (
            (self.position - other.position).norm(),
            self.orientation.angle_to(&other.orientation),
        )
    }
}

/// Free-function form of [`Pose::compose`].
pub fn compose(a: &Pose, b: &Pose) -> Pose {
    a.compose(b)
}

/// Free-function form of [`Pose::relative_to`]: `a^-1 * b`.
pub fn relative(a: &Pose, b: &Pose) -> Pose {
    a.relative_to(b)
}

pub fn transform_point(pose: &Pose, point: &Vector3<f64>) -> Vector3<f64> {
    pose.transform_point(point)
}

fn renormalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::new_normalize(q.into_inner())
}

/// Index of a tangent-space dimension in a [`Covariance6`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X = 0,
    Y = 1,
    Z = 2,
    Roll = 3,
    Pitch = 4,
    Yaw = 5,
}

/// 6x6 pose covariance ordered `x, y, z, roll, pitch, yaw`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Covariance6(Matrix6<f64>);

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-12;

impl Covariance6 {
    pub fn new(matrix: Matrix6<f64>) -> Result<Self, Se3Error> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Se3Error::NonFinite);
        }
        let asym = (matrix - matrix.transpose()).amax();
        if asym > SYMMETRY_TOL {
            return Err(Se3Error::NotSymmetric(asym));
        }
        let min_eig = SymmetricEigen::new(matrix).eigenvalues.min();
        if min_eig < -PSD_TOL {
            return Err(Se3Error::NotPositiveSemiDefinite(min_eig));
        }
        Ok(Self(matrix))
    }

    pub fn from_diagonal(diag: [f64; 6]) -> Result<Self, Se3Error> {
        Self::new(Matrix6::from_diagonal(&diag.into()))
    }

    pub fn zeros() -> Self {
        Self(Matrix6::zeros())
    }

    pub fn matrix(&self) -> &Matrix6<f64> {
        &self.0
    }

    pub fn variance(&self, axis: Axis) -> f64 {
        let i = axis as usize;
        self.0[(i, i)]
    }

    pub fn diagonal(&self) -> [f64; 6] {
        let d = self.0.diagonal();
        [d[0], d[1], d[2], d[3], d[4], d[5]]
    }

    pub fn scaled(&self, factor: f64) -> Result<Self, Se3Error> {
        Self::new(self.0 * factor)
    }
}

/// The subset of `{x, y, z, yaw}` that pose sampling perturbs.
///
/// Roll and pitch cannot be represented: they are observable from gravity and
/// are never sampled.
#[derive(Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Axis>", into = "Vec<Axis>")]
pub struct SampleSpaceMask {
    x: bool,
    y: bool,
    z: bool,
    yaw: bool,
}

impl SampleSpaceMask {
    pub const FOUR_DOF: Self = Self { x: true, y: true, z: true, yaw: true };
    pub const NONE: Self = Self { x: false, y: false, z: false, yaw: false };

    pub fn from_axes(axes: &[Axis]) -> Result<Self, String> {
        let mut mask = Self::NONE;
        for axis in axes {
            match axis {
                Axis::X => mask.x = true,
                Axis::Y => mask.y = true,
                Axis::Z => mask.z = true,
                Axis::Yaw => mask.yaw = true,
                Axis::Roll | Axis::Pitch => {
                    return Err(format!("{axis:?} cannot be a sampled dimension"))
                }
            }
        }
        Ok(mask)
    }

    pub fn contains(&self, axis: Axis) -> bool {
        match axis {
            Axis::X => self.x,
            Axis::Y => self.y,
            Axis::Z => self.z,
            Axis::Yaw => self.yaw,
            Axis::Roll | Axis::Pitch => false,
        }
    }

    pub fn axes(&self) -> Vec<Axis> {
        [Axis::X, Axis::Y, Axis::Z, Axis::Yaw]
            .into_iter()
            .filter(|a| self.contains(*a))
            .collect()
    }
}

impl Default for SampleSpaceMask {
    fn default() -> Self {
        Self::FOUR_DOF
    }
}

impl fmt::Debug for SampleSpaceMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.axes()).finish()
    }
}

impl TryFrom<Vec<Axis>> for SampleSpaceMask {
    type Error = String;
    fn try_from(axes: Vec<Axis>) -> Result<Self, String> {
        Self::from_axes(&axes)
    }
}

impl From<SampleSpaceMask> for Vec<Axis> {
    fn from(mask: SampleSpaceMask) -> Self {
        mask.axes()
    }
}

/// Gaussian pose sampler with a precomputed square-root factor of the masked
/// covariance block.
///
/// Translation offsets are applied in the world frame and the yaw offset as a
/// rotation about the world z axis, which leaves roll and pitch untouched.
#[derive(Clone, Debug)]
pub struct PoseSampler {
    axes: Vec<Axis>,
    factor: DMatrix<f64>,
    is_zero: bool,
}

impl PoseSampler {
    pub fn new(cov: &Covariance6, mask: SampleSpaceMask) -> Self {
        let axes = mask.axes();
        let k = axes.len();
        let block = DMatrix::from_fn(k, k, |r, c| cov.0[(axes[r] as usize, axes[c] as usize)]);
        let factor = if k == 0 {
            block
        } else {
            let eig = SymmetricEigen::new(block);
            let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
            &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals)
        };
        let is_zero = factor.iter().all(|v| *v == 0.0);
        Self { axes, factor, is_zero }
    }

    pub fn sample<R: Rng + ?Sized>(&self, mean: &Pose, rng: &mut R) -> Pose {
        if self.is_zero {
            return *mean;
        }
        let k = self.axes.len();
        let mut normals = [0.0f64; 4];
        for n in normals.iter_mut().take(k) {
            *n = rng.sample(StandardNormal);
        }
        let mut pose = *mean;
        let mut yaw_offset = 0.0;
        for (r, axis) in self.axes.iter().enumerate() {
            let delta: f64 = (0..k).map(|c| self.factor[(r, c)] * normals[c]).sum();
            match axis {
                Axis::X => pose.position.x += delta,
                Axis::Y => pose.position.y += delta,
                Axis::Z => pose.position.z += delta,
                Axis::Yaw => yaw_offset = delta,
                Axis::Roll | Axis::Pitch => unreachable!("mask never holds roll or pitch"),
            }
        }
        if yaw_offset != 0.0 {
            let turn = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw_offset);
            pose.orientation = renormalize(turn * pose.orientation);
        }
        pose
    }
}

/// Draw one pose from `N(mean, cov)` restricted to the masked tangent dimensions.
pub fn sample_pose<R: Rng + ?Sized>(
    mean: &Pose,
    cov: &Covariance6,
    mask: SampleSpaceMask,
    rng: &mut R,
) -> Pose {
    PoseSampler::new(cov, mask).sample(mean, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    /// Homogeneous matrix built from scratch with explicit trig.
    fn matrix_oracle(x: f64, y: f64, z: f64, roll: f64, pitch: f64, yaw: f64) -> Matrix4<f64> {
        let (sr, cr) = roll.sin_cos();
        let (sp, cp) = pitch.sin_cos();
        let (sy, cy) = yaw.sin_cos();
        Matrix4::new(
            cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr, x,
            sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr, y,
            -sp, cp * sr, cp * cr, z,
            0.0, 0.0, 0.0, 1.0,
        )
    }

    #[test]
    fn compose_matches_matrix_product() {
        let a = Pose::from_xyz_rpy(0.0, 0.0, 0.0, 0.0, 0.0, FRAC_PI_2);
        let b = Pose::from_translation(1.0, 0.0, 0.0);
        let c = a.compose(&b);
        let expected = matrix_oracle(0.0, 0.0, 0.0, 0.0, 0.0, FRAC_PI_2)
            * matrix_oracle(1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert_relative_eq!(c.to_homogeneous(), expected, epsilon = 1e-12);
        assert_relative_eq!(c.position, Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-12);
        assert_relative_eq!(c.yaw(), FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn compose_identity_and_translations() {
        let p = Pose::from_xyz_rpy(0.3, -1.0, 2.0, 0.1, -0.2, 2.5);
        assert_eq!(Pose::identity().compose(&p).position, p.position);
        let t = Pose::from_translation(1.0, 0.0, 0.0).compose(&Pose::from_translation(0.0, 2.0, 0.0));
        assert_eq!(t.position, Vector3::new(1.0, 2.0, 0.0));
    }

    #[test]
    fn relative_examples() {
        let p = Pose::from_xyz_rpy(0.3, -1.0, 2.0, 0.1, -0.2, 2.5);
        let (dt, dr) = relative(&p, &p).distance(&Pose::identity());
        assert!(dt < 1e-12 && dr < 1e-9);
        let (dt, dr) = relative(&Pose::identity(), &p).distance(&p);
        assert!(dt < 1e-12 && dr < 1e-9);
        let r = relative(&Pose::from_translation(1.0, 0.0, 0.0), &Pose::from_translation(3.0, 0.0, 0.0));
        let expected = matrix_oracle(1.0, 0.0, 0.0, 0.0, 0.0, 0.0).try_inverse().unwrap()
            * matrix_oracle(3.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert_relative_eq!(r.to_homogeneous(), expected, epsilon = 1e-12);
    }

    #[test]
    fn transform_point_examples() {
        let p = Vector3::new(1.0, 2.0, 3.0);
        assert_eq!(Pose::identity().transform_point(&p), p);
        let lifted = Pose::from_translation(0.0, 0.0, 0.5).transform_point(&Vector3::new(0.3, 0.2, -0.5));
        assert_relative_eq!(lifted, Vector3::new(0.3, 0.2, 0.0), epsilon = 1e-15);
        let pose = Pose::from_xyz_rpy(1.0, 0.0, 0.0, 0.0, 0.0, PI);
        let oracle = matrix_oracle(1.0, 0.0, 0.0, 0.0, 0.0, PI) * nalgebra::Vector4::new(1.0, 0.0, 0.0, 1.0);
        let out = pose.transform_point(&Vector3::new(1.0, 0.0, 0.0));
        assert_relative_eq!(out, oracle.xyz(), epsilon = 1e-12);
        assert_relative_eq!(out, Vector3::zeros(), epsilon = 1e-12);
    }

    #[test]
    fn yaw_wraps_into_half_open_interval() {
        assert_eq!(wrap_angle(-PI), PI);
        assert_eq!(wrap_angle(PI), PI);
        assert_relative_eq!(wrap_angle(3.0 * PI / 2.0), -FRAC_PI_2, epsilon = 1e-12);
        assert_relative_eq!(Pose::from_xyz_rpy(0.0, 0.0, 0.0, 0.0, 0.0, -PI).yaw(), PI, epsilon = 1e-12);
    }

    #[test]
    fn covariance_validation() {
        assert!(Covariance6::from_diagonal([0.01, 0.04, 0.0, 0.0, 0.0, 0.01]).is_ok());
        assert!(matches!(
            Covariance6::from_diagonal([0.01, -0.04, 0.0, 0.0, 0.0, 0.0]),
            Err(Se3Error::NotPositiveSemiDefinite(_))
        ));
        let mut m = Matrix6::identity();
        m[(0, 1)] = 0.5;
        assert!(matches!(Covariance6::new(m), Err(Se3Error::NotSymmetric(_))));
        m[(1, 0)] = 0.5;
        assert!(Covariance6::new(m).is_ok());
        m[(0, 1)] = 2.0;
        m[(1, 0)] = 2.0;
        assert!(matches!(Covariance6::new(m), Err(Se3Error::NotPositiveSemiDefinite(_))));
        m[(2, 2)] = f64::NAN;
        assert_eq!(Covariance6::new(m), Err(Se3Error::NonFinite));
    }

    #[test]
    fn mask_rejects_roll_and_pitch() {
        assert!(SampleSpaceMask::from_axes(&[Axis::X, Axis::Roll]).is_err());
        assert!(SampleSpaceMask::from_axes(&[Axis::Pitch]).is_err());
        assert_eq!(SampleSpaceMask::from_axes(&[Axis::X, Axis::Y, Axis::Z, Axis::Yaw]).unwrap(), SampleSpaceMask::FOUR_DOF);
    }

    #[test]
    fn zero_covariance_returns_mean_exactly() {
        let mean = Pose::from_xyz_rpy(0.3, -1.0, 2.0, 0.1, -0.2, 2.5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for mask in [SampleSpaceMask::FOUR_DOF, SampleSpaceMask::NONE] {
            assert_eq!(sample_pose(&mean, &Covariance6::zeros(), mask, &mut rng), mean);
        }
    }

    #[test]
    fn z_mask_only_moves_z() {
        let mean = Pose::from_xyz_rpy(0.3, -1.0, 2.0, 0.1, -0.2, 2.5);
        let cov = Covariance6::from_diagonal([0.01; 6]).unwrap();
        let mask = SampleSpaceMask::from_axes(&[Axis::Z]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let s = sample_pose(&mean, &cov, mask, &mut rng);
            assert_eq!(s.position.x, mean.position.x);
            assert_eq!(s.position.y, mean.position.y);
            assert_ne!(s.position.z, mean.position.z);
            assert_eq!(s.orientation, mean.orientation);
        }
    }

    #[test]
    fn yaw_sampling_keeps_roll_and_pitch() {
        let mean = Pose::from_xyz_rpy(0.0, 0.0, 0.0, 0.15, -0.2, 3.0);
        let (r0, p0, _) = mean.roll_pitch_yaw();
        let cov = Covariance6::from_diagonal([0.0, 0.0, 0.0, 0.0, 0.0, 0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let s = sample_pose(&mean, &cov, SampleSpaceMask::FOUR_DOF, &mut rng);
            let (r, p, _) = s.roll_pitch_yaw();
            assert!((r - r0).abs() < 1e-12 && (p - p0).abs() < 1e-12);
            assert!((s.orientation.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn correlated_block_is_reproduced() {
        let mut m = Matrix6::zeros();
        m[(0, 0)] = 0.04;
        m[(1, 1)] = 0.01;
        m[(0, 1)] = 0.015;
        m[(1, 0)] = 0.015;
        let cov = Covariance6::new(m).unwrap();
        let sampler = PoseSampler::new(&cov, SampleSpaceMask::FOUR_DOF);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let p = sampler.sample(&Pose::identity(), &mut rng).position;
            sxx += p.x * p.x;
            syy += p.y * p.y;
            sxy += p.x * p.y;
        }
        let n = n as f64;
        assert_relative_eq!(sxx / n, 0.04, max_relative = 0.03);
        assert_relative_eq!(syy / n, 0.01, max_relative = 0.03);
        assert_relative_eq!(sxy / n, 0.015, max_relative = 0.05);
    }
}
