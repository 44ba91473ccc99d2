use nalgebra::{Vector2, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EventKind, EventLog, GaitSpec, NoiseSpec, Recorder, SimError, Walker};
use crate::filter::Foot;
use crate::maps::PointCloudMap;

/// Two perpendicular walls standing on a floor patch, sampled on a regular lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WallSpec {
    /// Plane of the wall facing +x.
    pub front_x: f64,
    /// y extent of the front wall.
    pub front_y: [f64; 2],
    /// Plane of the wall on the robot's right (facing -y).
    pub right_y: f64,
    /// x extent of the right wall.
    pub right_x: [f64; 2],
    pub height: f64,
    pub floor_height: f64,
    pub spacing: f64,
}

impl Default for WallSpec {
    fn default() -> Self {
        Self {
            front_x: 2.0,
            front_y: [-1.8, 0.6],
            right_y: -1.5,
            right_x: [0.6, 2.0],
            height: 0.8,
            floor_height: 0.0,
            spacing: 0.01,
        }
    }
}

fn lattice(from: f64, to: f64, spacing: f64) -> Vec<f64> {
    let n = ((to - from) / spacing).round() as usize;
    (0..=n).map(|i| from + i as f64 * spacing).collect()
}

/// Point cloud of both walls plus the floor between them.
pub fn probe_walls(spec: &WallSpec) -> Result<PointCloudMap, SimError> {
    if !(spec.spacing > 0.0 && spec.height > 0.0) {
        return Err(SimError::Invalid("wall spacing and height must be positive".into()));
    }
    if spec.front_y[0] >= spec.front_y[1] || spec.right_x[0] >= spec.right_x[1] {
        return Err(SimError::Invalid("wall extents must be increasing".into()));
    }
    let s = spec.spacing;
    let zs = lattice(spec.floor_height + s, spec.floor_height + spec.height, s);
    let mut points = Vec::new();
    for &y in &lattice(spec.front_y[0], spec.front_y[1], s) {
        points.extend(zs.iter().map(|&z| Vector3::new(spec.front_x, y, z)));
    }
    // the right wall stops one lattice step short of the front wall plane
    for &x in &lattice(spec.right_x[0], spec.front_x.min(spec.right_x[1]) - s, s) {
        points.extend(zs.iter().map(|&z| Vector3::new(x, spec.right_y, z)));
    }
    let ys = lattice(spec.right_y, spec.front_y[1], s);
    for &x in &lattice(spec.right_x[0], spec.front_x, s) {
        points.extend(ys.iter().map(|&y| Vector3::new(x, y, spec.floor_height)));
    }
    Ok(PointCloudMap::new(points)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "action", deny_unknown_fields)]
pub enum ProbeAction {
    /// Translate without turning; `direction` is in the base frame.
    Walk { direction: [f64; 2], distance: f64 },
    /// Swing `foot` from its lifted nominal position along `direction` (base frame).
    Probe { foot: Foot, direction: [f64; 3] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeScript {
    /// Initial base `[x, y, yaw]`.
    pub start: [f64; 3],
    /// Longest probe travel, meters.
    pub reach: f64,
    /// Height the probing foot is raised before it moves.
    pub lift: f64,
    /// Distance to the nearest map point at which a probe registers contact.
    pub contact_tolerance: f64,
    /// Probe travel increment.
    pub probe_step: f64,
    pub actions: Vec<ProbeAction>,
}

pub const DEFAULT_PROBE_CYCLES: usize = 8;

impl Default for ProbeScript {
    fn default() -> Self {
        let front = ProbeAction::Probe { foot: Foot::RF, direction: [1.0, 0.0, 0.0] };
        let side = ProbeAction::Probe { foot: Foot::RF, direction: [0.0, -1.0, 0.0] };
        let step = ProbeAction::Walk { direction: [0.0, -1.0], distance: 0.1 };
        let mut actions = Vec::new();
        for _ in 0..DEFAULT_PROBE_CYCLES {
            actions.extend([front.clone(), side.clone(), step.clone()]);
        }
        actions.extend([front, side]);
        Self { start: [1.45, -0.3, 0.0], reach: 0.6, lift: 0.25, contact_tolerance: 0.01, probe_step: 0.002, actions }
    }
}

impl ProbeScript {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.actions.is_empty() {
            return Err(SimError::Invalid("probe script has no actions".into()));
        }
        if !(self.reach > 0.0 && self.probe_step > 0.0 && self.contact_tolerance > 0.0) {
            return Err(SimError::Invalid("reach, probe_step and contact_tolerance must be positive".into()));
        }
        for (i, a) in self.actions.iter().enumerate() {
            let ok = match a {
                ProbeAction::Walk { direction, distance } => {
                    *distance >= 0.0 && Vector2::from(*direction).norm() > 0.0
                }
                ProbeAction::Probe { direction, .. } => Vector3::from(*direction).norm() > 0.0,
            };
            if !ok {
                return Err(SimError::Invalid(format!("action {i}: direction must be non-zero")));
            }
        }
        Ok(())
    }
}

/// Run `script` against `walls`. The robot stands on the wall cloud's floor at
/// `floor_height`; odometry starts displaced by `initial_offset`.
pub fn simulate_probing<R: Rng + ?Sized>(
    walls: &PointCloudMap,
    floor_height: f64,
    gait: &GaitSpec,
    script: &ProbeScript,
    noise: &NoiseSpec,
    initial_offset: Vector3<f64>,
    rng: &mut R,
) -> Result<EventLog, SimError> {
    gait.validate()?;
    noise.validate()?;
    script.validate()?;
    let [x, y, yaw] = script.start;
    let mut walker = Walker::new(gait, |_, _| Some(floor_height), Vector2::new(x, y), yaw)?;
    let mut recorder = Recorder::new(noise, initial_offset, gait.phase_duration, rng);
    recorder.record_walk(&walker);

    for action in &script.actions {
        match action {
            ProbeAction::Walk { direction, distance } => {
                let (s, c) = walker.heading.sin_cos();
                let d = Vector2::from(*direction).normalize();
                let world = Vector2::new(c * d.x - s * d.y, s * d.x + c * d.y) * *distance;
                let phases = (distance / gait.stride()).ceil() as usize;
                let start = walker.position;
                for i in 1..=phases {
                    walker.position = start + world * (i as f64 / phases as f64);
                    walker.swing()?;
                    recorder.record_walk(&walker);
                }
            }
            ProbeAction::Probe { foot, direction } => {
                let base = walker.base_pose();
                let mut feet = walker.foot_in_base(&base);
                let mut contact = [false; 4];
                let start = base.transform_point(&(gait.offset(*foot) + Vector3::new(0.0, 0.0, script.lift)));
                let dir = base.orientation * Vector3::from(*direction).normalize();
                if let Some(hit) = ray_march(walls, start, dir, script) {
                    feet[foot.index()] = base.inverse_transform_point(&hit);
                    contact[foot.index()] = true;
                } else {
                    feet[foot.index()] = base.inverse_transform_point(&(start + dir * script.reach));
                }
                recorder.record(EventKind::Probe, base, feet, contact);
            }
        }
    }
    Ok(recorder.events)
}

/// First map point within tolerance of the probe path, snapped onto the map.
fn ray_march(walls: &PointCloudMap, start: Vector3<f64>, dir: Vector3<f64>, script: &ProbeScript) -> Option<Vector3<f64>> {
    let steps = (script.reach / script.probe_step).ceil() as usize;
    (0..=steps).find_map(|i| {
        let travel = (i as f64 * script.probe_step).min(script.reach);
        let n = walls.nearest(&(start + dir * travel));
        (n.distance <= script.contact_tolerance).then_some(n.point)
    })
}
