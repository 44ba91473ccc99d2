//! The two reference scenarios and the loop that runs a filter over an event log.

use nalgebra::{Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::filter::{EstimateMode, FilterConfig, FilterError, HapticFilter, StepResult, TrajectoryEstimate};
use crate::maps::{ElevationMap, PointCloudMap, PriorMap};
use crate::se3::Pose;
use crate::sim::{
    build_terrain, probe_walls, simulate_probing, simulate_walk, EventLog, GaitSpec, NoiseSpec, ProbeScript, SimError,
    TerrainSpec, WallSpec,
};

pub const DEFAULT_TERRAIN_RESOLUTION: f64 = 0.02;
/// The probing scenario pins x and z within the first few events while y stays
/// unobserved; a larger set keeps enough distinct y hypotheses alive.
pub const PROBE_PARTICLE_COUNT: usize = 5000;

/// Independent simulation and filter generators derived from one seed.
pub fn seeded_rngs(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut sim = ChaCha8Rng::seed_from_u64(seed);
    sim.set_stream(0);
    let mut filter = ChaCha8Rng::seed_from_u64(seed);
    filter.set_stream(1);
    (sim, filter)
}

/// Loops around a rectangle that crosses the course and returns over flat ground.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CourseScenario {
    pub terrain: TerrainSpec,
    pub resolution: f64,
    pub gait: GaitSpec,
    pub noise: NoiseSpec,
    /// Rectangle corners, visited in order and closed back to the first.
    pub corners: Vec<[f64; 2]>,
    pub loops: usize,
}

impl Default for CourseScenario {
    fn default() -> Self {
        Self {
            terrain: TerrainSpec::default(),
            resolution: DEFAULT_TERRAIN_RESOLUTION,
            gait: GaitSpec::default(),
            noise: NoiseSpec::default(),
            corners: vec![[-0.8, 0.0], [5.0, 0.0], [5.0, -2.0], [-0.8, -2.0]],
            loops: 2,
        }
    }
}

impl CourseScenario {
    pub fn waypoints(&self) -> Vec<Vector2<f64>> {
        let corners: Vec<Vector2<f64>> = self.corners.iter().map(|c| Vector2::from(*c)).collect();
        let mut path = vec![corners[0]];
        for _ in 0..self.loops {
            path.extend(corners.iter().skip(1).copied());
            path.push(corners[0]);
        }
        path
    }

    pub fn filter_config(&self) -> FilterConfig {
        FilterConfig::default()
    }

    pub fn build_map(&self) -> Result<ElevationMap, SimError> {
        build_terrain(&self.terrain, self.resolution)
    }

    pub fn simulate(&self, rng: &mut ChaCha8Rng) -> Result<(ElevationMap, EventLog), SimError> {
        if self.corners.len() < 2 || self.loops == 0 {
            return Err(SimError::Invalid("course needs at least two corners and one loop".into()));
        }
        let map = self.build_map()?;
        let log = simulate_walk(&map, &self.gait, &self.noise, &self.waypoints(), rng)?;
        Ok((map, log))
    }

    /// "course" for poses above the terrain course, "flat" elsewhere.
    pub fn labels(&self, truth: &[Pose]) -> Vec<&'static str> {
        truth
            .iter()
            .map(|p| if self.terrain.on_course(p.position.x, p.position.y) { "course" } else { "flat" })
            .collect()
    }
}

/// Alternating probes and sidesteps next to two perpendicular walls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeScenario {
    pub walls: WallSpec,
    pub script: ProbeScript,
    pub gait: GaitSpec,
    pub noise: NoiseSpec,
    pub initial_offset: [f64; 3],
}

impl Default for ProbeScenario {
    fn default() -> Self {
        Self {
            walls: WallSpec::default(),
            script: ProbeScript::default(),
            gait: GaitSpec::default(),
            noise: NoiseSpec::default(),
            initial_offset: [0.1, 0.1, 0.0],
        }
    }
}

impl ProbeScenario {
    pub fn filter_config(&self) -> FilterConfig {
        FilterConfig { particle_count: PROBE_PARTICLE_COUNT, ..FilterConfig::default() }
    }

    pub fn build_map(&self) -> Result<PointCloudMap, SimError> {
        probe_walls(&self.walls)
    }

    pub fn simulate(&self, rng: &mut ChaCha8Rng) -> Result<(PointCloudMap, EventLog), SimError> {
        let map = self.build_map()?;
        let log = simulate_probing(
            &map,
            self.walls.floor_height,
            &self.gait,
            &self.script,
            &self.noise,
            Vector3::from(self.initial_offset),
            rng,
        )?;
        Ok((map, log))
    }
}

/// Everything a localization run produces, aligned index by index with the event log.
#[derive(Clone, Debug)]
pub struct LocalizationRun {
    pub estimated: TrajectoryEstimate,
    pub best: TrajectoryEstimate,
    pub ground_truth: Vec<Pose>,
    pub odometry: Vec<Pose>,
    pub times: Vec<f64>,
    /// Per-update results, without particle snapshots.
    pub steps: Vec<StepResult>,
}

impl LocalizationRun {
    pub fn modes(&self) -> &[EstimateMode] {
        &self.estimated.modes
    }
}

/// Run a filter over `log`, starting at the first event's odometry pose.
/// `on_step` sees every update before its particle snapshot is dropped.
pub fn localize<F>(
    log: &EventLog,
    map: &PriorMap,
    config: FilterConfig,
    rng: &mut ChaCha8Rng,
    mut on_step: F,
) -> Result<LocalizationRun, FilterError>
where
    F: FnMut(&StepResult, &HapticFilter),
{
    let first = log.first().ok_or(FilterError::EmptyLog)?;
    let mut filter = HapticFilter::init(config, first.measured.odom_pose, rng)?;
    let mut steps = Vec::with_capacity(log.len().saturating_sub(1));
    for pair in log.windows(2) {
        let mut result = filter.update(&pair[0].measured, &pair[1].measured, map, rng);
        on_step(&result, &filter);
        result.particles = None;
        steps.push(result);
    }
    Ok(LocalizationRun {
        estimated: filter.estimated_trajectory(),
        best: filter.best_trajectory(),
        ground_truth: log.iter().map(|e| e.ground_truth).collect(),
        odometry: log.iter().map(|e| e.measured.odom_pose).collect(),
        times: log.iter().map(|e| e.measured.timestamp).collect(),
        steps,
    })
}
