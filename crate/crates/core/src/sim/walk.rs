use nalgebra::{Vector2, Vector3};
use rand::Rng;

use super::{EventLog, GaitSpec, NoiseSpec, Recorder, SimError, Walker};
use crate::maps::ElevationMap;

/// Walk through `waypoints` (the first is the start) over `terrain`, turning in
/// place at each corner. Emits one event per four-support phase; ground-truth
/// feet always rest on the map surface.
pub fn simulate_walk<R: Rng + ?Sized>(
    terrain: &ElevationMap,
    gait: &GaitSpec,
    noise: &NoiseSpec,
    waypoints: &[Vector2<f64>],
    rng: &mut R,
) -> Result<EventLog, SimError> {
    gait.validate()?;
    noise.validate()?;
    if waypoints.len() < 2 {
        return Err(SimError::Invalid("need a start and at least one waypoint".into()));
    }
    if let Some(w) = waypoints.iter().find(|w| !terrain.contains(w.x, w.y)) {
        return Err(SimError::WaypointOffMap { x: w.x, y: w.y });
    }

    let ground = |x: f64, y: f64| terrain.elevation_at(x, y);
    let first_leg = waypoints[1] - waypoints[0];
    let mut walker = Walker::new(gait, ground, waypoints[0], first_leg.y.atan2(first_leg.x))?;
    let mut recorder = Recorder::new(noise, Vector3::zeros(), gait.phase_duration, rng);
    recorder.record_walk(&walker);

    for target in &waypoints[1..] {
        let leg = target - walker.position;
        let distance = leg.norm();
        if distance < 1e-9 {
            continue;
        }
        let (turns, increment) = walker.turn_plan(leg.y.atan2(leg.x));
        for _ in 0..turns {
            walker.heading += increment;
            walker.swing()?;
            recorder.record_walk(&walker);
        }
        let phases = (distance / gait.stride()).ceil() as usize;
        let start = walker.position;
        for i in 1..=phases {
            walker.position = start + leg * (i as f64 / phases as f64);
            walker.swing()?;
            recorder.record_walk(&walker);
        }
    }
    Ok(recorder.events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::Foot;
    use crate::se3::wrap_angle;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn flat() -> ElevationMap {
        ElevationMap::flat(Vector2::new(-2.0, -2.0), 0.02, 400, 800, 0.0).unwrap()
    }

    fn straight(distance: f64) -> Vec<Vector2<f64>> {
        vec![Vector2::new(0.0, 0.0), Vector2::new(distance, 0.0)]
    }

    #[test]
    fn zero_noise_odometry_equals_truth() {
        let gait = GaitSpec::default();
        let course = crate::sim::TerrainSpec::default();
        let map = crate::sim::build_terrain(&course, 0.02).unwrap();
        let waypoints = vec![Vector2::new(-0.8, 0.0), Vector2::new(5.0, 0.0), Vector2::new(5.0, -2.0)];
        let log = simulate_walk(&map, &gait, &NoiseSpec::zero(), &waypoints, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(log.len() > 50);
        for e in &log {
            assert_eq!(e.measured.odom_pose, e.ground_truth);
            assert!(e.measured.is_four_support());
            for (_, foot) in e.true_contacts() {
                let h = map.elevation_at(foot.x, foot.y).unwrap();
                assert!((foot.z - h).abs() < 1e-12, "foot {foot:?} vs ground {h}");
            }
        }
    }

    #[test]
    fn z_bias_accumulates_exactly() {
        let noise = NoiseSpec { std_dev: [0.0; 4], bias_z: 0.001, bias_yaw: 0.0, cov_inflation: 1.0 };
        let gait = GaitSpec::default();
        let log = simulate_walk(&flat(), &gait, &noise, &straight(200.0 * gait.stride()), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(log.len(), 201);
        let last = log.last().unwrap();
        assert!((last.measured.odom_pose.position.z - last.ground_truth.position.z - 0.2).abs() < 1e-12);
        assert!((last.measured.odom_pose.position.x - last.ground_truth.position.x).abs() < 1e-12);
        for (_, foot) in last.true_contacts() {
            assert!(foot.z.abs() < 1e-12);
        }
    }

    #[test]
    fn yaw_bias_accumulates_linearly() {
        let noise = NoiseSpec { std_dev: [0.0, 0.0, 0.0, 0.0], bias_z: 0.0, bias_yaw: 0.0005, cov_inflation: 1.0 };
        let gait = GaitSpec::default();
        let long = ElevationMap::flat(Vector2::new(-1.0, -1.0), 0.1, 20, 400, 0.0).unwrap();
        let log = simulate_walk(&long, &gait, &noise, &straight(600.0 * gait.stride()), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(log.len(), 601);
        let last = log.last().unwrap();
        let drift = wrap_angle(last.measured.odom_pose.yaw() - last.ground_truth.yaw());
        assert!((drift - 0.3).abs() < 1e-9, "drift {drift}");
    }

    #[test]
    fn turns_in_place_at_corners() {
        let gait = GaitSpec::default();
        let waypoints = vec![Vector2::new(0.0, 0.0), Vector2::new(1.0, 0.0), Vector2::new(1.0, -1.0)];
        let log = simulate_walk(&flat(), &gait, &NoiseSpec::zero(), &waypoints, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let last = log.last().unwrap();
        assert!((last.ground_truth.yaw() + std::f64::consts::FRAC_PI_2).abs() < 1e-9);
        assert!((last.ground_truth.position.xy() - Vector2::new(1.0, -1.0)).norm() < 1e-9);
        // a lagging foot is never further than one step from its nominal place
        let nominal = Vector3::from(gait.foot_offsets[Foot::LF.index()]);
        assert!((last.measured.foot_in_base[Foot::LF.index()] - nominal).norm() < gait.step_length + 1e-9);
    }

    #[test]
    fn rejects_off_map_waypoints() {
        let err = simulate_walk(&flat(), &GaitSpec::default(), &NoiseSpec::zero(), &[Vector2::zeros(), Vector2::new(50.0, 0.0)], &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(err, Err(SimError::WaypointOffMap { .. })));
    }

    #[test]
    fn replay_is_deterministic() {
        let gait = GaitSpec::default();
        let run = |seed| simulate_walk(&flat(), &gait, &NoiseSpec::default(), &straight(3.0), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        assert_eq!(run(7), run(7));
        assert_ne!(run(7), run(8));
    }
}
