//! Sequential Monte Carlo localization from foot contacts.
//!
//! Each update is triggered by a contact event (a four-support phase while
//! walking, or a single-foot probe). Particles are propagated by the odometry
//! increment, perturbed with the odometry covariance over the sampled
//! dimensions, and reweighted by the likelihood of every in-contact foot
//! against the prior map.

mod dump;
mod estimate;
mod resample;
mod state;

use std::io::Write;

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::likelihood::{LikelihoodConfig, LikelihoodError};
use crate::maps::PriorMap;
use crate::se3::{Axis, Covariance6, Pose, PoseSampler, SampleSpaceMask};

pub use dump::{write_particle_dump, ParticleRow};
pub use estimate::{estimate_gate, EstimateMode, ParticleStats};
pub use resample::{
    effective_sample_size, maybe_resample, systematic_resample, weight_variance, ResampleTrigger,
};
pub use state::{Foot, QuadrupedState};

/// Variance of normalized weights above which the particle set is resampled.
/// Equivalent to an effective sample size of about N/2 at N = 1000.
pub const DEFAULT_RESAMPLE_WEIGHT_VARIANCE: f64 = 1e-6;
pub const DEFAULT_XY_VARIANCE_GATE_FACTOR: f64 = 4.0;
pub const DEFAULT_PARTICLE_COUNT: usize = 1000;
/// Initial spread: 20 cm standard deviation on position, 0.1 rad on yaw.
pub const DEFAULT_INIT_COV_DIAG: [f64; 6] = [0.04, 0.04, 0.04, 0.0, 0.0, 0.01];

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error("particle count must be at least 2, got {0}")]
    ParticleCount(usize),
    #[error("{name} must be positive and finite, got {value}")]
    Threshold { name: &'static str, value: f64 },
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
    #[error("event log is empty")]
    EmptyLog,
}

/// How the per-particle stage of an update is evaluated. Both paths give
/// bit-identical results.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Uses rayon when the `parallel` feature is enabled, sequential otherwise.
    #[default]
    Parallel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterConfig {
    pub particle_count: usize,
    pub init_cov: Covariance6,
    pub likelihood: LikelihoodConfig,
    pub resample_weight_variance_threshold: f64,
    /// Replaces the weight-variance rule with an effective-sample-size rule when set.
    pub ess_resample_fraction: Option<f64>,
    pub xy_variance_gate_factor: f64,
    pub sample_mask: SampleSpaceMask,
    /// Attach a particle snapshot to every [`StepResult`].
    pub dump_particles: bool,
    /// Keep every generation for trajectory reconstruction.
    pub keep_history: bool,
    pub execution: Execution,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            particle_count: DEFAULT_PARTICLE_COUNT,
            init_cov: Covariance6::from_diagonal(DEFAULT_INIT_COV_DIAG).expect("valid default"),
            likelihood: LikelihoodConfig::default(),
            resample_weight_variance_threshold: DEFAULT_RESAMPLE_WEIGHT_VARIANCE,
            ess_resample_fraction: None,
            xy_variance_gate_factor: DEFAULT_XY_VARIANCE_GATE_FACTOR,
            sample_mask: SampleSpaceMask::FOUR_DOF,
            dump_particles: false,
            keep_history: true,
            execution: Execution::default(),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), FilterError> {
        if self.particle_count < 2 {
            return Err(FilterError::ParticleCount(self.particle_count));
        }
        let positive = |name, value: f64| {
            if value > 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(FilterError::Threshold { name, value })
            }
        };
        positive("resample_weight_variance_threshold", self.resample_weight_variance_threshold)?;
        positive("xy_variance_gate_factor", self.xy_variance_gate_factor)?;
        if let Some(f) = self.ess_resample_fraction {
            positive("ess_resample_fraction", f)?;
        }
        self.likelihood.validate()?;
        Ok(())
    }

    pub fn resample_trigger(&self) -> ResampleTrigger {
        match self.ess_resample_fraction {
            Some(min_fraction) => ResampleTrigger::EffectiveSampleSize { min_fraction },
            None => ResampleTrigger::WeightVariance { threshold: self.resample_weight_variance_threshold },
        }
    }
}

/// One pose hypothesis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Particle {
    pub pose: Pose,
    pub weight: f64,
    /// Index of the particle in the previous generation this one descends from.
    pub parent: usize,
}

/// A sequence of poses, one per processed event plus the initial pose.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryEstimate {
    pub poses: Vec<Pose>,
    /// Estimate mode per pose; the initial pose is tagged full.
    pub modes: Vec<EstimateMode>,
}

/// Outcome of one filter update.
#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub step: usize,
    pub estimate: Pose,
    pub mode: EstimateMode,
    pub stats: ParticleStats,
    pub weight_variance: f64,
    pub effective_sample_size: f64,
    pub resampled: bool,
    /// Total weight vanished; weights were reset to uniform.
    pub all_outlier: bool,
    pub contacts_evaluated: usize,
    /// Weighted particles before resampling, when dumping is enabled.
    pub particles: Option<Vec<Particle>>,
}

#[derive(Clone, Copy, Debug)]
struct HistoryEntry {
    pose: Pose,
    parent: u32,
}

/// Particle filter state. Single writer: one update at a time.
#[derive(Clone, Debug)]
pub struct HapticFilter {
    config: FilterConfig,
    particles: Vec<Particle>,
    log_weights: Vec<f64>,
    history: Vec<Vec<HistoryEntry>>,
    estimates: Vec<Pose>,
    modes: Vec<EstimateMode>,
}

fn particle_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Replace roll and pitch with the given values, keeping yaw.
fn with_roll_pitch(pose: &Pose, roll: f64, pitch: f64) -> Pose {
    Pose::new(pose.position, UnitQuaternion::from_euler_angles(roll, pitch, pose.yaw()))
}

fn map_indices<T, F>(n: usize, execution: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

impl HapticFilter {
    /// Draw the initial particle set around `initial_pose` with `init_cov`.
    pub fn init<R: Rng + ?Sized>(config: FilterConfig, initial_pose: Pose, rng: &mut R) -> Result<Self, FilterError> {
        config.validate()?;
        let n = config.particle_count;
        let sampler = PoseSampler::new(&config.init_cov, config.sample_mask);
        let seed: u64 = rng.random();
        let poses = map_indices(n, config.execution, |i| sampler.sample(&initial_pose, &mut particle_rng(seed, i)));
        Ok(Self::from_poses(config, poses, initial_pose))
    }

    fn from_poses(config: FilterConfig, poses: Vec<Pose>, initial_estimate: Pose) -> Self {
        let n = poses.len();
        let weight = 1.0 / n as f64;
        let particles: Vec<Particle> =
            poses.into_iter().enumerate().map(|(i, pose)| Particle { pose, weight, parent: i }).collect();
        let mut filter = Self {
            log_weights: vec![weight.ln(); n],
            history: Vec::new(),
            estimates: vec![initial_estimate],
            modes: vec![EstimateMode::FullPose],
            particles,
            config,
        };
        filter.record_generation();
        filter
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    /// Number of updates processed.
    pub fn step(&self) -> usize {
        self.estimates.len() - 1
    }

    pub fn estimate(&self) -> &Pose {
        self.estimates.last().expect("initial estimate always present")
    }

    /// Per-step gated estimates, starting with the initial pose.
    pub fn estimated_trajectory(&self) -> TrajectoryEstimate {
        TrajectoryEstimate { poses: self.estimates.clone(), modes: self.modes.clone() }
    }

    /// Ancestry of the current highest-weight particle (lowest index on ties),
    /// from the initial generation to the present.
    ///
    /// Before any update this is the initial estimate alone. Without history
    /// only the current pose is available and the earlier entries repeat the
    /// gated estimates.
    pub fn best_trajectory(&self) -> TrajectoryEstimate {
        if self.step() == 0 {
            return self.estimated_trajectory();
        }
        let best = self
            .particles
            .iter()
            .enumerate()
            .fold(0, |b, (i, p)| if p.weight > self.particles[b].weight { i } else { b });
        if !self.config.keep_history {
            let mut poses = self.estimates.clone();
            *poses.last_mut().unwrap() = self.particles[best].pose;
            return TrajectoryEstimate { poses, modes: self.modes.clone() };
        }
        let mut poses = Vec::with_capacity(self.history.len() + 1);
        let mut index = best;
        for generation in self.history.iter().rev() {
            let entry = generation[index];
            poses.push(entry.pose);
            index = entry.parent as usize;
        }
        poses.reverse();
        // generation 0 is the sampled cloud; the trajectory starts at the known initial pose
        poses[0] = self.estimates[0];
        TrajectoryEstimate { poses, modes: self.modes.clone() }
    }

    fn record_generation(&mut self) {
        if !self.config.keep_history {
            return;
        }
        let generation =
            self.particles.iter().map(|p| HistoryEntry { pose: p.pose, parent: p.parent as u32 }).collect();
        self.history.push(generation);
    }

    /// Process one contact event. `prev` and `curr` are the states of
    /// consecutive filter-trigger events.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        prev: &QuadrupedState,
        curr: &QuadrupedState,
        map: &PriorMap,
        rng: &mut R,
    ) -> StepResult {
        let delta = prev.odom_pose.relative_to(&curr.odom_pose);
        let (roll, pitch, _) = curr.odom_pose.roll_pitch_yaw();
        let sampler = PoseSampler::new(&curr.odom_cov, self.config.sample_mask);
        let feet: Vec<Vector3<f64>> = curr.in_contact().map(|(_, p)| *p).collect();
        let likelihood = self.config.likelihood;
        let seed: u64 = rng.random();

        let particles = &self.particles;
        let propagated: Vec<(Pose, f64)> = map_indices(particles.len(), self.config.execution, |i| {
            let mean = with_roll_pitch(&particles[i].pose.compose(&delta), roll, pitch);
            let pose = sampler.sample(&mean, &mut particle_rng(seed, i));
            let log_lik: f64 =
                feet.iter().map(|f| map.contact_log_likelihood(&pose.transform_point(f), &likelihood)).sum();
            (pose, log_lik)
        });

        let n = propagated.len();
        for (lw, (_, ll)) in self.log_weights.iter_mut().zip(&propagated) {
            *lw += ll;
        }
        let all_outlier = !self.normalize_log_weights();
        self.particles = propagated
            .into_iter()
            .zip(&self.log_weights)
            .enumerate()
            .map(|(i, ((pose, _), lw))| Particle { pose, weight: lw.exp(), parent: i })
            .collect();

        let weights: Vec<f64> = self.particles.iter().map(|p| p.weight).collect();
        let propagated_estimate = with_roll_pitch(&self.estimate().compose(&delta), roll, pitch);
        let odom_var = (curr.odom_cov.variance(Axis::X), curr.odom_cov.variance(Axis::Y));
        let (mut estimate, mut mode, stats) =
            estimate_gate(&self.particles, &propagated_estimate, odom_var, self.config.xy_variance_gate_factor);
        if all_outlier {
            estimate = propagated_estimate;
            estimate.position.z = stats.mean_position.z;
            mode = EstimateMode::ZOnly;
        }
        self.estimates.push(estimate);
        self.modes.push(mode);
        self.record_generation();

        let snapshot = self.config.dump_particles.then(|| self.particles.clone());
        let variance = weight_variance(&weights);
        let ess = effective_sample_size(&weights);
        let resampled = self.config.resample_trigger().fires(&weights);
        if resampled {
            self.particles = resample::resample_with(&self.particles, &weights, rng.random());
            self.log_weights.iter_mut().for_each(|lw| *lw = -(n as f64).ln());
            if let Some(last) = self.history.last_mut() {
                *last = self
                    .particles
                    .iter()
                    .map(|p| HistoryEntry { pose: p.pose, parent: p.parent as u32 })
                    .collect();
            }
        }

        StepResult {
            step: self.step(),
            estimate,
            mode,
            stats,
            weight_variance: variance,
            effective_sample_size: ess,
            resampled,
            all_outlier,
            contacts_evaluated: feet.len(),
            particles: snapshot,
        }
    }

    /// Log-normalize in place. Returns false (and resets to uniform) when the
    /// total weight is zero or not finite.
    fn normalize_log_weights(&mut self) -> bool {
        let n = self.log_weights.len() as f64;
        let max = self.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            self.log_weights.iter_mut().for_each(|lw| *lw = -n.ln());
            return false;
        }
        let sum: f64 = self.log_weights.iter().map(|lw| (lw - max).exp()).sum();
        let shift = max + sum.ln();
        self.log_weights.iter_mut().for_each(|lw| *lw -= shift);
        true
    }

    /// Write the current particle set as CSV rows for `step`.
    pub fn write_particles<W: Write>(&self, step: usize, sink: W) -> csv::Result<()> {
        write_particle_dump(sink, step, &self.particles, true)
    }
}
