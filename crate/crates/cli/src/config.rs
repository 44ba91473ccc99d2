//! Experiment configuration: parsing, overrides, validation and the resolved echo.

use std::path::{Path, PathBuf};

use haptic_loc::filter::{Execution, FilterConfig, DEFAULT_INIT_COV_DIAG, DEFAULT_RESAMPLE_WEIGHT_VARIANCE, DEFAULT_XY_VARIANCE_GATE_FACTOR};
use haptic_loc::likelihood::{LikelihoodConfig, DEFAULT_SIGMA_Z};
use haptic_loc::se3::{Covariance6, SampleSpaceMask};
use haptic_loc::{CourseScenario, ProbeScenario};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    TerrainCourse,
    WallProbe,
    Replay,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapFormat {
    /// Gridded heights (`resolution`, `origin`, `size` header, then rows).
    Elevation,
    /// One `x y z` point per line.
    Cloud,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapSection {
    /// Build the map from the scenario's terrain or wall description.
    pub generated: bool,
    pub file: Option<PathBuf>,
    pub format: Option<MapFormat>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReplaySection {
    pub event_log: Option<PathBuf>,
    /// Seconds per event, used to rebuild timestamps.
    pub phase_duration: f64,
    /// Report on-course and flat segments using the `[course]` terrain.
    pub course_segments: bool,
}

impl Default for ReplaySection {
    fn default() -> Self {
        Self { event_log: None, phase_duration: 0.5, course_segments: false }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionMode {
    Sequential,
    #[default]
    Parallel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSection {
    /// Defaults to 1000, or 5000 for the wall-probe scenario.
    pub particle_count: Option<usize>,
    /// Initial spread `[x, y, z, roll, pitch, yaw]` variances.
    pub init_cov: [f64; 6],
    pub sigma_z: f64,
    /// Likelihood floor; defaults to 1e-3 of the Gaussian peak.
    pub rho: Option<f64>,
    pub resample_weight_variance_threshold: f64,
    pub ess_resample_fraction: Option<f64>,
    pub xy_variance_gate_factor: f64,
    pub sample_axes: SampleSpaceMask,
    pub dump_particles: bool,
    pub execution: ExecutionMode,
}

impl Default for FilterSection {
    fn default() -> Self {
        Self {
            particle_count: None,
            init_cov: DEFAULT_INIT_COV_DIAG,
            sigma_z: DEFAULT_SIGMA_Z,
            rho: None,
            resample_weight_variance_threshold: DEFAULT_RESAMPLE_WEIGHT_VARIANCE,
            ess_resample_fraction: None,
            xy_variance_gate_factor: DEFAULT_XY_VARIANCE_GATE_FACTOR,
            sample_axes: SampleSpaceMask::FOUR_DOF,
            dump_particles: false,
            execution: ExecutionMode::Parallel,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioKind,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub map: MapSection,
    #[serde(default)]
    pub filter: FilterSection,
    #[serde(default)]
    pub course: CourseScenario,
    #[serde(default)]
    pub probe: ProbeScenario,
    #[serde(default)]
    pub replay: ReplaySection,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub particles: Option<usize>,
    pub dump_particles: bool,
}

/// Rejected configuration, with every problem found.
#[derive(Debug)]
pub struct ConfigErrors(pub Vec<String>);

impl std::fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid configuration:")?;
        for e in &self.0 {
            write!(f, "\n  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

impl ExperimentConfig {
    pub fn new(scenario: ScenarioKind) -> Self {
        Self {
            scenario,
            seed: None,
            output_dir: None,
            map: MapSection::default(),
            filter: FilterSection::default(),
            course: CourseScenario::default(),
            probe: ProbeScenario::default(),
            replay: ReplaySection::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigErrors> {
        toml::from_str(text).map_err(|e| ConfigErrors(vec![e.to_string()]))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigErrors> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigErrors(vec![format!("{}: {e}", path.display())]))?;
        Self::parse(&text)
    }

    /// Apply overrides, fill scenario-dependent defaults and check everything.
    pub fn resolve(mut self, overrides: &Overrides) -> Result<Self, ConfigErrors> {
        if overrides.seed.is_some() {
            self.seed = overrides.seed;
        }
        if overrides.out.is_some() {
            self.output_dir.clone_from(&overrides.out);
        }
        if overrides.particles.is_some() {
            self.filter.particle_count = overrides.particles;
        }
        self.filter.dump_particles |= overrides.dump_particles;
        let default_particles = match self.scenario {
            ScenarioKind::WallProbe => self.probe.filter_config().particle_count,
            _ => FilterConfig::default().particle_count,
        };
        self.filter.particle_count.get_or_insert(default_particles);
        self.filter.rho.get_or_insert(LikelihoodConfig::with_sigma(self.filter.sigma_z).rho);
        if self.map.file.is_some() && self.map.format.is_none() {
            self.map.format = Some(match self.scenario {
                ScenarioKind::WallProbe => MapFormat::Cloud,
                _ => MapFormat::Elevation,
            });
        }

        let mut errors = Vec::new();
        if self.seed.is_none() {
            errors.push("seed is required (set `seed` or pass --seed)".to_string());
        }
        if self.output_dir.is_none() {
            errors.push("output directory is required (set `output_dir` or pass --out)".to_string());
        }
        match (self.map.generated, &self.map.file) {
            (true, Some(_)) => errors.push("map: set either `generated = true` or `file`, not both".to_string()),
            (false, None) => errors.push("map: no source given (set `generated = true` or `file`)".to_string()),
            _ => {}
        }
        if self.scenario == ScenarioKind::Replay {
            if self.map.generated {
                errors.push("map: a replay needs a map `file`".to_string());
            }
            if self.replay.event_log.is_none() {
                errors.push("replay: `event_log` is required".to_string());
            }
            if !(self.replay.phase_duration > 0.0) {
                errors.push(format!("replay: phase_duration must be positive, got {}", self.replay.phase_duration));
            }
        }
        match self.scenario {
            ScenarioKind::TerrainCourse => {
                let c = &self.course;
                if let Err(e) = c.terrain.validate() {
                    errors.push(format!("course.terrain: {e}"));
                }
                if !(c.resolution > 0.0) {
                    errors.push(format!("course.resolution must be positive, got {}", c.resolution));
                }
                if c.corners.len() < 2 || c.loops == 0 {
                    errors.push("course: needs at least two corners and one loop".to_string());
                }
                if let Err(e) = c.gait.validate() {
                    errors.push(format!("course.gait: {e}"));
                }
                if let Err(e) = c.noise.validate() {
                    errors.push(format!("course.noise: {e}"));
                }
            }
            ScenarioKind::WallProbe => {
                let p = &self.probe;
                if let Err(e) = p.script.validate() {
                    errors.push(format!("probe.script: {e}"));
                }
                if let Err(e) = p.gait.validate() {
                    errors.push(format!("probe.gait: {e}"));
                }
                if let Err(e) = p.noise.validate() {
                    errors.push(format!("probe.noise: {e}"));
                }
            }
            ScenarioKind::Replay => {}
        }
        let f = &self.filter;
        if f.particle_count.is_some_and(|n| n < 2) {
            errors.push(format!("filter.particle_count must be at least 2, got {}", f.particle_count.unwrap_or(0)));
        }
        if let Err(e) = Covariance6::from_diagonal(f.init_cov) {
            errors.push(format!("filter.init_cov: {e}"));
        }
        if let Err(e) = (LikelihoodConfig { sigma_z: f.sigma_z, rho: f.rho.unwrap_or(0.0) }).validate() {
            errors.push(format!("filter: {e}"));
        }
        for (name, value) in [
            ("resample_weight_variance_threshold", f.resample_weight_variance_threshold),
            ("xy_variance_gate_factor", f.xy_variance_gate_factor),
            ("ess_resample_fraction", f.ess_resample_fraction.unwrap_or(1.0)),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                errors.push(format!("filter.{name} must be positive, got {value}"));
            }
        }

        if errors.is_empty() {
            Ok(self)
        } else {
            Err(ConfigErrors(errors))
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("resolved config has a seed")
    }

    pub fn output_dir(&self) -> &Path {
        self.output_dir.as_deref().expect("resolved config has an output directory")
    }

    pub fn filter_config(&self) -> FilterConfig {
        let f = &self.filter;
        FilterConfig {
            particle_count: f.particle_count.expect("resolved"),
            init_cov: Covariance6::from_diagonal(f.init_cov).expect("validated"),
            likelihood: LikelihoodConfig { sigma_z: f.sigma_z, rho: f.rho.expect("resolved") },
            resample_weight_variance_threshold: f.resample_weight_variance_threshold,
            ess_resample_fraction: f.ess_resample_fraction,
            xy_variance_gate_factor: f.xy_variance_gate_factor,
            sample_mask: f.sample_axes,
            dump_particles: f.dump_particles,
            keep_history: true,
            execution: match f.execution {
                ExecutionMode::Sequential => Execution::Sequential,
                ExecutionMode::Parallel => Execution::Parallel,
            },
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn overrides() -> Overrides {
        Overrides { seed: Some(1), out: Some("out".into()), ..Overrides::default() }
    }

    #[test]
    fn minimal_course_config_resolves() {
        let cfg = ExperimentConfig::parse("scenario = \"terrain_course\"\n[map]\ngenerated = true\n").unwrap();
        let cfg = cfg.resolve(&overrides()).unwrap();
        assert_eq!(cfg.filter.particle_count, Some(1000));
        assert!(cfg.filter.rho.is_some());
    }

    #[test]
    fn probe_defaults_to_more_particles() {
        let cfg = ExperimentConfig::parse("scenario = \"wall_probe\"\n[map]\ngenerated = true\n").unwrap();
        assert_eq!(cfg.resolve(&overrides()).unwrap().filter.particle_count, Some(5000));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::parse("scenario = \"terrain_course\"\n[filter]\nparticle_cuont = 3\n").unwrap_err();
        assert!(err.to_string().contains("particle_cuont"));
    }

    #[test]
    fn all_problems_are_listed() {
        let text = "scenario = \"replay\"\n[filter]\nparticle_count = 1\nsigma_z = -1.0\n";
        let err = ExperimentConfig::parse(text).unwrap().resolve(&Overrides::default()).unwrap_err();
        let joined = err.0.join("\n");
        for needle in ["seed", "output directory", "map", "event_log", "particle_count", "sigma_z"] {
            assert!(joined.contains(needle), "missing {needle:?} in {joined}");
        }
    }

    #[test]
    fn two_map_sources_are_rejected() {
        let text = "scenario = \"terrain_course\"\n[map]\ngenerated = true\nfile = \"m.txt\"\n";
        let err = ExperimentConfig::parse(text).unwrap().resolve(&overrides()).unwrap_err();
        assert!(err.0.iter().any(|e| e.contains("not both")));
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = ExperimentConfig::parse("scenario = \"wall_probe\"\n[map]\ngenerated = true\n").unwrap().resolve(&overrides()).unwrap();
        let back = ExperimentConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }
}
