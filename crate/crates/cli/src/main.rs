mod config;
mod output;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use haptic_loc::filter::write_particle_dump;
use haptic_loc::maps::rasterize;
use haptic_loc::metrics::{ate, ate_labeled};
use haptic_loc::sim::{read_event_log, simulate_probing, simulate_walk, write_event_log, EventLog};
use haptic_loc::{localize, seeded_rngs, ElevationMap, PointCloudMap, PriorMap};
use nalgebra::Vector3;
use rand_chacha::ChaCha8Rng;

use config::{ConfigErrors, ExperimentConfig, MapFormat, Overrides, ScenarioKind};
use output::RunMetrics;

#[derive(Parser)]
#[command(name = "haptic-loc", version, about = "Haptic particle-filter localization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate (or replay) a scenario, localize, and write trajectories and metrics.
    Run(RunArgs),
    /// Simulate a scenario and write its event log and map only.
    Simulate(RunArgs),
    /// Localize a recorded event log against a map file.
    Localize(LocalizeArgs),
    /// Trajectory error of an estimate against ground truth.
    Metrics(MetricsArgs),
    /// Convert a point cloud into an elevation map.
    Rasterize(RasterizeArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Particle count override.
    #[arg(long)]
    particles: Option<usize>,
    /// Write the weighted particle set of every step.
    #[arg(long)]
    dump_particles: bool,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides { seed: self.seed, out: self.out.clone(), particles: self.particles, dump_particles: self.dump_particles }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct LocalizeArgs {
    /// Event log CSV.
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    map: PathBuf,
    #[arg(long, value_enum, default_value_t = MapFormatArg::Elevation)]
    map_format: MapFormatArg,
    /// Optional config for filter settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum MapFormatArg {
    Elevation,
    Cloud,
}

#[derive(Args)]
struct MetricsArgs {
    /// Pose CSV with columns k, t, x, y, z, qw, qx, qy, qz.
    #[arg(long)]
    estimate: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RasterizeArgs {
    #[arg(long)]
    cloud: PathBuf,
    #[arg(long)]
    resolution: f64,
    #[arg(long)]
    out: PathBuf,
}

/// Bad configuration or input files (exit 2) versus anything else (exit 1).
enum Failure {
    Input(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<ConfigErrors> for Failure {
    fn from(e: ConfigErrors) -> Self {
        Failure::Input(e.into())
    }
}

trait InputResult<T> {
    fn input(self, what: impl FnOnce() -> String) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> InputResult<T> for Result<T, E> {
    fn input(self, what: impl FnOnce() -> String) -> Result<T, Failure> {
        self.map_err(|e| Failure::Input(e.into().context(what())))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => load_config(&args).and_then(|cfg| run(&cfg)),
        Command::Simulate(args) => load_config(&args).and_then(|cfg| simulate(&cfg)),
        Command::Localize(args) => localize_config(&args).and_then(|cfg| run(&cfg)),
        Command::Metrics(args) => metrics(&args),
        Command::Rasterize(args) => rasterize_cloud(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig, Failure> {
    Ok(ExperimentConfig::load(&args.config)?.resolve(&args.common.overrides())?)
}

fn localize_config(args: &LocalizeArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::new(ScenarioKind::Replay),
    };
    cfg.scenario = ScenarioKind::Replay;
    cfg.replay.event_log = Some(args.events.clone());
    cfg.map.generated = false;
    cfg.map.file = Some(args.map.clone());
    cfg.map.format = Some(match args.map_format {
        MapFormatArg::Elevation => MapFormat::Elevation,
        MapFormatArg::Cloud => MapFormat::Cloud,
    });
    Ok(cfg.resolve(&args.common.overrides())?)
}

fn load_map(path: &Path, format: MapFormat) -> Result<PriorMap, Failure> {
    let file = File::open(path).input(|| format!("cannot open map {}", path.display()))?;
    let reader = BufReader::new(file);
    Ok(match format {
        MapFormat::Elevation => ElevationMap::load(reader).input(|| format!("map {}", path.display()))?.into(),
        MapFormat::Cloud => PointCloudMap::load(reader).input(|| format!("map {}", path.display()))?.into(),
    })
}

/// The event log, its map and optional per-event segment labels.
fn scenario_events(cfg: &ExperimentConfig, sim: &mut ChaCha8Rng) -> Result<(EventLog, PriorMap, Vec<&'static str>), Failure> {
    let file_map = match (&cfg.map.file, cfg.map.format) {
        (Some(path), Some(format)) => Some(load_map(path, format)?),
        _ => None,
    };
    match cfg.scenario {
        ScenarioKind::TerrainCourse => {
            let c = &cfg.course;
            let map = match file_map {
                Some(PriorMap::Elevation(m)) => m,
                Some(PriorMap::Cloud(_)) => return Err(Failure::Input(anyhow!("the terrain course needs an elevation map"))),
                None => c.build_map().input(|| "course terrain".into())?,
            };
            let log = simulate_walk(&map, &c.gait, &c.noise, &c.waypoints(), sim).input(|| "course simulation".into())?;
            let labels = c.labels(&log.iter().map(|e| e.ground_truth).collect::<Vec<_>>());
            Ok((log, map.into(), labels))
        }
        ScenarioKind::WallProbe => {
            let p = &cfg.probe;
            let map = match file_map {
                Some(PriorMap::Cloud(m)) => m,
                Some(PriorMap::Elevation(_)) => return Err(Failure::Input(anyhow!("wall probing needs a point cloud map"))),
                None => p.build_map().input(|| "wall map".into())?,
            };
            let offset = Vector3::from(p.initial_offset);
            let log = simulate_probing(&map, p.walls.floor_height, &p.gait, &p.script, &p.noise, offset, sim)
                .input(|| "probe simulation".into())?;
            Ok((log, map.into(), Vec::new()))
        }
        ScenarioKind::Replay => {
            let path = cfg.replay.event_log.as_ref().expect("validated");
            let file = File::open(path).input(|| format!("cannot open event log {}", path.display()))?;
            let log = read_event_log(BufReader::new(file), cfg.replay.phase_duration)
                .input(|| format!("event log {}", path.display()))?;
            if log.is_empty() {
                return Err(Failure::Input(anyhow!("event log {} has no events", path.display())));
            }
            let labels = if cfg.replay.course_segments {
                cfg.course.labels(&log.iter().map(|e| e.ground_truth).collect::<Vec<_>>())
            } else {
                Vec::new()
            };
            Ok((log, file_map.expect("validated"), labels))
        }
    }
}

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn prepare_output(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let dir = cfg.output_dir();
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    fs::write(dir.join("config.toml"), cfg.to_toml()).context("writing resolved config")?;
    Ok(())
}

fn run(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let (mut sim, mut frng) = seeded_rngs(cfg.seed());
    let (log, map, labels) = scenario_events(cfg, &mut sim)?;
    prepare_output(cfg)?;
    let dir = cfg.output_dir();
    let mut events = create(dir, "events.csv")?;
    write_event_log(&mut events, &log).context("writing events.csv")?;
    events.flush().context("writing events.csv")?;

    let mut dump = match cfg.filter.dump_particles {
        true => Some(create(dir, "particles.csv")?),
        false => None,
    };
    let mut dump_error = None;
    let run = localize(&log, &map, cfg.filter_config(), &mut frng, |step, _| {
        if step.all_outlier {
            eprintln!("warning: step {}: every particle fell below the likelihood floor, weights reset", step.step);
        }
        if let (Some(sink), Some(particles), None) = (dump.as_mut(), &step.particles, &dump_error) {
            if let Err(e) = write_particle_dump(&mut *sink, step.step, particles, step.step == 1) {
                dump_error = Some(e);
            }
        }
    })
    .input(|| "filter setup".into())?;
    if let Some(e) = dump_error {
        return Err(anyhow::Error::from(e).context("writing particles.csv").into());
    }
    if let Some(mut sink) = dump {
        sink.flush().context("writing particles.csv")?;
    }

    let times = &run.times;
    let report = |poses: &[haptic_loc::Pose]| ate_labeled(poses, &run.ground_truth, times, &labels).map_err(anyhow::Error::from);
    let best = report(&run.best.poses)?;
    let estimate = report(&run.estimated.poses)?;
    let odometry = report(&run.odometry)?;

    let write = |name: &str, f: &dyn Fn(&mut BufWriter<File>) -> csv::Result<()>| -> anyhow::Result<()> {
        let mut sink = create(dir, name)?;
        f(&mut sink).with_context(|| format!("writing {name}"))?;
        sink.flush().with_context(|| format!("writing {name}"))
    };
    write("estimate.csv", &|s| output::write_estimate(s, &run.estimated.poses, &run.estimated.modes, times))?;
    write("best.csv", &|s| output::write_poses(s, &run.best.poses, times))?;
    write("ground_truth.csv", &|s| output::write_poses(s, &run.ground_truth, times))?;
    write("odometry.csv", &|s| output::write_poses(s, &run.odometry, times))?;
    write("errors.csv", &|s| output::write_error_trace(s, &best, &estimate, &odometry))?;

    let metrics = RunMetrics::new(&run, &best, &estimate, &odometry);
    let json = serde_json::to_string_pretty(&metrics).context("serializing metrics")?;
    fs::write(dir.join("metrics.json"), json + "\n").context("writing metrics.json")?;
    println!(
        "{} events: ATE best {:.4} m, gated estimate {:.4} m, odometry {:.4} m -> {}",
        metrics.events,
        metrics.best.ate_mean,
        metrics.estimate.ate_mean,
        metrics.odometry.ate_mean,
        dir.display()
    );
    Ok(())
}

fn simulate(cfg: &ExperimentConfig) -> Result<(), Failure> {
    if cfg.scenario == ScenarioKind::Replay {
        return Err(Failure::Input(anyhow!("nothing to simulate for a replay scenario")));
    }
    let (mut sim, _) = seeded_rngs(cfg.seed());
    let (log, map, _) = scenario_events(cfg, &mut sim)?;
    prepare_output(cfg)?;
    let dir = cfg.output_dir();
    let mut events = create(dir, "events.csv")?;
    write_event_log(&mut events, &log).context("writing events.csv")?;
    events.flush().context("writing events.csv")?;
    let (name, result) = match &map {
        PriorMap::Elevation(m) => ("map.txt", m.save(create(dir, "map.txt")?)),
        PriorMap::Cloud(m) => ("map.xyz", m.save(create(dir, "map.xyz")?)),
    };
    result.with_context(|| format!("writing {name}"))?;
    println!("{} events, map {name} -> {}", log.len(), dir.display());
    Ok(())
}

fn metrics(args: &MetricsArgs) -> Result<(), Failure> {
    let read = |path: &PathBuf| {
        let file = File::open(path).input(|| format!("cannot open {}", path.display()))?;
        output::read_poses(file).input(|| format!("trajectory {}", path.display()))
    };
    let (estimate, times) = read(&args.estimate)?;
    let (truth, _) = read(&args.truth)?;
    let report = ate(&estimate, &truth, &times).input(|| "comparing trajectories".into())?;
    let summary = output::ErrorSummary::from(&report);
    let json = serde_json::to_string_pretty(&summary).context("serializing metrics")? + "\n";
    match &args.out {
        Some(path) => fs::write(path, json).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{json}"),
    }
    Ok(())
}

fn rasterize_cloud(args: &RasterizeArgs) -> Result<(), Failure> {
    let file = File::open(&args.cloud).input(|| format!("cannot open {}", args.cloud.display()))?;
    let cloud = PointCloudMap::load(BufReader::new(file)).input(|| format!("cloud {}", args.cloud.display()))?;
    let map = rasterize(&cloud, args.resolution).input(|| "rasterizing".into())?;
    let sink = BufWriter::new(File::create(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?);
    map.save(sink).with_context(|| format!("writing {}", args.out.display()))?;
    println!("{} x {} cells -> {}", map.rows(), map.cols(), args.out.display());
    Ok(())
}
