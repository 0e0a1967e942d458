//! Command-line surface: `roomtherm <gen-cloud|segment|extract|build-model|
//! simulate|calibrate|monitor|pipeline>`.
//!
//! Exit codes: 0 success, 2 usage or input errors, 3 pipeline-stage
//! failures, 4 calibration stall. Every command is deterministic given its
//! inputs and flags; all randomness is surfaced as `--seed`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::calibrate::{
    calibrate, watchdog, write_event_csv, CalibrationReport, ParamEntry, ParameterSpace,
};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::plane_fit::{extract_planes, fits_from_records, read_report, write_report, FitResult};
use crate::pointcloud::{generate_room, load_cloud, save_cloud, CloudFormat, OpeningSpec};
use crate::room_extract::{extract_room, RoomGeometryFile};
use crate::thermal::{
    build_model, daily_schedule, merge_stream, read_schedule_csv, read_stream_csv, simulate,
    BuildingModel, ModelParams, Trace, WeatherSeries,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_STAGE: u8 = 3;
pub const EXIT_STALL: u8 = 4;

pub const CONFIG_ENV: &str = "ROOMTHERM_CONFIG";

#[derive(Parser, Debug)]
#[command(
    name = "roomtherm",
    version,
    about = "Room-scan recognition and thermal-model calibration pipeline"
)]
pub struct Cli {
    /// Configuration file (TOML). Falls back to $ROOMTHERM_CONFIG, then to
    /// built-in defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic room scan plus its ground truth.
    GenCloud(GenCloudArgs),
    /// Segment planes out of a point cloud with MSAC.
    Segment(SegmentArgs),
    /// Label segmented planes and extract room geometry.
    Extract(ExtractArgs),
    /// Build a thermal zone model from extracted geometry.
    BuildModel(BuildModelArgs),
    /// Simulate indoor temperature under weather and an HVAC schedule.
    Simulate(SimulateArgs),
    /// Calibrate model parameters against an observed temperature trace.
    Calibrate(CalibrateArgs),
    /// Replay a monitoring stream through the re-calibration watchdog.
    Monitor(MonitorArgs),
    /// Multi-stage runs.
    Pipeline(PipelineArgs),
}

#[derive(Args, Debug)]
pub struct GenCloudArgs {
    /// Output cloud file.
    #[arg(long)]
    pub out: PathBuf,
    /// Ground-truth JSON path (default: `<out>.truth.json`).
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Room size as LENGTH WIDTH HEIGHT, meters.
    #[arg(long, num_args = 3, value_names = ["LENGTH", "WIDTH", "HEIGHT"])]
    pub dims: Option<Vec<f64>>,
    /// Surface noise sigma, meters.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Outlier fraction in [0, 1).
    #[arg(long)]
    pub outliers: Option<f64>,
    /// Sampling density, points per m².
    #[arg(long)]
    pub density: Option<f64>,
    /// Include a ceiling surface.
    #[arg(long)]
    pub ceiling: bool,
    /// Opening as `wall:W,U,V,WIDTH,HEIGHT` (repeatable); replaces the
    /// configured openings.
    #[arg(long = "opening", value_parser = parse_opening)]
    pub openings: Vec<OpeningSpec>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cloud format: ply or xyz (default: from the output extension).
    #[arg(long)]
    pub format: Option<CloudFormat>,
}

fn parse_opening(s: &str) -> std::result::Result<OpeningSpec, String> {
    let rest = s
        .strip_prefix("wall:")
        .ok_or_else(|| format!("expected 'wall:W,U,V,WIDTH,HEIGHT', got '{s}'"))?;
    let fields: Vec<&str> = rest.split(',').collect();
    if fields.len() != 5 {
        return Err(format!("expected 5 comma-separated values, got {}", fields.len()));
    }
    let num = |i: usize| -> std::result::Result<f64, String> {
        fields[i]
            .trim()
            .parse()
            .map_err(|_| format!("bad number '{}'", fields[i]))
    };
    Ok(OpeningSpec {
        wall: fields[0]
            .trim()
            .parse()
            .map_err(|_| format!("bad wall index '{}'", fields[0]))?,
        u: num(1)?,
        v: num(2)?,
        width: num(3)?,
        height: num(4)?,
    })
}

impl clap::builder::ValueParserFactory for CloudFormat {
    type Parser = clap::builder::ValueParser;
    fn value_parser() -> Self::Parser {
        clap::builder::ValueParser::new(|s: &str| s.parse::<CloudFormat>().map_err(|e| e.to_string()))
    }
}

#[derive(Args, Debug)]
pub struct SegmentArgs {
    #[arg(long)]
    pub cloud: PathBuf,
    /// Plane report JSON.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub max_planes: Option<usize>,
    /// Inlier distance threshold, meters.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub min_inliers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub format: Option<CloudFormat>,
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    #[arg(long)]
    pub cloud: PathBuf,
    /// Plane report from `segment`.
    #[arg(long)]
    pub planes: PathBuf,
    /// Room geometry JSON.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub format: Option<CloudFormat>,
}

#[derive(Args, Debug)]
pub struct BuildModelArgs {
    /// Room geometry JSON from `extract`.
    #[arg(long)]
    pub geometry: PathBuf,
    /// Model parameter JSON (materials, hvac, defaults); overrides the
    /// configuration file.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Zone model JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Weather CSV (`time_s,t_out_c`).
    #[arg(long)]
    pub weather: PathBuf,
    /// Schedule CSV (`time_s,hvac_on`), aligned with the weather.
    #[arg(long)]
    pub schedule: PathBuf,
    /// Trace CSV out (`time_s,t_out_c,t_zone_c,hvac_on`).
    #[arg(long)]
    pub out: PathBuf,
    /// Integration step, seconds.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Initial zone temperature, °C.
    #[arg(long)]
    pub t_init: Option<f64>,
    /// Also write `<BASE>.dat` and `<BASE>.gp` for gnuplot.
    #[arg(long, value_name = "BASE")]
    pub plot: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    /// Initial model JSON.
    #[arg(long)]
    pub model: PathBuf,
    /// Observed trace CSV (`time_s,t_zone_c,hvac_on`).
    #[arg(long)]
    pub observed: PathBuf,
    #[arg(long)]
    pub weather: PathBuf,
    /// Calibration report JSON.
    #[arg(long)]
    pub out_report: PathBuf,
    /// Calibrated model JSON.
    #[arg(long)]
    pub out_model: PathBuf,
    /// Free parameter as `path,lower,upper` (repeatable); replaces the
    /// configured set.
    #[arg(long = "free", value_parser = parse_free)]
    pub free: Vec<FreeOverride>,
    /// Also write `<BASE>.dat` and `<BASE>.gp` comparing observed and
    /// calibrated traces.
    #[arg(long, value_name = "BASE")]
    pub plot: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct FreeOverride {
    pub path: String,
    pub lower: f64,
    pub upper: f64,
}

fn parse_free(s: &str) -> std::result::Result<FreeOverride, String> {
    let fields: Vec<&str> = s.split(',').collect();
    if fields.len() != 3 {
        return Err(format!("expected 'path,lower,upper', got '{s}'"));
    }
    let num = |i: usize| -> std::result::Result<f64, String> {
        fields[i]
            .trim()
            .parse()
            .map_err(|_| format!("bad number '{}'", fields[i]))
    };
    Ok(FreeOverride {
        path: fields[0].trim().to_string(),
        lower: num(1)?,
        upper: num(2)?,
    })
}

#[derive(Args, Debug)]
pub struct MonitorArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Stream CSV (`time_s,t_out_c,t_zone_c,hvac_on`).
    #[arg(long)]
    pub stream: PathBuf,
    /// Event log CSV out.
    #[arg(long)]
    pub out: PathBuf,
    /// Rolling window, seconds.
    #[arg(long)]
    pub window: Option<f64>,
    /// Re-calibration threshold, °C (`inf` disables).
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Args, Debug)]
pub struct PipelineArgs {
    #[command(subcommand)]
    pub command: PipelineCommand,
}

#[derive(Subcommand, Debug)]
pub enum PipelineCommand {
    /// Generate, segment, extract, build, simulate, and calibrate in one go.
    Run {
        /// Output directory for all stage artifacts.
        #[arg(long, default_value = "pipeline_out")]
        out_dir: PathBuf,
    },
}

/// Execute a parsed command line, returning the process exit code.
pub fn run(cli: Cli) -> u8 {
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Parse { .. }
        | Error::Io { .. }
        | Error::InvalidInput(_)
        | Error::Config(_)
        | Error::Alignment(_) => EXIT_USAGE,
        Error::Stall { .. } => EXIT_STALL,
        Error::NoPlaneFound(_)
        | Error::NoFloor(_)
        | Error::Dimensions(_)
        | Error::Geometry(_)
        | Error::NonFiniteState { .. }
        | Error::UnboundedSteadyState
        | Error::Gradient { .. } => EXIT_STAGE,
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    if let Some(path) = path {
        return PipelineConfig::load(path);
    }
    if let Ok(env_path) = std::env::var(CONFIG_ENV) {
        if !env_path.is_empty() {
            return PipelineConfig::load(Path::new(&env_path));
        }
    }
    Ok(PipelineConfig::default())
}

fn execute(cli: Cli) -> Result<()> {
    let config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::GenCloud(args) => cmd_gen_cloud(&args, &config),
        Command::Segment(args) => cmd_segment(&args, &config),
        Command::Extract(args) => cmd_extract(&args, &config),
        Command::BuildModel(args) => cmd_build_model(&args, &config),
        Command::Simulate(args) => cmd_simulate(&args, &config),
        Command::Calibrate(args) => cmd_calibrate(&args, &config),
        Command::Monitor(args) => cmd_monitor(&args, &config),
        Command::Pipeline(args) => match args.command {
            PipelineCommand::Run { out_dir } => cmd_pipeline_run(&out_dir, &config),
        },
    }
}

fn cmd_gen_cloud(args: &GenCloudArgs, config: &PipelineConfig) -> Result<()> {
    let mut spec = config.room.clone();
    if let Some(dims) = &args.dims {
        spec.length = dims[0];
        spec.width = dims[1];
        spec.height = dims[2];
    }
    if let Some(noise) = args.noise {
        spec.noise_sigma = noise;
    }
    if let Some(outliers) = args.outliers {
        spec.outlier_fraction = outliers;
    }
    if let Some(density) = args.density {
        spec.density = density;
    }
    if args.ceiling {
        spec.include_ceiling = true;
    }
    if !args.openings.is_empty() {
        spec.openings = args.openings.clone();
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let (cloud, truth) = generate_room(&spec)?;
    let format = args.format.unwrap_or_else(|| CloudFormat::from_path(&args.out));
    save_cloud(&cloud, &args.out, format)?;
    let truth_path = args
        .truth
        .clone()
        .unwrap_or_else(|| args.out.with_extension("truth.json"));
    let json = serde_json::to_string_pretty(&truth).expect("serialize truth");
    fs::write(&truth_path, json).map_err(|e| Error::io(&truth_path, e))?;
    println!(
        "wrote {} points to {} (truth: {})",
        cloud.len(),
        args.out.display(),
        truth_path.display()
    );
    Ok(())
}

fn cmd_segment(args: &SegmentArgs, config: &PipelineConfig) -> Result<()> {
    let format = args.format.unwrap_or_else(|| CloudFormat::from_path(&args.cloud));
    let cloud = load_cloud(&args.cloud, format)?;
    let mut msac = config.msac.clone();
    if let Some(t) = args.threshold {
        msac.distance_threshold = t;
    }
    if let Some(m) = args.min_inliers {
        msac.min_inliers = m;
    }
    if let Some(seed) = args.seed {
        msac.seed = seed;
    }
    let max_planes = args.max_planes.unwrap_or(config.extract.max_planes);
    let fits = extract_planes(&cloud, &msac, max_planes);
    if fits.is_empty() {
        return Err(Error::NoPlaneFound(format!(
            "no planes in {} ({} points)",
            args.cloud.display(),
            cloud.len()
        )));
    }
    write_report(&args.out, &fits)?;
    println!("{} planes -> {}", fits.len(), args.out.display());
    for (i, fit) in fits.iter().enumerate() {
        let n = fit.plane.normal;
        println!(
            "  plane {i}: normal ({:+.3}, {:+.3}, {:+.3}) d {:+.3} inliers {}",
            n.x,
            n.y,
            n.z,
            fit.plane.d,
            fit.inlier_indices.len()
        );
    }
    Ok(())
}

fn load_fits(cloud_path: &Path, planes_path: &Path, format: Option<CloudFormat>, config: &PipelineConfig) -> Result<(crate::pointcloud::PointCloud, Vec<FitResult>)> {
    let format = format.unwrap_or_else(|| CloudFormat::from_path(cloud_path));
    let cloud = load_cloud(cloud_path, format)?;
    let records = read_report(planes_path)?;
    let fits = fits_from_records(&cloud, &records, config.msac.distance_threshold)?;
    Ok((cloud, fits))
}

fn cmd_extract(args: &ExtractArgs, config: &PipelineConfig) -> Result<()> {
    let (cloud, fits) = load_fits(&args.cloud, &args.planes, args.format, config)?;
    let room = extract_room(&cloud, &fits, &config.extract)?;
    let file = RoomGeometryFile::from_room(&room)?;
    file.write_json(&args.out)?;
    println!(
        "room {:.3} x {:.3} x {:.3} m, {} walls, {} openings -> {}",
        file.length,
        file.width,
        file.height,
        file.walls.len(),
        room.openings.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_build_model(args: &BuildModelArgs, config: &PipelineConfig) -> Result<()> {
    let geometry_file = RoomGeometryFile::read_json(&args.geometry)?;
    let geometry = geometry_file.to_building_geometry()?;
    let (materials, hvac, defaults) = match &args.params {
        Some(path) => {
            let params = ModelParams::read_json(path)?;
            (params.materials, params.hvac, params.defaults)
        }
        None => (config.materials, config.hvac, config.build),
    };
    let model = build_model(&geometry, &materials, hvac, &defaults)?;
    model.write_json(&args.out)?;
    println!(
        "model with {} surfaces, zone volume {:.1} m3 -> {}",
        model.surfaces.len(),
        model.zone_volume,
        args.out.display()
    );
    Ok(())
}

fn read_weather_and_schedule(
    weather_path: &Path,
    schedule_path: &Path,
) -> Result<(WeatherSeries, Vec<bool>)> {
    let weather = WeatherSeries::read_csv(weather_path)?;
    let (times, schedule) = read_schedule_csv(schedule_path)?;
    if times.len() != weather.len() {
        return Err(Error::Alignment(format!(
            "schedule has {} rows, weather has {}",
            times.len(),
            weather.len()
        )));
    }
    for (a, b) in times.iter().zip(&weather.timestamps) {
        if (a - b).abs() > 1e-6 {
            return Err(Error::Alignment(format!(
                "schedule timestamp {a} does not match weather timestamp {b}"
            )));
        }
    }
    Ok((weather, schedule))
}

fn cmd_simulate(args: &SimulateArgs, config: &PipelineConfig) -> Result<()> {
    let model = BuildingModel::read_json(&args.model)?;
    let (weather, schedule) = read_weather_and_schedule(&args.weather, &args.schedule)?;
    let dt = args.dt.unwrap_or(config.sim.dt_s);
    let t_init = args.t_init.unwrap_or(config.sim.t_init_c);
    let trace = simulate(&model, &weather, &schedule, dt, t_init)?;
    let stream = merge_stream(&weather, &trace)?;
    crate::thermal::write_stream_csv(&args.out, &stream)?;
    println!(
        "simulated {} samples over {:.1} h -> {}",
        trace.len(),
        (weather.timestamps.last().unwrap() - weather.timestamps[0]) / 3600.0,
        args.out.display()
    );
    if let Some(base) = &args.plot {
        write_plot(base, &weather, None, &trace)?;
    }
    Ok(())
}

fn parameter_space(args_free: &[FreeOverride], config: &PipelineConfig) -> Result<ParameterSpace> {
    if args_free.is_empty() {
        return config.calibration.parameter_space();
    }
    let entries = args_free
        .iter()
        .map(|f| {
            Ok(ParamEntry {
                path: f.path.parse()?,
                lower: f.lower,
                upper: f.upper,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ParameterSpace::new(entries))
}

fn print_report(report: &CalibrationReport) {
    println!(
        "{:<28} {:>12} {:>12} {:>10} {:>10}",
        "parameter", "initial", "calibrated", "lower", "upper"
    );
    for p in &report.parameters {
        println!(
            "{:<28} {:>12.4} {:>12.4} {:>10.3} {:>10.3}",
            p.path, p.initial, p.calibrated, p.lower, p.upper
        );
    }
    println!(
        "final rmse {:.4} C after {} iterations ({})",
        report.final_rmse_c, report.iterations, report.status
    );
}

fn cmd_calibrate(args: &CalibrateArgs, config: &PipelineConfig) -> Result<()> {
    let initial = BuildingModel::read_json(&args.model)?;
    let observed = Trace::read_csv(&args.observed)?;
    let weather = WeatherSeries::read_csv(&args.weather)?;
    let space = parameter_space(&args.free, config)?;
    if space.entries.is_empty() {
        return Err(Error::InvalidInput(
            "parameter space is empty; configure [calibration.free] or pass --free".into(),
        ));
    }
    match calibrate(&initial, &space, &observed, &weather, &config.calibration.solver) {
        Ok(result) => {
            let report = CalibrationReport::from_result(&initial, &space, &result)?;
            report.write_json(&args.out_report)?;
            result.model.write_json(&args.out_model)?;
            print_report(&report);
            if let Some(base) = &args.plot {
                let sim = simulate(
                    &result.model,
                    &weather,
                    &observed.hvac_on,
                    config.calibration.solver.sim_dt.unwrap_or(f64::INFINITY),
                    observed.t_zone[0],
                )?;
                write_plot(base, &weather, Some(&observed), &sim)?;
            }
            Ok(())
        }
        Err(Error::Stall { report }) => {
            // The stall report is still written so the run can be examined.
            let file = CalibrationReport::from_stall(&initial, &space, &report)?;
            file.write_json(&args.out_report)?;
            print_report(&file);
            Err(Error::Stall { report })
        }
        Err(other) => Err(other),
    }
}

fn cmd_monitor(args: &MonitorArgs, config: &PipelineConfig) -> Result<()> {
    let model = BuildingModel::read_json(&args.model)?;
    let stream = read_stream_csv(&args.stream)?;
    let space = config.calibration.parameter_space()?;
    let mut wd = config.watchdog;
    if let Some(w) = args.window {
        wd.window_s = w;
    }
    if let Some(t) = args.threshold {
        wd.threshold_c = t;
    }
    let outcome = watchdog(&model, &stream, &space, &config.calibration.solver, &wd)?;
    write_event_csv(&args.out, &outcome.events)?;
    println!(
        "{} samples replayed, {} recalibration events -> {}",
        stream.len(),
        outcome.events.len(),
        args.out.display()
    );
    for e in &outcome.events {
        println!(
            "  t = {:.0} s: rmse {:.2} -> {:.2} C ({})",
            e.time_s,
            e.pre_rmse_c,
            e.post_rmse_c,
            e.status.as_str()
        );
    }
    Ok(())
}

fn cmd_pipeline_run(out_dir: &Path, config: &PipelineConfig) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let path = |name: &str| out_dir.join(name);

    // Scan: synthesize the room and recover its planes and geometry.
    let (cloud, truth) = generate_room(&config.room)?;
    save_cloud(&cloud, &path("room.ply"), CloudFormat::PlyAscii)?;
    let truth_json = serde_json::to_string_pretty(&truth).expect("serialize truth");
    fs::write(path("truth.json"), truth_json).map_err(|e| Error::io(path("truth.json"), e))?;
    println!("[1/6] generated {} points", cloud.len());

    let fits = extract_planes(&cloud, &config.msac, config.extract.max_planes);
    if fits.is_empty() {
        return Err(Error::NoPlaneFound("no planes in the generated cloud".into()));
    }
    write_report(&path("planes.json"), &fits)?;
    println!("[2/6] segmented {} planes", fits.len());

    let room = extract_room(&cloud, &fits, &config.extract)?;
    let geometry_file = RoomGeometryFile::from_room(&room)?;
    geometry_file.write_json(&path("geometry.json"))?;
    println!(
        "[3/6] extracted room {:.3} x {:.3} x {:.3} m with {} openings",
        geometry_file.length,
        geometry_file.width,
        geometry_file.height,
        room.openings.len()
    );

    let geometry = geometry_file.to_building_geometry()?;
    let truth_model = build_model(&geometry, &config.materials, config.hvac, &config.build)?;
    truth_model.write_json(&path("model_true.json"))?;
    println!("[4/6] built model with {} surfaces", truth_model.surfaces.len());

    // Observed data: the true model driven through the synthetic scenario.
    let scenario = &config.scenario;
    let weather = WeatherSeries::sinusoidal_daily(
        scenario.days,
        scenario.sample_interval_s,
        scenario.weather_mean_c,
        scenario.weather_amplitude_c,
        scenario.weather_peak_hour,
    );
    let schedule = daily_schedule(&weather.timestamps, scenario.hvac_on_hour, scenario.hvac_off_hour);
    weather.write_csv(&path("weather.csv"))?;
    crate::thermal::write_schedule_csv(&path("schedule.csv"), &weather.timestamps, &schedule)?;
    let sim_dt = config.calibration.solver.sim_dt.unwrap_or(f64::INFINITY);
    let observed = simulate(&truth_model, &weather, &schedule, sim_dt, config.sim.t_init_c)?;
    observed.write_csv(&path("observed.csv"))?;
    println!("[5/6] simulated {} observed samples", observed.len());

    // Recovery: perturb the free parameters and calibrate them back.
    let space = config.calibration.parameter_space()?;
    if space.entries.is_empty() {
        return Err(Error::InvalidInput("parameter space is empty".into()));
    }
    let mut initial = truth_model.clone();
    for entry in &space.entries {
        let value = entry.path.get(&truth_model)?;
        entry
            .path
            .set(&mut initial, (value * config.calibration.initial_scale).clamp(entry.lower, entry.upper))?;
    }
    initial.write_json(&path("model_initial.json"))?;
    match calibrate(&initial, &space, &observed, &weather, &config.calibration.solver) {
        Ok(result) => {
            let report = CalibrationReport::from_result(&initial, &space, &result)?;
            report.write_json(&path("report.json"))?;
            result.model.write_json(&path("model_calibrated.json"))?;
            println!("[6/6] calibrated:");
            print_report(&report);
            Ok(())
        }
        Err(Error::Stall { report }) => {
            let file = CalibrationReport::from_stall(&initial, &space, &report)?;
            file.write_json(&path("report.json"))?;
            print_report(&file);
            Err(Error::Stall { report })
        }
        Err(other) => Err(other),
    }
}

/// Emit a gnuplot-ready data/script pair: outdoor and simulated zone
/// temperature (plus the observed trace when present) with the HVAC status
/// strip along the bottom.
fn write_plot(
    base: &Path,
    weather: &WeatherSeries,
    observed: Option<&Trace>,
    simulated: &Trace,
) -> Result<()> {
    let dat = base.with_extension("dat");
    let gp = base.with_extension("gp");
    let mut out = String::from(match observed {
        Some(_) => "# time_h t_out_c t_sim_c t_obs_c hvac_on\n",
        None => "# time_h t_out_c t_sim_c hvac_on\n",
    });
    for i in 0..simulated.len() {
        let hour = (simulated.timestamps[i] - simulated.timestamps[0]) / 3600.0;
        match observed {
            Some(obs) => out.push_str(&format!(
                "{hour} {} {} {} {}\n",
                weather.t_out[i],
                simulated.t_zone[i],
                obs.t_zone[i],
                u8::from(simulated.hvac_on[i])
            )),
            None => out.push_str(&format!(
                "{hour} {} {} {}\n",
                weather.t_out[i],
                simulated.t_zone[i],
                u8::from(simulated.hvac_on[i])
            )),
        }
    }
    fs::write(&dat, out).map_err(|e| Error::io(&dat, e))?;

    let dat_name = dat.file_name().unwrap().to_string_lossy();
    let png_name = base.with_extension("png");
    let observed_line = match observed {
        Some(_) => format!(
            ", '{dat_name}' using 1:4 with lines title 'observed'"
        ),
        None => String::new(),
    };
    let hvac_col = if observed.is_some() { 5 } else { 4 };
    let script = format!(
        "set terminal pngcairo size 1100,550\n\
         set output '{}'\n\
         set xlabel 'time [h]'\n\
         set ylabel 'temperature [C]'\n\
         set key outside\n\
         plot '{dat_name}' using 1:2 with lines title 'outdoor', \\\n\
              '{dat_name}' using 1:3 with lines title 'simulated'{observed_line}, \\\n\
              '{dat_name}' using 1:(${hvac_col} > 0 ? 12 : 1/0) with points pt 5 ps 0.3 title 'hvac on'\n",
        png_name.file_name().unwrap().to_string_lossy()
    );
    fs::write(&gp, script).map_err(|e| Error::io(&gp, e))
}
