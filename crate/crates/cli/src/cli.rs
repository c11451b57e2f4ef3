//! Batch subcommands.
//!
//! Exit status: 0 on success, 1 when inputs are well formed but violate a
//! planner, model or machine rule, 2 on I/O, parse and usage errors.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tasteprint_core::calibration::{
    fit_amount_model, fit_resolution_model, read_samples_csv, write_samples_csv, CalibrationSet,
};
use tasteprint_core::gcode::MachineProfile;
use tasteprint_core::geometry::{InfillSettings, Point2, SliceStack};
use tasteprint_core::imaging::{measure_spot, read_pnm, MarkerAnnotations, Polarity, SpotOptions};
use tasteprint_core::planner::{
    add_free_event, allocate_total_amount, fill_pattern, intensity_to_duration, validate_design,
    AllocationRequest, PatternRequest, SprayEvent, TasteDesign, SCHEMA_VERSION,
};
use tasteprint_core::simulator::{export_maps, masses_csv, SimulationOptions};
use tasteprint_core::TOOL_VERSION;

use crate::error::{AppError, AppResult};
use crate::pipeline;
use crate::project::{write_atomic, Project};

fn version_text() -> &'static str {
    static TEXT: OnceLock<String> = OnceLock::new();
    TEXT.get_or_init(|| format!("{TOOL_VERSION} (design schema {SCHEMA_VERSION})"))
}

#[derive(Parser, Debug)]
#[command(name = "tasteprint", version = version_text(), about = "Layer-wise seasoning design for extrusion food printing")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Slice a mesh into layer contours.
    Slice(SliceArgs),
    /// Create or edit a taste design and validate it.
    Plan(PlanArgs),
    /// Emit merged extrusion and spray G-code.
    Gcode(GcodeArgs),
    /// Run G-code on the virtual printer and report deposition.
    Simulate(SimulateArgs),
    /// Fit or measure spray calibration data.
    #[command(subcommand)]
    Calibrate(CalibrateCommand),
    /// Serve the HTTP API over a project directory.
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
struct SliceArgs {
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long, default_value_t = 1.6)]
    layer_height: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PlanArgs {
    #[arg(long)]
    slices: PathBuf,
    /// Design to start from; a new empty design when omitted.
    #[arg(long)]
    design: Option<PathBuf>,
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Total-amount allocation, e.g. `channel=1,mass=10,standoff=20`. Applied first.
    #[arg(long, value_name = "KEY=VALUE,...")]
    allocate: Vec<String>,
    /// Dense pattern, e.g. `layer=0,channel=2,duration=20,standoff=20,overlap=0.1`.
    #[arg(long, value_name = "KEY=VALUE,...")]
    pattern: Vec<String>,
    /// Free event, e.g. `layer=3,channel=1,x=2.5,y=-4,duration=20,standoff=20`;
    /// `intensity=1..10` may replace `duration`. Applied last.
    #[arg(long, value_name = "KEY=VALUE,...")]
    event: Vec<String>,
    /// Where to write the design; validation only when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Validation report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GcodeArgs {
    #[arg(long)]
    slices: PathBuf,
    #[arg(long)]
    design: PathBuf,
    /// `default` or a machine profile JSON file.
    #[arg(long, default_value = "default")]
    profile: String,
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[arg(long, default_value_t = InfillSettings::default().density)]
    infill_density: f64,
    #[arg(long, default_value_t = InfillSettings::default().spacing)]
    infill_spacing: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    gcode: PathBuf,
    /// Also compare against the design the program was generated from.
    #[arg(long)]
    design: Option<PathBuf>,
    #[arg(long, default_value = "default")]
    profile: String,
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[arg(long, default_value_t = SimulationOptions::default().cell_size)]
    cell_size: f64,
    #[arg(long, default_value_t = 0.0)]
    spread_factor: f64,
    /// Directory for per-layer PGM maps and their sidecars.
    #[arg(long)]
    maps: Option<PathBuf>,
    /// Per-layer, per-channel masses as CSV.
    #[arg(long)]
    masses: Option<PathBuf>,
    /// Full summary as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum CalibrateCommand {
    /// Least-squares fit of a sample table.
    Fit(FitArgs),
    /// Measure one sprayed spot in a photograph.
    Measure(MeasureArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelArg {
    Resolution,
    Amount,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    samples: PathBuf,
    #[arg(long, value_enum)]
    model: ModelArg,
    /// FitReport JSON; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Calibration to update; defaults to the built-in set.
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Write the calibration with the fitted coefficients here.
    #[arg(long)]
    update_calibration: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PolarityArg {
    Darker,
    Brighter,
}

#[derive(Args, Debug)]
struct MeasureArgs {
    /// PPM or PGM photograph.
    #[arg(long)]
    image: PathBuf,
    /// Marker annotation JSON.
    #[arg(long)]
    markers: PathBuf,
    /// ROI centre on the build plane, `x,y` in mm.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    center: Point2,
    /// ROI edge, mm.
    #[arg(long, default_value_t = 24.0)]
    roi: f64,
    /// Rectification resolution, px/mm.
    #[arg(long, default_value_t = SpotOptions::default().resolution)]
    resolution: f64,
    #[arg(long, value_enum, default_value = "darker")]
    polarity: PolarityArg,
    /// Append the measurement to this sample CSV (needs --distance and --duration).
    #[arg(long, requires_all = ["distance", "duration"])]
    append_to: Option<PathBuf>,
    #[arg(long)]
    distance: Option<f64>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long, default_value_t = 0)]
    replicate: u32,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    /// Defaults to $TASTEPRINT_PROJECT_DIR, then ./tasteprint-project.
    #[arg(long)]
    project_dir: Option<PathBuf>,
}

fn parse_point(s: &str) -> Result<Point2, String> {
    let (x, y) = s.split_once(',').ok_or("expected x,y")?;
    let x: f64 = x.trim().parse().map_err(|_| format!("bad x in {s}"))?;
    let y: f64 = y.trim().parse().map_err(|_| format!("bad y in {s}"))?;
    Ok(Point2::new(x, y))
}

fn read_text(path: &Path) -> AppResult<String> {
    std::fs::read_to_string(path).map_err(|e| AppError::new(crate::error::ErrorKind::Io, format!("{}: {e}", path.display())))
}

fn read_bytes(path: &Path) -> AppResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| AppError::new(crate::error::ErrorKind::Io, format!("{}: {e}", path.display())))
}

fn write_out(path: &Path, bytes: &[u8]) -> AppResult<()> {
    write_atomic(path, bytes).map_err(|e| AppError::new(crate::error::ErrorKind::Io, format!("{}: {e}", path.display())))
}

fn load_calibration(path: Option<&Path>) -> AppResult<CalibrationSet> {
    match path {
        Some(p) => pipeline::parse_calibration(&read_text(p)?),
        None => Ok(CalibrationSet::default()),
    }
}

fn load_profile(kv: &str) -> AppResult<MachineProfile> {
    if kv == "default" {
        return Ok(MachineProfile::default());
    }
    pipeline::parse_profile(&read_text(Path::new(kv))?)
}

fn load_slices(path: &Path) -> AppResult<SliceStack> {
    Ok(SliceStack::from_json(&read_text(path)?)?)
}

fn load_design(path: &Path) -> AppResult<TasteDesign> {
    Ok(TasteDesign::from_json(&read_text(path)?)?)
}

/// `key=value` pairs separated by commas.
struct Pairs {
    text: String,
    fields: BTreeMap<String, String>,
}

impl Pairs {
    fn parse(text: &str) -> AppResult<Pairs> {
        let mut fields = BTreeMap::new();
        for part in text.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| AppError::parse(format!("{text}: expected key=value, got {part}")))?;
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Pairs {
            text: text.to_string(),
            fields,
        })
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> AppResult<Option<T>> {
        self.fields
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| AppError::parse(format!("{}: bad value for {key}: {v}", self.text)))
            })
            .transpose()
    }

    fn require<T: std::str::FromStr>(&self, key: &str) -> AppResult<T> {
        self.get(key)?
            .ok_or_else(|| AppError::parse(format!("{}: missing {key}", self.text)))
    }

    fn duration(&self, cal: &CalibrationSet) -> AppResult<u32> {
        match (self.get::<u32>("duration")?, self.get::<u8>("intensity")?) {
            (Some(ms), _) => Ok(ms),
            (None, Some(level)) => Ok(intensity_to_duration(level, cal)?),
            (None, None) => Err(AppError::parse(format!("{}: missing duration or intensity", self.text))),
        }
    }
}

fn slice(args: SliceArgs, out: &mut dyn Write) -> AppResult<()> {
    let bytes = read_bytes(&args.mesh)?;
    let name = args.mesh.to_string_lossy();
    let (mesh, slices) = pipeline::slice_bytes(&name, &bytes, args.layer_height)?;
    write_out(&args.out, slices.to_json().as_bytes())?;
    writeln!(
        out,
        "{} triangles, {} layers of {} mm, volume {:.3} mm³ -> {}",
        mesh.triangle_count(),
        slices.len(),
        slices.layer_height,
        slices.volume(),
        args.out.display()
    )?;
    Ok(())
}

fn plan(args: PlanArgs, out: &mut dyn Write) -> AppResult<()> {
    let slices = load_slices(&args.slices)?;
    let cal = load_calibration(args.calibration.as_deref())?;
    let original = match &args.design {
        Some(p) => load_design(p)?,
        None => TasteDesign::new(&slices, &cal),
    };
    let standoff = MachineProfile::default().default_standoff_mm;
    let mut design = original.clone();
    for text in &args.allocate {
        let kv = Pairs::parse(text)?;
        let request = AllocationRequest {
            channel: kv.require("channel")?,
            total_mass_mg: kv.require("mass")?,
            standoff_mm: kv.get("standoff")?.unwrap_or(standoff),
            weights: None,
        };
        let (next, report) = allocate_total_amount(&design, &request, &slices, &cal)?;
        writeln!(
            out,
            "channel {}: {:.4} mg requested, {:.4} mg allocated over {} events",
            report.channel,
            report.target_mg,
            report.achieved_mg,
            report.layers.iter().map(|l| l.events).sum::<usize>()
        )?;
        design = next;
    }
    for text in &args.pattern {
        let kv = Pairs::parse(text)?;
        let request = PatternRequest {
            channel: kv.require("channel")?,
            duration_ms: kv.duration(&cal)?,
            standoff_mm: kv.get("standoff")?.unwrap_or(standoff),
            overlap: kv.get("overlap")?.unwrap_or(0.0),
            extrapolated: kv.get("extrapolated")?.unwrap_or(false),
        };
        design = fill_pattern(&design, kv.require("layer")?, &request, &slices, &cal)?;
    }
    for text in &args.event {
        let kv = Pairs::parse(text)?;
        let event = SprayEvent {
            extrapolated: kv.get("extrapolated")?.unwrap_or(false),
            ..SprayEvent::new(
                kv.require("channel")?,
                Point2::new(kv.require("x")?, kv.require("y")?),
                kv.duration(&cal)?,
                kv.get("standoff")?.unwrap_or(standoff),
            )
        };
        design = add_free_event(&design, kv.require("layer")?, event, &slices, &cal)?;
    }
    if design != original {
        design.version = original.version + 1;
    }
    design.check_channels()?;
    design.check_against(&slices)?;
    let report = validate_design(&design, &slices, &cal);
    out.write_all(report.to_text().as_bytes())?;
    for m in &report.mass_summary {
        writeln!(out, "channel {}: {} events, {:.4} mg", m.channel, m.events, m.total_mg)?;
    }
    if let Some(p) = &args.report {
        write_out(p, serde_json::to_string_pretty(&report)?.as_bytes())?;
    }
    if report.has_errors() {
        return Err(AppError::validation("design has validation errors")
            .with_diagnostics(report.errors().cloned().collect()));
    }
    if let Some(p) = &args.out {
        write_out(p, design.to_json().as_bytes())?;
        writeln!(out, "{} events -> {}", design.event_count(), p.display())?;
    }
    Ok(())
}

fn gcode(args: GcodeArgs, out: &mut dyn Write) -> AppResult<()> {
    let slices = load_slices(&args.slices)?;
    let design = load_design(&args.design)?;
    let profile = load_profile(&args.profile)?;
    let cal = load_calibration(args.calibration.as_deref())?;
    let infill = InfillSettings {
        density: args.infill_density,
        spacing: args.infill_spacing,
    };
    let text = pipeline::render_gcode(&slices, &design, &profile, &cal, infill)?;
    write_out(&args.out, text.as_bytes())?;
    let s = pipeline::gcode_summary(&text, &design);
    writeln!(out, "{} layers, {} sprays, {} bytes -> {}", s.layers, s.sprays, s.bytes, args.out.display())?;
    Ok(())
}

fn simulate(args: SimulateArgs, out: &mut dyn Write) -> AppResult<()> {
    let text = read_text(&args.gcode)?;
    let profile = load_profile(&args.profile)?;
    let cal = load_calibration(args.calibration.as_deref())?;
    let design = args.design.as_deref().map(load_design).transpose()?;
    let options = SimulationOptions {
        spread_factor: args.spread_factor,
        cell_size: args.cell_size,
    };
    let (result, summary) = pipeline::simulate_text(&text, &cal, &profile, options, design.as_ref())?;
    if let Some(dir) = &args.maps {
        export_maps(&result.maps, dir)?;
    }
    if let Some(p) = &args.masses {
        write_out(p, masses_csv(&result.maps).as_bytes())?;
    }
    if let Some(p) = &args.report {
        write_out(p, serde_json::to_string_pretty(&summary)?.as_bytes())?;
    }
    out.write_all(summary.to_text().as_bytes())?;
    if !summary.all_clear {
        return Err(AppError::validation("simulation found deviations"));
    }
    Ok(())
}

fn fit(args: FitArgs, out: &mut dyn Write) -> AppResult<()> {
    let text = read_bytes(&args.samples)?;
    let samples = read_samples_csv(text.as_slice())?;
    let report = match args.model {
        ModelArg::Resolution => fit_resolution_model(&samples)?,
        ModelArg::Amount => fit_amount_model(&samples)?,
    };
    let coefficients: Vec<String> = report
        .terms
        .iter()
        .zip(&report.coefficients)
        .map(|(t, c)| format!("{t} = {c:.6}"))
        .collect();
    let line = format!(
        "{} samples, R² = {:.4}, {}",
        report.n_samples,
        report.r2,
        coefficients.join(", ")
    );
    match &args.out {
        Some(p) => {
            write_out(p, report.to_json().as_bytes())?;
            writeln!(out, "{line}")?;
        }
        None => {
            writeln!(out, "{}", report.to_json())?;
            eprintln!("{line}");
        }
    }
    if let Some(p) = &args.update_calibration {
        let mut cal = load_calibration(args.calibration.as_deref())?;
        report.apply_to(&mut cal);
        cal.validate()?;
        write_out(p, cal.to_json().as_bytes())?;
    }
    Ok(())
}

fn measure(args: MeasureArgs, out: &mut dyn Write) -> AppResult<()> {
    let image = read_pnm(&read_bytes(&args.image)?)?;
    let markers = MarkerAnnotations::from_json(&read_text(&args.markers)?)?;
    let options = SpotOptions {
        resolution: args.resolution,
        foreground: match args.polarity {
            PolarityArg::Darker => Polarity::Darker,
            PolarityArg::Brighter => Polarity::Brighter,
        },
    };
    let m = measure_spot(&image, &markers.correspondences, args.center, args.roi, options)?;
    writeln!(out, "{}", serde_json::to_string_pretty(&m)?)?;
    if let (Some(path), Some(distance), Some(duration)) = (&args.append_to, args.distance, args.duration) {
        let mut samples = match std::fs::read(path) {
            Ok(bytes) => read_samples_csv(bytes.as_slice())?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        samples.push(m.to_sample(distance, duration, args.replicate));
        let mut buf = Vec::new();
        write_samples_csv(&mut buf, &samples)?;
        write_out(path, &buf)?;
    }
    Ok(())
}

fn serve(args: ServeArgs) -> AppResult<()> {
    let dir = args.project_dir.unwrap_or_else(Project::default_dir);
    let project = Project::open(&dir)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(crate::server::serve(SocketAddr::new(args.host, args.port), project))
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> AppResult<()> {
    match cli.command {
        Command::Slice(a) => slice(a, out),
        Command::Plan(a) => plan(a, out),
        Command::Gcode(a) => gcode(a, out),
        Command::Simulate(a) => simulate(a, out),
        Command::Calibrate(CalibrateCommand::Fit(a)) => fit(a, out),
        Command::Calibrate(CalibrateCommand::Measure(a)) => measure(a, out),
        Command::Serve(a) => serve(a),
    }
}

/// Parses `argv`, runs the subcommand and returns the exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match dispatch(cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
