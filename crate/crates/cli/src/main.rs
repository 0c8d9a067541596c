use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use tactile_voronoi::calibration::{
    average_steps, fit_calibration, CalibrationKind, CalibrationTable,
};
use tactile_voronoi::formats::{
    check_units, parse_calibration, parse_features, write_calibration, write_features,
    write_surface, FeaturesHeader, Recording, Units,
};
use tactile_voronoi::pipeline::{FeatureRecord, PipelineConfig, Processor};
use tactile_voronoi::render::render_frame;
use tactile_voronoi::shear::global_shear_with_epsilon;
use tactile_voronoi::simulator::{
    generate_layout, run_protocol, LayoutSpec, MembraneModel, ProtocolKind, ProtocolOptions,
    DEFAULT_PITCH, DEFAULT_PROTOCOL_RADIUS, DEFAULT_RADIAL_GAIN, DEFAULT_RINGS,
};
use tactile_voronoi::surface::ContactSet;
use tactile_voronoi::validation::validate_features;

#[derive(Parser)]
#[command(
    name = "tactile-voronoi",
    version,
    about = "Tactile features from marker centroids"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a calibration or validation protocol and write a recording
    Simulate {
        #[arg(long, default_value_t = DEFAULT_RINGS)]
        layout_rings: u32,
        #[arg(long, default_value_t = DEFAULT_PITCH)]
        pitch: f64,
        #[arg(long, value_enum)]
        protocol: ProtocolArg,
        /// Per-coordinate Gaussian noise, in layout units
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        samples_per_step: usize,
        /// Positional jitter of the rest layout, in layout units
        #[arg(long, default_value_t = 0.0)]
        jitter: f64,
        #[arg(long, default_value_t = DEFAULT_PROTOCOL_RADIUS)]
        radius: f64,
        #[arg(long, default_value_t = DEFAULT_RADIAL_GAIN)]
        gain: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract features from every frame of a recording
    Infer {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Calibration table; may be given once per kind
        #[arg(long)]
        calib: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a calibration table from a protocol recording
    Calibrate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum)]
        kind: KindArg,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write one SVG per feature record
    Render {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Compare features against the recording's ground truth
    Validate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Dump the interpolated deformation surface of one frame
    ExportSurface {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        frame: usize,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Depth,
    Shear,
    Direction,
}

impl From<ProtocolArg> for ProtocolKind {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::Depth => ProtocolKind::DepthSweep,
            ProtocolArg::Shear => ProtocolKind::ShearSweep,
            ProtocolArg::Direction => ProtocolKind::DirectionValidation,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Depth,
    Shear,
}

impl From<KindArg> for CalibrationKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Depth => CalibrationKind::Depth,
            KindArg::Shear => CalibrationKind::ShearMagnitude,
        }
    }
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// TOML pipeline configuration
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    contact_threshold: Option<f64>,
    #[arg(long)]
    grid_nx: Option<usize>,
    #[arg(long)]
    grid_ny: Option<usize>,
    #[arg(long)]
    color_scale_max: Option<f64>,
}

impl ConfigArgs {
    fn load(&self) -> anyhow::Result<PipelineConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = read(path)?;
                toml::from_str(&text).with_context(|| format!("{}", path.display()))?
            }
            None => PipelineConfig::default(),
        };
        if let Some(t) = self.contact_threshold {
            config.contact_threshold = t;
        }
        if let Some(n) = self.grid_nx {
            config.grid.nx = n;
        }
        if let Some(n) = self.grid_ny {
            config.grid.ny = n;
        }
        if let Some(c) = self.color_scale_max {
            config.render.color_scale_max = c;
        }
        config.validate()?;
        Ok(config)
    }
}

/// Separates bad input (exit 2) from a failed validation (exit 1).
enum Failure {
    Input(anyhow::Error),
    Validation,
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

impl From<tactile_voronoi::Error> for Failure {
    fn from(e: tactile_voronoi::Error) -> Self {
        Failure::Input(e.into())
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, contents: &str) -> anyhow::Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn load_recording(path: &Path) -> anyhow::Result<Recording> {
    Recording::parse(&read(path)?).with_context(|| format!("{}", path.display()))
}

fn load_features(path: &Path) -> anyhow::Result<(FeaturesHeader, Vec<FeatureRecord>)> {
    parse_features(&read(path)?).with_context(|| format!("{}", path.display()))
}

/// Processes every frame in parallel; results come back in frame order and
/// the first failing frame (by index) is reported.
fn process_all(
    processor: &Processor,
    recording: &Recording,
) -> tactile_voronoi::Result<Vec<FeatureRecord>> {
    let results: Vec<_> = recording
        .frames
        .par_iter()
        .enumerate()
        .map(|(i, f)| processor.process_frame(i, f))
        .collect();
    results.into_iter().collect()
}

fn simulate(
    spec: LayoutSpec,
    protocol: ProtocolKind,
    noise: f64,
    options: ProtocolOptions,
    out: &Path,
) -> Result<(), Failure> {
    let layout = generate_layout(&spec)?;
    let dataset = run_protocol(protocol, &layout, noise, &options)?;
    let recording = Recording::from_protocol(&dataset, Units::SyntheticUnit, Some(spec), noise)?;
    write(out, &recording.to_jsonl())?;
    eprintln!(
        "wrote {} frames to {}",
        recording.frames.len(),
        out.display()
    );
    Ok(())
}

fn infer(
    input: &Path,
    config: PipelineConfig,
    calibs: &[PathBuf],
    out: &Path,
) -> Result<(), Failure> {
    let recording = load_recording(input)?;
    let mut processor = Processor::new(recording.reference().clone(), config)?;
    let mut loaded: BTreeMap<&'static str, PathBuf> = BTreeMap::new();
    let (mut depth, mut shear) = (false, false);
    for path in calibs {
        let (table, units) =
            parse_calibration(&read(path)?).with_context(|| format!("{}", path.display()))?;
        check_units(recording.header.units, units, table.kind())
            .with_context(|| format!("{}", path.display()))?;
        let slot = match table.kind() {
            CalibrationKind::Depth => {
                depth = true;
                "depth"
            }
            CalibrationKind::ShearMagnitude => {
                shear = true;
                "shear"
            }
        };
        if let Some(prev) = loaded.insert(slot, path.clone()) {
            return Err(Failure::Input(anyhow::anyhow!(
                "two {slot} calibrations given: {} and {}",
                prev.display(),
                path.display()
            )));
        }
        processor = processor.with_calibration(table);
    }
    let records = process_all(&processor, &recording)?;
    let header = FeaturesHeader::new(recording.header.units, records.len(), depth, shear);
    write(out, &write_features(&header, &records))?;
    Ok(())
}

fn calibrate(
    input: &Path,
    kind: CalibrationKind,
    config: PipelineConfig,
    out: &Path,
) -> Result<(), Failure> {
    let recording = load_recording(input)?;
    if recording.truth.is_empty() {
        return Err(Failure::Input(anyhow::anyhow!(
            "{} has no protocol telemetry",
            input.display()
        )));
    }
    let processor = Processor::new(recording.reference().clone(), config)?;
    let frames: Vec<usize> = recording.truth.keys().copied().collect();
    let results: Vec<tactile_voronoi::Result<f64>> = frames
        .par_iter()
        .map(|&i| {
            let r = processor.process_frame(i, &recording.frames[i])?;
            Ok(match kind {
                CalibrationKind::Depth => r.volume_raw,
                CalibrationKind::ShearMagnitude => r.shear.magnitude_raw,
            })
        })
        .collect();
    let raws = results
        .into_iter()
        .collect::<tactile_voronoi::Result<Vec<f64>>>()?;

    // Average the repeated samples of each step before fitting.
    let mut steps: BTreeMap<usize, (f64, Vec<f64>)> = BTreeMap::new();
    for (&frame, raw) in frames.iter().zip(raws) {
        let t = &recording.truth[&frame];
        steps
            .entry(t.step)
            .or_insert_with(|| (t.telemetry, Vec::new()))
            .1
            .push(raw);
    }
    let steps: Vec<(f64, Vec<f64>)> = steps.into_values().collect();
    let table: CalibrationTable = fit_calibration(&average_steps(&steps), kind)?;
    write(out, &write_calibration(&table, recording.header.units))?;
    eprintln!(
        "wrote {}-knot {:?} calibration to {}",
        table.samples().len(),
        kind,
        out.display()
    );
    Ok(())
}

fn render(
    input: &Path,
    features: &Path,
    config: PipelineConfig,
    out_dir: &Path,
) -> Result<(), Failure> {
    let recording = load_recording(input)?;
    let (_, records) = load_features(features)?;
    let processor = Processor::new(recording.reference().clone(), config)?;
    fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    records
        .par_iter()
        .map(|r| -> anyhow::Result<()> {
            let frame = recording
                .frames
                .get(r.frame)
                .with_context(|| format!("feature record for missing frame {}", r.frame))?;
            let analysis = processor.analyze(frame).map_err(|e| e.at_frame(r.frame))?;
            let mut shear = global_shear_with_epsilon(
                &analysis.shear.locals,
                processor.config().direction_epsilon,
            )?;
            shear.direction_deg = r.shear.direction_deg;
            let contacts = ContactSet {
                contacts: r.contacts.to_vec(),
                threshold_used: processor.config().contact_threshold,
            };
            let svg = render_frame(
                &analysis.cells,
                &r.area_deltas,
                &shear,
                &contacts,
                &processor.config().render,
            )
            .map_err(|e| e.at_frame(r.frame))?;
            write(&out_dir.join(format!("frame_{:05}.svg", r.frame)), &svg)
        })
        .collect::<Vec<anyhow::Result<()>>>()
        .into_iter()
        .collect::<anyhow::Result<Vec<()>>>()?;
    Ok(())
}

fn validate(input: &Path, features: &Path, config: PipelineConfig) -> Result<(), Failure> {
    let recording = load_recording(input)?;
    let (_, records) = load_features(features)?;
    let report = validate_features(&recording, &records, &config.tolerances)?;
    if let Some(d) = &report.direction {
        println!(
            "direction: n={} mean_abs_error_deg={:.4} max_abs_error_deg={:.4}",
            d.count, d.mean_abs_deg, d.max_abs_deg
        );
    }
    if let Some(c) = &report.contacts {
        println!(
            "contacts: n={} count_mismatches={} mean_error_spacings={:.4} max_error_spacings={:.4}",
            c.count, c.count_mismatches, c.mean_error_spacings, c.max_error_spacings
        );
    }
    if let Some(r) = report.volume_depth_correlation {
        println!("volume_depth_correlation: {r:.6}");
    }
    for c in &report.checks {
        println!(
            "{} {}: {:.6} (bound {})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.bound
        );
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Validation)
    }
}

fn export_surface(
    input: &Path,
    frame: usize,
    config: PipelineConfig,
    out: &Path,
) -> Result<(), Failure> {
    let recording = load_recording(input)?;
    let Some(current) = recording.frames.get(frame) else {
        return Err(Failure::Input(anyhow::anyhow!(
            "frame {frame} out of range ({} frames)",
            recording.frames.len()
        )));
    };
    let processor = Processor::new(recording.reference().clone(), config)?;
    let analysis = processor.analyze(current).map_err(|e| e.at_frame(frame))?;
    write(out, &write_surface(frame, &analysis.surface))?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate {
            layout_rings,
            pitch,
            protocol,
            noise,
            seed,
            samples_per_step,
            jitter,
            radius,
            gain,
            out,
        } => {
            if !(noise >= 0.0 && noise.is_finite()) {
                return Err(Failure::Input(anyhow::anyhow!(
                    "noise must be non-negative"
                )));
            }
            let spec = LayoutSpec {
                rings: layout_rings,
                pitch,
                jitter,
                seed,
            };
            let options = ProtocolOptions {
                radius,
                samples_per_step,
                seed,
                model: MembraneModel { radial_gain: gain },
            };
            simulate(spec, protocol.into(), noise, options, &out)
        }
        Command::Infer {
            input,
            config,
            calib,
            out,
        } => infer(&input, config.load()?, &calib, &out),
        Command::Calibrate {
            input,
            kind,
            config,
            out,
        } => calibrate(&input, kind.into(), config.load()?, &out),
        Command::Render {
            input,
            features,
            config,
            out_dir,
        } => render(&input, &features, config.load()?, &out_dir),
        Command::Validate {
            input,
            features,
            config,
        } => validate(&input, &features, config.load()?),
        Command::ExportSurface {
            input,
            frame,
            config,
            out,
        } => export_surface(&input, frame, config.load()?, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation) => {
            eprintln!("validation failed");
            ExitCode::from(1)
        }
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
