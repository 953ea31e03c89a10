//! Command-line front end: every pipeline stage as a subcommand plus the
//! full run. Exit codes: 0 success, 1 usage error, 2 data/validation error.

mod config;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use stemleaf::cloud::{self, SpatialIndex};
use stemleaf::density::{write_density_csv, DensityParams, ValidationConfig};
use stemleaf::error::Error;
use stemleaf::eval::{confusion, random_baseline, MetricsSummary, SvmSummary};
use stemleaf::hull::convex_hull_3d;
use stemleaf::pipeline::{run as run_pipeline, select_validated_stem_samples, PipelineConfig};
use stemleaf::svm::{self, Gamma, SvmModel, SvmParams};
use stemleaf::synth::{generate_plant, PlantSpec};

#[derive(Parser)]
#[command(
    name = "stemleaf",
    version,
    about = "Leaf/stem classification of plant point clouds"
)]
struct Cli {
    /// Cap the number of worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic potted plant.
    Generate(GenerateArgs),
    /// Compute the convex hull and report its vertices (leaf samples).
    Hull(HullArgs),
    /// Select stem sample points by grid-projection density.
    Stems(StemsArgs),
    /// Train an SVM from leaf and stem training-point files.
    Train(TrainArgs),
    /// Classify a cloud with a trained model.
    Classify(ClassifyArgs),
    /// Score a predicted labeling against a standard one.
    Evaluate(EvaluateArgs),
    /// Run the full automated pipeline.
    Pipeline(PipelineArgs),
    /// Random-selection baseline using ground-truth organ labels.
    Baseline(BaselineArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output path (labeled XYZ: `x y z label`).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100_000)]
    points: usize,
    #[arg(long = "stem-height", default_value_t = 200.0)]
    stem_height: f64,
    #[arg(long = "stem-radius", default_value_t = 1.5)]
    stem_radius: f64,
    #[arg(long = "leaf-count", default_value_t = 8)]
    leaf_count: usize,
    #[arg(long = "leaf-length", default_value_t = 70.0)]
    leaf_length: f64,
    #[arg(long = "leaf-width", default_value_t = 35.0)]
    leaf_width: f64,
    /// Leaf droop angle from horizontal, degrees.
    #[arg(long, default_value_t = 30.0)]
    droop: f64,
    /// Gaussian jitter sigma in mm.
    #[arg(long, default_value_t = 0.08)]
    noise: f64,
    /// Add a stem-like slender leaf (the known failure mode).
    #[arg(long = "slender-leaf")]
    slender_leaf: bool,
}

#[derive(Args)]
struct HullArgs {
    /// Input cloud (XYZ).
    #[arg(long = "in")]
    input: PathBuf,
    /// Write hull vertex indices, one per line.
    #[arg(long = "out-vertices")]
    out_vertices: Option<PathBuf>,
    /// Export the hull as an ASCII OFF mesh.
    #[arg(long = "out-off")]
    out_off: Option<PathBuf>,
}

#[derive(Args, Default)]
struct DensityFlags {
    /// Random candidate count for the density search.
    #[arg(long)]
    p: Option<usize>,
    /// Density sphere radius in mm.
    #[arg(long)]
    r: Option<f64>,
    /// Projection grid spacing in mm.
    #[arg(long = "grid-spacing")]
    grid_spacing: Option<f64>,
    /// Number of top-density stem samples to keep.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl DensityFlags {
    fn apply(&self, density: &mut DensityParams) {
        if let Some(p) = self.p {
            density.candidates = p;
        }
        if let Some(r) = self.r {
            density.radius = r;
        }
        if let Some(g) = self.grid_spacing {
            density.grid_spacing = g;
        }
        if let Some(n) = self.n {
            density.keep = n;
        }
        if let Some(seed) = self.seed {
            density.seed = seed;
        }
    }
}

#[derive(Args, Default)]
struct SvmFlags {
    /// Soft-margin penalty.
    #[arg(long)]
    c: Option<f64>,
    /// RBF width: a number or `auto`.
    #[arg(long, value_parser = config::parse_gamma)]
    gamma: Option<Gamma>,
    /// KKT tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration budget in units of the training-set size.
    #[arg(long = "max-passes")]
    max_passes: Option<usize>,
    /// Disable per-axis feature standardization.
    #[arg(long = "no-scaling")]
    no_scaling: bool,
}

impl SvmFlags {
    fn apply(&self, svm: &mut SvmParams) {
        if let Some(c) = self.c {
            svm.c = c;
        }
        if let Some(gamma) = self.gamma {
            svm.gamma = gamma;
        }
        if let Some(tol) = self.tol {
            svm.tol = tol;
        }
        if let Some(mp) = self.max_passes {
            svm.max_passes = mp;
        }
        if self.no_scaling {
            svm.scaling = false;
        }
    }
}

#[derive(Args, Default)]
struct ValidationFlags {
    /// Accept stem samples without the compactness/spread check.
    #[arg(long = "no-validate")]
    no_validate: bool,
    #[arg(long = "compactness-factor")]
    compactness_factor: Option<f64>,
    #[arg(long = "spread-factor")]
    spread_factor: Option<f64>,
    /// Reselection attempts before giving up.
    #[arg(long = "max-retries")]
    max_retries: Option<u32>,
}

impl ValidationFlags {
    fn apply(&self, validation: &mut ValidationConfig) {
        if self.no_validate {
            validation.enabled = false;
        }
        if let Some(f) = self.compactness_factor {
            validation.compactness_factor = f;
        }
        if let Some(f) = self.spread_factor {
            validation.spread_factor = f;
        }
        if let Some(n) = self.max_retries {
            validation.max_retries = n;
        }
    }
}

#[derive(Args)]
struct StemsArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Config file (`key = value`); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    density: DensityFlags,
    #[command(flatten)]
    validation: ValidationFlags,
    /// Write selected sample indices, one per line.
    #[arg(long = "out-samples")]
    out_samples: Option<PathBuf>,
    /// Write per-candidate density diagnostics as CSV `index,l,num,m`.
    #[arg(long = "out-csv")]
    out_csv: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Leaf training points (XYZ).
    #[arg(long)]
    leaf: PathBuf,
    /// Stem training points (XYZ).
    #[arg(long)]
    stem: PathBuf,
    /// Output model path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    svm: SvmFlags,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Labeled XYZ output.
    #[arg(long)]
    out: PathBuf,
    /// Optional colored PLY export.
    #[arg(long)]
    ply: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Predicted labeling (labeled XYZ or bare labels).
    #[arg(long)]
    pred: PathBuf,
    /// Standard labeling (labeled XYZ or bare labels).
    #[arg(long)]
    truth: PathBuf,
    /// Also write the JSON record here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Ground-truth labels for scoring (labeled XYZ or bare labels).
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Write the classified cloud (labeled XYZ).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the JSON report line here (also printed to stdout).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Optional colored PLY export.
    #[arg(long)]
    ply: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Leaf training expansion radius in mm.
    #[arg(long)]
    r1: Option<f64>,
    /// Stem training expansion radius in mm.
    #[arg(long)]
    r2: Option<f64>,
    #[command(flatten)]
    density: DensityFlags,
    #[command(flatten)]
    svm: SvmFlags,
    #[command(flatten)]
    validation: ValidationFlags,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Number of random sample points.
    #[arg(long, default_value_t = 50)]
    k: usize,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    r1: Option<f64>,
    #[arg(long)]
    r2: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    svm: SvmFlags,
    #[arg(long)]
    report: Option<PathBuf>,
}

enum CliError {
    Usage(String),
    Data(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match &e {
            Error::InvalidParam { name, reason } => {
                CliError::Usage(format!("invalid --{name}: {reason}"))
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

type CliResult = Result<(), CliError>;

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    if let Some(threads) = cli.threads {
        if rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .is_err()
        {
            eprintln!("warning: thread pool already initialized, --threads ignored");
        }
    }
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

fn dispatch(command: Command) -> CliResult {
    match command {
        Command::Generate(args) => cmd_generate(args),
        Command::Hull(args) => cmd_hull(args),
        Command::Stems(args) => cmd_stems(args),
        Command::Train(args) => cmd_train(args),
        Command::Classify(args) => cmd_classify(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Pipeline(args) => cmd_pipeline(args),
        Command::Baseline(args) => cmd_baseline(args),
    }
}

fn base_config(path: &Option<PathBuf>) -> Result<PipelineConfig, CliError> {
    match path {
        Some(p) => config::load_config(p).map_err(CliError::Usage),
        None => Ok(PipelineConfig::new()),
    }
}

fn write_text(path: &PathBuf, text: &str) -> CliResult {
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn cmd_generate(args: GenerateArgs) -> CliResult {
    let spec = PlantSpec {
        stem_height: args.stem_height,
        stem_radius: args.stem_radius,
        leaf_count: args.leaf_count,
        leaf_length: args.leaf_length,
        leaf_width: args.leaf_width,
        leaf_droop_deg: args.droop,
        points_total: args.points,
        noise_sigma: args.noise,
        slender_leaf: args.slender_leaf,
        seed: args.seed,
    };
    let (cloud, labels) = generate_plant(&spec)?;
    cloud::save_labeled(&args.out, &cloud, &labels)?;
    eprintln!(
        "wrote {} labeled points to {}",
        cloud.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_hull(args: HullArgs) -> CliResult {
    let cloud = cloud::load_xyz(&args.input)?;
    let hull = convex_hull_3d(&cloud)?;
    println!(
        "{} hull vertices, {} faces",
        hull.vertices.len(),
        hull.faces.len()
    );
    if let Some(path) = &args.out_vertices {
        let text: String = hull.vertices.iter().map(|v| format!("{v}\n")).collect();
        write_text(path, &text)?;
    }
    if let Some(path) = &args.out_off {
        hull.write_off(path, &cloud)?;
    }
    Ok(())
}

fn cmd_stems(args: StemsArgs) -> CliResult {
    let mut config = base_config(&args.config)?;
    args.density.apply(&mut config.density);
    args.validation.apply(&mut config.validation);
    config.density.validate()?;

    let cloud = cloud::load_xyz(&args.input)?;
    let index = SpatialIndex::build(&cloud)?;
    let (samples, reports, attempts) =
        select_validated_stem_samples(&cloud, &index, &config.density, &config.validation)?;
    println!(
        "{} stem samples after {attempts} attempt(s): {:?}",
        samples.indices.len(),
        samples.indices
    );
    if let Some(path) = &args.out_samples {
        let text: String = samples.indices.iter().map(|v| format!("{v}\n")).collect();
        write_text(path, &text)?;
    }
    if let Some(path) = &args.out_csv {
        write_density_csv(path, &reports)?;
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> CliResult {
    let mut config = base_config(&args.config)?;
    args.svm.apply(&mut config.svm);
    config.svm.validate()?;

    let leaf = cloud::load_xyz(&args.leaf)?;
    let stem = cloud::load_xyz(&args.stem)?;
    let outcome = svm::train(leaf.points(), stem.points(), &config.svm)?;
    if !outcome.diag.converged {
        eprintln!(
            "warning: SMO hit the iteration budget ({} iterations, violation {:.2e})",
            outcome.diag.iterations, outcome.diag.final_violation
        );
    }
    outcome.model.save(&args.out)?;
    println!("{}", SvmSummary::from_outcome(&outcome).to_json_line());
    Ok(())
}

fn cmd_classify(args: ClassifyArgs) -> CliResult {
    let cloud = cloud::load_xyz(&args.input)?;
    let model = SvmModel::load(&args.model)?;
    let start = Instant::now();
    let labels = model.predict(&cloud);
    eprintln!(
        "classified {} points in {:.2?}",
        cloud.len(),
        start.elapsed()
    );
    cloud::save_labeled(&args.out, &cloud, &labels)?;
    if let Some(ply) = &args.ply {
        cloud::write_ply(ply, &cloud, &labels)?;
    }
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> CliResult {
    let (_, predicted) = cloud::load_labeled(&args.pred)?;
    let (_, truth) = cloud::load_labeled(&args.truth)?;
    let cm = confusion(&truth, &predicted)?;
    let metrics = MetricsSummary::from_confusion(&cm)?;
    eprintln!("{metrics}");
    let line = metrics.to_json_line();
    println!("{line}");
    if let Some(path) = &args.report {
        write_text(path, &format!("{line}\n"))?;
    }
    Ok(())
}

fn cmd_pipeline(args: PipelineArgs) -> CliResult {
    let mut config = base_config(&args.config)?;
    if let Some(r1) = args.r1 {
        config.leaf_expand_radius = r1;
    }
    if let Some(r2) = args.r2 {
        config.stem_expand_radius = r2;
    }
    args.density.apply(&mut config.density);
    args.svm.apply(&mut config.svm);
    args.validation.apply(&mut config.validation);
    config.validate()?;

    let cloud = cloud::load_xyz(&args.input)?;
    let truth = match &args.truth {
        Some(path) => {
            let (_, labels) = cloud::load_labeled(path)?;
            Some(labels)
        }
        None => None,
    };

    let start = Instant::now();
    let outcome = run_pipeline(&cloud, truth.as_deref(), &config)?;
    eprintln!("pipeline finished in {:.2?}", start.elapsed());
    if let Some(metrics) = &outcome.report.metrics {
        eprintln!("{metrics}");
    }

    let line = outcome.report.to_json_line();
    println!("{line}");
    if let Some(path) = &args.report {
        write_text(path, &format!("{line}\n"))?;
    }
    if let Some(path) = &args.out {
        cloud::save_labeled(path, &cloud, &outcome.labels)?;
    }
    if let Some(path) = &args.ply {
        cloud::write_ply(path, &cloud, &outcome.labels)?;
    }
    Ok(())
}

fn cmd_baseline(args: BaselineArgs) -> CliResult {
    let mut config = base_config(&args.config)?;
    if let Some(r1) = args.r1 {
        config.leaf_expand_radius = r1;
    }
    if let Some(r2) = args.r2 {
        config.stem_expand_radius = r2;
    }
    if let Some(seed) = args.seed {
        config.density.seed = seed;
    }
    args.svm.apply(&mut config.svm);
    config.svm.validate()?;

    let cloud = cloud::load_xyz(&args.input)?;
    let (_, truth) = cloud::load_labeled(&args.truth)?;
    let index = SpatialIndex::build(&cloud)?;
    let outcome = random_baseline(
        &cloud,
        &index,
        &truth,
        args.k,
        config.leaf_expand_radius,
        config.stem_expand_radius,
        config.density.seed,
        &config.svm,
    )?;
    let line = outcome.report.to_json_line();
    println!("{line}");
    if let Some(path) = &args.report {
        write_text(path, &format!("{line}\n"))?;
    }
    Ok(())
}
