//! Thin CLI over the pipeline jobs: `fit`, `render`, `composite`,
//! `metrics`, `synth`. A flat `key = value` config file can supply any
//! flag's default; explicit flags win.

use std::collections::HashMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use orthoviz::fit::FitOptions;
use orthoviz::pipeline::{
    load_flat_config, run_composite, run_fit, run_metrics, run_render, run_synth, CompositeJob,
    FitJob, RenderJob, SynthJob,
};
use orthoviz::synth::{ArchSpec, PoseRanges};

#[derive(Parser)]
#[command(name = "orthoviz", about = "Teeth pose fitting and treatment-stage rendering")]
struct Cli {
    /// flat key = value config file; flags override its entries
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Recover the camera/jaw pose from a segmented target silhouette
    Fit(FitArgs),
    /// Render silhouette/mask/depth for every stage with a fitted pose
    Render(RenderArgs),
    /// Fuse a generated mouth crop back into the face photo
    Composite(CompositeArgs),
    /// Silhouette distance and IoU between two silhouette images
    Metrics(MetricsArgs),
    /// Generate a synthetic ground-truth case
    Synth(SynthArgs),
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    series_dir: Option<PathBuf>,
    /// target teeth silhouette PNG
    #[arg(long)]
    target: Option<PathBuf>,
    /// mouth label (inner-mouth region) PNG
    #[arg(long)]
    mouth_label: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    size: Option<u32>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    loss_threshold: Option<f64>,
    #[arg(long)]
    visibility_window: Option<f64>,
    /// include the per-iteration loss trace in fit.json
    #[arg(long)]
    trace: bool,
    /// exit 0 even when the fit did not reach the loss threshold
    #[arg(long)]
    allow_nonconverged: bool,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    series_dir: Option<PathBuf>,
    /// fit.json or a bare pose JSON
    #[arg(long)]
    pose: Option<PathBuf>,
    #[arg(long)]
    mouth_label: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    size: Option<u32>,
    #[arg(long)]
    visibility_window: Option<f64>,
}

#[derive(Args)]
struct CompositeArgs {
    #[arg(long)]
    face: Option<PathBuf>,
    /// generated mouth crop PNG
    #[arg(long)]
    generated: Option<PathBuf>,
    /// crop rect sidecar JSON {"x0":..,"y0":..,"side":..}
    #[arg(long)]
    rect: Option<PathBuf>,
    #[arg(long)]
    mouth_label: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// on|off (default on)
    #[arg(long)]
    color_transfer: Option<String>,
    /// teeth mask of the generated crop, for color statistics
    #[arg(long)]
    output_teeth_mask: Option<PathBuf>,
    /// teeth mask of the original crop, for color statistics
    #[arg(long)]
    reference_teeth_mask: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    a: Option<PathBuf>,
    #[arg(long)]
    b: Option<PathBuf>,
    #[arg(long)]
    region: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    size: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    teeth_per_jaw: Option<u32>,
    #[arg(long)]
    visibility_window: Option<f64>,
}

/// Config-file fallback for an optional flag.
struct Resolver {
    map: HashMap<String, String>,
}

impl Resolver {
    fn path(&self, flag: Option<PathBuf>, key: &str) -> Option<PathBuf> {
        flag.or_else(|| self.map.get(key).map(PathBuf::from))
    }

    fn required_path(&self, flag: Option<PathBuf>, key: &str) -> Result<PathBuf, String> {
        self.path(flag, key)
            .ok_or_else(|| format!("missing required input `--{key}` (or config key `{key}`)"))
    }

    fn parse<T: std::str::FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, String> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => match self.map.get(key) {
                Some(raw) => raw
                    .parse()
                    .map(Some)
                    .map_err(|_| format!("config key `{key}`: cannot parse `{raw}`")),
                None => Ok(None),
            },
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let map = match &cli.config {
        Some(path) => match load_flat_config(path) {
            Ok(map) => map,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::FAILURE;
            }
        },
        None => HashMap::new(),
    };
    let resolver = Resolver { map };
    let outcome = match cli.command {
        Command::Fit(args) => cmd_fit(&resolver, args),
        Command::Render(args) => cmd_render(&resolver, args),
        Command::Composite(args) => cmd_composite(&resolver, args),
        Command::Metrics(args) => cmd_metrics(&resolver, args),
        Command::Synth(args) => cmd_synth(&resolver, args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_fit(resolver: &Resolver, args: FitArgs) -> Result<(), String> {
    let mut options = FitOptions::default();
    if let Some(lr) = resolver.parse(args.lr, "lr")? {
        options.learning_rate = lr;
    }
    if let Some(n) = resolver.parse(args.max_iterations, "max-iterations")? {
        options.max_iterations = n;
    }
    if let Some(t) = resolver.parse(args.loss_threshold, "loss-threshold")? {
        options.loss_threshold = t;
    }
    if let Some(w) = resolver.parse(args.visibility_window, "visibility-window")? {
        options.visibility_window = w;
    }
    let job = FitJob {
        series_dir: resolver.required_path(args.series_dir, "series-dir")?,
        target: resolver.required_path(args.target, "target")?,
        mouth_label: resolver.required_path(args.mouth_label, "mouth-label")?,
        output_dir: resolver
            .path(args.output_dir, "output-dir")
            .unwrap_or_else(|| PathBuf::from(".")),
        size: resolver.parse(args.size, "size")?.unwrap_or(256),
        options,
        include_trace: args.trace,
        initial_pose: None,
    };
    let result = run_fit(&job).map_err(|e| e.to_string())?;
    println!(
        "fit: converged={} final_loss={:.6e} iterations={}",
        result.converged, result.final_loss, result.iterations_run
    );
    if !result.converged && !args.allow_nonconverged {
        return Err(format!(
            "fit did not converge (final_loss {:.6e}); pass --allow-nonconverged to accept",
            result.final_loss
        ));
    }
    Ok(())
}

fn cmd_render(resolver: &Resolver, args: RenderArgs) -> Result<(), String> {
    let job = RenderJob {
        series_dir: resolver.required_path(args.series_dir, "series-dir")?,
        pose_file: resolver.required_path(args.pose, "pose")?,
        mouth_label: resolver.required_path(args.mouth_label, "mouth-label")?,
        output_dir: resolver
            .path(args.output_dir, "output-dir")
            .unwrap_or_else(|| PathBuf::from(".")),
        size: resolver.parse(args.size, "size")?.unwrap_or(256),
        visibility_window: resolver
            .parse(args.visibility_window, "visibility-window")?
            .unwrap_or(0.5),
    };
    let written = run_render(&job).map_err(|e| e.to_string())?;
    println!("render: wrote {} files to {}", written.len(), job.output_dir.display());
    Ok(())
}

fn cmd_composite(resolver: &Resolver, args: CompositeArgs) -> Result<(), String> {
    let toggle = resolver
        .parse(args.color_transfer, "color-transfer")?
        .unwrap_or_else(|| "on".to_string());
    let color_transfer = match toggle.as_str() {
        "on" => true,
        "off" => false,
        other => return Err(format!("--color-transfer expects on|off, got `{other}`")),
    };
    let job = CompositeJob {
        face: resolver.required_path(args.face, "face")?,
        generated_crop: resolver.required_path(args.generated, "generated")?,
        rect_file: resolver.required_path(args.rect, "rect")?,
        mouth_label: resolver.required_path(args.mouth_label, "mouth-label")?,
        output_dir: resolver
            .path(args.output_dir, "output-dir")
            .unwrap_or_else(|| PathBuf::from(".")),
        color_transfer,
        output_teeth_mask: resolver.path(args.output_teeth_mask, "output-teeth-mask"),
        reference_teeth_mask: resolver.path(args.reference_teeth_mask, "reference-teeth-mask"),
    };
    let out = run_composite(&job).map_err(|e| e.to_string())?;
    println!("composite: wrote {}", out.display());
    Ok(())
}

fn cmd_metrics(resolver: &Resolver, args: MetricsArgs) -> Result<(), String> {
    let a = resolver.required_path(args.a, "a")?;
    let b = resolver.required_path(args.b, "b")?;
    let region = resolver.required_path(args.region, "region")?;
    let output_dir = resolver
        .path(args.output_dir, "output-dir")
        .unwrap_or_else(|| PathBuf::from("."));
    let report = run_metrics(&a, &b, &region, &output_dir).map_err(|e| e.to_string())?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serializes")
    );
    Ok(())
}

fn cmd_synth(resolver: &Resolver, args: SynthArgs) -> Result<(), String> {
    let mut spec = ArchSpec::default();
    if let Some(seed) = resolver.parse(args.seed, "seed")? {
        spec.seed = seed;
    }
    if let Some(n) = resolver.parse(args.teeth_per_jaw, "teeth-per-jaw")? {
        spec.teeth_per_jaw = n;
    }
    let job = SynthJob {
        spec,
        ranges: PoseRanges::default(),
        size: resolver.parse(args.size, "size")?.unwrap_or(256),
        visibility_window: resolver
            .parse(args.visibility_window, "visibility-window")?
            .unwrap_or(0.5),
        output_dir: resolver
            .path(args.output_dir, "output-dir")
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    run_synth(&job).map_err(|e| e.to_string())?;
    println!("synth: wrote case to {}", job.output_dir.display());
    Ok(())
}
