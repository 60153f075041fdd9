use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use posekit::pipeline::{
    crop_object, estimate_pose, load_frame_dir, load_video_dir, register_sequence, run_eval, sample_support_views,
    write_frame_dir, EvalConfig, EvalOptions, PipelineError, SupportFile, SupportViewRef, SynthDataset, VideoParams,
};
use posekit::synth::dataset::{generate_dataset, DatasetSpec};

#[derive(Parser)]
#[command(name = "posekit", version, about = "Few-shot 6D pose estimation from RGBD support views")]
struct Cli {
    /// Print the effective configuration as JSON and exit.
    #[arg(long, global = true)]
    print_config: bool,
    /// Configuration file; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic data generation.
    Synth {
        #[command(subcommand)]
        command: SynthCommand,
    },
    /// Choose K support frames of one object by farthest rotation sampling.
    SampleViews {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        object: String,
        #[arg(long, default_value_t = 16)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the pose of the support object in one query frame.
    Estimate {
        #[arg(long)]
        support: PathBuf,
        /// Frame directory with rgb.png, depth.png, intrinsics.json and the object mask.
        #[arg(long)]
        query: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Refine the chosen pose with ICP against the query cloud.
        #[arg(long)]
        icp: bool,
    },
    /// Evaluate every query frame of a dataset and write CSV reports.
    Eval(EvalArgs),
    /// Build a support set from an ordered RGBD sequence.
    Register {
        /// Directory of frame subdirectories in capture order.
        #[arg(long)]
        video: PathBuf,
        #[arg(long, default_value_t = 16)]
        k: usize,
        #[arg(long, default_value = "object")]
        object: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum SynthCommand {
    /// Render a dataset of multi-object scenes.
    Gen {
        #[arg(long)]
        scenes: usize,
        #[arg(long)]
        objects_per_scene: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory of PNG textures to use instead of procedural ones.
        #[arg(long)]
        textures: Option<PathBuf>,
        #[arg(long, default_value_t = 640)]
        width: usize,
        #[arg(long, default_value_t = 480)]
        height: usize,
    },
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Use ground-truth poses as predictions (checks the harness itself).
    #[arg(long)]
    oracle_pose: bool,
    /// Use ground-truth correspondences in place of the feature matcher.
    #[arg(long)]
    oracle_correspondences: bool,
    #[arg(long)]
    icp: bool,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io(format!("{}: {e}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn synth(command: SynthCommand) -> Result<(), PipelineError> {
    let SynthCommand::Gen { scenes, objects_per_scene, out, seed, textures, width, height } = command;
    let mut spec = DatasetSpec { scenes, objects_per_scene, seed, textures_dir: textures, ..Default::default() };
    let scale = width as f64 / spec.intrinsics.width as f64;
    spec.intrinsics.fx *= scale;
    spec.intrinsics.fy *= scale;
    spec.intrinsics.cx = (width as f64 - 1.0) / 2.0;
    spec.intrinsics.cy = (height as f64 - 1.0) / 2.0;
    spec.intrinsics.width = width;
    spec.intrinsics.height = height;
    let index = generate_dataset(&spec, &out).map_err(|e| PipelineError::DatasetFormat(e.to_string()))?;
    println!(
        "wrote {} scenes ({} support, {} query) with {} objects to {}",
        scenes,
        index.support_scenes.len(),
        index.query_scenes.len(),
        index.objects.len(),
        out.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let mut config = match &cli.config {
        Some(p) => EvalConfig::load(p)?,
        None => EvalConfig::default(),
    };
    if cli.print_config {
        println!("{}", config.to_json());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(PipelineError::InvalidConfig("no command given; see --help".into()));
    };
    match command {
        Command::Synth { command } => synth(command)?,
        Command::SampleViews { dataset, object, k, out } => {
            let ds = SynthDataset::open(&dataset)?;
            let mut file = sample_support_views(&ds, &object, k)?;
            // store directories relative to the support file when possible
            let base = base_dir(&out);
            let base = fs::canonicalize(if base.as_os_str().is_empty() { Path::new(".") } else { &base })
                .map_err(|e| io_err(&base, e))?;
            for v in &mut file.views {
                let abs = fs::canonicalize(&v.dir).map_err(|e| io_err(&v.dir, e))?;
                v.dir = relative_to(&abs, &base);
            }
            write_json(&out, &file)?;
            println!("selected {} views of {object}", file.views.len());
        }
        Command::Estimate { support, query, out, icp } => {
            config.use_icp |= icp;
            let file = SupportFile::load(&support)?;
            let set = file.resolve(&base_dir(&support), &config)?;
            let full = load_frame_dir(&query, &file.object_id)?;
            let patch = crop_object(&full, config.box_padding, config.patch_size)?;
            let result = estimate_pose(&set, &patch, &config)?;
            write_json(&out, &result)?;
            println!("view {} chosen, loss {:.3e} m²", result.chosen_view, result.per_view_losses[result.chosen_view]);
        }
        Command::Eval(args) => {
            if let Some(k) = args.k {
                config.support_k = k;
            }
            config.use_icp |= args.icp;
            let ds = SynthDataset::open(&args.dataset)?;
            let options =
                EvalOptions { oracle_pose: args.oracle_pose, oracle_correspondences: args.oracle_correspondences };
            let report = run_eval(&ds, &config, options)?;
            report.write(&args.out, &config.metrics)?;
            write_json(&args.out.join("config.json"), &config)?;
            for o in &report.objects {
                println!(
                    "{}: ADDS AUC {:.2}, ADD AUC {:.2}, recall {:.3} ({}), random-pose recall {:.3}",
                    o.object_id,
                    100.0 * o.adds_auc,
                    100.0 * o.add_auc,
                    o.recall,
                    o.recall_metric,
                    o.baseline_recall
                );
            }
        }
        Command::Register { video, k, object, out } => {
            let frames = load_video_dir(&video)?;
            let params =
                VideoParams { k, patch_size: config.patch_size, box_padding: config.box_padding, ..Default::default() };
            let reg = register_sequence(&frames, &object, &params)?;
            let views_dir_name = format!(
                "{}_views",
                out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "support".into())
            );
            let base = base_dir(&out);
            let mut refs = Vec::new();
            for view in &reg.support.views {
                let i: usize = view.source.trim_start_matches("frame_").parse().expect("frame_NNNN source");
                let mut patch = frames[i].clone();
                patch.mask = posekit::pipeline::segment_object(&patch, &params);
                patch.pose = Some(view.pose);
                let rel = Path::new(&views_dir_name).join(&view.source);
                write_frame_dir(&base.join(&rel), &patch, &object)?;
                refs.push(SupportViewRef { dir: rel, pose: view.pose });
            }
            let refs_len = refs.len();
            write_json(&out, &SupportFile { object_id: object, views: refs })?;
            let worst = reg.residuals.iter().copied().fold(0.0, f64::max);
            println!("registered {} frames, kept {} views, worst residual {worst:.2e} m²", frames.len(), refs_len);
        }
    }
    Ok(())
}

fn relative_to(path: &Path, base: &Path) -> PathBuf {
    let p: Vec<_> = path.components().collect();
    let b: Vec<_> = base.components().collect();
    let common = p.iter().zip(&b).take_while(|(x, y)| x == y).count();
    let mut out = PathBuf::new();
    for _ in common..b.len() {
        out.push("..");
    }
    for c in &p[common..] {
        out.push(c);
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
