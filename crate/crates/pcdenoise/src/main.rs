use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use pcdenoise::config::ShapeSource;
use pcdenoise::error::exit;
use pcdenoise::manifest::{generate_dataset, GenDataArgs, RunManifest};
use pcdenoise::pipeline::{denoise_with, evaluate};
use pcdenoise::{io, load_checkpoint, train, Config, PipelineError, Result};

#[derive(Parser)]
#[command(name = "pcdenoise", version, about = "Point cloud denoising by patch manifold reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample noisy/clean cloud pairs from meshes and split them into patches.
    GenData {
        /// Shape names (sphere, torus, plane, cube, icosphere) or OFF/OBJ paths.
        #[arg(long, value_delimiter = ',', default_value = "sphere,torus,plane")]
        shapes: Vec<String>,
        #[arg(long, default_value_t = 4096)]
        points: usize,
        /// Noise std in percent of the bounding-box diagonal.
        #[arg(long, value_delimiter = ',', default_value = "2")]
        noise: Vec<f64>,
        #[arg(long, default_value_t = 256)]
        patch_size: usize,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seed: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model; writes checkpoints, train_log.csv and run.json to --out.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from a checkpoint up to the configured step count.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Denoise an XYZ/PLY cloud with a trained checkpoint.
    Denoise {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Score a denoised cloud against the clean cloud and its mesh.
    Eval {
        #[arg(long)]
        denoised: PathBuf,
        #[arg(long)]
        clean: PathBuf,
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".run.json");
    path.with_file_name(name)
}

fn run(cli: Cli, args: Vec<String>) -> Result<()> {
    let start = Instant::now();
    let (mut manifest, manifest_path) = match cli.command {
        Command::GenData { shapes, points, noise, patch_size, seed, out } => {
            let shapes = shapes.iter().map(|s| ShapeSource::parse(s)).collect::<Result<Vec<_>>>()?;
            if patch_size == 0 || points < patch_size {
                return Err(PipelineError::Config(format!("--points {points} must be at least --patch-size {patch_size} > 0")));
            }
            let gen = GenDataArgs { shapes, n_points: points, sigma_pct: noise, patch_size, seeds: seed.clone() };
            let dataset = generate_dataset(&gen, &out)?;
            eprintln!("wrote {} pairs to {}", dataset.entries.len(), out.display());
            let mut m = RunManifest::new("gen-data", args);
            m.seeds = seed.iter().enumerate().map(|(i, &s)| (format!("data.{i}"), s)).collect();
            (m, out.join("run.json"))
        }
        Command::Train { config, out, resume } => {
            let config = Config::load(&config)?;
            let resume = resume.as_deref().map(load_checkpoint).transpose()?;
            let state = train::train(&config, &out, resume)?;
            eprintln!("trained {} steps; checkpoint at {}", state.step, out.join("checkpoint.bin").display());
            let mut m = RunManifest::new("train", args);
            m.config = serde_json::to_value(&state.config).ok();
            m.seeds.insert("training".into(), state.config.training.seed);
            m.seeds.extend(state.config.data.seeds.iter().enumerate().map(|(i, &s)| (format!("data.{i}"), s)));
            (m, out.join("run.json"))
        }
        Command::Denoise { checkpoint, input, out, iterations } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let cloud = io::read_cloud(&input)?;
            let iterations = iterations.unwrap_or(ckpt.config.denoise.iterations);
            let (result, trace) = denoise_with(&ckpt, &cloud, iterations)?;
            io::write_cloud(&out, &result)?;
            for (i, it) in trace.iter().enumerate() {
                eprintln!("iteration {}: {} patches, {:.2}s", i + 1, it.patches, it.seconds);
            }
            let mut m = RunManifest::new("denoise", args);
            m.config = serde_json::to_value(&ckpt.config).ok();
            m.seeds.insert("denoise".into(), ckpt.config.denoise.seed);
            (m, sidecar(&out))
        }
        Command::Eval { denoised, clean, mesh, report } => {
            let r = evaluate(&io::read_cloud(&denoised)?, &io::read_cloud(&clean)?, &io::read_mesh(&mesh)?)?;
            r.save(&report)?;
            println!("CD {:.6e} P2S {:.6e}", r.aggregate.cd, r.aggregate.p2s);
            (RunManifest::new("eval", args), sidecar(&report))
        }
    };
    manifest.seconds = start.elapsed().as_secs_f64();
    manifest.save(&manifest_path)
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE as u8 } else { exit::OK as u8 });
        }
    };
    match run(cli, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
