use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use skelrefine::config::PipelineConfig;
use skelrefine::eval::AlignmentMode;
use skelrefine::pipeline::{
    default_truth_path, evaluate_files, generate_files, refine_file, RefineFiles, ScriptFile,
};
use skelrefine::{Error, Result};

#[derive(Parser)]
#[command(name = "skelrefine", version, about = "Refine monocular pose-estimator landmarks into consistent 3D skeletons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic landmark stream and its ground truth.
    Generate {
        /// Script file describing subject, motion, noise and camera.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        /// Ground-truth stream; defaults to `<output stem>.truth.jsonl`.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Overrides the script's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Refine a landmark stream.
    Refine {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Per-frame diagnostics; defaults to `<output stem>.diag.jsonl`.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
        /// Bone-ratio session file to resume from and update.
        #[arg(long)]
        session: Option<PathBuf>,
    },
    /// Score a refined stream against ground truth.
    Evaluate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Refined stream.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Unrefined input stream, scored for comparison.
        #[arg(long)]
        raw: Option<PathBuf>,
        /// JSON report.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Align whole sequences with one scale instead of per frame.
        #[arg(long)]
        per_sequence: bool,
    },
    /// Print the fully resolved configuration.
    InspectConfig {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

/// Writes to stdout; a closed pipe (`| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::io("<stdout>", e)),
        _ => Ok(()),
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            config,
            output,
            truth,
            seed,
        } => {
            let file = match &config {
                Some(p) => ScriptFile::load(p)?,
                None => ScriptFile::default(),
            };
            let truth = truth.unwrap_or_else(|| default_truth_path(&output));
            let seq = generate_files(&file, seed, &output, &truth)?;
            eprintln!(
                "wrote {} frames to {} and {}",
                seq.noisy.len(),
                output.display(),
                truth.display()
            );
        }
        Command::Refine {
            config,
            input,
            output,
            diagnostics,
            session,
        } => {
            let config = load_config(config.as_ref())?;
            let summary = refine_file(
                &config,
                &RefineFiles {
                    input: &input,
                    output: &output,
                    diagnostics: diagnostics.as_deref(),
                    session: session.as_deref(),
                },
            )?;
            emit(&(serde_json::to_string_pretty(&summary)? + "\n"))?;
        }
        Command::Evaluate {
            config,
            input,
            truth,
            raw,
            output,
            per_sequence,
        } => {
            let config = load_config(config.as_ref())?;
            let topology = config.load_topology()?;
            let mode = if per_sequence {
                AlignmentMode::PerSequence
            } else {
                AlignmentMode::PerFrame
            };
            let report = evaluate_files(&topology, &input, &truth, raw.as_deref(), mode)?;
            emit(&report.table.render())?;
            if let Some(path) = output {
                let text = serde_json::to_string_pretty(&report)?;
                std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
            }
        }
        Command::InspectConfig { config } => {
            let config = load_config(config.as_ref())?;
            emit(&config.to_toml_string()?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
