//! Command-line entry point: ingestion, sensor synthesis, training,
//! evaluation and trace-driven reconstruction.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
//! Set `MIMIC_LOG=debug` for extra progress output on stderr.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mimic::config::ExperimentConfig;
use mimic::mocap::{synthesize_sensors, SensorSource, SensorTrace};
use mimic::pipeline::{self, PipelineError};
use mimic::skeleton::scale_skeleton;

#[derive(Parser)]
#[command(name = "mimic", version, about = "Full-body motion reconstruction from sparse sensors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert BVH files into canonical clip files.
    Ingest {
        /// Joint-name mapping table (JSON).
        #[arg(long = "map")]
        map: PathBuf,
        /// Output directory for clip files.
        #[arg(long = "out", default_value = "clips")]
        out: PathBuf,
        /// Optional skeleton JSON (canonical default otherwise).
        #[arg(long = "skeleton")]
        skeleton: Option<PathBuf>,
        /// BVH files to convert.
        files: Vec<PathBuf>,
    },
    /// Synthesize the sensor trace paired with a clip.
    SynthSensors {
        /// Clip reference: a file path or builtin:<name>.
        clip: String,
        #[arg(long = "out")]
        out: Option<PathBuf>,
        #[arg(long = "skeleton")]
        skeleton: Option<PathBuf>,
    },
    /// Run PPO training from an experiment config.
    Train {
        #[arg(long = "config")]
        config: PathBuf,
        /// Resume from a checkpoint.
        #[arg(long = "resume")]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on clips and write a metrics report.
    Eval {
        #[arg(long = "ckpt")]
        ckpt: PathBuf,
        /// Clip references (paths or builtin:<name>).
        #[arg(long = "clips", num_args = 1.., required = true)]
        clips: Vec<String>,
        #[arg(long = "skeleton")]
        skeleton: Option<PathBuf>,
        /// Mask controller inputs (headset-only mode, reported as "H").
        #[arg(long = "headset-only")]
        headset_only: bool,
        /// Score the ground truth against itself (self-consistency).
        #[arg(long = "oracle")]
        oracle: bool,
        /// Write the JSON report here (table always goes to stdout).
        #[arg(long = "out")]
        out: Option<PathBuf>,
        /// Also dump the reconstructed trajectories as clip files here.
        #[arg(long = "dump")]
        dump: Option<PathBuf>,
    },
    /// Reconstruct motion from a recorded sensor trace.
    Rollout {
        #[arg(long = "ckpt")]
        ckpt: PathBuf,
        /// Sensor trace (JSON lines).
        #[arg(long = "sensors")]
        sensors: PathBuf,
        #[arg(long = "out")]
        out: PathBuf,
        #[arg(long = "skeleton")]
        skeleton: Option<PathBuf>,
        #[arg(long = "headset-only")]
        headset_only: bool,
    },
}

fn data_err(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Data(e.to_string())
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let verbose = std::env::var("MIMIC_LOG").map(|v| v == "debug").unwrap_or(false);
    match cli.command {
        Command::Ingest {
            map,
            out,
            skeleton,
            files,
        } => {
            if files.is_empty() {
                return Err(PipelineError::Usage("no BVH files given".into()));
            }
            let spec = pipeline::load_skeleton(skeleton.as_deref())?;
            std::fs::create_dir_all(&out).map_err(data_err)?;
            let (ok, failed) = pipeline::ingest_bvh_files(&files, &map, &out, &spec);
            for (path, clip) in &ok {
                println!(
                    "{}: {} frames at {} fps, subject height {:.3} m",
                    path.display(),
                    clip.len(),
                    clip.frame_rate,
                    clip.subject_height
                );
            }
            for (path, error) in &failed {
                eprintln!("FAILED {}: {error}", path.display());
            }
            if !failed.is_empty() {
                return Err(PipelineError::Data(format!(
                    "{} of {} files failed",
                    failed.len(),
                    failed.len() + ok.len()
                )));
            }
            Ok(())
        }
        Command::SynthSensors {
            clip,
            out,
            skeleton,
        } => {
            let spec = pipeline::load_skeleton(skeleton.as_deref())?;
            let clip_data = pipeline::load_clip(&clip, &spec)?;
            let sk = scale_skeleton(&spec, clip_data.subject_height).map_err(data_err)?;
            let trace = synthesize_sensors(&clip_data, &sk);
            let out = out.unwrap_or_else(|| PathBuf::from(format!("{}.sensors.jsonl", clip_data.name)));
            trace.save(&out).map_err(data_err)?;
            println!(
                "{}: {} frames at {} fps",
                out.display(),
                trace.frames.len(),
                trace.frame_rate
            );
            Ok(())
        }
        Command::Train { config, resume } => {
            let cfg = ExperimentConfig::load(&config).map_err(|e| PipelineError::Usage(e.to_string()))?;
            if verbose {
                eprintln!("config hash: {:016x}", cfg.hash());
            }
            let summary = pipeline::train(&cfg, resume.as_deref(), |_| {})?;
            println!(
                "trained {} iterations; mean reward {:.3} -> {:.3}; checkpoint {}",
                summary.iterations,
                summary.first_mean_reward,
                summary.final_mean_reward,
                summary.checkpoint.display()
            );
            Ok(())
        }
        Command::Eval {
            ckpt,
            clips,
            skeleton,
            headset_only,
            oracle,
            out,
            dump,
        } => {
            let report = pipeline::evaluate_with_dump(
                &ckpt,
                &clips,
                skeleton.as_deref(),
                headset_only,
                oracle,
                dump.as_deref(),
            )?;
            print!("{}", report.to_table());
            if let Some(path) = out {
                std::fs::write(&path, serde_json::to_string_pretty(&report).map_err(data_err)?)
                    .map_err(data_err)?;
                println!("report written to {}", path.display());
            }
            Ok(())
        }
        Command::Rollout {
            ckpt,
            sensors,
            out,
            skeleton,
            headset_only,
        } => {
            let trace = SensorTrace::load(&sensors, SensorSource::Recorded).map_err(data_err)?;
            let name = out
                .file_stem()
                .map(|s| s.to_string_lossy().to_string())
                .unwrap_or_else(|| "rollout".into());
            let clip = pipeline::rollout_from_trace(
                &ckpt,
                &trace,
                skeleton.as_deref(),
                headset_only,
                &name,
            )?;
            clip.save(&out).map_err(data_err)?;
            println!(
                "{}: {} frames, subject height {:.3} m",
                out.display(),
                clip.len(),
                clip.subject_height
            );
            Ok(())
        }
    }
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
