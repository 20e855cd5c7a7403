//! Command-line front end: track a sequence, evaluate tracking output,
//! validate distance estimation, generate synthetic sequences, and benchmark
//! the event-domain kernels.
//!
//! Exit codes: 0 success, 1 usage, 2 input parse/configuration, 3 numeric
//! failure.

use clap::{Args, Parser, Subcommand};
use evtrack::pipeline::{
    self, CalibrationFile, DistanceOptions, LatencyFixture, Mode, RunConfig,
};
use evtrack::series::{Sos, TimeSeries};
use evtrack::stream_io;
use evtrack::synth;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "evtrack", version, about = "Hybrid frame + event vehicle tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration JSON.
    #[arg(long)]
    config: PathBuf,
    /// Override the configuration's ablation mode (baseline, A1..A3, B1..B3).
    #[arg(long)]
    mode: Option<String>,
    /// Override the configuration's tracking rate in Hz.
    #[arg(long)]
    rate: Option<f64>,
}

impl ConfigArgs {
    fn load(&self) -> evtrack::Result<RunConfig> {
        let mut config = RunConfig::load(&self.config)?;
        if let Some(mode) = &self.mode {
            let _: Mode = mode.parse()?;
            config.mode = mode.clone();
        }
        if let Some(rate) = self.rate {
            config.tracking_rate_hz = rate;
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the tracking pipeline and write MOTChallenge output.
    Track {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output path for the MOT text file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate tracking output against ground truth (HOTA family).
    Eval {
        /// Ground truth in MOTChallenge format.
        #[arg(long)]
        gt: PathBuf,
        /// Predictions in MOTChallenge format.
        #[arg(long)]
        pred: PathBuf,
        /// Also write the per-alpha report as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run tracking, convert to distances, and report error metrics.
    Distance {
        #[command(flatten)]
        config: ConfigArgs,
        /// Calibration JSON (distortion model, perspective matrix, distance
        /// conversion).
        #[arg(long)]
        calibration: PathBuf,
        /// Ground-truth range series CSV (t_s,distance_m).
        #[arg(long)]
        gt: PathBuf,
        /// Optional IIR second-order-section JSON applied zero-phase to the
        /// ground truth.
        #[arg(long)]
        iir: Option<PathBuf>,
        /// Clock offset added to ground-truth timestamps, seconds.
        #[arg(long, default_value_t = 0.0)]
        sync_offset: f64,
        /// Resample the ground truth to this rate before comparing.
        #[arg(long)]
        resample_hz: Option<f64>,
        /// Write the predicted distance series CSV here.
        #[arg(long)]
        emit_series: Option<PathBuf>,
    },
    /// Generate a synthetic sequence from a scenario JSON.
    Synth {
        /// Scenario JSON.
        #[arg(long)]
        scenario: PathBuf,
        /// Directory to write the sequence into.
        #[arg(long)]
        out_dir: PathBuf,
        /// Override the scenario's RNG seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Measure wall-clock latency of the event-domain kernels.
    Bench {
        /// Object mask width in pixels.
        #[arg(long, default_value_t = 80)]
        mask_width: u32,
        /// Object mask height in pixels.
        #[arg(long, default_value_t = 45)]
        mask_height: u32,
        /// Search region margin per side.
        #[arg(long, default_value_t = 16)]
        margin: u32,
        /// Events inside the search region per window.
        #[arg(long, default_value_t = 5000)]
        events: usize,
        /// Timed repetitions per stage.
        #[arg(long, default_value_t = 50)]
        reps: usize,
        /// Unmeasured warm-up repetitions per stage.
        #[arg(long, default_value_t = 5)]
        warmup: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are not usage errors.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> evtrack::Result<()> {
    match cli.command {
        Command::Track { config, out } => {
            let config = config.load()?;
            let snapshots = pipeline::run_tracking(&config)?;
            std::fs::write(&out, stream_io::write_mot(&snapshots))?;
            println!("wrote {} rows to {}", snapshots.len(), out.display());
            Ok(())
        }
        Command::Eval { gt, pred, csv } => {
            let gt_entries = read_mot_entries(&gt)?;
            let pred_entries = read_mot_entries(&pred)?;
            let report = evtrack::metrics::compute_hota(&gt_entries, &pred_entries)?;
            print!("{}", report.to_table());
            if let Some(path) = csv {
                std::fs::write(&path, report.to_csv())?;
            }
            Ok(())
        }
        Command::Distance {
            config,
            calibration,
            gt,
            iir,
            sync_offset,
            resample_hz,
            emit_series,
        } => {
            let config = config.load()?;
            let calibration = CalibrationFile::load(&calibration)?;
            let gt_text = std::fs::read_to_string(&gt).map_err(|e| {
                evtrack::Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", gt.display())))
            })?;
            let gt_series = TimeSeries::new(stream_io::parse_series(&gt_text)?)?;
            let sections: Vec<Sos> = match iir {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| {
                        evtrack::Error::Io(std::io::Error::new(
                            e.kind(),
                            format!("{}: {e}", path.display()),
                        ))
                    })?;
                    serde_json::from_str(&text)?
                }
                None => Vec::new(),
            };

            let sequence = pipeline::load_sequence(&config)?;
            let engine = config.engine_config(&sequence.manifest)?;
            let window_config = config.window_config();
            let snapshots = pipeline::run_tracking_loaded(&sequence, &window_config, engine)?;
            let options = DistanceOptions {
                resample_hz,
                sections,
                sync_offset_s: sync_offset,
                tolerance_s: None,
            };
            let run = pipeline::run_distance(
                &snapshots,
                &window_config,
                &sequence.manifest,
                &calibration,
                &gt_series,
                &options,
            )?;
            let r = &run.report;
            println!("track id          {}", run.track_id);
            println!("gt instants       {}", r.total);
            println!("detected          {}", r.detected);
            println!("success rate      {:.1}%", r.success_rate * 100.0);
            println!("sync offset       {sync_offset} s");
            match (r.median_abs_error_m, r.median_rel_error, r.rmse_m) {
                (Some(abs), Some(rel), Some(rmse)) => {
                    println!("median abs error  {:.1} cm", abs * 100.0);
                    println!("median rel error  {:.2}%", rel * 100.0);
                    println!("rmse              {:.1} cm", rmse * 100.0);
                }
                _ => println!("error metrics     undefined (no detected points)"),
            }
            if let Some(path) = emit_series {
                std::fs::write(&path, stream_io::write_series(&run.predicted))?;
            }
            Ok(())
        }
        Command::Synth { scenario, out_dir, seed } => {
            let text = std::fs::read_to_string(&scenario).map_err(|e| {
                evtrack::Error::Io(std::io::Error::new(
                    e.kind(),
                    format!("{}: {e}", scenario.display()),
                ))
            })?;
            let mut scenario: synth::Scenario = serde_json::from_str(&text)?;
            if let Some(seed) = seed {
                scenario.seed = seed;
            }
            let output = synth::generate(&scenario)?;
            let manifest = synth::write_to_dir(&output, &scenario, &out_dir)?;
            println!(
                "wrote {} events, {} frames, {} detections to {}",
                output.events.len(),
                output.frames.len(),
                output.detections.len(),
                out_dir.display()
            );
            println!("manifest: {}", manifest.display());
            Ok(())
        }
        Command::Bench { mask_width, mask_height, margin, events, reps, warmup } => {
            let fixture = LatencyFixture::new(mask_width, mask_height, margin, events);
            println!(
                "mask {mask_width}x{mask_height}, margin {margin}, ~{events} events/region, \
                 {reps} reps after {warmup} warm-up"
            );
            println!("{:<26} {:>10} {:>10}", "stage", "mean ms", "median ms");
            let rows = [
                ("event mask generation", fixture.measure(|f| f.run_mask_generation() as f64, warmup, reps)),
                (
                    "event-based detection",
                    fixture.measure(|f| f.run_detection().unwrap_or(0.0), warmup, reps),
                ),
                ("bounding box refinement", fixture.measure(|f| f.run_refinement(), warmup, reps)),
            ];
            for (name, stats) in rows {
                println!("{:<26} {:>10.4} {:>10.4}", name, stats.mean_ms, stats.median_ms);
            }
            Ok(())
        }
    }
}

fn read_mot_entries(path: &std::path::Path) -> evtrack::Result<Vec<evtrack::metrics::GtEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        evtrack::Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    let snapshots = stream_io::parse_mot(&text)?;
    Ok(snapshots.iter().map(evtrack::metrics::GtEntry::from).collect())
}
