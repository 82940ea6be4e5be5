use std::fs::File;
use std::io::{self, BufWriter};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use cuetrack::container::{save_model, save_pool};
use cuetrack::eval::{evaluate, write_report, SequenceRecord};
use cuetrack::sequence::{list_frames, load_frame, load_ground_truth, read_results, write_sequence, write_trace, ResultWriter};
use cuetrack::synth::{generate, SynthConfig};
use cuetrack::{Tracker, TrackerConfig};

#[derive(Parser)]
#[command(name = "cuetrack", version, about = "Online multi-cue CNN tracker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track the object annotated on the first frame through a sequence.
    Track(TrackArgs),
    /// Score a results CSV against ground truth.
    Eval(EvalArgs),
    /// Write a synthetic sequence (frames plus ground truth) to disk.
    Synth(SynthArgs),
    /// Print the default configuration as JSON.
    Config,
}

#[derive(Args)]
struct TrackArgs {
    /// Directory of numbered frames.
    #[arg(long)]
    seq: PathBuf,
    /// Ground-truth file; only the first box is used.
    #[arg(long)]
    gt: PathBuf,
    /// Results CSV.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the training trace (frame, step, cue, loss) to this CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Save the final model weights.
    #[arg(long)]
    save_model: Option<PathBuf>,
    /// Dump the final sample pool.
    #[arg(long)]
    dump_pool: Option<PathBuf>,
    /// Write 0 in the `ms` column so repeated runs produce identical files.
    #[arg(long)]
    no_timing: bool,
    /// Stop after this many frames.
    #[arg(long)]
    max_frames: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    /// Results CSV written by `track`.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Report CSV.
    #[arg(long)]
    report: PathBuf,
    /// Sequence name used in the report; defaults to the results file stem.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory; frames go to `<out>/img`, boxes to `<out>/groundtruth.txt`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    frames: usize,
    /// Pixels per frame; 0 gives a static target.
    #[arg(long, default_value_t = 3.0)]
    speed: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 240)]
    width: usize,
    #[arg(long, default_value_t = 180)]
    height: usize,
    #[arg(long, default_value_t = 40)]
    target_size: usize,
    /// Frames (1-based) on which the target is hidden.
    #[arg(long, value_delimiter = ',')]
    occlude: Vec<usize>,
}

fn track(args: TrackArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => TrackerConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => TrackerConfig::default(),
    };
    if args.no_timing {
        cfg.record_timing = false;
    }
    let mut paths = list_frames(&args.seq).with_context(|| format!("listing {}", args.seq.display()))?;
    if let Some(n) = args.max_frames {
        paths.truncate(n);
    }
    let gt = load_ground_truth(&args.gt).with_context(|| format!("reading {}", args.gt.display()))?;
    let Some(Some(first_box)) = gt.first().copied() else {
        bail!("first ground-truth line is missing or has no box");
    };

    let first = load_frame(&paths[0], 1)?;
    let (mut tracker, first_result) =
        Tracker::init_with_trace(&first, &first_box.cast(), args.seed, cfg, args.trace.is_some())?;
    let mut out = ResultWriter::new(BufWriter::new(File::create(&args.out)?));
    out.write(&first_result)?;
    let mut trace = tracker.take_trace();
    for (i, path) in paths.iter().enumerate().skip(1) {
        let frame = load_frame(path, i + 1).with_context(|| format!("loading {}", path.display()))?;
        let r = tracker.step(&frame)?;
        out.write(&r)?;
        trace.extend(tracker.take_trace());
    }
    out.finish()?;
    eprintln!("tracked {} frames, {} model updates", paths.len(), tracker.update_count());

    if let Some(p) = &args.trace {
        write_trace(BufWriter::new(File::create(p)?), &trace)?;
    }
    let meta = json!({
        "cue_kinds": tracker.cue_kinds(),
        "config": tracker.config(),
        "frames": paths.len(),
        "seed": args.seed,
    });
    if let Some(p) = &args.save_model {
        save_model(p, tracker.model(), meta.clone())?;
    }
    if let Some(p) = &args.dump_pool {
        save_pool(p, tracker.pool(), meta)?;
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let rows = read_results(File::open(&args.pred).with_context(|| format!("opening {}", args.pred.display()))?)?;
    let gt = load_ground_truth(&args.gt)?;
    if rows.len() > gt.len() {
        bail!("{} predictions but only {} ground-truth lines", rows.len(), gt.len());
    }
    let name = args.name.unwrap_or_else(|| {
        args.pred.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    });
    let preds = rows.iter().map(|r| r.bbox()).collect();
    let record = SequenceRecord::new(name, preds, gt[..rows.len()].to_vec())?;
    let report = evaluate(&record)?;
    write_report(BufWriter::new(File::create(&args.report)?), std::slice::from_ref(&report))?;
    println!("{}: frames {} TP@20 {:.4} TSR@0.6 {:.4}", report.name, report.frames, report.tp, report.tsr);
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        width: args.width,
        height: args.height,
        frames: args.frames,
        target_size: args.target_size,
        speed: args.speed,
        occluded: args.occlude,
        seed: args.seed,
        ..SynthConfig::default()
    };
    if cfg.target_size + 1 >= cfg.width.min(cfg.height) || cfg.width < 32 || cfg.height < 32 {
        bail!("frame must be at least 32x32 and larger than the target");
    }
    write_sequence(&args.out, &generate(&cfg))?;
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Track(a) => track(a),
        Command::Eval(a) => eval(a),
        Command::Synth(a) => synth(a),
        Command::Config => {
            serde_json::to_writer_pretty(io::stdout().lock(), &TrackerConfig::default())?;
            println!();
            Ok(())
        }
    }
}
