//! `mespot` - spot macro- and micro-expression intervals in frame sequences
//! and evaluate the predictions with the interval-IoU protocol.

mod config;
mod pipeline;

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use mespot::ingest::{normalize_ground_truth, parse_annotations, write_annotations};
use mespot::intervals::{parse_predictions, write_predictions};
use mespot::metrics::{
    evaluate_dataset, run_sweep, sweep_report, EvalReport, DEFAULT_IOU_THRESHOLD,
};
use mespot::synth::{generate, synth_landmarks, write_frames, SynthSpec};

use config::{resolve_p, resolve_run_config, PipelineArgs};
use pipeline::{discover_videos, prepare_all, sort_intervals};

#[derive(Parser)]
#[command(name = "mespot", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Spot expression intervals in every video under the frames root.
    Spot {
        #[command(flatten)]
        args: PipelineArgs,

        /// Threshold interpolation parameter in [0, 1].
        #[arg(long)]
        p: Option<f64>,

        /// Directory for per-video `frame,dbar,r,flagged` series dumps.
        #[arg(long)]
        dump_series: Option<PathBuf>,
    },

    /// Evaluate a prediction file against ground truth.
    Eval {
        /// Prediction CSV (`video_id,start,end,type,k,p`).
        #[arg(long)]
        pred: PathBuf,

        /// Ground-truth CSV (`video_id,onset,apex,offset,type`).
        #[arg(long)]
        gt: PathBuf,

        /// Report JSON output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Spot at every p of a grid and emit the `p,kind,tp,f1` table.
    Sweep {
        #[command(flatten)]
        args: PipelineArgs,

        /// Ground-truth CSV the sweep scores against.
        #[arg(long)]
        gt: PathBuf,

        #[arg(long, default_value_t = 0.01)]
        p_start: f64,

        #[arg(long, default_value_t = 0.99)]
        p_end: f64,

        #[arg(long, default_value_t = 0.01)]
        p_step: f64,
    },

    /// Generate a synthetic dataset (frames, annotations, landmarks).
    Synth {
        /// Synthesis spec file (TOML with a `[[videos]]` table per video).
        #[arg(long)]
        spec: PathBuf,

        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,

        /// Replace the seed of video i with `seed + i`.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Spot { args, p, dump_series } => cmd_spot(args, p, dump_series),
        Command::Eval { pred, gt, out } => cmd_eval(&pred, &gt, out.as_deref()),
        Command::Sweep { args, gt, p_start, p_end, p_step } => {
            cmd_sweep(args, &gt, p_start, p_end, p_step)
        }
        Command::Synth { spec, out, seed } => cmd_synth(&spec, &out, seed),
    }
}

fn cmd_spot(args: PipelineArgs, p: Option<f64>, dump_series: Option<PathBuf>) -> Result<()> {
    let p = resolve_p(p, args.config.as_deref())?;
    let config = resolve_run_config(&args, dump_series)?;
    let videos = discover_videos(&config.frames_root, &config.landmarks_root)?;
    let (prepared, failures) = prepare_all(&videos, &config)?;

    if let Some(dir) = &config.dump_series {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating series dump dir {}", dir.display()))?;
    }

    let mut intervals = Vec::new();
    for video in &prepared {
        for warning in &video.warnings {
            eprintln!("warning: {warning}");
        }
        for vs in &video.series {
            let (series, mut spotted) = vs.spot(&config.profile, p)?;
            if let Some(dir) = &config.dump_series {
                let path = dir.join(format!("{}-{}.csv", vs.video_id, vs.kind));
                mespot::mdmd::write_series_csv(&path, &series)?;
            }
            intervals.append(&mut spotted);
        }
    }
    sort_intervals(&mut intervals);
    write_predictions(&config.out, &intervals)?;
    eprintln!(
        "spotted {} intervals over {} videos -> {}",
        intervals.len(),
        prepared.len(),
        config.out.display()
    );

    if !failures.is_empty() {
        for f in &failures {
            eprintln!("error: {f}");
        }
        bail!("{} of {} videos failed", failures.len(), videos.len());
    }
    Ok(())
}

fn cmd_eval(pred: &std::path::Path, gt: &std::path::Path, out: Option<&std::path::Path>) -> Result<()> {
    let predictions = parse_predictions(pred)?;
    let truth: Vec<_> = parse_annotations(gt)?
        .iter()
        .map(normalize_ground_truth)
        .collect::<mespot::Result<_>>()?;

    // Predictions for videos the ground truth never mentions are all false
    // positives; flag them since they usually mean mismatched inputs.
    let known: std::collections::BTreeSet<&str> =
        truth.iter().map(|t| t.video_id.as_str()).collect();
    let unknown: std::collections::BTreeSet<&str> = predictions
        .iter()
        .map(|s| s.video_id.as_str())
        .filter(|id| !known.contains(id))
        .collect();
    for id in unknown {
        eprintln!("warning: {id}: predictions without any ground-truth listing (counted as false positives)");
    }

    let eval = evaluate_dataset(&predictions, &truth, DEFAULT_IOU_THRESHOLD);
    let report = EvalReport::from(&eval);
    if let Some(path) = out {
        let json = serde_json::to_string_pretty(&report)?;
        std::fs::write(path, json + "\n")
            .with_context(|| format!("writing report {}", path.display()))?;
    }

    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
    println!("macro F1: {}", fmt(eval.macro_counts.f1()));
    println!("micro F1: {}", fmt(eval.micro_counts.f1()));
    println!("overall F1: {}", fmt(eval.overall.f1()));
    Ok(())
}

/// Grid in micro-units so increments stay exact and rows print cleanly.
fn p_grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    const SCALE: f64 = 1e6;
    if !(0.0..=1.0).contains(&start) || !(0.0..=1.0).contains(&end) {
        bail!("p grid must lie in [0, 1]");
    }
    if start > end {
        bail!("inverted p grid: start {start} > end {end}");
    }
    if step <= 0.0 {
        bail!("p step must be positive");
    }
    if start < end && step > end - start + 1e-12 {
        bail!("p step {step} larger than the grid range {start}..{end}");
    }
    let (su, eu, du) = (
        (start * SCALE).round() as u64,
        (end * SCALE).round() as u64,
        (step * SCALE).round() as u64,
    );
    if du == 0 {
        bail!("p step too small");
    }
    Ok((su..=eu).step_by(du as usize).map(|u| u as f64 / SCALE).collect())
}

fn cmd_sweep(args: PipelineArgs, gt: &std::path::Path, start: f64, end: f64, step: f64) -> Result<()> {
    let grid = p_grid(start, end, step)?;
    let config = resolve_run_config(&args, None)?;
    let truth: Vec<_> = parse_annotations(gt)?
        .iter()
        .map(normalize_ground_truth)
        .collect::<mespot::Result<_>>()?;

    let videos = discover_videos(&config.frames_root, &config.landmarks_root)?;
    let (prepared, failures) = prepare_all(&videos, &config)?;
    let series: Vec<_> = prepared
        .iter()
        .flat_map(|v| {
            for warning in &v.warnings {
                eprintln!("warning: {warning}");
            }
            v.series.iter().cloned()
        })
        .collect();

    let rows = run_sweep(&series, &truth, &config.profile, &grid)?;
    std::fs::write(&config.out, sweep_report(&rows))
        .with_context(|| format!("writing sweep table {}", config.out.display()))?;
    eprintln!("swept {} p values over {} series -> {}", grid.len(), series.len(), config.out.display());

    if !failures.is_empty() {
        for f in &failures {
            eprintln!("error: {f}");
        }
        bail!("{} of {} videos failed", failures.len(), videos.len());
    }
    Ok(())
}

/// Synthesis spec file: shared defaults plus one entry per video.
#[derive(serde::Deserialize)]
struct SynthFile {
    videos: Vec<SynthSpec>,
}

fn cmd_synth(spec_path: &std::path::Path, out: &std::path::Path, seed: Option<u64>) -> Result<()> {
    let text = std::fs::read_to_string(spec_path)
        .with_context(|| format!("reading synth spec {}", spec_path.display()))?;
    let mut file: SynthFile = match spec_path.extension().and_then(|e| e.to_str()) {
        Some("json") => serde_json::from_str(&text)
            .with_context(|| format!("parsing synth spec {}", spec_path.display()))?,
        _ => toml::from_str(&text)
            .with_context(|| format!("parsing synth spec {}", spec_path.display()))?,
    };
    if file.videos.is_empty() {
        bail!("synth spec lists no videos");
    }
    if let Some(base) = seed {
        for (i, video) in file.videos.iter_mut().enumerate() {
            video.seed = base + i as u64;
        }
    }

    let frames_root = out.join("frames");
    let landmarks_root = out.join("landmarks");
    std::fs::create_dir_all(&landmarks_root)
        .with_context(|| format!("creating {}", landmarks_root.display()))?;

    let mut truth = Vec::new();
    for spec in &file.videos {
        let (seq, mut gt) = generate(spec)?;
        write_frames(&frames_root.join(&spec.video_id), &seq)?;
        let landmarks = mespot::ingest::LandmarkSet::new(
            spec.video_id.clone(),
            synth_landmarks(spec.size),
            None,
        )?;
        mespot::ingest::write_landmarks(
            &landmarks_root.join(format!("{}.csv", spec.video_id)),
            &landmarks,
        )?;
        truth.append(&mut gt);
    }
    write_annotations(&out.join("annotations.csv"), &truth)?;
    eprintln!(
        "generated {} videos ({} events) under {}",
        file.videos.len(),
        truth.len(),
        out.display()
    );
    Ok(())
}
