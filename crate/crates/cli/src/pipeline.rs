//! Video discovery and the per-video spotting pipeline.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use mespot::crop::{box_from_landmarks, crop_and_resize, refine_box};
use mespot::ingest::{load_frame_sequence, parse_landmarks, ExpressionKind};
use mespot::intervals::{compute_video_series_with, SeriesOutcome, VideoSeries};

use crate::config::RunConfig;

/// One video found under the frames root.
#[derive(Debug, Clone)]
pub struct VideoInput {
    pub id: String,
    pub frames_dir: PathBuf,
    pub landmarks: Option<PathBuf>,
}

/// Videos are the sub-directories of `frames_root`, in name order; each may
/// have `<id>.csv` or `<id>.json` landmarks next to the others.
pub fn discover_videos(frames_root: &Path, landmarks_root: &Path) -> Result<Vec<VideoInput>> {
    let mut videos = Vec::new();
    let entries = std::fs::read_dir(frames_root)
        .with_context(|| format!("reading frames root {}", frames_root.display()))?;
    for entry in entries {
        let entry = entry?;
        if !entry.file_type()?.is_dir() {
            continue;
        }
        let id = entry.file_name().to_string_lossy().into_owned();
        let landmarks = ["csv", "json"]
            .iter()
            .map(|ext| landmarks_root.join(format!("{id}.{ext}")))
            .find(|p| p.exists());
        videos.push(VideoInput { id, frames_dir: entry.path(), landmarks });
    }
    if videos.is_empty() {
        bail!("no video directories under {}", frames_root.display());
    }
    videos.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(videos)
}

/// Everything the subcommands need per video: the per-kind series plus any
/// warnings gathered along the way.
pub struct PreparedVideo {
    pub id: String,
    pub series: Vec<VideoSeries>,
    pub warnings: Vec<String>,
}

/// Load, crop and compute the feature series for one video.
pub fn prepare_video(input: &VideoInput, config: &RunConfig) -> Result<PreparedVideo> {
    let mut warnings = Vec::new();

    let Some(landmark_path) = &input.landmarks else {
        return Ok(PreparedVideo {
            id: input.id.clone(),
            series: Vec::new(),
            warnings: vec![format!("{}: no landmark file, skipped", input.id)],
        });
    };

    let seq = load_frame_sequence(&input.frames_dir, &input.id, config.profile.fps)?;
    let landmarks = parse_landmarks(landmark_path)?;

    let (width, height) = seq.dimensions();
    let bbox = box_from_landmarks(&landmarks.pass1)?;
    let bbox = refine_box(bbox, landmarks.pass2.as_deref())?;
    let bbox = bbox.clamp_to(width, height)?;
    let cropped = crop_and_resize(&seq, bbox, config.profile.crop_size)?;

    let mut series = Vec::new();
    for &kind in &config.kinds {
        match compute_video_series_with(
            &cropped,
            &config.profile,
            kind,
            config.backend.as_ref(),
            config.orientation,
        )? {
            SeriesOutcome::Ready(vs) => series.push(vs),
            SeriesOutcome::Skipped(w) => {
                warnings.push(format!("{}: {} pass skipped: {}", w.video_id, w.kind, w.message));
            }
        }
    }
    Ok(PreparedVideo { id: input.id.clone(), series, warnings })
}

/// Prepare all videos on a bounded worker pool. Hard failures are collected
/// per video; the successful remainder is returned in name order together
/// with the failure summary.
pub fn prepare_all(
    videos: &[VideoInput],
    config: &RunConfig,
) -> Result<(Vec<PreparedVideo>, Vec<String>)> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .context("building worker pool")?;
    let results: Vec<(String, Result<PreparedVideo>)> = pool.install(|| {
        videos
            .par_iter()
            .map(|v| (v.id.clone(), prepare_video(v, config)))
            .collect()
    });

    let mut prepared = Vec::new();
    let mut failures = Vec::new();
    for (id, result) in results {
        match result {
            Ok(p) => prepared.push(p),
            Err(e) => failures.push(format!("{id}: {e:#}")),
        }
    }
    prepared.sort_by(|a, b| a.id.cmp(&b.id));
    Ok((prepared, failures))
}

/// Kinds × spotted intervals ordering used for all prediction output.
pub fn sort_intervals(intervals: &mut [mespot::intervals::SpottedInterval]) {
    intervals.sort_by(|a, b| {
        (&a.video_id, kind_rank(a.kind), a.start, a.end)
            .cmp(&(&b.video_id, kind_rank(b.kind), b.start, b.end))
    });
}

fn kind_rank(kind: ExpressionKind) -> u8 {
    match kind {
        ExpressionKind::Macro => 0,
        ExpressionKind::Micro => 1,
    }
}
