//! Post-processing of flagged frames into predicted intervals.
//!
//! Adjacent flagged frames form an interval; intervals that are too long or
//! too short for the expression kind are removed, never reclassified. The
//! macro and micro passes run independently with their own `k` and may
//! overlap each other; no cross-kind deduplication happens.
//!
//! Prediction CSV schema: `video_id,start,end,type,k,p`, one row per
//! interval, inclusive 1-based frame bounds.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::flow::FlowBackend;
use crate::ingest::{DatasetProfile, ExpressionKind, FrameSequence};
use crate::mdmd::{
    compute_dbar_series, relative_difference, threshold_and_flag, BinOrientation, BlockGrid,
    DirectionBinning, FeatureSeries, FrameFeatureSeries,
};

/// One predicted expression interval, inclusive frame bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct SpottedInterval {
    pub video_id: String,
    pub start: usize,
    pub end: usize,
    pub kind: ExpressionKind,
    pub k_used: usize,
    pub p_used: f64,
}

impl SpottedInterval {
    /// Interval length in frames; never zero since the bounds are inclusive.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }
}

/// Maximal runs of consecutive indices, sorted by start.
pub fn flags_to_runs(flags: &BTreeSet<usize>) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut iter = flags.iter().copied();
    let Some(first) = iter.next() else { return runs };
    let (mut start, mut end) = (first, first);
    for i in iter {
        if i == end + 1 {
            end = i;
        } else {
            runs.push((start, end));
            start = i;
            end = i;
        }
    }
    runs.push((start, end));
    runs
}

/// Keep the runs whose length is plausible for `kind` under `profile` and
/// promote them to [`SpottedInterval`]s.
///
/// The micro pass keeps lengths in `[micro_len_min, micro_len_max]`; the
/// macro pass keeps lengths of at least `macro_len_min`. Everything else is
/// discarded.
pub fn filter_runs(
    runs: &[(usize, usize)],
    kind: ExpressionKind,
    profile: &DatasetProfile,
    video_id: &str,
    p: f64,
) -> Vec<SpottedInterval> {
    let k = profile.k_for(kind);
    runs.iter()
        .filter(|(start, end)| {
            let len = end - start + 1;
            match kind {
                ExpressionKind::Micro => {
                    len >= profile.micro_len_min && len <= profile.micro_len_max
                }
                ExpressionKind::Macro => len >= profile.macro_len_min,
            }
        })
        .map(|&(start, end)| SpottedInterval {
            video_id: video_id.to_string(),
            start,
            end,
            kind,
            k_used: k,
            p_used: p,
        })
        .collect()
}

/// Non-fatal reason a video produced no predictions for one pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SpotWarning {
    pub video_id: String,
    pub kind: ExpressionKind,
    pub message: String,
}

/// The flow-dependent part of one spotting pass: `dbar` and `r` for one
/// video at the kind's `k`. Computing this once and re-thresholding is what
/// makes parameter sweeps cheap.
#[derive(Debug, Clone)]
pub struct VideoSeries {
    pub video_id: String,
    pub kind: ExpressionKind,
    pub k: usize,
    pub dbar: FeatureSeries,
    pub r: FeatureSeries,
}

/// Outcome of series computation: ready, or skipped with a warning.
#[derive(Debug, Clone)]
pub enum SeriesOutcome {
    Ready(VideoSeries),
    Skipped(SpotWarning),
}

/// Compute the `dbar`/`r` series for one video and pass.
pub fn compute_video_series(
    seq: &FrameSequence,
    profile: &DatasetProfile,
    kind: ExpressionKind,
    backend: &dyn FlowBackend,
) -> Result<SeriesOutcome> {
    compute_video_series_with(seq, profile, kind, backend, BinOrientation::default())
}

/// [`compute_video_series`] with an explicit direction-bin orientation.
pub fn compute_video_series_with(
    seq: &FrameSequence,
    profile: &DatasetProfile,
    kind: ExpressionKind,
    backend: &dyn FlowBackend,
    orientation: BinOrientation,
) -> Result<SeriesOutcome> {
    let k = profile.k_for(kind);
    let (width, height) = seq.dimensions();
    let grid = BlockGrid::new(profile.block_grid, width, height)?;
    let binning = DirectionBinning::with_orientation(profile.direction_count, orientation)?;

    let n = seq.len();
    if n <= 2 * k {
        return Ok(SeriesOutcome::Skipped(SpotWarning {
            video_id: seq.video_id.clone(),
            kind,
            message: format!("{n} frames, need more than {} for k={k}", 2 * k),
        }));
    }
    let dbar = compute_dbar_series(seq, k, backend, &grid, &binning)?;
    match relative_difference(&dbar, k) {
        Ok(r) => Ok(SeriesOutcome::Ready(VideoSeries {
            video_id: seq.video_id.clone(),
            kind,
            k,
            dbar,
            r,
        })),
        Err(Error::EmptyInput { .. }) => Ok(SeriesOutcome::Skipped(SpotWarning {
            video_id: seq.video_id.clone(),
            kind,
            message: format!(
                "{n} frames leave no frame with both compensation neighbors for k={k}"
            ),
        })),
        Err(e) => Err(e),
    }
}

impl VideoSeries {
    /// Threshold at `p` and post-process the flags into intervals.
    pub fn spot(
        &self,
        profile: &DatasetProfile,
        p: f64,
    ) -> Result<(FrameFeatureSeries, Vec<SpottedInterval>)> {
        let (threshold, flags) = threshold_and_flag(&self.r, p)?;
        let runs = flags_to_runs(&flags);
        let intervals = filter_runs(&runs, self.kind, profile, &self.video_id, p);
        let series = FrameFeatureSeries {
            video_id: self.video_id.clone(),
            k: self.k,
            dbar: self.dbar.clone(),
            r: self.r.clone(),
            threshold,
            flags,
        };
        Ok((series, intervals))
    }
}

/// Result of [`spot_video`]: predictions plus the series behind them, or a
/// warning when the video was too short for the pass.
#[derive(Debug, Clone)]
pub struct SpotOutcome {
    pub intervals: Vec<SpottedInterval>,
    pub series: Option<FrameFeatureSeries>,
    pub warning: Option<SpotWarning>,
}

/// Run one full spotting pass over one video.
pub fn spot_video(
    seq: &FrameSequence,
    profile: &DatasetProfile,
    kind: ExpressionKind,
    p: f64,
    backend: &dyn FlowBackend,
) -> Result<SpotOutcome> {
    match compute_video_series(seq, profile, kind, backend)? {
        SeriesOutcome::Ready(video_series) => {
            let (series, intervals) = video_series.spot(profile, p)?;
            Ok(SpotOutcome { intervals, series: Some(series), warning: None })
        }
        SeriesOutcome::Skipped(warning) => Ok(SpotOutcome {
            intervals: Vec::new(),
            series: None,
            warning: Some(warning),
        }),
    }
}

/// Write predictions as CSV.
pub fn write_predictions(path: &Path, intervals: &[SpottedInterval]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::Csv { path: path.to_path_buf(), source: e })?;
    let mut emit = || -> csv::Result<()> {
        w.write_record(["video_id", "start", "end", "type", "k", "p"])?;
        for s in intervals {
            w.write_record([
                s.video_id.as_str(),
                &s.start.to_string(),
                &s.end.to_string(),
                s.kind.as_str(),
                &s.k_used.to_string(),
                &s.p_used.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    };
    emit().map_err(|e| Error::Csv { path: path.to_path_buf(), source: e })
}

/// Parse a prediction CSV written by [`write_predictions`].
pub fn parse_predictions(path: &Path) -> Result<Vec<SpottedInterval>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Csv { path: path.to_path_buf(), source: e })?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Csv { path: path.to_path_buf(), source: e })?;
        let line = record.position().map_or(0, |pos| pos.line());
        if record.len() != 6 {
            return Err(Error::parse(path, line, format!("expected 6 fields, got {}", record.len())));
        }
        let field = |i: usize| record.get(i).unwrap_or("");
        let parse_num = |i: usize, name: &str| -> Result<usize> {
            field(i)
                .parse()
                .map_err(|_| Error::parse(path, line, format!("bad {name} `{}`", field(i))))
        };
        let kind: ExpressionKind = field(3)
            .parse()
            .map_err(|msg| Error::parse(path, line, msg))?;
        let p_used: f64 = field(5)
            .parse()
            .map_err(|_| Error::parse(path, line, format!("bad p `{}`", field(5))))?;
        let start = parse_num(1, "start")?;
        let end = parse_num(2, "end")?;
        if start == 0 || end < start {
            return Err(Error::parse(path, line, format!("invalid interval [{start}, {end}]")));
        }
        out.push(SpottedInterval {
            video_id: field(0).to_string(),
            start,
            end,
            kind,
            k_used: parse_num(4, "k")?,
            p_used,
        });
    }
    Ok(out)
}
