//! Main directional maximal difference analysis.
//!
//! For frame `F_i` of an n-frame video and offset `k`, two flow fields share
//! the head frame `F_{i-k}`: head–current (`HC`, against `F_i`) and head–tail
//! (`HT`, against `F_{i+k}`). Within each block of a `b x b` grid over the
//! crop, the HC vectors are binned into `a` direction sectors, the bin with
//! the most vectors is the block's main direction, and the block value `d`
//! is the mean of the top third of the magnitude differences
//! `rho_HC - rho_HT` over the main-direction members (paired per grid
//! point). The frame feature `dbar_i` is the mean of the top third of the
//! `b^2` block values.
//!
//! `dbar` exists for `i` in `[k+1, n-k]`. The background-compensated
//! relative value `r_i = dbar_i - (dbar_{i-k+1} + dbar_{i+k-1}) / 2` is kept
//! only where both neighbor terms exist, `i` in `[2k, n-2k+1]`; evaluating
//! it closer to the edges would fabricate exactly the boundary peaks the
//! compensation is meant to remove. A video is flagged at the frames whose
//! `r` exceeds `r_mean + p * (r_max - r_mean)`, computed per video.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::{to_polar, FlowBackend};
use crate::ingest::FrameSequence;

/// How the direction sectors are anchored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BinOrientation {
    /// Sector 0 is centered on angle 0: `[-pi/a, pi/a)`.
    #[default]
    AxisCentered,
    /// Sector 0 starts at angle 0: `[0, 2pi/a)`.
    Quadrant,
}

/// Partition of `[-pi, pi)` into `a` equal direction sectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DirectionBinning {
    count: usize,
    orientation: BinOrientation,
}

impl DirectionBinning {
    pub fn new(count: usize) -> Result<Self> {
        Self::with_orientation(count, BinOrientation::default())
    }

    pub fn with_orientation(count: usize, orientation: BinOrientation) -> Result<Self> {
        if count < 1 {
            return Err(Error::InvalidParam("direction count must be >= 1".into()));
        }
        Ok(Self { count, orientation })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Sector index for an angle in `[-pi, pi)`.
    pub fn bin_of(&self, theta: f64) -> usize {
        use std::f64::consts::PI;
        let a = self.count as f64;
        let offset = match self.orientation {
            BinOrientation::AxisCentered => PI / a,
            BinOrientation::Quadrant => 0.0,
        };
        let mut phi = theta + offset;
        if phi < 0.0 {
            phi += 2.0 * PI;
        }
        ((phi * a / (2.0 * PI)) as usize).min(self.count - 1)
    }
}

/// Assignment of grid samples to the `b x b` facial blocks.
///
/// Blocks tile the frame exactly: each block is `floor(size / b)` pixels on
/// a side except the last row/column, which absorb the remainder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockGrid {
    blocks_per_side: usize,
    width: u32,
    height: u32,
}

impl BlockGrid {
    pub fn new(blocks_per_side: usize, width: u32, height: u32) -> Result<Self> {
        if blocks_per_side < 1 {
            return Err(Error::InvalidParam("block grid must be >= 1".into()));
        }
        if (width as usize) < blocks_per_side || (height as usize) < blocks_per_side {
            return Err(Error::InvalidParam(format!(
                "{width}x{height} frame cannot hold a {blocks_per_side}x{blocks_per_side} block grid"
            )));
        }
        Ok(Self { blocks_per_side, width, height })
    }

    pub fn blocks_per_side(&self) -> usize {
        self.blocks_per_side
    }

    /// Total number of blocks, `b^2`.
    pub fn block_count(&self) -> usize {
        self.blocks_per_side * self.blocks_per_side
    }

    /// Block index of pixel `(x, y)`, row-major over the block grid.
    pub fn block_of(&self, x: u32, y: u32) -> usize {
        let b = self.blocks_per_side;
        let bx = ((x as usize) / (self.width as usize / b)).min(b - 1);
        let by = ((y as usize) / (self.height as usize / b)).min(b - 1);
        by * b + bx
    }
}

/// Values over a contiguous 1-based frame range.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSeries {
    start: usize,
    values: Vec<f64>,
}

impl FeatureSeries {
    pub fn new(start: usize, values: Vec<f64>) -> Self {
        Self { start, values }
    }

    /// First frame index the series covers.
    pub fn start(&self) -> usize {
        self.start
    }

    /// Last frame index the series covers.
    pub fn end(&self) -> usize {
        self.start + self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, frame: usize) -> Option<f64> {
        frame
            .checked_sub(self.start)
            .and_then(|i| self.values.get(i))
            .copied()
    }

    /// Iterate `(frame index, value)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values.iter().enumerate().map(|(i, &v)| (self.start + i, v))
    }
}

/// Everything computed for one video at one `k`: the `dbar` and `r` series,
/// the threshold for the `p` used, and the flagged frames.
#[derive(Debug, Clone)]
pub struct FrameFeatureSeries {
    pub video_id: String,
    pub k: usize,
    pub dbar: FeatureSeries,
    pub r: FeatureSeries,
    pub threshold: f64,
    pub flags: BTreeSet<usize>,
}

/// Main direction of a set of polar vectors: the sector holding the most
/// vectors, ties to the smallest sector index. Returns the winning sector
/// and the indices of its member vectors.
pub fn main_direction(
    vectors: &[(f64, f64)],
    binning: &DirectionBinning,
) -> Result<(usize, Vec<usize>)> {
    if vectors.is_empty() {
        return Err(Error::EmptyInput { op: "main_direction" });
    }
    let mut counts = vec![0usize; binning.count()];
    for &(_, theta) in vectors {
        counts[binning.bin_of(theta)] += 1;
    }
    let winner = counts
        .iter()
        .enumerate()
        .max_by(|(ia, ca), (ib, cb)| ca.cmp(cb).then(ib.cmp(ia)))
        .map(|(i, _)| i)
        .unwrap();
    let members = vectors
        .iter()
        .enumerate()
        .filter(|(_, &(_, theta))| binning.bin_of(theta) == winner)
        .map(|(i, _)| i)
        .collect();
    Ok((winner, members))
}

fn top_third_mean(mut diffs: Vec<f64>) -> f64 {
    let g = diffs.len();
    let m = (g / 3).max(1);
    diffs.sort_unstable_by(|a, b| b.total_cmp(a));
    diffs[..m].iter().sum::<f64>() / m as f64
}

/// Block value `d`: magnitude differences `rho_HC - rho_HT` of the paired
/// main-direction members, sorted descending, averaged over the top
/// `max(1, floor(g/3))`.
pub fn maximal_difference(rho_hc: &[f64], rho_ht: &[f64]) -> Result<f64> {
    if rho_hc.is_empty() {
        return Err(Error::EmptyInput { op: "maximal_difference" });
    }
    if rho_hc.len() != rho_ht.len() {
        return Err(Error::InvalidParam(format!(
            "paired magnitude lists differ in length: {} vs {}",
            rho_hc.len(),
            rho_ht.len()
        )));
    }
    Ok(top_third_mean(
        rho_hc.iter().zip(rho_ht).map(|(hc, ht)| hc - ht).collect(),
    ))
}

/// Frame feature `dbar`: mean of the top `max(1, floor(b^2/3))` block values.
pub fn frame_feature(d_blocks: &[f64], blocks_per_side: usize) -> Result<f64> {
    let expected = blocks_per_side * blocks_per_side;
    if d_blocks.len() != expected {
        return Err(Error::WrongBlockCount { expected, got: d_blocks.len() });
    }
    Ok(top_third_mean(d_blocks.to_vec()))
}

/// Compute `dbar_i` for every `i` in `[k+1, n-k]`.
///
/// Requires `n > 2k`; anything shorter cannot host a single head/current/
/// tail triple and is reported as too short. The block grid must be coarse
/// enough that every block contains at least one flow sample.
pub fn compute_dbar_series(
    seq: &FrameSequence,
    k: usize,
    backend: &dyn FlowBackend,
    grid: &BlockGrid,
    binning: &DirectionBinning,
) -> Result<FeatureSeries> {
    if k < 1 {
        return Err(Error::InvalidParam("k must be >= 1".into()));
    }
    let n = seq.len();
    if n <= 2 * k {
        return Err(Error::VideoTooShort { video_id: seq.video_id.clone(), n, k });
    }
    let (width, height) = seq.dimensions();
    if (grid.width, grid.height) != (width, height) {
        return Err(Error::InvalidParam(format!(
            "block grid built for {}x{} but frames are {width}x{height}",
            grid.width, grid.height
        )));
    }

    // Probe one field to learn the sample grid, then group samples by block
    // once; the geometry is identical for every frame pair.
    let probe = backend.estimate(seq.frame(1), seq.frame(1))?;
    let mut block_members: Vec<Vec<usize>> = vec![Vec::new(); grid.block_count()];
    for idx in 0..probe.len() {
        let (x, y) = probe.sample_position(idx);
        block_members[grid.block_of(x, y)].push(idx);
    }
    if let Some(empty) = block_members.iter().position(|m| m.is_empty()) {
        return Err(Error::InvalidParam(format!(
            "flow grid stride leaves block {empty} without samples; lower the stride or the block count"
        )));
    }

    let b = grid.blocks_per_side();
    let values: Vec<f64> = (k + 1..=n - k)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let head = seq.frame(i - k);
            let hc = to_polar(backend.estimate(head, seq.frame(i))?);
            let ht = to_polar(backend.estimate(head, seq.frame(i + k))?);
            if hc.grid_dims() != ht.grid_dims() {
                return Err(Error::InvalidParam(
                    "flow backend returned differing grids for the HC and HT fields".into(),
                ));
            }
            let (hc_rho, hc_theta) = hc.polar().expect("polar populated");
            let (ht_rho, _) = ht.polar().expect("polar populated");

            let mut d_blocks = Vec::with_capacity(grid.block_count());
            for members in &block_members {
                let vectors: Vec<(f64, f64)> =
                    members.iter().map(|&m| (hc_rho[m], hc_theta[m])).collect();
                let (_, main) = main_direction(&vectors, binning)?;
                let rho_hc: Vec<f64> = main.iter().map(|&j| hc_rho[members[j]]).collect();
                let rho_ht: Vec<f64> = main.iter().map(|&j| ht_rho[members[j]]).collect();
                d_blocks.push(maximal_difference(&rho_hc, &rho_ht)?);
            }
            frame_feature(&d_blocks, b)
        })
        .collect::<Result<_>>()?;

    Ok(FeatureSeries::new(k + 1, values))
}

/// Background-compensated series `r_i = dbar_i - (dbar_{i-k+1} + dbar_{i+k-1}) / 2`
/// over the frames where both neighbor terms exist.
pub fn relative_difference(dbar: &FeatureSeries, k: usize) -> Result<FeatureSeries> {
    if k < 1 {
        return Err(Error::InvalidParam("k must be >= 1".into()));
    }
    let lo = dbar.start() + (k - 1); // i - (k-1) >= dbar.start
    let hi_end = dbar.end();
    let mut values = Vec::new();
    let mut start = 0;
    for i in lo..=hi_end {
        let Some(center) = dbar.get(i) else { continue };
        let (Some(before), Some(after)) = (dbar.get(i + 1 - k), dbar.get(i + k - 1)) else {
            continue;
        };
        if values.is_empty() {
            start = i;
        }
        values.push(center - 0.5 * (before + after));
    }
    if values.is_empty() {
        return Err(Error::EmptyInput { op: "relative_difference" });
    }
    Ok(FeatureSeries::new(start, values))
}

/// Threshold `r_mean + p * (r_max - r_mean)` and the frames strictly above it.
pub fn threshold_and_flag(r: &FeatureSeries, p: f64) -> Result<(f64, BTreeSet<usize>)> {
    if r.is_empty() {
        return Err(Error::EmptyInput { op: "threshold_and_flag" });
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParam(format!("p must be in [0, 1], got {p}")));
    }
    let mean = r.values().iter().sum::<f64>() / r.len() as f64;
    let max = r.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let threshold = mean + p * (max - mean);
    let flags = r.iter().filter(|&(_, v)| v > threshold).map(|(i, _)| i).collect();
    Ok((threshold, flags))
}

/// Dump one video's series as `frame,dbar,r,flagged` CSV for inspection.
pub fn write_series_csv(path: &Path, series: &FrameFeatureSeries) -> Result<()> {
    let mut out = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "frame,dbar,r,flagged")?;
        for (i, dbar) in series.dbar.iter() {
            let r = series.r.get(i).map_or(String::new(), |v| v.to_string());
            let flagged = if series.flags.contains(&i) { "1" } else { "0" };
            writeln!(out, "{i},{dbar},{r},{flagged}")?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}
