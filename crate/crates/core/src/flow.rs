//! Optical flow estimation behind a pluggable backend.
//!
//! The shipped backend is exhaustive integer block matching with subpixel
//! refinement: for every grid point the `(2w+1)^2` patch around it in the
//! first frame is compared (sum of squared differences) against patches at
//! all integer offsets within the search radius in the second frame, and a
//! parabola fit along each axis refines the winning offset. SSD is computed
//! in integer arithmetic and candidate offsets are visited in a fixed order,
//! so results are bit-identical regardless of parallelism.
//!
//! Direction convention used everywhere in this crate: `u` grows rightward,
//! `v` downward (image coordinates), and the polar angle is computed with
//! the y-axis flipped, `theta = atan2(-v, u)`, so upward motion on the face
//! is +90 deg. `theta` lies in `[-pi, pi)` and the zero vector gets angle 0.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::Frame;

/// Block-matching parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowParams {
    /// Patch radius `w`; the matched patch is `(2w+1)` pixels on a side.
    pub window_radius: usize,
    /// Search radius `s`; integer offsets range over `[-s, s]` per axis.
    pub search_radius: usize,
    /// Grid stride in pixels; 1 samples every pixel.
    pub stride: usize,
}

impl FlowParams {
    /// Defaults for a given crop size: `w = 4`, `s = ceil(0.05 * size)`,
    /// dense grid.
    pub fn for_crop_size(size: u32) -> Self {
        Self {
            window_radius: 4,
            search_radius: (f64::from(size) * 0.05).ceil() as usize,
            stride: 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.window_radius < 1 || self.search_radius < 1 || self.stride < 1 {
            return Err(Error::InvalidParam(
                "flow window, search radius and stride must all be >= 1".into(),
            ));
        }
        Ok(())
    }
}

impl Default for FlowParams {
    fn default() -> Self {
        Self::for_crop_size(227)
    }
}

/// Per-point displacement field between two frames on a regular grid.
///
/// Grid point `(gx, gy)` sits at pixel `(gx * stride, gy * stride)`. The
/// polar form is empty until [`to_polar`] runs.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    grid_width: usize,
    grid_height: usize,
    stride: usize,
    u: Vec<f64>,
    v: Vec<f64>,
    rho: Vec<f64>,
    theta: Vec<f64>,
}

impl FlowField {
    pub fn from_components(
        grid_width: usize,
        grid_height: usize,
        stride: usize,
        u: Vec<f64>,
        v: Vec<f64>,
    ) -> Result<Self> {
        if u.len() != grid_width * grid_height || v.len() != u.len() {
            return Err(Error::InvalidParam("flow component length mismatch".into()));
        }
        Ok(Self { grid_width, grid_height, stride, u, v, rho: Vec::new(), theta: Vec::new() })
    }

    pub fn grid_dims(&self) -> (usize, usize) {
        (self.grid_width, self.grid_height)
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Pixel position of grid point `idx`.
    pub fn sample_position(&self, idx: usize) -> (u32, u32) {
        let gx = idx % self.grid_width;
        let gy = idx / self.grid_width;
        ((gx * self.stride) as u32, (gy * self.stride) as u32)
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    /// `(rho, theta)` slices when the polar form has been populated.
    pub fn polar(&self) -> Option<(&[f64], &[f64])> {
        if self.rho.is_empty() && !self.u.is_empty() {
            None
        } else {
            Some((&self.rho, &self.theta))
        }
    }
}

/// Flow estimator interface; `estimate(f, f)` must yield the zero field.
pub trait FlowBackend: Sync + Send {
    fn name(&self) -> &str;
    fn estimate(&self, frame_a: &Frame, frame_b: &Frame) -> Result<FlowField>;
}

/// The reference block-matching backend.
#[derive(Debug, Clone, Default)]
pub struct BlockMatchFlow {
    pub params: FlowParams,
}

impl BlockMatchFlow {
    pub fn new(params: FlowParams) -> Self {
        Self { params }
    }
}

impl FlowBackend for BlockMatchFlow {
    fn name(&self) -> &str {
        "reference"
    }

    fn estimate(&self, frame_a: &Frame, frame_b: &Frame) -> Result<FlowField> {
        reference_flow(frame_a, frame_b, &self.params)
    }
}

/// Wrap `theta` into `[-pi, pi)`.
fn wrap_theta(theta: f64) -> f64 {
    if theta >= std::f64::consts::PI {
        theta - 2.0 * std::f64::consts::PI
    } else {
        theta
    }
}

/// Polar form of one displacement: magnitude and direction with the fixed
/// y-flipped convention. The zero vector maps to `(0, 0)`.
pub fn polar_components(u: f64, v: f64) -> (f64, f64) {
    if u == 0.0 && v == 0.0 {
        return (0.0, 0.0);
    }
    let rho = u.hypot(v);
    let theta = wrap_theta((-v).atan2(u));
    (rho, theta)
}

/// Populate the polar form of a field.
pub fn to_polar(mut field: FlowField) -> FlowField {
    let (rho, theta): (Vec<f64>, Vec<f64>) = field
        .u
        .iter()
        .zip(&field.v)
        .map(|(&u, &v)| polar_components(u, v))
        .unzip();
    field.rho = rho;
    field.theta = theta;
    field
}

/// Candidate offsets sorted by the tie-break preference: smallest magnitude
/// first, then smallest angle under the fixed convention.
fn candidate_offsets(search_radius: usize) -> Vec<(i64, i64)> {
    let s = search_radius as i64;
    let mut all: Vec<(i64, i64)> = (-s..=s)
        .flat_map(|dv| (-s..=s).map(move |du| (du, dv)))
        .collect();
    all.sort_by(|&(au, av), &(bu, bv)| {
        let (ra, ta) = polar_components(au as f64, av as f64);
        let (rb, tb) = polar_components(bu as f64, bv as f64);
        ra.total_cmp(&rb).then(ta.total_cmp(&tb))
    });
    all
}

struct Plane<'a> {
    data: &'a [u8],
    width: i64,
    height: i64,
}

impl<'a> Plane<'a> {
    fn new(frame: &'a Frame) -> Self {
        Self {
            data: frame.as_raw(),
            width: i64::from(frame.width()),
            height: i64::from(frame.height()),
        }
    }

    #[inline]
    fn clamped(&self, x: i64, y: i64) -> i64 {
        let cx = x.clamp(0, self.width - 1);
        let cy = y.clamp(0, self.height - 1);
        i64::from(self.data[(cy * self.width + cx) as usize])
    }
}

/// SSD between the patch at `(px, py)` in `a` and at `(px+du, py+dv)` in
/// `b`, with edge-clamped taps. `early_stop` aborts row-wise once the sum
/// exceeds it.
fn patch_ssd(
    a: &Plane,
    b: &Plane,
    at: (i64, i64),
    offset: (i64, i64),
    w: i64,
    early_stop: u64,
) -> u64 {
    let (px, py) = at;
    let (du, dv) = offset;
    let interior = px - w >= 0
        && py - w >= 0
        && px + w < a.width
        && py + w < a.height
        && px + du - w >= 0
        && py + dv - w >= 0
        && px + du + w < b.width
        && py + dv + w < b.height;

    let mut total: u64 = 0;
    if interior {
        let side = (2 * w + 1) as usize;
        for oy in -w..=w {
            let a_start = ((py + oy) * a.width + px - w) as usize;
            let b_start = ((py + dv + oy) * b.width + px + du - w) as usize;
            let row_a = &a.data[a_start..a_start + side];
            let row_b = &b.data[b_start..b_start + side];
            let mut row_sum: u32 = 0;
            for (&pa, &pb) in row_a.iter().zip(row_b) {
                let d = i32::from(pa) - i32::from(pb);
                row_sum += (d * d) as u32;
            }
            total += u64::from(row_sum);
            if total > early_stop {
                return total;
            }
        }
    } else {
        for oy in -w..=w {
            let mut row_sum: u64 = 0;
            for ox in -w..=w {
                let d = a.clamped(px + ox, py + oy) - b.clamped(px + du + ox, py + dv + oy);
                row_sum += (d * d) as u64;
            }
            total += row_sum;
            if total > early_stop {
                return total;
            }
        }
    }
    total
}

/// Parabola-vertex offset from three samples around the integer minimum;
/// zero when the surface is flat or the fit is not convex.
fn parabola_offset(left: u64, mid: u64, right: u64) -> f64 {
    let l = left as f64;
    let m = mid as f64;
    let r = right as f64;
    let denom = l - 2.0 * m + r;
    if denom <= 0.0 {
        return 0.0;
    }
    0.5 * (l - r) / denom
}

/// Exhaustive block-matching flow from `frame_a` to `frame_b`.
///
/// Ties between equal-SSD offsets go to the candidate with the smallest
/// magnitude, then the smallest angle. Subpixel refinement fits a parabola
/// to the SSD values along each axis around the winning offset; it is
/// skipped on an axis when the winner sits on the search border, and
/// entirely when the match is exact.
pub fn reference_flow(frame_a: &Frame, frame_b: &Frame, params: &FlowParams) -> Result<FlowField> {
    params.validate()?;
    if frame_a.dimensions() != frame_b.dimensions() {
        return Err(Error::DimensionMismatch {
            a_w: frame_a.width(),
            a_h: frame_a.height(),
            b_w: frame_b.width(),
            b_h: frame_b.height(),
        });
    }
    let (width, height) = frame_a.dimensions();
    let stride = params.stride;
    let grid_width = (width as usize).div_ceil(stride);
    let grid_height = (height as usize).div_ceil(stride);
    let candidates = candidate_offsets(params.search_radius);
    let w = params.window_radius as i64;
    let s = params.search_radius as i64;

    let a = Plane::new(frame_a);
    let b = Plane::new(frame_b);

    let rows: Vec<Vec<(f64, f64)>> = (0..grid_height)
        .into_par_iter()
        .map(|gy| {
            let py = (gy * stride) as i64;
            let mut row = Vec::with_capacity(grid_width);
            for gx in 0..grid_width {
                let px = (gx * stride) as i64;

                let mut best = (0i64, 0i64);
                let mut best_ssd = u64::MAX;
                for &(du, dv) in &candidates {
                    let ssd = patch_ssd(&a, &b, (px, py), (du, dv), w, best_ssd.saturating_sub(1));
                    if ssd < best_ssd {
                        best_ssd = ssd;
                        best = (du, dv);
                        if best_ssd == 0 {
                            break;
                        }
                    }
                }

                let (du, dv) = best;
                let mut u = du as f64;
                let mut v = dv as f64;
                if best_ssd > 0 {
                    if du > -s && du < s {
                        let l = patch_ssd(&a, &b, (px, py), (du - 1, dv), w, u64::MAX);
                        let r = patch_ssd(&a, &b, (px, py), (du + 1, dv), w, u64::MAX);
                        u += parabola_offset(l, best_ssd, r);
                    }
                    if dv > -s && dv < s {
                        let t = patch_ssd(&a, &b, (px, py), (du, dv - 1), w, u64::MAX);
                        let d = patch_ssd(&a, &b, (px, py), (du, dv + 1), w, u64::MAX);
                        v += parabola_offset(t, best_ssd, d);
                    }
                }
                row.push((u, v));
            }
            row
        })
        .collect();

    let mut u = Vec::with_capacity(grid_width * grid_height);
    let mut v = Vec::with_capacity(grid_width * grid_height);
    for row in rows {
        for (pu, pv) in row {
            u.push(pu);
            v.push(pv);
        }
    }
    FlowField::from_components(grid_width, grid_height, stride, u, v)
}
