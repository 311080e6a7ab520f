//! Face crop geometry from 68-point landmarks.
//!
//! The box for a video is built once from the first frame's landmarks and
//! applied to every frame. Its top edge is lifted by the vertical distance
//! between landmark 19 (an eyebrow point) and landmark 37 (an eye corner) so
//! the eyebrow region stays inside the crop; an optional second landmark
//! pass, detected inside the first box, can only pull the bottom edge up.
//!
//! Landmark indices 19 and 37 are 1-based positions in the standard 68-point
//! ordering. Off by one here silently corrupts the crop, so the constants
//! below are the single place the convention lives.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::{Frame, FrameSequence};

/// 1-based index of the eyebrow landmark used for the top lift.
pub const EYEBROW_LANDMARK: usize = 19;
/// 1-based index of the eye-corner landmark used for the top lift.
pub const EYE_CORNER_LANDMARK: usize = 37;

/// Rectangular crop region with inclusive pixel bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropBox {
    pub left: i64,
    pub top: i64,
    pub right: i64,
    pub bottom: i64,
}

impl CropBox {
    pub fn new(left: i64, top: i64, right: i64, bottom: i64) -> Result<Self> {
        if left >= right || top >= bottom {
            return Err(Error::DegenerateBox { left, top, right, bottom });
        }
        Ok(Self { left, top, right, bottom })
    }

    pub fn width(&self) -> i64 {
        self.right - self.left + 1
    }

    pub fn height(&self) -> i64 {
        self.bottom - self.top + 1
    }

    /// Clamp the box to a `width` x `height` frame, erroring only when the
    /// clamped box degenerates. Landmark jitter past a border should not
    /// abort a whole video.
    pub fn clamp_to(&self, width: u32, height: u32) -> Result<CropBox> {
        let left = self.left.clamp(0, i64::from(width) - 1);
        let right = self.right.clamp(0, i64::from(width) - 1);
        let top = self.top.clamp(0, i64::from(height) - 1);
        let bottom = self.bottom.clamp(0, i64::from(height) - 1);
        CropBox::new(left, top, right, bottom)
    }

    fn within(&self, width: u32, height: u32) -> bool {
        self.left >= 0
            && self.top >= 0
            && self.right < i64::from(width)
            && self.bottom < i64::from(height)
    }
}

/// Build the face box from first-pass landmarks.
///
/// The corners are `(x_l, y_t - (y_37 - y_19))` and `(x_r, y_b)` where
/// `x_l`/`x_r`/`y_t`/`y_b` are the extreme landmark coordinates; the lifted
/// top is clamped at 0. Coordinates are rounded to the nearest pixel.
pub fn box_from_landmarks(landmarks: &[(f64, f64)]) -> Result<CropBox> {
    if landmarks.len() != crate::ingest::LANDMARK_COUNT {
        return Err(Error::WrongLandmarkCount { got: landmarks.len() });
    }
    let x_left = landmarks.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let x_right = landmarks.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let y_top = landmarks.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let y_bottom = landmarks.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);

    let eyebrow_y = landmarks[EYEBROW_LANDMARK - 1].1;
    let eye_corner_y = landmarks[EYE_CORNER_LANDMARK - 1].1;
    let lifted_top = y_top - (eye_corner_y - eyebrow_y);

    let top = (lifted_top.round() as i64).max(0);
    CropBox::new(x_left.round() as i64, top, x_right.round() as i64, y_bottom.round() as i64)
}

/// Apply second-pass landmarks detected inside `bbox`.
///
/// `pass2` points are expressed in the coordinate frame of the cropped
/// region, so the new bottommost landmark is translated back before taking
/// the smaller of the two bottoms. Without `pass2` the box is unchanged.
pub fn refine_box(bbox: CropBox, pass2: Option<&[(f64, f64)]>) -> Result<CropBox> {
    let Some(points) = pass2 else { return Ok(bbox) };
    if points.len() != crate::ingest::LANDMARK_COUNT {
        return Err(Error::WrongLandmarkCount { got: points.len() });
    }
    let local_bottom = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let translated = bbox.top + local_bottom.round() as i64;
    CropBox::new(bbox.left, bbox.top, bbox.right, bbox.bottom.min(translated))
}

/// Crop every frame to `bbox` and resize to `size` x `size`.
///
/// Resizing is center-aligned bilinear sampling with edge clamping; a crop
/// that already is `size` x `size` passes through byte-identical. The box
/// must lie within the frame (clamp with [`CropBox::clamp_to`] first when
/// landmarks may run past the border).
pub fn crop_and_resize(seq: &FrameSequence, bbox: CropBox, size: u32) -> Result<FrameSequence> {
    if size == 0 {
        return Err(Error::InvalidParam("crop size must be positive".into()));
    }
    let (width, height) = seq.dimensions();
    if !bbox.within(width, height) {
        return Err(Error::BoxOutOfBounds {
            left: bbox.left,
            top: bbox.top,
            right: bbox.right,
            bottom: bbox.bottom,
            width,
            height,
        });
    }
    let frames: Vec<Frame> = seq
        .frames()
        .par_iter()
        .map(|f| resize_region(f, bbox, size))
        .collect();
    FrameSequence::new(seq.video_id.clone(), seq.fps, frames)
}

fn resize_region(frame: &Frame, bbox: CropBox, size: u32) -> Frame {
    let crop_w = bbox.width() as f64;
    let crop_h = bbox.height() as f64;
    let scale_x = crop_w / f64::from(size);
    let scale_y = crop_h / f64::from(size);
    let mut out = Frame::new(size, size);
    for oy in 0..size {
        let sy = bbox.top as f64 + (f64::from(oy) + 0.5) * scale_y - 0.5;
        for ox in 0..size {
            let sx = bbox.left as f64 + (f64::from(ox) + 0.5) * scale_x - 0.5;
            let v = sample_bilinear(frame, sx, sy);
            out.put_pixel(ox, oy, image::Luma([v.round() as u8]));
        }
    }
    out
}

/// Bilinear sample at a fractional position with edge-clamped taps.
pub(crate) fn sample_bilinear(frame: &Frame, x: f64, y: f64) -> f64 {
    let (w, h) = frame.dimensions();
    let clamp_get = |ix: i64, iy: i64| -> f64 {
        let cx = ix.clamp(0, i64::from(w) - 1) as u32;
        let cy = iy.clamp(0, i64::from(h) - 1) as u32;
        f64::from(frame.get_pixel(cx, cy).0[0])
    };
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (ix, iy) = (x0 as i64, y0 as i64);
    let v00 = clamp_get(ix, iy);
    let v10 = clamp_get(ix + 1, iy);
    let v01 = clamp_get(ix, iy + 1);
    let v11 = clamp_get(ix + 1, iy + 1);
    v00 * (1.0 - fx) * (1.0 - fy) + v10 * fx * (1.0 - fy) + v01 * (1.0 - fx) * fy + v11 * fx * fy
}
