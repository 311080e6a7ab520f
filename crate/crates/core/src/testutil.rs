//! Shared texture helpers for unit tests.

use crate::ingest::Frame;

/// Smooth aperiodic texture over an extended integer domain, so shifted
/// variants can be cut out without wrap-around.
pub(crate) fn texture_at(seed: u64, x: i64, y: i64) -> u8 {
    let xf = x as f64;
    let yf = y as f64;
    let sf = (seed % 97) as f64;
    let value = 127.5
        + 55.0 * ((0.31 * xf + 0.17 * yf + sf).sin())
        + 45.0 * ((0.12 * xf - 0.23 * yf + 0.5 * sf).cos())
        + 20.0 * ((0.53 * xf + 0.41 * yf).sin());
    value.clamp(0.0, 255.0).round() as u8
}

pub(crate) fn textured_frame(seed: u64, w: u32, h: u32, shift: (i64, i64)) -> Frame {
    Frame::from_fn(w, h, |x, y| {
        image::Luma([texture_at(seed, i64::from(x) - shift.0, i64::from(y) - shift.1)])
    })
}
