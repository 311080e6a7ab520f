//! # mespot
//!
//! Spotting of macro- and micro-expression intervals in long frame sequences.
//!
//! The pipeline works on a video as follows:
//!
//! 1. [`ingest`] loads the frames as grayscale and parses annotation and
//!    landmark files.
//! 2. [`crop`] builds a face bounding box from 68-point landmarks of the
//!    first frame and crops/resizes every frame with it.
//! 3. [`flow`] estimates per-point optical flow between frame pairs behind a
//!    pluggable backend; the shipped backend is integer block matching with
//!    subpixel refinement.
//! 4. [`mdmd`] computes the main directional maximal difference feature per
//!    frame: flow vectors of each facial block are binned by direction, the
//!    dominant bin's magnitude differences between the head–current and
//!    head–tail fields are averaged over their top third, and the per-frame
//!    feature is turned into a background-compensated relative series that is
//!    thresholded adaptively.
//! 5. [`intervals`] merges flagged frames into runs and keeps the runs whose
//!    lengths are plausible for the expression kind.
//! 6. [`metrics`] scores predictions against ground truth with the
//!    interval-IoU protocol (a spotted interval is a true positive when its
//!    IoU with an unmatched ground-truth interval is at least 0.5) and
//!    aggregates per-kind and overall recall/precision/F1 over a dataset.
//! 7. [`synth`] generates seeded synthetic videos with planted expression
//!    events so the whole pipeline can be exercised without licensed data.
//!
//! Frame indices are 1-based everywhere in the public API: the first frame of
//! a video is frame 1 and annotation files use the same convention.

pub mod crop;
pub mod error;
pub mod flow;
pub mod ingest;
pub mod intervals;
pub mod mdmd;
pub mod metrics;
pub mod synth;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
