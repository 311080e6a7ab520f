//! Synthetic frame sequences with planted expression events.
//!
//! A video starts from one smooth textured base frame (bilinearly upsampled
//! value noise; block matching needs texture). During an event, the pixels
//! of its motion region show the base content translated along a triangular
//! rise-fall displacement profile: zero at onset, the configured peak at the
//! midpoint, zero again at offset. Frames are sampled with subpixel bilinear
//! warping, optional Gaussian intensity noise is added per frame, and
//! everything is deterministic given the seed.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::crop::sample_bilinear;
use crate::error::{Error, Result};
use crate::ingest::{ExpressionKind, Frame, FrameSequence, GroundTruthInterval};

/// One planted expression event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthEvent {
    pub onset: usize,
    pub offset: usize,
    pub kind: ExpressionKind,
    /// Displacement at the event midpoint, in pixels. Keep it within the
    /// flow search radius used downstream or the motion becomes invisible.
    pub peak_displacement: f64,
    /// Motion region as an inclusive block rectangle `(bx0, by0, bx1, by1)`
    /// on the generator's block grid.
    pub region: (usize, usize, usize, usize),
    /// Motion direction in degrees, 0 = rightward, 90 = up.
    #[serde(default)]
    pub angle_deg: f64,
}

/// Everything needed to generate one synthetic video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub video_id: String,
    /// Frame count `n`.
    pub frames: usize,
    /// Square frame side in pixels.
    pub size: u32,
    /// Block grid the event regions refer to.
    #[serde(default = "default_blocks_per_side")]
    pub blocks_per_side: usize,
    #[serde(default)]
    pub events: Vec<SynthEvent>,
    /// Gaussian intensity noise sigma, in intensity units.
    #[serde(default)]
    pub noise_sigma: f64,
    pub seed: u64,
    #[serde(default = "default_fps")]
    pub fps: u32,
}

fn default_blocks_per_side() -> usize {
    6
}

fn default_fps() -> u32 {
    30
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::SynthSpec("frame count must be >= 1".into()));
        }
        if self.size < 8 {
            return Err(Error::SynthSpec("frame size must be >= 8".into()));
        }
        let b = self.blocks_per_side;
        if b == 0 || (self.size as usize) < b {
            return Err(Error::SynthSpec(format!(
                "block grid {b} does not fit a {} px frame",
                self.size
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::SynthSpec("noise sigma must be finite and >= 0".into()));
        }
        for e in &self.events {
            if e.onset < 1 || e.offset > self.frames || e.onset > e.offset {
                return Err(Error::SynthSpec(format!(
                    "event [{}, {}] outside 1..={}",
                    e.onset, e.offset, self.frames
                )));
            }
            if !(e.peak_displacement > 0.0 && e.peak_displacement.is_finite()) {
                return Err(Error::SynthSpec("peak displacement must be positive".into()));
            }
            let (bx0, by0, bx1, by1) = e.region;
            if bx1 < bx0 || by1 < by0 || bx1 >= b || by1 >= b {
                return Err(Error::SynthSpec(format!(
                    "region {:?} outside the {b}x{b} block grid",
                    e.region
                )));
            }
        }
        for kind in [ExpressionKind::Macro, ExpressionKind::Micro] {
            let mut spans: Vec<(usize, usize)> = self
                .events
                .iter()
                .filter(|e| e.kind == kind)
                .map(|e| (e.onset, e.offset))
                .collect();
            spans.sort_unstable();
            for w in spans.windows(2) {
                if w[1].0 <= w[0].1 {
                    return Err(Error::SynthSpec(format!(
                        "{kind} events {:?} and {:?} overlap",
                        w[0], w[1]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Displacement of an event at frame `t`: triangular between onset and
/// offset, zero outside. A single-frame event peaks at its only frame.
fn displacement_at(event: &SynthEvent, t: usize) -> f64 {
    if t < event.onset || t > event.offset {
        return 0.0;
    }
    if event.onset == event.offset {
        return event.peak_displacement;
    }
    let mid = (event.onset + event.offset) as f64 / 2.0;
    let half = (event.offset - event.onset) as f64 / 2.0;
    event.peak_displacement * (1.0 - (t as f64 - mid).abs() / half)
}

/// Pixel bounds `[x0, x1)` of an inclusive block range along one axis.
fn block_range(b: usize, size: u32, lo: usize, hi: usize) -> (u32, u32) {
    let base = size as usize / b;
    let start = (lo * base) as u32;
    let end = if hi + 1 == b { size } else { ((hi + 1) * base) as u32 };
    (start, end)
}

/// Smooth textured base frame: value noise on a coarse lattice, bilinearly
/// upsampled. Flat frames would make block matching degenerate.
fn textured_base(rng: &mut ChaCha8Rng, size: u32) -> Frame {
    const LATTICE: u32 = 4;
    let cells = size / LATTICE + 2;
    let lattice: Vec<f64> = (0..cells * cells).map(|_| rng.gen_range(20.0..235.0)).collect();
    let at = |cx: u32, cy: u32| lattice[(cy * cells + cx) as usize];
    Frame::from_fn(size, size, |x, y| {
        let fx = f64::from(x) / f64::from(LATTICE);
        let fy = f64::from(y) / f64::from(LATTICE);
        let cx = fx.floor() as u32;
        let cy = fy.floor() as u32;
        let tx = fx - f64::from(cx);
        let ty = fy - f64::from(cy);
        let v = at(cx, cy) * (1.0 - tx) * (1.0 - ty)
            + at(cx + 1, cy) * tx * (1.0 - ty)
            + at(cx, cy + 1) * (1.0 - tx) * ty
            + at(cx + 1, cy + 1) * tx * ty;
        image::Luma([v.round() as u8])
    })
}

/// Generate the frame sequence and its ground truth.
pub fn generate(spec: &SynthSpec) -> Result<(FrameSequence, Vec<GroundTruthInterval>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let base = textured_base(&mut rng, spec.size);
    let b = spec.blocks_per_side;

    let noise = if spec.noise_sigma > 0.0 {
        Some(Normal::new(0.0, spec.noise_sigma).expect("validated sigma"))
    } else {
        None
    };

    let mut frames = Vec::with_capacity(spec.frames);
    for t in 1..=spec.frames {
        let mut frame = base.clone();
        for event in &spec.events {
            let d = displacement_at(event, t);
            if d == 0.0 {
                continue;
            }
            let angle = event.angle_deg.to_radians();
            let dx = d * angle.cos();
            let dy = -d * angle.sin();
            let (x0, x1) = block_range(b, spec.size, event.region.0, event.region.2);
            let (y0, y1) = block_range(b, spec.size, event.region.1, event.region.3);
            for y in y0..y1 {
                for x in x0..x1 {
                    let v = sample_bilinear(&base, f64::from(x) - dx, f64::from(y) - dy);
                    frame.put_pixel(x, y, image::Luma([v.round() as u8]));
                }
            }
        }
        if let Some(normal) = &noise {
            // Independent noise stream per frame, still fully seeded.
            let mut frame_rng = ChaCha8Rng::seed_from_u64(spec.seed);
            frame_rng.set_stream(t as u64);
            for px in frame.pixels_mut() {
                let v = f64::from(px.0[0]) + normal.sample(&mut frame_rng);
                px.0 = [v.round().clamp(0.0, 255.0) as u8];
            }
        }
        frames.push(frame);
    }

    let truth = spec
        .events
        .iter()
        .map(|e| GroundTruthInterval {
            video_id: spec.video_id.clone(),
            onset: e.onset,
            apex: Some((e.onset + e.offset).div_ceil(2)),
            offset: e.offset,
            kind: e.kind,
        })
        .collect();

    Ok((FrameSequence::new(spec.video_id.clone(), spec.fps, frames)?, truth))
}

/// 68 synthetic landmarks whose crop box is exactly the full frame, so the
/// crop stage acts as an identity pass-through on generated data.
pub fn synth_landmarks(size: u32) -> Vec<(f64, f64)> {
    let s = f64::from(size);
    let last = s - 1.0;
    let mut pts = Vec::with_capacity(68);
    // Jaw line 1..=17 along the bottom half ellipse.
    for i in 0..17 {
        let t = i as f64 / 16.0;
        let x = t * last;
        let y = s * 0.55 + (s * 0.44) * (std::f64::consts::PI * t).sin();
        pts.push((x, y.min(last)));
    }
    // Eyebrows 18..=27.
    for i in 0..10 {
        let x = s * (0.15 + 0.07 * i as f64);
        pts.push((x.min(last), s * 0.20));
    }
    // Nose 28..=36.
    for i in 0..9 {
        pts.push((s * 0.5, s * (0.30 + 0.02 * i as f64)));
    }
    // Eyes 37..=48; deep enough below the eyebrows that the lift clamps the
    // box top to 0.
    for i in 0..12 {
        let x = s * (0.25 + 0.05 * i as f64);
        pts.push((x.min(last), s * 0.45));
    }
    // Mouth 49..=68.
    for i in 0..20 {
        let x = s * (0.30 + 0.02 * i as f64);
        pts.push((x.min(last), s * 0.75));
    }
    debug_assert_eq!(pts.len(), 68);
    // Pin the exact extremes.
    pts[0] = (0.0, s * 0.55);
    pts[16] = (last, s * 0.55);
    pts[8] = (s * 0.5, last);
    pts
}

/// Write the frames of a sequence as zero-padded PNGs.
pub fn write_frames(dir: &Path, seq: &FrameSequence) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, frame) in seq.frames().iter().enumerate() {
        let path = dir.join(format!("f{:05}.png", i + 1));
        frame
            .save(&path)
            .map_err(|e| Error::Image { path: path.clone(), source: e })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crop::box_from_landmarks;
    use crate::flow::{reference_flow, FlowParams};

    fn micro_event(onset: usize, offset: usize, peak: f64) -> SynthEvent {
        SynthEvent {
            onset,
            offset,
            kind: ExpressionKind::Micro,
            peak_displacement: peak,
            region: (2, 2, 3, 3),
            angle_deg: 0.0,
        }
    }

    fn spec(events: Vec<SynthEvent>, sigma: f64, seed: u64) -> SynthSpec {
        SynthSpec {
            video_id: "synth".into(),
            frames: 40,
            size: 72,
            blocks_per_side: 6,
            events,
            noise_sigma: sigma,
            seed,
            fps: 30,
        }
    }

    #[test]
    fn static_spec_gives_identical_frames() {
        let (seq, truth) = generate(&spec(vec![], 0.0, 1)).unwrap();
        assert!(truth.is_empty());
        assert_eq!(seq.len(), 40);
        for i in 2..=seq.len() {
            assert_eq!(seq.frame(i), seq.frame(1));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let s = spec(vec![micro_event(10, 21, 3.0)], 1.0, 42);
        let (a, ta) = generate(&s).unwrap();
        let (b, tb) = generate(&s).unwrap();
        assert_eq!(ta, tb);
        for i in 1..=a.len() {
            assert_eq!(a.frame(i), b.frame(i), "frame {i} differs");
        }
    }

    #[test]
    fn seeds_change_frames_not_truth() {
        let (a, ta) = generate(&spec(vec![micro_event(10, 21, 3.0)], 1.0, 1)).unwrap();
        let (b, tb) = generate(&spec(vec![micro_event(10, 21, 3.0)], 1.0, 2)).unwrap();
        assert_eq!(ta, tb);
        assert_ne!(a.frame(1), b.frame(1));
    }

    #[test]
    fn ground_truth_mirrors_events() {
        let (_, truth) = generate(&spec(vec![micro_event(10, 21, 3.0)], 0.0, 1)).unwrap();
        assert_eq!(truth.len(), 1);
        assert_eq!(truth[0].onset, 10);
        assert_eq!(truth[0].offset, 21);
        assert_eq!(truth[0].apex, Some(16));
        assert_eq!(truth[0].kind, ExpressionKind::Micro);
    }

    #[test]
    fn out_of_range_event_rejected() {
        let bad = spec(vec![micro_event(30, 45, 3.0)], 0.0, 1); // offset > 40
        assert!(matches!(generate(&bad), Err(Error::SynthSpec(_))));
        let inverted = spec(vec![micro_event(1, 45, 3.0)], 0.0, 1);
        assert!(generate(&inverted).is_err());
    }

    #[test]
    fn overlapping_same_kind_events_rejected() {
        let bad = spec(vec![micro_event(10, 21, 3.0), micro_event(18, 30, 2.0)], 0.0, 1);
        assert!(matches!(generate(&bad), Err(Error::SynthSpec(_))));
    }

    #[test]
    fn flow_recovers_planted_displacement_at_midpoint() {
        let event = micro_event(11, 21, 3.0); // midpoint frame 16, displacement 3 px
        let s = spec(vec![event], 0.0, 9);
        let (seq, _) = generate(&s).unwrap();
        let params = FlowParams { window_radius: 3, search_radius: 5, stride: 1 };
        let field = reference_flow(seq.frame(10), seq.frame(16), &params).unwrap();
        let (gw, _) = field.grid_dims();
        // Region blocks (2,2)-(3,3) of a 6-grid over 72 px: pixels [24, 48).
        // Stay 8 px inside so match windows never straddle the seam.
        let mut checked = 0;
        for y in 32..40u32 {
            for x in 32..40u32 {
                let idx = (y as usize) * gw + x as usize;
                let (u, v) = (field.u()[idx], field.v()[idx]);
                assert!(
                    (u - 3.0).abs() <= 0.5 && v.abs() <= 0.5,
                    "({x},{y}): flow ({u}, {v})"
                );
                checked += 1;
            }
        }
        assert_eq!(checked, 64);
    }

    #[test]
    fn synthetic_landmarks_give_full_frame_box() {
        for size in [64u32, 96, 227] {
            let pts = synth_landmarks(size);
            assert_eq!(pts.len(), 68);
            let bbox = box_from_landmarks(&pts).unwrap();
            assert_eq!(
                (bbox.left, bbox.top, bbox.right, bbox.bottom),
                (0, 0, i64::from(size) - 1, i64::from(size) - 1)
            );
        }
    }

    #[test]
    fn frames_written_with_stable_names() {
        let dir = tempfile::tempdir().unwrap();
        let (seq, _) = generate(&spec(vec![], 0.0, 3)).unwrap();
        write_frames(dir.path(), &seq).unwrap();
        let mut names: Vec<String> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert_eq!(names.len(), 40);
        assert_eq!(names[0], "f00001.png");
        assert_eq!(names[39], "f00040.png");
    }
}
