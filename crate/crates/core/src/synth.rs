//! Seeded synthetic motion for demos and tests: a small upper-body skeleton
//! driven by sums of sinusoids.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bvh::{BvhClip, BvhJoint, Channel};
use crate::quat::RotationOrder;

const ROT: [Channel; 3] = [Channel::Zrotation, Channel::Xrotation, Channel::Yrotation];

fn joint(name: &str, parent: Option<usize>, offset: [f64; 3], end_site: Option<[f64; 3]>) -> BvhJoint {
    let mut channels = Vec::new();
    if parent.is_none() {
        channels.extend([Channel::Xposition, Channel::Yposition, Channel::Zposition]);
    }
    channels.extend(ROT);
    BvhJoint {
        name: name.to_string(),
        parent,
        offset,
        channels,
        rotation_order: RotationOrder::ZXY,
        end_site,
    }
}

/// Hips (6 channels) plus six rotation-only joints: 24 channels per frame.
pub fn demo_skeleton() -> Vec<BvhJoint> {
    vec![
        joint("Hips", None, [0.0, 0.0, 0.0], None),
        joint("Spine", Some(0), [0.0, 10.0, 0.0], None),
        joint("Head", Some(1), [0.0, 15.0, 0.0], Some([0.0, 8.0, 0.0])),
        joint("LeftArm", Some(1), [6.0, 12.0, 0.0], None),
        joint("LeftForeArm", Some(3), [12.0, 0.0, 0.0], Some([10.0, 0.0, 0.0])),
        joint("RightArm", Some(1), [-6.0, 12.0, 0.0], None),
        joint("RightForeArm", Some(5), [-12.0, 0.0, 0.0], Some([-10.0, 0.0, 0.0])),
    ]
}

/// A smooth random clip on [`demo_skeleton`].
pub fn synthetic_clip<R: Rng>(rng: &mut R, frames: usize, frame_time: f64) -> BvhClip {
    let joints = demo_skeleton();
    let width: usize = joints.iter().map(|j| j.channels.len()).sum();
    // (amplitude, frequency Hz, phase, offset) per channel
    let waves: Vec<(f64, f64, f64, f64)> = (0..width)
        .map(|c| {
            let (amp, off) = if c < 3 { (2.0, 0.0) } else { (35.0, 10.0) };
            (
                rng.random_range(0.2..1.0) * amp,
                rng.random_range(0.2..2.0),
                rng.random_range(0.0..TAU),
                rng.random_range(-1.0..1.0) * off,
            )
        })
        .collect();
    let mut data = Vec::with_capacity(frames * width);
    for f in 0..frames {
        let t = f as f64 * frame_time;
        for &(a, hz, ph, off) in &waves {
            data.push(off + a * (TAU * hz * t + ph).sin());
        }
    }
    BvhClip {
        joints,
        frame_time,
        frames: data,
    }
}

/// `count` clips of 0.9 to 3 s at 30 fps.
pub fn synthetic_corpus(count: usize, seed: u64) -> Vec<BvhClip> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let frames = rng.random_range(27..=90);
            synthetic_clip(&mut rng, frames, 1.0 / 30.0)
        })
        .collect()
}
