#[path = "support/motion.rs"]
mod motion;

use motion::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cospeech_core::bvh::{
    forward_kinematics, parse_bvh, resample_clip, sample_row, segment_clips, write_bvh, BvhClip, BvhError,
};
use cospeech_core::quat::{euler_to_quaternion, quaternion_to_euler, quaternion_to_euler_near, RotationOrder};

fn assert_round_trip(clip: &BvhClip) {
    let back = parse_bvh(&write_bvh(clip)).unwrap();
    assert_eq!(back.joints.len(), clip.joints.len());
    for (a, b) in clip.joints.iter().zip(&back.joints) {
        assert_eq!(a.name, b.name);
        assert_eq!(a.parent, b.parent);
        assert_eq!(a.channels, b.channels);
        assert_eq!(a.rotation_order, b.rotation_order);
        assert_eq!(a.end_site.is_some(), b.end_site.is_some());
        for k in 0..3 {
            assert!((a.offset[k] - b.offset[k]).abs() < 1e-5);
        }
    }
    assert_eq!(back.num_frames(), clip.num_frames());
    assert!((back.frame_time - clip.frame_time).abs() < 1e-9);
    let worst = clip
        .frames
        .iter()
        .zip(&back.frames)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-5, "value error {worst}");
}

#[test]
fn fifty_random_clips_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        assert_round_trip(&random_clip(&mut rng));
    }
}

#[test]
fn writer_output_is_a_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..10 {
        let once = write_bvh(&random_clip(&mut rng));
        let twice = write_bvh(&parse_bvh(&once).unwrap());
        assert_eq!(once, twice);
    }
}

const BEAT_HEADER: &str = "HIERARCHY
ROOT Hips
{
\tOFFSET 0.000000 95.000000 0.000000
\tCHANNELS 6 Xposition Yposition Zposition Yrotation Xrotation Zrotation
\tJOINT Spine
\t{
\t\tOFFSET 0.000000 10.000000 0.000000
\t\tCHANNELS 3 Yrotation Xrotation Zrotation
\t\tEnd Site
\t\t{
\t\t\tOFFSET 0.000000 12.000000 0.000000
\t\t}
\t}
}
MOTION
Frames: 2
Frame Time: 0.008333
0 95 0 1 2 3 4 5 6
0.5 95.5 0 1.5 2.5 3.5 4.5 5.5 6.5
";

#[test]
fn beat_style_120fps_header_is_preserved() {
    let clip = parse_bvh(BEAT_HEADER).unwrap();
    assert_eq!(clip.joints[0].rotation_order, RotationOrder::YXZ);
    let back = parse_bvh(&write_bvh(&clip)).unwrap();
    assert_eq!(back.frame_time, clip.frame_time);
    assert_eq!((1.0 / back.frame_time).round(), 120.0);
    assert_eq!(back.frames, clip.frames);
}

#[test]
fn malformed_files_are_rejected_with_context() {
    let short_row = BEAT_HEADER.replace("0 95 0 1 2 3 4 5 6", "0 95 0 1 2 3");
    assert!(matches!(parse_bvh(&short_row), Err(BvhError::FrameWidth { .. })));
    let bad_number = BEAT_HEADER.replace("0 95 0 1 2 3 4 5 6", "0 95 0 1 2 x 4 5 6");
    assert!(matches!(parse_bvh(&bad_number), Err(BvhError::NonNumeric { .. })));
    let missing = BEAT_HEADER.replace("Frames: 2", "Frames: 3");
    assert!(matches!(parse_bvh(&missing), Err(BvhError::FrameCount { .. })));
    assert!(parse_bvh(&BEAT_HEADER.replace("CHANNELS 3", "CHANNELS 4")).is_err());
    assert!(parse_bvh("").is_err());
}

#[test]
fn euler_conversion_matches_matrix_product_for_every_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for order in RotationOrder::ALL {
        for _ in 0..200 {
            let e = [(); 3].map(|_| rng.random_range(-180.0..180.0));
            let q = euler_to_quaternion(e, order);
            assert!(mat_diff(&quat_matrix(&q), &euler_matrix(e, order)) < 1e-12);
            // canonical decomposition reproduces the same rotation
            let back = quaternion_to_euler(&q, order);
            assert!(mat_diff(&euler_matrix(back, order), &euler_matrix(e, order)) < 1e-9);
            // and the near-reference variant recovers the original triple
            let near = quaternion_to_euler_near(&q, order, e);
            for k in 0..3 {
                assert!((near[k] - e[k]).abs() < 1e-6, "{order} {e:?} -> {near:?}");
            }
        }
    }
}

#[test]
fn gimbal_lock_still_reproduces_the_rotation() {
    for order in RotationOrder::ALL {
        let mut e = [10.0, 20.0, 30.0];
        e[order.0[1].index()] = 90.0;
        let q = euler_to_quaternion(e, order);
        let back = quaternion_to_euler(&q, order);
        assert!(mat_diff(&euler_matrix(back, order), &euler_matrix(e, order)) < 1e-6);
        // the locked branch fixes the third angle to zero
        assert_eq!(back[order.0[2].index()], 0.0, "{order}");
    }
}

#[test]
fn forward_kinematics_matches_matrix_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..50 {
        let clip = random_clip(&mut rng);
        for f in 0..clip.num_frames() {
            let a = forward_kinematics(&clip.joints, clip.frame(f));
            let b = fk_oracle(&clip.joints, clip.frame(f));
            for (p, q) in a.iter().zip(&b) {
                for k in 0..3 {
                    assert!((p[k] - q[k]).abs() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn sampling_hits_source_frames_and_clamps() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut clip = random_clip(&mut rng);
    while clip.num_frames() < 3 {
        clip = random_clip(&mut rng);
    }
    let w = clip.total_channels();
    let mut out = vec![0.0; w];
    for f in 0..clip.num_frames() {
        sample_row(&clip, f as f64 * clip.frame_time, &mut out);
        assert_eq!(out.as_slice(), clip.frame(f));
    }
    sample_row(&clip, -1.0, &mut out);
    assert_eq!(out.as_slice(), clip.frame(0));
    sample_row(&clip, 1e6, &mut out);
    assert_eq!(out.as_slice(), clip.frame(clip.num_frames() - 1));
}

#[test]
fn interpolated_rotations_lie_between_neighbours() {
    // the sampled midpoint rotation sits halfway along the arc
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..20 {
        let clip = random_clip(&mut rng);
        if clip.num_frames() < 2 {
            continue;
        }
        let j = &clip.joints[0];
        let s = j.rotation_slots().unwrap();
        let q = |row: &[f64]| euler_to_quaternion([row[s[0]], row[s[1]], row[s[2]]], j.rotation_order);
        let mut mid = vec![0.0; clip.total_channels()];
        sample_row(&clip, 0.5 * clip.frame_time, &mut mid);
        let (a, b, m) = (q(clip.frame(0)), q(clip.frame(1)), q(&mid));
        let total = a.angle_to(&b);
        assert!((a.angle_to(&m) - total / 2.0).abs() < 1e-6);
        assert!((m.angle_to(&b) - total / 2.0).abs() < 1e-6);
    }
}

#[test]
fn resample_keeps_span_and_endpoints() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..20 {
        let clip = random_clip(&mut rng);
        let r = resample_clip(&clip, 30).unwrap();
        assert_eq!(r.num_frames(), 30);
        assert_eq!(r.frame(0), clip.frame(0));
        assert_eq!(r.frame(29), clip.frame(clip.num_frames() - 1));
        if clip.num_frames() > 1 {
            let span = (clip.num_frames() - 1) as f64 * clip.frame_time;
            assert!((29.0 * r.frame_time - span).abs() < 1e-12);
        }
    }
}

#[test]
fn segmentation_filters_by_duration() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let mut clip = random_clip(&mut rng);
    clip.frame_time = 0.1;
    let w = clip.total_channels();
    clip.frames = (0..300 * w).map(|i| i as f64 * 1e-3).collect();
    // 30 s at 10 fps: spans of 0.5 s (drop), 5 s (keep), 21 s (drop)
    let seg = segment_clips(&clip, &[(0.0, 0.5), (1.0, 6.0), (7.0, 28.0)]).unwrap();
    assert_eq!(seg.kept, vec![1]);
    assert_eq!(seg.clips[0].num_frames(), 50);
    assert_eq!(seg.clips[0].frame(0), clip.frame(10));
    assert_eq!(seg.dropped.iter().map(|d| d.index).collect::<Vec<_>>(), vec![0, 2]);
    assert!(segment_clips(&clip, &[(2.0, 1.0)]).is_err());
    assert!(segment_clips(&clip, &[(0.0, 40.0)]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn round_trip_any_seed(seed in any::<u64>()) {
        let clip = random_clip(&mut ChaCha8Rng::seed_from_u64(seed));
        assert_round_trip(&clip);
    }

    #[test]
    fn euler_quaternion_is_unit(x in -720.0f64..720.0, y in -720.0f64..720.0, z in -720.0f64..720.0, o in 0usize..6) {
        let q = euler_to_quaternion([x, y, z], RotationOrder::ALL[o]);
        prop_assert!((q.norm() - 1.0).abs() < 1e-12);
    }
}

