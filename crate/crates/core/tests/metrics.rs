#[path = "support/linalg.rs"]
mod linalg;

use linalg::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use cospeech_core::bvh::{parse_bvh, BvhClip};
use cospeech_core::metrics::{
    aits, beat_align, diversity, extract_audio_beats, extract_motion_beats, fgd, matched_distance, read_wav,
    velocity_envelope, GaussianStats, MetricError,
};

fn gaussian_samples<R: Rng>(rng: &mut R, n: usize, d: usize) -> Vec<Vec<f64>> {
    // correlated through a random mixing matrix
    let mix: Vec<Vec<f64>> = (0..d).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
            (0..d).map(|i| (0..d).map(|k| mix[i][k] * z[k]).sum::<f64>() + i as f64).collect()
        })
        .collect()
}

/// ‖μa − μb‖² + tr(Σa + Σb − 2 (Σa Σb)^{1/2}) with a general matrix root.
fn fgd_oracle(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let (ca, cb) = (covariance(a), covariance(b));
    let root = sqrtm(&matmul(&ca, &cb));
    ma.iter().zip(&mb).map(|(x, y)| (x - y).powi(2)).sum::<f64>() + trace(&ca) + trace(&cb) - 2.0 * trace(&root)
}

#[test]
fn fgd_of_a_set_with_itself_is_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for d in [1, 4, 16, 32] {
        let a = gaussian_samples(&mut rng, 200, d);
        let v = fgd(&a, &a).unwrap();
        assert!(v.abs() <= 1e-6, "d={d}: {v}");
    }
}

#[test]
fn fgd_of_a_mean_shift_is_the_squared_shift() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for d in [2, 8, 16] {
        let a = gaussian_samples(&mut rng, 300, d);
        let shift: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let b: Vec<Vec<f64>> = a.iter().map(|s| s.iter().zip(&shift).map(|(x, y)| x + y).collect()).collect();
        let want: f64 = shift.iter().map(|v| v * v).sum();
        let got = fgd(&a, &b).unwrap();
        assert!((got - want).abs() <= 1e-5, "d={d}: {got} vs {want}");
    }
}

#[test]
fn fgd_matches_denman_beavers_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for _ in 0..20 {
        let d = rng.random_range(1..=8);
        let a = gaussian_samples(&mut rng, 60, d);
        let b = gaussian_samples(&mut rng, 80, d);
        let (got, want) = (fgd(&a, &b).unwrap(), fgd_oracle(&a, &b));
        assert!((got - want).abs() <= 1e-8 * want.max(1.0), "{got} vs {want}");
        let back = fgd(&b, &a).unwrap();
        assert!((got - back).abs() <= 1e-8 * got.max(1.0));
    }
}

#[test]
fn gaussian_fit_matches_plain_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let s = gaussian_samples(&mut rng, 50, 5);
    let g = GaussianStats::fit(&s).unwrap();
    let (mu, cov) = (mean(&s), covariance(&s));
    for i in 0..5 {
        assert!((g.mean[i] - mu[i]).abs() < 1e-12);
        for j in 0..5 {
            assert!((g.covariance[(i, j)] - cov[i][j]).abs() < 1e-12);
        }
    }
}

#[test]
fn fgd_input_errors() {
    assert!(matches!(fgd(&[vec![1.0]], &[vec![1.0], vec![2.0]]), Err(MetricError::TooFewSamples { .. })));
    let a = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
    let b = vec![vec![1.0], vec![2.0]];
    assert!(matches!(fgd(&a, &b), Err(MetricError::DimensionMismatch(2, 1))));
    let ragged = vec![vec![1.0, 2.0], vec![2.0]];
    assert!(fgd(&ragged, &a).is_err());
    let nan = vec![vec![f64::NAN, 2.0], vec![2.0, 1.0]];
    assert!(matches!(fgd(&nan, &a), Err(MetricError::NonFinite)));
}

#[test]
fn aits_is_the_mean_time() {
    assert!((aits(&[0.12, 0.18, 0.15]).unwrap() - 0.15).abs() < 1e-15);
    assert!(matches!(aits(&[]), Err(MetricError::NoTimings)));
}

#[test]
fn diversity_closed_forms() {
    // every pair of distinct points is at distance 5
    let two = vec![vec![0.0, 0.0], vec![3.0, 4.0]];
    assert!((diversity(&two, 1, 7, 0).unwrap() - 5.0).abs() < 1e-12);
    let same = vec![vec![1.0, 2.0]; 10];
    assert_eq!(diversity(&same, 5, 3, 0).unwrap(), 0.0);
    // unit simplex corners: all distinct pairs at √2
    let corners: Vec<Vec<f64>> = (0..6).map(|i| (0..6).map(|j| (i == j) as u8 as f64).collect()).collect();
    assert!((diversity(&corners, 3, 10, 9).unwrap() - 2f64.sqrt()).abs() < 1e-12);
    assert_eq!(diversity(&corners, 3, 10, 9).unwrap(), diversity(&corners, 3, 10, 9).unwrap());
    assert!(diversity(&corners, 4, 1, 0).is_err());
    assert!(diversity(&corners, 0, 1, 0).is_err());
    let m = matched_distance(&corners, &[0, 1], &[1, 5]);
    assert!((m - 2f64.sqrt()).abs() < 1e-12);
}

fn beat_align_oracle(motion: &[f64], audio: &[f64], sigma: f64) -> f64 {
    let mut total = 0.0;
    for b in motion {
        let mut best = f64::INFINITY;
        for a in audio {
            best = best.min((b - a).abs());
        }
        total += (-(best * best) / (2.0 * sigma * sigma)).exp();
    }
    total / motion.len() as f64
}

#[test]
fn beat_align_reference_values() {
    let beats: Vec<f64> = (0..20).map(|i| 1.37 * i as f64 + 0.1).collect();
    assert_eq!(beat_align(&beats, &beats, 0.1).unwrap(), 1.0);
    for sigma in [0.05, 0.1, 0.3] {
        let moved: Vec<f64> = beats.iter().map(|b| b + sigma).collect();
        let v = beat_align(&beats, &moved, sigma).unwrap();
        assert!((v - (-0.5f64).exp()).abs() <= 1e-6, "sigma {sigma}: {v}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    for _ in 0..200 {
        let m: Vec<f64> = (0..rng.random_range(1..20)).map(|_| rng.random_range(0.0..10.0)).collect();
        let a: Vec<f64> = (0..rng.random_range(1..20)).map(|_| rng.random_range(0.0..10.0)).collect();
        let (got, want) = (beat_align(&m, &a, 0.1).unwrap(), beat_align_oracle(&m, &a, 0.1));
        assert!((got - want).abs() < 1e-12);
    }
    assert!(beat_align(&[], &beats, 0.1).is_err());
    assert!(beat_align(&beats, &beats, 0.0).is_err());
}

#[test]
fn click_train_onsets_land_on_the_clicks() {
    let rate = 16_000;
    let clicks = [0.5, 1.0, 1.5, 2.0, 2.5];
    let mut audio = vec![0.0f32; 3 * rate];
    for c in clicks {
        let at = (c * rate as f64) as usize;
        for k in 0..40 {
            audio[at + k] = if k % 2 == 0 { 0.9 } else { -0.9 };
        }
    }
    let beats = extract_audio_beats(&audio, rate as u32).unwrap();
    assert_eq!(beats.len(), clicks.len(), "{beats:?}");
    // one hop at 16 kHz is 32 ms
    for (b, c) in beats.iter().zip(clicks) {
        assert!((b - c).abs() <= 0.04, "{b} vs {c}");
    }
    assert!(matches!(extract_audio_beats(&[], rate as u32), Err(MetricError::EmptyAudio)));
    assert!(extract_audio_beats(&audio, 0).is_err());
}

/// Root-only clip swinging along x: speed is zero at every turning point.
fn swinging_clip(fps: f64, seconds: f64, period: f64) -> BvhClip {
    let n = (seconds * fps) as usize;
    let mut text = String::from(
        "HIERARCHY\nROOT Hips\n{\n\tOFFSET 0 0 0\n\tCHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation\n\tEnd Site\n\t{\n\t\tOFFSET 0 10 0\n\t}\n}\nMOTION\n",
    );
    text += &format!("Frames: {n}\nFrame Time: {}\n", 1.0 / fps);
    for f in 0..n {
        let x = 10.0 * (2.0 * std::f64::consts::PI * f as f64 / fps / period).cos();
        text += &format!("{x} 0 0 0 0 0\n");
    }
    parse_bvh(&text).unwrap()
}

#[test]
fn motion_beats_are_the_turning_points() {
    let clip = swinging_clip(60.0, 4.0, 1.0);
    let beats = extract_motion_beats(&clip).unwrap();
    // turning points every half period, excluding the first frame
    let want: Vec<f64> = (1..8).map(|k| 0.5 * k as f64).collect();
    assert_eq!(beats.len(), want.len(), "{beats:?}");
    for (b, w) in beats.iter().zip(&want) {
        assert!((b - w).abs() <= 1.0 / 60.0 + 1e-9);
    }
    let env = velocity_envelope(&clip).unwrap();
    assert_eq!(env.len(), clip.num_frames());
    assert!(env.iter().all(|v| *v >= 0.0));
    let mut short = clip.clone();
    short.frames.truncate(2 * 6);
    assert!(matches!(velocity_envelope(&short), Err(MetricError::TooFewFrames(2))));
}

#[test]
fn wav_reader_scales_and_downmixes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.wav");
    let spec = hound::WavSpec { channels: 2, sample_rate: 8000, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
    let mut w = hound::WavWriter::create(&p, spec).unwrap();
    for (l, r) in [(16384i16, 0i16), (-32768, -32768), (0, 8192)] {
        w.write_sample(l).unwrap();
        w.write_sample(r).unwrap();
    }
    w.finalize().unwrap();
    let (samples, rate) = read_wav(&p).unwrap();
    assert_eq!(rate, 8000);
    assert_eq!(samples, vec![0.25, -1.0, 0.125]);
}

proptest! {
    #[test]
    fn beat_align_is_a_score_in_unit_interval(
        m in prop::collection::vec(0.0f64..10.0, 1..20),
        a in prop::collection::vec(0.0f64..10.0, 0..20),
        sigma in 0.01f64..1.0,
    ) {
        let v = beat_align(&m, &a, sigma).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn fgd_is_nonnegative(seed in any::<u64>(), d in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gaussian_samples(&mut rng, 30, d);
        let b = gaussian_samples(&mut rng, 30, d);
        prop_assert!(fgd(&a, &b).unwrap() >= 0.0);
    }
}
