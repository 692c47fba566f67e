//! Objective metrics: inference time, FGD, diversity and beat alignment.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::bvh::{forward_kinematics, BvhClip};

pub const DEFAULT_REPEATS: usize = 30;
pub const DEFAULT_DRAWS: usize = 10;
pub const DEFAULT_BEAT_SIGMA: f64 = 0.1;
pub const ONSET_FRAME: usize = 1024;
pub const ONSET_HOP: usize = 512;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("no timings")]
    NoTimings,
    #[error("need at least {needed} samples, got {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("feature dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("matrix square root failed: eigenvalue {0:e} is significantly negative")]
    NegativeEigenvalue(f64),
    #[error("non-finite value in input")]
    NonFinite,
    #[error("clip needs at least 3 frames, has {0}")]
    TooFewFrames(usize),
    #[error("empty audio")]
    EmptyAudio,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
}

/// Average inference time per sentence.
pub fn aits(timings: &[f64]) -> Result<f64, MetricError> {
    if timings.is_empty() {
        return Err(MetricError::NoTimings);
    }
    Ok(timings.iter().sum::<f64>() / timings.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: Vec<f64>,
    /// Unbiased sample covariance, `dim × dim`.
    pub covariance: DMatrix<f64>,
}

impl GaussianStats {
    pub fn fit(samples: &[Vec<f64>]) -> Result<GaussianStats, MetricError> {
        if samples.len() < 2 {
            return Err(MetricError::TooFewSamples {
                needed: 2,
                found: samples.len(),
            });
        }
        let d = samples[0].len();
        if let Some(bad) = samples.iter().find(|s| s.len() != d) {
            return Err(MetricError::DimensionMismatch(d, bad.len()));
        }
        if samples.iter().flatten().any(|v| !v.is_finite()) {
            return Err(MetricError::NonFinite);
        }
        let n = samples.len() as f64;
        let mut mean = vec![0.0; d];
        for s in samples {
            for (m, v) in mean.iter_mut().zip(s) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let centered = DMatrix::from_fn(samples.len(), d, |r, c| samples[r][c] - mean[c]);
        let covariance = (centered.transpose() * &centered) / (n - 1.0);
        Ok(GaussianStats { mean, covariance })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

fn clamp_eigen(values: &mut [f64]) -> Result<(), MetricError> {
    let max = values.iter().cloned().fold(0.0, f64::max);
    let floor = -1e-8 * max.max(1.0);
    for v in values.iter_mut() {
        if *v < floor {
            return Err(MetricError::NegativeEigenvalue(*v));
        }
        *v = v.max(0.0);
    }
    Ok(())
}

fn symmetric(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `trace((Σa Σb)^{1/2})`, computed as `trace((√Σa Σb √Σa)^{1/2})`, which
/// is similar to the product and symmetric.
fn trace_sqrt_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64, MetricError> {
    let mut ea = SymmetricEigen::new(symmetric(a));
    clamp_eigen(ea.eigenvalues.as_mut_slice())?;
    let sqrt_vals = ea.eigenvalues.map(f64::sqrt);
    let sqrt_a = &ea.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * ea.eigenvectors.transpose();
    let inner = symmetric(&(&sqrt_a * b * &sqrt_a));
    let mut e = SymmetricEigen::new(inner);
    clamp_eigen(e.eigenvalues.as_mut_slice())?;
    Ok(e.eigenvalues.iter().map(|v| v.sqrt()).sum())
}

pub fn fgd_from_stats(real: &GaussianStats, generated: &GaussianStats) -> Result<f64, MetricError> {
    if real.dim() != generated.dim() {
        return Err(MetricError::DimensionMismatch(real.dim(), generated.dim()));
    }
    let mean_term: f64 = real
        .mean
        .iter()
        .zip(&generated.mean)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let cross = trace_sqrt_product(&real.covariance, &generated.covariance)?;
    let value = mean_term + real.covariance.trace() + generated.covariance.trace() - 2.0 * cross;
    Ok(value.max(0.0))
}

/// Fréchet distance between Gaussians fitted to two feature sets.
pub fn fgd(real: &[Vec<f64>], generated: &[Vec<f64>]) -> Result<f64, MetricError> {
    fgd_from_stats(&GaussianStats::fit(real)?, &GaussianStats::fit(generated)?)
}

/// Mean L2 distance between matched rows of two disjoint random subsets,
/// averaged over `draws`.
pub fn diversity(features: &[Vec<f64>], subset_size: usize, draws: usize, seed: u64) -> Result<f64, MetricError> {
    if subset_size == 0 || draws == 0 {
        return Err(MetricError::InvalidArgument("subset size and draws must be positive".into()));
    }
    if 2 * subset_size > features.len() {
        return Err(MetricError::TooFewSamples {
            needed: 2 * subset_size,
            found: features.len(),
        });
    }
    let d = features[0].len();
    if let Some(bad) = features.iter().find(|f| f.len() != d) {
        return Err(MetricError::DimensionMismatch(d, bad.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..features.len()).collect();
    let mut total = 0.0;
    for _ in 0..draws {
        idx.shuffle(&mut rng);
        total += matched_distance(features, &idx[..subset_size], &idx[subset_size..2 * subset_size]);
    }
    Ok(total / draws as f64)
}

/// Mean distance between `features[a[i]]` and `features[b[i]]`.
pub fn matched_distance(features: &[Vec<f64>], a: &[usize], b: &[usize]) -> f64 {
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(&i, &j)| {
            features[i]
                .iter()
                .zip(&features[j])
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    sum / a.len() as f64
}

/// Summed joint speed per frame (central differences, one-sided at the ends).
pub fn velocity_envelope(clip: &BvhClip) -> Result<Vec<f64>, MetricError> {
    let n = clip.num_frames();
    if n < 3 {
        return Err(MetricError::TooFewFrames(n));
    }
    let pos: Vec<Vec<[f64; 3]>> = (0..n).map(|f| forward_kinematics(&clip.joints, clip.frame(f))).collect();
    let dist = |a: &[f64; 3], b: &[f64; 3]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
    Ok((0..n)
        .map(|t| {
            let (lo, hi) = (t.saturating_sub(1), (t + 1).min(n - 1));
            let dt = (hi - lo) as f64 * clip.frame_time;
            pos[lo].iter().zip(&pos[hi]).map(|(a, b)| dist(a, b) / dt).sum()
        })
        .collect())
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

/// Times of local minima of the velocity envelope that lie below its median.
pub fn extract_motion_beats(clip: &BvhClip) -> Result<Vec<f64>, MetricError> {
    let env = velocity_envelope(clip)?;
    let med = median(&env);
    Ok((1..env.len() - 1)
        .filter(|&t| env[t] < env[t - 1] && env[t] <= env[t + 1] && env[t] < med)
        .map(|t| t as f64 * clip.frame_time)
        .collect())
}

/// Half-wave-rectified spectral flux over Hann-windowed frames.
pub fn onset_envelope(samples: &[f32]) -> Vec<f64> {
    if samples.is_empty() {
        return Vec::new();
    }
    let frames = if samples.len() <= ONSET_FRAME {
        1
    } else {
        (samples.len() - ONSET_FRAME).div_ceil(ONSET_HOP) + 1
    };
    let window: Vec<f64> = (0..ONSET_FRAME)
        .map(|n| (std::f64::consts::PI * n as f64 / ONSET_FRAME as f64).sin().powi(2))
        .collect();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(ONSET_FRAME);
    let bins = ONSET_FRAME / 2 + 1;
    let mut prev = vec![0.0; bins];
    let mut buf = vec![Complex::new(0.0, 0.0); ONSET_FRAME];
    let mut flux = Vec::with_capacity(frames);
    for f in 0..frames {
        let start = f * ONSET_HOP;
        for (n, b) in buf.iter_mut().enumerate() {
            let s = samples.get(start + n).copied().unwrap_or(0.0) as f64;
            *b = Complex::new(s * window[n], 0.0);
        }
        fft.process(&mut buf);
        let mut sum = 0.0;
        for (k, p) in prev.iter_mut().enumerate() {
            let m = buf[k].norm();
            sum += (m - *p).max(0.0);
            *p = m;
        }
        flux.push(sum);
    }
    flux
}

/// Onset times (frame centres, seconds) at flux peaks above mean + 1σ.
pub fn extract_audio_beats(samples: &[f32], sample_rate: u32) -> Result<Vec<f64>, MetricError> {
    if sample_rate == 0 {
        return Err(MetricError::InvalidArgument("sample rate must be positive".into()));
    }
    if samples.is_empty() {
        return Err(MetricError::EmptyAudio);
    }
    let env = onset_envelope(samples);
    let n = env.len() as f64;
    let mean = env.iter().sum::<f64>() / n;
    let sd = (env.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let thr = mean + sd;
    let at = |i: isize| if i < 0 || i as usize >= env.len() { 0.0 } else { env[i as usize] };
    Ok((0..env.len())
        .filter(|&t| {
            let i = t as isize;
            env[t] > thr && env[t] > at(i - 1) && env[t] >= at(i + 1)
        })
        .map(|t| (t * ONSET_HOP + ONSET_FRAME / 2) as f64 / sample_rate as f64)
        .collect())
}

/// Mean over motion beats of `exp(−min_a (b − a)² / 2σ²)`.
pub fn beat_align(motion: &[f64], audio: &[f64], sigma: f64) -> Result<f64, MetricError> {
    if motion.is_empty() {
        return Err(MetricError::InvalidArgument("no motion beats".into()));
    }
    if !(sigma > 0.0) {
        return Err(MetricError::InvalidArgument("sigma must be positive".into()));
    }
    if audio.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = motion
        .iter()
        .map(|b| {
            let d2 = audio.iter().map(|a| (b - a) * (b - a)).fold(f64::INFINITY, f64::min);
            (-d2 / (2.0 * sigma * sigma)).exp()
        })
        .sum();
    Ok(sum / motion.len() as f64)
}

/// Reads a PCM WAV file as mono f32 in [-1, 1]; channels are averaged.
pub fn read_wav(path: &Path) -> Result<(Vec<f32>, u32), MetricError> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let raw: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Float => reader.samples::<f32>().collect::<Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1i64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 * scale))
                .collect::<Result<_, _>>()?
        }
    };
    let mono = raw
        .chunks(channels)
        .map(|c| c.iter().sum::<f32>() / c.len() as f32)
        .collect();
    Ok((mono, spec.sample_rate))
}
