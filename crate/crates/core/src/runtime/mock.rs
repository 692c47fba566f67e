//! Deterministic stand-in embeddings for tests and demos.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

/// Hashes `seed ‖ bytes` and expands the digest into a `dim`-long vector
/// with zero mean and unit variance.
pub fn mock_embed(bytes: &[u8], seed: u64, dim: usize) -> Vec<f32> {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(bytes);
    let digest: [u8; 32] = h.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(digest);
    let raw: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    if dim < 2 {
        return raw.iter().map(|_| 0.0).collect();
    }
    let mean = raw.iter().sum::<f64>() / dim as f64;
    let sd = (raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / dim as f64).sqrt();
    raw.iter().map(|v| ((v - mean) / sd) as f32).collect()
}

/// Text and audio vectors for one sentence. The audio vector hashes the
/// audio bytes when given, else the sentence text under a distinct prefix.
pub fn mock_sentence(text: &str, audio: Option<&[u8]>, seed: u64, d_text: usize, d_audio: usize) -> (Vec<f32>, Vec<f32>) {
    let t = mock_embed(text.as_bytes(), seed, d_text);
    let a = match audio {
        Some(bytes) => mock_embed(bytes, seed, d_audio),
        None => {
            let mut b = b"audio:".to_vec();
            b.extend_from_slice(text.as_bytes());
            mock_embed(&b, seed, d_audio)
        }
    };
    (t, a)
}
