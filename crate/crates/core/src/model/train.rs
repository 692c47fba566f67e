use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::forward::accumulate_gradients;
use super::params::ModelParams;
use super::tensor::Scalar;
use super::window::FeatureWindow;
use super::ModelError;

#[derive(Debug, Clone)]
pub struct TrainingPair {
    pub window: FeatureWindow,
    pub target: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stops after this many optimizer steps, even mid-epoch.
    pub max_steps: Option<usize>,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            batch_size: 256,
            epochs: 1,
            max_steps: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport<S> {
    pub params: ModelParams<S>,
    /// Batch loss before each update.
    pub step_losses: Vec<f64>,
    /// Sample-weighted mean of the batch losses of each (possibly partial) epoch.
    pub epoch_losses: Vec<f64>,
}

/// Mean loss of `params` over the whole dataset, without updating anything.
pub fn dataset_loss<S: Scalar>(params: &ModelParams<S>, data: &[TrainingPair]) -> Result<f64, ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut total = 0.0;
    for pair in data {
        let pred = super::forward::forward(params, &pair.window)?;
        total += pred
            .iter()
            .zip(&pair.target)
            .map(|(p, t)| {
                let e = p.as_f64() - *t as f64;
                e * e
            })
            .sum::<f64>();
    }
    Ok(total / data.len() as f64)
}

/// Mini-batch Adam on mean squared error. Deterministic for a given seed.
pub fn train<S: Scalar>(
    mut params: ModelParams<S>,
    data: &[TrainingPair],
    config: &TrainConfig,
) -> Result<TrainReport<S>, ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if config.batch_size == 0 {
        return Err(ModelError::Config("batch size must be at least 1".into()));
    }
    let targets: Vec<Vec<S>> = data
        .iter()
        .map(|p| p.target.iter().map(|v| S::from_f64(*v as f64)).collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(&params, config.adam);
    let mut grad = params.zeros_like();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut step_losses = Vec::new();
    let mut epoch_losses = Vec::new();
    'epochs: for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(config.batch_size) {
            if config.max_steps.is_some_and(|m| step_losses.len() >= m) {
                if seen > 0 {
                    epoch_losses.push(sum / seen as f64);
                }
                break 'epochs;
            }
            let batch: Vec<(&FeatureWindow, &[S])> = chunk
                .iter()
                .map(|&i| (&data[i].window, targets[i].as_slice()))
                .collect();
            grad.for_each_mut(|_, m| m.fill_zero());
            let loss = accumulate_gradients(&params, &mut grad, &batch)?.as_f64();
            adam_step(&mut adam, &mut params, &grad)?;
            debug!("step {} loss {loss:.6}", step_losses.len());
            step_losses.push(loss);
            sum += loss * chunk.len() as f64;
            seen += chunk.len();
        }
        let mean = sum / seen as f64;
        info!("epoch {epoch}: loss {mean:.6}, lr {:.3e}", adam.lr);
        epoch_losses.push(mean);
        adam.end_epoch();
    }
    Ok(TrainReport {
        params,
        step_losses,
        epoch_losses,
    })
}

/// Training pairs from aligned per-sentence sequences: the window ending at
/// sentence `i` (zero-padded before the first sentence) predicts `motion[i]`.
pub fn sequence_pairs(
    text: &[&[f32]],
    audio: &[&[f32]],
    motion: &[&[f32]],
    window: usize,
) -> Result<Vec<TrainingPair>, ModelError> {
    if text.len() != audio.len() || text.len() != motion.len() {
        return Err(ModelError::DimensionMismatch(format!(
            "sequence lengths differ: text {}, audio {}, motion {}",
            text.len(),
            audio.len(),
            motion.len()
        )));
    }
    let Some((t0, a0)) = text.first().zip(audio.first()) else {
        return Err(ModelError::EmptyDataset);
    };
    let mut w = FeatureWindow::zeros(window, t0.len(), a0.len());
    let mut pairs = Vec::with_capacity(text.len());
    for i in 0..text.len() {
        w.push(text[i], audio[i])?;
        pairs.push(TrainingPair {
            window: w.clone(),
            target: motion[i].to_vec(),
        });
    }
    Ok(pairs)
}
