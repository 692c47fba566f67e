use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::{Mat, Scalar};
use super::ModelError;
use crate::features::ACTION_DIM;

/// How text and audio rows are merged before the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionKind {
    /// Projections to `d_model/2`, sigmoid gates, gated sum, duplicated.
    Gated,
    /// Concatenation followed by one projection to `d_model` (fusion ablation).
    Concat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionKind {
    /// Attention over time, then over the `W_proj`-transformed sequence.
    Divided,
    /// One post-norm self-attention per layer (attention ablation).
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub d_text: usize,
    pub d_audio: usize,
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_width: usize,
    pub window: usize,
    pub action_dim: usize,
    pub fusion: FusionKind,
    pub attention: AttentionKind,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_text: 768,
            d_audio: 512,
            d_model: 2048,
            layers: 6,
            heads: 1,
            ff_width: 4096,
            window: 8,
            action_dim: ACTION_DIM,
            fusion: FusionKind::Gated,
            attention: AttentionKind::Divided,
        }
    }
}

impl ModelConfig {
    /// Small configuration for tests and desk-scale experiments.
    pub fn tiny(d_text: usize, d_audio: usize, d_model: usize, layers: usize, window: usize) -> Self {
        ModelConfig {
            d_text,
            d_audio,
            d_model,
            layers,
            heads: 1,
            ff_width: 2 * d_model,
            window,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.d_text == 0 || self.d_audio == 0 || self.window == 0 || self.action_dim == 0 {
            return bad("dimensions and window must be at least 1");
        }
        if self.d_model == 0 || self.d_model % 2 != 0 {
            return bad("d_model must be even and positive");
        }
        if self.layers == 0 || self.ff_width == 0 {
            return bad("layers and ff_width must be at least 1");
        }
        if self.heads == 0 || self.d_model % self.heads != 0 {
            return bad("heads must divide d_model");
        }
        Ok(())
    }

    pub fn fused_half(&self) -> usize {
        self.d_model / 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<S> {
    /// `[out × in]`
    pub w: Mat<S>,
    /// `[1 × out]`
    pub b: Mat<S>,
}

type InitFn<'a, S> = &'a mut dyn FnMut(&mut Mat<S>, usize, usize);

impl<S: Scalar> Linear<S> {
    fn build(init: InitFn<'_, S>, input: usize, output: usize) -> Linear<S> {
        let mut w = Mat::zeros(output, input);
        init(&mut w, input, output);
        Linear {
            w,
            b: Mat::zeros(1, output),
        }
    }

    pub fn zeros_like(&self) -> Linear<S> {
        Linear {
            w: self.w.zeros_like(),
            b: self.b.zeros_like(),
        }
    }
}

fn xavier<S: Scalar>(rng: &mut ChaCha8Rng, m: &mut Mat<S>, fan_in: usize, fan_out: usize) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
    for v in &mut m.data {
        *v = S::from_f64(rng.random_range(-limit..limit) as f64);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams<S> {
    pub q: Linear<S>,
    pub k: Linear<S>,
    pub v: Linear<S>,
    pub o: Linear<S>,
}

impl<S: Scalar> AttentionParams<S> {
    fn build(init: InitFn<'_, S>, d: usize) -> Self {
        AttentionParams {
            q: Linear::build(init, d, d),
            k: Linear::build(init, d, d),
            v: Linear::build(init, d, d),
            o: Linear::build(init, d, d),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams<S> {
    pub gamma: Mat<S>,
    pub beta: Mat<S>,
}

impl<S: Scalar> LayerNormParams<S> {
    fn init(d: usize) -> Self {
        LayerNormParams {
            gamma: Mat::row_vector(vec![S::one(); d]),
            beta: Mat::zeros(1, d),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedForwardParams<S> {
    pub up: Linear<S>,
    pub down: Linear<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer<S> {
    /// Time attention, or the single attention under [`AttentionKind::Standard`].
    pub time: AttentionParams<S>,
    /// `W_proj` feature transform (divided attention only), `[d × d]`.
    pub proj: Option<Mat<S>>,
    pub space: Option<AttentionParams<S>>,
    pub norm1: LayerNormParams<S>,
    pub ff: FeedForwardParams<S>,
    pub norm2: LayerNormParams<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FusionParams<S> {
    Gated {
        text: Linear<S>,
        audio: Linear<S>,
        gate: Linear<S>,
    },
    Concat {
        proj: Linear<S>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<S> {
    pub config: ModelConfig,
    pub fusion: FusionParams<S>,
    pub layers: Vec<EncoderLayer<S>>,
    pub head: Linear<S>,
}

impl<S: Scalar> ModelParams<S> {
    /// Xavier-uniform weights, zero biases, unit layer-norm scales.
    pub fn init(config: ModelConfig, seed: u64) -> Result<ModelParams<S>, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self::build(config, &mut |m, fan_in, fan_out| {
            xavier(&mut rng, m, fan_in, fan_out)
        }))
    }

    /// Zero tensors (unit layer-norm scales) with the shapes `config` implies.
    pub fn zeros(config: ModelConfig) -> Result<ModelParams<S>, ModelError> {
        config.validate()?;
        Ok(Self::build(config, &mut |_, _, _| {}))
    }

    fn build(config: ModelConfig, init: InitFn<'_, S>) -> ModelParams<S> {
        let d = config.d_model;
        let half = config.fused_half();
        let fusion = match config.fusion {
            FusionKind::Gated => FusionParams::Gated {
                text: Linear::build(init, config.d_text, half),
                audio: Linear::build(init, config.d_audio, half),
                gate: Linear::build(init, 2 * half, 2),
            },
            FusionKind::Concat => FusionParams::Concat {
                proj: Linear::build(init, config.d_text + config.d_audio, d),
            },
        };
        let layers = (0..config.layers)
            .map(|_| {
                let time = AttentionParams::build(init, d);
                let (proj, space) = match config.attention {
                    AttentionKind::Divided => {
                        let mut p = Mat::zeros(d, d);
                        init(&mut p, d, d);
                        (Some(p), Some(AttentionParams::build(init, d)))
                    }
                    AttentionKind::Standard => (None, None),
                };
                EncoderLayer {
                    time,
                    proj,
                    space,
                    norm1: LayerNormParams::init(d),
                    ff: FeedForwardParams {
                        up: Linear::build(init, d, config.ff_width),
                        down: Linear::build(init, config.ff_width, d),
                    },
                    norm2: LayerNormParams::init(d),
                }
            })
            .collect();
        let head = Linear::build(init, d, config.action_dim);
        ModelParams {
            config,
            fusion,
            layers,
            head,
        }
    }

    /// Same structure with every tensor zeroed; used as a gradient accumulator.
    pub fn zeros_like(&self) -> ModelParams<S> {
        let mut z = self.clone();
        z.for_each_mut(|_, m| m.fill_zero());
        z
    }

    pub fn cast<T: Scalar>(&self) -> ModelParams<T> {
        let mut src = Vec::new();
        self.for_each(|_, m| src.push(m));
        let mut out = ModelParams::<T>::build(self.config, &mut |_, _, _| {});
        let mut it = src.into_iter();
        out.for_each_mut(|_, m| *m = it.next().expect("same structure").cast::<T>());
        out
    }

    pub fn num_parameters(&self) -> usize {
        let mut n = 0;
        self.for_each(|_, m| n += m.len());
        n
    }

    /// Visits every tensor with a stable dotted name, in a fixed order.
    pub fn for_each<'a>(&'a self, mut f: impl FnMut(&str, &'a Mat<S>)) {
        fn lin<'a, S>(f: &mut dyn FnMut(&str, &'a Mat<S>), p: &str, l: &'a Linear<S>) {
            f(&format!("{p}.w"), &l.w);
            f(&format!("{p}.b"), &l.b);
        }
        fn att<'a, S>(f: &mut dyn FnMut(&str, &'a Mat<S>), p: &str, a: &'a AttentionParams<S>) {
            lin(f, &format!("{p}.q"), &a.q);
            lin(f, &format!("{p}.k"), &a.k);
            lin(f, &format!("{p}.v"), &a.v);
            lin(f, &format!("{p}.o"), &a.o);
        }
        let f: &mut dyn FnMut(&str, &'a Mat<S>) = &mut f;
        match &self.fusion {
            FusionParams::Gated { text, audio, gate } => {
                lin(f, "fusion.text", text);
                lin(f, "fusion.audio", audio);
                lin(f, "fusion.gate", gate);
            }
            FusionParams::Concat { proj } => lin(f, "fusion.concat", proj),
        }
        for (i, l) in self.layers.iter().enumerate() {
            att(f, &format!("layers.{i}.time"), &l.time);
            if let Some(p) = &l.proj {
                f(&format!("layers.{i}.proj"), p);
            }
            if let Some(s) = &l.space {
                att(f, &format!("layers.{i}.space"), s);
            }
            f(&format!("layers.{i}.norm1.gamma"), &l.norm1.gamma);
            f(&format!("layers.{i}.norm1.beta"), &l.norm1.beta);
            lin(f, &format!("layers.{i}.ff.up"), &l.ff.up);
            lin(f, &format!("layers.{i}.ff.down"), &l.ff.down);
            f(&format!("layers.{i}.norm2.gamma"), &l.norm2.gamma);
            f(&format!("layers.{i}.norm2.beta"), &l.norm2.beta);
        }
        lin(f, "head", &self.head);
    }

    /// Mutable counterpart of [`ModelParams::for_each`], same order and names.
    pub fn for_each_mut(&mut self, mut f: impl FnMut(&str, &mut Mat<S>)) {
        fn lin<S>(f: &mut dyn FnMut(&str, &mut Mat<S>), p: &str, l: &mut Linear<S>) {
            f(&format!("{p}.w"), &mut l.w);
            f(&format!("{p}.b"), &mut l.b);
        }
        fn att<S>(f: &mut dyn FnMut(&str, &mut Mat<S>), p: &str, a: &mut AttentionParams<S>) {
            lin(f, &format!("{p}.q"), &mut a.q);
            lin(f, &format!("{p}.k"), &mut a.k);
            lin(f, &format!("{p}.v"), &mut a.v);
            lin(f, &format!("{p}.o"), &mut a.o);
        }
        let f: &mut dyn FnMut(&str, &mut Mat<S>) = &mut f;
        match &mut self.fusion {
            FusionParams::Gated { text, audio, gate } => {
                lin(f, "fusion.text", text);
                lin(f, "fusion.audio", audio);
                lin(f, "fusion.gate", gate);
            }
            FusionParams::Concat { proj } => lin(f, "fusion.concat", proj),
        }
        for (i, l) in self.layers.iter_mut().enumerate() {
            att(f, &format!("layers.{i}.time"), &mut l.time);
            if let Some(p) = &mut l.proj {
                f(&format!("layers.{i}.proj"), p);
            }
            if let Some(s) = &mut l.space {
                att(f, &format!("layers.{i}.space"), s);
            }
            f(&format!("layers.{i}.norm1.gamma"), &mut l.norm1.gamma);
            f(&format!("layers.{i}.norm1.beta"), &mut l.norm1.beta);
            lin(f, &format!("layers.{i}.ff.up"), &mut l.ff.up);
            lin(f, &format!("layers.{i}.ff.down"), &mut l.ff.down);
            f(&format!("layers.{i}.norm2.gamma"), &mut l.norm2.gamma);
            f(&format!("layers.{i}.norm2.beta"), &mut l.norm2.beta);
        }
        lin(f, "head", &mut self.head);
    }

    /// Adds `other` tensor-wise (same structure).
    pub fn accumulate(&mut self, other: &ModelParams<S>) {
        let mut src = Vec::new();
        other.for_each(|_, m| src.push(m));
        let mut it = src.into_iter();
        self.for_each_mut(|_, m| m.add_assign(it.next().expect("same structure")));
    }

    pub fn scale(&mut self, s: S) {
        self.for_each_mut(|_, m| m.scale(s));
    }
}
