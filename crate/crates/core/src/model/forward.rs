//! Encoder forward pass and its exact reverse pass.

use super::ops::{
    attention_backward, attention_forward, gelu, gelu_grad, layer_norm_backward, layer_norm_forward,
    linear_backward, linear_forward, projection_backward, sigmoid, AttentionCache, LayerNormCache,
};
use super::params::{EncoderLayer, FusionParams, ModelParams};
use super::tensor::{matmul_nt, matmul_tn_acc, Mat, Scalar};
use super::window::FeatureWindow;
use super::ModelError;

/// Fuses one text row and one audio row into a `d_model` vector.
pub fn fuse_modalities<S: Scalar>(fusion: &FusionParams<S>, text: &[S], audio: &[S]) -> Result<Vec<S>, ModelError> {
    let (t, a) = fusion_inputs(fusion, text, audio)?;
    Ok(fuse(fusion, &t, &a).0.data)
}

/// Gate values `(g_t, g_a)` for one row pair; `None` without gated fusion.
pub fn gate_values<S: Scalar>(
    fusion: &FusionParams<S>,
    text: &[S],
    audio: &[S],
) -> Result<Option<(S, S)>, ModelError> {
    let (t, a) = fusion_inputs(fusion, text, audio)?;
    Ok(match fuse(fusion, &t, &a).1 {
        FusionCache::Gated { gates, .. } => Some((gates.get(0, 0), gates.get(0, 1))),
        FusionCache::Concat { .. } => None,
    })
}

fn fusion_inputs<S: Scalar>(fusion: &FusionParams<S>, text: &[S], audio: &[S]) -> Result<(Mat<S>, Mat<S>), ModelError> {
    let ok = match fusion {
        FusionParams::Gated { text: wt, audio: wa, .. } => wt.w.cols == text.len() && wa.w.cols == audio.len(),
        FusionParams::Concat { proj } => proj.w.cols == text.len() + audio.len(),
    };
    if !ok {
        return Err(ModelError::DimensionMismatch(format!(
            "fusion inputs of {} text / {} audio values do not fit the model",
            text.len(),
            audio.len()
        )));
    }
    Ok((Mat::row_vector(text.to_vec()), Mat::row_vector(audio.to_vec())))
}

enum FusionCache<S> {
    Gated {
        text: Mat<S>,
        audio: Mat<S>,
        tp: Mat<S>,
        ap: Mat<S>,
        z: Mat<S>,
        gates: Mat<S>,
    },
    Concat {
        input: Mat<S>,
    },
}

fn fuse<S: Scalar>(fusion: &FusionParams<S>, text: &Mat<S>, audio: &Mat<S>) -> (Mat<S>, FusionCache<S>) {
    let n = text.rows;
    match fusion {
        FusionParams::Gated {
            text: wt,
            audio: wa,
            gate,
        } => {
            let tp = linear_forward(wt, text);
            let ap = linear_forward(wa, audio);
            let half = tp.cols;
            let z = hconcat(&tp, &ap);
            let mut gates = linear_forward(gate, &z);
            gates.data.iter_mut().for_each(|v| *v = sigmoid(*v));
            let mut out = Mat::zeros(n, 2 * half);
            for r in 0..n {
                let (gt, ga) = (gates.get(r, 0), gates.get(r, 1));
                let row = out.row_mut(r);
                for c in 0..half {
                    let h = gt * tp.get(r, c) + ga * ap.get(r, c);
                    row[c] = h;
                    row[half + c] = h;
                }
            }
            let cache = FusionCache::Gated {
                text: text.clone(),
                audio: audio.clone(),
                tp,
                ap,
                z,
                gates,
            };
            (out, cache)
        }
        FusionParams::Concat { proj } => {
            let input = hconcat(text, audio);
            (linear_forward(proj, &input), FusionCache::Concat { input })
        }
    }
}

fn fuse_backward<S: Scalar>(
    fusion: &FusionParams<S>,
    grad: &mut FusionParams<S>,
    cache: &FusionCache<S>,
    dx: &Mat<S>,
) {
    match (fusion, grad, cache) {
        (
            FusionParams::Gated { gate, .. },
            FusionParams::Gated {
                text: gwt,
                audio: gwa,
                gate: ggate,
            },
            FusionCache::Gated {
                text,
                audio,
                tp,
                ap,
                z,
                gates,
            },
        ) => {
            let n = dx.rows;
            let half = tp.cols;
            let mut dtp = Mat::zeros(n, half);
            let mut dap = Mat::zeros(n, half);
            let mut dlogit = Mat::zeros(n, 2);
            for r in 0..n {
                let (gt, ga) = (gates.get(r, 0), gates.get(r, 1));
                let (mut dgt, mut dga) = (S::zero(), S::zero());
                for c in 0..half {
                    let dh = dx.get(r, c) + dx.get(r, half + c);
                    dtp.data[r * half + c] = gt * dh;
                    dap.data[r * half + c] = ga * dh;
                    dgt += dh * tp.get(r, c);
                    dga += dh * ap.get(r, c);
                }
                dlogit.data[r * 2] = dgt * gt * (S::one() - gt);
                dlogit.data[r * 2 + 1] = dga * ga * (S::one() - ga);
            }
            let dz = linear_backward(gate, ggate, z, &dlogit);
            for r in 0..n {
                for c in 0..half {
                    dtp.data[r * half + c] += dz.get(r, c);
                    dap.data[r * half + c] += dz.get(r, half + c);
                }
            }
            accumulate_linear_params(gwt, text, &dtp);
            accumulate_linear_params(gwa, audio, &dap);
        }
        (FusionParams::Concat { .. }, FusionParams::Concat { proj: gproj }, FusionCache::Concat { input }) => {
            accumulate_linear_params(gproj, input, dx);
        }
        _ => unreachable!("fusion structure mismatch"),
    }
}

/// Parameter gradients of an affine map whose input gradient is not needed.
fn accumulate_linear_params<S: Scalar>(g: &mut super::params::Linear<S>, x: &Mat<S>, dy: &Mat<S>) {
    matmul_tn_acc(dy, x, &mut g.w);
    super::tensor::col_sum_acc(dy, &mut g.b);
}

fn hconcat<S: Scalar>(a: &Mat<S>, b: &Mat<S>) -> Mat<S> {
    let mut out = Mat::zeros(a.rows, a.cols + b.cols);
    for r in 0..a.rows {
        let row = out.row_mut(r);
        row[..a.cols].copy_from_slice(a.row(r));
        row[a.cols..].copy_from_slice(b.row(r));
    }
    out
}

/// Adds sinusoidal position codes in place; position 0 is the oldest row.
pub fn positional_encode<S: Scalar>(x: &mut Mat<S>) {
    let d = x.cols;
    for pos in 0..x.rows {
        let row = x.row_mut(pos);
        for i in 0..d.div_ceil(2) {
            let freq = (pos as f64) / 10000f64.powf(2.0 * i as f64 / d as f64);
            row[2 * i] += S::from_f64(freq.sin());
            if 2 * i + 1 < d {
                row[2 * i + 1] += S::from_f64(freq.cos());
            }
        }
    }
}

/// `X + Attn_time(X)` for each `[S × D]` sequence of a batch.
pub fn time_attention<S: Scalar>(layer: &EncoderLayer<S>, heads: usize, batch: &[Mat<S>]) -> Vec<Mat<S>> {
    batch
        .iter()
        .map(|x| {
            let mut y = attention_forward(&layer.time, x, heads).0;
            y.add_assign(x);
            y
        })
        .collect()
}

/// `LayerNorm(X_s + Attn_space(X_s))` with `X_s = X · W_projᵀ`, for each
/// sequence of a batch. `None` for layers without divided attention.
pub fn space_attention<S: Scalar>(layer: &EncoderLayer<S>, heads: usize, batch: &[Mat<S>]) -> Option<Vec<Mat<S>>> {
    let (proj, space) = (layer.proj.as_ref()?, layer.space.as_ref()?);
    Some(
        batch
            .iter()
            .map(|x| {
                let xs = matmul_nt(x, proj, None);
                let mut y = attention_forward(space, &xs, heads).0;
                y.add_assign(&xs);
                layer_norm_forward(&layer.norm1, &y).0
            })
            .collect(),
    )
}

struct LayerCache<S> {
    time: AttentionCache<S>,
    /// `X + Attn_time(X)`, the input to `W_proj` (divided attention only).
    x1: Option<Mat<S>>,
    space: Option<AttentionCache<S>>,
    norm1: LayerNormCache<S>,
    ff_in: Mat<S>,
    ff_pre: Mat<S>,
    ff_act: Mat<S>,
    norm2: LayerNormCache<S>,
}

fn layer_forward<S: Scalar>(layer: &EncoderLayer<S>, heads: usize, x: &Mat<S>) -> (Mat<S>, LayerCache<S>) {
    let (t, time) = attention_forward(&layer.time, x, heads);
    let mut sum = x.clone();
    sum.add_assign(&t);
    let (x1, space, pre1) = match (&layer.proj, &layer.space) {
        (Some(proj), Some(sp)) => {
            let xs = matmul_nt(&sum, proj, None);
            let (s, sc) = attention_forward(sp, &xs, heads);
            let mut pre = xs;
            pre.add_assign(&s);
            (Some(sum), Some(sc), pre)
        }
        _ => (None, None, sum),
    };
    let (y, norm1) = layer_norm_forward(&layer.norm1, &pre1);
    let ff_pre = linear_forward(&layer.ff.up, &y);
    let mut ff_act = ff_pre.clone();
    ff_act.data.iter_mut().for_each(|v| *v = gelu(*v));
    let mut pre2 = linear_forward(&layer.ff.down, &ff_act);
    pre2.add_assign(&y);
    let (out, norm2) = layer_norm_forward(&layer.norm2, &pre2);
    (
        out,
        LayerCache {
            time,
            x1,
            space,
            norm1,
            ff_in: y,
            ff_pre,
            ff_act,
            norm2,
        },
    )
}

fn layer_backward<S: Scalar>(
    layer: &EncoderLayer<S>,
    grad: &mut EncoderLayer<S>,
    cache: &LayerCache<S>,
    heads: usize,
    dout: &Mat<S>,
) -> Mat<S> {
    let dpre2 = layer_norm_backward(&layer.norm2, &mut grad.norm2, &cache.norm2, dout);
    let mut dact = linear_backward(&layer.ff.down, &mut grad.ff.down, &cache.ff_act, &dpre2);
    for (d, pre) in dact.data.iter_mut().zip(&cache.ff_pre.data) {
        *d *= gelu_grad(*pre);
    }
    let mut dy = linear_backward(&layer.ff.up, &mut grad.ff.up, &cache.ff_in, &dact);
    dy.add_assign(&dpre2);
    let dpre1 = layer_norm_backward(&layer.norm1, &mut grad.norm1, &cache.norm1, &dy);

    let dsum = match (&layer.proj, &layer.space, &cache.space, &cache.x1) {
        (Some(proj), Some(sp), Some(sc), Some(x1)) => {
            let mut dxs = attention_backward(sp, grad.space.as_mut().expect("space grads"), sc, &dpre1, heads);
            dxs.add_assign(&dpre1);
            projection_backward(proj, grad.proj.as_mut().expect("proj grads"), x1, &dxs)
        }
        _ => dpre1,
    };
    let mut dx = attention_backward(&layer.time, &mut grad.time, &cache.time, &dsum, heads);
    dx.add_assign(&dsum);
    dx
}

/// Intermediate activations kept for the reverse pass.
pub struct ForwardCache<S> {
    fusion: FusionCache<S>,
    layers: Vec<LayerCache<S>>,
    last_hidden: Vec<S>,
}

fn window_inputs<S: Scalar>(params: &ModelParams<S>, window: &FeatureWindow) -> Result<(Mat<S>, Mat<S>), ModelError> {
    let c = &params.config;
    if window.text.cols != c.d_text || window.audio.cols != c.d_audio || window.len() != c.window {
        return Err(ModelError::DimensionMismatch(format!(
            "window is {}×({} text, {} audio), model expects {}×({}, {})",
            window.len(),
            window.text.cols,
            window.audio.cols,
            c.window,
            c.d_text,
            c.d_audio
        )));
    }
    Ok((window.text.cast(), window.audio.cast()))
}

/// Predicts the next action feature for `window`.
pub fn forward<S: Scalar>(params: &ModelParams<S>, window: &FeatureWindow) -> Result<Vec<S>, ModelError> {
    Ok(forward_with_cache(params, window)?.0)
}

pub fn forward_with_cache<S: Scalar>(
    params: &ModelParams<S>,
    window: &FeatureWindow,
) -> Result<(Vec<S>, ForwardCache<S>), ModelError> {
    let (text, audio) = window_inputs(params, window)?;
    let (mut x, fusion) = fuse(&params.fusion, &text, &audio);
    if !x.all_finite() {
        return Err(ModelError::NonFinite("fusion".into()));
    }
    positional_encode(&mut x);
    let heads = params.config.heads;
    let mut layers = Vec::with_capacity(params.layers.len());
    for (i, layer) in params.layers.iter().enumerate() {
        let (y, cache) = layer_forward(layer, heads, &x);
        if !y.all_finite() {
            return Err(ModelError::NonFinite(format!("encoder layer {i}")));
        }
        layers.push(cache);
        x = y;
    }
    let last_hidden = x.row(x.rows - 1).to_vec();
    let out = matmul_nt(&Mat::row_vector(last_hidden.clone()), &params.head.w, Some(&params.head.b)).data;
    if out.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite("output head".into()));
    }
    Ok((
        out,
        ForwardCache {
            fusion,
            layers,
            last_hidden,
        },
    ))
}

/// Accumulates into `grad` the parameter gradients for output gradient `dy`.
pub fn backward<S: Scalar>(params: &ModelParams<S>, grad: &mut ModelParams<S>, cache: &ForwardCache<S>, dy: &[S]) {
    let d = params.config.d_model;
    let n = params.config.window;
    let dy = Mat::row_vector(dy.to_vec());
    let hidden = Mat::row_vector(cache.last_hidden.clone());
    let dh = linear_backward(&params.head, &mut grad.head, &hidden, &dy);
    let mut dx = Mat::zeros(n, d);
    dx.row_mut(n - 1).copy_from_slice(dh.row(0));
    let heads = params.config.heads;
    for i in (0..params.layers.len()).rev() {
        dx = layer_backward(&params.layers[i], &mut grad.layers[i], &cache.layers[i], heads, &dx);
    }
    fuse_backward(&params.fusion, &mut grad.fusion, &cache.fusion, &dx);
}

/// `‖ŷ − y‖²` for one sample together with its parameter gradients.
pub fn sample_gradients<S: Scalar>(
    params: &ModelParams<S>,
    window: &FeatureWindow,
    target: &[S],
) -> Result<(S, ModelParams<S>), ModelError> {
    let mut grad = params.zeros_like();
    let loss = accumulate_gradients(params, &mut grad, &[(window, target)])?;
    Ok((loss, grad))
}

/// Mean-squared-error loss over a batch, `(1/B) Σ ‖ŷ − y‖²`, accumulating its
/// parameter gradients into `grad`.
pub fn accumulate_gradients<S: Scalar>(
    params: &ModelParams<S>,
    grad: &mut ModelParams<S>,
    batch: &[(&FeatureWindow, &[S])],
) -> Result<S, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let scale = S::from_f64(1.0 / batch.len() as f64);
    let mut total = S::zero();
    for (window, target) in batch {
        let (pred, cache) = forward_with_cache(params, window)?;
        if pred.len() != target.len() {
            return Err(ModelError::DimensionMismatch(format!(
                "target has {} values, model predicts {}",
                target.len(),
                pred.len()
            )));
        }
        let (loss, dy) = super::loss::mse_loss(&pred, target);
        total += loss * scale;
        let dy: Vec<S> = dy.into_iter().map(|v| v * scale).collect();
        backward(params, grad, &cache, &dy);
    }
    Ok(total)
}
