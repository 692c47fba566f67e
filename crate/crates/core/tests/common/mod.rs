#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cospeech_core::model::params::{AttentionParams, FusionParams, LayerNormParams, Linear};
use cospeech_core::model::{
    sample_gradients, FeatureWindow, Mat, ModelConfig, ModelParams, Scalar,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Parameters with every tensor random, including biases and layer-norm
/// scales, so no gradient path is trivially zero.
pub fn random_params(config: ModelConfig, seed: u64) -> ModelParams<f64> {
    let mut p = ModelParams::<f64>::init(config, seed).unwrap();
    let mut r = rng(seed ^ 0x5eed);
    p.for_each_mut(|name, m| {
        for v in &mut m.data {
            if name.ends_with("gamma") {
                *v = 1.0 + r.random_range(-0.3..0.3);
            } else if name.ends_with(".b") || name.ends_with("beta") {
                *v = r.random_range(-0.2..0.2);
            } else {
                *v += r.random_range(-0.05..0.05);
            }
        }
    });
    p
}

pub fn random_window(config: &ModelConfig, seed: u64) -> FeatureWindow {
    let mut r = rng(seed);
    let mut w = FeatureWindow::zeros(config.window, config.d_text, config.d_audio);
    for v in w.text.data.iter_mut().chain(w.audio.data.iter_mut()) {
        *v = r.random_range(-1.0f32..1.0);
    }
    w
}

pub fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

// ---- naive reference forward pass ----------------------------------------

type M = Vec<Vec<f64>>;

fn to_m(m: &Mat<f64>) -> M {
    (0..m.rows).map(|r| m.row(r).to_vec()).collect()
}

fn affine(l: &Linear<f64>, x: &[f64]) -> Vec<f64> {
    (0..l.w.rows)
        .map(|o| {
            let mut s = l.b.data[o];
            for i in 0..x.len() {
                s += l.w.get(o, i) * x[i];
            }
            s
        })
        .collect()
}

pub fn naive_attention(p: &AttentionParams<f64>, x: &M, heads: usize) -> M {
    let q: M = x.iter().map(|r| affine(&p.q, r)).collect();
    let k: M = x.iter().map(|r| affine(&p.k, r)).collect();
    let v: M = x.iter().map(|r| affine(&p.v, r)).collect();
    let s = x.len();
    let d = x[0].len();
    let dh = d / heads;
    let mut o = vec![vec![0.0; d]; s];
    for h in 0..heads {
        for i in 0..s {
            let logits: Vec<f64> = (0..s)
                .map(|j| (0..dh).map(|c| q[i][h * dh + c] * k[j][h * dh + c]).sum::<f64>() / (dh as f64).sqrt())
                .collect();
            let m = logits.iter().cloned().fold(f64::MIN, f64::max);
            let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
            let z: f64 = e.iter().sum();
            for j in 0..s {
                for c in 0..dh {
                    o[i][h * dh + c] += e[j] / z * v[j][h * dh + c];
                }
            }
        }
    }
    o.iter().map(|r| affine(&p.o, r)).collect()
}

pub fn naive_layer_norm(p: &LayerNormParams<f64>, x: &M) -> M {
    x.iter()
        .map(|r| {
            let n = r.len() as f64;
            let mean = r.iter().sum::<f64>() / n;
            let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            r.iter()
                .enumerate()
                .map(|(c, v)| p.gamma.data[c] * (v - mean) / (var + 1e-5).sqrt() + p.beta.data[c])
                .collect()
        })
        .collect()
}

fn add(a: &M, b: &M) -> M {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect()).collect()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

pub fn naive_fuse(f: &FusionParams<f64>, t: &[f64], a: &[f64]) -> Vec<f64> {
    match f {
        FusionParams::Gated { text, audio, gate } => {
            let tp = affine(text, t);
            let ap = affine(audio, a);
            let z: Vec<f64> = tp.iter().chain(&ap).copied().collect();
            let g = affine(gate, &z);
            let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
            let h: Vec<f64> = (0..tp.len()).map(|i| sig(g[0]) * tp[i] + sig(g[1]) * ap[i]).collect();
            h.iter().chain(&h).copied().collect()
        }
        FusionParams::Concat { proj } => {
            let z: Vec<f64> = t.iter().chain(a).copied().collect();
            affine(proj, &z)
        }
    }
}

/// Independent, loop-based forward pass used as an oracle.
pub fn naive_forward(p: &ModelParams<f64>, w: &FeatureWindow) -> Vec<f64> {
    let c = &p.config;
    let mut x: M = (0..c.window)
        .map(|r| {
            let t: Vec<f64> = w.text.row(r).iter().map(|v| *v as f64).collect();
            let a: Vec<f64> = w.audio.row(r).iter().map(|v| *v as f64).collect();
            naive_fuse(&p.fusion, &t, &a)
        })
        .collect();
    let d = c.d_model;
    for (pos, row) in x.iter_mut().enumerate() {
        for i in 0..d {
            let angle = pos as f64 / 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            row[i] += if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    for l in &p.layers {
        let x1 = add(&x, &naive_attention(&l.time, &x, c.heads));
        let pre = match (&l.proj, &l.space) {
            (Some(proj), Some(sp)) => {
                let xs: M = x1
                    .iter()
                    .map(|r| (0..d).map(|o| (0..d).map(|i| proj.get(o, i) * r[i]).sum()).collect())
                    .collect();
                add(&xs, &naive_attention(sp, &xs, c.heads))
            }
            _ => x1,
        };
        let y = naive_layer_norm(&l.norm1, &pre);
        let f: M = y
            .iter()
            .map(|r| {
                let h: Vec<f64> = affine(&l.ff.up, r).into_iter().map(gelu).collect();
                affine(&l.ff.down, &h)
            })
            .collect();
        x = naive_layer_norm(&l.norm2, &add(&y, &f));
    }
    affine(&p.head, x.last().unwrap())
}

pub fn as_m(m: &Mat<f64>) -> M {
    to_m(m)
}

// ---- finite-difference gradient check --------------------------------------

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn loss(p: &ModelParams<f64>, w: &FeatureWindow, target: &[f64]) -> f64 {
    cospeech_core::model::forward(p, w)
        .unwrap()
        .iter()
        .zip(target)
        .map(|(a, b)| (a - b).powi(2))
        .sum()
}

/// Max relative error per tensor between analytic and central-difference
/// gradients (step `h`), checking every element.
pub fn gradient_check(config: ModelConfig, seed: u64, h: f64) -> Vec<(String, f64)> {
    let params = random_params(config, seed);
    let window = random_window(&config, seed + 1);
    let target = random_vec(config.action_dim, seed + 2);
    let (_, grads) = sample_gradients(&params, &window, &target).unwrap();
    let mut analytic = Vec::new();
    grads.for_each(|name, m| analytic.push((name.to_string(), m.data.clone())));

    let mut probe = params.clone();
    let mut out = Vec::new();
    for (t, (name, g)) in analytic.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for i in 0..g.len() {
            let orig = element(&mut probe, t, i, None);
            element(&mut probe, t, i, Some(orig + h));
            let up = loss(&probe, &window, &target);
            element(&mut probe, t, i, Some(orig - h));
            let down = loss(&probe, &window, &target);
            element(&mut probe, t, i, Some(orig));
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(relative_error(g[i], numeric));
        }
        out.push((name.clone(), worst));
    }
    out
}

fn element(p: &mut ModelParams<f64>, tensor: usize, index: usize, set: Option<f64>) -> f64 {
    let mut k = 0;
    let mut old = 0.0;
    p.for_each_mut(|_, m| {
        if k == tensor {
            old = m.data[index];
            if let Some(v) = set {
                m.data[index] = v;
            }
        }
        k += 1;
    });
    old
}

pub fn max_abs_diff<S: Scalar>(a: &[S], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x.as_f64() - y).abs()).fold(0.0, f64::max)
}
