use super::tensor::Scalar;

/// `‖ŷ − y‖²` and its gradient `2(ŷ − y)`.
pub fn mse_loss<S: Scalar>(pred: &[S], target: &[S]) -> (S, Vec<S>) {
    let two = S::from_f64(2.0);
    let mut loss = S::zero();
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let e = *p - *t;
            loss += e * e;
            two * e
        })
        .collect();
    (loss, grad)
}

/// Batch loss `(1/B) Σ ‖ŷ_b − y_b‖²` and per-sample gradients `2(ŷ_b − y_b)/B`.
pub fn mse_loss_batch<S: Scalar>(preds: &[Vec<S>], targets: &[Vec<S>]) -> (S, Vec<Vec<S>>) {
    let scale = S::from_f64(1.0 / preds.len().max(1) as f64);
    let mut total = S::zero();
    let grads = preds
        .iter()
        .zip(targets)
        .map(|(p, t)| {
            let (l, mut g) = mse_loss(p, t);
            total += l * scale;
            g.iter_mut().for_each(|v| *v *= scale);
            g
        })
        .collect();
    (total, grads)
}
