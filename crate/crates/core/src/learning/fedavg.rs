use super::model::ModelParams;
use crate::{Error, Result};

/// Server update `w - lr * Σ (n_k / n) g_k` with `n = Σ n_k`.
pub fn aggregate<G: AsRef<[f64]>>(
    global: &ModelParams,
    grads: &[G],
    sizes: &[usize],
    lr: f64,
) -> Result<ModelParams> {
    if grads.is_empty() {
        return Err(Error::Empty("gradients"));
    }
    if grads.len() != sizes.len() {
        return Err(Error::LengthMismatch {
            expected: grads.len(),
            found: sizes.len(),
        });
    }
    if sizes.contains(&0) {
        return Err(Error::Empty("client partition"));
    }
    for g in grads {
        if g.as_ref().len() != global.len() {
            return Err(Error::LengthMismatch {
                expected: global.len(),
                found: g.as_ref().len(),
            });
        }
    }
    let total: usize = sizes.iter().sum();
    let mut next = global.clone();
    for (g, &n_k) in grads.iter().zip(sizes) {
        let step = lr * n_k as f64 / total as f64;
        for (w, &x) in next.values.iter_mut().zip(g.as_ref()) {
            *w -= step * x;
        }
    }
    Ok(next)
}
