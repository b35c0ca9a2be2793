use crate::error::{Error, Result};

/// Adam moments for a list of parameter buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    /// Zeroed moments shaped like `shapes` (one length per parameter buffer).
    pub fn new(lr: f64, shapes: &[usize]) -> Self {
        Self {
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }
}

/// One bias-corrected Adam update, applied in place.
pub fn adam_step(params: &mut [&mut [f64]], grads: &[&[f64]], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(Error::Shape(format!(
            "adam: {} parameter buffers, {} gradients, {} moment buffers",
            params.len(),
            grads.len(),
            state.first.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || p.len() != state.first[i].len() {
            return Err(Error::Shape(format!("adam: buffer {i} size mismatch")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first.iter_mut().zip(state.second.iter_mut()))
    {
        for j in 0..p.len() {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}
