use super::tensor::Tensor1D;
use crate::error::{Error, Result};

/// Output of [`downsample2`] with the winning position of every pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Downsampled {
    pub output: Tensor1D,
    /// Flat input index chosen for each output element.
    pub argmax: Vec<usize>,
    pub input_length: usize,
}

/// Max over non-overlapping pairs. Ties go to the earlier element.
pub fn downsample2(x: &Tensor1D) -> Result<Downsampled> {
    if !x.length().is_multiple_of(2) {
        return Err(Error::Shape(format!(
            "downsample2 needs an even length, got {}",
            x.length()
        )));
    }
    let half = x.length() / 2;
    let mut output = Tensor1D::zeros(x.channels(), half);
    let mut argmax = Vec::with_capacity(x.channels() * half);
    for c in 0..x.channels() {
        let src = x.row(c);
        let base = c * x.length();
        for t in 0..half {
            let (a, b) = (src[2 * t], src[2 * t + 1]);
            let pick = if b > a { 2 * t + 1 } else { 2 * t };
            output.set(c, t, src[pick]);
            argmax.push(base + pick);
        }
    }
    Ok(Downsampled {
        output,
        argmax,
        input_length: x.length(),
    })
}

pub fn downsample2_backward(pooled: &Downsampled, grad_out: &Tensor1D) -> Result<Tensor1D> {
    if grad_out.values().len() != pooled.argmax.len() {
        return Err(Error::Shape("downsample2 gradient size".into()));
    }
    let mut grad = Tensor1D::zeros(grad_out.channels(), pooled.input_length);
    for (&idx, &g) in pooled.argmax.iter().zip(grad_out.values()) {
        grad.values_mut()[idx] += g;
    }
    Ok(grad)
}

/// Nearest-neighbour duplication: `[a, b] -> [a, a, b, b]`.
pub fn upsample2(x: &Tensor1D) -> Tensor1D {
    let mut out = Tensor1D::zeros(x.channels(), 2 * x.length());
    for c in 0..x.channels() {
        let dst = out.row_mut(c);
        for (t, &v) in x.row(c).iter().enumerate() {
            dst[2 * t] = v;
            dst[2 * t + 1] = v;
        }
    }
    out
}

pub fn upsample2_backward(grad_out: &Tensor1D) -> Result<Tensor1D> {
    if !grad_out.length().is_multiple_of(2) {
        return Err(Error::Shape("upsample2 gradient must have even length".into()));
    }
    let mut grad = Tensor1D::zeros(grad_out.channels(), grad_out.length() / 2);
    for c in 0..grad_out.channels() {
        let src = grad_out.row(c);
        for (t, g) in grad.row_mut(c).iter_mut().enumerate() {
            *g = src[2 * t] + src[2 * t + 1];
        }
    }
    Ok(grad)
}
