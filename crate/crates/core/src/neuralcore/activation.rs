use super::tensor::Tensor1D;
use crate::error::{Error, Result};

pub fn relu_forward(x: &Tensor1D) -> Tensor1D {
    let mut y = x.clone();
    for v in y.values_mut() {
        *v = v.max(0.0);
    }
    y
}

/// Gradient through ReLU given the pre-activation input `x`.
pub fn relu_backward(x: &Tensor1D, grad_out: &Tensor1D) -> Result<Tensor1D> {
    if x.values().len() != grad_out.values().len() {
        return Err(Error::Shape("relu gradient size".into()));
    }
    let mut g = grad_out.clone();
    for (gv, &xv) in g.values_mut().iter_mut().zip(x.values()) {
        if xv <= 0.0 {
            *gv = 0.0;
        }
    }
    Ok(g)
}
