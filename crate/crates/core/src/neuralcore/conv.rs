use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::gemm::gemm;
use super::tensor::Tensor1D;
use crate::error::{Error, Result};

/// Same-length dilated 1D convolution with symmetric zero padding.
///
/// Weights are stored `[out][in][tap]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_width: usize,
    pub dilation: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Parameter gradients of one [`ConvLayer`], shaped like the layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvGrads {
    pub fn zeros_like(layer: &ConvLayer) -> Self {
        Self {
            weights: vec![0.0; layer.weights.len()],
            bias: vec![0.0; layer.bias.len()],
        }
    }

    pub fn add_scaled(&mut self, other: &ConvGrads, scale: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += scale * b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += scale * b;
        }
    }
}

impl ConvLayer {
    /// All-zero layer. Fails on an even kernel or zero dilation.
    pub fn zeros(
        in_channels: usize,
        out_channels: usize,
        kernel_width: usize,
        dilation: usize,
    ) -> Result<Self> {
        if kernel_width.is_multiple_of(2) {
            return Err(Error::Config(format!("kernel width {kernel_width} must be odd")));
        }
        if dilation == 0 {
            return Err(Error::Config("dilation must be at least 1".into()));
        }
        Ok(Self {
            in_channels,
            out_channels,
            kernel_width,
            dilation,
            weights: vec![0.0; out_channels * in_channels * kernel_width],
            bias: vec![0.0; out_channels],
        })
    }

    /// Zero-mean normal weights with variance `gain^2 * 2 / fan_in`, zero bias.
    pub fn init<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel_width: usize,
        dilation: usize,
        gain: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layer = Self::zeros(in_channels, out_channels, kernel_width, dilation)?;
        let fan_in = (in_channels * kernel_width) as f64;
        let normal = Normal::new(0.0, gain * (2.0 / fan_in).sqrt())
            .map_err(|e| Error::Config(e.to_string()))?;
        for w in &mut layer.weights {
            *w = normal.sample(rng);
        }
        Ok(layer)
    }

    pub fn weight(&self, o: usize, i: usize, tap: usize) -> f64 {
        self.weights[(o * self.in_channels + i) * self.kernel_width + tap]
    }

    pub fn padding(&self) -> usize {
        self.dilation * (self.kernel_width - 1) / 2
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn check_input(&self, x: &Tensor1D) -> Result<()> {
        if x.channels() != self.in_channels {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, got {}",
                self.in_channels,
                x.channels()
            )));
        }
        Ok(())
    }

    /// Unrolls `x` into a `(in * kernel) x length` column matrix.
    fn im2col(&self, x: &Tensor1D) -> Vec<f64> {
        let len = x.length();
        let pad = self.padding() as isize;
        let mut cols = vec![0.0; self.in_channels * self.kernel_width * len];
        for i in 0..self.in_channels {
            let src = x.row(i);
            for tap in 0..self.kernel_width {
                let shift = (tap * self.dilation) as isize - pad;
                let dst = &mut cols[(i * self.kernel_width + tap) * len..][..len];
                copy_shifted(src, dst, shift);
            }
        }
        cols
    }
}

/// `dst[t] = src[t + shift]` where in range, untouched otherwise.
fn copy_shifted(src: &[f64], dst: &mut [f64], shift: isize) {
    let len = src.len() as isize;
    let lo = (-shift).clamp(0, len);
    let hi = (len - shift).clamp(0, len);
    if lo < hi {
        dst[lo as usize..hi as usize]
            .copy_from_slice(&src[(lo + shift) as usize..(hi + shift) as usize]);
    }
}

/// `dst[t + shift] += src[t]` where in range.
fn add_shifted(src: &[f64], dst: &mut [f64], shift: isize) {
    let len = src.len() as isize;
    let lo = (-shift).clamp(0, len);
    let hi = (len - shift).clamp(0, len);
    for t in lo..hi {
        dst[(t + shift) as usize] += src[t as usize];
    }
}

pub fn conv1d_forward(layer: &ConvLayer, x: &Tensor1D) -> Result<Tensor1D> {
    layer.check_input(x)?;
    let len = x.length();
    let cols = layer.im2col(x);
    let mut out = Tensor1D::zeros(layer.out_channels, len);
    for o in 0..layer.out_channels {
        out.row_mut(o).fill(layer.bias[o]);
    }
    gemm(
        layer.out_channels,
        layer.in_channels * layer.kernel_width,
        len,
        &layer.weights,
        false,
        &cols,
        false,
        1.0,
        out.values_mut(),
    );
    Ok(out)
}

/// Returns `(grad_x, parameter gradients)` for the forward pass on `x`.
pub fn conv1d_backward(
    layer: &ConvLayer,
    x: &Tensor1D,
    grad_out: &Tensor1D,
) -> Result<(Tensor1D, ConvGrads)> {
    layer.check_input(x)?;
    if grad_out.channels() != layer.out_channels || grad_out.length() != x.length() {
        return Err(Error::Shape(format!(
            "grad_out is {}x{}, forward output is {}x{}",
            grad_out.channels(),
            grad_out.length(),
            layer.out_channels,
            x.length()
        )));
    }
    let len = x.length();
    let rows = layer.in_channels * layer.kernel_width;
    let cols = layer.im2col(x);

    let mut grads = ConvGrads::zeros_like(layer);
    for (o, b) in grads.bias.iter_mut().enumerate() {
        *b = grad_out.row(o).iter().sum();
    }
    gemm(
        layer.out_channels,
        len,
        rows,
        grad_out.values(),
        false,
        &cols,
        true,
        0.0,
        &mut grads.weights,
    );

    let mut grad_cols = vec![0.0; rows * len];
    gemm(
        rows,
        layer.out_channels,
        len,
        &layer.weights,
        true,
        grad_out.values(),
        false,
        0.0,
        &mut grad_cols,
    );
    let pad = layer.padding() as isize;
    let mut grad_x = Tensor1D::zeros(layer.in_channels, len);
    for i in 0..layer.in_channels {
        let dst = grad_x.row_mut(i);
        for tap in 0..layer.kernel_width {
            let shift = (tap * layer.dilation) as isize - pad;
            // forward read x[t + shift] into column t, so scatter back the same way
            add_shifted(&grad_cols[(i * layer.kernel_width + tap) * len..][..len], dst, shift);
        }
    }
    Ok((grad_x, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralcore::gradcheck::{grad_check, GradCheckOptions};
    use crate::rng::stream;
    use rand::Rng;

    fn random_tensor(channels: usize, length: usize, rng: &mut impl Rng) -> Tensor1D {
        let v = (0..channels * length).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor1D::from_vec(channels, length, v).unwrap()
    }

    /// Direct evaluation of the defining sum over an explicitly padded input.
    fn naive_conv(layer: &ConvLayer, x: &Tensor1D) -> Vec<f64> {
        let pad = layer.padding();
        let len = x.length();
        let mut padded = vec![vec![0.0; len + 2 * pad]; layer.in_channels];
        for (i, row) in padded.iter_mut().enumerate() {
            for t in 0..len {
                row[t + pad] = x.get(i, t);
            }
        }
        let mut out = vec![0.0; layer.out_channels * len];
        for o in 0..layer.out_channels {
            for t in 0..len {
                let mut acc = layer.bias[o];
                for (i, row) in padded.iter().enumerate() {
                    for k in 0..layer.kernel_width {
                        acc += layer.weight(o, i, k) * row[t + k * layer.dilation];
                    }
                }
                out[o * len + t] = acc;
            }
        }
        out
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let mut layer = ConvLayer::zeros(2, 2, 3, 1).unwrap();
        for c in 0..2 {
            layer.weights[(c * 2 + c) * 3 + 1] = 1.0;
        }
        let x = random_tensor(2, 7, &mut stream(1, &[]));
        assert_eq!(conv1d_forward(&layer, &x).unwrap(), x);
    }

    #[test]
    fn zero_input_gives_bias() {
        let mut layer = ConvLayer::init(3, 2, 3, 2, 1.0, &mut stream(2, &[])).unwrap();
        layer.bias = vec![0.5, -1.5];
        let y = conv1d_forward(&layer, &Tensor1D::zeros(3, 6)).unwrap();
        assert!(y.row(0).iter().all(|&v| v == 0.5));
        assert!(y.row(1).iter().all(|&v| v == -1.5));
    }

    #[test]
    fn matches_naive_reference() {
        let mut rng = stream(3, &[]);
        for &dilation in &[1, 2, 4] {
            let mut layer = ConvLayer::init(2, 3, 3, dilation, 1.0, &mut rng).unwrap();
            layer.bias = vec![0.1, -0.2, 0.3];
            let x = random_tensor(2, 5, &mut rng);
            let fast = conv1d_forward(&layer, &x).unwrap();
            for (a, b) in fast.values().iter().zip(naive_conv(&layer, &x)) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn rejects_channel_mismatch() {
        let layer = ConvLayer::zeros(2, 1, 3, 1).unwrap();
        assert!(matches!(
            conv1d_forward(&layer, &Tensor1D::zeros(3, 4)),
            Err(Error::Shape(_))
        ));
        assert!(ConvLayer::zeros(2, 1, 2, 1).is_err());
        assert!(ConvLayer::zeros(2, 1, 3, 0).is_err());
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let mut rng = stream(4, &[]);
        let layer = ConvLayer::init(2, 3, 3, 2, 1.0, &mut rng).unwrap();
        let x = random_tensor(2, 8, &mut rng);
        let (gx, g) = conv1d_backward(&layer, &x, &Tensor1D::zeros(3, 8)).unwrap();
        assert!(gx.values().iter().all(|&v| v == 0.0));
        assert!(g.weights.iter().chain(&g.bias).all(|&v| v == 0.0));
    }

    #[test]
    fn bias_gradient_is_channel_sum() {
        let mut rng = stream(5, &[]);
        let layer = ConvLayer::init(2, 3, 3, 1, 1.0, &mut rng).unwrap();
        let x = random_tensor(2, 6, &mut rng);
        let go = random_tensor(3, 6, &mut rng);
        let (_, g) = conv1d_backward(&layer, &x, &go).unwrap();
        for o in 0..3 {
            let s: f64 = go.row(o).iter().sum();
            assert!((g.bias[o] - s).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_is_affine_in_input() {
        let mut rng = stream(6, &[]);
        let mut layer = ConvLayer::init(2, 2, 3, 2, 1.0, &mut rng).unwrap();
        layer.bias = vec![0.3, -0.7];
        let x = random_tensor(2, 9, &mut rng);
        let y = random_tensor(2, 9, &mut rng);
        let (alpha, beta) = (0.7, -1.3);
        let combo: Vec<f64> = x
            .values()
            .iter()
            .zip(y.values())
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        let lhs = conv1d_forward(&layer, &Tensor1D::from_vec(2, 9, combo).unwrap()).unwrap();
        let fx = conv1d_forward(&layer, &x).unwrap();
        let fy = conv1d_forward(&layer, &y).unwrap();
        for o in 0..2 {
            let b = layer.bias[o];
            for t in 0..9 {
                let rhs = alpha * (fx.get(o, t) - b) + beta * (fy.get(o, t) - b) + b;
                assert!((lhs.get(o, t) - rhs).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences_on_sum_loss() {
        for seed in 0..20u64 {
            let mut rng = stream(seed, &[77]);
            let dilation = [1, 2, 4, 8][seed as usize % 4];
            let layer = ConvLayer::init(2, 3, 3, dilation, 1.0, &mut rng).unwrap();
            let x = random_tensor(2, 5, &mut rng);
            // weighted sum keeps every gradient coordinate distinct
            let coeff = random_tensor(3, 5, &mut rng);
            let loss = |l: &ConvLayer, x: &Tensor1D| -> f64 {
                let y = conv1d_forward(l, x).unwrap();
                y.values().iter().zip(coeff.values()).map(|(a, b)| a * b).sum()
            };
            let (gx, g) = conv1d_backward(&layer, &x, &coeff).unwrap();
            let opts = GradCheckOptions::default();

            let report = grad_check(
                |w| {
                    let mut l = layer.clone();
                    l.weights.copy_from_slice(w);
                    loss(&l, &x)
                },
                &layer.weights,
                &g.weights,
                &opts,
            )
            .unwrap();
            assert!(report.passed(1e-4), "weights: {report:?}");

            let report = grad_check(
                |b| {
                    let mut l = layer.clone();
                    l.bias.copy_from_slice(b);
                    loss(&l, &x)
                },
                &layer.bias,
                &g.bias,
                &opts,
            )
            .unwrap();
            assert!(report.passed(1e-4), "bias: {report:?}");

            let report = grad_check(
                |v| loss(&layer, &Tensor1D::from_vec(2, 5, v.to_vec()).unwrap()),
                x.values(),
                gx.values(),
                &opts,
            )
            .unwrap();
            assert!(report.passed(1e-4), "input: {report:?}");
        }
    }
}
