//! 1D U-Net mapping a (padded) similarity matrix to per-frame scores.
//!
//! Encoder level `l` applies a dilated 3-tap convolution and ReLU, keeps the
//! result as a skip connection, then max-pools by 2. Decoder level `l`
//! nearest-upsamples, concatenates the level-`l` skip, and applies an
//! undilated 3-tap convolution and ReLU. A 1x1 head produces one score per frame.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use crate::error::{Error, Result};
use crate::neuralcore::{
    conv1d_backward, conv1d_forward, downsample2, downsample2_backward, relu_backward,
    relu_forward, upsample2, upsample2_backward, Checkpoint, ConvGrads, ConvLayer, Downsampled,
    Tensor1D,
};
use crate::rng::{domain, stream};
use crate::videoqa_env::SimilarityMatrix;

use super::draw::{logprob_grad, DrawOptions, FrameDraw};
use super::pad_queries;

pub const INPUT_CHANNELS: usize = 4;
pub const ENCODER_CHANNELS: [usize; 4] = [32, 64, 128, 256];
pub const ENCODER_DILATIONS: [usize; 4] = [1, 2, 4, 8];
pub const KERNEL_WIDTH: usize = 3;
/// Frame axis is zero-padded to a multiple of this so four poolings divide evenly.
pub const LENGTH_MULTIPLE: usize = 16;
const HEAD_INIT_GAIN: f64 = 0.1;
const LEVELS: usize = 4;

static NEXT_TAG: AtomicU64 = AtomicU64::new(1);

fn fresh_tag() -> u64 {
    NEXT_TAG.fetch_add(1, Ordering::Relaxed)
}

/// Per-frame logits before the sampling softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameScores {
    pub scores: Vec<f64>,
}

/// Sampler weights. Any mutation re-tags the parameters so forward caches
/// taken before the mutation are rejected by the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerParams {
    encoder: Vec<ConvLayer>,
    decoder: Vec<ConvLayer>,
    head: ConvLayer,
    tag: u64,
}

fn decoder_in_channels(level: usize) -> usize {
    let up = if level == LEVELS - 1 {
        ENCODER_CHANNELS[LEVELS - 1]
    } else {
        ENCODER_CHANNELS[level + 1]
    };
    up + ENCODER_CHANNELS[level]
}

fn encoder_in_channels(level: usize) -> usize {
    if level == 0 {
        INPUT_CHANNELS
    } else {
        ENCODER_CHANNELS[level - 1]
    }
}

pub fn padded_length(n_frames: usize) -> usize {
    n_frames.div_ceil(LENGTH_MULTIPLE).max(1) * LENGTH_MULTIPLE
}

impl SamplerParams {
    fn build(mut make: impl FnMut(usize, usize, usize, usize, f64) -> Result<ConvLayer>) -> Result<Self> {
        let encoder = (0..LEVELS)
            .map(|l| make(encoder_in_channels(l), ENCODER_CHANNELS[l], KERNEL_WIDTH, ENCODER_DILATIONS[l], 1.0))
            .collect::<Result<Vec<_>>>()?;
        let decoder = (0..LEVELS)
            .map(|l| make(decoder_in_channels(l), ENCODER_CHANNELS[l], KERNEL_WIDTH, 1, 1.0))
            .collect::<Result<Vec<_>>>()?;
        let head = make(ENCODER_CHANNELS[0], 1, 1, 1, HEAD_INIT_GAIN)?;
        Ok(Self {
            encoder,
            decoder,
            head,
            tag: fresh_tag(),
        })
    }

    /// Fan-in scaled normal weights, zero biases.
    pub fn init<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::build(|i, o, k, d, gain| ConvLayer::init(i, o, k, d, gain, rng))
            .expect("architecture constants are valid")
    }

    pub fn init_seeded(seed: u64) -> Self {
        Self::init(&mut stream(seed, &[domain::INIT]))
    }

    pub fn zeros() -> Self {
        Self::build(|i, o, k, d, _| ConvLayer::zeros(i, o, k, d)).expect("architecture constants are valid")
    }

    /// Layers in canonical order: `enc0..enc3, dec0..dec3, head`.
    pub fn layers(&self) -> Vec<(String, &ConvLayer)> {
        let mut out: Vec<(String, &ConvLayer)> = Vec::with_capacity(2 * LEVELS + 1);
        out.extend(self.encoder.iter().enumerate().map(|(i, l)| (format!("enc{i}"), l)));
        out.extend(self.decoder.iter().enumerate().map(|(i, l)| (format!("dec{i}"), l)));
        out.push(("head".to_string(), &self.head));
        out
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut ConvLayer> {
        self.tag = fresh_tag();
        self.encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .chain(std::iter::once(&mut self.head))
    }

    pub fn num_params(&self) -> usize {
        self.layers().iter().map(|(_, l)| l.num_params()).sum()
    }

    /// Parameter buffer lengths in the order of [`Self::buffers_mut`].
    pub fn buffer_sizes(&self) -> Vec<usize> {
        self.layers()
            .iter()
            .flat_map(|(_, l)| [l.weights.len(), l.bias.len()])
            .collect()
    }

    /// Mutable weight and bias buffers, for optimizers.
    pub fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.layers()
            .iter()
            .flat_map(|(_, l)| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "{} values for {} parameters",
                values.len(),
                self.num_params()
            )));
        }
        let mut rest = values;
        for layer in self.layers_mut() {
            let (w, tail) = rest.split_at(layer.weights.len());
            layer.weights.copy_from_slice(w);
            let (b, tail) = tail.split_at(layer.bias.len());
            layer.bias.copy_from_slice(b);
            rest = tail;
        }
        Ok(())
    }

    /// Mutable access to one layer by canonical name (`enc0`, `dec3`, `head`, ...).
    pub fn layer_mut(&mut self, name: &str) -> Option<&mut ConvLayer> {
        let names: Vec<String> = self.layers().into_iter().map(|(n, _)| n).collect();
        let pos = names.iter().position(|n| n == name)?;
        self.layers_mut().nth(pos)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new("sampler");
        for (name, l) in self.layers() {
            ck.push(
                format!("{name}.weight"),
                vec![l.out_channels, l.in_channels, l.kernel_width],
                l.weights.clone(),
            );
            ck.push(format!("{name}.bias"), vec![l.out_channels], l.bias.clone());
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != "sampler" {
            return Err(Error::Checkpoint(format!("expected a sampler checkpoint, found {:?}", ck.kind)));
        }
        let mut params = Self::zeros();
        let names: Vec<String> = params.layers().into_iter().map(|(n, _)| n).collect();
        for (name, layer) in names.iter().zip(params.layers_mut()) {
            let w = ck.get(&format!("{name}.weight"))?;
            let b = ck.get(&format!("{name}.bias"))?;
            if w.shape != [layer.out_channels, layer.in_channels, layer.kernel_width]
                || b.shape != [layer.out_channels]
            {
                return Err(Error::Checkpoint(format!("shape mismatch for layer {name}")));
            }
            layer.weights.copy_from_slice(&w.data);
            layer.bias.copy_from_slice(&b.data);
        }
        Ok(params)
    }
}

/// Gradients for every sampler layer, canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerGrads {
    pub layers: Vec<ConvGrads>,
}

impl SamplerGrads {
    pub fn zeros_like(params: &SamplerParams) -> Self {
        Self {
            layers: params.layers().iter().map(|(_, l)| ConvGrads::zeros_like(l)).collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &SamplerGrads, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.add_scaled(b, scale);
        }
    }

    pub fn buffers(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|g| [g.weights.as_slice(), g.bias.as_slice()])
            .collect()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.buffers().concat()
    }

    pub fn is_zero(&self) -> bool {
        self.buffers().iter().all(|b| b.iter().all(|&v| v == 0.0))
    }
}

/// Activations recorded by [`sampler_forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct SamplerCache {
    tag: u64,
    n_frames: usize,
    scores: Vec<f64>,
    enc_in: Vec<Tensor1D>,
    enc_pre: Vec<Tensor1D>,
    pools: Vec<Downsampled>,
    dec_in: Vec<Tensor1D>,
    dec_pre: Vec<Tensor1D>,
    head_in: Tensor1D,
}

impl SamplerCache {
    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Sign of every ReLU input and the winner of every pooling pair. The
    /// network is smooth on any set where this pattern is constant.
    pub fn activation_pattern(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for z in self.enc_pre.iter().chain(&self.dec_pre) {
            out.extend(z.values().iter().map(|&v| usize::from(v > 0.0)));
        }
        for p in &self.pools {
            out.extend_from_slice(&p.argmax);
        }
        out
    }
}

pub fn sampler_forward(params: &SamplerParams, s: &SimilarityMatrix) -> Result<(FrameScores, SamplerCache)> {
    let input = pad_queries(s)?;
    forward_tensor(params, &input)
}

/// Forward pass on an already query-padded `4 x n_frames` tensor.
pub fn forward_tensor(params: &SamplerParams, input: &Tensor1D) -> Result<(FrameScores, SamplerCache)> {
    if input.channels() != INPUT_CHANNELS {
        return Err(Error::Shape(format!("sampler input needs {INPUT_CHANNELS} channels")));
    }
    if !input.all_finite() {
        return Err(Error::NonFinite("sampler input".into()));
    }
    let n_frames = input.length();
    let mut h = input.resize_length(padded_length(n_frames));

    let mut enc_in = Vec::with_capacity(LEVELS);
    let mut enc_pre = Vec::with_capacity(LEVELS);
    let mut skips = Vec::with_capacity(LEVELS);
    let mut pools = Vec::with_capacity(LEVELS);
    for layer in &params.encoder {
        let z = conv1d_forward(layer, &h)?;
        let a = relu_forward(&z);
        let pooled = downsample2(&a)?;
        enc_in.push(std::mem::replace(&mut h, pooled.output.clone()));
        enc_pre.push(z);
        skips.push(a);
        pools.push(pooled);
    }

    let mut dec_in = vec![Tensor1D::zeros(0, 0); LEVELS];
    let mut dec_pre = vec![Tensor1D::zeros(0, 0); LEVELS];
    for level in (0..LEVELS).rev() {
        let joined = upsample2(&h).concat_channels(&skips[level])?;
        let z = conv1d_forward(&params.decoder[level], &joined)?;
        h = relu_forward(&z);
        dec_in[level] = joined;
        dec_pre[level] = z;
    }
    let out = conv1d_forward(&params.head, &h)?;
    let scores = out.row(0)[..n_frames].to_vec();
    let cache = SamplerCache {
        tag: params.tag,
        n_frames,
        scores: scores.clone(),
        enc_in,
        enc_pre,
        pools,
        dec_in,
        dec_pre,
        head_in: h,
    };
    Ok((FrameScores { scores }, cache))
}

/// Backpropagates `d loss / d scores` through the network.
pub fn sampler_backward(
    params: &SamplerParams,
    cache: &SamplerCache,
    grad_scores: &[f64],
) -> Result<SamplerGrads> {
    if cache.tag != params.tag {
        return Err(Error::StaleCache);
    }
    if grad_scores.len() != cache.n_frames {
        return Err(Error::Shape(format!(
            "{} score gradients for {} frames",
            grad_scores.len(),
            cache.n_frames
        )));
    }
    let padded = cache.head_in.length();
    let mut g_out = Tensor1D::zeros(1, padded);
    g_out.row_mut(0)[..cache.n_frames].copy_from_slice(grad_scores);

    let mut enc_grads = vec![None; LEVELS];
    let mut dec_grads = vec![None; LEVELS];
    let (g_head_in, head_grads) = conv1d_backward(&params.head, &cache.head_in, &g_out)?;

    let mut skip_grads: Vec<Option<Tensor1D>> = vec![None; LEVELS];
    let mut g = relu_backward(&cache.dec_pre[0], &g_head_in)?;
    let mut g_bottom = None;
    for level in 0..LEVELS {
        let (g_joined, grads) = conv1d_backward(&params.decoder[level], &cache.dec_in[level], &g)?;
        dec_grads[level] = Some(grads);
        let up_channels = g_joined.channels() - ENCODER_CHANNELS[level];
        let (g_up, g_skip) = g_joined.split_channels(up_channels);
        skip_grads[level] = Some(g_skip);
        let g_prev = upsample2_backward(&g_up)?;
        if level + 1 < LEVELS {
            g = relu_backward(&cache.dec_pre[level + 1], &g_prev)?;
        } else {
            g_bottom = Some(g_prev);
        }
    }

    let mut g_pooled = g_bottom.expect("decoder visits the bottom level");
    for level in (0..LEVELS).rev() {
        let mut g_act = downsample2_backward(&cache.pools[level], &g_pooled)?;
        let skip = skip_grads[level].take().expect("every level has a skip gradient");
        for (a, b) in g_act.values_mut().iter_mut().zip(skip.values()) {
            *a += b;
        }
        let g_pre = relu_backward(&cache.enc_pre[level], &g_act)?;
        let (g_in, grads) = conv1d_backward(&params.encoder[level], &cache.enc_in[level], &g_pre)?;
        enc_grads[level] = Some(grads);
        g_pooled = g_in;
    }

    let layers = enc_grads
        .into_iter()
        .chain(dec_grads)
        .map(|g| g.expect("every layer has a gradient"))
        .chain(std::iter::once(head_grads))
        .collect();
    Ok(SamplerGrads { layers })
}

/// Gradient of `-advantage * total_logprob(draw)` with respect to all sampler weights.
pub fn reinforce_backward(
    params: &SamplerParams,
    cache: &SamplerCache,
    draw: &FrameDraw,
    advantage: f64,
    opts: &DrawOptions,
) -> Result<SamplerGrads> {
    if cache.tag != params.tag {
        return Err(Error::StaleCache);
    }
    if !advantage.is_finite() {
        return Err(Error::NonFinite("advantage".into()));
    }
    if advantage == 0.0 {
        return Ok(SamplerGrads::zeros_like(params));
    }
    let mut g = logprob_grad(&cache.scores, &draw.indices, opts)?;
    for v in &mut g {
        *v *= -advantage;
    }
    sampler_backward(params, cache, &g)
}
