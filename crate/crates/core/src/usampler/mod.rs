//! Learnable key-frame sampler: a 1D U-Net over the similarity matrix plus
//! exact sampling without replacement and its REINFORCE gradient.

mod draw;
mod unet;

pub use draw::{
    draw_logprob, greedy_select, logprob_grad, sample_without_replacement, DrawOptions, FrameDraw,
};
pub use unet::{
    forward_tensor, padded_length, reinforce_backward, sampler_backward, sampler_forward,
    FrameScores, SamplerCache, SamplerGrads, SamplerParams, ENCODER_CHANNELS, ENCODER_DILATIONS,
    INPUT_CHANNELS, KERNEL_WIDTH, LENGTH_MULTIPLE,
};

use crate::error::{Error, Result};
use crate::neuralcore::Tensor1D;
use crate::videoqa_env::SimilarityMatrix;

/// Copies the similarity rows into a 4-channel tensor; missing rows stay zero.
pub fn pad_queries(s: &SimilarityMatrix) -> Result<Tensor1D> {
    if s.n_queries() == 0 || s.n_queries() > INPUT_CHANNELS {
        return Err(Error::QueryCount(s.n_queries()));
    }
    let mut t = Tensor1D::zeros(INPUT_CHANNELS, s.n_frames());
    for (j, row) in s.rows().enumerate() {
        t.row_mut(j).copy_from_slice(row);
    }
    Ok(t)
}
