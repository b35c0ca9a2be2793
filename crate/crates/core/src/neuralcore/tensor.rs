use crate::error::{Error, Result};

/// A multi-channel 1D signal stored channel-major (`values[c * length + t]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor1D {
    channels: usize,
    length: usize,
    values: Vec<f64>,
}

impl Tensor1D {
    pub fn zeros(channels: usize, length: usize) -> Self {
        Self {
            channels,
            length,
            values: vec![0.0; channels * length],
        }
    }

    /// Builds a tensor, rejecting wrong sizes and non-finite entries.
    pub fn from_vec(channels: usize, length: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != channels * length {
            return Err(Error::Shape(format!(
                "{} values for a {channels}x{length} tensor",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor values".into()));
        }
        Ok(Self {
            channels,
            length,
            values,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let length = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != length) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::from_vec(rows.len(), length, rows.concat())
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, c: usize) -> &[f64] {
        &self.values[c * self.length..(c + 1) * self.length]
    }

    pub fn row_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.values[c * self.length..(c + 1) * self.length]
    }

    pub fn get(&self, c: usize, t: usize) -> f64 {
        self.values[c * self.length + t]
    }

    pub fn set(&mut self, c: usize, t: usize, v: f64) {
        self.values[c * self.length + t] = v;
    }

    /// Stacks `self` on top of `other` along the channel axis.
    pub fn concat_channels(&self, other: &Tensor1D) -> Result<Tensor1D> {
        if self.length != other.length {
            return Err(Error::Shape(format!(
                "cannot concatenate lengths {} and {}",
                self.length, other.length
            )));
        }
        let mut values = Vec::with_capacity(self.values.len() + other.values.len());
        values.extend_from_slice(&self.values);
        values.extend_from_slice(&other.values);
        Ok(Tensor1D {
            channels: self.channels + other.channels,
            length: self.length,
            values,
        })
    }

    /// Splits channels `[0, at)` and `[at, channels)` into two tensors.
    pub fn split_channels(&self, at: usize) -> (Tensor1D, Tensor1D) {
        let cut = at * self.length;
        (
            Tensor1D {
                channels: at,
                length: self.length,
                values: self.values[..cut].to_vec(),
            },
            Tensor1D {
                channels: self.channels - at,
                length: self.length,
                values: self.values[cut..].to_vec(),
            },
        )
    }

    /// Zero-extends (or truncates) every channel to `length`.
    pub fn resize_length(&self, length: usize) -> Tensor1D {
        let mut out = Tensor1D::zeros(self.channels, length);
        let keep = length.min(self.length);
        for c in 0..self.channels {
            out.row_mut(c)[..keep].copy_from_slice(&self.row(c)[..keep]);
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
