//! Sliding-window temporal pooling of frame features.

use crate::config::{PipelineConfig, PoolingKernel};
use crate::error::{Error, Result};
use crate::io::FeatureSequence;

/// Temporally aggregated features; same shape and frame rate as the input.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledFeatureSequence {
    data: Vec<f32>,
    n_frames: usize,
    dim: usize,
    frame_rate: f32,
}

impl PooledFeatureSequence {
    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame_rate(&self) -> f32 {
        self.frame_rate
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Wraps already-pooled rows, e.g. to cluster raw features directly.
    pub fn from_features(seq: &FeatureSequence) -> Self {
        Self {
            data: seq.as_slice().to_vec(),
            n_frames: seq.n_frames(),
            dim: seq.dim(),
            frame_rate: seq.frame_rate(),
        }
    }
}

/// Index of `i + offset` clamped into `[0, n)`.
#[inline]
pub(crate) fn clamp_index(i: usize, offset: isize, n: usize) -> usize {
    (i as isize + offset).clamp(0, n as isize - 1) as usize
}

fn gaussian_weights(window: usize, sigma: f64) -> Vec<f64> {
    let half = (window / 2) as isize;
    let raw: Vec<f64> = (-half..=half)
        .map(|delta| {
            let d = delta as f64;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Averages each frame with its `w - 1` neighbours, replicating the first and
/// last frames at the edges so the output keeps N rows.
///
/// Sums are accumulated in `f64` in ascending window order and rounded to
/// `f32` once per entry.
pub fn temporal_pool(
    features: &FeatureSequence,
    config: &PipelineConfig,
) -> Result<PooledFeatureSequence> {
    let n = features.n_frames();
    let dim = features.dim();
    let window = config.pooling_window();
    if window % 2 == 0 {
        return Err(Error::config("w", "must be odd"));
    }
    if features.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature sequence"));
    }
    let half = (window / 2) as isize;
    let weights = match config.pooling_kernel() {
        PoolingKernel::Uniform => None,
        PoolingKernel::Gaussian { sigma } => Some(gaussian_weights(window, sigma)),
    };

    let mut out = vec![0f32; n * dim];
    let mut acc = vec![0f64; dim];
    for (i, out_row) in out.chunks_exact_mut(dim).enumerate() {
        acc.fill(0.0);
        for (slot, delta) in (-half..=half).enumerate() {
            let src = features.row(clamp_index(i, delta, n));
            match &weights {
                None => acc.iter_mut().zip(src).for_each(|(a, &v)| *a += v as f64),
                Some(w) => {
                    let w = w[slot];
                    acc.iter_mut().zip(src).for_each(|(a, &v)| *a += w * v as f64);
                }
            }
        }
        match &weights {
            None => {
                let w = window as f64;
                out_row.iter_mut().zip(&acc).for_each(|(o, &a)| *o = (a / w) as f32);
            }
            Some(_) => out_row.iter_mut().zip(&acc).for_each(|(o, &a)| *o = a as f32),
        }
    }

    Ok(PooledFeatureSequence {
        data: out,
        n_frames: n,
        dim,
        frame_rate: features.frame_rate(),
    })
}
