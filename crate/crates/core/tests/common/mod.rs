//! Seeded synthetic videos shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use tag_core::proposals::Proposal;
use tag_core::{FeatureSequence, QueryEmbedding};

pub fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
}

fn orthogonal_to(rng: &mut ChaCha8Rng, q: &[f64]) -> Vec<f64> {
    let mut v = gaussian_vec(rng, q.len());
    let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
    v.iter_mut().zip(q).for_each(|(a, b)| *a -= dot * b);
    normalize(&mut v);
    v
}

/// Splits `total` into `parts` lengths, each at least `min_len`.
pub fn random_partition(rng: &mut ChaCha8Rng, total: usize, parts: usize, min_len: usize) -> Vec<usize> {
    let spare = total - parts * min_len;
    let mut cuts: Vec<usize> = (0..parts - 1).map(|_| rng.gen_range(0..=spare)).collect();
    cuts.push(0);
    cuts.push(spare);
    cuts.sort_unstable();
    cuts.windows(2).map(|w| w[1] - w[0] + min_len).collect()
}

#[derive(Debug, Clone)]
pub struct PlantedOptions {
    pub n_frames: usize,
    pub dim: usize,
    pub segments: usize,
    pub min_segment: usize,
    /// Query component of background frames.
    pub background_alignment: f64,
    /// Norm of per-frame gaussian noise relative to unit-norm content.
    pub noise: f64,
    /// Background segments whose frames occasionally spike toward the query.
    pub distractors: usize,
    pub spike_probability: f64,
    pub spike_alignment: f64,
}

impl Default for PlantedOptions {
    fn default() -> Self {
        Self {
            n_frames: 240,
            dim: 64,
            segments: 5,
            min_segment: 36,
            background_alignment: 0.3,
            noise: 0.3,
            distractors: 0,
            spike_probability: 0.15,
            spike_alignment: 1.2,
        }
    }
}

pub struct PlantedVideo {
    pub features: FeatureSequence,
    pub query: QueryEmbedding,
    /// Planted segment in frames.
    pub target: Proposal,
    pub frame_rate: f32,
}

/// One video made of constant-content segments; exactly one segment is
/// aligned with the query.
pub fn planted_video(seed: u64, opts: &PlantedOptions) -> PlantedVideo {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = opts.dim;
    let mut q = gaussian_vec(&mut rng, dim);
    normalize(&mut q);

    let lengths = random_partition(&mut rng, opts.n_frames, opts.segments, opts.min_segment);
    let planted = rng.gen_range(0..opts.segments);
    let mut distractor_ids: Vec<usize> = (0..opts.segments).filter(|&s| s != planted).collect();
    for i in (1..distractor_ids.len()).rev() {
        distractor_ids.swap(i, rng.gen_range(0..=i));
    }
    distractor_ids.truncate(opts.distractors);

    let mut rows = Vec::with_capacity(opts.n_frames);
    let mut start = 0;
    let mut target = Proposal { start: 0, end: 0 };
    for (s, &len) in lengths.iter().enumerate() {
        let scene = orthogonal_to(&mut rng, &q);
        let (alignment, scene_weight) = if s == planted {
            target = Proposal {
                start,
                end: start + len,
            };
            (1.0, 0.5)
        } else {
            (opts.background_alignment, 1.0)
        };
        for _ in 0..len {
            let mut a = alignment;
            if distractor_ids.contains(&s) && rng.gen::<f64>() < opts.spike_probability {
                a = opts.spike_alignment;
            }
            let noise = gaussian_vec(&mut rng, dim);
            let scale = opts.noise / (dim as f64).sqrt();
            let mut row: Vec<f64> = (0..dim)
                .map(|d| a * q[d] + scene_weight * scene[d] + scale * noise[d])
                .collect();
            normalize(&mut row);
            rows.push(row.into_iter().map(|v| v as f32).collect::<Vec<f32>>());
        }
        start += len;
    }
    let frame_rate = 1.0;
    PlantedVideo {
        features: FeatureSequence::from_rows(&rows, frame_rate).unwrap(),
        query: QueryEmbedding::new(q.iter().map(|&v| v as f32).collect()).unwrap(),
        target,
        frame_rate,
    }
}

/// Piecewise-constant multichannel signal with additive gaussian noise.
pub struct PiecewiseSignal {
    pub features: FeatureSequence,
    /// Segment boundaries `[0, b1, b2, N]`.
    pub boundaries: Vec<usize>,
}

pub fn piecewise_signal(
    seed: u64,
    n_frames: usize,
    dim: usize,
    segments: usize,
    min_len: usize,
    noise: f64,
) -> PiecewiseSignal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lengths = random_partition(&mut rng, n_frames, segments, min_len);
    let mut rows = Vec::with_capacity(n_frames);
    let mut boundaries = vec![0];
    for len in lengths {
        let level = gaussian_vec(&mut rng, dim);
        for _ in 0..len {
            rows.push(
                level
                    .iter()
                    .map(|&l| { let e: f64 = StandardNormal.sample(&mut rng); (l + noise * e) as f32 })
                    .collect::<Vec<f32>>(),
            );
        }
        boundaries.push(boundaries.last().unwrap() + len);
    }
    PiecewiseSignal {
        features: FeatureSequence::from_rows(&rows, 1.0).unwrap(),
        boundaries,
    }
}

pub fn iou_frames(a: Proposal, b: Proposal) -> f64 {
    let inter = a.end.min(b.end).saturating_sub(a.start.max(b.start)) as f64;
    let union = (a.end - a.start + b.end - b.start) as f64 - inter;
    inter / union
}
