//! Temporal coherence clustering.
//!
//! Each frame is assigned by the summed squared distance of its whole
//! temporal neighbourhood (`r` frames, clamped at the edges) to a centroid.
//! For a fixed centroid `μ` that cost splits as
//!
//! ```text
//! Σ_Δ ‖c[i+Δ] − μ‖² = Σ_Δ ‖c[i+Δ] − m_i‖² + r·‖m_i − μ‖²
//! ```
//!
//! where `m_i` is the mean of the neighbourhood. The first term does not
//! depend on the cluster, so both the assignment and the centroid update work
//! on the window means `m_i`. With `r = 1`, `m_i = c[i]` and the procedure is
//! plain Lloyd k-means.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::pooling::{clamp_index, PooledFeatureSequence};

/// Row-major k×D centroid matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Centroids {
    data: Vec<f64>,
    dim: usize,
}

impl Centroids {
    pub fn new(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: data.len(),
            });
        }
        Ok(Self { data, dim })
    }

    pub fn count(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    /// Cluster id per frame, in `[0, centroids.count())`.
    pub labels: Vec<usize>,
    /// Surviving centroids; every one owns at least one frame.
    pub centroids: Centroids,
    /// Objective after the final round.
    pub objective: f64,
    /// Objective after each assignment + update round.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    /// True when labels stopped changing before the iteration cap.
    pub converged: bool,
}

impl ClusterAssignment {
    pub fn num_clusters(&self) -> usize {
        self.centroids.count()
    }
}

/// Labels produced by every assignment step, in original (pre-compaction)
/// centroid ids. Useful for comparing against a reference k-means.
pub type LabelTrajectory = Vec<Vec<usize>>;

/// Squared Euclidean distance, accumulated in eight independent lanes so the
/// loop vectorizes.
#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    const LANES: usize = 8;
    let mut acc = [0f64; LANES];
    let (a_head, a_tail) = a.split_at(a.len() - a.len() % LANES);
    let (b_head, b_tail) = b.split_at(a_head.len());
    for (x, y) in a_head.chunks_exact(LANES).zip(b_head.chunks_exact(LANES)) {
        for l in 0..LANES {
            let d = x[l] - y[l];
            acc[l] += d * d;
        }
    }
    let tail: f64 = a_tail.iter().zip(b_tail).map(|(x, y)| (x - y) * (x - y)).sum();
    acc.iter().sum::<f64>() + tail
}

fn to_f64(pooled: &PooledFeatureSequence) -> Result<Vec<f64>> {
    pooled
        .as_slice()
        .iter()
        .map(|&v| {
            if v.is_finite() {
                Ok(v as f64)
            } else {
                Err(Error::NonFinite("pooled features"))
            }
        })
        .collect()
}

fn check_window(r: usize) -> Result<()> {
    if r == 0 || r % 2 == 0 {
        return Err(Error::config("r", "must be a positive odd integer"));
    }
    Ok(())
}

/// Seeded k-means++ seeding over the rows of `points` (N×D, row-major).
///
/// Returns at most `k` centres; fewer when the remaining points all coincide
/// with an already chosen centre.
pub fn kmeans_plus_plus(points: &[f64], dim: usize, k: usize, seed: u64) -> Centroids {
    let n = points.len() / dim;
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centres: Vec<f64> = Vec::with_capacity(k * dim);
    if n == 0 || k == 0 {
        return Centroids { data: centres, dim };
    }

    let first = rng.gen_range(0..n);
    centres.extend_from_slice(row(first));
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(row(i), row(first))).collect();

    while centres.len() / dim < k {
        let total: f64 = nearest.iter().sum();
        if !(total > 0.0) {
            break;
        }
        let target = rng.gen::<f64>() * total;
        let mut cumulative = 0.0;
        let mut pick = None;
        for (i, &d) in nearest.iter().enumerate() {
            if d <= 0.0 {
                continue;
            }
            cumulative += d;
            pick = Some(i);
            if cumulative > target {
                break;
            }
        }
        let pick = pick.expect("positive total implies a positive distance");
        centres.extend_from_slice(row(pick));
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(row(i), row(pick)));
        }
    }
    Centroids { data: centres, dim }
}

/// Mean of each frame's clamped `r`-neighbourhood.
fn window_means(points: &[f64], n: usize, dim: usize, r: usize) -> Vec<f64> {
    let half = (r / 2) as isize;
    let mut out = vec![0f64; n * dim];
    for (i, out_row) in out.chunks_exact_mut(dim).enumerate() {
        for delta in -half..=half {
            let m = clamp_index(i, delta, n);
            out_row
                .iter_mut()
                .zip(&points[m * dim..(m + 1) * dim])
                .for_each(|(o, &v)| *o += v);
        }
        out_row.iter_mut().for_each(|o| *o /= r as f64);
    }
    out
}

/// Within-window scatter `Σ_i Σ_Δ ‖c[i+Δ] − m_i‖²`, constant across rounds.
fn window_scatter(points: &[f64], means: &[f64], n: usize, dim: usize, r: usize) -> f64 {
    let half = (r / 2) as isize;
    (0..n)
        .map(|i| {
            let m = &means[i * dim..(i + 1) * dim];
            (-half..=half)
                .map(|delta| {
                    let src = clamp_index(i, delta, n);
                    sq_dist(&points[src * dim..(src + 1) * dim], m)
                })
                .sum::<f64>()
        })
        .sum()
}

struct Lloyd<'a> {
    means: &'a [f64],
    n: usize,
    dim: usize,
    centroids: Vec<f64>,
    alive: Vec<bool>,
    /// Lower bounds on the (unsquared) distance from each frame to each
    /// centroid, `n × k`; loosened by centroid drift after every update.
    lower: Vec<f64>,
}

/// Relative slack applied before trusting a lower bound, so rounding in the
/// bounds can never skip a centroid that would actually win or tie.
const BOUND_SLACK: f64 = 1e-9;

impl<'a> Lloyd<'a> {
    fn new(means: &'a [f64], n: usize, dim: usize, centroids: Vec<f64>) -> Self {
        let k = centroids.len() / dim;
        Self {
            means,
            n,
            dim,
            centroids,
            alive: vec![true; k],
            lower: vec![0.0; n * k],
        }
    }

    fn mean_row(&self, i: usize) -> &[f64] {
        &self.means[i * self.dim..(i + 1) * self.dim]
    }

    fn centroid(&self, j: usize) -> &[f64] {
        &self.centroids[j * self.dim..(j + 1) * self.dim]
    }

    /// Nearest live centroid per frame; ties go to the lower id.
    ///
    /// With `previous` labels, centroids whose lower bound already exceeds
    /// the distance to the previous centroid are skipped: they can neither
    /// win nor tie, so the result equals a full scan.
    fn assign(&mut self, previous: Option<&[usize]>) -> Vec<usize> {
        let k = self.alive.len();
        let mut labels = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let m = &self.means[i * self.dim..(i + 1) * self.dim];
            let bounds = &mut self.lower[i * k..(i + 1) * k];
            let current = previous.map(|p| p[i]).filter(|&l| self.alive[l]);
            let mut best = usize::MAX;
            let mut best_d = f64::INFINITY;
            let mut cutoff = f64::INFINITY;
            if let Some(l) = current {
                best_d = sq_dist(m, &self.centroids[l * self.dim..(l + 1) * self.dim]);
                best = l;
                bounds[l] = best_d.sqrt();
                cutoff = bounds[l] * (1.0 + BOUND_SLACK) + f64::MIN_POSITIVE;
            }
            for j in 0..k {
                if !self.alive[j] || Some(j) == current || bounds[j] > cutoff {
                    continue;
                }
                let d = sq_dist(m, &self.centroids[j * self.dim..(j + 1) * self.dim]);
                bounds[j] = d.sqrt();
                if d < best_d || (d == best_d && j < best) || best == usize::MAX {
                    best = j;
                    best_d = d;
                }
            }
            labels.push(best);
        }
        labels
    }

    /// Recomputes centroids from `labels`; clusters left without members die.
    fn update(&mut self, labels: &[usize]) {
        let k = self.alive.len();
        let mut sums = vec![0f64; k * self.dim];
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            sums[l * self.dim..(l + 1) * self.dim]
                .iter_mut()
                .zip(self.mean_row(i))
                .for_each(|(s, &v)| *s += v);
        }
        let mut drift = vec![0f64; k];
        for j in 0..k {
            if counts[j] == 0 {
                self.alive[j] = false;
                continue;
            }
            let c = counts[j] as f64;
            let row = &mut self.centroids[j * self.dim..(j + 1) * self.dim];
            let mut moved = 0.0;
            for (d, slot) in row.iter_mut().enumerate() {
                let next = sums[j * self.dim + d] / c;
                moved += (next - *slot) * (next - *slot);
                *slot = next;
            }
            drift[j] = moved.sqrt() * (1.0 + BOUND_SLACK);
        }
        for bounds in self.lower.chunks_exact_mut(k) {
            bounds
                .iter_mut()
                .zip(&drift)
                .for_each(|(b, &d)| *b = (*b - d).max(0.0));
        }
    }

    fn fit_cost(&self, labels: &[usize]) -> f64 {
        labels
            .iter()
            .enumerate()
            .map(|(i, &l)| sq_dist(self.mean_row(i), self.centroid(l)))
            .sum()
    }
}

/// Clusters pooled features with the temporal coherence objective, seeding
/// with k-means++ from `config.clustering_seed()`.
pub fn temporal_coherence_cluster(
    pooled: &PooledFeatureSequence,
    config: &PipelineConfig,
) -> Result<ClusterAssignment> {
    cluster_traced(pooled, config, None).map(|(a, _)| a)
}

/// Same as [`temporal_coherence_cluster`] but starting from explicit
/// centroids, and also returning the per-round label trajectory.
pub fn cluster_traced(
    pooled: &PooledFeatureSequence,
    config: &PipelineConfig,
    initial: Option<Centroids>,
) -> Result<(ClusterAssignment, LabelTrajectory)> {
    let n = pooled.n_frames();
    let dim = pooled.dim();
    if n == 0 {
        return Err(Error::Empty("pooled feature sequence"));
    }
    let r = config.coherence_window();
    check_window(r)?;
    let points = to_f64(pooled)?;
    let init = match initial {
        Some(c) if c.dim != dim => {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: c.dim,
            })
        }
        Some(c) if c.count() == 0 => return Err(Error::Empty("initial centroids")),
        Some(c) => c,
        None => kmeans_plus_plus(&points, dim, config.num_clusters(), config.clustering_seed()),
    };

    let means = window_means(&points, n, dim, r);
    let scatter = window_scatter(&points, &means, n, dim, r);
    let k = init.count();
    let mut lloyd = Lloyd::new(&means, n, dim, init.data);
    let mut labels = lloyd.assign(None);
    let mut trajectory = vec![labels.clone()];
    let mut history = Vec::new();
    let mut converged = false;
    loop {
        lloyd.update(&labels);
        history.push(scatter + r as f64 * lloyd.fit_cost(&labels));
        if history.len() >= config.clustering_max_iters() {
            break;
        }
        let next = lloyd.assign(Some(&labels));
        if next == labels {
            converged = true;
            break;
        }
        labels = next;
        trajectory.push(labels.clone());
    }

    // Compact surviving ids, preserving their order.
    let mut remap = vec![usize::MAX; k];
    let mut data = Vec::new();
    for j in (0..k).filter(|&j| lloyd.alive[j]) {
        remap[j] = data.len() / dim;
        data.extend_from_slice(lloyd.centroid(j));
    }
    let labels = labels.into_iter().map(|l| remap[l]).collect();

    let objective = *history.last().expect("at least one round");
    Ok((
        ClusterAssignment {
            labels,
            centroids: Centroids { data, dim },
            objective,
            iterations: history.len(),
            objective_history: history,
            converged,
        },
        trajectory,
    ))
}

/// Direct evaluation of the windowed clustering objective
/// `Σ_i Σ_Δ ‖c[clamp(i+Δ)] − μ[l_i]‖²`.
pub fn objective_value(
    pooled: &PooledFeatureSequence,
    labels: &[usize],
    centroids: &Centroids,
    r: usize,
) -> Result<f64> {
    check_window(r)?;
    let n = pooled.n_frames();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: labels.len(),
        });
    }
    if centroids.dim() != pooled.dim() {
        return Err(Error::DimensionMismatch {
            expected: pooled.dim(),
            found: centroids.dim(),
        });
    }
    let half = (r / 2) as isize;
    let mut total = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        if l >= centroids.count() {
            return Err(Error::OutOfRange {
                what: "label",
                index: l,
                limit: centroids.count(),
            });
        }
        let mu = centroids.row(l);
        for delta in -half..=half {
            let row = pooled.row(clamp_index(i, delta, n));
            total += row
                .iter()
                .zip(mu)
                .map(|(&c, &m)| (c as f64 - m) * (c as f64 - m))
                .sum::<f64>();
        }
    }
    Ok(total)
}
