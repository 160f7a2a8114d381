//! Query–frame similarities and the power transforms that de-skew them.
//!
//! The transform parameter is fitted per video by maximising the profile
//! log-likelihood of a normal model for the transformed values:
//!
//! ```text
//! L(λ) = −(N/2)·ln σ²(T_λ(x)) + (λ − 1)·Σ J(x_i)
//! ```
//!
//! with `J(x) = ln x` for Box-Cox and `J(x) = sign(x)·ln(1 + |x|)` for
//! Yeo-Johnson, `σ²` being the population variance.

use crate::config::{LambdaMode, Normalization, PipelineConfig};
use crate::error::{Error, Result};
use crate::io::{FeatureSequence, QueryEmbedding};

pub const LAMBDA_MIN: f64 = -5.0;
pub const LAMBDA_MAX: f64 = 5.0;
pub const LAMBDA_TOLERANCE: f64 = 1e-5;
/// Offset above the minimum used when Box-Cox inputs must be shifted positive.
pub const POSITIVITY_EPSILON: f64 = 1e-6;

const GRID_STEPS: usize = 100;

/// Raw per-frame similarities `f_i · q`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilaritySeries(Vec<f64>);

impl SimilaritySeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("similarity series"));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjustedSimilaritySeries {
    pub values: Vec<f64>,
    pub method: Normalization,
    /// Transform parameter; `None` when no transform was applied.
    pub lambda: Option<f64>,
    /// Amount added to every raw value before the transform.
    pub shift: f64,
    /// Set when automatic fitting was impossible (constant or too-short
    /// series) and the raw values were passed through unchanged.
    pub fallback: bool,
}

impl AdjustedSimilaritySeries {
    /// Untransformed copy of a raw series.
    pub fn identity(s: &SimilaritySeries) -> Self {
        Self {
            values: s.0.clone(),
            method: Normalization::None,
            lambda: None,
            shift: 0.0,
            fallback: false,
        }
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        Ok(Self::identity(&SimilaritySeries::new(values)?))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn raw_similarities(
    features: &FeatureSequence,
    query: &QueryEmbedding,
) -> Result<SimilaritySeries> {
    if features.dim() != query.dim() {
        return Err(Error::DimensionMismatch {
            expected: features.dim(),
            found: query.dim(),
        });
    }
    let q = query.as_slice();
    let values = features
        .rows()
        .map(|row| {
            row.iter()
                .zip(q)
                .map(|(&f, &q)| f as f64 * q as f64)
                .sum::<f64>()
        })
        .collect();
    SimilaritySeries::new(values)
}

/// Box-Cox transform of a positive value. Uses `expm1` so that small `λ`
/// does not lose precision.
pub fn box_cox(x: f64, lambda: f64) -> f64 {
    box_cox_from_log(x.ln(), lambda)
}

#[inline]
fn box_cox_from_log(lx: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        lx
    } else {
        (lambda * lx).exp_m1() / lambda
    }
}

pub fn yeo_johnson(x: f64, lambda: f64) -> f64 {
    if x >= 0.0 {
        let l = x.ln_1p();
        if lambda == 0.0 {
            l
        } else {
            (lambda * l).exp_m1() / lambda
        }
    } else {
        let l = (-x).ln_1p();
        let p = 2.0 - lambda;
        if p == 0.0 {
            -l
        } else {
            -(p * l).exp_m1() / p
        }
    }
}

fn population_variance(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (sum, n) = values.clone().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    let mean = sum / n as f64;
    values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64
}

/// Box-Cox profile log-likelihood; `x` must be strictly positive.
pub fn box_cox_log_likelihood(x: &[f64], lambda: f64) -> f64 {
    let logs: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    box_cox_ll_from_logs(&logs, logs.iter().sum(), lambda)
}

/// Same as [`box_cox_log_likelihood`] given `ln x` and its sum, so a search
/// over `λ` takes each logarithm once.
fn box_cox_ll_from_logs(logs: &[f64], log_jacobian: f64, lambda: f64) -> f64 {
    let n = logs.len() as f64;
    let var = population_variance(logs.iter().map(|&lx| box_cox_from_log(lx, lambda)));
    let ll = -0.5 * n * var.ln() + (lambda - 1.0) * log_jacobian;
    if ll.is_nan() {
        f64::NEG_INFINITY
    } else {
        ll
    }
}

pub fn yeo_johnson_log_likelihood(x: &[f64], lambda: f64) -> f64 {
    let n = x.len() as f64;
    let var = population_variance(x.iter().map(|&v| yeo_johnson(v, lambda)));
    let log_jacobian: f64 = x.iter().map(|&v| v.signum() * v.abs().ln_1p()).sum();
    let ll = -0.5 * n * var.ln() + (lambda - 1.0) * log_jacobian;
    if ll.is_nan() {
        f64::NEG_INFINITY
    } else {
        ll
    }
}

/// Maximises `objective` over `[LAMBDA_MIN, LAMBDA_MAX]`: a coarse grid picks
/// the bracket around the best grid point, then golden-section search narrows
/// it to [`LAMBDA_TOLERANCE`].
pub fn maximize_lambda(objective: impl Fn(f64) -> f64) -> f64 {
    let step = (LAMBDA_MAX - LAMBDA_MIN) / GRID_STEPS as f64;
    let grid = |i: usize| LAMBDA_MIN + step * i as f64;
    let (best_i, best_val) = (0..=GRID_STEPS)
        .map(|i| (i, objective(grid(i))))
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });

    let mut lo = grid(best_i.saturating_sub(1));
    let mut hi = grid((best_i + 1).min(GRID_STEPS));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let mut fa = objective(a);
    let mut fb = objective(b);
    while hi - lo > LAMBDA_TOLERANCE {
        if fa >= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = objective(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = objective(b);
        }
    }
    let mid = 0.5 * (lo + hi);
    let f_mid = objective(mid);
    if f_mid >= best_val {
        mid
    } else {
        grid(best_i)
    }
}

fn check_finite(s: &SimilaritySeries) -> Result<()> {
    if s.0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("similarity series"));
    }
    Ok(())
}

fn needs_fallback(values: &[f64], mode: LambdaMode) -> bool {
    matches!(mode, LambdaMode::AutoMle)
        && (values.len() < 2 || values.iter().all(|&v| v == values[0]))
}

fn fallback(s: &SimilaritySeries, method: Normalization) -> AdjustedSimilaritySeries {
    AdjustedSimilaritySeries {
        method,
        fallback: true,
        ..AdjustedSimilaritySeries::identity(s)
    }
}

/// Shifts the series to strict positivity when needed, fits or takes `λ`, and
/// applies the Box-Cox transform.
pub fn box_cox_adjust(
    s: &SimilaritySeries,
    config: &PipelineConfig,
) -> Result<AdjustedSimilaritySeries> {
    check_finite(s)?;
    if s.is_empty() {
        return Err(Error::Empty("similarity series"));
    }
    let mode = config.lambda_mode();
    if needs_fallback(&s.0, mode) {
        return Ok(fallback(s, Normalization::BoxCox));
    }
    let min = s.0.iter().cloned().fold(f64::INFINITY, f64::min);
    let shift = if min <= 0.0 {
        POSITIVITY_EPSILON - min
    } else {
        0.0
    };
    let x: Vec<f64> = s.0.iter().map(|&v| v + shift).collect();
    let lambda = match mode {
        LambdaMode::Fixed(l) => l,
        LambdaMode::AutoMle => {
            let logs: Vec<f64> = x.iter().map(|v| v.ln()).collect();
            let log_jacobian = logs.iter().sum();
            maximize_lambda(|l| box_cox_ll_from_logs(&logs, log_jacobian, l))
        }
    };
    Ok(AdjustedSimilaritySeries {
        values: x.iter().map(|&v| box_cox(v, lambda)).collect(),
        method: Normalization::BoxCox,
        lambda: Some(lambda),
        shift,
        fallback: false,
    })
}

pub fn yeo_johnson_adjust(
    s: &SimilaritySeries,
    config: &PipelineConfig,
) -> Result<AdjustedSimilaritySeries> {
    check_finite(s)?;
    if s.is_empty() {
        return Err(Error::Empty("similarity series"));
    }
    let mode = config.lambda_mode();
    if needs_fallback(&s.0, mode) {
        return Ok(fallback(s, Normalization::YeoJohnson));
    }
    let lambda = match mode {
        LambdaMode::Fixed(l) => l,
        LambdaMode::AutoMle => maximize_lambda(|l| yeo_johnson_log_likelihood(&s.0, l)),
    };
    Ok(AdjustedSimilaritySeries {
        values: s.0.iter().map(|&v| yeo_johnson(v, lambda)).collect(),
        method: Normalization::YeoJohnson,
        lambda: Some(lambda),
        shift: 0.0,
        fallback: false,
    })
}

/// Applies whichever normalization the config selects.
pub fn adjust(s: &SimilaritySeries, config: &PipelineConfig) -> Result<AdjustedSimilaritySeries> {
    match config.normalization() {
        Normalization::None => {
            check_finite(s)?;
            Ok(AdjustedSimilaritySeries::identity(s))
        }
        Normalization::BoxCox => box_cox_adjust(s, config),
        Normalization::YeoJohnson => yeo_johnson_adjust(s, config),
    }
}

/// Adjusted Fisher-Pearson sample skewness `G1 = g1·√(N(N−1))/(N−2)`.
pub fn skewness(series: &[f64]) -> Result<f64> {
    let n = series.len();
    if n < 3 {
        return Err(Error::Degenerate("skewness needs at least 3 values"));
    }
    let nf = n as f64;
    let mean = series.iter().sum::<f64>() / nf;
    let (m2, m3) = series.iter().fold((0.0, 0.0), |(m2, m3), &v| {
        let d = v - mean;
        (m2 + d * d, m3 + d * d * d)
    });
    let (m2, m3) = (m2 / nf, m3 / nf);
    if !(m2 > 0.0) {
        return Err(Error::Degenerate("skewness of a constant series"));
    }
    let g1 = m3 / m2.powf(1.5);
    Ok(g1 * (nf * (nf - 1.0)).sqrt() / (nf - 2.0))
}
