//! Pipeline configuration.
//!
//! A single [`PipelineConfig`] drives every stage. It is loaded from a TOML
//! document whose keys mirror the CLI flags (`w`, `k`, `r`, `pooling_kernel`,
//! `sigma`, `max_iters`, `seed`, `normalization`, `lambda`). Any key left out
//! takes the published default: `w = 21`, `k = 9`, `r = 7`, Box-Cox with an
//! automatically fitted lambda.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_POOLING_WINDOW: usize = 21;
pub const DEFAULT_NUM_CLUSTERS: usize = 9;
pub const DEFAULT_COHERENCE_WINDOW: usize = 7;
pub const DEFAULT_MAX_ITERS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PoolingKernel {
    Uniform,
    Gaussian { sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    None,
    #[serde(alias = "box_cox")]
    BoxCox,
    #[serde(alias = "yeo_johnson")]
    YeoJohnson,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaMode {
    AutoMle,
    Fixed(f64),
}

/// Validated, immutable settings for one grounding run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pooling_window: usize,
    pooling_kernel: PoolingKernel,
    num_clusters: usize,
    coherence_window: usize,
    clustering_max_iters: usize,
    clustering_seed: u64,
    normalization: Normalization,
    lambda_mode: LambdaMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            pooling_window: DEFAULT_POOLING_WINDOW,
            pooling_kernel: PoolingKernel::Uniform,
            num_clusters: DEFAULT_NUM_CLUSTERS,
            coherence_window: DEFAULT_COHERENCE_WINDOW,
            clustering_max_iters: DEFAULT_MAX_ITERS,
            clustering_seed: 0,
            normalization: Normalization::BoxCox,
            lambda_mode: LambdaMode::AutoMle,
        }
    }
}

impl PipelineConfig {
    pub fn builder() -> ConfigDocument {
        ConfigDocument::default()
    }

    pub fn pooling_window(&self) -> usize {
        self.pooling_window
    }

    pub fn pooling_kernel(&self) -> PoolingKernel {
        self.pooling_kernel
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    pub fn coherence_window(&self) -> usize {
        self.coherence_window
    }

    pub fn clustering_max_iters(&self) -> usize {
        self.clustering_max_iters
    }

    pub fn clustering_seed(&self) -> u64 {
        self.clustering_seed
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn lambda_mode(&self) -> LambdaMode {
        self.lambda_mode
    }

    /// Document form of this config, with every field present.
    pub fn to_document(&self) -> ConfigDocument {
        let (kernel, sigma) = match self.pooling_kernel {
            PoolingKernel::Uniform => (KernelName::Uniform, None),
            PoolingKernel::Gaussian { sigma } => (KernelName::Gaussian, Some(sigma)),
        };
        ConfigDocument {
            w: Some(self.pooling_window),
            pooling_kernel: Some(kernel),
            sigma,
            k: Some(self.num_clusters),
            r: Some(self.coherence_window),
            max_iters: Some(self.clustering_max_iters),
            seed: Some(self.clustering_seed),
            normalization: Some(self.normalization),
            lambda: match self.lambda_mode {
                LambdaMode::AutoMle => None,
                LambdaMode::Fixed(l) => Some(l),
            },
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_document()).expect("config document always serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelName {
    Uniform,
    Gaussian,
}

/// Unvalidated, partially specified configuration as written in a file or
/// collected from command-line flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", alias = "pooling-kernel")]
    pub pooling_kernel: Option<KernelName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", alias = "max-iters")]
    pub max_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", with = "seed_repr", default)]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalization: Option<Normalization>,
    /// Fixed transform lambda; absent means fit by maximum likelihood.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

impl ConfigDocument {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::ConfigParse(e.message().to_string()))
    }

    /// Fields set in `other` replace the ones in `self`.
    pub fn overlay(mut self, other: &ConfigDocument) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(w, pooling_kernel, sigma, k, r, max_iters, seed, normalization, lambda);
        self
    }

    pub fn w(mut self, w: usize) -> Self {
        self.w = Some(w);
        self
    }

    pub fn k(mut self, k: usize) -> Self {
        self.k = Some(k);
        self
    }

    pub fn r(mut self, r: usize) -> Self {
        self.r = Some(r);
        self
    }

    pub fn gaussian(mut self, sigma: f64) -> Self {
        self.pooling_kernel = Some(KernelName::Gaussian);
        self.sigma = Some(sigma);
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn max_iters(mut self, n: usize) -> Self {
        self.max_iters = Some(n);
        self
    }

    pub fn normalization(mut self, n: Normalization) -> Self {
        self.normalization = Some(n);
        self
    }

    pub fn lambda(mut self, lambda: f64) -> Self {
        self.lambda = Some(lambda);
        self
    }

    pub fn build(&self) -> Result<PipelineConfig> {
        let d = PipelineConfig::default();

        let w = self.w.unwrap_or(d.pooling_window);
        check_odd_window("w", w)?;
        let r = self.r.unwrap_or(d.coherence_window);
        check_odd_window("r", r)?;
        let k = self.k.unwrap_or(d.num_clusters);
        if k == 0 {
            return Err(Error::config("k", "must be at least 1"));
        }
        let max_iters = self.max_iters.unwrap_or(d.clustering_max_iters);
        if max_iters == 0 {
            return Err(Error::config("max_iters", "must be at least 1"));
        }

        let pooling_kernel = match self.pooling_kernel.unwrap_or(KernelName::Uniform) {
            KernelName::Uniform => PoolingKernel::Uniform,
            KernelName::Gaussian => {
                let sigma = self
                    .sigma
                    .ok_or_else(|| Error::config("sigma", "is required for the gaussian kernel"))?;
                if !(sigma.is_finite() && sigma > 0.0) {
                    return Err(Error::config("sigma", "must be positive and finite"));
                }
                PoolingKernel::Gaussian { sigma }
            }
        };

        let lambda_mode = match self.lambda {
            None => LambdaMode::AutoMle,
            Some(l) if l.is_finite() => LambdaMode::Fixed(l),
            Some(_) => return Err(Error::config("lambda", "must be finite")),
        };

        Ok(PipelineConfig {
            pooling_window: w,
            pooling_kernel,
            num_clusters: k,
            coherence_window: r,
            clustering_max_iters: max_iters,
            clustering_seed: self.seed.unwrap_or(d.clustering_seed),
            normalization: self.normalization.unwrap_or(d.normalization),
            lambda_mode,
        })
    }
}

/// TOML integers are signed 64-bit; seeds above `i64::MAX` are written as
/// decimal strings.
mod seed_repr {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(seed: &Option<u64>, s: S) -> Result<S::Ok, S::Error> {
        match seed {
            Some(v) if *v <= i64::MAX as u64 => s.serialize_i64(*v as i64),
            Some(v) => s.serialize_str(&v.to_string()),
            None => s.serialize_none(),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(i64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u64>, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Int(v) => u64::try_from(v)
                .map(Some)
                .map_err(|_| de::Error::custom("seed must be non-negative")),
            Repr::Text(t) => t
                .parse()
                .map(Some)
                .map_err(|_| de::Error::custom(format!("invalid seed {t:?}"))),
        }
    }
}

fn check_odd_window(field: &'static str, value: usize) -> Result<()> {
    if value == 0 {
        Err(Error::config(field, "must be at least 1"))
    } else if value % 2 == 0 {
        Err(Error::config(field, "must be odd"))
    } else {
        Ok(())
    }
}

/// Parses and validates a TOML config document.
pub fn load_config(source: &str) -> Result<PipelineConfig> {
    ConfigDocument::parse(source)?.build()
}
