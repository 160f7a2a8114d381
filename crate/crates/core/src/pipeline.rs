//! End-to-end grounding of one video against one or more query embeddings.

use serde::Serialize;

use crate::clustering::{temporal_coherence_cluster, ClusterAssignment};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::io::{FeatureSequence, QueryEmbedding};
use crate::metrics::Interval;
use crate::pooling::{temporal_pool, PooledFeatureSequence};
use crate::proposals::{
    enumerate_proposals, extract_change_points, ChangePointSet, Proposal, ProposalSet,
};
use crate::selection::{rank, score_proposals, select_best_multi_query, ScoredProposal};
use crate::similarity::{adjust, raw_similarities, AdjustedSimilaritySeries};

/// Query-independent part of the pipeline: pooled features, clusters and the
/// proposals they induce.
#[derive(Debug, Clone)]
pub struct VideoAnalysis {
    pub pooled: PooledFeatureSequence,
    pub clusters: ClusterAssignment,
    pub change_points: ChangePointSet,
    pub proposals: ProposalSet,
}

#[derive(Debug, Clone, Serialize)]
pub struct GroundingResult {
    pub frames: Proposal,
    pub seconds: Interval,
    pub score: f64,
    /// Which of the supplied queries produced the winning proposal.
    pub query_index: usize,
    pub lambda: Option<f64>,
    pub shift: f64,
    pub fallback: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ranked: Option<Vec<ScoredProposal>>,
}

pub fn analyze_video(features: &FeatureSequence, config: &PipelineConfig) -> Result<VideoAnalysis> {
    let pooled = temporal_pool(features, config)?;
    let clusters = temporal_coherence_cluster(&pooled, config)?;
    let change_points = extract_change_points(&clusters.labels)?;
    let proposals = enumerate_proposals(&change_points);
    Ok(VideoAnalysis {
        pooled,
        clusters,
        change_points,
        proposals,
    })
}

impl VideoAnalysis {
    /// Scores this video's proposals for every query and keeps the best.
    /// With `keep_ranking`, the winning query's full ranked list is retained.
    pub fn ground(
        &self,
        features: &FeatureSequence,
        queries: &[QueryEmbedding],
        config: &PipelineConfig,
        keep_ranking: bool,
    ) -> Result<GroundingResult> {
        if queries.is_empty() {
            return Err(Error::Empty("query list"));
        }
        let per_query: Vec<(ProposalSet, AdjustedSimilaritySeries)> = queries
            .iter()
            .map(|q| {
                let raw = raw_similarities(features, q)?;
                Ok((self.proposals.clone(), adjust(&raw, config)?))
            })
            .collect::<Result<_>>()?;
        let winner = select_best_multi_query(&per_query)?;
        let adjusted = &per_query[winner.query_index].1;
        let ranked = if keep_ranking {
            Some(rank(&score_proposals(adjusted, &self.proposals)?))
        } else {
            None
        };
        let best = winner.best;
        let fps = features.frame_rate() as f64;
        Ok(GroundingResult {
            frames: best.proposal(),
            seconds: Interval::new(best.start as f64 / fps, best.end as f64 / fps)?,
            score: best.score,
            query_index: winner.query_index,
            lambda: adjusted.lambda,
            shift: adjusted.shift,
            fallback: adjusted.fallback,
            ranked,
        })
    }
}

/// Grounds a single query.
pub fn ground(
    features: &FeatureSequence,
    query: &QueryEmbedding,
    config: &PipelineConfig,
) -> Result<GroundingResult> {
    analyze_video(features, config)?.ground(features, std::slice::from_ref(query), config, false)
}
