//! Proposal scoring and final interval selection.

use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::proposals::{Proposal, ProposalSet};
use crate::similarity::AdjustedSimilaritySeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoredProposal {
    pub start: usize,
    pub end: usize,
    /// `inside_mean − outside_mean`.
    pub score: f64,
    pub inside_mean: f64,
    /// Zero when the proposal covers the whole video.
    pub outside_mean: f64,
}

impl ScoredProposal {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn proposal(&self) -> Proposal {
        Proposal {
            start: self.start,
            end: self.end,
        }
    }
}

/// Ranking order: higher score, then longer, then earlier start.
pub fn rank_order(a: &ScoredProposal, b: &ScoredProposal) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| b.len().cmp(&a.len()))
        .then_with(|| a.start.cmp(&b.start))
}

/// Prefix sums of `values` with a leading zero.
fn prefix_sums(values: &[f64]) -> Vec<f64> {
    let mut prefix = Vec::with_capacity(values.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &v in values {
        acc += v;
        prefix.push(acc);
    }
    prefix
}

/// Scores every proposal as the mean adjusted similarity inside it minus the
/// mean outside it, in O(1) per proposal.
pub fn score_proposals(
    adjusted: &AdjustedSimilaritySeries,
    proposals: &ProposalSet,
) -> Result<Vec<ScoredProposal>> {
    let n = adjusted.len();
    if n != proposals.n_frames() {
        return Err(Error::DimensionMismatch {
            expected: proposals.n_frames(),
            found: n,
        });
    }
    let prefix = prefix_sums(&adjusted.values);
    let total = prefix[n];
    proposals
        .proposals()
        .iter()
        .map(|p| {
            if p.end > n || p.start >= p.end {
                return Err(Error::OutOfRange {
                    what: "proposal end",
                    index: p.end,
                    limit: n,
                });
            }
            let inside_sum = prefix[p.end] - prefix[p.start];
            let inside_len = p.end - p.start;
            let outside_len = n - inside_len;
            let inside_mean = inside_sum / inside_len as f64;
            let outside_mean = if outside_len == 0 {
                0.0
            } else {
                (prefix[p.start] + (total - prefix[p.end])) / outside_len as f64
            };
            Ok(ScoredProposal {
                start: p.start,
                end: p.end,
                score: inside_mean - outside_mean,
                inside_mean,
                outside_mean,
            })
        })
        .collect()
}

pub fn select_best(scored: &[ScoredProposal]) -> Result<ScoredProposal> {
    scored
        .iter()
        .copied()
        .min_by(rank_order)
        .ok_or(Error::Empty("proposal list"))
}

/// Copy of `scored` sorted best-first.
pub fn rank(scored: &[ScoredProposal]) -> Vec<ScoredProposal> {
    let mut ranked = scored.to_vec();
    ranked.sort_by(rank_order);
    ranked
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MultiQuerySelection {
    /// Index of the query whose proposal won.
    pub query_index: usize,
    pub best: ScoredProposal,
}

/// Scores each query's proposals against that query's adjusted similarities
/// and returns the overall best proposal. Exact ties between queries go to the
/// earlier query.
pub fn select_best_multi_query(
    per_query: &[(ProposalSet, AdjustedSimilaritySeries)],
) -> Result<MultiQuerySelection> {
    let n = per_query
        .first()
        .ok_or(Error::Empty("query list"))?
        .1
        .len();
    let mut winner: Option<MultiQuerySelection> = None;
    for (query_index, (proposals, adjusted)) in per_query.iter().enumerate() {
        if adjusted.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: adjusted.len(),
            });
        }
        let best = select_best(&score_proposals(adjusted, proposals)?)?;
        let replace = match &winner {
            None => true,
            Some(w) => rank_order(&best, &w.best) == Ordering::Less,
        };
        if replace {
            winner = Some(MultiQuerySelection { query_index, best });
        }
    }
    Ok(winner.expect("at least one query"))
}
