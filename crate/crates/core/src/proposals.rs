//! Change points of a label sequence and the candidate intervals they span.

use serde::Serialize;

use crate::error::{Error, Result};

/// Boundaries `{0, t_1, …, t_M, N}`, strictly increasing, in half-open frame
/// index convention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChangePointSet(Vec<usize>);

impl ChangePointSet {
    pub fn from_boundaries(points: Vec<usize>) -> Result<Self> {
        if points.len() < 2 || points[0] != 0 {
            return Err(Error::Degenerate("change points must start at 0 and hold at least 2 entries"));
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Degenerate("change points must be strictly increasing"));
        }
        Ok(Self(points))
    }

    pub fn points(&self) -> &[usize] {
        &self.0
    }

    /// Number of interior change points.
    pub fn interior_count(&self) -> usize {
        self.0.len() - 2
    }

    pub fn n_frames(&self) -> usize {
        *self.0.last().unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Proposal {
    pub start: usize,
    pub end: usize,
}

impl Proposal {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProposalSet {
    n_frames: usize,
    proposals: Vec<Proposal>,
}

impl ProposalSet {
    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn proposals(&self) -> &[Proposal] {
        &self.proposals
    }

    pub fn len(&self) -> usize {
        self.proposals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.proposals.is_empty()
    }
}

/// A boundary is recorded at `i + 1` wherever `labels[i] != labels[i + 1]`.
pub fn extract_change_points(labels: &[usize]) -> Result<ChangePointSet> {
    if labels.is_empty() {
        return Err(Error::Empty("label sequence"));
    }
    let mut points = vec![0];
    points.extend(
        labels
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[0] != w[1])
            .map(|(i, _)| i + 1),
    );
    points.push(labels.len());
    Ok(ChangePointSet(points))
}

/// Every `(t_i, t_j)` with `i < j`; `(M + 1)(M + 2) / 2` intervals.
pub fn enumerate_proposals(points: &ChangePointSet) -> ProposalSet {
    let t = points.points();
    let mut proposals = Vec::with_capacity(t.len() * (t.len() - 1) / 2);
    for (i, &start) in t.iter().enumerate() {
        for &end in &t[i + 1..] {
            proposals.push(Proposal { start, end });
        }
    }
    ProposalSet {
        n_frames: points.n_frames(),
        proposals,
    }
}
