//! Trajectory alignment over the generalization hierarchy.
//!
//! [`dsa`] aligns two trajectories with a Needleman-Wunsch style table in
//! which a matched pair of points costs the loss of generalizing both to
//! their LCA (per axis) and an unmatched point costs a full suppression on
//! both axes. [`psa`] folds a whole cluster into one trajectory by repeated
//! pairwise alignment, longest member first.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{lca_raw, pair_cost, GridPair, NodeId};
use crate::trajectory::{TrajId, Trajectory};

/// A point generalized to arbitrary nodes of the two axis trees.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GenPoint {
    pub x: NodeId,
    pub y: NodeId,
}

impl GenPoint {
    pub const ROOT: GenPoint = GenPoint {
        x: NodeId::ROOT,
        y: NodeId::ROOT,
    };

    pub fn new(x: NodeId, y: NodeId) -> GenPoint {
        GenPoint { x, y }
    }

    /// True when both axis nodes are ancestors-or-self of `other`'s.
    #[inline]
    pub fn covers(&self, other: &GenPoint) -> bool {
        self.x.covers(other.x) && self.y.covers(other.y)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GenTrajectory {
    pub points: Vec<GenPoint>,
    pub member_ids: BTreeSet<TrajId>,
}

impl GenTrajectory {
    pub fn new(points: Vec<GenPoint>, member_ids: impl IntoIterator<Item = TrajId>) -> Self {
        GenTrajectory {
            points,
            member_ids: member_ids.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn first_member(&self) -> Option<TrajId> {
        self.member_ids.iter().next().copied()
    }
}

impl From<&Trajectory> for GenTrajectory {
    /// Lifts a raw trajectory: each point is its own leaf pair.
    fn from(t: &Trajectory) -> Self {
        GenTrajectory {
            points: t.points.iter().map(|p| GenPoint::new(p.x_leaf, p.y_leaf)).collect(),
            member_ids: BTreeSet::from([t.id]),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentResult {
    /// Minimum total loss in bits.
    pub loss: u64,
    pub merged: GenTrajectory,
}

pub(crate) fn validate_points(points: &[GenPoint], grids: &GridPair, which: &str) -> Result<()> {
    if points.is_empty() {
        return Err(Error::Domain(format!("{which} trajectory is empty")));
    }
    if let Some(p) = points
        .iter()
        .find(|p| !grids.lon.is_valid(p.x) || !grids.lat.is_valid(p.y))
    {
        return Err(Error::Domain(format!(
            "{which} trajectory point ({}, {}) is not on the grid trees",
            p.x, p.y
        )));
    }
    Ok(())
}

#[inline]
fn match_cost(a: &GenPoint, b: &GenPoint) -> u32 {
    pair_cost(a.x, b.x) + pair_cost(a.y, b.y)
}

/// Aligns `p` and `q`, returning the minimal loss and the merged trajectory.
///
/// Matched pairs become their per-axis LCA; a suppressed point becomes
/// `(root, root)` at its position, so every input point stays covered by
/// some merged point in order. Ties prefer a match, then suppressing the
/// `p` point, then suppressing the `q` point.
pub fn dsa(p: &GenTrajectory, q: &GenTrajectory, grids: &GridPair) -> Result<AlignmentResult> {
    validate_points(&p.points, grids, "first")?;
    validate_points(&q.points, grids, "second")?;
    Ok(dsa_unchecked(p, q, grids.suppress_cost()))
}

pub(crate) fn dsa_unchecked(p: &GenTrajectory, q: &GenTrajectory, suppress: u32) -> AlignmentResult {
    let (a, b) = (&p.points, &q.points);
    let (m, n) = (a.len(), b.len());
    let width = n + 1;
    let mut table = vec![0u32; (m + 1) * width];
    for j in 1..=n {
        table[j] = table[j - 1] + suppress;
    }
    for i in 1..=m {
        let row = i * width;
        let prev = row - width;
        table[row] = table[prev] + suppress;
        for j in 1..=n {
            let diag = table[prev + j - 1] + match_cost(&a[i - 1], &b[j - 1]);
            let up = table[prev + j] + suppress;
            let left = table[row + j - 1] + suppress;
            table[row + j] = diag.min(up).min(left);
        }
    }

    let mut merged = Vec::with_capacity(m.max(n));
    let (mut i, mut j) = (m, n);
    while i > 0 || j > 0 {
        let here = table[i * width + j];
        if i > 0 && j > 0 {
            let (pa, qb) = (&a[i - 1], &b[j - 1]);
            if here == table[(i - 1) * width + j - 1] + match_cost(pa, qb) {
                merged.push(GenPoint::new(lca_raw(pa.x, qb.x), lca_raw(pa.y, qb.y)));
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == table[(i - 1) * width + j] + suppress {
            i -= 1;
        } else {
            j -= 1;
        }
        merged.push(GenPoint::ROOT);
    }
    merged.reverse();

    AlignmentResult {
        loss: table[m * width + n] as u64,
        merged: GenTrajectory {
            points: merged,
            member_ids: p.member_ids.union(&q.member_ids).copied().collect(),
        },
    }
}

/// DSA loss between two point sequences without building the merge.
pub fn pairwise_distance(p: &[GenPoint], q: &[GenPoint], grids: &GridPair) -> Result<u64> {
    validate_points(p, grids, "first")?;
    validate_points(q, grids, "second")?;
    Ok(distance_unchecked(p, q, grids.suppress_cost()) as u64)
}

/// Two-row DSA value. Inputs must already be validated.
pub(crate) fn distance_unchecked(p: &[GenPoint], q: &[GenPoint], suppress: u32) -> u32 {
    // Keep the shorter sequence along the rows to minimise the buffer.
    let (a, b) = if p.len() >= q.len() { (p, q) } else { (q, p) };
    let n = b.len();
    let mut prev: Vec<u32> = (0..=n as u32).map(|j| j * suppress).collect();
    let mut cur = vec![0u32; n + 1];
    for pa in a {
        cur[0] = prev[0] + suppress;
        for j in 1..=n {
            let diag = prev[j - 1] + match_cost(pa, &b[j - 1]);
            let up = prev[j] + suppress;
            let left = cur[j - 1] + suppress;
            cur[j] = diag.min(up).min(left);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[n]
}

/// Progressive alignment of a cluster.
///
/// Members are taken longest first (ties broken by smallest member id); each
/// step aligns the running merge with the next member and the merge becomes
/// the new base. Returns the final merge and the summed step losses.
pub fn psa(members: &[&GenTrajectory], grids: &GridPair) -> Result<(GenTrajectory, u64)> {
    if members.is_empty() {
        return Err(Error::Domain("cannot align an empty cluster".into()));
    }
    for m in members {
        validate_points(&m.points, grids, "member")?;
    }
    Ok(psa_unchecked(members, grids.suppress_cost()))
}

pub(crate) fn psa_unchecked(members: &[&GenTrajectory], suppress: u32) -> (GenTrajectory, u64) {
    let mut order: Vec<&GenTrajectory> = members.to_vec();
    order.sort_by(|a, b| {
        b.len()
            .cmp(&a.len())
            .then_with(|| a.first_member().cmp(&b.first_member()))
    });
    let mut base = order[0].clone();
    let mut loss = 0u64;
    for next in &order[1..] {
        let step = dsa_unchecked(&base, next, suppress);
        loss += step.loss;
        base = step.merged;
    }
    (base, loss)
}
