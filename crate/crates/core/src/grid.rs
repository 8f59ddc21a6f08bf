//! Per-axis domain generalization hierarchy (DGH).
//!
//! Each coordinate axis is cut into `2^H` equal-width intervals which become
//! the leaves of a full binary tree. Nodes use heap numbering: the root is
//! `1`, the children of `n` are `2n` and `2n + 1`, and the leaves occupy
//! `2^H ..= 2^(H+1) - 1`. `H` counts edges, so a tree with `H = 3` has four
//! layers and eight leaves.
//!
//! Generalizing node `n` to its ancestor `a` costs
//! `log2(LF(a)) - log2(LF(n))` bits, where `LF` is the number of leaves below
//! a node. Under heap numbering that is just `depth(n) - depth(a)`, so every
//! loss here is an integer.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported tree height. Keeps node ids inside a `u32`.
pub const MAX_HEIGHT: u32 = 24;

/// A node of a [`GridTree`], numbered in heap order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(u32);

impl NodeId {
    pub const ROOT: NodeId = NodeId(1);

    /// Wraps a raw heap id. Id `0` is not a node; it is rejected by every
    /// tree operation.
    pub const fn new(id: u32) -> NodeId {
        NodeId(id)
    }

    pub const fn get(self) -> u32 {
        self.0
    }

    /// Edges between this node and the root.
    #[inline]
    pub fn depth(self) -> u32 {
        debug_assert!(self.0 != 0);
        31 - self.0.leading_zeros()
    }

    pub fn parent(self) -> Option<NodeId> {
        (self.0 > 1).then_some(NodeId(self.0 >> 1))
    }

    /// True when `self` lies on the root path of `other` (or equals it).
    #[inline]
    pub fn covers(self, other: NodeId) -> bool {
        let (da, db) = (self.depth(), other.depth());
        da <= db && (other.0 >> (db - da)) == self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Lowest common ancestor under heap numbering. Both ids must be non-zero.
#[inline]
pub(crate) fn lca_raw(a: NodeId, b: NodeId) -> NodeId {
    let (mut a, mut b) = (a.0, b.0);
    let (da, db) = (31 - a.leading_zeros(), 31 - b.leading_zeros());
    if da > db {
        a >>= da - db;
    } else {
        b >>= db - da;
    }
    let diff = a ^ b;
    if diff == 0 {
        NodeId(a)
    } else {
        NodeId(a >> (32 - diff.leading_zeros()))
    }
}

/// Bits lost generalizing `a` and `b` to their LCA. No validity checks.
#[inline]
pub(crate) fn pair_cost(a: NodeId, b: NodeId) -> u32 {
    if a == b {
        return 0;
    }
    let lca = lca_raw(a, b);
    a.depth() + b.depth() - 2 * lca.depth()
}

/// Full binary generalization hierarchy over one coordinate axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridTree {
    axis_min: f64,
    axis_max: f64,
    height: u32,
    leaf_width: f64,
}

impl GridTree {
    pub fn new(axis_min: f64, axis_max: f64, height: u32) -> Result<GridTree> {
        if !(axis_min.is_finite() && axis_max.is_finite()) || axis_max <= axis_min {
            return Err(Error::Config(format!("degenerate axis range [{axis_min}, {axis_max}]")));
        }
        if !(1..=MAX_HEIGHT).contains(&height) {
            return Err(Error::Config(format!("tree height {height} outside 1..={MAX_HEIGHT}")));
        }
        Ok(GridTree {
            axis_min,
            axis_max,
            height,
            leaf_width: (axis_max - axis_min) / (1u64 << height) as f64,
        })
    }

    pub fn axis_min(&self) -> f64 {
        self.axis_min
    }

    pub fn axis_max(&self) -> f64 {
        self.axis_max
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn leaf_width(&self) -> f64 {
        self.leaf_width
    }

    pub fn leaf_count(&self) -> u32 {
        1 << self.height
    }

    /// Largest valid node id, `2^(H+1) - 1`.
    pub fn max_node(&self) -> NodeId {
        NodeId((1 << (self.height + 1)) - 1)
    }

    pub fn root(&self) -> NodeId {
        NodeId::ROOT
    }

    pub fn is_valid(&self, node: NodeId) -> bool {
        node.0 >= 1 && node <= self.max_node()
    }

    pub fn is_leaf(&self, node: NodeId) -> bool {
        self.is_valid(node) && node.0 >= self.leaf_count()
    }

    fn check(&self, node: NodeId) -> Result<()> {
        if self.is_valid(node) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "node {node} not in tree of height {}",
                self.height
            )))
        }
    }

    /// Leaf whose half-open interval holds `value`; `axis_max` itself maps to
    /// the last leaf.
    pub fn leaf_of(&self, value: f64) -> Result<NodeId> {
        if !(value >= self.axis_min && value <= self.axis_max) {
            return Err(Error::OutOfBounds {
                value,
                min: self.axis_min,
                max: self.axis_max,
            });
        }
        Ok(self.leaf_of_clamped(value))
    }

    /// Like [`leaf_of`](Self::leaf_of) but clamps out-of-range values onto the
    /// boundary leaves. Used for interpolated points that may drift past the
    /// range by rounding.
    pub(crate) fn leaf_of_clamped(&self, value: f64) -> NodeId {
        let offset = ((value - self.axis_min) / self.leaf_width).floor();
        let idx = if offset.is_nan() || offset < 0.0 {
            0
        } else {
            (offset as u64).min(self.leaf_count() as u64 - 1) as u32
        };
        NodeId(self.leaf_count() + idx)
    }

    /// Number of leaves owned by `node`: `2^(H - depth)`.
    pub fn lf(&self, node: NodeId) -> Result<u64> {
        self.check(node)?;
        Ok(1u64 << (self.height - node.depth()))
    }

    pub fn lca(&self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a)?;
        self.check(b)?;
        Ok(lca_raw(a, b))
    }

    /// Loss of generalizing `node` to `ancestor`.
    pub fn loss_single(&self, ancestor: NodeId, node: NodeId) -> Result<u32> {
        self.check(ancestor)?;
        self.check(node)?;
        if !ancestor.covers(node) {
            return Err(Error::Domain(format!("node {ancestor} is not an ancestor of {node}")));
        }
        Ok(node.depth() - ancestor.depth())
    }

    /// Loss of suppressing a leaf, i.e. generalizing it to the root.
    pub fn loss_suppress(&self) -> u32 {
        self.height
    }

    /// Loss of generalizing both nodes to their LCA, and that LCA.
    pub fn loss_pair(&self, a: NodeId, b: NodeId) -> Result<(u32, NodeId)> {
        let lca = self.lca(a, b)?;
        Ok((self.loss_single(lca, a)? + self.loss_single(lca, b)?, lca))
    }

    /// Coordinate interval `[lo, hi]` covered by `node`.
    pub fn interval(&self, node: NodeId) -> Result<(f64, f64)> {
        self.check(node)?;
        let depth = node.depth();
        let index = node.0 - (1 << depth);
        let span = 1u32 << (self.height - depth);
        let lo = self.axis_min + (index * span) as f64 * self.leaf_width;
        let hi = if index + 1 == 1 << depth {
            self.axis_max
        } else {
            self.axis_min + ((index + 1) * span) as f64 * self.leaf_width
        };
        Ok((lo, hi))
    }
}

/// The longitude (x) and latitude (y) hierarchies of one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPair {
    pub lon: GridTree,
    pub lat: GridTree,
}

impl GridPair {
    pub fn new(lon: GridTree, lat: GridTree) -> GridPair {
        GridPair { lon, lat }
    }

    /// Cost of suppressing one point on both axes.
    pub fn suppress_cost(&self) -> u32 {
        self.lon.loss_suppress() + self.lat.loss_suppress()
    }

    /// Leaf pair for a coordinate.
    pub fn leaves(&self, lon: f64, lat: f64) -> Result<(NodeId, NodeId)> {
        Ok((self.lon.leaf_of(lon)?, self.lat.leaf_of(lat)?))
    }
}
