//! Density-based trajectory partitioning.
//!
//! Trajectories are densified with equally spaced auxiliary points, every
//! point of the dataset is clustered with k-means on planar (lon, lat), and
//! each trajectory is cut wherever two neighbouring points fall in different
//! point clusters. Auxiliary points survive only as segment endpoints.

use std::collections::HashMap;
use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridPair;
use crate::trajectory::{BoundingBox, TrajId, TrajPoint, Trajectory};

/// Point-cluster count used when none is given.
pub const DEFAULT_POINT_CLUSTERS: usize = 27;
/// Bounding-box diagonal divided by this gives the default auxiliary spacing.
pub const DEFAULT_SPACING_DIVISOR: f64 = 256.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionConfig {
    /// Auxiliary point spacing in degrees.
    pub d: f64,
    /// Number of point clusters.
    pub m: usize,
    pub kmeans_max_iter: usize,
    pub seed: u64,
}

impl PartitionConfig {
    pub fn for_bbox(bbox: &BoundingBox) -> PartitionConfig {
        PartitionConfig {
            d: bbox.diagonal() / DEFAULT_SPACING_DIVISOR,
            m: DEFAULT_POINT_CLUSTERS,
            kmeans_max_iter: 300,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d.is_finite() && self.d > 0.0) {
            return Err(Error::Config(format!("auxiliary spacing d = {} must be > 0", self.d)));
        }
        if self.m == 0 {
            return Err(Error::Config("point cluster count m must be >= 1".into()));
        }
        if self.kmeans_max_iter == 0 {
            return Err(Error::Config("kmeans_max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

/// Inserts auxiliary points every `d` degrees along each segment, strictly
/// before the segment's far end.
pub fn densify(t: &Trajectory, d: f64, grids: &GridPair) -> Trajectory {
    let mut points = Vec::with_capacity(t.points.len());
    for pair in t.points.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        points.push(a);
        let (dx, dy) = (b.lon - a.lon, b.lat - a.lat);
        let len = dx.hypot(dy);
        let mut k = 1usize;
        while (k as f64) * d < len {
            let frac = (k as f64) * d / len;
            points.push(TrajPoint::auxiliary(a.lon + frac * dx, a.lat + frac * dy, grids));
            k += 1;
        }
    }
    points.extend(t.points.last().copied());
    Trajectory {
        id: t.id,
        user_id: t.user_id.clone(),
        points,
    }
}

/// Cluster label of every point, keyed by trajectory id and point index.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointLabeling {
    labels: HashMap<TrajId, Vec<usize>>,
}

impl PointLabeling {
    pub fn new(labels: HashMap<TrajId, Vec<usize>>) -> PointLabeling {
        PointLabeling { labels }
    }

    pub fn get(&self, traj: TrajId, index: usize) -> Option<usize> {
        self.labels.get(&traj).and_then(|l| l.get(index)).copied()
    }

    pub fn for_trajectory(&self, traj: TrajId) -> Option<&[usize]> {
        self.labels.get(&traj).map(Vec::as_slice)
    }

    /// True when every point of every trajectory has a label.
    pub fn is_total_over(&self, dataset: &[Trajectory]) -> bool {
        dataset
            .iter()
            .all(|t| self.labels.get(&t.id).is_some_and(|l| l.len() == t.points.len()))
    }
}

#[inline]
fn sq_dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (a[0] - b[0], a[1] - b[1]);
    dx * dx + dy * dy
}

fn nearest(p: [f64; 2], centers: &[[f64; 2]]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centers.iter().enumerate() {
        let d = sq_dist(p, *c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// k-means++ seeding: first center uniform, the rest drawn with probability
/// proportional to squared distance to the closest chosen center. Once every
/// point coincides with a center the remaining ones are drawn uniformly.
fn seed_centers(points: &[[f64; 2]], m: usize, rng: &mut impl Rng) -> Vec<[f64; 2]> {
    let mut centers = Vec::with_capacity(m);
    centers.push(points[rng.random_range(0..points.len())]);
    let mut closest: Vec<f64> = points.iter().map(|p| sq_dist(*p, centers[0])).collect();
    while centers.len() < m {
        let next = match WeightedIndex::new(&closest) {
            Ok(w) => points[w.sample(rng)],
            Err(_) => points[rng.random_range(0..points.len())],
        };
        centers.push(next);
        for (c, p) in closest.iter_mut().zip(points) {
            *c = c.min(sq_dist(*p, next));
        }
    }
    centers
}

/// Lloyd's k-means on planar points. Returns one label in `0..m` per point.
///
/// Stops at an assignment fixpoint or after `max_iter` rounds. Ties go to
/// the lowest center index; an emptied cluster keeps its previous center.
pub fn kmeans(points: &[[f64; 2]], m: usize, max_iter: usize, seed: u64) -> Result<Vec<usize>> {
    if m == 0 {
        return Err(Error::Config("k-means needs m >= 1".into()));
    }
    if points.len() < m {
        return Err(Error::Config(format!(
            "{} points cannot form {m} clusters",
            points.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = seed_centers(points, m, &mut rng);
    let mut labels: Vec<usize> = points.par_iter().map(|p| nearest(*p, &centers)).collect();

    for _ in 1..max_iter.max(1) {
        let mut sums = vec![[0.0f64; 2]; m];
        let mut counts = vec![0usize; m];
        for (p, &l) in points.iter().zip(&labels) {
            sums[l][0] += p[0];
            sums[l][1] += p[1];
            counts[l] += 1;
        }
        for ((c, s), &n) in centers.iter_mut().zip(&sums).zip(&counts) {
            if n > 0 {
                *c = [s[0] / n as f64, s[1] / n as f64];
            }
        }
        let next: Vec<usize> = points.par_iter().map(|p| nearest(*p, &centers)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    Ok(labels)
}

/// Clusters every point of the (densified) dataset into `cfg.m` groups.
pub fn label_points(dataset: &[Trajectory], cfg: &PartitionConfig) -> Result<PointLabeling> {
    cfg.validate()?;
    let coords: Vec<[f64; 2]> = dataset
        .iter()
        .flat_map(|t| t.points.iter().map(|p| [p.lon, p.lat]))
        .collect();
    let flat = kmeans(&coords, cfg.m, cfg.kmeans_max_iter, cfg.seed)?;
    let mut labels = HashMap::with_capacity(dataset.len());
    let mut offset = 0;
    for t in dataset {
        labels.insert(t.id, flat[offset..offset + t.points.len()].to_vec());
        offset += t.points.len();
    }
    Ok(PointLabeling { labels })
}

/// Cuts each trajectory between neighbouring points with different labels.
///
/// Inside a segment real points are kept and auxiliary points are dropped
/// unless they are the segment's first or last point. Segments get fresh
/// ids in output order and inherit the source user id. Trajectories without
/// labels are passed through whole.
pub fn segment(dataset: &[Trajectory], labels: &PointLabeling) -> Vec<Trajectory> {
    let mut out = Vec::new();
    for t in dataset {
        let lab = match labels.for_trajectory(t.id) {
            Some(l) if l.len() == t.points.len() => l,
            _ => {
                let mut whole = t.clone();
                whole.points.retain(|p| p.is_real);
                whole.id = out.len() as TrajId;
                if !whole.points.is_empty() {
                    out.push(whole);
                }
                continue;
            }
        };
        let mut start = 0;
        for end in 1..=t.points.len() {
            if end < t.points.len() && lab[end] == lab[end - 1] {
                continue;
            }
            let last = end - 1;
            let points: Vec<TrajPoint> = t.points[start..end]
                .iter()
                .enumerate()
                .filter(|(i, p)| p.is_real || *i == 0 || start + i == last)
                .map(|(_, p)| *p)
                .collect();
            out.push(Trajectory {
                id: out.len() as TrajId,
                user_id: t.user_id.clone(),
                points,
            });
            start = end;
        }
    }
    out
}

/// Everything produced by one partition pass.
#[derive(Clone, Debug)]
pub struct Partitioned {
    pub densified: Vec<Trajectory>,
    pub labels: PointLabeling,
    pub segments: Vec<Trajectory>,
    /// For each segment id, the id of the input trajectory it was cut from.
    pub source_of: Vec<TrajId>,
}

/// Densify, label and segment a dataset.
pub fn partition(dataset: &[Trajectory], cfg: &PartitionConfig, grids: &GridPair) -> Result<Partitioned> {
    cfg.validate()?;
    let densified: Vec<Trajectory> = dataset.par_iter().map(|t| densify(t, cfg.d, grids)).collect();
    let labels = label_points(&densified, cfg)?;
    let mut segments = Vec::new();
    let mut source_of = Vec::new();
    for t in &densified {
        let before = segments.len();
        for mut s in segment(std::slice::from_ref(t), &labels) {
            s.id = segments.len() as TrajId;
            segments.push(s);
        }
        source_of.extend(std::iter::repeat_n(t.id, segments.len() - before));
    }
    Ok(Partitioned {
        densified,
        labels,
        segments,
        source_of,
    })
}

/// Writes `traj_id,seq,lon,lat,is_real,label` for every densified point.
pub fn write_labels_csv<W: Write>(writer: W, densified: &[Trajectory], labels: &PointLabeling) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(["traj_id", "seq", "lon", "lat", "is_real", "label"])?;
    for t in densified {
        for (seq, p) in t.points.iter().enumerate() {
            let label = labels.get(t.id, seq).map(|l| l.to_string()).unwrap_or_default();
            w.write_record([
                t.id.to_string(),
                seq.to_string(),
                p.lon.to_string(),
                p.lat.to_string(),
                if p.is_real { "1" } else { "0" }.to_string(),
                label,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
