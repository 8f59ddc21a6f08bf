//! Clustering trajectories into groups of at least `k` and publishing them.
//!
//! Two algorithms are provided, both using the DSA alignment loss as the
//! distance between trajectories:
//!
//! * [`adaptive_dbscan`]: repeated density clustering with `minPts = k` and a
//!   growing radius; leftover noise is recycled into the next round.
//! * [`iterative_kmeans`]: k'-means whose centers are PSA merges; clusters
//!   below `k` are dissolved and re-clustered.
//!
//! Trajectories are addressed by their position in the input slice.

use std::collections::{BTreeSet, VecDeque};
use std::io::Write;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::{distance_unchecked, psa_unchecked, validate_points, GenPoint, GenTrajectory};
use crate::error::{Error, Result};
use crate::grid::GridPair;
use crate::trajectory::TrajId;

/// Upper bound on k'-means rounds before the assignment is accepted as is.
pub const KMEANS_MAX_ROUNDS: usize = 50;

/// Upper bound on the quantile used by the radius schedule.
const MAX_RADIUS_QUANTILE: f64 = 0.9;

/// Dense symmetric matrix of pairwise DSA losses.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<u32>,
}

impl DistanceMatrix {
    /// Computes all pairs in parallel. Needs at least two trajectories.
    pub fn build(trajs: &[GenTrajectory], grids: &GridPair) -> Result<DistanceMatrix> {
        if trajs.len() < 2 {
            return Err(Error::Domain(format!(
                "distance matrix needs >= 2 trajectories, got {}",
                trajs.len()
            )));
        }
        for t in trajs {
            validate_points(&t.points, grids, "input")?;
        }
        let n = trajs.len();
        let suppress = grids.suppress_cost();
        let rows: Vec<Vec<u32>> = (0..n)
            .into_par_iter()
            .map(|i| {
                ((i + 1)..n)
                    .map(|j| distance_unchecked(&trajs[i].points, &trajs[j].points, suppress))
                    .collect()
            })
            .collect();
        let mut data = vec![0u32; n * n];
        for (i, row) in rows.into_iter().enumerate() {
            for (off, d) in row.into_iter().enumerate() {
                let j = i + 1 + off;
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        Ok(DistanceMatrix { n, data })
    }

    /// Builds a matrix from a function over unordered pairs `i < j`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> u32) -> DistanceMatrix {
        let mut data = vec![0u32; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = f(i, j);
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        DistanceMatrix { n, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.data[i * self.n + j]
    }

    pub fn max(&self) -> u32 {
        self.data.iter().copied().max().unwrap_or(0)
    }

    /// Nearest-rank quantile of the distances among `members` (off-diagonal).
    pub fn quantile_among(&self, members: &[usize], q: f64) -> Option<u32> {
        let mut ds = Vec::with_capacity(members.len() * members.len().saturating_sub(1) / 2);
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                ds.push(self.get(i, j));
            }
        }
        if ds.is_empty() {
            return None;
        }
        let rank = ((q.clamp(0.0, 1.0) * ds.len() as f64).ceil() as usize).clamp(1, ds.len());
        Some(*ds.select_nth_unstable(rank - 1).1)
    }
}

/// Result of one density clustering pass.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DbscanOutcome {
    pub clusters: Vec<Vec<usize>>,
    pub noise: Vec<usize>,
}

/// Classic DBSCAN over the subset `members` of a precomputed matrix.
///
/// A trajectory is a core when at least `min_pts` members (itself included)
/// lie strictly closer than `epsilon`. Clusters are grown from cores in
/// ascending index order; a border trajectory joins the first cluster that
/// reaches it. Member lists come back sorted.
pub fn dbscan_core(members: &[usize], dist: &DistanceMatrix, epsilon: f64, min_pts: usize) -> DbscanOutcome {
    let mut order: Vec<usize> = members.to_vec();
    order.sort_unstable();
    order.dedup();
    let m = order.len();

    let neighbours = |a: usize| -> Vec<usize> {
        (0..m)
            .filter(|&b| (dist.get(order[a], order[b]) as f64) < epsilon)
            .collect()
    };

    const UNSEEN: usize = usize::MAX;
    const NOISE: usize = usize::MAX - 1;
    let mut label = vec![UNSEEN; m];
    let mut clusters: Vec<Vec<usize>> = Vec::new();

    for seed in 0..m {
        if label[seed] != UNSEEN {
            continue;
        }
        let nb = neighbours(seed);
        if nb.len() < min_pts {
            label[seed] = NOISE;
            continue;
        }
        let cid = clusters.len();
        label[seed] = cid;
        let mut members = vec![seed];
        let mut queue: VecDeque<usize> = nb.into_iter().collect();
        while let Some(p) = queue.pop_front() {
            match label[p] {
                NOISE => {
                    label[p] = cid;
                    members.push(p);
                }
                UNSEEN => {
                    label[p] = cid;
                    members.push(p);
                    let nb = neighbours(p);
                    if nb.len() >= min_pts {
                        queue.extend(nb.into_iter().filter(|&q| label[q] == UNSEEN || label[q] == NOISE));
                    }
                }
                _ => {}
            }
        }
        let mut ids: Vec<usize> = members.into_iter().map(|i| order[i]).collect();
        ids.sort_unstable();
        clusters.push(ids);
    }

    let noise = (0..m).filter(|&i| label[i] == NOISE).map(|i| order[i]).collect();
    DbscanOutcome { clusters, noise }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DbscanConfig {
    /// Anonymity parameter, also used as `minPts`.
    pub k: usize,
    pub epsilon0: f64,
    /// Largest radius the schedule may reach.
    pub top_epsilon: f64,
    /// Quantile increment per round of the radius schedule.
    pub quantile_step: f64,
}

impl DbscanConfig {
    /// Config whose radius cap is the largest distance in `dist` (or
    /// `epsilon0`, if that is larger).
    pub fn for_matrix(k: usize, epsilon0: f64, dist: &DistanceMatrix) -> DbscanConfig {
        DbscanConfig {
            k,
            epsilon0,
            top_epsilon: (dist.max() as f64).max(epsilon0),
            quantile_step: 0.25,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!("k = {} must be >= 2", self.k)));
        }
        if !(self.epsilon0 > 0.0 && self.epsilon0 <= self.top_epsilon) {
            return Err(Error::Config(format!(
                "need 0 < epsilon0 ({}) <= top_epsilon ({})",
                self.epsilon0, self.top_epsilon
            )));
        }
        if !(self.quantile_step > 0.0 && self.quantile_step <= 1.0) {
            return Err(Error::Config(format!(
                "quantile_step {} outside (0, 1]",
                self.quantile_step
            )));
        }
        Ok(())
    }
}

/// Clusters plus the radius used in each DBSCAN round.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveOutcome {
    pub clusters: Vec<Vec<usize>>,
    pub epsilons: Vec<f64>,
}

/// Adds a leftover group that is too small to publish to the existing
/// cluster with the smallest mean distance to it.
fn absorb_leftovers(clusters: &mut [Vec<usize>], leftovers: Vec<usize>, dist: impl Fn(usize, usize) -> u64) {
    let best = clusters
        .iter()
        .enumerate()
        .map(|(ci, c)| {
            let total: u64 = leftovers
                .iter()
                .flat_map(|&a| c.iter().map(move |&b| (a, b)))
                .map(|(a, b)| dist(a, b))
                .sum();
            // Compare means without floating point: total / |c|.
            (ci, total, c.len() as u64)
        })
        .min_by(|a, b| (a.1 * b.2).cmp(&(b.1 * a.2)).then(a.0.cmp(&b.0)))
        .map(|(ci, _, _)| ci)
        .expect("absorb_leftovers needs at least one cluster");
    clusters[best].extend(leftovers);
    clusters[best].sort_unstable();
}

/// Adaptive DBSCAN over all `dist.len()` trajectories.
///
/// Each round clusters the remaining trajectories with the current radius
/// and publishes clusters of at least `k`; everything else is carried over.
/// With fewer than `2k` left, or once the radius has reached its cap, the
/// remainder becomes one last cluster. A remainder smaller than `k` is
/// absorbed into the nearest published cluster instead.
pub fn adaptive_dbscan(dist: &DistanceMatrix, cfg: &DbscanConfig) -> Result<AdaptiveOutcome> {
    cfg.validate()?;
    let n = dist.len();
    if n < cfg.k {
        return Err(Error::Infeasible { k: cfg.k, available: n });
    }

    let mut remaining: Vec<usize> = (0..n).collect();
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut epsilons = Vec::new();
    let mut epsilon = cfg.epsilon0.min(cfg.top_epsilon);
    let mut round = 0usize;

    loop {
        epsilons.push(epsilon);
        let pass = dbscan_core(&remaining, dist, epsilon, cfg.k);
        let mut carried = pass.noise;
        for c in pass.clusters {
            if c.len() >= cfg.k {
                out.push(c);
            } else {
                carried.extend(c);
            }
        }
        carried.sort_unstable();
        remaining = carried;
        round += 1;

        if remaining.len() < 2 * cfg.k || epsilon >= cfg.top_epsilon {
            break;
        }
        let q = (cfg.quantile_step * round as f64).min(MAX_RADIUS_QUANTILE);
        let from_quantile = dist.quantile_among(&remaining, q).unwrap_or(0) as f64;
        epsilon = (epsilon * 2.0).max(from_quantile).min(cfg.top_epsilon);
    }

    if !remaining.is_empty() {
        if remaining.len() >= cfg.k || out.is_empty() {
            out.push(remaining);
        } else {
            absorb_leftovers(&mut out, remaining, |a, b| dist.get(a, b) as u64);
        }
    }
    Ok(AdaptiveOutcome {
        clusters: out,
        epsilons,
    })
}

fn nearest_center(t: &GenTrajectory, centers: &[GenTrajectory], suppress: u32) -> usize {
    let mut best = 0;
    let mut best_d = u32::MAX;
    for (ci, c) in centers.iter().enumerate() {
        let d = distance_unchecked(&t.points, &c.points, suppress);
        if d < best_d {
            best_d = d;
            best = ci;
        }
    }
    best
}

/// One k'-means run over `pool` with `n_clusters` seeded centers.
fn kmeans_round(
    trajs: &[GenTrajectory],
    pool: &[usize],
    n_clusters: usize,
    suppress: u32,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    let n_clusters = n_clusters.clamp(1, pool.len());
    let mut centers: Vec<GenTrajectory> = index::sample(rng, pool.len(), n_clusters)
        .into_iter()
        .map(|i| trajs[pool[i]].clone())
        .collect();
    let mut previous: Option<Vec<Vec<usize>>> = None;

    for _ in 0..KMEANS_MAX_ROUNDS {
        let assignment: Vec<usize> = pool
            .par_iter()
            .map(|&t| nearest_center(&trajs[t], &centers, suppress))
            .collect();
        let mut groups = vec![Vec::new(); centers.len()];
        for (&t, &c) in pool.iter().zip(&assignment) {
            groups[c].push(t);
        }
        // Centers that attracted nobody are dropped.
        groups.retain(|g| !g.is_empty());
        if previous.as_ref() == Some(&groups) {
            break;
        }
        centers = groups
            .par_iter()
            .map(|g| {
                let members: Vec<&GenTrajectory> = g.iter().map(|&i| &trajs[i]).collect();
                psa_unchecked(&members, suppress).0
            })
            .collect();
        previous = Some(groups);
    }
    previous.unwrap_or_default()
}

/// Iterative k'-means with PSA centers.
///
/// Starts with `floor(n / k)` randomly chosen trajectories as centers,
/// iterates assignment and PSA re-centering to a fixpoint, keeps clusters
/// of at least `k` and re-clusters the members of the rest among
/// themselves with `floor(remaining / k)` centers. A round that keeps
/// nothing halves the center count so the loop always terminates. A final
/// remainder smaller than `k` is absorbed into the nearest kept cluster.
pub fn iterative_kmeans(trajs: &[GenTrajectory], k: usize, grids: &GridPair, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Config(format!("k = {k} must be >= 2")));
    }
    if trajs.len() < k {
        return Err(Error::Infeasible {
            k,
            available: trajs.len(),
        });
    }
    for t in trajs {
        validate_points(&t.points, grids, "input")?;
    }
    let suppress = grids.suppress_cost();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<usize> = (0..trajs.len()).collect();
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut n_clusters = (pool.len() / k).max(1);

    while !pool.is_empty() {
        if pool.len() < k {
            let leftovers = std::mem::take(&mut pool);
            absorb_leftovers(&mut out, leftovers, |a, b| {
                distance_unchecked(&trajs[a].points, &trajs[b].points, suppress) as u64
            });
            break;
        }
        let groups = kmeans_round(trajs, &pool, n_clusters, suppress, &mut rng);
        let mut next_pool = Vec::new();
        let mut kept_any = false;
        for g in groups {
            if g.len() >= k {
                out.push(g);
                kept_any = true;
            } else {
                next_pool.extend(g);
            }
        }
        next_pool.sort_unstable();
        n_clusters = if kept_any {
            (next_pool.len() / k).max(1)
        } else {
            (n_clusters / 2).max(1)
        };
        pool = next_pool;
    }
    Ok(out)
}

/// A published group of trajectories and its shared generalization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub member_ids: BTreeSet<TrajId>,
    pub representative: GenTrajectory,
    /// PSA loss in bits.
    pub gen_loss: u64,
}

/// Runs PSA on every cluster. Returns the clusters and their summed loss.
pub fn generalize_clusters(
    clusters: &[Vec<usize>],
    trajs: &[GenTrajectory],
    grids: &GridPair,
) -> Result<(Vec<Cluster>, u64)> {
    let suppress = grids.suppress_cost();
    for c in clusters {
        if c.is_empty() {
            return Err(Error::Domain("empty cluster".into()));
        }
        if let Some(&bad) = c.iter().find(|&&i| i >= trajs.len()) {
            return Err(Error::Domain(format!("cluster references trajectory {bad}")));
        }
    }
    let out: Vec<Cluster> = clusters
        .par_iter()
        .map(|c| {
            let members: Vec<&GenTrajectory> = c.iter().map(|&i| &trajs[i]).collect();
            let (representative, gen_loss) = psa_unchecked(&members, suppress);
            Cluster {
                member_ids: representative.member_ids.clone(),
                representative,
                gen_loss,
            }
        })
        .collect();
    let total = out.iter().map(|c| c.gen_loss).sum();
    Ok((out, total))
}

/// One row group of the published dataset.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PublishedRecord {
    pub pseudonym: u32,
    pub points: Vec<GenPoint>,
}

/// Emits one record per member trajectory carrying its cluster's
/// representative. Pseudonyms are a seeded permutation of `0..n`, so they
/// reveal neither source ids nor cluster order. Output is sorted by
/// pseudonym.
pub fn anonymize(clusters: &[Cluster], k: usize, seed: u64) -> Result<Vec<PublishedRecord>> {
    if let Some(c) = clusters.iter().find(|c| c.member_ids.len() < k) {
        return Err(Error::Undersized {
            size: c.member_ids.len(),
            k,
        });
    }
    let total: usize = clusters.iter().map(|c| c.member_ids.len()).sum();
    let mut pseudonyms: Vec<u32> = (0..total as u32).collect();
    pseudonyms.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut next = pseudonyms.into_iter();
    let mut out: Vec<PublishedRecord> = clusters
        .iter()
        .flat_map(|c| std::iter::repeat_n(&c.representative.points, c.member_ids.len()))
        .map(|points| PublishedRecord {
            pseudonym: next.next().expect("one pseudonym per record"),
            points: points.clone(),
        })
        .collect();
    out.sort_by_key(|r| r.pseudonym);
    Ok(out)
}

/// Writes `pseudonym,seq,x_node,y_node,lon_lo,lon_hi,lat_lo,lat_hi`.
pub fn write_published_csv<W: Write>(writer: W, records: &[PublishedRecord], grids: &GridPair) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record([
        "pseudonym",
        "seq",
        "x_node",
        "y_node",
        "lon_lo",
        "lon_hi",
        "lat_lo",
        "lat_hi",
    ])?;
    for r in records {
        for (seq, p) in r.points.iter().enumerate() {
            let (lon_lo, lon_hi) = grids.lon.interval(p.x)?;
            let (lat_lo, lat_hi) = grids.lat.interval(p.y)?;
            w.write_record([
                r.pseudonym.to_string(),
                seq.to_string(),
                p.x.to_string(),
                p.y.to_string(),
                lon_lo.to_string(),
                lon_hi.to_string(),
                lat_lo.to_string(),
                lat_hi.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
