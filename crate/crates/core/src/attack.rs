//! Re-identification attack simulation.
//!
//! The adversary knows a few time-ordered points of a target trajectory and
//! succeeds when exactly one published record is consistent with them. A
//! record is consistent when the observed points embed, in order, into its
//! points with each observed leaf covered by the record's generalized nodes.

use std::collections::HashMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::{GenPoint, GenTrajectory};
use crate::cluster::PublishedRecord;
use crate::error::{Error, Result};
use crate::trajectory::{TrajId, Trajectory};

/// What the adversary has observed about one target trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub trajectory_id: TrajId,
    pub user_id: String,
    /// Leaf pairs in time order.
    pub points: Vec<GenPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackKnowledge {
    pub sample_size: usize,
    pub seed: u64,
    pub observations: Vec<Observation>,
}

/// Draws an order-preserving uniform sample of `sample_size` real points
/// from every trajectory (all of them when the trajectory is shorter).
/// Trajectories without real points yield no observation.
pub fn sample_knowledge(trajs: &[Trajectory], sample_size: usize, seed: u64) -> Result<AttackKnowledge> {
    if sample_size == 0 {
        return Err(Error::Config("attack sample size must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut observations = Vec::with_capacity(trajs.len());
    for t in trajs {
        let real: Vec<GenPoint> = t.real_points().map(|p| GenPoint::new(p.x_leaf, p.y_leaf)).collect();
        if real.is_empty() {
            continue;
        }
        let points = if sample_size >= real.len() {
            real
        } else {
            let mut picked = index::sample(&mut rng, real.len(), sample_size).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| real[i]).collect()
        };
        observations.push(Observation {
            trajectory_id: t.id,
            user_id: t.user_id.clone(),
            points,
        });
    }
    Ok(AttackKnowledge {
        sample_size,
        seed,
        observations,
    })
}

/// True when `observed` embeds in order into `record` with every observed
/// point covered. Leftmost-first matching is exact for ordered embedding.
pub fn matches(record: &[GenPoint], observed: &[GenPoint]) -> bool {
    if observed.len() > record.len() {
        return false;
    }
    let mut cursor = 0;
    for o in observed {
        match record[cursor..].iter().position(|r| r.covers(o)) {
            Some(off) => cursor += off + 1,
            None => return false,
        }
    }
    true
}

impl AsRef<[GenPoint]> for PublishedRecord {
    fn as_ref(&self) -> &[GenPoint] {
        &self.points
    }
}

impl AsRef<[GenPoint]> for GenTrajectory {
    fn as_ref(&self) -> &[GenPoint] {
        &self.points
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetOutcome {
    pub trajectory_id: TrajId,
    pub user_id: String,
    /// Number of published records consistent with the observation.
    pub matches: usize,
    pub reidentified: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub k: Option<usize>,
    pub sample_size: usize,
    pub seed: u64,
    pub success_rate: f64,
    pub success_count: usize,
    pub per_user: Vec<TargetOutcome>,
}

/// Runs the attack for every observation against `records`.
pub fn evaluate<R: AsRef<[GenPoint]> + Sync>(records: &[R], knowledge: &AttackKnowledge) -> AttackReport {
    // Records of one cluster are identical; test each distinct value once.
    let mut distinct: HashMap<&[GenPoint], usize> = HashMap::new();
    for r in records {
        *distinct.entry(r.as_ref()).or_default() += 1;
    }
    let distinct: Vec<(&[GenPoint], usize)> = distinct.into_iter().collect();

    let per_user: Vec<TargetOutcome> = knowledge
        .observations
        .par_iter()
        .map(|obs| {
            let matches = distinct
                .iter()
                .filter(|(rec, _)| matches(rec, &obs.points))
                .map(|(_, n)| n)
                .sum();
            TargetOutcome {
                trajectory_id: obs.trajectory_id,
                user_id: obs.user_id.clone(),
                matches,
                reidentified: matches == 1,
            }
        })
        .collect();
    let success_count = per_user.iter().filter(|o| o.reidentified).count();
    let success_rate = if per_user.is_empty() {
        0.0
    } else {
        success_count as f64 / per_user.len() as f64
    };
    AttackReport {
        k: None,
        sample_size: knowledge.sample_size,
        seed: knowledge.seed,
        success_rate,
        success_count,
        per_user,
    }
}
