//! Trajectory k-anonymity through partitioning, alignment-based
//! generalization and density clustering.
//!
//! Locations are quantized onto a pair of binary generalization trees (one
//! per axis). Trajectories are aligned with a dynamic program whose cost is
//! the generalization loss in bits, grouped into clusters of at least `k`
//! members, and every member of a cluster is published as the cluster's
//! shared generalized trajectory.

pub mod alignment;
pub mod attack;
pub mod cluster;
pub mod error;
pub mod grid;
pub mod partition;
pub mod pipeline;
pub mod synthetic;
pub mod trajectory;

pub use alignment::{dsa, pairwise_distance, psa, AlignmentResult, GenPoint, GenTrajectory};
pub use attack::{evaluate, matches, sample_knowledge, AttackKnowledge, AttackReport, Observation, TargetOutcome};
pub use cluster::{
    adaptive_dbscan, anonymize, dbscan_core, generalize_clusters, iterative_kmeans, Cluster, DbscanConfig,
    DbscanOutcome, DistanceMatrix, PublishedRecord,
};
pub use error::{Error, Result};
pub use grid::{GridPair, GridTree, NodeId};
pub use partition::{partition, PartitionConfig, Partitioned, PointLabeling};
pub use pipeline::{compare, run, run_dataset, Algorithm, Comparison, InputFormat, RunConfig, RunOutput, RunReport};
pub use trajectory::{BoundingBox, RawPoint, Track, TrajId, TrajPoint, Trajectory};
