//! End-to-end anonymization runs and their reports.

use std::fmt;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alignment::GenTrajectory;
use crate::attack::{evaluate, sample_knowledge, AttackReport};
use crate::cluster::{
    adaptive_dbscan, anonymize, generalize_clusters, iterative_kmeans, write_published_csv, Cluster, DbscanConfig,
    DistanceMatrix, PublishedRecord,
};
use crate::error::{Error, Result};
use crate::grid::GridPair;
use crate::partition::{partition, write_labels_csv, PartitionConfig, Partitioned};
use crate::trajectory::{
    build_dataset, load_plt_dir, load_taxi_path, read_csv, BoundingBox, Trajectory, DEFAULT_MIN_LEN,
};

/// Attack sample sizes evaluated when none are given.
pub const DEFAULT_SAMPLE_SIZES: [usize; 4] = [1, 2, 3, 5];
pub const DEFAULT_HEIGHT: u32 = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    /// Directory tree of Geolife `.plt` files.
    PltDir,
    /// `id,timestamp,lon,lat` taxi log file or directory of them.
    TaxiLog,
    /// Trajectory CSV as written by [`crate::trajectory::write_csv`].
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    AdaptiveDbscan,
    IterativeKmeans,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::AdaptiveDbscan => "adaptive-dbscan",
            Algorithm::IterativeKmeans => "iterative-kmeans",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub input: PathBuf,
    pub format: InputFormat,
    pub bbox: BoundingBox,
    pub height: u32,
    pub k: usize,
    /// `None` disables partitioning. The `seed` field is ignored; the run
    /// derives it from `seed`.
    pub partition: Option<PartitionConfig>,
    pub algorithm: Algorithm,
    /// Initial DBSCAN radius in bits. `None` uses the cost of suppressing
    /// one point, see [`default_epsilon0`].
    pub epsilon0: Option<f64>,
    pub quantile_step: f64,
    pub sample_sizes: Vec<usize>,
    pub seed: u64,
    /// Where output files go. `None` writes nothing.
    pub out_dir: Option<PathBuf>,
    pub write_labels: bool,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn new(input: impl Into<PathBuf>, format: InputFormat, k: usize) -> RunConfig {
        RunConfig {
            input: input.into(),
            format,
            bbox: BoundingBox::default(),
            height: DEFAULT_HEIGHT,
            k,
            partition: None,
            algorithm: Algorithm::AdaptiveDbscan,
            epsilon0: None,
            quantile_step: 0.25,
            sample_sizes: DEFAULT_SAMPLE_SIZES.to_vec(),
            seed: 0,
            out_dir: None,
            write_labels: false,
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!("k = {} must be >= 2", self.k)));
        }
        if let Some(p) = &self.partition {
            p.validate()?;
        }
        if let Some(e) = self.epsilon0 {
            if !(e.is_finite() && e > 0.0) {
                return Err(Error::Config(format!("epsilon0 = {e} must be > 0")));
            }
        }
        if !(self.quantile_step > 0.0 && self.quantile_step <= 1.0) {
            return Err(Error::Config(format!(
                "quantile_step {} outside (0, 1]",
                self.quantile_step
            )));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
            return Err(Error::Config("attack sample sizes must be non-empty and >= 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be >= 1".into()));
        }
        self.bbox.grids(self.height).map(|_| ())
    }
}

/// Wall-clock seconds per stage, rounded to milliseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub partition: f64,
    pub distance_matrix: f64,
    pub clustering: f64,
    pub generalization: f64,
    pub attack: f64,
}

impl StageTimes {
    /// Matrix, clustering and generalization together: the cost of
    /// producing the anonymized clusters.
    pub fn anonymization(&self) -> f64 {
        self.distance_matrix + self.clustering + self.generalization
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackSummary {
    pub sample_size: usize,
    pub success_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub k: usize,
    pub algorithm: Algorithm,
    pub partition: bool,
    pub height: u32,
    pub seed: u64,
    pub threads: usize,
    pub trajectories_before_partition: usize,
    pub trajectories_after_partition: usize,
    pub cluster_count: usize,
    pub min_cluster_size: usize,
    /// Bits.
    pub total_information_loss: u64,
    /// Bits.
    pub avg_loss_per_cluster: f64,
    /// DBSCAN radius per round; empty for k'-means.
    pub epsilons: Vec<f64>,
    pub stage_seconds: StageTimes,
    /// Highest success rate over all evaluated sample sizes.
    pub attack_success_rate: f64,
    pub attack: Vec<AttackSummary>,
}

impl RunReport {
    /// The report without wall-clock fields, for reproducibility checks.
    pub fn without_timings(&self) -> RunReport {
        RunReport {
            stage_seconds: StageTimes::default(),
            ..self.clone()
        }
    }
}

/// Everything a run computes, for callers that need more than the report.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: RunReport,
    /// Trajectories that were clustered (segments when partitioning).
    pub trajectories: Vec<Trajectory>,
    pub partitioned: Option<Partitioned>,
    pub clusters: Vec<Cluster>,
    pub published: Vec<PublishedRecord>,
    pub attacks: Vec<AttackReport>,
}

#[derive(Clone, Copy)]
enum Stage {
    Partition = 1,
    Clustering = 2,
    Anonymize = 3,
    Attack = 4,
}

/// Per-stage seed: word 0 of the ChaCha stream numbered after the stage.
fn stage_seed(master: u64, stage: Stage) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stage as u64);
    rng.next_u64()
}

fn secs(start: Instant) -> f64 {
    (start.elapsed().as_secs_f64() * 1000.0).round() / 1000.0
}

/// Loads the configured input as quantized trajectories.
pub fn ingest(cfg: &RunConfig, grids: &GridPair) -> Result<Vec<Trajectory>> {
    let tracks = match cfg.format {
        InputFormat::Csv => {
            let f = File::open(&cfg.input).map_err(|e| Error::from(e).in_file(&cfg.input))?;
            return read_csv(f, grids).map_err(|e| e.in_file(&cfg.input));
        }
        InputFormat::PltDir => load_plt_dir(&cfg.input)?,
        InputFormat::TaxiLog => load_taxi_path(&cfg.input)?,
    };
    Ok(build_dataset(&tracks, &cfg.bbox, grids, DEFAULT_MIN_LEN))
}

/// Reads the input, runs the pipeline and writes outputs to `out_dir`.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let grids = cfg.bbox.grids(cfg.height)?;
    let dataset = ingest(cfg, &grids).map_err(|e| e.in_stage("ingest"))?;
    let out = run_dataset(&dataset, cfg)?;
    if let Some(dir) = &cfg.out_dir {
        write_outputs(dir, &out, cfg.write_labels, &grids)?;
    }
    Ok(out.report)
}

/// Runs every stage after ingestion on an in-memory dataset. Writes nothing.
pub fn run_dataset(dataset: &[Trajectory], cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(|| run_stages(dataset, cfg)),
        None => run_stages(dataset, cfg),
    }
}

fn run_stages(dataset: &[Trajectory], cfg: &RunConfig) -> Result<RunOutput> {
    let grids = cfg.bbox.grids(cfg.height)?;
    let k = cfg.k;
    let mut times = StageTimes::default();

    let t0 = Instant::now();
    let (trajectories, partitioned) = match &cfg.partition {
        Some(p) => {
            let p = PartitionConfig {
                seed: stage_seed(cfg.seed, Stage::Partition),
                ..*p
            };
            let parts = partition(dataset, &p, &grids).map_err(|e| e.in_stage("partition"))?;
            (parts.segments.clone(), Some(parts))
        }
        None => (dataset.to_vec(), None),
    };
    times.partition = secs(t0);
    if trajectories.len() < k {
        return Err(Error::Infeasible {
            k,
            available: trajectories.len(),
        });
    }
    let gen: Vec<GenTrajectory> = trajectories.iter().map(GenTrajectory::from).collect();

    let mut epsilons = Vec::new();
    let groups = match cfg.algorithm {
        Algorithm::AdaptiveDbscan => {
            let t0 = Instant::now();
            let dist = DistanceMatrix::build(&gen, &grids).map_err(|e| e.in_stage("distance matrix"))?;
            times.distance_matrix = secs(t0);
            let t0 = Instant::now();
            let eps0 = cfg.epsilon0.unwrap_or_else(|| default_epsilon0(&grids));
            let dcfg = DbscanConfig {
                quantile_step: cfg.quantile_step,
                ..DbscanConfig::for_matrix(k, eps0, &dist)
            };
            let outcome = adaptive_dbscan(&dist, &dcfg).map_err(|e| e.in_stage("clustering"))?;
            times.clustering = secs(t0);
            epsilons = outcome.epsilons;
            outcome.clusters
        }
        Algorithm::IterativeKmeans => {
            let t0 = Instant::now();
            let groups = iterative_kmeans(&gen, k, &grids, stage_seed(cfg.seed, Stage::Clustering))
                .map_err(|e| e.in_stage("clustering"))?;
            times.clustering = secs(t0);
            groups
        }
    };

    let t0 = Instant::now();
    let (clusters, total) = generalize_clusters(&groups, &gen, &grids).map_err(|e| e.in_stage("generalization"))?;
    times.generalization = secs(t0);

    let published =
        anonymize(&clusters, k, stage_seed(cfg.seed, Stage::Anonymize)).map_err(|e| e.in_stage("anonymize"))?;

    let t0 = Instant::now();
    let attack_seed = stage_seed(cfg.seed, Stage::Attack);
    let mut attacks = Vec::with_capacity(cfg.sample_sizes.len());
    for &s in &cfg.sample_sizes {
        let knowledge = sample_knowledge(&trajectories, s, attack_seed).map_err(|e| e.in_stage("attack"))?;
        let mut rep = evaluate(&published, &knowledge);
        rep.k = Some(k);
        attacks.push(rep);
    }
    times.attack = secs(t0);

    let cluster_count = clusters.len();
    let report = RunReport {
        k,
        algorithm: cfg.algorithm,
        partition: cfg.partition.is_some(),
        height: cfg.height,
        seed: cfg.seed,
        threads: rayon::current_num_threads(),
        trajectories_before_partition: dataset.len(),
        trajectories_after_partition: trajectories.len(),
        cluster_count,
        min_cluster_size: clusters.iter().map(|c| c.member_ids.len()).min().unwrap_or(0),
        total_information_loss: total,
        avg_loss_per_cluster: if cluster_count == 0 {
            0.0
        } else {
            total as f64 / cluster_count as f64
        },
        epsilons,
        stage_seconds: times,
        attack_success_rate: attacks.iter().map(|a| a.success_rate).fold(0.0, f64::max),
        attack: attacks
            .iter()
            .map(|a| AttackSummary {
                sample_size: a.sample_size,
                success_rate: a.success_rate,
            })
            .collect(),
    };
    Ok(RunOutput {
        report,
        trajectories,
        partitioned,
        clusters,
        published,
        attacks,
    })
}

/// Initial radius: the loss of suppressing a single point. Trajectories
/// start out as neighbors only when they differ by less than that.
pub fn default_epsilon0(grids: &GridPair) -> f64 {
    grids.suppress_cost() as f64
}

/// Writes `published.csv`, `attack.json`, `report.json` and optionally
/// `labels.csv` into `dir`.
pub fn write_outputs(dir: &Path, out: &RunOutput, write_labels: bool, grids: &GridPair) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::from(e).in_file(dir))?;
    let create = |name: &str| -> Result<BufWriter<File>> {
        let path = dir.join(name);
        File::create(&path)
            .map(BufWriter::new)
            .map_err(|e| Error::from(e).in_file(path))
    };
    write_published_csv(create("published.csv")?, &out.published, grids)?;
    serde_json::to_writer_pretty(create("attack.json")?, &out.attacks)?;
    serde_json::to_writer_pretty(create("report.json")?, &out.report)?;
    if write_labels {
        if let Some(p) = &out.partitioned {
            write_labels_csv(create("labels.csv")?, &p.densified, &p.labels)?;
        }
    }
    Ok(())
}

/// Loss reductions of run B relative to baseline run A.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub k: usize,
    pub total_loss_a: u64,
    pub total_loss_b: u64,
    pub total_reduction_pct: f64,
    pub per_cluster_loss_a: f64,
    pub per_cluster_loss_b: f64,
    pub per_cluster_reduction_pct: f64,
}

/// `100 * (a - b) / a`. Zero when both are zero.
pub fn reduction_pct(a: f64, b: f64) -> Result<f64> {
    if a == 0.0 {
        return if b == 0.0 {
            Ok(0.0)
        } else {
            Err(Error::Comparison("baseline loss is zero".into()))
        };
    }
    Ok(100.0 * (a - b) / a)
}

pub fn compare(a: &RunReport, b: &RunReport) -> Result<Comparison> {
    if a.k != b.k {
        return Err(Error::Comparison(format!("k differs ({} vs {})", a.k, b.k)));
    }
    Ok(Comparison {
        k: a.k,
        total_loss_a: a.total_information_loss,
        total_loss_b: b.total_information_loss,
        total_reduction_pct: reduction_pct(a.total_information_loss as f64, b.total_information_loss as f64)?,
        per_cluster_loss_a: a.avg_loss_per_cluster,
        per_cluster_loss_b: b.avg_loss_per_cluster,
        per_cluster_reduction_pct: reduction_pct(a.avg_loss_per_cluster, b.avg_loss_per_cluster)?,
    })
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "k = {}", self.k)?;
        writeln!(f, "{:<18}{:>14}{:>14}{:>12}", "metric", "A", "B", "reduction")?;
        writeln!(
            f,
            "{:<18}{:>14}{:>14}{:>11.2}%",
            "total loss", self.total_loss_a, self.total_loss_b, self.total_reduction_pct
        )?;
        write!(
            f,
            "{:<18}{:>14.2}{:>14.2}{:>11.2}%",
            "loss per cluster", self.per_cluster_loss_a, self.per_cluster_loss_b, self.per_cluster_reduction_pct
        )
    }
}
