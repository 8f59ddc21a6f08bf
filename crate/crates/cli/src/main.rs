use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use trajanon::partition::{DEFAULT_POINT_CLUSTERS, DEFAULT_SPACING_DIVISOR};
use trajanon::pipeline::{self, DEFAULT_HEIGHT, DEFAULT_SAMPLE_SIZES};
use trajanon::synthetic::{road_network_tracks, SyntheticConfig};
use trajanon::trajectory::{build_dataset, write_csv, DEFAULT_MIN_LEN};
use trajanon::{Algorithm, BoundingBox, InputFormat, PartitionConfig, RunConfig, RunReport};

/// Trajectory k-anonymization with partitioning and adaptive clustering.
#[derive(Parser)]
#[command(name = "trajanon", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Anonymize a dataset and evaluate the re-identification attack.
    Run(RunArgs),
    /// Loss reductions of report B relative to report A.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Write a seeded synthetic road-network corpus as trajectory CSV.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    PltDir,
    TaxiLog,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Dbscan,
    Kmeans,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    format: Format,
    /// lon_min,lon_max,lat_min,lat_max
    #[arg(long, value_parser = parse_bbox)]
    bbox: Option<BoundingBox>,
    /// Generalization tree height per axis.
    #[arg(long, default_value_t = DEFAULT_HEIGHT)]
    height: u32,
    #[arg(long)]
    k: usize,
    #[arg(long, value_enum, default_value = "off")]
    partition: Toggle,
    /// Auxiliary point spacing in degrees [default: bbox diagonal / 256].
    #[arg(long)]
    d: Option<f64>,
    /// Point clusters used for partitioning.
    #[arg(long, default_value_t = DEFAULT_POINT_CLUSTERS)]
    m: usize,
    #[arg(long, value_enum, default_value = "dbscan")]
    algo: Algo,
    /// Initial DBSCAN radius in bits [default: cost of suppressing one point].
    #[arg(long)]
    epsilon0: Option<f64>,
    /// Attack sample sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SAMPLE_SIZES)]
    sample_size: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
    /// Also write labels.csv (partitioning only).
    #[arg(long)]
    labels: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 270)]
    trajectories: usize,
    #[arg(long, default_value_t = 30)]
    users: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// lon_min,lon_max,lat_min,lat_max
    #[arg(long, value_parser = parse_bbox)]
    bbox: Option<BoundingBox>,
}

fn parse_bbox(s: &str) -> Result<BoundingBox> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .context("bbox values must be numbers")?;
    let [lon_min, lon_max, lat_min, lat_max] = v[..] else {
        bail!("bbox needs 4 values, got {}", v.len());
    };
    Ok(BoundingBox::new(lon_min, lon_max, lat_min, lat_max)?)
}

impl RunArgs {
    fn config(&self) -> RunConfig {
        let bbox = self.bbox.unwrap_or_default();
        let format = match self.format {
            Format::PltDir => InputFormat::PltDir,
            Format::TaxiLog => InputFormat::TaxiLog,
            Format::Csv => InputFormat::Csv,
        };
        let mut cfg = RunConfig::new(&self.input, format, self.k);
        cfg.bbox = bbox;
        cfg.height = self.height;
        cfg.partition = (self.partition == Toggle::On).then(|| PartitionConfig {
            d: self.d.unwrap_or(bbox.diagonal() / DEFAULT_SPACING_DIVISOR),
            m: self.m,
            ..PartitionConfig::for_bbox(&bbox)
        });
        cfg.algorithm = match self.algo {
            Algo::Dbscan => Algorithm::AdaptiveDbscan,
            Algo::Kmeans => Algorithm::IterativeKmeans,
        };
        cfg.epsilon0 = self.epsilon0;
        cfg.sample_sizes = self.sample_size.clone();
        cfg.seed = self.seed;
        cfg.out_dir = Some(self.out_dir.clone());
        cfg.write_labels = self.labels;
        cfg.threads = self.threads;
        cfg
    }
}

fn read_report(path: &PathBuf) -> Result<RunReport> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let report = pipeline::run(&args.config())?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Compare { a, b, json } => {
            let cmp = pipeline::compare(&read_report(&a)?, &read_report(&b)?)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&cmp)?);
            } else {
                println!("{cmp}");
            }
        }
        Command::Synth(args) => {
            let bbox = args.bbox.unwrap_or_default();
            let cfg = SyntheticConfig {
                trajectories: args.trajectories,
                users: args.users,
                seed: args.seed,
                ..Default::default()
            };
            let tracks = road_network_tracks(&bbox, &cfg)?;
            let grids = bbox.grids(DEFAULT_HEIGHT)?;
            let data = build_dataset(&tracks, &bbox, &grids, DEFAULT_MIN_LEN);
            let file = File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
            write_csv(BufWriter::new(file), &data)?;
            eprintln!("wrote {} trajectories to {}", data.len(), args.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
