//! Trajectory data model, raw GPS ingestion and the canonical CSV format.
//!
//! Two raw formats are read:
//!
//! * Geolife `.plt` files: six header lines, then rows of
//!   `lat,lon,flag,altitude,days,date,time`.
//! * T-Drive style taxi logs: rows of `id,YYYY-MM-DD HH:MM:SS,lon,lat`.
//!
//! Raw tracks are cut to a bounding box and quantized onto the leaves of the
//! two axis trees by [`build_dataset`].

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::error::{Error, Result};
use crate::grid::{GridPair, GridTree, NodeId};

pub type TrajId = u32;

/// Lines preceding the data rows in a `.plt` file.
const PLT_HEADER_LINES: usize = 6;

/// Smallest default trajectory length kept by interception.
pub const DEFAULT_MIN_LEN: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RawPoint {
    pub lat: f64,
    pub lon: f64,
    /// Seconds since the Unix epoch. Only used for ordering.
    pub timestamp: i64,
}

/// One source stream of raw points, e.g. one `.plt` file or one taxi.
#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    pub user_id: String,
    pub points: Vec<RawPoint>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajPoint {
    pub x_leaf: NodeId,
    pub y_leaf: NodeId,
    pub lon: f64,
    pub lat: f64,
    /// False for auxiliary points inserted by densification.
    pub is_real: bool,
}

impl TrajPoint {
    /// Quantizes a real coordinate. Fails when it lies outside the trees.
    pub fn real(lon: f64, lat: f64, grids: &GridPair) -> Result<TrajPoint> {
        let (x_leaf, y_leaf) = grids.leaves(lon, lat)?;
        Ok(TrajPoint {
            x_leaf,
            y_leaf,
            lon,
            lat,
            is_real: true,
        })
    }

    /// Auxiliary point at an interpolated coordinate, clamped onto the grid.
    pub(crate) fn auxiliary(lon: f64, lat: f64, grids: &GridPair) -> TrajPoint {
        TrajPoint {
            x_leaf: grids.lon.leaf_of_clamped(lon),
            y_leaf: grids.lat.leaf_of_clamped(lat),
            lon,
            lat,
            is_real: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub id: TrajId,
    pub user_id: String,
    pub points: Vec<TrajPoint>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn real_points(&self) -> impl Iterator<Item = &TrajPoint> + '_ {
        self.points.iter().filter(|p| p.is_real)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
}

impl Default for BoundingBox {
    /// The Beijing Haidian study region: longitude 116.300 to 116.316, latitude 39.9895 to 40.0.
    fn default() -> Self {
        BoundingBox {
            lon_min: 116.300_000,
            lon_max: 116.316_000,
            lat_min: 39.989_500,
            lat_max: 40.000_000,
        }
    }
}

impl BoundingBox {
    pub fn new(lon_min: f64, lon_max: f64, lat_min: f64, lat_max: f64) -> Result<BoundingBox> {
        let bbox = BoundingBox {
            lon_min,
            lon_max,
            lat_min,
            lat_max,
        };
        if !(lon_min < lon_max && lat_min < lat_max) {
            return Err(Error::Config(format!("degenerate bounding box {bbox:?}")));
        }
        Ok(bbox)
    }

    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        lon >= self.lon_min && lon <= self.lon_max && lat >= self.lat_min && lat <= self.lat_max
    }

    /// Planar diagonal in degrees.
    pub fn diagonal(&self) -> f64 {
        (self.lon_max - self.lon_min).hypot(self.lat_max - self.lat_min)
    }

    /// Builds both axis trees over this box with the same height.
    pub fn grids(&self, height: u32) -> Result<GridPair> {
        Ok(GridPair::new(
            GridTree::new(self.lon_min, self.lon_max, height)?,
            GridTree::new(self.lat_min, self.lat_max, height)?,
        ))
    }
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, line: usize, name: &str) -> Result<T> {
    let raw = field.ok_or_else(|| Error::Parse {
        line,
        message: format!("missing {name} field"),
    })?;
    raw.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid {name} {raw:?}"),
    })
}

fn parse_coord(field: Option<&str>, line: usize, name: &str) -> Result<f64> {
    let v: f64 = parse_field(field, line, name)?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("non-finite {name}"),
        });
    }
    Ok(v)
}

fn parse_datetime(s: &str, line: usize) -> Result<i64> {
    NaiveDateTime::parse_from_str(s.trim(), "%Y-%m-%d %H:%M:%S")
        .map(|dt| dt.and_utc().timestamp())
        .map_err(|e| Error::Parse {
            line,
            message: format!("invalid timestamp {s:?}: {e}"),
        })
}

/// Parses the contents of a Geolife `.plt` file.
pub fn parse_plt(text: &str) -> Result<Vec<RawPoint>> {
    let mut points = Vec::new();
    for (idx, row) in text.lines().enumerate().skip(PLT_HEADER_LINES) {
        let line = idx + 1;
        if row.trim().is_empty() {
            continue;
        }
        let mut fields = row.split(',');
        let lat = parse_coord(fields.next(), line, "latitude")?;
        let lon = parse_coord(fields.next(), line, "longitude")?;
        let mut rest = fields.skip(3);
        let date = rest.next().unwrap_or("");
        let time = rest.next().ok_or_else(|| Error::Parse {
            line,
            message: "missing date/time fields".into(),
        })?;
        let timestamp = parse_datetime(&format!("{} {}", date.trim(), time.trim()), line)?;
        points.push(RawPoint { lat, lon, timestamp });
    }
    if points.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    Ok(points)
}

/// Parses a taxi log into `(taxi id, point)` rows in file order.
pub fn parse_taxi_log(text: &str) -> Result<Vec<(u64, RawPoint)>> {
    let mut rows = Vec::new();
    for (idx, row) in text.lines().enumerate() {
        let line = idx + 1;
        if row.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line,
                message: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        let id: u64 = parse_field(Some(fields[0]), line, "taxi id")?;
        let timestamp = parse_datetime(fields[1], line)?;
        let lon = parse_coord(Some(fields[2]), line, "longitude")?;
        let lat = parse_coord(Some(fields[3]), line, "latitude")?;
        rows.push((id, RawPoint { lat, lon, timestamp }));
    }
    Ok(rows)
}

/// Groups taxi rows into one time-sorted track per taxi, ordered by id.
pub fn group_taxi_rows(rows: Vec<(u64, RawPoint)>) -> Vec<Track> {
    let mut by_id: BTreeMap<u64, Vec<RawPoint>> = BTreeMap::new();
    for (id, p) in rows {
        by_id.entry(id).or_default().push(p);
    }
    by_id
        .into_iter()
        .map(|(id, mut points)| {
            points.sort_by_key(|p| p.timestamp);
            Track {
                user_id: id.to_string(),
                points,
            }
        })
        .collect()
}

/// Reads every `.plt` file under `dir`. The user id of a file is the name of
/// the directory holding its `Trajectory/` folder (Geolife layout), or its
/// parent directory otherwise.
pub fn load_plt_dir(dir: &Path) -> Result<Vec<Track>> {
    let mut files: Vec<_> = WalkDir::new(dir)
        .sort_by_file_name()
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .filter(|p| p.extension().is_some_and(|ext| ext.eq_ignore_ascii_case("plt")))
        .collect();
    files.sort();

    let mut tracks = Vec::with_capacity(files.len());
    for path in files {
        let text = fs::read_to_string(&path).map_err(|e| Error::from(e).in_file(&path))?;
        let points = match parse_plt(&text) {
            Ok(points) => points,
            Err(Error::EmptyTrajectory) => continue,
            Err(e) => return Err(e.in_file(&path)),
        };
        let parent = path.parent();
        let owner = match parent {
            Some(p) if p.file_name().is_some_and(|n| n == "Trajectory") => p.parent(),
            other => other,
        };
        let user_id = owner
            .and_then(|p| p.file_name())
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        tracks.push(Track { user_id, points });
    }
    Ok(tracks)
}

/// Reads a taxi log file, or every `.txt` file in a directory of them.
pub fn load_taxi_path(path: &Path) -> Result<Vec<Track>> {
    let mut files = Vec::new();
    if path.is_dir() {
        for entry in WalkDir::new(path).sort_by_file_name() {
            let entry = entry.map_err(|e| Error::Io(e.into()))?;
            if entry.file_type().is_file() {
                files.push(entry.into_path());
            }
        }
    } else {
        files.push(path.to_path_buf());
    }
    let mut rows = Vec::new();
    for f in files {
        let text = fs::read_to_string(&f).map_err(|e| Error::from(e).in_file(&f))?;
        rows.extend(parse_taxi_log(&text).map_err(|e| e.in_file(&f))?);
    }
    Ok(group_taxi_rows(rows))
}

/// Cuts each track at every point outside `bbox`, quantizes the kept points
/// and drops pieces shorter than `min_len`. Points whose timestamp does not
/// advance past the previous kept point are discarded. Ids are assigned in
/// output order starting at 0.
pub fn build_dataset(tracks: &[Track], bbox: &BoundingBox, grids: &GridPair, min_len: usize) -> Vec<Trajectory> {
    let mut out = Vec::new();
    let flush = |user_id: &str, piece: &mut Vec<TrajPoint>, out: &mut Vec<Trajectory>| {
        if !piece.is_empty() && piece.len() >= min_len.max(1) {
            out.push(Trajectory {
                id: out.len() as TrajId,
                user_id: user_id.to_string(),
                points: std::mem::take(piece),
            });
        }
        piece.clear();
    };

    for track in tracks {
        let mut piece = Vec::new();
        let mut last_ts: Option<i64> = None;
        for p in &track.points {
            if last_ts.is_some_and(|t| p.timestamp <= t) {
                continue;
            }
            last_ts = Some(p.timestamp);
            if !bbox.contains(p.lon, p.lat) {
                flush(&track.user_id, &mut piece, &mut out);
                continue;
            }
            match TrajPoint::real(p.lon, p.lat, grids) {
                Ok(tp) => piece.push(tp),
                // Trees narrower than the box; treat like an exit.
                Err(_) => flush(&track.user_id, &mut piece, &mut out),
            }
        }
        flush(&track.user_id, &mut piece, &mut out);
    }
    out
}

const CSV_HEADER: [&str; 6] = ["traj_id", "user_id", "seq", "lon", "lat", "is_real"];

/// Writes trajectories as `traj_id,user_id,seq,lon,lat,is_real`.
pub fn write_csv<W: Write>(writer: W, trajs: &[Trajectory]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for t in trajs {
        for (seq, p) in t.points.iter().enumerate() {
            w.write_record([
                t.id.to_string(),
                t.user_id.clone(),
                seq.to_string(),
                p.lon.to_string(),
                p.lat.to_string(),
                if p.is_real { "1" } else { "0" }.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct CsvRow {
    traj_id: TrajId,
    user_id: String,
    seq: usize,
    lon: f64,
    lat: f64,
    is_real: u8,
}

/// Reads the canonical trajectory CSV, re-quantizing coordinates on `grids`.
/// Rows of one trajectory must be contiguous and in `seq` order.
pub fn read_csv<R: Read>(reader: R, grids: &GridPair) -> Result<Vec<Trajectory>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out: Vec<Trajectory> = Vec::new();
    for (idx, row) in r.deserialize::<CsvRow>().enumerate() {
        let line = idx + 2;
        let row = row?;
        let (x_leaf, y_leaf) = grids.leaves(row.lon, row.lat).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let point = TrajPoint {
            x_leaf,
            y_leaf,
            lon: row.lon,
            lat: row.lat,
            is_real: row.is_real != 0,
        };
        match out.last_mut() {
            Some(t) if t.id == row.traj_id => {
                if row.seq != t.points.len() {
                    return Err(Error::Parse {
                        line,
                        message: format!("expected seq {}, found {}", t.points.len(), row.seq),
                    });
                }
                t.points.push(point);
            }
            _ => {
                if row.seq != 0 {
                    return Err(Error::Parse {
                        line,
                        message: format!("trajectory {} does not start at seq 0", row.traj_id),
                    });
                }
                if out.iter().any(|t| t.id == row.traj_id) {
                    return Err(Error::Parse {
                        line,
                        message: format!("rows of trajectory {} are not contiguous", row.traj_id),
                    });
                }
                out.push(Trajectory {
                    id: row.traj_id,
                    user_id: row.user_id,
                    points: vec![point],
                });
            }
        }
    }
    Ok(out)
}

/// Lifts a canonical CSV back into raw tracks (one per trajectory), keeping
/// only real points. Used when a CSV is fed back through the pipeline.
pub fn tracks_from_trajectories(trajs: &[Trajectory]) -> Vec<Track> {
    trajs
        .iter()
        .map(|t| Track {
            user_id: t.user_id.clone(),
            points: t
                .real_points()
                .enumerate()
                .map(|(i, p)| RawPoint {
                    lat: p.lat,
                    lon: p.lon,
                    timestamp: i as i64,
                })
                .collect(),
        })
        .collect()
}
