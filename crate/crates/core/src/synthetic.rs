//! Seeded road-network-like trajectory corpus.
//!
//! Roads form a jittered grid inside the bounding box. Each user has a home
//! intersection and a few regular destinations, some of them drawn from a
//! small set of shared hotspots. A trip follows an L-shaped or detouring
//! route along the roads and is sampled at a near-constant spacing with
//! small positional noise, so repeated trips of one user overlap and have
//! similar lengths.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::trajectory::{BoundingBox, RawPoint, Track};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub trajectories: usize,
    pub users: usize,
    /// Number of roads per axis.
    pub roads: usize,
    /// Destinations per user.
    pub destinations: usize,
    /// Shared destinations; each user destination is a hotspot with
    /// probability one half.
    pub hotspots: usize,
    /// Sampling spacing as a fraction of the box width.
    pub spacing: f64,
    pub min_points: usize,
    pub max_points: usize,
    /// Noise amplitude as a fraction of the box width.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            trajectories: 270,
            users: 30,
            roads: 12,
            destinations: 3,
            hotspots: 8,
            spacing: 0.03,
            min_points: 4,
            max_points: 60,
            noise: 0.002,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.users == 0 || self.roads < 2 || self.destinations == 0 {
            return Err(Error::Config("users, destinations >= 1 and roads >= 2 required".into()));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(Error::Config(format!("spacing {} must be > 0", self.spacing)));
        }
        if self.min_points < 2 || self.min_points > self.max_points {
            return Err(Error::Config(format!(
                "need 2 <= min_points ({}) <= max_points ({})",
                self.min_points, self.max_points
            )));
        }
        if !(0.0..0.5).contains(&self.noise) {
            return Err(Error::Config(format!("noise {} outside [0, 0.5)", self.noise)));
        }
        Ok(())
    }
}

type Node = (usize, usize);

/// Generates one track per trajectory. All points lie inside `bbox`.
pub fn road_network_tracks(bbox: &BoundingBox, cfg: &SyntheticConfig) -> Result<Vec<Track>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let road_positions = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| -> Vec<f64> {
        let step = (hi - lo) / cfg.roads as f64;
        (0..cfg.roads)
            .map(|i| lo + step * (i as f64 + 0.5 + rng.random_range(-0.2..0.2)))
            .collect()
    };
    let xs = road_positions(&mut rng, bbox.lon_min, bbox.lon_max);
    let ys = road_positions(&mut rng, bbox.lat_min, bbox.lat_max);
    let random_node = |rng: &mut ChaCha8Rng| (rng.random_range(0..cfg.roads), rng.random_range(0..cfg.roads));

    let hotspots: Vec<Node> = (0..cfg.hotspots).map(|_| random_node(&mut rng)).collect();
    let users: Vec<(Node, Vec<Node>)> = (0..cfg.users)
        .map(|_| {
            let home = random_node(&mut rng);
            let mut dests = Vec::with_capacity(cfg.destinations);
            while dests.len() < cfg.destinations {
                let d = if !hotspots.is_empty() && rng.random_bool(0.5) {
                    hotspots[rng.random_range(0..hotspots.len())]
                } else {
                    random_node(&mut rng)
                };
                if d != home {
                    dests.push(d);
                }
            }
            (home, dests)
        })
        .collect();

    let noise_x = cfg.noise * (bbox.lon_max - bbox.lon_min);
    let noise_y = cfg.noise * (bbox.lat_max - bbox.lat_min);
    let mut tracks = Vec::with_capacity(cfg.trajectories);
    for t in 0..cfg.trajectories {
        let u = t % cfg.users;
        let (home, dests) = &users[u];
        let dest = dests[rng.random_range(0..dests.len())];
        let (from, to) = if rng.random_bool(0.5) {
            (*home, dest)
        } else {
            (dest, *home)
        };
        let corners = route(from, to, cfg.roads, &mut rng);
        let polyline: Vec<(f64, f64)> = corners.iter().map(|&(i, j)| (xs[i], ys[j])).collect();
        let spacing = cfg.spacing * (bbox.lon_max - bbox.lon_min) * rng.random_range(0.9..1.1);
        let n = ((polyline_length(&polyline) / spacing).round() as usize + 1).clamp(cfg.min_points, cfg.max_points);
        let start = 1_200_000_000 + t as i64 * 86_400;
        let points = sample_polyline(&polyline, n)
            .into_iter()
            .enumerate()
            .map(|(s, (x, y))| RawPoint {
                lon: (x + rng.random_range(-1.0..=1.0) * noise_x).clamp(bbox.lon_min, bbox.lon_max),
                lat: (y + rng.random_range(-1.0..=1.0) * noise_y).clamp(bbox.lat_min, bbox.lat_max),
                timestamp: start + 5 * s as i64,
            })
            .collect();
        tracks.push(Track {
            user_id: format!("user{u:03}"),
            points,
        });
    }
    Ok(tracks)
}

/// Corner intersections of a trip: an L-shaped path, sometimes through a
/// random intermediate intersection.
fn route(from: Node, to: Node, roads: usize, rng: &mut ChaCha8Rng) -> Vec<Node> {
    let mut stops = vec![from];
    if rng.random_bool(0.25) {
        stops.push((rng.random_range(0..roads), rng.random_range(0..roads)));
    }
    stops.push(to);
    let mut corners = vec![from];
    for w in stops.windows(2) {
        let (a, b) = (w[0], w[1]);
        let corner = if rng.random_bool(0.5) { (b.0, a.1) } else { (a.0, b.1) };
        corners.push(corner);
        corners.push(b);
    }
    corners.dedup();
    corners
}

fn segment_lengths(line: &[(f64, f64)]) -> Vec<f64> {
    line.windows(2)
        .map(|w| ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt())
        .collect()
}

fn polyline_length(line: &[(f64, f64)]) -> f64 {
    segment_lengths(line).iter().sum()
}

/// `n` points evenly spaced by arc length along the polyline.
fn sample_polyline(line: &[(f64, f64)], n: usize) -> Vec<(f64, f64)> {
    let seg_len = segment_lengths(line);
    let total: f64 = seg_len.iter().sum();
    if line.len() < 2 || total == 0.0 {
        return vec![line[0]; n];
    }
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    let mut walked = 0.0;
    for s in 0..n {
        let target = total * s as f64 / (n - 1).max(1) as f64;
        while seg + 1 < seg_len.len() && walked + seg_len[seg] < target {
            walked += seg_len[seg];
            seg += 1;
        }
        let f = if seg_len[seg] > 0.0 {
            ((target - walked) / seg_len[seg]).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (a, b) = (line[seg], line[seg + 1]);
        out.push((a.0 + f * (b.0 - a.0), a.1 + f * (b.1 - a.1)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_shape() {
        let bbox = BoundingBox::default();
        let cfg = SyntheticConfig::default();
        let tracks = road_network_tracks(&bbox, &cfg).unwrap();
        assert_eq!(tracks.len(), 270);
        for t in &tracks {
            assert!((cfg.min_points..=cfg.max_points).contains(&t.points.len()));
            assert!(t.points.iter().all(|p| bbox.contains(p.lon, p.lat)));
            assert!(t.points.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
        }
        assert_eq!(tracks, road_network_tracks(&bbox, &cfg).unwrap());
        let other = road_network_tracks(&bbox, &SyntheticConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(tracks, other);
    }

    #[test]
    fn polyline_sampling() {
        let pts = sample_polyline(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)], 5);
        let expect = [(0.0, 0.0), (0.5, 0.0), (1.0, 0.0), (1.0, 0.5), (1.0, 1.0)];
        for (p, e) in pts.iter().zip(expect) {
            assert!((p.0 - e.0).abs() < 1e-12 && (p.1 - e.1).abs() < 1e-12, "{p:?} vs {e:?}");
        }
    }

    #[test]
    fn rejects_bad_config() {
        let bad = SyntheticConfig {
            min_points: 1,
            ..Default::default()
        };
        assert!(road_network_tracks(&BoundingBox::default(), &bad).is_err());
    }
}
