//! Sequential centroid clustering of GPS samples and the visits derived
//! from it.
//!
//! Samples are visited in time order. A sample is skipped when its accuracy
//! exceeds `accuracy_max_m` or when the user was moving; otherwise it joins
//! the first cluster (ascending id) whose current centroid is closer than
//! `radius_m`, or seeds a new cluster. Centroids are running means of member
//! coordinates, so the result depends on input order.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::{csv_reader, csv_writer, finish, parse_field};
use crate::error::Result;
use crate::geo::{haversine_m, LatLon};
use crate::ingest::{ActivitySample, GpsSample, RawDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterScope {
    PerUser,
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub accuracy_max_m: f64,
    pub radius_m: f64,
    /// Activity samples further than this from a GPS fix are ignored.
    pub moving_window_s: i64,
    /// Speed fallback used when no activity sample is in the window.
    pub moving_speed_mps: f64,
    pub max_gap_s: i64,
    pub scope: ClusterScope,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            accuracy_max_m: 50.0,
            radius_m: 50.0,
            moving_window_s: 300,
            moving_speed_mps: 1.5,
            max_gap_s: 1800,
            scope: ClusterScope::PerUser,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationCluster {
    pub cluster_id: u32,
    /// `None` for clusters shared by all users (global scope).
    pub owner: Option<String>,
    pub centroid_lat: f64,
    pub centroid_lon: f64,
    pub member_count: usize,
}

impl LocationCluster {
    pub fn centroid(&self) -> LatLon {
        LatLon::new(self.centroid_lat, self.centroid_lon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleFate {
    Clustered(u32),
    Inaccurate,
    Moving,
}

impl SampleFate {
    pub fn cluster(self) -> Option<u32> {
        match self {
            SampleFate::Clustered(c) => Some(c),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Visit {
    pub cluster_id: u32,
    pub enter_ts: i64,
    pub exit_ts: i64,
}

impl Visit {
    pub fn duration(&self) -> i64 {
        self.exit_ts - self.enter_ts
    }

    /// Overlap with `[from, to)` in seconds.
    pub fn clipped(&self, from: i64, to: i64) -> i64 {
        (self.exit_ts.min(to) - self.enter_ts.max(from)).max(0)
    }
}

/// Accumulates members with exact running sums so the centroid equals the
/// arithmetic mean of member coordinates at every step.
#[derive(Debug, Clone)]
struct Accumulator {
    sum_lat: f64,
    sum_lon: f64,
    count: usize,
}

impl Accumulator {
    fn centroid(&self) -> LatLon {
        LatLon::new(self.sum_lat / self.count as f64, self.sum_lon / self.count as f64)
    }
}

/// Incremental clustering state; feed samples in time order.
#[derive(Debug, Clone)]
pub struct Clusterer {
    cfg: ClusterConfig,
    clusters: Vec<Accumulator>,
}

impl Clusterer {
    pub fn new(cfg: ClusterConfig) -> Self {
        Clusterer {
            cfg,
            clusters: Vec::new(),
        }
    }

    pub fn push(&mut self, sample: &GpsSample, moving: bool) -> SampleFate {
        if sample.accuracy_m > self.cfg.accuracy_max_m {
            return SampleFate::Inaccurate;
        }
        if moving {
            return SampleFate::Moving;
        }
        let p = LatLon::new(sample.latitude, sample.longitude);
        for (id, acc) in self.clusters.iter_mut().enumerate() {
            if haversine_m(p, acc.centroid()) < self.cfg.radius_m {
                acc.sum_lat += p.lat;
                acc.sum_lon += p.lon;
                acc.count += 1;
                return SampleFate::Clustered(id as u32);
            }
        }
        self.clusters.push(Accumulator {
            sum_lat: p.lat,
            sum_lon: p.lon,
            count: 1,
        });
        SampleFate::Clustered((self.clusters.len() - 1) as u32)
    }

    pub fn into_clusters(self, owner: Option<&str>) -> Vec<LocationCluster> {
        self.clusters
            .into_iter()
            .enumerate()
            .map(|(id, acc)| {
                let c = acc.centroid();
                LocationCluster {
                    cluster_id: id as u32,
                    owner: owner.map(str::to_string),
                    centroid_lat: c.lat,
                    centroid_lon: c.lon,
                    member_count: acc.count,
                }
            })
            .collect()
    }
}

/// Flags samples taken while the user was moving.
///
/// The nearest activity sample within `moving_window_s` decides (walking or
/// running means moving; equidistant neighbours resolve to the earlier one).
/// Without one, the implied speed from the previous fix is compared against
/// `moving_speed_mps`.
pub fn moving_flags(samples: &[GpsSample], activity: &[ActivitySample], cfg: &ClusterConfig) -> Vec<bool> {
    samples
        .iter()
        .enumerate()
        .map(
            |(i, s)| match nearest_activity(activity, s.timestamp, cfg.moving_window_s) {
                Some(a) => a.activity.is_moving(),
                None => {
                    i > 0 && {
                        let prev = &samples[i - 1];
                        let dt = (s.timestamp - prev.timestamp) as f64;
                        let dist = haversine_m(
                            LatLon::new(prev.latitude, prev.longitude),
                            LatLon::new(s.latitude, s.longitude),
                        );
                        dt > 0.0 && dist / dt > cfg.moving_speed_mps
                    }
                }
            },
        )
        .collect()
}

fn nearest_activity(activity: &[ActivitySample], ts: i64, window: i64) -> Option<&ActivitySample> {
    let idx = activity.partition_point(|a| a.timestamp < ts);
    let after = activity.get(idx);
    let before = idx.checked_sub(1).and_then(|i| activity.get(i));
    let best = match (before, after) {
        (Some(b), Some(a)) => {
            if a.timestamp - ts < ts - b.timestamp {
                a
            } else {
                b
            }
        }
        (Some(b), None) => b,
        (None, Some(a)) => a,
        (None, None) => return None,
    };
    ((best.timestamp - ts).abs() <= window).then_some(best)
}

/// Clusters one user's time-sorted samples.
pub fn cluster_locations(
    samples: &[GpsSample],
    activity: &[ActivitySample],
    cfg: &ClusterConfig,
) -> (Vec<LocationCluster>, Vec<SampleFate>) {
    let moving = moving_flags(samples, activity, cfg);
    let mut clusterer = Clusterer::new(*cfg);
    let fates = samples.iter().zip(moving).map(|(s, m)| clusterer.push(s, m)).collect();
    (clusterer.into_clusters(None), fates)
}

/// Merges consecutive samples in the same cluster into visits.
///
/// Inaccurate samples are transparent; a moving sample, a cluster change or
/// a gap above `max_gap_s` closes the open visit. Zero-length visits are
/// dropped.
pub fn derive_visits(samples: &[GpsSample], fates: &[SampleFate], max_gap_s: i64) -> Vec<Visit> {
    let mut visits = Vec::new();
    let mut open: Option<Visit> = None;
    let close = |open: &mut Option<Visit>, visits: &mut Vec<Visit>| {
        if let Some(v) = open.take() {
            if v.exit_ts > v.enter_ts {
                visits.push(v);
            }
        }
    };
    for (s, fate) in samples.iter().zip(fates) {
        match *fate {
            SampleFate::Inaccurate => {}
            SampleFate::Moving => close(&mut open, &mut visits),
            SampleFate::Clustered(c) => {
                if let Some(v) = open.as_mut() {
                    if v.cluster_id == c && s.timestamp - v.exit_ts <= max_gap_s {
                        v.exit_ts = s.timestamp;
                        continue;
                    }
                }
                close(&mut open, &mut visits);
                open = Some(Visit {
                    cluster_id: c,
                    enter_ts: s.timestamp,
                    exit_ts: s.timestamp,
                });
            }
        }
    }
    close(&mut open, &mut visits);
    visits
}

/// Clusters and visits for every included user of a dataset.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Clustering {
    pub clusters: Vec<LocationCluster>,
    pub fates: BTreeMap<String, Vec<SampleFate>>,
    pub visits: BTreeMap<String, Vec<Visit>>,
}

impl Clustering {
    /// Clusters visible to `user`: its own (per-user scope) or shared ones.
    pub fn clusters_of<'a>(&'a self, user: &'a str) -> impl Iterator<Item = &'a LocationCluster> + 'a {
        self.clusters
            .iter()
            .filter(move |c| c.owner.as_deref().is_none_or(|o| o == user))
    }

    pub fn visits_of(&self, user: &str) -> &[Visit] {
        self.visits.get(user).map(Vec::as_slice).unwrap_or(&[])
    }
}

pub fn cluster_dataset(ds: &RawDataset, cfg: &ClusterConfig) -> Clustering {
    let users: Vec<&str> = ds.included_users().collect();
    match cfg.scope {
        ClusterScope::PerUser => {
            let per_user: Vec<_> = users
                .par_iter()
                .map(|u| {
                    let samples = ds.gps_of(u);
                    let (mut clusters, fates) = cluster_locations(samples, ds.activity_of(u), cfg);
                    for c in &mut clusters {
                        c.owner = Some(u.to_string());
                    }
                    let visits = derive_visits(samples, &fates, cfg.max_gap_s);
                    (u.to_string(), clusters, fates, visits)
                })
                .collect();
            let mut out = Clustering::default();
            for (u, clusters, fates, visits) in per_user {
                out.clusters.extend(clusters);
                out.fates.insert(u.clone(), fates);
                out.visits.insert(u, visits);
            }
            out
        }
        ClusterScope::Global => {
            // one shared cluster set, users fed in sorted order
            let mut clusterer = Clusterer::new(*cfg);
            let mut out = Clustering::default();
            for u in &users {
                let samples = ds.gps_of(u);
                let moving = moving_flags(samples, ds.activity_of(u), cfg);
                let fates: Vec<SampleFate> = samples.iter().zip(moving).map(|(s, m)| clusterer.push(s, m)).collect();
                out.visits
                    .insert(u.to_string(), derive_visits(samples, &fates, cfg.max_gap_s));
                out.fates.insert(u.to_string(), fates);
            }
            out.clusters = clusterer.into_clusters(None);
            out
        }
    }
}

pub const CLUSTERS_FILE: &str = "clusters.csv";
pub const VISITS_FILE: &str = "visits.csv";
const CLUSTERS_HEADER: &[&str] = &["cluster_id", "user_id", "centroid_lat", "centroid_lon", "member_count"];
const VISITS_HEADER: &[&str] = &["user_id", "cluster_id", "enter_ts", "exit_ts"];
const SHARED_OWNER: &str = "*";

pub fn write_clusters_csv(path: &Path, clustering: &Clustering, provenance: Option<&str>) -> Result<()> {
    let mut w = csv_writer(path, provenance, CLUSTERS_HEADER)?;
    for c in &clustering.clusters {
        w.write_record([
            c.cluster_id.to_string(),
            c.owner.clone().unwrap_or_else(|| SHARED_OWNER.to_string()),
            c.centroid_lat.to_string(),
            c.centroid_lon.to_string(),
            c.member_count.to_string(),
        ])?;
    }
    finish(w, path)
}

pub fn write_visits_csv(path: &Path, clustering: &Clustering, provenance: Option<&str>) -> Result<()> {
    let mut w = csv_writer(path, provenance, VISITS_HEADER)?;
    for (user, visits) in &clustering.visits {
        for v in visits {
            w.write_record([
                user.clone(),
                v.cluster_id.to_string(),
                v.enter_ts.to_string(),
                v.exit_ts.to_string(),
            ])?;
        }
    }
    finish(w, path)
}

/// Reads `clusters.csv` and `visits.csv` back. Sample fates are not exported
/// and come back empty.
pub fn read_clustering(clusters_path: &Path, visits_path: &Path) -> Result<Clustering> {
    let mut out = Clustering::default();
    let file = CLUSTERS_FILE;
    for rec in csv_reader(clusters_path, CLUSTERS_HEADER)?.records() {
        let rec = rec?;
        let owner: String = parse_field(&rec, 1, file)?;
        out.clusters.push(LocationCluster {
            cluster_id: parse_field(&rec, 0, file)?,
            owner: (owner != SHARED_OWNER).then_some(owner),
            centroid_lat: parse_field(&rec, 2, file)?,
            centroid_lon: parse_field(&rec, 3, file)?,
            member_count: parse_field(&rec, 4, file)?,
        });
    }
    let file = VISITS_FILE;
    for rec in csv_reader(visits_path, VISITS_HEADER)?.records() {
        let rec = rec?;
        let user: String = parse_field(&rec, 0, file)?;
        out.visits.entry(user).or_default().push(Visit {
            cluster_id: parse_field(&rec, 1, file)?,
            enter_ts: parse_field(&rec, 2, file)?,
            exit_ts: parse_field(&rec, 3, file)?,
        });
    }
    Ok(out)
}
