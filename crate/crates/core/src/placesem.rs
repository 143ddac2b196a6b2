//! Semantic labels for location clusters.
//!
//! Home is the cluster holding the most night-time presence. Other clusters
//! are labeled from the nearest point of interest (gym or social venue)
//! first, then by campus membership, and default to `Other`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono_tz::Tz;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::artifact::{csv_reader, csv_writer, finish, parse_field};
use crate::calendar::{local_date, local_instant, parse_clock};
use crate::error::{Error, Result};
use crate::geo::{haversine_m, CampusBoundary, LatLon};
use crate::geocluster::{Clustering, LocationCluster, Visit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaceLabel {
    Home,
    WorkUniversity,
    GymSports,
    SocializationVenue,
    Other,
}

impl PlaceLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            PlaceLabel::Home => "home",
            PlaceLabel::WorkUniversity => "work_university",
            PlaceLabel::GymSports => "gym_sports",
            PlaceLabel::SocializationVenue => "socialization_venue",
            PlaceLabel::Other => "other",
        }
    }
}

impl FromStr for PlaceLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "home" => PlaceLabel::Home,
            "work_university" => PlaceLabel::WorkUniversity,
            "gym_sports" => PlaceLabel::GymSports,
            "socialization_venue" => PlaceLabel::SocializationVenue,
            "other" => PlaceLabel::Other,
            _ => return Err(Error::Invalid(format!("unknown place label {s:?}"))),
        })
    }
}

impl fmt::Display for PlaceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoiKeyword {
    Gym,
    Bar,
    Cafe,
    MovieTheater,
    NightClub,
    Restaurant,
}

impl PoiKeyword {
    pub fn as_str(self) -> &'static str {
        match self {
            PoiKeyword::Gym => "gym",
            PoiKeyword::Bar => "bar",
            PoiKeyword::Cafe => "cafe",
            PoiKeyword::MovieTheater => "movie_theater",
            PoiKeyword::NightClub => "night_club",
            PoiKeyword::Restaurant => "restaurant",
        }
    }

    pub fn label(self) -> PlaceLabel {
        match self {
            PoiKeyword::Gym => PlaceLabel::GymSports,
            _ => PlaceLabel::SocializationVenue,
        }
    }
}

impl FromStr for PoiKeyword {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "gym" => PoiKeyword::Gym,
            "bar" => PoiKeyword::Bar,
            "cafe" => PoiKeyword::Cafe,
            "movie_theater" => PoiKeyword::MovieTheater,
            "night_club" => PoiKeyword::NightClub,
            "restaurant" => PoiKeyword::Restaurant,
            _ => return Err(Error::Invalid(format!("unknown POI keyword {s:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiRecord {
    pub name: String,
    pub latitude: f64,
    pub longitude: f64,
    pub keyword: PoiKeyword,
}

impl PoiRecord {
    pub fn position(&self) -> LatLon {
        LatLon::new(self.latitude, self.longitude)
    }
}

/// Source of nearby points of interest.
pub trait PlaceLookup: Send + Sync {
    /// Nearest POI strictly closer than `radius_m`, if any.
    fn nearest_poi(&self, lat: f64, lon: f64, radius_m: f64) -> Option<&PoiRecord>;
}

/// In-memory POI database scanned exhaustively. Equidistant POIs resolve to
/// the lexicographically smaller name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PoiStore {
    records: Vec<PoiRecord>,
}

pub const POI_FILE: &str = "poi.csv";
const POI_HEADER: &[&str] = &["name", "lat", "lon", "keyword"];

impl PoiStore {
    pub fn new(records: Vec<PoiRecord>) -> Self {
        PoiStore { records }
    }

    pub fn records(&self) -> &[PoiRecord] {
        &self.records
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut records = Vec::new();
        for rec in csv_reader(path, POI_HEADER)?.records() {
            let rec = rec?;
            let keyword: String = parse_field(&rec, 3, POI_FILE)?;
            records.push(PoiRecord {
                name: parse_field(&rec, 0, POI_FILE)?,
                latitude: parse_field(&rec, 1, POI_FILE)?,
                longitude: parse_field(&rec, 2, POI_FILE)?,
                keyword: keyword.parse()?,
            });
        }
        Ok(PoiStore { records })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path, None, POI_HEADER)?;
        for r in &self.records {
            w.write_record([
                r.name.clone(),
                r.latitude.to_string(),
                r.longitude.to_string(),
                r.keyword.as_str().to_string(),
            ])?;
        }
        finish(w, path)
    }
}

impl PlaceLookup for PoiStore {
    fn nearest_poi(&self, lat: f64, lon: f64, radius_m: f64) -> Option<&PoiRecord> {
        let here = LatLon::new(lat, lon);
        self.records
            .iter()
            .map(|r| (haversine_m(here, r.position()), r))
            .filter(|(d, _)| *d < radius_m)
            .min_by(|(da, a), (db, b)| da.total_cmp(db).then_with(|| a.name.cmp(&b.name)))
            .map(|(_, r)| r)
    }
}

/// Clock time of day, written as `HH:MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClockTime(pub i64);

impl ClockTime {
    pub fn seconds(self) -> i64 {
        self.0
    }
}

impl Serialize for ClockTime {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{:02}:{:02}", self.0 / 3600, (self.0 % 3600) / 60))
    }
}

impl<'de> Deserialize<'de> for ClockTime {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        parse_clock(&s).map(ClockTime).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelConfig {
    pub night_start: ClockTime,
    pub night_end: ClockTime,
    pub poi_radius_m: f64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        LabelConfig {
            night_start: ClockTime(22 * 3600),
            night_end: ClockTime(7 * 3600),
            poi_radius_m: 50.0,
        }
    }
}

/// Night presence per cluster in seconds, summed over the whole study.
pub fn night_seconds(visits: &[Visit], tz: Tz, cfg: &LabelConfig) -> BTreeMap<u32, i64> {
    let start = cfg.night_start.seconds();
    let mut end = cfg.night_end.seconds();
    if end <= start {
        end += 86_400;
    }
    let mut totals = BTreeMap::new();
    for v in visits {
        // a window opening on the previous day can still cover the visit start
        let first = local_date(tz, v.enter_ts).pred_opt().expect("date in range");
        let last = local_date(tz, v.exit_ts);
        let mut day = first;
        while day <= last {
            let from = local_instant(tz, day, start);
            let to = local_instant(tz, day, end);
            let overlap = v.clipped(from, to);
            if overlap > 0 {
                *totals.entry(v.cluster_id).or_insert(0) += overlap;
            }
            day = day.succ_opt().expect("date in range");
        }
    }
    totals
}

/// Cluster with the most night-time presence; ties go to the lower id.
/// `None` when the user has no night-time presence at all.
pub fn label_home(visits: &[Visit], tz: Tz, cfg: &LabelConfig) -> Option<u32> {
    night_seconds(visits, tz, cfg)
        .into_iter()
        .filter(|&(_, secs)| secs > 0)
        .max_by(|(ia, a), (ib, b)| a.cmp(b).then(ib.cmp(ia)))
        .map(|(id, _)| id)
}

/// Labels every cluster given the home cluster.
pub fn label_clusters<'a>(
    clusters: impl IntoIterator<Item = &'a LocationCluster>,
    home_id: Option<u32>,
    lookup: &dyn PlaceLookup,
    campus: Option<&CampusBoundary>,
    cfg: &LabelConfig,
) -> BTreeMap<u32, PlaceLabel> {
    clusters
        .into_iter()
        .map(|c| {
            let label = if Some(c.cluster_id) == home_id {
                PlaceLabel::Home
            } else if let Some(poi) = lookup.nearest_poi(c.centroid_lat, c.centroid_lon, cfg.poi_radius_m) {
                poi.keyword.label()
            } else if campus.is_some_and(|b| b.contains(c.centroid())) {
                PlaceLabel::WorkUniversity
            } else {
                PlaceLabel::Other
            };
            (c.cluster_id, label)
        })
        .collect()
}

/// Labels for all users, keyed by `(user, cluster_id)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlaceLabels {
    pub labels: BTreeMap<String, BTreeMap<u32, PlaceLabel>>,
    /// Users without any night-time presence; their units are excluded.
    pub no_home: BTreeSet<String>,
}

impl PlaceLabels {
    pub fn of(&self, user: &str) -> Option<&BTreeMap<u32, PlaceLabel>> {
        self.labels.get(user)
    }
}

pub fn label_dataset(
    clustering: &Clustering,
    tz: Tz,
    lookup: &dyn PlaceLookup,
    campus: Option<&CampusBoundary>,
    cfg: &LabelConfig,
) -> PlaceLabels {
    let mut out = PlaceLabels::default();
    for (user, visits) in &clustering.visits {
        match label_home(visits, tz, cfg) {
            Some(home) => {
                let labels = label_clusters(clustering.clusters_of(user), Some(home), lookup, campus, cfg);
                out.labels.insert(user.clone(), labels);
            }
            None => {
                out.no_home.insert(user.clone());
            }
        }
    }
    out
}

pub const LABELS_FILE: &str = "labels.csv";
const LABELS_HEADER: &[&str] = &["user_id", "cluster_id", "label"];

pub fn write_labels_csv(path: &Path, labels: &PlaceLabels, provenance: Option<&str>) -> Result<()> {
    let mut w = csv_writer(path, provenance, LABELS_HEADER)?;
    for (user, map) in &labels.labels {
        for (id, label) in map {
            w.write_record([user.clone(), id.to_string(), label.as_str().to_string()])?;
        }
    }
    finish(w, path)
}

/// Reads labels back; users absent from the file are not flagged `no_home`
/// since that set is not exported.
pub fn read_labels_csv(path: &Path) -> Result<PlaceLabels> {
    let mut out = PlaceLabels::default();
    for rec in csv_reader(path, LABELS_HEADER)?.records() {
        let rec = rec?;
        let user: String = parse_field(&rec, 0, LABELS_FILE)?;
        let id: u32 = parse_field(&rec, 1, LABELS_FILE)?;
        let label: String = parse_field(&rec, 2, LABELS_FILE)?;
        out.labels.entry(user).or_default().insert(id, label.parse()?);
    }
    Ok(out)
}

/// Reads the first ring of a `campus.geojsonl` file.
pub fn load_campus(path: &Path) -> Result<CampusBoundary> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let line = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .ok_or_else(|| Error::Invalid(format!("{} contains no ring", path.display())))?;
    CampusBoundary::from_json_line(line)
}
