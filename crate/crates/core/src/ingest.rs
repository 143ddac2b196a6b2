//! Loading and validation of the five input streams.
//!
//! Every file is UTF-8 CSV with a header row. Per-user streams are sorted by
//! timestamp after load and a repeated `(user, timestamp)` within one stream
//! is rejected rather than deduplicated.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use chrono_tz::Tz;
use csv::StringRecord;
use serde::{Deserialize, Serialize};

use crate::calendar::{local_date, parse_timezone};
use crate::error::{Error, Result};

pub const GPS_FILE: &str = "gps.csv";
pub const ACTIVITY_FILE: &str = "activity.csv";
pub const STRESS_FILE: &str = "stress.csv";
pub const DEADLINES_FILE: &str = "deadlines.csv";
pub const PERSONALITY_FILE: &str = "personality.csv";

const GPS_HEADER: &[&str] = &["user_id", "timestamp", "lat", "lon", "accuracy_m"];
const ACTIVITY_HEADER: &[&str] = &["user_id", "timestamp", "activity"];
const STRESS_HEADER: &[&str] = &["user_id", "timestamp", "level"];
const DEADLINES_HEADER: &[&str] = &["user_id", "date"];
const PERSONALITY_HEADER: &[&str] = &[
    "user_id",
    "extroversion",
    "neuroticism",
    "agreeableness",
    "conscientiousness",
    "openness",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsSample {
    pub timestamp: i64,
    pub latitude: f64,
    pub longitude: f64,
    pub accuracy_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivityClass {
    Stationary,
    Walking,
    Running,
    Unknown,
}

impl ActivityClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ActivityClass::Stationary => "stationary",
            ActivityClass::Walking => "walking",
            ActivityClass::Running => "running",
            ActivityClass::Unknown => "unknown",
        }
    }

    pub fn is_moving(self) -> bool {
        matches!(self, ActivityClass::Walking | ActivityClass::Running)
    }
}

impl FromStr for ActivityClass {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "stationary" => Ok(ActivityClass::Stationary),
            "walking" => Ok(ActivityClass::Walking),
            "running" => Ok(ActivityClass::Running),
            "unknown" => Ok(ActivityClass::Unknown),
            other => Err(format!("unknown activity class {other:?}")),
        }
    }
}

impl fmt::Display for ActivityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivitySample {
    pub timestamp: i64,
    pub activity: ActivityClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StressReport {
    pub timestamp: i64,
    pub level: f64,
}

/// Days on which a participant has a deadline.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeadlineCalendar {
    pub deadline_days: BTreeSet<NaiveDate>,
}

/// Big Five scores of one participant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersonalityScores {
    pub extroversion: f64,
    pub neuroticism: f64,
    pub agreeableness: f64,
    pub conscientiousness: f64,
    pub openness: f64,
}

impl PersonalityScores {
    fn all_finite(&self) -> bool {
        [
            self.extroversion,
            self.neuroticism,
            self.agreeableness,
            self.conscientiousness,
            self.openness,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// All five streams, keyed by user and sorted by timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub users: Vec<String>,
    pub gps: BTreeMap<String, Vec<GpsSample>>,
    pub activity: BTreeMap<String, Vec<ActivitySample>>,
    pub stress: BTreeMap<String, Vec<StressReport>>,
    pub deadlines: BTreeMap<String, DeadlineCalendar>,
    pub personality: BTreeMap<String, PersonalityScores>,
    /// Users with no GPS samples or no stress reports.
    pub excluded: BTreeSet<String>,
    pub timezone: Tz,
}

impl RawDataset {
    /// Builds a dataset from per-user streams, sorting each stream and
    /// enforcing the same invariants as [`load_dataset`].
    pub fn from_streams(
        timezone: Tz,
        mut gps: BTreeMap<String, Vec<GpsSample>>,
        mut activity: BTreeMap<String, Vec<ActivitySample>>,
        mut stress: BTreeMap<String, Vec<StressReport>>,
        deadlines: BTreeMap<String, DeadlineCalendar>,
        personality: BTreeMap<String, PersonalityScores>,
    ) -> Result<Self> {
        for (user, samples) in gps.iter_mut() {
            samples.sort_by_key(|s| s.timestamp);
            reject_duplicates(GPS_FILE, user, samples.iter().map(|s| s.timestamp))?;
            for s in samples.iter() {
                check_gps(s).map_err(|m| Error::Invalid(format!("{GPS_FILE}: user {user}: {m}")))?;
            }
        }
        for (user, samples) in activity.iter_mut() {
            samples.sort_by_key(|s| s.timestamp);
            reject_duplicates(ACTIVITY_FILE, user, samples.iter().map(|s| s.timestamp))?;
        }
        for (user, reports) in stress.iter_mut() {
            reports.sort_by_key(|s| s.timestamp);
            reject_duplicates(STRESS_FILE, user, reports.iter().map(|s| s.timestamp))?;
            if reports.iter().any(|r| !r.level.is_finite()) {
                return Err(Error::Invalid(format!(
                    "{STRESS_FILE}: user {user}: non-finite stress level"
                )));
            }
        }
        for (user, scores) in &personality {
            if !scores.all_finite() {
                return Err(Error::Invalid(format!(
                    "{PERSONALITY_FILE}: user {user}: non-finite score"
                )));
            }
        }

        let users: BTreeSet<String> = gps
            .keys()
            .chain(activity.keys())
            .chain(stress.keys())
            .chain(deadlines.keys())
            .chain(personality.keys())
            .cloned()
            .collect();
        let excluded = users
            .iter()
            .filter(|u| gps.get(*u).is_none_or(|v| v.is_empty()) || stress.get(*u).is_none_or(|v| v.is_empty()))
            .cloned()
            .collect();

        Ok(RawDataset {
            users: users.into_iter().collect(),
            gps,
            activity,
            stress,
            deadlines,
            personality,
            excluded,
            timezone,
        })
    }

    pub fn gps_of(&self, user: &str) -> &[GpsSample] {
        self.gps.get(user).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn activity_of(&self, user: &str) -> &[ActivitySample] {
        self.activity.get(user).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn stress_of(&self, user: &str) -> &[StressReport] {
        self.stress.get(user).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Users that take part in the analysis.
    pub fn included_users(&self) -> impl Iterator<Item = &str> {
        self.users
            .iter()
            .filter(|u| !self.excluded.contains(*u))
            .map(String::as_str)
    }
}

fn check_gps(s: &GpsSample) -> std::result::Result<(), String> {
    if !(s.latitude.is_finite() && (-90.0..=90.0).contains(&s.latitude)) {
        return Err(format!("latitude {} out of range [-90, 90]", s.latitude));
    }
    if !(s.longitude.is_finite() && (-180.0..=180.0).contains(&s.longitude)) {
        return Err(format!("longitude {} out of range [-180, 180]", s.longitude));
    }
    if !(s.accuracy_m.is_finite() && s.accuracy_m > 0.0) {
        return Err(format!("accuracy {} must be positive", s.accuracy_m));
    }
    Ok(())
}

fn reject_duplicates(file: &str, user: &str, ts: impl Iterator<Item = i64>) -> Result<()> {
    let mut prev = None;
    for t in ts {
        if prev == Some(t) {
            return Err(Error::Invalid(format!(
                "{file}: duplicate timestamp {t} for user {user}"
            )));
        }
        prev = Some(t);
    }
    Ok(())
}

struct Rows {
    name: &'static str,
    reader: csv::Reader<File>,
}

impl Rows {
    fn open(root: &Path, name: &'static str, header: &[&str]) -> Result<Self> {
        let path = root.join(name);
        if !path.is_file() {
            return Err(Error::MissingFile { name: name.to_string() });
        }
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(file);
        let found = reader.headers()?.clone();
        let found: Vec<&str> = found.iter().collect();
        if found != header {
            return Err(Error::row(
                name,
                1,
                format!("expected header {:?}, found {:?}", header.join(","), found.join(",")),
            ));
        }
        Ok(Rows { name, reader })
    }

    fn for_each(mut self, mut f: impl FnMut(&Field<'_>) -> Result<()>) -> Result<()> {
        let mut record = StringRecord::new();
        loop {
            let more = self.reader.read_record(&mut record).map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                Error::row(self.name, line, e.to_string())
            })?;
            if !more {
                return Ok(());
            }
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            f(&Field {
                file: self.name,
                line,
                record: &record,
            })?;
        }
    }
}

struct Field<'a> {
    file: &'static str,
    line: u64,
    record: &'a StringRecord,
}

impl Field<'_> {
    fn str(&self, idx: usize) -> Result<&str> {
        self.record
            .get(idx)
            .ok_or_else(|| Error::row(self.file, self.line, format!("missing column {idx}")))
    }

    fn parse<T: FromStr>(&self, idx: usize, what: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        let raw = self.str(idx)?;
        raw.parse::<T>()
            .map_err(|e| Error::row(self.file, self.line, format!("bad {what} {raw:?}: {e}")))
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::row(self.file, self.line, msg)
    }
}

/// Reads the five CSV files under `root`.
pub fn load_dataset(root: &Path, timezone: &str) -> Result<RawDataset> {
    let tz = parse_timezone(timezone)?;

    let mut gps: BTreeMap<String, Vec<(u64, GpsSample)>> = BTreeMap::new();
    Rows::open(root, GPS_FILE, GPS_HEADER)?.for_each(|f| {
        let sample = GpsSample {
            timestamp: f.parse(1, "timestamp")?,
            latitude: f.parse(2, "lat")?,
            longitude: f.parse(3, "lon")?,
            accuracy_m: f.parse(4, "accuracy_m")?,
        };
        check_gps(&sample).map_err(|m| f.err(m))?;
        gps.entry(f.str(0)?.to_string()).or_default().push((f.line, sample));
        Ok(())
    })?;

    let mut activity: BTreeMap<String, Vec<(u64, ActivitySample)>> = BTreeMap::new();
    Rows::open(root, ACTIVITY_FILE, ACTIVITY_HEADER)?.for_each(|f| {
        let sample = ActivitySample {
            timestamp: f.parse(1, "timestamp")?,
            activity: f.parse(2, "activity")?,
        };
        activity
            .entry(f.str(0)?.to_string())
            .or_default()
            .push((f.line, sample));
        Ok(())
    })?;

    let mut stress: BTreeMap<String, Vec<(u64, StressReport)>> = BTreeMap::new();
    Rows::open(root, STRESS_FILE, STRESS_HEADER)?.for_each(|f| {
        let report = StressReport {
            timestamp: f.parse(1, "timestamp")?,
            level: f.parse(2, "level")?,
        };
        if !report.level.is_finite() {
            return Err(f.err("stress level must be finite"));
        }
        stress.entry(f.str(0)?.to_string()).or_default().push((f.line, report));
        Ok(())
    })?;

    let mut deadlines: BTreeMap<String, DeadlineCalendar> = BTreeMap::new();
    Rows::open(root, DEADLINES_FILE, DEADLINES_HEADER)?.for_each(|f| {
        let raw = f.str(1)?;
        let date = NaiveDate::parse_from_str(raw, "%Y-%m-%d").map_err(|e| f.err(format!("bad date {raw:?}: {e}")))?;
        let cal = deadlines.entry(f.str(0)?.to_string()).or_default();
        if !cal.deadline_days.insert(date) {
            return Err(f.err(format!("duplicate deadline {date}")));
        }
        Ok(())
    })?;

    let mut personality = BTreeMap::new();
    Rows::open(root, PERSONALITY_FILE, PERSONALITY_HEADER)?.for_each(|f| {
        let scores = PersonalityScores {
            extroversion: f.parse(1, "extroversion")?,
            neuroticism: f.parse(2, "neuroticism")?,
            agreeableness: f.parse(3, "agreeableness")?,
            conscientiousness: f.parse(4, "conscientiousness")?,
            openness: f.parse(5, "openness")?,
        };
        if !scores.all_finite() {
            return Err(f.err("personality scores must be finite"));
        }
        let user = f.str(0)?.to_string();
        if personality.insert(user.clone(), scores).is_some() {
            return Err(f.err(format!("duplicate personality row for {user}")));
        }
        Ok(())
    })?;

    RawDataset::from_streams(
        tz,
        sorted_checked(GPS_FILE, gps, |s| s.timestamp)?,
        sorted_checked(ACTIVITY_FILE, activity, |s| s.timestamp)?,
        sorted_checked(STRESS_FILE, stress, |s| s.timestamp)?,
        deadlines,
        personality,
    )
}

/// Sorts each user's rows by timestamp and reports duplicates with the line
/// of the second occurrence.
fn sorted_checked<T>(
    file: &str,
    streams: BTreeMap<String, Vec<(u64, T)>>,
    ts: impl Fn(&T) -> i64,
) -> Result<BTreeMap<String, Vec<T>>> {
    streams
        .into_iter()
        .map(|(user, mut rows)| {
            rows.sort_by_key(|(line, r)| (ts(r), *line));
            for pair in rows.windows(2) {
                if ts(&pair[0].1) == ts(&pair[1].1) {
                    return Err(Error::row(
                        file,
                        pair[1].0,
                        format!("duplicate timestamp {} for user {user}", ts(&pair[1].1)),
                    ));
                }
            }
            Ok((user, rows.into_iter().map(|(_, r)| r).collect()))
        })
        .collect()
}

/// Writes the dataset back out in the same five-file layout.
pub fn write_dataset(ds: &RawDataset, root: &Path) -> Result<()> {
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;

    let mut w = writer(root, GPS_FILE, GPS_HEADER)?;
    for (user, samples) in &ds.gps {
        for s in samples {
            w.write_record([
                user.as_str(),
                &s.timestamp.to_string(),
                &s.latitude.to_string(),
                &s.longitude.to_string(),
                &s.accuracy_m.to_string(),
            ])?;
        }
    }
    flush(w, root, GPS_FILE)?;

    let mut w = writer(root, ACTIVITY_FILE, ACTIVITY_HEADER)?;
    for (user, samples) in &ds.activity {
        for s in samples {
            w.write_record([user.as_str(), &s.timestamp.to_string(), s.activity.as_str()])?;
        }
    }
    flush(w, root, ACTIVITY_FILE)?;

    let mut w = writer(root, STRESS_FILE, STRESS_HEADER)?;
    for (user, reports) in &ds.stress {
        for r in reports {
            w.write_record([user.as_str(), &r.timestamp.to_string(), &r.level.to_string()])?;
        }
    }
    flush(w, root, STRESS_FILE)?;

    let mut w = writer(root, DEADLINES_FILE, DEADLINES_HEADER)?;
    for (user, cal) in &ds.deadlines {
        for d in &cal.deadline_days {
            w.write_record([user.as_str(), &d.format("%Y-%m-%d").to_string()])?;
        }
    }
    flush(w, root, DEADLINES_FILE)?;

    let mut w = writer(root, PERSONALITY_FILE, PERSONALITY_HEADER)?;
    for (user, p) in &ds.personality {
        w.write_record([
            user.as_str(),
            &p.extroversion.to_string(),
            &p.neuroticism.to_string(),
            &p.agreeableness.to_string(),
            &p.conscientiousness.to_string(),
            &p.openness.to_string(),
        ])?;
    }
    flush(w, root, PERSONALITY_FILE)
}

fn writer(root: &Path, name: &str, header: &[&str]) -> Result<csv::Writer<File>> {
    let path = root.join(name);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header)?;
    Ok(w)
}

fn flush(mut w: csv::Writer<File>, root: &Path, name: &str) -> Result<()> {
    w.flush().map_err(|e| Error::io(root.join(name), e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserReport {
    pub user_id: String,
    pub gps_samples: usize,
    pub activity_samples: usize,
    pub stress_reports: usize,
    pub deadlines: usize,
    pub has_personality: bool,
    /// Local days from the first to the last timestamped record, inclusive.
    pub study_days: usize,
    pub days_with_stress: usize,
    pub stress_coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub users: Vec<UserReport>,
    pub excluded: Vec<String>,
    pub missing_personality: Vec<String>,
}

pub fn validate_dataset(ds: &RawDataset) -> ValidationReport {
    let tz = ds.timezone;
    let users = ds
        .users
        .iter()
        .map(|user| {
            let gps = ds.gps_of(user);
            let act = ds.activity_of(user);
            let stress = ds.stress_of(user);
            let stamps = gps
                .iter()
                .map(|s| s.timestamp)
                .chain(act.iter().map(|s| s.timestamp))
                .chain(stress.iter().map(|s| s.timestamp));
            let (lo, hi) = stamps.fold((i64::MAX, i64::MIN), |(lo, hi), t| (lo.min(t), hi.max(t)));
            let study_days = if lo <= hi {
                (local_date(tz, hi) - local_date(tz, lo)).num_days() as usize + 1
            } else {
                0
            };
            let stress_days: BTreeSet<NaiveDate> = stress.iter().map(|r| local_date(tz, r.timestamp)).collect();
            UserReport {
                user_id: user.clone(),
                gps_samples: gps.len(),
                activity_samples: act.len(),
                stress_reports: stress.len(),
                deadlines: ds.deadlines.get(user).map_or(0, |c| c.deadline_days.len()),
                has_personality: ds.personality.contains_key(user),
                study_days,
                days_with_stress: stress_days.len(),
                stress_coverage: if study_days == 0 {
                    0.0
                } else {
                    stress_days.len() as f64 / study_days as f64
                },
            }
        })
        .collect();
    ValidationReport {
        users,
        excluded: ds.excluded.iter().cloned().collect(),
        missing_personality: ds
            .users
            .iter()
            .filter(|u| !ds.personality.contains_key(*u))
            .cloned()
            .collect(),
    }
}
