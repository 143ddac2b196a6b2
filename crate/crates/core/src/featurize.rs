//! Study variables and units on the four-hour sampling grid.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use chrono_tz::Tz;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::{csv_reader, csv_writer, finish, parse_field};
use crate::calendar::{day_start, local_date, local_instant};
use crate::error::{Error, Result};
use crate::geocluster::{Clustering, Visit};
use crate::ingest::{ActivityClass, ActivitySample, DeadlineCalendar, PersonalityScores, RawDataset, StressReport};
use crate::placesem::{PlaceLabel, PlaceLabels};

/// Sampling times as offsets from local midnight. The default grid is
/// 04:00, 08:00, ..., 24:00.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingGrid {
    offsets_s: Vec<i64>,
}

impl Default for SamplingGrid {
    fn default() -> Self {
        SamplingGrid {
            offsets_s: (1..=6).map(|k| k * 4 * 3600).collect(),
        }
    }
}

impl SamplingGrid {
    pub fn new(offsets_s: Vec<i64>) -> Result<Self> {
        let increasing = offsets_s.windows(2).all(|w| w[0] < w[1]);
        let within_day = offsets_s.first().is_some_and(|&f| f > 0) && offsets_s.last().is_some_and(|&l| l <= 86_400);
        if !increasing || !within_day {
            return Err(Error::Invalid(
                "sampling grid must be strictly increasing within (00:00, 24:00]".into(),
            ));
        }
        Ok(SamplingGrid { offsets_s })
    }

    pub fn len(&self) -> usize {
        self.offsets_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets_s.is_empty()
    }

    pub fn offset(&self, t_index: usize) -> i64 {
        self.offsets_s[t_index]
    }

    /// End of the stress window that starts at `t_index`. The last window
    /// runs into the next day up to the first sampling time.
    pub fn window_end(&self, t_index: usize) -> i64 {
        self.offsets_s
            .get(t_index + 1)
            .copied()
            .unwrap_or(86_400 + self.offsets_s[0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub t_days: u32,
    pub exercise_merge_gap_s: i64,
    pub min_exercise_bout_s: i64,
    /// Count walking bouts as exercise too.
    pub include_walking: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            t_days: 3,
            exercise_merge_gap_s: 300,
            min_exercise_bout_s: 300,
            include_walking: false,
        }
    }
}

/// The thirteen study variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variable {
    #[serde(rename = "S")]
    Stress,
    #[serde(rename = "H")]
    Home,
    #[serde(rename = "U")]
    University,
    #[serde(rename = "O")]
    OtherPlaces,
    #[serde(rename = "E")]
    Exercise,
    #[serde(rename = "SC")]
    Social,
    #[serde(rename = "PS")]
    PrevStress,
    #[serde(rename = "D")]
    Deadlines,
    #[serde(rename = "extro")]
    Extroversion,
    #[serde(rename = "neuro")]
    Neuroticism,
    #[serde(rename = "agree")]
    Agreeableness,
    #[serde(rename = "consc")]
    Conscientiousness,
    #[serde(rename = "open")]
    Openness,
}

impl Variable {
    pub const ALL: [Variable; 13] = [
        Variable::Stress,
        Variable::Home,
        Variable::University,
        Variable::OtherPlaces,
        Variable::Exercise,
        Variable::Social,
        Variable::PrevStress,
        Variable::Deadlines,
        Variable::Extroversion,
        Variable::Neuroticism,
        Variable::Agreeableness,
        Variable::Conscientiousness,
        Variable::Openness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variable::Stress => "S",
            Variable::Home => "H",
            Variable::University => "U",
            Variable::OtherPlaces => "O",
            Variable::Exercise => "E",
            Variable::Social => "SC",
            Variable::PrevStress => "PS",
            Variable::Deadlines => "D",
            Variable::Extroversion => "extro",
            Variable::Neuroticism => "neuro",
            Variable::Agreeableness => "agree",
            Variable::Conscientiousness => "consc",
            Variable::Openness => "open",
        }
    }

    pub fn is_personality(self) -> bool {
        matches!(
            self,
            Variable::Extroversion
                | Variable::Neuroticism
                | Variable::Agreeableness
                | Variable::Conscientiousness
                | Variable::Openness
        )
    }
}

impl FromStr for Variable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variable::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown variable {s:?}")))
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One participant-day-sampling-time observation. Sojourn fields are
/// seconds accumulated from local midnight up to the sampling time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub user_id: String,
    pub day: NaiveDate,
    pub t_index: usize,
    pub home_s: f64,
    pub university_s: f64,
    pub other_s: f64,
    pub exercise_s: f64,
    pub social_s: f64,
    pub stress: f64,
    pub prev_stress: f64,
    pub deadline_pressure: f64,
    pub personality: Option<PersonalityScores>,
}

impl Unit {
    /// `None` only for personality variables of users without scores.
    pub fn get(&self, v: Variable) -> Option<f64> {
        let p = self.personality.as_ref();
        match v {
            Variable::Stress => Some(self.stress),
            Variable::Home => Some(self.home_s),
            Variable::University => Some(self.university_s),
            Variable::OtherPlaces => Some(self.other_s),
            Variable::Exercise => Some(self.exercise_s),
            Variable::Social => Some(self.social_s),
            Variable::PrevStress => Some(self.prev_stress),
            Variable::Deadlines => Some(self.deadline_pressure),
            Variable::Extroversion => p.map(|p| p.extroversion),
            Variable::Neuroticism => p.map(|p| p.neuroticism),
            Variable::Agreeableness => p.map(|p| p.agreeableness),
            Variable::Conscientiousness => p.map(|p| p.conscientiousness),
            Variable::Openness => p.map(|p| p.openness),
        }
    }

    pub fn set(&mut self, v: Variable, value: f64) {
        match v {
            Variable::Stress => self.stress = value,
            Variable::Home => self.home_s = value,
            Variable::University => self.university_s = value,
            Variable::OtherPlaces => self.other_s = value,
            Variable::Exercise => self.exercise_s = value,
            Variable::Social => self.social_s = value,
            Variable::PrevStress => self.prev_stress = value,
            Variable::Deadlines => self.deadline_pressure = value,
            _ => {
                if let Some(p) = self.personality.as_mut() {
                    match v {
                        Variable::Extroversion => p.extroversion = value,
                        Variable::Neuroticism => p.neuroticism = value,
                        Variable::Agreeableness => p.agreeableness = value,
                        Variable::Conscientiousness => p.conscientiousness = value,
                        _ => p.openness = value,
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Sojourn {
    pub home: i64,
    pub university: i64,
    /// Everywhere except home and university, social venues included.
    pub other: i64,
    pub social: i64,
}

fn label_of(labels: &std::collections::BTreeMap<u32, PlaceLabel>, cluster: u32) -> PlaceLabel {
    labels.get(&cluster).copied().unwrap_or(PlaceLabel::Other)
}

/// Time at each place category within `[from, to)`.
pub fn sojourn_seconds(
    visits: &[Visit],
    labels: &std::collections::BTreeMap<u32, PlaceLabel>,
    from: i64,
    to: i64,
) -> Sojourn {
    let mut out = Sojourn::default();
    for v in visits {
        let secs = v.clipped(from, to);
        if secs == 0 {
            continue;
        }
        match label_of(labels, v.cluster_id) {
            PlaceLabel::Home => out.home += secs,
            PlaceLabel::WorkUniversity => out.university += secs,
            PlaceLabel::SocializationVenue => {
                out.other += secs;
                out.social += secs;
            }
            PlaceLabel::GymSports | PlaceLabel::Other => out.other += secs,
        }
    }
    out
}

/// Maximal runs of exercise-class activity samples whose gaps stay within
/// `exercise_merge_gap_s`, kept when they last at least
/// `min_exercise_bout_s`.
pub fn exercise_bouts(activity: &[ActivitySample], cfg: &FeatureConfig) -> Vec<(i64, i64)> {
    let counts = |a: ActivityClass| a == ActivityClass::Running || (cfg.include_walking && a == ActivityClass::Walking);
    let mut bouts = Vec::new();
    let mut open: Option<(i64, i64)> = None;
    for s in activity {
        if counts(s.activity) {
            open = match open {
                Some((start, last)) if s.timestamp - last <= cfg.exercise_merge_gap_s => Some((start, s.timestamp)),
                Some(bout) => {
                    bouts.push(bout);
                    Some((s.timestamp, s.timestamp))
                }
                None => Some((s.timestamp, s.timestamp)),
            };
        } else if let Some(bout) = open.take() {
            bouts.push(bout);
        }
    }
    bouts.extend(open);
    bouts.retain(|&(a, b)| b - a >= cfg.min_exercise_bout_s);
    bouts
}

/// Measure of the union of intervals clipped to `[from, to)`.
fn union_length(mut intervals: Vec<(i64, i64)>, from: i64, to: i64) -> i64 {
    intervals.retain_mut(|iv| {
        iv.0 = iv.0.max(from);
        iv.1 = iv.1.min(to);
        iv.1 > iv.0
    });
    intervals.sort_unstable();
    let mut total = 0;
    let mut current: Option<(i64, i64)> = None;
    for (a, b) in intervals {
        current = match current {
            Some((ca, cb)) if a <= cb => Some((ca, cb.max(b))),
            Some((ca, cb)) => {
                total += cb - ca;
                Some((a, b))
            }
            None => Some((a, b)),
        };
    }
    total + current.map_or(0, |(a, b)| b - a)
}

/// Gym time plus exercise bouts within `[from, to)`, overlaps counted once.
pub fn exercise_seconds(
    visits: &[Visit],
    labels: &std::collections::BTreeMap<u32, PlaceLabel>,
    bouts: &[(i64, i64)],
    from: i64,
    to: i64,
) -> i64 {
    let intervals = visits
        .iter()
        .filter(|v| label_of(labels, v.cluster_id) == PlaceLabel::GymSports)
        .map(|v| (v.enter_ts, v.exit_ts))
        .chain(bouts.iter().copied())
        .collect();
    union_length(intervals, from, to)
}

/// Inverse-distance weighted count of deadlines falling strictly within the
/// next `t_days` days; deadlines on `day` itself do not count.
pub fn deadline_pressure(calendar: &DeadlineCalendar, day: NaiveDate, t_days: u32) -> f64 {
    calendar
        .deadline_days
        .iter()
        .map(|&j| (j - day).num_days())
        .filter(|&gap| gap > 0 && gap < i64::from(t_days))
        .map(|gap| 1.0 / gap as f64)
        .sum()
}

/// Mean stress level over reports in `[from, to)`; reports must be sorted.
pub fn aggregate_stress(reports: &[StressReport], from: i64, to: i64) -> Option<f64> {
    let lo = reports.partition_point(|r| r.timestamp < from);
    let hi = reports.partition_point(|r| r.timestamp < to);
    let window = &reports[lo..hi];
    (!window.is_empty()).then(|| window.iter().map(|r| r.level).sum::<f64>() / window.len() as f64)
}

/// Last report on the local day before `day`.
pub fn previous_day_stress(reports: &[StressReport], tz: Tz, day: NaiveDate) -> Option<f64> {
    let from = day_start(tz, day.pred_opt()?);
    let to = day_start(tz, day);
    let hi = reports.partition_point(|r| r.timestamp < to);
    reports[..hi].last().filter(|r| r.timestamp >= from).map(|r| r.level)
}

/// Units of one user, ordered by day then sampling time.
#[allow(clippy::too_many_arguments)]
pub fn build_user_units(
    user: &str,
    ds: &RawDataset,
    visits: &[Visit],
    labels: &std::collections::BTreeMap<u32, PlaceLabel>,
    grid: &SamplingGrid,
    cfg: &FeatureConfig,
) -> Vec<Unit> {
    let tz = ds.timezone;
    let reports = ds.stress_of(user);
    let bouts = exercise_bouts(ds.activity_of(user), cfg);
    let empty = DeadlineCalendar::default();
    let calendar = ds.deadlines.get(user).unwrap_or(&empty);
    let personality = ds.personality.get(user).copied();

    // reports shortly after midnight feed the previous day's last window
    let days: BTreeSet<NaiveDate> = reports
        .iter()
        .flat_map(|r| {
            let d = local_date(tz, r.timestamp);
            [d.pred_opt(), Some(d)]
        })
        .flatten()
        .collect();

    let mut units = Vec::new();
    for day in days {
        let Some(prev_stress) = previous_day_stress(reports, tz, day) else {
            continue;
        };
        let start = day_start(tz, day);
        let deadline = deadline_pressure(calendar, day, cfg.t_days);
        for t_index in 0..grid.len() {
            let t = local_instant(tz, day, grid.offset(t_index));
            let window_end = local_instant(tz, day, grid.window_end(t_index));
            let Some(stress) = aggregate_stress(reports, t, window_end) else {
                continue;
            };
            let soj = sojourn_seconds(visits, labels, start, t);
            let exercise = exercise_seconds(visits, labels, &bouts, start, t);
            units.push(Unit {
                user_id: user.to_string(),
                day,
                t_index,
                home_s: soj.home as f64,
                university_s: soj.university as f64,
                other_s: soj.other as f64,
                exercise_s: exercise as f64,
                social_s: soj.social as f64,
                stress,
                prev_stress,
                deadline_pressure: deadline,
                personality,
            });
        }
    }
    units
}

/// Units for every user that has labels, sorted by (user, day, t_index).
/// Users flagged without a home contribute nothing.
pub fn build_units(
    ds: &RawDataset,
    clustering: &Clustering,
    labels: &PlaceLabels,
    grid: &SamplingGrid,
    cfg: &FeatureConfig,
) -> Vec<Unit> {
    let users: Vec<&str> = ds.included_users().filter(|u| labels.of(u).is_some()).collect();
    users
        .par_iter()
        .map(|u| {
            let user_labels = labels.of(u).expect("filtered above");
            build_user_units(u, ds, clustering.visits_of(u), user_labels, grid, cfg)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

pub const UNITS_FILE: &str = "units.csv";
const UNITS_HEADER: &[&str] = &[
    "user_id", "day", "t_index", "H", "U", "O", "E", "SC", "S", "PS", "D", "extro", "neuro", "agree", "consc", "open",
];

pub fn write_units_csv(path: &Path, units: &[Unit], provenance: Option<&str>) -> Result<()> {
    let mut w = csv_writer(path, provenance, UNITS_HEADER)?;
    for u in units {
        let mut row = vec![
            u.user_id.clone(),
            u.day.format("%Y-%m-%d").to_string(),
            u.t_index.to_string(),
        ];
        for v in [
            Variable::Home,
            Variable::University,
            Variable::OtherPlaces,
            Variable::Exercise,
            Variable::Social,
            Variable::Stress,
            Variable::PrevStress,
            Variable::Deadlines,
            Variable::Extroversion,
            Variable::Neuroticism,
            Variable::Agreeableness,
            Variable::Conscientiousness,
            Variable::Openness,
        ] {
            row.push(u.get(v).map(|x| x.to_string()).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    finish(w, path)
}

pub fn read_units_csv(path: &Path) -> Result<Vec<Unit>> {
    let mut units = Vec::new();
    for rec in csv_reader(path, UNITS_HEADER)?.records() {
        let rec = rec?;
        let f = |i| parse_field::<f64>(&rec, i, UNITS_FILE);
        let day: String = parse_field(&rec, 1, UNITS_FILE)?;
        let day = NaiveDate::parse_from_str(&day, "%Y-%m-%d")
            .map_err(|e| Error::Invalid(format!("{UNITS_FILE}: bad day {day:?}: {e}")))?;
        let personality = if rec.get(11).is_some_and(|s| !s.is_empty()) {
            Some(PersonalityScores {
                extroversion: f(11)?,
                neuroticism: f(12)?,
                agreeableness: f(13)?,
                conscientiousness: f(14)?,
                openness: f(15)?,
            })
        } else {
            None
        };
        units.push(Unit {
            user_id: parse_field(&rec, 0, UNITS_FILE)?,
            day,
            t_index: parse_field(&rec, 2, UNITS_FILE)?,
            home_s: f(3)?,
            university_s: f(4)?,
            other_s: f(5)?,
            exercise_s: f(6)?,
            social_s: f(7)?,
            stress: f(8)?,
            prev_stress: f(9)?,
            deadline_pressure: f(10)?,
            personality,
        });
    }
    Ok(units)
}
