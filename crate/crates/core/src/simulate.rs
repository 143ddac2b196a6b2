//! Synthetic participants with a planted exercise effect on stress.
//!
//! Each participant lives at a private home, commutes to one of a few campus
//! buildings, sometimes stops at an unlabeled place or a social venue in the
//! evening, and reports stress a couple of times a day. On some mornings
//! the commute is a run instead of a walk; a run is an exercise bout, so the
//! units after it are treated under the `E > 0` rule. Runs and walks take
//! equally long, so no sojourn variable is displaced by the treatment.
//!
//! Confounding flows through extroversion, neuroticism, agreeableness,
//! deadline pressure and the previous day's stress, which drive both the
//! chance of running and the stress level.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{Duration, NaiveDate};
use chrono_tz::Tz;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calendar::{local_date, local_instant, parse_timezone};
use crate::design::Design;
use crate::error::{Error, Result};
use crate::featurize::{deadline_pressure, Unit, Variable};
use crate::geo::{CampusBoundary, LatLon};
use crate::ingest::{
    write_dataset, ActivityClass, ActivitySample, DeadlineCalendar, GpsSample, PersonalityScores, RawDataset,
    StressReport,
};
use crate::placesem::{PoiKeyword, PoiRecord, PoiStore, POI_FILE};

pub const CAMPUS_FILE: &str = "campus.geojsonl";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

const HOUR: i64 = 3600;
const MINUTE: i64 = 60;
const METERS_PER_DEGREE: f64 = 111_195.0;
/// Sampling-time spacing assumed when planting the effect (the default grid).
const SLOT: i64 = 4 * HOUR;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Geography {
    pub center_lat: f64,
    pub center_lon: f64,
    /// Half the side of the square campus.
    pub campus_half_side_m: f64,
    pub home_min_m: f64,
    pub home_max_m: f64,
    pub n_buildings: usize,
    pub n_venues: usize,
    pub n_other_places: usize,
}

impl Default for Geography {
    fn default() -> Self {
        Geography {
            center_lat: 43.7044,
            center_lon: -72.2887,
            campus_half_side_m: 400.0,
            home_min_m: 1_000.0,
            home_max_m: 3_000.0,
            n_buildings: 3,
            n_venues: 4,
            n_other_places: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_users: usize,
    pub n_days: usize,
    pub seed: u64,
    pub start_date: NaiveDate,
    pub timezone: String,
    pub true_ate: f64,
    pub confounding_strength: f64,
    pub noise_sd: f64,
    /// Chance that a participant reports stress on a given day.
    pub report_prob: f64,
    pub geography: Geography,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_users: 60,
            n_days: 70,
            seed: 1,
            start_date: NaiveDate::from_ymd_opt(2024, 1, 8).expect("valid date"),
            timezone: "America/New_York".into(),
            true_ate: -0.5,
            confounding_strength: 0.7,
            noise_sd: 0.5,
            report_prob: 0.8,
            geography: Geography::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<Tz> {
        let bad = |m: String| Err(Error::Invalid(format!("simulation config: {m}")));
        if self.n_users < 2 {
            return bad(format!("n_users must be at least 2, got {}", self.n_users));
        }
        if self.n_days < 2 {
            return bad(format!("n_days must be at least 2, got {}", self.n_days));
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd must be positive, got {}", self.noise_sd));
        }
        if !(self.report_prob > 0.0 && self.report_prob <= 1.0) {
            return bad(format!("report_prob must lie in (0, 1], got {}", self.report_prob));
        }
        if !self.true_ate.is_finite() || !self.confounding_strength.is_finite() {
            return bad("true_ate and confounding_strength must be finite".into());
        }
        let g = &self.geography;
        if !(g.home_min_m > 0.0 && g.home_max_m > g.home_min_m && g.campus_half_side_m > 100.0) {
            return bad("geography distances are inconsistent".into());
        }
        if g.n_buildings == 0 || g.n_venues == 0 {
            return bad("geography needs at least one building and one venue".into());
        }
        parse_timezone(&self.timezone)
    }
}

/// Window-level truth: every sampling-time window with at least one report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitTruth {
    pub user_id: String,
    pub day: NaiveDate,
    pub t_index: usize,
    pub treated: bool,
    pub stress: f64,
    pub stress_untreated: f64,
    pub stress_treated: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub true_ate: f64,
    pub confounding_strength: f64,
    /// Treated minus control mean stress over all windows, unmatched.
    pub naive_ate: f64,
    pub units: Vec<UnitTruth>,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub dataset: RawDataset,
    pub pois: PoiStore,
    pub campus: CampusBoundary,
    pub truth: GroundTruth,
}

fn offset(p: LatLon, north_m: f64, east_m: f64) -> LatLon {
    LatLon::new(
        p.lat + north_m / METERS_PER_DEGREE,
        p.lon + east_m / (METERS_PER_DEGREE * p.lat.to_radians().cos()),
    )
}

fn polar(rng: &mut ChaCha8Rng, center: LatLon, min_m: f64, max_m: f64) -> LatLon {
    let r = rng.random_range(min_m..max_m);
    let a = rng.random_range(0.0..std::f64::consts::TAU);
    offset(center, r * a.cos(), r * a.sin())
}

struct World {
    center: LatLon,
    campus: CampusBoundary,
    buildings: Vec<LatLon>,
    venues: Vec<PoiRecord>,
    others: Vec<LatLon>,
    gym: PoiRecord,
    courses: Vec<BTreeSet<NaiveDate>>,
}

fn build_world(cfg: &SimConfig) -> Result<World> {
    let g = &cfg.geography;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(u64::MAX);
    let center = LatLon::new(g.center_lat, g.center_lon);
    let h = g.campus_half_side_m;
    let campus = CampusBoundary::new(vec![
        offset(center, -h, -h),
        offset(center, -h, h),
        offset(center, h, h),
        offset(center, h, -h),
    ])?;
    // buildings well inside the square, at least 150 m apart
    let mut buildings: Vec<LatLon> = Vec::new();
    let mut attempts = 0;
    while buildings.len() < g.n_buildings {
        let b = offset(
            center,
            rng.random_range(-0.6 * h..0.6 * h),
            rng.random_range(-0.6 * h..0.6 * h),
        );
        attempts += 1;
        if attempts > 1_000 || buildings.iter().all(|&o| crate::geo::haversine_m(o, b) > 150.0) {
            buildings.push(b);
        }
    }
    let kinds = [
        PoiKeyword::Bar,
        PoiKeyword::Cafe,
        PoiKeyword::Restaurant,
        PoiKeyword::NightClub,
        PoiKeyword::MovieTheater,
    ];
    let ring = (h * 1.6, h * 1.6 + 900.0);
    let venues = (0..g.n_venues)
        .map(|i| {
            let p = polar(&mut rng, center, ring.0, ring.1);
            PoiRecord {
                name: format!("venue_{i}"),
                latitude: p.lat,
                longitude: p.lon,
                keyword: kinds[i % kinds.len()],
            }
        })
        .collect();
    let others = (0..g.n_other_places)
        .map(|_| polar(&mut rng, center, ring.0, ring.1))
        .collect();
    let gp = polar(&mut rng, center, ring.0, ring.1);
    let gym = PoiRecord {
        name: "gym_0".into(),
        latitude: gp.lat,
        longitude: gp.lon,
        keyword: PoiKeyword::Gym,
    };
    let end = cfg.start_date + Duration::days(cfg.n_days as i64 + 3);
    let courses = (0..4)
        .map(|_| {
            let mut days = BTreeSet::new();
            let mut d = cfg.start_date + Duration::days(rng.random_range(2..8));
            while d < end {
                days.insert(d);
                d += Duration::days(rng.random_range(4..10));
            }
            days
        })
        .collect();
    Ok(World {
        center,
        campus,
        buildings,
        venues,
        others,
        gym,
        courses,
    })
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Latent trait on the score scale, clamped to 1..5; returns (score, z).
fn trait_score(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let z: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
    let score = (3.0 + 0.7 * z).clamp(1.0, 5.0);
    (score, (score - 3.0) / 0.7)
}

struct Tracer<'a> {
    rng: &'a mut ChaCha8Rng,
    gps: Vec<GpsSample>,
    activity: Vec<ActivitySample>,
    jitter: Normal<f64>,
}

impl Tracer<'_> {
    fn fix(&mut self, ts: i64, at: LatLon, class: ActivityClass) {
        let inaccurate = self.rng.random::<f64>() < 0.02;
        let (accuracy, spread) = if inaccurate {
            (self.rng.random_range(60.0..150.0), 15.0)
        } else {
            (self.rng.random_range(5.0..30.0), 1.0)
        };
        let p = offset(
            at,
            self.jitter.sample(self.rng) * spread,
            self.jitter.sample(self.rng) * spread,
        );
        self.gps.push(GpsSample {
            timestamp: ts,
            latitude: p.lat,
            longitude: p.lon,
            accuracy_m: (accuracy * 10.0_f64).round() / 10.0,
        });
        self.activity.push(ActivitySample {
            timestamp: ts,
            activity: class,
        });
    }

    /// Samples `[start, end]` inclusive every ten minutes.
    fn stay(&mut self, at: LatLon, start: i64, end: i64) {
        let mut ts = start;
        while ts < end {
            self.fix(ts, at, ActivityClass::Stationary);
            ts += 10 * MINUTE;
        }
        self.fix(end, at, ActivityClass::Stationary);
    }

    /// Samples strictly inside `(start, end)` every two minutes. Returns the
    /// first sample time.
    fn travel(&mut self, from: LatLon, to: LatLon, start: i64, end: i64, class: ActivityClass) -> i64 {
        let mut ts = start + MINUTE;
        let first = ts;
        while ts < end {
            let f = (ts - start) as f64 / (end - start) as f64;
            let p = LatLon::new(from.lat + f * (to.lat - from.lat), from.lon + f * (to.lon - from.lon));
            self.fix(ts, p, class);
            ts += 2 * MINUTE;
        }
        first
    }
}

struct UserOutput {
    id: String,
    gps: Vec<GpsSample>,
    activity: Vec<ActivitySample>,
    stress: Vec<StressReport>,
    deadlines: DeadlineCalendar,
    personality: PersonalityScores,
    truth: Vec<UnitTruth>,
}

fn simulate_user(cfg: &SimConfig, world: &World, tz: Tz, index: usize) -> UserOutput {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let cs = cfg.confounding_strength;
    let noise = Normal::new(0.0, cfg.noise_sd).expect("validated");
    let mood_step = Normal::new(0.0, 0.35).expect("positive sd");
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    let (extro, z_e) = trait_score(&mut rng);
    let (neuro, z_n) = trait_score(&mut rng);
    let (agree, z_a) = trait_score(&mut rng);
    let (consc, _) = trait_score(&mut rng);
    let (open, _) = trait_score(&mut rng);
    let personality = PersonalityScores {
        extroversion: extro,
        neuroticism: neuro,
        agreeableness: agree,
        conscientiousness: consc,
        openness: open,
    };
    let home = polar(
        &mut rng,
        world.center,
        cfg.geography.home_min_m,
        cfg.geography.home_max_m,
    );
    let mut deadlines = DeadlineCalendar::default();
    for course in &world.courses {
        if rng.random::<f64>() < 0.6 {
            deadlines.deadline_days.extend(course.iter().copied());
        }
    }

    let mut tracer = Tracer {
        rng: &mut rng,
        gps: Vec::new(),
        activity: Vec::new(),
        jitter: Normal::new(0.0, 4.0).expect("positive sd"),
    };
    let mut stress: Vec<StressReport> = Vec::new();
    let mut truth = Vec::new();
    let mut mood = 0.0;
    let mut home_since = local_instant(tz, cfg.start_date, 0);

    for k in 0..cfg.n_days {
        let day = cfg.start_date + Duration::days(k as i64);
        let at = |off: i64| local_instant(tz, day, off);
        let d = deadline_pressure(&deadlines, day, 3);
        let prev_day = day - Duration::days(1);
        let ps = stress
            .iter()
            .rev()
            .find(|r| local_date(tz, r.timestamp) == prev_day)
            .map_or(3.0, |r| r.level);
        mood = 0.6 * mood + mood_step.sample(tracer.rng);

        let propensity = -0.3 + cs * (0.9 * z_e - 0.7 * z_n + 0.3 * z_a - 1.2 * (d - 0.5) - 0.6 * (ps - 3.0));
        let runs = tracer.rng.random::<f64>() < logistic(propensity);

        // morning commute
        let depart = at(tracer.rng.random_range(7 * HOUR..10 * HOUR));
        tracer.stay(home, home_since, depart);
        let building = world.buildings[tracer.rng.random_range(0..world.buildings.len())];
        let commute = tracer.rng.random_range(18 * MINUTE..25 * MINUTE);
        let class = if runs {
            ActivityClass::Running
        } else {
            ActivityClass::Walking
        };
        let run_start = tracer.travel(home, building, depart, depart + commute, class);
        let run_start = runs.then_some(run_start);

        // campus, then optional errands and venue
        let mut t = depart + commute;
        let hours = (4.0 + 1.5 * d + unit.sample(tracer.rng)).clamp(1.5, 10.0);
        let leave = t + (hours * HOUR as f64) as i64;
        tracer.stay(building, t, leave);
        t = leave;
        let mut here = building;
        if !world.others.is_empty() && tracer.rng.random::<f64>() < 0.3 {
            let place = world.others[tracer.rng.random_range(0..world.others.len())];
            tracer.travel(here, place, t, t + 15 * MINUTE, ActivityClass::Walking);
            t += 15 * MINUTE;
            let until = t + tracer.rng.random_range(30 * MINUTE..90 * MINUTE);
            tracer.stay(place, t, until);
            (t, here) = (until, place);
        }
        if tracer.rng.random::<f64>() < logistic(-0.5 + z_e) {
            let v = &world.venues[tracer.rng.random_range(0..world.venues.len())];
            tracer.travel(here, v.position(), t, t + 15 * MINUTE, ActivityClass::Walking);
            t += 15 * MINUTE;
            let until = t + tracer.rng.random_range(HOUR..3 * HOUR);
            tracer.stay(v.position(), t, until);
            (t, here) = (until, v.position());
        }
        tracer.travel(here, home, t, t + 20 * MINUTE, ActivityClass::Walking);
        home_since = t + 20 * MINUTE;

        // stress reports between 06:00 and 01:00 the next night
        if tracer.rng.random::<f64>() >= cfg.report_prob {
            continue;
        }
        let count = if tracer.rng.random::<f64>() < 0.3 { 2 } else { 1 };
        let mut offsets: Vec<i64> = (0..count)
            .map(|_| tracer.rng.random_range(6 * HOUR..25 * HOUR))
            .collect();
        offsets.sort_unstable();
        offsets.dedup();
        let base = 3.0 + cs * (0.5 * z_n - 0.4 * z_e - 0.2 * z_a + 0.6 * (d - 0.5)) + mood;
        let mut windows: BTreeMap<usize, (bool, Vec<f64>)> = BTreeMap::new();
        for off in offsets {
            let t_index = (((off - SLOT) / SLOT) as usize).min(5);
            let slot_start = at(SLOT * (t_index as i64 + 1));
            let treated = run_start.is_some_and(|s| s < slot_start);
            let level = base + if treated { cfg.true_ate } else { 0.0 } + noise.sample(tracer.rng);
            let level = (level * 1000.0).round() / 1000.0;
            stress.push(StressReport {
                timestamp: at(off),
                level,
            });
            windows.entry(t_index).or_insert((treated, Vec::new())).1.push(level);
        }
        for (t_index, (treated, levels)) in windows {
            let mean = levels.iter().sum::<f64>() / levels.len() as f64;
            let untreated = mean - if treated { cfg.true_ate } else { 0.0 };
            truth.push(UnitTruth {
                user_id: user_id(index),
                day,
                t_index,
                treated,
                stress: mean,
                stress_untreated: untreated,
                stress_treated: untreated + cfg.true_ate,
            });
        }
    }
    let end = local_instant(tz, cfg.start_date + Duration::days(cfg.n_days as i64), 7 * HOUR);
    tracer.stay(home, home_since, end.max(home_since + 10 * MINUTE));
    let Tracer { gps, activity, .. } = tracer;
    UserOutput {
        id: user_id(index),
        gps,
        activity,
        stress,
        deadlines,
        personality,
        truth,
    }
}

fn user_id(index: usize) -> String {
    format!("u{index:03}")
}

/// Generates the full synthetic study. Each participant draws from its own
/// random stream, so the output is identical for any thread count.
pub fn generate(cfg: &SimConfig) -> Result<Simulation> {
    let tz = cfg.validate()?;
    let world = build_world(cfg)?;
    let users: Vec<UserOutput> = (0..cfg.n_users)
        .into_par_iter()
        .map(|i| simulate_user(cfg, &world, tz, i))
        .collect();

    let mut gps = BTreeMap::new();
    let mut activity = BTreeMap::new();
    let mut stress = BTreeMap::new();
    let mut deadlines = BTreeMap::new();
    let mut personality = BTreeMap::new();
    let mut units = Vec::new();
    for u in users {
        gps.insert(u.id.clone(), u.gps);
        activity.insert(u.id.clone(), u.activity);
        stress.insert(u.id.clone(), u.stress);
        deadlines.insert(u.id.clone(), u.deadlines);
        personality.insert(u.id.clone(), u.personality);
        units.extend(u.truth);
    }
    let dataset = RawDataset::from_streams(tz, gps, activity, stress, deadlines, personality)?;
    let naive = naive_from_truth(&units);
    let mut pois = world.venues.clone();
    pois.push(world.gym.clone());
    Ok(Simulation {
        dataset,
        pois: PoiStore::new(pois),
        campus: world.campus,
        truth: GroundTruth {
            seed: cfg.seed,
            true_ate: cfg.true_ate,
            confounding_strength: cfg.confounding_strength,
            naive_ate: naive,
            units,
        },
    })
}

fn naive_from_truth(units: &[UnitTruth]) -> f64 {
    let mean = |treated: bool| {
        let v: Vec<f64> = units
            .iter()
            .filter(|u| u.treated == treated)
            .map(|u| u.stress)
            .collect();
        if v.is_empty() {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    mean(true) - mean(false)
}

/// Writes the ingest CSV suite, `poi.csv`, `campus.geojsonl` and
/// `ground_truth.json` into `dir`.
pub fn write_simulation(sim: &Simulation, dir: &Path) -> Result<()> {
    write_dataset(&sim.dataset, dir)?;
    sim.pois.write(&dir.join(POI_FILE))?;
    let campus = dir.join(CAMPUS_FILE);
    std::fs::write(&campus, sim.campus.to_json_line() + "\n").map_err(|e| Error::io(&campus, e))?;
    let truth = dir.join(GROUND_TRUTH_FILE);
    let json = serde_json::to_string_pretty(&sim.truth)?;
    std::fs::write(&truth, json + "\n").map_err(|e| Error::io(&truth, e))
}

/// Mean outcome of treated units minus that of control units, pooled over
/// every designed stratum, without matching.
pub fn naive_ate(units: &[Unit], design: &Design, outcome: Variable) -> Result<f64> {
    let mean = |pick: &dyn Fn(&crate::design::Stratum) -> &Vec<usize>| -> Result<f64> {
        let v: Vec<f64> = design
            .strata
            .iter()
            .flat_map(|s| pick(s).iter())
            .filter_map(|&i| units[i].get(outcome))
            .collect();
        if v.is_empty() {
            return Err(Error::DegenerateDesign("naive comparison needs both groups".into()));
        }
        Ok(v.iter().sum::<f64>() / v.len() as f64)
    };
    Ok(mean(&|s| &s.treated)? - mean(&|s| &s.control)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{RuleKind, Stratum, TreatmentRule};
    use crate::geo::haversine_m;

    fn small(seed: u64) -> SimConfig {
        SimConfig {
            n_users: 6,
            n_days: 12,
            seed,
            ..SimConfig::default()
        }
    }

    #[test]
    fn validation() {
        assert!(small(1).validate().is_ok());
        let bad = SimConfig { n_users: 0, ..small(1) };
        assert!(bad.validate().is_err());
        let bad = SimConfig {
            noise_sd: 0.0,
            ..small(1)
        };
        assert!(bad.validate().is_err());
        let bad = SimConfig {
            timezone: "Mars/Olympus".into(),
            ..small(1)
        };
        assert!(matches!(bad.validate(), Err(Error::Timezone(_))));
    }

    #[test]
    fn deterministic() {
        let a = generate(&small(5)).unwrap();
        let b = generate(&small(5)).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.truth, b.truth);
        let c = generate(&small(6)).unwrap();
        assert_ne!(a.dataset.gps, c.dataset.gps);
    }

    #[test]
    fn traces_are_physical() {
        let sim = generate(&small(3)).unwrap();
        for samples in sim.dataset.gps.values() {
            for w in samples.windows(2) {
                let dt = (w[1].timestamp - w[0].timestamp) as f64;
                assert!(dt > 0.0);
                let dist = haversine_m(
                    LatLon::new(w[0].latitude, w[0].longitude),
                    LatLon::new(w[1].latitude, w[1].longitude),
                );
                assert!(dist / dt < 40.0, "{dist} m in {dt} s");
            }
        }
        assert!(sim.dataset.excluded.is_empty());
        assert_eq!(sim.dataset.personality.len(), 6);
    }

    #[test]
    fn counterfactuals_consistent() {
        let sim = generate(&small(9)).unwrap();
        assert!(sim.truth.units.iter().any(|u| u.treated));
        assert!(sim.truth.units.iter().any(|u| !u.treated));
        for u in &sim.truth.units {
            assert!((u.stress_treated - u.stress_untreated - sim.truth.true_ate).abs() < 1e-12);
            let observed = if u.treated {
                u.stress_treated
            } else {
                u.stress_untreated
            };
            assert!((observed - u.stress).abs() < 1e-9);
        }
    }

    #[test]
    fn unconfounded_naive_is_unbiased() {
        let mut misses = 0;
        for seed in 0..20 {
            let cfg = SimConfig {
                n_users: 20,
                n_days: 20,
                seed,
                confounding_strength: 0.0,
                ..SimConfig::default()
            };
            let t = generate(&cfg).unwrap().truth;
            let group = |treated: bool| -> Vec<f64> {
                t.units
                    .iter()
                    .filter(|u| u.treated == treated)
                    .map(|u| u.stress)
                    .collect()
            };
            let var = |v: &[f64]| {
                let m = v.iter().sum::<f64>() / v.len() as f64;
                v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
            };
            let (a, b) = (group(true), group(false));
            let se = (var(&a) / a.len() as f64 + var(&b) / b.len() as f64).sqrt();
            if (t.naive_ate - t.true_ate).abs() >= 2.0 * se {
                misses += 1;
            }
        }
        // about one miss in twenty is expected by chance
        assert!(misses <= 3, "{misses} seeds outside 2 SE");
    }

    #[test]
    fn confounding_biases_naive() {
        let cfg = SimConfig {
            n_users: 30,
            n_days: 30,
            true_ate: 0.0,
            confounding_strength: 1.5,
            ..SimConfig::default()
        };
        let t = generate(&cfg).unwrap().truth;
        assert!(t.naive_ate < -0.2, "naive {}", t.naive_ate);
    }

    fn unit(s: f64) -> Unit {
        Unit {
            user_id: "a".into(),
            day: NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
            t_index: 0,
            home_s: 0.0,
            university_s: 0.0,
            other_s: 0.0,
            exercise_s: 0.0,
            social_s: 0.0,
            stress: s,
            prev_stress: 0.0,
            deadline_pressure: 0.0,
            personality: None,
        }
    }

    #[test]
    fn naive_ate_fixtures() {
        let units: Vec<Unit> = [1.0, 2.0, 3.0, 5.0].iter().map(|&s| unit(s)).collect();
        let rule = TreatmentRule::new(Variable::Exercise, RuleKind::Positive, 0.0).unwrap();
        let design = Design {
            rule,
            strata: vec![Stratum {
                t_index: 0,
                treated: vec![0, 1],
                control: vec![2, 3],
                excluded: vec![],
            }],
            skipped: vec![],
        };
        assert_eq!(naive_ate(&units, &design, Variable::Stress).unwrap(), -2.5);
        let same = Design {
            strata: vec![Stratum {
                t_index: 0,
                treated: vec![0, 1],
                control: vec![0, 1],
                excluded: vec![],
            }],
            ..design
        };
        assert_eq!(naive_ate(&units, &same, Variable::Stress).unwrap(), 0.0);
    }
}
