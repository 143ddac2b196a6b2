//! Seeded inputs for the criterion benches.

use chrono::NaiveDate;
use quasicause_core::design::Stratum;
use quasicause_core::ingest::{ActivityClass, ActivitySample, GpsSample};
use quasicause_core::matchopt::{prepare_strata, MatchStratum};
use quasicause_core::{Design, RuleKind, TreatmentRule, Unit, Variable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn correlated_columns(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let x: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
    let y = x.iter().map(|v| 0.3 * v + normal.sample(&mut rng)).collect();
    (x, y)
}

/// A day-long trace hopping between a few places, sampled every 2 minutes.
pub fn gps_trace(n: usize, seed: u64) -> (Vec<GpsSample>, Vec<ActivitySample>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let deg = 1.0 / 111_195.0;
    let places: Vec<(f64, f64)> = (0..8)
        .map(|_| {
            (
                43.70 + rng.random_range(-2000.0..2000.0) * deg,
                -72.29 + rng.random_range(-2000.0..2000.0) * deg,
            )
        })
        .collect();
    let jitter = Normal::new(0.0, 15.0 * deg).unwrap();
    let mut gps = Vec::with_capacity(n);
    let mut activity = Vec::with_capacity(n);
    let mut place = places[0];
    for i in 0..n {
        let ts = 1_700_000_000 + 120 * i as i64;
        let moving = rng.random_bool(0.05);
        if moving {
            place = places[rng.random_range(0..places.len())];
        }
        gps.push(GpsSample {
            timestamp: ts,
            latitude: place.0 + jitter.sample(&mut rng),
            longitude: place.1 + jitter.sample(&mut rng),
            accuracy_m: rng.random_range(5.0..60.0),
        });
        activity.push(ActivitySample {
            timestamp: ts,
            activity: if moving {
                ActivityClass::Walking
            } else {
                ActivityClass::Stationary
            },
        });
    }
    (gps, activity)
}

/// One stratum with a shifted treated group.
pub fn stratum(n_treated: usize, n_control: usize, dim: usize, seed: u64) -> MatchStratum {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut row = |shift: f64| -> Vec<f64> { (0..dim).map(|_| normal.sample(&mut rng) + shift).collect() };
    let treated = (0..n_treated).map(|i| (i, row(0.5))).collect();
    let control = (0..n_control).map(|i| (n_treated + i, row(0.0))).collect();
    MatchStratum::from_rows(0, treated, control).expect("non-degenerate stratum")
}

/// Units with three shifted covariates and the matching strata built from
/// them, for benchmarking the full weight search.
pub fn matching_problem(
    n_treated: usize,
    n_control: usize,
    seed: u64,
) -> (Vec<Unit>, Vec<MatchStratum>, Vec<Variable>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let confounders = vec![Variable::Home, Variable::University, Variable::PrevStress];
    let units: Vec<Unit> = (0..n_treated + n_control)
        .map(|i| {
            let shift = if i < n_treated { 0.5 } else { 0.0 };
            let mut u = Unit {
                user_id: format!("u{}", i % 40),
                day: NaiveDate::from_ymd_opt(2024, 1, 1).unwrap() + chrono::Days::new(i as u64),
                t_index: 0,
                home_s: 0.0,
                university_s: 0.0,
                other_s: 0.0,
                exercise_s: f64::from(u8::from(i < n_treated)),
                social_s: 0.0,
                stress: 0.0,
                prev_stress: 0.0,
                deadline_pressure: 0.0,
                personality: None,
            };
            for &c in &confounders {
                u.set(c, normal.sample(&mut rng) + shift);
            }
            u
        })
        .collect();
    let design = Design {
        rule: TreatmentRule::new(Variable::Exercise, RuleKind::Positive, 0.0).unwrap(),
        strata: vec![Stratum {
            t_index: 0,
            treated: (0..n_treated).collect(),
            control: (n_treated..n_treated + n_control).collect(),
            excluded: Vec::new(),
        }],
        skipped: Vec::new(),
    };
    let strata = prepare_strata(&units, &design, &confounders).expect("complete cases");
    (units, strata, confounders)
}
