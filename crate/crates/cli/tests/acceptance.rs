//! Acceptance suite. Each test prints one `criterion N ... PASS|FAIL` line.
//! Run with `cargo test -p quasicause-cli --test acceptance -- --nocapture`.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use chrono::NaiveDate;
use quasicause_core::design::{design_strata, Stratum};
use quasicause_core::estimate::{paired_t_test, pooled_ate, run_study, student_t_cdf};
use quasicause_core::featurize::{build_units, deadline_pressure};
use quasicause_core::geocluster::{cluster_dataset, cluster_locations};
use quasicause_core::ingest::{ActivityClass, ActivitySample, DeadlineCalendar, GpsSample};
use quasicause_core::matchopt::{
    fitness, genetic_search, match_stratum, prepare_strata, smd, MatchStratum, MatchedStratum, Pair,
};
use quasicause_core::placesem::label_dataset;
use quasicause_core::screen::{kendall_tau, pair_counts};
use quasicause_core::simulate::{generate, naive_ate};
use quasicause_core::{
    ClusterConfig, Design, Error, FeatureConfig, FitnessMode, GeneticConfig, LabelConfig, MeanScope, RuleKind,
    SampleFate, SamplingGrid, SimConfig, StudySettings, Subpopulation, TreatmentRule, Unit, Variable,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn verdict(n: u32, name: &str, ok: bool, detail: &str) {
    println!("criterion {n} {name}: {} ({detail})", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n} {name} failed: {detail}");
}

fn blank_unit(i: usize, t_index: usize) -> Unit {
    Unit {
        user_id: format!("u{:03}", i % 50),
        day: NaiveDate::from_ymd_opt(2024, 1, 1).unwrap() + chrono::Days::new(i as u64),
        t_index,
        home_s: 0.0,
        university_s: 0.0,
        other_s: 0.0,
        exercise_s: 0.0,
        social_s: 0.0,
        stress: 0.0,
        prev_stress: 0.0,
        deadline_pressure: 0.0,
        personality: None,
    }
}

// ---------------------------------------------------------------- 1

/// O(n^2) counts: (concordant - discordant, ties in x, ties in y).
fn brute_counts(x: &[f64], y: &[f64]) -> (i64, u64, u64) {
    let (mut s, mut tx, mut ty) = (0i64, 0u64, 0u64);
    for i in 0..x.len() {
        for j in (i + 1)..x.len() {
            let dx = (x[i] - x[j]).signum() * f64::from(x[i] != x[j]);
            let dy = (y[i] - y[j]).signum() * f64::from(y[i] != y[j]);
            if dx == 0.0 {
                tx += 1;
            }
            if dy == 0.0 {
                ty += 1;
            }
            s += (dx * dy) as i64;
        }
    }
    (s, tx, ty)
}

fn random_pair(rng: &mut ChaCha8Rng, k: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rng.random_range(50..=200);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let x: Vec<f64> = (0..n).map(|_| normal.sample(rng)).collect();
    let rho = [0.0, 0.1, 0.2, 0.4][k % 4];
    let mut y: Vec<f64> = x.iter().map(|&v| rho * v + normal.sample(rng)).collect();
    let mut x = x;
    if k % 2 == 1 {
        // coarse levels create ties in both margins
        let levels = rng.random_range(3..12) as f64;
        x.iter_mut().for_each(|v| *v = (*v * levels / 4.0).round());
        y.iter_mut().for_each(|v| *v = (*v * levels / 4.0).round());
    }
    (x, y)
}

#[test]
fn criterion_1_kendall_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut count_mismatch, mut worst_tau, mut worst_p) = (0, 0.0f64, 0.0f64);
    for k in 0..200 {
        let (x, y) = random_pair(&mut rng, k);
        let (s, tx, ty) = brute_counts(&x, &y);
        let c = pair_counts(&x, &y).unwrap();
        if (c.score, c.x_ties, c.y_ties) != (s, tx, ty) {
            count_mismatch += 1;
        }
        let n0 = (x.len() * (x.len() - 1) / 2) as f64;
        let tau_brute = s as f64 / ((n0 - tx as f64) * (n0 - ty as f64)).sqrt();
        let r = kendall_tau(&x, &y).unwrap();
        worst_tau = worst_tau.max((r.tau - tau_brute).abs());

        let mut perm = y.clone();
        let mut extreme = 0u32;
        for _ in 0..10_000 {
            perm.shuffle(&mut rng);
            if pair_counts(&x, &perm).unwrap().score.abs() >= s.abs() {
                extreme += 1;
            }
        }
        worst_p = worst_p.max((r.p - f64::from(extreme) / 10_000.0).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = count_mismatch == 0 && worst_tau == 0.0 && worst_p <= 0.02 && secs < 60.0;
    verdict(
        1,
        "kendall oracle",
        ok,
        &format!("count mismatches {count_mismatch}, max tau error {worst_tau:e}, max p gap {worst_p:.4}, {secs:.1}s"),
    );
}

// ---------------------------------------------------------------- 2

fn oracle_haversine(a: (f64, f64), b: (f64, f64)) -> f64 {
    let r = 6_371_000.0;
    let (p1, p2) = (a.0.to_radians(), b.0.to_radians());
    let dp = (b.0 - a.0).to_radians();
    let dl = (b.1 - a.1).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * r * h.sqrt().min(1.0).asin()
}

fn oracle_moving(samples: &[GpsSample], activity: &[ActivitySample], i: usize, cfg: &ClusterConfig) -> bool {
    let ts = samples[i].timestamp;
    let mut best: Option<&ActivitySample> = None;
    for a in activity {
        let d = (a.timestamp - ts).abs();
        if d > cfg.moving_window_s {
            continue;
        }
        // strictly closer wins, so the earlier of two equidistant samples stays
        if best.is_none_or(|b| d < (b.timestamp - ts).abs()) {
            best = Some(a);
        }
    }
    match best {
        Some(a) => matches!(a.activity, ActivityClass::Walking | ActivityClass::Running),
        None if i == 0 => false,
        None => {
            let p = &samples[i - 1];
            let dt = (ts - p.timestamp) as f64;
            let d = oracle_haversine((p.latitude, p.longitude), (samples[i].latitude, samples[i].longitude));
            dt > 0.0 && d / dt > cfg.moving_speed_mps
        }
    }
}

/// Line-by-line transcription of the clustering pseudocode, with the moving
/// filter applied before the distance loop.
fn oracle_clusters(samples: &[GpsSample], activity: &[ActivitySample], cfg: &ClusterConfig) -> Vec<Option<usize>> {
    let mut clusters: Vec<Vec<(f64, f64)>> = Vec::new();
    let mut out = Vec::new();
    for (i, l) in samples.iter().enumerate() {
        if l.accuracy_m > 50.0 {
            out.push(None);
            continue;
        }
        if oracle_moving(samples, activity, i, cfg) {
            out.push(None);
            continue;
        }
        let p = (l.latitude, l.longitude);
        let mut clustered = None;
        for (k, c) in clusters.iter_mut().enumerate() {
            let (slat, slon) = c.iter().fold((0.0, 0.0), |acc, m| (acc.0 + m.0, acc.1 + m.1));
            let centroid = (slat / c.len() as f64, slon / c.len() as f64);
            if oracle_haversine(p, centroid) < 50.0 {
                c.push(p);
                clustered = Some(k);
                break;
            }
        }
        if clustered.is_none() {
            clusters.push(vec![p]);
            clustered = Some(clusters.len() - 1);
        }
        out.push(clustered);
    }
    out
}

fn random_trace(rng: &mut ChaCha8Rng) -> (Vec<GpsSample>, Vec<ActivitySample>) {
    let n = rng.random_range(1..=1000);
    let meters = 1.0 / 111_195.0;
    let anchors: Vec<(f64, f64)> = (0..rng.random_range(2..7))
        .map(|_| {
            (
                43.70 + rng.random_range(-300.0..300.0) * meters,
                -72.29 + rng.random_range(-300.0..300.0) * meters,
            )
        })
        .collect();
    let jitter = Normal::new(0.0, 25.0 * meters).unwrap();
    let mut ts = 1_700_000_000i64;
    let mut gps = Vec::with_capacity(n);
    for _ in 0..n {
        ts += rng.random_range(20..900);
        let a = anchors[rng.random_range(0..anchors.len())];
        gps.push(GpsSample {
            timestamp: ts,
            latitude: a.0 + jitter.sample(rng),
            longitude: a.1 + jitter.sample(rng),
            accuracy_m: rng.random_range(3.0..80.0),
        });
    }
    let classes = [
        ActivityClass::Stationary,
        ActivityClass::Walking,
        ActivityClass::Running,
        ActivityClass::Unknown,
    ];
    let mut activity = Vec::new();
    let (t0, t1) = (gps[0].timestamp - 600, ts + 600);
    let mut t = t0;
    while t < t1 {
        t += rng.random_range(60..1500);
        activity.push(ActivitySample {
            timestamp: t,
            activity: classes[rng.random_range(0..4)],
        });
    }
    (gps, activity)
}

#[test]
fn criterion_2_clustering_fidelity() {
    let start = Instant::now();
    let cfg = ClusterConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let (mut mismatched, mut samples, mut guarded) = (0, 0, 0);
    for _ in 0..50 {
        let (gps, activity) = random_trace(&mut rng);
        let (_, fates) = cluster_locations(&gps, &activity, &cfg);
        let got: Vec<Option<usize>> = fates
            .iter()
            .map(|f| match f {
                SampleFate::Clustered(id) => Some(*id as usize),
                _ => None,
            })
            .collect();
        guarded += fates.iter().filter(|f| !matches!(f, SampleFate::Clustered(_))).count();
        samples += gps.len();
        if got != oracle_clusters(&gps, &activity, &cfg) {
            mismatched += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        2,
        "clustering fidelity",
        mismatched == 0 && secs < 30.0,
        &format!("{mismatched}/50 traces differ, {samples} samples, {guarded} excluded, {secs:.1}s"),
    );
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_3_deadline_pressure() {
    let d = |day| NaiveDate::from_ymd_opt(2024, 3, day).unwrap();
    let cal = |days: &[u32]| DeadlineCalendar {
        deadline_days: days.iter().map(|&j| d(j)).collect(),
    };
    let t = FeatureConfig::default().t_days;
    let cases = [
        (cal(&[10]), 9, 1.0),
        (cal(&[10, 11]), 9, 1.5),
        (cal(&[10]), 10, 0.0),
        (cal(&[20]), 9, 0.0),
    ];
    let worst = cases
        .iter()
        .map(|(c, day, want)| (deadline_pressure(c, d(*day), t) - want).abs())
        .fold(0.0, f64::max);
    verdict(
        3,
        "deadline pressure",
        worst <= 1e-12,
        &format!("max error {worst:e} at T = {t}"),
    );
}

// ---------------------------------------------------------------- 4

#[test]
fn criterion_4_smd_and_ate_fixtures() {
    // treated x = {1,2,3}, each matched to a control at x = 2; treated sd = 1
    let mut units: Vec<Unit> = (0..4).map(|i| blank_unit(i, 0)).collect();
    for (u, x) in units.iter_mut().zip([1.0, 2.0, 3.0, 1.0]) {
        u.home_s = x;
    }
    units[3].home_s = 5.0 / 3.0;
    let matched = vec![MatchedStratum {
        t_index: 0,
        pairs: (0..3)
            .map(|t| Pair {
                treated: t,
                control: 3,
                distance: 0.0,
            })
            .collect(),
    }];
    let s = smd(&units, &matched, Variable::Home).unwrap();
    let ate = pooled_ate(&[1.0, -1.0, 2.0, 2.0]).unwrap();
    let (es, ea) = ((s - 1.0 / 3.0).abs(), (ate - 1.0).abs());
    verdict(
        4,
        "smd and ate fixtures",
        es <= 1e-12 && ea <= 1e-12,
        &format!("smd {s}, ate {ate}"),
    );
}

// ---------------------------------------------------------------- 5

fn simulated_units(cfg: &SimConfig) -> Vec<Unit> {
    let sim = generate(cfg).unwrap();
    let clustering = cluster_dataset(&sim.dataset, &ClusterConfig::default());
    let labels = label_dataset(
        &clustering,
        sim.dataset.timezone,
        &sim.pois,
        Some(&sim.campus),
        &LabelConfig::default(),
    );
    build_units(
        &sim.dataset,
        &clustering,
        &labels,
        &SamplingGrid::default(),
        &FeatureConfig::default(),
    )
}

#[test]
fn criterion_5_planted_effect_recovery() {
    let start = Instant::now();
    let rule = TreatmentRule::new(Variable::Exercise, RuleKind::Positive, 0.0).unwrap();
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in 1..=5u64 {
        let cfg = SimConfig {
            seed,
            n_users: 60,
            n_days: 70,
            true_ate: -0.5,
            confounding_strength: 0.7,
            ..SimConfig::default()
        };
        let units = simulated_units(&cfg);
        let design = design_strata(&units, 6, &rule, MeanScope::PerStratum).unwrap();
        let naive = naive_ate(&units, &design, Variable::Stress).unwrap();
        let settings = StudySettings {
            genetic: GeneticConfig {
                seed,
                fitness: FitnessMode::Max,
                ..GeneticConfig::default()
            },
            ..StudySettings::default()
        };
        match run_study(&units, &rule, Subpopulation::All, &settings) {
            Ok(r) => {
                let seed_ok =
                    (r.estimate.ate + 0.5).abs() <= 0.15 && r.balance.max_abs_smd < 0.1 && (naive + 0.5).abs() >= 0.3;
                ok &= seed_ok;
                lines.push(format!(
                    "seed {seed}: {} units, ate {:.3}, naive {naive:.3}, max |smd| {:.3}",
                    units.len(),
                    r.estimate.ate,
                    r.balance.max_abs_smd
                ));
            }
            Err(e) => {
                ok = false;
                lines.push(format!("seed {seed}: {e}"));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 300.0;
    verdict(
        5,
        "planted effect recovery",
        ok,
        &format!("{}; {secs:.1}s", lines.join("; ")),
    );
}

// ---------------------------------------------------------------- 6

#[test]
fn criterion_6_genetic_non_inferiority() {
    // H drives treatment; U is unrelated noise on a 100x larger scale with
    // heavy tails, which dominates identity-weighted distances.
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut units = Vec::new();
    for i in 0..600 {
        let mut u = blank_unit(i, 0);
        let treated = i < 150;
        u.home_s = normal.sample(&mut rng) + if treated { 1.0 } else { 0.0 };
        let tail: f64 = if rng.random_bool(0.1) { 5.0 } else { 1.0 };
        u.university_s = 100.0 * tail * normal.sample(&mut rng);
        u.exercise_s = f64::from(u8::from(treated));
        units.push(u);
    }
    let confounders = [Variable::Home, Variable::University];
    let design = Design {
        rule: TreatmentRule::new(Variable::Exercise, RuleKind::Positive, 0.0).unwrap(),
        strata: vec![Stratum {
            t_index: 0,
            treated: (0..150).collect(),
            control: (150..600).collect(),
            excluded: Vec::new(),
        }],
        skipped: Vec::new(),
    };
    let strata = prepare_strata(&units, &design, &confounders).unwrap();
    let cfg = GeneticConfig {
        seed: 6,
        ..GeneticConfig::default()
    };
    let identity = fitness(&strata, &confounders, &[1.0, 1.0], 2, FitnessMode::Mean).unwrap();
    let r = genetic_search(&units, &strata, &confounders, &cfg).unwrap();
    let ok = r.fitness <= identity && r.fitness <= 0.8 * identity && (r.identity_fitness - identity).abs() < 1e-12;
    verdict(
        6,
        "genetic non-inferiority",
        ok,
        &format!(
            "identity mean |smd| {identity:.4}, searched {:.4} ({:.0}% lower), weights {:?}",
            r.fitness,
            100.0 * (1.0 - r.fitness / identity),
            r.weights
        ),
    );
}

// ---------------------------------------------------------------- 7

fn sample_sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Exhaustive scan: every treated unit takes its `ratio` nearest controls,
/// ties to the earlier control, reusing controls cyclically when short.
fn oracle_pairs(treated: &[(usize, Vec<f64>)], control: &[(usize, Vec<f64>)], ratio: usize) -> Vec<(usize, usize)> {
    let dim = treated[0].1.len();
    let scales: Vec<f64> = (0..dim)
        .map(|k| {
            let col: Vec<f64> = treated.iter().chain(control).map(|r| r.1[k]).collect();
            let s = sample_sd(&col);
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let mut out = Vec::new();
    for (ti, trow) in treated {
        let mut d: Vec<(f64, usize, usize)> = control
            .iter()
            .enumerate()
            .map(|(order, (ci, crow))| {
                let sq: f64 = (0..dim).map(|k| ((trow[k] - crow[k]) / scales[k]).powi(2)).sum();
                (sq.sqrt(), order, *ci)
            })
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for r in 0..ratio {
            out.push((*ti, d[r % d.len()].2));
        }
    }
    out.sort_unstable();
    out
}

#[test]
fn criterion_7_matching_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut differing = 0;
    let mut sizes = Vec::new();
    for s in 0..20 {
        let n = rng.random_range(3..=200);
        let n_t = rng.random_range(1..n);
        let dim = rng.random_range(1..=4);
        let integer = s % 3 == 0;
        let row = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..dim)
                .map(|_| {
                    if integer {
                        f64::from(rng.random_range(0..4u8))
                    } else {
                        rng.random_range(-3.0..3.0)
                    }
                })
                .collect()
        };
        let treated: Vec<(usize, Vec<f64>)> = (0..n_t).map(|i| (i, row(&mut rng))).collect();
        let control: Vec<(usize, Vec<f64>)> = (n_t..n).map(|i| (i, row(&mut rng))).collect();
        let expected = oracle_pairs(&treated, &control, 2);
        let stratum = MatchStratum::from_rows(0, treated, control).unwrap();
        let matched = match_stratum(&stratum, &vec![1.0; dim], 2).unwrap();
        let mut got: Vec<(usize, usize)> = matched.pairs.iter().map(|p| (p.treated, p.control)).collect();
        got.sort_unstable();
        if got != expected {
            differing += 1;
        }
        sizes.push(n);
    }
    verdict(
        7,
        "matching oracle",
        differing == 0,
        &format!(
            "{differing}/20 strata differ, sizes {}..={}",
            sizes.iter().min().unwrap(),
            sizes.iter().max().unwrap()
        ),
    );
}

// ---------------------------------------------------------------- 8

#[test]
fn criterion_8_refusals() {
    // H-analogue: independent of the outcome
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut units = Vec::new();
    for i in 0..400 {
        let mut u = blank_unit(i, i % 2);
        u.home_s = 3600.0 * (8.0 + 2.0 * normal.sample(&mut rng));
        u.stress = 3.0 + normal.sample(&mut rng);
        u.prev_stress = 3.0 + normal.sample(&mut rng);
        u.university_s = 3600.0 * (4.0 + normal.sample(&mut rng));
        units.push(u);
    }
    let rule = TreatmentRule::new(Variable::Home, RuleKind::LowTail, 0.0).unwrap();
    let uncorrelated = match run_study(&units, &rule, Subpopulation::All, &StudySettings::default()) {
        Err(Error::Uncorrelated { p, .. }) => Some(p).filter(|&p| p > 0.1),
        _ => None,
    };

    // forced bad weights on the planted-effect cohort
    let units = simulated_units(&SimConfig {
        seed: 3,
        ..SimConfig::default()
    });
    let e_rule = TreatmentRule::new(Variable::Exercise, RuleKind::Positive, 0.0).unwrap();
    let probe = StudySettings {
        fixed_weights: None,
        force: true,
        genetic: GeneticConfig {
            generations: 1,
            population_size: 4,
            ..GeneticConfig::default()
        },
        ..StudySettings::default()
    };
    let k = run_study(&units, &e_rule, Subpopulation::All, &probe)
        .unwrap()
        .balance
        .confounders
        .len();
    // everything but the least influential confounder is ignored
    let mut bad = vec![1e-3; k];
    bad[k - 1] = 1e3;
    let strict = StudySettings {
        fixed_weights: Some(bad),
        ..StudySettings::default()
    };
    let refused = matches!(
        run_study(&units, &e_rule, Subpopulation::All, &strict),
        Err(Error::Unbalanced { .. })
    );
    let forced = run_study(
        &units,
        &e_rule,
        Subpopulation::All,
        &StudySettings {
            force: true,
            ..strict.clone()
        },
    )
    .map(|r| r.forced)
    .unwrap_or(false);
    verdict(
        8,
        "refusals",
        uncorrelated.is_some() && refused && forced,
        &format!("uncorrelated p {uncorrelated:?}, unbalanced refused {refused}, reported with force {forced}"),
    );
}

// ---------------------------------------------------------------- 9

/// The output directory is part of the hashed config, so every run writes
/// to the same place.
fn run_binary(config: &Path, out: &Path, threads: &str) -> Vec<u8> {
    let _ = std::fs::remove_dir_all(out);
    let status = Command::new(env!("CARGO_BIN_EXE_quasicause"))
        .args(["run", "--config"])
        .arg(config)
        .arg("--output")
        .arg(out)
        .env("QUASICAUSE_THREADS", threads)
        .env("RUST_LOG", "warn")
        .status()
        .unwrap();
    assert!(status.success());
    std::fs::read(out.join("report.json")).unwrap()
}

#[test]
fn criterion_9_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    std::fs::write(
        dir.path().join("sim.json"),
        r#"{"schema_version":1,"output_dir":"data","simulation":{"n_users":16,"n_days":21,"seed":9}}"#,
    )
    .unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_quasicause"))
        .args(["simulate", "--config"])
        .arg(dir.path().join("sim.json"))
        .env("RUST_LOG", "warn")
        .status()
        .unwrap();
    assert!(status.success() && data.join("gps.csv").is_file());
    let config = dir.path().join("study.json");
    std::fs::write(
        &config,
        r#"{
  "schema_version": 1, "data_root": "data", "output_dir": "out", "seed": 4,
  "treatments": [
    {"variable": "E", "kind": "positive"},
    {"variable": "U", "kind": "low_tail", "alphas": [0.0, 0.1]}
  ],
  "subpopulations": ["all", "neurotics"],
  "force": true,
  "genetic": {"population_size": 20, "generations": 10}
}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let a = run_binary(&config, &out, "1");
    let b = run_binary(&config, &out, "1");
    let c = run_binary(&config, &out, "8");
    let estimated = String::from_utf8_lossy(&a).matches("\"estimated\"").count();
    verdict(
        9,
        "determinism",
        a == b && a == c && estimated > 0,
        &format!(
            "report {} bytes, {estimated} estimated studies, repeat equal {}, 1 vs 8 threads equal {}",
            a.len(),
            a == b,
            a == c
        ),
    );
}

// ---------------------------------------------------------------- 10

/// Lanczos approximation of ln Gamma (g = 7, n = 9).
fn ln_gamma(x: f64) -> f64 {
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let x = x - 1.0;
    let t = x + 7.5;
    let s = C[0] + (1..9).map(|i| C[i] / (x + i as f64)).sum::<f64>();
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + s.ln()
}

/// 0.5 plus a composite Simpson integral of the density from 0 to t.
fn t_cdf_quadrature(t: f64, df: f64) -> f64 {
    let norm = (ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0)).exp() / (df * std::f64::consts::PI).sqrt();
    let pdf = |x: f64| norm * (1.0 + x * x / df).powf(-(df + 1.0) / 2.0);
    let n = 20_000;
    let h = t / n as f64;
    let inner: f64 = (1..n)
        .map(|i| if i % 2 == 1 { 4.0 } else { 2.0 } * pdf(i as f64 * h))
        .sum();
    0.5 + h / 3.0 * (pdf(0.0) + inner + pdf(t))
}

#[test]
fn criterion_10_t_test() {
    let tt = paired_t_test(&[2.0, 0.0, 2.0, 0.0]).unwrap();
    let t_err = (tt.t - 1.732_050_8).abs();
    let points = [
        (-3.0, 1.0),
        (-0.5, 1.0),
        (1.2, 1.0),
        (2.5, 2.0),
        (-1.7, 2.0),
        (0.3, 3.0),
        (1.7320508, 3.0),
        (-2.9, 4.0),
        (0.0, 5.0),
        (2.015, 5.0),
        (-1.1, 7.0),
        (3.5, 9.0),
        (1.96, 10.0),
        (-0.25, 12.0),
        (2.6, 15.0),
        (-4.0, 20.0),
        (1.3, 30.0),
        (-2.0, 50.0),
        (0.8, 100.0),
        (5.0, 3.0),
    ];
    let worst = points
        .iter()
        .map(|&(t, df)| (student_t_cdf(t, df).unwrap() - t_cdf_quadrature(t, df)).abs())
        .fold(0.0, f64::max);
    verdict(
        10,
        "t-test fixture",
        t_err <= 1e-6 && tt.df == 3 && worst <= 1e-8,
        &format!(
            "t {:.7}, df {}, max cdf error {worst:e} over {} points",
            tt.t,
            tt.df,
            points.len()
        ),
    );
}
