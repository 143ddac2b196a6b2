//! Weighted nearest-neighbour matching with replacement, standardized mean
//! difference balance checks and a genetic search over covariate weights.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::{csv_writer, finish};
use crate::design::Design;
use crate::error::{Error, Result};
use crate::featurize::{Unit, Variable};

pub const BALANCE_FILE: &str = "balance.csv";
pub const MATCHES_FILE: &str = "matches.csv";
pub const BALANCE_HEADER: [&str; 2] = ["confounder", "smd"];
pub const MATCHES_HEADER: [&str; 4] = ["t_index", "treated_unit", "control_unit", "distance"];

/// Balance holds when every |SMD| is strictly below this.
pub const SMD_THRESHOLD: f64 = 0.1;

/// sqrt(sum_k w_k ((a_k - b_k) / scale_k)^2)
pub fn standardized_distance(a: &[f64], b: &[f64], scales: &[f64], w: &[f64]) -> Result<f64> {
    let k = a.len();
    if b.len() != k {
        return Err(Error::LengthMismatch {
            left: k,
            right: b.len(),
        });
    }
    if scales.len() != k || w.len() != k {
        return Err(Error::LengthMismatch {
            left: k,
            right: scales.len().min(w.len()),
        });
    }
    if scales.contains(&0.0) {
        return Err(Error::ConstantCovariate);
    }
    Ok(squared_distance(a, b, scales, w).sqrt())
}

#[inline]
fn squared_distance(a: &[f64], b: &[f64], scales: &[f64], w: &[f64]) -> f64 {
    let mut acc = 0.0;
    for k in 0..a.len() {
        let z = (a[k] - b[k]) / scales[k];
        acc += w[k] * z * z;
    }
    acc
}

/// Covariate rows of one stratum, restricted to units with every
/// confounder observed.
#[derive(Debug, Clone)]
pub struct MatchStratum {
    pub t_index: usize,
    /// Unit indices, ascending.
    pub treated: Vec<usize>,
    pub control: Vec<usize>,
    treated_x: Vec<f64>,
    control_x: Vec<f64>,
    /// Sample sd over treated and control units; 1 for constant covariates.
    pub scales: Vec<f64>,
}

impl MatchStratum {
    /// Builds a stratum from raw rows. `treated` and `control` are unit
    /// indices paired with covariate vectors of equal dimension.
    pub fn from_rows(t_index: usize, treated: Vec<(usize, Vec<f64>)>, control: Vec<(usize, Vec<f64>)>) -> Result<Self> {
        if treated.is_empty() || control.is_empty() {
            return Err(Error::DegenerateDesign(format!("stratum {t_index} has an empty group")));
        }
        let k = treated[0].1.len();
        if let Some((_, row)) = treated.iter().chain(&control).find(|(_, r)| r.len() != k) {
            return Err(Error::LengthMismatch {
                left: k,
                right: row.len(),
            });
        }
        let n = (treated.len() + control.len()) as f64;
        let mut scales = vec![1.0; k];
        if n > 1.0 {
            for (j, scale) in scales.iter_mut().enumerate() {
                let mean = treated.iter().chain(&control).map(|(_, r)| r[j]).sum::<f64>() / n;
                let var = treated
                    .iter()
                    .chain(&control)
                    .map(|(_, r)| (r[j] - mean).powi(2))
                    .sum::<f64>()
                    / (n - 1.0);
                if var > 0.0 {
                    *scale = var.sqrt();
                }
            }
        }
        Ok(MatchStratum {
            t_index,
            treated: treated.iter().map(|(i, _)| *i).collect(),
            control: control.iter().map(|(i, _)| *i).collect(),
            treated_x: treated.into_iter().flat_map(|(_, r)| r).collect(),
            control_x: control.into_iter().flat_map(|(_, r)| r).collect(),
            scales,
        })
    }

    pub fn dim(&self) -> usize {
        self.scales.len()
    }

    pub fn treated_row(&self, i: usize) -> &[f64] {
        let k = self.dim();
        &self.treated_x[i * k..(i + 1) * k]
    }

    pub fn control_row(&self, j: usize) -> &[f64] {
        let k = self.dim();
        &self.control_x[j * k..(j + 1) * k]
    }
}

/// Strata ready for matching. Units missing any confounder are dropped, and
/// strata left without treated or control units are skipped.
pub fn prepare_strata(units: &[Unit], design: &Design, confounders: &[Variable]) -> Result<Vec<MatchStratum>> {
    let row = |i: usize| -> Option<(usize, Vec<f64>)> {
        let x: Option<Vec<f64>> = confounders.iter().map(|&c| units[i].get(c)).collect();
        Some((i, x?))
    };
    let mut out = Vec::new();
    for s in &design.strata {
        let treated: Vec<_> = s.treated.iter().filter_map(|&i| row(i)).collect();
        let control: Vec<_> = s.control.iter().filter_map(|&i| row(i)).collect();
        if treated.is_empty() || control.is_empty() {
            continue;
        }
        out.push(MatchStratum::from_rows(s.t_index, treated, control)?);
    }
    if out.is_empty() {
        return Err(Error::DegenerateDesign(
            "no stratum keeps both groups once units with missing confounders are dropped".into(),
        ));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Pair {
    pub treated: usize,
    pub control: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchedStratum {
    pub t_index: usize,
    pub pairs: Vec<Pair>,
}

/// Local (treated row, control row, squared distance) triples.
fn match_local(s: &MatchStratum, w: &[f64], ratio: usize) -> Vec<(usize, usize, f64)> {
    let nc = s.control.len();
    let mut out = Vec::with_capacity(s.treated.len() * ratio);
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(ratio + 1);
    for t in 0..s.treated.len() {
        let a = s.treated_row(t);
        best.clear();
        for c in 0..nc {
            let d = squared_distance(a, s.control_row(c), &s.scales, w);
            // controls arrive in ascending order, so an equal distance never displaces
            if best.len() < ratio.min(nc) {
                let pos = best.partition_point(|&(bd, _)| bd <= d);
                best.insert(pos, (d, c));
            } else if d < best[best.len() - 1].0 {
                best.pop();
                let pos = best.partition_point(|&(bd, _)| bd <= d);
                best.insert(pos, (d, c));
            }
        }
        for r in 0..ratio {
            let (d, c) = best[r % best.len()];
            out.push((t, c, d));
        }
    }
    out
}

/// Matches every treated unit to its `ratio` nearest controls, with
/// replacement. Ties go to the control listed first. When a stratum has
/// fewer controls than `ratio` the nearest ones are reused cyclically.
pub fn match_stratum(s: &MatchStratum, w: &[f64], ratio: usize) -> Result<MatchedStratum> {
    if w.len() != s.dim() {
        return Err(Error::LengthMismatch {
            left: s.dim(),
            right: w.len(),
        });
    }
    if ratio == 0 {
        return Err(Error::Invalid("matching ratio must be positive".into()));
    }
    let pairs = match_local(s, w, ratio)
        .into_iter()
        .map(|(t, c, d)| Pair {
            treated: s.treated[t],
            control: s.control[c],
            distance: d.sqrt(),
        })
        .collect();
    Ok(MatchedStratum {
        t_index: s.t_index,
        pairs,
    })
}

/// Signed standardized mean difference of covariate `c` over all pairs.
pub fn smd(units: &[Unit], matched: &[MatchedStratum], c: Variable) -> Result<f64> {
    let value = |i: usize| {
        units[i]
            .get(c)
            .ok_or_else(|| Error::InsufficientData(format!("unit {i} has no value for {c}")))
    };
    let mut diff = 0.0;
    let mut n = 0usize;
    let mut treated: Vec<usize> = Vec::new();
    for m in matched {
        for p in &m.pairs {
            diff += value(p.treated)? - value(p.control)?;
            n += 1;
            treated.push(p.treated);
        }
    }
    if n == 0 {
        return Err(Error::ZeroPairs);
    }
    treated.sort_unstable();
    treated.dedup();
    let xs = treated.iter().map(|&i| value(i)).collect::<Result<Vec<f64>>>()?;
    let sd = sample_sd(&xs).ok_or_else(|| Error::ZeroTreatedVariance(c.to_string()))?;
    Ok(diff / n as f64 / sd)
}

fn sample_sd(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var > 0.0).then(|| var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub confounders: Vec<Variable>,
    pub smd: Vec<f64>,
    pub max_abs_smd: f64,
    pub mean_abs_smd: f64,
    pub balanced: bool,
}

impl BalanceReport {
    pub fn from_smd(confounders: Vec<Variable>, smd: Vec<f64>) -> Self {
        let abs: Vec<f64> = smd.iter().map(|s| s.abs()).collect();
        let max_abs_smd = abs.iter().copied().fold(0.0, f64::max);
        let mean_abs_smd = if abs.is_empty() {
            0.0
        } else {
            abs.iter().sum::<f64>() / abs.len() as f64
        };
        let mut r = BalanceReport {
            confounders,
            smd,
            max_abs_smd,
            mean_abs_smd,
            balanced: false,
        };
        r.balanced = check_balance(&r);
        r
    }
}

pub fn balance_report(units: &[Unit], matched: &[MatchedStratum], confounders: &[Variable]) -> Result<BalanceReport> {
    let smd = confounders
        .iter()
        .map(|&c| smd(units, matched, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(BalanceReport::from_smd(confounders.to_vec(), smd))
}

pub fn check_balance(report: &BalanceReport) -> bool {
    report.smd.iter().all(|s| s.abs() < SMD_THRESHOLD)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitnessMode {
    /// Mean |SMD| over confounders.
    Mean,
    /// Largest |SMD|.
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneticConfig {
    pub population_size: usize,
    pub generations: usize,
    pub seed: u64,
    pub weight_min: f64,
    pub weight_max: f64,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    /// Standard deviation of the log-weight perturbation.
    pub mutation_scale: f64,
    pub elitism: usize,
    pub tournament_size: usize,
    pub ratio: usize,
    pub fitness: FitnessMode,
}

impl Default for GeneticConfig {
    fn default() -> Self {
        GeneticConfig {
            population_size: 50,
            generations: 30,
            seed: 0,
            weight_min: 1e-3,
            weight_max: 1e3,
            crossover_rate: 0.8,
            mutation_rate: 0.1,
            mutation_scale: 1.0,
            elitism: 2,
            tournament_size: 3,
            ratio: 2,
            fitness: FitnessMode::Mean,
        }
    }
}

impl GeneticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(format!("genetic config: {m}")));
        if self.population_size < 4 {
            return bad("population_size must be at least 4");
        }
        if !(self.weight_min > 0.0 && self.weight_min <= 1.0 && self.weight_max >= 1.0) || !self.weight_max.is_finite()
        {
            return bad("weight bounds must be positive and bracket 1");
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) || !(0.0..=1.0).contains(&self.mutation_rate) {
            return bad("rates must lie in [0, 1]");
        }
        if self.mutation_scale.is_nan() || self.mutation_scale < 0.0 {
            return bad("mutation_scale must be non-negative");
        }
        if self.elitism >= self.population_size {
            return bad("elitism must be below population_size");
        }
        if self.tournament_size == 0 || self.ratio == 0 {
            return bad("tournament_size and ratio must be positive");
        }
        Ok(())
    }
}

/// Precomputed per-confounder data for fast fitness evaluation.
struct Evaluator<'a> {
    strata: &'a [MatchStratum],
    /// 1 / sample sd of each confounder over distinct treated units.
    inv_sd: Vec<f64>,
    ratio: usize,
    mode: FitnessMode,
}

impl<'a> Evaluator<'a> {
    fn new(strata: &'a [MatchStratum], confounders: &[Variable], ratio: usize, mode: FitnessMode) -> Result<Self> {
        let k = confounders.len();
        let mut inv_sd = Vec::with_capacity(k);
        for (j, c) in confounders.iter().enumerate() {
            // units are unique within a stratum and strata are disjoint
            let xs: Vec<f64> = strata
                .iter()
                .flat_map(|s| (0..s.treated.len()).map(move |t| s.treated_row(t)[j]))
                .collect();
            let sd = sample_sd(&xs).ok_or_else(|| Error::ZeroTreatedVariance(c.to_string()))?;
            inv_sd.push(1.0 / sd);
        }
        Ok(Evaluator {
            strata,
            inv_sd,
            ratio,
            mode,
        })
    }

    fn smd(&self, w: &[f64]) -> Vec<f64> {
        let k = self.inv_sd.len();
        let mut diff = vec![0.0; k];
        let mut n = 0usize;
        for s in self.strata {
            for (t, c, _) in match_local(s, w, self.ratio) {
                let (a, b) = (s.treated_row(t), s.control_row(c));
                for j in 0..k {
                    diff[j] += a[j] - b[j];
                }
                n += 1;
            }
        }
        diff.iter()
            .zip(&self.inv_sd)
            .map(|(d, inv)| d / n as f64 * inv)
            .collect()
    }

    fn fitness(&self, w: &[f64]) -> f64 {
        let smd = self.smd(w);
        match self.mode {
            FitnessMode::Mean => smd.iter().map(|s| s.abs()).sum::<f64>() / smd.len().max(1) as f64,
            FitnessMode::Max => smd.iter().map(|s| s.abs()).fold(0.0, f64::max),
        }
    }
}

/// Mean (or max) |SMD| after matching with weights `w`.
pub fn fitness(
    strata: &[MatchStratum],
    confounders: &[Variable],
    w: &[f64],
    ratio: usize,
    mode: FitnessMode,
) -> Result<f64> {
    check_dims(strata, confounders, w)?;
    Ok(Evaluator::new(strata, confounders, ratio, mode)?.fitness(w))
}

fn check_dims(strata: &[MatchStratum], confounders: &[Variable], w: &[f64]) -> Result<()> {
    if strata.is_empty() {
        return Err(Error::ZeroPairs);
    }
    for s in strata {
        if s.dim() != confounders.len() {
            return Err(Error::LengthMismatch {
                left: confounders.len(),
                right: s.dim(),
            });
        }
    }
    if w.len() != confounders.len() {
        return Err(Error::LengthMismatch {
            left: confounders.len(),
            right: w.len(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneticResult {
    pub weights: Vec<f64>,
    pub fitness: f64,
    /// Fitness of the identity weights.
    pub identity_fitness: f64,
    /// Best fitness seen after each generation, starting with generation 0.
    pub history: Vec<f64>,
    pub matched: Vec<MatchedStratum>,
    pub balance: BalanceReport,
}

/// Evolves diagonal weight vectors that minimise post-match imbalance.
/// Generation 0 holds the identity vector plus log-uniform draws. Fitness is
/// evaluated in parallel; all randomness is drawn sequentially, so results do
/// not depend on the thread count.
pub fn genetic_search(
    units: &[Unit],
    strata: &[MatchStratum],
    confounders: &[Variable],
    cfg: &GeneticConfig,
) -> Result<GeneticResult> {
    cfg.validate()?;
    let k = confounders.len();
    let identity = vec![1.0; k];
    check_dims(strata, confounders, &identity)?;
    let eval = Evaluator::new(strata, confounders, cfg.ratio, cfg.fitness)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (lmin, lmax) = (cfg.weight_min.ln(), cfg.weight_max.ln());
    let mutation = Normal::new(0.0, cfg.mutation_scale).map_err(|e| Error::Invalid(e.to_string()))?;

    let mut population: Vec<Vec<f64>> = Vec::with_capacity(cfg.population_size);
    population.push(identity.clone());
    while population.len() < cfg.population_size {
        population.push((0..k).map(|_| rng.random_range(lmin..=lmax).exp()).collect());
    }
    let mut scores: Vec<f64> = population.par_iter().map(|w| eval.fitness(w)).collect();
    let identity_fitness = scores[0];

    let rank = |scores: &[f64]| {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
        order
    };
    let mut order = rank(&scores);
    let mut best = (population[order[0]].clone(), scores[order[0]]);
    let mut history = vec![best.1];

    for _ in 0..cfg.generations {
        let mut next: Vec<Vec<f64>> = order[..cfg.elitism].iter().map(|&i| population[i].clone()).collect();
        let mut next_scores: Vec<Option<f64>> = order[..cfg.elitism].iter().map(|&i| Some(scores[i])).collect();
        while next.len() < cfg.population_size {
            let a = tournament(&mut rng, &scores, cfg.tournament_size);
            let b = tournament(&mut rng, &scores, cfg.tournament_size);
            let mut child = if rng.random::<f64>() < cfg.crossover_rate {
                population[a]
                    .iter()
                    .zip(&population[b])
                    .map(|(&x, &y)| if rng.random::<bool>() { x } else { y })
                    .collect()
            } else {
                population[a].clone()
            };
            for g in child.iter_mut() {
                if rng.random::<f64>() < cfg.mutation_rate {
                    *g = (*g * mutation.sample(&mut rng).exp()).clamp(cfg.weight_min, cfg.weight_max);
                }
            }
            next.push(child);
            next_scores.push(None);
        }
        scores = next
            .par_iter()
            .zip(next_scores.par_iter())
            .map(|(w, s)| s.unwrap_or_else(|| eval.fitness(w)))
            .collect();
        population = next;
        order = rank(&scores);
        if scores[order[0]] < best.1 {
            best = (population[order[0]].clone(), scores[order[0]]);
        }
        history.push(best.1);
    }

    let (weights, fitness) = best;
    let matched = strata
        .iter()
        .map(|s| match_stratum(s, &weights, cfg.ratio))
        .collect::<Result<Vec<_>>>()?;
    let balance = balance_report(units, &matched, confounders)?;
    Ok(GeneticResult {
        weights,
        fitness,
        identity_fitness,
        history,
        matched,
        balance,
    })
}

fn tournament(rng: &mut ChaCha8Rng, scores: &[f64], size: usize) -> usize {
    let mut winner = rng.random_range(0..scores.len());
    for _ in 1..size {
        let c = rng.random_range(0..scores.len());
        if scores[c] < scores[winner] || (scores[c] == scores[winner] && c < winner) {
            winner = c;
        }
    }
    winner
}

pub fn write_balance_csv(path: &Path, report: &BalanceReport, provenance: Option<&str>) -> Result<()> {
    let mut w = csv_writer(path, provenance, &BALANCE_HEADER)?;
    for (c, s) in report.confounders.iter().zip(&report.smd) {
        w.write_record([c.name(), &s.to_string()])?;
    }
    finish(w, path)
}

/// Unit key used in exports: `user_id/YYYY-MM-DD`.
pub fn unit_key(u: &Unit) -> String {
    format!("{}/{}", u.user_id, u.day)
}

pub fn write_matches_csv(
    path: &Path,
    units: &[Unit],
    matched: &[MatchedStratum],
    provenance: Option<&str>,
) -> Result<()> {
    let mut w = csv_writer(path, provenance, &MATCHES_HEADER)?;
    for m in matched {
        for p in &m.pairs {
            w.write_record([
                m.t_index.to_string(),
                unit_key(&units[p.treated]),
                unit_key(&units[p.control]),
                p.distance.to_string(),
            ])?;
        }
    }
    finish(w, path)
}
