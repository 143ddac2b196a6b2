//! Kendall rank correlation and confounder screening.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::artifact::{csv_writer, finish};
use crate::error::{Error, Result};
use crate::featurize::{Unit, Variable};

/// Integer pair counts behind tau-b.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCounts {
    pub n: u64,
    /// Concordant minus discordant pairs.
    pub score: i64,
    /// Pairs tied in x (including joint ties).
    pub x_ties: u64,
    /// Pairs tied in y (including joint ties).
    pub y_ties: u64,
}

impl PairCounts {
    pub fn total_pairs(&self) -> u64 {
        self.n * (self.n - 1) / 2
    }

    /// Tau-b from the counts; `None` when either margin is constant.
    pub fn tau_b(&self) -> Option<f64> {
        let n0 = self.total_pairs();
        let (dx, dy) = (n0 - self.x_ties, n0 - self.y_ties);
        if dx == 0 || dy == 0 {
            return None;
        }
        Some(self.score as f64 / ((dx as f64) * (dy as f64)).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kendall {
    pub tau: f64,
    pub p: f64,
    pub counts: PairCounts,
}

/// Tie-group sizes of a sorted slice.
fn tie_groups<T: PartialEq>(sorted: &[T]) -> Vec<u64> {
    let mut groups = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        if j - i > 1 {
            groups.push((j - i) as u64);
        }
        i = j;
    }
    groups
}

fn pairs_in(groups: &[u64]) -> u64 {
    groups.iter().map(|t| t * (t - 1) / 2).sum()
}

/// Counts exchanges needed to sort `v` ascending (stable merge sort).
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], &mut buf[..mid]) + merge_count(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Knight's O(n log n) pair counting.
pub fn pair_counts(x: &[f64], y: &[f64]) -> Result<PairCounts> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::Invalid(format!("need at least 2 observations, got {n}")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Invalid("non-finite observation".into()));
    }
    // adding 0.0 folds -0.0 into 0.0 so total_cmp keeps equal values adjacent
    let mut pairs: Vec<(f64, f64)> = x.iter().zip(y).map(|(a, b)| (a + 0.0, b + 0.0)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let x_ties = pairs_in(&tie_groups(&xs));
    let joint_ties = pairs_in(&tie_groups(&pairs));

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; n];
    let swaps = merge_count(&mut ys, &mut buf);
    let y_ties = pairs_in(&tie_groups(&ys));

    let n0 = (n * (n - 1) / 2) as u64;
    let score = n0 as i64 - x_ties as i64 - y_ties as i64 + joint_ties as i64 - 2 * swaps as i64;
    Ok(PairCounts {
        n: n as u64,
        score,
        x_ties,
        y_ties,
    })
}

/// Tie-adjusted variance of the concordance score under independence.
fn score_variance(n: u64, x: &[u64], y: &[u64]) -> f64 {
    let n = n as f64;
    let m = n * (n - 1.0);
    let v1 = |g: &[u64]| {
        g.iter()
            .map(|&t| {
                let t = t as f64;
                t * (t - 1.0) * (2.0 * t + 5.0)
            })
            .sum::<f64>()
    };
    let v2 = |g: &[u64]| {
        g.iter()
            .map(|&t| {
                let t = t as f64;
                t * (t - 1.0) * (t - 2.0)
            })
            .sum::<f64>()
    };
    let tie_pairs = |g: &[u64]| g.iter().map(|&t| (t * (t - 1) / 2) as f64).sum::<f64>();
    let mut var = (m * (2.0 * n + 5.0) - v1(x) - v1(y)) / 18.0 + 2.0 * tie_pairs(x) * tie_pairs(y) / m;
    if n > 2.0 {
        var += v2(x) * v2(y) / (9.0 * m * (n - 2.0));
    }
    var
}

/// Kendall tau-b with a two-sided normal-approximation p-value.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<Kendall> {
    let counts = pair_counts(x, y)?;
    let tau = counts.tau_b().ok_or(Error::ZeroVariance)?;

    let sorted = |v: &[f64]| {
        let mut s: Vec<f64> = v.iter().map(|a| a + 0.0).collect();
        s.sort_by(f64::total_cmp);
        s
    };
    let var = score_variance(counts.n, &tie_groups(&sorted(x)), &tie_groups(&sorted(y)));
    let p = if var > 0.0 {
        let z = counts.score as f64 / var.sqrt();
        erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
    } else {
        1.0
    };
    Ok(Kendall { tau, p, counts })
}

/// Pairwise tau and p over a set of variables. Diagonal is tau = 1, p = 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationMatrix {
    pub variables: Vec<Variable>,
    pub tau: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
}

impl CorrelationMatrix {
    fn index(&self, v: Variable) -> Option<usize> {
        self.variables.iter().position(|&w| w == v)
    }

    pub fn p_value(&self, a: Variable, b: Variable) -> Option<f64> {
        Some(self.p[self.index(a)?][self.index(b)?])
    }

    pub fn tau_value(&self, a: Variable, b: Variable) -> Option<f64> {
        Some(self.tau[self.index(a)?][self.index(b)?])
    }
}

/// Pairwise-complete columns of two variables.
fn paired_columns(units: &[Unit], a: Variable, b: Variable) -> (Vec<f64>, Vec<f64>) {
    units.iter().filter_map(|u| Some((u.get(a)?, u.get(b)?))).unzip()
}

pub fn build_correlation_matrix(units: &[Unit], variables: &[Variable]) -> Result<CorrelationMatrix> {
    if units.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "correlation screening needs at least 2 units, got {}",
            units.len()
        )));
    }
    let k = variables.len();
    let cells: Vec<(usize, usize)> = (0..k).flat_map(|i| ((i + 1)..k).map(move |j| (i, j))).collect();
    let results: Vec<Kendall> = cells
        .par_iter()
        .map(|&(i, j)| {
            let (x, y) = paired_columns(units, variables[i], variables[j]);
            kendall_tau(&x, &y).map_err(|e| match e {
                Error::ZeroVariance => {
                    Error::InsufficientData(format!("zero variance between {} and {}", variables[i], variables[j]))
                }
                other => other,
            })
        })
        .collect::<Result<_>>()?;

    let mut tau = vec![vec![1.0; k]; k];
    let mut p = vec![vec![0.0; k]; k];
    for (&(i, j), r) in cells.iter().zip(results) {
        tau[i][j] = r.tau;
        tau[j][i] = r.tau;
        p[i][j] = r.p;
        p[j][i] = r.p;
    }
    Ok(CorrelationMatrix {
        variables: variables.to_vec(),
        tau,
        p,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScreeningConfig {
    pub p_threshold: f64,
    /// `(treatment, confounder)` pairs never selected together.
    pub exclusions: Vec<(Variable, Variable)>,
    /// Screen each sampling-time stratum separately and take the union.
    pub per_stratum: bool,
}

impl Default for ScreeningConfig {
    fn default() -> Self {
        ScreeningConfig {
            p_threshold: 0.1,
            exclusions: vec![(Variable::OtherPlaces, Variable::Social)],
            per_stratum: false,
        }
    }
}

impl ScreeningConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_threshold > 0.0 && self.p_threshold < 1.0) {
            return Err(Error::Invalid(format!(
                "p_threshold must lie in (0, 1), got {}",
                self.p_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfounderSet {
    pub treatment: Variable,
    pub outcome: Variable,
    pub confounders: Vec<Variable>,
}

/// Every variable except the treatment and the outcome, in canonical order.
pub fn default_candidates(treatment: Variable, outcome: Variable) -> Vec<Variable> {
    Variable::ALL
        .into_iter()
        .filter(|&v| v != treatment && v != outcome)
        .collect()
}

pub fn select_confounders(
    cm: &CorrelationMatrix,
    treatment: Variable,
    outcome: Variable,
    candidates: &[Variable],
    cfg: &ScreeningConfig,
) -> ConfounderSet {
    let confounders = candidates
        .iter()
        .copied()
        .filter(|&z| z != treatment && z != outcome)
        .filter(|&z| !cfg.exclusions.contains(&(treatment, z)))
        .filter(|&z| {
            let below = |v| cm.p_value(z, v).is_some_and(|p| p < cfg.p_threshold);
            below(treatment) && below(outcome)
        })
        .collect();
    ConfounderSet {
        treatment,
        outcome,
        confounders,
    }
}

/// Whether the treatment correlates with the outcome at the threshold.
pub fn treatment_relevant(
    cm: &CorrelationMatrix,
    treatment: Variable,
    outcome: Variable,
    cfg: &ScreeningConfig,
) -> bool {
    cm.p_value(treatment, outcome).is_some_and(|p| p < cfg.p_threshold)
}

pub const CORRELATION_FILE: &str = "correlation.csv";

/// One table of p-values then one of tau values, each variable × variable.
pub fn write_correlation_csv(path: &Path, cm: &CorrelationMatrix, provenance: Option<&str>) -> Result<()> {
    let mut header = vec!["table", "variable"];
    header.extend(cm.variables.iter().map(|v| v.name()));
    let mut w = csv_writer(path, provenance, &header)?;
    for (table, values) in [("p", &cm.p), ("tau", &cm.tau)] {
        for (v, row) in cm.variables.iter().zip(values) {
            let mut rec = vec![table.to_string(), v.name().to_string()];
            rec.extend(row.iter().map(|x| x.to_string()));
            w.write_record(&rec)?;
        }
    }
    finish(w, path)
}

/// Confounders and relevance of one treatment, screened on the units at hand.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Screening {
    pub set: ConfounderSet,
    /// p-value of the treatment-outcome correlation (smallest over strata in
    /// per-stratum mode).
    pub treatment_p: f64,
    pub relevant: bool,
}

/// p-value of one pair over pairwise-complete units. Pairs that cannot be
/// tested (constant column, fewer than two units) get p = 1.
fn pair_p(units: &[&Unit], a: Variable, b: Variable) -> Result<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = units.iter().filter_map(|u| Some((u.get(a)?, u.get(b)?))).unzip();
    match kendall_tau(&x, &y) {
        Ok(k) => Ok(k.p),
        Err(Error::ZeroVariance | Error::Invalid(_)) => Ok(1.0),
        Err(e) => Err(e),
    }
}

fn screen_group(
    units: &[&Unit],
    treatment: Variable,
    outcome: Variable,
    candidates: &[Variable],
    cfg: &ScreeningConfig,
) -> Result<(f64, Vec<Variable>)> {
    let treatment_p = pair_p(units, treatment, outcome)?;
    let mut chosen = Vec::new();
    for &z in candidates {
        if z == treatment || z == outcome || cfg.exclusions.contains(&(treatment, z)) {
            continue;
        }
        if pair_p(units, z, treatment)? < cfg.p_threshold && pair_p(units, z, outcome)? < cfg.p_threshold {
            chosen.push(z);
        }
    }
    Ok((treatment_p, chosen))
}

/// Screens one treatment. In per-stratum mode each sampling time is
/// screened on its own; the treatment is relevant if any stratum finds it so
/// and the confounder set is the union over relevant strata.
pub fn screen_treatment(
    units: &[Unit],
    treatment: Variable,
    outcome: Variable,
    candidates: &[Variable],
    cfg: &ScreeningConfig,
) -> Result<Screening> {
    cfg.validate()?;
    if units.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "correlation screening needs at least 2 units, got {}",
            units.len()
        )));
    }
    let (treatment_p, confounders) = if cfg.per_stratum {
        let n_slots = units.iter().map(|u| u.t_index + 1).max().unwrap_or(0);
        let groups: Vec<Vec<&Unit>> = (0..n_slots)
            .map(|t| units.iter().filter(|u| u.t_index == t).collect())
            .collect();
        let results = groups
            .par_iter()
            .map(|g| screen_group(g, treatment, outcome, candidates, cfg))
            .collect::<Result<Vec<_>>>()?;
        let best_p = results.iter().map(|r| r.0).fold(1.0, f64::min);
        let union: Vec<Variable> = candidates
            .iter()
            .copied()
            .filter(|z| results.iter().any(|(p, c)| *p < cfg.p_threshold && c.contains(z)))
            .collect();
        (best_p, union)
    } else {
        let all: Vec<&Unit> = units.iter().collect();
        screen_group(&all, treatment, outcome, candidates, cfg)?
    };
    Ok(Screening {
        set: ConfounderSet {
            treatment,
            outcome,
            confounders,
        },
        treatment_p,
        relevant: treatment_p < cfg.p_threshold,
    })
}
