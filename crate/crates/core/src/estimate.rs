//! Pooled treatment effect, paired t-test and the per-treatment study
//! runner (screen, design, match, estimate).

use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::artifact::{csv_writer, finish};
use crate::design::{design_strata, filter_subpopulation, Design, MeanScope, Subpopulation, TreatmentRule};
use crate::error::{Error, Result};
use crate::featurize::{Unit, Variable};
use crate::matchopt::{
    balance_report, fitness, genetic_search, match_stratum, prepare_strata, BalanceReport, GeneticConfig,
    GeneticResult, MatchedStratum,
};
use crate::screen::{default_candidates, screen_treatment, Screening, ScreeningConfig};

pub const EFFECTS_FILE: &str = "effects.csv";
pub const EFFECTS_HEADER: [&str; 7] = [
    "treatment",
    "alpha",
    "subpop",
    "pct_improvement",
    "ci_low",
    "ci_high",
    "n_pairs",
];

fn outcome_of(units: &[Unit], i: usize, outcome: Variable) -> Result<f64> {
    units[i]
        .get(outcome)
        .ok_or_else(|| Error::InsufficientData(format!("unit {i} has no {outcome}")))
}

/// Treated-minus-control outcome of every pair, strata in order.
pub fn pair_differences(units: &[Unit], matched: &[MatchedStratum], outcome: Variable) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for m in matched {
        for p in &m.pairs {
            out.push(outcome_of(units, p.treated, outcome)? - outcome_of(units, p.control, outcome)?);
        }
    }
    Ok(out)
}

/// Mean pair difference pooled over strata.
pub fn pooled_ate(differences: &[f64]) -> Result<f64> {
    if differences.is_empty() {
        return Err(Error::ZeroPairs);
    }
    Ok(differences.iter().sum::<f64>() / differences.len() as f64)
}

/// Mean outcome over every control occurrence in the pairs.
pub fn control_mean(units: &[Unit], matched: &[MatchedStratum], outcome: Variable) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for p in matched.iter().flat_map(|m| &m.pairs) {
        sum += outcome_of(units, p.control, outcome)?;
        n += 1;
    }
    if n == 0 {
        return Err(Error::ZeroPairs);
    }
    Ok(sum / n as f64)
}

/// `ate` as a percentage of the mean control outcome.
pub fn pct_improvement(ate: f64, control_mean: f64) -> Result<f64> {
    if control_mean == 0.0 {
        return Err(Error::ZeroControlMean);
    }
    Ok(ate / control_mean * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TTest {
    pub mean: f64,
    pub sd: f64,
    pub t: f64,
    pub df: u64,
    /// Two-sided; `None` when the differences have no spread.
    pub p: Option<f64>,
    pub ci95: (f64, f64),
    pub degenerate: bool,
}

/// CDF of Student's t with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: f64) -> Result<f64> {
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Invalid(e.to_string()))?;
    Ok(dist.cdf(t))
}

/// One-sample t-test of pair differences against zero.
pub fn paired_t_test(differences: &[f64]) -> Result<TTest> {
    let n = differences.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "t-test needs at least 2 differences, got {n}"
        )));
    }
    let nf = n as f64;
    let mean = differences.iter().sum::<f64>() / nf;
    let var = differences.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let sd = var.sqrt();
    let df = (n - 1) as u64;
    if sd == 0.0 {
        return Ok(TTest {
            mean,
            sd,
            t: 0.0,
            df,
            p: None,
            ci95: (mean, mean),
            degenerate: true,
        });
    }
    let se = sd / nf.sqrt();
    let t = mean / se;
    let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::Invalid(e.to_string()))?;
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    let q = dist.inverse_cdf(0.975);
    Ok(TTest {
        mean,
        sd,
        t,
        df,
        p: Some(p),
        ci95: (mean - q * se, mean + q * se),
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectEstimate {
    pub ate: f64,
    pub pct_improvement: f64,
    pub t_stat: f64,
    pub df: u64,
    pub p_value: Option<f64>,
    pub ci95_low: f64,
    pub ci95_high: f64,
    /// CI bounds as percentages of the control mean.
    pub pct_ci95_low: f64,
    pub pct_ci95_high: f64,
    pub n_pairs: usize,
    pub distinct_controls: usize,
    pub subpopulation: Subpopulation,
    pub degenerate: bool,
}

pub fn estimate_effect(
    units: &[Unit],
    matched: &[MatchedStratum],
    outcome: Variable,
    subpopulation: Subpopulation,
) -> Result<EffectEstimate> {
    let diffs = pair_differences(units, matched, outcome)?;
    let ate = pooled_ate(&diffs)?;
    let cm = control_mean(units, matched, outcome)?;
    let pct = pct_improvement(ate, cm)?;
    let test = if diffs.len() >= 2 {
        paired_t_test(&diffs)?
    } else {
        TTest {
            mean: ate,
            sd: 0.0,
            t: 0.0,
            df: 0,
            p: None,
            ci95: (ate, ate),
            degenerate: true,
        }
    };
    let mut controls: Vec<usize> = matched.iter().flat_map(|m| m.pairs.iter().map(|p| p.control)).collect();
    controls.sort_unstable();
    controls.dedup();
    Ok(EffectEstimate {
        ate,
        pct_improvement: pct,
        t_stat: test.t,
        df: test.df,
        p_value: test.p,
        ci95_low: test.ci95.0,
        ci95_high: test.ci95.1,
        pct_ci95_low: test.ci95.0 / cm * 100.0,
        pct_ci95_high: test.ci95.1 / cm * 100.0,
        n_pairs: diffs.len(),
        distinct_controls: controls.len(),
        subpopulation,
        degenerate: test.degenerate,
    })
}

/// Settings shared by every study of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySettings {
    pub outcome: Variable,
    pub n_slots: usize,
    pub mean_scope: MeanScope,
    pub screening: ScreeningConfig,
    pub genetic: GeneticConfig,
    /// Report an estimate even when matching fails the balance check.
    pub force: bool,
    /// Match with these weights instead of searching for them.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_weights: Option<Vec<f64>>,
}

impl Default for StudySettings {
    fn default() -> Self {
        StudySettings {
            outcome: Variable::Stress,
            n_slots: 6,
            mean_scope: MeanScope::PerStratum,
            screening: ScreeningConfig::default(),
            genetic: GeneticConfig::default(),
            force: false,
            fixed_weights: None,
        }
    }
}

/// Per-stratum arm sizes, as exported.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StratumCounts {
    pub t_index: usize,
    pub treated: usize,
    pub control: usize,
    pub excluded: usize,
}

pub fn stratum_counts(design: &Design) -> Vec<StratumCounts> {
    design
        .strata
        .iter()
        .map(|s| StratumCounts {
            t_index: s.t_index,
            treated: s.treated.len(),
            control: s.control.len(),
            excluded: s.excluded.len(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyResult {
    pub rule: TreatmentRule,
    pub subpopulation: Subpopulation,
    pub screening: Screening,
    pub strata: Vec<StratumCounts>,
    pub skipped_strata: Vec<(usize, String)>,
    pub weights: Vec<f64>,
    pub identity_fitness: f64,
    pub balance: BalanceReport,
    pub estimate: EffectEstimate,
    /// Set when the estimate was reported despite failed balance.
    pub forced: bool,
    #[serde(skip)]
    pub units: Vec<Unit>,
    #[serde(skip)]
    pub matched: Vec<MatchedStratum>,
}

/// Screens, designs, matches and estimates one treatment on one
/// subpopulation. Refuses when the treatment does not correlate with the
/// outcome, and when matching stays unbalanced unless `force` is set.
pub fn run_study(
    units: &[Unit],
    rule: &TreatmentRule,
    subpopulation: Subpopulation,
    settings: &StudySettings,
) -> Result<StudyResult> {
    rule.validate()?;
    let units = filter_subpopulation(units, subpopulation);
    if units.is_empty() {
        return Err(Error::DegenerateDesign(format!(
            "subpopulation {} is empty",
            subpopulation.as_str()
        )));
    }
    let candidates = default_candidates(rule.variable, settings.outcome);
    let screening = screen_treatment(
        &units,
        rule.variable,
        settings.outcome,
        &candidates,
        &settings.screening,
    )?;
    if !screening.relevant {
        return Err(Error::Uncorrelated {
            treatment: rule.variable.to_string(),
            p: screening.treatment_p,
        });
    }
    let design = design_strata(&units, settings.n_slots, rule, settings.mean_scope)?;
    let confounders = screening.set.confounders.clone();
    let strata = prepare_strata(&units, &design, &confounders)?;
    let search = match &settings.fixed_weights {
        Some(w) => {
            let matched = strata
                .iter()
                .map(|s| match_stratum(s, w, settings.genetic.ratio))
                .collect::<Result<Vec<_>>>()?;
            let balance = balance_report(&units, &matched, &confounders)?;
            GeneticResult {
                weights: w.clone(),
                fitness: balance.mean_abs_smd,
                identity_fitness: fitness(
                    &strata,
                    &confounders,
                    &vec![1.0; confounders.len()],
                    settings.genetic.ratio,
                    settings.genetic.fitness,
                )?,
                history: Vec::new(),
                matched,
                balance,
            }
        }
        None => genetic_search(&units, &strata, &confounders, &settings.genetic)?,
    };
    let forced = !search.balance.balanced;
    if forced && !settings.force {
        let worst = search
            .balance
            .confounders
            .iter()
            .zip(&search.balance.smd)
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(c, s)| format!("{c}: {s}"))
            .unwrap_or_default();
        return Err(Error::Unbalanced {
            max_abs_smd: search.balance.max_abs_smd,
            worst,
        });
    }
    let estimate = estimate_effect(&units, &search.matched, settings.outcome, subpopulation)?;
    Ok(StudyResult {
        rule: *rule,
        subpopulation,
        screening,
        strata: stratum_counts(&design),
        skipped_strata: design.skipped,
        weights: search.weights,
        identity_fitness: search.identity_fitness,
        balance: search.balance,
        estimate,
        forced,
        units,
        matched: search.matched,
    })
}

/// One row of the effects table.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectRow {
    pub treatment: Variable,
    pub alpha: f64,
    pub subpopulation: Subpopulation,
    pub estimate: EffectEstimate,
}

pub fn write_effects_csv(path: &Path, rows: &[EffectRow], provenance: Option<&str>) -> Result<()> {
    let mut w = csv_writer(path, provenance, &EFFECTS_HEADER)?;
    for r in rows {
        w.write_record([
            r.treatment.name().to_string(),
            r.alpha.to_string(),
            r.subpopulation.as_str().to_string(),
            r.estimate.pct_improvement.to_string(),
            r.estimate.pct_ci95_low.to_string(),
            r.estimate.pct_ci95_high.to_string(),
            r.estimate.n_pairs.to_string(),
        ])?;
    }
    finish(w, path)
}
