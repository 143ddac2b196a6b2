//! Binary treatment assignment, stratification by sampling time and
//! personality subpopulations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::{Unit, Variable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    /// Treated when the exposure is well below the mean.
    LowTail,
    /// Treated when the exposure is well above the mean.
    HighTail,
    /// Treated when the exposure is positive at all.
    Positive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreatmentRule {
    pub variable: Variable,
    pub kind: RuleKind,
    #[serde(default)]
    pub alpha: f64,
    /// Take the mean from this variable instead of `variable`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_of: Option<Variable>,
}

impl TreatmentRule {
    pub fn new(variable: Variable, kind: RuleKind, alpha: f64) -> Result<Self> {
        let rule = TreatmentRule {
            variable,
            kind,
            alpha,
            mean_of: None,
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::Invalid(format!("alpha must lie in [0, 1), got {}", self.alpha)));
        }
        Ok(())
    }

    /// The variable whose mean sets the thresholds.
    pub fn mean_variable(&self) -> Variable {
        self.mean_of.unwrap_or(self.variable)
    }

    fn classify(&self, value: f64, mean: f64) -> Arm {
        let lo = mean * (1.0 - self.alpha);
        let hi = mean * (1.0 + self.alpha);
        match self.kind {
            RuleKind::LowTail if value < lo => Arm::Treated,
            RuleKind::LowTail if value >= hi => Arm::Control,
            RuleKind::HighTail if value > hi => Arm::Treated,
            RuleKind::HighTail if value <= lo => Arm::Control,
            RuleKind::Positive if value > 0.0 => Arm::Treated,
            RuleKind::Positive => Arm::Control,
            _ => Arm::Excluded,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Arm {
    Treated,
    Control,
    Excluded,
}

/// Units of one sampling time split into arms. Entries are indices into
/// the unit slice the stratum was built from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Stratum {
    pub t_index: usize,
    pub treated: Vec<usize>,
    pub control: Vec<usize>,
    pub excluded: Vec<usize>,
}

pub fn mean_of(units: &[Unit], members: &[usize], v: Variable) -> Option<f64> {
    let values: Vec<f64> = members.iter().filter_map(|&i| units[i].get(v)).collect();
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Splits one stratum. `mean` overrides the stratum mean of the rule's
/// mean variable (used for the pooled-mean mode).
pub fn assign_treatment(
    units: &[Unit],
    members: &[usize],
    t_index: usize,
    rule: &TreatmentRule,
    mean: Option<f64>,
) -> Result<Stratum> {
    if members.is_empty() {
        return Err(Error::DegenerateDesign(format!("stratum {t_index} is empty")));
    }
    let mu = match mean {
        Some(m) => m,
        None => mean_of(units, members, rule.mean_variable()).ok_or_else(|| {
            Error::DegenerateDesign(format!("no values of {} in stratum {t_index}", rule.mean_variable()))
        })?,
    };
    let mut s = Stratum {
        t_index,
        treated: Vec::new(),
        control: Vec::new(),
        excluded: Vec::new(),
    };
    for &i in members {
        let arm = units[i]
            .get(rule.variable)
            .map_or(Arm::Excluded, |v| rule.classify(v, mu));
        match arm {
            Arm::Treated => s.treated.push(i),
            Arm::Control => s.control.push(i),
            Arm::Excluded => s.excluded.push(i),
        }
    }
    if s.treated.is_empty() || s.control.is_empty() {
        return Err(Error::DegenerateDesign(format!(
            "stratum {t_index} has {} treated and {} control units",
            s.treated.len(),
            s.control.len()
        )));
    }
    Ok(s)
}

/// Unit indices grouped by sampling time, one entry per grid slot.
pub fn stratify(units: &[Unit], n_slots: usize) -> Vec<Vec<usize>> {
    let mut strata = vec![Vec::new(); n_slots];
    for (i, u) in units.iter().enumerate() {
        if let Some(s) = strata.get_mut(u.t_index) {
            s.push(i);
        }
    }
    strata
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanScope {
    PerStratum,
    Pooled,
}

/// Outcome of designing every stratum: usable strata plus the reasons the
/// others were skipped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Design {
    pub rule: TreatmentRule,
    pub strata: Vec<Stratum>,
    pub skipped: Vec<(usize, String)>,
}

impl Design {
    pub fn treated_count(&self) -> usize {
        self.strata.iter().map(|s| s.treated.len()).sum()
    }

    pub fn control_count(&self) -> usize {
        self.strata.iter().map(|s| s.control.len()).sum()
    }
}

/// Assigns treatment in every stratum, skipping degenerate ones. Fails only
/// when no stratum is usable.
pub fn design_strata(units: &[Unit], n_slots: usize, rule: &TreatmentRule, scope: MeanScope) -> Result<Design> {
    rule.validate()?;
    let pooled = match scope {
        MeanScope::Pooled => {
            let all: Vec<usize> = (0..units.len()).collect();
            mean_of(units, &all, rule.mean_variable())
        }
        MeanScope::PerStratum => None,
    };
    let mut design = Design {
        rule: *rule,
        strata: Vec::new(),
        skipped: Vec::new(),
    };
    for (t_index, members) in stratify(units, n_slots).iter().enumerate() {
        match assign_treatment(units, members, t_index, rule, pooled) {
            Ok(s) => design.strata.push(s),
            Err(Error::DegenerateDesign(reason)) => design.skipped.push((t_index, reason)),
            Err(e) => return Err(e),
        }
    }
    if design.strata.is_empty() {
        return Err(Error::DegenerateDesign(format!(
            "no stratum has both treated and control units for {}",
            rule.variable
        )));
    }
    Ok(design)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subpopulation {
    All,
    Extroverts,
    Neurotics,
}

impl Subpopulation {
    pub fn as_str(self) -> &'static str {
        match self {
            Subpopulation::All => "all",
            Subpopulation::Extroverts => "extroverts",
            Subpopulation::Neurotics => "neurotics",
        }
    }

    fn trait_variable(self) -> Option<Variable> {
        match self {
            Subpopulation::All => None,
            Subpopulation::Extroverts => Some(Variable::Extroversion),
            Subpopulation::Neurotics => Some(Variable::Neuroticism),
        }
    }
}

/// Keeps units of participants whose trait score is strictly above the
/// mean over distinct participants. Participants without scores are
/// dropped from trait subpopulations.
pub fn filter_subpopulation(units: &[Unit], filter: Subpopulation) -> Vec<Unit> {
    let Some(var) = filter.trait_variable() else {
        return units.to_vec();
    };
    let scores: BTreeMap<&str, f64> = units
        .iter()
        .filter_map(|u| Some((u.user_id.as_str(), u.get(var)?)))
        .collect();
    if scores.is_empty() {
        return Vec::new();
    }
    let mean = scores.values().sum::<f64>() / scores.len() as f64;
    units
        .iter()
        .filter(|u| scores.get(u.user_id.as_str()).is_some_and(|&s| s > mean))
        .cloned()
        .collect()
}
