//! Stage drivers. Each stage reads the artifacts of the previous one from
//! the output directory, so a stage run alone reproduces its slice of a
//! full run.

use std::path::{Path, PathBuf};

use log::info;
use quasicause_core::{
    calendar::parse_timezone,
    estimate::{run_study, write_effects_csv, EffectRow, StratumCounts, EFFECTS_FILE},
    featurize::{build_units, read_units_csv, write_units_csv, UNITS_FILE},
    geocluster::{cluster_dataset, read_clustering, write_clusters_csv, write_visits_csv, CLUSTERS_FILE, VISITS_FILE},
    load_dataset,
    matchopt::{write_balance_csv, write_matches_csv, BALANCE_FILE, MATCHES_FILE},
    placesem::{label_dataset, load_campus, read_labels_csv, write_labels_csv, LABELS_FILE},
    screen::{build_correlation_matrix, write_correlation_csv, CORRELATION_FILE},
    simulate::{generate, write_simulation},
    validate_dataset, Clustering, CorrelationMatrix, Error, PlaceLabels, PoiStore, RawDataset, StudyResult,
    StudySettings, Subpopulation, TreatmentRule, Unit, ValidationReport, Variable,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{LoadedConfig, SimulationFile, StudyConfig, SCHEMA_VERSION};
use crate::CliError;

pub const REPORT_FILE: &str = "report.json";
pub const DESIGN_FILE: &str = "design.json";
pub const STUDIES_DIR: &str = "studies";

fn stage_err(stage: &'static str) -> impl Fn(Error) -> CliError {
    move |source| CliError::Stage { stage, source }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub struct Pipeline {
    pub cfg: LoadedConfig,
}

impl Pipeline {
    pub fn new(cfg: LoadedConfig) -> Self {
        Pipeline { cfg }
    }

    fn config(&self) -> &StudyConfig {
        &self.cfg.config
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cfg.output_dir().join(name)
    }

    fn provenance(&self) -> String {
        self.cfg.provenance()
    }

    pub fn load(&self) -> Result<RawDataset, CliError> {
        load_dataset(&self.cfg.data_root(), &self.config().timezone).map_err(stage_err("ingest"))
    }

    pub fn validate(&self) -> Result<ValidationReport, CliError> {
        Ok(validate_dataset(&self.load()?))
    }

    pub fn cluster(&self, ds: &RawDataset) -> Result<Clustering, CliError> {
        info!("clustering {} users", ds.users.len());
        let clustering = cluster_dataset(ds, &self.config().clustering);
        let prov = self.provenance();
        write_clusters_csv(&self.out(CLUSTERS_FILE), &clustering, Some(&prov)).map_err(stage_err("cluster"))?;
        write_visits_csv(&self.out(VISITS_FILE), &clustering, Some(&prov)).map_err(stage_err("cluster"))?;
        Ok(clustering)
    }

    fn read_clustering(&self) -> Result<Clustering, CliError> {
        read_clustering(&self.out(CLUSTERS_FILE), &self.out(VISITS_FILE)).map_err(stage_err("label"))
    }

    pub fn label(&self, clustering: &Clustering) -> Result<PlaceLabels, CliError> {
        let err = stage_err("label");
        let tz = parse_timezone(&self.config().timezone).map_err(&err)?;
        let pois = match self.cfg.poi_path() {
            Some(p) => PoiStore::load(&p).map_err(&err)?,
            None => PoiStore::new(Vec::new()),
        };
        let campus = self
            .cfg
            .campus_path()
            .map(|p| load_campus(&p))
            .transpose()
            .map_err(&err)?;
        info!("labeling clusters against {} places", pois.records().len());
        let labels = label_dataset(clustering, tz, &pois, campus.as_ref(), &self.config().labeling);
        write_labels_csv(&self.out(LABELS_FILE), &labels, Some(&self.provenance())).map_err(&err)?;
        Ok(labels)
    }

    fn read_labels(&self) -> Result<PlaceLabels, CliError> {
        read_labels_csv(&self.out(LABELS_FILE)).map_err(stage_err("featurize"))
    }

    pub fn featurize(
        &self,
        ds: &RawDataset,
        clustering: &Clustering,
        labels: &PlaceLabels,
    ) -> Result<Vec<Unit>, CliError> {
        let grid = self.cfg.grid()?;
        let units = build_units(ds, clustering, labels, &grid, &self.config().features);
        info!("built {} units", units.len());
        write_units_csv(&self.out(UNITS_FILE), &units, Some(&self.provenance())).map_err(stage_err("featurize"))?;
        Ok(units)
    }

    fn read_units(&self) -> Result<Vec<Unit>, CliError> {
        read_units_csv(&self.out(UNITS_FILE)).map_err(stage_err("screen"))
    }

    pub fn correlate(&self, units: &[Unit]) -> Result<CorrelationMatrix, CliError> {
        let cm = build_correlation_matrix(units, &Variable::ALL).map_err(stage_err("screen"))?;
        write_correlation_csv(&self.out(CORRELATION_FILE), &cm, Some(&self.provenance()))
            .map_err(stage_err("screen"))?;
        Ok(cm)
    }

    /// Runs one stage from the artifacts already in the output directory.
    pub fn stage(&self, stage: Stage) -> Result<(), CliError> {
        match stage {
            Stage::Cluster => {
                self.cluster(&self.load()?)?;
            }
            Stage::Label => {
                let clustering = self.read_clustering()?;
                self.label(&clustering)?;
            }
            Stage::Featurize => {
                let clustering = read_clustering(&self.out(CLUSTERS_FILE), &self.out(VISITS_FILE))
                    .map_err(stage_err("featurize"))?;
                let labels = self.read_labels()?;
                self.featurize(&self.load()?, &clustering, &labels)?;
            }
            Stage::Screen => {
                self.correlate(&self.read_units()?)?;
            }
        }
        Ok(())
    }

    fn settings(&self) -> StudySettings {
        let c = self.config();
        StudySettings {
            n_slots: c.grid_hours.len(),
            mean_scope: c.mean_scope,
            screening: c.screening.clone(),
            genetic: c.genetic.clone(),
            force: c.force,
            ..StudySettings::default()
        }
    }

    /// Every study the configuration asks for, in report order.
    pub fn studies(&self) -> Vec<(TreatmentRule, Subpopulation)> {
        let c = self.config();
        c.treatments
            .iter()
            .flat_map(|t| t.rules())
            .flat_map(|r| c.subpopulations.iter().map(move |&s| (r, s)))
            .collect()
    }

    /// Full pipeline from raw traces to effects.
    pub fn run(&self) -> Result<RunReport, CliError> {
        let ds = self.load()?;
        let clustering = self.cluster(&ds)?;
        let labels = self.label(&clustering)?;
        let units = self.featurize(&ds, &clustering, &labels)?;
        self.correlate(&units)?;

        let settings = self.settings();
        let studies = self.studies();
        info!("running {} studies", studies.len());
        let outcomes: Vec<(StudyEntry, Option<StudyResult>)> = studies
            .par_iter()
            .map(|(rule, subpop)| run_one(&units, rule, *subpop, &settings))
            .collect();

        let prov = self.provenance();
        let mut effects = Vec::new();
        let mut balance_rows = Vec::new();
        for (entry, result) in &outcomes {
            let Some(r) = result else { continue };
            let dir = self.out(STUDIES_DIR).join(&entry.id);
            let err = stage_err("estimate");
            write_balance_csv(&dir.join(BALANCE_FILE), &r.balance, Some(&prov)).map_err(&err)?;
            write_matches_csv(&dir.join(MATCHES_FILE), &r.units, &r.matched, Some(&prov)).map_err(&err)?;
            write_json(
                &dir.join(DESIGN_FILE),
                &DesignExport {
                    config_hash: &self.cfg.hash,
                    seed: self.config().seed,
                    rule: &r.rule,
                    subpopulation: r.subpopulation,
                    strata: &r.strata,
                    skipped_strata: &r.skipped_strata,
                },
            )?;
            effects.push(EffectRow {
                treatment: r.rule.variable,
                alpha: r.rule.alpha,
                subpopulation: r.subpopulation,
                estimate: r.estimate.clone(),
            });
            for (c, s) in r.balance.confounders.iter().zip(&r.balance.smd) {
                balance_rows.push([entry.id.clone(), c.name().to_string(), s.to_string()]);
            }
        }
        write_effects_csv(&self.out(EFFECTS_FILE), &effects, Some(&prov)).map_err(stage_err("estimate"))?;
        write_study_balance(&self.out(BALANCE_FILE), &balance_rows, &prov).map_err(stage_err("estimate"))?;

        let report = RunReport {
            schema_version: SCHEMA_VERSION,
            config_hash: self.cfg.hash.clone(),
            seed: self.config().seed,
            config: self.config().clone(),
            n_users: ds.included_users().count(),
            n_units: units.len(),
            studies: outcomes.into_iter().map(|(e, _)| e).collect(),
        };
        write_json(&self.out(REPORT_FILE), &report)?;
        Ok(report)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Stage {
    Cluster,
    Label,
    Featurize,
    Screen,
}

#[derive(Serialize)]
struct DesignExport<'a> {
    config_hash: &'a str,
    seed: u64,
    rule: &'a TreatmentRule,
    subpopulation: Subpopulation,
    strata: &'a [StratumCounts],
    skipped_strata: &'a [(usize, String)],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyStatus {
    Estimated,
    Refused,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyEntry {
    pub id: String,
    pub treatment: Variable,
    pub alpha: f64,
    pub subpopulation: Subpopulation,
    pub status: StudyStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<StudyResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub config: StudyConfig,
    pub n_users: usize,
    pub n_units: usize,
    pub studies: Vec<StudyEntry>,
}

impl RunReport {
    pub fn study(&self, id: &str) -> Option<&StudyEntry> {
        self.studies.iter().find(|s| s.id == id)
    }
}

pub fn study_id(rule: &TreatmentRule, subpop: Subpopulation) -> String {
    format!("{}_a{}_{}", rule.variable, rule.alpha, subpop.as_str())
}

/// Short machine-readable name for a study refusal.
pub fn refusal_reason(e: &Error) -> &'static str {
    match e {
        Error::Uncorrelated { .. } => "uncorrelated",
        Error::Unbalanced { .. } => "unbalanced",
        Error::DegenerateDesign(_) => "degenerate_design",
        Error::InsufficientData(_) | Error::ZeroPairs => "insufficient_data",
        Error::ZeroControlMean => "zero_control_mean",
        Error::ConstantCovariate | Error::ZeroTreatedVariance(_) | Error::ZeroVariance => "constant_covariate",
        _ => "error",
    }
}

fn run_one(
    units: &[Unit],
    rule: &TreatmentRule,
    subpop: Subpopulation,
    settings: &StudySettings,
) -> (StudyEntry, Option<StudyResult>) {
    let id = study_id(rule, subpop);
    let mut entry = StudyEntry {
        id,
        treatment: rule.variable,
        alpha: rule.alpha,
        subpopulation: subpop,
        status: StudyStatus::Estimated,
        reason: None,
        message: None,
        result: None,
    };
    match run_study(units, rule, subpop, settings) {
        Ok(r) => {
            info!(
                "{}: {:+.2}% over {} pairs",
                entry.id, r.estimate.pct_improvement, r.estimate.n_pairs
            );
            entry.result = Some(r.clone());
            (entry, Some(r))
        }
        Err(e) => {
            info!("{}: refused, {e}", entry.id);
            entry.status = StudyStatus::Refused;
            entry.reason = Some(refusal_reason(&e).to_string());
            entry.message = Some(e.to_string());
            (entry, None)
        }
    }
}

fn write_study_balance(path: &Path, rows: &[[String; 3]], provenance: &str) -> quasicause_core::Result<()> {
    let mut w = quasicause_core::csv_writer(path, Some(provenance), &["study", "confounder", "smd"])?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()
        .map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct SimulationStamp {
    schema_version: u32,
    config_hash: String,
    seed: u64,
}

/// Generates a synthetic cohort and writes it as a dataset directory.
pub fn simulate(file: &SimulationFile, out: &Path) -> Result<(), CliError> {
    let err = stage_err("simulate");
    let sim = generate(&file.simulation).map_err(&err)?;
    info!(
        "simulated {} users, naive ATE {:.3} vs true {:.3}",
        sim.dataset.users.len(),
        sim.truth.naive_ate,
        sim.truth.true_ate
    );
    write_simulation(&sim, out).map_err(&err)?;
    let stamp = SimulationStamp {
        schema_version: SCHEMA_VERSION,
        config_hash: {
            use sha2::{Digest, Sha256};
            format!(
                "{:x}",
                Sha256::digest(serde_json::to_vec(file).expect("config serializes"))
            )
        },
        seed: file.simulation.seed,
    };
    write_json(&out.join("simulation.json"), &stamp)
}
