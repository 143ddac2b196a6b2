//! JSON configuration for studies and simulations. Relative paths resolve
//! against the directory holding the config file.

use std::path::{Path, PathBuf};

use quasicause_core::{
    calendar::parse_timezone, ClusterConfig, FeatureConfig, GeneticConfig, LabelConfig, MeanScope, RuleKind,
    SamplingGrid, ScreeningConfig, SimConfig, Subpopulation, TreatmentRule, Variable,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreatmentSpec {
    pub variable: Variable,
    pub kind: RuleKind,
    #[serde(default = "zero_alpha")]
    pub alphas: Vec<f64>,
    /// Take thresholds from the mean of another variable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_of: Option<Variable>,
}

fn zero_alpha() -> Vec<f64> {
    vec![0.0]
}

impl TreatmentSpec {
    pub fn rules(&self) -> Vec<TreatmentRule> {
        // the positive rule has no alpha
        let alphas: &[f64] = if self.kind == RuleKind::Positive {
            &[0.0]
        } else {
            &self.alphas
        };
        alphas
            .iter()
            .map(|&alpha| TreatmentRule {
                variable: self.variable,
                kind: self.kind,
                alpha,
                mean_of: self.mean_of,
            })
            .collect()
    }
}

fn default_timezone() -> String {
    "America/New_York".into()
}

fn default_grid() -> Vec<u32> {
    vec![4, 8, 12, 16, 20, 24]
}

fn default_subpopulations() -> Vec<Subpopulation> {
    vec![Subpopulation::All]
}

fn default_scope() -> MeanScope {
    MeanScope::PerStratum
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub schema_version: u32,
    pub data_root: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default = "default_timezone")]
    pub timezone: String,
    /// Defaults to `poi.csv` under `data_root` when that file exists.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poi_file: Option<PathBuf>,
    /// Defaults to `campus.geojsonl` under `data_root` when that file exists.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub campus_file: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Sampling times in hours after local midnight.
    #[serde(default = "default_grid")]
    pub grid_hours: Vec<u32>,
    #[serde(default)]
    pub clustering: ClusterConfig,
    #[serde(default)]
    pub labeling: LabelConfig,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub screening: ScreeningConfig,
    pub treatments: Vec<TreatmentSpec>,
    #[serde(default = "default_subpopulations")]
    pub subpopulations: Vec<Subpopulation>,
    #[serde(default = "default_scope")]
    pub mean_scope: MeanScope,
    /// The search seed is taken from `seed`.
    #[serde(default)]
    pub genetic: GeneticConfig,
    #[serde(default)]
    pub force: bool,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub force: bool,
}

#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: StudyConfig,
    pub base_dir: PathBuf,
    /// SHA-256 of the effective configuration.
    pub hash: String,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<(T, PathBuf), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((value, base))
}

fn check_schema(version: u32) -> Result<(), CliError> {
    if version != SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "unsupported schema_version {version}, expected {SCHEMA_VERSION}"
        )));
    }
    Ok(())
}

fn hash_of<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    format!("{:x}", Sha256::digest(bytes))
}

impl LoadedConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let (mut config, base_dir): (StudyConfig, _) = read_json(path)?;
        if let Some(seed) = overrides.seed {
            config.seed = seed;
        }
        if let Some(dir) = &overrides.output_dir {
            config.output_dir = dir.clone();
        }
        config.force |= overrides.force;
        config.genetic.seed = config.seed;
        let hash = hash_of(&config);
        let loaded = LoadedConfig { config, base_dir, hash };
        loaded.validate()?;
        Ok(loaded)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn data_root(&self) -> PathBuf {
        self.resolve(&self.config.data_root)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.output_dir)
    }

    fn optional(&self, explicit: &Option<PathBuf>, default_name: &str) -> Option<PathBuf> {
        match explicit {
            Some(p) => Some(self.resolve(p)),
            None => Some(self.data_root().join(default_name)).filter(|p| p.is_file()),
        }
    }

    pub fn poi_path(&self) -> Option<PathBuf> {
        self.optional(&self.config.poi_file, quasicause_core::placesem::POI_FILE)
    }

    pub fn campus_path(&self) -> Option<PathBuf> {
        self.optional(&self.config.campus_file, quasicause_core::simulate::CAMPUS_FILE)
    }

    pub fn grid(&self) -> Result<SamplingGrid, CliError> {
        let offsets = self.config.grid_hours.iter().map(|&h| i64::from(h) * 3600).collect();
        SamplingGrid::new(offsets).map_err(|e| CliError::Config(format!("grid_hours: {e}")))
    }

    /// Line written at the top of every CSV export.
    pub fn provenance(&self) -> String {
        format!("config_hash={} seed={}", self.hash, self.config.seed)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let c = &self.config;
        check_schema(c.schema_version)?;
        let invalid = |e: quasicause_core::Error| CliError::Config(e.to_string());
        parse_timezone(&c.timezone).map_err(invalid)?;
        self.grid()?;
        c.screening.validate().map_err(invalid)?;
        c.genetic.validate().map_err(invalid)?;
        if c.treatments.is_empty() {
            return Err(CliError::Config("no treatments configured".into()));
        }
        for spec in &c.treatments {
            if spec.kind != RuleKind::Positive && spec.alphas.is_empty() {
                return Err(CliError::Config(format!("treatment {} lists no alpha", spec.variable)));
            }
            for rule in spec.rules() {
                rule.validate().map_err(invalid)?;
            }
        }
        if c.subpopulations.is_empty() {
            return Err(CliError::Config("no subpopulations configured".into()));
        }
        let root = self.data_root();
        if !root.is_dir() {
            return Err(CliError::Config(format!(
                "data_root {} is not a directory",
                root.display()
            )));
        }
        for p in [self.poi_path(), self.campus_path()].into_iter().flatten() {
            if !p.is_file() {
                return Err(CliError::Config(format!("{} missing", p.display())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationFile {
    pub schema_version: u32,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub simulation: SimConfig,
}

impl SimulationFile {
    pub fn load(path: &Path, seed: Option<u64>, output_dir: Option<PathBuf>) -> Result<(Self, PathBuf), CliError> {
        let (mut file, base): (SimulationFile, PathBuf) = read_json(path)?;
        check_schema(file.schema_version)?;
        if let Some(s) = seed {
            file.simulation.seed = s;
        }
        if let Some(d) = output_dir {
            file.output_dir = d;
        }
        file.simulation
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let out = if file.output_dir.is_absolute() {
            file.output_dir.clone()
        } else {
            base.join(&file.output_dir)
        };
        Ok((file, out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(dir: &Path, extra: &str) -> PathBuf {
        std::fs::create_dir_all(dir.join("data")).unwrap();
        let p = dir.join("study.json");
        std::fs::write(
            &p,
            format!(
                r#"{{"schema_version":1,"data_root":"data","output_dir":"out",{extra}
                "treatments":[{{"variable":"U","kind":"low_tail","alphas":[0.0,0.15]}}]}}"#
            ),
        )
        .unwrap();
        p
    }

    #[test]
    fn positive_rule_ignores_alphas() {
        let spec = TreatmentSpec {
            variable: Variable::Exercise,
            kind: RuleKind::Positive,
            alphas: vec![0.1, 0.2],
            mean_of: None,
        };
        assert_eq!(spec.rules().len(), 1);
        assert_eq!(spec.rules()[0].alpha, 0.0);
    }

    #[test]
    fn paths_resolve_against_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = LoadedConfig::load(&minimal(dir.path(), ""), &Overrides::default()).unwrap();
        assert_eq!(cfg.data_root(), dir.path().join("data"));
        assert_eq!(cfg.output_dir(), dir.path().join("out"));
        assert_eq!(cfg.poi_path(), None);
        assert_eq!(cfg.grid().unwrap().len(), 6);
    }

    #[test]
    fn overrides_enter_the_hash() {
        let dir = tempfile::tempdir().unwrap();
        let path = minimal(dir.path(), r#""seed":5,"#);
        let base = LoadedConfig::load(&path, &Overrides::default()).unwrap();
        let again = LoadedConfig::load(&path, &Overrides::default()).unwrap();
        assert_eq!(base.hash, again.hash);
        assert_eq!(base.config.genetic.seed, 5);
        let reseeded = LoadedConfig::load(
            &path,
            &Overrides {
                seed: Some(6),
                ..Overrides::default()
            },
        )
        .unwrap();
        assert_ne!(base.hash, reseeded.hash);
        assert_eq!(reseeded.config.genetic.seed, 6);
        assert!(reseeded.provenance().ends_with("seed=6"));
    }

    #[test]
    fn rejects_bad_grid_and_alpha() {
        let dir = tempfile::tempdir().unwrap();
        let bad_grid = minimal(dir.path(), r#""grid_hours":[8,4],"#);
        assert!(matches!(
            LoadedConfig::load(&bad_grid, &Overrides::default()),
            Err(CliError::Config(_))
        ));
        let dir = tempfile::tempdir().unwrap();
        let p = minimal(dir.path(), "");
        let text = std::fs::read_to_string(&p).unwrap().replace("0.15", "-0.1");
        std::fs::write(&p, text).unwrap();
        assert!(matches!(
            LoadedConfig::load(&p, &Overrides::default()),
            Err(CliError::Config(_))
        ));
    }
}
