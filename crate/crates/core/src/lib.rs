//! Quasi-experimental causal inference over smartphone sensing traces:
//! location clustering and labeling, study variables, Kendall screening,
//! treatment design, genetic matching and effect estimation, plus a
//! synthetic generator with known ground truth.

mod artifact;
pub mod calendar;
pub mod design;
pub mod error;
pub mod estimate;
pub mod featurize;
pub mod geo;
pub mod geocluster;
pub mod ingest;
pub mod matchopt;
pub mod placesem;
pub mod screen;
pub mod simulate;

pub use artifact::{csv_reader, csv_writer};
pub use design::{Design, MeanScope, RuleKind, Stratum, Subpopulation, TreatmentRule};
pub use error::{Error, Result};
pub use estimate::{EffectEstimate, StudyResult, StudySettings};
pub use featurize::{FeatureConfig, SamplingGrid, Unit, Variable};
pub use geo::{haversine_m, CampusBoundary, LatLon};
pub use geocluster::{ClusterConfig, ClusterScope, Clustering, LocationCluster, SampleFate, Visit};
pub use ingest::{load_dataset, validate_dataset, RawDataset, ValidationReport};
pub use matchopt::{BalanceReport, FitnessMode, GeneticConfig, MatchedStratum};
pub use placesem::{LabelConfig, PlaceLabel, PlaceLabels, PlaceLookup, PoiRecord, PoiStore};
pub use screen::{ConfounderSet, CorrelationMatrix, Kendall, Screening, ScreeningConfig};
pub use simulate::{GroundTruth, SimConfig, Simulation};
