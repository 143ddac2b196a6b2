use quasicause_core::featurize::{build_units, read_units_csv, write_units_csv};
use quasicause_core::geocluster::{cluster_dataset, read_clustering, write_clusters_csv, write_visits_csv};
use quasicause_core::placesem::{label_dataset, load_campus, read_labels_csv, write_labels_csv};
use quasicause_core::simulate::{generate, write_simulation};
use quasicause_core::{load_dataset, ClusterConfig, FeatureConfig, LabelConfig, PoiStore, SamplingGrid, SimConfig};

#[test]
fn simulated_cohort_survives_the_file_formats() {
    let sim = generate(&SimConfig {
        n_users: 6,
        n_days: 10,
        seed: 21,
        ..SimConfig::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_simulation(&sim, dir.path()).unwrap();

    let ds = load_dataset(dir.path(), "America/New_York").unwrap();
    assert_eq!(ds, sim.dataset);
    let pois = PoiStore::load(&dir.path().join("poi.csv")).unwrap();
    assert_eq!(pois.records(), sim.pois.records());
    let campus = load_campus(&dir.path().join("campus.geojsonl")).unwrap();
    assert_eq!(campus, sim.campus);

    let clustering = cluster_dataset(&ds, &ClusterConfig::default());
    let (cp, vp) = (dir.path().join("clusters.csv"), dir.path().join("visits.csv"));
    write_clusters_csv(&cp, &clustering, Some("test")).unwrap();
    write_visits_csv(&vp, &clustering, None).unwrap();
    let clustering_back = read_clustering(&cp, &vp).unwrap();
    assert_eq!(clustering_back.visits, clustering.visits);

    let labels = label_dataset(&clustering, ds.timezone, &pois, Some(&campus), &LabelConfig::default());
    let lp = dir.path().join("labels.csv");
    write_labels_csv(&lp, &labels, None).unwrap();
    let labels_back = read_labels_csv(&lp).unwrap();

    let grid = SamplingGrid::default();
    let units = build_units(&ds, &clustering, &labels, &grid, &FeatureConfig::default());
    assert!(!units.is_empty());
    let from_files = build_units(&ds, &clustering_back, &labels_back, &grid, &FeatureConfig::default());
    assert_eq!(units, from_files);

    let up = dir.path().join("units.csv");
    write_units_csv(&up, &units, Some("config_hash=x seed=21")).unwrap();
    assert_eq!(read_units_csv(&up).unwrap(), units);
}
