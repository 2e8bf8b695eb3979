use awar::pipeline::io::{read_curves_csv, write_curves_csv, write_dataset_csv};
use awar::pipeline::{gen_synthetic, mean_aupc};
use awar::{run_experiment, Algorithm, ExperimentManifest, ScoreTable, ShiftSpec};

fn small_spec() -> ShiftSpec {
    ShiftSpec {
        dim: 8,
        informative_dims: 2,
        rotation_deg: vec![25.0, 25.0],
        p_pos: 0.3,
        n_source: 80,
        n_target: 60,
        extra_dims: 2,
        extra_separation: 2.0,
        ..Default::default()
    }
}

#[test]
fn experiment_from_files_round_trips_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_synthetic(&small_spec(), 3).unwrap();
    write_dataset_csv(&dir.path().join("s.csv"), &data.source).unwrap();
    write_dataset_csv(&dir.path().join("t.csv"), &data.target).unwrap();
    write_dataset_csv(&dir.path().join("ta.csv"), data.target_all.as_ref().unwrap()).unwrap();

    let mut manifest = ExperimentManifest {
        k: 2,
        max_iterations: 4,
        repeats: 2,
        pca_dim: 5,
        target_all: Some("ta.csv".into()),
        ..ExperimentManifest::new("s.csv", "t.csv", Algorithm::ALL.to_vec())
    };
    manifest.resolve_paths(dir.path());
    let out = run_experiment(&manifest, 1).unwrap();
    assert_eq!(out.curves.len(), Algorithm::ALL.len() * 2);
    for c in &out.curves {
        assert_eq!(c.points.len(), 5);
        assert!(c.points.windows(2).all(|w| w[1].m_l == w[0].m_l + 2));
    }
    for alg in [Algorithm::WarRls, Algorithm::AwarSvm, Algorithm::AwarRlsEc] {
        let v = mean_aupc(&out.curves, alg.name()).unwrap();
        assert!((0.0..=1.0).contains(&v), "{alg:?}: {v}");
    }

    let path = dir.path().join("curves.csv");
    write_curves_csv(&path, &out.curves).unwrap();
    let rows = read_curves_csv(&path).unwrap();
    let table = ScoreTable::from_curves(&rows).unwrap();
    assert_eq!(table.algorithms().len(), Algorithm::ALL.len());
    assert_eq!(table.n_blocks(), 2);
}

#[test]
fn manifest_json_uses_display_names() {
    let m = ExperimentManifest::new("a.csv", "b.csv", vec![Algorithm::AwarRls, Algorithm::BlEc]);
    let text = serde_json::to_string(&m).unwrap();
    assert!(text.contains("\"AwAR-RLS\"") && text.contains("\"BL-EC\""), "{text}");
    let back: ExperimentManifest = serde_json::from_str(&text).unwrap();
    assert_eq!(back.algorithms, m.algorithms);
}
