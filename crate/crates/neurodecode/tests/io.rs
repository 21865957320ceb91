use std::fs;

use neurodecode::config::{DataSource, ExperimentConfig, ReferenceSet};
use neurodecode::core::analysis::{threshold_map, Linkage, PsmCollection, PsmEntry};
use neurodecode::core::data::{synthesize, SynthConfig};
use neurodecode::core::network::{init_params, DropoutRates, NetworkParams};
use neurodecode::io;

fn tiny_dataset() -> neurodecode::core::data::Dataset {
    synthesize(&SynthConfig {
        n_subjects: 3,
        d: 4,
        class_count: 2,
        scans_per_class: vec![2, 3],
        seed: 4,
        ..SynthConfig::default()
    })
    .unwrap()
}

#[test]
fn dataset_csv_round_trips_exactly() {
    let ds = tiny_dataset();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    io::write_dataset(&path, &ds).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("subject_id,label,f0,f1,f2,f3\n"));
    assert_eq!(text.lines().count(), 16);
    let back = io::read_dataset(&path, None).unwrap();
    assert_eq!(back, ds);
}

#[test]
fn dataset_csv_errors_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");

    fs::write(&path, "subject,label,f0\ns1,0,1.0\n").unwrap();
    let err = io::read_dataset(&path, None).unwrap_err().to_string();
    assert!(err.contains("header"), "{err}");

    fs::write(&path, "subject_id,label,f0,f1\ns1,0,1.0,2.0\ns1,1,x,2.0\n").unwrap();
    let err = io::read_dataset(&path, None).unwrap_err().to_string();
    assert!(err.contains("line 3") && err.contains("'x'"), "{err}");

    fs::write(&path, "subject_id,label,f0\ns1,0,1.0\ns2,4,1.0\n").unwrap();
    let names = Some(vec!["a".to_string(), "b".to_string()]);
    let err = io::read_dataset(&path, names).unwrap_err().to_string();
    assert!(err.contains("bad.csv"), "{err}");

    fs::write(&path, "subject_id,label,f0,f1\ns1,0,1.0\n").unwrap();
    assert!(io::read_dataset(&path, None).is_err());
}

#[test]
fn params_json_is_bit_exact() {
    let params = init_params(&[5, 4, 3], 0.37, 8)
        .unwrap()
        .with_dropout(DropoutRates { input: 0.2, hidden: 0.5 })
        .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    io::write_json(&path, &params).unwrap();
    let back: NetworkParams = io::read_json(&path).unwrap();
    for l in 0..2 {
        let a = params.weights(l).as_slice().iter().map(|x| x.to_bits());
        let b = back.weights(l).as_slice().iter().map(|x| x.to_bits());
        assert!(a.eq(b));
    }
    assert_eq!(back, params);
}

#[test]
fn malformed_params_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    fs::write(
        &path,
        r#"{"layer_dims":[2,2],"weights":[[1.0,2.0,3.0]],"biases":[[0,0]],"dropout":{"input":0,"hidden":0}}"#,
    )
    .unwrap();
    assert!(io::read_json::<NetworkParams>(&path).is_err());
}

fn collection() -> PsmCollection {
    let s = 0.5f64.sqrt();
    PsmCollection::new(vec![
        PsmEntry { class_index: 0, class_name: "Motor".into(), rank: 1, vector: vec![1.0, 0.0, 0.0] },
        PsmEntry { class_index: 0, class_name: "Motor".into(), rank: 2, vector: vec![0.0, s, -s] },
        PsmEntry { class_index: 1, class_name: "Social cog".into(), rank: 1, vector: vec![0.0, -s, s] },
    ])
    .unwrap()
}

#[test]
fn psm_files_have_the_documented_layout() {
    let c = collection();
    let dir = tempfile::tempdir().unwrap();

    let path = dir.path().join(io::psm_file("Social cog", 1));
    assert!(path.ends_with("psm_Social_cog_1.csv"));
    io::write_psm(&path, &c.entries()[2].vector).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), "f0,f1,f2");
    assert_eq!(text.lines().count(), 2);

    let all = dir.path().join("psms.csv");
    io::write_psm_collection(&all, &c).unwrap();
    assert_eq!(io::read_psm_collection(&all).unwrap(), c);

    let out = neurodecode::experiment::run_analysis(&c, Linkage::Average, Some(dir.path())).unwrap();
    let sim = fs::read_to_string(dir.path().join("similarity.csv")).unwrap();
    let mut lines = sim.lines();
    assert_eq!(lines.next().unwrap(), "label,Motor_psm1,Motor_psm2,Social cog_psm1");
    assert_eq!(lines.next().unwrap(), "Motor_psm1,1,0,0");
    assert_eq!(lines.nth(1).unwrap(), "Social cog_psm1,0,1,1");
    assert_eq!(out.dendrogram.merges[0].distance, 0.0);

    let th = fs::read_to_string(dir.path().join("threshold_Motor_1.csv")).unwrap();
    let expected = threshold_map(&c.entries()[0].vector).unwrap();
    assert_eq!(th.lines().next().unwrap(), "feature,value,sign");
    assert_eq!(th.lines().nth(1).unwrap(), format!("f0,1,{}", expected.signs[0]));
}

#[test]
fn non_unit_psms_are_rejected_on_read() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("psms.csv");
    fs::write(&path, "class_index,class,rank,f0,f1\n0,a,1,1.0,1.0\n").unwrap();
    let err = io::read_psm_collection(&path).unwrap_err().to_string();
    assert!(err.contains("psms.csv"), "{err}");
}

#[test]
fn config_fills_defaults_and_rejects_unknown_fields() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    fs::write(&path, r#"{"data": {"synthetic": {"n_subjects": 30}}, "psa": {"reference": "all"}}"#).unwrap();
    let c = ExperimentConfig::load(&path).unwrap();
    let DataSource::Synthetic(s) = &c.data else { panic!("expected synthetic data") };
    assert_eq!(s.n_subjects, 30);
    assert_eq!(s.d, 116);
    assert_eq!(c.architectures, vec![vec![], vec![500], vec![500, 500], vec![500, 500, 500]]);
    assert_eq!(c.split.folds, 10);
    assert_eq!(c.psa.m, 3);
    assert_eq!(c.psa.reference, ReferenceSet::All);
    assert_eq!(c.psa.linkage, Linkage::Average);
    assert_eq!(c.train.batch_size, 100);

    fs::write(&path, r#"{"data": {"synthetic": {"n_subject": 30}}}"#).unwrap();
    let err = ExperimentConfig::load(&path).unwrap_err().to_string();
    assert!(err.contains("n_subject"), "{err}");

    fs::write(&path, r#"{"data": {"csv": {"path": "x.csv"}}, "architectures": [[0]]}"#).unwrap();
    let err = ExperimentConfig::load(&path).unwrap_err().to_string();
    assert!(err.contains("zero-width"), "{err}");
}

#[test]
fn csv_data_source_loads_through_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let ds = synthesize(&SynthConfig {
        n_subjects: 6,
        d: 3,
        class_count: 2,
        scans_per_class: vec![2, 2],
        ..SynthConfig::default()
    })
    .unwrap();
    io::write_dataset(&data, &ds).unwrap();
    let text = format!(
        r#"{{"data": {{"csv": {{"path": {:?}, "class_names": ["rest", "task"]}}}},
            "split": {{"n_test": 2, "n_valid": 1, "folds": 3}}}}"#,
        data.display().to_string()
    );
    let path = dir.path().join("c.json");
    fs::write(&path, text).unwrap();
    let loaded = ExperimentConfig::load(&path).unwrap().load_dataset().unwrap();
    assert_eq!(loaded.class_names(), ["rest", "task"]);
    assert_eq!(loaded.samples(), ds.samples());
}
