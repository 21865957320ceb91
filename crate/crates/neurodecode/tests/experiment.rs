use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use neurodecode::config::{DataSource, ExperimentConfig, PsaConfig, SplitConfig};
use neurodecode::core::analysis::Linkage;
use neurodecode::core::data::{prior_chance_level, SynthConfig};
use neurodecode::core::network::TrainConfig;
use neurodecode::experiment::{check_manifest, mean_sd, CvReport, Manifest, Runner, SweepManifest};
use neurodecode::io;

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        data: DataSource::Synthetic(SynthConfig {
            n_subjects: 20,
            d: 10,
            class_count: 3,
            scans_per_class: vec![4, 5, 6],
            noise_scale: 2.0,
            seed: 5,
            ..SynthConfig::default()
        }),
        architectures: vec![vec![], vec![6]],
        train: TrainConfig {
            learning_rate_grid: vec![0.01, 0.05],
            batch_size: 20,
            patience_epochs: 3,
            max_epochs: 8,
            init_std: 0.1,
            ..TrainConfig::default()
        },
        split: SplitConfig { n_test: 4, n_valid: 3, n_train: None, m_values: vec![3, 6, 9], folds: 5 },
        psa: PsaConfig::default(),
        output_dir: "unused".into(),
        seed: 11,
    }
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                files.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn cv_report_is_self_consistent_and_persisted() {
    let config = small_config();
    let dataset = config.load_dataset().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let reports = Runner::new(&config, &dataset).unwrap().run_cv(Some(dir.path())).unwrap();

    let persisted: Vec<CvReport> = io::read_json(&dir.path().join("cv_report.json")).unwrap();
    assert_eq!(persisted, reports);
    assert_eq!(persisted.len(), 2);
    for r in &persisted {
        assert_eq!(r.fold_accuracies.len(), 5);
        assert_eq!(r.train_reports.len(), 5);
        let n = r.fold_accuracies.len() as f64;
        let mean = r.fold_accuracies.iter().sum::<f64>() / n;
        let sd = (r.fold_accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((mean - r.mean_accuracy).abs() <= 1e-12);
        assert!((sd - r.sd_accuracy).abs() <= 1e-12);
        assert_eq!(r.prior_chance_level, prior_chance_level(&dataset).unwrap());
        assert_eq!(r.n_train_subjects, 13);
    }
    for fold in 0..5 {
        for arch in ["none", "6"] {
            assert!(dir.path().join(format!("fold_{fold:02}/params_{arch}.json")).exists());
        }
    }

    let manifest: Manifest = io::read_json(&dir.path().join("manifest.json")).unwrap();
    let tested = check_manifest(&manifest).unwrap();
    let all: BTreeSet<String> = dataset.subjects().into_iter().collect();
    assert_eq!(tested, all);
}

#[test]
fn parallel_jobs_give_the_serial_result() {
    let config = small_config();
    let dataset = config.load_dataset().unwrap();
    let serial = tempfile::tempdir().unwrap();
    let parallel = tempfile::tempdir().unwrap();
    Runner::new(&config, &dataset).unwrap().run_cv(Some(serial.path())).unwrap();
    Runner::new(&config, &dataset).unwrap().threads(3).run_cv(Some(parallel.path())).unwrap();
    assert_eq!(read_dir_bytes(serial.path()), read_dir_bytes(parallel.path()));
}

#[test]
fn sweep_holds_test_and_validation_subjects_fixed() {
    let config = small_config();
    let dataset = config.load_dataset().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let points = Runner::new(&config, &dataset).unwrap().run_size_sweep(Some(dir.path())).unwrap();
    assert_eq!(points.iter().map(|p| p.m).collect::<Vec<_>>(), vec![3, 6, 9]);

    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "M,mean,sd");
    assert!(lines[1].starts_with("3,"));
    assert!(dir.path().join("sweep_6.csv").exists());

    let manifests: Vec<SweepManifest> = io::read_json(&dir.path().join("manifest.json")).unwrap();
    for fold in 0..5 {
        let first = &manifests[0].manifest.folds[fold];
        for m in &manifests {
            let f = &m.manifest.folds[fold];
            assert_eq!(f.test, first.test);
            assert_eq!(f.valid, first.valid);
            assert_eq!(f.train.len(), m.m);
            check_manifest(&m.manifest).unwrap();
        }
    }
}

#[test]
fn sweep_point_equals_cv_with_that_training_size() {
    let config = small_config();
    let dataset = config.load_dataset().unwrap();
    let points = Runner::new(&config, &dataset).unwrap().run_size_sweep(None).unwrap();
    let mut fixed = config.clone();
    fixed.split.n_train = Some(6);
    let cv = Runner::new(&fixed, &dataset).unwrap().run_cv(None).unwrap();
    assert_eq!(points[1].reports, cv);
}

#[test]
fn sweep_rejects_sizes_that_do_not_fit() {
    let mut config = small_config();
    config.split.m_values = vec![14];
    let dataset = config.load_dataset().unwrap();
    let err = Runner::new(&config, &dataset).unwrap().run_size_sweep(None).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("M = 14"), "{err}");
}

#[test]
fn too_many_folds_are_rejected() {
    let mut config = small_config();
    config.split.folds = 6;
    let err = config.load_dataset().unwrap_err();
    assert!(err.to_string().contains("6 folds"), "{err}");
}

#[test]
fn easy_regime_decodes_well_above_chance() {
    let config = ExperimentConfig {
        data: DataSource::Synthetic(SynthConfig {
            n_subjects: 40,
            d: 30,
            scans_per_class: vec![4, 5, 6, 6, 5, 5, 8],
            noise_scale: 2.0,
            subject_distortion_scale: 0.2,
            seed: 2,
            ..SynthConfig::default()
        }),
        architectures: vec![vec![32, 32]],
        train: TrainConfig {
            learning_rate_grid: vec![0.01],
            batch_size: 50,
            patience_epochs: 5,
            max_epochs: 40,
            init_std: 0.1,
            ..TrainConfig::default()
        },
        split: SplitConfig { n_test: 8, n_valid: 4, n_train: None, m_values: vec![], folds: 5 },
        psa: PsaConfig::default(),
        output_dir: "unused".into(),
        seed: 1,
    };
    let dataset = config.load_dataset().unwrap();
    let chance = prior_chance_level(&dataset).unwrap();
    let report = &Runner::new(&config, &dataset).unwrap().run_cv(None).unwrap()[0];
    assert!(report.mean_accuracy >= chance + 0.20, "{} vs chance {chance}", report.mean_accuracy);
}

fn seven_class_config() -> ExperimentConfig {
    let mut config = small_config();
    config.data = DataSource::Synthetic(SynthConfig {
        n_subjects: 20,
        d: 12,
        scans_per_class: vec![2, 3, 3, 3, 2, 3, 4],
        noise_scale: 2.0,
        seed: 9,
        ..SynthConfig::default()
    });
    config.architectures = vec![vec![8]];
    config
}

#[test]
fn psa_exports_twenty_one_psms_and_their_analysis() {
    let config = seven_class_config();
    let dataset = config.load_dataset().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = Runner::new(&config, &dataset).unwrap().run_psa(None, Some(dir.path())).unwrap();

    assert_eq!(out.collection.len(), 21);
    let rows = fs::read_to_string(dir.path().join("psms.csv")).unwrap();
    assert_eq!(rows.lines().count(), 22);
    assert!(rows.lines().nth(1).unwrap().starts_with("0,Emotion,1,"));
    for name in ["Emotion", "WM"] {
        for rank in 1..=3 {
            assert!(dir.path().join(format!("psm_{name}_{rank}.csv")).exists());
            assert!(dir.path().join(format!("threshold_{name}_{rank}.csv")).exists());
        }
        assert!(dir.path().join(format!("sensitivity_map_{name}.csv")).exists());
    }
    for file in ["params.json", "psa.json", "similarity.csv", "dendrogram.json", "manifest.json"] {
        assert!(dir.path().join(file).exists(), "{file}");
    }
    let sim = &out.analysis.similarity.values;
    for i in 0..21 {
        assert_eq!(sim.get(i, i), 1.0);
    }
    assert_eq!(out.analysis.dendrogram.merges.len(), 20);

    // psms.csv feeds the standalone analysis unchanged
    let reread = io::read_psm_collection(&dir.path().join("psms.csv")).unwrap();
    assert_eq!(reread, out.collection);

    // a rerun on the saved parameters reproduces every file
    let params = io::read_json(&dir.path().join("params.json")).unwrap();
    let again = tempfile::tempdir().unwrap();
    Runner::new(&config, &dataset).unwrap().run_psa(Some(&params), Some(again.path())).unwrap();
    let mut first = read_dir_bytes(dir.path());
    first.retain(|(name, _)| name != "params.json");
    assert_eq!(first, read_dir_bytes(again.path()));
}

#[test]
fn psa_rejects_mismatched_parameters() {
    let config = seven_class_config();
    let dataset = config.load_dataset().unwrap();
    let params = neurodecode::core::network::init_params(&[5, 3, 7], 0.1, 0).unwrap();
    let err = Runner::new(&config, &dataset).unwrap().run_psa(Some(&params), None).unwrap_err();
    assert!(err.to_string().contains("12 features"), "{err}");
}

#[test]
fn analysis_linkage_is_configurable() {
    let config = seven_class_config();
    let dataset = config.load_dataset().unwrap();
    let out = Runner::new(&config, &dataset).unwrap().run_psa(None, None).unwrap();
    let single = neurodecode::experiment::run_analysis(&out.collection, Linkage::Single, None).unwrap();
    assert_eq!(single.similarity, out.analysis.similarity);
    assert_eq!(single.dendrogram.linkage, Linkage::Single);
    let heights =
        |merges: &[neurodecode::core::analysis::Merge]| merges.iter().map(|m| m.distance).sum::<f64>();
    assert!(heights(&single.dendrogram.merges) <= heights(&out.analysis.dendrogram.merges) + 1e-12);
}

#[test]
fn mean_sd_is_population() {
    let (m, s) = mean_sd(&[0.4, 0.6]);
    assert!((m - 0.5).abs() < 1e-15);
    assert!((s - 0.1).abs() < 1e-15);
}
