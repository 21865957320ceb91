//! Cross-validation, training-set-size sweeps and PSA runs.
//!
//! Seeds: the subject order comes from `derive(master, SUBJECT_ORDER)`; fold
//! `f` has seed `derive(master, FOLD + f)` and architecture `a` within it
//! trains with `derive(fold_seed, ARCH + a)`. A sweep reuses the same
//! training seeds for every M, so sweep point M equals a `cv` run with
//! `split.n_train = M`.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use neurodecode_core::analysis::{
    cluster, similarity_matrix, threshold_map, Linkage, Merge, PsmCollection, SimilarityMatrix,
    ThresholdedMap,
};
use neurodecode_core::data::{self, make_splits, prior_chance_level, Dataset, SplitSpec, Splits};
use neurodecode_core::network::{accuracy, layer_dims, train, NetworkParams, TrainConfig, TrainReport};
use neurodecode_core::seed::{self, stream};
use neurodecode_core::sensitivity::{analyze_all_classes, PsaResult, SensitivityMap};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ReferenceSet};
use crate::error::{Context, Error, Result};
use crate::io;

pub const THREADS_ENV: &str = "NEURODECODE_THREADS";

/// Parallel job limit from `NEURODECODE_THREADS` (default 1).
pub fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        },
    }
}

/// `<base>/<subcommand>-<unix seconds>-<seed>`, with `-2`, `-3`, ... appended
/// if that already exists.
pub fn create_run_dir(base: &Path, subcommand: &str, seed: u64) -> Result<PathBuf> {
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let stem = format!("{subcommand}-{stamp}-{seed}");
    fs::create_dir_all(base).map_err(|e| Error::io(base, e))?;
    let mut dir = base.join(&stem);
    let mut n = 1;
    while dir.exists() {
        n += 1;
        dir = base.join(format!("{stem}-{n}"));
    }
    fs::create_dir(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

/// `"none"` for softmax regression, otherwise widths joined by `-`.
pub fn arch_label(hidden: &[usize]) -> String {
    if hidden.is_empty() {
        "none".into()
    } else {
        hidden.iter().map(usize::to_string).collect::<Vec<_>>().join("-")
    }
}

/// Population mean and standard deviation.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldManifest {
    pub fold: usize,
    pub test: Vec<String>,
    pub valid: Vec<String>,
    pub train: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub subject_order: Vec<String>,
    pub folds: Vec<FoldManifest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub hidden_layers: Vec<usize>,
    pub n_train_subjects: usize,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    pub sd_accuracy: f64,
    pub prior_chance_level: f64,
    pub train_reports: Vec<TrainReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    #[serde(rename = "M")]
    pub m: usize,
    pub reports: Vec<CvReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    #[serde(rename = "M")]
    pub m: usize,
    pub manifest: Manifest,
}

/// Result of training on a single split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub hidden_layers: Vec<usize>,
    pub test_accuracy: f64,
    pub prior_chance_level: f64,
    pub report: TrainReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub class_index: usize,
    pub class_name: String,
    pub sample_count: usize,
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DendrogramExport {
    pub linkage: Linkage,
    pub labels: Vec<String>,
    pub merges: Vec<Merge>,
    pub leaf_order: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOutput {
    pub similarity: SimilarityMatrix,
    pub dendrogram: DendrogramExport,
    pub thresholds: Vec<ThresholdedMap>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsaOutput {
    pub maps: Vec<SensitivityMap>,
    pub results: Vec<PsaResult>,
    pub collection: PsmCollection,
    pub analysis: AnalysisOutput,
}

/// Runs the protocols in `config` over one loaded dataset.
pub struct Runner<'a> {
    config: &'a ExperimentConfig,
    dataset: &'a Dataset,
    threads: usize,
    verbose: bool,
}

struct Trained {
    params: NetworkParams,
    report: TrainReport,
    test_accuracy: f64,
}

impl<'a> Runner<'a> {
    pub fn new(config: &'a ExperimentConfig, dataset: &'a Dataset) -> Result<Self> {
        config.validate()?;
        config.validate_for(dataset.subjects().len())?;
        Ok(Runner { config, dataset, threads: 1, verbose: false })
    }

    pub fn threads(mut self, threads: usize) -> Self {
        self.threads = threads.max(1);
        self
    }

    /// Progress messages on standard error.
    pub fn verbose(mut self, verbose: bool) -> Self {
        self.verbose = verbose;
        self
    }

    fn log(&self, msg: impl FnOnce() -> String) {
        if self.verbose {
            eprintln!("{}", msg());
        }
    }

    fn subject_order(&self) -> Vec<String> {
        data::subject_order(self.dataset, seed::derive(self.config.seed, stream::SUBJECT_ORDER))
    }

    fn spec(&self, order: &[String], fold: usize, n_train: usize) -> SplitSpec {
        SplitSpec {
            fold_index: fold,
            n_test_subjects: self.config.split.n_test,
            n_valid_subjects: self.config.split.n_valid,
            n_train_subjects: n_train,
            subject_order: order.to_vec(),
        }
    }

    fn manifest(&self, order: &[String], folds: usize, n_train: usize) -> Result<Manifest> {
        let folds = (0..folds)
            .map(|f| {
                let a = self.spec(order, f, n_train).assignment()?;
                Ok(FoldManifest { fold: f, test: a.test, valid: a.valid, train: a.train })
            })
            .collect::<Result<_>>()?;
        Ok(Manifest { seed: self.config.seed, subject_order: order.to_vec(), folds })
    }

    fn train_config(&self, fold: usize, arch: usize) -> TrainConfig {
        let fold_seed = seed::derive(self.config.seed, stream::FOLD + fold as u64);
        TrainConfig { seed: seed::derive(fold_seed, stream::ARCH + arch as u64), ..self.config.train.clone() }
    }

    fn run_jobs<T, F>(&self, n: usize, job: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync,
    {
        if self.threads <= 1 {
            return (0..n).map(job).collect();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker threads: {e}")))?;
        pool.install(|| (0..n).into_par_iter().map(&job).collect())
    }

    fn train_fold(&self, splits: &Splits, fold: usize, arch: usize) -> Result<Trained> {
        let hidden = &self.config.architectures[arch];
        let dims = layer_dims(self.dataset.d(), hidden, self.dataset.class_count());
        let (params, report) = train(&self.train_config(fold, arch), &splits.train, &splits.valid, &dims)
            .context(|| format!("fold {fold}, architecture [{}]", arch_label(hidden)))?;
        let test_accuracy = accuracy(&params, &splits.test)?;
        self.log(|| {
            format!(
                "fold {fold} [{}]: {} epochs, learning rate {}, test accuracy {test_accuracy:.4}",
                arch_label(hidden),
                report.epochs_run,
                report.chosen_learning_rate
            )
        });
        Ok(Trained { params, report, test_accuracy })
    }

    /// Trains every architecture on every fold with `n_train` training subjects.
    fn cross_validate(&self, order: &[String], n_train: usize) -> Result<Vec<Vec<Trained>>> {
        let folds = self.config.split.folds;
        let archs = self.config.architectures.len();
        let splits = (0..folds)
            .map(|f| make_splits(self.dataset, &self.spec(order, f, n_train)))
            .collect::<neurodecode_core::Result<Vec<_>>>()?;
        let flat = self
            .run_jobs(folds * archs, |job| self.train_fold(&splits[job / archs], job / archs, job % archs))?;
        let mut by_arch: Vec<Vec<Trained>> = (0..archs).map(|_| Vec::with_capacity(folds)).collect();
        for (job, t) in flat.into_iter().enumerate() {
            by_arch[job % archs].push(t);
        }
        Ok(by_arch)
    }

    fn reports(&self, trained: &[Vec<Trained>], n_train: usize) -> Result<Vec<CvReport>> {
        let chance = prior_chance_level(self.dataset)?;
        Ok(trained
            .iter()
            .zip(&self.config.architectures)
            .map(|(runs, hidden)| {
                let fold_accuracies: Vec<f64> = runs.iter().map(|t| t.test_accuracy).collect();
                let (mean_accuracy, sd_accuracy) = mean_sd(&fold_accuracies);
                CvReport {
                    hidden_layers: hidden.clone(),
                    n_train_subjects: n_train,
                    fold_accuracies,
                    mean_accuracy,
                    sd_accuracy,
                    prior_chance_level: chance,
                    train_reports: runs.iter().map(|t| t.report.clone()).collect(),
                }
            })
            .collect())
    }

    /// Leave-`n_test`-subjects-out cross validation of every architecture.
    ///
    /// With `out`, writes `manifest.json`, `cv_report.json` (one report per
    /// architecture) and `fold_<f>/params_<arch>.json`.
    pub fn run_cv(&self, out: Option<&Path>) -> Result<Vec<CvReport>> {
        let order = self.subject_order();
        let n_train = self.config.n_train(order.len());
        let manifest = self.manifest(&order, self.config.split.folds, n_train)?;
        let trained = self.cross_validate(&order, n_train)?;
        let reports = self.reports(&trained, n_train)?;
        if let Some(dir) = out {
            io::write_json(&dir.join("manifest.json"), &manifest)?;
            for (fold, _) in manifest.folds.iter().enumerate() {
                let fold_dir = dir.join(format!("fold_{fold:02}"));
                fs::create_dir_all(&fold_dir).map_err(|e| Error::io(&fold_dir, e))?;
                for (runs, hidden) in trained.iter().zip(&self.config.architectures) {
                    let path = fold_dir.join(format!("params_{}.json", arch_label(hidden)));
                    io::write_json(&path, &runs[fold].params)?;
                }
            }
            io::write_json(&dir.join("cv_report.json"), &reports)?;
        }
        for r in &reports {
            self.log(|| {
                format!(
                    "[{}] mean accuracy {:.4} +/- {:.4} (chance {:.4})",
                    arch_label(&r.hidden_layers),
                    r.mean_accuracy,
                    r.sd_accuracy,
                    r.prior_chance_level
                )
            });
        }
        Ok(reports)
    }

    /// Cross validation at each training-set size in `split.m_values`, with
    /// the test and validation subjects of every fold held fixed across sizes.
    ///
    /// With `out`, writes `sweep.csv` (first architecture),
    /// `sweep_<arch>.csv` per architecture, `sweep_report.json` and
    /// `manifest.json`.
    pub fn run_size_sweep(&self, out: Option<&Path>) -> Result<Vec<SweepPoint>> {
        let order = self.subject_order();
        let s = &self.config.split;
        let largest = s.m_values.iter().copied().max().unwrap_or(0);
        if largest + s.n_test + s.n_valid > order.len() {
            return Err(Error::Config(format!(
                "M = {largest} plus {} test and {} validation subjects exceeds the {} subjects",
                s.n_test,
                s.n_valid,
                order.len()
            )));
        }
        let mut points = Vec::new();
        let mut manifests = Vec::new();
        for &m in &s.m_values {
            self.log(|| format!("M = {m}"));
            manifests.push(SweepManifest { m, manifest: self.manifest(&order, s.folds, m)? });
            let trained = self.cross_validate(&order, m).context(|| format!("M = {m}"))?;
            points.push(SweepPoint { m, reports: self.reports(&trained, m)? });
        }
        if let Some(dir) = out {
            let rows = |a: usize| -> Vec<(usize, f64, f64)> {
                points.iter().map(|p| (p.m, p.reports[a].mean_accuracy, p.reports[a].sd_accuracy)).collect()
            };
            io::write_sweep(&dir.join("sweep.csv"), &rows(0))?;
            for (a, hidden) in self.config.architectures.iter().enumerate() {
                io::write_sweep(&dir.join(format!("sweep_{}.csv", arch_label(hidden))), &rows(a))?;
            }
            io::write_json(&dir.join("sweep_report.json"), &points)?;
            io::write_json(&dir.join("manifest.json"), &manifests)?;
        }
        Ok(points)
    }

    /// Splits of the first fold.
    pub fn first_split(&self) -> Result<(Splits, Manifest)> {
        let order = self.subject_order();
        let n_train = self.config.n_train(order.len());
        let manifest = self.manifest(&order, 1, n_train)?;
        Ok((make_splits(self.dataset, &self.spec(&order, 0, n_train))?, manifest))
    }

    /// Trains every architecture on the first fold.
    ///
    /// With `out`, writes `manifest.json`, `train_report.json` and
    /// `params_<arch>.json`.
    pub fn train_split(&self, out: Option<&Path>) -> Result<Vec<(NetworkParams, SplitResult)>> {
        let (splits, manifest) = self.first_split()?;
        let chance = prior_chance_level(self.dataset)?;
        let trained = self.run_jobs(self.config.architectures.len(), |a| self.train_fold(&splits, 0, a))?;
        let results: Vec<(NetworkParams, SplitResult)> = trained
            .into_iter()
            .zip(&self.config.architectures)
            .map(|(t, hidden)| {
                let result = SplitResult {
                    hidden_layers: hidden.clone(),
                    test_accuracy: t.test_accuracy,
                    prior_chance_level: chance,
                    report: t.report,
                };
                (t.params, result)
            })
            .collect();
        if let Some(dir) = out {
            io::write_json(&dir.join("manifest.json"), &manifest)?;
            for (params, r) in &results {
                io::write_json(&dir.join(format!("params_{}.json", arch_label(&r.hidden_layers))), params)?;
            }
            let reports: Vec<&SplitResult> = results.iter().map(|(_, r)| r).collect();
            io::write_json(&dir.join("train_report.json"), &reports)?;
        }
        Ok(results)
    }

    /// The reference dataset selected by `psa.reference` from the first fold.
    pub fn reference_set(&self, splits: &Splits) -> Dataset {
        match self.config.psa.reference {
            ReferenceSet::Test => splits.test.clone(),
            ReferenceSet::Valid => splits.valid.clone(),
            ReferenceSet::Train => splits.train.clone(),
            ReferenceSet::All => self.dataset.clone(),
        }
    }

    /// PSA of `params` over the configured reference set, then the analysis
    /// of all resulting PSMs. Without `params`, the first architecture is
    /// trained on the first fold (and saved as `params.json`).
    pub fn run_psa(&self, params: Option<&NetworkParams>, out: Option<&Path>) -> Result<PsaOutput> {
        let (splits, manifest) = self.first_split()?;
        let owned;
        let params = match params {
            Some(p) => p,
            None => {
                owned = self.train_fold(&splits, 0, 0)?.params;
                if let Some(dir) = out {
                    io::write_json(&dir.join("params.json"), &owned)?;
                }
                &owned
            }
        };
        let reference = self.reference_set(&splits);
        self.log(|| format!("PSA over {} reference samples", reference.len()));
        let output = run_psa(params, &reference, self.config.psa.m, self.config.psa.linkage, out)?;
        if let Some(dir) = out {
            io::write_json(&dir.join("manifest.json"), &manifest)?;
        }
        Ok(output)
    }
}

/// Kernel, map and top-`m` PSMs for every class, followed by [`run_analysis`].
///
/// With `out`, writes `psa.json`, `sensitivity_map_<class>.csv`,
/// `psm_<class>_<rank>.csv`, `psms.csv` and the analysis files.
pub fn run_psa(
    params: &NetworkParams,
    reference: &Dataset,
    m: usize,
    linkage: Linkage,
    out: Option<&Path>,
) -> Result<PsaOutput> {
    if params.input_dim() != reference.d() || params.class_count() != reference.class_count() {
        return Err(Error::Config(format!(
            "network is {:?} but the reference data has {} features and {} classes",
            params.layer_dims(),
            reference.d(),
            reference.class_count()
        )));
    }
    let (maps, results): (Vec<_>, Vec<_>) = analyze_all_classes(params, reference, m)?.into_iter().unzip();
    let collection = PsmCollection::from_psa_results(&results)?;
    if let Some(dir) = out {
        let summary: Vec<ClassSummary> = results
            .iter()
            .map(|r| ClassSummary {
                class_index: r.class_index,
                class_name: r.class_name.clone(),
                sample_count: reference.len(),
                eigenvalues: r.eigenvalues.clone(),
            })
            .collect();
        io::write_json(&dir.join("psa.json"), &summary)?;
        for map in &maps {
            let path = dir.join(format!("sensitivity_map_{}.csv", io::file_stem(&map.class_name)));
            io::write_sensitivity_map(&path, map)?;
        }
        for e in collection.entries() {
            io::write_psm(&dir.join(io::psm_file(&e.class_name, e.rank)), &e.vector)?;
        }
        io::write_psm_collection(&dir.join("psms.csv"), &collection)?;
    }
    let analysis = run_analysis(&collection, linkage, out)?;
    Ok(PsaOutput { maps, results, collection, analysis })
}

/// Similarity matrix, dendrogram and thresholded maps of a PSM collection.
///
/// With `out`, writes `similarity.csv`, `dendrogram.json` and
/// `threshold_<class>_<rank>.csv`.
pub fn run_analysis(
    collection: &PsmCollection,
    linkage: Linkage,
    out: Option<&Path>,
) -> Result<AnalysisOutput> {
    let similarity = similarity_matrix(collection)?;
    let dg = cluster(&similarity, linkage)?;
    let dendrogram = DendrogramExport {
        linkage,
        labels: similarity.labels.clone(),
        merges: dg.merges,
        leaf_order: dg.leaf_order,
    };
    let thresholds = collection
        .entries()
        .iter()
        .map(|e| threshold_map(&e.vector))
        .collect::<neurodecode_core::Result<Vec<_>>>()?;
    if let Some(dir) = out {
        io::write_similarity(&dir.join("similarity.csv"), &similarity)?;
        io::write_json(&dir.join("dendrogram.json"), &dendrogram)?;
        for (e, t) in collection.entries().iter().zip(&thresholds) {
            io::write_threshold(&dir.join(io::threshold_file(&e.class_name, e.rank)), &e.vector, t)?;
        }
    }
    Ok(AnalysisOutput { similarity, dendrogram, thresholds })
}

/// Checks that test sets are pairwise disjoint and no fold shares subjects
/// between its training, validation and test sets. Returns the union of
/// the test sets.
pub fn check_manifest(manifest: &Manifest) -> Result<BTreeSet<String>> {
    let mut seen = BTreeSet::new();
    for f in &manifest.folds {
        let test: BTreeSet<&String> = f.test.iter().collect();
        let train: BTreeSet<&String> = f.train.iter().collect();
        let valid: BTreeSet<&String> = f.valid.iter().collect();
        if let Some(s) = test.intersection(&train).next().or_else(|| test.intersection(&valid).next()) {
            return Err(Error::Config(format!(
                "fold {}: subject {s} is in the test set and another set",
                f.fold
            )));
        }
        if let Some(s) = train.intersection(&valid).next() {
            return Err(Error::Config(format!("fold {}: subject {s} is in training and validation", f.fold)));
        }
        for s in &f.test {
            if !seen.insert(s.clone()) {
                return Err(Error::Config(format!("subject {s} is tested in more than one fold")));
            }
        }
    }
    Ok(seen)
}
