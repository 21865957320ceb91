//! Datasets of subject-tagged feature vectors, preprocessing, subject-wise
//! splits and the synthetic multi-subject generator.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, invalid};
use crate::linalg::Matrix;
use crate::{seed, Result};

/// Task classes of the HCP working set, in label order.
pub const HCP_CLASS_NAMES: [&str; 7] =
    ["Emotion", "Gambling", "Language", "Motor", "Relational", "Social", "WM"];

/// Scans per session for each HCP task, in [`HCP_CLASS_NAMES`] order.
pub const HCP_SCANS_PER_SESSION: [usize; 7] = [176, 253, 316, 284, 232, 274, 405];

/// Number of anatomical regions in the AAL parcellation.
pub const AAL_REGIONS: usize = 116;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub subject_id: String,
    pub features: Vec<f64>,
    pub label: usize,
}

/// Labeled feature vectors grouped by subject.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    d: usize,
    class_names: Vec<String>,
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(d: usize, class_names: Vec<String>, samples: Vec<Sample>) -> Result<Self> {
        if class_names.is_empty() {
            return Err(invalid!("a dataset needs at least one class"));
        }
        for (n, s) in samples.iter().enumerate() {
            if s.features.len() != d {
                return Err(dim_err!("sample {n} has {} features, expected {d}", s.features.len()));
            }
            if s.label >= class_names.len() {
                return Err(invalid!(
                    "sample {n} has label {} but there are only {} classes",
                    s.label,
                    class_names.len()
                ));
            }
            if s.features.iter().any(|x| !x.is_finite()) {
                return Err(invalid!("sample {n} has a non-finite feature"));
            }
        }
        Ok(Dataset { d, class_names, samples })
    }

    /// Class names `class0`, `class1`, ... (or the HCP names for seven classes).
    pub fn default_class_names(class_count: usize) -> Vec<String> {
        if class_count == HCP_CLASS_NAMES.len() {
            HCP_CLASS_NAMES.iter().map(|s| s.to_string()).collect()
        } else {
            (0..class_count).map(|k| format!("class{k}")).collect()
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Distinct subject ids, sorted.
    pub fn subjects(&self) -> Vec<String> {
        self.samples
            .iter()
            .map(|s| s.subject_id.as_str())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(String::from)
            .collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count()];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// The samples whose subject is in `subjects`, in dataset order.
    pub fn restrict_to(&self, subjects: &BTreeSet<&str>) -> Dataset {
        Dataset {
            d: self.d,
            class_names: self.class_names.clone(),
            samples: self
                .samples
                .iter()
                .filter(|s| subjects.contains(s.subject_id.as_str()))
                .cloned()
                .collect(),
        }
    }

    pub fn feature_matrix(&self) -> Matrix {
        let entries = self.samples.iter().flat_map(|s| s.features.iter().copied()).collect();
        // features were validated on construction
        Matrix::from_vec(self.samples.len(), self.d, entries).expect("validated dataset")
    }
}

/// Standardizes every column to mean 0 and population s.d. 1.
///
/// Constant columns become zero columns.
pub fn zscore(columns: &Matrix) -> Result<Matrix> {
    let n = columns.rows();
    if n < 2 {
        return Err(invalid!("z-scoring needs at least 2 rows, got {n}"));
    }
    let mut out = Matrix::zeros(n, columns.cols());
    for c in 0..columns.cols() {
        let col = columns.column(c);
        let (lo, hi) =
            col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        if lo == hi {
            continue;
        }
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        let sd = libm::sqrt(var);
        if sd == 0.0 {
            continue;
        }
        for (r, x) in col.iter().enumerate() {
            out.set(r, c, (x - mean) / sd);
        }
    }
    Ok(out)
}

/// Averages voxel columns into region columns. Region `r` of the output is
/// the mean of the voxels labeled `r`; the region count is `max(label) + 1`.
pub fn region_average(voxels: &Matrix, region_labels: &[usize]) -> Result<Matrix> {
    if voxels.cols() != region_labels.len() {
        return Err(dim_err!("{} voxel columns but {} region labels", voxels.cols(), region_labels.len()));
    }
    let n_regions = region_labels.iter().max().map_or(0, |&m| m + 1);
    let mut sizes = vec![0usize; n_regions];
    for &r in region_labels {
        sizes[r] += 1;
    }
    let empty: Vec<usize> = (0..n_regions).filter(|&r| sizes[r] == 0).collect();
    if !empty.is_empty() {
        return Err(invalid!("regions without voxels: {empty:?}"));
    }

    let mut out = Matrix::zeros(voxels.rows(), n_regions);
    for s in 0..voxels.rows() {
        let row = out.row_mut(s);
        for (&x, &r) in voxels.row(s).iter().zip(region_labels) {
            row[r] += x;
        }
        for (acc, &size) in row.iter_mut().zip(&sizes) {
            *acc /= size as f64;
        }
    }
    Ok(out)
}

/// The largest class fraction: the accuracy of the best constant predictor.
pub fn prior_chance_level(dataset: &Dataset) -> Result<f64> {
    prior_chance_from_counts(&dataset.class_counts())
}

pub fn prior_chance_from_counts(counts: &[usize]) -> Result<f64> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(invalid!("chance level of an empty dataset is undefined"));
    }
    let largest = counts.iter().copied().max().unwrap_or(0);
    Ok(largest as f64 / total as f64)
}

/// Which subjects go where for one cross-validation fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub fold_index: usize,
    pub n_test_subjects: usize,
    pub n_valid_subjects: usize,
    pub n_train_subjects: usize,
    pub subject_order: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
}

/// Subject ids of each part of a fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub test: Vec<String>,
    pub valid: Vec<String>,
    pub train: Vec<String>,
}

/// Seeded Fisher-Yates permutation of the sorted subject ids.
pub fn subject_order(dataset: &Dataset, seed: u64) -> Vec<String> {
    let mut order = dataset.subjects();
    order.shuffle(&mut seed::rng(seed));
    order
}

impl SplitSpec {
    /// Test subjects are `order[fold·n_test .. (fold+1)·n_test]`; validation
    /// then training subjects are taken in order from what remains.
    pub fn assignment(&self) -> Result<SplitAssignment> {
        let total = self.subject_order.len();
        let distinct: BTreeSet<&str> = self.subject_order.iter().map(String::as_str).collect();
        if distinct.len() != total {
            return Err(invalid!("subject order contains duplicates"));
        }
        let start = self.fold_index * self.n_test_subjects;
        let end = start + self.n_test_subjects;
        if end > total {
            return Err(invalid!(
                "fold {} needs test subjects {start}..{end} but only {total} subjects exist",
                self.fold_index
            ));
        }
        let needed = self.n_test_subjects + self.n_valid_subjects + self.n_train_subjects;
        if needed > total {
            return Err(invalid!(
                "split needs {needed} subjects ({} test, {} valid, {} train) but only {total} exist",
                self.n_test_subjects,
                self.n_valid_subjects,
                self.n_train_subjects
            ));
        }
        let test = self.subject_order[start..end].to_vec();
        let rest: Vec<String> =
            self.subject_order[..start].iter().chain(&self.subject_order[end..]).cloned().collect();
        let valid = rest[..self.n_valid_subjects].to_vec();
        let train = rest[self.n_valid_subjects..self.n_valid_subjects + self.n_train_subjects].to_vec();
        Ok(SplitAssignment { test, valid, train })
    }
}

pub fn make_splits(dataset: &Dataset, spec: &SplitSpec) -> Result<Splits> {
    let known: BTreeSet<String> = dataset.subjects().into_iter().collect();
    if let Some(missing) = spec.subject_order.iter().find(|s| !known.contains(*s)) {
        return Err(invalid!("subject '{missing}' is not in the dataset"));
    }
    let a = spec.assignment()?;
    let pick = |ids: &[String]| dataset.restrict_to(&ids.iter().map(String::as_str).collect());
    Ok(Splits { train: pick(&a.train), valid: pick(&a.valid), test: pick(&a.test) })
}

/// Parameters of the synthetic multi-subject generator.
///
/// Each class has a prototype drawn from `N(0, prototype_scale²)`. Each
/// subject has an additive distortion from `N(0, subject_distortion_scale²)`
/// and a gain from `N(1, 0.1²)` clipped to `[0.5, 1.5]`. A scan is
/// `gain · prototype + distortion + N(0, noise_scale²)`, and every subject's
/// scans are z-scored feature-wise. The z-scoring removes the distortion,
/// which is constant within a subject, so `noise_scale / prototype_scale`
/// is what sets the difficulty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub d: usize,
    pub class_count: usize,
    pub scans_per_class: Vec<usize>,
    pub prototype_scale: f64,
    pub subject_distortion_scale: f64,
    pub noise_scale: f64,
    pub seed: u64,
}

/// HCP scan counts scaled by `scale` and rounded, at least one scan each.
pub fn hcp_proportional_counts(scale: f64) -> Vec<usize> {
    HCP_SCANS_PER_SESSION.iter().map(|&c| (libm::round(c as f64 * scale) as usize).max(1)).collect()
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_subjects: 100,
            d: AAL_REGIONS,
            class_count: HCP_CLASS_NAMES.len(),
            // 388 scans per subject; WM stays at 81/388 = 20.88%
            scans_per_class: hcp_proportional_counts(0.2),
            prototype_scale: 1.0,
            subject_distortion_scale: 1.0,
            noise_scale: 8.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 || self.d == 0 || self.class_count == 0 {
            return Err(invalid!("n_subjects, d and class_count must all be at least 1"));
        }
        if self.scans_per_class.len() != self.class_count {
            return Err(invalid!(
                "scans_per_class has {} entries for {} classes",
                self.scans_per_class.len(),
                self.class_count
            ));
        }
        if self.scans_per_class.contains(&0) {
            return Err(invalid!("every class needs at least one scan per subject"));
        }
        if self.scans_per_class.iter().sum::<usize>() < 2 {
            return Err(invalid!("each subject needs at least 2 scans to be z-scored"));
        }
        for (name, v) in [
            ("prototype_scale", self.prototype_scale),
            ("subject_distortion_scale", self.subject_distortion_scale),
            ("noise_scale", self.noise_scale),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid!("{name} must be finite and non-negative, got {v}"));
            }
        }
        Ok(())
    }
}

pub fn synthesize(config: &SynthConfig) -> Result<Dataset> {
    generate(config, true)
}

fn generate(config: &SynthConfig, standardize: bool) -> Result<Dataset> {
    config.validate()?;
    let d = config.d;
    let mut rng = seed::rng(config.seed);
    let mut normal = move || -> f64 { rng.sample(StandardNormal) };

    let prototypes: Vec<Vec<f64>> = (0..config.class_count)
        .map(|_| (0..d).map(|_| config.prototype_scale * normal()).collect())
        .collect();

    let width = format!("{}", config.n_subjects.saturating_sub(1)).len().max(3);
    let per_subject: usize = config.scans_per_class.iter().sum();
    let mut samples = Vec::with_capacity(config.n_subjects * per_subject);

    for s in 0..config.n_subjects {
        let subject_id = format!("s{s:0width$}");
        let gain = (1.0 + 0.1 * normal()).clamp(0.5, 1.5);
        let distortion: Vec<f64> = (0..d).map(|_| config.subject_distortion_scale * normal()).collect();

        let mut labels = Vec::with_capacity(per_subject);
        let mut block = Vec::with_capacity(per_subject * d);
        for (class, &count) in config.scans_per_class.iter().enumerate() {
            for _ in 0..count {
                labels.push(class);
                for i in 0..d {
                    let noise = config.noise_scale * normal();
                    block.push(gain * prototypes[class][i] + distortion[i] + noise);
                }
            }
        }
        let mut block = Matrix::from_vec(per_subject, d, block)?;
        if standardize {
            block = zscore(&block)?;
        }
        for (r, label) in labels.into_iter().enumerate() {
            samples.push(Sample { subject_id: subject_id.clone(), features: block.row(r).to_vec(), label });
        }
    }
    Dataset::new(d, Dataset::default_class_names(config.class_count), samples)
}

/// Samples grouped by subject id, in first-appearance order within each group.
pub fn samples_by_subject(dataset: &Dataset) -> BTreeMap<&str, Vec<&Sample>> {
    let mut map: BTreeMap<&str, Vec<&Sample>> = BTreeMap::new();
    for s in dataset.samples() {
        map.entry(s.subject_id.as_str()).or_default().push(s);
    }
    map
}
