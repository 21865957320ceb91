//! Comparing and summarizing PSMs: absolute cosine similarity, agglomerative
//! clustering of the similarity matrix and one-s.d. thresholded maps.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, invalid};
use crate::linalg::{self, Matrix};
use crate::sensitivity::{PsaResult, UNIT_NORM_TOL};
use crate::Result;

fn check_unit(v: &[f64]) -> Result<()> {
    let n = linalg::norm(v);
    if (n - 1.0).abs() > UNIT_NORM_TOL {
        return Err(invalid!("expected a unit vector, norm is {n}"));
    }
    Ok(())
}

/// `|⟨v1, v2⟩|` of two unit vectors, clamped to `[0, 1]`.
pub fn abs_cosine(v1: &[f64], v2: &[f64]) -> Result<f64> {
    if v1.len() != v2.len() {
        return Err(dim_err!("vectors have lengths {} and {}", v1.len(), v2.len()));
    }
    check_unit(v1)?;
    check_unit(v2)?;
    Ok(linalg::dot(v1, v2).abs().min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsmEntry {
    pub class_index: usize,
    pub class_name: String,
    /// 1 for the first PSM.
    pub rank: usize,
    pub vector: Vec<f64>,
}

impl PsmEntry {
    /// `<class>_psm<rank>`.
    pub fn label(&self) -> String {
        format!("{}_psm{}", self.class_name, self.rank)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsmCollection {
    entries: Vec<PsmEntry>,
}

impl PsmCollection {
    pub fn new(entries: Vec<PsmEntry>) -> Result<Self> {
        if let Some(first) = entries.first() {
            let d = first.vector.len();
            for e in &entries {
                if e.vector.len() != d {
                    return Err(dim_err!("{} has length {}, expected {d}", e.label(), e.vector.len()));
                }
                check_unit(&e.vector)?;
            }
        }
        Ok(PsmCollection { entries })
    }

    /// Every PSM of every class, class-major then by rank.
    pub fn from_psa_results(results: &[PsaResult]) -> Result<Self> {
        let entries = results
            .iter()
            .flat_map(|r| {
                r.psms.iter().enumerate().map(|(j, v)| PsmEntry {
                    class_index: r.class_index,
                    class_name: r.class_name.clone(),
                    rank: j + 1,
                    vector: v.clone(),
                })
            })
            .collect();
        PsmCollection::new(entries)
    }

    pub fn entries(&self) -> &[PsmEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub labels: Vec<String>,
    pub values: Matrix,
}

/// Pairwise absolute cosine similarities; the diagonal is exactly 1.
pub fn similarity_matrix(collection: &PsmCollection) -> Result<SimilarityMatrix> {
    if collection.is_empty() {
        return Err(invalid!("cannot compare an empty PSM collection"));
    }
    let e = collection.entries();
    let n = e.len();
    let mut values = Matrix::identity(n);
    for i in 0..n {
        for j in i + 1..n {
            let s = abs_cosine(&e[i].vector, &e[j].vector)?;
            values.set(i, j, s);
            values.set(j, i, s);
        }
    }
    Ok(SimilarityMatrix { labels: e.iter().map(PsmEntry::label).collect(), values })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Single,
    Complete,
    #[default]
    Average,
}

/// One agglomeration step. Leaves are clusters `0..n`; the cluster formed at
/// step `t` is `n + t`. `a` holds the lower leaf index of the two.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub merges: Vec<Merge>,
    pub leaf_order: Vec<usize>,
}

/// Clusters on the distance `1 − similarity`.
pub fn cluster(matrix: &SimilarityMatrix, linkage: Linkage) -> Result<Dendrogram> {
    let n = matrix.values.rows();
    let mut dist = Matrix::zeros(n, matrix.values.cols());
    for i in 0..n {
        for j in 0..matrix.values.cols() {
            dist.set(i, j, if i == j { 0.0 } else { 1.0 - matrix.values.get(i, j) });
        }
    }
    cluster_distances(&dist, linkage)
}

struct Active {
    id: usize,
    min_leaf: usize,
    size: usize,
}

/// Agglomerative clustering of a symmetric distance matrix.
///
/// Among equally close pairs the one with the smallest (lower leaf, lower
/// leaf) pair of indices merges first. The leaf order walks the tree left to
/// right with the child holding the lower leaf index on the left.
pub fn cluster_distances(dist: &Matrix, linkage: Linkage) -> Result<Dendrogram> {
    let n = dist.rows();
    if !dist.is_square() {
        return Err(dim_err!("distance matrix is {}x{}", dist.rows(), dist.cols()));
    }
    if n == 0 {
        return Err(invalid!("nothing to cluster"));
    }
    if !dist.is_finite() || dist.as_slice().iter().any(|&x| x < 0.0) {
        return Err(invalid!("distances must be finite and non-negative"));
    }
    if dist.asymmetry() > linalg::SYMMETRY_TOL {
        return Err(invalid!("distance matrix is not symmetric"));
    }

    // distances between every cluster ever formed, indexed by cluster id
    let total = 2 * n - 1;
    let mut d = vec![vec![0.0; total]; total];
    for (i, row) in d.iter_mut().take(n).enumerate() {
        row[..n].copy_from_slice(dist.row(i));
    }
    let mut active: Vec<Active> = (0..n).map(|i| Active { id: i, min_leaf: i, size: 1 }).collect();
    let mut children: Vec<(usize, usize)> = Vec::with_capacity(n - 1);
    let mut merges = Vec::with_capacity(n - 1);

    while active.len() > 1 {
        // `active` stays sorted by min_leaf, so scanning i < j visits pairs in
        // lexicographic order and the first minimum wins ties
        let (mut bi, mut bj) = (0, 1);
        for i in 0..active.len() {
            for j in i + 1..active.len() {
                if d[active[i].id][active[j].id] < d[active[bi].id][active[bj].id] {
                    (bi, bj) = (i, j);
                }
            }
        }
        let (a, b) = (&active[bi], &active[bj]);
        let new_id = n + merges.len();
        let distance = d[a.id][b.id];
        let (size_a, size_b) = (a.size as f64, b.size as f64);
        for other in active.iter().filter(|c| c.id != a.id && c.id != b.id) {
            let (da, db) = (d[a.id][other.id], d[b.id][other.id]);
            let v = match linkage {
                Linkage::Single => da.min(db),
                Linkage::Complete => da.max(db),
                Linkage::Average => (size_a * da + size_b * db) / (size_a + size_b),
            };
            d[new_id][other.id] = v;
            d[other.id][new_id] = v;
        }
        let merged = Active { id: new_id, min_leaf: a.min_leaf, size: a.size + b.size };
        merges.push(Merge { a: a.id, b: b.id, distance, size: merged.size });
        children.push((a.id, b.id));
        active.remove(bj);
        active[bi] = merged;
    }

    let mut leaf_order = Vec::with_capacity(n);
    let mut stack = vec![active[0].id];
    while let Some(id) = stack.pop() {
        if id < n {
            leaf_order.push(id);
        } else {
            let (left, right) = children[id - n];
            stack.push(right);
            stack.push(left);
        }
    }
    Ok(Dendrogram { merges, leaf_order })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdedMap {
    pub mean: f64,
    pub sd: f64,
    /// +1 or −1 where `|v_i − mean| ≥ sd`, else 0. All zero when `sd` is 0.
    pub signs: Vec<i8>,
}

/// Keeps the components at least one population s.d. away from the mean.
pub fn threshold_map(psm: &[f64]) -> Result<ThresholdedMap> {
    if psm.is_empty() {
        return Err(invalid!("cannot threshold an empty map"));
    }
    let n = psm.len() as f64;
    let mean = psm.iter().sum::<f64>() / n;
    let sd = libm::sqrt(psm.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n);
    let signs = psm
        .iter()
        .map(|&x| {
            let dev = x - mean;
            if sd == 0.0 || dev.abs() < sd {
                0
            } else if dev > 0.0 {
                1
            } else {
                -1
            }
        })
        .collect();
    Ok(ThresholdedMap { mean, sd, signs })
}
