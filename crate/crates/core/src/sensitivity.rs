//! Sensitivity of a trained classifier's log-posteriors to its inputs.
//!
//! For class `k`, let `f(x) = log P(Y = k | x)` under the test-time network
//! and `g(x) = ∇f(x)`. Over a reference dataset:
//!
//! - the sensitivity map is `s_i = mean_n g_i(x_n)²`,
//! - the sensitivity kernel is `K = mean_n g(x_n) g(x_n)ᵀ`, whose diagonal is
//!   the sensitivity map,
//! - the sensitivity along a unit direction `v` is `s(v) = mean_n (v·g(x_n))²
//!   = vᵀ K v`, maximized by the leading eigenvector of `K`. The `j`-th
//!   eigenvector is the `j`-th principal sensitivity map (PSM).

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{dim_err, invalid};
use crate::linalg::{self, outer_accumulate, Matrix, DEFAULT_EIGEN_TOL};
use crate::network::{backpropagate, forward, Mode, NetworkParams};
use crate::Result;

/// Largest deviation from unit norm accepted for a direction.
pub const UNIT_NORM_TOL: f64 = 1e-9;

fn check_class(params: &NetworkParams, k: usize) -> Result<()> {
    if k >= params.class_count() {
        return Err(invalid!("class {k} out of range for {} classes", params.class_count()));
    }
    Ok(())
}

/// `log P(Y = k | x)` of the test-time network.
pub fn log_posterior(params: &NetworkParams, x: &[f64], k: usize) -> Result<f64> {
    check_class(params, k)?;
    Ok(forward(params, x, Mode::Test)?.log_probs[k])
}

/// `∇ₓ log P(Y = k | x)` through the test-time network.
pub fn input_gradient(params: &NetworkParams, x: &[f64], k: usize) -> Result<Vec<f64>> {
    check_class(params, k)?;
    let trace = forward(params, x, Mode::Test)?;
    let mut delta: Vec<f64> = trace.log_probs.iter().map(|&lp| -libm::exp(lp)).collect();
    delta[k] += 1.0;
    Ok(backpropagate(params, &trace, &Mode::Test, delta, None))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityKernel {
    pub class_index: usize,
    pub class_name: String,
    pub matrix: Matrix,
    pub sample_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityMap {
    pub class_index: usize,
    pub class_name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsaResult {
    pub class_index: usize,
    pub class_name: String,
    /// Eigenvalues `s(v)` of the kernel, non-increasing.
    pub eigenvalues: Vec<f64>,
    /// Unit-norm PSMs, aligned with `eigenvalues`.
    pub psms: Vec<Vec<f64>>,
}

fn check_reference(params: &NetworkParams, dataset: &Dataset) -> Result<()> {
    if dataset.is_empty() {
        return Err(invalid!("reference dataset is empty"));
    }
    if dataset.d() != params.input_dim() {
        return Err(dim_err!(
            "reference dataset has {} features, network expects {}",
            dataset.d(),
            params.input_dim()
        ));
    }
    Ok(())
}

fn class_name(dataset: &Dataset, k: usize) -> String {
    dataset.class_names().get(k).cloned().unwrap_or_else(|| alloc::format!("class{k}"))
}

/// `mean_n g_n g_nᵀ`, accumulated in dataset order.
pub fn sensitivity_kernel(params: &NetworkParams, dataset: &Dataset, k: usize) -> Result<SensitivityKernel> {
    check_class(params, k)?;
    check_reference(params, dataset)?;
    let n = dataset.len();
    let weight = 1.0 / n as f64;
    let mut matrix = Matrix::zeros(dataset.d(), dataset.d());
    for s in dataset.samples() {
        let g = input_gradient(params, &s.features, k)?;
        outer_accumulate(&mut matrix, &g, weight)?;
    }
    Ok(SensitivityKernel { class_index: k, class_name: class_name(dataset, k), matrix, sample_count: n })
}

/// The kernel's diagonal.
pub fn sensitivity_map(kernel: &SensitivityKernel) -> SensitivityMap {
    SensitivityMap {
        class_index: kernel.class_index,
        class_name: kernel.class_name.clone(),
        values: kernel.matrix.diagonal(),
    }
}

/// The `m` leading eigenpairs of the kernel.
pub fn psa(kernel: &SensitivityKernel, m: usize) -> Result<PsaResult> {
    let d = kernel.matrix.rows();
    if m > d {
        return Err(invalid!("asked for {m} PSMs of a {d}-dimensional kernel"));
    }
    let pairs = linalg::sym_eigen(&kernel.matrix, DEFAULT_EIGEN_TOL)?;
    Ok(PsaResult {
        class_index: kernel.class_index,
        class_name: kernel.class_name.clone(),
        eigenvalues: pairs.values[..m].to_vec(),
        psms: (0..m).map(|j| pairs.vector(j)).collect(),
    })
}

/// `mean_n (v · g_n)²` for a unit vector `v`.
pub fn directional_sensitivity(
    params: &NetworkParams,
    dataset: &Dataset,
    k: usize,
    v: &[f64],
) -> Result<f64> {
    check_class(params, k)?;
    check_reference(params, dataset)?;
    if v.len() != dataset.d() {
        return Err(dim_err!("direction has length {}, expected {}", v.len(), dataset.d()));
    }
    let norm = linalg::norm(v);
    if (norm - 1.0).abs() > UNIT_NORM_TOL {
        return Err(invalid!("direction must have unit norm, got {norm}"));
    }
    let mut total = 0.0;
    for s in dataset.samples() {
        let g = input_gradient(params, &s.features, k)?;
        let dv = linalg::dot(v, &g);
        total += dv * dv;
    }
    Ok(total / dataset.len() as f64)
}

/// `vᵀ K v`.
pub fn quadratic_form(kernel: &SensitivityKernel, v: &[f64]) -> Result<f64> {
    let kv = linalg::matvec(&kernel.matrix, v)?;
    Ok(linalg::dot(v, &kv))
}

/// Kernel, map and PSA for every class.
pub fn analyze_all_classes(
    params: &NetworkParams,
    dataset: &Dataset,
    m: usize,
) -> Result<Vec<(SensitivityMap, PsaResult)>> {
    let mut out = Vec::with_capacity(params.class_count());
    for k in 0..params.class_count() {
        let kernel = sensitivity_kernel(params, dataset, k)?;
        out.push((sensitivity_map(&kernel), psa(&kernel, m)?));
    }
    Ok(out)
}

/// A kernel built directly from a matrix, for analyses that start from one.
pub fn kernel_from_matrix(class_index: usize, matrix: Matrix) -> Result<SensitivityKernel> {
    if !matrix.is_square() {
        return Err(dim_err!("kernel must be square"));
    }
    Ok(SensitivityKernel {
        class_index,
        class_name: alloc::format!("class{class_index}"),
        matrix,
        sample_count: 0,
    })
}
