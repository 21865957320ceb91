//! Checks against independent oracles: central finite differences, direct
//! re-accumulation of expectations and a hand-run average linkage.

use neurodecode_core::analysis::{
    abs_cosine, cluster, cluster_distances, similarity_matrix, Linkage, PsmCollection, PsmEntry,
};
use neurodecode_core::data::{Dataset, Sample};
use neurodecode_core::linalg::{dot, norm, Matrix};
use neurodecode_core::network::{
    backward, init_params, nll_loss, train, DropoutMasks, DropoutRates, NetworkParams, TrainConfig,
};
use neurodecode_core::seed;
use neurodecode_core::sensitivity::{
    directional_sensitivity, input_gradient, log_posterior, psa, quadratic_form, sensitivity_kernel,
    sensitivity_map,
};
use rand::Rng;

const H: f64 = 1e-5;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

fn random_net(dims: &[usize], seed_value: u64) -> NetworkParams {
    let mut p = init_params(dims, 1.0, seed_value).unwrap();
    let mut rng = seed::rng(seed_value.wrapping_add(99));
    for l in 0..p.n_layers() {
        for w in p.weights_mut(l).as_mut_slice() {
            *w = rng.random_range(-1.0..1.0);
        }
        for b in p.biases_mut(l) {
            *b = rng.random_range(-0.5..0.5);
        }
    }
    p.with_dropout(DropoutRates { input: 0.2, hidden: 0.5 }).unwrap()
}

fn random_batch(d: usize, classes: usize, n: usize, seed_value: u64) -> Vec<Sample> {
    let mut rng = seed::rng(seed_value);
    (0..n)
        .map(|i| Sample {
            subject_id: format!("s{i}"),
            features: (0..d).map(|_| rng.random_range(-2.0..2.0)).collect(),
            label: rng.random_range(0..classes),
        })
        .collect()
}

fn dataset(samples: Vec<Sample>, d: usize, classes: usize) -> Dataset {
    Dataset::new(d, Dataset::default_class_names(classes), samples).unwrap()
}

/// Max relative error of `backward` against central differences of
/// `nll_loss`, over every weight and bias.
fn parameter_gradient_error(params: &NetworkParams, batch: &[Sample], masks: Option<&[DropoutMasks]>) -> f64 {
    let grad = backward(params, batch, masks).unwrap();
    let mut worst = 0.0f64;
    for l in 0..params.n_layers() {
        for idx in 0..params.weights(l).as_slice().len() {
            let mut plus = params.clone();
            plus.weights_mut(l).as_mut_slice()[idx] += H;
            let mut minus = params.clone();
            minus.weights_mut(l).as_mut_slice()[idx] -= H;
            let numeric = (nll_loss(&plus, batch, masks).unwrap() - nll_loss(&minus, batch, masks).unwrap())
                / (2.0 * H);
            worst = worst.max(rel_err(grad.weights[l].as_slice()[idx], numeric));
        }
        for idx in 0..params.biases(l).len() {
            let mut plus = params.clone();
            plus.biases_mut(l)[idx] += H;
            let mut minus = params.clone();
            minus.biases_mut(l)[idx] -= H;
            let numeric = (nll_loss(&plus, batch, masks).unwrap() - nll_loss(&minus, batch, masks).unwrap())
                / (2.0 * H);
            worst = worst.max(rel_err(grad.biases[l][idx], numeric));
        }
    }
    worst
}

fn input_gradient_error(params: &NetworkParams, x: &[f64], k: usize) -> f64 {
    let g = input_gradient(params, x, k).unwrap();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let mut plus = x.to_vec();
        plus[i] += H;
        let mut minus = x.to_vec();
        minus[i] -= H;
        let numeric = (log_posterior(params, &plus, k).unwrap() - log_posterior(params, &minus, k).unwrap())
            / (2.0 * H);
        worst = worst.max(rel_err(g[i], numeric));
    }
    worst
}

#[test]
fn parameter_gradients_match_finite_differences() {
    for (dims, s) in [(vec![5, 3], 1u64), (vec![5, 4, 3], 2), (vec![6, 5, 4, 3], 3), (vec![8, 6, 6, 7], 4)] {
        let params = random_net(&dims, s);
        let batch = random_batch(dims[0], *dims.last().unwrap(), 6, s + 10);
        let test_err = parameter_gradient_error(&params, &batch, None);
        assert!(test_err <= 1e-5, "{dims:?} test mode: {test_err:e}");

        let mut rng = seed::rng(s + 20);
        let masks: Vec<DropoutMasks> =
            batch.iter().map(|_| DropoutMasks::sample(&params, &mut rng)).collect();
        let train_err = parameter_gradient_error(&params, &batch, Some(&masks));
        assert!(train_err <= 1e-5, "{dims:?} train mode: {train_err:e}");
    }
}

#[test]
fn input_gradients_match_finite_differences() {
    for (dims, s) in [(vec![5, 3], 5u64), (vec![5, 4, 3], 6), (vec![7, 6, 5, 4], 7)] {
        let params = random_net(&dims, s);
        for (n, sample) in random_batch(dims[0], *dims.last().unwrap(), 4, s).iter().enumerate() {
            for k in 0..*dims.last().unwrap() {
                let err = input_gradient_error(&params, &sample.features, k);
                assert!(err <= 1e-5, "{dims:?} sample {n} class {k}: {err:e}");
            }
        }
    }
}

fn trained_small_net() -> (NetworkParams, Dataset) {
    let d = 6;
    let classes = 3;
    let mut rng = seed::rng(41);
    let centres: Vec<Vec<f64>> =
        (0..classes).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let mut make = |subjects: std::ops::Range<usize>| {
        let mut samples = Vec::new();
        for s in subjects {
            for n in 0..12 {
                let label = n % classes;
                let features = centres[label].iter().map(|c| c + rng.random_range(-1.0..1.0)).collect();
                samples.push(Sample { subject_id: format!("s{s}"), features, label });
            }
        }
        dataset(samples, d, classes)
    };
    let train_set = make(0..8);
    let valid_set = make(8..10);
    let reference = make(10..15);
    let config = TrainConfig {
        learning_rate_grid: vec![0.01],
        batch_size: 10,
        patience_epochs: 10,
        max_epochs: 60,
        init_std: 0.1,
        seed: 2,
        ..TrainConfig::default()
    };
    let (params, _) = train(&config, &train_set, &valid_set, &[d, 5, 4, classes]).unwrap();
    let reference = dataset(reference.samples()[..50].to_vec(), d, classes);
    (params, reference)
}

#[test]
fn kernel_matches_independent_reaccumulation() {
    let (params, reference) = trained_small_net();
    let five = dataset(reference.samples()[..5].to_vec(), reference.d(), reference.class_count());
    for k in 0..3 {
        let kernel = sensitivity_kernel(&params, &five, k).unwrap();
        let grads: Vec<Vec<f64>> =
            five.samples().iter().map(|s| input_gradient(&params, &s.features, k).unwrap()).collect();
        let d = five.d();
        for i in 0..d {
            for j in 0..d {
                let direct = grads.iter().map(|g| g[i] * g[j]).sum::<f64>() / 5.0;
                assert!((kernel.matrix.get(i, j) - direct).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn psa_agrees_with_direct_expectations() {
    let (params, reference) = trained_small_net();
    assert_eq!(reference.len(), 50);
    let d = reference.d();
    for k in 0..3 {
        let kernel = sensitivity_kernel(&params, &reference, k).unwrap();
        let grads: Vec<Vec<f64>> =
            reference.samples().iter().map(|s| input_gradient(&params, &s.features, k).unwrap()).collect();
        let n = grads.len() as f64;

        let map = sensitivity_map(&kernel);
        for i in 0..d {
            let direct = grads.iter().map(|g| g[i] * g[i]).sum::<f64>() / n;
            assert!((map.values[i] - direct).abs() <= 1e-12);
            assert_eq!(map.values[i], kernel.matrix.get(i, i));
        }

        let result = psa(&kernel, d).unwrap();
        for (lambda, v) in result.eigenvalues.iter().zip(&result.psms) {
            let direct = grads.iter().map(|g| dot(v, g).powi(2)).sum::<f64>() / n;
            assert!((lambda - direct).abs() <= 1e-8, "class {k}: {lambda} vs {direct}");
            assert!((norm(v) - 1.0).abs() <= 1e-10);
        }
        let sum: f64 = result.eigenvalues.iter().sum();
        let trace = kernel.matrix.trace();
        assert!((sum - trace).abs() <= 1e-8 * trace.abs());
        assert!(*result.eigenvalues.last().unwrap() >= -1e-9 * result.eigenvalues[0]);

        let mut rebuilt = Matrix::zeros(d, d);
        for (lambda, v) in result.eigenvalues.iter().zip(&result.psms) {
            for i in 0..d {
                for j in 0..d {
                    rebuilt.set(i, j, rebuilt.get(i, j) + lambda * v[i] * v[j]);
                }
            }
        }
        assert!(rebuilt.max_abs_diff(&kernel.matrix).unwrap() <= 1e-8);
    }
}

#[test]
fn directional_sensitivity_is_the_quadratic_form() {
    let (params, reference) = trained_small_net();
    let mut rng = seed::rng(8);
    for k in 0..3 {
        let kernel = sensitivity_kernel(&params, &reference, k).unwrap();
        let top = psa(&kernel, 1).unwrap();
        let best = top.eigenvalues[0];
        for _ in 0..20 {
            let raw: Vec<f64> = (0..reference.d()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = raw.iter().map(|x| x / norm(&raw)).collect();
            let direct = directional_sensitivity(&params, &reference, k, &v).unwrap();
            let quad = quadratic_form(&kernel, &v).unwrap();
            assert!((direct - quad).abs() <= 1e-10 * (1.0 + quad.abs()));
            assert!(direct <= best + 1e-9);
        }
    }
}

#[test]
fn similarity_matches_pairwise_recomputation() {
    let mut rng = seed::rng(21);
    let mut entries = Vec::new();
    for class in 0..7 {
        for rank in 1..=3 {
            let raw: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
            let n = norm(&raw);
            entries.push(PsmEntry {
                class_index: class,
                class_name: format!("k{class}"),
                rank,
                vector: raw.iter().map(|x| x / n).collect(),
            });
        }
    }
    let collection = PsmCollection::new(entries.clone()).unwrap();
    let s = similarity_matrix(&collection).unwrap();
    assert_eq!(s.values.rows(), 21);
    for i in 0..21 {
        for j in 0..21 {
            let expected =
                if i == j { 1.0 } else { abs_cosine(&entries[i].vector, &entries[j].vector).unwrap() };
            assert_eq!(s.values.get(i, j), expected);
        }
    }
    assert_eq!(s.labels[4], "k1_psm2");
}

/// Distances chosen so every average-linkage step is decided by hand:
///
/// ```text
///        0     1     2     3     4
///   0    -   0.10  0.50  0.80  0.90
///   1          -   0.40  0.75  0.95
///   2                -   0.60  0.70
///   3                      -   0.20
/// ```
///
/// 1. {0,1} at 0.10 -> cluster 5; d(5,2) = 0.45, d(5,3) = 0.775, d(5,4) = 0.925
/// 2. {3,4} at 0.20 -> cluster 6; d(5,6) = 0.85, d(2,6) = 0.65
/// 3. {5,2} at 0.45 -> cluster 7; d(7,6) = (2 * 0.85 + 0.65) / 3 = 0.78333...
/// 4. {7,6} at 0.78333...
fn five_point_distances() -> Matrix {
    Matrix::from_rows(&[
        [0.0, 0.10, 0.50, 0.80, 0.90],
        [0.10, 0.0, 0.40, 0.75, 0.95],
        [0.50, 0.40, 0.0, 0.60, 0.70],
        [0.80, 0.75, 0.60, 0.0, 0.20],
        [0.90, 0.95, 0.70, 0.20, 0.0],
    ])
    .unwrap()
}

#[test]
fn average_linkage_matches_hand_computation() {
    let expected = [(0, 1, 0.10, 2), (3, 4, 0.20, 2), (5, 2, 0.45, 3), (7, 6, 2.35 / 3.0, 5)];
    let dg = cluster_distances(&five_point_distances(), Linkage::Average).unwrap();
    assert_eq!(dg.merges.len(), 4);
    for (m, (a, b, dist, size)) in dg.merges.iter().zip(expected) {
        assert_eq!((m.a, m.b, m.size), (a, b, size));
        assert!((m.distance - dist).abs() <= 1e-12, "{} vs {dist}", m.distance);
    }
    assert_eq!(dg.leaf_order, vec![0, 1, 2, 3, 4]);

    // the same instance as a similarity matrix
    let dist = five_point_distances();
    let mut sim = Matrix::identity(5);
    for i in 0..5 {
        for j in 0..5 {
            if i != j {
                sim.set(i, j, 1.0 - dist.get(i, j));
            }
        }
    }
    let labels = (0..5).map(|i| format!("p{i}")).collect();
    let via_sim =
        cluster(&neurodecode_core::analysis::SimilarityMatrix { labels, values: sim }, Linkage::Average)
            .unwrap();
    for (m, (a, b, dist, _)) in via_sim.merges.iter().zip(expected) {
        assert_eq!((m.a, m.b), (a, b));
        assert!((m.distance - dist).abs() <= 1e-12);
    }

    // single linkage takes a different path at step 3
    let single = cluster_distances(&five_point_distances(), Linkage::Single).unwrap();
    assert!((single.merges[2].distance - 0.40).abs() <= 1e-12);
    assert!((single.merges[3].distance - 0.60).abs() <= 1e-12);
}
