#![allow(dead_code)]

use std::sync::Arc;

use ndarray::{Array2, Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use synevo::backbone::{loss_and_gradient, ArchConfig, GraphSpec, ModelParams, WindowBatch};
use synevo::datagen::{gen_domains, DomainGroup, SyntheticConfig};
use synevo::harness::{DatasetSpec, ExperimentConfig};
use synevo::personality::{Extractor, SamplePair};

/// Central-difference step. Both objectives are piecewise linear or
/// quadratic, so the step only has to stay clear of kinks and roundoff.
pub const FD_STEP: f64 = 1e-6;

/// Denominator floor: entries whose true gradient is below this are compared
/// in absolute terms.
pub const REL_FLOOR: f64 = 1e-4;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

pub fn synthetic(domains: usize, rho: f64, seed: u64) -> SyntheticConfig {
    SyntheticConfig {
        domain_count: domains,
        rho,
        seed,
        ..SyntheticConfig::default()
    }
}

pub fn experiment(domains: usize, rho: f64, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        dataset: DatasetSpec::Synthetic(synthetic(domains, rho, seed)),
        seed,
        ..ExperimentConfig::default()
    }
}

/// Whole-series groups (default windowing and split) for a synthetic family.
pub fn whole_groups(config: &SyntheticConfig, t_in: usize, t_out: usize) -> Vec<DomainGroup> {
    let graph = Arc::new(config.graph().unwrap());
    gen_domains(config, &graph)
        .unwrap()
        .into_iter()
        .map(|s| DomainGroup::new(s, graph.clone(), t_in, t_out, synevo::datagen::DEFAULT_RATIOS).unwrap())
        .collect()
}

pub fn random_graph(n: usize, rng: &mut ChaCha8Rng) -> GraphSpec {
    let mut a = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < 0.5 {
                let w = rng.random_range(0.1..2.0);
                a[[i, j]] = w;
                a[[j, i]] = w;
            }
        }
    }
    GraphSpec::new(a).unwrap()
}

/// A random small backbone problem: architecture, parameters, batch, graph.
pub fn random_instance(seed: u64) -> (ModelParams, WindowBatch, GraphSpec) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arch = ArchConfig {
        t_in: rng.random_range(1..=4),
        t_out: rng.random_range(1..=3),
        feature_count: rng.random_range(1..=2),
        hidden1: rng.random_range(2..=6),
        hidden2: rng.random_range(2..=6),
    };
    let n = rng.random_range(1..=4);
    let b = rng.random_range(1..=3);
    let graph = random_graph(n, &mut rng);
    let mut params = ModelParams::init(arch, rng.random());
    // nonzero biases so both sides of every ReLU are exercised
    for v in params.as_mut_slice() {
        *v += rng.random_range(-0.1..0.1);
    }
    let inputs = Array4::from_shape_fn((b, arch.t_in, n, arch.feature_count), |_| rng.random_range(-2.0..2.0));
    let targets = Array3::from_shape_fn((b, arch.t_out, n), |_| rng.random_range(-2.0..2.0));
    let mut mask = Array3::from_shape_fn((b, arch.t_out, n), |_| f64::from(rng.random::<f64>() < 0.8));
    mask[[0, 0, 0]] = 1.0;
    let batch = WindowBatch::new(inputs, targets, mask).unwrap();
    (params, batch, graph)
}

/// Max relative error between the analytic backbone gradient and central
/// differences of the loss.
pub fn backbone_gradient_error(params: &ModelParams, batch: &WindowBatch, graph: &GraphSpec) -> f64 {
    let (_, grad) = loss_and_gradient(params, batch, graph, None).unwrap();
    let mut worst = 0.0f64;
    for (i, g) in grad.iter().enumerate() {
        let mut plus = params.clone();
        plus.as_mut_slice()[i] += FD_STEP;
        let mut minus = params.clone();
        minus.as_mut_slice()[i] -= FD_STEP;
        let lp = loss_and_gradient(&plus, batch, graph, None).unwrap().0;
        let lm = loss_and_gradient(&minus, batch, graph, None).unwrap().0;
        worst = worst.max(rel_err(*g, (lp - lm) / (2.0 * FD_STEP)));
    }
    worst
}

/// A random extractor with random labeled pairs.
pub fn random_extractor_problem(seed: u64) -> (Extractor, Array2<f64>, Vec<(usize, usize, bool)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input_dim = rng.random_range(2..=8);
    let embed_dim = rng.random_range(1..=4);
    let margin = rng.random_range(0.5..3.0);
    let extractor = Extractor::new(input_dim, embed_dim, margin, rng.random()).unwrap();
    let rows = 12;
    let pool = Array2::from_shape_fn((rows, input_dim), |_| rng.random_range(-2.0..2.0));
    let pairs = (0..8)
        .map(|k| (rng.random_range(0..rows), rng.random_range(0..rows), k % 2 == 0))
        .collect();
    (extractor, pool, pairs)
}

pub fn extractor_gradient_error(extractor: &Extractor, pool: &Array2<f64>, idx: &[(usize, usize, bool)]) -> f64 {
    let pairs: Vec<SamplePair<'_>> = idx
        .iter()
        .map(|&(a, b, same)| SamplePair {
            a: pool.row(a),
            b: pool.row(b),
            same,
        })
        .collect();
    let (_, grad) = extractor.objective_and_gradient(&pairs).unwrap();
    let mut worst = 0.0f64;
    for (pos, g) in grad.indexed_iter() {
        let mut plus = extractor.clone();
        plus.weights[pos] += FD_STEP;
        let mut minus = extractor.clone();
        minus.weights[pos] -= FD_STEP;
        let lp = plus.objective_and_gradient(&pairs).unwrap().0;
        let lm = minus.objective_and_gradient(&pairs).unwrap().0;
        worst = worst.max(rel_err(*g, (lp - lm) / (2.0 * FD_STEP)));
    }
    worst
}
