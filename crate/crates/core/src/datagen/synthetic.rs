//! Synthetic multi-domain spatiotemporal data with a tunable shared component.
//!
//! A shared latent field `S` diffuses over the graph under a daily forcing,
//!
//! ```text
//! S_{t+1} = α Â S_t + c · u + A_s sin(2π t / steps_per_day + φ) + η_t
//! ```
//!
//! and every domain mixes it with an independent private field `P_c`
//! (graph-diffused noise with its own node profile, rescaled to zero mean and
//! the standard deviation of `S`):
//!
//! ```text
//! X_c = a_c (ρ S + (1 - ρ) P_c) + b_c + σ ε
//! ```

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::graph_gen::{gen_graph, GraphModel};
use super::group::{DomainSeries, Provenance};
use crate::backbone::GraphSpec;
use crate::error::{Error, Result};
use crate::seed::derive_seed;

pub const DIFFUSION_RATE: f64 = 0.6;
const BASE_FORCING: f64 = 2.0;
const SEASONAL_AMPLITUDE: f64 = 1.5;
const INNOVATION_STD: f64 = 0.3;
const BURN_IN: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub node_count: usize,
    pub timesteps: usize,
    pub domain_count: usize,
    /// Commonality ratio in `[0, 1]`.
    pub rho: f64,
    /// Observation noise standard deviation.
    pub sigma: f64,
    pub graph_model: GraphModel,
    pub seed: u64,
    pub steps_per_day: usize,
    /// Multiplies every generated value (unit of the observed quantity).
    pub value_scale: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            node_count: 8,
            timesteps: 2000,
            domain_count: 3,
            rho: 0.9,
            sigma: 0.1,
            graph_model: GraphModel::Ring,
            seed: 0,
            steps_per_day: 96,
            value_scale: 1.0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.node_count == 0 || self.timesteps == 0 || self.domain_count == 0 {
            return Err(Error::InvalidArgument(
                "node_count, timesteps and domain_count must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::InvalidArgument(format!("rho = {} outside [0, 1]", self.rho)));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!("sigma = {} must be >= 0", self.sigma)));
        }
        if self.steps_per_day == 0 {
            return Err(Error::InvalidArgument("steps_per_day must be positive".into()));
        }
        if !(self.value_scale > 0.0) {
            return Err(Error::InvalidArgument("value_scale must be positive".into()));
        }
        Ok(())
    }

    pub fn graph(&self) -> Result<GraphSpec> {
        gen_graph(self.graph_model, self.node_count, derive_seed(self.seed, 0))
    }
}

/// Per-domain affine constants `(a_c, b_c)` drawn from `[0.5, 2] × [-1, 1]`.
pub fn affine_constants(seed: u64, domain: usize) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 200 + domain as u64));
    (rng.random_range(0.5..=2.0), rng.random_range(-1.0..=1.0))
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}

fn diffuse(
    graph: &GraphSpec,
    steps: usize,
    rng: &mut ChaCha8Rng,
    mut forcing: impl FnMut(f64, usize, &mut ChaCha8Rng) -> f64,
) -> Array2<f64> {
    let n = graph.node_count();
    let mut state = Array1::<f64>::zeros(n);
    let mut out = Array2::<f64>::zeros((steps, n));
    for t in 0..BURN_IN + steps {
        let mixed = graph.normalized.dot(&state);
        // the forcing clock reads 0 at the first recorded step
        let clock = t as f64 - BURN_IN as f64;
        for i in 0..n {
            state[i] = DIFFUSION_RATE * mixed[i] + forcing(clock, i, rng);
        }
        if t >= BURN_IN {
            out.row_mut(t - BURN_IN).assign(&state);
        }
    }
    out
}

/// The shared latent field `S` (`T × N`).
pub fn shared_latent(config: &SyntheticConfig, graph: &GraphSpec) -> Array2<f64> {
    let n = graph.node_count();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 1));
    let baseline: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let phase: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
    let omega = 2.0 * std::f64::consts::PI / config.steps_per_day as f64;
    diffuse(graph, config.timesteps, &mut rng, |t, i, rng| {
        BASE_FORCING * baseline[i]
            + SEASONAL_AMPLITUDE * (omega * t + phase[i]).sin()
            + INNOVATION_STD * normal(rng)
    })
}

fn standardize_to(mut x: Array2<f64>, target_std: f64) -> Array2<f64> {
    let mean = x.mean().unwrap_or(0.0);
    let std = x.std(0.0);
    let scale = if std > 0.0 { target_std / std } else { 0.0 };
    x.mapv_inplace(|v| (v - mean) * scale);
    x
}

/// Independent private field `P_c`: zero mean, matched to `std(S)`.
pub fn private_field(config: &SyntheticConfig, graph: &GraphSpec, domain: usize, target_std: f64) -> Array2<f64> {
    let n = graph.node_count();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 100 + domain as u64));
    let profile: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
    let raw = diffuse(graph, config.timesteps, &mut rng, |_, i, rng| {
        profile[i] + normal(rng)
    });
    standardize_to(raw, target_std)
}

/// `k` domain series sharing the latent field in proportion `rho`.
pub fn gen_domains(config: &SyntheticConfig, graph: &GraphSpec) -> Result<Vec<DomainSeries>> {
    config.validate()?;
    if graph.node_count() != config.node_count {
        return Err(Error::shape(
            "gen_domains",
            format!("graph has {} nodes, config {}", graph.node_count(), config.node_count),
        ));
    }
    let shared = shared_latent(config, graph);
    let shared_std = shared.std(0.0);
    (0..config.domain_count)
        .map(|c| {
            let (a, b) = affine_constants(config.seed, c);
            let mut values = shared.mapv(|s| config.rho * s);
            if config.rho < 1.0 {
                let private = private_field(config, graph, c, shared_std);
                values.zip_mut_with(&private, |v, p| *v += (1.0 - config.rho) * p);
            }
            let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 300 + c as u64));
            values.mapv_inplace(|v| {
                let noise = if config.sigma > 0.0 {
                    config.sigma * normal(&mut noise_rng)
                } else {
                    0.0
                };
                config.value_scale * (a * v + b + noise)
            });
            Ok(DomainSeries::new(
                c,
                format!("synthetic-{c}"),
                values,
                Provenance::Synthetic {
                    seed: config.seed,
                    rho: config.rho,
                    domain: c,
                },
            ))
        })
        .collect()
}

/// Pearson correlation of two equally long sequences.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Per-node correlation over time, averaged over nodes and domain pairs.
pub fn mean_pairwise_correlation(domains: &[DomainSeries]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..domains.len() {
        for j in i + 1..domains.len() {
            for node in 0..domains[i].node_count() {
                let x = domains[i].values.column(node).to_vec();
                let y = domains[j].values.column(node).to_vec();
                total += correlation(&x, &y);
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}
