//! Task-independent personality extractor.
//!
//! A linear map `E = W_g x` over flattened input windows, trained with the
//! margin contrastive objective
//!
//! ```text
//! R(E_i, E_j) = ŷ D(E_i, E_j) + (1 - ŷ) max(0, m - D(E_i, E_j))
//! ```
//!
//! so same-domain windows cluster and cross-domain windows sit at least `m`
//! apart. A group's embedding is the mean of its per-window embeddings.

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::{adam_update, AdamConfig, OptimizerState, WindowBatch};
use crate::datagen::DomainGroup;
use crate::error::{Error, Result};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    /// Mean of squared elementwise differences.
    #[default]
    Mse,
    /// Sum of squared elementwise differences.
    SumSq,
}

impl DistanceMetric {
    fn normalizer(self, len: usize) -> f64 {
        match self {
            DistanceMetric::Mse => len as f64,
            DistanceMetric::SumSq => 1.0,
        }
    }
}

pub fn distance(a: &[f64], b: &[f64]) -> Result<f64> {
    distance_with(DistanceMetric::Mse, a, b)
}

pub fn distance_with(metric: DistanceMetric, a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(
            "distance",
            format!("vectors of length {} and {}", a.len(), b.len()),
        ));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(ss / metric.normalizer(a.len()))
}

/// Contrastive term between two embeddings under the MSE distance.
pub fn contrastive_loss(e_i: &[f64], e_j: &[f64], same_domain: bool, margin: f64) -> Result<f64> {
    Ok(contrastive_term(distance(e_i, e_j)?, same_domain, margin))
}

/// Contrastive term for a precomputed distance.
pub fn contrastive_term(distance: f64, same_domain: bool, margin: f64) -> f64 {
    if same_domain {
        distance
    } else {
        (margin - distance).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extractor {
    /// `embed_dim × input_dim`
    pub weights: Array2<f64>,
    pub margin: f64,
    pub generation: u32,
    #[serde(default)]
    pub metric: DistanceMetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainEmbedding {
    pub group_id: usize,
    pub vector: Vec<f64>,
    pub sample_count: usize,
}

/// Group id → embedding, as exported for inspection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EmbeddingTable {
    pub generation: u32,
    pub entries: Vec<DomainEmbedding>,
}

impl Extractor {
    /// Glorot-uniform weights from `seed`.
    pub fn new(input_dim: usize, embed_dim: usize, margin: f64, seed: u64) -> Result<Self> {
        if embed_dim == 0 || input_dim == 0 {
            return Err(Error::InvalidArgument("extractor dimensions must be >= 1".into()));
        }
        if !(margin > 0.0) {
            return Err(Error::InvalidArgument(format!("margin {margin} must be > 0")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = (6.0 / (input_dim + embed_dim) as f64).sqrt();
        let weights = Array2::from_shape_fn((embed_dim, input_dim), |_| rng.random_range(-bound..bound));
        Ok(Self {
            weights,
            margin,
            generation: 0,
            metric: DistanceMetric::Mse,
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        distance_with(self.metric, a, b)
    }

    pub fn embed_sample(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::shape(
                "extractor",
                format!("sample has {} features, W_g expects {}", x.len(), self.input_dim()),
            ));
        }
        Ok(self.weights.dot(&x))
    }

    /// Mean-pooled embedding of the group's training windows.
    pub fn embed(&self, group: &DomainGroup) -> Result<DomainEmbedding> {
        let samples = flatten_inputs(&group.train_batch()?);
        if samples.nrows() == 0 {
            return Err(Error::Empty(format!("group {} has no samples", group.id)));
        }
        if samples.ncols() != self.input_dim() {
            return Err(Error::shape(
                "extractor",
                format!("windows flatten to {}, W_g expects {}", samples.ncols(), self.input_dim()),
            ));
        }
        let mean = samples.mean_axis(ndarray::Axis(0)).expect("nonempty");
        Ok(DomainEmbedding {
            group_id: group.id,
            vector: self.weights.dot(&mean).to_vec(),
            sample_count: samples.nrows(),
        })
    }

    /// Warm-started copy for a new domain: same weights, next generation.
    pub fn reinstantiate(&self) -> Extractor {
        Extractor {
            weights: self.weights.clone(),
            margin: self.margin,
            generation: self.generation + 1,
            metric: self.metric,
        }
    }

    /// Mean contrastive loss over `pairs` and its exact gradient w.r.t. `W_g`
    /// (row-major, same shape as `weights`).
    pub fn objective_and_gradient(&self, pairs: &[SamplePair<'_>]) -> Result<(f64, Array2<f64>)> {
        if pairs.is_empty() {
            return Err(Error::Empty("no pairs".into()));
        }
        let mut grad = Array2::<f64>::zeros(self.weights.dim());
        let norm = self.metric.normalizer(self.embed_dim());
        let mut total = 0.0;
        for pair in pairs {
            if pair.a.len() != self.input_dim() || pair.b.len() != self.input_dim() {
                return Err(Error::shape("extractor pair", "sample length differs from W_g"));
            }
            let delta = &pair.a - &pair.b;
            let proj = self.weights.dot(&delta);
            let d = proj.dot(&proj) / norm;
            total += contrastive_term(d, pair.same, self.margin);
            // dD/dW = (2 / norm) (W Δ) Δᵀ
            let coef = if pair.same {
                1.0
            } else if d < self.margin {
                -1.0
            } else {
                0.0
            };
            if coef != 0.0 {
                let scale = coef * 2.0 / norm;
                for (i, p) in proj.iter().enumerate() {
                    let mut row = grad.row_mut(i);
                    row.scaled_add(scale * p, &delta);
                }
            }
        }
        let n = pairs.len() as f64;
        grad.mapv_inplace(|g| g / n);
        Ok((total / n, grad))
    }
}

/// Two flattened windows and whether they share a domain.
#[derive(Debug, Clone)]
pub struct SamplePair<'a> {
    pub a: ArrayView1<'a, f64>,
    pub b: ArrayView1<'a, f64>,
    pub same: bool,
}

/// `windows × (t_in · nodes · features)`, each window flattened row-major.
pub fn flatten_inputs(batch: &WindowBatch) -> Array2<f64> {
    let (b, t, n, f) = batch.inputs.dim();
    batch
        .inputs
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((b, t * n * f))
        .expect("standard layout")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractorTrainConfig {
    pub pairs_per_epoch: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for ExtractorTrainConfig {
    fn default() -> Self {
        Self {
            pairs_per_epoch: 512,
            batch_size: 64,
            adam: AdamConfig {
                weight_decay: 0.0,
                ..AdamConfig::default()
            },
            seed: 0,
        }
    }
}

fn sample_pairs<'a>(
    pools: &'a [Array2<f64>],
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<SamplePair<'a>> {
    let domains = pools.len();
    (0..count)
        .map(|k| {
            let positive = domains < 2 || k % 2 == 0;
            let da = rng.random_range(0..domains);
            let db = if positive {
                da
            } else {
                let other = rng.random_range(0..domains - 1);
                if other >= da {
                    other + 1
                } else {
                    other
                }
            };
            let ia = rng.random_range(0..pools[da].nrows());
            let ib = rng.random_range(0..pools[db].nrows());
            SamplePair {
                a: pools[da].row(ia),
                b: pools[db].row(ib),
                same: positive,
            }
        })
        .collect()
}

/// Minimize the mean contrastive loss over freshly sampled window pairs,
/// labeled by domain. With a single group only positive pairs exist.
/// Returns the per-epoch mean loss.
pub fn train_extractor(
    extractor: &mut Extractor,
    groups: &[&DomainGroup],
    config: &ExtractorTrainConfig,
    epochs: usize,
) -> Result<Vec<f64>> {
    if groups.is_empty() {
        return Err(Error::Empty("no groups for extractor training".into()));
    }
    if epochs == 0 {
        return Ok(Vec::new());
    }
    let pools = groups
        .iter()
        .map(|g| Ok(flatten_inputs(&g.train_batch()?)))
        .collect::<Result<Vec<_>>>()?;
    if let Some(p) = pools.iter().find(|p| p.ncols() != extractor.input_dim()) {
        return Err(Error::shape(
            "train_extractor",
            format!("windows flatten to {}, W_g expects {}", p.ncols(), extractor.input_dim()),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, extractor.generation as u64));
    let mut state = OptimizerState::new(extractor.weights.len(), config.adam);
    let mut trace = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let pairs = sample_pairs(&pools, config.pairs_per_epoch.max(1), &mut rng);
        let mut total = 0.0;
        let mut steps = 0usize;
        for chunk in pairs.chunks(config.batch_size.max(1)) {
            let (loss, grad) = extractor.objective_and_gradient(chunk)?;
            let grad = grad.as_standard_layout().into_owned().into_raw_vec_and_offset().0;
            let w = extractor
                .weights
                .as_slice_mut()
                .expect("weights are contiguous");
            adam_update(w, &grad, &mut state, None)?;
            total += loss;
            steps += 1;
        }
        let mean = total / steps as f64;
        if !mean.is_finite() || extractor.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Diverged { epoch, trace });
        }
        trace.push(mean);
    }
    Ok(trace)
}

/// Held-out pair statistics used to judge domain separation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationStats {
    pub mean_intra: f64,
    pub mean_inter: f64,
    /// Fraction of cross-domain pairs with `D ≥ m`.
    pub inter_beyond_margin: f64,
    pub pairs: usize,
}

/// Statistics over `pairs` random pairs (half same-domain, half cross-domain)
/// drawn from each group's test split.
pub fn separation_stats(
    extractor: &Extractor,
    groups: &[&DomainGroup],
    pairs: usize,
    seed: u64,
) -> Result<SeparationStats> {
    if groups.len() < 2 {
        return Err(Error::InvalidArgument("separation needs at least two groups".into()));
    }
    let pools = groups
        .iter()
        .map(|g| Ok(flatten_inputs(&g.test_batch()?)))
        .collect::<Result<Vec<_>>>()?;
    if pools.iter().any(|p| p.nrows() == 0) {
        return Err(Error::Empty("a group has no test windows".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampled = sample_pairs(&pools, pairs.max(2), &mut rng);
    let (mut intra, mut n_intra, mut inter, mut n_inter, mut beyond) = (0.0, 0usize, 0.0, 0usize, 0usize);
    for p in &sampled {
        let ea = extractor.embed_sample(p.a)?;
        let eb = extractor.embed_sample(p.b)?;
        let d = extractor.distance(ea.as_slice().unwrap(), eb.as_slice().unwrap())?;
        if p.same {
            intra += d;
            n_intra += 1;
        } else {
            inter += d;
            n_inter += 1;
            if d >= extractor.margin {
                beyond += 1;
            }
        }
    }
    Ok(SeparationStats {
        mean_intra: intra / n_intra.max(1) as f64,
        mean_inter: inter / n_inter.max(1) as f64,
        inter_beyond_margin: beyond as f64 / n_inter.max(1) as f64,
        pairs: sampled.len(),
    })
}
