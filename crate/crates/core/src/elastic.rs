//! Elastic common container.
//!
//! Each group is trained with a dropout probability and weight decay that
//! shrink as the group's gradient-difference length approaches the maximum
//! observed length:
//!
//! ```text
//! p_c = p_0 (1 - e^{l(d_c) - d_max})
//! λ_c = λ_0 (1 - e^{l(d_c) - d_max})
//! ```
//!
//! which is the release law `P_0 (1 - e^{-τ})` with `τ = d_max - l(d_c)`.
//! Dropout acts on parameters: every step draws an activeness mask `A` and the
//! network sees `θ ⊙ A / (1 - p)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::{
    run_epoch, AdamConfig, ArchConfig, GraphSpec, ModelParams, OptimizerState, StepMask,
};
use crate::datagen::DomainGroup;
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// `P_0 (1 - e^{-τ})`.
pub fn release_probability(p0: f64, tau: f64) -> Result<f64> {
    if !(p0 > 0.0 && p0 <= 1.0) {
        return Err(Error::InvalidArgument(format!("P_0 = {p0} outside (0, 1]")));
    }
    if !(tau >= 0.0) {
        return Err(Error::InvalidArgument(format!("tau = {tau} must be >= 0")));
    }
    Ok(p0 * (1.0 - (-tau).exp()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElasticSchedule {
    pub group_id: usize,
    pub length: f64,
    pub d_max: f64,
    pub p: f64,
    pub lambda: f64,
    /// Set when `length > d_max` and the exponent was clamped to zero.
    #[serde(default)]
    pub clamped: bool,
}

impl ElasticSchedule {
    /// A fixed `(p, λ)` pair independent of difficulty.
    pub fn fixed(group_id: usize, p: f64, lambda: f64) -> Self {
        Self {
            group_id,
            length: f64::NAN,
            d_max: f64::NAN,
            p,
            lambda,
            clamped: false,
        }
    }
}

fn check_bases(p0: f64, lambda0: f64) -> Result<()> {
    if !(p0 > 0.0 && p0 <= 1.0) {
        return Err(Error::InvalidArgument(format!("p_0 = {p0} outside (0, 1]")));
    }
    if !(lambda0 > 0.0 && lambda0 < 1.0) {
        return Err(Error::InvalidArgument(format!("lambda_0 = {lambda0} outside (0, 1)")));
    }
    Ok(())
}

pub fn schedule(
    group_id: usize,
    length: f64,
    d_max: f64,
    p0: f64,
    lambda0: f64,
) -> Result<ElasticSchedule> {
    check_bases(p0, lambda0)?;
    if !(length >= 0.0) {
        return Err(Error::InvalidArgument(format!("length = {length} must be >= 0")));
    }
    if length > d_max {
        return Err(Error::InvalidArgument(format!(
            "length {length} exceeds d_max {d_max}; schedule undefined"
        )));
    }
    let tau = d_max - length;
    Ok(ElasticSchedule {
        group_id,
        length,
        d_max,
        p: release_probability(p0, tau)?,
        lambda: release_probability(lambda0, tau)?,
        clamped: false,
    })
}

/// Like [`schedule`] but a length beyond `d_max` yields `p = λ = 0` with the
/// `clamped` flag set instead of an error.
pub fn schedule_clamped(
    group_id: usize,
    length: f64,
    d_max: f64,
    p0: f64,
    lambda0: f64,
) -> Result<ElasticSchedule> {
    if length > d_max {
        check_bases(p0, lambda0)?;
        log::warn!("group {group_id}: length {length} > d_max {d_max}, clamping schedule to (0, 0)");
        return Ok(ElasticSchedule {
            group_id,
            length,
            d_max,
            p: 0.0,
            lambda: 0.0,
            clamped: true,
        });
    }
    schedule(group_id, length, d_max, p0, lambda0)
}

/// Parameter-level dropout mask with its inverted-dropout scale. Exempt
/// entries are always kept and never rescaled.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivenessMatrix {
    keep: Vec<bool>,
    scale: f64,
    exempt: Vec<bool>,
}

impl ActivenessMatrix {
    /// A plain {0,1} mask applied as `θ ⊙ A` with no rescaling.
    pub fn from_mask(keep: Vec<bool>) -> Self {
        Self::with_scale(keep, 1.0)
    }

    pub fn with_scale(keep: Vec<bool>, scale: f64) -> Self {
        Self {
            keep,
            scale,
            exempt: Vec::new(),
        }
    }

    pub fn is_exempt(&self, i: usize) -> bool {
        self.exempt.get(i).copied().unwrap_or(false)
    }

    pub fn keep(&self) -> &[bool] {
        &self.keep
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn len(&self) -> usize {
        self.keep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keep.is_empty()
    }

    pub fn keep_fraction(&self) -> f64 {
        if self.keep.is_empty() {
            return 0.0;
        }
        self.keep.iter().filter(|&&k| k).count() as f64 / self.keep.len() as f64
    }

    /// Per-parameter multipliers: `scale` where kept, 0 where dropped, 1 where
    /// exempt.
    pub fn factors(&self) -> impl Iterator<Item = f64> + '_ {
        self.keep.iter().enumerate().map(move |(i, &k)| {
            if self.is_exempt(i) {
                1.0
            } else if k {
                self.scale
            } else {
                0.0
            }
        })
    }
}

/// Each entry dropped independently with probability `p`; survivors are scaled
/// by `1/(1-p)`.
pub fn sample_activeness<R: Rng + ?Sized>(param_count: usize, p: f64, rng: &mut R) -> ActivenessMatrix {
    let p = p.clamp(0.0, 1.0);
    if p == 0.0 {
        return ActivenessMatrix::with_scale(vec![true; param_count], 1.0);
    }
    if p >= 1.0 {
        return ActivenessMatrix::with_scale(vec![false; param_count], 1.0);
    }
    let keep = (0..param_count).map(|_| rng.random::<f64>() >= p).collect();
    ActivenessMatrix::with_scale(keep, 1.0 / (1.0 - p))
}

/// Dropout over the entries of the weight matrices; bias vectors stay active.
pub fn sample_weight_activeness<R: Rng + ?Sized>(arch: &ArchConfig, p: f64, rng: &mut R) -> ActivenessMatrix {
    let exempt: Vec<bool> = arch.weight_entries().into_iter().map(|w| !w).collect();
    let weights = exempt.iter().filter(|&&e| !e).count();
    let sampled = sample_activeness(weights, p, rng);
    let mut drawn = sampled.keep.into_iter();
    let keep = exempt
        .iter()
        .map(|&e| e || drawn.next().expect("one draw per weight"))
        .collect();
    ActivenessMatrix {
        keep,
        scale: sampled.scale,
        exempt,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContainerConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs_per_group: usize,
}

impl Default for ContainerConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: 32,
            epochs_per_group: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorbedEntry {
    pub group_id: usize,
    pub schedule: ElasticSchedule,
    pub cycle: usize,
}

/// Shared parameters, optimizer state and the append-only absorption record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommonContainerState {
    pub params: ModelParams,
    pub optimizer: OptimizerState,
    pub absorbed: Vec<AbsorbedEntry>,
    pub rng_seed: u64,
    pub config: ContainerConfig,
    passes: u64,
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    container: CommonContainerState,
}

impl CommonContainerState {
    pub fn new(arch: ArchConfig, config: ContainerConfig, seed: u64) -> Self {
        let params = ModelParams::init(arch, seed);
        Self::from_params(params, config, seed)
    }

    pub fn from_params(params: ModelParams, config: ContainerConfig, seed: u64) -> Self {
        Self {
            optimizer: OptimizerState::new(params.len(), config.adam),
            params,
            absorbed: Vec::new(),
            rng_seed: seed,
            config,
            passes: 0,
        }
    }

    pub fn absorbed_ids(&self) -> Vec<usize> {
        self.absorbed.iter().map(|e| e.group_id).collect()
    }

    pub fn to_checkpoint_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Checkpoint {
            format: "synevo.container".into(),
            version: CHECKPOINT_VERSION,
            container: self.clone(),
        })?)
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(text)?;
        if c.format != "synevo.container" || c.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint {} v{}",
                c.format, c.version
            )));
        }
        Ok(c.container)
    }
}

/// Train the container on one group for `epochs` with the group's schedule,
/// then append the group to the absorbed list. Returns per-epoch mean losses.
///
/// On divergence the container keeps the parameters of the last finite epoch.
pub fn train_on_group(
    container: &mut CommonContainerState,
    group: &DomainGroup,
    schedule: &ElasticSchedule,
    epochs: usize,
    cycle: usize,
) -> Result<Vec<f64>> {
    let data = group.train_batch()?;
    let graph: &GraphSpec = &group.graph;
    let seed = derive_seed(container.rng_seed, container.passes);
    container.passes += 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    container.optimizer.set_weight_decay(schedule.lambda);
    let arch = *container.params.arch();
    let p = schedule.p;

    let mut trace = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let snapshot = (container.params.clone(), container.optimizer.clone());
        let loss = run_epoch(
            &mut container.params,
            &mut container.optimizer,
            &data,
            graph,
            container.config.batch_size,
            &mut rng,
            |rng| {
                if p <= 0.0 {
                    StepMask::Dense
                } else if p >= 1.0 {
                    StepMask::Skip
                } else {
                    StepMask::Masked(sample_weight_activeness(&arch, p, rng))
                }
            },
        )
        .map_err(|e| e.in_group(group.id))?;
        if !loss.is_finite() || !container.params.is_finite() {
            container.params = snapshot.0;
            container.optimizer = snapshot.1;
            return Err(Error::Diverged { epoch, trace }.in_group(group.id));
        }
        trace.push(loss);
    }
    container.absorbed.push(AbsorbedEntry {
        group_id: group.id,
        schedule: *schedule,
        cycle,
    });
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn release_examples() {
        assert_eq!(release_probability(0.7, 0.0).unwrap(), 0.0);
        assert!((release_probability(0.7, 1e3).unwrap() - 0.7).abs() < 1e-15);
        assert!((release_probability(1.0, 4f64.ln()).unwrap() - 0.75).abs() < 1e-15);
        assert!(release_probability(0.0, 1.0).is_err());
        assert!(release_probability(1.5, 1.0).is_err());
        assert!(release_probability(0.5, -1.0).is_err());
    }

    #[test]
    fn schedule_examples() {
        let s = schedule(0, 3.0, 3.0, 0.5, 0.05).unwrap();
        assert_eq!((s.p, s.lambda), (0.0, 0.0));

        let s = schedule(0, 1.0, 1.0 + 2f64.ln(), 0.5, 0.05).unwrap();
        assert!((s.p - 0.25).abs() < 1e-15);

        let s = schedule(0, 0.0, 10.0, 0.5, 0.05).unwrap();
        // 0.5 * (1 - e^-10) = 0.49997730...
        assert!((s.p - 0.499_977_300_2).abs() < 1e-9);

        assert!(schedule(0, 2.0, 1.0, 0.5, 0.05).is_err());
        assert!(schedule(0, 0.5, 1.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn clamped_beyond_d_max() {
        let s = schedule_clamped(4, 2.0, 1.0, 0.5, 0.05).unwrap();
        assert!(s.clamped);
        assert_eq!((s.p, s.lambda), (0.0, 0.0));
    }

    #[test]
    fn activeness_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_activeness(50, 0.0, &mut rng).keep().iter().all(|&k| k));
        assert!(sample_activeness(50, 1.0, &mut rng).keep().iter().all(|&k| !k));
    }

    #[test]
    fn activeness_zero_fraction_concentrates() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = sample_activeness(10_000, 0.3, &mut rng);
        let zero = 1.0 - a.keep_fraction();
        let bound = 3.0 * (0.3f64 * 0.7 / 10_000.0).sqrt();
        assert!((zero - 0.3).abs() <= bound, "{zero}");
        assert!((a.scale() - 1.0 / 0.7).abs() < 1e-15);
    }
}
