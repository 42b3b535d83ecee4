//! Easy-to-hard ordering of sample groups by converged-gradient differences.
//!
//! Every group gets a probe model (same architecture, same initialization)
//! trained to convergence; the full-split gradient at the converged point is
//! summarized as `sum_c = Σ_i ‖∇_i‖²` and `cat_c = [∇_1 ‖ … ‖ ∇_n]`. The group
//! with the smallest `sum_c` is the bench, and groups are sorted by
//! `‖cat_c − cat_bench‖₂`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backbone::{train_to_convergence, AdamConfig, ArchConfig, ConvergenceConfig, ModelParams};
use crate::datagen::DomainGroup;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub arch: ArchConfig,
    pub adam: AdamConfig,
    pub convergence: ConvergenceConfig,
    /// Shared initialization seed for every probe.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientProfile {
    pub group_id: usize,
    pub sum_sq: f64,
    pub cat: Vec<f64>,
}

impl GradientProfile {
    /// Build from per-layer gradients in layout order.
    pub fn from_layers(group_id: usize, layers: &[&[f64]]) -> Self {
        let sum_sq = layers
            .iter()
            .map(|l| l.iter().map(|g| g * g).sum::<f64>())
            .sum();
        let cat = layers.iter().flat_map(|l| l.iter().copied()).collect();
        Self {
            group_id,
            sum_sq,
            cat,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let cat: Vec<f64> = self.cat.iter().map(|v| v * factor).collect();
        Self {
            group_id: self.group_id,
            sum_sq: self.sum_sq * factor * factor,
            cat,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyScore {
    pub group_id: usize,
    #[serde(skip)]
    pub d: Vec<f64>,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderedSequence {
    pub ids: Vec<usize>,
    pub lengths: Vec<f64>,
}

/// Result of [`reorder`]: the sequence plus everything needed downstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reordering {
    pub order: OrderedSequence,
    pub bench: usize,
    pub d_max: f64,
    pub scores: Vec<DifficultyScore>,
    pub profiles: Vec<GradientProfile>,
}

impl Reordering {
    pub fn length_of(&self, group_id: usize) -> Option<f64> {
        self.scores
            .iter()
            .find(|s| s.group_id == group_id)
            .map(|s| s.length)
    }

    pub fn bench_profile(&self) -> &GradientProfile {
        self.profiles
            .iter()
            .find(|p| p.group_id == self.bench)
            .expect("bench is one of the profiles")
    }

    pub fn report(&self) -> OrderingReport {
        OrderingReport {
            bench: self.bench,
            d_max: self.d_max,
            order: self.order.ids.clone(),
            groups: self
                .profiles
                .iter()
                .map(|p| OrderingEntry {
                    group_id: p.group_id,
                    sum_sq: p.sum_sq,
                    length: self.length_of(p.group_id).unwrap_or(f64::NAN),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingEntry {
    pub group_id: usize,
    pub sum_sq: f64,
    pub length: f64,
}

/// JSON ordering artifact: per-group `sum_sq` and length, `d_max`, final order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingReport {
    pub bench: usize,
    pub d_max: f64,
    pub order: Vec<usize>,
    pub groups: Vec<OrderingEntry>,
}

/// Train a fresh probe on the group's training split and summarize the
/// gradient at the converged parameters.
pub fn profile_group(group: &DomainGroup, probe: &ProbeConfig) -> Result<GradientProfile> {
    let run = || -> Result<GradientProfile> {
        let init = ModelParams::init(probe.arch, probe.seed);
        let data = group.train_batch()?;
        let outcome = train_to_convergence(&init, &data, &group.graph, probe.adam, probe.convergence)?;
        let grad = ModelParams::from_flat(probe.arch, outcome.final_gradient)?;
        Ok(GradientProfile::from_layers(group.id, &grad.layers()))
    };
    run().map_err(|e| e.in_group(group.id))
}

/// Group with the smallest `sum_sq`; ties go to the smallest id.
pub fn select_bench(profiles: &[GradientProfile]) -> Result<usize> {
    profiles
        .iter()
        .min_by(|a, b| {
            a.sum_sq
                .total_cmp(&b.sum_sq)
                .then(a.group_id.cmp(&b.group_id))
        })
        .map(|p| p.group_id)
        .ok_or_else(|| Error::Empty("no gradient profiles".into()))
}

pub fn difficulty(profile: &GradientProfile, bench: &GradientProfile) -> Result<DifficultyScore> {
    if profile.cat.len() != bench.cat.len() {
        return Err(Error::shape(
            "difficulty",
            format!("cat lengths {} vs {}", profile.cat.len(), bench.cat.len()),
        ));
    }
    let d: Vec<f64> = profile.cat.iter().zip(&bench.cat).map(|(a, b)| a - b).collect();
    let length = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(DifficultyScore {
        group_id: profile.group_id,
        d,
        length,
    })
}

/// Order precomputed profiles ascending by distance to the bench.
pub fn reorder_profiles(profiles: Vec<GradientProfile>) -> Result<Reordering> {
    let bench = select_bench(&profiles)?;
    let bench_profile = profiles
        .iter()
        .find(|p| p.group_id == bench)
        .expect("bench selected from profiles")
        .clone();
    let mut scores = profiles
        .iter()
        .map(|p| difficulty(p, &bench_profile))
        .collect::<Result<Vec<_>>>()?;
    scores.sort_by(|a, b| {
        a.length
            .total_cmp(&b.length)
            .then((a.group_id != bench).cmp(&(b.group_id != bench)))
            .then(a.group_id.cmp(&b.group_id))
    });
    let d_max = scores.iter().map(|s| s.length).fold(0.0, f64::max);
    let order = OrderedSequence {
        ids: scores.iter().map(|s| s.group_id).collect(),
        lengths: scores.iter().map(|s| s.length).collect(),
    };
    Ok(Reordering {
        order,
        bench,
        d_max,
        scores,
        profiles,
    })
}

/// Profile every group (in parallel) and order them easy to hard.
pub fn reorder(groups: &[DomainGroup], probe: &ProbeConfig) -> Result<Reordering> {
    if groups.is_empty() {
        return Err(Error::Empty("no groups to reorder".into()));
    }
    let profiles = groups
        .par_iter()
        .map(|g| profile_group(g, probe))
        .collect::<Result<Vec<_>>>()?;
    reorder_profiles(profiles)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(id: usize, sum_sq: f64, cat: Vec<f64>) -> GradientProfile {
        GradientProfile {
            group_id: id,
            sum_sq,
            cat,
        }
    }

    #[test]
    fn layers_to_profile() {
        let p = GradientProfile::from_layers(0, &[&[1.0, 2.0], &[3.0]]);
        assert_eq!(p.sum_sq, 14.0);
        assert_eq!(p.cat, vec![1.0, 2.0, 3.0]);
        let z = GradientProfile::from_layers(0, &[&[0.0, 0.0], &[0.0]]);
        assert_eq!((z.sum_sq, z.cat), (0.0, vec![0.0; 3]));
    }

    #[test]
    fn bench_selection() {
        let ps = vec![
            profile(0, 14.0, vec![]),
            profile(1, 3.0, vec![]),
            profile(2, 9.0, vec![]),
        ];
        assert_eq!(select_bench(&ps).unwrap(), 1);
        assert_eq!(select_bench(&ps[..1]).unwrap(), 0);
        let tie = vec![profile(1, 5.0, vec![]), profile(0, 5.0, vec![])];
        assert_eq!(select_bench(&tie).unwrap(), 0);
        assert!(select_bench(&[]).is_err());
    }

    #[test]
    fn difficulty_example() {
        let c = profile(0, 0.0, vec![3.0, 4.0]);
        let b = profile(1, 0.0, vec![1.0, 1.0]);
        let s = difficulty(&c, &b).unwrap();
        assert_eq!(s.d, vec![2.0, 3.0]);
        assert_eq!(s.length, 13f64.sqrt());
        let r = difficulty(&b, &c).unwrap();
        assert_eq!(r.d, vec![-2.0, -3.0]);
        assert_eq!(r.length, s.length);
        assert_eq!(difficulty(&c, &c).unwrap().length, 0.0);
        assert!(difficulty(&c, &profile(2, 0.0, vec![1.0])).is_err());
    }

    #[test]
    fn sorted_ascending_with_d_max() {
        // lengths against bench 0: group 1 → 2.1, group 2 → 1.3
        let ps = vec![
            profile(0, 1.0, vec![0.0, 0.0]),
            profile(1, 5.0, vec![2.1, 0.0]),
            profile(2, 3.0, vec![0.0, 1.3]),
        ];
        let r = reorder_profiles(ps).unwrap();
        assert_eq!(r.order.ids, vec![0, 2, 1]);
        assert_eq!(r.d_max, 2.1);
        assert_eq!(r.order.lengths[0], 0.0);
    }

    #[test]
    fn duplicates_follow_bench() {
        let ps = vec![
            profile(3, 2.0, vec![1.0]),
            profile(1, 1.0, vec![0.5]),
            profile(2, 1.0, vec![0.5]),
        ];
        let r = reorder_profiles(ps).unwrap();
        assert_eq!(r.order.ids, vec![1, 2, 3]);
        assert_eq!(r.order.lengths[..2], [0.0, 0.0]);
    }

    #[test]
    fn single_group() {
        let r = reorder_profiles(vec![profile(7, 1.0, vec![1.0])]).unwrap();
        assert_eq!(r.order.ids, vec![7]);
        assert_eq!(r.d_max, 0.0);
    }
}
